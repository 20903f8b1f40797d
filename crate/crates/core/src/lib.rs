//! Exact desk-scale computation of the friable Turán–Kubilius constants.
pub mod additive;
pub mod error;
pub mod forms;
pub mod linalg;
pub mod model;
pub mod numeric;
pub mod saddle;
pub mod smooth;
pub mod tk;

pub use additive::AdditiveFunction;
pub use error::{Error, Result};
pub use forms::{AssemblyPath, FormPair, JointCounts};
pub use model::{Model, ModelMoments, PrimeLaw};
pub use saddle::{build_context, SaddleContext, DEFAULT_TOL};
pub use smooth::{IndexSpace, Limits, SmoothBound};
pub use tk::{rayleigh, tk_constant, TKResult};
