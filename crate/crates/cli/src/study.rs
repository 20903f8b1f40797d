//! Grid studies: one row of constants per `(x, y)`.

use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use friable_core::forms::{forms_from_counts, joint_counts};
use friable_core::tk::{lower_bound_ratio, tk_from_forms, EIGEN_TOL};
use friable_core::{build_context, AssemblyPath, Limits, Model, SmoothBound, DEFAULT_TOL};

pub const CSV_HEADER: &str = "x,y,h,u,ubar,alpha,psi,dim,C_biased,C_unbiased,lb_ratio,err_bound,runtime_ms";

/// `lb_ratio` is empty when `2^{π(y)} > x`, where the witness does not exist.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub x: u64,
    pub y: u64,
    pub h: usize,
    pub u: f64,
    pub ubar: f64,
    pub alpha: f64,
    pub psi: u64,
    pub dim: usize,
    #[serde(rename = "C_biased")]
    pub c_biased: f64,
    #[serde(rename = "C_unbiased")]
    pub c_unbiased: f64,
    pub lb_ratio: Option<f64>,
    pub err_bound: f64,
    pub runtime_ms: u64,
}

/// `y log y/(log x)² + log y/y`.
pub fn error_bound(x: u64, y: u64) -> f64 {
    let (lx, ly) = ((x as f64).ln(), (y as f64).ln());
    y as f64 * ly / (lx * lx) + ly / y as f64
}

pub fn study_row(x: u64, y: u64, path: AssemblyPath, limits: Limits, timing: bool) -> Result<StudyRow> {
    let start = Instant::now();
    let bound = SmoothBound::new(x, y)?;
    let ctx = build_context(bound, DEFAULT_TOL)?;
    let jc = joint_counts(ctx.space(), path, limits)?;
    let biased = forms_from_counts(&ctx, Model::Biased, &jc)?;
    let unbiased = forms_from_counts(&ctx, Model::Unbiased, &jc)?;
    let c_biased = tk_from_forms(&biased, EIGEN_TOL)?.c;
    let c_unbiased = tk_from_forms(&unbiased, EIGEN_TOL)?.c;
    let lb_ratio = lower_bound_ratio(&ctx, &biased).ok().map(|(r, _)| r);
    Ok(StudyRow {
        x,
        y,
        h: ctx.h(),
        u: ctx.u(),
        ubar: ctx.ubar(),
        alpha: ctx.alpha(),
        psi: jc.psi(),
        dim: ctx.space().dim(),
        c_biased,
        c_unbiased,
        lb_ratio,
        err_bound: error_bound(x, y),
        runtime_ms: if timing { start.elapsed().as_millis() as u64 } else { 0 },
    })
}

/// Rows in grid order, computed on `threads` workers.
pub fn run_study(
    grid: &[(u64, u64)],
    threads: usize,
    path: AssemblyPath,
    limits: Limits,
    timing: bool,
) -> Result<Vec<StudyRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    pool.install(|| {
        grid.par_iter()
            .map(|&(x, y)| study_row(x, y, path, limits, timing).with_context(|| format!("grid point ({x},{y})")))
            .collect()
    })
}

pub fn to_csv(rows: &[StudyRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().context("flushing CSV")?;
    let text = String::from_utf8(bytes)?;
    if rows.is_empty() {
        return Ok(format!("{CSV_HEADER}\n"));
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_serialized_fields() {
        let row = study_row(1000, 5, AssemblyPath::Counting, Limits::default(), false).unwrap();
        let csv = to_csv(&[row]).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(to_csv(&[]).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn error_bound_shape() {
        let e = error_bound(1000, 5);
        let direct = 5.0 * 5f64.ln() / 1000f64.ln().powi(2) + 5f64.ln() / 5.0;
        assert_eq!(e, direct);
    }

    #[test]
    fn missing_witness_leaves_ratio_empty() {
        let row = study_row(30, 29, AssemblyPath::Counting, Limits::default(), false).unwrap();
        assert_eq!(row.lb_ratio, None);
        let csv = to_csv(&[row]).unwrap();
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
    }
}
