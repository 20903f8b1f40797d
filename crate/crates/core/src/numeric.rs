//! Summation helpers.

/// Compensated (Kahan–Babuška/Neumaier) sum.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

const BLOCK: usize = 128;

/// Streaming pairwise summation.
///
/// Values are summed naively in blocks of 128; block sums are combined like a
/// binary counter so that the error grows with the log of the number of terms.
#[derive(Debug, Default, Clone)]
pub struct PairwiseSum {
    buf: Vec<f64>,
    // (level, partial sum); levels strictly decrease from bottom to top
    stack: Vec<(u32, f64)>,
}

impl PairwiseSum {
    pub fn new() -> Self {
        PairwiseSum {
            buf: Vec::with_capacity(BLOCK),
            stack: Vec::new(),
        }
    }

    pub fn add(&mut self, v: f64) {
        self.buf.push(v);
        if self.buf.len() == BLOCK {
            let s = self.buf.iter().sum::<f64>();
            self.buf.clear();
            self.push_level(0, s);
        }
    }

    fn push_level(&mut self, mut level: u32, mut s: f64) {
        while let Some(&(l, top)) = self.stack.last() {
            if l != level {
                break;
            }
            self.stack.pop();
            s += top;
            level += 1;
        }
        self.stack.push((level, s));
    }

    pub fn total(&self) -> f64 {
        let mut acc = self.buf.iter().sum::<f64>();
        for &(_, s) in self.stack.iter().rev() {
            acc += s;
        }
        acc
    }
}

impl Extend<f64> for PairwiseSum {
    fn extend<T: IntoIterator<Item = f64>>(&mut self, iter: T) {
        for v in iter {
            self.add(v);
        }
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    (a - b).abs() / scale
}
