//! Log-sum-exp and friends.
//!
//! `-inf` entries are dropped (they carry zero mass). A `+inf` entry makes the
//! whole sum `+inf`. An empty or all `-inf` input yields `-inf`.

/// `log(sum(exp(x)))` over an iterator, two passes over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = xs
        .iter()
        .filter(|x| **x > f64::NEG_INFINITY)
        .map(|x| (x - max).exp())
        .sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator (single pass, running maximum).
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY || self.max == f64::INFINITY {
            return;
        }
        if x == f64::INFINITY {
            self.max = f64::INFINITY;
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY || self.max == f64::INFINITY {
            self.max
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl FromIterator<f64> for LogSumExp {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = LogSumExp::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Normalized probabilities `exp(x_i - LSE(x))`, written into `out`.
pub fn softmax_into(xs: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(xs);
    for (o, x) in out.iter_mut().zip(xs) {
        *o = if *x == f64::NEG_INFINITY {
            0.0
        } else {
            (x - lse).exp()
        };
    }
}
