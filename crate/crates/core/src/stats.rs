//! Goodness-of-fit helpers and the classical reference laws used by the
//! Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erf;

use crate::error::{invalid_input, Result};

/// Cells whose expected count falls below this are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Number of cells after pooling.
    pub cells: usize,
}

/// Pearson test of `observed` counts against cell probabilities `probs`.
///
/// Cells with expected count below [`MIN_EXPECTED`] are merged into one pooled
/// cell; if that cell is itself too small it joins the smallest regular cell.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() || observed.is_empty() {
        return invalid_input("observed and expected cells differ in number");
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return invalid_input("no observations");
    }
    let total_p: f64 = probs.iter().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = nf * p / total_p;
        if e < MIN_EXPECTED {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        if pooled.1 >= MIN_EXPECTED || cells.is_empty() {
            cells.push(pooled);
        } else {
            let smallest = cells
                .iter_mut()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty");
            smallest.0 += pooled.0;
            smallest.1 += pooled.1;
        }
    }
    if cells.len() < 2 {
        return invalid_input("fewer than two cells after pooling");
    }
    let statistic: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic), cells: cells.len() })
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return invalid_input("no samples");
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // Step through ties as one jump of the empirical CDF.
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    Ok(d)
}

/// `P(X ≤ x)` for the arcsine law on `[0, 1]`.
pub fn arcsine_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        std::f64::consts::FRAC_2_PI * x.sqrt().asin()
    }
}

/// `1 − e^{-x²/2}`: the endpoint of a Brownian meander on `[0, 1]`.
pub fn rayleigh_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-0.5 * x * x).exp_m1()
    }
}

/// Law of `|B_1|`.
pub fn half_normal_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf(x / std::f64::consts::SQRT_2)
    }
}

/// Empirical frequency and its binomial standard error.
pub fn proportion(hits: usize, n: usize) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}
