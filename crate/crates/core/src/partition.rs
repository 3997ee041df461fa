//! Exact partition functions by the renewal recursion over the zero set.
//!
//! For each starting residue `k` the constrained table obeys
//! `Z_k(n) = Σ_{y<n} Z_k(y) M_{[k+y],[k+n]}(n − y)` with `Z_k(0) = 1`; the free
//! table sums over the last zero `t` with the weight of an unfinished final
//! excursion of length `n − t`. Everything is carried in the log domain.

use rayon::prelude::*;

use crate::error::{invalid_input, Result};
use crate::kernel::KernelBundle;
use crate::scalar::Scalar;
use crate::Endpoint;

#[derive(Clone, Debug)]
pub struct PartitionTable<S = f64> {
    period: usize,
    horizon: usize,
    log_zc: Vec<Vec<S>>,
    log_zf: Vec<Vec<S>>,
}

/// `log Σ_i exp(a_i + b_i)` over paired slices.
#[inline]
fn log_dot<S: Scalar>(a: impl Iterator<Item = S> + Clone, b: impl Iterator<Item = S> + Clone) -> S {
    let max = a.clone().zip(b.clone()).map(|(x, y)| x + y).fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = a.zip(b).map(|(x, y)| (x + y - max).exp()).sum();
    max + sum.ln()
}

fn constrained_row<S: Scalar>(bundle: &KernelBundle<S>, k: usize, n_max: usize) -> Vec<S> {
    let t = bundle.period();
    let mut z = Vec::with_capacity(n_max + 1);
    z.push(S::zero());
    // The residue of the last zero cycles with y, so split the sum by it.
    let rows: Vec<&[S]> = (0..t).map(|a| bundle.log_m_row(a)).collect();
    for n in 1..=n_max {
        let mut max = S::neg_infinity();
        for y in 0..n {
            let v = z[y] + rows[(k + y) % t][n - y];
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        for y in 0..n {
            sum = sum + (z[y] + rows[(k + y) % t][n - y] - max).exp();
        }
        z.push(max + sum.ln());
    }
    z
}

fn free_row<S: Scalar>(bundle: &KernelBundle<S>, k: usize, zc: &[S]) -> Vec<S> {
    let t = bundle.period();
    let rows: Vec<&[S]> = (0..t).map(|a| bundle.log_free_weight_row(a)).collect();
    (0..zc.len())
        .map(|n| {
            let terms = (0..=n).map(|s| zc[s] + rows[(k + s) % t][n - s]);
            let ones = std::iter::repeat(S::zero());
            log_dot(terms, ones)
        })
        .collect()
}

pub fn build_tables<S: Scalar>(bundle: &KernelBundle<S>, horizon: usize) -> Result<PartitionTable<S>> {
    if horizon > bundle.x_max() {
        return invalid_input(format!("horizon {horizon} exceeds the kernel horizon {}", bundle.x_max()));
    }
    let t = bundle.period();
    let rows: Vec<(Vec<S>, Vec<S>)> = (0..t)
        .into_par_iter()
        .map(|k| {
            let zc = constrained_row(bundle, k, horizon);
            let zf = free_row(bundle, k, &zc);
            (zc, zf)
        })
        .collect();
    let (log_zc, log_zf) = rows.into_iter().unzip();
    Ok(PartitionTable { period: t, horizon, log_zc, log_zf })
}

impl<S: Scalar> PartitionTable<S> {
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn check(&self, n: usize) -> Result<()> {
        if n > self.horizon {
            return invalid_input(format!("length {n} beyond table horizon {}", self.horizon));
        }
        Ok(())
    }

    /// `log Z^c_{n, θ_k ω}`.
    pub fn z_constrained(&self, k: usize, n: usize) -> Result<S> {
        self.check(n)?;
        Ok(self.log_zc[k % self.period][n])
    }

    /// `log Z^f_{n, θ_k ω}`.
    pub fn z_free(&self, k: usize, n: usize) -> Result<S> {
        self.check(n)?;
        Ok(self.log_zf[k % self.period][n])
    }

    pub fn log_z(&self, endpoint: Endpoint, k: usize, n: usize) -> Result<S> {
        match endpoint {
            Endpoint::Constrained => self.z_constrained(k, n),
            Endpoint::Free => self.z_free(k, n),
        }
    }

    /// Whole row for shift `k`, lengths `0..=horizon`.
    pub fn row(&self, endpoint: Endpoint, k: usize) -> &[S] {
        match endpoint {
            Endpoint::Constrained => &self.log_zc[k % self.period],
            Endpoint::Free => &self.log_zf[k % self.period],
        }
    }
}
