//! Small dense linear algebra and the stable summation helpers shared by the
//! recursions.

use std::ops::{Index, IndexMut};

use crate::error::{numerical, Result};
use crate::scalar::Scalar;

/// `log Σ exp(x_i)`, shifted by the maximum. Empty input gives `-inf`.
pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    if max == S::infinity() {
        return max;
    }
    let sum: S = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Compensated (Neumaier) running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum<S> {
    sum: S,
    comp: S,
}

impl<S: Scalar> NeumaierSum<S> {
    pub fn new() -> Self {
        Self { sum: S::zero(), comp: S::zero() }
    }

    pub fn add(&mut self, x: S) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> S {
        self.sum + self.comp
    }
}

/// Dense square matrix, row-major. Sized for the period `T`, which is small.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> SquareMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![S::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { S::one() } else { S::zero() })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Panics if the rows are ragged or not square.
    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix rows must be square");
        Self { n, data: rows.iter().flatten().copied().collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, c: S) -> Self {
        self.map(|x| x * c)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_fn(self.n, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::identity(self.n), |acc, _| acc.mul(self))
    }

    /// `M v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[S]) -> Vec<S> {
        (0..self.n).map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// `v M` for a row vector `v`.
    pub fn vec_mul(&self, v: &[S]) -> Vec<S> {
        (0..self.n).map(|j| (0..self.n).map(|i| v[i] * self[(i, j)]).sum()).collect()
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.n).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    pub fn norm_inf(&self) -> S {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<S>())
            .fold(S::zero(), S::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), S::max)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting, together with
    /// the infinity-norm condition number.
    pub fn inverse(&self) -> Result<(Self, S)> {
        let n = self.n;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.norm_inf().max(S::min_positive_value());
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r1, &r2| {
                    a[(r1, col)].abs().partial_cmp(&a[(r2, col)].abs()).unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty pivot range");
            if !(a[(pivot, col)].abs() > S::epsilon() * scale) {
                return numerical("matrix is singular to working precision");
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            let d = a[(col, col)];
            for j in 0..n {
                a[(col, j)] = a[(col, j)] / d;
                inv[(col, j)] = inv[(col, j)] / d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == S::zero() {
                    continue;
                }
                for j in 0..n {
                    a[(r, j)] = a[(r, j)] - f * a[(col, j)];
                    inv[(r, j)] = inv[(r, j)] - f * inv[(col, j)];
                }
            }
        }
        let cond = self.norm_inf() * inv.norm_inf();
        Ok((inv, cond))
    }

    /// Solves `M x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        let (inv, _) = self.inverse()?;
        Ok(inv.mul_vec(b))
    }
}

impl<S> Index<(usize, usize)> for SquareMatrix<S> {
    type Output = S;
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.n + j]
    }
}

impl<S> IndexMut<(usize, usize)> for SquareMatrix<S> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.n + j]
    }
}

/// `Σ_{j≥0} e^{-rate·x_j} x_j^{-power}` over the lattice `x_j = start + j·step`.
///
/// Sums directly while the exponential decay is fast enough, otherwise sums a
/// block of terms and closes with an Euler-Maclaurin remainder whose integral
/// is an incomplete gamma function.
pub fn lattice_power_tail(start: f64, step: f64, rate: f64, power: f64) -> f64 {
    assert!(start > 0.0 && step > 0.0 && rate >= 0.0);
    if rate * step > 1e-6 {
        direct_tail(start, step, rate, power)
    } else if rate == 0.0 && power <= 1.0 {
        f64::INFINITY
    } else {
        euler_maclaurin_tail(start, step, rate, power)
    }
}

fn direct_tail(start: f64, step: f64, rate: f64, power: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut x = start;
    loop {
        let t = (-rate * x).exp() * x.powf(-power);
        acc.add(t);
        if t <= acc.value() * 1e-18 || t == 0.0 {
            return acc.value();
        }
        x += step;
    }
}

fn euler_maclaurin_tail(start: f64, step: f64, rate: f64, power: f64) -> f64 {
    const DIRECT: usize = 64;
    let term = |x: f64| (-rate * x).exp() * x.powf(-power);
    let mut acc = NeumaierSum::new();
    for j in 0..DIRECT {
        acc.add(term(start + j as f64 * step));
    }
    let x1 = start + DIRECT as f64 * step;
    let g = term(x1);
    // g'/g = a, g'''/g = a'' + 3 a a' + a^3 with a = -rate - power/x.
    let a = -rate - power / x1;
    let a1 = power / (x1 * x1);
    let a2 = -2.0 * power / (x1 * x1 * x1);
    let d1 = a * g;
    let d3 = (a2 + 3.0 * a * a1 + a * a * a) * g;
    let integral = upper_integral(x1, rate, power) / step;
    acc.add(integral + 0.5 * g - step * d1 / 12.0 + step.powi(3) * d3 / 720.0);
    acc.value()
}

/// `∫_x^∞ e^{-r u} u^{-s} du` for `s ∈ {1/2, 3/2}` (or any `s > 1` when `r = 0`).
fn upper_integral(x: f64, r: f64, s: f64) -> f64 {
    if r == 0.0 {
        return x.powf(1.0 - s) / (s - 1.0);
    }
    let y = r * x;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let gamma_half = sqrt_pi * statrs::function::erf::erfc(y.sqrt());
    if (s - 0.5).abs() < 1e-12 {
        r.powf(s - 1.0) * gamma_half
    } else if (s - 1.5).abs() < 1e-12 {
        let gamma_minus_half = 2.0 * (y.powf(-0.5) * (-y).exp() - gamma_half);
        r.powf(s - 1.0) * gamma_minus_half
    } else {
        panic!("unsupported tail exponent {s}")
    }
}
