//! Excursion kernels: the per-excursion log-weight, the matrix kernel `M`,
//! its total mass `B` (tail-completed), the boundary weights of a final
//! unfinished excursion, and the limits `L`, `L̃` of `x^{3/2} M(x)`.

use crate::charges::{ChargeSet, Residue};
use crate::error::{invalid_input, numerical, Result};
use crate::numeric::{lattice_power_tail, SquareMatrix};
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::walk::ReturnLaw;

/// Default truncation horizon for kernel sums.
pub const DEFAULT_X_MAX: usize = 100_000;

/// `log((1 + e^u) / 2)` without overflow.
#[inline]
pub(crate) fn log_half_one_plus_exp<S: Scalar>(u: S) -> S {
    let softplus = u.max(S::zero()) + (-u.abs()).exp().ln_1p();
    softplus - S::LN_2()
}

fn check_supported(alpha: Residue, beta: Residue, l: usize) -> bool {
    alpha.modulus() == beta.modulus() && Residue::new(l, alpha.modulus()) == beta - alpha
}

/// Log-weight of an excursion of length `l` from residue `alpha` to `beta`,
/// or `None` when `l ≢ beta − alpha`.
pub fn phi<S: Scalar>(c: &ChargeSet<S>, alpha: Residue, beta: Residue, l: usize) -> Option<S> {
    if l == 0 || !check_supported(alpha, beta, l) {
        return None;
    }
    let b = beta.value();
    if l == 1 {
        return Some(c.zero_at(b) + c.zero_tilde_at(b) - c.plus_at(b));
    }
    let u = -from_usize::<S>(l) * c.drift() + c.sigma_entry(alpha.value(), b);
    Some(c.zero_at(b) + log_half_one_plus_exp(u))
}

/// Log-weight of an unfinished final excursion without interface terms:
/// zero for `l ≤ 1`, otherwise the sign-averaged solvent weight.
///
/// For `l = 1` this is not the weight a single free step actually carries
/// (that step may still dip below the axis); the recursions use
/// [`KernelBundle::log_free_weight`] instead.
pub fn phi_tilde<S: Scalar>(c: &ChargeSet<S>, alpha: Residue, beta: Residue, l: usize) -> Option<S> {
    if !check_supported(alpha, beta, l) {
        return None;
    }
    if l <= 1 {
        return Some(S::zero());
    }
    let u = -from_usize::<S>(l) * c.drift() + c.sigma_entry(alpha.value(), beta.value());
    Some(log_half_one_plus_exp(u))
}

#[derive(Clone, Copy, Debug)]
pub struct BundleOptions {
    pub x_max: usize,
    /// Fail if the reported tail error exceeds this bound.
    pub max_tail_error: Option<f64>,
    /// Absolute tolerance for `h = 0`.
    pub zero_tol: f64,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self { x_max: DEFAULT_X_MAX, max_tail_error: None, zero_tol: crate::charges::DEFAULT_ZERO_TOL }
    }
}

#[derive(Clone, Debug)]
pub struct KernelBundle<S = f64> {
    period: usize,
    x_max: usize,
    h: S,
    balanced: bool,
    c_k: S,
    p: S,
    sigma: SquareMatrix<S>,
    /// Interface reward by residue.
    pin: Vec<S>,
    k: Vec<S>,
    surv: Vec<S>,
    /// `log M_{α, α+[x]}(x)` at `α·(x_max+1) + x`; index `x = 0` unused.
    log_m: Vec<S>,
    /// Log-weight of a final unfinished excursion of length `ℓ ≥ 0`.
    log_w: Vec<S>,
    b: SquareMatrix<S>,
    l: SquareMatrix<S>,
    l_tilde: SquareMatrix<S>,
    tail_error: S,
    class_start: Vec<f64>,
    tail_norm: f64,
}

pub fn build_bundle<S: Scalar>(c: &ChargeSet<S>, r: &ReturnLaw<S>, x_max: usize) -> Result<KernelBundle<S>> {
    build_bundle_with(c, r, BundleOptions { x_max, ..BundleOptions::default() })
}

pub fn build_bundle_with<S: Scalar>(c: &ChargeSet<S>, r: &ReturnLaw<S>, opts: BundleOptions) -> Result<KernelBundle<S>> {
    if !c.is_canonical() {
        return invalid_input("kernel requires canonical charges");
    }
    let x_max = opts.x_max;
    if x_max == 0 || x_max > r.n_max() {
        return invalid_input(format!("x_max = {x_max} must lie in 1..={}", r.n_max()));
    }
    let t = c.period();
    let h = c.drift();
    let balanced = h.abs() <= lit(opts.zero_tol);
    let sigma = c.sigma().matrix;
    let pin: Vec<S> = (0..t).map(|a| c.zero_at(a)).collect();
    let k = r.k_table()[..=x_max].to_vec();
    let surv = r.survival_table()[..=x_max].to_vec();
    let stride = x_max + 1;

    let mut log_m = vec![S::neg_infinity(); t * stride];
    let mut log_w = vec![S::neg_infinity(); t * stride];
    for a in 0..t {
        log_w[a * stride] = S::zero();
        for x in 1..=x_max {
            let beta = (a + x) % t;
            let ph = phi(c, Residue::new(a, t), Residue::new(beta, t), x).expect("supported by construction");
            log_m[a * stride + x] = ph + k[x].ln();
            let u = -from_usize::<S>(x) * h + sigma[(a, beta)];
            log_w[a * stride + x] = surv[x].ln() + log_half_one_plus_exp(u);
        }
    }

    let class_start: Vec<f64> = (0..t)
        .map(|g| {
            let first = x_max + 1;
            (first + (g + t - first % t) % t) as f64
        })
        .collect();
    let tail_norm: f64 = class_start.iter().map(|&x0| lattice_power_tail(x0, t as f64, 0.0, 1.5)).sum();

    let c_k = r.c_k();
    let half = lit::<S>(0.5);
    let l = SquareMatrix::from_fn(t, |a, b| {
        let e = if balanced { half * (S::one() + sigma[(a, b)].exp()) } else { half };
        c_k * e * pin[b].exp()
    });
    let l_tilde = SquareMatrix::from_fn(t, |a, b| if balanced { c_k * (S::one() + sigma[(a, b)].exp()) } else { c_k });

    let mut bundle = KernelBundle {
        period: t,
        x_max,
        h,
        balanced,
        c_k,
        p: r.p(),
        sigma,
        pin,
        k,
        surv,
        log_m,
        log_w,
        b: SquareMatrix::zeros(t),
        l,
        l_tilde,
        tail_error: S::zero(),
        class_start,
        tail_norm,
    };
    bundle.b = bundle.tilted_matrix(S::zero());
    bundle.tail_error = bundle.estimate_tail_error();
    if let Some(bound) = opts.max_tail_error {
        if to_f64(bundle.tail_error) > bound {
            return numerical(format!(
                "tail error {:e} exceeds the requested {bound:e}; increase x_max",
                to_f64(bundle.tail_error)
            ));
        }
    }
    Ok(bundle)
}

impl<S: Scalar> KernelBundle<S> {
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn x_max(&self) -> usize {
        self.x_max
    }

    pub fn h(&self) -> S {
        self.h
    }

    /// `h = 0` within tolerance.
    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    pub fn c_k(&self) -> S {
        self.c_k
    }

    pub fn p(&self) -> S {
        self.p
    }

    pub fn sigma(&self) -> &SquareMatrix<S> {
        &self.sigma
    }

    /// Interface reward of residue `r`.
    pub fn pin(&self, r: usize) -> S {
        self.pin[r % self.period]
    }

    pub fn k(&self, x: usize) -> S {
        self.k[x]
    }

    pub fn survival(&self, x: usize) -> S {
        self.surv[x]
    }

    /// `log M_{α, α+[x]}(x)` for `1 ≤ x ≤ x_max`.
    #[inline]
    pub fn log_m(&self, alpha: usize, x: usize) -> S {
        self.log_m[alpha * (self.x_max + 1) + x]
    }

    #[inline]
    pub fn m(&self, alpha: usize, x: usize) -> S {
        self.log_m(alpha, x).exp()
    }

    pub fn log_m_row(&self, alpha: usize) -> &[S] {
        let s = self.x_max + 1;
        &self.log_m[alpha * s..(alpha + 1) * s]
    }

    /// Log-weight of a final excursion of length `ℓ` started at residue
    /// `alpha` that has not returned by the end of the chain: survival
    /// probability times the sign-averaged solvent weight. `ℓ = 0` gives 0.
    #[inline]
    pub fn log_free_weight(&self, alpha: usize, l: usize) -> S {
        self.log_w[alpha * (self.x_max + 1) + l]
    }

    pub fn log_free_weight_row(&self, alpha: usize) -> &[S] {
        let s = self.x_max + 1;
        &self.log_w[alpha * s..(alpha + 1) * s]
    }

    pub fn target(&self, alpha: usize, x: usize) -> usize {
        (alpha + x) % self.period
    }

    pub fn b(&self) -> &SquareMatrix<S> {
        &self.b
    }

    pub fn l(&self) -> &SquareMatrix<S> {
        &self.l
    }

    pub fn l_tilde(&self) -> &SquareMatrix<S> {
        &self.l_tilde
    }

    pub fn tail_error(&self) -> S {
        self.tail_error
    }

    /// Class-`γ` share of `Σ_{x > x_max} K(x) e^{-rate·x} x^{power − 3/2}`.
    ///
    /// The exact survival `P(x_max)` fixes the total undiscounted mass; the
    /// split across classes and the discounting follow the `x^{-3/2}` shape.
    fn class_tail(&self, g: usize, rate: f64, power: f64) -> f64 {
        let surv = to_f64(self.surv[self.x_max]);
        surv * lattice_power_tail(self.class_start[g], self.period as f64, rate, power) / self.tail_norm
    }

    fn tail_entry(&self, a: usize, b: usize, rate: f64, power: f64) -> S {
        let g = (b + self.period - a) % self.period;
        let h = to_f64(self.h).max(0.0);
        let straight = self.class_tail(g, rate, power);
        let sigma_part = if self.balanced {
            straight
        } else {
            self.class_tail(g, rate + h, power)
        };
        let v = 0.5 * to_f64(self.pin[b]).exp() * (straight + to_f64(self.sigma[(a, b)]).exp() * sigma_part);
        lit(v)
    }

    /// `Σ_{x > x_max} M(x) e^{-b x}` entrywise.
    pub fn tail_matrix(&self, b: S) -> SquareMatrix<S> {
        let rate = to_f64(b);
        SquareMatrix::from_fn(self.period, |a, c| self.tail_entry(a, c, rate, 1.5))
    }

    /// `Σ_x M(x) e^{-b x}` with the tail beyond `x_max` completed.
    pub fn tilted_matrix(&self, b: S) -> SquareMatrix<S> {
        let mut out = self.tail_matrix(b);
        for a in 0..self.period {
            let row = self.log_m_row(a);
            let mut acc = vec![S::zero(); self.period];
            for x in 1..=self.x_max {
                acc[(a + x) % self.period] = acc[(a + x) % self.period] + (row[x] - b * from_usize(x)).exp();
            }
            for (c, v) in acc.into_iter().enumerate() {
                out[(a, c)] = out[(a, c)] + v;
            }
        }
        out
    }

    /// `Σ_x x M(x) e^{-b x}`; infinite at `b = 0`.
    pub fn moment_matrix(&self, b: S) -> SquareMatrix<S> {
        let rate = to_f64(b);
        let mut out = SquareMatrix::from_fn(self.period, |a, c| self.tail_entry(a, c, rate, 0.5));
        for a in 0..self.period {
            let row = self.log_m_row(a);
            for x in 1..=self.x_max {
                let c = (a + x) % self.period;
                out[(a, c)] = out[(a, c)] + from_usize::<S>(x) * (row[x] - b * from_usize(x)).exp();
            }
        }
        out
    }

    /// Row-wise bound on the tail completion: distance to the cruder
    /// completion that uses the asymptotic amplitude `c_K` directly.
    fn estimate_tail_error(&self) -> S {
        let t = self.period;
        let ck = to_f64(self.c_k);
        let h = to_f64(self.h).max(0.0);
        let mut worst = 0.0_f64;
        for a in 0..t {
            let mut row = 0.0;
            for b in 0..t {
                let g = (b + t - a) % t;
                let crude = |rate: f64| ck * lattice_power_tail(self.class_start[g], t as f64, rate, 1.5);
                let d0 = (self.class_tail(g, 0.0, 1.5) - crude(0.0)).abs();
                let dh = if self.balanced { d0 } else { (self.class_tail(g, h, 1.5) - crude(h)).abs() };
                row += 0.5 * to_f64(self.pin[b]).exp() * (d0 + to_f64(self.sigma[(a, b)]).exp() * dh);
            }
            worst = worst.max(row);
        }
        lit(worst)
    }
}

/// Matrix-valued kernel tabulated on `0..=horizon`.
#[derive(Clone, Debug)]
pub struct DenseKernel<S = f64> {
    values: Vec<SquareMatrix<S>>,
}

impl<S: Scalar> DenseKernel<S> {
    /// Convolution unit: the identity at `x = 0`, zero elsewhere.
    pub fn identity(t: usize, horizon: usize) -> Self {
        let mut values = vec![SquareMatrix::zeros(t); horizon + 1];
        values[0] = SquareMatrix::identity(t);
        Self { values }
    }

    /// `M` on `0..=horizon` (zero at `x = 0`).
    pub fn from_bundle(bundle: &KernelBundle<S>, horizon: usize) -> Result<Self> {
        if horizon > bundle.x_max() {
            return invalid_input("horizon beyond the tabulated kernel");
        }
        let t = bundle.period();
        let mut values = vec![SquareMatrix::zeros(t); horizon + 1];
        for (x, v) in values.iter_mut().enumerate().skip(1) {
            for a in 0..t {
                v[(a, bundle.target(a, x))] = bundle.m(a, x);
            }
        }
        Ok(Self { values })
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, x: usize) -> &SquareMatrix<S> {
        &self.values[x]
    }

    /// Pointwise total `Σ_{x ≤ horizon} F(x)`.
    pub fn total(&self) -> SquareMatrix<S> {
        let t = self.values[0].dim();
        self.values.iter().fold(SquareMatrix::zeros(t), |acc, m| acc.add(m))
    }

    /// `F^{*n}` on the common horizon.
    pub fn power(&self, n: usize) -> Self {
        let t = self.values[0].dim();
        (0..n).fold(Self::identity(t, self.horizon()), |acc, _| convolve_all(&acc, self))
    }
}

/// `(F * G)(x) = Σ_{y=0}^{x} F(y) G(x − y)`.
pub fn convolve<S: Scalar>(f: &DenseKernel<S>, g: &DenseKernel<S>, x: usize) -> Result<SquareMatrix<S>> {
    if x > f.horizon() || x > g.horizon() {
        return invalid_input("convolution point beyond the tabulated horizon");
    }
    let t = f.at(0).dim();
    Ok((0..=x).fold(SquareMatrix::zeros(t), |acc, y| acc.add(&f.at(y).mul(g.at(x - y)))))
}

/// `F * G` on the smaller of the two horizons.
pub fn convolve_all<S: Scalar>(f: &DenseKernel<S>, g: &DenseKernel<S>) -> DenseKernel<S> {
    let horizon = f.horizon().min(g.horizon());
    DenseKernel { values: (0..=horizon).map(|x| convolve(f, g, x).expect("within horizon")).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{return_law, WalkModel};

    fn law() -> ReturnLaw<f64> {
        return_law(&WalkModel::new(0.3).unwrap(), 5000).unwrap()
    }

    #[test]
    fn phi_examples() {
        let z = ChargeSet::<f64>::zeros(2).unwrap().canonicalize();
        let (r0, r1) = (Residue::new(0, 2), Residue::new(1, 2));
        assert_eq!(phi(&z, r0, r1, 3), Some(0.0));
        assert_eq!(phi(&z, r0, r1, 2), None);
        let c = ChargeSet::copolymer(vec![-2.0, -2.0]).unwrap().canonicalize();
        let v = phi(&c, r0, r1, 3).unwrap();
        assert!((v - (0.5 * (1.0 + (-6.0f64).exp())).ln()).abs() < 1e-15);
        assert!((v + 0.690_671).abs() < 1e-6);
        assert_eq!(phi_tilde(&c, r0, r1, 3), Some(v));
        assert_eq!(phi_tilde(&c, r0, r1, 1), Some(0.0));
    }

    #[test]
    fn zero_charges_scalar_b_is_one() {
        let z = ChargeSet::zeros(1).unwrap().canonicalize();
        let bundle = build_bundle(&z, &law(), 5000).unwrap();
        assert!((bundle.b()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(bundle.tail_error() < 1e-3);
        assert!((bundle.l()[(0, 0)] - bundle.c_k()).abs() < 1e-15);
    }

    #[test]
    fn pinning_scales_b() {
        let c = ChargeSet::pinning(vec![-0.4]).unwrap().canonicalize();
        let bundle = build_bundle(&c, &law(), 5000).unwrap();
        assert!((bundle.b()[(0, 0)] - (-0.4f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn zero_charges_rows_are_stochastic() {
        for t in 1..=4 {
            let z = ChargeSet::zeros(t).unwrap().canonicalize();
            let bundle = build_bundle(&z, &law(), 5000).unwrap();
            for s in bundle.b().row_sums() {
                assert!((s - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn two_step_self_convolution() {
        let z = ChargeSet::zeros(1).unwrap().canonicalize();
        let bundle = build_bundle(&z, &law(), 50).unwrap();
        let m = DenseKernel::from_bundle(&bundle, 10).unwrap();
        let mm = convolve(&m, &m, 2).unwrap();
        assert!((mm[(0, 0)] - 0.16).abs() < 1e-15);
        let id = DenseKernel::identity(1, 10);
        for x in 0..=10 {
            assert_eq!(convolve(&id, &m, x).unwrap(), *m.at(x));
        }
    }

    #[test]
    fn non_canonical_rejected() {
        let raw = ChargeSet::new(vec![1.0], vec![0.0], vec![0.0], vec![0.0]).unwrap();
        assert!(build_bundle(&raw, &law(), 100).is_err());
        let z = ChargeSet::zeros(1).unwrap().canonicalize();
        assert!(build_bundle(&z, &law(), 6000).is_err());
    }

    #[test]
    fn requested_tail_error_enforced() {
        let z = ChargeSet::zeros(1).unwrap().canonicalize();
        let opts = BundleOptions { x_max: 10, max_tail_error: Some(1e-30), ..BundleOptions::default() };
        assert!(matches!(build_bundle_with(&z, &law(), opts), Err(crate::Error::NumericalFailure(_))));
    }
}
