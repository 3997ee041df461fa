//! Perron-Frobenius analysis of the tilted kernel sums: the order parameter
//! `δ`, the free energy `F`, the eigenvectors `ζ`, `ξ`, the mean `μ` and the
//! normalized semi-Markov kernel `Γ`.

use serde::Serialize;

use crate::error::{invalid_input, invalid_state, numerical, Result};
use crate::kernel::KernelBundle;
use crate::numeric::{lattice_power_tail, SquareMatrix};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Default half-width of the band `|δ − 1| ≤ ε` classified as critical.
pub const DEFAULT_EPS_CRIT: f64 = 1e-9;

const MAX_POWER_ITERS: usize = 200_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PerronPair<S = f64> {
    pub value: S,
    /// Left eigenvector, `⟨left, right⟩ = 1`.
    pub left: Vec<S>,
    /// Right eigenvector, `Σ right = T`.
    pub right: Vec<S>,
}

fn is_irreducible<S: Scalar>(q: &SquareMatrix<S>) -> bool {
    let n = q.dim();
    let reach = |transpose: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let v = if transpose { q[(j, i)] } else { q[(i, j)] };
                if v > S::zero() && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}

/// Collatz-Wielandt bracket `[min_i (Qx)_i / x_i, max_i (Qx)_i / x_i]`.
fn cw_bounds<S: Scalar>(q: &SquareMatrix<S>, x: &[S]) -> (S, S) {
    let qx = q.mul_vec(x);
    let mut lo = S::infinity();
    let mut hi = S::zero();
    for (a, b) in qx.iter().zip(x) {
        let r = *a / *b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

fn normalize_l1<S: Scalar>(v: &mut [S]) {
    let s: S = v.iter().copied().sum();
    v.iter_mut().for_each(|x| *x = *x / s);
}

/// Positive eigenvector of a nonnegative irreducible matrix and its
/// eigenvalue.
fn perron_vector<S: Scalar>(q: &SquareMatrix<S>) -> Result<(S, Vec<S>)> {
    let n = q.dim();
    let strictly_positive = (0..n).all(|i| q.row(i).iter().all(|&v| v > S::zero()));
    // A diagonal shift makes periodic matrices primitive without moving the
    // eigenvectors.
    let shift = if strictly_positive { S::zero() } else { q.norm_inf() * lit(0.5) };
    let a = q.add(&SquareMatrix::identity(n).scale(shift));
    let tol = S::solver_tol();
    let mut x = vec![S::one() / from_usize(n); n];
    let mut converged = false;
    for _ in 0..MAX_POWER_ITERS {
        let mut y = a.mul_vec(&x);
        normalize_l1(&mut y);
        x = y;
        let (lo, hi) = cw_bounds(q, &x);
        if hi - lo <= lit::<S>(1e-9) * hi {
            converged = true;
            break;
        }
    }
    if !converged {
        return numerical("power iteration did not converge");
    }
    // Inverse iteration from just above the upper Collatz-Wielandt bound
    // sharpens the vector to working precision.
    for _ in 0..4 {
        let (lo, hi) = cw_bounds(q, &x);
        if hi - lo <= tol * hi {
            break;
        }
        let sigma = hi * (S::one() + tol);
        let shifted = q.sub(&SquareMatrix::identity(n).scale(sigma));
        let Ok(mut y) = shifted.solve(&x) else { break };
        normalize_l1(&mut y);
        if y.iter().any(|v| !(*v > S::zero())) {
            break;
        }
        let (lo2, hi2) = cw_bounds(q, &y);
        if hi2 - lo2 < hi - lo {
            x = y;
        } else {
            break;
        }
    }
    let (lo, hi) = cw_bounds(q, &x);
    Ok(((lo + hi) * lit(0.5), x))
}

/// Spectral radius and Perron vectors, normalized `Σ ξ = T`, `⟨ζ, ξ⟩ = 1`.
pub fn perron<S: Scalar>(q: &SquareMatrix<S>) -> Result<PerronPair<S>> {
    let n = q.dim();
    if n == 0 {
        return invalid_input("empty matrix");
    }
    for i in 0..n {
        for j in 0..n {
            let v = q[(i, j)];
            if !(v >= S::zero()) || !v.is_finite() {
                return invalid_input("matrix entries must be finite and nonnegative");
            }
        }
    }
    if !is_irreducible(q) {
        return invalid_input("matrix is reducible");
    }
    let (value, mut right) = perron_vector(q)?;
    let (_, mut left) = perron_vector(&q.transpose())?;
    let scale = from_usize::<S>(n) / right.iter().copied().sum::<S>();
    right.iter_mut().for_each(|x| *x = *x * scale);
    let dot: S = left.iter().zip(&right).map(|(&a, &b)| a * b).sum();
    left.iter_mut().for_each(|x| *x = *x / dot);
    let residual = q
        .mul_vec(&right)
        .iter()
        .zip(&right)
        .map(|(&a, &b)| (a - value * b).abs())
        .fold(S::zero(), S::max);
    if residual > lit::<S>(1e-10).max(S::solver_tol() * lit(16.0)) * value.max(S::one()) * from_usize(n) {
        return numerical(format!("eigen-residual {residual:e} too large"));
    }
    Ok(PerronPair { value, left, right })
}

/// Perron eigenvalue of the tilted sum `Σ_x M(x) e^{-b x}`.
pub fn delta_of_b<S: Scalar>(bundle: &KernelBundle<S>, b: S) -> Result<S> {
    if b < S::zero() {
        return invalid_input("tilt must be nonnegative");
    }
    Ok(perron(&bundle.tilted_matrix(b))?.value)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralData<S = f64> {
    pub delta: S,
    pub f: S,
    pub zeta: Vec<S>,
    pub xi: Vec<S>,
    /// `ζ_α ξ_α`.
    pub nu: Vec<S>,
    /// Critical band used for classification.
    pub eps_crit: S,
}

impl<S: Scalar> SpectralData<S> {
    pub fn is_critical(&self) -> bool {
        (self.delta - S::one()).abs() <= self.eps_crit
    }

    pub fn is_localized(&self) -> bool {
        self.delta > S::one() + self.eps_crit
    }

    pub fn is_delocalized(&self) -> bool {
        self.delta < S::one() - self.eps_crit
    }

    /// The same data with `ξ → cξ`, `ζ → ζ/c`.
    pub fn rescaled(&self, c: S) -> Self {
        Self {
            zeta: self.zeta.iter().map(|&z| z / c).collect(),
            xi: self.xi.iter().map(|&x| x * c).collect(),
            ..self.clone()
        }
    }
}

pub fn free_energy<S: Scalar>(bundle: &KernelBundle<S>) -> Result<SpectralData<S>> {
    free_energy_with(bundle, lit(DEFAULT_EPS_CRIT))
}

/// Root of `Δ(b) = 1` when `δ > 1 + eps_crit`; otherwise `F = 0`.
pub fn free_energy_with<S: Scalar>(bundle: &KernelBundle<S>, eps_crit: S) -> Result<SpectralData<S>> {
    let at_zero = perron(bundle.b())?;
    let delta = at_zero.value;
    let pack = |f: S, pair: PerronPair<S>| SpectralData {
        delta,
        f,
        nu: pair.left.iter().zip(&pair.right).map(|(&a, &b)| a * b).collect(),
        zeta: pair.left,
        xi: pair.right,
        eps_crit,
    };
    if delta <= S::one() + eps_crit {
        return Ok(pack(S::zero(), at_zero));
    }
    let target = lit::<S>(1e-12);
    let mut lo = S::zero();
    let mut g_lo = delta - S::one();
    let mut hi = S::one();
    let mut g_hi = delta_of_b(bundle, hi)? - S::one();
    let mut doublings = 0;
    while g_hi >= S::zero() {
        lo = hi;
        g_lo = g_hi;
        hi = hi + hi;
        g_hi = delta_of_b(bundle, hi)? - S::one();
        doublings += 1;
        if doublings > 60 {
            return numerical("could not bracket the free energy");
        }
    }
    // Illinois regula falsi: bracketed like bisection, superlinear like secant.
    let mut side = 0i8;
    let mut root = lo;
    for iter in 0..500 {
        let mid = if iter % 8 == 7 {
            (lo + hi) * lit(0.5)
        } else {
            let m = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
            if m > lo && m < hi { m } else { (lo + hi) * lit(0.5) }
        };
        let g = delta_of_b(bundle, mid)? - S::one();
        root = mid;
        if g.abs() <= target || hi - lo <= S::epsilon() * hi * lit(4.0) {
            break;
        }
        if g > S::zero() {
            lo = mid;
            g_lo = g;
            if side == 1 {
                g_hi = g_hi * lit(0.5);
            }
            side = 1;
        } else {
            hi = mid;
            g_hi = g;
            if side == -1 {
                g_lo = g_lo * lit(0.5);
            }
            side = -1;
        }
    }
    let pair = perron(&bundle.tilted_matrix(root))?;
    if (pair.value - S::one()).abs() > lit::<S>(1e-10).max(S::solver_tol() * lit(64.0)) {
        return numerical(format!("free-energy root inaccurate: Δ(F) − 1 = {:e}", pair.value - S::one()));
    }
    Ok(pack(root, pair))
}

/// `μ = Σ_x x e^{-F x} ζ M(x) ξ`; `+∞` in the critical band.
pub fn mean_mu<S: Scalar>(s: &SpectralData<S>, bundle: &KernelBundle<S>) -> Result<S> {
    if s.is_delocalized() {
        return invalid_state("the mean is only defined when δ ≥ 1");
    }
    if s.f == S::zero() {
        return Ok(S::infinity());
    }
    let d = bundle.moment_matrix(s.f);
    let dxi = d.mul_vec(&s.xi);
    Ok(s.zeta.iter().zip(&dxi).map(|(&a, &b)| a * b).sum())
}

/// One component of the tail of `Γ` beyond the tabulated horizon, restricted
/// to one residue class: mass `mass`, shape `x^{-3/2} e^{-rate x}` on
/// `x ∈ {start, start + T, …}`.
#[derive(Clone, Copy, Debug)]
pub struct TailComponent {
    pub mass: f64,
    pub rate: f64,
    pub start: usize,
}

/// `Γ_{α,α+[x]}(x) = M(x) e^{-F x} ξ_{α+[x]} / ξ_α`, tabulated with its tail.
#[derive(Clone, Debug)]
pub struct SemiMarkovKernel<S = f64> {
    period: usize,
    x_max: usize,
    f: S,
    table: Vec<Vec<S>>,
    tails: Vec<Vec<TailComponent>>,
    deficit: Vec<S>,
}

pub fn gamma_kernel<S: Scalar>(s: &SpectralData<S>, bundle: &KernelBundle<S>) -> Result<SemiMarkovKernel<S>> {
    if s.is_delocalized() {
        return invalid_state("Γ is not stochastic when δ < 1");
    }
    let t = bundle.period();
    let x_max = bundle.x_max();
    let f = s.f;
    let h = to_f64(bundle.h()).max(0.0);
    let mut table = Vec::with_capacity(t);
    let mut tails = Vec::with_capacity(t);
    let mut deficit = Vec::with_capacity(t);
    let tail = bundle.tail_matrix(f);
    for a in 0..t {
        let row_log = bundle.log_m_row(a);
        let mut row = vec![S::zero(); x_max + 1];
        let mut mass = S::zero();
        for x in 1..=x_max {
            let b = (a + x) % t;
            let v = (row_log[x] - f * from_usize(x)).exp() * s.xi[b] / s.xi[a];
            row[x] = v;
            mass = mass + v;
        }
        let mut comps = Vec::new();
        for g in 0..t {
            let b = (a + g) % t;
            let total = to_f64(tail[(a, b)] * s.xi[b] / s.xi[a]);
            mass = mass + lit(total);
            if total <= 0.0 {
                continue;
            }
            let first = x_max + 1;
            let start = first + (g + t - first % t) % t;
            let rate = to_f64(f);
            // Split the class mass between the undiscounted and the
            // drift-discounted halves of the excursion weight.
            let step = t as f64;
            let straight = lattice_power_tail(start as f64, step, rate, 1.5);
            if bundle.is_balanced() || h == 0.0 {
                comps.push(TailComponent { mass: total, rate, start });
            } else {
                let tilted = to_f64(bundle.sigma()[(a, b)]).exp() * lattice_power_tail(start as f64, step, rate + h, 1.5);
                let w = straight / (straight + tilted);
                comps.push(TailComponent { mass: total * w, rate, start });
                comps.push(TailComponent { mass: total * (1.0 - w), rate: rate + h, start });
            }
        }
        table.push(row);
        tails.push(comps);
        deficit.push(S::one() - mass);
    }
    Ok(SemiMarkovKernel { period: t, x_max, f, table, tails, deficit })
}

impl<S: Scalar> SemiMarkovKernel<S> {
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn x_max(&self) -> usize {
        self.x_max
    }

    pub fn free_energy(&self) -> S {
        self.f
    }

    /// `Γ_{α, α+[x]}(x)` for `1 ≤ x ≤ x_max`.
    #[inline]
    pub fn at(&self, alpha: usize, x: usize) -> S {
        self.table[alpha][x]
    }

    pub fn row(&self, alpha: usize) -> &[S] {
        &self.table[alpha]
    }

    pub fn tail(&self, alpha: usize) -> &[TailComponent] {
        &self.tails[alpha]
    }

    /// `1 − Σ_{β,x} Γ_{α,β}(x)` including the tail completion.
    pub fn deficit(&self, alpha: usize) -> S {
        self.deficit[alpha]
    }

    /// Row-normalized `Σ_x Γ(x)`, the modulating chain's transition matrix.
    pub fn embedded_chain(&self) -> SquareMatrix<S> {
        let t = self.period;
        let mut m = SquareMatrix::zeros(t);
        for a in 0..t {
            for x in 1..=self.x_max {
                let b = (a + x) % t;
                m[(a, b)] = m[(a, b)] + self.table[a][x];
            }
            for c in &self.tails[a] {
                let b = (a + c.start) % t;
                m[(a, b)] = m[(a, b)] + lit(c.mass);
            }
            let s: S = m.row(a).iter().copied().sum();
            for b in 0..t {
                m[(a, b)] = m[(a, b)] / s;
            }
        }
        m
    }
}

/// Log-convexity of the Perron root along a one-parameter family: second
/// differences of `log η(t_i)` on an equispaced grid.
pub fn log_perron_second_differences<S: Scalar>(
    family: impl Fn(S) -> SquareMatrix<S>,
    grid: &[S],
) -> Result<Vec<S>> {
    let logs = grid.iter().map(|&t| perron(&family(t)).map(|p| p.value.ln())).collect::<Result<Vec<_>>>()?;
    Ok(logs.windows(3).map(|w| w[0] - w[1] - w[1] + w[2]).collect())
}
