//! The Markov renewal process of zeros under the normalized kernel `Γ`:
//! sampling, Green function, return law to a fixed residue, its tail
//! constant, and the infinite-mean renewal asymptotics.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid_input, invalid_state, numerical, Result};
use crate::kernel::KernelBundle;
use crate::numeric::SquareMatrix;
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::spectral::{SemiMarkovKernel, SpectralData, TailComponent};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RenewalTrajectory {
    /// Modulating chain `J_0, J_1, …`.
    pub j: Vec<usize>,
    /// Epochs `τ_0 = 0 < τ_1 < …`; the last one is the first beyond the horizon.
    pub tau: Vec<usize>,
}

/// Draws steps `(β, x)` from the rows of `Γ`.
#[derive(Clone, Debug)]
pub struct StepSampler {
    period: usize,
    cdf: Vec<Vec<f64>>,
    tails: Vec<Vec<TailComponent>>,
    totals: Vec<f64>,
}

impl StepSampler {
    pub fn new<S: Scalar>(gamma: &SemiMarkovKernel<S>) -> Self {
        let t = gamma.period();
        let mut cdf = Vec::with_capacity(t);
        let mut tails = Vec::with_capacity(t);
        let mut totals = Vec::with_capacity(t);
        for a in 0..t {
            let mut acc = 0.0;
            let row: Vec<f64> = gamma
                .row(a)
                .iter()
                .map(|&v| {
                    acc += to_f64(v);
                    acc
                })
                .collect();
            let tail: Vec<TailComponent> = gamma.tail(a).to_vec();
            totals.push(acc + tail.iter().map(|c| c.mass).sum::<f64>());
            cdf.push(row);
            tails.push(tail);
        }
        Self { period: t, cdf, tails, totals }
    }

    /// One excursion length from residue `alpha`.
    pub fn step<R: Rng + ?Sized>(&self, alpha: usize, rng: &mut R) -> usize {
        let cdf = &self.cdf[alpha];
        let u = rng.gen::<f64>() * self.totals[alpha];
        let table_mass = *cdf.last().expect("non-empty row");
        if u < table_mass {
            return cdf.partition_point(|&c| c <= u).max(1);
        }
        let mut v = u - table_mass;
        let comps = &self.tails[alpha];
        for c in comps {
            if v < c.mass {
                return sample_power_tail(c.start, self.period, c.rate, rng);
            }
            v -= c.mass;
        }
        let last = comps.last().expect("tail mass implies a component");
        sample_power_tail(last.start, self.period, last.rate, rng)
    }
}

/// Exact draw from `P(x) ∝ x^{-3/2} e^{-rate·x}` on `{start, start + step, …}`.
fn sample_power_tail<R: Rng + ?Sized>(start: usize, step: usize, rate: f64, rng: &mut R) -> usize {
    let x0 = start as f64;
    let st = step as f64;
    loop {
        if rate * x0 > 1.0 {
            // Geometric proposal in the lattice index, power-law acceptance.
            let u: f64 = 1.0 - rng.gen::<f64>();
            let j = (u.ln() / (-rate * st)).floor();
            let a = x0 + j * st;
            if rng.gen::<f64>() <= (x0 / a).powf(1.5) {
                return start + j as usize * step;
            }
        } else {
            // Continuous Pareto(1/2) proposal discretized to the lattice.
            let u: f64 = 1.0 - rng.gen::<f64>();
            let cont = x0 / (u * u);
            let j = ((cont - x0) / st).floor();
            if !j.is_finite() || j > 1e15 {
                continue;
            }
            let a = x0 + j * st;
            let proposal = a.powf(-0.5) - (a + st).powf(-0.5);
            let accept = a.powf(-1.5) / proposal * (st / 2.0) * (x0 / (x0 + st)).powf(1.5) * (-rate * (a - x0)).exp();
            if rng.gen::<f64>() <= accept {
                return start + j as usize * step;
            }
        }
    }
}

/// Runs the renewal chain from residue `start` until an epoch passes `horizon`.
pub fn sample_trajectory<S: Scalar, R: Rng + ?Sized>(
    gamma: &SemiMarkovKernel<S>,
    start: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<RenewalTrajectory> {
    if horizon > gamma.x_max() {
        return invalid_input("horizon beyond the tabulated kernel");
    }
    let sampler = StepSampler::new(gamma);
    Ok(sample_trajectory_with(&sampler, start, horizon, rng))
}

pub fn sample_trajectory_with<R: Rng + ?Sized>(sampler: &StepSampler, start: usize, horizon: usize, rng: &mut R) -> RenewalTrajectory {
    let t = sampler.period;
    let mut j = vec![start % t];
    let mut tau = vec![0usize];
    while *tau.last().expect("non-empty") <= horizon {
        let a = *j.last().expect("non-empty");
        let x = sampler.step(a, rng);
        tau.push(tau.last().expect("non-empty") + x);
        j.push((a + x) % t);
    }
    RenewalTrajectory { j, tau }
}

/// `U_{α,β}(n) = P_α(n ∈ τ, J at n = β)` and the step survival `Q_α(t)`.
#[derive(Clone, Debug)]
pub struct GreenTable<S = f64> {
    period: usize,
    horizon: usize,
    f: S,
    u: Vec<Vec<S>>,
    q_surv: Vec<Vec<S>>,
}

pub fn green_function<S: Scalar>(gamma: &SemiMarkovKernel<S>, horizon: usize) -> Result<GreenTable<S>> {
    if horizon > gamma.x_max() {
        return invalid_input("horizon beyond the tabulated kernel");
    }
    let t = gamma.period();
    let mut u = Vec::with_capacity(t);
    for a in 0..t {
        let mut row = vec![S::zero(); horizon + 1];
        row[0] = S::one();
        for n in 1..=horizon {
            let mut acc = S::zero();
            for y in 0..n {
                acc = acc + row[y] * gamma.at((a + y) % t, n - y);
            }
            row[n] = acc;
        }
        u.push(row);
    }
    let x_max = gamma.x_max();
    let q_surv = (0..t)
        .map(|a| {
            let tail: f64 = gamma.tail(a).iter().map(|c| c.mass).sum();
            let mut out = vec![S::zero(); horizon + 1];
            let mut acc = lit::<S>(tail);
            for s in (horizon + 1..=x_max).rev() {
                acc = acc + gamma.at(a, s);
            }
            for tt in (0..=horizon).rev() {
                out[tt] = acc;
                if tt >= 1 {
                    acc = acc + gamma.at(a, tt);
                }
            }
            out
        })
        .collect();
    Ok(GreenTable { period: t, horizon, f: gamma.free_energy(), u, q_surv })
}

impl<S: Scalar> GreenTable<S> {
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `U_{α,β}(n)`; zero unless `n ≡ β − α`.
    pub fn u(&self, alpha: usize, beta: usize, n: usize) -> S {
        let t = self.period;
        if (alpha + n) % t != beta % t {
            return S::zero();
        }
        self.u[alpha % t][n]
    }

    /// `Q_α(t) = Σ_β Σ_{s>t} Γ_{α,β}(s)`.
    pub fn q_surv(&self, alpha: usize, t: usize) -> S {
        self.q_surv[alpha % self.period][t]
    }
}

/// Law of the first return of the modulating chain to `beta`:
/// `q^β(x)` for `x = 0..=horizon`, nonzero only for `x ≡ 0`.
pub fn q_beta<S: Scalar>(gamma: &SemiMarkovKernel<S>, beta: usize, horizon: usize) -> Result<Vec<S>> {
    if horizon > gamma.x_max() {
        return invalid_input("horizon beyond the tabulated kernel");
    }
    let t = gamma.period();
    let beta = beta % t;
    // v[y]: mass of paths from β reaching a zero at y without revisiting β.
    let mut v = vec![S::zero(); horizon + 1];
    v[0] = S::one();
    for y in 1..=horizon {
        if y % t == 0 {
            continue;
        }
        let mut acc = S::zero();
        for z in 0..y {
            acc = acc + v[z] * gamma.at((beta + z) % t, y - z);
        }
        v[y] = acc;
    }
    let mut q = vec![S::zero(); horizon + 1];
    for x in (t..=horizon).step_by(t) {
        let mut acc = S::zero();
        for y in 0..x {
            acc = acc + v[y] * gamma.at((beta + y) % t, x - y);
        }
        q[x] = acc;
    }
    Ok(q)
}

/// Tail prefactor of `q^β`, computed as `(1/ν_β) Σ ζ_α L_{α,γ} ξ_γ` and
/// checked against the conjugated form `(1/ν_β) Σ ν_α L̂_{α,γ}`,
/// `L̂_{α,γ} = L_{α,γ} ξ_γ / ξ_α`.
pub fn c_beta<S: Scalar>(s: &SpectralData<S>, bundle: &KernelBundle<S>, beta: usize) -> Result<S> {
    if s.is_delocalized() {
        return invalid_state("the return constant needs δ ≥ 1");
    }
    let t = bundle.period();
    let beta = beta % t;
    let l = bundle.l();
    let direct: S = (0..t).flat_map(|a| (0..t).map(move |g| (a, g))).map(|(a, g)| s.zeta[a] * l[(a, g)] * s.xi[g]).sum();
    let conj: S = (0..t)
        .flat_map(|a| (0..t).map(move |g| (a, g)))
        .map(|(a, g)| s.nu[a] * l[(a, g)] * s.xi[g] / s.xi[a])
        .sum();
    let nu_b = s.zeta[beta] * s.xi[beta];
    let (c1, c2) = (direct / nu_b, conj / nu_b);
    if (c1 - c2).abs() > lit::<S>(1e-10).max(S::solver_tol() * lit(16.0)) * c1 {
        return numerical(format!("return-constant forms disagree: {c1} vs {c2}"));
    }
    Ok(c1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoneyRow<S = f64> {
    pub x: usize,
    pub ratio: S,
}

/// `√x U_{α,β}(x) 2π c_β / T²` along `x ≡ β − α`.
pub fn doney_check<S: Scalar>(green: &GreenTable<S>, c_beta: S, alpha: usize, beta: usize) -> Result<Vec<DoneyRow<S>>> {
    if green.f != S::zero() {
        return invalid_state("renewal asymptotics with infinite mean need the critical regime");
    }
    let t = green.period;
    let tf = from_usize::<S>(t);
    let factor = lit::<S>(2.0) * S::PI() * c_beta / (tf * tf);
    let first = (beta + t - alpha % t) % t;
    let first = if first == 0 { t } else { first };
    Ok((first..=green.horizon)
        .step_by(t)
        .map(|x| DoneyRow { x, ratio: from_usize::<S>(x).sqrt() * green.u(alpha, beta, x) * factor })
        .collect())
}

/// Largest deviations in the identities
/// `[(1 − Q^{(γ)})^{-1}]_{γ,α} = ν_α/ν_γ` and `[(1 − Q^{(γ)})^{-1} Q]_{α,γ} = 1`,
/// where `Q^{(γ)}` is `Q` with column `γ` zeroed and `ν` its invariant law.
pub fn visit_identities<S: Scalar>(q: &SquareMatrix<S>) -> Result<(S, S)> {
    let t = q.dim();
    let nu = crate::spectral::perron(&q.transpose())?.right;
    let mut err_visits = S::zero();
    let mut err_return = S::zero();
    for g in 0..t {
        let mut qg = q.clone();
        for a in 0..t {
            qg[(a, g)] = S::zero();
        }
        let (inv, _) = SquareMatrix::identity(t).sub(&qg).inverse()?;
        let iq = inv.mul(q);
        for a in 0..t {
            err_visits = err_visits.max((inv[(g, a)] - nu[a] / nu[g]).abs());
            err_return = err_return.max((iq[(a, g)] - S::one()).abs());
        }
    }
    Ok((err_visits, err_return))
}

/// Sum of a scalar step law over lengths `x ≡ 0`: used to check that the
/// return to a fixed residue is certain.
pub fn total_mass<S: Scalar>(q: &[S]) -> S {
    q.iter().copied().sum()
}
