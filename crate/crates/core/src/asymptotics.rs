//! Regime classification and the sharp prefactors of the partition function
//! in each regime, for both endpoint conditions.

use serde::Serialize;

use crate::charges::ChargeSet;
use crate::error::{invalid_input, invalid_state, Result};
use crate::kernel::KernelBundle;
use crate::numeric::{lattice_power_tail, SquareMatrix};
use crate::partition::PartitionTable;
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::spectral::{mean_mu, perron, SpectralData};
use crate::Endpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    Localized,
    Critical,
    Delocalized,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Localized => "Localized",
            Regime::Critical => "Critical",
            Regime::Delocalized => "Delocalized",
        };
        f.write_str(s)
    }
}

pub fn classify<S: Scalar>(s: &SpectralData<S>, eps: S) -> Regime {
    if s.delta > S::one() + eps {
        Regime::Localized
    } else if s.delta < S::one() - eps {
        Regime::Delocalized
    } else {
        Regime::Critical
    }
}

/// Prefactors indexed by the residue `η` of the chain length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport<S = f64> {
    pub regime: Regime,
    pub delta: S,
    pub f: S,
    /// `+∞` unless localized.
    pub mu: S,
    pub tail_error: S,
    pub eps_crit: S,
    /// Condition number of `1 − B` (delocalized only).
    pub condition: Option<S>,
    /// `Z^c_N ~ c_gt[η] e^{FN}`.
    pub c_gt: Option<Vec<S>>,
    /// `Z^c_N ~ c_eq[η] N^{-1/2}`.
    pub c_eq: Option<Vec<S>>,
    /// `Z^c_N ~ c_lt[η] N^{-3/2}`.
    pub c_lt: Option<Vec<S>>,
    /// `Z^f_N ~ c_gt_f[η] e^{FN}`.
    pub c_gt_f: Option<Vec<S>>,
    /// `Z^f_N ~ c_eq_f[η]`.
    pub c_eq_f: Option<Vec<S>>,
    /// `Z^f_N ~ c_lt_f[η] N^{-1/2}`.
    pub c_lt_f: Option<Vec<S>>,
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `(1 − B)^{-1}` with its condition number.
pub fn resolvent<S: Scalar>(bundle: &KernelBundle<S>) -> Result<(SquareMatrix<S>, S)> {
    let t = bundle.period();
    SquareMatrix::identity(t).sub(bundle.b()).inverse()
}

/// `Σ_{t ≥ 0} e^{-F t} W_{γ,η}(t) ζ_γ` summed over `γ`, where `W` is the weight
/// of an unfinished final excursion; the part beyond the kernel horizon is
/// completed with the `t^{-1/2}` survival shape.
fn discounted_free_mass<S: Scalar>(s: &SpectralData<S>, bundle: &KernelBundle<S>, eta: usize) -> S {
    let t = bundle.period();
    let x_max = bundle.x_max();
    let f = to_f64(s.f);
    let mut total = 0.0;
    for g in 0..t {
        let row = bundle.log_free_weight_row(g);
        let first = (eta + t - g) % t;
        let mut acc = 0.0;
        let mut x = first;
        while x <= x_max {
            acc += (to_f64(row[x]) - f * x as f64).exp();
            x += t;
        }
        // Survival ~ amplitude · x^{-1/2}; matched at the horizon.
        let amp = to_f64(bundle.survival(x_max)) * (x_max as f64).sqrt();
        let h = to_f64(bundle.h()).max(0.0);
        let sig = to_f64(bundle.sigma()[(g, eta)]).exp();
        let step = t as f64;
        let tail = if f > 0.0 {
            0.5 * amp * (lattice_power_tail(x as f64, step, f, 0.5) + sig * lattice_power_tail(x as f64, step, f + h, 0.5))
        } else {
            f64::INFINITY
        };
        total += to_f64(s.zeta[g]) * (acc + tail);
    }
    lit(total)
}

/// Fills the prefactors meaningful for the regime of `s`.
pub fn constants<S: Scalar>(s: &SpectralData<S>, bundle: &KernelBundle<S>) -> Result<RegimeReport<S>> {
    let t = bundle.period();
    let tf = from_usize::<S>(t);
    let regime = classify(s, s.eps_crit);
    let mut report = RegimeReport {
        regime,
        delta: s.delta,
        f: s.f,
        mu: S::infinity(),
        tail_error: bundle.tail_error(),
        eps_crit: s.eps_crit,
        condition: None,
        c_gt: None,
        c_eq: None,
        c_lt: None,
        c_gt_f: None,
        c_eq_f: None,
        c_lt_f: None,
    };
    match regime {
        Regime::Localized => {
            let mu = mean_mu(s, bundle)?;
            report.mu = mu;
            let xi0 = s.xi[0];
            report.c_gt = Some((0..t).map(|eta| xi0 * s.zeta[eta] * tf / mu).collect());
            report.c_gt_f = Some((0..t).map(|eta| xi0 * tf / mu * discounted_free_mass(s, bundle, eta)).collect());
        }
        Regime::Critical => {
            let lxi = bundle.l().mul_vec(&s.xi);
            let denom = dot(&s.zeta, &lxi);
            let xi0 = s.xi[0];
            let two_pi = lit::<S>(2.0) * S::PI();
            report.c_eq = Some((0..t).map(|eta| tf * tf / two_pi * xi0 * s.zeta[eta] / denom).collect());
            let lt = bundle.l_tilde();
            report.c_eq_f = Some(
                (0..t)
                    .map(|eta| {
                        let col: S = (0..t).map(|g| s.zeta[g] * lt[(g, eta)]).sum();
                        xi0 * tf * lit(0.5) * col / denom
                    })
                    .collect(),
            );
        }
        Regime::Delocalized => {
            let (g, cond) = resolvent(bundle)?;
            report.condition = Some(cond);
            let glg = g.mul(bundle.l()).mul(&g);
            let glt = g.mul(bundle.l_tilde());
            report.c_lt = Some((0..t).map(|eta| glg[(0, eta)]).collect());
            report.c_lt_f = Some((0..t).map(|eta| glt[(0, eta)]).collect());
        }
    }
    Ok(report)
}

impl<S: Scalar> RegimeReport<S> {
    /// `log` of the predicted `Z^a_N` for `N ≡ eta`.
    pub fn log_prediction(&self, endpoint: Endpoint, eta: usize, n: usize) -> Result<S> {
        let nf = from_usize::<S>(n);
        let pick = |v: &Option<Vec<S>>| -> Result<S> {
            match v {
                Some(v) => Ok(v[eta % v.len()].ln()),
                None => invalid_state("constant not available in this regime"),
            }
        };
        Ok(match (self.regime, endpoint) {
            (Regime::Localized, Endpoint::Constrained) => pick(&self.c_gt)? + self.f * nf,
            (Regime::Localized, Endpoint::Free) => pick(&self.c_gt_f)? + self.f * nf,
            (Regime::Critical, Endpoint::Constrained) => pick(&self.c_eq)? - lit::<S>(0.5) * nf.ln(),
            (Regime::Critical, Endpoint::Free) => pick(&self.c_eq_f)?,
            (Regime::Delocalized, Endpoint::Constrained) => pick(&self.c_lt)? - lit::<S>(1.5) * nf.ln(),
            (Regime::Delocalized, Endpoint::Free) => pick(&self.c_lt_f)? - lit::<S>(0.5) * nf.ln(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow<S = f64> {
    pub n: usize,
    pub log_z: S,
    pub log_prediction: S,
    /// `Z_N / prediction`.
    pub ratio: S,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable<S = f64> {
    pub endpoint: Endpoint,
    pub eta: usize,
    pub rows: Vec<ConvergenceRow<S>>,
    /// `|ratio − 1|` never increases along the list (up to rounding).
    pub monotone: bool,
}

impl<S: Scalar> ConvergenceTable<S> {
    pub fn final_ratio(&self) -> Option<S> {
        self.rows.last().map(|r| r.ratio)
    }
}

/// Ratio of exact partition functions to the predicted asymptote along
/// `n_list` (all `≡ eta mod T`).
pub fn verify_asymptotics<S: Scalar>(
    report: &RegimeReport<S>,
    table: &PartitionTable<S>,
    eta: usize,
    n_list: &[usize],
    endpoint: Endpoint,
) -> Result<ConvergenceTable<S>> {
    let t = table.period();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n % t != eta % t {
            return invalid_input(format!("N = {n} is not in residue class {eta} mod {t}"));
        }
        let log_z = table.log_z(endpoint, 0, n)?;
        let log_prediction = report.log_prediction(endpoint, eta, n)?;
        rows.push(ConvergenceRow { n, log_z, log_prediction, ratio: (log_z - log_prediction).exp() });
    }
    let slack = lit::<S>(1e-9);
    let monotone = rows.windows(2).all(|w| {
        let (a, b) = ((w[0].ratio - S::one()).abs(), (w[1].ratio - S::one()).abs());
        b <= a + slack || b <= slack
    });
    Ok(ConvergenceTable { endpoint, eta: eta % t, rows, monotone })
}

/// The chain of comparison matrices used to show that a zero-mean copolymer
/// is localized, with the Perron roots of each.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationCheck<S = f64> {
    pub delta: S,
    /// Perron roots of the sign-averaged matrix and its two lower bounds.
    pub z_b: S,
    pub z_b_tilde: S,
    pub z_b_hat: S,
    /// Perron root of the diagonal similarity transform of the last bound.
    pub z_c: S,
    /// `|z_b − δ|`: the closed-form matrix against the bundle's `B`.
    pub closed_form_gap: S,
    pub localized: bool,
    pub chain_holds: bool,
}

/// Residue-class masses `q(γ) = Σ_{x ≡ γ} K(x)` from a zero-charge bundle of
/// the same period.
fn class_masses<S: Scalar>(bundle: &KernelBundle<S>) -> Vec<S> {
    // With zero interface rewards the sign-averaged factor is 1 when Σ = 0,
    // so recover q from the kernel's return law directly.
    let t = bundle.period();
    let mut q = vec![S::zero(); t];
    for x in 1..=bundle.x_max() {
        q[x % t] = q[x % t] + bundle.k(x);
    }
    let tail = bundle.tail_matrix(S::zero());
    let sigma = bundle.sigma();
    for g in 0..t {
        // tail(0, g) = ½ e^{pin_g} (1 + e^{Σ_{0,g}}) · class mass when h = 0.
        let factor = lit::<S>(0.5) * bundle.pin(g).exp() * (S::one() + sigma[(0, g)].exp());
        q[g] = q[g] + tail[(0, g)] / factor;
    }
    q
}

/// Checks `δ > 1` for a nontrivial zero-mean copolymer and evaluates the
/// comparison chain `Z(B) > Z(B̃) ≥ Z(B̂) = Z(C) ≥ 1`.
pub fn copolymer_localization_check<S: Scalar>(c: &ChargeSet<S>, bundle: &KernelBundle<S>) -> Result<LocalizationCheck<S>> {
    let tol = lit::<S>(crate::charges::DEFAULT_ZERO_TOL);
    let t = c.period();
    let pure_copolymer = (1..=t).all(|n| c.zero_at(n).abs() <= tol && (c.zero_tilde_at(n) - c.plus_at(n)).abs() <= tol);
    let sigma = c.sigma().matrix;
    let nontrivial = (0..t).any(|a| (0..t).any(|b| sigma[(a, b)].abs() > tol));
    if !c.is_canonical() || !pure_copolymer || !c.is_balanced(tol) || !nontrivial {
        return invalid_input("expected canonical zero-mean copolymer charges with a nontrivial Σ");
    }
    let q = class_masses(bundle);
    let k1 = bundle.k(1);
    let one = 1 % t;
    let half = lit::<S>(0.5);
    let b = SquareMatrix::from_fn(t, |a, bb| {
        let g = (bb + t - a) % t;
        let avg = half * (S::one() + sigma[(a, bb)].exp());
        if g == one { k1 + avg * (q[g] - k1) } else { avg * q[g] }
    });
    let b_tilde = SquareMatrix::from_fn(t, |a, bb| {
        let g = (bb + t - a) % t;
        let e = (sigma[(a, bb)] * half).exp();
        if g == one { k1 + e * (q[g] - k1) } else { e * q[g] }
    });
    let cfac = |g: usize| if g == one { (q[one] - k1) / q[one] } else { S::one() };
    let b_hat = SquareMatrix::from_fn(t, |a, bb| {
        let g = (bb + t - a) % t;
        (cfac(g) * sigma[(a, bb)] * half).exp() * q[g]
    });
    let d = -k1 / (lit::<S>(2.0) * q[one]);
    let w: Vec<S> = (0..t).map(|a| d * sigma[(a, (a + 1) % t)]).collect();
    let cmat = interpolation_matrix(&q, &w, S::one());

    let z_b = perron(&b)?.value;
    let z_b_tilde = perron(&b_tilde)?.value;
    let z_b_hat = perron(&b_hat)?.value;
    let z_c = perron(&cmat)?.value;
    let delta = perron(bundle.b())?.value;
    let rel = lit::<S>(1e-12);
    let chain_holds = z_b > z_b_tilde && z_b_tilde >= z_b_hat * (S::one() - rel) && (z_b_hat - z_c).abs() <= rel * z_c && z_c >= S::one() - rel;
    Ok(LocalizationCheck {
        delta,
        z_b,
        z_b_tilde,
        z_b_hat,
        z_c,
        closed_form_gap: (z_b - delta).abs(),
        localized: delta - S::one() > rel * delta,
        chain_holds,
    })
}

/// `C(t)_{α,β} = exp(t w_α 1{β − α = 1}) q(β − α)`.
pub fn interpolation_matrix<S: Scalar>(q: &[S], w: &[S], t_param: S) -> SquareMatrix<S> {
    let t = q.len();
    SquareMatrix::from_fn(t, |a, b| {
        let g = (b + t - a) % t;
        let e = if g == 1 % t { (t_param * w[a]).exp() } else { S::one() };
        e * q[g]
    })
}

/// Inputs of the interpolation family for a copolymer: the class masses and
/// the row exponents `w_α = d Σ_{α,α+1}`.
pub fn interpolation_inputs<S: Scalar>(c: &ChargeSet<S>, bundle: &KernelBundle<S>) -> (Vec<S>, Vec<S>) {
    let t = c.period();
    let q = class_masses(bundle);
    let d = -bundle.k(1) / (lit::<S>(2.0) * q[1 % t]);
    let sigma = c.sigma().matrix;
    let w = (0..t).map(|a| d * sigma[(a, (a + 1) % t)]).collect();
    (q, w)
}
