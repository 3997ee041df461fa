//! The lazy simple random walk with steps `±1` (probability `p` each) and `0`:
//! its first-return law, survival function, tail constant, and a transfer
//! matrix over heights used as an independent partition-function oracle.

use crate::charges::ChargeSet;
use crate::error::{invalid_input, numerical, Result};
use crate::numeric::NeumaierSum;
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::Endpoint;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkModel<S = f64> {
    p: S,
}

impl<S: Scalar> WalkModel<S> {
    pub fn new(p: S) -> Result<Self> {
        if !(p > S::zero() && p < lit(0.5)) {
            return invalid_input(format!("step probability must lie in (0, 1/2), got {p}"));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> S {
        self.p
    }

    pub fn sigma2(&self) -> S {
        self.p + self.p
    }
}

/// Horizon on which the tail constant is extrapolated, independent of the
/// horizon the caller tabulates.
const CK_HORIZON: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct ReturnLaw<S = f64> {
    p: S,
    /// `k[n] = P(τ₁ = n)`; `k[0] = 0`.
    k: Vec<S>,
    /// `surv[n] = P(τ₁ > n)`.
    surv: Vec<S>,
    c_k: S,
}

impl<S: Scalar> ReturnLaw<S> {
    pub fn n_max(&self) -> usize {
        self.k.len() - 1
    }

    pub fn p(&self) -> S {
        self.p
    }

    /// `P(τ₁ = n)` for `1 ≤ n ≤ n_max`.
    #[inline]
    pub fn k(&self, n: usize) -> S {
        self.k[n]
    }

    pub fn k_table(&self) -> &[S] {
        &self.k
    }

    /// `P(τ₁ > n)` for `0 ≤ n ≤ n_max`.
    #[inline]
    pub fn survival(&self, n: usize) -> S {
        self.surv[n]
    }

    pub fn survival_table(&self) -> &[S] {
        &self.surv
    }

    /// Limit of `n^{3/2} K(n)`.
    pub fn c_k(&self) -> S {
        self.c_k
    }

    fn from_k(p: S, k: Vec<S>, c_k: S) -> Self {
        let mut acc = NeumaierSum::new();
        let mut surv = Vec::with_capacity(k.len());
        surv.push(S::one());
        for &kn in &k[1..] {
            acc.add(kn);
            surv.push(S::one() - acc.value());
        }
        Self { p, k, surv, c_k }
    }
}

/// Coefficients of `1 − sqrt((1 − z)(1 − (1 − 4p) z))`, the first-return
/// generating function, by their three-term holonomic recurrence.
fn return_law_recurrence<S: Scalar>(p: S, n_max: usize) -> Vec<S> {
    let c = S::one() - lit::<S>(4.0) * p;
    let b = S::one() + c;
    let two = lit::<S>(2.0);
    let mut k = vec![S::zero(); n_max + 1];
    // a_n are the coefficients of sqrt(Q); K[n] = -a_n for n ≥ 1.
    let mut prev = S::one();
    let mut cur = -b / two;
    if n_max >= 1 {
        k[1] = -cur;
    }
    for n in 1..n_max {
        let nf = from_usize::<S>(n);
        let next = (b * (two * nf - S::one()) * cur - two * c * (nf - two) * prev) / (two * (nf + S::one()));
        k[n + 1] = -next;
        prev = cur;
        cur = next;
    }
    k
}

/// First-return law up to `n_max` with its tail constant.
pub fn return_law<S: Scalar>(w: &WalkModel<S>, n_max: usize) -> Result<ReturnLaw<S>> {
    if n_max == 0 {
        return invalid_input("n_max must be at least 1");
    }
    // The recurrence and the extrapolation lose too much in single precision,
    // so both run in f64 whatever `S` is.
    let horizon = n_max.max(CK_HORIZON);
    let mut long = return_law_recurrence(to_f64(w.p()), horizon);
    let c_k = richardson_ck(&long)?;
    long.truncate(n_max + 1);
    let k = long.into_iter().map(lit).collect();
    Ok(ReturnLaw::from_k(w.p(), k, lit(c_k)))
}

/// First-return law by the strictly-positive bridge recursion over heights.
/// Quadratic in `n_max`; kept as the reference the recurrence is tested
/// against.
pub fn return_law_bridge_dp<S: Scalar>(w: &WalkModel<S>, n_max: usize) -> Result<ReturnLaw<S>> {
    if n_max == 0 {
        return invalid_input("n_max must be at least 1");
    }
    let p = w.p();
    let q = S::one() - p - p;
    let mut k = vec![S::zero(); n_max + 1];
    k[1] = q;
    // f[h] = P_1(stay ≥ 1 for i steps, end at h), heights 1..=i+1 (index h).
    let mut f = vec![S::zero(); n_max + 2];
    f[1] = S::one();
    let mut next = f.clone();
    for i in 0..n_max.saturating_sub(1) {
        k[i + 2] = p * p * lit(2.0) * f[1];
        let top = i + 2;
        for h in 1..=top.min(n_max) {
            let below = if h >= 2 { f[h - 1] } else { S::zero() };
            next[h] = p * below + q * f[h] + p * f[h + 1];
        }
        std::mem::swap(&mut f, &mut next);
    }
    let c_k = if n_max >= 64 { richardson_ck(&k).unwrap_or(S::nan()) } else { S::nan() };
    Ok(ReturnLaw::from_k(p, k, c_k))
}

/// Two-level Richardson extrapolation of `a_n = n^{3/2} K(n)` over
/// `n, 2n, 4n` with `n = n_max / 4`.
fn richardson_ck<S: Scalar>(k: &[S]) -> Result<S> {
    let n_max = k.len() - 1;
    let n = n_max / 4;
    if n < 4 {
        return invalid_input("horizon too short to extrapolate the tail constant");
    }
    let a = |m: usize| from_usize::<S>(m).powf(lit(1.5)) * k[m];
    let (a1, a2, a4) = (a(n), a(2 * n), a(4 * n));
    if !((a4 - a2).abs() < (a2 - a1).abs() || (a4 - a2).abs() <= S::epsilon() * a4) {
        return numerical("n^{3/2} K(n) is not converging");
    }
    let r1 = a2 + a2 - a1;
    let r2 = a4 + a4 - a2;
    Ok((lit::<S>(4.0) * r2 - r1) / lit(3.0))
}

/// Tail constant of a tabulated return law (`n_max ≥ 16`).
pub fn estimate_ck<S: Scalar>(r: &ReturnLaw<S>) -> Result<S> {
    richardson_ck(&r.k)
}

/// Exponential weights a monomer contributes, by bond type.
struct BondWeights<S> {
    below: S,
    on: S,
    above: S,
    pin: S,
}

fn bond_weights<S: Scalar>(c: &ChargeSet<S>, n: usize) -> BondWeights<S> {
    BondWeights { below: c.minus_at(n).exp(), on: c.zero_tilde_at(n).exp(), above: c.plus_at(n).exp(), pin: c.zero_at(n).exp() }
}

/// `log Z_m` for `m = 0..=n` by a transfer matrix over heights `[-n, n]`.
///
/// Works for raw as well as canonical charges: a bond ending below the axis
/// (or returning to it from below) carries `ω⁻`, a bond along the axis `ω̃⁰`,
/// every other bond `ω⁺`, and each visit to the axis adds `ω⁰`.
pub fn height_partition_series<S: Scalar>(c: &ChargeSet<S>, w: &WalkModel<S>, n: usize, endpoint: Endpoint) -> Vec<S> {
    let p = w.p();
    let q = S::one() - p - p;
    let width = 2 * n + 1;
    let off = n as isize;
    let mut v = vec![S::zero(); width];
    v[n] = S::one();
    let mut next = vec![S::zero(); width];
    let mut log_scale = S::zero();
    let mut out = Vec::with_capacity(n + 1);
    out.push(S::zero());
    for step in 1..=n {
        let bw = bond_weights(c, step);
        let reach = step as isize;
        for hn in -reach..=reach {
            let mut acc = S::zero();
            for (dh, prob) in [(-1isize, p), (0, q), (1, p)] {
                let hp = hn - dh;
                if hp.abs() > reach - 1 {
                    continue;
                }
                let src = v[(hp + off) as usize];
                if src == S::zero() {
                    continue;
                }
                let weight = if hn < 0 || (hn == 0 && hp < 0) {
                    bw.below
                } else if hn == 0 && hp == 0 {
                    bw.on
                } else {
                    bw.above
                };
                acc = acc + src * prob * weight;
            }
            if hn == 0 {
                acc = acc * bw.pin;
            }
            next[(hn + off) as usize] = acc;
        }
        std::mem::swap(&mut v, &mut next);
        let max = v.iter().copied().fold(S::zero(), S::max);
        v.iter_mut().for_each(|x| *x = *x / max);
        log_scale = log_scale + max.ln();
        let z = match endpoint {
            Endpoint::Constrained => v[n],
            Endpoint::Free => v.iter().copied().sum(),
        };
        out.push(log_scale + z.ln());
    }
    out
}

/// `log Z^a_N` from the height transfer matrix.
pub fn height_partition_oracle<S: Scalar>(c: &ChargeSet<S>, w: &WalkModel<S>, n: usize, endpoint: Endpoint) -> Result<S> {
    if n == 0 {
        return invalid_input("N must be at least 1");
    }
    Ok(height_partition_series(c, w, n, endpoint)[n])
}

/// `P(S_m = 0)` for `m = 0..=n`.
pub fn return_probabilities<S: Scalar>(w: &WalkModel<S>, n: usize) -> Vec<S> {
    let zero = ChargeSet::zeros(1).expect("period 1");
    height_partition_series(&zero, w, n, Endpoint::Constrained).into_iter().map(|x| x.exp()).collect()
}
