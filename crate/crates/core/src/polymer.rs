//! Exact path sampling from the polymer measure, sign constants, and the
//! path functionals used by the Monte Carlo checks.
//!
//! A path is drawn in three layers: the zero set by a sequential scan over
//! the partition tables, one sign per excursion, then the excursion shapes
//! by backward sampling from a table of positive walk paths. Shapes do not
//! depend on the charges, so one table serves every excursion.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{resolvent, Regime};
use crate::charges::ChargeSet;
use crate::error::{invalid_input, invalid_state, numerical, Result};
use crate::kernel::KernelBundle;
use crate::partition::PartitionTable;
use crate::rng::stream_rng;
use crate::scalar::{to_f64, Scalar};
use crate::spectral::SpectralData;
use crate::stats::{arcsine_cdf, half_normal_cdf, ks_distance, proportion, rayleigh_cdf};
use crate::Endpoint;

/// Probability that an excursion of length `z` from residue `alpha` is
/// positive; `None` for `z = 0`.
pub fn rho_plus<S: Scalar>(bundle: &KernelBundle<S>, alpha: usize, z: usize) -> Option<S> {
    if z == 0 {
        return None;
    }
    let t = bundle.period();
    let u = -S::from(z).expect("length fits the scalar") * bundle.h() + bundle.sigma()[(alpha % t, (alpha + z) % t)];
    Some(S::one() / (S::one() + u.exp()))
}

/// Positive walk paths started at height 1: row `i` holds the (row-scaled)
/// mass of paths that stay at or above 1 for `i` steps and end at each height.
#[derive(Clone, Debug)]
pub struct HeightTable {
    p: f64,
    rows: Vec<Vec<f64>>,
}

impl HeightTable {
    /// Rows `0..=max_index`. Heights beyond about fourteen standard deviations
    /// carry mass below `e^{-98}` and are dropped.
    pub fn new(p: f64, max_index: usize) -> Self {
        let sd = (2.0 * p).sqrt();
        let cap = |i: usize| (i + 1).min((14.0 * sd * ((i + 1) as f64).sqrt()).ceil() as usize + 16);
        let q = 1.0 - 2.0 * p;
        let mut rows = Vec::with_capacity(max_index + 1);
        rows.push(vec![1.0]);
        for i in 1..=max_index {
            let prev: &Vec<f64> = &rows[i - 1];
            let at = |h: usize| if h >= 1 && h <= prev.len() { prev[h - 1] } else { 0.0 };
            let mut row: Vec<f64> = (1..=cap(i)).map(|h| p * at(h - 1) + q * at(h) + p * at(h + 1)).collect();
            let max = row.iter().copied().fold(0.0, f64::max);
            row.iter_mut().for_each(|x| *x /= max);
            rows.push(row);
        }
        Self { p, rows }
    }

    pub fn max_index(&self) -> usize {
        self.rows.len() - 1
    }

    fn at(&self, i: usize, h: i64) -> f64 {
        let row = &self.rows[i];
        if h >= 1 && (h as usize) <= row.len() {
            row[h as usize - 1]
        } else {
            0.0
        }
    }

    /// Fills `out[0..=i]` backwards given `out[i] = h`.
    fn fill_backward<R: Rng + ?Sized>(&self, i: usize, out: &mut [i64], rng: &mut R) {
        let q = 1.0 - 2.0 * self.p;
        for j in (1..=i).rev() {
            let h = out[j];
            let w = [self.at(j - 1, h - 1) * self.p, self.at(j - 1, h) * q, self.at(j - 1, h + 1) * self.p];
            let u = rng.gen::<f64>() * (w[0] + w[1] + w[2]);
            out[j - 1] = if u < w[0] {
                h - 1
            } else if u < w[0] + w[1] {
                h
            } else {
                h + 1
            };
        }
    }

    fn end_height<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> i64 {
        let row = &self.rows[i];
        let total: f64 = row.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (k, &w) in row.iter().enumerate() {
            if u < w {
                return k as i64 + 1;
            }
            u -= w;
        }
        row.len() as i64
    }

    /// Heights `S_0..S_len` of a positive excursion; `len ≥ 2`.
    pub fn excursion<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<i64> {
        let mut path = vec![0i64; len + 1];
        let inner = &mut path[1..len];
        let last = len - 2;
        inner[last] = 1;
        self.fill_backward(last, inner, rng);
        path
    }

    /// Heights `S_0..S_len` of a positive path with no return; `len ≥ 1`.
    pub fn meander<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<i64> {
        let mut path = vec![0i64; len + 1];
        let inner = &mut path[1..];
        let last = len - 1;
        inner[last] = self.end_height(last, rng);
        self.fill_backward(last, inner, rng);
        path
    }

    /// Endpoint of [`HeightTable::meander`] alone.
    pub fn meander_end<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> i64 {
        self.end_height(len - 1, rng)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ZeroSet {
    /// Returns to the axis in `1..=N`, increasing.
    pub tau: Vec<usize>,
}

impl ZeroSet {
    pub fn iota(&self) -> usize {
        self.tau.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMode {
    /// Zeros and signs only.
    Skeleton,
    /// Skeleton plus `S_N`.
    Endpoint,
    /// The whole path.
    Full,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PolymerSample {
    pub n: usize,
    pub endpoint: Endpoint,
    pub zeros: ZeroSet,
    /// One sign per excursion, the unfinished last one included; `0` for
    /// excursions of length one.
    pub signs: Vec<i8>,
    pub end_height: Option<i64>,
    pub heights: Option<Vec<i64>>,
}

impl PolymerSample {
    /// Sign of `S_m`.
    pub fn sign_at(&self, m: usize) -> i8 {
        let k = self.zeros.tau.partition_point(|&z| z < m);
        if m == 0 || self.zeros.tau.get(k) == Some(&m) {
            return 0;
        }
        self.signs.get(k).copied().unwrap_or(0)
    }

    /// Last zero at or before `m` (the origin counts).
    pub fn last_zero_before(&self, m: usize) -> usize {
        let k = self.zeros.tau.partition_point(|&z| z <= m);
        if k == 0 {
            0
        } else {
            self.zeros.tau[k - 1]
        }
    }

    /// First zero after `m`, if any.
    pub fn first_zero_after(&self, m: usize) -> Option<usize> {
        let k = self.zeros.tau.partition_point(|&z| z <= m);
        self.zeros.tau.get(k).copied()
    }
}

/// Sequential sampler for a fixed length and endpoint condition.
#[derive(Clone, Debug)]
pub struct PolymerSampler {
    n: usize,
    period: usize,
    endpoint: Endpoint,
    mode: PathMode,
    h: f64,
    sigma: Vec<f64>,
    /// `log Z^a_{N−t}` for the shifted charges, `t = 0..=N`.
    a_log: Vec<f64>,
    log_m: Vec<f64>,
    log_w: Vec<f64>,
    /// Tilted linear weights, when they fit in range.
    linear: Option<LinearWeights>,
    heights: Option<Arc<HeightTable>>,
}

/// `log Z_{N−t}` is split as `λ(N − t) + g(t)` with `λ = log Z_N / N`, so that
/// every transition weight is a product of three stored numbers.
#[derive(Clone, Debug)]
struct LinearWeights {
    m: Vec<f64>,
    w: Vec<f64>,
    g: Vec<f64>,
}

const LINEAR_RANGE: f64 = 1e150;

impl PolymerSampler {
    pub fn new<S: Scalar>(bundle: &KernelBundle<S>, table: &PartitionTable<S>, endpoint: Endpoint, n: usize, mode: PathMode) -> Result<Self> {
        if n == 0 {
            return invalid_input("N must be at least 1");
        }
        if n > table.horizon() || n > bundle.x_max() {
            return invalid_input(format!("N = {n} beyond the table horizon {}", table.horizon()));
        }
        let heights = match mode {
            PathMode::Skeleton => None,
            _ => Some(Arc::new(HeightTable::new(to_f64(bundle.p()), n))),
        };
        Self::with_heights(bundle, table, endpoint, n, mode, heights)
    }

    /// As [`PolymerSampler::new`], reusing a shared height table.
    pub fn with_heights<S: Scalar>(
        bundle: &KernelBundle<S>,
        table: &PartitionTable<S>,
        endpoint: Endpoint,
        n: usize,
        mode: PathMode,
        heights: Option<Arc<HeightTable>>,
    ) -> Result<Self> {
        if n == 0 || n > table.horizon() || n > bundle.x_max() {
            return invalid_input(format!("N = {n} outside 1..={}", table.horizon().min(bundle.x_max())));
        }
        if table.period() != bundle.period() {
            return invalid_input("table and kernel have different periods");
        }
        if mode != PathMode::Skeleton && heights.as_ref().map_or(true, |h| h.max_index() < n) {
            return invalid_input("height table too short for the requested mode");
        }
        let t = bundle.period();
        let stride = n + 1;
        let a_log: Vec<f64> = (0..=n).map(|s| to_f64(table.row(endpoint, s % t)[n - s])).collect();
        if !a_log[0].is_finite() {
            return numerical("partition function is not finite");
        }
        let mut log_m = vec![f64::NEG_INFINITY; t * stride];
        let mut log_w = vec![f64::NEG_INFINITY; t * stride];
        for a in 0..t {
            log_w[a * stride] = 0.0;
            for x in 1..=n {
                log_m[a * stride + x] = to_f64(bundle.log_m(a, x));
                log_w[a * stride + x] = to_f64(bundle.log_free_weight(a, x));
            }
        }
        let lambda = a_log[0] / n as f64;
        let g: Vec<f64> = (0..=n).map(|s| (a_log[s] - lambda * (n - s) as f64).exp()).collect();
        let m: Vec<f64> = (0..t * stride).map(|i| (log_m[i] - lambda * (i % stride) as f64).exp()).collect();
        let w: Vec<f64> = (0..t * stride).map(|i| (log_w[i] - lambda * (i % stride) as f64).exp()).collect();
        let in_range = |v: &f64| v.is_finite() && *v <= LINEAR_RANGE;
        let linear = (g.iter().all(|v| in_range(v) && *v >= 1.0 / LINEAR_RANGE) && m.iter().all(in_range) && w.iter().all(in_range))
            .then_some(LinearWeights { m, w, g });
        let sigma = (0..t * t).map(|i| to_f64(bundle.sigma()[(i / t, i % t)])).collect();
        Ok(Self { n, period: t, endpoint, mode, h: to_f64(bundle.h()), sigma, a_log, log_m, log_w, linear, heights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn endpoint(&self) -> Endpoint {
        self.endpoint
    }

    pub fn mode(&self) -> PathMode {
        self.mode
    }

    pub fn heights(&self) -> Option<&Arc<HeightTable>> {
        self.heights.as_ref()
    }

    fn rho_plus(&self, alpha: usize, z: usize) -> f64 {
        let t = self.period;
        let u = -(z as f64) * self.h + self.sigma[alpha * t + (alpha + z) % t];
        1.0 / (1.0 + u.exp())
    }

    fn draw_sign<R: Rng + ?Sized>(&self, alpha: usize, z: usize, rng: &mut R) -> i8 {
        if rng.gen::<f64>() < self.rho_plus(alpha, z) {
            1
        } else {
            -1
        }
    }

    /// Next zero after `t`, or `None` for "no further zero" (free case).
    fn next_zero<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Option<usize> {
        let n = self.n;
        let stride = n + 1;
        let base = (t % self.period) * stride;
        let free = self.endpoint == Endpoint::Free;
        let u = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut last = None;
        match &self.linear {
            Some(lin) => {
                let inv = 1.0 / lin.g[t];
                if free {
                    acc += lin.w[base + n - t] * inv;
                    if u < acc {
                        return None;
                    }
                }
                for s in t + 1..=n {
                    let w = lin.m[base + s - t] * lin.g[s] * inv;
                    acc += w;
                    if w > 0.0 {
                        last = Some(s);
                    }
                    if u < acc {
                        return Some(s);
                    }
                }
            }
            None => {
                let at = self.a_log[t];
                if free {
                    acc += (self.log_w[base + n - t] - at).exp();
                    if u < acc {
                        return None;
                    }
                }
                for s in t + 1..=n {
                    let w = (self.log_m[base + s - t] + self.a_log[s] - at).exp();
                    acc += w;
                    if w > 0.0 {
                        last = Some(s);
                    }
                    if u < acc {
                        return Some(s);
                    }
                }
            }
        }
        // Rounding left the cumulative sum just short of u.
        match last {
            Some(s) => Some(s),
            None if free => None,
            None => Some(n),
        }
    }

    /// Probability that the sampler produces exactly the zero set `tau`
    /// (increasing, within `1..=N`).
    pub fn zero_set_probability(&self, tau: &[usize]) -> f64 {
        let n = self.n;
        let stride = n + 1;
        let mut log_p = 0.0;
        let mut t = 0;
        for &s in tau {
            if s <= t || s > n {
                return 0.0;
            }
            log_p += self.log_m[(t % self.period) * stride + s - t] + self.a_log[s] - self.a_log[t];
            t = s;
        }
        match self.endpoint {
            Endpoint::Constrained if t != n => return 0.0,
            Endpoint::Constrained => {}
            Endpoint::Free => log_p += self.log_w[(t % self.period) * stride + n - t] - self.a_log[t],
        }
        log_p.exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PolymerSample {
        let n = self.n;
        let t_per = self.period;
        let mut tau = Vec::new();
        let mut signs = Vec::new();
        let mut t = 0;
        let mut last_len = 0;
        loop {
            if t == n && self.endpoint == Endpoint::Constrained {
                break;
            }
            match self.next_zero(t, rng) {
                Some(s) => {
                    let z = s - t;
                    signs.push(if z == 1 { 0 } else { self.draw_sign(t % t_per, z, rng) });
                    tau.push(s);
                    t = s;
                }
                None => {
                    last_len = n - t;
                    if last_len > 0 {
                        signs.push(self.draw_sign(t % t_per, last_len, rng));
                    }
                    break;
                }
            }
        }
        let mut sample = PolymerSample { n, endpoint: self.endpoint, zeros: ZeroSet { tau }, signs, end_height: None, heights: None };
        let Some(table) = self.heights.as_deref() else {
            return sample;
        };
        match self.mode {
            PathMode::Skeleton => {}
            PathMode::Endpoint => {
                sample.end_height = Some(if last_len == 0 {
                    0
                } else {
                    let s = *sample.signs.last().expect("final excursion has a sign") as i64;
                    s * table.meander_end(last_len, rng)
                });
            }
            PathMode::Full => {
                let mut path = vec![0i64; n + 1];
                let mut start = 0;
                let ends = sample.zeros.tau.iter().copied().chain((last_len > 0).then_some(n));
                for (k, end) in ends.enumerate() {
                    let len = end - start;
                    let sign = sample.signs[k] as i64;
                    let closed = sample.zeros.tau.get(k) == Some(&end);
                    if len >= 2 || !closed {
                        let shape = if closed { table.excursion(len, rng) } else { table.meander(len, rng) };
                        for (i, h) in shape.into_iter().enumerate().skip(1) {
                            path[start + i] = sign * h;
                        }
                    }
                    start = end;
                }
                sample.end_height = Some(path[n]);
                sample.heights = Some(path);
            }
        }
        sample
    }
}

/// One full path from stream 0 of `seed`.
pub fn sample_path<S: Scalar>(
    table: &PartitionTable<S>,
    bundle: &KernelBundle<S>,
    c: &ChargeSet<S>,
    endpoint: Endpoint,
    n: usize,
    seed: u64,
) -> Result<PolymerSample> {
    if !c.is_canonical() || c.period() != bundle.period() {
        return invalid_input("sampling needs the canonical charges the kernel was built from");
    }
    let sampler = PolymerSampler::new(bundle, table, endpoint, n, PathMode::Full)?;
    Ok(sampler.sample(&mut stream_rng(seed, 0)))
}

/// Fractions `t` at which the sign of `S_{⌊tN⌋}` is recorded.
pub const SIGN_GRID: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

/// The functionals of one path needed by [`scaling_statistics`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub n: usize,
    pub endpoint: Endpoint,
    /// `G_N`.
    pub last_zero: usize,
    /// `G_{N/2}`.
    pub last_zero_half: usize,
    /// `D_{N/2}`, absent when no zero follows `N/2`.
    pub next_zero_half: Option<usize>,
    /// Sign of `S_{⌊tN⌋}` along [`SIGN_GRID`].
    pub signs: Vec<i8>,
    pub end_height: Option<i64>,
    pub max_abs: Option<i64>,
}

impl PathSummary {
    pub fn of(s: &PolymerSample) -> Self {
        let n = s.n;
        let half = n / 2;
        Self {
            n,
            endpoint: s.endpoint,
            last_zero: s.last_zero_before(n),
            last_zero_half: s.last_zero_before(half),
            next_zero_half: s.first_zero_after(half),
            signs: SIGN_GRID.iter().map(|&t| s.sign_at((t * n as f64).floor() as usize)).collect(),
            end_height: s.end_height,
            max_abs: s.heights.as_ref().map(|h| h.iter().map(|x| x.abs()).max().unwrap_or(0)),
        }
    }
}

/// `count` paths, path `i` drawn from stream `i` of `seed`; the result does
/// not depend on `workers`.
pub fn sample_many(sampler: &PolymerSampler, count: usize, seed: u64, workers: usize) -> Result<Vec<PathSummary>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| crate::Error::InvalidState(e.to_string()))?;
    Ok(pool.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| PathSummary::of(&sampler.sample(&mut stream_rng(seed, i as u64))))
            .collect()
    }))
}

/// Limiting sign probabilities, indexed by the residue `η` of `N` where
/// they depend on it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignConstants<S = f64> {
    /// `lim P^c_N(S_{N/2} > 0)`, strictly delocalized.
    pub p_c: Option<Vec<S>>,
    /// `lim P^f_N(S_N > 0)`, strictly delocalized.
    pub p_f: Option<Vec<S>>,
    /// `lim P^c_N(S_{⌊tN⌋} > 0)`, critical; the same for every `t`.
    pub p_crit: Option<S>,
    /// Sign of the unfinished last excursion, critical and free.
    pub q_crit: Option<Vec<S>>,
}

impl<S: Scalar> SignConstants<S> {
    /// `lim P^f_N(S_{⌊tN⌋} > 0)` in the critical regime: an arcsine mixture of
    /// `p_crit` and `q_crit[η]`.
    pub fn p_f_of_t(&self, t: S, eta: usize) -> Option<S> {
        let p = self.p_crit?;
        let q = self.q_crit.as_ref()?;
        let w = S::FRAC_2_PI() * t.sqrt().asin();
        Some((S::one() - w) * p + w * q[eta % q.len()])
    }

    pub fn values(&self) -> Vec<S> {
        let mut out: Vec<S> = self.p_c.iter().chain(&self.p_f).chain(&self.q_crit).flatten().copied().collect();
        out.extend(self.p_crit);
        out
    }
}

pub fn sign_constants<S: Scalar>(s: &SpectralData<S>, bundle: &KernelBundle<S>) -> Result<SignConstants<S>> {
    let t = bundle.period();
    let ck = bundle.c_k();
    let half = S::from(0.5).expect("literal");
    let l = bundle.l();
    let lt = bundle.l_tilde();
    let pin_weight: Vec<S> = (0..t).map(|b| ck * half * bundle.pin(b).exp()).collect();
    if s.is_delocalized() {
        let (r, _) = resolvent(bundle)?;
        let rl = r.mul(l).mul(&r);
        let rlt = r.mul(lt);
        let row0: S = (0..t).map(|a| r[(0, a)]).sum();
        let p_c = (0..t)
            .map(|eta| {
                let num: S = (0..t).map(|b| pin_weight[b] * r[(b, eta)]).sum::<S>() * row0;
                num / rl[(0, eta)]
            })
            .collect();
        let p_f = (0..t).map(|eta| row0 * ck / rlt[(0, eta)]).collect();
        return Ok(SignConstants { p_c: Some(p_c), p_f: Some(p_f), p_crit: None, q_crit: None });
    }
    if s.is_critical() {
        let zeta_sum: S = s.zeta.iter().copied().sum();
        let num: S = zeta_sum * (0..t).map(|b| pin_weight[b] * s.xi[b]).sum::<S>();
        let den: S = (0..t).flat_map(|a| (0..t).map(move |b| (a, b))).map(|(a, b)| s.zeta[a] * l[(a, b)] * s.xi[b]).sum();
        let q_crit = (0..t)
            .map(|eta| ck * zeta_sum / (0..t).map(|g| s.zeta[g] * lt[(g, eta)]).sum::<S>())
            .collect();
        return Ok(SignConstants { p_c: None, p_f: None, p_crit: Some(num / den), q_crit: Some(q_crit) });
    }
    invalid_state("sign constants are defined for δ ≤ 1")
}

/// Exact `P^a_N(S_m > 0)` from the partition tables.
pub fn sign_probability<S: Scalar>(bundle: &KernelBundle<S>, table: &PartitionTable<S>, endpoint: Endpoint, n: usize, m: usize) -> Result<f64> {
    if n == 0 || n > table.horizon() || n > bundle.x_max() || m > n {
        return invalid_input("need 0 ≤ m ≤ N ≤ horizon");
    }
    let t = bundle.period();
    let zc = table.row(Endpoint::Constrained, 0);
    let za = |s: usize| to_f64(table.row(endpoint, s % t)[n - s]);
    let total = za(0);
    let rho = |a: usize, z: usize| to_f64(rho_plus(bundle, a, z).expect("positive length"));
    let mut acc = 0.0;
    for x in 0..m {
        let a = x % t;
        let head = to_f64(zc[x]) - total;
        for y in m + 1..=n {
            acc += (head + to_f64(bundle.log_m(a, y - x)) + za(y)).exp() * rho(a, y - x);
        }
        if endpoint == Endpoint::Free {
            acc += (head + to_f64(bundle.log_free_weight(a, n - x))).exp() * rho(a, n - x);
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapCheck {
    pub holds: bool,
    /// Largest `P(gap) / K̂_k(n)` seen.
    pub worst_ratio: f64,
    pub checked: usize,
}

/// Compares the exact probability of an excursion spanning `[k, k+n]` with
/// `K̂_k(n) = ½(1 + exp Σ_{i=1}^n ω⁻_{k+i}) / Z^c_{n,θ_k ω}`, for both
/// endpoint conditions and every `k + n ≤ N`.
pub fn gap_bound_check<S: Scalar>(c: &ChargeSet<S>, bundle: &KernelBundle<S>, table: &PartitionTable<S>, n: usize) -> Result<GapCheck> {
    if !c.is_canonical() || c.period() != bundle.period() {
        return invalid_input("the bound is stated for the canonical charges of the kernel");
    }
    if n == 0 || n > table.horizon() {
        return invalid_input("N outside the table horizon");
    }
    let t = bundle.period();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for endpoint in [Endpoint::Constrained, Endpoint::Free] {
        let total = to_f64(table.log_z(endpoint, 0, n)?);
        for k in 0..n {
            let head = to_f64(table.z_constrained(0, k)?);
            let mut minus_sum = 0.0;
            for len in 1..=n - k {
                minus_sum += to_f64(c.minus_at(k + len));
                let log_p = head + to_f64(bundle.log_m(k % t, len)) + to_f64(table.log_z(endpoint, k + len, n - k - len)?) - total;
                let log_bound = 0.5f64.ln() + minus_sum.exp().ln_1p() - to_f64(table.z_constrained(k, len)?);
                worst = worst.max((log_p - log_bound).exp());
                checked += 1;
            }
        }
    }
    Ok(GapCheck { holds: worst <= 1.0 + 1e-12, worst_ratio: worst, checked })
}

/// Quantities the statistics are compared against.
#[derive(Clone, Debug)]
pub struct StatReference {
    pub free_energy: f64,
    /// Standard deviation of one walk step.
    pub sigma: f64,
    pub signs: Option<SignConstants<f64>>,
}

/// Minimum number of paths accepted by [`scaling_statistics`].
pub const MIN_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExceedanceRow {
    /// Threshold in units of `log N / F`.
    pub c: f64,
    pub threshold: f64,
    pub prob: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub l: usize,
    /// `P^f(G_N ≥ L)`.
    pub last_zero: Option<f64>,
    /// `P^c(G_{N/2} ≥ L)`.
    pub last_zero_half: Option<f64>,
    /// `P^c(D_{N/2} ≤ N − L)`.
    pub next_zero_half: Option<f64>,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignRow {
    pub t: f64,
    pub freq: f64,
    pub se: f64,
    pub predicted: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatReport {
    pub regime: Regime,
    pub endpoint: Endpoint,
    pub n: usize,
    pub samples: usize,
    pub exceedance: Option<Vec<ExceedanceRow>>,
    pub envelope: Option<Vec<EnvelopeRow>>,
    /// `max_L √L · P(·)` over the envelope rows.
    pub envelope_constant: Option<f64>,
    pub signs: Vec<SignRow>,
    /// KS distance of `G_N / N` to the arcsine law.
    pub ks_last_zero_arcsine: Option<f64>,
    /// KS distance of `|S_N| / (σ √(N − G_N))` to the meander endpoint law.
    pub ks_meander_endpoint: Option<f64>,
    /// KS distance of `|S_N| / (σ √N)` to the meander endpoint law.
    pub ks_endpoint_rayleigh: Option<f64>,
    /// KS distance of `|S_N| / (σ √N)` to the law of `|B_1|`.
    pub ks_endpoint_half_normal: Option<f64>,
}

pub const EXCEEDANCE_GRID: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];
pub const ENVELOPE_LEVELS: [usize; 5] = [4, 8, 16, 32, 64];

pub fn scaling_statistics(samples: &[PathSummary], regime: Regime, reference: &StatReference) -> Result<StatReport> {
    if samples.len() < MIN_SAMPLES {
        return invalid_input(format!("{} samples, at least {MIN_SAMPLES} needed", samples.len()));
    }
    let n = samples[0].n;
    let endpoint = samples[0].endpoint;
    if samples.iter().any(|s| s.n != n || s.endpoint != endpoint) {
        return invalid_input("samples mix lengths or endpoint conditions");
    }
    let count = samples.len();
    let frac = |pred: &dyn Fn(&PathSummary) -> bool| proportion(samples.iter().filter(|s| pred(s)).count(), count);
    let free = endpoint == Endpoint::Free;
    let mut report = StatReport {
        regime,
        endpoint,
        n,
        samples: count,
        exceedance: None,
        envelope: None,
        envelope_constant: None,
        signs: Vec::new(),
        ks_last_zero_arcsine: None,
        ks_meander_endpoint: None,
        ks_endpoint_rayleigh: None,
        ks_endpoint_half_normal: None,
    };
    let eta = n % reference.signs.as_ref().and_then(|s| s.q_crit.as_ref().map(|q| q.len())).unwrap_or(1);
    report.signs = SIGN_GRID
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (freq, se) = frac(&|s| s.signs[i] > 0);
            let predicted = reference.signs.as_ref().and_then(|c| match (regime, free) {
                (Regime::Critical, false) => c.p_crit,
                (Regime::Critical, true) => c.p_f_of_t(t, eta),
                _ => None,
            });
            SignRow { t, freq, se, predicted }
        })
        .collect();
    match regime {
        Regime::Localized => {
            if samples.iter().any(|s| s.max_abs.is_none()) {
                return invalid_input("height maxima need full paths");
            }
            let log_n = (n as f64).ln();
            report.exceedance = Some(
                EXCEEDANCE_GRID
                    .iter()
                    .map(|&c| {
                        let threshold = c * log_n / reference.free_energy;
                        let (prob, se) = frac(&|s| s.max_abs.expect("checked") as f64 > threshold);
                        ExceedanceRow { c, threshold, prob, se }
                    })
                    .collect(),
            );
        }
        Regime::Delocalized => {
            let rows: Vec<EnvelopeRow> = ENVELOPE_LEVELS
                .iter()
                .map(|&l| {
                    let (g, se_g) = frac(&|s| s.last_zero >= l);
                    let (gh, se_gh) = frac(&|s| s.last_zero_half >= l);
                    let (dh, se_dh) = frac(&|s| s.next_zero_half.map_or(false, |d| d + l <= n));
                    if free {
                        EnvelopeRow { l, last_zero: Some(g), last_zero_half: None, next_zero_half: None, se: se_g }
                    } else {
                        EnvelopeRow { l, last_zero: None, last_zero_half: Some(gh), next_zero_half: Some(dh), se: se_gh.max(se_dh) }
                    }
                })
                .collect();
            let constant = rows
                .iter()
                .map(|r| {
                    let p = r.last_zero.unwrap_or(0.0) + r.last_zero_half.unwrap_or(0.0) + r.next_zero_half.unwrap_or(0.0);
                    (r.l as f64).sqrt() * p
                })
                .fold(0.0, f64::max);
            report.envelope = Some(rows);
            report.envelope_constant = Some(constant);
        }
        Regime::Critical => {
            if free {
                let g: Vec<f64> = samples.iter().map(|s| s.last_zero as f64 / n as f64).collect();
                report.ks_last_zero_arcsine = Some(ks_distance(&g, arcsine_cdf)?);
                if samples.iter().all(|s| s.end_height.is_some()) {
                    let scale = reference.sigma * (n as f64).sqrt();
                    let ends: Vec<f64> = samples.iter().map(|s| s.end_height.expect("checked").abs() as f64 / scale).collect();
                    report.ks_endpoint_rayleigh = Some(ks_distance(&ends, rayleigh_cdf)?);
                    report.ks_endpoint_half_normal = Some(ks_distance(&ends, half_normal_cdf)?);
                    let meander: Vec<f64> = samples
                        .iter()
                        .filter(|s| s.last_zero < n)
                        .map(|s| s.end_height.expect("checked").abs() as f64 / (reference.sigma * ((n - s.last_zero) as f64).sqrt()))
                        .collect();
                    report.ks_meander_endpoint = Some(ks_distance(&meander, rayleigh_cdf)?);
                }
            }
        }
    }
    Ok(report)
}
