//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use copolymer::{ChargeSet, Endpoint};
use rand::Rng;

/// Log-weight `H(S)` of the step from `prev` to `next` at monomer `n`,
/// interface reward included.
fn bond(c: &ChargeSet<f64>, n: usize, prev: i64, next: i64) -> f64 {
    let solvent = if next < 0 || (next == 0 && prev < 0) {
        c.minus_at(n)
    } else if next == 0 && prev == 0 {
        c.zero_tilde_at(n)
    } else {
        c.plus_at(n)
    };
    solvent + if next == 0 { c.zero_at(n) } else { 0.0 }
}

/// Every path of length `n` as `(heights, P(path) e^{H(path)})`.
pub fn enumerate(c: &ChargeSet<f64>, p: f64, n: usize) -> Vec<(Vec<i64>, f64)> {
    let mut out = Vec::new();
    let mut path = vec![0i64; n + 1];
    fn rec(c: &ChargeSet<f64>, p: f64, n: usize, i: usize, w: f64, path: &mut Vec<i64>, out: &mut Vec<(Vec<i64>, f64)>) {
        if i == n {
            out.push((path.clone(), w));
            return;
        }
        for (d, pr) in [(-1i64, p), (0, 1.0 - 2.0 * p), (1, p)] {
            let next = path[i] + d;
            path[i + 1] = next;
            let bw = bond(c, i + 1, path[i], next).exp();
            rec(c, p, n, i + 1, w * pr * bw, path, out);
        }
    }
    rec(c, p, n, 0, 1.0, &mut path, &mut out);
    out
}

/// `log Z^a_m` for `m = 0..=n` by depth-first enumeration of all `3^n` paths.
pub fn brute_log_z(c: &ChargeSet<f64>, p: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut zc = vec![0.0; n + 1];
    let mut zf = vec![0.0; n + 1];
    fn rec(c: &ChargeSet<f64>, p: f64, n: usize, i: usize, prev: i64, w: f64, zc: &mut [f64], zf: &mut [f64]) {
        zf[i] += w;
        if prev == 0 {
            zc[i] += w;
        }
        if i == n {
            return;
        }
        for (d, pr) in [(-1i64, p), (0, 1.0 - 2.0 * p), (1, p)] {
            let next = prev + d;
            rec(c, p, n, i + 1, next, w * pr * bond(c, i + 1, prev, next).exp(), zc, zf);
        }
    }
    rec(c, p, n, 0, 0, 1.0, &mut zc, &mut zf);
    (zc.iter().map(|z| z.ln()).collect(), zf.iter().map(|z| z.ln()).collect())
}

/// Normalized Gibbs law of paths under the endpoint condition.
pub fn gibbs(c: &ChargeSet<f64>, p: f64, n: usize, endpoint: Endpoint) -> Vec<(Vec<i64>, f64)> {
    let mut all: Vec<_> = enumerate(c, p, n)
        .into_iter()
        .filter(|(h, _)| endpoint == Endpoint::Free || h[n] == 0)
        .collect();
    let z: f64 = all.iter().map(|(_, w)| w).sum();
    all.iter_mut().for_each(|(_, w)| *w /= z);
    all
}

/// Base-3 code of the increments.
pub fn path_key(h: &[i64]) -> u64 {
    h.windows(2).fold(0u64, |k, w| 3 * k + (w[1] - w[0] + 1) as u64)
}

pub fn random_charges<R: Rng>(rng: &mut R, t: usize, amp: f64) -> ChargeSet<f64> {
    let mut v = || (0..t).map(|_| rng.gen_range(-amp..=amp)).collect::<Vec<f64>>();
    let (a, b, c, d) = (v(), v(), v(), v());
    ChargeSet::new(a, b, c, d).unwrap()
}

/// Zero-mean copolymer with a nonzero fluctuation matrix.
pub fn random_copolymer<R: Rng>(rng: &mut R, t: usize) -> ChargeSet<f64> {
    loop {
        let mut m: Vec<f64> = (0..t).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let mean = m.iter().sum::<f64>() / t as f64;
        m.iter_mut().for_each(|x| *x -= mean);
        if m.iter().any(|x| x.abs() > 1e-3) {
            return ChargeSet::copolymer(m).unwrap();
        }
    }
}

/// Small mixed charges with all four sequences active.
pub fn mixed_charges() -> ChargeSet<f64> {
    ChargeSet::new(vec![0.1, -0.2, 0.05], vec![-0.15, 0.2, 0.1], vec![0.3, -0.1, 0.2], vec![0.05, 0.1, -0.2]).unwrap()
}
