mod common;

use copolymer::asymptotics::{constants, interpolation_inputs, interpolation_matrix};
use copolymer::kernel::build_bundle;
use copolymer::numeric::SquareMatrix;
use copolymer::polymer::sign_constants;
use copolymer::rng::stream_rng;
use copolymer::spectral::{delta_of_b, free_energy, gamma_kernel, log_perron_second_differences, mean_mu, perron};
use copolymer::walk::{return_law, ReturnLaw, WalkModel};
use copolymer::{ChargeSet, KernelBundle, SpectralData};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

const RESIDUAL_TOL: f64 = 1e-10;

fn law() -> ReturnLaw<f64> {
    return_law(&WalkModel::new(0.3).unwrap(), 100_000).unwrap()
}

fn setup(c: ChargeSet<f64>, r: &ReturnLaw<f64>) -> (KernelBundle<f64>, SpectralData<f64>) {
    let b = build_bundle(&c.canonicalize(), r, 100_000).unwrap();
    let s = free_energy(&b).unwrap();
    (b, s)
}

fn dense_spectral_radius(q: &SquareMatrix<f64>) -> f64 {
    let n = q.dim();
    let m = DMatrix::from_fn(n, n, |i, j| q[(i, j)]);
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn max_residual(q: &SquareMatrix<f64>, value: f64, left: &[f64], right: &[f64]) -> f64 {
    let qr = q.mul_vec(right);
    let lq = q.vec_mul(left);
    let r = qr.iter().zip(right).map(|(a, b)| (a - value * b).abs());
    let l = lq.iter().zip(left).map(|(a, b)| (a - value * b).abs());
    r.chain(l).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn perron_matches_dense_eigensolver(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let q = SquareMatrix::from_fn(n, |_, _| rng.gen_range(0.01..2.0));
        let pair = perron(&q).unwrap();
        prop_assert!((pair.value - dense_spectral_radius(&q)).abs() <= RESIDUAL_TOL * pair.value.max(1.0));
        prop_assert!(max_residual(&q, pair.value, &pair.left, &pair.right) <= RESIDUAL_TOL);
        prop_assert!(pair.left.iter().chain(&pair.right).all(|&v| v > 0.0));
        let inner: f64 = pair.left.iter().zip(&pair.right).map(|(a, b)| a * b).sum();
        prop_assert!((inner - 1.0).abs() < 1e-12);
        prop_assert!((pair.right.iter().sum::<f64>() - n as f64).abs() < 1e-12);
    }

    #[test]
    fn perron_root_increases_with_each_entry(n in 2usize..=5, seed in any::<u64>(), bump in 1e-3f64..0.5) {
        let mut rng = stream_rng(seed, 1);
        let q = SquareMatrix::from_fn(n, |_, _| rng.gen_range(0.01..1.0));
        let base = perron(&q).unwrap().value;
        for i in 0..n {
            for j in 0..n {
                let mut up = q.clone();
                up[(i, j)] += bump;
                prop_assert!(perron(&up).unwrap().value > base);
            }
        }
    }
}

#[test]
fn tilted_eigenvectors_are_fixed_points() {
    let r = law();
    let mut rng = stream_rng(3, 0);
    let mut sets = vec![ChargeSet::pinning(vec![0.4]).unwrap(), ChargeSet::copolymer(vec![1.0, -1.0]).unwrap(), common::mixed_charges()];
    sets.extend((0..6).map(|_| {
        let t = rng.gen_range(1..=5);
        common::random_charges(&mut rng, t, 1.0)
    }));
    for c in sets {
        let (b, s) = setup(c, &r);
        let a = b.tilted_matrix(s.f);
        let res = max_residual(&a, if s.f > 0.0 { 1.0 } else { s.delta }, &s.zeta, &s.xi);
        assert!(res <= RESIDUAL_TOL, "residual {res:e}");
        assert!(s.zeta.iter().chain(&s.xi).all(|&v| v > 0.0));
        let norm: f64 = s.nu.iter().sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(s.f > 0.0, s.delta > 1.0 + s.eps_crit);
    }
}

#[test]
fn tilted_root_decreases_in_the_tilt() {
    let r = law();
    for c in [ChargeSet::pinning(vec![0.4]).unwrap(), common::mixed_charges()] {
        let (b, s) = setup(c, &r);
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let values: Vec<f64> = grid.iter().map(|&x| delta_of_b(&b, x).unwrap()).collect();
        assert!((values[0] - s.delta).abs() < 1e-12);
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }
    let (b, _) = setup(ChargeSet::pinning(vec![0.4]).unwrap(), &r);
    assert!(delta_of_b(&b, 40.0).unwrap() < 1e-15);
}

#[test]
fn scalar_localized_free_energy() {
    let r = law();
    let (b, s) = setup(ChargeSet::pinning(vec![0.4]).unwrap(), &r);
    assert!((s.delta - 0.4f64.exp()).abs() < 1e-8);
    // Root of Σ_x e^{0.4 − F x} K(x) = 1 by bisection on the raw kernel.
    let g = |f: f64| (1..=100_000).map(|x| (0.4 - f * x as f64).exp() * r.k(x)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 { lo = mid } else { hi = mid }
    }
    assert!((s.f - lo).abs() < 1e-12, "{} vs {lo}", s.f);
    let mu = mean_mu(&s, &b).unwrap();
    let direct: f64 = (1..=100_000).map(|x| x as f64 * (0.4 - s.f * x as f64).exp() * r.k(x)).sum();
    assert!((mu / direct - 1.0).abs() < 1e-10);
    let gamma = gamma_kernel(&s, &b).unwrap();
    let mass: f64 = (1..=100_000).map(|x| gamma.at(0, x)).sum::<f64>() + gamma.deficit(0);
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn mean_is_minus_the_tilt_derivative() {
    let r = law();
    for c in [ChargeSet::pinning(vec![0.4]).unwrap(), ChargeSet::copolymer(vec![1.0, -1.0]).unwrap(), ChargeSet::pinning(vec![0.3, -0.2, 0.5]).unwrap()] {
        let (b, s) = setup(c, &r);
        // The third derivative grows like F^{-3/2}, so the step shrinks with F.
        let h = (1e-3 * s.f).min(1e-5);
        let fd = -(delta_of_b(&b, s.f + h).unwrap() - delta_of_b(&b, s.f - h).unwrap()) / (2.0 * h);
        let mu = mean_mu(&s, &b).unwrap();
        assert!((mu / fd - 1.0).abs() < 1e-6, "μ = {mu}, finite difference {fd}");
    }
    let (b, s) = setup(ChargeSet::zeros(2).unwrap(), &r);
    assert_eq!(mean_mu(&s, &b).unwrap(), f64::INFINITY);
    let (b, s) = setup(ChargeSet::pinning(vec![-0.4]).unwrap(), &r);
    assert!(mean_mu(&s, &b).is_err());
}

#[test]
fn normalization_is_immaterial() {
    let r = law();
    let critical = {
        let minus = vec![1.0, -1.0];
        let (_, s) = setup(ChargeSet::copolymer(minus.clone()).unwrap(), &r);
        ChargeSet::new(vec![0.0; 2], minus, vec![-s.delta.ln(); 2], vec![0.0; 2]).unwrap()
    };
    for c in [ChargeSet::pinning(vec![0.4]).unwrap(), common::mixed_charges(), ChargeSet::pinning(vec![-0.4, 0.1]).unwrap(), critical] {
        let (b, s) = setup(c, &r);
        let scaled = s.rescaled(7.0);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0));
        let (r0, r7) = (constants(&s, &b).unwrap(), constants(&scaled, &b).unwrap());
        for (a, z) in [(r0.c_gt, r7.c_gt), (r0.c_gt_f, r7.c_gt_f), (r0.c_eq, r7.c_eq), (r0.c_eq_f, r7.c_eq_f), (r0.c_lt, r7.c_lt), (r0.c_lt_f, r7.c_lt_f)] {
            assert_eq!(a.is_some(), z.is_some());
            if let (Some(a), Some(z)) = (a, z) {
                assert!(close(&a, &z), "{a:?} vs {z:?}");
            }
        }
        assert!(close(&s.nu, &scaled.nu));
        if !s.is_delocalized() {
            let (m0, m7) = (mean_mu(&s, &b).unwrap(), mean_mu(&scaled, &b).unwrap());
            assert!(m0 == m7 || (m0 - m7).abs() <= 1e-12 * m0);
            let (g0, g7) = (gamma_kernel(&s, &b).unwrap(), gamma_kernel(&scaled, &b).unwrap());
            for a in 0..b.period() {
                assert!(close(g0.row(a), g7.row(a)));
            }
        }
        if !s.is_localized() {
            let (k0, k7) = (sign_constants(&s, &b).unwrap(), sign_constants(&scaled, &b).unwrap());
            assert!(close(&k0.values(), &k7.values()));
        }
    }
}

#[test]
fn interpolated_root_is_log_convex() {
    let r = law();
    let mut rng = stream_rng(5, 0);
    for _ in 0..10 {
        let t = [2, 3, 4, 6][rng.gen_range(0..4)];
        let c = common::random_copolymer(&mut rng, t);
        let canonical = c.canonicalize();
        let b = build_bundle(&canonical, &r, 100_000).unwrap();
        let (q, w) = interpolation_inputs(&canonical, &b);
        let grid: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
        let d2 = log_perron_second_differences(|x| interpolation_matrix(&q, &w, x), &grid).unwrap();
        assert!(d2.iter().all(|&d| d >= -1e-9), "{d2:?}");
    }
}

#[test]
fn single_precision_smoke() {
    let r = return_law(&WalkModel::<f32>::new(0.3).unwrap(), 20_000).unwrap();
    let c = ChargeSet::<f32>::pinning(vec![0.4]).unwrap().canonicalize();
    let b = build_bundle(&c, &r, 20_000).unwrap();
    let s = free_energy(&b).unwrap();
    assert!((s.delta - 0.4f32.exp()).abs() < 1e-3);
    let (_, s64) = setup(ChargeSet::pinning(vec![0.4]).unwrap(), &law());
    assert!((s.f as f64 - s64.f).abs() < 1e-4, "{} vs {}", s.f, s64.f);
}
