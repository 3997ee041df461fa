//! Periodic charge sequences, the canonical shift, and the derived drift `h`
//! and fluctuation matrix `Σ`.
//!
//! Every array lists one period of charges in chain order: element `i` is the
//! charge of monomer `i + 1`. Monomer `n` therefore belongs to residue
//! `n mod T` and reads element `(n - 1) mod T`.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, Result};
use crate::numeric::SquareMatrix;
use crate::scalar::{from_usize, lit, Scalar};

/// Element of `Z/TZ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Residue {
    value: usize,
    modulus: usize,
}

impl Residue {
    /// Reduces `value` modulo `modulus`.
    pub fn new(value: usize, modulus: usize) -> Self {
        assert!(modulus > 0, "modulus must be positive");
        Self { value: value % modulus, modulus }
    }

    pub fn of_signed(value: i64, modulus: usize) -> Self {
        let m = modulus as i64;
        Self::new(value.rem_euclid(m) as usize, modulus)
    }

    pub fn value(self) -> usize {
        self.value
    }

    pub fn modulus(self) -> usize {
        self.modulus
    }
}

impl Add for Residue {
    type Output = Residue;
    fn add(self, rhs: Residue) -> Residue {
        debug_assert_eq!(self.modulus, rhs.modulus);
        Residue::new(self.value + rhs.value, self.modulus)
    }
}

impl Sub for Residue {
    type Output = Residue;
    fn sub(self, rhs: Residue) -> Residue {
        debug_assert_eq!(self.modulus, rhs.modulus);
        Residue::new(self.value + self.modulus - rhs.value, self.modulus)
    }
}

/// Absolute tolerance for deciding `h = 0` and `Σ ≡ 0`.
pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct ChargeSet<S = f64> {
    period: usize,
    omega_plus: Vec<S>,
    omega_minus: Vec<S>,
    omega_zero: Vec<S>,
    omega_zero_tilde: Vec<S>,
    canonical: bool,
    mirrored: bool,
}

impl<S: Scalar> ChargeSet<S> {
    /// Raw (non-canonical) charges.
    pub fn new(
        omega_plus: Vec<S>,
        omega_minus: Vec<S>,
        omega_zero: Vec<S>,
        omega_zero_tilde: Vec<S>,
    ) -> Result<Self> {
        let period = omega_plus.len();
        if period == 0 {
            return invalid_input("charge arrays must be non-empty");
        }
        for (name, arr) in [("omega_minus", &omega_minus), ("omega_zero", &omega_zero), ("omega_zero_tilde", &omega_zero_tilde)] {
            if arr.len() != period {
                return invalid_input(format!("{name} has length {}, expected {period}", arr.len()));
            }
        }
        if [&omega_plus, &omega_minus, &omega_zero, &omega_zero_tilde].iter().any(|a| a.iter().any(|x| !x.is_finite())) {
            return invalid_input("charges must be finite");
        }
        Ok(Self { period, omega_plus, omega_minus, omega_zero, omega_zero_tilde, canonical: false, mirrored: false })
    }

    /// All-zero charges with period `t`.
    pub fn zeros(t: usize) -> Result<Self> {
        let z = vec![S::zero(); t];
        Self::new(z.clone(), z.clone(), z.clone(), z)
    }

    /// Pure pinning charges: only the interface reward `ω⁰` is nonzero.
    pub fn pinning(omega_zero: Vec<S>) -> Result<Self> {
        let z = vec![S::zero(); omega_zero.len()];
        Self::new(z.clone(), z.clone(), omega_zero, z)
    }

    /// Copolymer charges already in canonical form: only the below-interface
    /// charge is nonzero.
    pub fn copolymer(omega_minus: Vec<S>) -> Result<Self> {
        let z = vec![S::zero(); omega_minus.len()];
        Self::new(z.clone(), omega_minus, z.clone(), z)
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    /// Whether canonicalization exchanged the roles of the two half-planes.
    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    pub fn omega_plus(&self) -> &[S] {
        &self.omega_plus
    }

    pub fn omega_minus(&self) -> &[S] {
        &self.omega_minus
    }

    pub fn omega_zero(&self) -> &[S] {
        &self.omega_zero
    }

    pub fn omega_zero_tilde(&self) -> &[S] {
        &self.omega_zero_tilde
    }

    #[inline]
    fn slot(&self, n: usize) -> usize {
        (n + self.period - 1) % self.period
    }

    /// Charge of monomer `n ≥ 1` (or of residue class `n mod T`).
    #[inline]
    pub fn plus_at(&self, n: usize) -> S {
        self.omega_plus[self.slot(n)]
    }

    #[inline]
    pub fn minus_at(&self, n: usize) -> S {
        self.omega_minus[self.slot(n)]
    }

    #[inline]
    pub fn zero_at(&self, n: usize) -> S {
        self.omega_zero[self.slot(n)]
    }

    #[inline]
    pub fn zero_tilde_at(&self, n: usize) -> S {
        self.omega_zero_tilde[self.slot(n)]
    }

    /// The charges seen from monomer `k` on: monomer `n` of the result is
    /// monomer `n + k` of `self`.
    pub fn shifted(&self, k: usize) -> Self {
        let rot = |a: &[S]| (1..=self.period).map(|n| a[self.slot(n + k)]).collect::<Vec<_>>();
        Self {
            period: self.period,
            omega_plus: rot(&self.omega_plus),
            omega_minus: rot(&self.omega_minus),
            omega_zero: rot(&self.omega_zero),
            omega_zero_tilde: rot(&self.omega_zero_tilde),
            canonical: self.canonical,
            mirrored: self.mirrored,
        }
    }

    fn raw_drift(&self) -> S {
        let sum: S = self.omega_plus.iter().zip(&self.omega_minus).map(|(&p, &m)| p - m).sum();
        sum / from_usize(self.period)
    }

    /// `Σ_{m=1}^{n}` of the charge that canonicalization subtracts: the
    /// logarithmic ratio between raw and canonical partition functions.
    pub fn partition_offset(&self, n: usize) -> S {
        let subtracted = if self.raw_drift() < -lit::<S>(DEFAULT_ZERO_TOL) { &self.omega_minus } else { &self.omega_plus };
        (1..=n).map(|m| subtracted[self.slot(m)]).sum()
    }

    /// Sign-symmetric shift to `ω⁺ ≡ 0` with nonnegative drift.
    pub fn canonicalize(&self) -> Self {
        if self.canonical {
            return self.clone();
        }
        let mirror = self.raw_drift() < -lit::<S>(DEFAULT_ZERO_TOL);
        let (plus, minus) = if mirror { (&self.omega_minus, &self.omega_plus) } else { (&self.omega_plus, &self.omega_minus) };
        let minus = minus.iter().zip(plus).map(|(&m, &p)| m - p).collect();
        let tilde = self.omega_zero_tilde.iter().zip(plus).map(|(&t, &p)| t - p).collect();
        Self {
            period: self.period,
            omega_plus: vec![S::zero(); self.period],
            omega_minus: minus,
            omega_zero: self.omega_zero.clone(),
            omega_zero_tilde: tilde,
            canonical: true,
            mirrored: mirror,
        }
    }

    /// Mean drift `(1/T) Σ_n (ω⁺_n − ω⁻_n)`.
    pub fn drift(&self) -> S {
        self.raw_drift()
    }

    /// `Σ_{[n1],[n2]}` evaluated on the representatives `n1 = alpha`,
    /// `n2 ∈ [alpha, alpha + T)`.
    pub fn sigma_entry(&self, alpha: usize, beta: usize) -> S {
        let t = self.period;
        let (a, b) = (alpha % t, beta % t);
        let n2 = if b >= a { b } else { b + t };
        let h = self.drift();
        let partial: S = ((a + 1)..=n2).map(|n| self.minus_at(n) - self.plus_at(n)).sum();
        partial + from_usize::<S>(n2 - a) * h
    }

    pub fn sigma(&self) -> SigmaMatrix<S> {
        let t = self.period;
        SigmaMatrix {
            matrix: SquareMatrix::from_fn(t, |a, b| self.sigma_entry(a, b)),
            potential: (0..t).map(|b| self.sigma_entry(0, b)).collect(),
        }
    }

    /// `h = 0` within the absolute tolerance.
    pub fn is_balanced(&self, tol: S) -> bool {
        self.drift().abs() <= tol
    }

    /// Membership in the family of charges with `δ ≤ 1`, `h = 0` and a
    /// nontrivial fluctuation matrix.
    pub fn in_p(&self, delta: S, tol: S) -> bool {
        let sigma = self.sigma();
        let nontrivial = (0..self.period).any(|a| (0..self.period).any(|b| sigma.matrix[(a, b)].abs() > tol));
        delta <= S::one() + lit(crate::spectral::DEFAULT_EPS_CRIT) && self.is_balanced(tol) && nontrivial
    }
}

/// `compute_h`: the drift of (canonical) charges.
pub fn compute_h<S: Scalar>(c: &ChargeSet<S>) -> S {
    c.drift()
}

pub fn compute_sigma<S: Scalar>(c: &ChargeSet<S>) -> SigmaMatrix<S> {
    c.sigma()
}

pub fn canonicalize<S: Scalar>(raw: &ChargeSet<S>) -> ChargeSet<S> {
    raw.canonicalize()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMatrix<S> {
    pub matrix: SquareMatrix<S>,
    /// `v_α = Σ_{[0],α}`, so that `Σ_{α,β} = v_β − v_α`.
    pub potential: Vec<S>,
}
