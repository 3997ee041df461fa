//! Renewal-theory machinery for a periodic copolymer near a selective
//! interface with adsorption.
//!
//! The deterministic core is generic over the floating-point type (see
//! [`Scalar`]); the `*F64` aliases below fix it to `f64`, which is what the
//! Monte Carlo layer and the CLI use.

pub mod asymptotics;
pub mod charges;
pub mod error;
pub mod kernel;
pub mod numeric;
pub mod partition;
pub mod polymer;
pub mod renewal;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod stats;
pub mod walk;

use serde::{Deserialize, Serialize};

pub use asymptotics::{classify, constants, Regime, RegimeReport};
pub use charges::{ChargeSet, Residue, SigmaMatrix};
pub use error::{Error, Result};
pub use kernel::{build_bundle, KernelBundle};
pub use partition::{build_tables, PartitionTable};
pub use spectral::{free_energy, SemiMarkovKernel, SpectralData};
pub use numeric::SquareMatrix;
pub use polymer::{PathMode, PolymerSample, PolymerSampler};
pub use scalar::Scalar;
pub use walk::{ReturnLaw, WalkModel};

/// Whether the path is pinned to the interface at its last monomer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Constrained,
    Free,
}

pub type ChargeSetF64 = ChargeSet<f64>;
pub type WalkModelF64 = WalkModel<f64>;
pub type ReturnLawF64 = ReturnLaw<f64>;
pub type KernelBundleF64 = KernelBundle<f64>;
pub type SpectralDataF64 = SpectralData<f64>;
pub type SemiMarkovKernelF64 = SemiMarkovKernel<f64>;
pub type PartitionTableF64 = PartitionTable<f64>;
pub type RegimeReportF64 = RegimeReport<f64>;
