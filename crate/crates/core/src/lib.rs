//! Numerical laboratory for Z₂ twist-operator indices of one-dimensional
//! interacting fermion chains.
//!
//! The crate builds dimerized tight-binding chains (SSH-type models, their
//! interacting and disordered extensions, and electron variants such as the
//! Hubbard chain with SSH hopping), computes gapped ground states in fixed
//! particle-number sectors by exact diagonalization, and evaluates
//! ground-state expectation values of local twist (flux-insertion) operators.
//! The sign of the real twist expectation yields a Z₂ index; the crate also
//! checks the unit-cell duality of that index, the variational energy bound
//! for twisted states, gapless edge excitations on half chains, and winding
//! numbers of the complex twist expectation along closed model paths.
//!
//! Module map:
//! - [`fock`]: occupation-number bases and bit-level operator actions,
//! - [`models`]: declarative Hamiltonian specifications and symmetry
//!   validation,
//! - [`solver`]: sector matrices, dense and Lanczos ground-state solves,
//! - [`twist`]: twist profiles, operators, index extraction, duality, edge
//!   and decoupling checks,
//! - [`quadratic`]: free-fermion fast path (single-particle spectra,
//!   correlation matrices, determinant formula, Zak phase),
//! - [`scan`]: parameter sweeps, disorder ensembles, winding numbers,
//! - [`oracle`]: brute-force dense reference operators used by tests,
//! - [`report`]: the single serialization point for numerical output,
//! - [`cli`]: reproducible command-line runs.
//!
//! All numerical kernels are generic over the real scalar type through
//! [`Scalar`]; `f64` is the default backend and the concrete aliases at the
//! crate root refer to it.

pub mod cli;
pub mod fock;
pub mod models;
pub mod oracle;
pub mod quadratic;
pub mod report;
pub mod scan;
pub mod solver;
pub mod twist;

/// Real scalar abstraction for the numerical core: `f32` or `f64`.
///
/// `nalgebra::RealField` supplies the dense linear algebra, `FromPrimitive`
/// the conversion from literal constants. Serde bounds stay on the data
/// types, so the trait itself carries no serialization machinery.
pub trait Scalar:
    nalgebra::RealField
    + num_traits::FromPrimitive
    + Copy
    + Default
    + std::iter::Sum
    + Send
    + Sync
    + serde::Serialize
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    /// Round-trip to `f64` for formatting and coarse comparisons.
    fn to_f64_lossy(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Complex number over the generic scalar.
pub type Cx<S> = num_complex::Complex<S>;

/// Unit complex phase `e^{iφ}`.
pub fn unit_phase<S: Scalar>(phi: S) -> Cx<S> {
    Cx::new(phi.cos(), phi.sin())
}

/// Modulus of a complex number over the generic scalar.
pub fn cx_abs<S: Scalar>(z: Cx<S>) -> S {
    z.norm_sqr().sqrt()
}

/// Crate-wide error taxonomy. The CLI maps these onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("symmetry error: {0}")]
    Symmetry(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("resource error: {0}")]
    Resource(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

// Concrete f64 backend aliases.
pub type ModelSpec64 = models::ModelSpec<f64>;
pub type SectorMatrix64 = solver::SectorMatrix<f64>;
pub type GroundState64 = solver::GroundStateResult<f64>;
pub type TwistProfile64 = twist::TwistProfile<f64>;
pub type TwistOperator64 = twist::TwistOperator<f64>;
pub type IndexReport64 = twist::IndexReport<f64>;
