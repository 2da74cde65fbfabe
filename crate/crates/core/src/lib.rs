//! Quadratic bosonic sensing toolkit.

pub mod error;
pub mod expm;
pub mod fock;
pub mod model;
pub mod propagator;
pub mod qfi;
pub mod quadrature;
pub mod spectral;

pub use error::CoreError;
pub use propagator::Propagator;
pub use fock::{DenseState, FockBasis};
pub use qfi::{BatchPoint, CoefficientSet, CoherentState, SuperpositionState};
pub use spectral::{
    bkc_edge_response_roots, ep_order, fit_power_law, fit_semilog, qfi_time_exponent,
    qfi_time_series, size_scaling_fit, size_scaling_series, spectrum, spectrum_response,
    EpReport, FitResult,
    SpectrumReport, SpectrumResponse,
};
pub use model::{
    build_dynamical_matrix, block_diagonalize, partial_derivative, validate_symmetries,
    Block, CoefficientSchedule, DynamicalMatrix, ModelSpec, ParamBinding, QuadraticModel,
    Stencil, SymmetryReport,
};

pub type C64 = num_complex::Complex64;
pub type CMat = ndarray::Array2<C64>;
pub type CVec = ndarray::Array1<C64>;

/// Largest entry magnitude tolerated in any propagator or coefficient
/// matrix before the computation aborts with a range error.
pub const OVERFLOW_GUARD: f64 = 1e150;
