use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("singular solve: pivot {pivot:.3e} at row {row} (z = {z})")]
    SingularSolve { z: Complex64, row: usize, pivot: f64 },
    #[error("z = {z} lies on the spectrum (|phi| = {abs_phi:.3e})")]
    AtSpectrum { z: Complex64, abs_phi: f64 },
    #[error("operation requires the canonical integration operator")]
    UnsupportedKind,
    #[error("vectors live on different grids")]
    GridMismatch,
    #[error("incompatible pair: smallest singular value of K is {0:.3e}")]
    Incompatible(f64),
    #[error("zero on contour: edge nudging failed near {0}")]
    ZeroOnContour(Complex64),
    #[error("real zero found at {0}")]
    RealZeroFound(Complex64),
    #[error("multiple zero: zeros {0} and {1} are closer than the simplicity margin")]
    MultipleZero(Complex64, Complex64),
    #[error("zero count mismatch: winding number {winding}, refined zeros {found}")]
    CountMismatch { winding: i64, found: usize },
    #[error("Newton refinement failed near {0}")]
    NewtonFailed(Complex64),
    #[error("indicator fit overflow: |phi| not representable at radius {0}")]
    OverflowGuard(f64),
    #[error("insufficient spectrum: {found} zeros inside the cut, need {needed}")]
    InsufficientSpectrum { found: usize, needed: usize },
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("spectrum touches the real line at {0}")]
    SpectrumTouchesLine(Complex64),
    #[error("nonpositive weight value {value:.3e} at x = {x}")]
    NonpositiveWeight { x: f64, value: f64 },
    #[error("points lie in both half-planes")]
    MixedHalfPlanes,
    #[error("point {0} lies on the real axis")]
    PointOnAxis(Complex64),
    #[error("degenerate Gram matrix: smallest eigenvalue {0:.3e}")]
    DegenerateGram(f64),
    #[error("|phi'| = {value:.3e} at {at} is below the simple-zero threshold")]
    DerivativeTooSmall { at: Complex64, value: f64 },
    #[error("probe {0} is too close to the spectrum")]
    ProbeAtSpectrum(Complex64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
