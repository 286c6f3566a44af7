use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Numerical operations fail loudly rather than
/// returning poisoned values; simulation-level early stops are *not* errors
/// (see `dynamics::Stopping`).
#[derive(Debug, Error)]
pub enum Error {
    /// A point was asked to pass through the interior of a removed slit.
    #[error("point lies on the removed slit segment (map index {index})")]
    InsideSlit { index: usize },

    /// Probe values taken at different angles disagree; the map is not
    /// hydrodynamically normalised to the requested accuracy.
    #[error("capacity probes disagree: spread {spread:.3e} exceeds tolerance {tol:.3e}")]
    ProbeDisagreement { spread: f64, tol: f64 },

    /// First derivative too small to divide by in a Schwarzian.
    #[error("derivative {value:.3e} too close to zero for a stable Schwarzian")]
    SingularDerivative { value: f64 },

    #[error("kappa must be positive and finite, got {0}")]
    InvalidKappa(f64),

    /// Boundary positions must stay strictly increasing.
    #[error("positions are not strictly increasing")]
    ChamberViolation,

    /// A Möbius map reversed or collapsed the ordering of the positions.
    #[error("map does not preserve the ordering of the positions")]
    OrderingBroken,

    /// Two driving positions came closer than the collapse floor. Simulation
    /// loops convert this into a stopped path rather than a failure.
    #[error("gap at index {index} collapsed below the floor at time {time}")]
    GapCollapsed { index: usize, time: f64 },

    #[error("map has a pole at position index {index}")]
    PoleOnPosition { index: usize },

    /// Tabulated partition function could not be differentiated (non-positive
    /// value at a stencil point).
    #[error("partition function non-positive at a stencil point")]
    DerivativeUnavailable,

    /// A nested finite-difference stencil would cross a chamber wall.
    #[error("stencil spacing {step:.3e} crosses the chamber wall (gap {gap:.3e})")]
    NestedStencilOverlap { step: f64, gap: f64 },

    /// Curves or hulls too close for reliable boundary derivatives.
    #[error("separation {gap:.3e} below reliability margin {margin:.3e}")]
    DerivativeUnreliable { gap: f64, margin: f64 },

    /// Weight requested for a partition function that does not satisfy the
    /// null-vector equation at the initial configuration.
    #[error("null-vector residual {residual:.3e} too large for this weight")]
    NveViolated { residual: f64 },

    /// The conditioning hull overlaps the reliability margin of the driving
    /// point already at the start of the path.
    #[error("hull base inside the reliability margin at the initial configuration")]
    HullHit,

    /// Chain inversion failed while lifting a trace point.
    #[error("trace inversion failed at sample {index}: lift too small")]
    TraceLift { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
