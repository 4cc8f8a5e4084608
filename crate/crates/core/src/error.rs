use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the analysis pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model definition: {0}")]
    ModelDefinition(String),

    #[error("non-finite {what} entry at row {row} (node `{node}`)")]
    NonFinite {
        what: &'static str,
        row: usize,
        node: String,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("PSS did not converge after {iterations} Newton iterations (final defect {defect:.3e})")]
    NoConvergence { iterations: usize, defect: f64 },

    #[error("degenerate PSS: period collapsed to {period:.3e} s")]
    DegenerateSolution { period: f64 },

    #[error("implicit step failed at time index {index}: {reason}")]
    StepFailure { index: usize, reason: String },

    #[error("singular linear solve at time index {index}")]
    RankDeficient { index: usize },

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("degenerate Floquet spectrum: multipliers {a} and {b} collide within pairing tolerance {tol:.1e}")]
    DegenerateSpectrum {
        a: num_complex::Complex64,
        b: num_complex::Complex64,
        tol: f64,
    },

    #[error("Floquet consistency: {0}")]
    FloquetConsistency(String),

    #[error("only {found} relevant Floquet modes retained but a {k}-ensemble needs at least {k}")]
    TooFewModes { found: usize, k: usize },

    #[error("harmonic truncation Nf={nf} aliases on a grid of {grid} samples (need grid >= 4*Nf)")]
    Aliasing { nf: usize, grid: usize },

    #[error("node `{node}` has no harmonic-{nu} content (power {power:.3e}); spectrum undefined there")]
    DeadNode { node: String, nu: usize, power: f64 },

    #[error("resonant denominator in noise operator (mode {mode}, harmonic {harmonic})")]
    ResonantDenominator { mode: usize, harmonic: i64 },

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("Monte-Carlo path {path} diverged at t = {time:.3e} s; reduce dt")]
    PathDiverged { path: usize, time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
