//! Robust stability certification for networks of interconnected uncertain
//! LTI systems.
//!
//! The analysis models every subsystem as a linear-fractional interconnection
//! of a known transfer matrix with a structured uncertainty, and the network
//! wiring as a 0-1 routing matrix. Both the uncertainties and the wiring are
//! abstracted by integral quadratic constraints, which turns the robust
//! stability test at each frequency into a structured matrix inequality that
//! inherits the sparsity of the interconnection. The sparse inequality is
//! chordally decomposed into small coupled blocks along a clique tree and can
//! be solved either centrally or by simulated consensus ADMM in which each
//! clique agent talks only to its tree neighbours.
//!
//! Modules follow the pipeline:
//!
//! * [`netmodel`] — subsystems, interconnection matrix, frequency responses,
//!   lumped system, chain generator.
//! * [`iqc`] — multiplier library for the supported uncertainty classes and
//!   the interconnection multiplier.
//! * [`lmi`] — Hermitian affine forms, the sparse and lumped analysis
//!   inequalities, congruence identities, real embeddings.
//! * [`chordal`] — chordal embeddings, maximal cliques, clique trees,
//!   clique merging.
//! * [`decomp`] — clique-local splitting with consensus variables.
//! * [`solver`] — symmetric eigensolver, NSD projection, centralized and
//!   distributed feasibility solvers.
//! * [`analysis`] — frequency gridding and end-to-end verdict aggregation.
//! * [`netfile`] — the text network-description format used by the CLI.

pub mod analysis;
pub mod chordal;
pub mod decomp;
pub mod iqc;
pub mod lmi;
pub mod netfile;
pub mod netmodel;
pub mod solver;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state matrix is not Hurwitz (max eigenvalue real part {max_re:.3e})")]
    NotHurwitz { max_re: f64 },
    #[error("interconnection is not well posed at omega = {omega}: condition estimate {cond:.3e}")]
    IllPosed { omega: f64, cond: f64 },
    #[error("invalid interconnection block: {0}")]
    Interconnection(String),
    #[error("unsupported uncertainty description: {0}")]
    Uncertainty(String),
    #[error("chain generator requires N >= 2 (got {0})")]
    ChainTooShort(usize),
    #[error("no frequency sample stored at omega = {0}")]
    MissingSample(f64),
    #[error("graph is not chordal under the supplied ordering")]
    NotChordal,
    #[error("matrix entry ({row},{col}) is not covered by any clique")]
    UncoveredEntry { row: usize, col: usize },
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout the frequency-domain code.
pub type C64 = num_complex::Complex<f64>;
