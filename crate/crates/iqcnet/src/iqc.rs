//! Multiplier library for the supported uncertainty classes.
//!
//! Each uncertainty descriptor maps to a small family of Hermitian basis
//! matrices weighted by nonnegative decision variables. The shipped classes
//! are static (frequency-constant) but are handed out per grid point, so a
//! frequency-dependent class can slot in without touching the callers.
//! All parameterizations keep `Π11 ⪰ 0` and `Π22 ⪯ 0` for every admissible
//! variable value, which is what makes the scaled uncertainty family
//! `τΔ, τ ∈ [0,1]` satisfy the same constraint.

use nalgebra::DMatrix;

use crate::lmi::{HermitianAffineForm, SparseHermitian, VarCone};
use crate::{Error, Result, C64};

/// Structure of the interconnection scaling matrix `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XMode {
    /// `X = x I` with a single nonnegative variable.
    SharedScalar,
    /// `X = diag(x_1, …, x_m)`, one variable per interconnection input.
    Diagonal,
}

/// Supported uncertainty classes.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintyKind {
    /// LTI operator with gain bound `gamma`, scaled by a single multiplier
    /// variable over the whole channel.
    NormBoundedLtiScalar { gamma: f64 },
    /// Elementwise norm-bounded uncertainty on a `d`-wide channel with an
    /// independent diagonal scaling entry per coordinate.
    NormBoundedLtiFullBlock { gamma: f64 },
    /// Static nonlinearity in the sector `[alpha, beta]`. The sector must
    /// contain zero so the scaled family stays inside it.
    SectorBoundedStatic { alpha: f64, beta: f64 },
}

/// Uncertainty descriptor attached to one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyBlock {
    kind: UncertaintyKind,
    dim: usize,
}

impl UncertaintyBlock {
    pub fn norm_bounded_scalar(dim: usize, gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::Uncertainty(format!("gain bound must be positive, got {gamma}")));
        }
        Ok(Self { kind: UncertaintyKind::NormBoundedLtiScalar { gamma }, dim })
    }

    pub fn norm_bounded_full(dim: usize, gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::Uncertainty(format!("gain bound must be positive, got {gamma}")));
        }
        Ok(Self { kind: UncertaintyKind::NormBoundedLtiFullBlock { gamma }, dim })
    }

    pub fn sector(dim: usize, alpha: f64, beta: f64) -> Result<Self> {
        if alpha >= beta {
            return Err(Error::Uncertainty(format!("sector requires alpha < beta, got [{alpha}, {beta}]")));
        }
        Ok(Self { kind: UncertaintyKind::SectorBoundedStatic { alpha, beta }, dim })
    }

    pub fn kind(&self) -> &UncertaintyKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same class with the gain bound scaled by `factor` (sectors scale both
    /// endpoints). Used for feasibility sweeps.
    pub fn scaled_gain(&self, factor: f64) -> Result<Self> {
        match self.kind {
            UncertaintyKind::NormBoundedLtiScalar { gamma } => {
                Self::norm_bounded_scalar(self.dim, gamma * factor)
            }
            UncertaintyKind::NormBoundedLtiFullBlock { gamma } => {
                Self::norm_bounded_full(self.dim, gamma * factor)
            }
            UncertaintyKind::SectorBoundedStatic { alpha, beta } => {
                Self::sector(self.dim, alpha * factor, beta * factor)
            }
        }
    }
}

/// One Hermitian basis element of a multiplier parameterization, weighted by
/// a single decision variable.
#[derive(Debug, Clone)]
pub struct MultiplierBasis {
    p11: DMatrix<C64>,
    p12: DMatrix<C64>,
    p22: DMatrix<C64>,
    cone: VarCone,
}

impl MultiplierBasis {
    pub fn p11(&self) -> &DMatrix<C64> {
        &self.p11
    }
    pub fn p12(&self) -> &DMatrix<C64> {
        &self.p12
    }
    pub fn p22(&self) -> &DMatrix<C64> {
        &self.p22
    }
    pub fn cone(&self) -> VarCone {
        self.cone
    }

    /// The full `2d × 2d` matrix `[Π11 Π12; Π12^* Π22]`.
    pub fn full_matrix(&self) -> DMatrix<C64> {
        let d = self.p11.nrows();
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&self.p11);
        m.view_mut((0, d), (d, d)).copy_from(&self.p12);
        m.view_mut((d, 0), (d, d)).copy_from(&self.p12.adjoint());
        m.view_mut((d, d), (d, d)).copy_from(&self.p22);
        m
    }
}

/// Multiplier parameterization of one uncertainty block at one frequency.
#[derive(Debug, Clone)]
pub struct MultiplierParam {
    dim: usize,
    bases: Vec<MultiplierBasis>,
}

impl MultiplierParam {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn bases(&self) -> &[MultiplierBasis] {
        &self.bases
    }

    /// Evaluated `2d × 2d` multiplier at the given variable values.
    pub fn eval(&self, values: &[f64]) -> DMatrix<C64> {
        assert_eq!(values.len(), self.bases.len());
        let mut m = DMatrix::zeros(2 * self.dim, 2 * self.dim);
        for (basis, &v) in self.bases.iter().zip(values) {
            m += basis.full_matrix() * C64::new(v, 0.0);
        }
        m
    }
}

fn cplx_eye(d: usize, scale: f64) -> DMatrix<C64> {
    DMatrix::from_diagonal_element(d, d, C64::new(scale, 0.0))
}

/// Multiplier parameterization for a supported uncertainty block.
///
/// The classes are static, so `omega` only selects the grid point the
/// returned parameterization belongs to.
pub fn multiplier_for(block: &UncertaintyBlock, _omega: f64) -> Result<MultiplierParam> {
    let d = block.dim();
    let bases = match *block.kind() {
        UncertaintyKind::NormBoundedLtiScalar { gamma } => vec![MultiplierBasis {
            p11: cplx_eye(d, gamma * gamma),
            p12: DMatrix::zeros(d, d),
            p22: cplx_eye(d, -1.0),
            cone: VarCone::Nonnegative,
        }],
        UncertaintyKind::NormBoundedLtiFullBlock { gamma } => (0..d)
            .map(|k| {
                let mut p11 = DMatrix::zeros(d, d);
                p11[(k, k)] = C64::new(gamma * gamma, 0.0);
                let mut p22 = DMatrix::zeros(d, d);
                p22[(k, k)] = C64::new(-1.0, 0.0);
                MultiplierBasis { p11, p12: DMatrix::zeros(d, d), p22, cone: VarCone::Nonnegative }
            })
            .collect(),
        UncertaintyKind::SectorBoundedStatic { alpha, beta } => {
            if alpha > 0.0 || beta < 0.0 {
                return Err(Error::Uncertainty(format!(
                    "sector [{alpha}, {beta}] does not contain zero; the scaled family leaves it"
                )));
            }
            vec![MultiplierBasis {
                p11: cplx_eye(d, -alpha * beta),
                p12: cplx_eye(d, 0.5 * (alpha + beta)),
                p22: cplx_eye(d, -1.0),
                cone: VarCone::Nonnegative,
            }]
        }
    };
    Ok(MultiplierParam { dim: d, bases })
}

/// Assembles the structured network multiplier `Π̄` from per-subsystem
/// parameterizations.
///
/// The result is a Hermitian affine form of order `2 Σd` over the stacked
/// `(p, q)` index space in which `Π̄11`, `Π̄12` and `Π̄22` are block-diagonal
/// with the subsystem blocks in index order. Variables are numbered by
/// subsystem, then by basis element.
pub fn assemble_structured(params: &[MultiplierParam]) -> Result<HermitianAffineForm> {
    let sum_d: usize = params.iter().map(|p| p.dim()).sum();
    let var_count: usize = params.iter().map(|p| p.bases().len()).sum();
    let mut form = HermitianAffineForm::new(2 * sum_d, var_count);

    let mut var = 0usize;
    let mut offset = 0usize;
    for param in params {
        let d = param.dim();
        let idx: Vec<usize> = (0..d)
            .map(|k| offset + k)
            .chain((0..d).map(|k| sum_d + offset + k))
            .collect();
        for basis in param.bases() {
            if basis.full_matrix().nrows() != 2 * d {
                return Err(Error::Dimension("basis dimension mismatch".into()));
            }
            let mut coeff = SparseHermitian::zeros(2 * sum_d);
            coeff.scatter_principal(&idx, &basis.full_matrix());
            form.terms.push((var, coeff));
            form.var_cones[var] = basis.cone();
            var += 1;
        }
        offset += d;
    }
    Ok(form)
}

/// Interconnection multiplier `Π̂ = [-Γ^T X Γ, Γ^T X; X Γ, -X]` as an affine
/// form in the `X` entries, over the stacked `(z, w)` index space.
///
/// For any `(z, w)` the induced quadratic form is `-‖w - Γz‖²_X`: zero
/// exactly on the wiring constraint `w = Γz` and negative elsewhere whenever
/// `X ≻ 0`.
pub fn interconnection_multiplier(gamma: &DMatrix<f64>, x_mode: XMode) -> HermitianAffineForm {
    let (sum_m, sum_l) = (gamma.nrows(), gamma.ncols());
    let order = sum_l + sum_m;
    let n_x = if sum_m == 0 {
        0
    } else {
        match x_mode {
            XMode::SharedScalar => 1,
            XMode::Diagonal => sum_m,
        }
    };
    let mut form = HermitianAffineForm::new(order, n_x);
    if n_x == 0 {
        return form;
    }

    let mut coeffs: Vec<SparseHermitian> = match x_mode {
        XMode::SharedScalar => vec![SparseHermitian::zeros(order)],
        XMode::Diagonal => (0..sum_m).map(|_| SparseHermitian::zeros(order)).collect(),
    };
    for r in 0..sum_m {
        // -v v^T with v = [Γ^T e_r; -e_r]
        let mut v: Vec<(usize, f64)> = Vec::new();
        for c in 0..sum_l {
            if gamma[(r, c)] != 0.0 {
                v.push((c, gamma[(r, c)]));
            }
        }
        v.push((sum_l + r, -1.0));
        let target = match x_mode {
            XMode::SharedScalar => &mut coeffs[0],
            XMode::Diagonal => &mut coeffs[r],
        };
        for (a, va) in &v {
            for (b, vb) in &v {
                if a <= b {
                    target.add(*a, *b, C64::new(-va * vb, 0.0));
                }
            }
        }
    }
    for (k, coeff) in coeffs.into_iter().enumerate() {
        form.terms.push((k, coeff));
    }
    form
}
