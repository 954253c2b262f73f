//! Linear matrix inequality carriers and builders.
//!
//! Everything the feasibility engine consumes is a [`HermitianAffineForm`]:
//! a sparse affine map from a real decision vector to a Hermitian matrix.
//! The two builders assemble the per-frequency analysis inequalities — the
//! sparse interconnection-level form and the dense lumped-level form — and
//! [`realify`] embeds a complex form into a real symmetric one for the
//! solvers. [`congruence_transform`] reproduces the block identity that ties
//! the two forms together.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::iqc::{self, MultiplierParam, XMode};
use crate::netmodel::{assemble_blocks, lumped_from_response, Network, NetworkResponse};
use crate::{Error, Result, C64};

/// Admissible set of a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarCone {
    Nonnegative,
    Free,
}

/// Role of a decision variable in an analysis LMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Uncertainty-multiplier variable owned by one subsystem.
    Multiplier,
    /// Interconnection scaling variable (an entry of `X`).
    Interconnection,
}

/// Sparse Hermitian matrix; only the upper triangle is stored and diagonal
/// entries are kept exactly real. Exact zeros are never stored, so the
/// support doubles as the structural sparsity pattern.
#[derive(Debug, Clone, Default)]
pub struct SparseHermitian {
    order: usize,
    upper: BTreeMap<(usize, usize), C64>,
}

impl SparseHermitian {
    pub fn zeros(order: usize) -> Self {
        Self { order, upper: BTreeMap::new() }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nnz_upper(&self) -> usize {
        self.upper.len()
    }

    pub fn is_zero(&self) -> bool {
        self.upper.is_empty()
    }

    /// Adds `v` at `(r, c)` (and conjugate at `(c, r)`).
    pub fn add(&mut self, r: usize, c: usize, v: C64) {
        assert!(r < self.order && c < self.order);
        let (key, val) = if r <= c { ((r, c), v) } else { ((c, r), v.conj()) };
        let entry = self.upper.entry(key).or_insert(C64::new(0.0, 0.0));
        *entry += val;
        if key.0 == key.1 {
            entry.im = 0.0;
        }
        if entry.re == 0.0 && entry.im == 0.0 {
            self.upper.remove(&key);
        }
    }

    /// Scatters a dense Hermitian block onto the principal submatrix indexed
    /// by `idx`. The block is hermitized so roundoff asymmetry cannot leak
    /// into the stored triangle.
    pub fn scatter_principal(&mut self, idx: &[usize], block: &DMatrix<C64>) {
        debug_assert_eq!(block.nrows(), idx.len());
        debug_assert_eq!(block.ncols(), idx.len());
        for lr in 0..idx.len() {
            for lc in 0..idx.len() {
                if idx[lr] > idx[lc] {
                    continue;
                }
                let v = 0.5 * (block[(lr, lc)] + block[(lc, lr)].conj());
                if v.re != 0.0 || v.im != 0.0 {
                    self.add(idx[lr], idx[lc], v);
                }
            }
        }
    }

    /// Upper-triangle entries `((r, c), v)` with `r <= c` in sorted order.
    pub fn upper_entries(&self) -> impl Iterator<Item = (&(usize, usize), &C64)> {
        self.upper.iter()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        if r <= c {
            self.upper.get(&(r, c)).copied().unwrap_or(C64::new(0.0, 0.0))
        } else {
            self.upper.get(&(c, r)).map(|v| v.conj()).unwrap_or(C64::new(0.0, 0.0))
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.order, self.order);
        for (&(r, c), &v) in &self.upper {
            m[(r, c)] = v;
            if r != c {
                m[(c, r)] = v.conj();
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.values().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Restriction to a principal submatrix; `idx` must be sorted.
    pub fn restrict(&self, idx: &[usize]) -> SparseHermitian {
        let pos: BTreeMap<usize, usize> = idx.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let mut out = SparseHermitian::zeros(idx.len());
        for (&(r, c), &v) in &self.upper {
            if let (Some(&lr), Some(&lc)) = (pos.get(&r), pos.get(&c)) {
                out.add(lr, lc, v);
            }
        }
        out
    }
}

/// Sparse affine map `v ↦ K0 + Σ v_k K_k` into Hermitian matrices.
#[derive(Debug, Clone)]
pub struct HermitianAffineForm {
    pub order: usize,
    pub constant: SparseHermitian,
    /// `(var_index, coefficient)` pairs; a variable may appear at most once.
    pub terms: Vec<(usize, SparseHermitian)>,
    pub var_count: usize,
    pub var_cones: Vec<VarCone>,
}

impl HermitianAffineForm {
    pub fn new(order: usize, var_count: usize) -> Self {
        Self {
            order,
            constant: SparseHermitian::zeros(order),
            terms: Vec::new(),
            var_count,
            var_cones: vec![VarCone::Nonnegative; var_count],
        }
    }

    pub fn eval(&self, values: &[f64]) -> DMatrix<C64> {
        assert_eq!(values.len(), self.var_count, "variable vector length mismatch");
        let mut m = self.constant.to_dense();
        for (var, coeff) in &self.terms {
            let v = values[*var];
            if v == 0.0 {
                continue;
            }
            for (&(r, c), &e) in coeff.upper_entries() {
                m[(r, c)] += v * e;
                if r != c {
                    m[(c, r)] += v * e.conj();
                }
            }
        }
        m
    }

    /// Largest entry magnitude over the constant and every coefficient.
    pub fn coefficient_scale(&self) -> f64 {
        let mut s = self.constant.max_abs();
        for (_, coeff) in &self.terms {
            s = s.max(coeff.max_abs());
        }
        s
    }
}

/// Symmetric sparsity pattern with the diagonal always included.
#[derive(Debug, Clone)]
pub struct SparsityPattern {
    order: usize,
    /// Strictly-upper off-diagonal support.
    upper: BTreeSet<(usize, usize)>,
}

impl SparsityPattern {
    pub fn new(order: usize) -> Self {
        Self { order, upper: BTreeSet::new() }
    }

    /// Band pattern `|i - j| <= w`.
    pub fn band(order: usize, w: usize) -> Self {
        let mut p = Self::new(order);
        for i in 0..order {
            for j in (i + 1)..order.min(i + w + 1) {
                p.insert(i, j);
            }
        }
        p
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn insert(&mut self, r: usize, c: usize) {
        assert!(r < self.order && c < self.order);
        if r < c {
            self.upper.insert((r, c));
        } else if c < r {
            self.upper.insert((c, r));
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r == c || self.upper.contains(&(r.min(c), r.max(c))) && r < self.order
    }

    /// Strictly-upper pairs, sorted.
    pub fn upper_pairs(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.upper.iter()
    }

    pub fn nnz(&self) -> usize {
        self.order + 2 * self.upper.len()
    }

    /// Full symmetric coordinate list `"row col"` (0-based), diagonal
    /// included, sorted by row then column.
    pub fn to_coordinate_list(&self) -> String {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.order];
        for i in 0..self.order {
            rows[i].push(i);
        }
        for &(r, c) in &self.upper {
            rows[r].push(c);
            rows[c].push(r);
        }
        let mut out = String::new();
        for (r, cols) in rows.iter_mut().enumerate() {
            cols.sort_unstable();
            for c in cols {
                out.push_str(&format!("{r} {c}\n"));
            }
        }
        out
    }
}

/// Union of the supports of the constant and all coefficients, plus the full
/// diagonal.
pub fn pattern_of(form: &HermitianAffineForm) -> SparsityPattern {
    let mut p = SparsityPattern::new(form.order);
    for (&(r, c), _) in form.constant.upper_entries() {
        p.insert(r, c);
    }
    for (_, coeff) in &form.terms {
        for (&(r, c), _) in coeff.upper_entries() {
            p.insert(r, c);
        }
    }
    p
}

/// Decision-variable layout shared by the builders and solvers.
#[derive(Debug, Clone)]
pub struct VariableLayout {
    pub kinds: Vec<VarKind>,
    /// Owning subsystem per multiplier variable (parallel to the multiplier
    /// prefix of the variable vector).
    pub mult_owner: Vec<usize>,
    pub n_mult: usize,
    pub n_x: usize,
}

impl VariableLayout {
    pub fn var_count(&self) -> usize {
        self.n_mult + self.n_x
    }
}

/// A built analysis inequality: the affine form plus its variable layout.
#[derive(Debug, Clone)]
pub struct BuiltLmi {
    pub form: HermitianAffineForm,
    pub layout: VariableLayout,
}

fn multiplier_params(net: &Network, omega: f64) -> Result<Vec<MultiplierParam>> {
    net.uncertainty()
        .iter()
        .map(|b| iqc::multiplier_for(b, omega))
        .collect()
}

/// Sparse rows of `[-Γ G_zq, I - Γ G_zw]`, one per interconnection input
/// coordinate, as sorted `(column, value)` lists over the combined
/// `(q, w)` index space.
fn interconnection_rows(net: &Network, resp: &NetworkResponse) -> Vec<Vec<(usize, C64)>> {
    let sum_d = net.sum_d();
    let mut rows = Vec::with_capacity(net.sum_m());
    for (r, wire) in net.wire_map().iter().enumerate() {
        let mut row: BTreeMap<usize, C64> = BTreeMap::new();
        row.insert(sum_d + r, C64::new(1.0, 0.0));
        if let Some(z) = wire {
            let j = net.subsystem_of_z(*z);
            let local = z - net.z_offset(j);
            let rj = &resp.per_subsystem[j];
            for k in 0..rj.g_zq.ncols() {
                let v = -rj.g_zq[(local, k)];
                if v.re != 0.0 || v.im != 0.0 {
                    *row.entry(net.q_offset(j) + k).or_insert(C64::new(0.0, 0.0)) += v;
                }
            }
            for k in 0..rj.g_zw.ncols() {
                let v = -rj.g_zw[(local, k)];
                if v.re != 0.0 || v.im != 0.0 {
                    *row.entry(sum_d + net.w_offset(j) + k).or_insert(C64::new(0.0, 0.0)) += v;
                }
            }
        }
        rows.push(row.into_iter().filter(|(_, v)| v.re != 0.0 || v.im != 0.0).collect());
    }
    rows
}

fn scatter_outer_product(target: &mut SparseHermitian, row: &[(usize, C64)], sign: f64) {
    // sign * row^H row restricted to the stored triangle
    for (a, va) in row {
        for (b, vb) in row {
            if a <= b {
                let v = sign * (va.conj() * vb);
                if v.re != 0.0 || v.im != 0.0 {
                    target.add(*a, *b, v);
                }
            }
        }
    }
}

/// Assembles the sparse per-frequency analysis inequality.
///
/// The form evaluates to
/// `[G_pq G_pw; I 0]^* Π̄ [G_pq G_pw; I 0] - [-ΓG_zq, I-ΓG_zw]^* X [-ΓG_zq, I-ΓG_zw]`
/// over the stacked `(q, w)` index space (all `q` coordinates first, grouped
/// by subsystem, then all `w` coordinates). It is affine in the multiplier
/// variables and the `X` entries, with no constant part.
pub fn build_sparse_lmi(net: &Network, omega: f64, x_mode: XMode) -> Result<BuiltLmi> {
    let resp = assemble_blocks(net, omega)?;
    let params = multiplier_params(net, omega)?;

    let order = net.sum_d() + net.sum_m();
    let n_mult: usize = params.iter().map(|p| p.bases().len()).sum();
    let n_x = if net.sum_m() == 0 {
        0
    } else {
        match x_mode {
            XMode::SharedScalar => 1,
            XMode::Diagonal => net.sum_m(),
        }
    };
    let mut form = HermitianAffineForm::new(order, n_mult + n_x);
    let mut kinds = Vec::with_capacity(n_mult + n_x);
    let mut mult_owner = Vec::with_capacity(n_mult);

    // Uncertainty term, one block per subsystem:
    // [G_pq^i G_pw^i; I 0]^* Π_i [G_pq^i G_pw^i; I 0] on indices (q_i, w_i).
    let mut var = 0usize;
    for (i, param) in params.iter().enumerate() {
        let ri = &resp.per_subsystem[i];
        let d = net.subsystems()[i].dim_d();
        let m = net.subsystems()[i].dim_m();
        let mut m1 = DMatrix::<C64>::zeros(2 * d, d + m);
        m1.view_mut((0, 0), (d, d)).copy_from(&ri.g_pq);
        m1.view_mut((0, d), (d, m)).copy_from(&ri.g_pw);
        for k in 0..d {
            m1[(d + k, k)] = C64::new(1.0, 0.0);
        }
        let idx: Vec<usize> = (0..d)
            .map(|k| net.q_offset(i) + k)
            .chain((0..m).map(|k| net.sum_d() + net.w_offset(i) + k))
            .collect();
        for basis in param.bases() {
            let pi = basis.full_matrix();
            let block = m1.adjoint() * pi * &m1;
            let mut coeff = SparseHermitian::zeros(order);
            coeff.scatter_principal(&idx, &block);
            form.terms.push((var, coeff));
            kinds.push(VarKind::Multiplier);
            mult_owner.push(i);
            var += 1;
        }
    }

    // Interconnection term, one rank-one contribution per input wire:
    // -x_r b_r^* b_r with b_r the r-th row of [-ΓG_zq, I-ΓG_zw].
    if n_x > 0 {
        let rows = interconnection_rows(net, &resp);
        match x_mode {
            XMode::SharedScalar => {
                let mut coeff = SparseHermitian::zeros(order);
                for row in &rows {
                    scatter_outer_product(&mut coeff, row, -1.0);
                }
                form.terms.push((var, coeff));
                kinds.push(VarKind::Interconnection);
            }
            XMode::Diagonal => {
                for row in &rows {
                    let mut coeff = SparseHermitian::zeros(order);
                    scatter_outer_product(&mut coeff, row, -1.0);
                    form.terms.push((var, coeff));
                    kinds.push(VarKind::Interconnection);
                    var += 1;
                }
            }
        }
    }

    let n_x_actual = kinds.iter().filter(|k| **k == VarKind::Interconnection).count();
    debug_assert_eq!(n_x_actual, n_x);
    let layout = VariableLayout { kinds, mult_owner, n_mult, n_x };
    Ok(BuiltLmi { form, layout })
}

/// Assembles the lumped per-frequency inequality `[Ḡ; I]^* Π̄ [Ḡ; I]`.
///
/// Affine in the multiplier variables only; errors when the interconnection
/// is not well posed at `omega`.
pub fn build_lumped_lmi(net: &Network, omega: f64) -> Result<BuiltLmi> {
    let resp = assemble_blocks(net, omega)?;
    let lumped = lumped_from_response(net, &resp, omega)?;
    let params = multiplier_params(net, omega)?;

    let order = net.sum_d();
    let n_mult: usize = params.iter().map(|p| p.bases().len()).sum();
    let mut form = HermitianAffineForm::new(order, n_mult);
    let mut kinds = Vec::with_capacity(n_mult);
    let mut mult_owner = Vec::with_capacity(n_mult);

    let mut var = 0usize;
    for (i, param) in params.iter().enumerate() {
        let d = net.subsystems()[i].dim_d();
        // rows of [Ḡ; I] owned by subsystem i
        let g_rows = lumped.rows(net.q_offset(i), d).into_owned();
        for basis in param.bases() {
            // A^* Π11 A + A^* Π12 S + (A^* Π12 S)^* + S^* Π22 S
            // with A = Ḡ rows, S = selector rows of subsystem i.
            let p11 = basis.p11();
            let p12 = basis.p12();
            let p22 = basis.p22();
            let mut block = g_rows.adjoint() * p11 * &g_rows;
            let cross = g_rows.adjoint() * p12; // Σd × d
            for rr in 0..order {
                for k in 0..d {
                    let c = net.q_offset(i) + k;
                    block[(rr, c)] += cross[(rr, k)];
                    block[(c, rr)] += cross[(rr, k)].conj();
                }
            }
            for a in 0..d {
                for b in 0..d {
                    block[(net.q_offset(i) + a, net.q_offset(i) + b)] += p22[(a, b)];
                }
            }
            let idx: Vec<usize> = (0..order).collect();
            let mut coeff = SparseHermitian::zeros(order);
            coeff.scatter_principal(&idx, &block);
            form.terms.push((var, coeff));
            kinds.push(VarKind::Multiplier);
            mult_owner.push(i);
            var += 1;
        }
    }
    let layout = VariableLayout { kinds, mult_owner, n_mult, n_x: 0 };
    Ok(BuiltLmi { form, layout })
}

/// Blocks of the congruence-transformed sparse inequality together with
/// their deviations from the lumped-side formulas.
#[derive(Debug, Clone)]
pub struct CongruenceReport {
    pub g11: DMatrix<C64>,
    pub g12: DMatrix<C64>,
    pub g22: DMatrix<C64>,
    /// `max |G̃11 - [Ḡ;I]^* Π̄ [Ḡ;I]|`
    pub dev_g11: f64,
    /// `max |G̃12 - [Ḡ;I]^* Π̄ [G_pw;0]|`
    pub dev_g12: f64,
    /// `max |G̃22 - ([G_pw;0]^* Π̄ [G_pw;0] - (I-ΓG_zw)^* X (I-ΓG_zw))|`
    pub dev_g22: f64,
}

impl CongruenceReport {
    pub fn max_deviation(&self) -> f64 {
        self.dev_g11.max(self.dev_g12).max(self.dev_g22)
    }

    /// Schur complement `G̃22 - G̃21 G̃11^{-1} G̃12`; `None` when `G̃11` is
    /// singular.
    pub fn schur_complement(&self) -> Option<DMatrix<C64>> {
        let inv = self.g11.clone().try_inverse()?;
        Some(&self.g22 - self.g12.adjoint() * inv * &self.g12)
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Applies the Theorem-style congruence `A ↦ T^* A T` with
/// `T = [I 0; (I-ΓG_zw)^{-1}ΓG_zq, I]` to the evaluated sparse form and
/// compares the resulting blocks against the lumped-side formulas.
pub fn congruence_transform(
    sparse: &BuiltLmi,
    net: &Network,
    omega: f64,
    values: &[f64],
) -> Result<CongruenceReport> {
    let resp = assemble_blocks(net, omega)?;
    let lumped = lumped_from_response(net, &resp, omega)?; // errors if ill-posed
    let sum_d = net.sum_d();
    let sum_m = net.sum_m();
    let gamma = net.assemble_gamma().map(|v| C64::new(v, 0.0));
    let loop_m = DMatrix::<C64>::identity(sum_m, sum_m) - &gamma * &resp.g_zw;
    let k = loop_m.clone().try_inverse().expect("well-posed") * &gamma * &resp.g_zq;

    let mut t = DMatrix::<C64>::identity(sum_d + sum_m, sum_d + sum_m);
    t.view_mut((sum_d, 0), (sum_m, sum_d)).copy_from(&k);

    let evaluated = sparse.form.eval(values);
    let transformed = t.adjoint() * evaluated * &t;
    let g11 = transformed.view((0, 0), (sum_d, sum_d)).into_owned();
    let g12 = transformed.view((0, sum_d), (sum_d, sum_m)).into_owned();
    let g22 = transformed.view((sum_d, sum_d), (sum_m, sum_m)).into_owned();

    // Reference blocks straight from the lumped-side formulas.
    let mult_values = &values[..sparse.layout.n_mult];
    let lumped_lmi = build_lumped_lmi(net, omega)?;
    let ref_g11 = lumped_lmi.form.eval(mult_values);

    let pi_bar = iqc::assemble_structured(&multiplier_params(net, omega)?)?.eval(mult_values);
    let mut gbar_i = DMatrix::<C64>::zeros(2 * sum_d, sum_d);
    gbar_i.view_mut((0, 0), (sum_d, sum_d)).copy_from(&lumped);
    for i in 0..sum_d {
        gbar_i[(sum_d + i, i)] = C64::new(1.0, 0.0);
    }
    let mut gpw_0 = DMatrix::<C64>::zeros(2 * sum_d, sum_m);
    gpw_0.view_mut((0, 0), (sum_d, sum_m)).copy_from(&resp.g_pw);
    let ref_g12 = gbar_i.adjoint() * &pi_bar * &gpw_0;

    let x_values = &values[sparse.layout.n_mult..];
    let mut x = DMatrix::<C64>::zeros(sum_m, sum_m);
    match sparse.layout.n_x {
        0 => {}
        1 => {
            for i in 0..sum_m {
                x[(i, i)] = C64::new(x_values[0], 0.0);
            }
        }
        _ => {
            for i in 0..sum_m {
                x[(i, i)] = C64::new(x_values[i], 0.0);
            }
        }
    }
    let ref_g22 = gpw_0.adjoint() * &pi_bar * &gpw_0 - loop_m.adjoint() * x * &loop_m;

    Ok(CongruenceReport {
        dev_g11: max_abs(&(&g11 - ref_g11)),
        dev_g12: max_abs(&(&g12 - ref_g12)),
        dev_g22: max_abs(&(&g22 - ref_g22)),
        g11,
        g12,
        g22,
    })
}

/// Sparse real symmetric matrix (upper triangle stored).
#[derive(Debug, Clone, Default)]
pub struct SparseSym {
    order: usize,
    upper: BTreeMap<(usize, usize), f64>,
}

impl SparseSym {
    pub fn zeros(order: usize) -> Self {
        Self { order, upper: BTreeMap::new() }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.order && c < self.order);
        let key = (r.min(c), r.max(c));
        let entry = self.upper.entry(key).or_insert(0.0);
        *entry += v;
        if *entry == 0.0 {
            self.upper.remove(&key);
        }
    }

    pub fn upper_entries(&self) -> impl Iterator<Item = (&(usize, usize), &f64)> {
        self.upper.iter()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.order, self.order);
        for (&(r, c), &v) in &self.upper {
            m[(r, c)] = v;
            if r != c {
                m[(c, r)] = v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.values().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Real symmetric affine form produced by [`realify`].
#[derive(Debug, Clone)]
pub struct RealSymAffineForm {
    pub order: usize,
    pub constant: SparseSym,
    pub terms: Vec<(usize, SparseSym)>,
    pub var_count: usize,
    pub var_cones: Vec<VarCone>,
}

impl RealSymAffineForm {
    pub fn eval(&self, values: &[f64]) -> DMatrix<f64> {
        assert_eq!(values.len(), self.var_count);
        let mut m = self.constant.to_dense();
        for (var, coeff) in &self.terms {
            let v = values[*var];
            if v == 0.0 {
                continue;
            }
            for (&(r, c), &e) in coeff.upper_entries() {
                m[(r, c)] += v * e;
                if r != c {
                    m[(c, r)] += v * e;
                }
            }
        }
        m
    }

    pub fn coefficient_scale(&self) -> f64 {
        let mut s = self.constant.max_abs();
        for (_, coeff) in &self.terms {
            s = s.max(coeff.max_abs());
        }
        s
    }
}

pub(crate) fn realify_matrix(h: &SparseHermitian) -> SparseSym {
    let mut out = SparseSym::zeros(2 * h.order());
    for (&(r, c), &v) in h.upper_entries() {
        if r == c {
            out.add(2 * r, 2 * r, v.re);
            out.add(2 * r + 1, 2 * r + 1, v.re);
        } else {
            if v.re != 0.0 {
                out.add(2 * r, 2 * c, v.re);
                out.add(2 * r + 1, 2 * c + 1, v.re);
            }
            if v.im != 0.0 {
                out.add(2 * r, 2 * c + 1, -v.im);
                out.add(2 * r + 1, 2 * c, v.im);
            }
        }
    }
    out
}

/// Real symmetric embedding of a Hermitian affine form.
///
/// Complex index `k` maps to the adjacent real pair `{2k, 2k+1}` (entry
/// `x + jy` becomes the 2×2 block `[x -y; y x]`), so index groups survive as
/// supernodes. Every eigenvalue of the complex matrix appears twice in the
/// embedding, hence negative semidefiniteness is preserved exactly.
pub fn realify(form: &HermitianAffineForm) -> RealSymAffineForm {
    RealSymAffineForm {
        order: 2 * form.order,
        constant: realify_matrix(&form.constant),
        terms: form
            .terms
            .iter()
            .map(|(var, coeff)| (*var, realify_matrix(coeff)))
            .collect(),
        var_count: form.var_count,
        var_cones: form.var_cones.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqc::UncertaintyBlock;
    use crate::netmodel::{make_chain, ChainTemplate, Interconnection, StateSpace, Subsystem};
    use approx::assert_relative_eq;

    fn chain(n: usize) -> Network {
        let tpl = ChainTemplate::first_order(0.5, 0.1, 1.0).unwrap();
        make_chain(n, &tpl).unwrap()
    }

    fn single(gain: f64) -> Network {
        let sub = Subsystem::from_channels(
            StateSpace::first_order(1.0, gain).unwrap(),
            StateSpace::static_gain(DMatrix::zeros(1, 0)),
            StateSpace::static_gain(DMatrix::zeros(0, 1)),
            StateSpace::static_gain(DMatrix::zeros(0, 0)),
        )
        .unwrap();
        Network::new(
            vec![sub],
            Interconnection::empty(1),
            vec![UncertaintyBlock::norm_bounded_scalar(1, 1.0).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn sparse_form_order_matches_port_count() {
        let net = chain(50);
        let lmi = build_sparse_lmi(&net, 1.0, XMode::SharedScalar).unwrap();
        assert_eq!(lmi.form.order, 148); // 3N - 2
        assert_eq!(lmi.layout.n_mult, 50);
        assert_eq!(lmi.layout.n_x, 1);
    }

    #[test]
    fn portless_network_reduces_to_uncertainty_term() {
        let net = single(1.0);
        let lmi = build_sparse_lmi(&net, 0.0, XMode::SharedScalar).unwrap();
        assert_eq!(lmi.form.order, 1);
        assert_eq!(lmi.layout.n_x, 0);
        // [G; I]^* diag(γ²λ, -λ) [G; I] = λ(|G|² - 1); G(j0) = 1
        let m = lmi.form.eval(&[1.0]);
        assert_relative_eq!(m[(0, 0)].re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lumped_form_order_and_value() {
        let net = chain(50);
        let lmi = build_lumped_lmi(&net, 0.3).unwrap();
        assert_eq!(lmi.form.order, 50);

        let net1 = single(1.0);
        let lmi1 = build_lumped_lmi(&net1, 0.0).unwrap();
        let m = lmi1.form.eval(&[1.0]);
        assert_relative_eq!(m[(0, 0)].re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(m[(0, 0)].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lumped_equals_sparse_first_term_without_wires() {
        let net = single(0.7);
        let sparse = build_sparse_lmi(&net, 0.9, XMode::SharedScalar).unwrap();
        let lumped = build_lumped_lmi(&net, 0.9).unwrap();
        let a = sparse.form.eval(&[0.37]);
        let b = lumped.form.eval(&[0.37]);
        assert_relative_eq!((a - b).map(|v| v.norm()).max(), 0.0, epsilon = 1e-14);
    }

    /// Oracle: the big 4-row product form with the permuted multiplier,
    /// multiplied out densely.
    fn big_product_eval(net: &Network, omega: f64, values: &[f64], x_mode: XMode) -> DMatrix<C64> {
        let resp = assemble_blocks(net, omega).unwrap();
        let params = multiplier_params(net, omega).unwrap();
        let pi_bar = iqc::assemble_structured(&params).unwrap();
        let n_mult: usize = params.iter().map(|p| p.bases().len()).sum();
        let pi = pi_bar.eval(&values[..n_mult]);
        let (sd, sm, sl) = (net.sum_d(), net.sum_m(), net.sum_l());

        let mut x = DMatrix::<C64>::zeros(sm, sm);
        if sm > 0 {
            match x_mode {
                XMode::SharedScalar => {
                    for i in 0..sm {
                        x[(i, i)] = C64::new(values[n_mult], 0.0);
                    }
                }
                XMode::Diagonal => {
                    for i in 0..sm {
                        x[(i, i)] = C64::new(values[n_mult + i], 0.0);
                    }
                }
            }
        }
        let gamma = net.assemble_gamma().map(|v| C64::new(v, 0.0));
        // Π̂ = [-Γ^T X Γ, Γ^T X; X Γ, -X]
        let mut pi_hat = DMatrix::<C64>::zeros(sl + sm, sl + sm);
        pi_hat.view_mut((0, 0), (sl, sl)).copy_from(&(-gamma.adjoint() * &x * &gamma));
        pi_hat.view_mut((0, sl), (sl, sm)).copy_from(&(gamma.adjoint() * &x));
        pi_hat.view_mut((sl, 0), (sm, sl)).copy_from(&(&x * &gamma));
        pi_hat.view_mut((sl, sl), (sm, sm)).copy_from(&(-&x));

        // rows (p, z, q, w) of the outer factor
        let mut outer = DMatrix::<C64>::zeros(2 * sd + sl + sm, sd + sm);
        outer.view_mut((0, 0), (sd, sd)).copy_from(&resp.g_pq);
        outer.view_mut((0, sd), (sd, sm)).copy_from(&resp.g_pw);
        outer.view_mut((sd, 0), (sl, sd)).copy_from(&resp.g_zq);
        outer.view_mut((sd, sd), (sl, sm)).copy_from(&resp.g_zw);
        for i in 0..sd {
            outer[(sd + sl + i, i)] = C64::new(1.0, 0.0);
        }
        for i in 0..sm {
            outer[(2 * sd + sl + i, sd + i)] = C64::new(1.0, 0.0);
        }
        // middle matrix in (p, z, q, w) ordering
        let mut mid = DMatrix::<C64>::zeros(2 * sd + sl + sm, 2 * sd + sl + sm);
        let blk = |m: &DMatrix<C64>, r0: usize, c0: usize, rs: usize, cs: usize| {
            m.view((r0, c0), (rs, cs)).into_owned()
        };
        let p11 = blk(&pi, 0, 0, sd, sd);
        let p12 = blk(&pi, 0, sd, sd, sd);
        let p21 = blk(&pi, sd, 0, sd, sd);
        let p22 = blk(&pi, sd, sd, sd, sd);
        mid.view_mut((0, 0), (sd, sd)).copy_from(&p11);
        mid.view_mut((0, sd + sl), (sd, sd)).copy_from(&p12);
        mid.view_mut((sd + sl, 0), (sd, sd)).copy_from(&p21);
        mid.view_mut((sd + sl, sd + sl), (sd, sd)).copy_from(&p22);
        let h11 = blk(&pi_hat, 0, 0, sl, sl);
        let h12 = blk(&pi_hat, 0, sl, sl, sm);
        let h21 = blk(&pi_hat, sl, 0, sm, sl);
        let h22 = blk(&pi_hat, sl, sl, sm, sm);
        mid.view_mut((sd, sd), (sl, sl)).copy_from(&h11);
        mid.view_mut((sd, 2 * sd + sl), (sl, sm)).copy_from(&h12);
        mid.view_mut((2 * sd + sl, sd), (sm, sl)).copy_from(&h21);
        mid.view_mut((2 * sd + sl, 2 * sd + sl), (sm, sm)).copy_from(&h22);

        outer.adjoint() * mid * outer
    }

    #[test]
    fn sparse_form_matches_big_product_oracle() {
        for (n, x_mode) in [(2, XMode::SharedScalar), (3, XMode::Diagonal), (4, XMode::SharedScalar)] {
            let net = chain(n);
            let lmi = build_sparse_lmi(&net, 0.8, x_mode).unwrap();
            // deterministic pseudo-random admissible values
            let values: Vec<f64> = (0..lmi.layout.var_count())
                .map(|k| 0.15 + 0.8 * ((k * 2654435761usize % 97) as f64 / 97.0))
                .collect();
            let ours = lmi.form.eval(&values);
            let oracle = big_product_eval(&net, 0.8, &values, x_mode);
            let scale = oracle.iter().map(|v| v.norm()).fold(1.0, f64::max);
            assert!(
                (ours - oracle).iter().map(|v| v.norm()).fold(0.0, f64::max) <= 1e-12 * scale,
                "sparse form deviates from the multiplied-out product (N={n})"
            );
        }
    }

    #[test]
    fn congruence_blocks_match_formulas() {
        let net = chain(2);
        let lmi = build_sparse_lmi(&net, 0.6, XMode::SharedScalar).unwrap();
        let values: Vec<f64> = (0..lmi.layout.var_count())
            .map(|k| 0.2 + 0.11 * k as f64)
            .collect();
        let report = congruence_transform(&lmi, &net, 0.6, &values).unwrap();
        assert!(report.max_deviation() <= 1e-10, "deviation {}", report.max_deviation());
    }

    #[test]
    fn schur_complement_turns_negative_as_x_grows() {
        // mirrors the proof: with G̃11 ≺ 0 fixed, scaling X up makes S ≺ 0
        let net = chain(3);
        let lmi = build_sparse_lmi(&net, 0.5, XMode::SharedScalar).unwrap();
        let n_mult = lmi.layout.n_mult;
        let mut seen_negative = false;
        for &x in &[1e-3, 1e-1, 1e1, 1e3, 1e5] {
            let mut values = vec![1.0; n_mult + 1];
            values[n_mult] = x;
            let report = congruence_transform(&lmi, &net, 0.5, &values).unwrap();
            let s = report.schur_complement().unwrap();
            // max eigenvalue via symmetric part of the realified embedding
            let rs = {
                let mut h = SparseHermitian::zeros(s.nrows());
                let idx: Vec<usize> = (0..s.nrows()).collect();
                h.scatter_principal(&idx, &s);
                realify_matrix(&h).to_dense()
            };
            let eig = nalgebra::SymmetricEigen::new(rs);
            let max_eig = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max_eig < 0.0 {
                seen_negative = true;
            }
        }
        assert!(seen_negative, "Schur complement never became negative definite");
    }

    #[test]
    fn realify_examples() {
        // [c] real -> [[c,0],[0,c]]
        let mut h = SparseHermitian::zeros(1);
        h.add(0, 0, C64::new(3.5, 0.0));
        let r = realify_matrix(&h).to_dense();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[3.5, 0.0, 0.0, 3.5]));

        // [0 j; -j 0] -> eigenvalues {1,1,-1,-1}
        let mut h = SparseHermitian::zeros(2);
        h.add(0, 1, C64::new(0.0, 1.0));
        let r = realify_matrix(&h).to_dense();
        assert_eq!(r.transpose(), r);
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(r).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eig.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn realify_preserves_negative_semidefiniteness() {
        // a fixed NSD complex matrix: -v v^* for a complex vector v
        let v = [C64::new(1.0, 2.0), C64::new(-0.5, 0.3), C64::new(0.0, -1.1)];
        let mut h = SparseHermitian::zeros(3);
        for r in 0..3 {
            for c in r..3 {
                h.add(r, c, -(v[r] * v[c].conj()));
            }
        }
        let dense = realify_matrix(&h).to_dense();
        let eig = nalgebra::SymmetricEigen::new(dense);
        for &l in eig.eigenvalues.iter() {
            assert!(l <= 1e-12);
        }
    }

    #[test]
    fn pattern_basics() {
        // diagonal-only form
        let mut form = HermitianAffineForm::new(3, 1);
        let mut c = SparseHermitian::zeros(3);
        c.add(0, 0, C64::new(1.0, 0.0));
        c.add(2, 2, C64::new(-1.0, 0.0));
        form.terms.push((0, c));
        let p = pattern_of(&form);
        assert_eq!(p.nnz(), 3);

        let band = SparsityPattern::band(10, 2);
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(band.contains(i, j), (i as isize - j as isize).unsigned_abs() <= 2);
            }
        }
    }

    #[test]
    fn chain_pattern_is_supernode_chordal_with_small_cliques() {
        let net = chain(50);
        let lmi = build_sparse_lmi(&net, 1.0, XMode::SharedScalar).unwrap();
        let p = pattern_of(&lmi.form);
        let (graph, order) = crate::chordal::chordal_embedding(&p);
        assert!(crate::chordal::is_chordal(&graph));
        let cliques = crate::chordal::maximal_cliques(&graph, &order).unwrap();
        assert_eq!(cliques.len(), 98);
        assert_eq!(cliques.iter().map(|c| c.len()).max().unwrap(), 4);
    }

    #[test]
    fn coordinate_list_roundtrip_count() {
        let p = SparsityPattern::band(4, 1);
        let text = p.to_coordinate_list();
        assert_eq!(text.lines().count(), p.nnz());
        assert!(text.starts_with("0 0\n0 1\n"));
    }
}
