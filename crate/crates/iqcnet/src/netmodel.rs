//! Network model: subsystems, interconnection matrix, frequency responses.
//!
//! A network couples `N` uncertain subsystems. Subsystem `i` has an
//! uncertainty channel of width `d_i` (output `p`, input `q`), an
//! interconnection input `w` of width `m_i` and an interconnection output `z`
//! of width `l_i`, with four transfer-matrix channels between them. The
//! wiring `w = Γ z` is a sparse 0-1 routing matrix stored block-wise.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::iqc::UncertaintyBlock;
use crate::{Error, Result, C64};

/// Default bound on the condition estimate of `I - Γ G_zw` below which the
/// interconnection is considered well posed.
pub const WELLPOSED_COND_BOUND: f64 = 1e8;

/// Continuous-time LTI state-space realization with real data.
///
/// `A` must be Hurwitz so the transfer matrix lives in RH-infinity. A 0-state
/// realization (`A` empty) models a static gain; its response is `D` at every
/// frequency including infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows and C has {} cols, expected {}",
                b.nrows(),
                c.ncols(),
                n
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if n > 0 {
            let max_re = a
                .complex_eigenvalues()
                .iter()
                .map(|ev| ev.re)
                .fold(f64::NEG_INFINITY, f64::max);
            if max_re >= 0.0 {
                return Err(Error::NotHurwitz { max_re });
            }
        }
        Ok(Self { a, b, c, d })
    }

    /// Static gain `G(jω) ≡ d` realized with zero states.
    pub fn static_gain(d: DMatrix<f64>) -> Self {
        let (q, p) = (d.nrows(), d.ncols());
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, p),
            c: DMatrix::zeros(q, 0),
            d,
        }
    }

    /// Scalar static gain, convenient for tests and chain templates.
    pub fn scalar_gain(g: f64) -> Self {
        Self::static_gain(DMatrix::from_element(1, 1, g))
    }

    /// First-order SISO lag `k / (s + a)` with `a > 0`.
    pub fn first_order(a: f64, k: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, -a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, k),
            DMatrix::zeros(1, 1),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Number of states.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    /// Output dimension.
    pub fn noutputs(&self) -> usize {
        self.c.nrows()
    }
    /// Input dimension.
    pub fn ninputs(&self) -> usize {
        self.b.ncols()
    }
}

/// Frequency response `C (jωI - A)^{-1} B + D`; at `ω = ∞` exactly `D`.
pub fn eval_response(ss: &StateSpace, omega: f64) -> Result<DMatrix<C64>> {
    debug_assert!(omega >= 0.0 || omega.is_infinite());
    let d_c = ss.d.map(|v| C64::new(v, 0.0));
    if omega.is_infinite() || ss.order() == 0 {
        return Ok(d_c);
    }
    let n = ss.order();
    let mut jw_minus_a = ss.a.map(|v| C64::new(-v, 0.0));
    for i in 0..n {
        jw_minus_a[(i, i)] += C64::new(0.0, omega);
    }
    let inv = jw_minus_a.try_inverse().ok_or(Error::Dimension(format!(
        "jωI - A singular at omega = {omega} (realization not Hurwitz?)"
    )))?;
    let b_c = ss.b.map(|v| C64::new(v, 0.0));
    let c_c = ss.c.map(|v| C64::new(v, 0.0));
    Ok(&c_c * inv * b_c + d_c)
}

/// The four channel responses of one subsystem at a single frequency.
#[derive(Debug, Clone)]
pub struct SubsystemResponse {
    pub g_pq: DMatrix<C64>,
    pub g_pw: DMatrix<C64>,
    pub g_zq: DMatrix<C64>,
    pub g_zw: DMatrix<C64>,
}

/// Subsystem dynamics: a state-space realization per channel, or raw
/// frequency samples injected per grid point (test instrumentation).
#[derive(Debug, Clone)]
pub enum SubsystemModel {
    Realized {
        g_pq: StateSpace,
        g_pw: StateSpace,
        g_zq: StateSpace,
        g_zw: StateSpace,
    },
    Sampled {
        /// Keyed by the exact bit pattern of the frequency value.
        responses: BTreeMap<u64, SubsystemResponse>,
    },
}

/// One uncertain subsystem: channel dynamics plus port widths.
#[derive(Debug, Clone)]
pub struct Subsystem {
    model: SubsystemModel,
    d: usize,
    m: usize,
    l: usize,
}

impl Subsystem {
    pub fn new(model: SubsystemModel, d: usize, m: usize, l: usize) -> Result<Self> {
        if let SubsystemModel::Realized { g_pq, g_pw, g_zq, g_zw } = &model {
            let checks = [
                ("G_pq", g_pq.noutputs(), d, g_pq.ninputs(), d),
                ("G_pw", g_pw.noutputs(), d, g_pw.ninputs(), m),
                ("G_zq", g_zq.noutputs(), l, g_zq.ninputs(), d),
                ("G_zw", g_zw.noutputs(), l, g_zw.ninputs(), m),
            ];
            for (name, rows, want_rows, cols, want_cols) in checks {
                if rows != want_rows || cols != want_cols {
                    return Err(Error::Dimension(format!(
                        "{name} must be {want_rows}x{want_cols}, got {rows}x{cols}"
                    )));
                }
            }
        }
        Ok(Self { model, d, m, l })
    }

    /// Subsystem from four realized channels; widths read off the matrices.
    pub fn from_channels(
        g_pq: StateSpace,
        g_pw: StateSpace,
        g_zq: StateSpace,
        g_zw: StateSpace,
    ) -> Result<Self> {
        let (d, m, l) = (g_pq.ninputs(), g_pw.ninputs(), g_zq.noutputs());
        Self::new(SubsystemModel::Realized { g_pq, g_pw, g_zq, g_zw }, d, m, l)
    }

    pub fn dim_d(&self) -> usize {
        self.d
    }
    pub fn dim_m(&self) -> usize {
        self.m
    }
    pub fn dim_l(&self) -> usize {
        self.l
    }
    pub fn model(&self) -> &SubsystemModel {
        &self.model
    }

    pub fn response(&self, omega: f64) -> Result<SubsystemResponse> {
        match &self.model {
            SubsystemModel::Realized { g_pq, g_pw, g_zq, g_zw } => Ok(SubsystemResponse {
                g_pq: eval_response(g_pq, omega)?,
                g_pw: eval_response(g_pw, omega)?,
                g_zq: eval_response(g_zq, omega)?,
                g_zw: eval_response(g_zw, omega)?,
            }),
            SubsystemModel::Sampled { responses } => responses
                .get(&omega.to_bits())
                .cloned()
                .ok_or(Error::MissingSample(omega)),
        }
    }
}

/// Sparse block 0-1 interconnection matrix `Γ`.
///
/// Block `(i, j)` routes outputs of subsystem `j` to inputs of subsystem `i`.
/// Every input wire is driven by at most one output: each row of the
/// assembled matrix carries at most a single 1. Fan-in summation is out of
/// scope; `Γ` is a pure routing matrix.
#[derive(Debug, Clone)]
pub struct Interconnection {
    n: usize,
    blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl Interconnection {
    /// Empty interconnection (no wires) between `n` subsystems.
    pub fn empty(n: usize) -> Self {
        Self { n, blocks: BTreeMap::new() }
    }

    pub fn new(n: usize, blocks: BTreeMap<(usize, usize), DMatrix<f64>>) -> Result<Self> {
        for (&(i, j), blk) in &blocks {
            if i >= n || j >= n {
                return Err(Error::Interconnection(format!(
                    "block ({i},{j}) outside a {n}-subsystem network"
                )));
            }
            let mut nonzero = false;
            for &v in blk.iter() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Interconnection(format!(
                        "block ({i},{j}) has entry {v}, only 0/1 allowed"
                    )));
                }
                nonzero |= v == 1.0;
            }
            if !nonzero {
                return Err(Error::Interconnection(format!("block ({i},{j}) stored but zero")));
            }
        }
        Ok(Self { n, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn blocks(&self) -> &BTreeMap<(usize, usize), DMatrix<f64>> {
        &self.blocks
    }

    /// Total number of ones over all blocks.
    pub fn wire_count(&self) -> usize {
        self.blocks
            .values()
            .map(|b| b.iter().filter(|&&v| v == 1.0).count())
            .sum()
    }
}

/// A network: subsystems, their wiring and one uncertainty descriptor per
/// subsystem.
#[derive(Debug, Clone)]
pub struct Network {
    subsystems: Vec<Subsystem>,
    gamma: Interconnection,
    uncertainty: Vec<UncertaintyBlock>,
    q_offsets: Vec<usize>,
    w_offsets: Vec<usize>,
    z_offsets: Vec<usize>,
    sum_d: usize,
    sum_m: usize,
    sum_l: usize,
    /// For input wire `r` (global w coordinate), the global z coordinate
    /// driving it, if any.
    wire_map: Vec<Option<usize>>,
}

impl Network {
    pub fn new(
        subsystems: Vec<Subsystem>,
        gamma: Interconnection,
        uncertainty: Vec<UncertaintyBlock>,
    ) -> Result<Self> {
        let n = subsystems.len();
        if gamma.n() != n {
            return Err(Error::Dimension(format!(
                "interconnection declared for {} subsystems, network has {}",
                gamma.n(),
                n
            )));
        }
        if uncertainty.len() != n {
            return Err(Error::Dimension(format!(
                "{} uncertainty descriptors for {} subsystems",
                uncertainty.len(),
                n
            )));
        }
        for (i, (sub, unc)) in subsystems.iter().zip(&uncertainty).enumerate() {
            if unc.dim() != sub.dim_d() {
                return Err(Error::Dimension(format!(
                    "uncertainty block {} has dim {}, subsystem channel is {}",
                    i,
                    unc.dim(),
                    sub.dim_d()
                )));
            }
        }
        let mut q_offsets = Vec::with_capacity(n);
        let mut w_offsets = Vec::with_capacity(n);
        let mut z_offsets = Vec::with_capacity(n);
        let (mut sum_d, mut sum_m, mut sum_l) = (0, 0, 0);
        for sub in &subsystems {
            q_offsets.push(sum_d);
            w_offsets.push(sum_m);
            z_offsets.push(sum_l);
            sum_d += sub.dim_d();
            sum_m += sub.dim_m();
            sum_l += sub.dim_l();
        }
        for (&(i, j), blk) in gamma.blocks() {
            if blk.nrows() != subsystems[i].dim_m() || blk.ncols() != subsystems[j].dim_l() {
                return Err(Error::Dimension(format!(
                    "Γ block ({i},{j}) is {}x{}, expected {}x{}",
                    blk.nrows(),
                    blk.ncols(),
                    subsystems[i].dim_m(),
                    subsystems[j].dim_l()
                )));
            }
        }
        // Row rule: at most one driver per input wire.
        let mut wire_map = vec![None; sum_m];
        for (&(i, j), blk) in gamma.blocks() {
            for r in 0..blk.nrows() {
                for c in 0..blk.ncols() {
                    if blk[(r, c)] == 1.0 {
                        let w = w_offsets[i] + r;
                        let z = z_offsets[j] + c;
                        if wire_map[w].is_some() {
                            return Err(Error::Interconnection(format!(
                                "input wire w{} of subsystem {} driven by more than one output",
                                r + 1,
                                i + 1
                            )));
                        }
                        wire_map[w] = Some(z);
                    }
                }
            }
        }
        Ok(Self {
            subsystems,
            gamma,
            uncertainty,
            q_offsets,
            w_offsets,
            z_offsets,
            sum_d,
            sum_m,
            sum_l,
            wire_map,
        })
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }
    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }
    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }
    pub fn gamma(&self) -> &Interconnection {
        &self.gamma
    }
    pub fn uncertainty(&self) -> &[UncertaintyBlock] {
        &self.uncertainty
    }
    pub fn sum_d(&self) -> usize {
        self.sum_d
    }
    pub fn sum_m(&self) -> usize {
        self.sum_m
    }
    pub fn sum_l(&self) -> usize {
        self.sum_l
    }
    pub fn q_offset(&self, i: usize) -> usize {
        self.q_offsets[i]
    }
    pub fn w_offset(&self, i: usize) -> usize {
        self.w_offsets[i]
    }
    pub fn z_offset(&self, i: usize) -> usize {
        self.z_offsets[i]
    }
    /// Driving z coordinate per w coordinate (`None` for open inputs).
    pub fn wire_map(&self) -> &[Option<usize>] {
        &self.wire_map
    }
    /// Subsystem owning global w coordinate `w`.
    pub fn subsystem_of_w(&self, w: usize) -> usize {
        match self.w_offsets.binary_search(&w) {
            Ok(i) => {
                // offsets of port-less subsystems collide; take the last one
                // whose range actually contains `w`
                let mut k = i;
                while k + 1 < self.w_offsets.len() && self.w_offsets[k + 1] == w {
                    k += 1;
                }
                k
            }
            Err(i) => i - 1,
        }
    }
    /// Subsystem owning global z coordinate `z`.
    pub fn subsystem_of_z(&self, z: usize) -> usize {
        match self.z_offsets.binary_search(&z) {
            Ok(i) => {
                let mut k = i;
                while k + 1 < self.z_offsets.len() && self.z_offsets[k + 1] == z {
                    k += 1;
                }
                k
            }
            Err(i) => i - 1,
        }
    }

    /// Assembled dense `Γ` of size `Σm × Σl`.
    pub fn assemble_gamma(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.sum_m, self.sum_l);
        for (w, z) in self.wire_map.iter().enumerate() {
            if let Some(z) = z {
                g[(w, *z)] = 1.0;
            }
        }
        g
    }
}

/// Block-diagonal channel responses of the whole network at one frequency.
#[derive(Debug, Clone)]
pub struct NetworkResponse {
    pub g_pq: DMatrix<C64>,
    pub g_pw: DMatrix<C64>,
    pub g_zq: DMatrix<C64>,
    pub g_zw: DMatrix<C64>,
    /// Per-subsystem responses in index order, for block-level consumers.
    pub per_subsystem: Vec<SubsystemResponse>,
}

/// Evaluates all subsystem channels and assembles the block-diagonal
/// network-level matrices.
pub fn assemble_blocks(net: &Network, omega: f64) -> Result<NetworkResponse> {
    let mut per = Vec::with_capacity(net.len());
    for sub in net.subsystems() {
        per.push(sub.response(omega)?);
    }
    let mut g_pq = DMatrix::zeros(net.sum_d, net.sum_d);
    let mut g_pw = DMatrix::zeros(net.sum_d, net.sum_m);
    let mut g_zq = DMatrix::zeros(net.sum_l, net.sum_d);
    let mut g_zw = DMatrix::zeros(net.sum_l, net.sum_m);
    for (i, resp) in per.iter().enumerate() {
        let (q0, w0, z0) = (net.q_offsets[i], net.w_offsets[i], net.z_offsets[i]);
        g_pq
            .view_mut((q0, q0), (resp.g_pq.nrows(), resp.g_pq.ncols()))
            .copy_from(&resp.g_pq);
        g_pw
            .view_mut((q0, w0), (resp.g_pw.nrows(), resp.g_pw.ncols()))
            .copy_from(&resp.g_pw);
        g_zq
            .view_mut((z0, q0), (resp.g_zq.nrows(), resp.g_zq.ncols()))
            .copy_from(&resp.g_zq);
        g_zw
            .view_mut((z0, w0), (resp.g_zw.nrows(), resp.g_zw.ncols()))
            .copy_from(&resp.g_zw);
    }
    Ok(NetworkResponse { g_pq, g_pw, g_zq, g_zw, per_subsystem: per })
}

/// Outcome of the well-posedness test at one frequency.
#[derive(Debug, Clone, Copy)]
pub struct WellPosedness {
    pub wellposed: bool,
    pub condition_estimate: f64,
}

/// Checks invertibility of `I - Γ G_zw(jω)` with a singular-value condition
/// estimate against [`WELLPOSED_COND_BOUND`] (or a caller bound).
pub fn check_wellposed_with_bound(net: &Network, omega: f64, bound: f64) -> Result<WellPosedness> {
    let resp = assemble_blocks(net, omega)?;
    Ok(wellposedness_of(net, &resp, bound))
}

pub fn check_wellposed(net: &Network, omega: f64) -> Result<WellPosedness> {
    check_wellposed_with_bound(net, omega, WELLPOSED_COND_BOUND)
}

fn loop_matrix(net: &Network, resp: &NetworkResponse) -> DMatrix<C64> {
    let gamma = net.assemble_gamma().map(|v| C64::new(v, 0.0));
    DMatrix::identity(net.sum_m, net.sum_m) - gamma * &resp.g_zw
}

pub(crate) fn wellposedness_of(net: &Network, resp: &NetworkResponse, bound: f64) -> WellPosedness {
    if net.sum_m == 0 {
        return WellPosedness { wellposed: true, condition_estimate: 1.0 };
    }
    let m = loop_matrix(net, resp);
    let sv: DVector<f64> = m.singular_values();
    let (mut smax, mut smin) = (0.0_f64, f64::INFINITY);
    for &s in sv.iter() {
        smax = smax.max(s);
        smin = smin.min(s);
    }
    if smin == 0.0 {
        return WellPosedness { wellposed: false, condition_estimate: f64::INFINITY };
    }
    let cond = smax / smin;
    WellPosedness { wellposed: cond <= bound, condition_estimate: cond }
}

/// Lumped system `Ḡ = G_pq + G_pw (I - Γ G_zw)^{-1} Γ G_zq` at one frequency.
///
/// Refuses with [`Error::IllPosed`] when the interconnection is not well
/// posed there.
pub fn lumped_system(net: &Network, omega: f64) -> Result<DMatrix<C64>> {
    let resp = assemble_blocks(net, omega)?;
    lumped_from_response(net, &resp, omega)
}

pub(crate) fn lumped_from_response(
    net: &Network,
    resp: &NetworkResponse,
    omega: f64,
) -> Result<DMatrix<C64>> {
    let wp = wellposedness_of(net, resp, WELLPOSED_COND_BOUND);
    if !wp.wellposed {
        return Err(Error::IllPosed { omega, cond: wp.condition_estimate });
    }
    if net.sum_m == 0 {
        return Ok(resp.g_pq.clone());
    }
    let gamma = net.assemble_gamma().map(|v| C64::new(v, 0.0));
    let inv = loop_matrix(net, resp)
        .try_inverse()
        .expect("condition estimate finite, inverse must exist");
    Ok(&resp.g_pq + &resp.g_pw * inv * gamma * &resp.g_zq)
}

/// Template for [`make_chain`]: scalar uncertainty channel dynamics plus
/// static coupling gains, one uncertainty descriptor applied to every
/// subsystem.
#[derive(Debug, Clone)]
pub struct ChainTemplate {
    /// SISO dynamics of the `q → p` channel.
    pub g_pq: StateSpace,
    /// Static gain from each interconnection input to `p`.
    pub coupling_pw: f64,
    /// Static gain from `q` to each interconnection output.
    pub coupling_zq: f64,
    /// Static gain from input port k to output port k (usually zero).
    pub coupling_zw: f64,
    /// Uncertainty descriptor for every subsystem.
    pub uncertainty: UncertaintyBlock,
}

impl ChainTemplate {
    /// Stable default: `g/(s+1)` dynamics, weak coupling, unit-norm-bounded
    /// scalar uncertainty.
    pub fn first_order(dc_gain: f64, coupling: f64, gamma: f64) -> Result<Self> {
        Ok(Self {
            g_pq: StateSpace::first_order(1.0, dc_gain)?,
            coupling_pw: coupling,
            coupling_zq: coupling,
            coupling_zw: 0.0,
            uncertainty: UncertaintyBlock::norm_bounded_scalar(1, gamma)?,
        })
    }

    fn subsystem(&self, m: usize, l: usize) -> Result<Subsystem> {
        let g_pw = StateSpace::static_gain(DMatrix::from_element(1, m, self.coupling_pw));
        let g_zq = StateSpace::static_gain(DMatrix::from_element(l, 1, self.coupling_zq));
        let mut zw = DMatrix::zeros(l, m);
        if self.coupling_zw != 0.0 {
            for k in 0..l.min(m) {
                zw[(k, k)] = self.coupling_zw;
            }
        }
        let g_zw = StateSpace::static_gain(zw);
        Subsystem::from_channels(self.g_pq.clone(), g_pw, g_zq, g_zw)
    }
}

/// Builds the chain of `n` uncertain subsystems.
///
/// Interior subsystems expose two ports; ends expose one. Port 1 faces the
/// left neighbour and port 2 the right neighbour, so `w_i^1 = z_{i-1}^2` and
/// `w_i^2 = z_{i+1}^1`; end subsystems keep only their inward-facing port.
pub fn make_chain(n: usize, template: &ChainTemplate) -> Result<Network> {
    if n < 2 {
        return Err(Error::ChainTooShort(n));
    }
    let ports = |i: usize| if i == 0 || i == n - 1 { 1 } else { 2 };
    let mut subsystems = Vec::with_capacity(n);
    for i in 0..n {
        let p = ports(i);
        subsystems.push(template.subsystem(p, p)?);
    }

    // Port index of the wire from subsystem j towards neighbour i, within
    // subsystem j's own z (or w) port list.
    let port_towards = |j: usize, i: usize| -> usize {
        if j == 0 || j == n - 1 {
            0
        } else if i < j {
            0 // port 1 faces left
        } else {
            1 // port 2 faces right
        }
    };

    let mut blocks: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
    for i in 0..n {
        for j in [i.wrapping_sub(1), i + 1] {
            if j >= n || j == usize::MAX {
                continue;
            }
            // wire z_j (port facing i) -> w_i (port facing j)
            let mut blk = DMatrix::zeros(ports(i), ports(j));
            blk[(port_towards(i, j), port_towards(j, i))] = 1.0;
            blocks.insert((i, j), blk);
        }
    }
    let gamma = Interconnection::new(n, blocks)?;
    let uncertainty = vec![template.uncertainty.clone(); n];
    Network::new(subsystems, gamma, uncertainty)
}
