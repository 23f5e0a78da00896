//! Material data, boundary data and the nodal unknowns.
//!
//! Everything is in scaled units: potentials in thermal voltages, densities
//! relative to a reference density. Carrier `k = 1` (holes) and `k = 2`
//! (electrons) are indexed by [`Carrier`]; the chemical potential is
//! `χ_k = φ̃_k + (−1)^k φ + b_k` and the density `u_k = ρ_k F(χ_k)`.
//!
//! Regions live on triangles, so a node on a material interface owns one
//! partial volume per adjacent region. Densities, charges and rates are
//! integrated part by part with each region's own `ρ_k` and `b_k`.

use crate::mesh::{DualGeometry, Mesh, MeshError, RegionPart};
use crate::poisson::{self, PoissonError, PoissonOperator, PoissonSettings};
use crate::recombination::RecombinationModel;
use crate::statistics::{StatisticsError, StatisticsModel};
use smallvec::SmallVec;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("mesh region `{0}` has no material definition")]
    MissingRegion(String),
    #[error("region `{region}`: {reason}")]
    InvalidMaterial { region: String, reason: String },
    #[error("invalid ramp: {0}")]
    InvalidRamp(String),
    #[error("contact {0} is configured but does not appear on the mesh boundary")]
    UnknownContact(u32),
    #[error("contact {0} appears on the mesh boundary but has no configuration")]
    MissingContact(u32),
    #[error("contact {0} is ohmic but touches no transport-active region")]
    OhmicOnInsulator(u32),
    #[error(
        "regions `{first}` and `{second}` have different band offsets; \
         discontinuous band edges are only supported with Boltzmann statistics"
    )]
    Heterojunction { first: String, second: String },
    #[error("doping override has {got} values for {expected} nodes")]
    DopingLength { expected: usize, got: usize },
    #[error("negative Robin capacity {0}")]
    NegativeCapacity(f64),
    #[error("contacts disagree on the initial electrochemical potential of carrier {carrier}: {a} vs {b}")]
    UnequalInitialContacts { carrier: usize, a: f64, b: f64 },
    #[error("no charge-neutral potential at node {0}")]
    NoNeutralPotential(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
}

/// Holes (`k = 1`) or electrons (`k = 2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Carrier {
    Holes,
    Electrons,
}

impl Carrier {
    pub const BOTH: [Carrier; 2] = [Carrier::Holes, Carrier::Electrons];

    /// 0 for holes, 1 for electrons.
    pub fn idx(self) -> usize {
        self as usize
    }

    /// `(−1)^k`
    pub fn sign(self) -> f64 {
        match self {
            Carrier::Holes => -1.0,
            Carrier::Electrons => 1.0,
        }
    }

    /// The one-based carrier number `k` (1 or 2), used in output labels.
    pub fn number(self) -> usize {
        self.idx() + 1
    }
}

/// Symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Tensor2 {
    pub fn isotropic(v: f64) -> Self {
        Tensor2 { xx: v, xy: 0.0, yy: v }
    }

    /// Smallest and largest eigenvalue.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * (self.xx + self.yy);
        let r = (0.5 * (self.xx - self.yy)).hypot(self.xy);
        (m - r, m + r)
    }

    pub fn is_positive_definite(&self) -> bool {
        let (lo, hi) = self.eigenvalues();
        lo > 0.0 && hi.is_finite()
    }

    /// `e·Te / |e|²`, the scalar seen by a two-point flux along `e`.
    pub fn project(&self, e: [f64; 2]) -> f64 {
        let n2 = e[0] * e[0] + e[1] * e[1];
        (self.xx * e[0] * e[0] + 2.0 * self.xy * e[0] * e[1] + self.yy * e[1] * e[1]) / n2
    }

    pub fn scaled(&self, s: f64) -> Self {
        Tensor2 { xx: s * self.xx, xy: s * self.xy, yy: s * self.yy }
    }
}

/// Shockley–Read–Hall parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrhParams {
    pub ni: f64,
    /// `n_1`, `n_2`: trap-level reference densities.
    pub n_trap: [f64; 2],
    /// `τ_1`, `τ_2`
    pub tau: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRegion {
    pub eps: Tensor2,
    pub mu: [Tensor2; 2],
    pub rho: [f64; 2],
    pub band_offset: [f64; 2],
    pub srh: SrhParams,
    /// Auger coefficients `c_1`, `c_2`.
    pub auger: [f64; 2],
    /// Net doping (donors positive).
    pub doping: f64,
    /// Carriers move here; otherwise the region is electrostatic only.
    pub transport: bool,
}

impl Default for MaterialRegion {
    fn default() -> Self {
        MaterialRegion {
            eps: Tensor2::isotropic(1.0),
            mu: [Tensor2::isotropic(1.0); 2],
            rho: [1.0; 2],
            band_offset: [0.0; 2],
            srh: SrhParams { ni: 1.0, n_trap: [1.0; 2], tau: [1.0; 2] },
            auger: [0.0; 2],
            doping: 0.0,
            transport: true,
        }
    }
}

impl MaterialRegion {
    /// A Boltzmann semiconductor with `ρ_k = 1` and `b_k = ln n_i`, so that
    /// `u_1 u_2 = n_i²` in equilibrium. SRH trap densities default to `n_i`.
    pub fn intrinsic(ni: f64) -> Self {
        MaterialRegion {
            band_offset: [ni.ln(); 2],
            srh: SrhParams { ni, n_trap: [ni; 2], tau: [1.0; 2] },
            ..Default::default()
        }
    }

    pub fn insulator(eps: f64) -> Self {
        MaterialRegion { eps: Tensor2::isotropic(eps), transport: false, ..Default::default() }
    }

    fn validate(&self, name: &str) -> Result<(), DeviceError> {
        let bad = |reason: &str| Err(DeviceError::InvalidMaterial { region: name.into(), reason: reason.into() });
        if !self.eps.is_positive_definite() {
            return bad("permittivity must be symmetric positive definite");
        }
        if !self.doping.is_finite() {
            return bad("doping must be finite");
        }
        if !self.transport {
            return Ok(());
        }
        if !self.mu.iter().all(Tensor2::is_positive_definite) {
            return bad("mobilities must be symmetric positive definite");
        }
        if !self.rho.iter().all(|r| *r > 0.0 && r.is_finite()) {
            return bad("effective densities of states must be positive");
        }
        if !self.band_offset.iter().all(|b| b.is_finite()) {
            return bad("band offsets must be finite");
        }
        let s = &self.srh;
        if !(s.ni > 0.0) || !s.tau.iter().all(|t| *t > 0.0) || !s.n_trap.iter().all(|n| *n >= 0.0) {
            return bad("SRH parameters need n_i > 0, τ_k > 0 and n_k ≥ 0");
        }
        if !self.auger.iter().all(|c| *c >= 0.0) {
            return bad("Auger coefficients must be non-negative");
        }
        Ok(())
    }
}

/// Piecewise-linear function of time, constant outside its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Ramp {
    points: Vec<(f64, f64)>,
}

impl Ramp {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, DeviceError> {
        if points.is_empty() {
            return Err(DeviceError::InvalidRamp("no breakpoints".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(DeviceError::InvalidRamp("non-finite breakpoint".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(DeviceError::InvalidRamp("breakpoint times must be strictly increasing".into()));
        }
        Ok(Ramp { points })
    }

    pub fn constant(v: f64) -> Self {
        Ramp { points: vec![(0.0, v)] }
    }

    /// Linear from `v0` at `t0` to `v1` at `t1`.
    pub fn linear(t0: f64, v0: f64, t1: f64, v1: f64) -> Self {
        Ramp::new(vec![(t0, v0), (t1, v1)]).expect("linear ramp needs t1 > t0")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0].0 {
            return p[0].1;
        }
        let k = p.partition_point(|(tk, _)| *tk <= t);
        if k == p.len() {
            return p[k - 1].1;
        }
        let (t0, v0) = p[k - 1];
        let (t1, v1) = p[k];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn negated(&self) -> Self {
        Ramp { points: self.points.iter().map(|&(t, v)| (t, -v)).collect() }
    }
}

/// Dirichlet data of one contact.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSpec {
    /// Electrostatic potential, or its offset from the local charge-neutral
    /// potential when `ohmic` is set.
    pub phi: Ramp,
    /// Electrochemical potentials `φ̃_1`, `φ̃_2`.
    pub phibar: [Ramp; 2],
    pub ohmic: bool,
}

impl ContactSpec {
    /// Ohmic contact at applied voltage `v(t)`: `φ = φ_neutral + v`,
    /// `φ̃_1 = v`, `φ̃_2 = −v`. This keeps both chemical potentials at their
    /// equilibrium values, so the contact stays charge neutral under bias.
    pub fn biased(v: Ramp) -> Self {
        ContactSpec { phibar: [v.clone(), v.negated()], phi: v, ohmic: true }
    }

    pub fn grounded() -> Self {
        Self::biased(Ramp::constant(0.0))
    }

    /// Gate-like contact: fixed potential, no neutrality adjustment.
    pub fn gate(phi: Ramp) -> Self {
        ContactSpec { phi, phibar: [Ramp::constant(0.0), Ramp::constant(0.0)], ohmic: false }
    }
}

/// Robin data on Neumann-tagged boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct RobinSpec {
    pub capacity: f64,
    pub datum: Ramp,
}

impl Default for RobinSpec {
    fn default() -> Self {
        RobinSpec { capacity: 0.0, datum: Ramp::constant(0.0) }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundarySpec {
    pub contacts: BTreeMap<u32, ContactSpec>,
    pub robin: RobinSpec,
}

/// Nodal unknowns at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub t: f64,
    pub phi: Vec<f64>,
    /// `φ̃_1`, `φ̃_2`
    pub phibar: [Vec<f64>; 2],
}

impl DeviceState {
    pub fn uniform(n: usize, t: f64) -> Self {
        DeviceState { t, phi: vec![0.0; n], phibar: [vec![0.0; n], vec![0.0; n]] }
    }

    pub fn node_count(&self) -> usize {
        self.phi.len()
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.phibar[0]).chain(&self.phibar[1]).all(|v| v.is_finite())
    }

    /// Largest absolute difference over all unknowns.
    pub fn max_difference(&self, other: &DeviceState) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        d(&self.phi, &other.phi).max(d(&self.phibar[0], &other.phibar[0])).max(d(&self.phibar[1], &other.phibar[1]))
    }
}

/// Transport-active part of a cell or an edge interface.
pub type Parts<const N: usize> = SmallVec<[RegionPart; N]>;

/// Everything the solvers need about a device, with node-level data derived
/// once at construction.
#[derive(Debug, Clone)]
pub struct DeviceSpec {
    pub mesh: Arc<Mesh>,
    pub dual: Arc<DualGeometry>,
    /// Indexed like [`Mesh::region_names`].
    pub regions: Vec<MaterialRegion>,
    pub boundary: BoundarySpec,
    pub statistics: StatisticsModel,
    pub recombination: RecombinationModel,
    contact_of: Vec<Option<u32>>,
    transport_parts: Vec<Parts<4>>,
    transport_volume: Vec<f64>,
    edge_transport: Vec<Parts<2>>,
    edge_permittivity: Vec<f64>,
    doping_charge: Vec<f64>,
    primary_region: Vec<usize>,
    neutral_phi: Vec<f64>,
    poisson: Option<Arc<PoissonOperator>>,
}

impl DeviceSpec {
    /// Validate and derive node data. `regions` is keyed by mesh region name;
    /// `doping_override` replaces region doping with nodal values.
    pub fn new(
        mesh: Arc<Mesh>,
        dual: Arc<DualGeometry>,
        regions: &BTreeMap<String, MaterialRegion>,
        boundary: BoundarySpec,
        statistics: StatisticsModel,
        recombination: RecombinationModel,
        doping_override: Option<Vec<f64>>,
    ) -> Result<Self, DeviceError> {
        let n = mesh.node_count();
        let mut table = Vec::with_capacity(mesh.region_names().len());
        for name in mesh.region_names() {
            let r = regions.get(name).ok_or_else(|| DeviceError::MissingRegion(name.clone()))?;
            r.validate(name)?;
            table.push(r.clone());
        }
        if !statistics.is_boltzmann() {
            let used: Vec<usize> = (0..table.len()).filter(|&r| table[r].transport).collect();
            for w in used.windows(2) {
                if table[w[0]].band_offset != table[w[1]].band_offset {
                    return Err(DeviceError::Heterojunction {
                        first: mesh.region_names()[w[0]].clone(),
                        second: mesh.region_names()[w[1]].clone(),
                    });
                }
            }
        }
        if !(boundary.robin.capacity >= 0.0) {
            return Err(DeviceError::NegativeCapacity(boundary.robin.capacity));
        }
        mesh.check_solvable(boundary.robin.capacity)?;
        let contact_ids = mesh.contact_ids();
        for &id in boundary.contacts.keys() {
            if !contact_ids.contains(&id) {
                return Err(DeviceError::UnknownContact(id));
            }
        }
        if let Some(&id) = contact_ids.iter().find(|id| !boundary.contacts.contains_key(id)) {
            return Err(DeviceError::MissingContact(id));
        }
        let contact_of = mesh.contact_of_nodes()?;

        let transport_parts: Vec<Parts<4>> = dual
            .volume_parts
            .iter()
            .map(|ps| ps.iter().copied().filter(|p| table[p.region].transport && p.measure > 0.0).collect())
            .collect();
        let transport_volume: Vec<f64> = transport_parts.iter().map(|ps| ps.iter().map(|p| p.measure).sum()).collect();
        let edge_transport: Vec<Parts<2>> = dual
            .edge_parts
            .iter()
            .map(|ps| ps.iter().copied().filter(|p| table[p.region].transport && p.measure > 0.0).collect())
            .collect();
        let edge_permittivity: Vec<f64> = (0..dual.edge_count())
            .map(|e| {
                let [a, b] = dual.edges[e];
                let (p, q) = (mesh.nodes()[a], mesh.nodes()[b]);
                let dir = [q[0] - p[0], q[1] - p[1]];
                dual.edge_parts[e].iter().map(|part| table[part.region].eps.project(dir) * part.measure).sum::<f64>()
                    / dual.edge_length[e]
            })
            .collect();
        let doping_charge = match doping_override {
            Some(d) => {
                if d.len() != n {
                    return Err(DeviceError::DopingLength { expected: n, got: d.len() });
                }
                d.iter().zip(&dual.cell_volume).map(|(d, v)| d * v).collect()
            }
            None => dual
                .volume_parts
                .iter()
                .map(|ps| ps.iter().map(|p| table[p.region].doping * p.measure).sum())
                .collect(),
        };
        let primary_region = (0..n)
            .map(|i| {
                let parts = if transport_parts[i].is_empty() { &dual.volume_parts[i] } else { &transport_parts[i] };
                // largest part, ties to the lowest region index
                parts.iter().fold((usize::MAX, -1.0), |best, p| if p.measure > best.1 { (p.region, p.measure) } else { best }).0
            })
            .collect();

        let mut spec = DeviceSpec {
            mesh,
            dual,
            regions: table,
            boundary,
            statistics,
            recombination,
            contact_of,
            transport_parts,
            transport_volume,
            edge_transport,
            edge_permittivity,
            doping_charge,
            primary_region,
            neutral_phi: vec![f64::NAN; n],
            poisson: None,
        };
        spec.poisson = Some(Arc::new(poisson::assemble_p0(&spec)?));
        for i in 0..n {
            if let Some(id) = spec.contact_of[i] {
                if spec.boundary.contacts[&id].ohmic {
                    if !spec.is_transport_node(i) {
                        return Err(DeviceError::OhmicOnInsulator(id));
                    }
                    spec.neutral_phi[i] = spec.neutral_potential(i)?;
                }
            }
        }
        Ok(spec)
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    /// Poisson operator assembled at construction. Changing `boundary` or
    /// `regions` afterwards does not reassemble it.
    pub fn poisson_operator(&self) -> &PoissonOperator {
        self.poisson.as_deref().expect("assembled in DeviceSpec::new")
    }

    pub fn contact_of(&self, node: usize) -> Option<u32> {
        self.contact_of[node]
    }

    /// Electrostatic Dirichlet node.
    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.contact_of[node].is_some()
    }

    pub fn is_transport_node(&self, node: usize) -> bool {
        !self.transport_parts[node].is_empty()
    }

    /// Transport node whose `φ̃_k` is an unknown (not on a contact).
    pub fn is_transport_free(&self, node: usize) -> bool {
        self.is_transport_node(node) && !self.is_dirichlet(node)
    }

    pub fn transport_parts(&self, node: usize) -> &[RegionPart] {
        &self.transport_parts[node]
    }

    /// `|V_i ∩ Ω|`
    pub fn transport_volume(&self, node: usize) -> f64 {
        self.transport_volume[node]
    }

    pub fn edge_transport_parts(&self, edge: usize) -> &[RegionPart] {
        &self.edge_transport[edge]
    }

    /// `Σ_r ε_r σ_r / h` for the Poisson stencil.
    pub fn edge_permittivity(&self, edge: usize) -> f64 {
        self.edge_permittivity[edge]
    }

    /// `∫_{V_i} d̃`
    pub fn doping_charge(&self, node: usize) -> f64 {
        self.doping_charge[node]
    }

    /// Region used for nodal output quantities (largest part).
    pub fn primary_region(&self, node: usize) -> usize {
        self.primary_region[node]
    }

    /// Nodes on the given contact, ascending.
    pub fn contact_nodes(&self, id: u32) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.contact_of[i] == Some(id)).collect()
    }

    pub fn contact_ids(&self) -> Vec<u32> {
        self.boundary.contacts.keys().copied().collect()
    }

    /// `χ_k` in a given region.
    pub fn chi_in(&self, region: usize, k: Carrier, phibar: f64, phi: f64) -> f64 {
        phibar + k.sign() * phi + self.regions[region].band_offset[k.idx()]
    }

    /// `χ_k` at a node, using its primary region's band offset.
    pub fn chemical_potential(&self, state: &DeviceState, node: usize, k: Carrier) -> Option<f64> {
        if !self.is_transport_node(node) {
            return None;
        }
        Some(self.chi_in(self.primary_region[node], k, state.phibar[k.idx()][node], state.phi[node]))
    }

    /// Cell-averaged density `∫_{V_i∩Ω} u_k / |V_i∩Ω|`; zero outside Ω.
    pub fn carrier_density(&self, state: &DeviceState, node: usize, k: Carrier) -> Result<f64, StatisticsError> {
        if !self.is_transport_node(node) {
            return Ok(0.0);
        }
        let (s, _) = self.storage(node, k, state.phibar[k.idx()][node], state.phi[node])?;
        Ok(s / self.transport_volume[node])
    }

    /// `∫_{V_i∩Ω} u_k` and its derivative with respect to `χ_k` (equal to the
    /// derivative with respect to `φ̃_k`).
    pub fn storage(&self, node: usize, k: Carrier, phibar: f64, phi: f64) -> Result<(f64, f64), StatisticsError> {
        let mut s = 0.0;
        let mut ds = 0.0;
        for p in &self.transport_parts[node] {
            let r = &self.regions[p.region];
            let d = self.statistics.derivatives(self.chi_in(p.region, k, phibar, phi))?;
            s += p.measure * r.rho[k.idx()] * d.f;
            ds += p.measure * r.rho[k.idx()] * d.d1;
        }
        Ok((s, ds))
    }

    /// Potential at which the transport part of cell `i` is neutral with
    /// `φ̃_1 = φ̃_2 = 0`.
    fn neutral_potential(&self, i: usize) -> Result<f64, DeviceError> {
        let net = |phi: f64| -> Result<(f64, f64), StatisticsError> {
            let (p, dp) = self.storage(i, Carrier::Holes, 0.0, phi)?;
            let (n, dn) = self.storage(i, Carrier::Electrons, 0.0, phi)?;
            let d: f64 = self.transport_parts[i].iter().map(|q| self.regions[q.region].doping * q.measure).sum();
            // d(p)/dφ = −dp, d(n)/dφ = +dn
            Ok((d + p - n, -dp - dn))
        };
        // charge is strictly decreasing in φ: bracket, then safeguarded Newton
        let (mut lo, mut hi) = (-1.0, 1.0);
        while net(lo)?.0 < 0.0 {
            lo *= 2.0;
            if lo < -512.0 {
                return Err(DeviceError::NoNeutralPotential(i));
            }
        }
        while net(hi)?.0 > 0.0 {
            hi *= 2.0;
            if hi > 512.0 {
                return Err(DeviceError::NoNeutralPotential(i));
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (f, df) = net(x)?;
            if f == 0.0 {
                return Ok(x);
            }
            if f > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x - f / df;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// Electrostatic Dirichlet value at a contact node.
    pub fn dirichlet_phi(&self, node: usize, t: f64) -> f64 {
        let id = self.contact_of[node].expect("not a contact node");
        let c = &self.boundary.contacts[&id];
        let base = if c.ohmic { self.neutral_phi[node] } else { 0.0 };
        base + c.phi.eval(t)
    }

    /// Electrochemical Dirichlet value at a contact node.
    pub fn dirichlet_phibar(&self, node: usize, k: Carrier, t: f64) -> f64 {
        let id = self.contact_of[node].expect("not a contact node");
        self.boundary.contacts[&id].phibar[k.idx()].eval(t)
    }

    /// Overwrite all Dirichlet entries of `state` with the data at `t`.
    pub fn apply_dirichlet(&self, state: &mut DeviceState, t: f64) {
        for i in 0..self.node_count() {
            if self.is_dirichlet(i) {
                state.phi[i] = self.dirichlet_phi(i, t);
                for k in Carrier::BOTH {
                    state.phibar[k.idx()][i] = self.dirichlet_phibar(i, k, t);
                }
            }
        }
    }

    /// Common initial electrochemical potentials of all contacts.
    fn common_contact_phibar(&self, t: f64) -> Result<[f64; 2], DeviceError> {
        let mut common = [0.0; 2];
        for k in Carrier::BOTH {
            let mut first: Option<f64> = None;
            for c in self.boundary.contacts.values() {
                let v = c.phibar[k.idx()].eval(t);
                match first {
                    None => first = Some(v),
                    Some(a) if a != v => {
                        return Err(DeviceError::UnequalInitialContacts { carrier: k.number(), a, b: v })
                    }
                    _ => {}
                }
            }
            common[k.idx()] = first.unwrap_or(0.0);
        }
        Ok(common)
    }

    /// Thermodynamic equilibrium at `t`: constant electrochemical potentials
    /// and the matching solution of the nonlinear Poisson equation.
    pub fn equilibrium_init(&self, t: f64, settings: &PoissonSettings) -> Result<DeviceState, DeviceError> {
        let common = self.common_contact_phibar(t)?;
        let n = self.node_count();
        let mut state = DeviceState { t, phi: vec![0.0; n], phibar: [vec![common[0]; n], vec![common[1]; n]] };
        self.apply_dirichlet(&mut state, t);
        let out = poisson::solve_nonlinear_poisson(self, &state.phibar, t, &state.phi, settings)?;
        state.phi = out.phi;
        Ok(state)
    }
}
