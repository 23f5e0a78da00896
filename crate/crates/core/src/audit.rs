//! Discrete balance laws and terminal currents.
//!
//! Everything here is recomputed edge by edge, independently of the
//! continuity assembler, and shares only the flux function with it. The
//! per-cell quantity is `(S_new − S_old)/Δt − Σ_l J_il − R_i`: the solver
//! residual on free nodes, and the particle inflow through the contact on
//! contact nodes.

use crate::device::{Carrier, DeviceSpec, DeviceState};
use crate::par::{self, Execution};
use crate::recombination::total_rate_and_jacobian;
use crate::statistics::StatisticsError;
use crate::transport::{edge_fluxes, TimeTerm};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("unknown contact {0}")]
    UnknownContact(u32),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

/// Balance quantities of one accepted state.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    /// Largest `|cell balance|` over free transport cells, per carrier.
    pub max_cell_residual: [f64; 2],
    /// Defect of the scalar identity for `Σ(u_1 − u_2)|V_i|`.
    pub global_defect: f64,
    /// Particle inflow `[I_1, I_2]` through each contact.
    pub currents: BTreeMap<u32, [f64; 2]>,
    /// Total electric current (conduction plus displacement) entering the
    /// device through each contact.
    pub total_currents: BTreeMap<u32, f64>,
    /// Current through the capacitive boundary.
    pub robin_current: f64,
    /// `|Σ total currents + Robin current + Σ(R_1 − R_2)|`.
    pub kirchhoff_defect: f64,
}

impl BalanceReport {
    pub fn max_balance_residual(&self) -> f64 {
        self.max_cell_residual[0].max(self.max_cell_residual[1])
    }
}

/// Per-node storage rate and integrated rate of one carrier.
fn source_terms(
    spec: &DeviceSpec,
    state: &DeviceState,
    time: TimeTerm<'_>,
    k: Carrier,
    exec: Execution,
) -> Result<Vec<(f64, f64)>, StatisticsError> {
    par::try_map_indexed(exec, spec.node_count(), |i| {
        if !spec.is_transport_node(i) {
            return Ok((0.0, 0.0));
        }
        let storage = match time {
            TimeTerm::Steady => 0.0,
            TimeTerm::Euler { old, dt } => {
                let (s_new, _) = spec.storage(i, k, state.phibar[k.idx()][i], state.phi[i])?;
                let (s_old, _) = spec.storage(i, k, old.phibar[k.idx()][i], old.phi[i])?;
                (s_new - s_old) / dt
            }
        };
        let r = total_rate_and_jacobian(spec, i, state.t, state.phi[i], [state.phibar[0][i], state.phibar[1][i]])?;
        Ok((storage, r.r[k.idx()]))
    })
}

/// Cell balance of both carriers at every node; zero outside Ω.
pub fn cell_balance(
    spec: &DeviceSpec,
    state: &DeviceState,
    time: TimeTerm<'_>,
    exec: Execution,
) -> Result<[Vec<f64>; 2], StatisticsError> {
    let mut out = [Vec::new(), Vec::new()];
    for k in Carrier::BOTH {
        let sources = source_terms(spec, state, time, k, exec)?;
        let mut b: Vec<f64> = sources.iter().map(|(s, r)| s - r).collect();
        let fluxes = edge_fluxes(spec, k, &state.phi, &state.phibar[k.idx()], exec)?;
        for (e, f) in fluxes.iter().enumerate() {
            let [i, l] = spec.dual.edges[e];
            b[i] -= f.value;
            b[l] += f.value;
        }
        out[k.idx()] = b;
    }
    Ok(out)
}

/// Particle inflow of carrier `k` through one contact.
pub fn terminal_current(
    spec: &DeviceSpec,
    state: &DeviceState,
    time: TimeTerm<'_>,
    contact: u32,
    k: Carrier,
    exec: Execution,
) -> Result<f64, AuditError> {
    if !spec.boundary.contacts.contains_key(&contact) {
        return Err(AuditError::UnknownContact(contact));
    }
    let b = cell_balance(spec, state, time, exec)?;
    Ok(spec.contact_nodes(contact).iter().map(|&i| b[k.idx()][i]).sum())
}

/// `Σ_i (u_1 − u_2)` balance over the free transport cells:
/// `|Δ(S_1 − S_2)/Δt − Σ_contacts (F_1 − F_2) − Σ(R_1 − R_2)|`, with `F_k`
/// the raw SG flux from the contact cells into the free region.
pub fn global_balance(
    spec: &DeviceSpec,
    state: &DeviceState,
    time: TimeTerm<'_>,
    exec: Execution,
) -> Result<f64, StatisticsError> {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for k in Carrier::BOTH {
        let sign = if k == Carrier::Holes { 1.0 } else { -1.0 };
        let sources = source_terms(spec, state, time, k, exec)?;
        for (i, (s, r)) in sources.iter().enumerate() {
            if spec.is_transport_free(i) {
                lhs += sign * s;
                rhs += sign * r;
            }
        }
        rhs += sign * boundary_influx(spec, state, k, exec)?.values().sum::<f64>();
    }
    Ok((lhs - rhs).abs())
}

/// Raw SG flux from each contact's cells into the free region.
fn boundary_influx(
    spec: &DeviceSpec,
    state: &DeviceState,
    k: Carrier,
    exec: Execution,
) -> Result<BTreeMap<u32, f64>, StatisticsError> {
    let fluxes = edge_fluxes(spec, k, &state.phi, &state.phibar[k.idx()], exec)?;
    let mut out: BTreeMap<u32, f64> = spec.contact_ids().into_iter().map(|c| (c, 0.0)).collect();
    for (e, f) in fluxes.iter().enumerate() {
        let [i, l] = spec.dual.edges[e];
        match (spec.contact_of(i), spec.contact_of(l)) {
            (Some(c), None) => *out.get_mut(&c).unwrap() -= f.value,
            (None, Some(c)) => *out.get_mut(&c).unwrap() += f.value,
            _ => {}
        }
    }
    Ok(out)
}

/// Electric flux from each contact's cells into the free region,
/// `Σ ε σ/h (φ_c − φ_l)`.
fn contact_field_flux(spec: &DeviceSpec, phi: &[f64]) -> BTreeMap<u32, f64> {
    let mut out: BTreeMap<u32, f64> = spec.contact_ids().into_iter().map(|c| (c, 0.0)).collect();
    for e in 0..spec.dual.edge_count() {
        let [i, l] = spec.dual.edges[e];
        let a = spec.edge_permittivity(e);
        match (spec.contact_of(i), spec.contact_of(l)) {
            (Some(c), None) => *out.get_mut(&c).unwrap() += a * (phi[i] - phi[l]),
            (None, Some(c)) => *out.get_mut(&c).unwrap() += a * (phi[l] - phi[i]),
            _ => {}
        }
    }
    out
}

/// Charge held by the capacitive boundary, `Σ_free ε_Γ|∂V_i∩Γ|(φ_i − φ_Γ)`.
fn robin_charge(spec: &DeviceSpec, phi: &[f64], t: f64) -> f64 {
    let op = spec.poisson_operator();
    let datum = spec.boundary.robin.datum.eval(t);
    op.free_nodes().iter().map(|&i| op.robin_weight(i) * (phi[i] - datum)).sum()
}

/// All balance quantities of `state` (reached from `old` when transient).
pub fn balance_report(
    spec: &DeviceSpec,
    state: &DeviceState,
    time: TimeTerm<'_>,
    exec: Execution,
) -> Result<BalanceReport, StatisticsError> {
    let b = cell_balance(spec, state, time, exec)?;
    let mut max_cell_residual = [0.0f64; 2];
    for k in Carrier::BOTH {
        for i in 0..spec.node_count() {
            if spec.is_transport_free(i) {
                max_cell_residual[k.idx()] = max_cell_residual[k.idx()].max(b[k.idx()][i].abs());
            }
        }
    }
    let currents: BTreeMap<u32, [f64; 2]> = spec
        .contact_ids()
        .into_iter()
        .map(|c| {
            let nodes = spec.contact_nodes(c);
            let sum = |k: usize| nodes.iter().map(|&i| b[k][i]).sum::<f64>();
            (c, [sum(0), sum(1)])
        })
        .collect();

    let f1 = boundary_influx(spec, state, Carrier::Holes, exec)?;
    let f2 = boundary_influx(spec, state, Carrier::Electrons, exec)?;
    let field = contact_field_flux(spec, &state.phi);
    let (field_old, robin_current) = match time {
        TimeTerm::Steady => (None, 0.0),
        TimeTerm::Euler { old, dt } => (
            Some(contact_field_flux(spec, &old.phi)),
            -(robin_charge(spec, &state.phi, state.t) - robin_charge(spec, &old.phi, old.t)) / dt,
        ),
    };
    let mut total_currents = BTreeMap::new();
    for c in spec.contact_ids() {
        let displacement = match (&field_old, time) {
            (Some(old), TimeTerm::Euler { dt, .. }) => (field[&c] - old[&c]) / dt,
            _ => 0.0,
        };
        total_currents.insert(c, f1[&c] - f2[&c] + displacement);
    }
    let mut reaction = 0.0;
    for i in 0..spec.node_count() {
        if spec.is_transport_free(i) {
            let r = total_rate_and_jacobian(spec, i, state.t, state.phi[i], [state.phibar[0][i], state.phibar[1][i]])?;
            reaction += r.r[0] - r.r[1];
        }
    }
    let kirchhoff_defect = (total_currents.values().sum::<f64>() + robin_current + reaction).abs();
    let global_defect = global_balance(spec, state, time, exec)?;
    Ok(BalanceReport { max_cell_residual, global_defect, currents, total_currents, robin_current, kirchhoff_defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{BoundarySpec, ContactSpec, MaterialRegion, Ramp};
    use crate::mesh::{build_dual, BoundaryEdge, BoundaryTag, Mesh, ObtusePolicy, Triangle};
    use crate::poisson::PoissonSettings;
    use crate::presets::PnDiode;
    use crate::recombination::{RateContext, RateHook, RecombinationModel};
    use crate::statistics::StatisticsModel;
    use crate::transport::{bernoulli, ContinuityProblem};
    use std::sync::Arc;

    #[test]
    fn equilibrium_balances() {
        let spec = PnDiode::default().with_mesh(16, 2).with_recombination(RecombinationModel { srh: true, ..Default::default() }).build().unwrap();
        let s = spec.equilibrium_init(0.0, &PoissonSettings::default()).unwrap();
        for time in [TimeTerm::Steady, TimeTerm::Euler { old: &s, dt: 1e-3 }] {
            let r = balance_report(&spec, &s, time, Execution::Sequential).unwrap();
            assert!(r.max_balance_residual() <= 1e-12);
            assert!(r.global_defect <= 1e-12);
            assert!(r.kirchhoff_defect <= 1e-12);
            for c in r.currents.values() {
                assert!(c[0].abs() <= 1e-12 && c[1].abs() <= 1e-12);
            }
        }
    }

    /// Unit square split along its diagonal, contacts on the left and right.
    fn two_triangles(recomb: RecombinationModel) -> DeviceSpec {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let tris = vec![Triangle { nodes: [0, 1, 2], region: 0 }, Triangle { nodes: [0, 2, 3], region: 0 }];
        let edges = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Neumann },
            BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Contact(1) },
            BoundaryEdge { nodes: [2, 3], tag: BoundaryTag::Neumann },
            BoundaryEdge { nodes: [3, 0], tag: BoundaryTag::Contact(0) },
        ];
        let mesh = Arc::new(Mesh::new(nodes, tris, edges, vec!["0".into()]).unwrap());
        let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject).unwrap());
        let mut b = BoundarySpec::default();
        b.contacts.insert(0, ContactSpec::gate(Ramp::constant(0.0)));
        b.contacts.insert(1, ContactSpec::gate(Ramp::constant(0.0)));
        let regions = [("0".to_string(), MaterialRegion::default())].into_iter().collect();
        DeviceSpec::new(mesh, dual, &regions, b, StatisticsModel::boltzmann(), recomb, None).unwrap()
    }

    #[test]
    fn two_triangle_direct_evaluation() {
        // every node is a contact node, so each cell balance is that node's inflow
        let spec = two_triangles(RecombinationModel { srh: true, ..Default::default() });
        let s = DeviceState {
            t: 0.0,
            phi: vec![0.0, 0.4, 0.9, -0.2],
            phibar: [vec![0.1, -0.3, 0.2, 0.0], vec![-0.1, 0.05, 0.3, 0.2]],
        };
        let b = cell_balance(&spec, &s, TimeTerm::Steady, Execution::Sequential).unwrap();
        // right triangle legs have σ = 1/2 with h = 1; the diagonal has σ = 0
        let flux = |i: usize, l: usize, k: usize| {
            let sg = if k == 0 { -1.0 } else { 1.0 };
            let (ci, cl) = (s.phibar[k][i] + sg * s.phi[i], s.phibar[k][l] + sg * s.phi[l]);
            let dpsi = sg * (s.phi[l] - s.phi[i]);
            0.5 * (bernoulli(dpsi) * cl.exp() - bernoulli(-dpsi) * ci.exp())
        };
        let u = |i: usize, k: usize| {
            let sg = if k == 0 { -1.0 } else { 1.0 };
            (s.phibar[k][i] + sg * s.phi[i]).exp()
        };
        for k in 0..2 {
            for (i, nbrs) in [(0usize, [1usize, 3]), (1, [0, 2]), (2, [1, 3]), (3, [2, 0])] {
                let srh = (u(i, 0) * u(i, 1) - 1.0) / (u(i, 0) + 1.0 + u(i, 1) + 1.0);
                let expect = -(flux(i, nbrs[0], k) + flux(i, nbrs[1], k)) + 0.25 * srh;
                assert!((b[k][i] - expect).abs() < 1e-14, "k={k} i={i}: {} vs {expect}", b[k][i]);
            }
        }
    }

    #[derive(Debug)]
    struct HoleGeneration(f64);
    impl RateHook for HoleGeneration {
        fn rates(&self, _: &RateContext<'_>) -> [f64; 2] {
            [self.0, 0.0]
        }
    }

    #[test]
    fn cell_balance_matches_assembler() {
        let spec = PnDiode::default()
            .with_mesh(12, 3)
            .with_recombination(RecombinationModel { srh: true, custom: Some(Arc::new(HoleGeneration(0.3))), ..Default::default() })
            .build()
            .unwrap();
        let n = spec.node_count();
        let mut s = DeviceState::uniform(n, 0.0);
        for i in 0..n {
            s.phi[i] = (i as f64 * 0.37).sin();
            s.phibar[0][i] = 0.1 * (i as f64 * 0.11).cos();
            s.phibar[1][i] = -0.2 * (i as f64 * 0.23).sin();
        }
        let old = DeviceState { phi: s.phi.iter().map(|p| p * 0.9).collect(), ..s.clone() };
        let time = TimeTerm::Euler { old: &old, dt: 0.05 };
        let b = cell_balance(&spec, &s, time, Execution::Sequential).unwrap();
        for k in Carrier::BOTH {
            let p = ContinuityProblem { spec: &spec, k, t: 0.0, phi: &s.phi, time, exec: Execution::Sequential };
            let r = p.residual(&s.phibar).unwrap();
            for i in 0..n {
                if spec.is_transport_free(i) {
                    assert!((r[i] - b[k.idx()][i]).abs() <= 1e-13, "{} vs {}", r[i], b[k.idx()][i]);
                }
            }
        }
        // unequal rates leave the scalar identity intact
        let defect = global_balance(&spec, &s, time, Execution::Sequential).unwrap();
        let sum: f64 = (0..n).filter(|&i| spec.is_transport_free(i)).map(|i| b[0][i] - b[1][i]).sum();
        assert!((defect - sum.abs()).abs() <= 1e-12);
    }

    #[test]
    fn unknown_contact() {
        let spec = PnDiode::default().with_mesh(4, 1).build().unwrap();
        let s = DeviceState::uniform(spec.node_count(), 0.0);
        assert_eq!(
            terminal_current(&spec, &s, TimeTerm::Steady, 9, Carrier::Holes, Execution::Sequential),
            Err(AuditError::UnknownContact(9))
        );
    }
}
