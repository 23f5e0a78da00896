//! Discrete current-continuity equations.
//!
//! For a transport node `i` off the contacts the implicit-Euler row is
//! `(S_k,i(φ̃) − S_k,i^old)/Δt − Σ_l J_il − R_k,i`, where `S` is the stored
//! charge `∫_{V_i∩Ω} u_k`, `J_il` the SG influx across `∂V_i ∩ ∂V_l` and `R`
//! the integrated rate. The Gummel inner problem freezes `φ` and the other
//! carrier, so the Jacobian couples `φ̃_k` only.

mod sg;

pub use sg::{bernoulli, bernoulli_prime, material_flux, sg_flux, sg_flux_at, EdgeFlux, FluxEnds};

use crate::device::{Carrier, DeviceSpec, DeviceState};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::par::{self, Execution};
use crate::recombination::total_rate_and_jacobian;
use crate::statistics::StatisticsError;

/// How the time derivative enters a continuity row.
#[derive(Debug, Clone, Copy)]
pub enum TimeTerm<'a> {
    /// Storage term dropped.
    Steady,
    /// Backward Euler from `old` with step `dt`.
    Euler { old: &'a DeviceState, dt: f64 },
}

/// Frozen data for one carrier's continuity problem.
#[derive(Debug, Clone, Copy)]
pub struct ContinuityProblem<'a> {
    pub spec: &'a DeviceSpec,
    pub k: Carrier,
    pub t: f64,
    pub phi: &'a [f64],
    pub time: TimeTerm<'a>,
    pub exec: Execution,
}

/// Residual over all nodes and Jacobian over the unknowns.
///
/// Contact rows hold `φ̃_k − φ̃_k,D(t)` and nodes outside the transport
/// region hold zero. `unknowns` lists the transport nodes off the contacts in
/// the order of the Jacobian rows.
#[derive(Debug, Clone)]
pub struct ContinuityAssembly {
    pub residual: Vec<f64>,
    pub jacobian: CsrMatrix,
    pub unknowns: Vec<usize>,
}

/// Transport nodes off the contacts, ascending.
pub fn continuity_unknowns(spec: &DeviceSpec) -> Vec<usize> {
    (0..spec.node_count()).filter(|&i| spec.is_transport_free(i)).collect()
}

/// SG fluxes of carrier `k` on every edge, in stored orientation.
pub fn edge_fluxes(
    spec: &DeviceSpec,
    k: Carrier,
    phi: &[f64],
    phibar_k: &[f64],
    exec: Execution,
) -> Result<Vec<EdgeFlux>, StatisticsError> {
    par::try_map_indexed(exec, spec.dual.edge_count(), |e| sg_flux(spec, phi, phibar_k, e, k))
}

/// Per-node pieces of a continuity row.
#[derive(Debug, Clone, Copy, Default)]
struct NodeTerms {
    residual: f64,
    diagonal: f64,
}

impl ContinuityProblem<'_> {
    fn storage_terms(&self, i: usize, phibar: &[Vec<f64>; 2]) -> Result<(f64, f64), StatisticsError> {
        match self.time {
            TimeTerm::Steady => Ok((0.0, 0.0)),
            TimeTerm::Euler { old, dt } => {
                let k = self.k;
                let (s_new, ds) = self.spec.storage(i, k, phibar[k.idx()][i], self.phi[i])?;
                let (s_old, _) = self.spec.storage(i, k, old.phibar[k.idx()][i], old.phi[i])?;
                Ok(((s_new - s_old) / dt, ds / dt))
            }
        }
    }

    fn node_terms(
        &self,
        i: usize,
        phibar: &[Vec<f64>; 2],
        fluxes: &[EdgeFlux],
        with_jacobian: bool,
    ) -> Result<NodeTerms, StatisticsError> {
        let spec = self.spec;
        let k = self.k;
        if !spec.is_transport_node(i) {
            return Ok(NodeTerms::default());
        }
        if spec.is_dirichlet(i) {
            return Ok(NodeTerms { residual: phibar[k.idx()][i] - spec.dirichlet_phibar(i, k, self.t), diagonal: 1.0 });
        }
        let (st, dst) = self.storage_terms(i, phibar)?;
        let rates = total_rate_and_jacobian(spec, i, self.t, self.phi[i], [phibar[0][i], phibar[1][i]])?;
        let mut res = st - rates.r[k.idx()];
        let mut diag = dst - rates.jac.d_phibar[k.idx()][k.idx()];
        for &e in &spec.dual.node_edges[i] {
            let f = &fluxes[e];
            if spec.dual.edges[e][0] == i {
                res -= f.value;
                diag -= f.d_phibar[0];
            } else {
                res += f.value;
                diag += f.d_phibar[1];
            }
        }
        if !with_jacobian {
            diag = 0.0;
        }
        Ok(NodeTerms { residual: res, diagonal: diag })
    }

    /// Residual only, for line searches.
    pub fn residual(&self, phibar: &[Vec<f64>; 2]) -> Result<Vec<f64>, StatisticsError> {
        let fluxes = edge_fluxes(self.spec, self.k, self.phi, &phibar[self.k.idx()], self.exec)?;
        let terms = par::try_map_indexed(self.exec, self.spec.node_count(), |i| self.node_terms(i, phibar, &fluxes, false))?;
        Ok(terms.into_iter().map(|t| t.residual).collect())
    }

    /// Residual and Jacobian with respect to `φ̃_k` at the unknowns.
    pub fn assemble(&self, phibar: &[Vec<f64>; 2]) -> Result<ContinuityAssembly, StatisticsError> {
        let spec = self.spec;
        let fluxes = edge_fluxes(spec, self.k, self.phi, &phibar[self.k.idx()], self.exec)?;
        let terms = par::try_map_indexed(self.exec, spec.node_count(), |i| self.node_terms(i, phibar, &fluxes, true))?;
        let unknowns = continuity_unknowns(spec);
        let mut index = vec![usize::MAX; spec.node_count()];
        for (r, &i) in unknowns.iter().enumerate() {
            index[i] = r;
        }
        let mut b = TripletBuilder::with_capacity(unknowns.len(), unknowns.len(), unknowns.len() + 2 * fluxes.len());
        for (r, &i) in unknowns.iter().enumerate() {
            b.push(r, r, terms[i].diagonal);
        }
        for (e, f) in fluxes.iter().enumerate() {
            let [i, l] = spec.dual.edges[e];
            // row i holds −J, row l holds +J
            if index[i] != usize::MAX && index[l] != usize::MAX {
                b.push(index[i], index[l], -f.d_phibar[1]);
                b.push(index[l], index[i], f.d_phibar[0]);
            }
        }
        Ok(ContinuityAssembly {
            residual: terms.into_iter().map(|t| t.residual).collect(),
            jacobian: b.build(),
            unknowns,
        })
    }
}
