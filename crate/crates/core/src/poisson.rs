//! Finite-volume Poisson operator and the nonlinear Poisson equation.
//!
//! Row `i` of the operator is the flux balance of the Voronoi cell `V_i`:
//! `Σ_l ε_il σ_il/h_il (φ_i − φ_l) + ε_Γ |∂V_i ∩ Γ| φ_i`. Contact nodes are
//! Dirichlet nodes and are eliminated, so the operator acting on the free
//! nodes is a symmetric M-matrix.
//!
//! The nonlinear residual at a free node is
//! `K_i(φ) = (P₀φ)_i − ∫_{V_i} d̃ − ∫_{V_i∩Ω} (u_1 − u_2) − ε_Γ φ_Γ |∂V_i ∩ Γ|`
//! with `u_1 = ρ_1F(φ̃_1 − φ + b_1)` and `u_2 = ρ_2F(φ̃_2 + φ + b_2)`. It is
//! strongly monotone in `φ`, and its Jacobian `P₀ + diag(N_1 + N_2)` with
//! `N_k = ∫ρ_kF'(χ_k)` is again an M-matrix.

use crate::device::{Carrier, DeviceSpec};
use crate::linalg::{factor_and_solve, norm_inf, CsrMatrix, LinalgError, LinearSolverOptions, SolveDiagnostics, TripletBuilder};
use crate::par::{self, Execution};
use crate::statistics::StatisticsError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoissonError {
    #[error("Poisson operator is not an M-matrix: entry ({row}, {col}) = {value:e}")]
    NotMMatrix { row: usize, col: usize, value: f64 },
    #[error("Poisson operator row {row} has negative row sum {sum:e}")]
    NegativeRowSum { row: usize, sum: f64 },
    #[error("Poisson operator is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("nonlinear Poisson: no convergence in {iterations} Newton steps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("nonlinear Poisson: line search stalled at step {iteration} (residual {residual:e})")]
    LineSearch { iteration: usize, residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSettings {
    /// Stop when `‖K‖∞` drops to this.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub linear: LinearSolverOptions,
    pub exec: Execution,
}

impl Default for PoissonSettings {
    fn default() -> Self {
        PoissonSettings {
            newton_tol: 1e-10,
            max_newton_iters: 100,
            linear: LinearSolverOptions::default(),
            exec: Execution::default(),
        }
    }
}

/// Assembled `P₀` with its Dirichlet elimination data.
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    /// Full stencil over all nodes, including Robin diagonal terms.
    stiffness: CsrMatrix,
    /// Restriction of `stiffness` to the free nodes.
    reduced: CsrMatrix,
    /// `ε_Γ |∂V_i ∩ Γ|` per node.
    robin: Vec<f64>,
    dirichlet: Vec<bool>,
    /// Free nodes in ascending order, and the inverse map.
    free: Vec<usize>,
    free_index: Vec<usize>,
}

const NOT_FREE: usize = usize::MAX;

/// Assemble the Poisson operator of a device.
///
/// The edge coefficient sums the region parts of the dual interface, each
/// with its own edge-projected permittivity. Assembly fails unless the free
/// block is a symmetric M-matrix with non-negative row sums.
pub fn assemble_p0(spec: &DeviceSpec) -> Result<PoissonOperator, PoissonError> {
    let n = spec.node_count();
    let dual = &spec.dual;
    let dirichlet: Vec<bool> = (0..n).map(|i| spec.is_dirichlet(i)).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !dirichlet[i]).collect();
    let mut free_index = vec![NOT_FREE; n];
    for (k, &i) in free.iter().enumerate() {
        free_index[i] = k;
    }
    let cap = spec.boundary.robin.capacity;
    let robin: Vec<f64> = dual.neumann_measure.iter().map(|m| cap * m).collect();

    let mut full = TripletBuilder::with_capacity(n, n, 4 * dual.edge_count() + n);
    let mut red = TripletBuilder::with_capacity(free.len(), free.len(), 4 * dual.edge_count() + n);
    for i in 0..n {
        full.push(i, i, robin[i]);
        if !dirichlet[i] {
            red.push(free_index[i], free_index[i], robin[i]);
        }
    }
    for e in 0..dual.edge_count() {
        let [i, l] = dual.edges[e];
        let a = spec.edge_permittivity(e);
        if a < 0.0 {
            return Err(PoissonError::NotMMatrix { row: i, col: l, value: -a });
        }
        full.push(i, i, a);
        full.push(l, l, a);
        full.push(i, l, -a);
        full.push(l, i, -a);
        let (fi, fl) = (free_index[i], free_index[l]);
        if fi != NOT_FREE {
            red.push(fi, fi, a);
        }
        if fl != NOT_FREE {
            red.push(fl, fl, a);
        }
        if fi != NOT_FREE && fl != NOT_FREE {
            red.push(fi, fl, -a);
            red.push(fl, fi, -a);
        }
    }
    let stiffness = full.build().with_symmetric_flag(true);
    let reduced = red.build().with_symmetric_flag(true);
    for &i in &free {
        let mut sum = 0.0;
        let mut scale = 0.0f64;
        for (j, v) in stiffness.row(i) {
            if j != i && v > 0.0 {
                return Err(PoissonError::NotMMatrix { row: i, col: j, value: v });
            }
            sum += v;
            scale = scale.max(v.abs());
        }
        if sum < -1e-12 * scale {
            return Err(PoissonError::NegativeRowSum { row: i, sum });
        }
    }
    let asym = reduced.asymmetry();
    if asym > 0.0 {
        return Err(PoissonError::Asymmetric(asym));
    }
    Ok(PoissonOperator { stiffness, reduced, robin, dirichlet, free, free_index })
}

impl PoissonOperator {
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn reduced(&self) -> &CsrMatrix {
        &self.reduced
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    /// Position of `node` among the free unknowns.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        Some(self.free_index[node]).filter(|&k| k != NOT_FREE)
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    /// `ε_Γ |∂V_i ∩ Γ|`
    pub fn robin_weight(&self, node: usize) -> f64 {
        self.robin[node]
    }

    /// `P₀φ` over all nodes.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        self.stiffness.matvec(phi)
    }

    /// Solve `(P₀φ)_i = rhs_i` on free nodes with `φ = dirichlet_values` on
    /// Dirichlet nodes. `rhs` is already integrated over the cells.
    pub fn solve_linear(
        &self,
        rhs: &[f64],
        dirichlet_values: &[f64],
        opts: &LinearSolverOptions,
    ) -> Result<(Vec<f64>, SolveDiagnostics), PoissonError> {
        let n = self.dirichlet.len();
        if rhs.len() != n || dirichlet_values.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: rhs.len().min(dirichlet_values.len()) }.into());
        }
        let mut phi: Vec<f64> = (0..n).map(|i| if self.dirichlet[i] { dirichlet_values[i] } else { 0.0 }).collect();
        // move the Dirichlet columns to the right-hand side
        let lift = self.stiffness.matvec(&phi);
        let b: Vec<f64> = self.free.iter().map(|&i| rhs[i] - lift[i]).collect();
        let (x, diag) = if self.free.is_empty() {
            (Vec::new(), SolveDiagnostics { residual: 0.0, bound: 0.0, backward_error: 0.0, refinement_steps: 0, iterations: 0 })
        } else {
            factor_and_solve(&self.reduced, &b, opts)?
        };
        for (k, &i) in self.free.iter().enumerate() {
            phi[i] = x[k];
        }
        Ok((phi, diag))
    }
}

/// Outcome of [`solve_nonlinear_poisson`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub phi: Vec<f64>,
    /// `‖K‖∞` before the first step and after every accepted step.
    pub history: Vec<f64>,
    /// Damping factor of every accepted step.
    pub damping: Vec<f64>,
}

impl PoissonSolution {
    pub fn iterations(&self) -> usize {
        self.damping.len()
    }
}

/// Residual `K(φ)` over all nodes (Dirichlet rows hold `φ_i − φ_D,i`) and the
/// Newton diagonal `N_1 + N_2`.
pub fn residual_and_weights(
    spec: &DeviceSpec,
    phibar: &[Vec<f64>; 2],
    t: f64,
    phi: &[f64],
    exec: Execution,
) -> Result<(Vec<f64>, Vec<f64>), PoissonError> {
    let op = spec.poisson_operator();
    let ap = op.apply(phi);
    let datum = spec.boundary.robin.datum.eval(t);
    let rows = par::try_map_indexed(exec, spec.node_count(), |i| -> Result<(f64, f64), StatisticsError> {
        if op.dirichlet[i] {
            return Ok((phi[i] - spec.dirichlet_phi(i, t), 0.0));
        }
        let (u1, n1) = spec.storage(i, Carrier::Holes, phibar[0][i], phi[i])?;
        let (u2, n2) = spec.storage(i, Carrier::Electrons, phibar[1][i], phi[i])?;
        let k = ap[i] - spec.doping_charge(i) - u1 + u2 - op.robin[i] * datum;
        Ok((k, n1 + n2))
    })?;
    Ok(rows.into_iter().unzip())
}

/// Newton matrix `P₀ + diag(N_1 + N_2)` on the free nodes.
pub fn newton_matrix(op: &PoissonOperator, weights: &[f64]) -> CsrMatrix {
    let d: Vec<f64> = op.free.iter().map(|&i| weights[i]).collect();
    op.reduced.add_diagonal(&d)
}

/// Damped Newton for the nonlinear Poisson equation at frozen `φ̃_k`.
///
/// Steps are accepted when `‖K‖∞` decreases by the Armijo factor
/// `1 − 10⁻⁴λ`; the damping `λ` halves down to `2⁻²⁰`. Trial points where the
/// statistics overflow count as rejected.
pub fn solve_nonlinear_poisson(
    spec: &DeviceSpec,
    phibar: &[Vec<f64>; 2],
    t: f64,
    phi_init: &[f64],
    settings: &PoissonSettings,
) -> Result<PoissonSolution, PoissonError> {
    let op = spec.poisson_operator();
    let mut phi = phi_init.to_vec();
    for i in 0..phi.len() {
        if op.dirichlet[i] {
            phi[i] = spec.dirichlet_phi(i, t);
        }
    }
    let (mut k, mut w) = residual_and_weights(spec, phibar, t, &phi, settings.exec)?;
    let mut norm = norm_inf(&k);
    let mut history = vec![norm];
    let mut damping = Vec::new();
    for it in 0..settings.max_newton_iters {
        if norm <= settings.newton_tol {
            return Ok(PoissonSolution { phi, history, damping });
        }
        let jac = newton_matrix(op, &w);
        let rhs: Vec<f64> = op.free.iter().map(|&i| -k[i]).collect();
        let (delta, _) = factor_and_solve(&jac, &rhs, &settings.linear)?;
        let mut lambda = 1.0;
        loop {
            let mut trial = phi.clone();
            for (j, &i) in op.free.iter().enumerate() {
                trial[i] += lambda * delta[j];
            }
            if let Ok((kt, wt)) = residual_and_weights(spec, phibar, t, &trial, settings.exec) {
                let nt = norm_inf(&kt);
                if nt.is_finite() && (nt <= (1.0 - 1e-4 * lambda) * norm || nt <= settings.newton_tol) {
                    phi = trial;
                    k = kt;
                    w = wt;
                    norm = nt;
                    history.push(nt);
                    damping.push(lambda);
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < f64::powi(2.0, -20) {
                return Err(PoissonError::LineSearch { iteration: it, residual: norm });
            }
        }
    }
    if norm <= settings.newton_tol {
        return Ok(PoissonSolution { phi, history, damping });
    }
    Err(PoissonError::NotConverged { iterations: settings.max_newton_iters, residual: norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{BoundarySpec, ContactSpec, DeviceState, MaterialRegion, Ramp, RobinSpec, Tensor2};
    use crate::mesh::{build_dual, generate_rect_mesh, BoundaryTag, ContactLayout, Mesh, ObtusePolicy};
    use crate::recombination::RecombinationModel;
    use crate::statistics::{GChoice, StatisticsModel};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn device(mesh: Mesh, region: MaterialRegion, contacts: &[(u32, ContactSpec)], robin: RobinSpec) -> DeviceSpec {
        let mesh = Arc::new(mesh);
        let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject).unwrap());
        let mut regions = BTreeMap::new();
        regions.insert("0".to_string(), region);
        let boundary = BoundarySpec { contacts: contacts.iter().cloned().collect(), robin };
        DeviceSpec::new(mesh, dual, &regions, boundary, StatisticsModel::boltzmann(), RecombinationModel::default(), None)
            .unwrap()
    }

    /// All four sides on contact 0.
    fn all_contact(n: usize) -> Mesh {
        let m = generate_rect_mesh(n, n, 1.0, 1.0, ContactLayout::default());
        let edges = m
            .boundary_edges()
            .iter()
            .map(|e| crate::mesh::BoundaryEdge { nodes: e.nodes, tag: BoundaryTag::Contact(0) })
            .collect();
        Mesh::new(m.nodes().to_vec(), m.triangles().to_vec(), edges, m.region_names().to_vec()).unwrap()
    }

    fn insulator_like() -> MaterialRegion {
        MaterialRegion { transport: false, ..Default::default() }
    }

    #[test]
    fn five_point_stencil() {
        let spec = device(all_contact(2), insulator_like(), &[(0, ContactSpec::gate(Ramp::constant(0.0)))], Default::default());
        let op = spec.poisson_operator();
        assert_eq!(op.free_nodes(), &[4]);
        let a = op.stiffness();
        assert!((a.get(4, 4) - 4.0).abs() < 1e-14);
        for l in [1, 3, 5, 7] {
            assert!((a.get(4, l) + 1.0).abs() < 1e-14);
        }
        for l in [0, 2, 6, 8] {
            assert_eq!(a.get(4, l), 0.0);
        }
    }

    #[test]
    fn scaling_with_permittivity() {
        let gate = [(0, ContactSpec::gate(Ramp::constant(0.0)))];
        let one = device(all_contact(3), insulator_like(), &gate, Default::default());
        let two = device(all_contact(3), MaterialRegion { eps: Tensor2::isotropic(2.0), ..insulator_like() }, &gate, Default::default());
        let (a, b) = (one.poisson_operator().reduced(), two.poisson_operator().reduced());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn unsolvable_without_contact_or_capacity() {
        let m = generate_rect_mesh(2, 2, 1.0, 1.0, ContactLayout { left: None, right: None });
        let mesh = Arc::new(m);
        let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject).unwrap());
        let mut regions = BTreeMap::new();
        regions.insert("0".to_string(), insulator_like());
        let r = DeviceSpec::new(
            mesh.clone(),
            dual.clone(),
            &regions,
            BoundarySpec::default(),
            StatisticsModel::boltzmann(),
            RecombinationModel::default(),
            None,
        );
        assert!(matches!(r, Err(crate::device::DeviceError::Mesh(crate::mesh::MeshError::Unsolvable))));
        // a capacitive boundary makes it solvable
        let robin = RobinSpec { capacity: 0.5, datum: Ramp::constant(1.0) };
        let spec = DeviceSpec::new(
            mesh,
            dual,
            &regions,
            BoundarySpec { contacts: BTreeMap::new(), robin },
            StatisticsModel::boltzmann(),
            RecombinationModel::default(),
            None,
        )
        .unwrap();
        let op = spec.poisson_operator();
        let rhs: Vec<f64> = (0..9).map(|i| op.robin_weight(i)).collect();
        let (phi, _) = op.solve_linear(&rhs, &[0.0; 9], &Default::default()).unwrap();
        // the datum is reproduced exactly
        for p in phi {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_and_affine_are_exact() {
        let spec = device(all_contact(6), insulator_like(), &[(0, ContactSpec::gate(Ramp::constant(0.0)))], Default::default());
        let op = spec.poisson_operator();
        let n = spec.node_count();
        let (phi, _) = op.solve_linear(&vec![0.0; n], &vec![2.5; n], &Default::default()).unwrap();
        assert!(phi.iter().all(|p| (p - 2.5).abs() < 1e-13));
        let exact: Vec<f64> = spec.mesh.nodes().iter().map(|p| p[0] - 0.3 * p[1]).collect();
        let (phi, diag) = op.solve_linear(&vec![0.0; n], &exact, &Default::default()).unwrap();
        assert!(diag.within_bound());
        for (a, b) in phi.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_maximum_principle() {
        let spec = device(all_contact(6), insulator_like(), &[(0, ContactSpec::gate(Ramp::constant(0.0)))], Default::default());
        let op = spec.poisson_operator();
        let n = spec.node_count();
        let mut rhs = vec![0.0; n];
        rhs[3 * 7 + 3] = 1.0;
        let (phi, _) = op.solve_linear(&rhs, &vec![0.0; n], &Default::default()).unwrap();
        assert!(phi.iter().all(|p| *p >= 0.0));
        assert!(phi[24] > 0.0);
    }

    fn pn(n: usize) -> DeviceSpec {
        let ni = 1e-4;
        let mesh = generate_rect_mesh(n, 2, 1.0, 0.125, ContactLayout::default())
            .retag_regions(vec!["p".into(), "n".into()], |c| usize::from(c[0] > 0.5));
        let mesh = Arc::new(mesh);
        let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject).unwrap());
        let mut regions = BTreeMap::new();
        let base = MaterialRegion { eps: Tensor2::isotropic(1e-3), ..MaterialRegion::intrinsic(ni) };
        regions.insert("p".to_string(), MaterialRegion { doping: -1.0, ..base.clone() });
        regions.insert("n".to_string(), MaterialRegion { doping: 1.0, ..base });
        let mut b = BoundarySpec::default();
        b.contacts.insert(0, ContactSpec::grounded());
        b.contacts.insert(1, ContactSpec::grounded());
        DeviceSpec::new(mesh, dual, &regions, b, StatisticsModel::boltzmann(), RecombinationModel::default(), None).unwrap()
    }

    #[test]
    fn carriers_off_is_linear() {
        let spec = device(
            generate_rect_mesh(3, 3, 1.0, 1.0, ContactLayout::default()),
            MaterialRegion { rho: [1e-300, 1e-300], ..Default::default() },
            &[(0, ContactSpec::gate(Ramp::constant(0.0))), (1, ContactSpec::gate(Ramp::constant(0.0)))],
            Default::default(),
        );
        let s = DeviceState::uniform(spec.node_count(), 0.0);
        let out = solve_nonlinear_poisson(&spec, &s.phibar, 0.0, &s.phi, &Default::default()).unwrap();
        assert!(out.iterations() <= 1);
        assert!(out.phi.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn symmetric_intrinsic_device_stays_at_zero() {
        let spec = device(
            generate_rect_mesh(4, 2, 1.0, 1.0, ContactLayout::default()),
            MaterialRegion::intrinsic(0.01),
            &[(0, ContactSpec::grounded()), (1, ContactSpec::grounded())],
            Default::default(),
        );
        let s = DeviceState::uniform(spec.node_count(), 0.0);
        let out = solve_nonlinear_poisson(&spec, &s.phibar, 0.0, &s.phi, &Default::default()).unwrap();
        assert_eq!(out.iterations(), 0);
        assert!(out.phi.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn pn_newton_monotone_and_accurate() {
        let spec = pn(64);
        let s = DeviceState::uniform(spec.node_count(), 0.0);
        let out = solve_nonlinear_poisson(&spec, &s.phibar, 0.0, &s.phi, &Default::default()).unwrap();
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]), "{:?}", out.history);
        assert!(*out.history.last().unwrap() <= 1e-10);
        let vbi = crate::oracle::builtin_potential(1.0, 1.0, 1e-4);
        let jump = out.phi[64] - out.phi[0];
        assert!((jump / vbi - 1.0).abs() < 0.05, "{jump} vs {vbi}");
    }

    #[test]
    fn newton_matrix_matches_differences() {
        let spec = pn(16);
        let n = spec.node_count();
        let mut s = DeviceState::uniform(n, 0.0);
        for i in 0..n {
            s.phi[i] = 3.0 * (i as f64 * 0.7).sin();
            s.phibar[0][i] = 0.2 * (i as f64 * 1.3).cos();
            s.phibar[1][i] = -0.1 * (i as f64 * 0.4).sin();
        }
        let exec = Execution::Sequential;
        let op = spec.poisson_operator();
        let (k0, w) = residual_and_weights(&spec, &s.phibar, 0.0, &s.phi, exec).unwrap();
        let jac = newton_matrix(op, &w);
        let v: Vec<f64> = (0..op.free_nodes().len()).map(|j| ((j * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let jv = jac.matvec(&v);
        let mut errs = Vec::new();
        for h in [1e-3, 1e-4, 1e-5, 1e-6] {
            let mut p = s.phi.clone();
            for (j, &i) in op.free_nodes().iter().enumerate() {
                p[i] += h * v[j];
            }
            let (k1, _) = residual_and_weights(&spec, &s.phibar, 0.0, &p, exec).unwrap();
            let e = op
                .free_nodes()
                .iter()
                .enumerate()
                .map(|(j, &i)| ((k1[i] - k0[i]) / h - jv[j]).abs())
                .fold(0.0, f64::max);
            errs.push(e);
        }
        let scale = norm_inf(&jv);
        assert!(errs[2] <= 1e-5 * scale, "{errs:?}");
        let slope = (errs[0] / errs[2]).log10() / 2.0;
        assert!((slope - 1.0).abs() < 0.2, "{slope} {errs:?}");
    }

    #[test]
    fn fermi_dirac_equilibrium_converges() {
        let mut spec = pn(32);
        spec.statistics = StatisticsModel::fermi_dirac(GChoice::F);
        let s = DeviceState::uniform(spec.node_count(), 0.0);
        let out = solve_nonlinear_poisson(&spec, &s.phibar, 0.0, &s.phi, &Default::default()).unwrap();
        assert!(*out.history.last().unwrap() <= 1e-10);
    }

    #[test]
    fn newton_budget_exhausted() {
        let spec = pn(16);
        let s = DeviceState::uniform(spec.node_count(), 0.0);
        let settings = PoissonSettings { max_newton_iters: 1, ..Default::default() };
        assert!(matches!(
            solve_nonlinear_poisson(&spec, &s.phibar, 0.0, &s.phi, &settings),
            Err(PoissonError::NotConverged { .. })
        ));
    }
}
