//! Analytic and oracle checks of the whole solver stack.
//!
//! Each check builds its own small problem, compares against an independent
//! reference and reports a measured value next to its limit. They back the
//! `vanroos2d selftest` command and the acceptance test target.

use crate::audit::balance_report;
use crate::device::{BoundarySpec, Carrier, ContactSpec, DeviceSpec, DeviceState, MaterialRegion, Ramp};
use crate::io::{self, RunOptions};
use crate::linalg::LinearSolverOptions;
use crate::mesh::{build_dual, BoundaryEdge, BoundaryTag, Mesh, ObtusePolicy, Triangle};
use crate::oracle;
use crate::par::Execution;
use crate::poisson::{newton_matrix, residual_and_weights, solve_nonlinear_poisson, PoissonSettings};
use crate::presets::PnDiode;
use crate::recombination::{rate_density, total_rate_and_jacobian, RecombinationModel};
use crate::statistics::{GChoice, StatisticsModel};
use crate::stepper::{run_transient, steady_state, sweep, with_contact_voltage, SolverSettings};
use crate::transport::{bernoulli, material_flux, sg_flux, ContinuityProblem, FluxEnds, TimeTerm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

type Outcome = Result<(bool, String), String>;

fn check(name: &'static str, body: impl FnOnce() -> Outcome) -> Check {
    match body() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn err<E: fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Cheaper problem sizes, for interactive use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effort {
    Quick,
    Full,
}

pub fn run_all(effort: Effort) -> Vec<Check> {
    let full = effort == Effort::Full;
    let scratch = tempfile::tempdir();
    vec![
        equilibrium_exactness(),
        poisson_order(),
        monotone_newton(),
        balance_ramp(),
        kirchhoff(),
        statistics_accuracy(),
        sg_identities(if full { 1000 } else { 200 }),
        jacobians(if full { 4 } else { 1 }),
        time_order(),
        match scratch {
            Ok(dir) => determinism(dir.path()),
            Err(e) => Check { name: "determinism", passed: false, detail: format!("error: {e}") },
        },
    ]
}

fn exec_settings() -> SolverSettings {
    SolverSettings::default()
}

/// Zero-bias diode on 64×8: `u_1u_2 = n_i²` at every node and no current.
pub fn equilibrium_exactness() -> Check {
    check("equilibrium exactness", || {
        let start = Instant::now();
        let settings = exec_settings();
        let diode = PnDiode::default();
        let spec = diode.build().map_err(err)?;
        let init = spec.equilibrium_init(0.0, &settings.poisson()).map_err(err)?;
        let out = steady_state(&spec, &init, 0.0, &settings).map_err(err)?;
        let report = balance_report(&spec, &out.state, TimeTerm::Steady, settings.exec).map_err(err)?;
        let elapsed = start.elapsed().as_secs_f64();
        let ni2 = diode.ni * diode.ni;
        let mut mass = 0.0f64;
        for i in 0..spec.node_count() {
            let p = spec.carrier_density(&out.state, i, Carrier::Holes).map_err(err)?;
            let n = spec.carrier_density(&out.state, i, Carrier::Electrons).map_err(err)?;
            mass = mass.max((p * n / ni2 - 1.0).abs());
        }
        let current = report.currents.values().flat_map(|c| c.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        Ok((
            mass <= 1e-8 && current <= 1e-10 && elapsed < 5.0,
            format!("max|u1u2/ni^2-1| = {mass:.2e} (<= 1e-8), max|I| = {current:.2e} (<= 1e-10), {elapsed:.2} s (< 5 s)"),
        ))
    })
}

/// Unit square, every boundary edge on one Dirichlet contact.
fn dirichlet_square(n: usize) -> Result<DeviceSpec, String> {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let h = 1.0 / n as f64;
    let mut nodes = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut tris = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            tris.push(Triangle { nodes: [a, b, c], region: 0 });
            tris.push(Triangle { nodes: [a, c, d], region: 0 });
        }
    }
    let contact = BoundaryTag::Contact(0);
    let mut bedges = Vec::new();
    for i in 0..n {
        bedges.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], tag: contact });
        bedges.push(BoundaryEdge { nodes: [id(i, n), id(i + 1, n)], tag: contact });
        bedges.push(BoundaryEdge { nodes: [id(0, i), id(0, i + 1)], tag: contact });
        bedges.push(BoundaryEdge { nodes: [id(n, i), id(n, i + 1)], tag: contact });
    }
    let mesh = Arc::new(Mesh::new(nodes, tris, bedges, vec!["0".into()]).map_err(err)?);
    let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject).map_err(err)?);
    let mut regions = BTreeMap::new();
    regions.insert("0".to_string(), MaterialRegion::insulator(1.0));
    let mut boundary = BoundarySpec::default();
    boundary.contacts.insert(0, ContactSpec::gate(Ramp::constant(0.0)));
    DeviceSpec::new(mesh, dual, &regions, boundary, StatisticsModel::boltzmann(), RecombinationModel::default(), None)
        .map_err(err)
}

/// Manufactured `φ = sin(πx)sin(πy)` on 8, 16 and 32 cells per side, plus
/// exact reproduction of an affine solution.
pub fn poisson_order() -> Check {
    check("poisson convergence order", || {
        use std::f64::consts::PI;
        let exact = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin();
        let opts = LinearSolverOptions::default();
        let mut errors = Vec::new();
        let mut affine_err = 0.0f64;
        for n in [8, 16, 32] {
            let spec = dirichlet_square(n)?;
            let op = spec.poisson_operator();
            let nodes = spec.mesh.nodes();
            let rhs: Vec<f64> =
                nodes.iter().enumerate().map(|(i, p)| 2.0 * PI * PI * exact(*p) * spec.dual.cell_volume[i]).collect();
            let bc: Vec<f64> = nodes.iter().map(|p| exact(*p)).collect();
            let (phi, _) = op.solve_linear(&rhs, &bc, &opts).map_err(err)?;
            errors.push(nodes.iter().zip(&phi).map(|(p, v)| (v - exact(*p)).abs()).fold(0.0, f64::max));

            let affine = |p: &[f64; 2]| 0.3 + 1.7 * p[0] - 0.9 * p[1];
            let bc: Vec<f64> = nodes.iter().map(affine).collect();
            let (phi, _) = op.solve_linear(&vec![0.0; nodes.len()], &bc, &opts).map_err(err)?;
            affine_err = affine_err.max(nodes.iter().zip(&phi).map(|(p, v)| (v - affine(p)).abs()).fold(0.0, f64::max));
        }
        let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((
            worst >= 1.9 && affine_err <= 1e-12,
            format!(
                "L-inf errors {:.3e}/{:.3e}/{:.3e}, orders {:.3}/{:.3} (>= 1.9), affine error {affine_err:.1e} (<= 1e-12)",
                errors[0], errors[1], errors[2], orders[0], orders[1]
            ),
        ))
    })
}

/// Damped Newton for the equilibrium Poisson problem from `φ = 0`.
pub fn monotone_newton() -> Check {
    check("monotone newton", || {
        let spec = PnDiode::default().build().map_err(err)?;
        let n = spec.node_count();
        let phibar = [vec![0.0; n], vec![0.0; n]];
        let out = solve_nonlinear_poisson(&spec, &phibar, 0.0, &vec![0.0; n], &PoissonSettings::default()).map_err(err)?;
        let h = &out.history;
        let monotone = h.windows(2).all(|w| w[1] <= w[0]);
        let last = *h.last().ok_or("empty history")?;
        // ‖K_{n+1}‖/‖K_n‖² over the undamped tail must level off, not grow
        let tail: Vec<f64> = h
            .windows(2)
            .zip(&out.damping)
            .filter(|(w, lambda)| **lambda == 1.0 && w[1] > 0.0)
            .map(|(w, _)| w[1] / (w[0] * w[0]))
            .collect();
        let last3 = &tail[tail.len().saturating_sub(3)..];
        let hi = last3.iter().copied().fold(0.0, f64::max);
        let lo = last3.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((
            monotone && last <= 1e-10 && last3.len() == 3 && hi <= 10.0 * lo,
            format!(
                "{} steps, non-increasing: {monotone}, final |K| = {last:.2e} (<= 1e-10), last |K+|/|K|^2 in [{lo:.2e}, {hi:.2e}] (spread <= 10x)",
                out.iterations()
            ),
        ))
    })
}

/// 20 fixed steps of a bias ramp; every accepted state is audited.
pub fn balance_ramp() -> Check {
    check("discrete balance law", || {
        let spec = PnDiode::default().with_bias(Ramp::linear(0.0, 0.0, 1.0, 0.5)).build().map_err(err)?;
        let s = SolverSettings { dt_init: 0.05, dt_min: 0.05, dt_max: 0.05, ..exec_settings() };
        let init = spec.equilibrium_init(0.0, &s.poisson()).map_err(err)?;
        let res = run_transient(&spec, &init, 1.0, &s, &[]).map_err(err)?;
        let steps = res.records.len() - 1;
        let cell = res.records.iter().map(|r| r.report.max_balance_residual()).fold(0.0, f64::max);
        let global = res.records.iter().map(|r| r.report.global_defect).fold(0.0, f64::max);
        let (ct, gt) = (s.cell_balance_tol(), s.global_balance_tol(spec.node_count()));
        Ok((
            steps == 20 && res.rejected_steps == 0 && cell <= ct && global <= gt,
            format!("{steps} steps, max cell residual {cell:.2e} (<= {ct:.0e}), max global defect {global:.2e} (<= {gt:.1e})"),
        ))
    })
}

/// Steady forward bias: contact currents sum to zero without recombination
/// and to the integrated SRH rate with it.
pub fn kirchhoff() -> Check {
    check("kirchhoff balance", || {
        let settings = exec_settings();
        let biases = [0.2, 0.4, 0.6];
        let mut worst_plain = 0.0f64;
        let mut worst_srh = 0.0f64;
        for srh in [false, true] {
            let recombination = RecombinationModel { srh, ..Default::default() };
            let spec = PnDiode { ni: 1e-2, recombination, ..PnDiode::default() }.build().map_err(err)?;
            let init = spec.equilibrium_init(0.0, &settings.poisson()).map_err(err)?;
            let pts = sweep(&spec, 0, &biases, &init, 0.0, &settings).map_err(err)?;
            for p in &pts {
                let biased = with_contact_voltage(&spec, 0, p.value).map_err(err)?;
                let s = &p.state;
                let mut reaction = 0.0;
                for i in 0..biased.node_count() {
                    let r = total_rate_and_jacobian(&biased, i, 0.0, s.phi[i], [s.phibar[0][i], s.phibar[1][i]])
                        .map_err(err)?;
                    reaction -= r.r[0];
                }
                for k in 0..2 {
                    let sum: f64 = p.report.currents.values().map(|c| c[k]).sum();
                    let scale = p.report.currents.values().map(|c| c[k].abs()).fold(0.0, f64::max);
                    if srh {
                        worst_srh = worst_srh.max((sum - reaction).abs() / reaction.abs());
                    } else {
                        worst_plain = worst_plain.max(sum.abs() / scale);
                    }
                }
            }
        }
        Ok((
            worst_plain <= 1e-8 && worst_srh <= 1e-8,
            format!(
                "n_i = 1e-2 diode at {biases:?}: |sum I_k|/max|I_k| = {worst_plain:.2e}, |sum I_k - int r|/|int r| = {worst_srh:.2e} (<= 1e-8)"
            ),
        ))
    })
}

/// Fermi–Dirac `F_{1/2}` against adaptive quadrature, its Boltzmann limit and
/// its inverse.
pub fn statistics_accuracy() -> Check {
    check("fermi-dirac statistics", || {
        let fd = StatisticsModel::fermi_dirac(GChoice::F);
        let mut rel = 0.0f64;
        let mut limit = 0.0f64;
        let mut inverse = 0.0f64;
        for k in 0..200 {
            let s = -30.0 + 60.0 * k as f64 / 199.0;
            let f = fd.eval_f(s).map_err(err)?;
            rel = rel.max((f / oracle::fermi_half(s) - 1.0).abs());
            if s <= -8.0 {
                limit = limit.max((f / s.exp() - 1.0).abs());
            }
            let back = fd.inverse_f(f).map_err(err)?;
            inverse = inverse.max((back - s).abs() / s.abs().max(1.0));
        }
        Ok((
            rel <= 1e-8 && limit <= 1e-3 && inverse <= 1e-8,
            format!(
                "200 points on [-30, 30]: max rel error {rel:.2e} (<= 1e-8), Boltzmann limit {limit:.2e} (<= 1e-3), inverse {inverse:.2e} (<= 1e-8)"
            ),
        ))
    })
}

/// Bernoulli reflection, exact flux antisymmetry and zero flux at constant
/// electrochemical potential on random electrostatic profiles.
pub fn sg_identities(cases: usize) -> Check {
    check("scharfetter-gummel identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut reflection = 0.0f64;
        for k in 0..=2000 {
            let x = 10f64.powf(-12.0 + 14.85 * k as f64 / 2000.0);
            for x in [x, -x] {
                let lhs = bernoulli(-x);
                reflection = reflection.max((lhs - bernoulli(x) - x).abs() / lhs.abs().max(1.0));
            }
        }
        let stats = [StatisticsModel::boltzmann(), StatisticsModel::fermi_dirac(GChoice::F)];
        let mut antisym_fail = 0;
        let mut zero_fail = 0;
        for c in 0..cases {
            let st = &stats[c % 2];
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let e = FluxEnds {
                phi: [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)],
                phibar: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
            };
            let f = material_flux(st, 1.0, 0.0, sign, &e).map_err(err)?;
            let r = FluxEnds { phi: [e.phi[1], e.phi[0]], phibar: [e.phibar[1], e.phibar[0]] };
            let g = material_flux(st, 1.0, 0.0, sign, &r).map_err(err)?;
            if g.value != -f.value {
                antisym_fail += 1;
            }
        }
        // whole-device profiles: every edge flux vanishes at constant φ̃
        let spec = PnDiode { ni: 1e-2, ..PnDiode::default() }.with_mesh(8, 2).build().map_err(err)?;
        let n = spec.node_count();
        for c in 0..cases {
            let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-15.0..15.0)).collect();
            let level = vec![rng.gen_range(-3.0..3.0); n];
            let k = Carrier::BOTH[c % 2];
            for e in 0..spec.dual.edge_count() {
                if sg_flux(&spec, &phi, &level, e, k).map_err(err)?.value != 0.0 {
                    zero_fail += 1;
                }
            }
        }
        Ok((
            reflection <= 1e-14 && antisym_fail == 0 && zero_fail == 0,
            format!(
                "B(-x) = B(x) + x to {reflection:.1e} (<= 1e-14), {cases} cases: {antisym_fail} antisymmetry and {zero_fail} zero-flux violations"
            ),
        ))
    })
}

fn random_state(spec: &DeviceSpec, rng: &mut ChaCha8Rng) -> DeviceState {
    let n = spec.node_count();
    let mut s = DeviceState::uniform(n, 0.0);
    for i in 0..n {
        s.phi[i] = rng.gen_range(-2.0..2.0);
        s.phibar[0][i] = rng.gen_range(-0.5..0.5);
        s.phibar[1][i] = rng.gen_range(-0.5..0.5);
    }
    s
}

/// Largest column-scaled mismatch between an analytic Jacobian and central
/// differences.
fn column_mismatch(analytic: &[Vec<f64>], fd_column: impl Fn(usize) -> Result<Vec<f64>, String>) -> Result<f64, String> {
    let cols = analytic.first().map_or(0, Vec::len);
    let mut worst = 0.0f64;
    for c in 0..cols {
        let fd = fd_column(c)?;
        let scale = fd.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        for (r, v) in fd.iter().enumerate() {
            worst = worst.max((v - analytic[r][c]).abs() / scale);
        }
    }
    Ok(worst)
}

/// Poisson Newton matrix, continuity Jacobians and recombination partials
/// against central differences on seeded random states.
pub fn jacobians(seeds: u64) -> Check {
    check("jacobians vs finite differences", || {
        const H: f64 = 1e-6;
        let recombination = RecombinationModel { srh: true, auger: true, ..Default::default() };
        let spec = PnDiode { ni: 1e-2, eps: 1e-2, recombination, ..PnDiode::default() }
            .with_bias(Ramp::constant(0.2))
            .with_mesh(10, 3)
            .build()
            .map_err(err)?;
        let exec = Execution::Sequential;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut poisson, mut continuity, mut rates) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..seeds {
            let s = random_state(&spec, &mut rng);
            let old = random_state(&spec, &mut rng);

            let op = spec.poisson_operator();
            let (_, w) = residual_and_weights(&spec, &s.phibar, 0.0, &s.phi, exec).map_err(err)?;
            let jac = newton_matrix(op, &w).to_dense();
            let free = op.free_nodes();
            let k_at = |phi: &[f64]| -> Result<Vec<f64>, String> {
                let (k, _) = residual_and_weights(&spec, &s.phibar, 0.0, phi, exec).map_err(err)?;
                Ok(free.iter().map(|&i| k[i]).collect())
            };
            poisson = poisson.max(column_mismatch(&jac, |c| {
                let (mut p, mut m) = (s.phi.clone(), s.phi.clone());
                p[free[c]] += H;
                m[free[c]] -= H;
                let (kp, km) = (k_at(&p)?, k_at(&m)?);
                Ok(kp.iter().zip(&km).map(|(a, b)| (a - b) / (2.0 * H)).collect())
            })?);

            for k in Carrier::BOTH {
                let p = ContinuityProblem {
                    spec: &spec,
                    k,
                    t: 0.0,
                    phi: &s.phi,
                    time: TimeTerm::Euler { old: &old, dt: 0.3 },
                    exec,
                };
                let a = p.assemble(&s.phibar).map_err(err)?;
                let dense = a.jacobian.to_dense();
                continuity = continuity.max(column_mismatch(&dense, |c| {
                    let (mut plus, mut minus) = (s.phibar.clone(), s.phibar.clone());
                    plus[k.idx()][a.unknowns[c]] += H;
                    minus[k.idx()][a.unknowns[c]] -= H;
                    let rp = p.residual(&plus).map_err(err)?;
                    let rm = p.residual(&minus).map_err(err)?;
                    Ok(a.unknowns.iter().map(|&i| (rp[i] - rm[i]) / (2.0 * H)).collect())
                })?);
            }

            for i in 0..spec.node_count() {
                let region = spec.primary_region(i);
                let (phi, pb) = (s.phi[i], [s.phibar[0][i], s.phibar[1][i]]);
                let at = rate_density(&spec, region, i, 0.0, phi, pb).map_err(err)?;
                let eval = |phi: f64, pb: [f64; 2]| rate_density(&spec, region, i, 0.0, phi, pb).map(|r| r.r);
                let diff = |p: Result<[f64; 2], _>, m: Result<[f64; 2], _>| -> Result<[f64; 2], String> {
                    let (p, m) = (p.map_err(err)?, m.map_err(err)?);
                    Ok([(p[0] - m[0]) / (2.0 * H), (p[1] - m[1]) / (2.0 * H)])
                };
                let d_phi = diff(eval(phi + H, pb), eval(phi - H, pb))?;
                let d1 = diff(eval(phi, [pb[0] + H, pb[1]]), eval(phi, [pb[0] - H, pb[1]]))?;
                let d2 = diff(eval(phi, [pb[0], pb[1] + H]), eval(phi, [pb[0], pb[1] - H]))?;
                let scale = d_phi.iter().chain(&d1).chain(&d2).map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
                for k in 0..2 {
                    rates = rates.max((d_phi[k] - at.jac.d_phi[k]).abs() / scale);
                    rates = rates.max((d1[k] - at.jac.d_phibar[0][k]).abs() / scale);
                    rates = rates.max((d2[k] - at.jac.d_phibar[1][k]).abs() / scale);
                }
            }
        }
        Ok((
            poisson <= 1e-5 && continuity <= 1e-5 && rates <= 1e-5,
            format!(
                "{seeds} seeds: poisson {poisson:.2e}, continuity {continuity:.2e}, recombination {rates:.2e} (each <= 1e-5 relative)"
            ),
        ))
    })
}

/// Implicit Euler at dt, dt/2 and dt/4 on a smooth transient; the observed
/// order comes from the ratio of successive differences.
pub fn time_order() -> Check {
    check("implicit euler order", || {
        let spec = PnDiode { ni: 1e-2, recombination: RecombinationModel { srh: true, ..Default::default() }, ..PnDiode::default() }
            .with_mesh(24, 2)
            .with_bias(Ramp::linear(0.0, 0.0, 1.0, 0.4))
            .build()
            .map_err(err)?;
        let t_end = 1.0;
        let mut finals = Vec::new();
        for dt in [0.1, 0.05, 0.025] {
            let s = SolverSettings { dt_init: dt, dt_min: dt, dt_max: dt, ..exec_settings() };
            let init = spec.equilibrium_init(0.0, &s.poisson()).map_err(err)?;
            finals.push(run_transient(&spec, &init, t_end, &s, &[]).map_err(err)?.final_state);
        }
        let d1 = finals[0].max_difference(&finals[1]);
        let d2 = finals[1].max_difference(&finals[2]);
        let order = (d1 / d2).log2();
        Ok((
            (0.9..=1.1).contains(&order),
            format!("|u(dt)-u(dt/2)| = {d1:.3e}, |u(dt/2)-u(dt/4)| = {d2:.3e}, observed order {order:.3} (in [0.9, 1.1])"),
        ))
    })
}

const DETERMINISM_CONFIG: &str = r#"
[mesh]
nx = 24
ny = 4
ly = 0.125
left_contact = 0
right_contact = 1
regions = ["p", "n"]
splits = [0.5]

[region.p]
ni = 1e-3
eps = 1e-3
doping = -1.0

[region.n]
ni = 1e-3
eps = 1e-3
doping = 1.0

[contact.0]
bias_ramp = [[0.0, 0.0], [0.5, 0.3]]

[contact.1]

[recombination]
srh = true

[time]
t_end = 0.5
dt_init = 0.02

[output]
snapshots = [0.25]
"#;

/// Two identical runs write byte-identical files.
pub fn determinism(scratch: &std::path::Path) -> Check {
    check("determinism", || {
        let cfg = io::parse_config(DETERMINISM_CONFIG).map_err(err)?;
        let mut runs = Vec::new();
        for name in ["a", "b"] {
            let opts = RunOptions { out: Some(scratch.join(name)), ..Default::default() };
            runs.push(io::execute(&cfg, &opts).map_err(err)?);
        }
        let mut identical = 0;
        for (a, b) in runs[0].files.iter().zip(&runs[1].files) {
            let (x, y) = (std::fs::read(a).map_err(err)?, std::fs::read(b).map_err(err)?);
            if x == y && a.file_name() == b.file_name() {
                identical += 1;
            }
        }
        let total = runs[0].files.len();
        Ok((
            identical == total && total == runs[1].files.len() && total > 0,
            format!("{identical} of {total} output files bit-identical across two runs"),
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_body_is_reported() {
        let c = check("x", || Err("boom".into()));
        assert!(!c.passed);
        assert_eq!(c.to_string(), "FAIL x: error: boom");
    }

    #[test]
    fn dirichlet_square_has_one_free_node_per_interior_point() {
        let spec = dirichlet_square(4).unwrap();
        assert_eq!(spec.poisson_operator().free_nodes().len(), 9);
    }

    #[test]
    fn quick_identities_pass() {
        assert!(sg_identities(20).passed);
        assert!(statistics_accuracy().passed);
    }
}
