//! Gummel iteration, implicit Euler time stepping and steady-state sweeps.

use crate::audit::{balance_report, BalanceReport};
use crate::device::{Carrier, ContactSpec, DeviceSpec, DeviceState, Ramp};
use crate::linalg::{factor_and_solve, norm_inf, LinalgError, LinearSolverOptions};
use crate::par::{self, Execution};
use crate::poisson::{solve_nonlinear_poisson, PoissonError, PoissonSettings};
use crate::statistics::StatisticsError;
use crate::transport::{ContinuityProblem, TimeTerm};
use log::{debug, info, warn};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepperError {
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("Gummel iteration did not converge in {iterations} sweeps (last update {update:e}, residual {residual:e})")]
    GummelNotConverged { iterations: usize, update: f64, residual: f64 },
    #[error("carrier {carrier} continuity: no convergence in {iterations} Newton steps (residual {residual:e})")]
    ContinuityNotConverged { carrier: usize, iterations: usize, residual: f64 },
    #[error("carrier {carrier} continuity: line search stalled (residual {residual:e})")]
    ContinuityLineSearch { carrier: usize, residual: f64 },
    #[error("time step fell below dt_min = {dt_min:e} at t = {t}: {cause}")]
    DtUnderflow { t: f64, dt_min: f64, cause: Box<StepperError> },
    #[error("audit violation at t = {t}: {quantity} = {value:e} exceeds {limit:e}")]
    AuditViolation { t: f64, quantity: &'static str, value: f64, limit: f64 },
    #[error("unknown contact {0}")]
    UnknownContact(u32),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

impl StepperError {
    /// Failures that indicate non-convergence rather than bad input.
    pub fn is_convergence_failure(&self) -> bool {
        !matches!(self, StepperError::InvalidSettings(_) | StepperError::AuditViolation { .. } | StepperError::UnknownContact(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_grow: f64,
    pub dt_shrink: f64,
    /// Grow the step after an accepted step that took at most this many
    /// Gummel sweeps.
    pub grow_below: usize,
    /// Largest nodal potential update of a converged sweep.
    pub gummel_tol: f64,
    pub max_gummel_iters: usize,
    /// `‖residual‖∞` target of every inner Newton solve.
    pub newton_tol: f64,
    /// Below `newton_tol`, continuity Newton keeps going until its correction
    /// to `φ̃_k` is this small or stops shrinking. Small currents are carried
    /// by tiny potential differences, so the residual alone is not enough.
    pub newton_step_tol: f64,
    pub max_newton_iters: usize,
    pub linear: LinearSolverOptions,
    pub exec: Execution,
    /// Abort when a balance check misses its tolerance by this factor.
    pub audit_abort_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            dt_init: 1e-3,
            dt_min: 1e-9,
            dt_max: 1.0,
            dt_grow: 1.2,
            dt_shrink: 0.5,
            grow_below: 6,
            gummel_tol: 1e-9,
            max_gummel_iters: 100,
            newton_tol: 1e-10,
            newton_step_tol: 1e-13,
            max_newton_iters: 50,
            linear: LinearSolverOptions::default(),
            exec: Execution::default(),
            audit_abort_factor: 10.0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), StepperError> {
        let bad = |m: &str| Err(StepperError::InvalidSettings(m.to_string()));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad("need 0 < dt_min <= dt_init <= dt_max");
        }
        if !(self.dt_grow >= 1.0) || !(self.dt_shrink > 0.0 && self.dt_shrink < 1.0) {
            return bad("need dt_grow >= 1 and 0 < dt_shrink < 1");
        }
        if !(self.gummel_tol > 0.0) || !(self.newton_tol > 0.0) || !(self.newton_step_tol > 0.0) || !(self.linear.lin_tol > 0.0)
        {
            return bad("tolerances must be positive");
        }
        if self.max_gummel_iters == 0 {
            return bad("max_gummel_iters must be positive");
        }
        if !(self.audit_abort_factor >= 1.0) {
            return bad("audit_abort_factor must be at least 1");
        }
        Ok(())
    }

    pub fn poisson(&self) -> PoissonSettings {
        PoissonSettings {
            newton_tol: self.newton_tol,
            max_newton_iters: self.max_newton_iters,
            linear: self.linear,
            exec: self.exec,
        }
    }

    /// Tolerance on the largest cell-balance residual of an accepted state.
    pub fn cell_balance_tol(&self) -> f64 {
        10.0 * self.newton_tol
    }

    /// Tolerance on the global balance defect.
    pub fn global_balance_tol(&self, node_count: usize) -> f64 {
        node_count as f64 * self.newton_tol
    }
}

/// Converged Gummel iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct GummelOutcome {
    pub state: DeviceState,
    pub sweeps: usize,
    /// Newton steps summed over all inner solves.
    pub newton_iters: usize,
    pub last_update: f64,
}

/// Damped Newton for one carrier's continuity equation at frozen `φ` and
/// frozen other carrier. Returns the new `φ̃_k` and the step count.
fn solve_continuity(
    problem: &ContinuityProblem<'_>,
    phibar: &[Vec<f64>; 2],
    settings: &SolverSettings,
) -> Result<(Vec<f64>, usize), StepperError> {
    let k = problem.k;
    let carrier = k.number();
    let mut pb = phibar.clone();
    let unknowns_norm = |r: &[f64], unknowns: &[usize]| unknowns.iter().fold(0.0f64, |m, &i| m.max(r[i].abs()));
    let mut asm = problem.assemble(&pb)?;
    let mut norm = unknowns_norm(&asm.residual, &asm.unknowns);
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    loop {
        if norm == 0.0 || asm.unknowns.is_empty() {
            break;
        }
        if norm > settings.newton_tol && iterations == settings.max_newton_iters {
            return Err(StepperError::ContinuityNotConverged { carrier, iterations, residual: norm });
        }
        let rhs: Vec<f64> = asm.unknowns.iter().map(|&i| -asm.residual[i]).collect();
        let (delta, _) = factor_and_solve(&asm.jacobian, &rhs, &settings.linear)?;
        let step = norm_inf(&delta);
        let base = pb[k.idx()].clone();
        if norm <= settings.newton_tol && (step <= settings.newton_step_tol || step > 0.5 * last_step) {
            // converged: the final correction is below the step tolerance
            for (j, &i) in asm.unknowns.iter().enumerate() {
                pb[k.idx()][i] = base[i] + delta[j];
            }
            break;
        }
        if iterations == settings.max_newton_iters {
            break;
        }
        let mut lambda = 1.0;
        loop {
            for (j, &i) in asm.unknowns.iter().enumerate() {
                pb[k.idx()][i] = base[i] + lambda * delta[j];
            }
            if let Ok(r) = problem.residual(&pb) {
                let nt = unknowns_norm(&r, &asm.unknowns);
                if nt.is_finite() && (nt <= (1.0 - 1e-4 * lambda) * norm || nt <= settings.newton_tol) {
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < f64::powi(2.0, -20) {
                if norm <= settings.newton_tol {
                    // no further progress possible below the tolerance
                    pb[k.idx()].copy_from_slice(&base);
                    return Ok((std::mem::take(&mut pb[k.idx()]), iterations));
                }
                return Err(StepperError::ContinuityLineSearch { carrier, residual: norm });
            }
        }
        iterations += 1;
        last_step = lambda * step;
        asm = problem.assemble(&pb)?;
        norm = unknowns_norm(&asm.residual, &asm.unknowns);
    }
    Ok((std::mem::take(&mut pb[k.idx()]), iterations))
}

fn continuity_norm(problem: &ContinuityProblem<'_>, phibar: &[Vec<f64>; 2]) -> Result<f64, StatisticsError> {
    let r = problem.residual(phibar)?;
    let spec = problem.spec;
    Ok((0..spec.node_count()).filter(|&i| spec.is_transport_free(i)).fold(0.0f64, |m, i| m.max(r[i].abs())))
}

/// Gummel iteration at time `t` from `guess`.
///
/// Each sweep solves the nonlinear Poisson equation with frozen `φ̃_k`, then
/// both continuity equations (concurrently) with the new `φ` frozen. It stops
/// once a sweep changes no potential by more than `gummel_tol` and both
/// continuity residuals at the final iterate are within `newton_tol`.
pub fn gummel(
    spec: &DeviceSpec,
    time: TimeTerm<'_>,
    guess: &DeviceState,
    t: f64,
    settings: &SolverSettings,
) -> Result<GummelOutcome, StepperError> {
    let mut state = guess.clone();
    state.t = t;
    spec.apply_dirichlet(&mut state, t);
    let poisson = settings.poisson();
    let mut newton_iters = 0;
    let mut update = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for sweep in 1..=settings.max_gummel_iters {
        let prev = state.clone();
        let sol = solve_nonlinear_poisson(spec, &state.phibar, t, &state.phi, &poisson)?;
        newton_iters += sol.iterations();
        state.phi = sol.phi;
        let problem = |k| ContinuityProblem { spec, k, t, phi: &state.phi, time, exec: settings.exec };
        let (p1, p2) = (problem(Carrier::Holes), problem(Carrier::Electrons));
        let (r1, r2) = par::join(
            settings.exec,
            || solve_continuity(&p1, &state.phibar, settings),
            || solve_continuity(&p2, &state.phibar, settings),
        );
        let ((pb1, n1), (pb2, n2)) = (r1?, r2?);
        newton_iters += n1 + n2;
        state.phibar = [pb1, pb2];
        update = state.max_difference(&prev);
        debug!("t = {t}: Gummel sweep {sweep}, update {update:e}");
        if update <= settings.gummel_tol {
            let problem = |k| ContinuityProblem { spec, k, t, phi: &state.phi, time, exec: settings.exec };
            residual = continuity_norm(&problem(Carrier::Holes), &state.phibar)?
                .max(continuity_norm(&problem(Carrier::Electrons), &state.phibar)?);
            if residual <= settings.newton_tol {
                return Ok(GummelOutcome { state, sweeps: sweep, newton_iters, last_update: update });
            }
        }
    }
    Err(StepperError::GummelNotConverged { iterations: settings.max_gummel_iters, update, residual })
}

/// One implicit Euler step from `old` to `t_new = old.t + dt`, starting the
/// iteration at `old`.
pub fn gummel_step(
    spec: &DeviceSpec,
    old: &DeviceState,
    dt: f64,
    settings: &SolverSettings,
) -> Result<GummelOutcome, StepperError> {
    gummel(spec, TimeTerm::Euler { old, dt }, old, old.t + dt, settings)
}

/// Stationary solution at time `t` (boundary data evaluated at `t`).
pub fn steady_state(
    spec: &DeviceSpec,
    guess: &DeviceState,
    t: f64,
    settings: &SolverSettings,
) -> Result<GummelOutcome, StepperError> {
    gummel(spec, TimeTerm::Steady, guess, t, settings)
}

/// One accepted state of a transient run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// Zero for the initial record.
    pub dt: f64,
    pub gummel_iters: usize,
    pub newton_iters: usize,
    /// `Σ_i (S_1 − S_2 + ∫d̃)` over the transport cells.
    pub total_charge: f64,
    pub report: BalanceReport,
}

/// State captured at the first accepted time at or after `requested`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub requested: f64,
    pub state: DeviceState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: DeviceState,
    pub rejected_steps: usize,
}

impl TransientResult {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }
}

fn total_charge(spec: &DeviceSpec, s: &DeviceState) -> Result<f64, StatisticsError> {
    let mut q = 0.0;
    for i in 0..spec.node_count() {
        if spec.is_transport_node(i) {
            q += spec.storage(i, Carrier::Holes, s.phibar[0][i], s.phi[i])?.0
                - spec.storage(i, Carrier::Electrons, s.phibar[1][i], s.phi[i])?.0;
        }
        q += spec.doping_charge(i);
    }
    Ok(q)
}

fn check_audit(spec: &DeviceSpec, report: &BalanceReport, t: f64, settings: &SolverSettings) -> Result<(), StepperError> {
    let f = settings.audit_abort_factor;
    let cell = report.max_balance_residual();
    let cell_tol = settings.cell_balance_tol();
    if cell > f * cell_tol {
        return Err(StepperError::AuditViolation { t, quantity: "max cell-balance residual", value: cell, limit: f * cell_tol });
    }
    let global_tol = settings.global_balance_tol(spec.node_count());
    if report.global_defect > f * global_tol {
        return Err(StepperError::AuditViolation {
            t,
            quantity: "global balance defect",
            value: report.global_defect,
            limit: f * global_tol,
        });
    }
    if cell > cell_tol || report.global_defect > global_tol {
        warn!("t = {t}: balance residual {cell:e} / global defect {:e} above tolerance", report.global_defect);
    }
    Ok(())
}

/// Adaptive implicit Euler from `initial` to `t_end`.
///
/// A failed step is retried with `dt·dt_shrink` (not below `dt_min`); an
/// accepted step that needed at most `grow_below` sweeps lets `dt` grow by
/// `dt_grow` up to `dt_max`. Each accepted state is audited.
pub fn run_transient(
    spec: &DeviceSpec,
    initial: &DeviceState,
    t_end: f64,
    settings: &SolverSettings,
    snapshot_times: &[f64],
) -> Result<TransientResult, StepperError> {
    settings.validate()?;
    if !(t_end >= initial.t) {
        return Err(StepperError::InvalidSettings(format!("t_end = {t_end} precedes t0 = {}", initial.t)));
    }
    let mut pending: Vec<f64> = snapshot_times.to_vec();
    pending.sort_by(f64::total_cmp);
    pending.dedup();
    let mut snapshots = Vec::new();
    let mut serve = |state: &DeviceState, pending: &mut Vec<f64>| {
        let eps = 1e-12 * state.t.abs().max(1.0);
        while let Some(&req) = pending.first() {
            if req > state.t + eps {
                break;
            }
            snapshots.push(Snapshot { requested: req, state: state.clone() });
            pending.remove(0);
        }
    };

    let mut state = initial.clone();
    let report = balance_report(spec, &state, TimeTerm::Steady, settings.exec)?;
    let mut records = vec![StepRecord {
        t: state.t,
        dt: 0.0,
        gummel_iters: 0,
        newton_iters: 0,
        total_charge: total_charge(spec, &state)?,
        report,
    }];
    serve(&state, &mut pending);

    let mut dt = settings.dt_init;
    let mut rejected_steps = 0;
    let end_eps = 1e-12 * t_end.abs().max(1.0);
    while t_end - state.t > end_eps {
        let remaining = t_end - state.t;
        // take the whole remainder rather than leave a sliver below dt_min
        let step = if remaining - dt < 0.5 * settings.dt_min { remaining } else { dt };
        match gummel_step(spec, &state, step, settings) {
            Ok(out) => {
                let mut new = out.state;
                if remaining - step <= end_eps {
                    new.t = t_end;
                }
                let report = balance_report(spec, &new, TimeTerm::Euler { old: &state, dt: step }, settings.exec)?;
                check_audit(spec, &report, new.t, settings)?;
                info!("t = {:.6e}, dt = {:.3e}, {} sweeps", new.t, step, out.sweeps);
                records.push(StepRecord {
                    t: new.t,
                    dt: step,
                    gummel_iters: out.sweeps,
                    newton_iters: out.newton_iters,
                    total_charge: total_charge(spec, &new)?,
                    report,
                });
                serve(&new, &mut pending);
                state = new;
                if out.sweeps <= settings.grow_below {
                    dt = (dt * settings.dt_grow).min(settings.dt_max);
                }
            }
            Err(e) if e.is_convergence_failure() => {
                if step <= settings.dt_min {
                    return Err(StepperError::DtUnderflow { t: state.t, dt_min: settings.dt_min, cause: Box::new(e) });
                }
                debug!("t = {}: step {step:e} rejected ({e})", state.t);
                rejected_steps += 1;
                dt = (step * settings.dt_shrink).max(settings.dt_min);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TransientResult { records, snapshots, final_state: state, rejected_steps })
}

/// One point of a steady-state sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub state: DeviceState,
    pub gummel_iters: usize,
    pub report: BalanceReport,
}

/// Copy of `spec` with a constant applied voltage on `contact`.
pub fn with_contact_voltage(spec: &DeviceSpec, contact: u32, v: f64) -> Result<DeviceSpec, StepperError> {
    let current = spec.boundary.contacts.get(&contact).ok_or(StepperError::UnknownContact(contact))?;
    let replacement = if current.ohmic {
        ContactSpec::biased(Ramp::constant(v))
    } else {
        ContactSpec { phi: Ramp::constant(v), ..current.clone() }
    };
    let mut out = spec.clone();
    out.boundary.contacts.insert(contact, replacement);
    Ok(out)
}

/// Steady states for a list of voltages on one contact, each warm-started
/// from the previous solution.
pub fn sweep(
    spec: &DeviceSpec,
    contact: u32,
    values: &[f64],
    start: &DeviceState,
    t: f64,
    settings: &SolverSettings,
) -> Result<Vec<SweepPoint>, StepperError> {
    settings.validate()?;
    let mut guess = start.clone();
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let biased = with_contact_voltage(spec, contact, v)?;
        let res = steady_state(&biased, &guess, t, settings)?;
        let report = balance_report(&biased, &res.state, TimeTerm::Steady, settings.exec)?;
        info!("sweep contact {contact} = {v}: {} sweeps", res.sweeps);
        guess = res.state.clone();
        out.push(SweepPoint { value: v, state: res.state, gummel_iters: res.sweeps, report });
    }
    Ok(out)
}

/// Per-contact currents of every record, keyed by contact.
pub fn current_history(result: &TransientResult) -> BTreeMap<u32, Vec<[f64; 2]>> {
    let mut out: BTreeMap<u32, Vec<[f64; 2]>> = BTreeMap::new();
    for r in &result.records {
        for (&c, &i) in &r.report.currents {
            out.entry(c).or_default().push(i);
        }
    }
    out
}
