//! Configuration files, result files and the batch run driver.
//!
//! A run is described by a TOML file (see [`parse_config`]) and writes plain
//! CSV into an output directory. Every file is written through a temporary
//! file and renamed into place. Output contains no timestamps or other
//! run-dependent data, so identical inputs give byte-identical files.

mod config;
mod output;

pub use config::{
    check_snapshots, load_config, parse_config, parse_config_in, ConfigError, MeshSource, OutputConfig, RunConfig,
    Scaling, SweepConfig,
};
pub use output::{
    fields_csv, fields_vtk, sweep_csv, timeseries_csv, write_atomic, write_fields, write_timeseries, write_vtk,
    OutputError, FIELDS_HEADER,
};

use crate::device::{DeviceError, DeviceSpec};
use crate::stepper::{self, StepperError};
use crate::transport::TimeTerm;
use log::info;
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

/// Anything that can stop a run, grouped by process exit code.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(ConfigError),
    #[error("mesh error: {0}")]
    Mesh(ConfigError),
    #[error("solver error: {0}")]
    Solver(StepperError),
    #[error("audit violation: {0}")]
    Audit(StepperError),
    #[error("output error: {0}")]
    Output(#[from] OutputError),
}

impl RunError {
    /// 2 config, 3 mesh, 4 non-convergence, 5 audit violation, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Mesh(_) => 3,
            RunError::Solver(_) => 4,
            RunError::Audit(_) => 5,
            RunError::Output(_) => 1,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Mesh(_) => RunError::Mesh(e),
            other => RunError::Config(other),
        }
    }
}

impl From<StepperError> for RunError {
    fn from(e: StepperError) -> Self {
        match e {
            StepperError::AuditViolation { .. } => RunError::Audit(e),
            StepperError::InvalidSettings(_) | StepperError::UnknownContact(_) => {
                RunError::Config(ConfigError::Invalid(e.to_string()))
            }
            other => RunError::Solver(other),
        }
    }
}

impl From<DeviceError> for RunError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::Poisson(p) => RunError::Solver(p.into()),
            other => ConfigError::from(other).into(),
        }
    }
}

/// Command-line overrides of a [`RunConfig`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Solve for steady states instead of integrating in time.
    pub steady: bool,
    pub out: Option<PathBuf>,
    /// Replaces the configured snapshot schedule.
    pub snapshots: Option<Vec<f64>>,
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// Accepted time steps or sweep points.
    pub points: usize,
}

/// Run a validated configuration and write its outputs.
///
/// Transient mode starts from equilibrium at `t0`, integrates to `t_end` and
/// writes `timeseries.csv`, `fields_final.csv` and one `fields_snap<k>.csv`
/// per snapshot. Snapshots are taken at the first accepted step at or after
/// the requested time; `snapshots.csv` records both times. Steady mode
/// writes `sweep.csv` when a sweep is configured, otherwise a single-row
/// `timeseries.csv` for the steady state at `t0`.
pub fn execute(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let spec = cfg.build_device()?;
    let dir = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let snapshots = opts.snapshots.clone().unwrap_or_else(|| cfg.output.snapshots.clone());
    check_snapshots(&snapshots, cfg.t0, cfg.t_end)?;
    let settings = &cfg.settings;
    let init = spec.equilibrium_init(cfg.t0, &settings.poisson())?;
    let mut files = Vec::new();
    let mut emit = |name: &str, bytes: String| -> Result<(), OutputError> {
        let path = dir.join(name);
        write_atomic(&path, bytes.as_bytes())?;
        files.push(path);
        Ok(())
    };
    let fields = |spec: &DeviceSpec, state| fields_csv(spec, state, &cfg.scaling).map_err(OutputError::from);
    let vtk = |spec: &DeviceSpec, state| fields_vtk(spec, state, &cfg.scaling).map_err(OutputError::from);

    let points = if opts.steady {
        match &cfg.sweep {
            Some(sw) => {
                let pts = stepper::sweep(&spec, sw.contact, &sw.values, &init, cfg.t0, settings)?;
                emit("sweep.csv", sweep_csv(&pts))?;
                if let Some(last) = pts.last() {
                    let biased = stepper::with_contact_voltage(&spec, sw.contact, last.value)?;
                    emit("fields_final.csv", fields(&biased, &last.state)?)?;
                    if cfg.output.vtk {
                        emit("fields_final.vtk", vtk(&biased, &last.state)?)?;
                    }
                }
                pts.len()
            }
            None => {
                let out = stepper::steady_state(&spec, &init, cfg.t0, settings)?;
                let report = crate::audit::balance_report(&spec, &out.state, TimeTerm::Steady, settings.exec)
                    .map_err(StepperError::from)?;
                let result = stepper::TransientResult {
                    records: vec![stepper::StepRecord {
                        t: cfg.t0,
                        dt: 0.0,
                        gummel_iters: out.sweeps,
                        newton_iters: out.newton_iters,
                        total_charge: f64::NAN,
                        report,
                    }],
                    snapshots: Vec::new(),
                    final_state: out.state,
                    rejected_steps: 0,
                };
                emit("timeseries.csv", timeseries_csv(&result))?;
                emit("fields_final.csv", fields(&spec, &result.final_state)?)?;
                if cfg.output.vtk {
                    emit("fields_final.vtk", vtk(&spec, &result.final_state)?)?;
                }
                1
            }
        }
    } else {
        let result = stepper::run_transient(&spec, &init, cfg.t_end, settings, &snapshots)?;
        emit("timeseries.csv", timeseries_csv(&result))?;
        emit("fields_final.csv", fields(&spec, &result.final_state)?)?;
        if cfg.output.vtk {
            emit("fields_final.vtk", vtk(&spec, &result.final_state)?)?;
        }
        if !result.snapshots.is_empty() {
            let mut index = String::from("index,requested,t,file\n");
            for (k, snap) in result.snapshots.iter().enumerate() {
                let name = format!("fields_snap{k}.csv");
                let _ = writeln!(index, "{k},{:.16e},{:.16e},{name}", snap.requested, snap.state.t);
                emit(&name, fields(&spec, &snap.state)?)?;
                if cfg.output.vtk {
                    emit(&format!("fields_snap{k}.vtk"), vtk(&spec, &snap.state)?)?;
                }
            }
            emit("snapshots.csv", index)?;
        }
        result.records.len()
    };
    info!("wrote {} files to {}", files.len(), dir.display());
    Ok(RunSummary { files, points })
}
