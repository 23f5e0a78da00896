use crate::device::{BoundarySpec, ContactSpec, DeviceError, DeviceSpec, MaterialRegion, Ramp, RobinSpec, SrhParams, Tensor2};
use crate::linalg::{Backend, LinearSolverOptions};
use crate::mesh::{build_dual, generate_rect_mesh, load_mesh, ContactLayout, Mesh, MeshError, ObtusePolicy};
use crate::par::Execution;
use crate::recombination::RecombinationModel;
use crate::statistics::{GChoice, StatisticsModel};
use crate::stepper::SolverSettings;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{what} `{}` does not exist", path.display())]
    MissingFile { what: &'static str, path: PathBuf },
    #[error("cannot read `{}`: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Device(DeviceError),
}

impl From<DeviceError> for ConfigError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::Mesh(m) => ConfigError::Mesh(m),
            other => ConfigError::Device(other),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// A constant or a list of `[t, v]` breakpoints.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RampInput {
    Value(f64),
    Points(Vec<[f64; 2]>),
}

impl RampInput {
    fn build(&self, key: &str) -> Result<Ramp, ConfigError> {
        match self {
            RampInput::Value(v) if v.is_finite() => Ok(Ramp::constant(*v)),
            RampInput::Value(_) => Err(invalid(format!("{key}: value must be finite"))),
            RampInput::Points(p) => {
                Ramp::new(p.iter().map(|q| (q[0], q[1])).collect()).map_err(|e| invalid(format!("{key}: {e}")))
            }
        }
    }
}

/// A scalar or `[xx, xy, yy]`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum TensorInput {
    Scalar(f64),
    Full([f64; 3]),
}

impl TensorInput {
    fn build(self) -> Tensor2 {
        match self {
            TensorInput::Scalar(v) => Tensor2::isotropic(v),
            TensorInput::Full([xx, xy, yy]) => Tensor2 { xx, xy, yy },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum StatisticsName {
    #[default]
    Boltzmann,
    FermiDirac,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ExecutionName {
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ObtuseName {
    #[default]
    Reject,
    Clamp,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FluxName {
    #[default]
    GeneralizedSg,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshSection {
    file: Option<PathBuf>,
    nx: Option<usize>,
    ny: Option<usize>,
    lx: Option<f64>,
    ly: Option<f64>,
    left_contact: Option<u32>,
    right_contact: Option<u32>,
    regions: Option<Vec<String>>,
    splits: Option<Vec<f64>>,
    #[serde(default)]
    obtuse: ObtuseName,
    doping_file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalingSection {
    #[serde(default = "one")]
    thermal_voltage: f64,
    #[serde(default = "one")]
    length: f64,
    #[serde(default = "one")]
    density: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ScalingSection {
    fn default() -> Self {
        ScalingSection { thermal_voltage: 1.0, length: 1.0, density: 1.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSection {
    #[serde(default = "yes")]
    transport: bool,
    eps: Option<TensorInput>,
    mu1: Option<TensorInput>,
    mu2: Option<TensorInput>,
    rho: Option<[f64; 2]>,
    /// Shorthand for `b_k = ln n_i` and SRH reference densities `n_i`.
    ni: Option<f64>,
    band_offset: Option<[f64; 2]>,
    srh_ni: Option<f64>,
    n_trap: Option<[f64; 2]>,
    tau: Option<[f64; 2]>,
    auger: Option<[f64; 2]>,
    #[serde(default)]
    doping: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactSection {
    #[serde(default = "yes")]
    ohmic: bool,
    bias_ramp: Option<RampInput>,
    phi_ramp: Option<RampInput>,
    phibar1_ramp: Option<RampInput>,
    phibar2_ramp: Option<RampInput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeumannSection {
    #[serde(default)]
    capacity: f64,
    datum: Option<RampInput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoissonSection {
    newton_tol: Option<f64>,
    max_newton_iters: Option<usize>,
    lin_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GummelSection {
    tol: Option<f64>,
    max_iters: Option<usize>,
    newton_step_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    t0: Option<f64>,
    t_end: Option<f64>,
    dt_init: Option<f64>,
    dt_min: Option<f64>,
    dt_max: Option<f64>,
    dt_grow: Option<f64>,
    dt_shrink: Option<f64>,
    grow_below: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinalgSection {
    backend: Option<Backend>,
    lin_tol: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecombinationSection {
    #[serde(default)]
    srh: bool,
    #[serde(default)]
    auger: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransportSection {
    #[serde(default)]
    fermi_flux: FluxName,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    contact: u32,
    values: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditSection {
    abort_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    #[serde(default)]
    snapshots: Vec<f64>,
    #[serde(default)]
    vtk: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    statistics: StatisticsName,
    #[serde(default)]
    g_choice: GChoice,
    execution: Option<ExecutionName>,
    mesh: MeshSection,
    #[serde(default)]
    scaling: ScalingSection,
    region: BTreeMap<String, RegionSection>,
    #[serde(default)]
    contact: BTreeMap<String, ContactSection>,
    #[serde(default)]
    neumann: NeumannSection,
    #[serde(default)]
    poisson: PoissonSection,
    #[serde(default)]
    gummel: GummelSection,
    #[serde(default)]
    time: TimeSection,
    #[serde(default)]
    linalg: LinalgSection,
    #[serde(default)]
    recombination: RecombinationSection,
    #[serde(default)]
    transport: TransportSection,
    sweep: Option<SweepSection>,
    #[serde(default)]
    audit: AuditSection,
    #[serde(default)]
    output: OutputSection,
}

/// Where the triangulation comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    File(PathBuf),
    /// Structured rectangle; triangles are assigned to `regions[k]` when
    /// their centroid lies between `splits[k-1]` and `splits[k]` in x.
    Generated { nx: usize, ny: usize, lx: f64, ly: f64, layout: ContactLayout, regions: Vec<String>, splits: Vec<f64> },
}

/// Output unit conversion. Potentials are multiplied by `thermal_voltage`,
/// coordinates by `length` and densities by `density`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub thermal_voltage: f64,
    pub length: f64,
    pub density: f64,
}

impl Default for Scaling {
    fn default() -> Self {
        Scaling { thermal_voltage: 1.0, length: 1.0, density: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub contact: u32,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshots: Vec<f64>,
    pub vtk: bool,
}

/// A validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub obtuse: ObtusePolicy,
    pub doping_file: Option<PathBuf>,
    pub regions: BTreeMap<String, MaterialRegion>,
    pub boundary: BoundarySpec,
    pub statistics: StatisticsModel,
    pub recombination: RecombinationModel,
    pub settings: SolverSettings,
    pub t0: f64,
    pub t_end: f64,
    pub sweep: Option<SweepConfig>,
    pub scaling: Scaling,
    pub output: OutputConfig,
}

fn syntax_error(text: &str, e: toml::de::Error) -> ConfigError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    ConfigError::Syntax { line, column, message: e.message().trim().to_string() }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{key} must be positive and finite, got {v}")))
    }
}

/// Parse and validate a configuration. Relative paths are resolved against
/// the current directory.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_in(text, Path::new("."))
}

/// Read a configuration file; relative paths inside it are resolved against
/// the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
    parse_config_in(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse_config_in(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| syntax_error(text, e))?;
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
    let existing = |what: &'static str, p: &PathBuf| {
        let full = resolve(p);
        if full.is_file() {
            Ok(full)
        } else {
            Err(ConfigError::MissingFile { what, path: full })
        }
    };

    let m = &raw.mesh;
    let generated_keys = [m.nx.is_some(), m.ny.is_some(), m.lx.is_some(), m.ly.is_some()];
    let mesh = match &m.file {
        Some(f) => {
            if generated_keys.iter().any(|b| *b) || m.regions.is_some() || m.splits.is_some() {
                return Err(invalid("[mesh]: `file` cannot be combined with generator keys"));
            }
            if m.left_contact.is_some() || m.right_contact.is_some() {
                return Err(invalid("[mesh]: contact sides apply only to generated meshes"));
            }
            MeshSource::File(existing("mesh file", f)?)
        }
        None => {
            let (Some(nx), Some(ny)) = (m.nx, m.ny) else {
                return Err(invalid("[mesh]: need either `file` or `nx` and `ny`"));
            };
            if nx == 0 || ny == 0 {
                return Err(invalid("[mesh]: nx and ny must be at least 1"));
            }
            let lx = positive("mesh.lx", m.lx.unwrap_or(1.0))?;
            let ly = positive("mesh.ly", m.ly.unwrap_or(1.0))?;
            let regions = m.regions.clone().unwrap_or_else(|| vec!["0".to_string()]);
            let splits = m.splits.clone().unwrap_or_default();
            if regions.len() != splits.len() + 1 {
                return Err(invalid("[mesh]: `regions` needs exactly one more entry than `splits`"));
            }
            if splits.windows(2).any(|w| !(w[1] > w[0])) || splits.iter().any(|s| !(*s > 0.0 && *s < lx)) {
                return Err(invalid("[mesh]: `splits` must increase strictly inside (0, lx)"));
            }
            let layout = ContactLayout { left: m.left_contact, right: m.right_contact };
            MeshSource::Generated { nx, ny, lx, ly, layout, regions, splits }
        }
    };
    let obtuse = match m.obtuse {
        ObtuseName::Reject => ObtusePolicy::Reject,
        ObtuseName::Clamp => ObtusePolicy::Clamp,
    };
    let doping_file = m.doping_file.as_ref().map(|p| existing("doping file", p)).transpose()?;

    let statistics = match raw.statistics {
        StatisticsName::Boltzmann => {
            if raw.g_choice != GChoice::F {
                return Err(invalid("g_choice = \"Fprime\" requires fermi-dirac statistics"));
            }
            StatisticsModel::boltzmann()
        }
        StatisticsName::FermiDirac => StatisticsModel::fermi_dirac(raw.g_choice),
    };
    let FluxName::GeneralizedSg = raw.transport.fermi_flux;

    let mut regions = BTreeMap::new();
    for (name, r) in &raw.region {
        regions.insert(name.clone(), build_region(name, r)?);
    }
    if regions.is_empty() {
        return Err(invalid("at least one [region.<name>] section is required"));
    }
    if !statistics.is_boltzmann() {
        let used: Vec<(&String, &MaterialRegion)> = regions.iter().filter(|(_, r)| r.transport).collect();
        for w in used.windows(2) {
            if w[0].1.band_offset != w[1].1.band_offset {
                return Err(DeviceError::Heterojunction { first: w[0].0.clone(), second: w[1].0.clone() }.into());
            }
        }
    }

    let mut boundary = BoundarySpec::default();
    for (key, c) in &raw.contact {
        let id: u32 = key.parse().map_err(|_| invalid(format!("[contact.{key}]: contact ids are non-negative integers")))?;
        boundary.contacts.insert(id, build_contact(key, c)?);
    }
    let capacity = raw.neumann.capacity;
    if !(capacity >= 0.0 && capacity.is_finite()) {
        return Err(invalid(format!("neumann.capacity must be finite and non-negative, got {capacity}")));
    }
    let datum = raw.neumann.datum.as_ref().map_or(Ok(Ramp::constant(0.0)), |d| d.build("neumann.datum"))?;
    boundary.robin = RobinSpec { capacity, datum };

    let recombination = RecombinationModel { srh: raw.recombination.srh, auger: raw.recombination.auger, ..Default::default() };

    let mut s = SolverSettings::default();
    let mut linear = LinearSolverOptions::default();
    if let Some(b) = raw.linalg.backend {
        linear.backend = b;
    }
    match (raw.linalg.lin_tol, raw.poisson.lin_tol) {
        (Some(a), Some(b)) if a != b => return Err(invalid("linalg.lin_tol and poisson.lin_tol disagree")),
        (Some(v), _) | (None, Some(v)) => linear.lin_tol = v,
        (None, None) => {}
    }
    if let Some(v) = raw.linalg.max_iterations {
        linear.max_iterations = v;
    }
    s.linear = linear;
    s.exec = match raw.execution {
        Some(ExecutionName::Parallel) => Execution::Parallel,
        Some(ExecutionName::Sequential) => Execution::Sequential,
        None => Execution::default(),
    };
    let p = &raw.poisson;
    s.newton_tol = p.newton_tol.unwrap_or(s.newton_tol);
    s.max_newton_iters = p.max_newton_iters.unwrap_or(s.max_newton_iters);
    let g = &raw.gummel;
    s.gummel_tol = g.tol.unwrap_or(s.gummel_tol);
    s.max_gummel_iters = g.max_iters.unwrap_or(s.max_gummel_iters);
    s.newton_step_tol = g.newton_step_tol.unwrap_or(s.newton_step_tol);
    let tm = &raw.time;
    s.dt_init = tm.dt_init.unwrap_or(s.dt_init);
    s.dt_min = tm.dt_min.unwrap_or(s.dt_min);
    s.dt_max = tm.dt_max.unwrap_or(s.dt_max);
    s.dt_grow = tm.dt_grow.unwrap_or(s.dt_grow);
    s.dt_shrink = tm.dt_shrink.unwrap_or(s.dt_shrink);
    s.grow_below = tm.grow_below.unwrap_or(s.grow_below);
    s.audit_abort_factor = raw.audit.abort_factor.unwrap_or(s.audit_abort_factor);
    s.validate().map_err(|e| invalid(e.to_string()))?;
    if s.max_newton_iters == 0 {
        return Err(invalid("poisson.max_newton_iters must be positive"));
    }

    let t0 = tm.t0.unwrap_or(0.0);
    let t_end = tm.t_end.unwrap_or(1.0);
    if !(t0.is_finite() && t_end.is_finite() && t_end >= t0) {
        return Err(invalid(format!("[time]: need finite t0 <= t_end, got {t0} and {t_end}")));
    }

    let sweep = match raw.sweep {
        Some(sw) => {
            if sw.values.is_empty() || sw.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("[sweep]: values must be a non-empty list of finite numbers"));
            }
            if !boundary.contacts.contains_key(&sw.contact) {
                return Err(invalid(format!("[sweep]: contact {} has no [contact.{}] section", sw.contact, sw.contact)));
            }
            Some(SweepConfig { contact: sw.contact, values: sw.values })
        }
        None => None,
    };

    let sc = &raw.scaling;
    let scaling = Scaling {
        thermal_voltage: positive("scaling.thermal_voltage", sc.thermal_voltage)?,
        length: positive("scaling.length", sc.length)?,
        density: positive("scaling.density", sc.density)?,
    };

    let snapshots = raw.output.snapshots.clone();
    check_snapshots(&snapshots, t0, t_end)?;
    let output = OutputConfig {
        dir: resolve(&raw.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))),
        snapshots,
        vtk: raw.output.vtk,
    };

    Ok(RunConfig {
        mesh,
        obtuse,
        doping_file,
        regions,
        boundary,
        statistics,
        recombination,
        settings: s,
        t0,
        t_end,
        sweep,
        scaling,
        output,
    })
}

/// Snapshot times must lie in `[t0, t_end]`.
pub fn check_snapshots(times: &[f64], t0: f64, t_end: f64) -> Result<(), ConfigError> {
    match times.iter().find(|t| !(**t >= t0 && **t <= t_end)) {
        Some(t) => Err(invalid(format!("snapshot time {t} lies outside [{t0}, {t_end}]"))),
        None => Ok(()),
    }
}

fn build_region(name: &str, r: &RegionSection) -> Result<MaterialRegion, ConfigError> {
    let mut m = if !r.transport {
        MaterialRegion::insulator(1.0)
    } else if let Some(ni) = r.ni {
        MaterialRegion::intrinsic(positive(&format!("region.{name}.ni"), ni)?)
    } else {
        MaterialRegion::default()
    };
    if !r.transport {
        let carrier_keys = [r.mu1.is_some(), r.mu2.is_some(), r.rho.is_some(), r.ni.is_some(), r.band_offset.is_some()];
        if carrier_keys.iter().any(|b| *b) || r.tau.is_some() || r.auger.is_some() || r.n_trap.is_some() || r.srh_ni.is_some() {
            return Err(invalid(format!("[region.{name}]: carrier parameters given for a region with transport = false")));
        }
    }
    if let Some(e) = r.eps {
        m.eps = e.build();
    }
    if let Some(mu) = r.mu1 {
        m.mu[0] = mu.build();
    }
    if let Some(mu) = r.mu2 {
        m.mu[1] = mu.build();
    }
    if let Some(rho) = r.rho {
        m.rho = rho;
    }
    if let Some(b) = r.band_offset {
        m.band_offset = b;
    }
    let srh = SrhParams {
        ni: r.srh_ni.unwrap_or(m.srh.ni),
        n_trap: r.n_trap.unwrap_or(m.srh.n_trap),
        tau: r.tau.unwrap_or(m.srh.tau),
    };
    m.srh = srh;
    if let Some(c) = r.auger {
        m.auger = c;
    }
    m.doping = r.doping;
    Ok(m)
}

fn build_contact(key: &str, c: &ContactSection) -> Result<ContactSpec, ConfigError> {
    let at = |field: &str| format!("contact.{key}.{field}");
    let explicit = c.phi_ramp.is_some() || c.phibar1_ramp.is_some() || c.phibar2_ramp.is_some();
    if c.ohmic && !explicit {
        let bias = c.bias_ramp.as_ref().map_or(Ok(Ramp::constant(0.0)), |r| r.build(&at("bias_ramp")))?;
        return Ok(ContactSpec::biased(bias));
    }
    if c.bias_ramp.is_some() {
        return Err(invalid(format!(
            "[contact.{key}]: bias_ramp cannot be combined with explicit ramps or ohmic = false"
        )));
    }
    let ramp = |r: &Option<RampInput>, field: &str| r.as_ref().map_or(Ok(Ramp::constant(0.0)), |r| r.build(&at(field)));
    Ok(ContactSpec {
        phi: ramp(&c.phi_ramp, "phi_ramp")?,
        phibar: [ramp(&c.phibar1_ramp, "phibar1_ramp")?, ramp(&c.phibar2_ramp, "phibar2_ramp")?],
        ohmic: c.ohmic,
    })
}

fn parse_doping(text: &str) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        for tok in content.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| ConfigError::Syntax {
                line: k + 1,
                column: line.find(tok).map_or(1, |c| c + 1),
                message: format!("invalid doping value `{tok}`"),
            })?;
            if !v.is_finite() {
                return Err(invalid(format!("doping file line {}: non-finite value", k + 1)));
            }
            out.push(v);
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Load or generate the mesh.
    pub fn load_mesh(&self) -> Result<Mesh, ConfigError> {
        match &self.mesh {
            MeshSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                Ok(load_mesh(&text)?)
            }
            MeshSource::Generated { nx, ny, lx, ly, layout, regions, splits } => {
                let splits = splits.clone();
                Ok(generate_rect_mesh(*nx, *ny, *lx, *ly, *layout)
                    .retag_regions(regions.clone(), move |c| splits.iter().filter(|s| c[0] > **s).count()))
            }
        }
    }

    /// Mesh, dual geometry and device data, fully validated.
    pub fn build_device(&self) -> Result<DeviceSpec, ConfigError> {
        let mesh = Arc::new(self.load_mesh()?);
        let dual = Arc::new(build_dual(&mesh, self.obtuse)?);
        let doping = match &self.doping_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                Some(parse_doping(&text)?)
            }
            None => None,
        };
        Ok(DeviceSpec::new(
            mesh,
            dual,
            &self.regions,
            self.boundary.clone(),
            self.statistics.clone(),
            self.recombination.clone(),
            doping,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[mesh]
nx = 4
ny = 2
left_contact = 0
right_contact = 1

[region.0]
ni = 1e-2
doping = 1.0

[contact.0]
[contact.1]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.settings, SolverSettings::default());
        assert_eq!((cfg.t0, cfg.t_end), (0.0, 1.0));
        assert_eq!(cfg.scaling, Scaling::default());
        assert!(cfg.statistics.is_boltzmann());
        assert!(cfg.boundary.contacts[&0].ohmic);
        assert_eq!(cfg.regions["0"].band_offset, [1e-2f64.ln(); 2]);
        let spec = cfg.build_device().unwrap();
        assert_eq!(spec.node_count(), 15);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = format!("foo = 1\n{MINIMAL}");
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }), "{err:?}");
        assert!(msg.contains("foo"), "{msg}");

        let nested = MINIMAL.replace("doping = 1.0", "doping = 1.0\ndopnig = 2.0");
        let msg = parse_config(&nested).unwrap_err().to_string();
        assert!(msg.contains("dopnig"), "{msg}");
    }

    #[test]
    fn fermi_dirac_heterojunction_rejected() {
        let text = format!(
            "statistics = \"fermi-dirac\"\n{}\n[region.1]\nband_offset = [0.5, 0.0]\n",
            MINIMAL.replace("nx = 4", "nx = 4\nregions = [\"0\", \"1\"]\nsplits = [0.5]")
        );
        let err = parse_config(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Device(DeviceError::Heterojunction { .. })), "{err:?}");
        assert!(err.to_string().contains("Boltzmann"));
        // the same layout is fine under Boltzmann statistics
        let boltz = text.replace("statistics = \"fermi-dirac\"", "");
        parse_config(&boltz).unwrap().build_device().unwrap();
    }

    #[test]
    fn ramps_and_contacts() {
        let text = MINIMAL.replace("[contact.0]", "[contact.0]\nbias_ramp = [[0.0, 0.0], [1.0, 0.5]]")
            .replace("[contact.1]", "[contact.1]\nohmic = false\nphi_ramp = 0.25");
        let cfg = parse_config(&text).unwrap();
        let c0 = &cfg.boundary.contacts[&0];
        assert_eq!(c0.phibar[1].eval(0.5), -0.25);
        let c1 = &cfg.boundary.contacts[&1];
        assert!(!c1.ohmic);
        assert_eq!(c1.phi.eval(3.0), 0.25);
        let bad = MINIMAL.replace("[contact.0]", "[contact.0]\nbias_ramp = [[1.0, 0.0], [0.0, 0.5]]");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("increasing"));
        let mixed = MINIMAL.replace("[contact.0]", "[contact.0]\nbias_ramp = 1\nphi_ramp = 0");
        assert!(matches!(parse_config(&mixed), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn semantic_checks() {
        let cases = [
            ("[scaling]\nlength = 0\n", "scaling.length"),
            ("[time]\nt0 = 1\nt_end = 0\n", "t0"),
            ("[time]\ndt_min = 1\ndt_init = 0.1\n", "dt_min"),
            ("[output]\nsnapshots = [2.0]\n", "snapshot"),
            ("[sweep]\ncontact = 7\nvalues = [0.1]\n", "contact 7"),
            ("[mesh2]\n", "mesh2"),
        ];
        for (extra, needle) in cases {
            let msg = parse_config(&format!("{MINIMAL}\n{extra}")).unwrap_err().to_string();
            assert!(msg.contains(needle), "{extra}: {msg}");
        }
        let missing = MINIMAL.replace("nx = 4\nny = 2\nleft_contact = 0\nright_contact = 1", "file = \"nope.mesh\"");
        assert!(matches!(parse_config(&missing), Err(ConfigError::MissingFile { .. })));
    }

    #[test]
    fn generated_regions_follow_splits() {
        let text = MINIMAL
            .replace("nx = 4", "nx = 4\nregions = [\"p\", \"n\"]\nsplits = [0.5]")
            .replace("[region.0]", "[region.p]\nni = 1e-2\n[region.n]");
        let cfg = parse_config(&text).unwrap();
        let mesh = cfg.load_mesh().unwrap();
        assert_eq!(mesh.region_names(), ["p", "n"]);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let cx: f64 = tri.nodes.iter().map(|&i| mesh.nodes()[i][0]).sum::<f64>() / 3.0;
            assert_eq!(tri.region, usize::from(cx > 0.5), "triangle {t}");
        }
    }

    #[test]
    fn doping_file_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<String> = (0..15).map(|i| format!("{}", i as f64 * 0.1)).collect();
        std::fs::write(dir.path().join("d.txt"), format!("# nodal doping\n{}\n", values.join(" "))).unwrap();
        let text = MINIMAL.replace("right_contact = 1", "right_contact = 1\ndoping_file = \"d.txt\"");
        let cfg = parse_config_in(&text, dir.path()).unwrap();
        let spec = cfg.build_device().unwrap();
        let vol = spec.dual.cell_volume[14];
        assert!((spec.doping_charge(14) - 1.4 * vol).abs() < 1e-15);
        std::fs::write(dir.path().join("d.txt"), "1 2 x").unwrap();
        assert!(matches!(cfg.build_device(), Err(ConfigError::Syntax { line: 1, column: 5, .. })));
    }
}
