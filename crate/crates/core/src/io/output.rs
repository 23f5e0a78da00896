use super::config::Scaling;
use crate::audit::BalanceReport;
use crate::device::{Carrier, DeviceSpec, DeviceState};
use crate::statistics::StatisticsError;
use crate::stepper::{SweepPoint, TransientResult};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write `{}`: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Statistics(#[from] StatisticsError),
}

/// Write `bytes` to a temporary file next to `path` and rename it into place,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    let io = |source| OutputError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

pub const FIELDS_HEADER: &str = "node,x,y,phi,phibar1,phibar2,u1,u2,chi1,chi2";

/// Nodal fields as CSV. Potentials, coordinates and densities are converted
/// with `scaling`; chemical potentials stay dimensionless. Nodes outside the
/// transport region report zero densities and `NaN` chemical potentials.
pub fn fields_csv(spec: &DeviceSpec, state: &DeviceState, scaling: &Scaling) -> Result<String, StatisticsError> {
    let mut out = String::with_capacity(200 * spec.node_count());
    out.push_str(FIELDS_HEADER);
    out.push('\n');
    for (i, p) in spec.mesh.nodes().iter().enumerate() {
        let mut row = [0.0; 9];
        row[0] = p[0] * scaling.length;
        row[1] = p[1] * scaling.length;
        row[2] = state.phi[i] * scaling.thermal_voltage;
        row[3] = state.phibar[0][i] * scaling.thermal_voltage;
        row[4] = state.phibar[1][i] * scaling.thermal_voltage;
        for k in Carrier::BOTH {
            row[5 + k.idx()] = spec.carrier_density(state, i, k)? * scaling.density;
            row[7 + k.idx()] = spec.chemical_potential(state, i, k).unwrap_or(f64::NAN);
        }
        let _ = write!(out, "{i}");
        for v in row {
            out.push(',');
            num(&mut out, v);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_fields(spec: &DeviceSpec, state: &DeviceState, scaling: &Scaling, path: &Path) -> Result<(), OutputError> {
    write_atomic(path, fields_csv(spec, state, scaling)?.as_bytes())
}

fn current_header(out: &mut String, contacts: &[u32]) {
    for k in 1..=2 {
        for c in contacts {
            let _ = write!(out, ",I{k}_c{c}");
        }
    }
    out.push_str(",max_balance_residual,kirchhoff_defect\n");
}

fn current_cells(out: &mut String, contacts: &[u32], report: &BalanceReport) {
    for k in 0..2 {
        for c in contacts {
            out.push(',');
            num(out, report.currents.get(c).map_or(f64::NAN, |i| i[k]));
        }
    }
    out.push(',');
    num(out, report.max_balance_residual());
    out.push(',');
    num(out, report.kirchhoff_defect);
    out.push('\n');
}

fn contacts_of<'a>(mut reports: impl Iterator<Item = &'a BalanceReport>) -> Vec<u32> {
    reports.next().map(|r| r.currents.keys().copied().collect()).unwrap_or_default()
}

/// One row per accepted step; currents and residuals come straight from the
/// step's balance report and are in scaled units.
pub fn timeseries_csv(result: &TransientResult) -> String {
    let contacts = contacts_of(result.records.iter().map(|r| &r.report));
    let mut out = String::from("t,dt,gummel_iters");
    current_header(&mut out, &contacts);
    for r in &result.records {
        num(&mut out, r.t);
        out.push(',');
        num(&mut out, r.dt);
        let _ = write!(out, ",{}", r.gummel_iters);
        current_cells(&mut out, &contacts, &r.report);
    }
    out
}

pub fn write_timeseries(result: &TransientResult, path: &Path) -> Result<(), OutputError> {
    write_atomic(path, timeseries_csv(result).as_bytes())
}

/// One row per sweep point, led by the applied value.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let contacts = contacts_of(points.iter().map(|p| &p.report));
    let mut out = String::from("value,gummel_iters");
    current_header(&mut out, &contacts);
    for p in points {
        num(&mut out, p.value);
        let _ = write!(out, ",{}", p.gummel_iters);
        current_cells(&mut out, &contacts, &p.report);
    }
    out
}

/// Legacy ASCII VTK unstructured grid with the nodal fields as point data.
pub fn fields_vtk(spec: &DeviceSpec, state: &DeviceState, scaling: &Scaling) -> Result<String, StatisticsError> {
    let mesh = &spec.mesh;
    let n = mesh.node_count();
    let tris = mesh.triangles();
    let mut out = String::from("# vtk DataFile Version 3.0\nvanroos fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {n} double");
    for p in mesh.nodes() {
        let _ = writeln!(out, "{:.16e} {:.16e} 0", p[0] * scaling.length, p[1] * scaling.length);
    }
    let _ = writeln!(out, "CELLS {} {}", tris.len(), 4 * tris.len());
    for t in tris {
        let _ = writeln!(out, "3 {} {} {}", t.nodes[0], t.nodes[1], t.nodes[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", tris.len());
    for _ in tris {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "CELL_DATA {}\nSCALARS region int 1\nLOOKUP_TABLE default", tris.len());
    for t in tris {
        let _ = writeln!(out, "{}", t.region);
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    let mut scalar = |name: &str, values: &mut dyn Iterator<Item = f64>| {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(out, "{v:.16e}");
        }
    };
    let ut = scaling.thermal_voltage;
    scalar("phi", &mut state.phi.iter().map(|v| v * ut));
    scalar("phibar1", &mut state.phibar[0].iter().map(|v| v * ut));
    scalar("phibar2", &mut state.phibar[1].iter().map(|v| v * ut));
    for k in Carrier::BOTH {
        let u = (0..n).map(|i| spec.carrier_density(state, i, k).map(|u| u * scaling.density)).collect::<Result<Vec<_>, _>>()?;
        scalar(&format!("u{}", k.number()), &mut u.into_iter());
    }
    Ok(out)
}

pub fn write_vtk(spec: &DeviceSpec, state: &DeviceState, scaling: &Scaling, path: &Path) -> Result<(), OutputError> {
    write_atomic(path, fields_vtk(spec, state, scaling)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{BoundarySpec, ContactSpec, MaterialRegion};
    use crate::mesh::{build_dual, Mesh, BoundaryTag, BoundaryEdge, Triangle, ObtusePolicy};
    use crate::presets::PnDiode;
    use crate::poisson::PoissonSettings;
    use crate::recombination::RecombinationModel;
    use crate::statistics::StatisticsModel;
    use crate::stepper::{run_transient, SolverSettings};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn parse_rows(text: &str) -> Vec<Vec<f64>> {
        text.lines().skip(1).map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect()
    }

    fn square() -> DeviceSpec {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let triangles = vec![Triangle { nodes: [0, 1, 2], region: 0 }, Triangle { nodes: [0, 2, 3], region: 0 }];
        let edge = |a, b, tag| BoundaryEdge { nodes: [a, b], tag };
        let bedges = vec![
            edge(0, 1, BoundaryTag::Neumann),
            edge(1, 2, BoundaryTag::Contact(1)),
            edge(2, 3, BoundaryTag::Neumann),
            edge(3, 0, BoundaryTag::Contact(0)),
        ];
        let mesh = Arc::new(Mesh::new(nodes, triangles, bedges, vec!["0".into()]).unwrap());
        let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject).unwrap());
        let mut regions = BTreeMap::new();
        regions.insert("0".to_string(), MaterialRegion::intrinsic(0.5));
        let mut boundary = BoundarySpec::default();
        boundary.contacts.insert(0, ContactSpec::grounded());
        boundary.contacts.insert(1, ContactSpec::grounded());
        DeviceSpec::new(mesh, dual, &regions, boundary, StatisticsModel::boltzmann(), RecombinationModel::default(), None)
            .unwrap()
    }

    #[test]
    fn four_node_equilibrium() {
        let spec = square();
        let state = spec.equilibrium_init(0.0, &PoissonSettings::default()).unwrap();
        let csv = fields_csv(&spec, &state, &Scaling::default()).unwrap();
        assert_eq!(csv.lines().next(), Some(FIELDS_HEADER));
        let rows = parse_rows(&csv);
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.len(), 9);
            assert_eq!(r[2], rows[0][2]);
            assert!((r[5] - 0.5).abs() < 1e-14 && (r[6] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let spec = PnDiode::default().with_mesh(8, 2).build().unwrap();
        let mut state = spec.equilibrium_init(0.0, &PoissonSettings::default()).unwrap();
        state.phibar[0][3] = std::f64::consts::PI * 1e-7;
        state.phibar[1][4] = -1.0 / 3.0;
        let csv = fields_csv(&spec, &state, &Scaling::default()).unwrap();
        let rows = parse_rows(&csv);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r[2].to_bits(), state.phi[i].to_bits());
            assert_eq!(r[3].to_bits(), state.phibar[0][i].to_bits());
            assert_eq!(r[4].to_bits(), state.phibar[1][i].to_bits());
        }
    }

    #[test]
    fn scaling_applies_to_dimensional_columns() {
        let spec = square();
        let state = spec.equilibrium_init(0.0, &PoissonSettings::default()).unwrap();
        let s = Scaling { thermal_voltage: 0.025, length: 1e-4, density: 1e16 };
        let plain = parse_rows(&fields_csv(&spec, &state, &Scaling::default()).unwrap());
        let scaled = parse_rows(&fields_csv(&spec, &state, &s).unwrap());
        for (a, b) in plain.iter().zip(&scaled) {
            assert_eq!(b[0], a[0] * 1e-4);
            assert_eq!(b[2], a[2] * 0.025);
            assert_eq!(b[5], a[5] * 1e16);
            assert_eq!(b[7], a[7]);
        }
    }

    #[test]
    fn insulator_nodes_report_nan_potential() {
        use crate::mesh::{generate_rect_mesh, ContactLayout};
        let mesh = generate_rect_mesh(4, 1, 1.0, 0.25, ContactLayout::default())
            .retag_regions(vec!["si".into(), "ox".into()], |c| usize::from(c[0] > 0.5));
        let mesh = Arc::new(mesh);
        let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject).unwrap());
        let mut regions = BTreeMap::new();
        regions.insert("si".to_string(), MaterialRegion::intrinsic(0.1));
        regions.insert("ox".to_string(), MaterialRegion::insulator(1.0));
        let mut boundary = BoundarySpec::default();
        boundary.contacts.insert(0, ContactSpec::grounded());
        boundary.contacts.insert(1, ContactSpec::gate(crate::device::Ramp::constant(0.0)));
        let spec = DeviceSpec::new(mesh, dual, &regions, boundary, StatisticsModel::boltzmann(), RecombinationModel::default(), None)
            .unwrap();
        let state = spec.equilibrium_init(0.0, &PoissonSettings::default()).unwrap();
        let csv = fields_csv(&spec, &state, &Scaling::default()).unwrap();
        let last = csv.lines().last().unwrap();
        assert!(last.ends_with(",0.0000000000000000e0,0.0000000000000000e0,NaN,NaN"), "{last}");
    }

    #[test]
    fn timeseries_columns_come_from_reports() {
        let spec = PnDiode::default().with_mesh(8, 2).build().unwrap();
        let settings = SolverSettings { dt_init: 0.1, dt_max: 0.1, ..Default::default() };
        let init = spec.equilibrium_init(0.0, &settings.poisson()).unwrap();
        let result = run_transient(&spec, &init, 1.0, &settings, &[]).unwrap();
        let csv = timeseries_csv(&result);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,dt,gummel_iters,I1_c0,I1_c1,I2_c0,I2_c1,max_balance_residual,kirchhoff_defect"
        );
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), result.records.len());
        assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
        for (row, rec) in rows.iter().zip(&result.records) {
            assert_eq!(row[0], rec.t);
            assert_eq!(row[3], rec.report.currents[&0][0]);
            assert_eq!(row[6], rec.report.currents[&1][1]);
            assert_eq!(row[7], rec.report.max_balance_residual());
            assert_eq!(row[8], rec.report.kirchhoff_defect);
            assert!(row[3..7].iter().all(|i| i.abs() <= 1e-10));
        }
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("a.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn vtk_layout() {
        let spec = square();
        let state = spec.equilibrium_init(0.0, &PoissonSettings::default()).unwrap();
        let vtk = fields_vtk(&spec, &state, &Scaling::default()).unwrap();
        assert!(vtk.contains("POINTS 4 double"));
        assert!(vtk.contains("CELLS 2 8"));
        assert!(vtk.contains("SCALARS u2 double 1"));
        assert_eq!(vtk.lines().filter(|l| *l == "5").count(), 2);
    }
}
