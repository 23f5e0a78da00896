//! Ready-made devices for examples, benchmarks and the self test.

use crate::device::{BoundarySpec, ContactSpec, DeviceError, DeviceSpec, MaterialRegion, Ramp, Tensor2};
use crate::mesh::{build_dual, generate_rect_mesh, ContactLayout, ObtusePolicy};
use crate::recombination::RecombinationModel;
use crate::statistics::StatisticsModel;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Abrupt PN junction on a rectangle: p side left on contact 0, n side right
/// on contact 1, junction at mid-length. All quantities are scaled.
///
/// The applied voltage acts on contact 0, so a positive bias is forward.
#[derive(Debug, Clone)]
pub struct PnDiode {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub width: f64,
    /// Magnitude of the net doping on either side.
    pub doping: f64,
    pub ni: f64,
    pub eps: f64,
    pub mu: [f64; 2],
    pub bias: Ramp,
    pub statistics: StatisticsModel,
    pub recombination: RecombinationModel,
}

impl Default for PnDiode {
    fn default() -> Self {
        PnDiode {
            nx: 64,
            ny: 8,
            length: 1.0,
            width: 0.125,
            doping: 1.0,
            ni: 1e-4,
            eps: 1e-3,
            mu: [1.0, 1.0],
            bias: Ramp::constant(0.0),
            statistics: StatisticsModel::boltzmann(),
            recombination: RecombinationModel::default(),
        }
    }
}

impl PnDiode {
    pub fn with_bias(mut self, bias: Ramp) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_mesh(mut self, nx: usize, ny: usize) -> Self {
        self.nx = nx;
        self.ny = ny;
        self
    }

    pub fn with_recombination(mut self, r: RecombinationModel) -> Self {
        self.recombination = r;
        self
    }

    pub fn build(&self) -> Result<DeviceSpec, DeviceError> {
        let half = 0.5 * self.length;
        let mesh = generate_rect_mesh(self.nx, self.ny, self.length, self.width, ContactLayout::default())
            .retag_regions(vec!["p".into(), "n".into()], |c| usize::from(c[0] > half));
        let mesh = Arc::new(mesh);
        let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject)?);
        let base = MaterialRegion {
            eps: Tensor2::isotropic(self.eps),
            mu: self.mu.map(Tensor2::isotropic),
            ..MaterialRegion::intrinsic(self.ni)
        };
        let mut regions = BTreeMap::new();
        regions.insert("p".to_string(), MaterialRegion { doping: -self.doping, ..base.clone() });
        regions.insert("n".to_string(), MaterialRegion { doping: self.doping, ..base });
        let mut boundary = BoundarySpec::default();
        boundary.contacts.insert(0, ContactSpec::biased(self.bias.clone()));
        boundary.contacts.insert(1, ContactSpec::grounded());
        DeviceSpec::new(mesh, dual, &regions, boundary, self.statistics.clone(), self.recombination.clone(), None)
    }
}

/// Uniformly doped bar between two ohmic contacts.
pub fn resistor(nx: usize, ny: usize, doping: f64, bias: Ramp) -> Result<DeviceSpec, DeviceError> {
    let mesh = Arc::new(generate_rect_mesh(nx, ny, 1.0, 0.25, ContactLayout::default()));
    let dual = Arc::new(build_dual(&mesh, ObtusePolicy::Reject)?);
    let mut regions = BTreeMap::new();
    regions.insert("0".to_string(), MaterialRegion { doping, eps: Tensor2::isotropic(1e-2), ..MaterialRegion::intrinsic(1e-3) });
    let mut boundary = BoundarySpec::default();
    boundary.contacts.insert(0, ContactSpec::biased(bias));
    boundary.contacts.insert(1, ContactSpec::grounded());
    DeviceSpec::new(
        mesh,
        dual,
        &regions,
        boundary,
        StatisticsModel::boltzmann(),
        RecombinationModel::default(),
        None,
    )
}
