//! Net production rates `r_k` of the continuity equations.
//!
//! `r_k` is a production term: the continuity equations read
//! `∂u_k/∂t − ∇·j_k = r_k`. The classical SRH and Auger rates describe
//! recombination, so they enter with a minus sign, identically for both
//! carriers. A custom hook may add independent contributions per carrier.

use crate::device::{Carrier, DeviceSpec, SrhParams};
use crate::statistics::StatisticsError;
use std::fmt;
use std::sync::Arc;

/// `(u_1 u_2 − n_i²) / (τ_2 (u_1 + n_1) + τ_1 (u_2 + n_2))`
pub fn srh_rate(u1: f64, u2: f64, p: &SrhParams) -> f64 {
    (u1 * u2 - p.ni * p.ni) / (p.tau[1] * (u1 + p.n_trap[0]) + p.tau[0] * (u2 + p.n_trap[1]))
}

/// `(u_1 u_2 − n_i²)(c_1 u_1 + c_2 u_2)`
pub fn auger_rate(u1: f64, u2: f64, ni: f64, c: &[f64; 2]) -> f64 {
    (u1 * u2 - ni * ni) * (c[0] * u1 + c[1] * u2)
}

/// SRH rate and its partials with respect to `u_1`, `u_2`.
fn srh_with_partials(u1: f64, u2: f64, p: &SrhParams) -> (f64, f64, f64) {
    let num = u1 * u2 - p.ni * p.ni;
    let den = p.tau[1] * (u1 + p.n_trap[0]) + p.tau[0] * (u2 + p.n_trap[1]);
    let r = num / den;
    (r, (u2 - r * p.tau[1]) / den, (u1 - r * p.tau[0]) / den)
}

fn auger_with_partials(u1: f64, u2: f64, ni: f64, c: &[f64; 2]) -> (f64, f64, f64) {
    let num = u1 * u2 - ni * ni;
    let w = c[0] * u1 + c[1] * u2;
    (num * w, u2 * w + num * c[0], u1 * w + num * c[1])
}

/// Local data handed to a custom rate hook.
#[derive(Debug, Clone, Copy)]
pub struct RateContext<'a> {
    pub t: f64,
    pub node: usize,
    pub region: usize,
    pub phi: f64,
    pub phibar: [f64; 2],
    pub u: [f64; 2],
    /// User-computed global scalars, refreshed before each step.
    pub globals: &'a [f64],
}

/// Partials of `(r_1, r_2)`; `d_phibar[j][k] = ∂r_k/∂φ̃_j`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateJacobian {
    pub d_phi: [f64; 2],
    pub d_phibar: [[f64; 2]; 2],
}

/// Extra pointwise production rates.
///
/// Hooks without an analytic Jacobian are differentiated by one-sided
/// differences with step 1e-6. Rates should be Lipschitz in the potentials;
/// this is documented, not checked.
pub trait RateHook: Send + Sync + fmt::Debug {
    fn rates(&self, ctx: &RateContext<'_>) -> [f64; 2];

    fn jacobian(&self, _ctx: &RateContext<'_>) -> Option<RateJacobian> {
        None
    }
}

#[derive(Debug, Clone, Default)]
pub struct RecombinationModel {
    pub srh: bool,
    pub auger: bool,
    pub custom: Option<Arc<dyn RateHook>>,
    pub globals: Vec<f64>,
}

/// Rates `r_1`, `r_2` and their partials at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalRates {
    pub r: [f64; 2],
    pub jac: RateJacobian,
}

impl LocalRates {
    fn add_scaled(&mut self, other: &LocalRates, s: f64) {
        for k in 0..2 {
            self.r[k] += s * other.r[k];
            self.jac.d_phi[k] += s * other.jac.d_phi[k];
            for j in 0..2 {
                self.jac.d_phibar[j][k] += s * other.jac.d_phibar[j][k];
            }
        }
    }
}

const HOOK_STEP: f64 = 1e-6;

/// Pointwise rates in one region at given potentials.
pub fn rate_density(
    spec: &DeviceSpec,
    region: usize,
    node: usize,
    t: f64,
    phi: f64,
    phibar: [f64; 2],
) -> Result<LocalRates, StatisticsError> {
    let model = &spec.recombination;
    let mat = &spec.regions[region];
    let mut u = [0.0; 2];
    let mut du = [0.0; 2];
    for k in Carrier::BOTH {
        let d = spec.statistics.derivatives(spec.chi_in(region, k, phibar[k.idx()], phi))?;
        u[k.idx()] = mat.rho[k.idx()] * d.f;
        du[k.idx()] = mat.rho[k.idx()] * d.d1;
    }
    let (mut r, mut r_u1, mut r_u2) = (0.0, 0.0, 0.0);
    if model.srh {
        let (v, a, b) = srh_with_partials(u[0], u[1], &mat.srh);
        r -= v;
        r_u1 -= a;
        r_u2 -= b;
    }
    if model.auger {
        let (v, a, b) = auger_with_partials(u[0], u[1], mat.srh.ni, &mat.auger);
        r -= v;
        r_u1 -= a;
        r_u2 -= b;
    }
    // u_1 depends on φ̃_1 and −φ, u_2 on φ̃_2 and +φ
    let dr_dphi = -r_u1 * du[0] + r_u2 * du[1];
    let mut out = LocalRates {
        r: [r, r],
        jac: RateJacobian { d_phi: [dr_dphi; 2], d_phibar: [[r_u1 * du[0]; 2], [r_u2 * du[1]; 2]] },
    };
    if let Some(hook) = &model.custom {
        let ctx = RateContext { t, node, region, phi, phibar, u, globals: &model.globals };
        let extra = hook.rates(&ctx);
        let jac = match hook.jacobian(&ctx) {
            Some(j) => j,
            None => hook_differences(spec, hook.as_ref(), &ctx, extra)?,
        };
        out.add_scaled(&LocalRates { r: extra, jac }, 1.0);
    }
    Ok(out)
}

fn hook_differences(
    spec: &DeviceSpec,
    hook: &dyn RateHook,
    ctx: &RateContext<'_>,
    base: [f64; 2],
) -> Result<RateJacobian, StatisticsError> {
    let mat = &spec.regions[ctx.region];
    let eval = |phi: f64, phibar: [f64; 2]| -> Result<[f64; 2], StatisticsError> {
        let mut u = [0.0; 2];
        for k in Carrier::BOTH {
            u[k.idx()] =
                mat.rho[k.idx()] * spec.statistics.eval_f(spec.chi_in(ctx.region, k, phibar[k.idx()], phi))?;
        }
        Ok(hook.rates(&RateContext { phi, phibar, u, ..*ctx }))
    };
    let slope = |v: [f64; 2]| [(v[0] - base[0]) / HOOK_STEP, (v[1] - base[1]) / HOOK_STEP];
    let d_phi = slope(eval(ctx.phi + HOOK_STEP, ctx.phibar)?);
    let d1 = slope(eval(ctx.phi, [ctx.phibar[0] + HOOK_STEP, ctx.phibar[1]])?);
    let d2 = slope(eval(ctx.phi, [ctx.phibar[0], ctx.phibar[1] + HOOK_STEP])?);
    Ok(RateJacobian { d_phi, d_phibar: [d1, d2] })
}

/// `∫_{V_i∩Ω} r_k`, integrated region by region, with partials.
pub fn total_rate_and_jacobian(
    spec: &DeviceSpec,
    node: usize,
    t: f64,
    phi: f64,
    phibar: [f64; 2],
) -> Result<LocalRates, StatisticsError> {
    let mut total = LocalRates::default();
    let model = &spec.recombination;
    if !model.srh && !model.auger && model.custom.is_none() {
        return Ok(total);
    }
    for part in spec.transport_parts(node) {
        let local = rate_density(spec, part.region, node, t, phi, phibar)?;
        total.add_scaled(&local, part.measure);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{BoundarySpec, ContactSpec, MaterialRegion};
    use crate::mesh::{build_dual, generate_rect_mesh, ContactLayout, ObtusePolicy};
    use crate::statistics::{GChoice, StatisticsModel};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn unit_srh() -> SrhParams {
        SrhParams { ni: 1.0, n_trap: [1.0; 2], tau: [1.0; 2] }
    }

    #[test]
    fn srh_examples() {
        assert_eq!(srh_rate(2.0, 0.5, &unit_srh()), 0.0);
        assert_eq!(srh_rate(2.0, 2.0, &unit_srh()), 0.5);
        assert!(srh_rate(0.5, 0.5, &unit_srh()) < 0.0);
    }

    #[test]
    fn auger_examples() {
        assert_eq!(auger_rate(4.0, 0.25, 1.0, &[1.0, 1.0]), 0.0);
        assert_eq!(auger_rate(2.0, 1.0, 1.0, &[1.0, 1.0]), 3.0);
        assert_eq!(auger_rate(7.0, 3.0, 1.0, &[0.0, 0.0]), 0.0);
    }

    #[derive(Debug)]
    struct Constant(f64);
    impl RateHook for Constant {
        fn rates(&self, _: &RateContext<'_>) -> [f64; 2] {
            [self.0, 0.0]
        }
    }

    /// Depends on the densities, no analytic Jacobian.
    #[derive(Debug)]
    struct Quadratic;
    impl RateHook for Quadratic {
        fn rates(&self, c: &RateContext<'_>) -> [f64; 2] {
            [0.3 * c.u[0] * c.u[1], -0.1 * c.u[1] * c.u[1] + c.phi]
        }
    }

    fn spec(model: RecombinationModel, stats: StatisticsModel) -> DeviceSpec {
        let mesh = std::sync::Arc::new(generate_rect_mesh(3, 2, 1.0, 1.0, ContactLayout::default()));
        let dual = std::sync::Arc::new(build_dual(&mesh, ObtusePolicy::Reject).unwrap());
        let mut region = MaterialRegion::intrinsic(0.5);
        region.srh.tau = [0.7, 1.3];
        region.srh.n_trap = [0.2, 0.9];
        region.auger = [0.05, 0.02];
        region.rho = [1.5, 0.8];
        let mut regions = BTreeMap::new();
        regions.insert("0".to_string(), region);
        let mut b = BoundarySpec::default();
        b.contacts.insert(0, ContactSpec::grounded());
        b.contacts.insert(1, ContactSpec::grounded());
        DeviceSpec::new(mesh, dual, &regions, b, stats, model, None).unwrap()
    }

    #[test]
    fn equilibrium_annihilation() {
        let s = spec(RecombinationModel { srh: true, auger: true, ..Default::default() }, StatisticsModel::boltzmann());
        for phi in [-3.0, 0.0, 2.5] {
            // ρ_1ρ_2 e^{2 ln n_i} ≠ n_i² here, so pick φ̃ to restore mass action
            let shift = -0.5 * (1.5f64 * 0.8).ln();
            let r = rate_density(&s, 0, 4, 0.0, phi, [shift, shift]).unwrap();
            assert!(r.r[0].abs() < 1e-15 && r.r[1].abs() < 1e-15, "{:?}", r.r);
        }
    }

    #[test]
    fn custom_constant_is_additive() {
        let base = spec(RecombinationModel { srh: true, auger: true, ..Default::default() }, StatisticsModel::boltzmann());
        let with = spec(
            RecombinationModel { srh: true, auger: true, custom: Some(Arc::new(Constant(0.25))), globals: vec![] },
            StatisticsModel::boltzmann(),
        );
        let a = rate_density(&base, 0, 4, 0.0, 0.3, [0.4, -0.1]).unwrap();
        let b = rate_density(&with, 0, 4, 0.0, 0.3, [0.4, -0.1]).unwrap();
        assert_eq!(b.r[0], a.r[0] + 0.25);
        assert_eq!(b.r[1], a.r[1]);
    }

    fn check_partials(s: &DeviceSpec, phi: f64, pb: [f64; 2], tol: f64) -> Result<(), TestCaseError> {
        let r = rate_density(s, 0, 4, 0.0, phi, pb).unwrap();
        let h = 1e-6;
        let cd = |f: &dyn Fn(f64) -> [f64; 2]| {
            let (p, m) = (f(h), f(-h));
            [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)]
        };
        let fd_phi = cd(&|d| rate_density(s, 0, 4, 0.0, phi + d, pb).unwrap().r);
        let fd_1 = cd(&|d| rate_density(s, 0, 4, 0.0, phi, [pb[0] + d, pb[1]]).unwrap().r);
        let fd_2 = cd(&|d| rate_density(s, 0, 4, 0.0, phi, [pb[0], pb[1] + d]).unwrap().r);
        let close = |a: f64, b: f64| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
        for k in 0..2 {
            prop_assert!(close(r.jac.d_phi[k], fd_phi[k]), "d_phi[{}] {} vs {}", k, r.jac.d_phi[k], fd_phi[k]);
            prop_assert!(close(r.jac.d_phibar[0][k], fd_1[k]), "d1[{}] {} vs {}", k, r.jac.d_phibar[0][k], fd_1[k]);
            prop_assert!(close(r.jac.d_phibar[1][k], fd_2[k]), "d2[{}] {} vs {}", k, r.jac.d_phibar[1][k], fd_2[k]);
        }
        Ok(())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn jacobian_matches_differences(phi in -3.0f64..3.0, p1 in -2.0f64..2.0, p2 in -2.0f64..2.0) {
            let m = RecombinationModel { srh: true, auger: true, ..Default::default() };
            check_partials(&spec(m.clone(), StatisticsModel::boltzmann()), phi, [p1, p2], 1e-5)?;
            check_partials(&spec(m, StatisticsModel::fermi_dirac(GChoice::F)), phi, [p1, p2], 1e-5)?;
        }

        #[test]
        fn hook_jacobian_by_differences(phi in -1.0f64..1.0, p1 in -1.0f64..1.0, p2 in -1.0f64..1.0) {
            let m = RecombinationModel { srh: true, auger: false, custom: Some(Arc::new(Quadratic)), globals: vec![] };
            // one-sided hook differences are O(h) accurate
            check_partials(&spec(m, StatisticsModel::boltzmann()), phi, [p1, p2], 1e-4)?;
        }

        #[test]
        fn srh_sign(u1 in 1e-6f64..10.0, u2 in 1e-6f64..10.0) {
            let r = srh_rate(u1, u2, &unit_srh());
            prop_assert_eq!(r > 0.0, u1 * u2 > 1.0);
        }
    }
}
