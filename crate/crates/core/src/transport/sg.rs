//! Bernoulli function and the Scharfetter–Gummel edge flux.

use crate::device::{Carrier, DeviceSpec};
use crate::mesh::RegionPart;
use crate::statistics::{StatisticsError, StatisticsModel};

/// `B(x) = x/(eˣ − 1)`, with `B(0) = 1`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - 0.5 * x + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// `B'(x) = B(x)(1 − B(−x))/x`.
pub fn bernoulli_prime(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        -0.5 + x / 6.0 - x * x * x / 180.0
    } else {
        let b = bernoulli(x);
        if b == 0.0 {
            return 0.0;
        }
        b * (1.0 - bernoulli(-x)) / x
    }
}

/// Flux through one dual interface and its partials.
///
/// `value` is the component of `j_k` along `x_l − x_i` integrated over the
/// interface, which is the influx of carrier `k` into `V_i`. Partials are
/// indexed `[i, l]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdgeFlux {
    pub value: f64,
    pub d_phi: [f64; 2],
    pub d_phibar: [f64; 2],
}

impl EdgeFlux {
    /// The same flux seen from the other end.
    pub fn reversed(&self) -> EdgeFlux {
        EdgeFlux {
            value: -self.value,
            d_phi: [-self.d_phi[1], -self.d_phi[0]],
            d_phibar: [-self.d_phibar[1], -self.d_phibar[0]],
        }
    }

    fn accumulate(&mut self, other: &EdgeFlux) {
        self.value += other.value;
        for j in 0..2 {
            self.d_phi[j] += other.d_phi[j];
            self.d_phibar[j] += other.d_phibar[j];
        }
    }
}

/// Nodal data entering one region's share of an edge flux.
#[derive(Debug, Clone, Copy)]
pub struct FluxEnds {
    pub phi: [f64; 2],
    pub phibar: [f64; 2],
}

/// Generalized SG flux for a single material.
///
/// With `d = φ̃_l − φ̃_i`, `g = F/F'` at the mean chemical potential `χ̄` and
/// `Δ = ln F(χ_l) − ln F(χ_i) − d/g`, the flux is
/// `coef·a(χ̄)·B(Δ)·F(χ_l)·(1 − e^{−d/g})` with `a = G/F'`. Under Boltzmann
/// statistics `g = a = 1` and this is the classical scheme. It vanishes
/// exactly when `d = 0`.
///
/// The formula is evaluated with the ends in a canonical order, so swapping
/// them negates the result bit for bit.
pub fn material_flux(
    stats: &StatisticsModel,
    coef: f64,
    band_offset: f64,
    sign: f64,
    ends: &FluxEnds,
) -> Result<EdgeFlux, StatisticsError> {
    let key = |k: usize| (ends.phi[k], ends.phibar[k]);
    let (a, b) = (key(0), key(1));
    if a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).is_gt() {
        let swapped = FluxEnds { phi: [ends.phi[1], ends.phi[0]], phibar: [ends.phibar[1], ends.phibar[0]] };
        return Ok(oriented_flux(stats, coef, band_offset, sign, &swapped)?.reversed());
    }
    oriented_flux(stats, coef, band_offset, sign, ends)
}

fn oriented_flux(
    stats: &StatisticsModel,
    coef: f64,
    band_offset: f64,
    sign: f64,
    ends: &FluxEnds,
) -> Result<EdgeFlux, StatisticsError> {
    let chi = [ends.phibar[0] + sign * ends.phi[0] + band_offset, ends.phibar[1] + sign * ends.phi[1] + band_offset];
    let d = ends.phibar[1] - ends.phibar[0];
    let di = stats.derivatives(chi[0])?;
    let dl = stats.derivatives(chi[1])?;
    let (g, gp, a, ap) = if stats.is_boltzmann() {
        (1.0, 0.0, 1.0, 0.0)
    } else {
        let dm = stats.derivatives(0.5 * (chi[0] + chi[1]))?;
        let (a, ap) = stats.flux_weight(&dm);
        (dm.degeneracy(), dm.degeneracy_prime(), a, ap)
    };
    let y = d / g;
    let delta = stats.ln_f(chi[1])? - stats.ln_f(chi[0])? - y;
    let (b_pos, b_neg) = (bernoulli(delta), bernoulli(-delta));
    let mut w = b_pos * dl.f * -(-y).exp_m1();
    if !w.is_finite() {
        w = b_pos * dl.f - b_neg * di.f;
    }
    let value = coef * a * w;

    let p = bernoulli_prime(delta) * dl.f + bernoulli_prime(-delta) * di.f;
    let shift = d * gp / (2.0 * g * g);
    let d_chi_i = coef * (0.5 * ap * w + a * p * (-di.d1 / di.f + shift) - a * b_neg * di.d1);
    let d_chi_l = coef * (0.5 * ap * w + a * p * (dl.d1 / dl.f + shift) + a * b_pos * dl.d1);
    let d_d = -coef * a * p / g;
    Ok(EdgeFlux {
        value,
        d_phi: [sign * d_chi_i, sign * d_chi_l],
        d_phibar: [d_chi_i - d_d, d_chi_l + d_d],
    })
}

/// Flux of carrier `k` across dual edge `edge`, in the stored orientation
/// `edges[edge] = [i, l]`, summed over the transport regions of the
/// interface. Each region contributes with its own projected mobility and
/// band offset. Edges without a transport part carry no flux.
pub fn sg_flux_at(
    spec: &DeviceSpec,
    edge: usize,
    k: Carrier,
    ends: &FluxEnds,
) -> Result<EdgeFlux, StatisticsError> {
    let parts: &[RegionPart] = spec.edge_transport_parts(edge);
    let mut total = EdgeFlux::default();
    if parts.is_empty() {
        return Ok(total);
    }
    let [i, l] = spec.dual.edges[edge];
    let (p, q) = (spec.mesh.nodes()[i], spec.mesh.nodes()[l]);
    let dir = [q[0] - p[0], q[1] - p[1]];
    let h = spec.dual.edge_length[edge];
    for part in parts {
        let r = &spec.regions[part.region];
        let coef = r.mu[k.idx()].project(dir) * part.measure / h;
        let f = material_flux(&spec.statistics, coef, r.band_offset[k.idx()], k.sign(), ends)?;
        total.accumulate(&f);
    }
    Ok(total)
}

/// [`sg_flux_at`] with the end values read from nodal vectors.
pub fn sg_flux(
    spec: &DeviceSpec,
    phi: &[f64],
    phibar_k: &[f64],
    edge: usize,
    k: Carrier,
) -> Result<EdgeFlux, StatisticsError> {
    let [i, l] = spec.dual.edges[edge];
    sg_flux_at(spec, edge, k, &FluxEnds { phi: [phi[i], phi[l]], phibar: [phibar_k[i], phibar_k[l]] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::GChoice;
    use proptest::prelude::*;

    #[test]
    fn bernoulli_values() {
        assert_eq!(bernoulli(0.0), 1.0);
        let e = std::f64::consts::E;
        assert!((bernoulli(1.0) - 1.0 / (e - 1.0)).abs() < 1e-16);
        assert_eq!(bernoulli(800.0), 0.0);
        assert_eq!(bernoulli(-800.0), 800.0);
        for x in [1e-8, 1.0, 50.0, 700.0] {
            let lhs = bernoulli(-x);
            let rhs = bernoulli(x) + x;
            assert!((lhs / rhs - 1.0).abs() <= 1e-14, "{x}");
        }
    }

    #[test]
    fn bernoulli_branches_are_continuous() {
        for x0 in [1e-4f64, 1e-3] {
            for s in [-1.0, 1.0] {
                let (a, b) = (s * x0 * (1.0 - 1e-12), s * x0 * (1.0 + 1e-12));
                assert!((bernoulli(a) - bernoulli(b)).abs() < 1e-14);
                assert!((bernoulli_prime(a) - bernoulli_prime(b)).abs() < 1e-11);
            }
        }
    }

    proptest! {
        #[test]
        fn bernoulli_reflection(x in -700.0f64..700.0) {
            let lhs = bernoulli(-x);
            let rhs = bernoulli(x) + x;
            prop_assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0));
        }

        #[test]
        fn bernoulli_prime_matches_differences(x in -40.0f64..40.0) {
            let h = 1e-5;
            let fd = (bernoulli(x + h) - bernoulli(x - h)) / (2.0 * h);
            prop_assert!((fd - bernoulli_prime(x)).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_field_is_pure_diffusion() {
        let s = StatisticsModel::boltzmann();
        let ends = FluxEnds { phi: [0.3, 0.3], phibar: [0.1, -0.4] };
        let f = material_flux(&s, 2.0, 0.0, -1.0, &ends).unwrap();
        let (ui, ul) = ((0.1f64 - 0.3).exp(), (-0.4f64 - 0.3).exp());
        // influx into i is driven by the density excess at l
        assert!((f.value - 2.0 * (ul - ui)).abs() < 1e-15);
    }

    #[test]
    fn classical_form() {
        let s = StatisticsModel::boltzmann();
        let ends = FluxEnds { phi: [0.0, 1.7], phibar: [0.2, 0.5] };
        let f = material_flux(&s, 1.0, -0.1, 1.0, &ends).unwrap();
        let (ci, cl) = (0.2 - 0.1, 0.5 + 1.7 - 0.1);
        let dpsi = 1.7;
        let expect = bernoulli(dpsi) * f64::exp(cl) - bernoulli(-dpsi) * f64::exp(ci);
        assert!((f.value / expect - 1.0).abs() < 1e-14);
    }

    fn check_partials(stats: &StatisticsModel, ends: FluxEnds, sign: f64) -> Result<(), TestCaseError> {
        let f = material_flux(stats, 1.3, 0.2, sign, &ends).unwrap();
        let h = 1e-6;
        let eval = |e: FluxEnds| material_flux(stats, 1.3, 0.2, sign, &e).unwrap().value;
        for j in 0..2 {
            let mut p = ends;
            let mut m = ends;
            p.phi[j] += h;
            m.phi[j] -= h;
            let fd = (eval(p) - eval(m)) / (2.0 * h);
            let scale = f.d_phi[j].abs().max(f.value.abs()).max(1e-300);
            prop_assert!((fd - f.d_phi[j]).abs() <= 1e-5 * scale, "phi {j}: {fd} vs {}", f.d_phi[j]);
            let mut p = ends;
            let mut m = ends;
            p.phibar[j] += h;
            m.phibar[j] -= h;
            let fd = (eval(p) - eval(m)) / (2.0 * h);
            let scale = f.d_phibar[j].abs().max(f.value.abs()).max(1e-300);
            prop_assert!((fd - f.d_phibar[j]).abs() <= 1e-5 * scale, "phibar {j}: {fd} vs {}", f.d_phibar[j]);
        }
        Ok(())
    }

    fn ends() -> impl Strategy<Value = FluxEnds> {
        (-8.0f64..8.0, -8.0f64..8.0, -3.0f64..3.0, -3.0f64..3.0)
            .prop_map(|(a, b, c, d)| FluxEnds { phi: [a, b], phibar: [c, d] })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn antisymmetric_and_zero_at_constant_phibar(e in ends(), fd in any::<bool>(), sign in prop::bool::ANY) {
            let stats = if fd { StatisticsModel::fermi_dirac(GChoice::F) } else { StatisticsModel::boltzmann() };
            let s = if sign { 1.0 } else { -1.0 };
            let f = material_flux(&stats, 0.7, 0.1, s, &e).unwrap();
            let r = FluxEnds { phi: [e.phi[1], e.phi[0]], phibar: [e.phibar[1], e.phibar[0]] };
            let g = material_flux(&stats, 0.7, 0.1, s, &r).unwrap();
            prop_assert_eq!(g.value, -f.value);
            prop_assert_eq!(g.d_phibar, [-f.d_phibar[1], -f.d_phibar[0]]);
            let flat = FluxEnds { phibar: [e.phibar[0]; 2], ..e };
            prop_assert_eq!(material_flux(&stats, 0.7, 0.1, s, &flat).unwrap().value, 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn boltzmann_partials(e in ends(), sign in prop::bool::ANY) {
            check_partials(&StatisticsModel::boltzmann(), e, if sign { 1.0 } else { -1.0 })?;
        }

        #[test]
        fn fermi_dirac_partials(e in ends(), g in prop::bool::ANY) {
            let choice = if g { GChoice::F } else { GChoice::FPrime };
            check_partials(&StatisticsModel::fermi_dirac(choice), e, -1.0)?;
        }
    }

    #[test]
    fn reversed_is_exact_negation() {
        let f = EdgeFlux { value: 0.25, d_phi: [1.0, 2.0], d_phibar: [3.0, 4.0] };
        let r = f.reversed();
        assert_eq!(r.value, -0.25);
        assert_eq!(r.d_phi, [-2.0, -1.0]);
        assert_eq!(r.d_phibar, [-4.0, -3.0]);
    }
}
