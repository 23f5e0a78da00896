//! Slow, independent reference computations.
//!
//! These are used by the test suites and by `vanroos2d selftest`. They share
//! no code with the production paths they check.

/// 15-point Kronrod nodes on [0, 1] (symmetric half) with the 7-point Gauss
/// subset at the odd indices.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Intervals are bisected until the summed local error estimates fall below
/// `tol · |I|`, with a depth cap that keeps pathological integrands finite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, target: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, el) = gk15(f, a, m);
        let (r, er) = gk15(f, m, b);
        if depth >= 60 || el + er <= target {
            return l + r;
        }
        rec(f, a, m, 0.5 * target, depth + 1) + rec(f, m, b, 0.5 * target, depth + 1)
    }
    // a coarse composite estimate sets the absolute target
    let n = 16;
    let est: f64 = (0..n)
        .map(|k| {
            let lo = a + (b - a) * k as f64 / n as f64;
            let hi = a + (b - a) * (k + 1) as f64 / n as f64;
            gk15(&f, lo, hi).0
        })
        .sum();
    rec(&f, a, b, tol * est.abs().max(f64::MIN_POSITIVE), 0)
}

/// `(2/√π) ∫₀^∞ √t / (1 + e^{t−s}) dt` by adaptive quadrature in `t`.
pub fn fermi_half(s: f64) -> f64 {
    let upper = s.max(0.0) + 60.0;
    let f = |t: f64| {
        let y = t - s;
        let occ = if y > 0.0 { (-y).exp() / (1.0 + (-y).exp()) } else { 1.0 / (1.0 + y.exp()) };
        t.sqrt() * occ
    };
    // split at the Fermi edge so the kink-like transition is not straddled
    let edge = s.clamp(0.0, upper);
    let body = if edge > 0.0 { integrate(f, 0.0, edge, 1e-14) + integrate(f, edge, upper, 1e-14) } else { integrate(f, 0.0, upper, 1e-14) };
    2.0 / std::f64::consts::PI.sqrt() * body
}

/// `(1/√π) ∫₀^∞ t^{−1/2} / (1 + e^{t−s}) dt`, the derivative of [`fermi_half`].
///
/// Uses `t = x²` to remove the endpoint singularity.
pub fn fermi_minus_half(s: f64) -> f64 {
    let upper = (s.max(0.0) + 60.0).sqrt();
    let f = |x: f64| {
        let y = x * x - s;
        if y > 0.0 {
            (-y).exp() / (1.0 + (-y).exp())
        } else {
            1.0 / (1.0 + y.exp())
        }
    };
    let edge = s.max(0.0).sqrt();
    let body = if edge > 0.0 { integrate(f, 0.0, edge, 1e-14) + integrate(f, edge, upper, 1e-14) } else { integrate(f, 0.0, upper, 1e-14) };
    2.0 / std::f64::consts::PI.sqrt() * body
}

/// Dense Gaussian elimination with partial pivoting, for small test systems.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())?;
        if a[p][k] == 0.0 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let m = a[i][k] / a[k][k];
            if m != 0.0 {
                for j in k..n {
                    a[i][j] -= m * a[k][j];
                }
                b[i] -= m * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Built-in potential of an abrupt junction between quasi-neutral regions
/// with net doping `-na` (p side) and `nd` (n side), Boltzmann statistics and
/// intrinsic density `ni`: the difference of the neutral potentials.
pub fn builtin_potential(na: f64, nd: f64, ni: f64) -> f64 {
    let neutral = |d: f64| (d / (2.0 * ni)).asinh();
    neutral(nd) - neutral(-na)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x, 0.0, 3.0, 1e-14);
        assert!((v - (81.0 / 4.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn sqrt_singularity() {
        let v = integrate(f64::sqrt, 0.0, 1.0, 1e-13);
        assert!((v - 2.0 / 3.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn fermi_half_at_zero() {
        // (1 − 2^{−1/2}) ζ(3/2), independent high-precision value
        assert!((fermi_half(0.0) - 0.765_147_024_625_407_9).abs() < 1e-13, "{}", fermi_half(0.0));
    }

    #[test]
    fn fermi_nondegenerate() {
        let s = -20.0;
        assert!((fermi_half(s) / f64::exp(s) - 1.0).abs() < 1e-8);
        assert!((fermi_minus_half(s) / f64::exp(s) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dense_solve_small() {
        let x = dense_solve(vec![vec![0.0, 2.0], vec![1.0, 1.0]], vec![2.0, 3.0]).unwrap();
        assert_eq!(x, vec![2.0, 1.0]);
    }

    #[test]
    fn builtin_symmetric() {
        let v = builtin_potential(1.0, 1.0, 1e-4);
        assert!((v - 2.0 * (0.5e4f64).asinh()).abs() < 1e-12);
    }
}
