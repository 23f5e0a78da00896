//! Complete Fermi–Dirac integrals of order 1/2, −1/2 and −3/2.
//!
//! All orders use the normalization `F_j(s) = 1/Γ(j+1) ∫₀^∞ t^j/(1+e^{t−s}) dt`,
//! so `F_j → e^s` as `s → −∞` and `F_j' = F_{j−1}`. Three branches:
//!
//! * `s < −2`: the alternating series `Σ (−1)^{n+1} e^{ns} / n^{j+1}`;
//! * `−2 ≤ s < 30`: piecewise Chebyshev interpolants on intervals of width 2,
//!   fitted once (lazily) to composite Gauss–Legendre quadrature in `x = √t`;
//! * `s ≥ 30`: the Sommerfeld expansion. For half-integer orders its
//!   exponentially small remainder vanishes identically.

use std::f64::consts::PI;
use std::sync::OnceLock;

pub(crate) const SERIES_BELOW: f64 = -2.0;
pub(crate) const ASYMPTOTIC_FROM: f64 = 30.0;
const WIDTH: f64 = 2.0;
const PIECES: usize = ((ASYMPTOTIC_FROM - SERIES_BELOW) / WIDTH) as usize;
const DEGREE: usize = 20;

/// Order index: `F_{1/2}`, `F_{−1/2}`, `F_{−3/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Order {
    Half,
    MinusHalf,
    MinusThreeHalves,
}

impl Order {
    /// `j + 1`
    fn jp1(self) -> f64 {
        match self {
            Order::Half => 1.5,
            Order::MinusHalf => 0.5,
            Order::MinusThreeHalves => -0.5,
        }
    }

    /// `Γ(j + 2)`
    fn gamma_jp2(self) -> f64 {
        match self {
            Order::Half => 0.75 * PI.sqrt(),
            Order::MinusHalf => 0.5 * PI.sqrt(),
            Order::MinusThreeHalves => PI.sqrt(),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

fn series(order: Order, s: f64) -> f64 {
    let x = s.exp();
    let p = order.jp1();
    let mut sum = 0.0;
    let mut xn = x;
    let mut sign = 1.0;
    for n in 1..200 {
        let term = sign * xn / (n as f64).powf(p);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        xn *= x;
        sign = -sign;
    }
    sum
}

/// `ζ(2k)` for k = 1..6.
const ZETA_EVEN: [f64; 6] = [
    1.644_934_066_848_226_4,
    1.082_323_233_711_138_2,
    1.017_343_061_984_449_1,
    1.004_077_356_197_944_3,
    1.000_994_575_127_818_1,
    1.000_246_086_553_308_1,
];

fn sommerfeld(order: Order, s: f64) -> f64 {
    let p = order.jp1();
    let inv2 = 1.0 / (s * s);
    let mut sum = 1.0;
    let mut falling = 1.0;
    let mut pow = 1.0;
    for (k, zeta) in ZETA_EVEN.iter().enumerate() {
        let k = k + 1;
        // (j+1) j ⋯ (j+2−2k): extend the falling factorial by two factors
        falling *= (p - (2 * k - 2) as f64) * (p - (2 * k - 1) as f64);
        pow *= inv2;
        let coeff = 2.0 * (1.0 - 2f64.powi(1 - 2 * k as i32)) * zeta;
        sum += coeff * falling * pow;
    }
    s.powf(p) / order.gamma_jp2() * sum
}

/// Gauss–Legendre nodes and weights on [−1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// All three orders at `s` by composite Gauss–Legendre quadrature in `x = √t`:
/// `F_{1/2} = (4/√π)∫x²f(y)dx`, `F_{−1/2} = (4/√π)∫x²p(y)dx` and
/// `F_{−3/2} = (4/√π)∫x²p(y)tanh(y/2)dx` with `y = x² − s`, `f = 1/(1+e^y)`
/// and `p = −f'`. The last two follow from differentiating under the integral.
fn quadrature(s: f64, gl: &(Vec<f64>, Vec<f64>)) -> [f64; 3] {
    let upper = (s.max(0.0) + 45.0).sqrt();
    let panels = (upper / 0.02).ceil() as usize;
    let h = upper / panels as f64;
    let mut acc = [0.0; 3];
    for k in 0..panels {
        let c = (k as f64 + 0.5) * h;
        for (xi, wi) in gl.0.iter().zip(&gl.1) {
            let x = c + 0.5 * h * xi;
            let y = x * x - s;
            let e = (-y.abs()).exp();
            let f = if y > 0.0 { e / (1.0 + e) } else { 1.0 / (1.0 + e) };
            let p = e / ((1.0 + e) * (1.0 + e));
            let x2w = x * x * wi * 0.5 * h;
            acc[0] += x2w * f;
            acc[1] += x2w * p;
            acc[2] += x2w * p * (0.5 * y).tanh();
        }
    }
    let c = 4.0 / PI.sqrt();
    acc.map(|v| c * v)
}

/// Chebyshev coefficients per order and piece.
struct Tables {
    coeffs: [Vec<[f64; DEGREE + 1]>; 3],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let gl = gauss_legendre(10);
        let n = DEGREE + 1;
        let mut coeffs: [Vec<[f64; DEGREE + 1]>; 3] = Default::default();
        for piece in 0..PIECES {
            let a = SERIES_BELOW + piece as f64 * WIDTH;
            let values: Vec<[f64; 3]> = (0..n)
                .map(|k| {
                    let x = (PI * (k as f64 + 0.5) / n as f64).cos();
                    quadrature(a + 0.5 * WIDTH * (x + 1.0), &gl)
                })
                .collect();
            for (o, table) in coeffs.iter_mut().enumerate() {
                let mut c = [0.0; DEGREE + 1];
                for (j, cj) in c.iter_mut().enumerate() {
                    let sum: f64 = values
                        .iter()
                        .enumerate()
                        .map(|(k, v)| v[o] * (PI * j as f64 * (k as f64 + 0.5) / n as f64).cos())
                        .sum();
                    *cj = 2.0 * sum / n as f64;
                }
                c[0] *= 0.5;
                table.push(c);
            }
        }
        Tables { coeffs }
    })
}

fn chebyshev(c: &[f64; DEGREE + 1], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}

fn table(order: Order, s: f64) -> f64 {
    let piece = (((s - SERIES_BELOW) / WIDTH) as usize).min(PIECES - 1);
    let a = SERIES_BELOW + piece as f64 * WIDTH;
    let x = 2.0 * (s - a) / WIDTH - 1.0;
    chebyshev(&tables().coeffs[order.index()][piece], x)
}

/// `F_j(s)` for finite `s`. Callers guard the overflow range.
pub(crate) fn eval(order: Order, s: f64) -> f64 {
    if s < SERIES_BELOW {
        series(order, s)
    } else if s < ASYMPTOTIC_FROM {
        table(order, s)
    } else {
        sommerfeld(order, s)
    }
}
