//! Carrier distribution functions.
//!
//! A [`StatisticsModel`] maps a chemical potential `s` to the dimensionless
//! occupation `F(s)` (so that a density is `ρ·F(χ)`), together with the
//! derivatives needed by Newton and by the edge flux, the inverse used to
//! initialize potentials from densities, and the current prefactor `G`.

mod fermi;

use fermi::Order;
use serde::Deserialize;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Arguments beyond this magnitude would overflow or underflow `F`.
pub const ARGUMENT_LIMIT: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatisticsError {
    #[error("distribution argument {0:e} is outside [-700, 700]")]
    OutOfRange(f64),
    #[error("distribution argument is not finite")]
    NonFinite,
    #[error("inverse requested for non-positive value {0:e}")]
    NonPositive(f64),
    #[error("inverse did not converge for value {0:e}")]
    InverseFailed(f64),
    #[error("custom distribution is not admissible at s = {s}: {reason}")]
    Inadmissible { s: f64, reason: &'static str },
}

/// A user-supplied distribution function with analytic derivatives.
///
/// Implementations must be strictly increasing and positive; see
/// [`StatisticsModel::custom`] for the sampled admissibility check.
pub trait Distribution: Send + Sync + fmt::Debug {
    fn f(&self, s: f64) -> f64;
    fn f_prime(&self, s: f64) -> f64;
    fn f_second(&self, s: f64) -> f64;
    fn inverse(&self, y: f64) -> f64;
}

#[derive(Debug, Clone)]
pub enum StatisticsKind {
    Boltzmann,
    FermiDirac,
    Custom(Arc<dyn Distribution>),
}

/// Which function multiplies `μ∇φ̃` in the current density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
pub enum GChoice {
    /// `G = F`, the usual device-simulation convention.
    #[default]
    F,
    /// `G = F'`
    #[serde(rename = "Fprime")]
    FPrime,
}

/// `F`, `F'` and `F''` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub f: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Derivatives {
    /// `g = F/F'`, the degeneracy factor (1 for Boltzmann).
    pub fn degeneracy(&self) -> f64 {
        self.f / self.d1
    }

    /// `g' = 1 − F·F''/F'²`
    pub fn degeneracy_prime(&self) -> f64 {
        1.0 - self.f * self.d2 / (self.d1 * self.d1)
    }
}

#[derive(Debug, Clone)]
pub struct StatisticsModel {
    pub kind: StatisticsKind,
    pub g_choice: GChoice,
}

impl Default for StatisticsModel {
    fn default() -> Self {
        Self::boltzmann()
    }
}

fn check(s: f64) -> Result<(), StatisticsError> {
    if !s.is_finite() {
        Err(StatisticsError::NonFinite)
    } else if s.abs() > ARGUMENT_LIMIT {
        Err(StatisticsError::OutOfRange(s))
    } else {
        Ok(())
    }
}

impl StatisticsModel {
    pub fn boltzmann() -> Self {
        Self { kind: StatisticsKind::Boltzmann, g_choice: GChoice::F }
    }

    pub fn fermi_dirac(g_choice: GChoice) -> Self {
        Self { kind: StatisticsKind::FermiDirac, g_choice }
    }

    /// Wrap a custom distribution after checking `F > 0`, `F' > 0` and a
    /// consistent inverse on a grid over `[-40, 40]`.
    pub fn custom(dist: Arc<dyn Distribution>, g_choice: GChoice) -> Result<Self, StatisticsError> {
        for k in 0..=400 {
            let s = -40.0 + 0.2 * k as f64;
            let (f, d1) = (dist.f(s), dist.f_prime(s));
            if !(f > 0.0 && f.is_finite()) {
                return Err(StatisticsError::Inadmissible { s, reason: "F must be positive" });
            }
            if !(d1 > 0.0 && d1.is_finite()) {
                return Err(StatisticsError::Inadmissible { s, reason: "F' must be positive" });
            }
            let back = dist.inverse(f);
            if (back - s).abs() > 1e-6 * (1.0 + s.abs()) {
                return Err(StatisticsError::Inadmissible { s, reason: "inverse is inconsistent with F" });
            }
        }
        Ok(Self { kind: StatisticsKind::Custom(dist), g_choice })
    }

    pub fn is_boltzmann(&self) -> bool {
        matches!(self.kind, StatisticsKind::Boltzmann)
    }

    pub fn eval_f(&self, s: f64) -> Result<f64, StatisticsError> {
        check(s)?;
        Ok(match &self.kind {
            StatisticsKind::Boltzmann => s.exp(),
            StatisticsKind::FermiDirac => fermi::eval(Order::Half, s),
            StatisticsKind::Custom(d) => d.f(s),
        })
    }

    pub fn eval_f_prime(&self, s: f64) -> Result<f64, StatisticsError> {
        check(s)?;
        Ok(match &self.kind {
            StatisticsKind::Boltzmann => s.exp(),
            StatisticsKind::FermiDirac => fermi::eval(Order::MinusHalf, s),
            StatisticsKind::Custom(d) => d.f_prime(s),
        })
    }

    pub fn eval_f_second(&self, s: f64) -> Result<f64, StatisticsError> {
        check(s)?;
        Ok(match &self.kind {
            StatisticsKind::Boltzmann => s.exp(),
            StatisticsKind::FermiDirac => fermi::eval(Order::MinusThreeHalves, s),
            StatisticsKind::Custom(d) => d.f_second(s),
        })
    }

    pub fn derivatives(&self, s: f64) -> Result<Derivatives, StatisticsError> {
        check(s)?;
        Ok(match &self.kind {
            StatisticsKind::Boltzmann => {
                let e = s.exp();
                Derivatives { f: e, d1: e, d2: e }
            }
            StatisticsKind::FermiDirac => Derivatives {
                f: fermi::eval(Order::Half, s),
                d1: fermi::eval(Order::MinusHalf, s),
                d2: fermi::eval(Order::MinusThreeHalves, s),
            },
            StatisticsKind::Custom(d) => Derivatives { f: d.f(s), d1: d.f_prime(s), d2: d.f_second(s) },
        })
    }

    /// `ln F(s)`, exact (no exponentiation) for Boltzmann.
    pub fn ln_f(&self, s: f64) -> Result<f64, StatisticsError> {
        match self.kind {
            StatisticsKind::Boltzmann => check(s).map(|_| s),
            _ => self.eval_f(s).map(f64::ln),
        }
    }

    pub fn eval_g(&self, s: f64) -> Result<f64, StatisticsError> {
        match self.g_choice {
            GChoice::F => self.eval_f(s),
            GChoice::FPrime => self.eval_f_prime(s),
        }
    }

    /// `G/F'` and its derivative, the edge-flux prefactor.
    pub fn flux_weight(&self, d: &Derivatives) -> (f64, f64) {
        if self.is_boltzmann() {
            return (1.0, 0.0);
        }
        match self.g_choice {
            GChoice::F => (d.degeneracy(), d.degeneracy_prime()),
            GChoice::FPrime => (1.0, 0.0),
        }
    }

    /// Solve `F(s) = y` to relative accuracy 1e-12 or better.
    pub fn inverse_f(&self, y: f64) -> Result<f64, StatisticsError> {
        if !(y > 0.0) {
            return Err(StatisticsError::NonPositive(y));
        }
        if !y.is_finite() {
            return Err(StatisticsError::NonFinite);
        }
        match &self.kind {
            StatisticsKind::Boltzmann => Ok(y.ln()),
            StatisticsKind::Custom(d) => Ok(d.inverse(y)),
            StatisticsKind::FermiDirac => inverse_fermi(y),
        }
    }
}

/// Newton on `ln F(s) − ln y` (whose slope `F'/F` lies in (0, 1]), kept inside
/// a bisection bracket. `F_{1/2}(s) < e^s` gives the lower end and
/// `F_{1/2}(s) > s^{3/2}/Γ(5/2)` the upper one.
fn inverse_fermi(y: f64) -> Result<f64, StatisticsError> {
    let target = y.ln();
    let mut lo = target;
    let mut hi = target.max((0.75 * std::f64::consts::PI.sqrt() * y).powf(2.0 / 3.0)) + 1.0;
    if lo < -ARGUMENT_LIMIT || hi > ARGUMENT_LIMIT {
        return Err(StatisticsError::OutOfRange(if lo < -ARGUMENT_LIMIT { lo } else { hi }));
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = fermi::eval(Order::Half, s);
        let r = f.ln() - target;
        if r == 0.0 {
            return Ok(s);
        }
        if r > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let slope = fermi::eval(Order::MinusHalf, s) / f;
        let mut next = s - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-15 * (1.0 + s.abs()) || hi - lo <= 1e-15 * (1.0 + s.abs()) {
            return Ok(next);
        }
        s = next;
    }
    Err(StatisticsError::InverseFailed(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;

    fn fd() -> StatisticsModel {
        StatisticsModel::fermi_dirac(GChoice::F)
    }

    #[test]
    fn boltzmann_basics() {
        let b = StatisticsModel::boltzmann();
        assert_eq!(b.eval_f(0.0).unwrap(), 1.0);
        assert_eq!(b.eval_f_prime(1.3).unwrap(), b.eval_f(1.3).unwrap());
        assert_eq!(b.eval_g(1.0).unwrap(), std::f64::consts::E);
        let bp = StatisticsModel { g_choice: GChoice::FPrime, ..StatisticsModel::boltzmann() };
        assert_eq!(bp.eval_g(1.0).unwrap(), std::f64::consts::E);
        assert_eq!(b.inverse_f(1.0).unwrap(), 0.0);
    }

    #[test]
    fn overflow_guard() {
        let b = StatisticsModel::boltzmann();
        assert_eq!(b.eval_f(701.0), Err(StatisticsError::OutOfRange(701.0)));
        assert_eq!(b.eval_f(f64::NAN), Err(StatisticsError::NonFinite));
        assert!(b.inverse_f(0.0).is_err());
        assert!(b.inverse_f(-1.0).is_err());
    }

    #[test]
    fn fermi_pinned_at_zero() {
        let v = fd().eval_f(0.0).unwrap();
        assert!((v - 0.765_147_024_625_407_9).abs() < 1e-8 * v, "{v}");
    }

    #[test]
    fn fermi_nondegenerate_limit() {
        let v = fd().eval_f(-10.0).unwrap();
        assert!((v / (-10f64).exp() - 1.0).abs() < 1e-4);
        for k in 0..=320 {
            let s = -40.0 + 0.1 * k as f64;
            assert!((fd().eval_f(s).unwrap() / s.exp() - 1.0).abs() <= 1e-3, "{s}");
        }
    }

    #[test]
    fn fermi_against_quadrature_oracle() {
        for k in 0..200 {
            let s = -30.0 + 60.0 * k as f64 / 199.0;
            let v = fd().eval_f(s).unwrap();
            let o = oracle::fermi_half(s);
            assert!((v / o - 1.0).abs() <= 1e-8, "s = {s}: {v} vs {o}");
            let d = fd().eval_f_prime(s).unwrap();
            let od = oracle::fermi_minus_half(s);
            assert!((d / od - 1.0).abs() <= 1e-6, "s = {s}: {d} vs {od}");
        }
    }

    #[test]
    fn fermi_derivative_by_differences() {
        let h = 1e-5;
        let m = fd();
        let fd2 = (m.eval_f(2.0 + h).unwrap() - m.eval_f(2.0 - h).unwrap()) / (2.0 * h);
        assert!((fd2 / m.eval_f_prime(2.0).unwrap() - 1.0).abs() < 1e-5);
        for k in 0..1000 {
            let s = -40.0 + 80.0 * k as f64 / 999.0;
            assert!(m.eval_f_prime(s).unwrap() > 0.0);
        }
    }

    #[test]
    fn g_choice() {
        let m = fd();
        assert_eq!(m.eval_g(0.0).unwrap(), m.eval_f(0.0).unwrap());
        let p = StatisticsModel::fermi_dirac(GChoice::FPrime);
        assert_eq!(p.eval_g(0.0).unwrap(), p.eval_f_prime(0.0).unwrap());
    }

    #[test]
    fn fermi_inverse() {
        let m = fd();
        for s in [-5.0, 0.0, 5.0] {
            let back = m.inverse_f(m.eval_f(s).unwrap()).unwrap();
            assert!((back - s).abs() <= 1e-8, "{s} -> {back}");
        }
        assert!((m.inverse_f(1e-6).unwrap() - 1e-6f64.ln()).abs() < 1e-3);
    }

    #[derive(Debug)]
    struct Shifted;
    impl Distribution for Shifted {
        fn f(&self, s: f64) -> f64 {
            2.0 * s.exp()
        }
        fn f_prime(&self, s: f64) -> f64 {
            2.0 * s.exp()
        }
        fn f_second(&self, s: f64) -> f64 {
            2.0 * s.exp()
        }
        fn inverse(&self, y: f64) -> f64 {
            (y / 2.0).ln()
        }
    }

    #[derive(Debug)]
    struct Decreasing;
    impl Distribution for Decreasing {
        fn f(&self, s: f64) -> f64 {
            (-s).exp()
        }
        fn f_prime(&self, s: f64) -> f64 {
            -(-s).exp()
        }
        fn f_second(&self, s: f64) -> f64 {
            (-s).exp()
        }
        fn inverse(&self, y: f64) -> f64 {
            -y.ln()
        }
    }

    #[test]
    fn custom_admissibility() {
        let m = StatisticsModel::custom(Arc::new(Shifted), GChoice::F).unwrap();
        assert!((m.eval_f(0.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(
            StatisticsModel::custom(Arc::new(Decreasing), GChoice::F),
            Err(StatisticsError::Inadmissible { .. })
        ));
    }

    proptest! {
        #[test]
        fn strictly_increasing(a in -40.0f64..40.0, b in -40.0f64..40.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(fd().eval_f(hi).unwrap() > fd().eval_f(lo).unwrap());
        }

        #[test]
        fn inverse_round_trip(s in -30.0f64..10.0) {
            let m = fd();
            let back = m.inverse_f(m.eval_f(s).unwrap()).unwrap();
            prop_assert!((back - s).abs() <= 1e-8);
        }

        #[test]
        fn derivative_consistency(s in -40.0f64..40.0) {
            let m = fd();
            let h = 1e-5;
            let c = (m.eval_f(s + h).unwrap() - m.eval_f(s - h).unwrap()) / (2.0 * h);
            prop_assert!((c / m.eval_f_prime(s).unwrap() - 1.0).abs() <= 1e-5);
        }
    }
}
