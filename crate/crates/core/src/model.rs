//! Model parameters, derived constants and sampled consumption histories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, RegimeCondition, Result};

/// Default number of grid intervals per memory length.
pub const DEFAULT_GRID: usize = 200;

/// The seven scalars of the AK economy with finite-memory habits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Habit intensity.
    pub eps: f64,
    /// Habit persistence.
    pub eta: f64,
    /// Memory length.
    pub tau: f64,
    /// Technology level of `y = A k`.
    #[serde(rename = "A")]
    pub a: f64,
    /// Depreciation.
    pub delta: f64,
    /// Discount rate.
    pub rho: f64,
    /// Utility curvature.
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(eps: f64, eta: f64, tau: f64, a: f64, delta: f64, rho: f64, gamma: f64) -> Self {
        ModelParams {
            eps,
            eta,
            tau,
            a,
            delta,
            rho,
            gamma,
        }
    }

    /// Reference parameter set used throughout the tests and the example scenario.
    pub fn baseline() -> Self {
        ModelParams::new(0.5, 1.0, 1.0, 0.3, 0.05, 0.04, 2.0)
    }

    /// Net return on capital, `A - delta`.
    pub fn r(&self) -> f64 {
        self.a - self.delta
    }

    /// Consumption rate out of `G`.
    pub fn alpha(&self) -> f64 {
        (self.rho - self.r() * (1.0 - self.gamma)) / self.gamma
    }

    /// Balanced growth rate `(r - rho) / gamma`.
    pub fn growth(&self) -> f64 {
        (self.r() - self.rho) / self.gamma
    }

    /// Scale of the value function `v = nu G^(1-gamma)`.
    pub fn nu(&self) -> f64 {
        self.alpha().powf(-self.gamma) / (1.0 - self.gamma)
    }

    /// Capital weight of the `G` functional.
    pub fn kappa0(&self) -> f64 {
        1.0 - self.eps * exp_window(self.r() + self.eta, self.tau)
    }

    /// Sign indicator of the zero-growth characteristic value, `1 - eps (1 - e^{-eta tau}) / eta`.
    pub fn zero_growth_indicator(&self) -> f64 {
        1.0 - self.eps * exp_window(self.eta, self.tau)
    }

    /// Finite, positive, `gamma != 1`. Does not look at the growth regime.
    pub fn check_domain(&self) -> Result<()> {
        let fields = [
            ("eps", self.eps),
            ("eta", self.eta),
            ("tau", self.tau),
            ("A", self.a),
            ("delta", self.delta),
            ("rho", self.rho),
            ("gamma", self.gamma),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::Domain(format!("{name} = {value} is not finite")));
            }
        }
        for (name, value) in fields {
            if name != "A" && value <= 0.0 {
                return Err(Error::Domain(format!("{name} = {value} must be positive")));
            }
        }
        if (self.gamma - 1.0).abs() < 1e-12 {
            return Err(Error::Domain(
                "gamma = 1 (logarithmic utility) is not supported".into(),
            ));
        }
        Ok(())
    }
}

/// Constants derived from validated parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub r: f64,
    pub alpha: f64,
    /// Balanced growth rate, written `Gamma` in reports.
    pub growth: f64,
    pub nu: f64,
    pub kappa0: f64,
    /// Real characteristic root; filled in by the spectral analysis.
    pub lambda0: Option<f64>,
}

impl DerivedConstants {
    pub fn with_lambda0(mut self, lambda0: f64) -> Self {
        self.lambda0 = Some(lambda0);
        self
    }
}

/// Checks the standing assumptions and returns the derived constants.
pub fn validate(params: &ModelParams) -> Result<DerivedConstants> {
    params.check_domain()?;
    let r = params.r();
    if r <= 0.0 {
        return Err(Error::Regime {
            condition: RegimeCondition::Growth,
            detail: format!("r = A - delta = {r} must be positive"),
        });
    }
    if params.eps > params.eta {
        return Err(Error::Regime {
            condition: RegimeCondition::Growth,
            detail: format!(
                "eps - eta = {} must not be positive",
                params.eps - params.eta
            ),
        });
    }
    let bound = r * (1.0 - params.gamma);
    if params.rho <= bound {
        return Err(Error::Regime {
            condition: RegimeCondition::FiniteValue,
            detail: format!("rho = {} must exceed r (1 - gamma) = {bound}", params.rho),
        });
    }
    let derived = DerivedConstants {
        r,
        alpha: params.alpha(),
        growth: params.growth(),
        nu: params.nu(),
        kappa0: params.kappa0(),
        lambda0: None,
    };
    if derived.kappa0 <= 0.0 {
        return Err(Error::Inconsistency(format!(
            "kappa0 = {} is not positive",
            derived.kappa0
        )));
    }
    Ok(derived)
}

/// `(1 - e^{-x tau}) / x`, i.e. the integral of `e^{x u}` over `[-tau, 0]`,
/// with the series branch near `x = 0`.
pub(crate) fn exp_window(x: f64, tau: f64) -> f64 {
    let y = x * tau;
    if y.abs() < SERIES_SWITCH {
        tau * series_exp_window(y)
    } else {
        -(-y).exp_m1() / x
    }
}

pub(crate) const SERIES_SWITCH: f64 = 1e-4;

/// Six terms of `(1 - e^{-y}) / y = sum_k (-y)^k / (k+1)!`.
pub(crate) fn series_exp_window(y: f64) -> f64 {
    1.0 - y / 2.0 + y * y / 6.0 - y.powi(3) / 24.0 + y.powi(4) / 120.0 - y.powi(5) / 720.0
}

/// Consumption samples on the uniform grid `s_i = -tau + i tau / n`, `i = 0..=n`,
/// read as a piecewise-linear function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryGrid {
    tau: f64,
    values: Vec<f64>,
}

impl HistoryGrid {
    pub fn new(tau: f64, values: Vec<f64>) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Domain(format!("history length tau = {tau} must be positive")));
        }
        if values.len() < 2 {
            return Err(Error::Domain("history needs at least two samples".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "history sample {bad} must be finite and nonnegative"
            )));
        }
        Ok(HistoryGrid { tau, values })
    }

    pub fn constant(tau: f64, n: usize, level: f64) -> Result<Self> {
        HistoryGrid::new(tau, vec![level; n + 1])
    }

    pub fn zeros(tau: f64, n: usize) -> Self {
        HistoryGrid {
            tau,
            values: vec![0.0; n + 1],
        }
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(tau: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let step = tau / n as f64;
        let values = (0..=n).map(|i| f(-tau + i as f64 * step)).collect();
        HistoryGrid::new(tau, values)
    }

    pub(crate) fn from_raw(tau: f64, values: Vec<f64>) -> Self {
        debug_assert!(values.len() >= 2);
        HistoryGrid { tau, values }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of grid intervals.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.tau / self.n() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.tau + i as f64 * self.step()
    }

    /// Piecewise-linear value at `s` in `[-tau, 0]` (clamped outside).
    pub fn eval(&self, s: f64) -> f64 {
        let x = ((s + self.tau) / self.step()).clamp(0.0, self.n() as f64);
        let i = (x.floor() as usize).min(self.n() - 1);
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Linear resampling onto a grid with `n` intervals.
    pub fn resample(&self, n: usize) -> HistoryGrid {
        if n == self.n() {
            return self.clone();
        }
        let step = self.tau / n as f64;
        let values = (0..=n).map(|i| self.eval(-self.tau + i as f64 * step)).collect();
        HistoryGrid {
            tau: self.tau,
            values,
        }
    }

    pub fn scaled(&self, factor: f64) -> HistoryGrid {
        HistoryGrid {
            tau: self.tau,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Some sample is strictly positive. Stands in for "positive on a set of positive measure".
    pub fn has_positive(&self) -> bool {
        self.values.iter().any(|&v| v > 0.0)
    }

    /// Trapezoid rule for `int_{-tau}^0 c(s) w(s) ds` on the grid nodes.
    pub fn integrate_weighted(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let step = self.step();
        let n = self.n();
        let mut acc = 0.0;
        for (i, &c) in self.values.iter().enumerate() {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * c * weight(-self.tau + i as f64 * step);
        }
        acc * step
    }
}

/// Initial capital and consumption history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub k0: f64,
    pub history: HistoryGrid,
}

impl InitialState {
    pub fn new(k0: f64, history: HistoryGrid) -> Result<Self> {
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(Error::Domain(format!("k0 = {k0} must be positive")));
        }
        Ok(InitialState { k0, history })
    }
}

/// Initial habit `h0 = eps int_{-tau}^0 c0(u) e^{eta u} du` by the trapezoid rule.
pub fn habit_of_history(history: &HistoryGrid, params: &ModelParams) -> f64 {
    params.eps * history.integrate_weighted(|s| (params.eta * s).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_constants() {
        let d = validate(&ModelParams::baseline()).unwrap();
        assert!((d.alpha - 0.145).abs() < 1e-15);
        assert!((d.growth - 0.105).abs() < 1e-15);
        assert!((d.r - d.alpha - d.growth).abs() < 1e-15);
        assert!(d.kappa0 > 0.0);
        assert!(d.lambda0.is_none());
        assert!((d.nu + 1.0 / (0.145 * 0.145)).abs() < 1e-12);
    }

    #[test]
    fn finite_value_violation() {
        // r = 0.25, gamma = 0.5: bound is 0.125
        let p = ModelParams::new(0.5, 1.0, 1.0, 0.3, 0.05, 0.1, 0.5);
        match validate(&p) {
            Err(Error::Regime { condition, .. }) => assert_eq!(condition, RegimeCondition::FiniteValue),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn growth_violation() {
        let p = ModelParams::new(1.2, 1.0, 1.0, 0.3, 0.05, 0.04, 2.0);
        match validate(&p) {
            Err(Error::Regime { condition, .. }) => assert_eq!(condition, RegimeCondition::Growth),
            other => panic!("unexpected {other:?}"),
        }
        let p = ModelParams::new(0.5, 1.0, 1.0, 0.05, 0.05, 0.04, 2.0);
        assert!(matches!(validate(&p), Err(Error::Regime { condition: RegimeCondition::Growth, .. })));
    }

    #[test]
    fn domain_errors() {
        let mut p = ModelParams::baseline();
        p.gamma = 1.0;
        assert!(matches!(validate(&p), Err(Error::Domain(_))));
        let mut p = ModelParams::baseline();
        p.tau = 0.0;
        assert!(matches!(validate(&p), Err(Error::Domain(_))));
        let mut p = ModelParams::baseline();
        p.rho = f64::NAN;
        assert!(matches!(validate(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn habit_constant_history() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 0.3, 0.05, 0.04, 2.0);
        let h = HistoryGrid::constant(1.0, 1000, 1.0).unwrap();
        let h0 = habit_of_history(&h, &p);
        assert!((h0 - (1.0 - (-1.0f64).exp())).abs() < 1e-6);
    }

    #[test]
    fn habit_zero_and_flat_integrand() {
        let p = ModelParams::new(1.0, 0.7, 2.5, 0.3, 0.05, 0.04, 2.0);
        assert_eq!(habit_of_history(&HistoryGrid::zeros(2.5, 50), &p), 0.0);
        let h = HistoryGrid::from_fn(2.5, 37, |u| (-0.7 * u).exp()).unwrap();
        assert!((habit_of_history(&h, &p) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn habit_second_order() {
        let p = ModelParams::new(0.8, 1.3, 1.5, 0.3, 0.05, 0.04, 2.0);
        let f = |u: f64| 1.0 + (2.0 * u).sin();
        // exact: 0.8 * int_{-1.5}^0 (1 + sin 2u) e^{1.3u} du
        let exact = {
            let a: f64 = 1.3;
            let b: f64 = 2.0;
            let prim = |u: f64| (a * u).exp() / a + (a * u).exp() * (a * (b * u).sin() - b * (b * u).cos()) / (a * a + b * b);
            0.8 * (prim(0.0) - prim(-1.5))
        };
        let e1 = (habit_of_history(&HistoryGrid::from_fn(1.5, 50, f).unwrap(), &p) - exact).abs();
        let e2 = (habit_of_history(&HistoryGrid::from_fn(1.5, 100, f).unwrap(), &p) - exact).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn history_rejects_negative() {
        assert!(HistoryGrid::new(1.0, vec![1.0, -0.1, 1.0]).is_err());
        assert!(InitialState::new(0.0, HistoryGrid::zeros(1.0, 4)).is_err());
    }

    #[test]
    fn interpolation_and_resampling() {
        let h = HistoryGrid::new(2.0, vec![0.0, 2.0, 4.0]).unwrap();
        assert!((h.eval(-1.5) - 1.0).abs() < 1e-15);
        assert!((h.eval(0.0) - 4.0).abs() < 1e-15);
        let r = h.resample(8);
        assert_eq!(r.n(), 8);
        assert!((r.values()[3] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn series_matches_direct_near_switch() {
        for y in [2e-4f64, -2e-4, 1.5e-4] {
            let direct = -(-y).exp_m1() / y;
            assert!((direct - series_exp_window(y)).abs() < 1e-14);
        }
    }
}
