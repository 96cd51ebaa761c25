//! Scenario files: parameters, initial data and numerics in TOML.
//!
//! ```toml
//! [params]
//! eps = 0.5
//! eta = 1.0
//! tau = 1.0
//! A = 0.3
//! delta = 0.05
//! rho = 0.04
//! gamma = 2.0
//!
//! [initial]
//! k0 = 10.0
//! history = { constant = 1.0 }
//!
//! [numerics]
//! n = 200
//! ```
//!
//! `history` is one of `{ constant = x }`, `{ samples = [...] }` (uniform on `[-tau, 0]`,
//! oldest first) or `{ expr = "exp" | "linear" | "zero", level = .., rate = .. }`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HistoryGrid, InitialState, ModelParams};
use crate::path::steps_in;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub params: ModelParams,
    pub initial: InitialSpec,
    #[serde(default)]
    pub numerics: Numerics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub k0: f64,
    pub history: HistorySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `level * e^{rate s}`.
    Exp,
    /// `level * (1 + rate s)`, clamped at zero.
    Linear,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

impl HistorySpec {
    pub fn constant(level: f64) -> Self {
        HistorySpec {
            constant: Some(level),
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        let given = [
            self.constant.is_some(),
            self.samples.is_some(),
            self.expr.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if given != 1 {
            return Err(Error::Parse(
                "history needs exactly one of constant, samples, expr".into(),
            ));
        }
        if self.expr.is_none() && (self.level.is_some() || self.rate.is_some()) {
            return Err(Error::Parse("level and rate only apply to expr histories".into()));
        }
        if let Some(s) = &self.samples {
            if s.len() < 2 {
                return Err(Error::Parse("history samples need at least two values".into()));
            }
        }
        Ok(())
    }

    /// Grid with `n` intervals on `[-tau, 0]`.
    pub fn grid(&self, tau: f64, n: usize) -> Result<HistoryGrid> {
        self.check()?;
        if let Some(x) = self.constant {
            return HistoryGrid::constant(tau, n, x);
        }
        if let Some(s) = &self.samples {
            return Ok(HistoryGrid::new(tau, s.clone())?.resample(n));
        }
        let level = self.level.unwrap_or(1.0);
        let rate = self.rate.unwrap_or(0.0);
        match self.expr.expect("checked above") {
            Preset::Exp => HistoryGrid::from_fn(tau, n, |s| level * (rate * s).exp()),
            Preset::Linear => HistoryGrid::from_fn(tau, n, |s| (level * (1.0 + rate * s)).max(0.0)),
            Preset::Zero => Ok(HistoryGrid::zeros(tau, n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub g_drift: f64,
    pub lambda_law: f64,
    pub cross_method: f64,
    pub external: f64,
    pub budget: f64,
    pub hjb: f64,
    pub root: f64,
    /// `|J - v| / |v|` for the closed loop in the oracle.
    pub value_gap: f64,
    /// Relative distance of the ascent optimum from the closed-loop objective.
    pub ascent_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            g_drift: 1e-4,
            lambda_law: 1e-4,
            cross_method: 1e-4,
            external: 1e-6,
            budget: 1e-6,
            hjb: 1e-6,
            root: 1e-12,
            value_gap: 1e-3,
            ascent_gap: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Grid intervals per memory length.
    pub n: usize,
    /// Simulation horizon; eight memory lengths if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Feasibility horizon; eight memory lengths if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasibility_horizon: Option<f64>,
    /// Half-width of the dominance rectangle around `lambda0`.
    pub margin: f64,
    pub oracle: bool,
    pub trials: usize,
    /// Oracle horizon, a whole number of memory lengths; ten if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_horizon: Option<f64>,
    /// Oracle grid intervals per memory length.
    pub oracle_n: usize,
    /// Ascent iterations; 0 skips the ascent.
    pub ascent_iters: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            n: 200,
            horizon: None,
            feasibility_horizon: None,
            margin: 0.1,
            oracle: true,
            trials: 100,
            oracle_horizon: None,
            oracle_n: 200,
            ascent_iters: 2000,
            seed: 42,
            tolerances: Tolerances::default(),
        }
    }
}

impl Scenario {
    pub fn baseline() -> Self {
        Scenario {
            params: ModelParams::baseline(),
            initial: InitialSpec {
                k0: 10.0,
                history: HistorySpec::constant(1.0),
            },
            numerics: Numerics::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        sc.check()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Scenario::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Completeness and positivity of the numerics. Parameter assumptions are left to
    /// [`crate::model::validate`] so that they surface as regime errors.
    pub fn check(&self) -> Result<()> {
        let nm = &self.numerics;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parse(format!("{name} = {v} must be positive")))
            }
        };
        if nm.n == 0 || nm.oracle_n == 0 {
            return Err(Error::Parse("numerics.n and numerics.oracle_n must be positive".into()));
        }
        if nm.oracle && nm.trials == 0 {
            return Err(Error::Parse("numerics.trials must be positive".into()));
        }
        positive("numerics.margin", nm.margin)?;
        for (name, v) in [
            ("numerics.horizon", nm.horizon),
            ("numerics.feasibility_horizon", nm.feasibility_horizon),
            ("numerics.oracle_horizon", nm.oracle_horizon),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        let t = &nm.tolerances;
        for (name, v) in [
            ("g_drift", t.g_drift),
            ("lambda_law", t.lambda_law),
            ("cross_method", t.cross_method),
            ("external", t.external),
            ("budget", t.budget),
            ("hjb", t.hjb),
            ("root", t.root),
            ("value_gap", t.value_gap),
            ("ascent_gap", t.ascent_gap),
        ] {
            positive(&format!("numerics.tolerances.{name}"), v)?;
        }
        if !self.initial.k0.is_finite() {
            return Err(Error::Parse("initial.k0 must be finite".into()));
        }
        positive("params.tau", self.params.tau)?;
        self.initial.history.check()?;
        self.check_grids()
    }

    /// Horizons must be whole multiples of the grid step. Rechecked after sweep edits.
    pub fn check_grids(&self) -> Result<()> {
        let as_parse = |e: Error| Error::Parse(e.to_string());
        steps_in(self.horizon(), self.params.tau, self.numerics.n).map_err(as_parse)?;
        steps_in(self.feasibility_horizon(), self.params.tau, self.numerics.n).map_err(as_parse)?;
        if self.numerics.oracle {
            self.oracle_m()?;
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.numerics.horizon.unwrap_or(8.0 * self.params.tau)
    }

    pub fn feasibility_horizon(&self) -> f64 {
        self.numerics
            .feasibility_horizon
            .unwrap_or(8.0 * self.params.tau)
    }

    pub fn oracle_horizon(&self) -> f64 {
        self.numerics.oracle_horizon.unwrap_or(10.0 * self.params.tau)
    }

    /// Oracle grid intervals over the whole horizon.
    pub fn oracle_m(&self) -> Result<usize> {
        let spans = self.oracle_horizon() / self.params.tau;
        let whole = spans.round();
        if whole < 1.0 || (spans - whole).abs() > 1e-9 * spans {
            return Err(Error::Parse(format!(
                "oracle_horizon = {} is not a whole number of memory lengths",
                self.oracle_horizon()
            )));
        }
        Ok(whole as usize * self.numerics.oracle_n)
    }

    pub fn initial_state(&self, n: usize) -> Result<InitialState> {
        let history = self.initial.history.grid(self.params.tau, n)?;
        InitialState::new(self.initial.k0, history)
    }

    /// Copy with one sweepable quantity replaced.
    pub fn with_value(&self, param: SweepParam, value: f64) -> Scenario {
        let mut sc = self.clone();
        match param {
            SweepParam::Eps => sc.params.eps = value,
            SweepParam::Eta => sc.params.eta = value,
            SweepParam::Tau => sc.params.tau = value,
            SweepParam::Gamma => sc.params.gamma = value,
            SweepParam::Rho => sc.params.rho = value,
            SweepParam::K0 => sc.initial.k0 = value,
        }
        sc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Eps,
    Eta,
    Tau,
    Gamma,
    Rho,
    K0,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "eps" => SweepParam::Eps,
            "eta" => SweepParam::Eta,
            "tau" => SweepParam::Tau,
            "gamma" => SweepParam::Gamma,
            "rho" => SweepParam::Rho,
            "k0" => SweepParam::K0,
            other => {
                return Err(Error::Parse(format!(
                    "unknown sweep parameter {other:?}, expected eps|eta|tau|gamma|rho|k0"
                )))
            }
        })
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::Eps => "eps",
            SweepParam::Eta => "eta",
            SweepParam::Tau => "tau",
            SweepParam::Gamma => "gamma",
            SweepParam::Rho => "rho",
            SweepParam::K0 => "k0",
        })
    }
}

/// Comma-separated floats. Empty input is an error.
pub fn parse_values(s: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("not a number: {t:?}")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Parse("empty value list".into()));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[params]
eps = 0.5
eta = 1.0
tau = 1.0
A = 0.3
delta = 0.05
rho = 0.04
gamma = 2.0

[initial]
k0 = 10.0
history = { constant = 1.0 }
"#;

    #[test]
    fn baseline_text_matches_constructor() {
        assert_eq!(Scenario::from_toml(BASE).unwrap(), Scenario::baseline());
    }

    #[test]
    fn round_trip() {
        let sc = Scenario::baseline();
        assert_eq!(Scenario::from_toml(&sc.to_toml()).unwrap(), sc);
    }

    #[test]
    fn history_forms() {
        let with = |h: &str| Scenario::from_toml(&BASE.replace("{ constant = 1.0 }", h));
        let s = with("{ samples = [1.0, 2.0, 3.0] }").unwrap();
        let g = s.initial_state(4).unwrap().history;
        assert_eq!(g.values(), &[1.0, 1.5, 2.0, 2.5, 3.0]);
        let s = with("{ expr = \"exp\", rate = 0.5 }").unwrap();
        let g = s.initial_state(10).unwrap().history;
        assert!((g.values()[0] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(g.values()[10], 1.0);
        let s = with("{ expr = \"zero\" }").unwrap();
        assert!(!s.initial_state(10).unwrap().history.has_positive());
        assert!(with("{ constant = 1.0, expr = \"zero\" }").is_err());
        assert!(with("{ constant = 1.0, rate = 2.0 }").is_err());
        assert!(with("{ expr = \"cubic\" }").is_err());
    }

    #[test]
    fn rejects_bad_numerics() {
        let bad = format!("{BASE}\n[numerics]\nn = 0\n");
        assert!(matches!(Scenario::from_toml(&bad), Err(Error::Parse(_))));
        let bad = format!("{BASE}\n[numerics]\nmargin = -1.0\n");
        assert!(matches!(Scenario::from_toml(&bad), Err(Error::Parse(_))));
        let bad = format!("{BASE}\n[numerics]\nbogus = 1\n");
        assert!(matches!(Scenario::from_toml(&bad), Err(Error::Parse(_))));
        assert!(matches!(Scenario::from_toml("[params]"), Err(Error::Parse(_))));
    }

    #[test]
    fn oracle_grid_size() {
        let sc = Scenario::baseline();
        assert_eq!(sc.oracle_m().unwrap(), 2000);
        let mut odd = sc.clone();
        odd.numerics.oracle_horizon = Some(2.5);
        assert!(odd.oracle_m().is_err());
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("0.5, 1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        assert!(parse_values("").is_err());
        assert!(parse_values(" , ").is_err());
        assert!(parse_values("1,x").is_err());
        assert_eq!("k0".parse::<SweepParam>().unwrap(), SweepParam::K0);
        assert!("A".parse::<SweepParam>().is_err());
    }
}
