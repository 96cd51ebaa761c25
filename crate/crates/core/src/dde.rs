//! Minimal admissible consumption and the capital it leaves behind.
//!
//! `c^m` solves the pure renewal equation `c(t) = eps int_{t-tau}^t c(u) e^{eta (u - t)} du`
//! with the history as initial segment. Any admissible consumption path stays above it,
//! so initial capital has to cover its discounted cost.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HistoryGrid, InitialState, ModelParams};
use crate::path::{lag_weights, steps_in, ConsumptionPath, TimeSeries};
use crate::spectral::real_root;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub cm_path: TimeSeries,
    #[serde(rename = "kM_path")]
    pub km_path: TimeSeries,
    /// Trapezoid estimate of `int_0^T e^{-r s} c^m(s) ds`.
    pub discounted_cost: f64,
    /// Upper bound on the neglected `int_T^inf` part; infinite when `lambda0 >= r`.
    pub tail_bound: f64,
    pub verdict: Verdict,
    /// `k0 - discounted_cost`.
    pub slack: f64,
    pub lambda0: f64,
    pub k0: f64,
}

impl FeasibilityReport {
    /// Smallest `k0` this report would accept (exclusive).
    pub fn threshold(&self) -> f64 {
        self.discounted_cost + self.tail_bound
    }

    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }

    /// `t,cm,kM` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "cm", "kM"]).map_err(csv_err)?;
        for (j, (cm, km)) in self
            .cm_path
            .values
            .iter()
            .zip(&self.km_path.values)
            .enumerate()
        {
            w.write_record([
                format!("{:.16e}", self.cm_path.t(j)),
                format!("{cm:.16e}"),
                format!("{km:.16e}"),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Default feasibility horizon, eight memory lengths.
pub fn default_horizon(params: &ModelParams) -> f64 {
    8.0 * params.tau
}

/// Method of steps for `c^m` on `[0, horizon]` with the grid of `history`.
///
/// The trapezoid rule puts `c^m(t_j)` on both sides with weight `eps step / 2`, and the
/// scalar equation is solved exactly. `c^m(0)` is the initial habit.
pub fn minimal_consumption(
    params: &ModelParams,
    history: &HistoryGrid,
    horizon: f64,
) -> Result<TimeSeries> {
    let tau = history.tau();
    if horizon < tau * (1.0 - 1e-12) {
        return Err(Error::Domain(format!(
            "horizon T = {horizon} must be at least tau = {tau}"
        )));
    }
    let n = history.n();
    let steps = steps_in(horizon, tau, n)?;
    let step = history.step();
    let self_weight = params.eps * 0.5 * step;
    if self_weight >= 1.0 {
        return Err(Error::Step {
            weight: self_weight,
        });
    }
    let weights = lag_weights(-params.eta, step, n);
    let mut path = ConsumptionPath::new(history.clone());
    for j in 0..=steps {
        let (rest, _) = path.lagged_sum(j, &weights);
        let c = if j == 0 {
            params.eps * rest
        } else {
            params.eps * rest / (1.0 - self_weight)
        };
        path.push(c.max(0.0));
    }
    Ok(TimeSeries::new(step, path.future().to_vec()))
}

/// `k^M(t) = e^{rt} [k0 - int_0^t c^m(u) e^{-ru} du]` by cumulative trapezoid.
pub fn dominated_capital(params: &ModelParams, k0: f64, cm: &TimeSeries) -> TimeSeries {
    let r = params.r();
    let step = cm.step;
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(cm.len());
    for (j, &c) in cm.values.iter().enumerate() {
        let t = cm.t(j);
        let cur = c * (-r * t).exp();
        if j > 0 {
            acc += 0.5 * step * (prev + cur);
        }
        prev = cur;
        out.push((r * t).exp() * (k0 - acc));
    }
    TimeSeries::new(step, out)
}

/// Trapezoid of `e^{-r t} c(t)` over the whole series.
pub fn discounted_integral(rate: f64, series: &TimeSeries) -> f64 {
    let last = series.len().saturating_sub(1);
    series
        .values
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let w = if j == 0 || j == last { 0.5 } else { 1.0 };
            w * c * (-rate * series.t(j)).exp()
        })
        .sum::<f64>()
        * series.step
}

/// `C e^{(lambda0 - r) T} / (r - lambda0)` with `C` the largest `c^m(t) e^{-lambda0 t}`
/// over the last memory window.
pub fn tail_bound(params: &ModelParams, lambda0: f64, cm: &TimeSeries) -> f64 {
    let r = params.r();
    let horizon = cm.horizon();
    let window_start = horizon - params.tau - 0.5 * cm.step;
    let c_max = cm
        .values
        .iter()
        .enumerate()
        .filter(|(j, _)| cm.t(*j) >= window_start)
        .map(|(j, &c)| c * (-lambda0 * cm.t(j)).exp())
        .fold(0.0, f64::max);
    if c_max == 0.0 {
        return 0.0;
    }
    if lambda0 >= r {
        return f64::INFINITY;
    }
    c_max * ((lambda0 - r) * horizon).exp() / (r - lambda0)
}

/// Feasibility of `(k0, c0)`: `k0` must exceed the discounted cost of `c^m` plus the tail bound.
///
/// Only the domain and `r > 0` are checked here, so parameters outside the growth regime can
/// still be classified. With `lambda0 >= r` and a history that has a positive sample the
/// answer is infeasible for every `k0`.
pub fn check_feasibility(
    params: &ModelParams,
    init: &InitialState,
    horizon: f64,
) -> Result<FeasibilityReport> {
    params.check_domain()?;
    let r = params.r();
    if r <= 0.0 {
        return Err(Error::Regime {
            condition: crate::error::RegimeCondition::Growth,
            detail: format!("r = A - delta = {r} must be positive"),
        });
    }
    let lambda0 = real_root(params)?;
    let cm = minimal_consumption(params, &init.history, horizon)?;
    let km = dominated_capital(params, init.k0, &cm);
    if lambda0 >= r && init.history.has_positive() {
        return Ok(FeasibilityReport {
            cm_path: cm,
            km_path: km,
            discounted_cost: f64::INFINITY,
            tail_bound: f64::INFINITY,
            verdict: Verdict::Infeasible,
            slack: f64::NEG_INFINITY,
            lambda0,
            k0: init.k0,
        });
    }
    let discounted_cost = discounted_integral(r, &cm);
    let tail = tail_bound(params, lambda0, &cm);
    let verdict = if init.k0 > discounted_cost + tail {
        Verdict::Feasible
    } else {
        Verdict::Infeasible
    };
    Ok(FeasibilityReport {
        cm_path: cm,
        km_path: km,
        discounted_cost,
        tail_bound: tail,
        verdict,
        slack: init.k0 - discounted_cost,
        lambda0,
        k0: init.k0,
    })
}

/// Least-squares slope of `ln values` against `t` over `[t0, t1]`. `None` if fewer than two
/// positive samples fall in the window.
pub fn fit_log_slope(series: &TimeSeries, t0: f64, t1: f64) -> Option<f64> {
    let tol = 1e-9 * series.step;
    let pts: Vec<(f64, f64)> = series
        .values
        .iter()
        .enumerate()
        .map(|(j, &v)| (series.t(j), v))
        .filter(|&(t, v)| t >= t0 - tol && t <= t1 + tol && v > 0.0)
        .map(|(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::habit_of_history;
    use crate::spectral::leading_coefficient;

    fn baseline_history(n: usize) -> HistoryGrid {
        HistoryGrid::constant(1.0, n, 1.0).unwrap()
    }

    #[test]
    fn zero_history_gives_zero_path() {
        let params = ModelParams::baseline();
        let cm = minimal_consumption(&params, &HistoryGrid::zeros(1.0, 50), 3.0).unwrap();
        assert!(cm.values.iter().all(|&c| c == 0.0));
        let km = dominated_capital(&params, 2.0, &cm);
        for (j, &k) in km.values.iter().enumerate() {
            assert!((k - 2.0 * (0.25 * km.t(j)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn starts_at_initial_habit() {
        let params = ModelParams::baseline();
        let hist = baseline_history(100);
        let cm = minimal_consumption(&params, &hist, 2.0).unwrap();
        assert!((cm.values[0] - habit_of_history(&hist, &params)).abs() < 1e-15);
        assert_eq!(cm.len(), 201);
    }

    #[test]
    fn rejects_bad_grids() {
        let params = ModelParams::baseline();
        let hist = baseline_history(10);
        assert!(matches!(
            minimal_consumption(&params, &hist, 0.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            minimal_consumption(&params, &hist, 1.05),
            Err(Error::Domain(_))
        ));
        let coarse = ModelParams::new(5.0, 6.0, 1.0, 0.3, 0.05, 0.04, 2.0);
        assert!(matches!(
            minimal_consumption(&coarse, &HistoryGrid::constant(1.0, 2, 1.0).unwrap(), 2.0),
            Err(Error::Step { .. })
        ));
    }

    #[test]
    fn growth_rate_matches_root() {
        let params = ModelParams::baseline();
        let cm = minimal_consumption(&params, &baseline_history(200), 5.0).unwrap();
        let slope = fit_log_slope(&cm, 3.0, 5.0).unwrap();
        let l0 = real_root(&params).unwrap();
        assert!((slope - l0).abs() < 1e-3, "{slope} vs {l0}");
    }

    #[test]
    fn zero_root_converges_to_leading_level() {
        let params = ModelParams::new(2.0, 1.0, 2f64.ln(), 0.3, 0.05, 0.04, 2.0);
        let hist = HistoryGrid::constant(params.tau, 400, 1.0).unwrap();
        let cm = minimal_consumption(&params, &hist, 20.0 * params.tau).unwrap();
        let p0 = leading_coefficient(&params, 0.0, &hist);
        let last = *cm.values.last().unwrap();
        assert!((last - p0).abs() < 1e-3 * p0, "{last} vs {p0}");
        let slope = fit_log_slope(&cm, 15.0 * params.tau, 20.0 * params.tau).unwrap();
        assert!(slope.abs() < 1e-6);
    }

    #[test]
    fn late_path_follows_leading_term() {
        let params = ModelParams::baseline();
        let hist = baseline_history(400);
        let cm = minimal_consumption(&params, &hist, 6.0).unwrap();
        let l0 = real_root(&params).unwrap();
        let p0 = leading_coefficient(&params, l0, &hist);
        let j = cm.len() - 1;
        let scaled = cm.values[j] * (-l0 * cm.t(j)).exp();
        assert!((scaled - p0).abs() < 1e-3 * p0, "{scaled} vs {p0}");
    }

    #[test]
    fn second_order_in_step() {
        let params = ModelParams::baseline();
        let smooth = |n| HistoryGrid::from_fn(1.0, n, |s: f64| 1.0 + 0.5 * (3.0 * s).sin().powi(2)).unwrap();
        let a = minimal_consumption(&params, &smooth(50), 3.0).unwrap();
        let b = minimal_consumption(&params, &smooth(100), 3.0).unwrap();
        let c = minimal_consumption(&params, &smooth(200), 3.0).unwrap();
        let gap = |x: &TimeSeries, y: &TimeSeries| {
            x.values
                .iter()
                .enumerate()
                .map(|(j, v)| (v - y.values[2 * j]).abs())
                .fold(0.0, f64::max)
        };
        let ratio = gap(&a, &b) / gap(&b, &c);
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn dominated_capital_satisfies_state_equation() {
        let params = ModelParams::baseline();
        let cm = minimal_consumption(&params, &baseline_history(400), 3.0).unwrap();
        let km = dominated_capital(&params, 5.0, &cm);
        let h = km.step;
        let mut worst: f64 = 0.0;
        for j in 1..km.len() - 1 {
            let d = (km.values[j + 1] - km.values[j - 1]) / (2.0 * h);
            worst = worst.max((d - (0.25 * km.values[j] - cm.values[j])).abs());
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn zero_history_is_feasible_with_full_slack() {
        let params = ModelParams::baseline();
        let init = InitialState::new(0.3, HistoryGrid::zeros(1.0, 20)).unwrap();
        let rep = check_feasibility(&params, &init, 8.0).unwrap();
        assert!(rep.is_feasible());
        assert_eq!(rep.slack, 0.3);
        assert_eq!(rep.tail_bound, 0.0);
    }

    #[test]
    fn halving_capital_below_cost_drives_capital_negative() {
        let params = ModelParams::baseline();
        let hist = baseline_history(200);
        let cost = check_feasibility(&params, &InitialState::new(1.0, hist.clone()).unwrap(), 8.0)
            .unwrap()
            .discounted_cost;
        let rep =
            check_feasibility(&params, &InitialState::new(0.5 * cost, hist).unwrap(), 8.0).unwrap();
        assert!(!rep.is_feasible());
        assert!(rep.km_path.values.iter().any(|&k| k < 0.0));
    }

    #[test]
    fn explosive_root_is_always_infeasible() {
        let params = ModelParams::new(0.9, 0.1, 10.0, 0.3, 0.05, 0.04, 2.0);
        let hist = HistoryGrid::constant(10.0, 100, 1.0).unwrap();
        for k0 in [1.0, 1e3, 1e6] {
            let rep =
                check_feasibility(&params, &InitialState::new(k0, hist.clone()).unwrap(), 80.0)
                    .unwrap();
            assert!(!rep.is_feasible());
        }
    }

    #[test]
    fn csv_layout() {
        let params = ModelParams::baseline();
        let init = InitialState::new(10.0, baseline_history(4)).unwrap();
        let rep = check_feasibility(&params, &init, 1.0).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,cm,kM");
        assert_eq!(lines.len(), 6);
    }
}
