//! Concatenation of a consumption history with a simulated future on one uniform grid.
//!
//! Node `j >= 0` sits at `t = j * step`; the history occupies nodes `-n..=0`.
//! The value at node 0 is two-sided: the history supplies the left limit `c0(0-)`
//! and the future supplies `c(0)`. Every segment is linear between its own end
//! values, so the jump costs nothing in the trapezoid sums below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HistoryGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionPath {
    history: HistoryGrid,
    future: Vec<f64>,
}

impl ConsumptionPath {
    pub fn new(history: HistoryGrid) -> Self {
        ConsumptionPath {
            history,
            future: Vec::new(),
        }
    }

    pub fn with_future(history: HistoryGrid, future: Vec<f64>) -> Self {
        ConsumptionPath { history, future }
    }

    pub fn history(&self) -> &HistoryGrid {
        &self.history
    }

    pub fn future(&self) -> &[f64] {
        &self.future
    }

    pub fn future_mut(&mut self) -> &mut Vec<f64> {
        &mut self.future
    }

    pub fn push(&mut self, c: f64) {
        self.future.push(c);
    }

    /// Grid intervals per memory length.
    pub fn n(&self) -> usize {
        self.history.n()
    }

    pub fn step(&self) -> f64 {
        self.history.step()
    }

    /// End values of the segment `[q step, (q+1) step]`; `q` may be negative.
    pub fn segment(&self, q: isize) -> (f64, f64) {
        let n = self.n() as isize;
        if q < 0 {
            let i = (q + n) as usize;
            (self.history.values()[i], self.history.values()[i + 1])
        } else {
            let i = q as usize;
            (self.future[i], self.future[i + 1])
        }
    }

    /// Trapezoid sum over the window `[t_j - tau, t_j]` with `weights[l]` the weight at lag `l * step`.
    ///
    /// Returns `(rest, self_weight)` so that the integral equals `rest + self_weight * c(t_j)`.
    /// For `j = 0` the window is pure history and `self_weight` is zero. For `j >= 1` the
    /// value `c(t_j)` is not read, so this can be called before it is known.
    pub fn lagged_sum(&self, j: usize, weights: &[f64]) -> (f64, f64) {
        let n = self.n();
        debug_assert_eq!(weights.len(), n + 1);
        let half = 0.5 * self.step();
        let j = j as isize;
        let mut rest = 0.0;
        for lag in 1..=n {
            // segment whose left end has lag `lag`
            let q = j - lag as isize;
            let (left, right) = self.segment_partial(q, j);
            rest += half * left * weights[lag];
            if let Some(right) = right {
                rest += half * right * weights[lag - 1];
            }
        }
        if j == 0 {
            (rest, 0.0)
        } else {
            (rest, half * weights[0])
        }
    }

    fn segment_partial(&self, q: isize, j: isize) -> (f64, Option<f64>) {
        if q + 1 == j && j > 0 {
            let left = if q < 0 {
                self.history.values()[(q + self.n() as isize) as usize]
            } else {
                self.future[q as usize]
            };
            (left, None)
        } else {
            let (l, r) = self.segment(q);
            (l, Some(r))
        }
    }

    /// Past consumption over `[t_j - tau, t_j]` re-based to `[-tau, 0]`.
    ///
    /// An interior jump node carries the average of its two limits, which makes
    /// the trapezoid rule on the window equal to the segment-wise trapezoid sum.
    pub fn window(&self, j: usize) -> HistoryGrid {
        let n = self.n();
        let mut values = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let g = j as isize - n as isize + i as isize;
            let v = if g < 0 {
                self.history.values()[(g + n as isize) as usize]
            } else if g > 0 {
                self.future[g as usize]
            } else if j == 0 {
                self.history.values()[n]
            } else if i == 0 {
                self.future[0]
            } else {
                0.5 * (self.history.values()[n] + self.future[0])
            };
            values.push(v);
        }
        HistoryGrid::from_raw(self.history.tau(), values)
    }
}

/// Samples on the uniform grid `t_j = j * step`, `j = 0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub step: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(step: f64, values: Vec<f64>) -> Self {
        TimeSeries { step, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.len().saturating_sub(1))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.t(j))
    }
}

/// Number of grid steps of size `tau / n` in `horizon`; the step must divide the horizon.
pub(crate) fn steps_in(horizon: f64, tau: f64, n: usize) -> Result<usize> {
    let step = tau / n as f64;
    let steps = (horizon / step).round();
    if !(horizon.is_finite() && horizon > 0.0) || steps < 1.0 {
        return Err(Error::Domain(format!("horizon T = {horizon} must be positive")));
    }
    if (steps * step - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Domain(format!(
            "grid step tau/n = {step} does not divide T = {horizon}"
        )));
    }
    Ok(steps as usize)
}

/// `weights[l] = exp(rate * l * step)`, `l = 0..=n`.
pub(crate) fn lag_weights(rate: f64, step: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|l| (rate * l as f64 * step).exp()).collect()
}
