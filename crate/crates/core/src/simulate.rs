//! Closed-loop optimal paths by two independent routes and the checks that tie them together.
//!
//! The integral form solves the feedback `c = h + alpha G` node by node, with `h` and `G` as
//! trapezoid sums over the stored path. The Lambda form never looks at `G`: it steps the
//! differentiated habit law with `c = h + Lambda e^{Gamma t}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dde::{csv_err, discounted_integral, minimal_consumption};
use crate::error::{Error, Result};
use crate::hjb::{capital_window, discounted_past, g_direct, g_parts, StateSample};
use crate::model::{habit_of_history, validate, HistoryGrid, InitialState, ModelParams};
use crate::path::{lag_weights, steps_in, ConsumptionPath, TimeSeries};

/// CSV header of [`Trajectory::write_csv`].
pub const TRAJECTORY_HEADER: [&str; 8] = [
    "t",
    "k",
    "c",
    "h",
    "G",
    "c_minus_h",
    "lambda_check",
    "external_residual",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    IntegralForm,
    LambdaForm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::IntegralForm => "integral-form",
            Method::LambdaForm => "lambda-form",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub k: f64,
    pub c: f64,
    pub h: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub c_minus_h: f64,
    /// `|c - h - Lambda e^{Gamma t}|` relative to `Lambda e^{Gamma t}`.
    pub lambda_check: f64,
    pub external_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    #[serde(rename = "Gamma")]
    pub growth: f64,
    pub method: Method,
    pub n: usize,
    pub step: f64,
    /// `Lambda = 0`: the path sits on `c = h` and utility is not finite for `gamma > 1`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub meta: TrajectoryMeta,
    pub path: ConsumptionPath,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.t)
    }

    pub fn series(&self, f: impl Fn(&TrajectoryRow) -> f64) -> TimeSeries {
        TimeSeries::new(self.meta.step, self.rows.iter().map(f).collect())
    }

    /// Copy with consumption at node `j` multiplied by `factor`; `k` and `h` are left alone.
    pub fn with_bumped_consumption(&self, j: usize, factor: f64) -> Trajectory {
        let mut out = self.clone();
        let row = &mut out.rows[j];
        row.c *= factor;
        row.c_minus_h = row.c - row.h;
        out.path.future_mut()[j] *= factor;
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let fields = [
                r.t,
                r.k,
                r.c,
                r.h,
                r.g,
                r.c_minus_h,
                r.lambda_check,
                r.external_residual,
            ];
            w.write_record(fields.iter().map(|v| format!("{v:.16e}")))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `Lambda` by the reduced formula and by `alpha G(X(0))` with the direct double integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaConstant {
    pub value: f64,
    pub via_g: f64,
    /// `|value - via_g|` relative to the magnitude of the terms of `G`.
    pub gap: f64,
}

/// `Lambda = (r - Gamma) [kappa0 k0 - h0/(r+eta) + eps e^{-(r+eta) tau}/(r+eta) int e^{-r s} c0(s) ds]`.
/// Since `r - Gamma = alpha` this is `alpha G(X(0))`; both are computed.
pub fn lambda_constant(params: &ModelParams, init: &InitialState) -> Result<LambdaConstant> {
    let d = validate(params)?;
    let h0 = habit_of_history(&init.history, params);
    let parts = g_parts(init.k0, h0, discounted_past(&init.history, d.r), params);
    let value = (d.r - d.growth) * parts.value();
    let state = StateSample::new(init.k0, init.history.clone())?;
    let via_g = d.alpha * g_direct(&state, params);
    Ok(LambdaConstant {
        value,
        via_g,
        gap: (value - via_g).abs() / (d.alpha * parts.scale()),
    })
}

/// Initial capital at which `Lambda = 0`. Equals the discounted cost of `c^m` over `[0, inf)`.
pub fn capital_threshold(params: &ModelParams, history: &HistoryGrid) -> f64 {
    let h0 = habit_of_history(history, params);
    let parts = g_parts(0.0, h0, discounted_past(history, params.r()), params);
    -parts.value() / params.kappa0()
}

/// One classical RK4 step of `k' = r k - c(t)` with `c` linear from `c0` to `c1`.
fn rk4_step(r: f64, dt: f64, k: f64, c0: f64, c1: f64) -> f64 {
    let cm = 0.5 * (c0 + c1);
    let k1 = r * k - c0;
    let k2 = r * (k + 0.5 * dt * k1) - cm;
    let k3 = r * (k + 0.5 * dt * k2) - cm;
    let k4 = r * (k + dt * k3) - c1;
    k + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// `(P, Q0, Q1)` with `rk4_step(k, c0, c1) = P k + Q0 c0 + Q1 c1`.
fn rk4_affine(r: f64, dt: f64) -> (f64, f64, f64) {
    (
        rk4_step(r, dt, 1.0, 0.0, 0.0),
        rk4_step(r, dt, 0.0, 1.0, 0.0),
        rk4_step(r, dt, 0.0, 0.0, 1.0),
    )
}

struct Setup {
    history: HistoryGrid,
    steps: usize,
    lambda: f64,
    degenerate: bool,
}

fn setup(params: &ModelParams, init: &InitialState, horizon: f64, n: usize) -> Result<Setup> {
    validate(params)?;
    if n == 0 {
        return Err(Error::Domain("grid count n must be positive".into()));
    }
    let history = init.history.resample(n);
    let steps = steps_in(horizon, params.tau, n)?;
    let resampled = InitialState::new(init.k0, history.clone())?;
    let lambda = lambda_constant(params, &resampled)?.value;
    let scale = params.alpha() * params.kappa0() * init.k0;
    let degenerate = lambda.abs() <= 1e-12 * scale;
    if lambda < 0.0 && !degenerate {
        return Err(Error::Infeasible {
            k0: init.k0,
            threshold: capital_threshold(params, &history),
        });
    }
    Ok(Setup {
        history,
        steps,
        lambda: lambda.max(0.0),
        degenerate,
    })
}

/// Habit and `int e^{r lag} c` over the window ending at node `j`, including `c_j`.
fn window_sums(path: &ConsumptionPath, j: usize, w_eta: &[f64], w_r: &[f64], eps: f64) -> (f64, f64) {
    let (rh, sh) = path.lagged_sum(j, w_eta);
    let (rw, sw) = path.lagged_sum(j, w_r);
    let cj = if j == 0 { 0.0 } else { path.future()[j] };
    (eps * (rh + sh * cj), rw + sw * cj)
}

fn check_node(t: f64, k: f64, c: f64, h: f64, degenerate: bool) -> Result<()> {
    if !(k >= 0.0) {
        return Err(Error::Constraint { what: "k >= 0", t });
    }
    let slack = if degenerate { 1e-6 * c.abs() } else { 0.0 };
    if !(c - h >= -slack) {
        return Err(Error::Constraint { what: "c >= h", t });
    }
    Ok(())
}

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / (b.abs() + floor)
}

fn finish(
    params: &ModelParams,
    method: Method,
    s: &Setup,
    path: ConsumptionPath,
    ks: Vec<f64>,
    hs: Vec<f64>,
) -> Trajectory {
    let n = path.n();
    let step = path.step();
    let (r, eps, growth) = (params.r(), params.eps, params.growth());
    let w_eta = lag_weights(-params.eta, step, n);
    let w_r = lag_weights(r, step, n);
    let floor = 1e-3 * s.lambda + f64::MIN_POSITIVE;
    let mut rows = Vec::with_capacity(ks.len());
    for (j, (&k, &h)) in ks.iter().zip(&hs).enumerate() {
        let t = j as f64 * step;
        let c = path.future()[j];
        let (h_quad, w_sum) = window_sums(&path, j, &w_eta, &w_r, eps);
        let g = g_parts(k, h_quad, w_sum, params).value();
        let trend = s.lambda * (growth * t).exp();
        rows.push(TrajectoryRow {
            t,
            k,
            c,
            h,
            g,
            c_minus_h: c - h,
            lambda_check: relative(c - h, trend, floor),
            external_residual: 0.0,
        });
    }
    let mut traj = Trajectory {
        rows,
        meta: TrajectoryMeta {
            lambda: s.lambda,
            growth,
            method,
            n,
            step,
            degenerate: s.degenerate,
        },
        path,
    };
    let ext = external_residuals(&traj, params);
    for (row, e) in traj.rows.iter_mut().zip(ext) {
        row.external_residual = e;
    }
    traj
}

/// Method of steps on the closed-loop formula `c = h + alpha G`.
///
/// At node `j` the trapezoid sums for `h` and `G` are affine in `c_j` and the RK4 step for
/// `k_j` is affine in `c_j`, so both unknowns come out of one 2x2 linear solve.
pub fn simulate_integral_form(
    params: &ModelParams,
    init: &InitialState,
    horizon: f64,
    n: usize,
) -> Result<Trajectory> {
    let s = setup(params, init, horizon, n)?;
    let step = s.history.step();
    let (r, eps, alpha, kappa0) = (params.r(), params.eps, params.alpha(), params.kappa0());
    let re = r + params.eta;
    let beta = eps * (-re * params.tau).exp() / re;
    let w_eta = lag_weights(-params.eta, step, n);
    let w_r = lag_weights(r, step, n);
    let (p, q0, q1) = rk4_affine(r, step);

    let mut path = ConsumptionPath::new(s.history.clone());
    let mut ks = Vec::with_capacity(s.steps + 1);
    let mut hs = Vec::with_capacity(s.steps + 1);
    let mut k = init.k0;
    for j in 0..=s.steps {
        let (rh, wh) = path.lagged_sum(j, &w_eta);
        let (rw, ww) = path.lagged_sum(j, &w_r);
        let c = if j == 0 {
            let h = eps * rh;
            h + alpha * g_parts(k, h, rw, params).value()
        } else {
            let weight = eps * wh * (1.0 - alpha / re) + alpha * beta * ww;
            if weight >= 1.0 {
                return Err(Error::CoarseGrid { weight });
            }
            let r0 = (eps * rh * (1.0 - alpha / re) + alpha * beta * rw) / (1.0 - weight);
            let r1 = alpha * kappa0 / (1.0 - weight);
            let c_prev = path.future()[j - 1];
            k = (p * k + q0 * c_prev + q1 * r0) / (1.0 - q1 * r1);
            r0 + r1 * k
        };
        let h = eps * (rh + wh * c);
        check_node(j as f64 * step, k, c, h, s.degenerate)?;
        path.push(c);
        ks.push(k);
        hs.push(h);
    }
    Ok(finish(params, Method::IntegralForm, &s, path, ks, hs))
}

/// RK4 on `(k, h)` with `c = h + Lambda e^{Gamma t}` and
/// `h' = eps (c(t) - e^{-eta tau} c(t - tau)) - eta h`.
pub fn simulate_lambda_form(
    params: &ModelParams,
    init: &InitialState,
    horizon: f64,
    n: usize,
) -> Result<Trajectory> {
    let s = setup(params, init, horizon, n)?;
    let step = s.history.step();
    let (r, eps, eta, growth) = (params.r(), params.eps, params.eta, params.growth());
    let decay = (-eta * params.tau).exp();
    let lambda = s.lambda;
    let n_isize = n as isize;
    let rhs = |t: f64, k: f64, h: f64, delayed: f64| {
        let c = h + lambda * (growth * t).exp();
        (r * k - c, eps * (c - decay * delayed) - eta * h)
    };

    let mut path = ConsumptionPath::new(s.history.clone());
    let mut k = init.k0;
    let mut h = habit_of_history(&s.history, params);
    let mut ks = vec![k];
    let mut hs = vec![h];
    check_node(0.0, k, h + lambda, h, s.degenerate)?;
    path.push(h + lambda);
    for j in 1..=s.steps {
        let t0 = (j - 1) as f64 * step;
        let (dl, dr) = path.segment(j as isize - 1 - n_isize);
        let dm = 0.5 * (dl + dr);
        let (a1, b1) = rhs(t0, k, h, dl);
        let (a2, b2) = rhs(t0 + 0.5 * step, k + 0.5 * step * a1, h + 0.5 * step * b1, dm);
        let (a3, b3) = rhs(t0 + 0.5 * step, k + 0.5 * step * a2, h + 0.5 * step * b2, dm);
        let (a4, b4) = rhs(t0 + step, k + step * a3, h + step * b3, dr);
        k += step / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        h += step / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        let t = j as f64 * step;
        let c = h + lambda * (growth * t).exp();
        check_node(t, k, c, h, s.degenerate)?;
        path.push(c);
        ks.push(k);
        hs.push(h);
    }
    Ok(finish(params, Method::LambdaForm, &s, path, ks, hs))
}

/// Residual of the external-habit policy at every node, using the trajectory's own `k`, `h`
/// and stored consumption:
/// `(c - h) / alpha = k - [h + eps (1 - e^{-(r+eta) tau}) k - eps e^{-(r+eta) tau} W] / (r + eta)`
/// with `W = int_{t-tau}^t e^{r (t-s)} c(s) ds`.
pub fn external_residuals(traj: &Trajectory, params: &ModelParams) -> Vec<f64> {
    let path = &traj.path;
    let n = path.n();
    let r = params.r();
    let re = r + params.eta;
    let alpha = params.alpha();
    let w_r = lag_weights(r, path.step(), n);
    let window = params.eps * re * capital_window(params);
    let memory = params.eps * (-re * params.tau).exp();
    let floor = 1e-3 * traj.meta.lambda + f64::MIN_POSITIVE;
    traj.rows
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let (rest, sw) = path.lagged_sum(j, &w_r);
            let w = rest + if j == 0 { 0.0 } else { sw * path.future()[j] };
            let lhs = (row.c - row.h) / alpha;
            let rhs = row.k - (row.h + window * row.k - memory * w) / re;
            (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + floor)
        })
        .collect()
}

/// Largest node residual of the external-habit policy.
pub fn external_policy_residual(traj: &Trajectory, params: &ModelParams) -> f64 {
    external_residuals(traj, params)
        .into_iter()
        .fold(0.0, f64::max)
}

/// `|k0 - int_0^T e^{-rt} c dt - e^{-rT} k(T)| / k0`, integral by trapezoid.
pub fn budget_residual(traj: &Trajectory, params: &ModelParams, k0: f64) -> f64 {
    let r = params.r();
    let c = traj.series(|row| row.c);
    let last = traj.rows.last().expect("trajectory has rows");
    let total = discounted_integral(r, &c) + (-r * last.t).exp() * last.k;
    (total - k0).abs() / k0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// `max |G(t) - G(0) e^{Gamma t}| / (G(0) e^{Gamma t})`.
    pub g_drift: f64,
    /// `max |c - h - Lambda e^{Gamma t}| / (Lambda e^{Gamma t})`.
    pub lambda_law: f64,
    /// `max (c^m - c)`, positive only if consumption dips below the minimal path.
    pub cm_excess: f64,
    pub min_c_minus_h: f64,
    pub min_h: f64,
    pub min_k: f64,
    pub budget: f64,
    pub external: f64,
}

pub fn invariant_monitor(
    traj: &Trajectory,
    params: &ModelParams,
    init: &InitialState,
) -> Result<InvariantReport> {
    let g0 = traj.rows[0].g;
    let growth = traj.meta.growth;
    let g_drift = traj
        .rows
        .iter()
        .map(|r| relative(r.g, g0 * (growth * r.t).exp(), 0.0))
        .fold(0.0, f64::max);
    let lambda_law = traj.rows.iter().map(|r| r.lambda_check).fold(0.0, f64::max);
    let cm = minimal_consumption(params, traj.path.history(), traj.horizon())?;
    let cm_excess = cm
        .values
        .iter()
        .zip(&traj.rows)
        .map(|(m, r)| m - r.c)
        .fold(f64::NEG_INFINITY, f64::max);
    let fold_min = |f: fn(&TrajectoryRow) -> f64| traj.rows.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(InvariantReport {
        g_drift,
        lambda_law,
        cm_excess,
        min_c_minus_h: fold_min(|r| r.c_minus_h),
        min_h: fold_min(|r| r.h),
        min_k: fold_min(|r| r.k),
        budget: budget_residual(traj, params, init.k0),
        external: traj.rows.iter().map(|r| r.external_residual).fold(0.0, f64::max),
    })
}

/// Relative sup-norm gaps between two trajectories on the same grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossGap {
    pub k: f64,
    pub c: f64,
    pub h: f64,
}

impl CrossGap {
    pub fn max(&self) -> f64 {
        self.k.max(self.c).max(self.h)
    }
}

pub fn cross_method_gap(a: &Trajectory, b: &Trajectory) -> Result<CrossGap> {
    if a.rows.len() != b.rows.len() || (a.meta.step - b.meta.step).abs() > 1e-15 {
        return Err(Error::Domain("trajectories are on different grids".into()));
    }
    let sup = |f: fn(&TrajectoryRow) -> f64| {
        let scale = a.rows.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
        let gap = a
            .rows
            .iter()
            .zip(&b.rows)
            .map(|(x, y)| (f(x) - f(y)).abs())
            .fold(0.0, f64::max);
        if scale > 0.0 {
            gap / scale
        } else {
            gap
        }
    };
    Ok(CrossGap {
        k: sup(|r| r.k),
        c: sup(|r| r.c),
        h: sup(|r| r.h),
    })
}
