//! Brute-force discretized control problem on `[0, T]` with the value function as salvage.
//!
//! Controls are consumption values at the `m + 1` grid nodes, linear in between. Capital is
//! propagated exactly for piecewise-linear consumption and the habit is a sliding trapezoid
//! sum, so one objective evaluation costs `O(m + n)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dde::minimal_consumption;
use crate::error::{Error, Result};
use crate::hjb::{g_parts, value_of_g};
use crate::model::{habit_of_history, validate, HistoryGrid, InitialState, ModelParams};
use crate::path::{lag_weights, ConsumptionPath};
use crate::simulate::capital_threshold;

/// Relative margin kept above the habit by the projection.
const PROJECTION_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    params: ModelParams,
    history: HistoryGrid,
    k0: f64,
    m: usize,
    step: f64,
    h0: f64,
    /// `step * trapezoid weight * e^{-rho t_j}`
    weights: Vec<f64>,
    /// `e^{-eta l step}`, `l = 0..=n+1`
    decay: Vec<f64>,
    w_r: Vec<f64>,
    exp_r: f64,
    i0: f64,
    i1: f64,
    salvage_discount: f64,
}

/// Running state after node `j`.
#[derive(Debug, Clone, Copy, Default)]
struct Node {
    k: f64,
    /// `sum_{l=0}^{n} e^{-eta l step} a_{j-l}` with the jump node averaged.
    s: f64,
    /// Utility sum through node `j`.
    acc: f64,
}

impl DiscreteProblem {
    /// Grid of `m` steps on `[0, horizon]`; the step must divide `tau`.
    pub fn new(params: &ModelParams, init: &InitialState, horizon: f64, m: usize) -> Result<Self> {
        validate(params)?;
        if m == 0 || !(horizon > 0.0) {
            return Err(Error::Domain("oracle needs m >= 1 and T > 0".into()));
        }
        let step = horizon / m as f64;
        let n_real = params.tau / step;
        let n = n_real.round();
        if n < 1.0 || (n - n_real).abs() > 1e-9 * n_real {
            return Err(Error::Domain(format!(
                "oracle step T/m = {step} does not divide tau = {}",
                params.tau
            )));
        }
        let n = n as usize;
        let history = init.history.resample(n);
        let weights = (0..=m)
            .map(|j| {
                let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                step * w * (-params.rho * j as f64 * step).exp()
            })
            .collect();
        let r = params.r();
        let x = r * step;
        Ok(DiscreteProblem {
            params: *params,
            h0: habit_of_history(&history, params),
            history,
            k0: init.k0,
            m,
            step,
            weights,
            decay: lag_weights(-params.eta, step, n + 1),
            w_r: lag_weights(r, step, n),
            exp_r: x.exp(),
            i0: x.exp_m1() / r,
            i1: (x.exp_m1() - x) / (r * r),
            salvage_discount: (-params.rho * horizon).exp(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.history.n()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.m as f64
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn history(&self) -> &HistoryGrid {
        &self.history
    }

    /// Node value entering the sliding sum; node 0 carries the average of its two limits.
    fn a(&self, c: &[f64], i: isize) -> f64 {
        let n = self.n() as isize;
        if i < 0 {
            self.history.values()[(i + n) as usize]
        } else if i == 0 {
            0.5 * (self.history.values()[n as usize] + c[0])
        } else {
            c[i as usize]
        }
    }

    /// Left end of the window ending at `j >= 1`.
    fn left_end(&self, c: &[f64], j: usize) -> f64 {
        let i = j as isize - self.n() as isize;
        if i == 0 {
            c[0]
        } else {
            self.a(c, i)
        }
    }

    fn utility(&self, x: f64) -> f64 {
        let g = self.params.gamma;
        if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            let u = x.powf(1.0 - g) / (1.0 - g);
            if u.is_nan() {
                f64::NEG_INFINITY
            } else {
                u
            }
        }
    }

    /// `S_j` before `c_j` is added, and the habit as an affine function `h = base + slope c_j`.
    fn habit_parts(&self, c: &[f64], prev: &Node, j: usize) -> (f64, f64, f64) {
        let n = self.n();
        let eps = self.params.eps;
        let ji = j as isize;
        let s_without = self.decay[1] * prev.s - self.decay[n + 1] * self.a(c, ji - n as isize - 1);
        // full weight on a_{j-n} inside S, trapezoid wants half of the left-end value
        let left = ji - n as isize;
        let base = eps
            * self.step
            * (s_without - self.decay[n] * self.a(c, left) + 0.5 * self.decay[n] * self.left_end(c, j));
        (s_without, base, 0.5 * eps * self.step)
    }

    fn start(&self, c: &[f64]) -> Node {
        let n = self.n() as isize;
        let s = (0..=n).map(|l| self.decay[l as usize] * self.a(c, -l)).sum();
        Node {
            k: self.k0,
            s,
            acc: self.weights[0] * self.utility(c[0] - self.h0),
        }
    }

    fn advance(&self, c: &[f64], prev: &Node, j: usize) -> (Node, f64) {
        let (s_without, base, slope) = self.habit_parts(c, prev, j);
        let cj = c[j];
        let h = base + slope * cj;
        let k = self.exp_r * prev.k - c[j - 1] * self.i0 - (cj - c[j - 1]) * self.i1 / self.step;
        let u = if k < 0.0 || cj < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.utility(cj - h)
        };
        (
            Node {
                k,
                s: s_without + cj,
                acc: prev.acc + self.weights[j] * u,
            },
            h,
        )
    }

    fn salvage(&self, c: &[f64], last: &Node, h_last: f64) -> f64 {
        let path = ConsumptionPath::with_future(self.history.clone(), c.to_vec());
        let (rest, sw) = path.lagged_sum(self.m, &self.w_r);
        let w = rest + sw * c[self.m];
        let g = g_parts(last.k, h_last, w, &self.params).value();
        if g <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.salvage_discount * value_of_g(g, &self.params)
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.m + 1 {
            return Err(Error::Domain(format!(
                "expected {} controls, got {}",
                self.m + 1,
                c.len()
            )));
        }
        Ok(())
    }

    /// Forward pass storing every node state.
    fn trace(&self, c: &[f64]) -> (Vec<Node>, f64) {
        let mut nodes = Vec::with_capacity(self.m + 1);
        let mut node = self.start(c);
        let mut h = self.h0;
        nodes.push(node);
        for j in 1..=self.m {
            let (next, hj) = self.advance(c, &node, j);
            node = next;
            h = hj;
            nodes.push(node);
        }
        let salvage = self.salvage(c, &node, h);
        (nodes, salvage)
    }

    /// Objective value with every node state for later checkpointed re-evaluation.
    fn value_from(&self, c: &[f64], nodes: &[Node], i: usize) -> f64 {
        // nodes[..i] are valid for `c`
        let mut node = if i == 0 { self.start(c) } else { nodes[i - 1] };
        let mut h = self.h0;
        let from = if i == 0 { 1 } else { i };
        for j in from..=self.m {
            let (next, hj) = self.advance(c, &node, j);
            node = next;
            h = hj;
        }
        node.acc + self.salvage(c, &node, h)
    }

    /// Discounted utility plus `e^{-rho T} v(X(T))`; `-inf` on any constraint violation.
    pub fn evaluate_objective(&self, c: &[f64]) -> Result<f64> {
        self.check_len(c)?;
        Ok(self.objective(c))
    }

    fn objective(&self, c: &[f64]) -> f64 {
        let (nodes, salvage) = self.trace(c);
        let j = nodes[self.m].acc + salvage;
        if j.is_nan() {
            f64::NEG_INFINITY
        } else {
            j
        }
    }

    /// Capital and habit at every node.
    pub fn states(&self, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(c)?;
        let mut node = self.start(c);
        let mut ks = vec![node.k];
        let mut hs = vec![self.h0];
        for j in 1..=self.m {
            let (next, h) = self.advance(c, &node, j);
            node = next;
            ks.push(node.k);
            hs.push(h);
        }
        Ok((ks, hs))
    }

    /// Forward-difference gradient with relative step `1e-6`.
    ///
    /// A change at node `i` only affects nodes `i..`, so each component replays the suffix from
    /// the stored node state. Differences of the suffix part avoid cancellation with the prefix.
    pub fn gradient(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c)?;
        let (nodes, salvage) = self.trace(c);
        let base_total = nodes[self.m].acc + salvage;
        if !base_total.is_finite() {
            return Err(Error::Domain("gradient requested at an infeasible point".into()));
        }
        let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        let grad = (0..=self.m)
            .into_par_iter()
            .map_init(
                || c.to_vec(),
                |work, i| {
                    let d = 1e-6 * c[i].abs().max(1e-3 * scale);
                    work[i] = c[i] + d;
                    let prefix = if i == 0 { 0.0 } else { nodes[i - 1].acc };
                    let new_suffix = self.value_from(work, &nodes, i) - prefix;
                    work[i] = c[i];
                    let base_suffix = base_total - prefix;
                    (new_suffix - base_suffix) / d
                },
            )
            .collect();
        Ok(grad)
    }

    /// Smallest admissible control at every node given the earlier ones, applied front to back.
    pub fn project(&self, c: &mut [f64]) {
        let margin = 1.0 + PROJECTION_MARGIN;
        c[0] = c[0].max(self.h0.max(0.0) * margin);
        let mut node = self.start(c);
        for j in 1..=self.m {
            let (_, base, slope) = self.habit_parts(c, &node, j);
            let lower = (base / (1.0 - slope)).max(0.0) * margin;
            if c[j] < lower {
                c[j] = lower;
            }
            node = self.advance(c, &node, j).0;
        }
    }

    /// `c^m + a` with `a = r kappa0 (k0 - k*) / 2`, a feasible starting point for the ascent.
    pub fn minimal_start(&self) -> Result<Vec<f64>> {
        let cm = minimal_consumption(&self.params, &self.history, self.horizon())?;
        let slack = self.k0 - capital_threshold(&self.params, &self.history);
        if slack <= 0.0 {
            return Err(Error::Infeasible {
                k0: self.k0,
                threshold: self.k0 - slack,
            });
        }
        let a = 0.5 * self.params.r() * self.params.kappa0() * slack;
        let mut c: Vec<f64> = cm.values.iter().map(|v| v + a).collect();
        self.project(&mut c);
        Ok(c)
    }

    /// Trapezoid metric used to precondition the gradient.
    fn metric(&self, j: usize) -> f64 {
        let w = if j == 0 || j == self.m { 0.5 } else { 1.0 };
        self.step * w * (-self.params.rho * j as f64 * self.step).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub trials: usize,
    pub j_base: f64,
    /// Largest `J(perturbed) - J(base)`; negative when every trial lost.
    pub max_gain: f64,
    /// Trials whose gain exceeded the tolerance.
    pub improvements: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy)]
enum Bump {
    Sine {
        start: usize,
        width: usize,
        amplitude: f64,
    },
    Spike {
        node: usize,
        amplitude: f64,
    },
}

impl Bump {
    fn apply(&self, base: &[f64], scale: f64) -> Vec<f64> {
        let mut c = base.to_vec();
        match *self {
            Bump::Sine {
                start,
                width,
                amplitude,
            } => {
                for i in 0..=width {
                    let j = start + i;
                    if j >= c.len() {
                        break;
                    }
                    let phase = std::f64::consts::PI * i as f64 / width as f64;
                    c[j] *= 1.0 + scale * amplitude * phase.sin();
                }
            }
            Bump::Spike { node, amplitude } => c[node] *= 1.0 + scale * amplitude,
        }
        c
    }
}

fn draw_bumps(m: usize, n: usize, trials: usize, seed: u64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let amplitude = rng.random_range(-0.01..0.01);
            if rng.random_bool(0.7) {
                let width = rng.random_range((n / 5).max(2)..=(2 * n).max(3));
                let start = rng.random_range(0..m);
                Bump::Sine {
                    start,
                    width,
                    amplitude,
                }
            } else {
                Bump::Spike {
                    node: rng.random_range(0..=m),
                    amplitude,
                }
            }
        })
        .collect()
}

/// Random feasible perturbations of `base`: sine bumps and single-node spikes of up to 1%,
/// halved until feasible. Reports the best gain found.
pub fn perturbation_scan(
    problem: &DiscreteProblem,
    base: &[f64],
    trials: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    let j_base = problem.evaluate_objective(base)?;
    if !j_base.is_finite() {
        return Err(Error::Domain("base controls are infeasible".into()));
    }
    let tolerance = 1e-6 * j_base.abs();
    let bumps = draw_bumps(problem.m(), problem.n(), trials, seed);
    let gains: Vec<f64> = bumps
        .par_iter()
        .map(|b| {
            let mut scale = 1.0;
            for _ in 0..30 {
                let j = problem.objective(&b.apply(base, scale));
                if j.is_finite() {
                    return j - j_base;
                }
                scale *= 0.5;
            }
            f64::NEG_INFINITY
        })
        .collect();
    Ok(PerturbationReport {
        trials,
        j_base,
        max_gain: gains.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        improvements: gains.iter().filter(|&&g| g > tolerance).count(),
        tolerance,
    })
}

/// [`perturbation_scan`] that fails if any trial improves on `base` beyond `1e-6 |J|`.
pub fn perturbation_test(
    problem: &DiscreteProblem,
    base: &[f64],
    trials: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    let rep = perturbation_scan(problem, base, trials, seed)?;
    if rep.improvements > 0 {
        return Err(Error::OptimalityViolation {
            gain: rep.max_gain,
            tolerance: rep.tolerance,
        });
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentReport {
    pub controls: Vec<f64>,
    pub j_start: f64,
    pub j_final: f64,
    pub iterations: usize,
    /// Sup-norm of the projected preconditioned gradient step, relative to the controls.
    pub stationarity: f64,
    pub converged: bool,
}

/// Stationarity tolerance of [`projected_ascent`].
pub const ASCENT_TOLERANCE: f64 = 1e-6;

/// Projected gradient ascent with Barzilai-Borwein steps in the trapezoid metric and Armijo
/// backtracking. Infeasible trial points (`k < 0`, `G(T) <= 0`) evaluate to `-inf` and are
/// backtracked away from.
pub fn projected_ascent(
    problem: &DiscreteProblem,
    start: &[f64],
    iters: usize,
) -> Result<AscentReport> {
    let mut x = start.to_vec();
    problem.check_len(&x)?;
    problem.project(&mut x);
    let mut j = problem.objective(&x);
    if !j.is_finite() {
        return Err(Error::Domain("ascent start is infeasible".into()));
    }
    let j_start = j;
    let metric: Vec<f64> = (0..=problem.m()).map(|i| problem.metric(i)).collect();
    let mut g = problem.gradient(&x)?;
    let mut step = 1e-3;
    let mut stationarity = f64::INFINITY;
    let mut flat = 0;
    for it in 0..iters {
        stationarity = projected_step_norm(problem, &x, &g, &metric);
        if stationarity < ASCENT_TOLERANCE {
            return Ok(AscentReport {
                controls: x,
                j_start,
                j_final: j,
                iterations: it,
                stationarity,
                converged: true,
            });
        }
        let mut s = step;
        let mut accepted = None;
        for _ in 0..50 {
            let mut trial: Vec<f64> = x
                .iter()
                .zip(&g)
                .zip(&metric)
                .map(|((xi, gi), mi)| xi + s * gi / mi)
                .collect();
            problem.project(&mut trial);
            let jt = problem.objective(&trial);
            let ascent: f64 = trial.iter().zip(&x).zip(&g).map(|((t, xi), gi)| gi * (t - xi)).sum();
            if jt.is_finite() && jt >= j + 1e-4 * ascent {
                accepted = Some((trial, jt));
                break;
            }
            s *= 0.5;
        }
        let Some((x_new, j_new)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: it,
                stationarity,
            });
        };
        let g_new = problem.gradient(&x_new)?;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..x.len() {
            let dx = x_new[i] - x[i];
            num += dx * metric[i] * dx;
            den -= dx * (g_new[i] - g[i]);
        }
        step = if den > 0.0 && num > 0.0 { num / den } else { 2.0 * s };
        let gain = (j_new - j) / j.abs();
        flat = if gain < 1e-13 { flat + 1 } else { 0 };
        x = x_new;
        j = j_new;
        g = g_new;
        if flat >= 5 {
            stationarity = projected_step_norm(problem, &x, &g, &metric);
            return Ok(AscentReport {
                controls: x,
                j_start,
                j_final: j,
                iterations: it + 1,
                stationarity,
                converged: true,
            });
        }
    }
    Ok(AscentReport {
        controls: x,
        j_start,
        j_final: j,
        iterations: iters,
        stationarity,
        converged: false,
    })
}

/// `max |P(x + g / metric) - x| / max |x|` scaled by a unit step.
fn projected_step_norm(problem: &DiscreteProblem, x: &[f64], g: &[f64], metric: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    // marginal utility is O(1 / scale^gamma); normalise the unit step by the control scale
    let unit = 1e-3 * scale;
    let mut trial: Vec<f64> = x
        .iter()
        .zip(g)
        .zip(metric)
        .map(|((xi, gi), mi)| xi + unit * gi / mi)
        .collect();
    problem.project(&mut trial);
    trial
        .iter()
        .zip(x)
        .map(|(t, xi)| (t - xi).abs())
        .fold(0.0, f64::max)
        / (unit * scale)
}
