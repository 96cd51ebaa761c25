//! Explicit value function `v = nu G^{1-gamma}`, the linear functional `G`, the feedback
//! `c = h + alpha G` and a pointwise check of the HJB equation.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::model::{exp_window, habit_of_history, HistoryGrid, ModelParams};

/// Relative disagreement between the two `G` quadratures that is still accepted.
pub const G_FORM_TOLERANCE: f64 = 1e-6;

/// Capital and the last `tau` of consumption, re-based to `[-tau, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSample {
    pub k: f64,
    pub past_c: HistoryGrid,
}

impl StateSample {
    pub fn new(k: f64, past_c: HistoryGrid) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Domain(format!("k = {k} must be nonnegative")));
        }
        Ok(StateSample { k, past_c })
    }

    pub fn scaled(&self, s: f64) -> StateSample {
        StateSample {
            k: self.k * s,
            past_c: self.past_c.scaled(s),
        }
    }
}

/// `x1(s_i) = eps e^{eta s_i} int_{-i step}^0 c(w) e^{eta w} dw` on the history grid,
/// by cumulative trapezoid from the right end. `x1(-tau) = 0` and `x1(0) = h`.
pub fn structural_component(state: &StateSample, params: &ModelParams) -> Vec<f64> {
    let past = &state.past_c;
    let n = past.n();
    let step = past.step();
    let eta = params.eta;
    let vals = past.values();
    let f = |i: usize| vals[i] * (eta * past.node(i)).exp();
    let mut out = vec![0.0; n + 1];
    let mut acc = 0.0;
    for i in 1..=n {
        // integral over [-i step, 0] uses nodes n-i..=n
        acc += 0.5 * step * (f(n - i) + f(n - i + 1));
        out[i] = params.eps * (eta * past.node(i)).exp() * acc;
    }
    out
}

/// The three pieces of the reduced form of `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GParts {
    /// `kappa0 k`
    pub capital: f64,
    /// `h / (r + eta)`
    pub habit: f64,
    /// `eps e^{-(r+eta) tau} / (r + eta) * int_{-tau}^0 e^{-r w} c(w) dw`
    pub memory: f64,
}

impl GParts {
    pub fn value(&self) -> f64 {
        self.capital - self.habit + self.memory
    }

    pub fn scale(&self) -> f64 {
        self.capital.abs() + self.habit.abs() + self.memory.abs()
    }
}

/// `e^{-r w}`-weighted integral of the past over `[-tau, 0]`.
pub fn discounted_past(past: &HistoryGrid, r: f64) -> f64 {
    past.integrate_weighted(|w| (-r * w).exp())
}

pub fn g_parts(k: f64, h: f64, w_past: f64, params: &ModelParams) -> GParts {
    let r = params.r();
    let re = r + params.eta;
    GParts {
        capital: params.kappa0() * k,
        habit: h / re,
        memory: params.eps * (-re * params.tau).exp() / re * w_past,
    }
}

/// `G` from the integrated-by-parts single integral.
pub fn g_reduced(state: &StateSample, params: &ModelParams) -> f64 {
    let h = habit_of_history(&state.past_c, params);
    g_parts(state.k, h, discounted_past(&state.past_c, params.r()), params).value()
}

/// `G = kappa0 k - int_{-tau}^0 e^{r s} x1(s) ds` with `x1` from [`structural_component`].
pub fn g_direct(state: &StateSample, params: &ModelParams) -> f64 {
    let x1 = structural_component(state, params);
    let r = params.r();
    let past = &state.past_c;
    let n = past.n();
    let integral: f64 = x1
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * v * (r * past.node(i)).exp()
        })
        .sum::<f64>()
        * past.step();
    params.kappa0() * state.k - integral
}

/// `G` by the reduced form, cross-checked against the direct double integral.
pub fn g_value(state: &StateSample, params: &ModelParams) -> Result<f64> {
    let h = habit_of_history(&state.past_c, params);
    let parts = g_parts(state.k, h, discounted_past(&state.past_c, params.r()), params);
    let reduced = parts.value();
    let direct = g_direct(state, params);
    let scale = parts.scale();
    if scale > 0.0 {
        let gap = (reduced - direct).abs() / scale;
        if gap > G_FORM_TOLERANCE {
            return Err(Error::Mismatch {
                what: "reduced and direct G quadratures",
                gap,
            });
        }
    }
    Ok(reduced)
}

fn positive_g(state: &StateSample, params: &ModelParams) -> Result<f64> {
    let g = g_value(state, params)?;
    if g <= 0.0 {
        return Err(Error::Domain(format!("G = {g} is not positive, state outside X")));
    }
    Ok(g)
}

pub fn value_of_g(g: f64, params: &ModelParams) -> f64 {
    params.nu() * g.powf(1.0 - params.gamma)
}

pub fn value_function(state: &StateSample, params: &ModelParams) -> Result<f64> {
    Ok(value_of_g(positive_g(state, params)?, params))
}

/// Optimal consumption `h + alpha G`.
pub fn feedback(state: &StateSample, params: &ModelParams) -> Result<f64> {
    let g = positive_g(state, params)?;
    Ok(habit_of_history(&state.past_c, params) + params.alpha() * g)
}

/// Scalars of the Hamiltonian at `Dv`, `q = -B* Dv = (1 - gamma) nu G^{-gamma}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianParts {
    pub g: f64,
    pub h: f64,
    pub q: f64,
    pub value: f64,
}

pub fn hamiltonian_parts(state: &StateSample, params: &ModelParams) -> Result<HamiltonianParts> {
    let g = positive_g(state, params)?;
    let gm = params.gamma;
    Ok(HamiltonianParts {
        g,
        h: habit_of_history(&state.past_c, params),
        q: (1.0 - gm) * params.nu() * g.powf(-gm),
        value: value_of_g(g, params),
    })
}

/// `rho v - H(x, Dv)`.
///
/// `<A x, Dv> = q (h + r G)`, the maximized utility term is
/// `gamma / (1 - gamma) q^{(gamma-1)/gamma}` and `<D x, B* Dv> = -q h`.
pub fn hjb_residual(state: &StateSample, params: &ModelParams) -> Result<f64> {
    let p = hamiltonian_parts(state, params)?;
    let gm = params.gamma;
    let drift = p.q * (p.h + params.r() * p.g);
    let utility = gm / (1.0 - gm) * p.q.powf((gm - 1.0) / gm);
    let hamiltonian = drift + utility - p.q * p.h;
    Ok(params.rho * p.value - hamiltonian)
}

/// `|rho v - H| / |rho v|`.
pub fn hjb_relative_residual(state: &StateSample, params: &ModelParams) -> Result<f64> {
    let res = hjb_residual(state, params)?;
    let v = value_function(state, params)?;
    Ok(res.abs() / (params.rho * v).abs())
}

/// Current-value Hamiltonian at consumption `c` with the costate of `v`; `-inf` for `c <= h`.
pub fn current_value_hamiltonian(
    state: &StateSample,
    params: &ModelParams,
    c: f64,
) -> Result<f64> {
    let p = hamiltonian_parts(state, params)?;
    if c <= p.h {
        return Ok(f64::NEG_INFINITY);
    }
    let gm = params.gamma;
    let u = (c - p.h).powf(1.0 - gm) / (1.0 - gm);
    Ok(u + p.q * (p.h + params.r() * p.g) - p.q * c)
}

/// Bounds `lower <= v <= upper` in terms of `k^{1-gamma}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueBounds {
    pub lower: f64,
    pub upper: f64,
}

/// For `gamma < 1`: `0 <= v <= M+ k^{1-gamma}` with
/// `M+ = rho / (1 - gamma) * int_0^inf s^gamma e^{-(rho - (1-gamma) r) s} ds`.
/// For `gamma > 1`: `M- k^{1-gamma} <= v <= 0` with `M- = r^{1-gamma} / (rho (1 - gamma))`;
/// the lower bound needs `G` bounded away from zero relative to `k`.
pub fn value_bounds(params: &ModelParams, k: f64) -> ValueBounds {
    let gm = params.gamma;
    let r = params.r();
    let kk = k.powf(1.0 - gm);
    if gm < 1.0 {
        let beta = params.rho - (1.0 - gm) * r;
        let m_plus = params.rho / (1.0 - gm) * gamma(gm + 1.0) / beta.powf(gm + 1.0);
        ValueBounds {
            lower: 0.0,
            upper: m_plus * kk,
        }
    } else {
        let m_minus = r.powf(1.0 - gm) / (params.rho * (1.0 - gm));
        ValueBounds {
            lower: m_minus * kk,
            upper: 0.0,
        }
    }
}

/// `(1 - e^{-(r+eta) tau}) / (r + eta)`, the capital weight of the external-habit formula.
pub(crate) fn capital_window(params: &ModelParams) -> f64 {
    exp_window(params.r() + params.eta, params.tau)
}
