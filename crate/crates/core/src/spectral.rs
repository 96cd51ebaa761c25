//! Characteristic equation of the habit renewal equation.
//!
//! `phi(lambda) = 1 - eps int_{-tau}^0 e^{(lambda + eta) u} du` is strictly increasing on the
//! real line, so it has exactly one real zero `lambda0`. Complex zeros sit strictly to the
//! left of it; [`dominance_certificate`] checks that numerically with the argument principle.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{exp_window, HistoryGrid, ModelParams, SERIES_SWITCH};

/// Residual and bracket-width target for [`real_root`].
pub const ROOT_TOLERANCE: f64 = 1e-12;
/// Tolerance on the zero-growth indicator for the `ZeroRoot` tag.
pub const REGIME_TOLERANCE: f64 = 1e-10;
/// Boundary points of the first contour pass.
pub const CONTOUR_POINTS: usize = 10_000;
const MAX_DOUBLINGS: usize = 100;
const CONTOUR_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `lambda0 > 0`: the only root with positive real part.
    PositiveRoot,
    /// Every root has negative real part.
    NegativeRoots,
    /// `lambda0 = 0`, all other roots to the left.
    ZeroRoot,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::PositiveRoot => "PositiveRoot",
            Regime::NegativeRoots => "NegativeRoots",
            Regime::ZeroRoot => "ZeroRoot",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda0: f64,
    pub regime: Regime,
    /// Leading coefficient of `c^m(t) ~ p0 e^{lambda0 t}`.
    pub p0: f64,
    /// Half-width of the certified rectangle around `lambda0`; zero if nothing was certified.
    pub dominance_margin: f64,
    pub residual: f64,
}

pub fn phi(lambda: f64, params: &ModelParams) -> f64 {
    1.0 - params.eps * exp_window(lambda + params.eta, params.tau)
}

/// `phi'(lambda) = -eps int_{-tau}^0 u e^{(lambda+eta) u} du > 0`.
pub fn phi_prime(lambda: f64, params: &ModelParams) -> f64 {
    let tau = params.tau;
    let x = lambda + params.eta;
    let y = x * tau;
    let g = if y.abs() < SERIES_SWITCH {
        // (1 - e^{-y}(1 + y)) / y^2
        0.5 - y / 3.0 + y * y / 8.0 - y.powi(3) / 30.0 + y.powi(4) / 144.0 - y.powi(5) / 840.0
    } else {
        // 1 - e^{-y}(1+y) = -expm1(-y) - y e^{-y}
        (-(-y).exp_m1() - y * (-y).exp()) / (y * y)
    };
    params.eps * tau * tau * g
}

/// Unique real zero of `phi` by bisection on `[L, eps - eta]`.
pub fn real_root(params: &ModelParams) -> Result<f64> {
    let upper = params.eps - params.eta;
    // phi(eps - eta) = e^{-eps tau} > 0
    let mut hi = upper;
    let mut lo = upper - 1.0;
    let mut width = 1.0;
    let mut doublings = 0;
    while phi(lo, params) >= 0.0 {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Bracket {
                iterations: MAX_DOUBLINGS,
            });
        }
        hi = lo;
        width *= 2.0;
        lo = upper - width;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = phi(mid, params);
        if f == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 0.25 * ROOT_TOLERANCE && f.abs() < ROOT_TOLERANCE {
            break;
        }
    }
    let f_lo = phi(lo, params);
    let f_hi = phi(hi, params);
    let root = if f_lo.abs() <= f_hi.abs() { lo } else { hi };
    let residual = phi(root, params).abs();
    if residual >= ROOT_TOLERANCE || root >= upper {
        return Err(Error::Root {
            lambda: root,
            residual,
        });
    }
    Ok(root)
}

/// Three-way classification from the sign of `1 - eps (1 - e^{-eta tau}) / eta`,
/// cross-checked against the sign of the computed root.
pub fn regime(params: &ModelParams) -> Result<Regime> {
    let lambda0 = real_root(params)?;
    regime_with_root(params, lambda0)
}

pub fn regime_with_root(params: &ModelParams, lambda0: f64) -> Result<Regime> {
    let s = params.zero_growth_indicator();
    let tag = if s.abs() < REGIME_TOLERANCE {
        Regime::ZeroRoot
    } else if s < 0.0 {
        Regime::PositiveRoot
    } else {
        Regime::NegativeRoots
    };
    // |lambda0| is at most |s| / min phi' near zero, plus root tolerance
    let slack = REGIME_TOLERANCE / phi_prime(0.0, params).min(1.0) + 1e-9;
    let consistent = match tag {
        Regime::ZeroRoot => lambda0.abs() <= slack,
        Regime::PositiveRoot => lambda0 > -slack,
        Regime::NegativeRoots => lambda0 < slack,
    };
    if !consistent {
        return Err(Error::Inconsistency(format!(
            "regime {tag} disagrees with lambda0 = {lambda0}"
        )));
    }
    Ok(tag)
}

/// `p0 = F(lambda0) / phi'(lambda0)`, the residue of the Laplace transform of `c^m` at `lambda0`.
///
/// `F` is the transform of the history forcing `eps int_{t-tau}^0 c0(u) e^{eta (u - t)} du`:
/// `F(lambda) = eps int_{-tau}^0 c0(u) e^{eta u} (1 - e^{-(lambda+eta)(u+tau)}) / (lambda+eta) du`.
pub fn leading_coefficient(params: &ModelParams, lambda0: f64, history: &HistoryGrid) -> f64 {
    let x = lambda0 + params.eta;
    let tau = params.tau;
    let forcing = params.eps
        * history.integrate_weighted(|u| (params.eta * u).exp() * exp_window(x, u + tau));
    forcing / phi_prime(lambda0, params)
}

/// `phi` continued to the complex plane. Equal to `a(lambda) / (lambda + eta)` with
/// `a(lambda) = lambda + eta - eps (1 - e^{-(lambda+eta) tau})`; the removable zero of
/// `a` at `-eta` is not a zero of `phi`.
pub fn phi_complex(lambda: Complex64, params: &ModelParams) -> Complex64 {
    let x = lambda + params.eta;
    let y = x * params.tau;
    let window = if y.norm() < SERIES_SWITCH {
        let y2 = y * y;
        (1.0 - y / 2.0 + y2 / 6.0 - y2 * y / 24.0 + y2 * y2 / 120.0 - y2 * y2 * y / 720.0)
            * params.tau
    } else {
        (1.0 - (-y).exp()) / x
    };
    1.0 - params.eps * window
}

/// Rectangle `[re_lo, re_hi] x [-height, height]` in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub re_lo: f64,
    pub re_hi: f64,
    pub height: f64,
}

/// Outcome of one argument-principle count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCount {
    pub zeros: i64,
    pub raw_winding: f64,
    pub points: usize,
}

/// Counts zeros of `phi` inside `rect` by summing argument increments along the boundary.
/// Doubles the discretization until each increment stays below a quarter turn and the
/// total is integral to `1e-3`.
pub fn count_zeros(params: &ModelParams, rect: Rectangle) -> Result<ZeroCount> {
    let mut points = CONTOUR_POINTS;
    let mut last = f64::NAN;
    for _ in 0..=CONTOUR_RETRIES {
        match winding(|z| phi_complex(z, params), rect, points) {
            Some(w) if (w - w.round()).abs() < 1e-3 => {
                return Ok(ZeroCount {
                    zeros: w.round() as i64,
                    raw_winding: w,
                    points,
                })
            }
            Some(w) => last = w,
            None => {}
        }
        points *= 2;
    }
    Err(Error::Contour {
        winding: last,
        points: points / 2,
    })
}

/// Winding number of `f` around zero along the counter-clockwise boundary of `rect`.
/// `None` when the discretization is too coarse to follow the argument.
fn winding(f: impl Fn(Complex64) -> Complex64, rect: Rectangle, points: usize) -> Option<f64> {
    let corners = [
        Complex64::new(rect.re_lo, -rect.height),
        Complex64::new(rect.re_hi, -rect.height),
        Complex64::new(rect.re_hi, rect.height),
        Complex64::new(rect.re_lo, rect.height),
    ];
    let lengths: Vec<f64> = (0..4).map(|i| (corners[(i + 1) % 4] - corners[i]).norm()).collect();
    let perimeter: f64 = lengths.iter().sum();
    let mut total = 0.0;
    let mut prev = f(corners[0]);
    if prev.norm() == 0.0 {
        return None;
    }
    for side in 0..4 {
        let a = corners[side];
        let b = corners[(side + 1) % 4];
        let m = ((points as f64 * lengths[side] / perimeter).ceil() as usize).max(8);
        for i in 1..=m {
            let z = a + (b - a) * (i as f64 / m as f64);
            let val = f(z);
            if val.norm() == 0.0 || !val.re.is_finite() || !val.im.is_finite() {
                return None;
            }
            let d = (val / prev).arg();
            if d.abs() > PI / 4.0 {
                return None;
            }
            total += d;
            prev = val;
        }
    }
    Some(total / (2.0 * PI))
}

/// Default half-height of the certificate rectangle, two imaginary root spacings.
pub fn default_height(params: &ModelParams) -> f64 {
    4.0 * PI / params.tau
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceCertificate {
    pub lambda0: f64,
    pub margin: f64,
    pub count: ZeroCount,
    /// True when `lambda0` is the only zero in the rectangle.
    pub verified: bool,
}

/// Certifies that `lambda0` is the only characteristic root in
/// `[lambda0 - margin, lambda0 + margin] x [-4 pi / tau, 4 pi / tau]`.
pub fn dominance_certificate(params: &ModelParams, margin: f64) -> Result<DominanceCertificate> {
    if !(margin > 0.0) {
        return Err(Error::Domain(format!("margin = {margin} must be positive")));
    }
    let lambda0 = real_root(params)?;
    let rect = Rectangle {
        re_lo: lambda0 - margin,
        re_hi: lambda0 + margin,
        height: default_height(params),
    };
    let count = count_zeros(params, rect)?;
    Ok(DominanceCertificate {
        lambda0,
        margin,
        count,
        verified: count.zeros == 1,
    })
}

/// Full spectral summary. Tries `margin` first and halves it (up to 20 times) until the
/// certificate holds; a report with `dominance_margin = 0` means nothing was certified.
pub fn analyze(params: &ModelParams, history: &HistoryGrid, margin: f64) -> Result<SpectralReport> {
    let lambda0 = real_root(params)?;
    let regime = regime_with_root(params, lambda0)?;
    let p0 = leading_coefficient(params, lambda0, history);
    let mut m = margin;
    let mut certified = 0.0;
    for _ in 0..20 {
        let cert = dominance_certificate(params, m)?;
        if cert.verified {
            certified = m;
            break;
        }
        m *= 0.5;
    }
    Ok(SpectralReport {
        lambda0,
        regime,
        p0,
        dominance_margin: certified,
        residual: phi(lambda0, params).abs(),
    })
}
