//! Pressure laws, eigenvalues, Riemann-invariant transforms, the friction
//! source term and two closed-form reference solutions of the semilinear
//! gas model
//!
//! ```text
//! ∂t ρ + (1/a) ∂x q = 0
//! (1/a) ∂t q + ∂x p = -f_g / (2 d a²) · q|q| / ρ,      p = z(p) ρ
//! ```
//!
//! The compressibility factor is `z(p) = c²` (isothermal) or
//! `z(p) = c² (1 + α p)` with `α ≤ 0` (affine). The `c²` scale carries the
//! units so that `p = z(p) ρ` is a pressure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{adaptive_simpson, bracketed_newton, Dopri5, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GasModelError {
    #[error("{what} outside the admissible domain: {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-physical Riemann pair: w+ - w- = {0} must be positive")]
    NonPhysicalState(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, GasModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Isothermal,
    Affine,
}

/// Compressibility model `z(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    kind: LawKind,
    c_ref: f64,
    alpha: f64,
}

impl PressureLaw {
    pub fn isothermal(c_ref: f64) -> Result<Self> {
        Self::new(LawKind::Isothermal, c_ref, 0.0)
    }

    pub fn affine(c_ref: f64, alpha: f64) -> Result<Self> {
        Self::new(LawKind::Affine, c_ref, alpha)
    }

    pub fn new(kind: LawKind, c_ref: f64, alpha: f64) -> Result<Self> {
        if !(c_ref.is_finite() && c_ref > 0.0) {
            return Err(GasModelError::InvalidParameter(format!(
                "c_ref must be positive, got {c_ref}"
            )));
        }
        if !(alpha.is_finite() && alpha <= 0.0) {
            return Err(GasModelError::InvalidParameter(format!(
                "alpha must be <= 0, got {alpha}"
            )));
        }
        if kind == LawKind::Isothermal && alpha != 0.0 {
            return Err(GasModelError::InvalidParameter("isothermal law takes alpha = 0".into()));
        }
        Ok(Self { kind, c_ref, alpha })
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn c_ref(&self) -> f64 {
        self.c_ref
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `α c²`, the coefficient shared by every affine closed form.
    fn beta(&self) -> f64 {
        self.alpha * self.c_ref * self.c_ref
    }

    fn is_linear(&self) -> bool {
        self.kind == LawKind::Isothermal || self.alpha == 0.0
    }

    /// Largest admissible pressure (`+∞` when `α = 0`).
    pub fn p_max(&self) -> f64 {
        if self.is_linear() {
            f64::INFINITY
        } else {
            -1.0 / self.alpha
        }
    }

    pub fn z(&self, p: f64) -> Result<f64> {
        let c2 = self.c_ref * self.c_ref;
        match self.kind {
            LawKind::Isothermal => Ok(c2),
            LawKind::Affine => {
                let factor = 1.0 + self.alpha * p;
                if factor > 0.0 && p.is_finite() {
                    Ok(c2 * factor)
                } else {
                    Err(GasModelError::Domain {
                        what: "pressure",
                        value: p,
                    })
                }
            }
        }
    }

    /// `z'(p)`; constant for both supported laws.
    pub fn dz_dp(&self) -> f64 {
        match self.kind {
            LawKind::Isothermal => 0.0,
            LawKind::Affine => self.c_ref * self.c_ref * self.alpha,
        }
    }

    pub fn p_of_rho(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(GasModelError::Domain {
                what: "density",
                value: rho,
            });
        }
        let c2 = self.c_ref * self.c_ref;
        let denom = 1.0 - self.beta() * rho;
        if denom <= 0.0 {
            return Err(GasModelError::Domain {
                what: "density",
                value: rho,
            });
        }
        Ok(c2 * rho / denom)
    }

    pub fn rho_of_p(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(GasModelError::Domain {
                what: "pressure",
                value: p,
            });
        }
        Ok(p / self.z(p)?)
    }

    /// Positive eigenvalue `λ⁺(ρ) = sqrt(∂ρ p)` with `∂ρ p = z / (1 - ρ z')`.
    pub fn lambda_of_rho(&self, rho: f64) -> Result<f64> {
        let p = self.p_of_rho(rho)?;
        let dp_drho = self.z(p)? / (1.0 - rho * self.dz_dp());
        if !(dp_drho > 0.0) {
            return Err(GasModelError::Domain {
                what: "sound speed squared",
                value: dp_drho,
            });
        }
        Ok(dp_drho.sqrt())
    }

    /// `I(ρ) = ∫₀^ρ λ⁺(s) ds`.
    pub fn invariant_integral(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(GasModelError::Domain {
                what: "density",
                value: rho,
            });
        }
        if self.is_linear() {
            return Ok(self.c_ref * rho);
        }
        let beta = self.beta();
        // -(c/β) ln(1 - βρ); β < 0 keeps the log argument above one
        Ok(-(self.c_ref / beta) * (-beta * rho).ln_1p())
    }

    pub fn invariant_integral_inv(&self, integral: f64) -> Result<f64> {
        if !(integral > 0.0 && integral.is_finite()) {
            return Err(GasModelError::Domain {
                what: "invariant integral",
                value: integral,
            });
        }
        if self.is_linear() {
            return Ok(integral / self.c_ref);
        }
        let beta = self.beta();
        Ok(-(-beta * integral / self.c_ref).exp_m1() / beta)
    }
}

/// Generic quadrature route for `I(ρ)`, valid for any law that only exposes
/// `λ⁺`. Used for laws without a closed form and as an independent check.
pub fn invariant_integral_numeric(law: &PressureLaw, rho: f64, tol: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(GasModelError::Domain {
            what: "density",
            value: rho,
        });
    }
    let lambda = |s: f64| {
        if s <= 0.0 {
            law.c_ref
        } else {
            law.lambda_of_rho(s).unwrap_or(f64::NAN)
        }
    };
    Ok(adaptive_simpson(&lambda, 0.0, rho, tol))
}

/// Inverse of [`invariant_integral_numeric`] by safeguarded Newton inside a
/// growing bracket. `λ⁺ > 0` makes `I` strictly increasing.
pub fn invariant_integral_inv_numeric(law: &PressureLaw, integral: f64, tol: f64) -> Result<f64> {
    if !(integral > 0.0) {
        return Err(GasModelError::Domain {
            what: "invariant integral",
            value: integral,
        });
    }
    let g = |rho: f64| {
        if rho <= 0.0 {
            -integral
        } else {
            invariant_integral_numeric(law, rho, tol * 1e-2).unwrap_or(f64::NAN) - integral
        }
    };
    let dg = |rho: f64| law.lambda_of_rho(rho).unwrap_or(f64::NAN);
    let mut hi = integral / law.c_ref;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    Ok(bracketed_newton(g, dg, 0.0, hi, tol)?)
}

/// Physical pipe data. The cross-section defaults to `π d² / 4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeGeometry {
    pub length: f64,
    pub diameter: f64,
    pub friction: f64,
    pub area: f64,
}

impl PipeGeometry {
    pub fn new(length: f64, diameter: f64, friction: f64) -> Result<Self> {
        let area = std::f64::consts::PI * diameter * diameter / 4.0;
        Self::with_area(length, diameter, friction, area)
    }

    pub fn with_area(length: f64, diameter: f64, friction: f64, area: f64) -> Result<Self> {
        for (name, v) in [("length", length), ("diameter", diameter), ("area", area)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GasModelError::InvalidParameter(format!(
                    "pipe {name} must be positive, got {v}"
                )));
            }
        }
        // zero friction is allowed for frictionless test pipes
        if !(friction.is_finite() && friction >= 0.0) {
            return Err(GasModelError::InvalidParameter(format!(
                "friction must be non-negative, got {friction}"
            )));
        }
        Ok(Self {
            length,
            diameter,
            friction,
            area,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannPair {
    pub w_plus: f64,
    pub w_minus: f64,
}

/// `w± = ½ (q/a ± I(ρ))`.
pub fn to_riemann(law: &PressureLaw, geom: &PipeGeometry, rho: f64, q: f64) -> Result<RiemannPair> {
    let integral = law.invariant_integral(rho)?;
    let v = q / geom.area;
    Ok(RiemannPair {
        w_plus: 0.5 * (v + integral),
        w_minus: 0.5 * (v - integral),
    })
}

/// Inverse of [`to_riemann`], returning `(ρ, q)`.
pub fn from_riemann(law: &PressureLaw, geom: &PipeGeometry, pair: RiemannPair) -> Result<(f64, f64)> {
    let diff = pair.w_plus - pair.w_minus;
    if !(diff > 0.0) {
        return Err(GasModelError::NonPhysicalState(diff));
    }
    let rho = law.invariant_integral_inv(diff)?;
    Ok((rho, geom.area * (pair.w_plus + pair.w_minus)))
}

/// Darcy friction source `f(ρ, q) = -f_g / (2 d a²) · q|q| / ρ`.
pub fn friction_source(geom: &PipeGeometry, rho: f64, q: f64) -> f64 {
    -geom.friction / (2.0 * geom.diameter * geom.area * geom.area) * q * q.abs() / rho
}

/// The same source written through the pressure, `q|q| z(p) / p`.
pub fn friction_source_from_pressure(law: &PressureLaw, geom: &PipeGeometry, p: f64, q: f64) -> Result<f64> {
    let z = law.z(p)?;
    Ok(-geom.friction / (2.0 * geom.diameter * geom.area * geom.area) * q * q.abs() * z / p)
}

/// Spatially constant density with `q(t) = 1 / (C₀ + C₁ t)`,
/// `C₁ = f_g / (2 d a ρ₀)`. Returns `(ρ₀, q(t))`.
pub fn uniform_flow_reference(rho0: f64, c0: f64, geom: &PipeGeometry, t: f64) -> Result<(f64, f64)> {
    if !(rho0 > 0.0 && c0 > 0.0 && t >= 0.0) {
        return Err(GasModelError::InvalidParameter(format!(
            "uniform flow needs rho0 > 0, C0 > 0, t >= 0 (got {rho0}, {c0}, {t})"
        )));
    }
    let c1 = uniform_flow_decay(rho0, geom);
    Ok((rho0, 1.0 / (c0 + c1 * t)))
}

pub fn uniform_flow_decay(rho0: f64, geom: &PipeGeometry) -> f64 {
    geom.friction / (2.0 * geom.diameter * geom.area * rho0)
}

/// Right-hand side of the traveling-wave profile equation
/// `y' (1 - (1-y)²) = -C y (1 - y)`.
pub fn traveling_wave_slope(c: f64, y: f64) -> f64 {
    -c * y * (1.0 - y) / (1.0 - (1.0 - y) * (1.0 - y))
}

/// Samples the traveling-wave profile `y(s)` with `y(0) = y0` by adaptive
/// integration (tolerance 1e-12). Pressure `g = y`, density and flux
/// `g / (1 - g)` under the law `z(p) = 1 - p`.
pub fn traveling_wave_reference(c: f64, y0: f64, s_values: &[f64]) -> Result<Vec<f64>> {
    if !(y0 > 0.0 && y0 < 1.0) {
        return Err(GasModelError::InvalidParameter(format!(
            "y0 must lie in (0, 1), got {y0}"
        )));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(GasModelError::InvalidParameter(format!(
            "C must be non-negative, got {c}"
        )));
    }
    if c == 0.0 {
        return Ok(vec![y0; s_values.len()]);
    }
    let solver = Dopri5::new(1e-12);
    let rhs = |_s: f64, y: f64| traveling_wave_slope(c, y);
    let inside = |y: f64| y > 0.0 && y < 1.0;

    let mut order: Vec<usize> = (0..s_values.len()).collect();
    order.sort_by(|&a, &b| s_values[a].total_cmp(&s_values[b]));
    let (neg, pos): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| s_values[i] < 0.0);

    let mut out = vec![f64::NAN; s_values.len()];
    let fwd: Vec<f64> = pos.iter().map(|&i| s_values[i]).collect();
    for (&i, y) in pos.iter().zip(solver.solve(rhs, inside, 0.0, y0, &fwd)?) {
        out[i] = y;
    }
    let back: Vec<f64> = neg.iter().rev().map(|&i| s_values[i]).collect();
    for (&i, y) in neg.iter().rev().zip(solver.solve(rhs, inside, 0.0, y0, &back)?) {
        out[i] = y;
    }
    Ok(out)
}

/// Principal branch of the Lambert W function by Halley iteration.
pub fn lambert_w(x: f64) -> Result<f64> {
    let branch = -(-1f64).exp();
    if x.is_nan() || x < branch {
        return Err(GasModelError::Domain {
            what: "Lambert W argument",
            value: x,
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch {
        return Ok(-1.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < -0.25 {
        // series about the branch point
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0
    } else if x < 3.0 {
        (1.0 + x).ln() * 0.8
    } else {
        let l = x.ln();
        l - l.ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            return Ok(w);
        }
    }
    Ok(w)
}
