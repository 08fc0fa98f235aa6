//! Small scalar numerical kernels shared by the model code: adaptive Simpson
//! quadrature, a safeguarded Newton root finder and an embedded Dormand-Prince
//! 5(4) integrator for scalar ODEs.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("root is not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("ODE step size underflow at x = {x} (h = {h})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("ODE solution left its admissible domain at x = {x}")]
    LeftDomain { x: f64 },
    #[error("too many ODE steps ({0})")]
    TooManySteps(usize),
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Newton's method kept inside a shrinking bracket; falls back to bisection
/// whenever the Newton iterate leaves the bracket.
pub fn bracketed_newton<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(NumericsError::NotBracketed { lo, hi, f_lo, f_hi });
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d != 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo.min(hi) && next < lo.max(hi)) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= tol * (1.0 + next.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(NumericsError::NoConvergence(200))
}

/// Embedded Dormand-Prince 5(4) integrator with step-size control for a scalar ODE.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Dopri5 {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 1_000_000,
        }
    }

    /// Integrates `y' = f(x, y)` from `(x0, y0)` and returns `y` at each entry of
    /// `targets`, which must be monotone in the direction of integration.
    /// `admissible` rejects states outside the model's domain.
    pub fn solve<F, A>(&self, f: F, admissible: A, x0: f64, y0: f64, targets: &[f64]) -> Result<Vec<f64>, NumericsError>
    where
        F: Fn(f64, f64) -> f64,
        A: Fn(f64) -> bool,
    {
        let mut out = Vec::with_capacity(targets.len());
        let mut x = x0;
        let mut y = y0;
        let mut h_prev: Option<f64> = None;
        let mut steps = 0usize;
        for &target in targets {
            let span = target - x;
            if span == 0.0 {
                out.push(y);
                continue;
            }
            let dir = span.signum();
            let mut h = h_prev.map(|h: f64| h.abs()).unwrap_or((span.abs() * 1e-3).max(1e-12)) * dir;
            loop {
                let remaining = target - x;
                if remaining == 0.0 {
                    break;
                }
                let last = h.abs() >= remaining.abs();
                let step = if last { remaining } else { h };
                let (y_new, err) = dopri_step(&f, x, y, step);
                let scale = self.atol + self.rtol * y.abs().max(y_new.abs());
                let ratio = err.abs() / scale;
                if ratio <= 1.0 && y_new.is_finite() && admissible(y_new) {
                    x = if last { target } else { x + step };
                    y = y_new;
                    steps += 1;
                    if steps > self.max_steps {
                        return Err(NumericsError::TooManySteps(self.max_steps));
                    }
                    let grow = if ratio == 0.0 {
                        5.0
                    } else {
                        (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if !last {
                        h = step * grow;
                        h_prev = Some(h);
                    }
                } else {
                    let shrink = if ratio.is_finite() && ratio > 1.0 {
                        (0.9 * ratio.powf(-0.25)).clamp(0.1, 0.5)
                    } else {
                        0.25
                    };
                    h = step * shrink;
                    if h.abs() <= 1e-14 * (1.0 + x.abs()) {
                        if !admissible(y_new) || !y_new.is_finite() {
                            return Err(NumericsError::LeftDomain { x });
                        }
                        return Err(NumericsError::StepUnderflow { x, h });
                    }
                }
            }
            out.push(y);
        }
        Ok(out)
    }
}

fn dopri_step<F: Fn(f64, f64) -> f64>(f: &F, x: f64, y: f64, h: f64) -> (f64, f64) {
    let k1 = f(x, y);
    let k2 = f(x + h / 5.0, y + h * (k1 / 5.0));
    let k3 = f(x + 0.3 * h, y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
    let k4 = f(
        x + 0.8 * h,
        y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3),
    );
    let k5 = f(
        x + 8.0 / 9.0 * h,
        y + h * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3 - 212.0 / 729.0 * k4),
    );
    let k6 = f(
        x + h,
        y + h
            * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3 + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5),
    );
    let y5 = y + h
        * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5 + 11.0 / 84.0 * k6);
    let k7 = f(x + h, y5);
    let err = h
        * (71.0 / 57600.0 * k1 - 71.0 / 16695.0 * k3 + 71.0 / 1920.0 * k4 - 17253.0 / 339200.0 * k5
            + 22.0 / 525.0 * k6
            - 1.0 / 40.0 * k7);
    (y5, err)
}
