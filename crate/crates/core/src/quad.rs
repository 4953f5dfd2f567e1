//! Adaptive Simpson quadrature used by the intensity calculus and the
//! common-part computations.

use thiserror::Error;

/// Absolute tolerance used by the callers in this crate.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;

/// Cap on interval subdivisions before the integrator gives up.
pub const MAX_SUBDIVISIONS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("integration bounds must be finite with a <= b, got [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("adaptive quadrature did not converge within {max} subdivisions")]
    NoConvergence { max: u64 },
    #[error("integrand returned a non-finite value at {x}")]
    NonFiniteIntegrand { x: f64 },
    #[error("tail integration on [0, inf) did not stabilize by t = {t}")]
    TailNotStabilized { t: f64 },
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

struct Adaptive<'f> {
    f: &'f dyn Fn(f64) -> f64,
    budget: u64,
}

impl Adaptive<'_> {
    fn eval(&self, x: f64) -> Result<f64, QuadError> {
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFiniteIntegrand { x })
        }
    }

    // Classic recursive adaptive Simpson with Richardson correction.
    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
    ) -> Result<f64, QuadError> {
        if self.budget == 0 {
            return Err(QuadError::NoConvergence {
                max: MAX_SUBDIVISIONS,
            });
        }
        self.budget -= 1;
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        // The interval can shrink below representable midpoints before the
        // estimate stabilizes only for pathological integrands.
        if delta.abs() <= 15.0 * tol || (b - a) < 1e-15 * (1.0 + a.abs()) {
            return Ok(left + right + delta / 15.0);
        }
        let l = self.refine(a, m, fa, flm, fm, left, tol * 0.5)?;
        let r = self.refine(m, b, fm, frm, fb, right, tol * 0.5)?;
        Ok(l + r)
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, QuadError> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(QuadError::InvalidInterval { a, b });
    }
    if a == b {
        return Ok(0.0);
    }
    let mut ad = Adaptive {
        f,
        budget: MAX_SUBDIVISIONS,
    };
    let m = 0.5 * (a + b);
    let fa = ad.eval(a)?;
    let fm = ad.eval(m)?;
    let fb = ad.eval(b)?;
    let whole = simpson(fa, fm, fb, b - a);
    ad.refine(a, b, fa, fm, fb, whole, tol)
}

/// Integrates `f` over `[a, b]` splitting at the given interior breakpoints
/// (useful when the integrand has kinks at known locations).
pub fn integrate_with_breakpoints(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: f64,
) -> Result<f64, QuadError> {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| *x > a && *x < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    let n = cuts.len() + 1;
    for cut in cuts.into_iter().chain(std::iter::once(b)) {
        total += integrate(f, lo, cut, tol / n as f64)?;
        lo = cut;
    }
    Ok(total)
}

/// Integrates `f` over `[0, inf)` by doubling panels until the contribution
/// of two consecutive panels falls below the tolerance.
pub fn integrate_to_infinity(f: &dyn Fn(f64) -> f64, tol: f64) -> Result<f64, QuadError> {
    integrate_to_infinity_with_breakpoints(f, &[], tol)
}

/// [`integrate_to_infinity`] with known kink locations.
pub fn integrate_to_infinity_with_breakpoints(
    f: &dyn Fn(f64) -> f64,
    breakpoints: &[f64],
    tol: f64,
) -> Result<f64, QuadError> {
    let mut total = integrate_with_breakpoints(f, 0.0, 1.0, breakpoints, tol / 4.0)?;
    let mut lo = 1.0f64;
    let mut quiet_panels = 0;
    // 2^60 time units is far beyond any rate scale this crate works at.
    for _ in 0..60 {
        let hi = lo * 2.0;
        let panel = integrate_with_breakpoints(f, lo, hi, breakpoints, tol / 4.0)?;
        total += panel;
        if panel.abs() < tol / 4.0 {
            quiet_panels += 1;
            if quiet_panels >= 2 {
                return Ok(total);
            }
        } else {
            quiet_panels = 0;
        }
        lo = hi;
    }
    Err(QuadError::TailNotStabilized { t: lo })
}
