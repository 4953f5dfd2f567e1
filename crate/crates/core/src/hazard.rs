//! Piecewise-linear hazard paths with exact distribution arithmetic.
//!
//! When an element's flags are pinned along a known forward trajectory (say,
//! both elements working until a committed failure fires), its residual
//! sojourn time has hazard `h(s) = phi(state at forward time s)`. For the
//! config families (per-mode constants, clamped-affine in a clock, tables)
//! that hazard is exactly piecewise linear in `s`, so the cumulative hazard
//! is piecewise quadratic and the cdf, density and inverse-cdf sampler all
//! have closed forms. The coupling construction leans on this for residual
//! draws; quadrature is reserved for the generic intensity API.

use crate::intensity::{FullState, IntensityFn, RateBand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HazardError {
    #[error("hazard segments must be contiguous and increasing")]
    BadSegments,
    #[error("hazard values must be nonnegative and finite")]
    BadValues,
    #[error("tail rate must be strictly positive, got {0}")]
    BadTail(f64),
    #[error("path legs must start at 0, be contiguous, and end with an open leg")]
    BadLegs,
}

/// One linear hazard piece over `[t0, t1]`.
#[derive(Debug, Clone, Copy)]
struct Seg {
    t0: f64,
    t1: f64,
    v0: f64,
    v1: f64,
    /// Cumulative hazard at `t0`.
    cum0: f64,
}

impl Seg {
    fn slope(&self) -> f64 {
        (self.v1 - self.v0) / (self.t1 - self.t0)
    }

    fn value(&self, t: f64) -> f64 {
        self.v0 + (t - self.t0) * self.slope()
    }

    fn cum(&self, t: f64) -> f64 {
        let d = t - self.t0;
        self.cum0 + self.v0 * d + 0.5 * self.slope() * d * d
    }
}

/// A hazard that is piecewise linear on finitely many segments and constant
/// beyond the last knot. The constant tail must be positive, so the law is
/// proper.
#[derive(Debug, Clone)]
pub struct HazardPath {
    segs: Vec<Seg>,
    tail_start: f64,
    tail_rate: f64,
    tail_cum: f64,
}

impl HazardPath {
    /// Builds a path from `(knot, value-at-knot)` pairs, linear between
    /// consecutive knots, then constant `tail_rate`. An empty knot list gives
    /// the plain exponential law with rate `tail_rate`.
    pub fn from_knots(knots: &[(f64, f64)], tail_rate: f64) -> Result<Self, HazardError> {
        if !(tail_rate > 0.0 && tail_rate.is_finite()) {
            return Err(HazardError::BadTail(tail_rate));
        }
        let mut segs = Vec::new();
        let mut cum = 0.0;
        if let Some(&(first, _)) = knots.first() {
            if first != 0.0 {
                return Err(HazardError::BadSegments);
            }
        }
        for w in knots.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if !t1.is_finite() || t1 <= t0 {
                return Err(HazardError::BadSegments);
            }
            if !(v0 >= 0.0 && v1 >= 0.0 && v0.is_finite() && v1.is_finite()) {
                return Err(HazardError::BadValues);
            }
            let seg = Seg {
                t0,
                t1,
                v0,
                v1,
                cum0: cum,
            };
            cum = seg.cum(t1);
            segs.push(seg);
        }
        let tail_start = knots.last().map_or(0.0, |k| k.0);
        Ok(Self {
            segs,
            tail_start,
            tail_rate,
            tail_cum: cum,
        })
    }

    /// The exponential law with the given rate.
    pub fn exponential(rate: f64) -> Result<Self, HazardError> {
        Self::from_knots(&[], rate)
    }

    /// Hazard value at `t >= 0`.
    pub fn hazard(&self, t: f64) -> f64 {
        for seg in &self.segs {
            if t <= seg.t1 {
                return seg.value(t);
            }
        }
        self.tail_rate
    }

    /// Cumulative hazard `H(t)`.
    pub fn cum(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        for seg in &self.segs {
            if t <= seg.t1 {
                return seg.cum(t);
            }
        }
        self.tail_cum + (t - self.tail_start) * self.tail_rate
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cum(t)).exp()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        -(-self.cum(t)).exp_m1()
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self.hazard(t) * self.survival(t)
        }
    }

    /// `ln` of the density; stable deep in the tail.
    pub fn log_density(&self, t: f64) -> f64 {
        if t < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.hazard(t).ln() - self.cum(t)
        }
    }

    /// Inverse-cdf sample for a uniform `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&u));
        let target = -(-u).ln_1p(); // -ln(1 - u)
        for seg in &self.segs {
            let cum1 = seg.cum(seg.t1);
            if cum1 >= target {
                let c = target - seg.cum0;
                if c <= 0.0 {
                    return seg.t0;
                }
                let m = seg.slope();
                let disc = (seg.v0 * seg.v0 + 2.0 * m * c).max(0.0);
                let denom = seg.v0 + disc.sqrt();
                if denom <= 0.0 {
                    // No mass in this segment after all; move on.
                    continue;
                }
                let d = if m.abs() < 1e-300 {
                    c / seg.v0
                } else {
                    2.0 * c / denom
                };
                return seg.t0 + d.min(seg.t1 - seg.t0);
            }
        }
        self.tail_start + (target - self.tail_cum) / self.tail_rate
    }

    /// Knot locations, for splitting quadrature at the kinks.
    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.segs.iter().map(|s| s.t0).collect();
        k.push(self.tail_start);
        k
    }

    /// True when the two paths describe the same hazard (so the same law)
    /// up to floating-point noise.
    pub fn same_law(&self, other: &HazardPath) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.segs.len() == other.segs.len()
            && close(self.tail_start, other.tail_start)
            && close(self.tail_rate, other.tail_rate)
            && self.segs.iter().zip(other.segs.iter()).all(|(a, b)| {
                close(a.t0, b.t0) && close(a.t1, b.t1) && close(a.v0, b.v0) && close(a.v1, b.v1)
            })
    }

    /// Builds the hazard path of one intensity channel along a deterministic
    /// forward state trajectory.
    pub fn from_channel(
        f: &IntensityFn,
        band: RateBand,
        legs: &[PathLeg],
    ) -> Result<Self, HazardError> {
        if legs.is_empty()
            || legs[0].start != 0.0
            || legs.windows(2).any(|w| w[0].end != w[1].start)
            || !legs.last().unwrap().end.is_infinite()
        {
            return Err(HazardError::BadLegs);
        }
        let mut knots: Vec<(f64, f64)> = Vec::new();
        let mut tail_rate = band.lo;
        for leg in legs {
            // Probe horizon past which the family is constant on this leg.
            let settle = leg.start + family_settle_span(f, band, leg);
            let end = if leg.end.is_finite() {
                leg.end
            } else {
                settle.max(leg.start)
            };
            let mut cuts = family_knots_on_leg(f, leg, end);
            cuts.push(leg.start);
            cuts.push(end);
            cuts.retain(|t| *t >= leg.start && *t <= end);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * (1.0 + b.abs()));

            let piecewise_constant =
                matches!(f, IntensityFn::PerMode(_) | IntensityFn::Table { .. });
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b <= a {
                    continue;
                }
                let (va, vb) = if piecewise_constant {
                    let v = f.eval(&leg.state_at(0.5 * (a + b)));
                    (v, v)
                } else {
                    (f.eval(&leg.state_at(a)), f.eval(&leg.state_at(b)))
                };
                push_knot(&mut knots, a, va);
                push_knot(&mut knots, b, vb);
            }
            if leg.end.is_infinite() {
                tail_rate = f.eval(&leg.state_at(end + 1.0));
            }
        }
        Self::from_knots(&knots, tail_rate)
    }
}

fn push_knot(knots: &mut Vec<(f64, f64)>, t: f64, v: f64) {
    if let Some(&(last_t, last_v)) = knots.last() {
        if (last_t - t).abs() < 1e-13 * (1.0 + t.abs()) && (last_v - v).abs() < 1e-13 {
            return;
        }
        // A genuine jump at the same knot: nudge so segments stay increasing.
        if t <= last_t {
            knots.push((last_t + 1e-12 * (1.0 + last_t.abs()), v));
            return;
        }
    }
    knots.push((t, v));
}

/// One leg of a forward state trajectory: over forward times
/// `[start, end)` the flags are fixed and both clocks advance at unit rate
/// from their offsets at `start`.
#[derive(Debug, Clone, Copy)]
pub struct PathLeg {
    pub start: f64,
    /// Exclusive end; `f64::INFINITY` for the last leg.
    pub end: f64,
    pub main_down: bool,
    pub standby_down: bool,
    pub main_elapsed_at_start: f64,
    pub standby_elapsed_at_start: f64,
}

impl PathLeg {
    /// State at absolute forward time `t` within this leg.
    pub fn state_at(&self, t: f64) -> FullState {
        let d = t - self.start;
        FullState::new(
            self.main_down,
            self.main_elapsed_at_start + d,
            self.standby_down,
            self.standby_elapsed_at_start + d,
        )
    }
}

/// Span after which the family's value no longer changes along the leg.
fn family_settle_span(f: &IntensityFn, band: RateBand, leg: &PathLeg) -> f64 {
    match f {
        IntensityFn::PerMode(_) => 0.0,
        IntensityFn::Affine {
            intercept,
            slope,
            arg,
            band,
        } => {
            if *slope == 0.0 {
                return 0.0;
            }
            // Time until the clamp saturates at whichever edge the slope
            // drives toward.
            let x0 = arg_offset(arg, leg);
            let target = if *slope > 0.0 { band.hi } else { band.lo };
            (((target - intercept) / slope) - x0).max(0.0)
        }
        IntensityFn::Table { bin_width, values } => {
            let nx = values[0].len() as f64;
            let ny = values[0][0].len() as f64;
            let span_x = (bin_width * nx - leg.main_elapsed_at_start).max(0.0);
            let span_y = (bin_width * ny - leg.standby_elapsed_at_start).max(0.0);
            span_x.max(span_y)
        }
        // Custom functions are probed over a horizon long enough that, with
        // the declared lower bound, the ignored tail mass is negligible.
        IntensityFn::Custom(_) => 60.0 / band.lo,
    }
}

fn arg_offset(arg: &crate::intensity::ClockArg, leg: &PathLeg) -> f64 {
    match arg {
        crate::intensity::ClockArg::MainElapsed => leg.main_elapsed_at_start,
        crate::intensity::ClockArg::StandbyElapsed => leg.standby_elapsed_at_start,
    }
}

/// Interior knots of the family along the leg, clipped to `[start, end]`.
fn family_knots_on_leg(f: &IntensityFn, leg: &PathLeg, end: f64) -> Vec<f64> {
    let mut cuts = Vec::new();
    match f {
        IntensityFn::PerMode(_) => {}
        IntensityFn::Affine {
            intercept,
            slope,
            arg,
            band,
        } => {
            if *slope != 0.0 {
                let x0 = arg_offset(arg, leg);
                for edge in [band.lo, band.hi] {
                    let t = leg.start + ((edge - intercept) / slope - x0);
                    if t > leg.start && t < end {
                        cuts.push(t);
                    }
                }
            }
        }
        IntensityFn::Table { bin_width, values } => {
            let nx = values[0].len();
            let ny = values[0][0].len();
            for (offset, bins) in [
                (leg.main_elapsed_at_start, nx),
                (leg.standby_elapsed_at_start, ny),
            ] {
                for k in 1..bins {
                    let t = leg.start + (bin_width * k as f64 - offset);
                    if t > leg.start && t < end {
                        cuts.push(t);
                    }
                }
            }
        }
        IntensityFn::Custom(_) => {
            let n = 1024;
            let h = (end - leg.start) / n as f64;
            if h > 0.0 {
                for k in 1..n {
                    cuts.push(leg.start + h * k as f64);
                }
            }
        }
    }
    cuts
}
