//! Certified exponential convergence-rate bounds.
//!
//! From the declared intensity bands and a window length `epsilon`, this
//! module assembles a certificate `(alpha, K)` with
//!
//! ```text
//! || P_t - P ||_TV <= K * exp(-alpha t)    for all t >= 0,
//! ```
//!
//! following the constructive coupling argument:
//!
//! * `pi1` bounds from below the probability that the primary process
//!   reaches the fresh all-working set inside a repair-epoch window,
//! * `pi2` bounds the same for the secondary process (which may have to
//!   cycle both elements first, hence the five factors; the loaded-failure
//!   factor is conservatively taken at the standby's global lower bound),
//! * `kappa_residual` bounds the coincidence probability of the residual
//!   draws (`band.lo / band.hi` per matched pair, multiplied, for the
//!   pairwise strategy; `min lo / max hi` across failure channels for the
//!   four-way strategy),
//! * `kappa_tilde = pi1 * pi2 * kappa_residual` is the per-cycle success
//!   probability, so the number of cycles until success is dominated by a
//!   geometric law with `P(nu > n) <= (1 - kappa_tilde)^n`.
//!
//! Cycle lengths are dominated by `Exp(lambda1_lo) + Exp(mu1_lo)` and the
//! final merge by `Exp(r_min)` with `r_min` the smallest of the four lower
//! bounds. With `m(alpha)` the per-cycle moment generating function and
//! `h(alpha)` the merge term's, the geometric sum converges whenever
//! `(1 - kappa_tilde) m(alpha) < 1`, giving
//!
//! ```text
//! E exp(alpha tau) <= h(alpha) * kappa_tilde * m(alpha)
//!                         / (1 - (1 - kappa_tilde) m(alpha)).
//! ```
//!
//! `certify` finds the largest feasible `alpha` by bisection with a safety
//! margin and adds 1 to the prefactor so the bound also holds trivially at
//! `t = 0`. The estimates are deliberately conservative; `optimize_epsilon`
//! greedily improves them over a window-length grid.

use crate::coupling::CouplingStrategy;
use crate::exact_markov::{self, ExactError, ExpParams, MarkovDist};
use crate::intensity::IntensityBounds;
use thiserror::Error;

/// Safety margin in the bisection predicate `(1-k) m(alpha) <= 1 - DELTA`.
const DELTA: f64 = 1e-3;
/// Relative gap kept between `alpha` and the divergence point `r_min`.
const CAP_MARGIN: f64 = 1e-3;
const BISECTION_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("epsilon grid must be nonempty with positive entries")]
    InvalidGrid,
    #[error(transparent)]
    Exact(#[from] ExactError),
}

/// A convergence-rate certificate.
#[derive(Debug, Clone, Copy)]
pub struct BoundResult {
    pub epsilon: f64,
    /// Window-hit lower bound for the primary process.
    pub pi1: f64,
    /// Window-hit lower bound for the secondary process.
    pub pi2: f64,
    /// Residual-coincidence lower bound (per strategy).
    pub kappa_residual: f64,
    /// Per-cycle coupling success lower bound.
    pub kappa_tilde: f64,
    /// Certified exponential rate.
    pub alpha: f64,
    /// Certified prefactor, at least 1.
    pub prefactor: f64,
    /// False when no certificate exists at this `epsilon`.
    pub valid: bool,
    pub strategy: CouplingStrategy,
}

impl BoundResult {
    /// The certified envelope `K * exp(-alpha t)`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.prefactor * (-self.alpha * t).exp()
    }

    fn invalid(epsilon: f64, strategy: CouplingStrategy, bounds: &IntensityBounds) -> Self {
        let pi1 = pi1(epsilon, bounds);
        let pi2 = pi2(epsilon, bounds);
        let kappa_residual = kappa_residual(bounds, strategy);
        BoundResult {
            epsilon,
            pi1,
            pi2,
            kappa_residual,
            kappa_tilde: pi1 * pi2 * kappa_residual,
            alpha: 0.0,
            prefactor: f64::INFINITY,
            valid: false,
            strategy,
        }
    }
}

fn half_window_factor(eps: f64, rate: f64) -> f64 {
    -(-0.5 * eps * rate).exp_m1()
}

/// Probability lower bound that the primary process enters the fresh
/// all-working set within a repair-epoch window of length `eps`: the standby
/// element fails and repairs within half-windows at its lower rates.
pub fn pi1(eps: f64, bounds: &IntensityBounds) -> f64 {
    half_window_factor(eps, bounds.standby_fail.lo)
        * half_window_factor(eps, bounds.standby_repair.lo)
}

/// Probability lower bound that the secondary process enters the fresh
/// all-working set within the window: both elements may have to fail and
/// repair. Five half-window factors at the lower rates; the loaded standby
/// failure has no separate band in the general model, so its factor reuses
/// the standby failure lower bound.
pub fn pi2(eps: f64, bounds: &IntensityBounds) -> f64 {
    half_window_factor(eps, bounds.main_fail.lo)
        * half_window_factor(eps, bounds.main_repair.lo)
        * half_window_factor(eps, bounds.standby_fail.lo)
        * half_window_factor(eps, bounds.standby_fail.lo)
        * half_window_factor(eps, bounds.standby_repair.lo)
}

/// Lower bound on the probability that the residual draws coincide at an
/// attempt. A pair of laws whose hazards live in one band `[lo, hi]` has
/// common part at least `lo / hi`.
pub fn kappa_residual(bounds: &IntensityBounds, strategy: CouplingStrategy) -> f64 {
    match strategy {
        CouplingStrategy::Pairwise => {
            (bounds.main_fail.lo / bounds.main_fail.hi)
                * (bounds.standby_fail.lo / bounds.standby_fail.hi)
        }
        CouplingStrategy::FourWay => {
            bounds.main_fail.lo.min(bounds.standby_fail.lo)
                / bounds.main_fail.hi.max(bounds.standby_fail.hi)
        }
    }
}

/// Per-cycle coupling success lower bound `pi1 * pi2 * kappa_residual`.
pub fn kappa_tilde(eps: f64, bounds: &IntensityBounds, strategy: CouplingStrategy) -> f64 {
    pi1(eps, bounds) * pi2(eps, bounds) * kappa_residual(bounds, strategy)
}

/// Moment generating function of one dominating cycle
/// `Exp(lambda1_lo) + Exp(mu1_lo)` at `alpha`.
fn cycle_mgf(alpha: f64, bounds: &IntensityBounds) -> f64 {
    let l = bounds.main_fail.lo;
    let m = bounds.main_repair.lo;
    (l / (l - alpha)) * (m / (m - alpha))
}

/// Builds the certificate at a fixed window length.
pub fn certify(
    bounds: &IntensityBounds,
    eps: f64,
    strategy: CouplingStrategy,
) -> Result<BoundResult, BoundsError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(BoundsError::InvalidEpsilon(eps));
    }
    let kt = kappa_tilde(eps, bounds, strategy);
    // Feasibility at alpha -> 0 needs (1 - kt) <= 1 - DELTA.
    if kt.is_nan() || kt <= DELTA {
        return Ok(BoundResult::invalid(eps, strategy, bounds));
    }
    let r_min = bounds.min_lower();
    let alpha_cap = r_min * (1.0 - CAP_MARGIN);
    let feasible = |alpha: f64| (1.0 - kt) * cycle_mgf(alpha, bounds) <= 1.0 - DELTA;

    let alpha = if feasible(alpha_cap) {
        alpha_cap
    } else {
        // (1-kt) m(alpha) is increasing in alpha, so bisect the boundary.
        let mut lo = 0.0f64;
        let mut hi = alpha_cap;
        for _ in 0..BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if alpha <= 0.0 {
        return Ok(BoundResult::invalid(eps, strategy, bounds));
    }
    let m = cycle_mgf(alpha, bounds);
    let h = r_min / (r_min - alpha);
    let geometric_sum = kt * m / (1.0 - (1.0 - kt) * m);
    let prefactor = h * geometric_sum + 1.0;
    Ok(BoundResult {
        epsilon: eps,
        pi1: pi1(eps, bounds),
        pi2: pi2(eps, bounds),
        kappa_residual: kappa_residual(bounds, strategy),
        kappa_tilde: kt,
        alpha,
        prefactor,
        valid: true,
        strategy,
    })
}

/// Default window-length grid: 64 log-spaced points spanning
/// `[1e-3, 10] / min lower bound`.
pub fn default_epsilon_grid(bounds: &IntensityBounds) -> Vec<f64> {
    let r = bounds.min_lower();
    let lo = 1e-3 / r;
    let hi = 10.0 / r;
    let n = 64usize;
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Evaluates [`certify`] over the grid and returns the result with the
/// largest rate; ties go to the smaller prefactor.
pub fn optimize_epsilon(
    bounds: &IntensityBounds,
    strategy: CouplingStrategy,
    grid: &[f64],
) -> Result<BoundResult, BoundsError> {
    if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(BoundsError::InvalidGrid);
    }
    let mut best: Option<BoundResult> = None;
    for &eps in grid {
        let cand = certify(bounds, eps, strategy)?;
        best = Some(match best {
            None => cand,
            Some(cur) => {
                let better = (cand.valid && !cur.valid)
                    || (cand.valid == cur.valid
                        && (cand.alpha > cur.alpha
                            || (cand.alpha == cur.alpha && cand.prefactor < cur.prefactor)));
                if better {
                    cand
                } else {
                    cur
                }
            }
        });
    }
    Ok(best.unwrap())
}

/// One empirical curve point to be dominated by the certificate.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
    /// Standard error; zero for exact curves.
    pub se: f64,
}

/// One domination check line of a certificate report.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub label: String,
    pub t: f64,
    /// Observed value plus three standard errors.
    pub observed: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Outcome of certificate cross-validation.
#[derive(Debug, Clone, Default)]
pub struct CertificateReport {
    pub lines: Vec<CheckLine>,
}

impl CertificateReport {
    pub fn all_ok(&self) -> bool {
        self.lines.iter().all(|l| l.ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckLine> {
        self.lines.iter().filter(|l| !l.ok)
    }

    fn push_curve(&mut self, label: &str, result: &BoundResult, curve: &[CurvePoint]) {
        for p in curve {
            let observed = p.value + 3.0 * p.se;
            let bound = result.envelope(p.t);
            self.lines.push(CheckLine {
                label: label.to_string(),
                t: p.t,
                observed,
                bound,
                ok: observed <= bound,
            });
        }
    }
}

/// Asserts that the empirical total-variation estimates and the empirical
/// coupling-time tail stay below the certified envelope at every grid point
/// (up to three standard errors).
pub fn tv_certificate_check(
    result: &BoundResult,
    tv_curve: &[CurvePoint],
    tail_curve: &[CurvePoint],
) -> CertificateReport {
    let mut report = CertificateReport::default();
    report.push_curve("tv_lower_bound", result, tv_curve);
    report.push_curve("coupling_tail", result, tail_curve);
    report
}

/// Constant-rate cross-check: the exact availability deviation
/// `|A(t) - A(inf)|` from the forward equations must sit below the envelope,
/// and the certified rate must not beat the exact spectral gap.
pub fn availability_deviation_check(
    result: &BoundResult,
    params: &ExpParams,
    p0: &MarkovDist,
    t_grid: &[f64],
) -> Result<CertificateReport, BoundsError> {
    let stationary = exact_markov::stationary(params)?.availability();
    let mut report = CertificateReport::default();
    let positive: Vec<f64> = t_grid.iter().copied().filter(|t| *t > 0.0).collect();
    let sols = exact_markov::solve_kolmogorov(params, p0, &positive)?;
    let mut iter = sols.iter();
    for &t in t_grid {
        let availability = if t == 0.0 {
            p0.availability()
        } else {
            iter.next().expect("grid alignment").availability()
        };
        let observed = (availability - stationary).abs();
        let bound = result.envelope(t);
        report.lines.push(CheckLine {
            label: "availability_deviation".into(),
            t,
            observed,
            bound,
            ok: observed <= bound,
        });
    }
    let gap = exact_markov::spectrum(params)?.decay_rate();
    report.lines.push(CheckLine {
        label: "alpha_vs_spectral_gap".into(),
        t: 0.0,
        observed: result.alpha,
        bound: gap,
        ok: result.alpha <= gap,
    });
    Ok(report)
}
