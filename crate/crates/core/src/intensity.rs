//! Intensity (hazard-rate) calculus for the semi-Markov model.
//!
//! The full state of the system is `((i, x), (j, y))`: working/down flags for
//! the main and standby elements plus the time elapsed since each flag last
//! changed. Keeping the elapsed times in the state makes the dynamics Markov
//! even when sojourn distributions are not exponential.
//!
//! Four state-dependent intensity functions drive the process: the failure
//! and repair intensities of the main element and of the standby element.
//! Every intensity must be bounded away from zero and infinity by a declared
//! band; those bands are what the simulator thins against and what the
//! convergence-rate certificates are computed from.
//!
//! A distribution is recovered from its completion intensity `phi` by
//!
//! ```text
//! F(s) = 1 - exp(-Int_0^s phi(u) du),   F'(s) = phi(s) * exp(-Int_0^s phi(u) du),
//! ```
//!
//! which is implemented here with adaptive quadrature, together with the
//! stochastic-ordering consequences of a band `c < phi < C`: the Exp(C) law
//! is stochastically smallest, Exp(c) largest, and the mean is at most `1/c`.

use crate::quad;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Quadrature tolerance for the distribution reconstructions.
const CDF_ABS_TOL: f64 = 1e-10;
/// Slack for the stochastic-ordering comparisons, above quadrature noise.
const ORDER_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IntensityError {
    #[error("rate band must satisfy 0 < lo <= hi < inf, got [{lo}, {hi}]")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("declared band [{dec_lo}, {dec_hi}] for {channel} does not contain the family range [{got_lo}, {got_hi}]")]
    BandMismatch {
        channel: Channel,
        dec_lo: f64,
        dec_hi: f64,
        got_lo: f64,
        got_hi: f64,
    },
    #[error("custom intensity functions need explicitly declared bounds")]
    CustomNeedsBounds,
    #[error("invalid intensity parameter: {0}")]
    InvalidParameter(String),
    #[error("intensity must be nonnegative; integral over [0, {s}] is {value}")]
    NegativeIntensity { s: f64, value: f64 },
    #[error("stochastic-order band must satisfy 0 < c < C, got c = {c}, C = {cap}")]
    InvalidOrderBand { c: f64, cap: f64 },
    #[error(transparent)]
    Quadrature(#[from] quad::QuadError),
}

/// Full state `((i, x), (j, y))`; flags are `true` when the element is down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullState {
    pub main_down: bool,
    /// Time since the main element's flag last changed.
    pub main_elapsed: f64,
    pub standby_down: bool,
    /// Time since the standby element's flag last changed.
    pub standby_elapsed: f64,
}

impl FullState {
    /// Both elements working with freshly reset clocks.
    pub fn fresh_working() -> Self {
        Self {
            main_down: false,
            main_elapsed: 0.0,
            standby_down: false,
            standby_elapsed: 0.0,
        }
    }

    pub fn new(
        main_down: bool,
        main_elapsed: f64,
        standby_down: bool,
        standby_elapsed: f64,
    ) -> Self {
        Self {
            main_down,
            main_elapsed,
            standby_down,
            standby_elapsed,
        }
    }

    /// Index of the flag pair in the fixed state order
    /// `(0,0), (1,0), (0,1), (1,1)`.
    pub fn flag_index(&self) -> usize {
        self.main_down as usize + 2 * (self.standby_down as usize)
    }

    /// Both elements working and both clocks younger than `eps`.
    pub fn in_fresh_working_set(&self, eps: f64) -> bool {
        !self.main_down
            && !self.standby_down
            && self.main_elapsed < eps
            && self.standby_elapsed < eps
    }

    pub fn validate(&self) -> Result<(), IntensityError> {
        if !(self.main_elapsed >= 0.0 && self.main_elapsed.is_finite())
            || !(self.standby_elapsed >= 0.0 && self.standby_elapsed.is_finite())
        {
            return Err(IntensityError::InvalidParameter(format!(
                "elapsed times must be nonnegative and finite, got ({}, {})",
                self.main_elapsed, self.standby_elapsed
            )));
        }
        Ok(())
    }
}

/// The four intensity channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    MainFail,
    MainRepair,
    StandbyFail,
    StandbyRepair,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::MainFail,
        Channel::MainRepair,
        Channel::StandbyFail,
        Channel::StandbyRepair,
    ];
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Channel::MainFail => "main_fail",
            Channel::MainRepair => "main_repair",
            Channel::StandbyFail => "standby_fail",
            Channel::StandbyRepair => "standby_repair",
        };
        write!(f, "{name}")
    }
}

/// A positive rate band `0 < lo <= hi < inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBand {
    pub lo: f64,
    pub hi: f64,
}

impl RateBand {
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntensityError> {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(IntensityError::InvalidBand { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        // Tiny relative slack so clamped arithmetic at the band edge passes.
        let slack = 1e-12 * self.hi.max(1.0);
        v >= self.lo - slack && v <= self.hi + slack
    }

    fn covers(&self, other: &RateBand) -> bool {
        self.lo <= other.lo && self.hi >= other.hi
    }
}

/// Declared bands for the four intensity channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityBounds {
    pub main_fail: RateBand,
    pub main_repair: RateBand,
    pub standby_fail: RateBand,
    pub standby_repair: RateBand,
}

impl IntensityBounds {
    pub fn band(&self, channel: Channel) -> RateBand {
        match channel {
            Channel::MainFail => self.main_fail,
            Channel::MainRepair => self.main_repair,
            Channel::StandbyFail => self.standby_fail,
            Channel::StandbyRepair => self.standby_repair,
        }
    }

    /// Sum of the four upper bounds; the dominating rate for thinning.
    pub fn dominating_rate(&self) -> f64 {
        self.main_fail.hi + self.main_repair.hi + self.standby_fail.hi + self.standby_repair.hi
    }

    /// Smallest of the four lower bounds.
    pub fn min_lower(&self) -> f64 {
        self.main_fail
            .lo
            .min(self.main_repair.lo)
            .min(self.standby_fail.lo)
            .min(self.standby_repair.lo)
    }
}

/// Which elapsed clock feeds a time-dependent intensity family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockArg {
    MainElapsed,
    StandbyElapsed,
}

impl ClockArg {
    pub fn read(&self, state: &FullState) -> f64 {
        match self {
            ClockArg::MainElapsed => state.main_elapsed,
            ClockArg::StandbyElapsed => state.standby_elapsed,
        }
    }
}

type CustomFn = Arc<dyn Fn(&FullState) -> f64 + Send + Sync>;

/// One intensity function, a member of a declared parametric family.
///
/// The config-file families are bounded by construction; `Custom` closures
/// are only reachable through the library API and require explicit bounds.
#[derive(Clone)]
pub enum IntensityFn {
    /// One rate per flag pair, indexed like the fixed state order.
    PerMode([f64; 4]),
    /// `clamp(intercept + slope * clock, band.lo, band.hi)`.
    Affine {
        intercept: f64,
        slope: f64,
        arg: ClockArg,
        band: RateBand,
    },
    /// Lookup over (flags, binned main clock, binned standby clock); clocks
    /// at or above `bin_width * n_bins` land in the last bin.
    Table {
        bin_width: f64,
        /// `values[flag_index][main_bin][standby_bin]`.
        values: Vec<Vec<Vec<f64>>>,
    },
    /// Arbitrary pure function of the full state.
    Custom(CustomFn),
}

impl fmt::Debug for IntensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensityFn::PerMode(v) => f.debug_tuple("PerMode").field(v).finish(),
            IntensityFn::Affine {
                intercept,
                slope,
                arg,
                band,
            } => f
                .debug_struct("Affine")
                .field("intercept", intercept)
                .field("slope", slope)
                .field("arg", arg)
                .field("band", band)
                .finish(),
            IntensityFn::Table { bin_width, values } => f
                .debug_struct("Table")
                .field("bin_width", bin_width)
                .field("bins", &(values[0].len(), values[0][0].len()))
                .finish(),
            IntensityFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl IntensityFn {
    /// Constant rate in every mode.
    pub fn constant(rate: f64) -> Self {
        IntensityFn::PerMode([rate; 4])
    }

    pub fn eval(&self, state: &FullState) -> f64 {
        match self {
            IntensityFn::PerMode(v) => v[state.flag_index()],
            IntensityFn::Affine {
                intercept,
                slope,
                arg,
                band,
            } => (intercept + slope * arg.read(state)).clamp(band.lo, band.hi),
            IntensityFn::Table { bin_width, values } => {
                let table = &values[state.flag_index()];
                let nx = table.len();
                let ny = table[0].len();
                let ix = ((state.main_elapsed / bin_width) as usize).min(nx - 1);
                let iy = ((state.standby_elapsed / bin_width) as usize).min(ny - 1);
                table[ix][iy]
            }
            IntensityFn::Custom(f) => f(state),
        }
    }

    /// The exact value range of the family, when it is known by construction.
    pub fn value_band(&self) -> Option<RateBand> {
        match self {
            IntensityFn::PerMode(v) => {
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                RateBand::new(lo, hi).ok()
            }
            IntensityFn::Affine { band, .. } => Some(*band),
            IntensityFn::Table { values, .. } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for mode in values {
                    for row in mode {
                        for v in row {
                            lo = lo.min(*v);
                            hi = hi.max(*v);
                        }
                    }
                }
                RateBand::new(lo, hi).ok()
            }
            IntensityFn::Custom(_) => None,
        }
    }

    fn validate_shape(&self) -> Result<(), IntensityError> {
        match self {
            IntensityFn::PerMode(v) => {
                if v.iter().any(|r| !(r > &0.0 && r.is_finite())) {
                    return Err(IntensityError::InvalidParameter(format!(
                        "per-mode rates must be positive and finite, got {v:?}"
                    )));
                }
            }
            IntensityFn::Affine {
                intercept, slope, ..
            } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return Err(IntensityError::InvalidParameter(
                        "affine coefficients must be finite".into(),
                    ));
                }
            }
            IntensityFn::Table { bin_width, values } => {
                if !(bin_width > &0.0 && bin_width.is_finite()) {
                    return Err(IntensityError::InvalidParameter(format!(
                        "table bin width must be positive, got {bin_width}"
                    )));
                }
                if values.len() != 4 {
                    return Err(IntensityError::InvalidParameter(
                        "table needs one block per flag pair".into(),
                    ));
                }
                let nx = values[0].len();
                let ny = values[0].first().map_or(0, Vec::len);
                if nx == 0 || ny == 0 {
                    return Err(IntensityError::InvalidParameter(
                        "table bins must be nonempty".into(),
                    ));
                }
                for mode in values {
                    if mode.len() != nx || mode.iter().any(|row| row.len() != ny) {
                        return Err(IntensityError::InvalidParameter("ragged table".into()));
                    }
                    for row in mode {
                        if row.iter().any(|v| !(v > &0.0 && v.is_finite())) {
                            return Err(IntensityError::InvalidParameter(
                                "table rates must be positive and finite".into(),
                            ));
                        }
                    }
                }
            }
            IntensityFn::Custom(_) => {}
        }
        Ok(())
    }
}

/// The four state-dependent intensities plus their declared bounds.
///
/// Intensity evaluation must be a pure function of the state: ensemble
/// simulation evaluates the same model concurrently from many threads.
#[derive(Debug, Clone)]
pub struct IntensityModel {
    pub main_fail: IntensityFn,
    pub main_repair: IntensityFn,
    pub standby_fail: IntensityFn,
    pub standby_repair: IntensityFn,
    pub bounds: IntensityBounds,
}

impl IntensityModel {
    /// Builds a model with explicitly declared bounds. For the bounded
    /// families the declared band must cover the family's value range;
    /// custom functions are taken on faith here and checked by
    /// [`validate_bounds`].
    pub fn with_bounds(
        main_fail: IntensityFn,
        main_repair: IntensityFn,
        standby_fail: IntensityFn,
        standby_repair: IntensityFn,
        bounds: IntensityBounds,
    ) -> Result<Self, IntensityError> {
        let model = Self {
            main_fail,
            main_repair,
            standby_fail,
            standby_repair,
            bounds,
        };
        for channel in Channel::ALL {
            let f = model.function(channel);
            f.validate_shape()?;
            if let Some(band) = f.value_band() {
                let declared = bounds.band(channel);
                if !declared.covers(&band) {
                    return Err(IntensityError::BandMismatch {
                        channel,
                        dec_lo: declared.lo,
                        dec_hi: declared.hi,
                        got_lo: band.lo,
                        got_hi: band.hi,
                    });
                }
            }
        }
        Ok(model)
    }

    /// Builds a model deriving each band from the family's value range.
    /// Fails for custom functions, whose range is unknown.
    pub fn with_derived_bounds(
        main_fail: IntensityFn,
        main_repair: IntensityFn,
        standby_fail: IntensityFn,
        standby_repair: IntensityFn,
    ) -> Result<Self, IntensityError> {
        let band_of = |f: &IntensityFn| {
            f.validate_shape()?;
            f.value_band().ok_or(IntensityError::CustomNeedsBounds)
        };
        let bounds = IntensityBounds {
            main_fail: band_of(&main_fail)?,
            main_repair: band_of(&main_repair)?,
            standby_fail: band_of(&standby_fail)?,
            standby_repair: band_of(&standby_repair)?,
        };
        Self::with_bounds(main_fail, main_repair, standby_fail, standby_repair, bounds)
    }

    /// The constant-rate model: failures of the standby switch between the
    /// unloaded and loaded rate with the main element's flag.
    pub fn from_exp_params(
        params: &crate::exact_markov::ExpParams,
    ) -> Result<Self, IntensityError> {
        params
            .validate()
            .map_err(|e| IntensityError::InvalidParameter(e.to_string()))?;
        let l2 = params.lambda_standby;
        let ll = params.lambda_standby_loaded;
        Self::with_derived_bounds(
            IntensityFn::constant(params.lambda_main),
            IntensityFn::constant(params.mu_main),
            // Indexed by flag pair: loaded when the main element is down.
            IntensityFn::PerMode([l2, ll, l2, ll]),
            IntensityFn::constant(params.mu_standby),
        )
    }

    pub fn function(&self, channel: Channel) -> &IntensityFn {
        match channel {
            Channel::MainFail => &self.main_fail,
            Channel::MainRepair => &self.main_repair,
            Channel::StandbyFail => &self.standby_fail,
            Channel::StandbyRepair => &self.standby_repair,
        }
    }

    pub fn eval(&self, channel: Channel, state: &FullState) -> f64 {
        self.function(channel).eval(state)
    }

    /// Intensity of the main element's pending transition (failure while it
    /// works, repair while it is down).
    pub fn active_main(&self, state: &FullState) -> f64 {
        if state.main_down {
            self.eval(Channel::MainRepair, state)
        } else {
            self.eval(Channel::MainFail, state)
        }
    }

    /// Intensity of the standby element's pending transition.
    pub fn active_standby(&self, state: &FullState) -> f64 {
        if state.standby_down {
            self.eval(Channel::StandbyRepair, state)
        } else {
            self.eval(Channel::StandbyFail, state)
        }
    }

    /// Band of the channel that is active for the given element and state.
    pub fn active_band(&self, main: bool, state: &FullState) -> RateBand {
        let channel = match (main, state.main_down, state.standby_down) {
            (true, true, _) => Channel::MainRepair,
            (true, false, _) => Channel::MainFail,
            (false, _, true) => Channel::StandbyRepair,
            (false, _, false) => Channel::StandbyFail,
        };
        self.bounds.band(channel)
    }
}

/// A dominating or dominated exponential comparison law with the stated
/// band-side rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominatedExp {
    pub rate: f64,
    pub side: BandSide,
}

/// Which side of an intensity band an exponential comparison law uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSide {
    /// Built from a lower bound `c`; stochastically largest, mean `1/c`.
    LowerRate,
    /// Built from an upper bound `C`; stochastically smallest.
    UpperRate,
}

impl DominatedExp {
    pub fn new(rate: f64, side: BandSide) -> Result<Self, IntensityError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(IntensityError::InvalidBand { lo: rate, hi: rate });
        }
        Ok(Self { rate, side })
    }

    pub fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            -(-self.rate * s).exp_m1()
        }
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.rate
    }
}

/// `F(s) = 1 - exp(-Int_0^s phi)` by adaptive quadrature.
pub fn cdf_from_intensity(phi: &dyn Fn(f64) -> f64, s: f64) -> Result<f64, IntensityError> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(IntensityError::InvalidParameter(format!(
            "cdf evaluation point must be nonnegative and finite, got {s}"
        )));
    }
    let cum = quad::integrate(phi, 0.0, s, CDF_ABS_TOL)?;
    if cum < -CDF_ABS_TOL {
        return Err(IntensityError::NegativeIntensity { s, value: cum });
    }
    Ok(-(-cum.max(0.0)).exp_m1())
}

/// `F'(s) = phi(s) * exp(-Int_0^s phi)` by adaptive quadrature.
pub fn density_from_intensity(phi: &dyn Fn(f64) -> f64, s: f64) -> Result<f64, IntensityError> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(IntensityError::InvalidParameter(format!(
            "density evaluation point must be nonnegative and finite, got {s}"
        )));
    }
    let cum = quad::integrate(phi, 0.0, s, CDF_ABS_TOL)?;
    if cum < -CDF_ABS_TOL {
        return Err(IntensityError::NegativeIntensity { s, value: cum });
    }
    Ok(phi(s) * (-cum.max(0.0)).exp())
}

/// Mean of the duration with completion intensity `phi`, as the integral of
/// the survival function over `[0, inf)`.
///
/// Computed on a uniform grid (cumulative trapezoid of the intensity, then
/// trapezoid of the survival), with the horizon extended until the survival
/// is negligible and the resolution doubled to convergence.
pub fn mean_from_intensity(phi: &dyn Fn(f64) -> f64) -> Result<f64, IntensityError> {
    let cum_at = |horizon: f64, n: usize| -> f64 {
        let h = horizon / n as f64;
        let mut acc = 0.0;
        let mut prev = phi(0.0);
        for k in 1..=n {
            let next = phi(h * k as f64);
            acc += 0.5 * (prev + next) * h;
            prev = next;
        }
        acc
    };
    let mut horizon = 1.0f64;
    let mut found = false;
    for _ in 0..60 {
        if cum_at(horizon, 2048) > 40.0 {
            found = true;
            break;
        }
        horizon *= 2.0;
    }
    if !found {
        return Err(IntensityError::Quadrature(
            quad::QuadError::TailNotStabilized { t: horizon },
        ));
    }

    let mean_at = |n: usize| -> f64 {
        let h = horizon / n as f64;
        let mut mean = 0.0;
        let mut cum = 0.0;
        let mut prev_phi = phi(0.0);
        let mut prev_surv = 1.0f64;
        for k in 1..=n {
            let next_phi = phi(h * k as f64);
            cum += 0.5 * (prev_phi + next_phi) * h;
            let surv = (-cum).exp();
            mean += 0.5 * (prev_surv + surv) * h;
            prev_phi = next_phi;
            prev_surv = surv;
        }
        mean
    };
    let mut n = 4096usize;
    let mut prev = mean_at(n);
    for _ in 0..9 {
        n *= 2;
        let cur = mean_at(n);
        if (cur - prev).abs() < 1e-9 * (1.0 + cur.abs()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// Verifies the two-sided exponential comparison on a grid: with
/// `0 < c < phi < C`, the cdf must lie between `1 - exp(-c s)` and
/// `1 - exp(-C s)` at every grid point.
pub fn stochastic_order_check(
    phi: &dyn Fn(f64) -> f64,
    c: f64,
    cap: f64,
    s_grid: &[f64],
) -> Result<bool, IntensityError> {
    if !(c > 0.0 && c < cap && cap.is_finite()) {
        return Err(IntensityError::InvalidOrderBand { c, cap });
    }
    let upper = DominatedExp::new(cap, BandSide::UpperRate)?;
    let lower = DominatedExp::new(c, BandSide::LowerRate)?;
    for &s in s_grid {
        let f = cdf_from_intensity(phi, s)?;
        if f > upper.cdf(s) + ORDER_SLACK || f < lower.cdf(s) - ORDER_SLACK {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One out-of-band evaluation found by [`validate_bounds`].
#[derive(Debug, Clone, Copy)]
pub struct BoundsViolation {
    pub channel: Channel,
    pub state: FullState,
    pub value: f64,
    pub band: RateBand,
}

/// Outcome of probing a model's intensities against its declared bounds.
#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub probes: usize,
    /// First out-of-band evaluation, if any.
    pub violation: Option<BoundsViolation>,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Probes every intensity on `probe_count` quasi-random states: all four
/// flag pairs crossed with elapsed times log-spaced over
/// `[0, 1000 / min_lower_bound]` with seeded jitter. Violations are report
/// content, not errors.
pub fn validate_bounds(model: &IntensityModel, probe_count: usize, seed: u64) -> BoundsReport {
    let t_max = 1000.0 / model.bounds.min_lower();
    let log_span = (t_max / 1e-6).ln();
    let mut rng_state = seed ^ 0x51ab_de37_9c0f_f00d;
    let mut probes = 0usize;

    for k in 0..probe_count {
        let flags = k % 4;
        let jitter_x = (splitmix64(&mut rng_state) >> 11) as f64 / (1u64 << 53) as f64;
        let jitter_y = (splitmix64(&mut rng_state) >> 11) as f64 / (1u64 << 53) as f64;
        // Every fourth probe pins a clock at exactly zero.
        let x = if k % 8 < 2 {
            0.0
        } else {
            1e-6 * (jitter_x * log_span).exp()
        };
        let y = if k % 16 < 4 {
            0.0
        } else {
            1e-6 * (jitter_y * log_span).exp()
        };
        let state = FullState::new(flags & 1 == 1, x, flags & 2 == 2, y);
        probes += 1;
        for channel in Channel::ALL {
            let value = model.eval(channel, &state);
            let band = model.bounds.band(channel);
            if !value.is_finite() || !band.contains(value) {
                return BoundsReport {
                    probes,
                    violation: Some(BoundsViolation {
                        channel,
                        state,
                        value,
                        band,
                    }),
                };
            }
        }
    }
    BoundsReport {
        probes,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_markov::ExpParams;

    fn reference_model() -> IntensityModel {
        IntensityModel::from_exp_params(&ExpParams::new(1.0, 2.0, 0.3, 0.6, 1.5).unwrap()).unwrap()
    }

    /// Plain composite-trapezoid integral, independent of adaptive Simpson.
    fn trapezoid(phi: &dyn Fn(f64) -> f64, s: f64, n: usize) -> f64 {
        let h = s / n as f64;
        let mut acc = 0.5 * (phi(0.0) + phi(s));
        for k in 1..n {
            acc += phi(h * k as f64);
        }
        acc * h
    }

    #[test]
    fn cdf_of_constant_intensity_is_exponential() {
        let phi = |_: f64| 0.7;
        for s in [0.0, 0.1, 1.0, 5.0, 20.0] {
            let f = cdf_from_intensity(&phi, s).unwrap();
            let exact = -(-0.7f64 * s).exp_m1();
            assert!((f - exact).abs() < 1e-10, "s={s}: {f} vs {exact}");
        }
    }

    #[test]
    fn cdf_at_zero_is_zero() {
        let phi = |u: f64| 1.0 + u;
        assert_eq!(cdf_from_intensity(&phi, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_intensity_cdf_matches_closed_form_and_trapezoid() {
        // phi(u) = u: Int_0^2 u du = 2, so F(2) = 1 - e^{-2}.
        let phi = |u: f64| u;
        let f = cdf_from_intensity(&phi, 2.0).unwrap();
        let exact = 1.0 - (-2.0f64).exp();
        assert!((f - exact).abs() < 1e-10, "{f} vs {exact}");
        let trap = 1.0 - (-trapezoid(&phi, 2.0, 200_000)).exp();
        assert!((f - trap).abs() < 1e-9, "{f} vs trapezoid {trap}");
    }

    #[test]
    fn density_examples() {
        // Constant intensity 1 at s = 0 has density 1.
        let one = |_: f64| 1.0;
        assert!((density_from_intensity(&one, 0.0).unwrap() - 1.0).abs() < 1e-12);
        // Constant 2 at s = ln2 / 2: 2 e^{-ln 2} = 1.
        let two = |_: f64| 2.0;
        let d = density_from_intensity(&two, 2.0f64.ln() / 2.0).unwrap();
        assert!((d - 1.0).abs() < 1e-10, "{d}");
    }

    #[test]
    fn density_integrates_to_cdf_and_to_one() {
        let phi = |u: f64| 0.5 + 0.3 * (1.0 + u).ln();
        for s in [0.5, 1.0, 3.0] {
            let int_density = quad::integrate(
                &|u: f64| density_from_intensity(&phi, u).unwrap(),
                0.0,
                s,
                1e-10,
            )
            .unwrap();
            let f = cdf_from_intensity(&phi, s).unwrap();
            assert!(
                (int_density - f).abs() <= 1e-8,
                "s={s}: {int_density} vs {f}"
            );
        }
        // With a positive lower bound the distribution is proper.
        let total =
            quad::integrate_to_infinity(&|u: f64| density_from_intensity(&phi, u).unwrap(), 1e-10)
                .unwrap();
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn mean_bound_from_lower_rate() {
        // E T <= 1/c for phi >= c.
        let phi = |u: f64| 0.8 + 0.4 * (u * 3.0).sin().abs();
        let mean = mean_from_intensity(&phi).unwrap();
        assert!(mean <= 1.0 / 0.8 + 1e-6, "{mean}");
    }

    #[test]
    fn exponential_round_trip() {
        let phi = |_: f64| 1.3;
        for s in [0.2, 1.0, 4.0] {
            let f = cdf_from_intensity(&phi, s).unwrap();
            assert!((f - (1.0 - (-1.3f64 * s).exp())).abs() <= 1e-10);
        }
    }

    #[test]
    fn stochastic_order_constant_and_oscillating() {
        let grid: Vec<f64> = (1..=100).map(|k| k as f64 * 0.1).collect();
        let constant = |_: f64| 1.0;
        assert!(stochastic_order_check(&constant, 0.5, 2.0, &grid).unwrap());
        let oscillating = |u: f64| 1.0 + 0.45 * (u * 7.0).sin();
        assert!(stochastic_order_check(&oscillating, 0.5, 1.5, &grid).unwrap());
        // Degenerate band is a precondition violation.
        assert!(stochastic_order_check(&constant, 1.0, 1.0, &grid).is_err());
    }

    #[test]
    fn stochastic_order_detects_out_of_band_cdf() {
        // Intensity well below the claimed lower rate c: cdf falls under the
        // Exp(c) floor, so the check must fail.
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.5).collect();
        let phi = |_: f64| 0.1;
        assert!(!stochastic_order_check(&phi, 1.0, 2.0, &grid).unwrap());
    }

    #[test]
    fn cdf_is_nondecreasing_in_s() {
        let phi = |u: f64| 0.4 + 0.2 * (u.cos() + 1.0);
        let mut prev = 0.0;
        for k in 0..=50 {
            let s = k as f64 * 0.2;
            let f = cdf_from_intensity(&phi, s).unwrap();
            assert!((0.0..=1.0).contains(&f));
            assert!(f + 1e-12 >= prev, "cdf decreased at s={s}");
            prev = f;
        }
    }

    #[test]
    fn validate_bounds_passes_for_reference_model() {
        let report = validate_bounds(&reference_model(), 400, 7);
        assert!(report.passed(), "{:?}", report.violation);
        assert_eq!(report.probes, 400);
    }

    #[test]
    fn validate_bounds_fails_with_witness() {
        // Declared band is too tight for the loaded standby failure rate.
        let model = IntensityModel {
            bounds: IntensityBounds {
                main_fail: RateBand::new(1.0, 1.0).unwrap(),
                main_repair: RateBand::new(2.0, 2.0).unwrap(),
                standby_fail: RateBand::new(0.3, 0.59).unwrap(),
                standby_repair: RateBand::new(1.5, 1.5).unwrap(),
            },
            ..reference_model()
        };
        let report = validate_bounds(&model, 64, 11);
        let violation = report.violation.expect("must find the loaded mode");
        assert_eq!(violation.channel, Channel::StandbyFail);
        assert!(violation.state.main_down);
        assert!(violation.value > 0.59);
    }

    #[test]
    fn clamped_affine_family_passes_by_construction() {
        let band = RateBand::new(0.5, 2.0).unwrap();
        let model = IntensityModel::with_derived_bounds(
            IntensityFn::Affine {
                intercept: 0.2,
                slope: 0.9,
                arg: ClockArg::MainElapsed,
                band,
            },
            IntensityFn::constant(2.0),
            IntensityFn::Affine {
                intercept: 1.0,
                slope: -0.3,
                arg: ClockArg::MainElapsed,
                band,
            },
            IntensityFn::constant(1.5),
        )
        .unwrap();
        let report = validate_bounds(&model, 500, 3);
        assert!(report.passed(), "{:?}", report.violation);
    }

    #[test]
    fn table_family_evaluates_and_derives_band() {
        let values: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|mode| {
                (0..3)
                    .map(|ix| {
                        (0..3)
                            .map(|iy| 0.5 + 0.1 * (mode + ix + iy) as f64)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let table = IntensityFn::Table {
            bin_width: 1.0,
            values,
        };
        let band = table.value_band().unwrap();
        assert!((band.lo - 0.5).abs() < 1e-12);
        // Largest entry: mode 3, last bins: 0.5 + 0.1 * (3 + 2 + 2).
        assert!((band.hi - 1.2).abs() < 1e-12);
        // Beyond the binned range the last bin applies.
        let far = FullState::new(true, 100.0, true, 100.0);
        assert!((table.eval(&far) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn custom_function_requires_bounds() {
        let f = IntensityFn::Custom(Arc::new(|s: &FullState| 1.0 + s.main_elapsed.min(1.0)));
        assert!(matches!(
            IntensityModel::with_derived_bounds(
                f,
                IntensityFn::constant(1.0),
                IntensityFn::constant(1.0),
                IntensityFn::constant(1.0),
            ),
            Err(IntensityError::CustomNeedsBounds)
        ));
    }

    #[test]
    fn reference_model_active_intensities_follow_flags() {
        let model = reference_model();
        let up = FullState::fresh_working();
        assert_eq!(model.active_main(&up), 1.0);
        assert_eq!(model.active_standby(&up), 0.3);
        let main_down = FullState::new(true, 0.0, false, 1.0);
        assert_eq!(model.active_main(&main_down), 2.0);
        assert_eq!(model.active_standby(&main_down), 0.6);
        let both_down = FullState::new(true, 0.5, true, 0.5);
        assert_eq!(model.active_standby(&both_down), 1.5);
    }

    #[test]
    fn dominated_exp_cdf_and_mean() {
        let d = DominatedExp::new(2.0, BandSide::UpperRate).unwrap();
        assert_eq!(d.cdf(0.0), 0.0);
        assert!((d.cdf(1.0) - (1.0 - (-2.0f64).exp())).abs() < 1e-14);
        assert!((d.mean() - 0.5).abs() < 1e-14);
        assert!(DominatedExp::new(0.0, BandSide::LowerRate).is_err());
    }
}
