//! Successful coupling of two copies of the full-state process.
//!
//! Two processes with the same intensity model but different initial states
//! run on a shared dominating Poisson clock with independent acceptance
//! randomness. Every repair completion of the primary process opens a window
//! of length `epsilon`; if at some instant inside the window both processes
//! sit in the fresh all-working set (both elements up, both clocks younger
//! than `epsilon`), a coupling attempt runs: the residual working times of
//! the two processes' elements are drawn through a maximal coupling, matched
//! pairwise (main with main, standby with standby). When both pairs coincide
//! the attempt succeeds: from that instant a single trajectory is evolved and
//! mirrored onto the secondary process, and the coupling epoch `tau` is the
//! first moment the two full states actually coincide (each element's clock
//! syncs at its next reset thereafter).
//!
//! The attempt draws decide success; the merged trajectory itself keeps
//! evolving by exact thinning, so the primary process has the exact marginal
//! law in every branch and the mirrored secondary is exact whenever the
//! intensities depend on the flags alone (it is an approximation when they
//! read the elapsed clocks, which only the window between success and `tau`
//! can see).
//!
//! The maximal-coupling primitive is the standard one: with probability
//! `kappa = Int min(f_1 .. f_n)` all outputs are one draw from the
//! normalized minimum density; otherwise each output is drawn from its
//! normalized residual `(f_k - min) / (1 - kappa)`. Output `k` has marginal
//! `f_k` exactly, and all outputs coincide with probability exactly `kappa`
//! (residual draws tie with probability zero for continuous laws).

use crate::hazard::{HazardError, HazardPath, PathLeg};
use crate::intensity::{Channel, FullState, IntensityModel};
use crate::quad;
use crate::rng::{self, CouplingChannel};
use crate::simulator::{Component, Event, SamplePath, SimError, Transition};
use rand::RngCore;
use rayon::prelude::*;
use thiserror::Error;

/// Mass tolerance when verifying that inputs are probability densities.
const NORMALIZATION_TOL: f64 = 1e-8;
/// Quadrature tolerance for common-part integrals.
const COMMON_PART_TOL: f64 = 1e-10;
/// Above this value the common part is treated as exactly 1 (identical laws).
const KAPPA_ONE: f64 = 1.0 - 1e-9;
/// Cap on rejection-sampling iterations. The expected count is `1/kappa` in
/// a branch entered with probability `kappa`, so hitting this means the
/// density inputs are inconsistent.
const MAX_REJECTIONS: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("need at least two distributions, got {0}")]
    NeedTwo(usize),
    #[error("input {index} is not normalized: mass = {mass}")]
    NotNormalized { index: usize, mass: f64 },
    #[error("rejection sampling exceeded {MAX_REJECTIONS} iterations")]
    RejectionOverflow,
    #[error("invalid coupling options: {0}")]
    InvalidOptions(String),
    #[error(
        "run {run}: intensity {channel} = {value} escaped its band at t = {t} during coupling"
    )]
    BoundsViolation {
        run: u64,
        channel: Channel,
        value: f64,
        t: f64,
    },
    #[error(transparent)]
    Quadrature(#[from] quad::QuadError),
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A probability density on `[0, inf)` that can also be sampled directly.
pub trait ProbDensity {
    fn density(&self, x: f64) -> f64;
    fn log_density(&self, x: f64) -> f64 {
        self.density(x).ln()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    /// Kink locations for quadrature splitting.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// True when the law is normalized by construction, skipping the
    /// numerical mass check.
    fn known_normalized(&self) -> bool {
        false
    }
}

impl ProbDensity for HazardPath {
    fn density(&self, x: f64) -> f64 {
        HazardPath::density(self, x)
    }

    fn log_density(&self, x: f64) -> f64 {
        HazardPath::log_density(self, x)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.quantile(rng::uniform(rng))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots()
    }

    fn known_normalized(&self) -> bool {
        // The tail hazard is strictly positive, so the survival function
        // vanishes at infinity.
        true
    }
}

/// The exponential density with the given rate.
#[derive(Debug, Clone, Copy)]
pub struct ExpDensity {
    pub rate: f64,
}

impl ProbDensity for ExpDensity {
    fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            self.rate * (-self.rate * x).exp()
        }
    }

    fn log_density(&self, x: f64) -> f64 {
        if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.rate.ln() - self.rate * x
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        rng::exp_sample(rng, self.rate)
    }

    fn known_normalized(&self) -> bool {
        true
    }
}

/// Common part `Int min(f1, f2)` of two densities on `[0, inf)`, after
/// verifying both integrate to 1 within `1e-8`.
pub fn common_part(f1: &dyn Fn(f64) -> f64, f2: &dyn Fn(f64) -> f64) -> Result<f64, CouplingError> {
    for (index, f) in [f1, f2].into_iter().enumerate() {
        let mass = quad::integrate_to_infinity(f, COMMON_PART_TOL)?;
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(CouplingError::NotNormalized { index, mass });
        }
    }
    let min = |x: f64| f1(x).min(f2(x));
    Ok(quad::integrate_to_infinity(&min, COMMON_PART_TOL)?.clamp(0.0, 1.0))
}

/// Common part of `n` densities given as [`ProbDensity`] objects.
pub fn common_part_n(dists: &[&dyn ProbDensity]) -> Result<f64, CouplingError> {
    if dists.len() < 2 {
        return Err(CouplingError::NeedTwo(dists.len()));
    }
    let mut breaks: Vec<f64> = Vec::new();
    for d in dists {
        breaks.extend(d.breakpoints());
    }
    for (index, d) in dists.iter().enumerate() {
        if d.known_normalized() {
            continue;
        }
        let mass = quad::integrate_to_infinity_with_breakpoints(
            &|x| d.density(x),
            &breaks,
            COMMON_PART_TOL,
        )?;
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(CouplingError::NotNormalized { index, mass });
        }
    }
    let min = |x: f64| {
        dists
            .iter()
            .map(|d| d.density(x))
            .fold(f64::INFINITY, f64::min)
    };
    let kappa = quad::integrate_to_infinity_with_breakpoints(&min, &breaks, COMMON_PART_TOL)?;
    Ok(kappa.clamp(0.0, 1.0))
}

/// Result of one maximal-coupling draw.
#[derive(Debug, Clone)]
pub struct MaximalDraw {
    pub values: Vec<f64>,
    pub all_equal: bool,
}

/// A prepared maximal coupling of `n >= 2` distributions; the common part is
/// computed once so repeated draws are cheap.
pub struct MaximalCoupling<'a> {
    dists: Vec<&'a dyn ProbDensity>,
    kappa: f64,
}

impl<'a> MaximalCoupling<'a> {
    pub fn new(dists: Vec<&'a dyn ProbDensity>) -> Result<Self, CouplingError> {
        let kappa = common_part_n(&dists)?;
        Ok(Self { dists, kappa })
    }

    /// Builds the coupling with a caller-supplied common part (when it is
    /// known analytically, say for identical laws).
    pub fn with_kappa(dists: Vec<&'a dyn ProbDensity>, kappa: f64) -> Result<Self, CouplingError> {
        if dists.len() < 2 {
            return Err(CouplingError::NeedTwo(dists.len()));
        }
        Ok(Self {
            dists,
            kappa: kappa.clamp(0.0, 1.0),
        })
    }

    /// The exact coincidence probability of the coupling.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn log_min(&self, x: f64) -> f64 {
        self.dists
            .iter()
            .map(|d| d.log_density(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Draws all `n` values. With probability `kappa` they are one common
    /// draw from the normalized minimum; otherwise each comes from its
    /// normalized residual. `kappa = 0` degenerates to independent draws
    /// that never tie (flagged by `all_equal = false`).
    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<MaximalDraw, CouplingError> {
        let n = self.dists.len();
        if self.kappa >= KAPPA_ONE {
            // All densities coincide (a.e.): one draw serves every marginal.
            let v = self.dists[0].sample(rng);
            return Ok(MaximalDraw {
                values: vec![v; n],
                all_equal: true,
            });
        }
        if self.kappa > 0.0 && rng::uniform(rng) < self.kappa {
            // Common branch: sample the normalized minimum by rejection
            // against f_0.
            for _ in 0..MAX_REJECTIONS {
                let x = self.dists[0].sample(rng);
                let log_accept = self.log_min(x) - self.dists[0].log_density(x);
                if log_accept >= 0.0 || rng::uniform(rng) < log_accept.exp() {
                    return Ok(MaximalDraw {
                        values: vec![x; n],
                        all_equal: true,
                    });
                }
            }
            return Err(CouplingError::RejectionOverflow);
        }
        // Residual branch: each marginal from (f_k - min) / (1 - kappa).
        let mut values = Vec::with_capacity(n);
        for d in &self.dists {
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let x = d.sample(rng);
                let log_fk = d.log_density(x);
                if !log_fk.is_finite() {
                    continue;
                }
                let reject_p = (self.log_min(x) - log_fk).exp();
                if rng::uniform(rng) >= reject_p {
                    accepted = Some(x);
                    break;
                }
            }
            values.push(accepted.ok_or(CouplingError::RejectionOverflow)?);
        }
        Ok(MaximalDraw {
            values,
            all_equal: false,
        })
    }
}

/// One-shot maximal-coupling draw from `n` distributions: marginal `k` is
/// distribution `k`, and all outputs coincide with probability exactly the
/// common part. Prefer [`MaximalCoupling`] when drawing repeatedly.
pub fn sample_maximal_coupling(
    dists: &[&dyn ProbDensity],
    rng: &mut dyn RngCore,
) -> Result<MaximalDraw, CouplingError> {
    MaximalCoupling::new(dists.to_vec())?.sample(rng)
}

/// How the residual working times are matched at an attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingStrategy {
    /// Two 2-distribution couplings, main with main and standby with
    /// standby; both must coincide. The success bound factorizes per pair.
    Pairwise,
    /// One 4-distribution coupling of all residual times at once; success
    /// requires all four to coincide, with the coarser min/max bound.
    FourWay,
}

/// Which epoch set drives attempt windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptSet {
    /// Windows at repair completions, targeting the fresh all-working set.
    FreshWorking,
    /// Windows at main failures, targeting the fresh all-failed set.
    AllFailed,
}

/// Outcome of one attempt window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptOutcome {
    /// The two processes never sat in the target set at a common instant
    /// inside the window.
    MissedWindow,
    /// Joint membership happened but the residual draws did not coincide.
    JointHit,
    /// The residual draws coincided: the processes merge.
    ResidualsCoupled,
}

#[derive(Debug, Clone, Copy)]
pub struct AttemptRecord {
    /// Epoch that opened the window.
    pub theta: f64,
    pub set: AttemptSet,
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone)]
pub struct CouplingOptions {
    /// Window length and freshness threshold of the target sets.
    pub epsilon: f64,
    pub strategy: CouplingStrategy,
    /// Attempt windows at repair completions (the certified channel).
    pub repair_epoch_channel: bool,
    /// Optional second channel at main failures.
    pub failure_epoch_channel: bool,
}

impl CouplingOptions {
    pub fn new(epsilon: f64, strategy: CouplingStrategy) -> Self {
        Self {
            epsilon,
            strategy,
            repair_epoch_channel: true,
            failure_epoch_channel: false,
        }
    }

    fn validate(&self) -> Result<(), CouplingError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CouplingError::InvalidOptions(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.repair_epoch_channel && !self.failure_epoch_channel {
            return Err(CouplingError::InvalidOptions(
                "at least one attempt channel must be enabled".into(),
            ));
        }
        Ok(())
    }
}

/// Snapshot of the coupled pair at one instant.
#[derive(Debug, Clone, Copy)]
pub struct CoupledPair {
    pub y: FullState,
    pub y_hat: FullState,
    pub coupled: bool,
    pub tau: Option<f64>,
}

/// One coupled run: the coupling epoch (if reached), the attempt log, and
/// both trajectories.
#[derive(Debug, Clone)]
pub struct CouplingRun {
    pub tau: Option<f64>,
    pub attempts: Vec<AttemptRecord>,
    pub primary_path: SamplePath,
    pub secondary_path: SamplePath,
    pub horizon: f64,
}

impl CouplingRun {
    /// Pair state at time `t`.
    pub fn pair_at(&self, t: f64) -> CoupledPair {
        let coupled = self.tau.is_some_and(|tau| tau <= t);
        CoupledPair {
            y: self.primary_path.state_at(t),
            y_hat: self.secondary_path.state_at(t),
            coupled,
            tau: self.tau,
        }
    }

    /// Number of windows whose target set was jointly reached.
    pub fn windows_hit(&self) -> usize {
        self.attempts
            .iter()
            .filter(|a| a.outcome != AttemptOutcome::MissedWindow)
            .count()
    }
}

/// Live state of one process inside the coupled runner. Clocks are stored as
/// the absolute time of the last flag change, so two processes have equal
/// full states exactly when flags and change times agree bitwise (resets
/// driven by shared events assign identical times).
#[derive(Clone, Copy)]
struct Proc {
    main_down: bool,
    standby_down: bool,
    main_since: f64,
    standby_since: f64,
}

impl Proc {
    fn from_state(x0: &FullState) -> Self {
        Self {
            main_down: x0.main_down,
            standby_down: x0.standby_down,
            main_since: -x0.main_elapsed,
            standby_since: -x0.standby_elapsed,
        }
    }

    fn state_at(&self, t: f64) -> FullState {
        FullState::new(
            self.main_down,
            t - self.main_since,
            self.standby_down,
            t - self.standby_since,
        )
    }

    fn same_full_state(&self, other: &Proc) -> bool {
        self.main_down == other.main_down
            && self.standby_down == other.standby_down
            && self.main_since == other.main_since
            && self.standby_since == other.standby_since
    }

    fn apply(&mut self, t: f64, component: Component) -> Event {
        let transition = match component {
            Component::Main => {
                self.main_down = !self.main_down;
                self.main_since = t;
                if self.main_down {
                    Transition::Fail
                } else {
                    Transition::Repair
                }
            }
            Component::Standby => {
                self.standby_down = !self.standby_down;
                self.standby_since = t;
                if self.standby_down {
                    Transition::Fail
                } else {
                    Transition::Repair
                }
            }
        };
        Event {
            t,
            component,
            transition,
        }
    }
}

struct Window {
    theta: f64,
    deadline: f64,
    set: AttemptSet,
}

/// Frozen-forward residual law of one channel from the given state: flags
/// pinned, both clocks advancing.
fn frozen_residual(
    model: &IntensityModel,
    channel: Channel,
    state: &FullState,
) -> Result<HazardPath, CouplingError> {
    let leg = PathLeg {
        start: 0.0,
        end: f64::INFINITY,
        main_down: state.main_down,
        standby_down: state.standby_down,
        main_elapsed_at_start: state.main_elapsed,
        standby_elapsed_at_start: state.standby_elapsed,
    };
    Ok(HazardPath::from_channel(
        model.function(channel),
        model.bounds.band(channel),
        &[leg],
    )?)
}

fn membership(state: &FullState, set: AttemptSet, eps: f64) -> bool {
    match set {
        AttemptSet::FreshWorking => state.in_fresh_working_set(eps),
        AttemptSet::AllFailed => {
            state.main_down
                && state.standby_down
                && state.main_elapsed < eps
                && state.standby_elapsed < eps
        }
    }
}

/// Maximal coupling of hazard-path laws, skipping the common-part quadrature
/// when all inputs describe the same hazard.
fn hazard_coupling<'a>(paths: Vec<&'a HazardPath>) -> Result<MaximalCoupling<'a>, CouplingError> {
    let identical = paths.windows(2).all(|w| w[0].same_law(w[1]));
    let dists: Vec<&dyn ProbDensity> = paths.into_iter().map(|p| p as &dyn ProbDensity).collect();
    if identical {
        MaximalCoupling::with_kappa(dists, 1.0)
    } else {
        MaximalCoupling::new(dists)
    }
}

/// Runs the attempt draws; `true` means the processes merge.
fn attempt_succeeds(
    model: &IntensityModel,
    y_state: &FullState,
    h_state: &FullState,
    set: AttemptSet,
    strategy: CouplingStrategy,
    draw_rng: &mut dyn RngCore,
) -> Result<bool, CouplingError> {
    let (main_channel, standby_channel) = match set {
        AttemptSet::FreshWorking => (Channel::MainFail, Channel::StandbyFail),
        AttemptSet::AllFailed => (Channel::MainRepair, Channel::StandbyRepair),
    };
    let y_main = frozen_residual(model, main_channel, y_state)?;
    let h_main = frozen_residual(model, main_channel, h_state)?;
    let y_standby = frozen_residual(model, standby_channel, y_state)?;
    let h_standby = frozen_residual(model, standby_channel, h_state)?;
    match strategy {
        CouplingStrategy::Pairwise => {
            let main_pair = hazard_coupling(vec![&y_main, &h_main])?;
            let main_draw = main_pair.sample(draw_rng)?;
            let standby_pair = hazard_coupling(vec![&y_standby, &h_standby])?;
            let standby_draw = standby_pair.sample(draw_rng)?;
            Ok(main_draw.all_equal && standby_draw.all_equal)
        }
        CouplingStrategy::FourWay => {
            let all = hazard_coupling(vec![&y_main, &y_standby, &h_main, &h_standby])?;
            Ok(all.sample(draw_rng)?.all_equal)
        }
    }
}

/// Runs one coupled pair on the streams keyed by `(master_seed, run_index)`.
pub fn run_coupled(
    model: &IntensityModel,
    x0: &FullState,
    x0_hat: &FullState,
    horizon: f64,
    options: &CouplingOptions,
    master_seed: u64,
    run_index: u64,
) -> Result<CouplingRun, CouplingError> {
    options.validate()?;
    x0.validate()
        .map_err(|e| CouplingError::InvalidOptions(e.to_string()))?;
    x0_hat
        .validate()
        .map_err(|e| CouplingError::InvalidOptions(e.to_string()))?;
    let eps = options.epsilon;
    let r_dom = model.bounds.dominating_rate();

    let mut clock = rng::coupling_stream(master_seed, run_index, CouplingChannel::Clock);
    let mut accept_y = rng::coupling_stream(master_seed, run_index, CouplingChannel::AcceptPrimary);
    let mut accept_h =
        rng::coupling_stream(master_seed, run_index, CouplingChannel::AcceptSecondary);
    let mut draw_rng = rng::coupling_stream(master_seed, run_index, CouplingChannel::Draws);

    let mut y = Proc::from_state(x0);
    let mut h = Proc::from_state(x0_hat);
    let mut y_events: Vec<Event> = Vec::new();
    let mut h_events: Vec<Event> = Vec::new();
    let mut attempts: Vec<AttemptRecord> = Vec::new();
    let mut window: Option<Window> = None;
    let mut mirroring = false;
    let mut coupled = false;
    let mut tau = None;

    if y.same_full_state(&h) {
        mirroring = true;
        coupled = true;
        tau = Some(0.0);
    }

    // Checks one active intensity against its band; thinning is only valid
    // inside the declared bounds.
    let check = |value: f64, channel: Channel, t: f64| -> Result<f64, CouplingError> {
        let band = match channel {
            Channel::MainFail => model.bounds.main_fail,
            Channel::MainRepair => model.bounds.main_repair,
            Channel::StandbyFail => model.bounds.standby_fail,
            Channel::StandbyRepair => model.bounds.standby_repair,
        };
        if band.contains(value) {
            Ok(value)
        } else {
            Err(CouplingError::BoundsViolation {
                run: run_index,
                channel,
                value,
                t,
            })
        }
    };

    // Thins one candidate for one process; returns the accepted component.
    let thin = |proc: &Proc,
                t: f64,
                rng: &mut rand_chacha::ChaCha8Rng|
     -> Result<Option<Component>, CouplingError> {
        let state = proc.state_at(t);
        let a_main = check(
            model.active_main(&state),
            if state.main_down {
                Channel::MainRepair
            } else {
                Channel::MainFail
            },
            t,
        )?;
        let a_standby = check(
            model.active_standby(&state),
            if state.standby_down {
                Channel::StandbyRepair
            } else {
                Channel::StandbyFail
            },
            t,
        )?;
        let u = rng::uniform(rng) * r_dom;
        if u < a_main {
            Ok(Some(Component::Main))
        } else if u < a_main + a_standby {
            Ok(Some(Component::Standby))
        } else {
            Ok(None)
        }
    };

    // Window opening rule shared by the initial convention and later epochs.
    let open_window = |t: f64, set: AttemptSet| Window {
        theta: t,
        deadline: t + eps,
        set,
    };

    // Attempt check at an instant where a window is open. Returns the new
    // mirroring flag.
    #[allow(clippy::too_many_arguments)]
    fn try_attempt(
        model: &IntensityModel,
        window: &mut Option<Window>,
        attempts: &mut Vec<AttemptRecord>,
        y: &Proc,
        h: &Proc,
        t: f64,
        strategy: CouplingStrategy,
        eps: f64,
        draw_rng: &mut dyn RngCore,
    ) -> Result<bool, CouplingError> {
        let Some(w) = window.as_ref() else {
            return Ok(false);
        };
        if t < w.theta || t > w.deadline {
            return Ok(false);
        }
        let ys = y.state_at(t);
        let hs = h.state_at(t);
        if !(membership(&ys, w.set, eps) && membership(&hs, w.set, eps)) {
            return Ok(false);
        }
        let success = attempt_succeeds(model, &ys, &hs, w.set, strategy, draw_rng)?;
        attempts.push(AttemptRecord {
            theta: w.theta,
            set: w.set,
            outcome: if success {
                AttemptOutcome::ResidualsCoupled
            } else {
                AttemptOutcome::JointHit
            },
        });
        *window = None;
        Ok(success)
    }

    // Initial epoch convention: a window opens at t = 0 when the primary
    // process starts on the matching side of the main element's cycle.
    if !mirroring {
        if options.repair_epoch_channel && !x0.main_down {
            window = Some(open_window(0.0, AttemptSet::FreshWorking));
        } else if options.failure_epoch_channel && x0.main_down {
            window = Some(open_window(0.0, AttemptSet::AllFailed));
        }
        if try_attempt(
            model,
            &mut window,
            &mut attempts,
            &y,
            &h,
            0.0,
            options.strategy,
            eps,
            &mut draw_rng,
        )? {
            mirroring = true;
        }
    }

    let mut t = rng::exp_sample(&mut clock, r_dom);
    while t < horizon {
        if mirroring {
            // No further attempts once the trajectories are merged.
            window = None;
        } else if let Some(w) = &window {
            // Expire the window before handling anything at a later time.
            if t > w.deadline {
                attempts.push(AttemptRecord {
                    theta: w.theta,
                    set: w.set,
                    outcome: AttemptOutcome::MissedWindow,
                });
                window = None;
            }
        }

        if mirroring {
            // One trajectory drives both processes.
            if let Some(component) = thin(&y, t, &mut accept_y)? {
                y_events.push(y.apply(t, component));
                h_events.push(h.apply(t, component));
                if !coupled && y.same_full_state(&h) {
                    coupled = true;
                    tau = Some(t);
                }
            }
        } else {
            let y_accepted = thin(&y, t, &mut accept_y)?;
            let h_accepted = thin(&h, t, &mut accept_h)?;
            let mut y_main_event: Option<Transition> = None;
            if let Some(component) = y_accepted {
                let e = y.apply(t, component);
                if component == Component::Main {
                    y_main_event = Some(e.transition);
                }
                y_events.push(e);
            }
            if let Some(component) = h_accepted {
                h_events.push(h.apply(t, component));
            }
            if y_accepted.is_some() || h_accepted.is_some() {
                // Exact full-state coincidence short-circuits the attempt
                // machinery (shared candidate times make this possible).
                if y.same_full_state(&h) {
                    coupled = true;
                    tau = Some(t);
                    mirroring = true;
                    window = None;
                } else {
                    // New epochs of the primary process supersede the window.
                    match y_main_event {
                        Some(Transition::Repair) if options.repair_epoch_channel => {
                            if let Some(w) = window.take() {
                                attempts.push(AttemptRecord {
                                    theta: w.theta,
                                    set: w.set,
                                    outcome: AttemptOutcome::MissedWindow,
                                });
                            }
                            window = Some(open_window(t, AttemptSet::FreshWorking));
                        }
                        Some(Transition::Fail) if options.failure_epoch_channel => {
                            if let Some(w) = window.take() {
                                attempts.push(AttemptRecord {
                                    theta: w.theta,
                                    set: w.set,
                                    outcome: AttemptOutcome::MissedWindow,
                                });
                            }
                            window = Some(open_window(t, AttemptSet::AllFailed));
                        }
                        _ => {}
                    }
                    if try_attempt(
                        model,
                        &mut window,
                        &mut attempts,
                        &y,
                        &h,
                        t,
                        options.strategy,
                        eps,
                        &mut draw_rng,
                    )? {
                        mirroring = true;
                    }
                }
            }
        }
        t += rng::exp_sample(&mut clock, r_dom);
    }

    // A window that expired inside the horizon without an attempt is missed.
    if let Some(w) = window {
        if w.deadline <= horizon {
            attempts.push(AttemptRecord {
                theta: w.theta,
                set: w.set,
                outcome: AttemptOutcome::MissedWindow,
            });
        }
    }

    Ok(CouplingRun {
        tau,
        attempts,
        primary_path: SamplePath {
            x0: *x0,
            events: y_events,
            horizon,
        },
        secondary_path: SamplePath {
            x0: *x0_hat,
            events: h_events,
            horizon,
        },
        horizon,
    })
}

/// Runs `n_runs` independent coupled pairs with per-run streams; the result
/// does not depend on thread count.
pub fn run_coupled_ensemble(
    model: &IntensityModel,
    x0: &FullState,
    x0_hat: &FullState,
    horizon: f64,
    options: &CouplingOptions,
    master_seed: u64,
    n_runs: usize,
) -> Result<Vec<CouplingRun>, CouplingError> {
    (0..n_runs as u64)
        .into_par_iter()
        .map(|k| run_coupled(model, x0, x0_hat, horizon, options, master_seed, k))
        .collect()
}

/// One point of the empirical coupling-time tail.
#[derive(Debug, Clone, Copy)]
pub struct TailPoint {
    pub t: f64,
    pub prob: f64,
    pub se: f64,
}

/// Empirical `P(tau > t)` with binomial standard errors; runs that never
/// coupled count as `tau > horizon`.
pub fn coupling_tail(runs: &[CouplingRun], t_grid: &[f64]) -> Vec<TailPoint> {
    let n = runs.len();
    t_grid
        .iter()
        .map(|&t| {
            let over = runs
                .iter()
                .filter(|r| r.tau.is_none_or(|tau| tau > t))
                .count();
            let prob = over as f64 / n as f64;
            TailPoint {
                t,
                prob,
                se: crate::simulator::binomial_se(prob, n),
            }
        })
        .collect()
}
