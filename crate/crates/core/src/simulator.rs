//! Monte Carlo simulation of the full-state process by thinning.
//!
//! Candidate epochs come from a homogeneous Poisson stream whose rate is the
//! sum of the four declared upper bounds. At a candidate, each element
//! contributes the intensity of its one pending transition (failure while
//! working, repair while down); the candidate is accepted with probability
//! `(a_main + a_standby) / R` and the transition is selected proportionally.
//! Between events both elapsed clocks advance at unit rate; an accepted event
//! flips the element's flag and resets its clock.
//!
//! Ensembles assign each path its own counter-based stream, so results are
//! identical regardless of thread count or execution order.

use crate::intensity::{Channel, FullState, IntensityModel};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("path {path}: intensity {channel} = {value} escaped its band [{lo}, {hi}] at t = {t}")]
    BoundsViolation {
        path: u64,
        channel: Channel,
        value: f64,
        lo: f64,
        hi: f64,
        t: f64,
    },
}

/// Ensemble simulation parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub horizon: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Increasing observation times within `[0, horizon]`.
    pub time_grid: Vec<f64>,
    /// Bins per elapsed-time axis in state histograms (last bin = overflow).
    pub hist_bins: usize,
    /// Elapsed times at or above this value share the overflow bin.
    pub bin_cap: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.n_paths == 0 {
            return Err(SimError::InvalidConfig("n_paths must be >= 1".into()));
        }
        if self
            .time_grid
            .iter()
            .any(|t| !t.is_finite() || *t < 0.0 || *t > self.horizon)
            || self.time_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(SimError::InvalidConfig(
                "time grid must be increasing within [0, horizon]".into(),
            ));
        }
        if self.hist_bins < 2 {
            return Err(SimError::InvalidConfig("hist_bins must be >= 2".into()));
        }
        if !(self.bin_cap > 0.0 && self.bin_cap.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "bin_cap must be positive, got {}",
                self.bin_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Main,
    Standby,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Fail,
    Repair,
}

/// One accepted jump of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub component: Component,
    pub transition: Transition,
}

/// One simulated trajectory: the initial full state plus its jump record.
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub x0: FullState,
    pub events: Vec<Event>,
    pub horizon: f64,
}

impl SamplePath {
    /// Full state just after time `t` (events at exactly `t` included).
    pub fn state_at(&self, t: f64) -> FullState {
        let mut main_down = self.x0.main_down;
        let mut standby_down = self.x0.standby_down;
        let mut main_since = -self.x0.main_elapsed;
        let mut standby_since = -self.x0.standby_elapsed;
        for e in &self.events {
            if e.t > t {
                break;
            }
            match e.component {
                Component::Main => {
                    main_down = e.transition == Transition::Fail;
                    main_since = e.t;
                }
                Component::Standby => {
                    standby_down = e.transition == Transition::Fail;
                    standby_since = e.t;
                }
            }
        }
        FullState::new(main_down, t - main_since, standby_down, t - standby_since)
    }

    /// States at every grid time in one pass; the grid must be increasing.
    pub fn states_on_grid(&self, grid: &[f64]) -> Vec<FullState> {
        let mut out = Vec::with_capacity(grid.len());
        let mut main_down = self.x0.main_down;
        let mut standby_down = self.x0.standby_down;
        let mut main_since = -self.x0.main_elapsed;
        let mut standby_since = -self.x0.standby_elapsed;
        let mut idx = 0;
        for &t in grid {
            while idx < self.events.len() && self.events[idx].t <= t {
                let e = &self.events[idx];
                match e.component {
                    Component::Main => {
                        main_down = e.transition == Transition::Fail;
                        main_since = e.t;
                    }
                    Component::Standby => {
                        standby_down = e.transition == Transition::Fail;
                        standby_since = e.t;
                    }
                }
                idx += 1;
            }
            out.push(FullState::new(
                main_down,
                t - main_since,
                standby_down,
                t - standby_since,
            ));
        }
        out
    }
}

/// Repair completions (`theta`) and failures (`theta_prime`) of the main
/// element. A path that starts with the main element working takes
/// `theta_1 = 0`.
#[derive(Debug, Clone, Default)]
pub struct RepairEpochs {
    pub theta: Vec<f64>,
    pub theta_prime: Vec<f64>,
}

impl RepairEpochs {
    /// Durations between consecutive repair completions.
    pub fn cycle_lengths(&self) -> Vec<f64> {
        self.theta.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Many independent paths from one initial state.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub x0: FullState,
    pub config: SimConfig,
    pub paths: Vec<SamplePath>,
}

/// Normalized occupancy over (flag pair, binned main clock, binned standby
/// clock).
#[derive(Debug, Clone)]
pub struct StateHistogram {
    pub hist_bins: usize,
    pub bin_cap: f64,
    /// Flat mass array indexed `[flag][x_bin][y_bin]`.
    pub mass: Vec<f64>,
    pub n_paths: usize,
}

impl StateHistogram {
    /// An all-zero histogram with the given shape.
    pub fn empty(hist_bins: usize, bin_cap: f64) -> Self {
        Self {
            hist_bins,
            bin_cap,
            mass: vec![0.0; 4 * hist_bins * hist_bins],
            n_paths: 0,
        }
    }

    fn bin(&self, elapsed: f64) -> usize {
        if elapsed >= self.bin_cap {
            self.hist_bins - 1
        } else {
            ((elapsed / self.bin_cap) * (self.hist_bins - 1) as f64) as usize
        }
    }

    fn index(&self, state: &FullState) -> usize {
        let b = self.hist_bins;
        state.flag_index() * b * b
            + self.bin(state.main_elapsed) * b
            + self.bin(state.standby_elapsed)
    }

    /// Counts one observed state (call [`Self::normalize`] when done).
    pub fn add_state(&mut self, state: &FullState) {
        let idx = self.index(state);
        self.mass[idx] += 1.0;
        self.n_paths += 1;
    }

    /// Converts accumulated counts to a probability mass function.
    pub fn normalize(&mut self) {
        let total: f64 = self.mass.iter().sum();
        if total > 0.0 {
            for m in &mut self.mass {
                *m /= total;
            }
        }
    }
}

/// Core thinning loop; the caller owns the randomness stream.
pub fn simulate_path_with_rng<R: Rng>(
    model: &IntensityModel,
    x0: &FullState,
    horizon: f64,
    rng: &mut R,
) -> Result<SamplePath, SimError> {
    simulate_path_inner(model, x0, horizon, rng, 0)
}

/// Simulates one path on the counter-based stream `(master_seed, path_index)`.
pub fn simulate_path(
    model: &IntensityModel,
    x0: &FullState,
    horizon: f64,
    master_seed: u64,
    path_index: u64,
) -> Result<SamplePath, SimError> {
    let mut rng = rng::path_stream(master_seed, path_index);
    simulate_path_inner(model, x0, horizon, &mut rng, path_index)
}

fn simulate_path_inner<R: Rng>(
    model: &IntensityModel,
    x0: &FullState,
    horizon: f64,
    rng: &mut R,
    path_index: u64,
) -> Result<SamplePath, SimError> {
    x0.validate()
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SimError::InvalidConfig(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    let r_dom = model.bounds.dominating_rate();
    let mut events = Vec::new();
    let mut main_down = x0.main_down;
    let mut standby_down = x0.standby_down;
    let mut main_since = -x0.main_elapsed;
    let mut standby_since = -x0.standby_elapsed;
    let mut t = 0.0f64;

    loop {
        t += rng::exp_sample(rng, r_dom);
        if t >= horizon {
            break;
        }
        let state = FullState::new(main_down, t - main_since, standby_down, t - standby_since);
        let a_main = model.active_main(&state);
        let band_main = model.active_band(true, &state);
        if !band_main.contains(a_main) {
            return Err(SimError::BoundsViolation {
                path: path_index,
                channel: if main_down {
                    Channel::MainRepair
                } else {
                    Channel::MainFail
                },
                value: a_main,
                lo: band_main.lo,
                hi: band_main.hi,
                t,
            });
        }
        let a_standby = model.active_standby(&state);
        let band_standby = model.active_band(false, &state);
        if !band_standby.contains(a_standby) {
            return Err(SimError::BoundsViolation {
                path: path_index,
                channel: if standby_down {
                    Channel::StandbyRepair
                } else {
                    Channel::StandbyFail
                },
                value: a_standby,
                lo: band_standby.lo,
                hi: band_standby.hi,
                t,
            });
        }
        let u = rng::uniform(rng) * r_dom;
        if u < a_main {
            main_down = !main_down;
            main_since = t;
            events.push(Event {
                t,
                component: Component::Main,
                transition: if main_down {
                    Transition::Fail
                } else {
                    Transition::Repair
                },
            });
        } else if u < a_main + a_standby {
            standby_down = !standby_down;
            standby_since = t;
            events.push(Event {
                t,
                component: Component::Standby,
                transition: if standby_down {
                    Transition::Fail
                } else {
                    Transition::Repair
                },
            });
        }
    }
    Ok(SamplePath {
        x0: *x0,
        events,
        horizon,
    })
}

/// Simulates `config.n_paths` independent paths. Path `k` draws from the
/// stream keyed by `(master_seed, k)`, so the ensemble is identical for any
/// thread count.
pub fn simulate_ensemble(
    model: &IntensityModel,
    x0: &FullState,
    config: &SimConfig,
) -> Result<Ensemble, SimError> {
    config.validate()?;
    let paths: Result<Vec<SamplePath>, SimError> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|k| simulate_path(model, x0, config.horizon, config.master_seed, k))
        .collect();
    Ok(Ensemble {
        x0: *x0,
        config: config.clone(),
        paths: paths?,
    })
}

/// Availability estimate (fraction of paths with not-both-down flags) and
/// its binomial standard error, per grid time.
pub fn estimate_availability(ensemble: &Ensemble, time_grid: &[f64]) -> Vec<(f64, f64)> {
    flag_probabilities(ensemble, time_grid)
        .into_iter()
        .map(|probs| {
            let p = 1.0 - probs[3];
            (p, binomial_se(p, ensemble.paths.len()))
        })
        .collect()
}

/// Empirical flag-pair probabilities at each grid time, in the fixed state
/// order.
pub fn flag_probabilities(ensemble: &Ensemble, time_grid: &[f64]) -> Vec<[f64; 4]> {
    let mut counts = vec![[0usize; 4]; time_grid.len()];
    for path in &ensemble.paths {
        for (slot, state) in path.states_on_grid(time_grid).iter().enumerate() {
            counts[slot][state.flag_index()] += 1;
        }
    }
    let n = ensemble.paths.len() as f64;
    counts
        .into_iter()
        .map(|c| {
            [
                c[0] as f64 / n,
                c[1] as f64 / n,
                c[2] as f64 / n,
                c[3] as f64 / n,
            ]
        })
        .collect()
}

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n as f64).sqrt()
}

/// Normalized histogram of the full state at time `t`.
pub fn state_histogram(
    ensemble: &Ensemble,
    t: f64,
    hist_bins: usize,
    bin_cap: f64,
) -> StateHistogram {
    let mut hist = StateHistogram::empty(hist_bins, bin_cap);
    for path in &ensemble.paths {
        hist.add_state(&path.state_at(t));
    }
    hist.normalize();
    hist
}

/// Histogram of the state at time `t` over `n_paths` freshly simulated
/// paths, without retaining the paths (for large ensembles).
pub fn streamed_state_histogram(
    model: &IntensityModel,
    x0: &FullState,
    t: f64,
    n_paths: usize,
    master_seed: u64,
    hist_bins: usize,
    bin_cap: f64,
) -> Result<StateHistogram, SimError> {
    let states: Result<Vec<FullState>, SimError> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| simulate_path(model, x0, t, master_seed, k).map(|p| p.state_at(t)))
        .collect();
    let mut hist = StateHistogram::empty(hist_bins, bin_cap);
    for state in states?.iter() {
        hist.add_state(state);
    }
    hist.normalize();
    Ok(hist)
}

/// Total-variation distance between two histograms over the same cells:
/// `0.5 * sum |a - b|`. Coarsening can only lose mass differences, so this is
/// a lower bound on the TV distance between the underlying laws.
pub fn estimate_tv(a: &StateHistogram, b: &StateHistogram) -> f64 {
    assert_eq!(a.hist_bins, b.hist_bins, "histogram shapes must match");
    assert_eq!(a.bin_cap, b.bin_cap, "histogram caps must match");
    0.5 * a
        .mass
        .iter()
        .zip(b.mass.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// Conservative upper bound on the standard deviation of [`estimate_tv`],
/// from per-cell multinomial variances.
pub fn tv_standard_error(n_a: usize, n_b: usize) -> f64 {
    0.5 * (1.0 / n_a as f64 + 1.0 / n_b as f64).sqrt()
}

/// Repair/failure epochs of the main element (see [`RepairEpochs`]).
pub fn extract_epochs(path: &SamplePath) -> RepairEpochs {
    let mut epochs = RepairEpochs::default();
    if !path.x0.main_down {
        epochs.theta.push(0.0);
    }
    for e in &path.events {
        if e.component == Component::Main {
            match e.transition {
                Transition::Repair => epochs.theta.push(e.t),
                Transition::Fail => epochs.theta_prime.push(e.t),
            }
        }
    }
    epochs
}

/// Per-path count of repair-epoch windows `[theta_k, theta_k + eps]` that
/// fit inside the horizon, and how many of them saw the path visit the
/// fresh all-working set (both elements up, both clocks younger than `eps`).
#[derive(Debug, Clone, Copy, Default)]
pub struct WindowHitStats {
    pub windows: usize,
    pub hits: usize,
}

/// Membership can only begin at the epoch itself or at a later event, so
/// checking those instants inside the window is exhaustive.
pub fn window_hits_into_fresh_set(path: &SamplePath, eps: f64) -> WindowHitStats {
    let epochs = extract_epochs(path);
    let mut stats = WindowHitStats::default();
    for &theta in &epochs.theta {
        let deadline = theta + eps;
        if deadline > path.horizon {
            continue; // censored window
        }
        stats.windows += 1;
        if path.state_at(theta).in_fresh_working_set(eps) {
            stats.hits += 1;
            continue;
        }
        let hit = path
            .events
            .iter()
            .filter(|e| e.t > theta && e.t <= deadline)
            .any(|e| path.state_at(e.t).in_fresh_working_set(eps));
        if hit {
            stats.hits += 1;
        }
    }
    stats
}
