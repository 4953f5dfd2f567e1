//! Experiment configuration: a single TOML file with `[model]`, `[sim]`,
//! `[coupling]` and `[output]` sections. Unknown keys are errors.

use serde::Deserialize;
use std::path::PathBuf;
use thiserror::Error;
use warmstandby::coupling::CouplingStrategy;
use warmstandby::exact_markov::ExpParams;
use warmstandby::intensity::{
    ClockArg, FullState, IntensityBounds, IntensityFn, IntensityModel, RateBand,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("the `exact` analysis needs a constant-per-mode model: {0}")]
    NotConstant(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub sim: SimSection,
    pub coupling: CouplingSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub main_fail: ChannelSpec,
    pub main_repair: ChannelSpec,
    pub standby_fail: ChannelSpec,
    pub standby_repair: ChannelSpec,
    /// Optional per-channel band overrides (may only widen derived bands).
    pub bounds: Option<BoundsSpec>,
}

/// One intensity function. The config families are bounded by construction;
/// programmatic custom functions exist only behind the library API.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// A single rate in every mode.
    Constant { rate: f64 },
    /// One rate per flag pair, ordered `(0,0), (1,0), (0,1), (1,1)`.
    PerMode { rates: [f64; 4] },
    /// `clamp(intercept + slope * clock, lo, hi)`.
    Affine {
        intercept: f64,
        slope: f64,
        clock: ClockSpec,
        lo: f64,
        hi: f64,
    },
    /// Lookup over `(flags, binned main clock, binned standby clock)`,
    /// `values[flag_index][x_bin][y_bin]`.
    Table {
        bin_width: f64,
        values: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ClockSpec {
    /// The elapsed clock of the element the channel belongs to.
    Own,
    /// The other element's elapsed clock.
    Other,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub main_fail: Option<[f64; 2]>,
    pub main_repair: Option<[f64; 2]>,
    pub standby_fail: Option<[f64; 2]>,
    pub standby_repair: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub time_grid: TimeGridSpec,
    #[serde(default = "default_hist_bins")]
    pub hist_bins: usize,
    /// Elapsed-time overflow-bin threshold; defaults to
    /// `5 / min lower bound`.
    pub bin_cap: Option<f64>,
}

fn default_hist_bins() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TimeGridSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    /// Window length, or `"auto"` for the certificate optimizer's choice.
    pub epsilon: EpsilonSpec,
    #[serde(default = "default_strategy")]
    pub strategy: StrategySpec,
    pub n_runs: usize,
    pub x0: StateSpec,
    pub x0_hat: StateSpec,
    /// Optional second attempt channel at main-element failures.
    #[serde(default)]
    pub failure_epoch_channel: bool,
}

fn default_strategy() -> StrategySpec {
    StrategySpec::Pairwise
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum StrategySpec {
    Pairwise,
    FourWay,
}

impl From<StrategySpec> for CouplingStrategy {
    fn from(s: StrategySpec) -> Self {
        match s {
            StrategySpec::Pairwise => CouplingStrategy::Pairwise,
            StrategySpec::FourWay => CouplingStrategy::FourWay,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    /// `"fresh"` (both working, clocks zero) or `"all-failed"`.
    Named(String),
    Explicit {
        main_down: bool,
        main_elapsed: f64,
        standby_down: bool,
        standby_elapsed: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default)]
    pub dump_events: bool,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.time_grid()?;
        if let EpsilonSpec::Keyword(word) = &self.coupling.epsilon {
            if word != "auto" {
                return Err(ConfigError::Invalid(format!(
                    "coupling.epsilon must be a number or \"auto\", got {word:?}"
                )));
            }
        }
        self.coupling_x0()?;
        self.coupling_x0_hat()?;
        if self.coupling.n_runs == 0 {
            return Err(ConfigError::Invalid("coupling.n_runs must be >= 1".into()));
        }
        self.intensity_model()?;
        Ok(())
    }

    pub fn intensity_model(&self) -> Result<IntensityModel, ConfigError> {
        let m = &self.model;
        let main_fail = build_channel(&m.main_fail, true)?;
        let main_repair = build_channel(&m.main_repair, true)?;
        let standby_fail = build_channel(&m.standby_fail, false)?;
        let standby_repair = build_channel(&m.standby_repair, false)?;

        let derived_band = |f: &IntensityFn, name: &str| {
            f.value_band()
                .ok_or_else(|| ConfigError::Invalid(format!("cannot derive bounds for {name}")))
        };
        let mut bounds = IntensityBounds {
            main_fail: derived_band(&main_fail, "main_fail")?,
            main_repair: derived_band(&main_repair, "main_repair")?,
            standby_fail: derived_band(&standby_fail, "standby_fail")?,
            standby_repair: derived_band(&standby_repair, "standby_repair")?,
        };
        if let Some(spec) = &m.bounds {
            for (name, given, slot) in [
                ("main_fail", &spec.main_fail, &mut bounds.main_fail),
                ("main_repair", &spec.main_repair, &mut bounds.main_repair),
                ("standby_fail", &spec.standby_fail, &mut bounds.standby_fail),
                (
                    "standby_repair",
                    &spec.standby_repair,
                    &mut bounds.standby_repair,
                ),
            ] {
                if let Some([lo, hi]) = given {
                    *slot = RateBand::new(*lo, *hi)
                        .map_err(|e| ConfigError::Invalid(format!("bounds.{name}: {e}")))?;
                }
            }
        }
        IntensityModel::with_bounds(main_fail, main_repair, standby_fail, standby_repair, bounds)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// The five constant rates, when every channel is constant per mode and
    /// only the standby failure may switch with the main element's flag.
    pub fn exp_params(&self) -> Result<ExpParams, ConfigError> {
        let single = |spec: &ChannelSpec, name: &str| -> Result<f64, ConfigError> {
            match spec {
                ChannelSpec::Constant { rate } => Ok(*rate),
                ChannelSpec::PerMode { rates } => {
                    if rates.windows(2).all(|w| w[0] == w[1]) {
                        Ok(rates[0])
                    } else {
                        Err(ConfigError::NotConstant(format!(
                            "{name} varies across modes"
                        )))
                    }
                }
                _ => Err(ConfigError::NotConstant(format!(
                    "{name} is not constant per mode"
                ))),
            }
        };
        let (lambda_standby, lambda_standby_loaded) = match &self.model.standby_fail {
            ChannelSpec::Constant { rate } => (*rate, *rate),
            ChannelSpec::PerMode { rates } => {
                if rates[0] == rates[2] && rates[1] == rates[3] {
                    (rates[0], rates[1])
                } else {
                    return Err(ConfigError::NotConstant(
                        "standby_fail may only depend on the main element's flag".into(),
                    ));
                }
            }
            _ => {
                return Err(ConfigError::NotConstant(
                    "standby_fail is not constant per mode".into(),
                ))
            }
        };
        ExpParams::new(
            single(&self.model.main_fail, "main_fail")?,
            single(&self.model.main_repair, "main_repair")?,
            lambda_standby,
            lambda_standby_loaded,
            single(&self.model.standby_repair, "standby_repair")?,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn time_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let grid = match &self.sim.time_grid {
            TimeGridSpec::List(list) => list.clone(),
            TimeGridSpec::Range { start, stop, step } => {
                if step.is_nan() || *step <= 0.0 || stop < start {
                    return Err(ConfigError::Invalid(
                        "time grid range needs step > 0 and stop >= start".into(),
                    ));
                }
                let n = ((stop - start) / step).round() as usize;
                (0..=n).map(|k| start + step * k as f64).collect()
            }
        };
        if grid.is_empty()
            || grid
                .iter()
                .any(|t| !t.is_finite() || *t < 0.0 || *t > self.sim.horizon)
            || grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(ConfigError::Invalid(
                "time grid must be nonempty, increasing, within [0, horizon]".into(),
            ));
        }
        Ok(grid)
    }

    pub fn bin_cap(&self, bounds: &IntensityBounds) -> f64 {
        self.sim.bin_cap.unwrap_or(5.0 / bounds.min_lower())
    }

    pub fn coupling_x0(&self) -> Result<FullState, ConfigError> {
        parse_state(&self.coupling.x0)
    }

    pub fn coupling_x0_hat(&self) -> Result<FullState, ConfigError> {
        parse_state(&self.coupling.x0_hat)
    }
}

fn parse_state(spec: &StateSpec) -> Result<FullState, ConfigError> {
    match spec {
        StateSpec::Named(name) => match name.as_str() {
            "fresh" => Ok(FullState::fresh_working()),
            "all-failed" => Ok(FullState::new(true, 0.0, true, 0.0)),
            other => Err(ConfigError::Invalid(format!(
                "unknown state {other:?}; use \"fresh\", \"all-failed\" or an explicit table"
            ))),
        },
        StateSpec::Explicit {
            main_down,
            main_elapsed,
            standby_down,
            standby_elapsed,
        } => {
            let state = FullState::new(*main_down, *main_elapsed, *standby_down, *standby_elapsed);
            state
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(state)
        }
    }
}

fn build_channel(spec: &ChannelSpec, is_main: bool) -> Result<IntensityFn, ConfigError> {
    match spec {
        ChannelSpec::Constant { rate } => Ok(IntensityFn::constant(*rate)),
        ChannelSpec::PerMode { rates } => Ok(IntensityFn::PerMode(*rates)),
        ChannelSpec::Affine {
            intercept,
            slope,
            clock,
            lo,
            hi,
        } => {
            let band = RateBand::new(*lo, *hi).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let arg = match (clock, is_main) {
                (ClockSpec::Own, true) | (ClockSpec::Other, false) => ClockArg::MainElapsed,
                (ClockSpec::Own, false) | (ClockSpec::Other, true) => ClockArg::StandbyElapsed,
            };
            Ok(IntensityFn::Affine {
                intercept: *intercept,
                slope: *slope,
                arg,
                band,
            })
        }
        ChannelSpec::Table { bin_width, values } => Ok(IntensityFn::Table {
            bin_width: *bin_width,
            values: values.clone(),
        }),
    }
}
