//! The five experiment subcommands.

use crate::config::{ConfigError, EpsilonSpec, ExperimentConfig};
use crate::csvout::{fmt_f64, fmt_usize, CsvFile};
use crate::AppError;
use std::path::Path;
use warmstandby::bounds::{self, BoundResult, CertificateReport, CurvePoint};
use warmstandby::coupling::{self, CouplingOptions, CouplingStrategy};
use warmstandby::exact_markov::{self, MarkovDist};
use warmstandby::intensity::{validate_bounds, FullState, IntensityModel};
use warmstandby::simulator::{self, Component, SimConfig, Transition};

fn sim_config(config: &ExperimentConfig, model: &IntensityModel) -> Result<SimConfig, AppError> {
    Ok(SimConfig {
        horizon: config.sim.horizon,
        n_paths: config.sim.n_paths,
        master_seed: config.sim.master_seed,
        time_grid: config.time_grid()?,
        hist_bins: config.sim.hist_bins,
        bin_cap: config.bin_cap(&model.bounds),
    })
}

/// Point mass on the flag pair of the given full state.
fn point_mass(state: &FullState) -> MarkovDist {
    let mut p = [0.0; 4];
    p[state.flag_index()] = 1.0;
    MarkovDist::from_array(p)
}

fn resolve_certificate(config: &ExperimentConfig) -> Result<BoundResult, AppError> {
    let model = config.intensity_model()?;
    let strategy: CouplingStrategy = config.coupling.strategy.into();
    let result = match &config.coupling.epsilon {
        EpsilonSpec::Value(eps) => bounds::certify(&model.bounds, *eps, strategy)?,
        EpsilonSpec::Keyword(_) => bounds::optimize_epsilon(
            &model.bounds,
            strategy,
            &bounds::default_epsilon_grid(&model.bounds),
        )?,
    };
    Ok(result)
}

pub fn cmd_exact(
    config: &ExperimentConfig,
    out: &Path,
    closed_form_diagnostics: bool,
) -> Result<(), AppError> {
    let params = config.exp_params()?;
    let grid = config.time_grid()?;
    let p0 = point_mass(&config.coupling_x0()?);
    let positive: Vec<f64> = grid.iter().copied().filter(|t| *t > 0.0).collect();
    let sols = exact_markov::solve_kolmogorov(&params, &p0, &positive).map_err(runtime)?;

    let mut availability = CsvFile::create(&out.join("availability.csv"), "t,availability")?;
    let mut probs = CsvFile::create(&out.join("state_probs.csv"), "t,p00,p10,p01,p11")?;
    let mut iter = sols.iter();
    for &t in &grid {
        let dist = if t == 0.0 {
            &p0
        } else {
            iter.next().expect("grid")
        };
        availability.row(&[fmt_f64(t), fmt_f64(dist.availability())])?;
        let p = dist.as_array();
        probs.row(&[
            fmt_f64(t),
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            fmt_f64(p[2]),
            fmt_f64(p[3]),
        ])?;
    }
    availability.finish()?;
    probs.finish()?;

    let spectrum = exact_markov::spectrum(&params).map_err(runtime)?;
    let mut spec_csv = CsvFile::create(&out.join("spectrum.csv"), "index,real,imag")?;
    for (i, ev) in spectrum.eigenvalues.iter().enumerate() {
        spec_csv.row(&[fmt_usize(i), fmt_f64(ev.re), fmt_f64(ev.im)])?;
    }
    spec_csv.finish()?;

    let pi = exact_markov::stationary(&params).map_err(runtime)?;
    let mut stat_csv =
        CsvFile::create(&out.join("stationary.csv"), "p00,p10,p01,p11,availability")?;
    let p = pi.as_array();
    stat_csv.row(&[
        fmt_f64(p[0]),
        fmt_f64(p[1]),
        fmt_f64(p[2]),
        fmt_f64(p[3]),
        fmt_f64(pi.availability()),
    ])?;
    stat_csv.finish()?;

    if closed_form_diagnostics {
        let report =
            exact_markov::diagnostics::closed_form_report(&params, 1e-9).map_err(runtime)?;
        let text = format!(
            "closed-form cross-check (diagnostic only; never used in certified outputs)\n\
             transcribed secondary eigenvalues: {:?} and {:?}\n\
             distance to nearest computed eigenvalue: {:.6e}\n\
             eigenvalues agree: {}\n\
             transcribed stationary availability: {:.17}\n\
             computed stationary availability:    {:.17}\n\
             availability agrees: {}\n",
            report.closed_form_roots.0,
            report.closed_form_roots.1,
            report.root_deviation,
            report.roots_agree,
            report.closed_form_availability,
            report.computed_availability,
            report.availability_agree,
        );
        std::fs::write(out.join("closed_form_check.txt"), text)?;
    }

    println!(
        "exact: spectral decay rate {} (availability, state probabilities, spectrum, stationary written to {})",
        spectrum.decay_rate(),
        out.display()
    );
    Ok(())
}

pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<(), AppError> {
    let model = config.intensity_model()?;
    let report = validate_bounds(&model, 1024, config.sim.master_seed);
    if let Some(v) = &report.violation {
        return Err(AppError::Check(format!(
            "declared bounds violated before simulation: {} = {} outside [{}, {}] at {:?}",
            v.channel, v.value, v.band.lo, v.band.hi, v.state
        )));
    }
    let x0 = config.coupling_x0()?;
    let sc = sim_config(config, &model)?;
    let ensemble = simulator::simulate_ensemble(&model, &x0, &sc).map_err(runtime)?;

    let availability = simulator::estimate_availability(&ensemble, &sc.time_grid);
    let mut avail_csv = CsvFile::create(&out.join("availability.csv"), "t,estimate,stderr")?;
    for (&t, (p, se)) in sc.time_grid.iter().zip(availability.iter()) {
        avail_csv.row(&[fmt_f64(t), fmt_f64(*p), fmt_f64(*se)])?;
    }
    avail_csv.finish()?;

    let probs = simulator::flag_probabilities(&ensemble, &sc.time_grid);
    let mut probs_csv = CsvFile::create(&out.join("state_probs.csv"), "t,p00,p10,p01,p11")?;
    for (&t, p) in sc.time_grid.iter().zip(probs.iter()) {
        probs_csv.row(&[
            fmt_f64(t),
            fmt_f64(p[0]),
            fmt_f64(p[1]),
            fmt_f64(p[2]),
            fmt_f64(p[3]),
        ])?;
    }
    probs_csv.finish()?;

    let hist = simulator::state_histogram(&ensemble, sc.horizon, sc.hist_bins, sc.bin_cap);
    let mut hist_csv = CsvFile::create(
        &out.join("histogram.csv"),
        "main_down,standby_down,x_bin,y_bin,mass",
    )?;
    for flag in 0..4usize {
        for xb in 0..sc.hist_bins {
            for yb in 0..sc.hist_bins {
                let mass = hist.mass[flag * sc.hist_bins * sc.hist_bins + xb * sc.hist_bins + yb];
                hist_csv.row(&[
                    fmt_usize(flag & 1),
                    fmt_usize(flag >> 1),
                    fmt_usize(xb),
                    fmt_usize(yb),
                    fmt_f64(mass),
                ])?;
            }
        }
    }
    hist_csv.finish()?;

    let mut cycles: Vec<f64> = Vec::new();
    for path in &ensemble.paths {
        cycles.extend(simulator::extract_epochs(path).cycle_lengths());
    }
    let n = cycles.len();
    let mean = cycles.iter().sum::<f64>() / n.max(1) as f64;
    let var = cycles.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
    let se = (var / n.max(1) as f64).sqrt();
    let dominating = 1.0 / model.bounds.main_fail.lo + 1.0 / model.bounds.main_repair.lo;
    let mut epochs_csv = CsvFile::create(
        &out.join("epochs.csv"),
        "cycles,mean_cycle,stderr,dominating_bound",
    )?;
    epochs_csv.row(&[
        fmt_usize(n),
        fmt_f64(mean),
        fmt_f64(se),
        fmt_f64(dominating),
    ])?;
    epochs_csv.finish()?;

    if config.output.dump_events {
        let mut events_csv =
            CsvFile::create(&out.join("events.csv"), "t,component,transition,path_id")?;
        for (path_id, path) in ensemble.paths.iter().enumerate() {
            for e in &path.events {
                events_csv.row(&[
                    fmt_f64(e.t),
                    match e.component {
                        Component::Main => "main".into(),
                        Component::Standby => "standby".into(),
                    },
                    match e.transition {
                        Transition::Fail => "fail".into(),
                        Transition::Repair => "repair".into(),
                    },
                    fmt_usize(path_id),
                ])?;
            }
        }
        events_csv.finish()?;
    }

    println!(
        "simulate: {} paths over horizon {} written to {}",
        sc.n_paths,
        sc.horizon,
        out.display()
    );
    Ok(())
}

pub fn cmd_couple(config: &ExperimentConfig, out: &Path) -> Result<(), AppError> {
    let model = config.intensity_model()?;
    let (runs, options) = run_coupling(config, &model)?;

    let mut tau_csv = CsvFile::create(&out.join("tau.csv"), "run_id,tau,attempts,windows_hit")?;
    for (run_id, run) in runs.iter().enumerate() {
        tau_csv.row(&[
            fmt_usize(run_id),
            run.tau.map_or_else(|| "censored".into(), fmt_f64),
            fmt_usize(run.attempts.len()),
            fmt_usize(run.windows_hit()),
        ])?;
    }
    tau_csv.finish()?;

    let grid = config.time_grid()?;
    let tail = coupling::coupling_tail(&runs, &grid);
    let mut tail_csv = CsvFile::create(&out.join("tail.csv"), "t,prob,stderr")?;
    for p in &tail {
        tail_csv.row(&[fmt_f64(p.t), fmt_f64(p.prob), fmt_f64(p.se)])?;
    }
    tail_csv.finish()?;

    let coupled = runs.iter().filter(|r| r.tau.is_some()).count();
    println!(
        "couple: {}/{} runs coupled within horizon {} (epsilon = {}) written to {}",
        coupled,
        runs.len(),
        config.sim.horizon,
        options.epsilon,
        out.display()
    );
    Ok(())
}

fn run_coupling(
    config: &ExperimentConfig,
    model: &IntensityModel,
) -> Result<(Vec<coupling::CouplingRun>, CouplingOptions), AppError> {
    let strategy: CouplingStrategy = config.coupling.strategy.into();
    let epsilon = match &config.coupling.epsilon {
        EpsilonSpec::Value(eps) => *eps,
        EpsilonSpec::Keyword(_) => resolve_certificate(config)?.epsilon,
    };
    let mut options = CouplingOptions::new(epsilon, strategy);
    options.failure_epoch_channel = config.coupling.failure_epoch_channel;
    let runs = coupling::run_coupled_ensemble(
        model,
        &config.coupling_x0()?,
        &config.coupling_x0_hat()?,
        config.sim.horizon,
        &options,
        config.sim.master_seed,
        config.coupling.n_runs,
    )
    .map_err(runtime)?;
    Ok((runs, options))
}

fn write_certificate(result: &BoundResult, out: &Path) -> Result<(), AppError> {
    let strategy_name = match result.strategy {
        CouplingStrategy::Pairwise => "pairwise",
        CouplingStrategy::FourWay => "four-way",
    };
    let mut csv = CsvFile::create(
        &out.join("certificate.csv"),
        "epsilon,pi1,pi2,kappa_residual,kappa_tilde,alpha,prefactor,valid,strategy",
    )?;
    csv.row(&[
        fmt_f64(result.epsilon),
        fmt_f64(result.pi1),
        fmt_f64(result.pi2),
        fmt_f64(result.kappa_residual),
        fmt_f64(result.kappa_tilde),
        fmt_f64(result.alpha),
        fmt_f64(result.prefactor),
        result.valid.to_string(),
        strategy_name.into(),
    ])?;
    csv.finish()?;

    let text = format!(
        "convergence-rate certificate ({strategy_name} residual matching)\n\
         window length epsilon          = {}\n\
         pi1 (primary window hit)       = {}\n\
         pi2 (secondary window hit)     = {}\n\
         kappa_residual (draws agree)   = {}\n\
         kappa_tilde (per-cycle success)= {}\n\
         alpha (certified rate)         = {}\n\
         K (certified prefactor)        = {}\n\
         valid                          = {}\n\
         TV(law(X_t), stationary) <= K * exp(-alpha * t) for all t >= 0.\n\
         note: the loaded standby failure rate has no separate band in the\n\
         general model; its half-window factor in pi2 reuses the standby\n\
         failure lower bound.\n",
        fmt_f64(result.epsilon),
        fmt_f64(result.pi1),
        fmt_f64(result.pi2),
        fmt_f64(result.kappa_residual),
        fmt_f64(result.kappa_tilde),
        fmt_f64(result.alpha),
        fmt_f64(result.prefactor),
        result.valid,
    );
    std::fs::write(out.join("certificate.txt"), text)?;
    Ok(())
}

pub fn cmd_bounds(config: &ExperimentConfig, out: &Path) -> Result<(), AppError> {
    let result = resolve_certificate(config)?;
    write_certificate(&result, out)?;
    if !result.valid {
        return Err(AppError::Check(format!(
            "no certificate: kappa_tilde = {} is too small at epsilon = {}",
            result.kappa_tilde, result.epsilon
        )));
    }
    println!(
        "bounds: alpha = {}, K = {} at epsilon = {} written to {}",
        result.alpha,
        result.prefactor,
        result.epsilon,
        out.display()
    );
    Ok(())
}

pub fn cmd_verify(config: &ExperimentConfig, out: &Path) -> Result<(), AppError> {
    let model = config.intensity_model()?;
    let result = resolve_certificate(config)?;
    write_certificate(&result, out)?;
    if !result.valid {
        let message = format!(
            "no certificate: kappa_tilde = {} at epsilon = {}",
            result.kappa_tilde, result.epsilon
        );
        std::fs::write(out.join("verify_report.txt"), format!("{message}\n"))?;
        return Err(AppError::Check(message));
    }

    let grid = config.time_grid()?;
    let x0 = config.coupling_x0()?;
    let x0_hat = config.coupling_x0_hat()?;

    // Empirical TV lower bound between ensembles from the two starts.
    let sc_a = sim_config(config, &model)?;
    let sc_b = SimConfig {
        master_seed: sc_a.master_seed ^ 0x5a5a_5a5a_5a5a_5a5a,
        ..sc_a.clone()
    };
    let ens_a = simulator::simulate_ensemble(&model, &x0, &sc_a).map_err(runtime)?;
    let ens_b = simulator::simulate_ensemble(&model, &x0_hat, &sc_b).map_err(runtime)?;
    let tv_se = simulator::tv_standard_error(sc_a.n_paths, sc_b.n_paths);
    let tv_curve: Vec<CurvePoint> = grid
        .iter()
        .map(|&t| {
            let ha = simulator::state_histogram(&ens_a, t, sc_a.hist_bins, sc_a.bin_cap);
            let hb = simulator::state_histogram(&ens_b, t, sc_b.hist_bins, sc_b.bin_cap);
            CurvePoint {
                t,
                value: simulator::estimate_tv(&ha, &hb),
                se: tv_se,
            }
        })
        .collect();

    // Empirical coupling-time tail.
    let (runs, _) = run_coupling(config, &model)?;
    let tail: Vec<CurvePoint> = coupling::coupling_tail(&runs, &grid)
        .iter()
        .map(|p| CurvePoint {
            t: p.t,
            value: p.prob,
            se: p.se,
        })
        .collect();

    let mut report = bounds::tv_certificate_check(&result, &tv_curve, &tail);

    // Constant-rate models also get the exact availability-deviation check and the
    // spectral-gap comparison.
    let exact_note = match config.exp_params() {
        Ok(params) => {
            let p0 = point_mass(&x0);
            let exact_report = bounds::availability_deviation_check(&result, &params, &p0, &grid)
                .map_err(runtime)?;
            report.lines.extend(exact_report.lines);
            String::new()
        }
        Err(ConfigError::NotConstant(why)) => {
            format!("exact availability check skipped: {why}\n")
        }
        Err(other) => return Err(other.into()),
    };

    let mut text = String::new();
    text.push_str(&exact_note);
    for line in &report.lines {
        text.push_str(&format!(
            "{} t={} observed+3se={} bound={} {}\n",
            line.label,
            line.t,
            line.observed,
            line.bound,
            if line.ok { "ok" } else { "VIOLATED" }
        ));
    }
    let ok = report.all_ok();
    text.push_str(if ok {
        "verdict: certificate dominates all observations\n"
    } else {
        "verdict: DOMINATION VIOLATED\n"
    });
    std::fs::write(out.join("verify_report.txt"), &text)?;

    let violations = report.failures().count();
    println!(
        "verify: {} checks, {} violations (report in {})",
        report.lines.len(),
        violations,
        out.join("verify_report.txt").display()
    );
    if ok {
        Ok(())
    } else {
        Err(AppError::Check(format!(
            "{violations} domination checks failed; see verify_report.txt"
        )))
    }
}

/// Core runtime failures map to the check exit code.
fn runtime<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Check(e.to_string())
}

impl From<CertificateReport> for AppError {
    fn from(report: CertificateReport) -> Self {
        AppError::Check(format!("{} checks failed", report.failures().count()))
    }
}
