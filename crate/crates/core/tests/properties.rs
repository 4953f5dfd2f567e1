//! Cross-module properties: ergodicity empirics, marginal preservation of
//! the secondary coupled process, the discrete brute-force oracle for the
//! maximal-coupling construction, and determinism invariants.

mod common;

use common::*;
use proptest::prelude::*;
use warmstandby::coupling::{self, CouplingOptions, CouplingStrategy};
use warmstandby::intensity::{FullState, IntensityFn, IntensityModel};
use warmstandby::simulator::{self, SimConfig};

fn reference_model() -> IntensityModel {
    IntensityModel::from_exp_params(&reference_params()).unwrap()
}

/// Ergodicity empirics: state histograms at t = 20 / min-rate from two
/// different initial conditions are within 0.02 in (histogram) total
/// variation with 1e5 paths per side.
#[test]
fn ergodicity_histograms_from_two_starts_converge() {
    let model = reference_model();
    let min_rate = model.bounds.min_lower();
    let t = 20.0 / min_rate;
    let bin_cap = 5.0 / min_rate;
    let n = 100_000usize;
    let a = simulator::streamed_state_histogram(
        &model,
        &FullState::fresh_working(),
        t,
        n,
        0xE701,
        16,
        bin_cap,
    )
    .unwrap();
    let b = simulator::streamed_state_histogram(
        &model,
        &FullState::new(true, 0.0, true, 0.0),
        t,
        n,
        0xE702,
        16,
        bin_cap,
    )
    .unwrap();
    let tv = simulator::estimate_tv(&a, &b);
    assert!(tv <= 0.02, "TV estimate {tv} above 0.02 at t = {t}");
}

/// Marginal preservation of the secondary process: the mirrored trajectory's
/// flag-state distribution matches an independently simulated ensemble from
/// the same initial state (chi-squared at 1%, 1e4 runs).
#[test]
fn coupled_secondary_marginal_is_preserved() {
    let model = reference_model();
    let x0 = FullState::fresh_working();
    let x0_hat = FullState::new(true, 0.0, true, 0.0);
    let options = CouplingOptions::new(0.5, CouplingStrategy::Pairwise);
    let n = 10_000usize;
    let runs =
        coupling::run_coupled_ensemble(&model, &x0, &x0_hat, 10.0, &options, 0xE713, n).unwrap();
    let grid = [1.0, 3.0, 10.0];
    let config = SimConfig {
        horizon: 10.0,
        n_paths: n,
        master_seed: 0xE714,
        time_grid: grid.to_vec(),
        hist_bins: 16,
        bin_cap: 5.0 / 0.3,
    };
    let ensemble = simulator::simulate_ensemble(&model, &x0_hat, &config).unwrap();
    for &t in &grid {
        let mut coupled_counts = [0usize; 4];
        for run in &runs {
            coupled_counts[run.secondary_path.state_at(t).flag_index()] += 1;
        }
        let mut plain_counts = [0usize; 4];
        for path in &ensemble.paths {
            plain_counts[path.state_at(t).flag_index()] += 1;
        }
        let stat = chi2_homogeneity(&coupled_counts, &plain_counts);
        assert!(
            stat < CHI2_3DF_1PCT,
            "t={t}: chi2 = {stat:.2} ({coupled_counts:?} vs {plain_counts:?})"
        );
    }
}

/// Discrete brute-force oracle for the maximal-coupling construction: on
/// finitely many atoms the coincidence probability is exactly the summed
/// minimum, checked by a two-sided binomial z-test at the 1% level.
#[test]
fn discrete_maximal_coupling_matches_brute_force() {
    struct Lcg(u64);
    impl Lcg {
        fn uniform(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    // Mirrors the continuous construction on atom weights.
    fn draw(p: &[f64], q: &[f64], kappa: f64, rng: &mut Lcg) -> bool {
        let pick = |weights: &[f64], norm: f64, rng: &mut Lcg| -> usize {
            let mut u = rng.uniform() * norm;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    return i;
                }
                u -= w;
            }
            weights.len() - 1
        };
        if rng.uniform() < kappa {
            let mins: Vec<f64> = p.iter().zip(q).map(|(a, b)| a.min(*b)).collect();
            let _atom = pick(&mins, kappa, rng);
            true
        } else {
            let rp: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - a.min(*b)).collect();
            let rq: Vec<f64> = p.iter().zip(q).map(|(a, b)| b - a.min(*b)).collect();
            let i = pick(&rp, 1.0 - kappa, rng);
            let j = pick(&rq, 1.0 - kappa, rng);
            i == j // residual supports are disjoint, so never equal
        }
    }

    let cases: [(&[f64], &[f64]); 4] = [
        (&[0.5, 0.5], &[0.2, 0.8]),
        (&[0.1, 0.2, 0.3, 0.4], &[0.4, 0.3, 0.2, 0.1]),
        (
            &[0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125],
            &[0.3, 0.1, 0.05, 0.05, 0.2, 0.1, 0.1, 0.1],
        ),
        (&[0.9, 0.05, 0.05], &[0.05, 0.9, 0.05]),
    ];
    let mut rng = Lcg(0xE705_0001);
    let n = 50_000usize;
    for (case, (p, q)) in cases.iter().enumerate() {
        let kappa: f64 = p.iter().zip(q.iter()).map(|(a, b)| a.min(*b)).sum();
        let ties = (0..n).filter(|_| draw(p, q, kappa, &mut rng)).count();
        let freq = ties as f64 / n as f64;
        // Two-sided z-test at the 1% level.
        let z = (freq - kappa) / (kappa * (1.0 - kappa) / n as f64).sqrt();
        assert!(
            z.abs() < 2.5758,
            "case {case}: frequency {freq} vs kappa {kappa} (z = {z:.2})"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Identical (model, x0, config) inputs give bit-identical ensembles.
    #[test]
    fn ensembles_are_reproducible(seed in any::<u64>(), n_paths in 1usize..40) {
        let model = reference_model();
        let config = SimConfig {
            horizon: 5.0,
            n_paths,
            master_seed: seed,
            time_grid: vec![2.5, 5.0],
            hist_bins: 8,
            bin_cap: 10.0,
        };
        let x0 = FullState::fresh_working();
        let a = simulator::simulate_ensemble(&model, &x0, &config).unwrap();
        let b = simulator::simulate_ensemble(&model, &x0, &config).unwrap();
        for (pa, pb) in a.paths.iter().zip(b.paths.iter()) {
            prop_assert_eq!(pa.events.len(), pb.events.len());
            for (ea, eb) in pa.events.iter().zip(pb.events.iter()) {
                prop_assert_eq!(ea, eb);
            }
        }
    }

    /// Histograms are normalized for arbitrary shapes and observation times.
    #[test]
    fn histograms_always_normalize(
        seed in any::<u64>(),
        bins in 2usize..24,
        t_frac in 0.0f64..1.0,
    ) {
        let model = reference_model();
        let config = SimConfig {
            horizon: 8.0,
            n_paths: 50,
            master_seed: seed,
            time_grid: vec![8.0],
            hist_bins: bins,
            bin_cap: 4.0,
        };
        let ensemble =
            simulator::simulate_ensemble(&model, &FullState::fresh_working(), &config).unwrap();
        let hist = simulator::state_histogram(&ensemble, t_frac * 8.0, bins, 4.0);
        let total: f64 = hist.mass.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(hist.mass.iter().all(|m| *m >= 0.0));
    }

    /// Coupled runs are reproducible and faithful: identical seeds replay
    /// identically, and after tau the trajectories agree event for event.
    #[test]
    fn coupled_runs_reproducible_and_faithful(seed in any::<u64>(), run in 0u64..16) {
        let model = reference_model();
        let x0 = FullState::fresh_working();
        let x0_hat = FullState::new(true, 0.0, false, 2.0);
        let options = CouplingOptions::new(0.75, CouplingStrategy::Pairwise);
        let a = coupling::run_coupled(&model, &x0, &x0_hat, 15.0, &options, seed, run).unwrap();
        let b = coupling::run_coupled(&model, &x0, &x0_hat, 15.0, &options, seed, run).unwrap();
        prop_assert_eq!(a.tau, b.tau);
        prop_assert_eq!(a.primary_path.events.len(), b.primary_path.events.len());
        if let Some(tau) = a.tau {
            // Event-for-event agreement after the coupling epoch.
            let ya: Vec<_> = a.primary_path.events.iter().filter(|e| e.t >= tau).collect();
            let ha: Vec<_> = a.secondary_path.events.iter().filter(|e| e.t >= tau).collect();
            prop_assert_eq!(ya, ha);
        }
    }

    /// The intensity-reconstructed cdf is nondecreasing with values in
    /// [0, 1] for arbitrary clamped-affine families.
    #[test]
    fn affine_cdf_monotone(intercept in -2.0f64..2.0, slope in -1.0f64..1.0) {
        let band = warmstandby::intensity::RateBand::new(0.4, 2.5).unwrap();
        let f = IntensityFn::Affine {
            intercept,
            slope,
            arg: warmstandby::intensity::ClockArg::MainElapsed,
            band,
        };
        let phi = move |u: f64| f.eval(&FullState::new(false, u, false, u));
        let mut prev = 0.0f64;
        for k in 0..=40 {
            let s = k as f64 * 0.25;
            let v = warmstandby::intensity::cdf_from_intensity(&phi, s).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v + 1e-12 >= prev);
            prev = v;
        }
    }
}
