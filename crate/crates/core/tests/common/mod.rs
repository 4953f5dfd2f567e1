#![allow(dead_code)]

//! Shared statistics helpers and oracles for the integration suites.

use warmstandby::exact_markov::ExpParams;

/// Asymptotic 1% critical value of the Kolmogorov-Smirnov statistic,
/// `c(0.01) = sqrt(-ln(0.005) / 2)`.
pub const KS_1PCT: f64 = 1.6276236115189504;

/// 1% upper quantile of chi-squared with 3 degrees of freedom.
pub const CHI2_3DF_1PCT: f64 = 11.344866730144373;

/// Two-sided KS statistic of sorted samples against a cdf.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Pearson chi-squared statistic of a 2 x k homogeneity table
/// (3 degrees of freedom for k = 4).
pub fn chi2_homogeneity(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let na: f64 = a.iter().sum::<usize>() as f64;
    let nb: f64 = b.iter().sum::<usize>() as f64;
    let mut stat = 0.0;
    for (&ca, &cb) in a.iter().zip(b.iter()) {
        let pooled = (ca + cb) as f64 / (na + nb);
        if pooled == 0.0 {
            continue;
        }
        let ea = na * pooled;
        let eb = nb * pooled;
        stat += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
    }
    stat
}

/// Matrix exponential `exp(Q t)` applied to a row vector, by scaling and
/// squaring with a Taylor core. Independent of the adaptive ODE path.
pub fn matexp_propagate(q: &[[f64; 4]; 4], p0: &[f64; 4], t: f64) -> [f64; 4] {
    let mut a = [[0.0f64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = q[i][j] * t;
        }
    }
    let norm: f64 = a
        .iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings as i32);
    for row in &mut a {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let mut result = identity();
    let mut term = identity();
    for k in 1..=24u32 {
        term = matmul(&term, &a);
        for row in &mut term {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    let mut p = [0.0f64; 4];
    for j in 0..4 {
        for i in 0..4 {
            p[j] += p0[i] * result[i][j];
        }
    }
    p
}

fn identity() -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn matmul(x: &[[f64; 4]; 4], y: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for (k, yk) in y.iter().enumerate() {
                out[i][j] += x[i][k] * yk[j];
            }
        }
    }
    out
}

/// Deterministic xorshift values in `[lo, hi]`.
pub struct SweepRng(pub u64);

impl SweepRng {
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        lo + (hi - lo) * (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// The constant-rate reference model used across the acceptance suite.
pub fn reference_params() -> ExpParams {
    ExpParams::new(1.0, 2.0, 0.3, 0.6, 1.5).unwrap()
}

/// Prints the per-criterion verdict line and panics on failure.
pub fn report(criterion: &str, failures: Vec<String>) {
    if failures.is_empty() {
        println!("acceptance {criterion}: PASS");
    } else {
        println!("acceptance {criterion}: FAIL");
        for f in &failures {
            println!("  - {f}");
        }
        panic!("{criterion} failed:\n{}", failures.join("\n"));
    }
}
