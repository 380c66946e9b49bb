//! Cross-sectional IV designs shared by the integration tests.
#![allow(dead_code)]

use growthiv::DesignMatrices;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy)]
pub struct IvConfig {
    pub n: usize,
    /// Excluded instruments.
    pub m: usize,
    /// First-stage loading of every instrument.
    pub pi: f64,
    /// Correlation between the structural and first-stage errors.
    pub rho: f64,
    /// Direct effect of the first instrument on the outcome (invalid when nonzero).
    pub invalid: f64,
    pub beta: f64,
    pub cluster_size: usize,
}

impl Default for IvConfig {
    fn default() -> Self {
        IvConfig { n: 2000, m: 3, pi: 0.3, rho: 0.0, invalid: 0.0, beta: 1.0, cluster_size: 2 }
    }
}

/// y = 1 + βx + 0.5w + u, x = 0.5 + πΣz + 0.3w + v, u = ρv + √(1−ρ²)e + invalid·z₁.
pub fn iv_design(cfg: IvConfig, seed: u64) -> DesignMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let n = cfg.n;
    let mut y = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, 1);
    let mut exog = DMatrix::zeros(n, 2);
    let mut z = DMatrix::zeros(n, cfg.m);
    for i in 0..n {
        let w = draw();
        let mut zsum = 0.0;
        for j in 0..cfg.m {
            z[(i, j)] = draw();
            zsum += z[(i, j)];
        }
        let v = draw();
        let e = draw();
        let u = cfg.rho * v + (1.0 - cfg.rho * cfg.rho).sqrt() * e + cfg.invalid * z[(i, 0)];
        let xi = 0.5 + cfg.pi * zsum + 0.3 * w + v;
        x[(i, 0)] = xi;
        y[i] = 1.0 + cfg.beta * xi + 0.5 * w + u;
        exog[(i, 0)] = 1.0;
        exog[(i, 1)] = w;
    }
    let keys: Vec<usize> = (0..n).map(|i| i / cfg.cluster_size.max(1)).collect();
    DesignMatrices::new(
        y,
        x,
        vec!["x".into()],
        exog,
        vec!["const".into(), "w".into()],
        z,
        (0..cfg.m).map(|j| format!("z{j}")).collect(),
        &keys,
    )
    .expect("valid design")
}

pub fn share(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

/// The bias-report row for one estimator, outcome and coefficient.
pub fn bias_row<'a>(
    rows: &'a [growthiv::synth::BiasRow],
    estimator: &str,
    outcome: growthiv::domain::Outcome,
    coefficient: &str,
) -> &'a growthiv::synth::BiasRow {
    rows.iter()
        .find(|r| r.estimator == estimator && r.outcome == outcome && r.coefficient == coefficient)
        .expect("row present in bias report")
}

/// Bias report for one seeded synthetic panel.
pub fn bias_rep(params: &growthiv::synth::StructuralParams, seed: u64) -> Vec<growthiv::synth::BiasRow> {
    let p = growthiv::synth::StructuralParams { seed, ..params.clone() };
    let panel = growthiv::synth::generate_panel(&p).unwrap();
    growthiv::synth::oracle_bias_report(&panel, &p).unwrap()
}
