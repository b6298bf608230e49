//! Synthetic multi-environment generators with known confounding, plus the
//! closed-form second moments of the linear-Gaussian model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EnvBlock, MultiEnvDataset};
use crate::error::{Error, Result};

/// `U ~ N(θ_U, 1)`, `T ~ Bernoulli(σ(U + θ_T))`, `Y ~ Bernoulli(σ(λU + T + θ_Y))`
/// with `θ_V ~ N(0, σ_{θ_V}²)` drawn once per environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinaryScmSpec {
    pub lambda: f64,
    pub sigma_theta_t: f64,
    pub sigma_theta_y: f64,
    pub sigma_theta_u: f64,
}

impl Default for BinaryScmSpec {
    fn default() -> Self {
        BinaryScmSpec { lambda: 0.0, sigma_theta_t: 1.0, sigma_theta_y: 1.0, sigma_theta_u: 1.0 }
    }
}

impl BinaryScmSpec {
    pub fn with_lambda(lambda: f64) -> Self {
        BinaryScmSpec { lambda, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite".into()));
        }
        check_sigmas(&[
            ("sigma_theta_t", self.sigma_theta_t),
            ("sigma_theta_y", self.sigma_theta_y),
            ("sigma_theta_u", self.sigma_theta_u),
        ])
    }
}

/// `U = θ_U + ε_U`, `T = γU + θ_T + ε_T`, `Y = λU + βT + θ_Y + ε_Y` with
/// `ε_V ~ N(0, σ_V²)` per observation and `θ_V ~ N(0, σ_{θ_V}²)` per environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussScmSpec {
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub sigma_t: f64,
    pub sigma_y: f64,
    pub sigma_u: f64,
    pub sigma_theta_t: f64,
    pub sigma_theta_y: f64,
    pub sigma_theta_u: f64,
}

impl Default for GaussScmSpec {
    fn default() -> Self {
        GaussScmSpec {
            beta: 1.0,
            gamma: 1.0,
            lambda: 1.0,
            sigma_t: 1.0,
            sigma_y: 1.0,
            sigma_u: 1.0,
            sigma_theta_t: 1.0,
            sigma_theta_y: 1.0,
            sigma_theta_u: 1.0,
        }
    }
}

impl GaussScmSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("lambda", self.lambda)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        check_sigmas(&[
            ("sigma_t", self.sigma_t),
            ("sigma_y", self.sigma_y),
            ("sigma_u", self.sigma_u),
            ("sigma_theta_t", self.sigma_theta_t),
            ("sigma_theta_y", self.sigma_theta_y),
            ("sigma_theta_u", self.sigma_theta_u),
        ])?;
        if self.sigma_theta_t == 0.0 && self.sigma_theta_u == 0.0 {
            return Err(Error::Config(
                "at least one of sigma_theta_t and sigma_theta_u must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Copy with the listed mechanisms held fixed.
    pub fn with_degenerate(mut self, degenerate: &[Mechanism]) -> Self {
        for m in degenerate {
            match m {
                Mechanism::T => self.sigma_theta_t = 0.0,
                Mechanism::Y => self.sigma_theta_y = 0.0,
                Mechanism::U => self.sigma_theta_u = 0.0,
            }
        }
        self
    }
}

fn check_sigmas(values: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in values {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    T,
    Y,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ScmSpec {
    Binary(BinaryScmSpec),
    Gaussian(GaussScmSpec),
}

impl ScmSpec {
    pub fn sample(&self, k: usize, n_per_env: usize, seed: u64) -> Result<MultiEnvDataset> {
        match self {
            ScmSpec::Binary(s) => sample_binary_scm(s, k, n_per_env, seed),
            ScmSpec::Gaussian(s) => sample_gauss_scm(s, k, n_per_env, seed, &[]),
        }
    }
}

/// Per-environment mechanism values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismDraw {
    pub theta_t: f64,
    pub theta_y: f64,
    pub theta_u: f64,
}

/// Hidden quantities behind a simulated dataset, in block order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub draws: Vec<MechanismDraw>,
    pub u: Vec<Vec<f64>>,
}

pub fn env_id(k: usize) -> String {
    format!("env{k:05}")
}

fn env_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_sizes(k: usize, n: usize) -> Result<()> {
    if k == 0 || n == 0 {
        return Err(Error::Config(format!("need at least one environment and one observation, got K={k}, N={n}")));
    }
    Ok(())
}

fn assemble(parts: Vec<(EnvBlock, MechanismDraw, Vec<f64>)>) -> Result<(MultiEnvDataset, GroundTruth)> {
    let mut blocks = Vec::with_capacity(parts.len());
    let mut truth = GroundTruth { draws: Vec::with_capacity(parts.len()), u: Vec::with_capacity(parts.len()) };
    for (b, d, u) in parts {
        blocks.push(b);
        truth.draws.push(d);
        truth.u.push(u);
    }
    Ok((MultiEnvDataset::new(blocks)?, truth))
}

/// Binary treatment and outcome with a logistic link. Environment `k` uses
/// stream `k` of a ChaCha8 generator keyed by `seed`.
pub fn sample_binary_scm(spec: &BinaryScmSpec, k: usize, n_per_env: usize, seed: u64) -> Result<MultiEnvDataset> {
    Ok(sample_binary_scm_with_ground_truth(spec, k, n_per_env, seed)?.0)
}

pub fn sample_binary_scm_with_ground_truth(
    spec: &BinaryScmSpec,
    k: usize,
    n_per_env: usize,
    seed: u64,
) -> Result<(MultiEnvDataset, GroundTruth)> {
    spec.validate()?;
    check_sizes(k, n_per_env)?;
    let parts = (0..k)
        .into_par_iter()
        .map(|e| {
            let mut rng = env_rng(seed, e);
            let draw = MechanismDraw {
                theta_t: spec.sigma_theta_t * normal(&mut rng),
                theta_y: spec.sigma_theta_y * normal(&mut rng),
                theta_u: spec.sigma_theta_u * normal(&mut rng),
            };
            let (mut t, mut y, mut u) = (Vec::with_capacity(n_per_env), Vec::with_capacity(n_per_env), Vec::with_capacity(n_per_env));
            for _ in 0..n_per_env {
                let ui = draw.theta_u + normal(&mut rng);
                let ti = f64::from(rng.random::<f64>() < sigmoid(ui + draw.theta_t));
                let yi = f64::from(rng.random::<f64>() < sigmoid(spec.lambda * ui + ti + draw.theta_y));
                u.push(ui);
                t.push(ti);
                y.push(yi);
            }
            (EnvBlock::new(env_id(e), t, y, vec![]), draw, u)
        })
        .collect();
    assemble(parts)
}

/// Linear-Gaussian treatment and outcome; mechanisms in `degenerate` are fixed at 0.
pub fn sample_gauss_scm(
    spec: &GaussScmSpec,
    k: usize,
    n_per_env: usize,
    seed: u64,
    degenerate: &[Mechanism],
) -> Result<MultiEnvDataset> {
    Ok(sample_gauss_scm_with_ground_truth(spec, k, n_per_env, seed, degenerate)?.0)
}

pub fn sample_gauss_scm_with_ground_truth(
    spec: &GaussScmSpec,
    k: usize,
    n_per_env: usize,
    seed: u64,
    degenerate: &[Mechanism],
) -> Result<(MultiEnvDataset, GroundTruth)> {
    let s = spec.with_degenerate(degenerate);
    s.validate()?;
    check_sizes(k, n_per_env)?;
    let parts = (0..k)
        .into_par_iter()
        .map(|e| {
            let mut rng = env_rng(seed, e);
            let draw = MechanismDraw {
                theta_t: s.sigma_theta_t * normal(&mut rng),
                theta_y: s.sigma_theta_y * normal(&mut rng),
                theta_u: s.sigma_theta_u * normal(&mut rng),
            };
            let (mut t, mut y, mut u) = (Vec::with_capacity(n_per_env), Vec::with_capacity(n_per_env), Vec::with_capacity(n_per_env));
            for _ in 0..n_per_env {
                let ui = draw.theta_u + s.sigma_u * normal(&mut rng);
                let ti = s.gamma * ui + draw.theta_t + s.sigma_t * normal(&mut rng);
                let yi = s.lambda * ui + s.beta * ti + draw.theta_y + s.sigma_y * normal(&mut rng);
                u.push(ui);
                t.push(ti);
                y.push(yi);
            }
            (EnvBlock::new(env_id(e), t, y, vec![]), draw, u)
        })
        .collect();
    assemble(parts)
}

/// Population second moments of two observations `i ≠ j` from one environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossMoments {
    pub cov_tj_yi: f64,
    pub cov_tj_ti: f64,
    pub cov_ti_yi: f64,
    pub var_t: f64,
    pub var_y: f64,
}

struct Variances {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
}

fn variances(s: &GaussScmSpec) -> Variances {
    Variances {
        a: s.sigma_theta_u.powi(2),
        b: s.sigma_u.powi(2),
        c: s.sigma_theta_t.powi(2),
        d: s.sigma_t.powi(2),
        e: s.sigma_theta_y.powi(2) + s.sigma_y.powi(2),
    }
}

pub fn analytic_cross_covariances(spec: &GaussScmSpec) -> CrossMoments {
    let GaussScmSpec { beta, gamma, lambda, .. } = *spec;
    let Variances { a, b, c, d, e } = variances(spec);
    let conf = gamma * lambda + beta * gamma * gamma;
    CrossMoments {
        cov_tj_yi: conf * a + beta * c,
        cov_tj_ti: gamma * gamma * a + c,
        cov_ti_yi: conf * (a + b) + beta * (c + d),
        var_t: gamma * gamma * (a + b) + c + d,
        // Y = (λ + βγ)U + β(θ_T + ε_T) + θ_Y + ε_Y.
        var_y: (lambda + beta * gamma).powi(2) * (a + b) + beta * beta * (c + d) + e,
    }
}

/// Population partial correlation `ρ(T_j, Y_i | T_i)`.
///
/// Evaluated in the factored form
/// `γλ(σ²_ΘU σ²_T − σ²_U σ²_ΘT) / sqrt((γ²σ²_U + σ²_T)(Var T + Cov(T_j,T_i)) Δ)`
/// where `Δ = Var T · Var Y − Cov(T_i,Y_i)²`, which stays accurate when the
/// textbook correlation recursion would cancel catastrophically.
pub fn analytic_partial_correlation(spec: &GaussScmSpec) -> Result<f64> {
    let GaussScmSpec { gamma, lambda, .. } = *spec;
    let Variances { a, b, c, d, e } = variances(spec);
    let m = analytic_cross_covariances(spec);
    if !(m.var_t > 0.0) {
        return Err(Error::Domain("Var(T) vanishes".into()));
    }
    let within = gamma * gamma * b + d;
    if !(within > 0.0) {
        return Err(Error::Domain("1 - corr(T_j, T_i)^2 vanishes (no within-environment variation in T)".into()));
    }
    let det = (a + b) * (c + d) * lambda * lambda + (a + b) * e * gamma * gamma + (c + d) * e;
    if !(det > 0.0) {
        return Err(Error::Domain("1 - corr(T_i, Y_i)^2 vanishes (Y is a deterministic function of T)".into()));
    }
    let num = gamma * lambda * (a * d - b * c);
    let rho = num / (within * (m.var_t + m.cov_tj_ti) * det).sqrt();
    Ok(rho.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Gamma,
    Lambda,
}

/// [`analytic_partial_correlation`] with `γ` or `λ` set to `magnitude`.
pub fn partial_correlation_asymptote(spec: &GaussScmSpec, which: Coefficient, magnitude: f64) -> Result<f64> {
    if !(magnitude > 0.0) {
        return Err(Error::Domain(format!("magnitude must be positive, got {magnitude}")));
    }
    let mut s = *spec;
    match which {
        Coefficient::Gamma => s.gamma = magnitude,
        Coefficient::Lambda => s.lambda = magnitude,
    }
    analytic_partial_correlation(&s)
}

/// Slope of `E[Y | do(T)] − E[Y | T]` when `T` is a deterministic multiple of
/// `U`: `−λ/γ`.
pub fn omitted_variable_bias(spec: &GaussScmSpec) -> Result<f64> {
    if spec.gamma == 0.0 {
        return Err(Error::Domain("gamma is zero, so U does not enter T".into()));
    }
    Ok(-spec.lambda / spec.gamma)
}

/// Slope of `E[Y | do(T)] − E[Y | T]` under the full pooled model,
/// `−λγ(σ²_ΘU + σ²_U) / Var T`. Equals [`omitted_variable_bias`] when
/// `σ_T = σ_ΘT = 0`.
pub fn population_confounding_bias(spec: &GaussScmSpec) -> Result<f64> {
    let Variances { a, b, .. } = variances(spec);
    let var_t = analytic_cross_covariances(spec).var_t;
    if !(var_t > 0.0) {
        return Err(Error::Domain("Var(T) vanishes".into()));
    }
    Ok(-spec.lambda * spec.gamma * (a + b) / var_t)
}

/// `σ_ΘU` at which `ρ(T_j, Y_i | T_i)` is zero despite confounding.
pub fn faithfulness_locus(sigma_u: f64, sigma_t: f64, sigma_theta_t: f64) -> Result<f64> {
    if !(sigma_t > 0.0) {
        return Err(Error::Domain(format!("sigma_t must be positive, got {sigma_t}")));
    }
    Ok(sigma_u / sigma_t * sigma_theta_t)
}
