//! Cross-environment pairing, per-round independence tests and Fisher
//! aggregation for detecting a hidden treatment–outcome confounder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::dataset::{EnvBlock, MultiEnvDataset};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::stats::{chi2_survival, CiTestConfig, CiTestResult, ColumnKind, SampleMatrix, TestKind};

/// Lower clamp applied to p-values before taking logs.
pub const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// `t_j ⊥ y_i | t_i, x_i, x_j`.
    WithCovariates,
    /// `t_j ⊥ y_i | t_i` and `t_j ⊥ y_i | y_j`, both required to fail.
    TwoVariable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub alpha: f64,
    pub k_min: usize,
    pub test: CiTestConfig,
    pub theorem: Theorem,
    pub max_rounds: Option<usize>,
    pub seed: u64,
}

impl DetectorConfig {
    pub fn new(test: TestKind) -> Self {
        DetectorConfig {
            alpha: 0.05,
            k_min: 25,
            test: CiTestConfig::new(test),
            theorem: Theorem::WithCovariates,
            max_rounds: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.k_min < 2 {
            return Err(Error::Config(format!("k_min must be at least 2, got {}", self.k_min)));
        }
        if self.max_rounds == Some(0) {
            return Err(Error::Config("max_rounds must be positive when set".into()));
        }
        Ok(())
    }
}

/// One observation pair `(2i-1, 2i)` drawn from every environment with at
/// least `2i` rows. "First" is observation `2i-1` (the `j` copy), "second" is
/// observation `2i` (the `i` copy).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRound {
    pub index: usize,
    pub env_ids: Vec<String>,
    pub t_first: Vec<f64>,
    pub y_first: Vec<f64>,
    pub x_first: Vec<Vec<f64>>,
    pub t_second: Vec<f64>,
    pub y_second: Vec<f64>,
    pub x_second: Vec<Vec<f64>>,
}

impl PairedRound {
    pub fn n_envs(&self) -> usize {
        self.env_ids.len()
    }
}

/// Assembles rounds `i = 1, 2, …` until fewer than `k_min` environments still
/// have a fresh pair, or `max_rounds` is reached.
pub fn build_rounds(data: &MultiEnvDataset, k_min: usize, max_rounds: Option<usize>) -> Result<Vec<PairedRound>> {
    let order = data.sorted_order();
    let blocks = data.blocks();
    let p = data.n_covariates();
    let longest = blocks.iter().map(EnvBlock::len).max().unwrap_or(0);
    let mut rounds = Vec::new();
    for i in 1..=longest / 2 {
        if max_rounds.is_some_and(|m| rounds.len() >= m) {
            break;
        }
        let (first, second) = (2 * i - 2, 2 * i - 1);
        let members: Vec<&EnvBlock> = order.iter().map(|&k| &blocks[k]).filter(|b| b.len() >= 2 * i).collect();
        if members.len() < k_min.max(1) {
            break;
        }
        rounds.push(PairedRound {
            index: i,
            env_ids: members.iter().map(|b| b.env_id.clone()).collect(),
            t_first: members.iter().map(|b| b.t[first]).collect(),
            y_first: members.iter().map(|b| b.y[first]).collect(),
            x_first: (0..p).map(|c| members.iter().map(|b| b.x[c][first]).collect()).collect(),
            t_second: members.iter().map(|b| b.t[second]).collect(),
            y_second: members.iter().map(|b| b.y[second]).collect(),
            x_second: (0..p).map(|c| members.iter().map(|b| b.x[c][second]).collect()).collect(),
        });
    }
    if rounds.is_empty() {
        let paired = blocks.iter().filter(|b| b.len() >= 2).count();
        return Err(Error::InsufficientData(format!(
            "no testing round possible: {paired} environment(s) have two observations, k_min is {k_min}"
        )));
    }
    Ok(rounds)
}

/// Fisher's method: `z = -2 Σ ln p`, global p from χ² with `2L` degrees of freedom.
pub fn fisher_combine(p_values: &[f64]) -> Result<(f64, f64)> {
    if p_values.is_empty() {
        return Err(Error::Usage("Fisher combination needs at least one p-value".into()));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p-value {p} outside [0, 1]")));
    }
    let z = -2.0 * p_values.iter().map(|p| p.max(P_FLOOR).ln()).sum::<f64>();
    let z = z.max(0.0);
    Ok((z, chi2_survival(z, 2 * p_values.len() as u32)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub i: usize,
    pub n_envs: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub alpha: f64,
    pub test: TestKind,
    pub rounds: Vec<RoundReport>,
    pub fisher_z: f64,
    pub global_p: f64,
    pub rejected: bool,
}

impl DetectionReport {
    pub fn rounds_used(&self) -> usize {
        self.rounds.len()
    }

    pub fn round_p_values(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.p).collect()
    }
}

fn check_kinds(data: &MultiEnvDataset, test: TestKind) -> Result<()> {
    let discrete = |k: ColumnKind| k.is_discrete();
    match test {
        TestKind::GTest => {
            let ok = discrete(data.t_kind()) && discrete(data.y_kind()) && data.x_kinds().iter().all(|&k| discrete(k));
            if !ok {
                return Err(Error::Config("g_test needs binary or categorical t, y and x columns".into()));
            }
        }
        TestKind::Permutation => {
            let ok = discrete(data.t_kind()) && data.x_kinds().iter().all(|&k| discrete(k));
            if !ok {
                return Err(Error::Config(
                    "permutation test conditions on t and x, which must be binary or categorical".into(),
                ));
            }
        }
        TestKind::PartialCorr | TestKind::Kci => {}
    }
    Ok(())
}

fn round_matrix(r: &PairedRound, data: &MultiEnvDataset) -> Result<SampleMatrix> {
    let mut m = SampleMatrix::new();
    m.push("t_j", data.t_kind(), r.t_first.clone())?;
    m.push("y_j", data.y_kind(), r.y_first.clone())?;
    m.push("t_i", data.t_kind(), r.t_second.clone())?;
    m.push("y_i", data.y_kind(), r.y_second.clone())?;
    for (c, &kind) in data.x_kinds().iter().enumerate() {
        m.push(format!("x{}_i", c + 1), kind, r.x_second[c].clone())?;
        m.push(format!("x{}_j", c + 1), kind, r.x_first[c].clone())?;
    }
    Ok(m)
}

/// A round whose data make the test statistic undefined carries no evidence
/// and is scored p = 1.
fn tolerant(res: Result<CiTestResult>, round: usize) -> Result<f64> {
    match res {
        Ok(r) => Ok(r.p_value),
        Err(Error::DegenerateInput(msg)) => {
            log::warn!("round {round}: {msg}; scoring p = 1");
            Ok(1.0)
        }
        Err(e) => Err(e),
    }
}

fn round_p(r: &PairedRound, data: &MultiEnvDataset, config: &DetectorConfig) -> Result<f64> {
    let m = round_matrix(r, data)?;
    let test = config.test.with_seed(derive_seed(config.seed, r.index as u64, 0));
    match config.theorem {
        Theorem::WithCovariates => {
            let xs: Vec<String> = (1..=data.n_covariates())
                .flat_map(|c| [format!("x{c}_i"), format!("x{c}_j")])
                .collect();
            let mut cond = vec!["t_i"];
            cond.extend(xs.iter().map(String::as_str));
            tolerant(test.run(&m, "t_j", "y_i", &cond), r.index)
        }
        Theorem::TwoVariable => {
            let p1 = tolerant(test.run(&m, "t_j", "y_i", &["t_i"]), r.index)?;
            let p2 = tolerant(test.run(&m, "t_j", "y_i", &["y_j"]), r.index)?;
            Ok(p1.max(p2))
        }
    }
}

/// Runs every round's independence test and aggregates them.
pub fn detect(data: &MultiEnvDataset, config: &DetectorConfig) -> Result<DetectionReport> {
    config.validate()?;
    check_kinds(data, config.test.kind)?;
    if config.theorem == Theorem::TwoVariable && config.test.kind == TestKind::Permutation && !data.y_kind().is_discrete() {
        return Err(Error::Config("permutation test conditions on y, which must be binary or categorical".into()));
    }
    let rounds = build_rounds(data, config.k_min, config.max_rounds)?;
    let ps = rounds
        .par_iter()
        .map(|r| round_p(r, data, config))
        .collect::<Result<Vec<f64>>>()?;
    let (fisher_z, global_p) = fisher_combine(&ps)?;
    Ok(DetectionReport {
        alpha: config.alpha,
        test: config.test.kind,
        rounds: rounds
            .iter()
            .zip(&ps)
            .map(|(r, &p)| RoundReport { i: r.index, n_envs: r.n_envs(), p })
            .collect(),
        fisher_z,
        global_p,
        rejected: global_p <= config.alpha,
    })
}

/// Pools every observation and tests `y ⊥ env | t`, treating the environment
/// label as a categorical variable.
pub fn jci_baseline(data: &MultiEnvDataset, test: &CiTestConfig) -> Result<CiTestResult> {
    let k = data.n_envs();
    if k < 2 {
        return Err(Error::Usage(format!("the pooled environment test needs at least 2 environments, got {k}")));
    }
    if !matches!(test.kind, TestKind::GTest | TestKind::Permutation) {
        return Err(Error::Config(format!(
            "the pooled environment test treats env as categorical and supports g_test or permutation, not {}",
            test.kind
        )));
    }
    if !data.t_kind().is_discrete() || !data.y_kind().is_discrete() {
        return Err(Error::Config("the pooled environment test needs binary or categorical t and y".into()));
    }
    let (mut t, mut y, mut env) = (Vec::new(), Vec::new(), Vec::new());
    for (code, &b) in data.sorted_order().iter().enumerate() {
        let block = &data.blocks()[b];
        t.extend_from_slice(&block.t);
        y.extend_from_slice(&block.y);
        env.extend(std::iter::repeat_n(code as f64, block.len()));
    }
    let m = SampleMatrix::new()
        .with_column("y", data.y_kind(), y)?
        .with_column("env", ColumnKind::Categorical(k), env)?
        .with_column("t", data.t_kind(), t)?;
    test.run(&m, "y", "env", &["t"])
}
