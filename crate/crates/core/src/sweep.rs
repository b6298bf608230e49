//! Parameter grids over the simulators with repeated detection runs.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{estimate_env_ate_bias, generate_semi_synthetic, CovariateTable, SemiSynthSpec};
use crate::detector::{detect, jci_baseline, DetectorConfig, Theorem};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::sim::{sample_binary_scm, sample_gauss_scm, BinaryScmSpec, GaussScmSpec};
use crate::stats::{CiTestConfig, TestKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    ConfoundingGrid,
    EnvSampleGrid,
    JciComparison,
    FaithfulnessGrid,
    SemiSynthGrid,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::ConfoundingGrid => "confounding-grid",
            SweepKind::EnvSampleGrid => "env-sample-grid",
            SweepKind::JciComparison => "jci-comparison",
            SweepKind::FaithfulnessGrid => "faithfulness-grid",
            SweepKind::SemiSynthGrid => "semi-synth-grid",
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepKind::ConfoundingGrid,
            SweepKind::EnvSampleGrid,
            SweepKind::JciComparison,
            SweepKind::FaithfulnessGrid,
            SweepKind::SemiSynthGrid,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Usage(format!("unknown sweep kind `{s}`")))
    }
}

/// Grid axes and run settings. Axes that a sweep kind does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    pub ns: Vec<usize>,
    pub sigma_theta_ys: Vec<f64>,
    pub sigma_theta_ts: Vec<f64>,
    pub sigma_theta_us: Vec<f64>,
    pub n_observed: Vec<usize>,
    /// Covariates drawn per semi-synthetic dataset.
    pub p: usize,
    pub repetitions: usize,
    pub alpha: f64,
    pub test: TestKind,
    pub k_min: usize,
    pub max_rounds: Option<usize>,
    pub n_perm: usize,
    pub seed: u64,
    /// Base linear-Gaussian parameters for the faithfulness grid.
    pub gauss: GaussScmSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig::defaults(SweepKind::ConfoundingGrid)
    }
}

impl SweepConfig {
    /// Desk-scale defaults for each sweep kind.
    pub fn defaults(kind: SweepKind) -> Self {
        let mut c = SweepConfig {
            kind,
            lambdas: vec![0.0, 2.0, 5.0, 10.0],
            ks: vec![50, 200, 500],
            ns: vec![2],
            sigma_theta_ys: vec![1.0],
            sigma_theta_ts: vec![1.0],
            sigma_theta_us: vec![1.0],
            n_observed: vec![0],
            p: 5,
            repetitions: 100,
            alpha: 0.05,
            test: TestKind::GTest,
            k_min: 25,
            max_rounds: None,
            n_perm: 999,
            seed: 0,
            gauss: GaussScmSpec { sigma_t: 2.0 / 3.0, sigma_u: 1.0, ..GaussScmSpec::default() },
        };
        match kind {
            SweepKind::ConfoundingGrid => {}
            SweepKind::EnvSampleGrid => {
                c.lambdas = vec![5.0];
                c.ns = vec![2, 4, 10];
            }
            SweepKind::JciComparison => {
                c.lambdas = vec![0.0];
                c.sigma_theta_ys = vec![0.0, 0.1, 0.25];
                c.ks = vec![500];
                c.ns = vec![100];
            }
            SweepKind::FaithfulnessGrid => {
                c.test = TestKind::PartialCorr;
                c.ks = vec![1000];
                c.sigma_theta_ts = vec![0.5, 1.0, 2.0];
                c.sigma_theta_us = vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0];
            }
            SweepKind::SemiSynthGrid => {
                c.test = TestKind::Kci;
                c.lambdas = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
                c.n_observed = vec![0];
                c.repetitions = 30;
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let empty = match self.kind {
            SweepKind::ConfoundingGrid | SweepKind::EnvSampleGrid => {
                self.lambdas.is_empty() || self.ks.is_empty() || self.ns.is_empty()
            }
            SweepKind::JciComparison => {
                self.lambdas.is_empty() || self.ks.is_empty() || self.ns.is_empty() || self.sigma_theta_ys.is_empty()
            }
            SweepKind::FaithfulnessGrid => {
                self.ks.is_empty() || self.ns.is_empty() || self.sigma_theta_ts.is_empty() || self.sigma_theta_us.is_empty()
            }
            SweepKind::SemiSynthGrid => self.lambdas.is_empty() || self.n_observed.is_empty(),
        };
        if empty {
            return Err(Error::Config(format!("every axis of a {} sweep must be nonempty", self.kind.as_str())));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        self.detector().validate()
    }

    fn detector(&self) -> DetectorConfig {
        let mut test = CiTestConfig::new(self.test);
        test.n_perm = self.n_perm;
        DetectorConfig {
            alpha: self.alpha,
            k_min: self.k_min,
            test,
            theorem: Theorem::WithCovariates,
            max_rounds: self.max_rounds,
            seed: self.seed,
        }
    }

    /// Grid cells in output order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        let base = Cell::default();
        match self.kind {
            SweepKind::ConfoundingGrid | SweepKind::EnvSampleGrid => {
                for &lambda in &self.lambdas {
                    for &k in &self.ks {
                        for &n in &self.ns {
                            out.push(Cell { lambda: Some(lambda), k: Some(k), n: Some(n), ..base.clone() });
                        }
                    }
                }
            }
            SweepKind::JciComparison => {
                for &sy in &self.sigma_theta_ys {
                    for &lambda in &self.lambdas {
                        for &k in &self.ks {
                            for &n in &self.ns {
                                out.push(Cell {
                                    lambda: Some(lambda),
                                    k: Some(k),
                                    n: Some(n),
                                    sigma_theta_y: Some(sy),
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
            SweepKind::FaithfulnessGrid => {
                for &st in &self.sigma_theta_ts {
                    for &su in &self.sigma_theta_us {
                        for &k in &self.ks {
                            for &n in &self.ns {
                                out.push(Cell {
                                    k: Some(k),
                                    n: Some(n),
                                    sigma_theta_t: Some(st),
                                    sigma_theta_u: Some(su),
                                    ..base.clone()
                                });
                            }
                        }
                    }
                }
            }
            SweepKind::SemiSynthGrid => {
                for &lambda in &self.lambdas {
                    for &obs in &self.n_observed {
                        out.push(Cell { lambda: Some(lambda), n_observed: Some(obs), ..base.clone() });
                    }
                }
            }
        }
        for (i, c) in out.iter_mut().enumerate() {
            c.index = i;
        }
        out
    }
}

/// Parameters of one grid cell; unused axes are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub sigma_theta_y: Option<f64>,
    pub sigma_theta_t: Option<f64>,
    pub sigma_theta_u: Option<f64>,
    pub n_observed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub rep: usize,
    pub method: String,
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub sigma_theta_y: Option<f64>,
    pub sigma_theta_t: Option<f64>,
    pub sigma_theta_u: Option<f64>,
    pub n_observed: Option<usize>,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub fisher_z: Option<f64>,
    pub global_p: f64,
    pub rejected: bool,
    pub bias: Option<f64>,
    #[serde(skip)]
    pub wall_ms: f64,
}

impl SweepRow {
    fn new(cell: &Cell, rep: usize, seed: u64, method: &str) -> Self {
        SweepRow {
            cell: cell.index,
            rep,
            method: method.to_string(),
            lambda: cell.lambda,
            k: cell.k,
            n: cell.n,
            sigma_theta_y: cell.sigma_theta_y,
            sigma_theta_t: cell.sigma_theta_t,
            sigma_theta_u: cell.sigma_theta_u,
            n_observed: cell.n_observed,
            seed,
            rounds: None,
            fisher_z: None,
            global_p: f64::NAN,
            rejected: false,
            bias: None,
            wall_ms: 0.0,
        }
    }
}

/// Detection rate per cell and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: usize,
    pub method: String,
    pub lambda: Option<f64>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub sigma_theta_y: Option<f64>,
    pub sigma_theta_t: Option<f64>,
    pub sigma_theta_u: Option<f64>,
    pub n_observed: Option<usize>,
    pub repetitions: usize,
    pub detections: usize,
    pub detection_rate: f64,
    pub se: f64,
    pub mean_fisher_z: Option<f64>,
    pub mean_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn run_rep(config: &SweepConfig, cell: &Cell, rep: usize, cov: Option<&CovariateTable>) -> Result<Vec<SweepRow>> {
    // Repetition r draws the same seed in every cell, so neighbouring cells
    // differ only in their parameters (common random numbers).
    let seed = derive_seed(config.seed, rep as u64, 0);
    let started = Instant::now();
    let mut det = config.detector();
    det.seed = seed;
    let mut rows = Vec::with_capacity(2);
    let fill = |row: &mut SweepRow, report: crate::detector::DetectionReport| {
        row.rounds = Some(report.rounds_used());
        row.fisher_z = Some(report.fisher_z);
        row.global_p = report.global_p;
        row.rejected = report.rejected;
    };
    match config.kind {
        SweepKind::ConfoundingGrid | SweepKind::EnvSampleGrid | SweepKind::JciComparison => {
            let spec = BinaryScmSpec {
                lambda: cell.lambda.unwrap_or(0.0),
                sigma_theta_y: cell.sigma_theta_y.unwrap_or(1.0),
                ..BinaryScmSpec::default()
            };
            let data = sample_binary_scm(&spec, cell.k.unwrap_or(0), cell.n.unwrap_or(0), seed)?;
            let mut row = SweepRow::new(cell, rep, seed, "detect");
            fill(&mut row, detect(&data, &det)?);
            rows.push(row);
            if config.kind == SweepKind::JciComparison {
                let mut row = SweepRow::new(cell, rep, seed, "jci");
                let mut test = det.test;
                test.seed = seed;
                if test.kind != TestKind::Permutation {
                    test.kind = TestKind::GTest;
                }
                let r = jci_baseline(&data, &test)?;
                row.global_p = r.p_value;
                row.rejected = r.p_value <= config.alpha;
                rows.push(row);
            }
        }
        SweepKind::FaithfulnessGrid => {
            let spec = GaussScmSpec {
                sigma_theta_t: cell.sigma_theta_t.unwrap_or(config.gauss.sigma_theta_t),
                sigma_theta_u: cell.sigma_theta_u.unwrap_or(config.gauss.sigma_theta_u),
                ..config.gauss
            };
            let data = sample_gauss_scm(&spec, cell.k.unwrap_or(0), cell.n.unwrap_or(0), seed, &[])?;
            let mut row = SweepRow::new(cell, rep, seed, "detect");
            fill(&mut row, detect(&data, &det)?);
            rows.push(row);
        }
        SweepKind::SemiSynthGrid => {
            let cov = cov.ok_or_else(|| Error::Config("semi-synth-grid needs a covariate table".into()))?;
            let spec = SemiSynthSpec::new(config.p, cell.n_observed.unwrap_or(0), cell.lambda.unwrap_or(0.0), seed);
            let (data, trace) = generate_semi_synthetic(cov, &spec)?;
            let mut row = SweepRow::new(cell, rep, seed, "detect");
            fill(&mut row, detect(&data, &det)?);
            row.bias = Some(estimate_env_ate_bias(&data, &trace)?);
            rows.push(row);
        }
    }
    let ms = started.elapsed().as_secs_f64() * 1e3;
    for r in &mut rows {
        r.wall_ms = ms;
    }
    Ok(rows)
}

/// Runs every cell and repetition. Cells are processed in order and their
/// rows are handed to `on_cell` as soon as the cell completes, so a caller
/// can stream output; repetitions within a cell run on the rayon pool.
pub fn run_sweep_with<F>(config: &SweepConfig, cov: Option<&CovariateTable>, mut on_cell: F) -> Result<SweepResult>
where
    F: FnMut(&[SweepRow]) -> Result<()>,
{
    config.validate()?;
    let mut rows = Vec::new();
    for cell in config.cells() {
        let cell_rows: Vec<SweepRow> = (0..config.repetitions)
            .into_par_iter()
            .map(|rep| run_rep(config, &cell, rep, cov))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        on_cell(&cell_rows)?;
        rows.extend(cell_rows);
    }
    let aggregates = aggregate(&rows);
    Ok(SweepResult { rows, aggregates })
}

pub fn run_sweep(config: &SweepConfig, cov: Option<&CovariateTable>) -> Result<SweepResult> {
    run_sweep_with(config, cov, |_| Ok(()))
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per `(cell, method)` detection rates, in first-appearance order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(usize, &str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.cell, r.method.as_str())) {
            keys.push((r.cell, r.method.as_str()));
        }
    }
    keys.into_iter()
        .map(|(cell, method)| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.cell == cell && r.method == method).collect();
            let first = group[0];
            let reps = group.len();
            let detections = group.iter().filter(|r| r.rejected).count();
            let rate = detections as f64 / reps as f64;
            AggregateRow {
                cell,
                method: method.to_string(),
                lambda: first.lambda,
                k: first.k,
                n: first.n,
                sigma_theta_y: first.sigma_theta_y,
                sigma_theta_t: first.sigma_theta_t,
                sigma_theta_u: first.sigma_theta_u,
                n_observed: first.n_observed,
                repetitions: reps,
                detections,
                detection_rate: rate,
                se: (rate * (1.0 - rate) / reps as f64).sqrt(),
                mean_fisher_z: mean(group.iter().map(|r| r.fisher_z)),
                mean_bias: mean(group.iter().map(|r| r.bias)),
            }
        })
        .collect()
}

/// CSV writer for tidy rows that flushes after every cell.
pub struct TidyWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TidyWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        inner.write_record([
            "cell", "rep", "method", "lambda", "k", "n", "sigma_theta_y", "sigma_theta_t", "sigma_theta_u",
            "n_observed", "seed", "rounds", "fisher_z", "global_p", "rejected", "bias",
        ])?;
        inner.flush()?;
        Ok(TidyWriter { inner })
    }

    pub fn write(&mut self, rows: &[SweepRow]) -> Result<()> {
        for r in rows {
            self.inner.serialize(r)?;
        }
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_aggregates<W: Write>(rows: &[AggregateRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["cell"])?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock time per row, kept apart from the tidy output so that the
/// latter is reproducible byte for byte.
pub fn write_timings<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["cell", "rep", "method", "wall_ms"])?;
    for r in rows {
        w.write_record([r.cell.to_string(), r.rep.to_string(), r.method.clone(), format!("{:.3}", r.wall_ms)])?;
    }
    w.flush()?;
    Ok(())
}
