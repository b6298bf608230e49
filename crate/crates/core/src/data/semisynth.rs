//! Treatment/outcome generation on top of a real or synthetic covariate
//! table, with a tunable amount of confounding through withheld covariates.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{EnvBlock, MultiEnvDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub variance: f64,
}

impl ColumnSummary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ColumnSummary { mean, min, max, variance }
    }
}

/// Rows of `(env, c_1, …, c_m)`, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    env: Vec<String>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    summaries: Vec<ColumnSummary>,
}

impl CovariateTable {
    /// Builds a table and drops every column with zero sample variance.
    pub fn new(env: Vec<String>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Config("one name per covariate column is required".into()));
        }
        if let Some((c, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != env.len()) {
            return Err(Error::DegenerateInput(format!("covariate `{}` has the wrong length", names[c])));
        }
        let distinct: std::collections::HashSet<&String> = env.iter().collect();
        if distinct.len() < 2 {
            return Err(Error::Usage(format!("covariate table needs at least 2 environments, found {}", distinct.len())));
        }
        let mut t = CovariateTable { env, names: Vec::new(), columns: Vec::new(), summaries: Vec::new() };
        for (name, col) in names.into_iter().zip(columns) {
            let s = ColumnSummary::of(&col);
            if s.variance > 0.0 {
                t.names.push(name);
                t.columns.push(col);
                t.summaries.push(s);
            } else {
                log::warn!("dropping constant covariate `{name}`");
            }
        }
        if t.columns.is_empty() {
            return Err(Error::DegenerateInput("no covariate column has positive variance".into()));
        }
        Ok(t)
    }

    /// Keeps columns whose variance is at least `min_variance`, optionally
    /// also dropping 0/1 columns.
    pub fn filter_columns(mut self, min_variance: f64, drop_binary: bool) -> Result<Self> {
        let keep: Vec<bool> = self
            .columns
            .iter()
            .zip(&self.summaries)
            .map(|(c, s)| s.variance >= min_variance && !(drop_binary && c.iter().all(|&v| v == 0.0 || v == 1.0)))
            .collect();
        let mut k = keep.iter();
        self.names.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.columns.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.summaries.retain(|_| *k.next().unwrap());
        if self.columns.is_empty() {
            return Err(Error::DegenerateInput("covariate filter removed every column".into()));
        }
        Ok(self)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "env" {
            return Err(Error::Parse { row: 1, message: "header must be env,c_1,...,c_m".into() });
        }
        let m = header.len() - 1;
        let mut env = Vec::new();
        let mut columns = vec![Vec::new(); m];
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            if rec.len() != header.len() {
                return Err(Error::Parse { row: line, message: format!("expected {} columns, found {}", header.len(), rec.len()) });
            }
            env.push(rec[0].to_string());
            for c in 0..m {
                let cell = &rec[c + 1];
                let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    row: line,
                    message: format!("column `{}`: `{cell}` is not a finite number", header[c + 1]),
                })?;
                columns[c].push(v);
            }
        }
        CovariateTable::new(env, header[1..].to_vec(), columns)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["env".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut row = vec![self.env[r].clone()];
            row.extend(self.columns.iter().map(|c| c[r].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.env.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, c: usize) -> &[f64] {
        &self.columns[c]
    }

    pub fn summary(&self, c: usize) -> ColumnSummary {
        self.summaries[c]
    }

    pub fn env_ids(&self) -> &[String] {
        &self.env
    }

    pub fn n_envs(&self) -> usize {
        self.env.iter().collect::<std::collections::HashSet<_>>().len()
    }
}

/// Shape of the built-in table: environments, rows per environment, seed.
pub const BUILTIN_TABLE: (usize, usize, u64) = (100, 40, 2024);

/// Between-environment and within-environment spread of each built-in column.
/// The first two behave like site attributes that barely vary inside an
/// environment; the rest are individual-level with mild site shifts.
const BUILTIN_SPREAD: [(f64, f64); 8] =
    [(2.0, 0.2), (2.0, 0.2), (0.7, 1.0), (0.7, 1.0), (0.7, 1.0), (0.7, 1.0), (0.7, 1.0), (0.7, 1.0)];

/// A synthetic covariate table of `n_envs` environments with `rows_per_env`
/// rows and eight columns; the odd-numbered ones are integer-valued.
pub fn synthetic_covariate_table(n_envs: usize, rows_per_env: usize, seed: u64) -> Result<CovariateTable> {
    let m = BUILTIN_SPREAD.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = Vec::with_capacity(n_envs * rows_per_env);
    let mut columns = vec![Vec::with_capacity(n_envs * rows_per_env); m];
    for k in 0..n_envs {
        let shifts: Vec<f64> =
            BUILTIN_SPREAD.iter().map(|(between, _)| between * rng.sample::<f64, _>(StandardNormal)).collect();
        for _ in 0..rows_per_env {
            env.push(format!("site{k:03}"));
            for (c, col) in columns.iter_mut().enumerate() {
                let v = shifts[c] + BUILTIN_SPREAD[c].1 * rng.sample::<f64, _>(StandardNormal);
                col.push(if c % 2 == 0 { (2.0 * v + 10.0).round() } else { v });
            }
        }
    }
    CovariateTable::new(env, (1..=m).map(|c| format!("c_{c}")).collect(), columns)
}

/// `5·(x − mean)/(max − min)` with statistics taken over the whole column.
pub fn scale_covariate(column: &[f64]) -> Result<Vec<f64>> {
    if column.is_empty() {
        return Err(Error::DegenerateInput("cannot scale an empty column".into()));
    }
    let s = ColumnSummary::of(column);
    let range = s.max - s.min;
    if !(range > 0.0) {
        return Err(Error::DegenerateInput("cannot scale a constant column".into()));
    }
    Ok(column.iter().map(|v| 5.0 * (v - s.mean) / range).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Tanh,
    Identity,
    Square,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Tanh, Basis::Identity, Basis::Square];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Basis::Tanh => x.tanh(),
            Basis::Identity => x,
            Basis::Square => x * x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSynthSpec {
    /// Number of covariates drawn into the treatment and outcome equations.
    pub p: usize,
    /// How many of the drawn covariates are exported; the rest are withheld.
    pub n_observed: usize,
    /// Multiplier on the outcome coefficients of withheld covariates.
    pub lambda: f64,
    pub seed: u64,
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub delta_range: (f64, f64),
    pub noise_sd: f64,
    pub basis: Vec<Basis>,
}

impl SemiSynthSpec {
    pub fn new(p: usize, n_observed: usize, lambda: f64, seed: u64) -> Self {
        SemiSynthSpec {
            p,
            n_observed,
            lambda,
            seed,
            alpha_range: (1.0, 5.0),
            beta_range: (1.0, 5.0),
            delta_range: (1.0, 2.0),
            noise_sd: 0.5,
            basis: Basis::ALL.to_vec(),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.p == 0 || self.p > m {
            return Err(Error::Config(format!("p must lie in 1..={m}, got {}", self.p)));
        }
        if self.n_observed > self.p {
            return Err(Error::Config(format!("n_observed ({}) exceeds p ({})", self.n_observed, self.p)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        for (name, (lo, hi)) in [("alpha", self.alpha_range), ("beta", self.beta_range), ("delta", self.delta_range)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Config(format!("{name} range ({lo}, {hi}) is invalid")));
            }
        }
        if !(self.noise_sd >= 0.0) || self.basis.is_empty() {
            return Err(Error::Config("noise_sd must be >= 0 and the basis nonempty".into()));
        }
        Ok(())
    }
}

/// Everything drawn while generating a semi-synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    /// Names of the drawn covariates in draw order.
    pub covariates: Vec<String>,
    pub alphas: Vec<f64>,
    /// Outcome coefficients before the confounding multiplier.
    pub betas: Vec<f64>,
    pub funcs_f: Vec<Basis>,
    pub funcs_g: Vec<Basis>,
    pub delta: f64,
    pub lambda: f64,
    /// Column indices (in the source table) of the exported covariates.
    pub observed_ids: Vec<usize>,
    /// Column indices of all drawn covariates, in draw order.
    pub covariate_ids: Vec<usize>,
    pub seed: u64,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// `T = Σ α_d f_d(x_d) + ε_T`, `Y = Σ β_d g_d(x_d) + δT + ε_Y` over scaled
/// covariates, with `β_d` multiplied by `λ` for withheld covariates. The first
/// `n_observed` drawn covariates are exported unscaled as `x1, x2, …`.
pub fn generate_semi_synthetic(cov: &CovariateTable, spec: &SemiSynthSpec) -> Result<(MultiEnvDataset, GenerationTrace)> {
    spec.validate(cov.n_columns())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<usize> = index::sample(&mut rng, cov.n_columns(), spec.p).into_vec();
    let mut trace = GenerationTrace {
        covariates: ids.iter().map(|&c| cov.names()[c].clone()).collect(),
        alphas: Vec::with_capacity(spec.p),
        betas: Vec::with_capacity(spec.p),
        funcs_f: Vec::with_capacity(spec.p),
        funcs_g: Vec::with_capacity(spec.p),
        delta: 0.0,
        lambda: spec.lambda,
        observed_ids: ids[..spec.n_observed].to_vec(),
        covariate_ids: ids.clone(),
        seed: spec.seed,
    };
    for _ in 0..spec.p {
        trace.alphas.push(uniform(&mut rng, spec.alpha_range));
        trace.funcs_f.push(*spec.basis.choose(&mut rng).expect("nonempty basis"));
        trace.betas.push(uniform(&mut rng, spec.beta_range));
        trace.funcs_g.push(*spec.basis.choose(&mut rng).expect("nonempty basis"));
    }
    trace.delta = uniform(&mut rng, spec.delta_range);

    let scaled = ids.iter().map(|&c| scale_covariate(cov.column(c))).collect::<Result<Vec<_>>>()?;
    let effective_beta: Vec<f64> = trace
        .betas
        .iter()
        .enumerate()
        .map(|(d, &b)| if d < spec.n_observed { b } else { b * spec.lambda })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut blocks: Vec<EnvBlock> = Vec::new();
    let mut index_of: HashMap<&str, usize> = HashMap::new();
    for r in 0..cov.n_rows() {
        let mut t = noise.sample(&mut rng);
        let mut y = noise.sample(&mut rng);
        for d in 0..spec.p {
            let x = scaled[d][r];
            t += trace.alphas[d] * trace.funcs_f[d].apply(x);
            y += effective_beta[d] * trace.funcs_g[d].apply(x);
        }
        y += trace.delta * t;
        let env = cov.env_ids()[r].as_str();
        let next = blocks.len();
        let b = *index_of.entry(env).or_insert(next);
        if b == next {
            blocks.push(EnvBlock::new(env, vec![], vec![], vec![Vec::new(); spec.n_observed]));
        }
        blocks[b].t.push(t);
        blocks[b].y.push(y);
        for (o, &c) in trace.observed_ids.iter().enumerate() {
            blocks[b].x[o].push(cov.column(c)[r]);
        }
    }
    Ok((MultiEnvDataset::new(blocks)?, trace))
}

/// Average over environments of the within-environment OLS coefficient on
/// `T` (regressing `Y` on an intercept, `T` and the exported covariates)
/// minus the true effect `δ`.
pub fn estimate_env_ate_bias(data: &MultiEnvDataset, trace: &GenerationTrace) -> Result<f64> {
    let p = data.n_covariates();
    let mut total = 0.0;
    let mut used = 0usize;
    for b in data.blocks() {
        let n = b.len();
        if n <= p + 2 {
            log::warn!("environment `{}` has {n} rows, too few for {p} covariates; skipped", b.env_id);
            continue;
        }
        let design = DMatrix::from_fn(n, p + 2, |r, c| match c {
            0 => 1.0,
            1 => b.t[r],
            _ => b.x[c - 2][r],
        });
        let svd = design.svd(true, true);
        let coef = svd
            .solve(&DVector::from_column_slice(&b.y), 1e-10)
            .map_err(|e| Error::Numerical(format!("least squares in `{}` failed: {e}", b.env_id)))?;
        total += coef[1] - trace.delta;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientData("every environment is too small for the bias regression".into()));
    }
    Ok(total / used as f64)
}
