use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use confdetect::data::{
    generate_semi_synthetic, load_multi_env_csv, save_multi_env_csv, synthetic_covariate_table, write_multi_env_csv, BUILTIN_TABLE,
    CovariateTable, SemiSynthSpec,
};
use confdetect::detector::{detect, DetectorConfig, Theorem};
use confdetect::graph::{
    compare_csv, render_degenerate_csv, render_theorem1_csv, render_theorem2_csv, selection_bias_check,
    verify_degenerate_table, verify_theorem1_table, verify_theorem2_table, DEGENERATE_GOLDEN, THEOREM1_GOLDEN,
    THEOREM2_GOLDEN,
};
use confdetect::sim::ScmSpec;
use confdetect::stats::TestKind;
use confdetect::sweep::{run_sweep_with, write_aggregates, write_timings, SweepConfig, SweepKind, TidyWriter};
use confdetect::{Error, Result};

#[derive(Parser)]
#[command(name = "confdetect", version, about = "Detect hidden confounding from multi-environment data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Significance level.
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    /// Conditional-independence test.
    #[arg(long, global = true, value_enum)]
    test: Option<TestArg>,
    /// Minimum number of environments per round.
    #[arg(long, global = true, default_value_t = 25)]
    k_min: usize,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum TestArg {
    GTest,
    PartialCorr,
    Permutation,
    Kci,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::GTest => TestKind::GTest,
            TestArg::PartialCorr => TestKind::PartialCorr,
            TestArg::Permutation => TestKind::Permutation,
            TestArg::Kci => TestKind::Kci,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    WithCovariates,
    TwoVariable,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    ConfoundingGrid,
    EnvSampleGrid,
    JciComparison,
    FaithfulnessGrid,
    SemiSynthGrid,
}

impl From<SweepArg> for SweepKind {
    fn from(s: SweepArg) -> Self {
        match s {
            SweepArg::ConfoundingGrid => SweepKind::ConfoundingGrid,
            SweepArg::EnvSampleGrid => SweepKind::EnvSampleGrid,
            SweepArg::JciComparison => SweepKind::JciComparison,
            SweepArg::FaithfulnessGrid => SweepKind::FaithfulnessGrid,
            SweepArg::SemiSynthGrid => SweepKind::SemiSynthGrid,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Recompute the d-separation tables and compare them with the references.
    VerifyTables {
        /// Directory holding table1.csv, table2.csv and table3.csv to compare against.
        #[arg(long)]
        golden_dir: Option<PathBuf>,
    },
    /// Sample a dataset from a structural model given as JSON (inline or a file path).
    Simulate {
        #[arg(long)]
        spec: String,
        /// Number of environments.
        #[arg(long)]
        k: usize,
        /// Observations per environment.
        #[arg(long)]
        n: usize,
    },
    /// Run the detector on a dataset CSV.
    Detect {
        data: PathBuf,
        #[arg(long, value_enum, default_value = "with-covariates")]
        theorem: TheoremArg,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long, default_value_t = 999)]
        n_perm: usize,
    },
    /// Run a simulation grid and write tidy and aggregated CSVs.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepArg,
        /// JSON file overriding any grid field.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Covariate CSV for the semi-synthetic grid (a built-in table is used otherwise).
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Generate treatment and outcome from a covariate table.
    SemiSynth {
        /// Covariate CSV `env,c_1,…,c_m`; a built-in table is used when absent.
        #[arg(long)]
        covariates: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        n_observed: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Drop covariates whose variance is below this value.
        #[arg(long, default_value_t = 0.0)]
        min_variance: f64,
        /// Drop 0/1 covariates.
        #[arg(long)]
        drop_binary: bool,
        /// Where to write the generation trace JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn load_covariates(path: Option<&Path>, min_variance: f64, drop_binary: bool) -> Result<CovariateTable> {
    let table = match path {
        Some(p) => CovariateTable::load(p)?,
        None => {
            let (envs, rows, seed) = BUILTIN_TABLE;
            synthetic_covariate_table(envs, rows, seed)?
        }
    };
    if min_variance > 0.0 || drop_binary {
        table.filter_columns(min_variance, drop_binary)
    } else {
        Ok(table)
    }
}

fn verify_tables(g: &Global, golden_dir: Option<&Path>) -> Result<u8> {
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)?;
    let rendered = [
        ("table1.csv", render_theorem1_csv(&verify_theorem1_table()?), THEOREM1_GOLDEN),
        ("table2.csv", render_theorem2_csv(&verify_theorem2_table()?), THEOREM2_GOLDEN),
        ("table3.csv", render_degenerate_csv(&verify_degenerate_table()?), DEGENERATE_GOLDEN),
    ];
    let mut failures = 0;
    for (name, csv, builtin) in &rendered {
        fs::write(out.join(name), csv)?;
        let golden = match golden_dir {
            Some(d) => fs::read_to_string(d.join(name))?,
            None => builtin.to_string(),
        };
        let rows = csv.lines().count().saturating_sub(1);
        let mismatches = compare_csv(csv, &golden);
        if mismatches.is_empty() {
            println!("{name}: {rows} rows match");
        } else {
            failures += mismatches.len();
            println!("{name}: {} mismatching cell(s)", mismatches.len());
            for m in &mismatches {
                println!("  {m}");
            }
        }
    }
    let mut sel = String::from("u_present,theta_c_random,theta_c_degenerate\n");
    for confounded in [false, true] {
        let v = selection_bias_check(confounded)?;
        let word = |b: bool| if b { "dsep" } else { "dep" };
        sel.push_str(&format!(
            "{},{},{}\n",
            if confounded { "yes" } else { "no" },
            word(v.theta_c_random),
            word(v.theta_c_degenerate)
        ));
    }
    fs::write(out.join("selection_bias.csv"), sel)?;
    Ok(if failures == 0 { 0 } else { 1 })
}

fn parse_spec(spec: &str) -> Result<ScmSpec> {
    let text = if Path::new(spec).is_file() { fs::read_to_string(spec)? } else { spec.to_string() };
    serde_json::from_str(&text).map_err(|e| Error::Usage(format!("invalid model spec: {e}")))
}

fn simulate(g: &Global, spec: &str, k: usize, n: usize) -> Result<u8> {
    let data = parse_spec(spec)?.sample(k, n, g.seed)?;
    let mut buf = Vec::new();
    write_multi_env_csv(&data, &mut buf)?;
    write_output(g.out.as_deref(), &buf)?;
    Ok(0)
}

fn run_detect(g: &Global, path: &Path, theorem: TheoremArg, max_rounds: Option<usize>, n_perm: usize) -> Result<u8> {
    let data = load_multi_env_csv(path)?;
    let mut config = DetectorConfig::new(g.test.map_or(TestKind::GTest, Into::into));
    config.alpha = g.alpha;
    config.k_min = g.k_min;
    config.seed = g.seed;
    config.max_rounds = max_rounds;
    config.test.n_perm = n_perm;
    config.theorem = match theorem {
        TheoremArg::WithCovariates => Theorem::WithCovariates,
        TheoremArg::TwoVariable => Theorem::TwoVariable,
    };
    let report = detect(&data, &config)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    print!("{json}");
    if let Some(p) = &g.out {
        fs::write(p, &json)?;
    }
    Ok(if report.rejected { 10 } else { 0 })
}

fn run_sweep_cmd(
    g: &Global,
    kind: SweepKind,
    config_path: Option<&Path>,
    covariates: Option<&Path>,
    reps: Option<usize>,
) -> Result<u8> {
    let mut config = match config_path {
        Some(p) => {
            let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p)?)?;
            let defaults = serde_json::to_value(SweepConfig::defaults(kind))?;
            if let (Some(obj), serde_json::Value::Object(d)) = (v.as_object_mut(), defaults) {
                for (key, val) in d {
                    obj.entry(key).or_insert(val);
                }
                obj.insert("kind".into(), serde_json::to_value(kind)?);
            }
            serde_json::from_value(v).map_err(|e| Error::Usage(format!("invalid sweep config: {e}")))?
        }
        None => SweepConfig::defaults(kind),
    };
    config.seed = g.seed;
    config.alpha = g.alpha;
    config.k_min = g.k_min;
    if let Some(t) = g.test {
        config.test = t.into();
    }
    if let Some(r) = reps {
        config.repetitions = r;
    }
    let cov = match kind {
        SweepKind::SemiSynthGrid => Some(load_covariates(covariates, 0.0, false)?),
        _ => None,
    };
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from(format!("sweep-{}", kind.as_str())));
    fs::create_dir_all(&out)?;
    let mut tidy = TidyWriter::new(std::io::BufWriter::new(fs::File::create(out.join("sweep.csv"))?))?;
    let result = run_sweep_with(&config, cov.as_ref(), |rows| tidy.write(rows))?;
    write_aggregates(&result.aggregates, fs::File::create(out.join("aggregate.csv"))?)?;
    write_timings(&result.rows, fs::File::create(out.join("timing.csv"))?)?;
    for a in &result.aggregates {
        println!("cell {:>3} {:<6} rate {:.3} (se {:.3})", a.cell, a.method, a.detection_rate, a.se);
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn semi_synth(
    g: &Global,
    covariates: Option<&Path>,
    p: usize,
    n_observed: usize,
    lambda: f64,
    min_variance: f64,
    drop_binary: bool,
    trace_path: Option<&Path>,
) -> Result<u8> {
    let cov = load_covariates(covariates, min_variance, drop_binary)?;
    let (data, trace) = generate_semi_synthetic(&cov, &SemiSynthSpec::new(p, n_observed, lambda, g.seed))?;
    match &g.out {
        Some(path) => save_multi_env_csv(&data, path)?,
        None => write_multi_env_csv(&data, std::io::stdout())?,
    }
    if let Some(tp) = trace_path {
        fs::write(tp, serde_json::to_string_pretty(&trace)? + "\n")?;
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(w) = cli.global.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot configure worker pool: {e}")))?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::VerifyTables { golden_dir } => verify_tables(g, golden_dir.as_deref()),
        Command::Simulate { spec, k, n } => simulate(g, spec, *k, *n),
        Command::Detect { data, theorem, max_rounds, n_perm } => run_detect(g, data, *theorem, *max_rounds, *n_perm),
        Command::Sweep { kind, config, covariates, reps } => {
            run_sweep_cmd(g, (*kind).into(), config.as_deref(), covariates.as_deref(), *reps)
        }
        Command::SemiSynth { covariates, p, n_observed, lambda, min_variance, drop_binary, trace } => semi_synth(
            g,
            covariates.as_deref(),
            *p,
            *n_observed,
            *lambda,
            *min_variance,
            *drop_binary,
            trace.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
