//! Dataset files and the semi-synthetic generator.

mod csv;
mod semisynth;

pub use self::csv::{load_multi_env_csv, read_multi_env_csv, save_multi_env_csv, write_multi_env_csv};
pub use semisynth::{
    estimate_env_ate_bias, generate_semi_synthetic, scale_covariate, synthetic_covariate_table, Basis, BUILTIN_TABLE,
    ColumnSummary, CovariateTable, GenerationTrace, SemiSynthSpec,
};
