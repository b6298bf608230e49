//! Distribution tails and conditional-independence tests.

mod gtest;
mod kci;
mod partial;
mod permutation;
mod sample;
mod special;

pub use gtest::g_test_ci;
pub use kci::{kernel_ci_test, KciConfig};
pub use partial::{partial_correlation_test, sample_partial_correlation};
pub use permutation::permutation_ci_test;
pub use sample::{CiTestResult, ColumnKind, SampleMatrix, TestKind};
pub use special::{chi2_survival, gamma_survival, normal_two_sided};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A test choice together with the knobs the individual tests need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiTestConfig {
    pub kind: TestKind,
    pub n_perm: usize,
    pub seed: u64,
    pub kci: KciConfig,
}

impl CiTestConfig {
    pub fn new(kind: TestKind) -> Self {
        CiTestConfig { kind, n_perm: 999, seed: 0, kci: KciConfig::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Runs the configured test of `a ⊥ b | cond`.
    pub fn run(&self, data: &SampleMatrix, a: &str, b: &str, cond: &[&str]) -> Result<CiTestResult> {
        match self.kind {
            TestKind::GTest => g_test_ci(data, a, b, cond),
            TestKind::PartialCorr => partial_correlation_test(data, a, b, cond),
            TestKind::Permutation => permutation_ci_test(data, a, b, cond, self.n_perm, self.seed),
            TestKind::Kci => kernel_ci_test(data, a, b, cond, &self.kci),
        }
    }
}
