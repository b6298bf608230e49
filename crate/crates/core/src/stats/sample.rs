use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "levels")]
pub enum ColumnKind {
    Binary,
    /// Integer codes `0..levels`.
    Categorical(usize),
    Continuous,
}

impl ColumnKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, ColumnKind::Continuous)
    }

    /// Binary iff every value is 0 or 1, otherwise continuous.
    pub fn infer(values: &[f64]) -> Self {
        if values.iter().all(|&v| v == 0.0 || v == 1.0) {
            ColumnKind::Binary
        } else {
            ColumnKind::Continuous
        }
    }

    fn check(self, name: &str, values: &[f64]) -> Result<()> {
        let bad = |v: f64| match self {
            ColumnKind::Binary => !(v == 0.0 || v == 1.0),
            ColumnKind::Categorical(l) => !(v >= 0.0 && v.fract() == 0.0 && (v as usize) < l),
            ColumnKind::Continuous => !v.is_finite(),
        };
        match values.iter().position(|&v| bad(v)) {
            Some(row) => Err(Error::DegenerateInput(format!(
                "column `{name}` row {row}: value {} is not valid for {self:?}",
                values[row]
            ))),
            None => Ok(()),
        }
    }
}

/// Equal-length named columns. Categorical values are stored as integer codes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleMatrix {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    columns: Vec<Vec<f64>>,
}

impl SampleMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_column(mut self, name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Result<Self> {
        self.push(name, kind, values)?;
        Ok(self)
    }

    pub fn push(&mut self, name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Config(format!("column `{name}` already present")));
        }
        if let Some(first) = self.columns.first() {
            if first.len() != values.len() {
                return Err(Error::DegenerateInput(format!(
                    "column `{name}` has {} rows, expected {}",
                    values.len(),
                    first.len()
                )));
            }
        }
        kind.check(&name, &values)?;
        self.names.push(name);
        self.kinds.push(kind);
        self.columns.push(values);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("no column named `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.position(name)?])
    }

    pub fn kind(&self, name: &str) -> Result<ColumnKind> {
        Ok(self.kinds[self.position(name)?])
    }

    /// Discrete column as integer codes.
    pub(crate) fn codes(&self, name: &str) -> Result<Vec<i64>> {
        if !self.kind(name)?.is_discrete() {
            return Err(Error::Config(format!("column `{name}` is continuous, a discrete column is required")));
        }
        Ok(self.column(name)?.iter().map(|&v| v as i64).collect())
    }

    /// Row indices grouped by the joint value of the discrete `cond` columns,
    /// in order of first appearance.
    pub(crate) fn strata(&self, cond: &[&str]) -> Result<Vec<Vec<usize>>> {
        let codes = cond.iter().map(|c| self.codes(c)).collect::<Result<Vec<_>>>()?;
        let mut index: std::collections::HashMap<Vec<i64>, usize> = Default::default();
        let mut strata: Vec<Vec<usize>> = Vec::new();
        for row in 0..self.n_rows() {
            let key: Vec<i64> = codes.iter().map(|c| c[row]).collect();
            let next = strata.len();
            let s = *index.entry(key).or_insert(next);
            if s == next {
                strata.push(Vec::new());
            }
            strata[s].push(row);
        }
        Ok(strata)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    GTest,
    PartialCorr,
    Permutation,
    Kci,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [TestKind::GTest, TestKind::PartialCorr, TestKind::Permutation, TestKind::Kci];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::GTest => "g_test",
            TestKind::PartialCorr => "partial_corr",
            TestKind::Permutation => "permutation",
            TestKind::Kci => "kci",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown test `{s}`; expected g_test, partial_corr, permutation or kci")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiTestResult {
    pub p_value: f64,
    pub statistic: f64,
    pub test_name: TestKind,
    pub n_effective: usize,
}
