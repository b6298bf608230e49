use std::collections::BTreeMap;

use super::sample::{CiTestResult, SampleMatrix, TestKind};
use super::special::chi2_survival;
use crate::error::{Error, Result};

/// Summed G statistic over strata. Returns `(g, df, smallest expected count)`.
pub(crate) fn stratified_g(a: &[i64], b: &[i64], strata: &[Vec<usize>]) -> (f64, u32, f64) {
    let mut g = 0.0;
    let mut df = 0u32;
    let mut min_expected = f64::INFINITY;
    let mut cells: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut rows: BTreeMap<i64, f64> = BTreeMap::new();
    let mut cols: BTreeMap<i64, f64> = BTreeMap::new();
    for stratum in strata {
        cells.clear();
        rows.clear();
        cols.clear();
        for &k in stratum {
            *cells.entry((a[k], b[k])).or_default() += 1.0;
            *rows.entry(a[k]).or_default() += 1.0;
            *cols.entry(b[k]).or_default() += 1.0;
        }
        if rows.len() < 2 || cols.len() < 2 {
            continue;
        }
        let n = stratum.len() as f64;
        for (ra, &rn) in &rows {
            for (cb, &cn) in &cols {
                let e = rn * cn / n;
                min_expected = min_expected.min(e);
                if let Some(&o) = cells.get(&(*ra, *cb)) {
                    g += o * (o / e).ln();
                }
            }
        }
        df += ((rows.len() - 1) * (cols.len() - 1)) as u32;
    }
    ((2.0 * g).max(0.0), df, min_expected)
}

/// Likelihood-ratio test of `a ⊥ b | cond` for discrete columns.
pub fn g_test_ci(data: &SampleMatrix, a: &str, b: &str, cond: &[&str]) -> Result<CiTestResult> {
    let (ac, bc) = (data.codes(a)?, data.codes(b)?);
    for (name, codes) in [(a, &ac), (b, &bc)] {
        let first = codes.first().copied();
        if codes.iter().all(|&c| Some(c) == first) {
            return Err(Error::DegenerateInput(format!("column `{name}` has fewer than 2 observed levels")));
        }
    }
    let strata = data.strata(cond)?;
    let (g, df, min_expected) = stratified_g(&ac, &bc, &strata);
    if min_expected < 5.0 {
        log::warn!("g-test: smallest expected cell count is {min_expected:.2} (< 5)");
    }
    let p_value = if df == 0 { 1.0 } else { chi2_survival(g, df)? };
    Ok(CiTestResult { p_value, statistic: g, test_name: TestKind::GTest, n_effective: data.n_rows() })
}
