use nalgebra::DMatrix;

use super::sample::{CiTestResult, SampleMatrix, TestKind};
use super::special::normal_two_sided;
use crate::error::{Error, Result};

/// Pivots below this are treated as exact collinearity of a unit-diagonal matrix.
const PIVOT_TOL: f64 = 1e-10;

fn correlation_matrix(columns: &[&[f64]], names: &[&str]) -> Result<DMatrix<f64>> {
    let n = columns[0].len() as f64;
    let p = columns.len();
    let centred: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let sd: Vec<f64> = centred.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(k) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Numerical(format!("column `{}` is constant", names[k])));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            centred[i].iter().zip(&centred[j]).map(|(x, y)| x * y).sum::<f64>() / (sd[i] * sd[j])
        }
    }))
}

/// Index of the first column that lies in the span of its predecessors.
fn first_collinear(r: &DMatrix<f64>) -> Option<usize> {
    let p = r.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let mut d = r[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= PIVOT_TOL {
            return Some(j);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..p {
            let mut s = r[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    None
}

/// Sample partial correlation of the first two columns given the rest.
pub fn sample_partial_correlation(columns: &[&[f64]], names: &[&str]) -> Result<f64> {
    if columns.len() < 2 {
        return Err(Error::Config("partial correlation needs at least two columns".into()));
    }
    let r = correlation_matrix(columns, names)?;
    if let Some(k) = first_collinear(&r) {
        return Err(Error::Numerical(format!(
            "singular correlation matrix: `{}` is collinear with {{{}}}",
            names[k],
            names[..k].iter().map(|s| format!("`{s}`")).collect::<Vec<_>>().join(", ")
        )));
    }
    if columns.len() == 2 {
        return Ok(r[(0, 1)]);
    }
    let prec = r
        .cholesky()
        .ok_or_else(|| Error::Numerical("correlation matrix is not positive definite".into()))?
        .inverse();
    Ok((-prec[(0, 1)] / (prec[(0, 0)] * prec[(1, 1)]).sqrt()).clamp(-1.0, 1.0))
}

/// Fisher-z test of zero partial correlation between continuous `a` and `b` given `cond`.
pub fn partial_correlation_test(data: &SampleMatrix, a: &str, b: &str, cond: &[&str]) -> Result<CiTestResult> {
    let n = data.n_rows();
    if n <= cond.len() + 3 {
        return Err(Error::InsufficientData(format!(
            "partial correlation with {} conditioning columns needs more than {} rows, got {n}",
            cond.len(),
            cond.len() + 3
        )));
    }
    let names: Vec<&str> = [a, b].into_iter().chain(cond.iter().copied()).collect();
    let columns = names.iter().map(|c| data.column(c)).collect::<Result<Vec<_>>>()?;
    let r = sample_partial_correlation(&columns, &names)?;
    let z = r.atanh() * ((n - cond.len() - 3) as f64).sqrt();
    Ok(CiTestResult {
        p_value: normal_two_sided(z),
        statistic: r,
        test_name: TestKind::PartialCorr,
        n_effective: n,
    })
}
