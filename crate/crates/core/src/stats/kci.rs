use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sample::{CiTestResult, SampleMatrix, TestKind};
use super::special::gamma_survival;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KciConfig {
    /// Below this many rows a warning is logged.
    pub min_n: usize,
    /// Ridge strength per row for the conditioning-kernel residualisation.
    pub ridge_per_row: f64,
    /// Weight of the conditioning columns appended to `a` before kernelising.
    pub cond_weight: f64,
}

impl Default for KciConfig {
    fn default() -> Self {
        KciConfig { min_n: 30, ridge_per_row: 1e-3, cond_weight: 0.5 }
    }
}

fn standardise(name: &str, col: &[f64]) -> Result<Vec<f64>> {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateInput(format!("column `{name}` is constant; kernel bandwidth would be zero")));
    }
    Ok(col.iter().map(|v| (v - m) / sd).collect())
}

/// Gaussian kernel over rows made of `features`, width set to the median
/// pairwise distance.
fn gaussian_kernel(features: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = features[0].len();
    let mut d2 = DMatrix::<f64>::zeros(n, n);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = features.iter().map(|f| (f[i] - f[j]).powi(2)).sum();
            d2[(i, j)] = s;
            d2[(j, i)] = s;
            dists.push(s.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = match dists.len() {
        0 => 0.0,
        m if m % 2 == 1 => dists[m / 2],
        m => 0.5 * (dists[m / 2 - 1] + dists[m / 2]),
    };
    if !(median > 0.0) {
        return Err(Error::DegenerateInput("median pairwise distance is zero".into()));
    }
    let scale = 1.0 / (2.0 * median * median);
    Ok(d2.map(|v| (-v * scale).exp()))
}

/// `H K H` with `H = I - 11ᵀ/n`.
fn centre(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let row: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let col: Vec<f64> = (0..n).map(|j| k.column(j).sum() / n as f64).collect();
    let all = row.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row[i] - col[j] + all)
}

/// Kernel conditional-independence test with a two-moment gamma null.
pub fn kernel_ci_test(data: &SampleMatrix, a: &str, b: &str, cond: &[&str], config: &KciConfig) -> Result<CiTestResult> {
    let n = data.n_rows();
    if n < 3 {
        return Err(Error::InsufficientData(format!("kernel test needs at least 3 rows, got {n}")));
    }
    if n < config.min_n {
        log::warn!("kernel test on {n} rows (recommended at least {})", config.min_n);
    }
    let xa = standardise(a, data.column(a)?)?;
    let yb = standardise(b, data.column(b)?)?;
    let z = cond
        .iter()
        .map(|c| standardise(c, data.column(c)?))
        .collect::<Result<Vec<_>>>()?;

    let (stat, mean, var) = if z.is_empty() {
        let kx = centre(&gaussian_kernel(&[xa])?);
        let ky = centre(&gaussian_kernel(&[yb])?);
        let stat = kx.component_mul(&ky).sum();
        let nf = n as f64;
        let mean = kx.trace() * ky.trace() / nf;
        let var = 2.0 * kx.norm_squared() * ky.norm_squared() / (nf * nf);
        (stat, mean, var)
    } else {
        let mut xfeat = vec![xa];
        xfeat.extend(z.iter().map(|c| c.iter().map(|v| config.cond_weight * v).collect()));
        let kx = centre(&gaussian_kernel(&xfeat)?);
        let ky = centre(&gaussian_kernel(&[yb])?);
        let kz = centre(&gaussian_kernel(&z)?);
        let eps = config.ridge_per_row * n as f64;
        let shifted = &kz + DMatrix::<f64>::identity(n, n) * eps;
        let rz = shifted
            .cholesky()
            .ok_or_else(|| Error::Numerical("regularised conditioning kernel is not positive definite".into()))?
            .inverse()
            * eps;
        let kxr = &rz * kx * &rz;
        let kyr = &rz * ky * &rz;
        let prod = kxr.component_mul(&kyr);
        let stat = prod.sum();
        let mean = prod.trace();
        let var = 2.0 * prod.norm_squared();
        (stat, mean, var)
    };

    if !(mean > 0.0 && var > 0.0) {
        return Err(Error::Numerical(format!("kernel null moments are degenerate (mean {mean}, var {var})")));
    }
    let shape = mean * mean / var;
    let scale = var / mean;
    Ok(CiTestResult {
        p_value: gamma_survival(stat, shape, scale)?,
        statistic: stat,
        test_name: TestKind::Kci,
        n_effective: n,
    })
}

#[cfg(test)]
mod tests {
    use super::super::sample::ColumnKind;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn matrix(cols: Vec<(&str, Vec<f64>)>) -> SampleMatrix {
        let mut m = SampleMatrix::new();
        for (name, c) in cols {
            m.push(name, ColumnKind::Continuous, c).unwrap();
        }
        m
    }

    #[test]
    fn detects_cubic_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = normals(&mut rng, 200);
        let b: Vec<f64> = a.iter().zip(normals(&mut rng, 200)).map(|(x, e)| x.powi(3) + 0.1 * e).collect();
        let r = kernel_ci_test(&matrix(vec![("a", a), ("b", b)]), "a", "b", &[], &KciConfig::default()).unwrap();
        assert!(r.p_value < 0.01, "{}", r.p_value);
    }

    #[test]
    fn affine_rescaling_leaves_statistic_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = normals(&mut rng, 80);
        let b: Vec<f64> = a.iter().zip(normals(&mut rng, 80)).map(|(x, e)| x.sin() + e).collect();
        let c = normals(&mut rng, 80);
        let cfg = KciConfig::default();
        for cond in [&[][..], &["c"][..]] {
            let r1 = kernel_ci_test(&matrix(vec![("a", a.clone()), ("b", b.clone()), ("c", c.clone())]), "a", "b", cond, &cfg).unwrap();
            let scaled: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
            let r2 = kernel_ci_test(&matrix(vec![("a", scaled), ("b", b.clone()), ("c", c.clone())]), "a", "b", cond, &cfg).unwrap();
            assert!((r1.statistic - r2.statistic).abs() < 1e-8 * r1.statistic.abs().max(1.0));
        }
    }

    #[test]
    fn constant_column_is_degenerate() {
        let m = matrix(vec![("a", vec![1.0; 40]), ("b", (0..40).map(f64::from).collect())]);
        assert!(matches!(
            kernel_ci_test(&m, "a", "b", &[], &KciConfig::default()),
            Err(Error::DegenerateInput(_))
        ));
    }
}
