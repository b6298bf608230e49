use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::gtest::stratified_g;
use super::sample::{CiTestResult, SampleMatrix, TestKind};
use crate::error::{Error, Result};

/// Relative slack when counting permuted statistics that tie the observed one.
const TIE_TOL: f64 = 1e-9;

enum Statistic {
    /// Stratified G on integer codes.
    G { a: Vec<i64>, b: Vec<i64> },
    /// Pooled within-stratum correlation of stratum-centred values.
    Corr { a: Vec<f64>, b: Vec<f64>, bb: f64 },
}

impl Statistic {
    fn eval(&self, perm: &[usize], strata: &[Vec<usize>]) -> f64 {
        match self {
            Statistic::G { a, b } => {
                let permuted: Vec<i64> = perm.iter().map(|&k| a[k]).collect();
                stratified_g(&permuted, b, strata).0
            }
            Statistic::Corr { a, b, bb } => {
                let aa: f64 = a.iter().map(|v| v * v).sum();
                if aa <= 0.0 || *bb <= 0.0 {
                    return 0.0;
                }
                let ab: f64 = perm.iter().zip(b).map(|(&k, y)| a[k] * y).sum();
                (ab / (aa * bb).sqrt()).abs()
            }
        }
    }
}

fn centre_within(values: &[f64], strata: &[Vec<usize>]) -> Vec<f64> {
    let mut out = values.to_vec();
    for s in strata {
        let m = s.iter().map(|&k| values[k]).sum::<f64>() / s.len() as f64;
        for &k in s {
            out[k] -= m;
        }
    }
    out
}

/// Permutation test of `a ⊥ b | cond`, shuffling `a` within each stratum of
/// the discrete `cond` columns. Replicate `r` draws from stream `r` of a
/// ChaCha8 generator keyed by `seed`, so the result does not depend on thread
/// scheduling.
pub fn permutation_ci_test(
    data: &SampleMatrix,
    a: &str,
    b: &str,
    cond: &[&str],
    n_perm: usize,
    seed: u64,
) -> Result<CiTestResult> {
    if n_perm == 0 {
        return Err(Error::Config("permutation test needs n_perm >= 1".into()));
    }
    if n_perm < 100 {
        log::warn!("permutation test with only {n_perm} permutations");
    }
    let strata = data.strata(cond)?;
    if strata.iter().all(|s| s.len() < 2) {
        return Err(Error::DegenerateInput("every conditioning stratum has a single row".into()));
    }
    let stat = if data.kind(a)?.is_discrete() && data.kind(b)?.is_discrete() {
        Statistic::G { a: data.codes(a)?, b: data.codes(b)? }
    } else {
        let bc = centre_within(data.column(b)?, &strata);
        let bb = bc.iter().map(|v| v * v).sum();
        Statistic::Corr { a: centre_within(data.column(a)?, &strata), b: bc, bb }
    };

    let n = data.n_rows();
    let identity: Vec<usize> = (0..n).collect();
    let observed = stat.eval(&identity, &strata);
    let threshold = observed - TIE_TOL * observed.abs().max(1.0);
    let exceed = (0..n_perm)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut perm = identity.clone();
            for s in &strata {
                let mut idx = s.clone();
                idx.shuffle(&mut rng);
                for (&to, &from) in s.iter().zip(&idx) {
                    perm[to] = from;
                }
            }
            stat.eval(&perm, &strata) >= threshold
        })
        .count();

    Ok(CiTestResult {
        p_value: (1 + exceed) as f64 / (1 + n_perm) as f64,
        statistic: observed,
        test_name: TestKind::Permutation,
        n_effective: n,
    })
}

#[cfg(test)]
mod tests {
    use super::super::sample::ColumnKind;
    use super::*;

    fn binary_pair(a: Vec<f64>, b: Vec<f64>) -> SampleMatrix {
        SampleMatrix::new()
            .with_column("a", ColumnKind::Binary, a)
            .unwrap()
            .with_column("b", ColumnKind::Binary, b)
            .unwrap()
    }

    /// Fraction of all n! orderings of `a` whose G ties or beats the identity.
    fn exact_tail(a: &[i64], b: &[i64]) -> f64 {
        fn rec(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if k == perm.len() {
                f(perm);
                return;
            }
            for i in k..perm.len() {
                perm.swap(k, i);
                rec(k + 1, perm, f);
                perm.swap(k, i);
            }
        }
        let strata = vec![(0..a.len()).collect::<Vec<_>>()];
        let obs = stratified_g(a, b, &strata).0;
        let (mut hit, mut total) = (0usize, 0usize);
        let mut perm: Vec<usize> = (0..a.len()).collect();
        rec(0, &mut perm, &mut |p| {
            let pa: Vec<i64> = p.iter().map(|&k| a[k]).collect();
            total += 1;
            if stratified_g(&pa, b, &strata).0 >= obs - 1e-9 {
                hit += 1;
            }
        });
        hit as f64 / total as f64
    }

    #[test]
    fn enumeration_at_n8_counts_complement_tie() {
        let a = [0, 0, 0, 0, 1, 1, 1, 1];
        // a = b and a = 1 - b are the only two assignments reaching the maximum.
        assert!((exact_tail(&a, &a) - 2.0 / 70.0).abs() < 1e-12);
    }

    #[test]
    fn perfectly_dependent_large_sample_hits_floor() {
        let a: Vec<f64> = (0..60).map(|k| (k % 2) as f64).collect();
        let r = permutation_ci_test(&binary_pair(a.clone(), a), "a", "b", &[], 999, 7).unwrap();
        assert!((r.p_value - 1.0 / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn constant_column_gives_unit_p() {
        let b: Vec<f64> = (0..40).map(|k| (k % 3 == 0) as u8 as f64).collect();
        let r = permutation_ci_test(&binary_pair(vec![1.0; 40], b), "a", "b", &[], 199, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn seed_determinism() {
        let a: Vec<f64> = (0..50).map(|k| ((k * 7) % 5 < 2) as u8 as f64).collect();
        let b: Vec<f64> = (0..50).map(|k| ((k * 3) % 4 < 2) as u8 as f64).collect();
        let m = binary_pair(a, b);
        let p1 = permutation_ci_test(&m, "a", "b", &[], 300, 42).unwrap();
        let p2 = permutation_ci_test(&m, "a", "b", &[], 300, 42).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn singleton_strata_are_degenerate() {
        let m = binary_pair(vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0])
            .with_column("c", ColumnKind::Categorical(3), vec![0.0, 1.0, 2.0])
            .unwrap();
        assert!(matches!(
            permutation_ci_test(&m, "a", "b", &["c"], 100, 0),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn continuous_statistic_is_absolute_correlation() {
        let a: Vec<f64> = (0..30).map(|k| k as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| -2.0 * v + 1.0).collect();
        let m = SampleMatrix::new()
            .with_column("a", ColumnKind::Continuous, a)
            .unwrap()
            .with_column("b", ColumnKind::Continuous, b)
            .unwrap();
        let r = permutation_ci_test(&m, "a", "b", &[], 199, 3).unwrap();
        assert!((r.statistic - 1.0).abs() < 1e-12);
        assert!((r.p_value - 1.0 / 200.0).abs() < 1e-15);
    }
}
