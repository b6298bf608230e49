use confdetect::detector::{build_rounds, detect, fisher_combine, DetectorConfig};
use confdetect::seed::derive_seed;
use confdetect::sim::{sample_binary_scm, BinaryScmSpec};
use confdetect::stats::{chi2_survival, TestKind};
use confdetect::{EnvBlock, MultiEnvDataset};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const REPS: u64 = 200;
const ALPHA: f64 = 0.05;

fn g_config() -> DetectorConfig {
    DetectorConfig::new(TestKind::GTest)
}

fn rate(hits: usize) -> (f64, f64) {
    let r = hits as f64 / REPS as f64;
    (r, (r * (1.0 - r) / REPS as f64).sqrt())
}

/// Rejections over `REPS` binary datasets, optionally transformed first.
fn rejections(lambda: f64, k: usize, n: usize, config: &DetectorConfig, salt: u64, f: fn(MultiEnvDataset, u64) -> MultiEnvDataset) -> usize {
    (0..REPS)
        .into_par_iter()
        .filter(|&r| {
            let seed = derive_seed(salt, r, 0);
            let ds = sample_binary_scm(&BinaryScmSpec::with_lambda(lambda), k, n, seed).unwrap();
            detect(&f(ds, seed), config).unwrap().rejected
        })
        .count()
}

fn shuffle_within_envs(ds: MultiEnvDataset, seed: u64) -> MultiEnvDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let blocks = ds
        .into_blocks()
        .into_iter()
        .map(|b| {
            let mut idx: Vec<usize> = (0..b.len()).collect();
            idx.shuffle(&mut rng);
            let take = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            EnvBlock::new(b.env_id.clone(), take(&b.t), take(&b.y), b.x.iter().map(|c| take(c)).collect())
        })
        .collect();
    MultiEnvDataset::new(blocks).unwrap()
}

fn identity(ds: MultiEnvDataset, _: u64) -> MultiEnvDataset {
    ds
}

fn ragged(sizes: &[usize], seed: u64) -> MultiEnvDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let bits = |rng: &mut ChaCha8Rng| (0..n).map(|_| f64::from(rng.random::<bool>())).collect::<Vec<f64>>();
            let (t, y, x) = (bits(&mut rng), bits(&mut rng), bits(&mut rng));
            EnvBlock::new(format!("e{k:03}"), t, y, vec![x])
        })
        .collect();
    MultiEnvDataset::new(blocks).unwrap()
}

#[test]
fn fisher_combination_matches_its_definition() {
    let ps = [0.2, 0.03, 0.9, 0.5];
    let (z, p) = fisher_combine(&ps).unwrap();
    let want: f64 = ps.iter().map(|p: &f64| -2.0 * p.ln()).sum();
    assert!((z - want).abs() < 1e-12);
    assert!((p - chi2_survival(want, 8).unwrap()).abs() < 1e-12);
    assert!(fisher_combine(&[]).is_err());
    assert!(fisher_combine(&[1.2]).is_err());
    assert!(fisher_combine(&[0.0]).unwrap().0.is_finite());
}

#[test]
fn too_few_paired_environments_is_an_error() {
    let ds = ragged(&[2; 10], 1);
    assert!(build_rounds(&ds, 25, None).is_err());
    assert!(detect(&ds, &g_config()).is_err());
    assert!(detect(&ds, &DetectorConfig { k_min: 1, ..g_config() }).is_err());
}

#[test]
fn null_rejection_rate_is_calibrated() {
    let (r, se) = rate(rejections(0.0, 200, 4, &g_config(), 31, identity));
    assert!(r <= ALPHA + 3.0 * se.max((ALPHA * (1.0 - ALPHA) / REPS as f64).sqrt()), "null rate {r}");
}

#[test]
fn shuffling_rows_within_environments_keeps_the_rejection_rate() {
    let config = g_config();
    let (a, sa) = rate(rejections(5.0, 500, 2, &config, 41, identity));
    let (b, sb) = rate(rejections(5.0, 500, 2, &config, 41, shuffle_within_envs));
    assert!((a - b).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "original {a}, shuffled {b}");
}

#[test]
fn more_rounds_do_not_lose_power() {
    let all = g_config();
    let one = DetectorConfig { max_rounds: Some(1), ..g_config() };
    let (many, se_many) = rate(rejections(5.0, 200, 6, &all, 51, identity));
    let (single, se_single) = rate(rejections(5.0, 200, 6, &one, 51, identity));
    assert!(many >= single - 3.0 * (se_many * se_many + se_single * se_single).sqrt(), "L rounds {many}, 1 round {single}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn report_ignores_environment_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let ds = sample_binary_scm(&BinaryScmSpec::with_lambda(1.0), 60, 4, seed).unwrap();
        let mut blocks = ds.blocks().to_vec();
        blocks.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let shuffled = MultiEnvDataset::new(blocks).unwrap();
        for kind in [TestKind::GTest, TestKind::Permutation] {
            let config = DetectorConfig { k_min: 10, seed, ..DetectorConfig::new(kind) };
            prop_assert_eq!(detect(&ds, &config).unwrap(), detect(&shuffled, &config).unwrap());
        }
    }

    #[test]
    fn rounds_follow_the_environment_sizes(sizes in proptest::collection::vec(1usize..12, 3..30), k_min in 2usize..6, grow in 0usize..4) {
        let oracle = |sizes: &[usize]| (1..).take_while(|i| sizes.iter().filter(|&&n| n >= 2 * i).count() >= k_min).count();
        let ds = ragged(&sizes, 3);
        let got = build_rounds(&ds, k_min, None).map(|r| r.len()).unwrap_or(0);
        prop_assert_eq!(got, oracle(&sizes));

        let bigger: Vec<usize> = sizes.iter().map(|n| n + grow).collect();
        let more = build_rounds(&ragged(&bigger, 3), k_min, None).map(|r| r.len()).unwrap_or(0);
        prop_assert!(more >= got);

        if let Ok(rounds) = build_rounds(&ds, k_min, None) {
            for r in &rounds {
                prop_assert_eq!(r.n_envs(), sizes.iter().filter(|&&n| n >= 2 * r.index).count());
            }
        }
    }
}
