use std::collections::BTreeSet;

use confdetect::graph::{d_separated, unroll, DSepQuery, Dag, UnrolledGraph, FIRST_COPY, SECOND_COPY};
use confdetect::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn name(i: usize) -> String {
    format!("V{i}")
}

fn vars(n: usize) -> Vec<(String, bool)> {
    (0..n).map(|i| (name(i), false)).collect()
}

/// A DAG whose edges respect a shuffled node order.
fn random_dag(rng: &mut ChaCha8Rng, n: usize, density: f64) -> (Dag, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random::<f64>() < density {
                edges.push((order[a], order[b]));
            }
        }
    }
    let named: Vec<(String, String)> = edges.iter().map(|&(a, b)| (name(a), name(b))).collect();
    (Dag::new(&vars(n), &named).unwrap(), edges)
}

/// Disjoint, nonempty `a` and `b` plus a possibly empty conditioning set.
fn random_query(rng: &mut ChaCha8Rng, n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let na = 1 + usize::from(n > 3 && rng.random::<bool>());
    let nb = 1 + usize::from(n > 4 && rng.random::<bool>());
    let nz = rng.random_range(0..=(n - na - nb).min(3));
    let a = idx[..na].to_vec();
    let b = idx[na..na + nb].to_vec();
    let z = idx[na + nb..na + nb + nz].to_vec();
    (a, b, z)
}

fn query(a: &[usize], b: &[usize], z: &[usize]) -> DSepQuery {
    DSepQuery::new(a.iter().map(|&i| name(i)), b.iter().map(|&i| name(i)), z.iter().map(|&i| name(i)))
}

fn has_cycle(n: usize, edges: &[(usize, usize)]) -> bool {
    fn visit(v: usize, adj: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[v] = 1;
        for &w in &adj[v] {
            if state[w] == 1 || (state[w] == 0 && visit(w, adj, state)) {
                return true;
            }
        }
        state[v] = 2;
        false
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    let mut state = vec![0u8; n];
    (0..n).any(|v| state[v] == 0 && visit(v, &adj, &mut state))
}

/// Separation in the moralised ancestral graph of `a ∪ b ∪ z`.
fn moral_separated(n: usize, edges: &[(usize, usize)], a: &[usize], b: &[usize], z: &[usize]) -> bool {
    let mut keep = vec![false; n];
    let mut stack: Vec<usize> = a.iter().chain(b).chain(z).copied().collect();
    while let Some(v) = stack.pop() {
        if !std::mem::replace(&mut keep[v], true) {
            stack.extend(edges.iter().filter(|e| e.1 == v).map(|e| e.0));
        }
    }
    let mut adj = vec![BTreeSet::new(); n];
    for &(p, c) in edges.iter().filter(|e| keep[e.0] && keep[e.1]) {
        adj[p].insert(c);
        adj[c].insert(p);
    }
    for c in 0..n {
        let parents: Vec<usize> = edges.iter().filter(|e| e.1 == c && keep[e.0] && keep[c]).map(|e| e.0).collect();
        for &p in &parents {
            for &q in &parents {
                if p != q {
                    adj[p].insert(q);
                }
            }
        }
    }
    let blocked: BTreeSet<usize> = z.iter().copied().collect();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = a.to_vec();
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        if b.contains(&v) {
            return false;
        }
        stack.extend(adj[v].iter().filter(|w| !blocked.contains(w)));
    }
    true
}

/// Joint distribution of binary variables with random CPTs, indexed by bitmask.
fn joint(rng: &mut ChaCha8Rng, n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let parents: Vec<Vec<usize>> = (0..n).map(|v| edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()).collect();
    let cpt: Vec<Vec<f64>> = parents.iter().map(|ps| (0..1 << ps.len()).map(|_| rng.random_range(0.1..0.9)).collect()).collect();
    (0..1usize << n)
        .map(|mask| {
            (0..n)
                .map(|v| {
                    let row = parents[v].iter().enumerate().fold(0, |acc, (k, &p)| acc | (((mask >> p) & 1) << k));
                    let p1 = cpt[v][row];
                    if (mask >> v) & 1 == 1 {
                        p1
                    } else {
                        1.0 - p1
                    }
                })
                .product()
        })
        .collect()
}

/// Largest violation of `P(a,b,z) P(z) = P(a,z) P(b,z)` over all assignments.
fn ci_violation(p: &[f64], a: &[usize], b: &[usize], z: &[usize]) -> f64 {
    let bits = |set: &[usize]| set.iter().fold(0usize, |m, &v| m | (1 << v));
    let (ma, mb, mz) = (bits(a), bits(b), bits(z));
    let marg = |keep: usize, val: usize| -> f64 { p.iter().enumerate().filter(|(m, _)| m & keep == val).map(|(_, q)| q).sum() };
    let mut worst: f64 = 0.0;
    for (m, _) in p.iter().enumerate() {
        let (va, vb, vz) = (m & ma, m & mb, m & mz);
        let lhs = marg(ma | mb | mz, va | vb | vz) * marg(mz, vz);
        let rhs = marg(ma | mz, va | vz) * marg(mb | mz, vb | vz);
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

#[test]
fn dsep_agrees_with_enumerated_joint_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut separated, mut connected) = (0, 0);
    for _ in 0..300 {
        let n = rng.random_range(3..=6);
        let (g, edges) = random_dag(&mut rng, n, 0.45);
        let (a, b, z) = random_query(&mut rng, n);
        let p = joint(&mut rng, n, &edges);
        let violation = ci_violation(&p, &a, &b, &z);
        if d_separated(&g, &query(&a, &b, &z)).unwrap() {
            separated += 1;
            assert!(violation < 1e-12, "separated but dependent: {edges:?} {a:?} {b:?} | {z:?}");
        } else {
            connected += 1;
            assert!(violation > 1e-12, "connected but independent under random CPTs: {edges:?} {a:?} {b:?} | {z:?}");
        }
    }
    assert!(separated >= 50 && connected >= 50, "{separated} separated, {connected} connected");
}

#[test]
fn collider_opens_when_a_descendant_is_observed() {
    let g = Dag::new(
        &[("A", false), ("B", false), ("C", false), ("D", false)],
        &[("A", "C"), ("B", "C"), ("C", "D")],
    )
    .unwrap();
    assert!(d_separated(&g, &DSepQuery::new(["A"], ["B"], Vec::<String>::new())).unwrap());
    assert!(!d_separated(&g, &DSepQuery::new(["A"], ["B"], ["D"])).unwrap());
    assert!(!d_separated(&g, &DSepQuery::new(["A"], ["B"], ["C"])).unwrap());
}

#[test]
fn malformed_queries_are_rejected() {
    let g = Dag::new(&[("A", false), ("B", false)], &[("A", "B")]).unwrap();
    for q in [
        DSepQuery::new(["A"], ["A"], Vec::<String>::new()),
        DSepQuery::new(["A"], ["B"], ["B"]),
        DSepQuery::new(["A"], ["Z"], Vec::<String>::new()),
        DSepQuery::new(Vec::<String>::new(), ["B"], Vec::<String>::new()),
    ] {
        assert!(matches!(d_separated(&g, &q), Err(Error::Query(_))), "{q:?}");
    }
}

fn edge_lists() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..=7).prop_flat_map(|n| {
        let pairs = proptest::collection::vec((0..n, 0..n), 0..=n * 2);
        (Just(n), pairs)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn construction_accepts_exactly_the_acyclic_edge_sets((n, raw) in edge_lists()) {
        let mut edges: Vec<(usize, usize)> = raw.into_iter().filter(|(a, b)| a != b).collect();
        edges.sort_unstable();
        edges.dedup();
        let named: Vec<(String, String)> = edges.iter().map(|&(a, b)| (name(a), name(b))).collect();
        let built = Dag::new(&vars(n), &named);
        prop_assert_eq!(built.is_ok(), !has_cycle(n, &edges));
        if let Ok(g) = built {
            let order = g.topological_order().expect("acyclic graph has an order");
            let mut pos = vec![0; n];
            for (k, &v) in order.iter().enumerate() {
                pos[v] = k;
            }
            for (a, b) in g.edges() {
                prop_assert!(pos[g.index_of(a).unwrap()] < pos[g.index_of(b).unwrap()]);
            }
        }
    }

    #[test]
    fn dsep_is_symmetric_and_matches_moralisation(seed in any::<u64>(), n in 3usize..=7, density in 0.1f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, edges) = random_dag(&mut rng, n, density);
        let (a, b, z) = random_query(&mut rng, n);
        let q = query(&a, &b, &z);
        let forward = d_separated(&g, &q).unwrap();
        prop_assert_eq!(forward, d_separated(&g, &q.swapped()).unwrap());
        prop_assert_eq!(forward, moral_separated(n, &edges, &a, &b, &z));
    }

    #[test]
    fn fully_degenerate_unrolling_disconnects_the_copies(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = random_dag(&mut rng, n, 0.5);
        let all: Vec<String> = (0..n).map(name).collect();
        let u = unroll::<String>(&g, &all, &[]).unwrap();
        prop_assert_eq!(u.node_count(), 2 * n);
        for a in &all {
            for b in &all {
                let q = DSepQuery::new(
                    [UnrolledGraph::copy(a, FIRST_COPY)],
                    [UnrolledGraph::copy(b, SECOND_COPY)],
                    Vec::<String>::new(),
                );
                prop_assert!(d_separated(&u, &q).unwrap());
            }
        }
    }

    #[test]
    fn shared_mechanisms_link_copies_of_the_same_variable(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, _) = random_dag(&mut rng, n, 0.5);
        let u = unroll::<String>(&g, &[], &[]).unwrap();
        for v in 0..n {
            let q = DSepQuery::new(
                [UnrolledGraph::copy(&name(v), FIRST_COPY)],
                [UnrolledGraph::copy(&name(v), SECOND_COPY)],
                Vec::<String>::new(),
            );
            prop_assert!(!d_separated(&u, &q).unwrap());
        }
    }
}
