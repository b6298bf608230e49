//! Directed acyclic graphs and d-separation.
//!
//! [`Dag`] is an immutable graph over named variables. [`d_separated`] answers
//! d-separation queries with a linear-time reachability pass (the "Bayes-ball"
//! traversal): starting from the source set, a walk is continued through a node
//! only if the node is an unconditioned non-collider, or a collider that is
//! conditioned on or has a conditioned descendant.

mod tables;
mod unroll;

pub use tables::{
    compare_csv, enumerate_theorem1_family, enumerate_theorem2_family, mechanism_subsets,
    render_degenerate_csv, render_theorem1_csv, render_theorem2_csv, selection_bias_check,
    verify_degenerate_table, verify_theorem1_table, verify_theorem2_table, DegenerateRow,
    EdgePattern, EdgeState, GoldenMismatch, SelectionBiasVerdicts, Theorem1Row, Theorem2Row,
    DEGENERATE_GOLDEN, THEOREM1_GOLDEN, THEOREM2_GOLDEN,
};
pub use unroll::{mechanism_name, unroll, UnrolledGraph, FIRST_COPY, SECOND_COPY};

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    latent: Vec<bool>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl Dag {
    /// Builds a graph from `(name, latent)` declarations and `(parent, child)` edges.
    ///
    /// Rejects unknown endpoints, self-loops, duplicate edges, duplicate variable
    /// names and directed cycles.
    pub fn new<S: AsRef<str>>(variables: &[(S, bool)], edges: &[(S, S)]) -> Result<Self> {
        let mut names = Vec::with_capacity(variables.len());
        let mut latent = Vec::with_capacity(variables.len());
        let mut index = HashMap::with_capacity(variables.len());
        for (name, is_latent) in variables {
            let name = name.as_ref().to_string();
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(Error::Graph(format!("variable `{name}` declared twice")));
            }
            names.push(name);
            latent.push(*is_latent);
        }

        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (from, to) in edges {
            let (from, to) = (from.as_ref(), to.as_ref());
            let a = *index
                .get(from)
                .ok_or_else(|| Error::Graph(format!("edge endpoint `{from}` is not a variable")))?;
            let b = *index
                .get(to)
                .ok_or_else(|| Error::Graph(format!("edge endpoint `{to}` is not a variable")))?;
            if a == b {
                return Err(Error::Graph(format!("self-edge on `{from}`")));
            }
            if children[a].contains(&b) {
                return Err(Error::Graph(format!("duplicate edge {from} -> {to}")));
            }
            children[a].push(b);
            parents[b].push(a);
        }

        let dag = Dag { names, latent, parents, children, index };
        if dag.topological_order().is_none() {
            return Err(Error::Graph("edge set contains a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn is_latent(&self, node: usize) -> bool {
        self.latent[node]
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// All edges as `(parent, child)` name pairs, in declaration order per parent.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.children.iter().enumerate().flat_map(move |(a, ch)| {
            ch.iter().map(move |&b| (self.names[a].as_str(), self.names[b].as_str()))
        })
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index_of(from), self.index_of(to)) {
            (Some(a), Some(b)) => self.children[a].contains(&b),
            _ => false,
        }
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.node_count();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Nodes with a directed path into any member of `targets`, including the targets.
    pub fn ancestors_of(&self, targets: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut stack: Vec<usize> = targets.to_vec();
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.parents[v].iter().copied().filter(|&p| !seen[p]));
        }
        seen
    }

    /// True when a directed path `ancestor ⇝ descendant` of length ≥ 1 exists.
    pub fn is_ancestor(&self, ancestor: &str, descendant: &str) -> bool {
        let (Some(a), Some(d)) = (self.index_of(ancestor), self.index_of(descendant)) else {
            return false;
        };
        let mut seen = vec![false; self.node_count()];
        let mut stack = self.children[a].clone();
        while let Some(v) = stack.pop() {
            if v == d {
                return true;
            }
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend_from_slice(&self.children[v]);
            }
        }
        false
    }
}

/// Three pairwise-disjoint node sets: is `a_set ⊥ b_set | cond_set`?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DSepQuery {
    pub a_set: BTreeSet<String>,
    pub b_set: BTreeSet<String>,
    pub cond_set: BTreeSet<String>,
}

impl DSepQuery {
    pub fn new<A, B, C>(a: A, b: B, cond: C) -> Self
    where
        A: IntoIterator,
        A::Item: Into<String>,
        B: IntoIterator,
        B::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        DSepQuery {
            a_set: a.into_iter().map(Into::into).collect(),
            b_set: b.into_iter().map(Into::into).collect(),
            cond_set: cond.into_iter().map(Into::into).collect(),
        }
    }

    pub fn swapped(&self) -> Self {
        DSepQuery {
            a_set: self.b_set.clone(),
            b_set: self.a_set.clone(),
            cond_set: self.cond_set.clone(),
        }
    }

    fn resolve(&self, g: &Dag) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        if self.a_set.is_empty() || self.b_set.is_empty() {
            return Err(Error::Query("source and target sets must be nonempty".into()));
        }
        for (x, y, what) in [
            (&self.a_set, &self.b_set, "a/b"),
            (&self.a_set, &self.cond_set, "a/cond"),
            (&self.b_set, &self.cond_set, "b/cond"),
        ] {
            if let Some(shared) = x.intersection(y).next() {
                return Err(Error::Query(format!("`{shared}` appears in both {what} sets")));
            }
        }
        let lookup = |set: &BTreeSet<String>| -> Result<Vec<usize>> {
            set.iter()
                .map(|name| {
                    g.index_of(name)
                        .ok_or_else(|| Error::Query(format!("unknown node `{name}`")))
                })
                .collect()
        };
        Ok((lookup(&self.a_set)?, lookup(&self.b_set)?, lookup(&self.cond_set)?))
    }
}

/// Returns `true` iff every path between `a_set` and `b_set` is blocked by `cond_set`.
pub fn d_separated(g: &Dag, q: &DSepQuery) -> Result<bool> {
    let (a, b, z) = q.resolve(g)?;
    let reachable = reachable_from(g, &a, &z);
    Ok(b.iter().all(|&v| !reachable[v]))
}

/// Nodes connected to `sources` by an active trail given `cond`.
fn reachable_from(g: &Dag, sources: &[usize], cond: &[usize]) -> Vec<bool> {
    let n = g.node_count();
    let mut in_cond = vec![false; n];
    for &c in cond {
        in_cond[c] = true;
    }
    // A collider is open iff it is an ancestor of (or in) the conditioning set.
    let cond_ancestor = g.ancestors_of(cond);

    // Direction of arrival: `UP` when entered from a child, `DOWN` from a parent.
    const UP: usize = 0;
    const DOWN: usize = 1;
    let mut visited = vec![[false; 2]; n];
    let mut reachable = vec![false; n];
    let mut queue: VecDeque<(usize, usize)> = sources.iter().map(|&s| (s, UP)).collect();

    while let Some((v, dir)) = queue.pop_front() {
        if std::mem::replace(&mut visited[v][dir], true) {
            continue;
        }
        if !in_cond[v] {
            reachable[v] = true;
        }
        if dir == UP && !in_cond[v] {
            queue.extend(g.parents(v).iter().map(|&p| (p, UP)));
            queue.extend(g.children(v).iter().map(|&c| (c, DOWN)));
        } else if dir == DOWN {
            if !in_cond[v] {
                queue.extend(g.children(v).iter().map(|&c| (c, DOWN)));
            }
            if cond_ancestor[v] {
                queue.extend(g.parents(v).iter().map(|&p| (p, UP)));
            }
        }
    }
    reachable
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Dag {
        Dag::new(
            &[("A", false), ("B", false), ("C", false)],
            &[("A", "B"), ("B", "C")],
        )
        .unwrap()
    }

    #[test]
    fn rejects_cycles_self_edges_and_duplicates() {
        let vars = [("A", false), ("B", false)];
        assert!(matches!(Dag::new(&vars, &[("A", "B"), ("B", "A")]), Err(Error::Graph(_))));
        assert!(matches!(Dag::new(&vars, &[("A", "A")]), Err(Error::Graph(_))));
        assert!(matches!(Dag::new(&vars, &[("A", "B"), ("A", "B")]), Err(Error::Graph(_))));
        assert!(matches!(Dag::new(&vars, &[("A", "Q")]), Err(Error::Graph(_))));
    }

    #[test]
    fn edgeless_pair_is_separated() {
        let g = Dag::new::<&str>(&[("A", false), ("B", false)], &[]).unwrap();
        let q = DSepQuery::new(["A"], ["B"], Vec::<String>::new());
        assert!(d_separated(&g, &q).unwrap());
    }

    #[test]
    fn chain_blocks_only_when_middle_is_conditioned() {
        let g = chain();
        assert!(!d_separated(&g, &DSepQuery::new(["A"], ["C"], Vec::<String>::new())).unwrap());
        assert!(d_separated(&g, &DSepQuery::new(["A"], ["C"], ["B"])).unwrap());
    }

    #[test]
    fn collider_opens_through_descendant() {
        let g = Dag::new(
            &[("A", false), ("B", false), ("C", false), ("D", false)],
            &[("A", "C"), ("B", "C"), ("C", "D")],
        )
        .unwrap();
        let none = Vec::<String>::new();
        assert!(d_separated(&g, &DSepQuery::new(["A"], ["B"], none)).unwrap());
        assert!(!d_separated(&g, &DSepQuery::new(["A"], ["B"], ["C"])).unwrap());
        assert!(!d_separated(&g, &DSepQuery::new(["A"], ["B"], ["D"])).unwrap());
    }

    #[test]
    fn query_errors() {
        let g = chain();
        assert!(matches!(
            d_separated(&g, &DSepQuery::new(["A"], ["Z"], Vec::<String>::new())),
            Err(Error::Query(_))
        ));
        assert!(matches!(
            d_separated(&g, &DSepQuery::new(["A"], ["C"], ["A"])),
            Err(Error::Query(_))
        ));
    }

    #[test]
    fn ancestry() {
        let g = chain();
        assert!(g.is_ancestor("A", "C"));
        assert!(!g.is_ancestor("C", "A"));
        assert!(!g.is_ancestor("A", "A"));
    }
}
