use std::collections::BTreeSet;
use std::ops::Deref;

use super::Dag;
use crate::error::{Error, Result};

/// Suffix of the first observation copy (`T_i`).
pub const FIRST_COPY: &str = "i";
/// Suffix of the second observation copy (`T_j`).
pub const SECOND_COPY: &str = "j";

const MECHANISM_PREFIX: &str = "theta_";

/// Name of the mechanism node governing base variable `var`.
pub fn mechanism_name(var: &str) -> String {
    format!("{MECHANISM_PREFIX}{var}")
}

/// Accepts either `theta_T` or the bare base name `T`.
fn base_of(mechanism: &str) -> &str {
    mechanism.strip_prefix(MECHANISM_PREFIX).unwrap_or(mechanism)
}

/// Two observation copies of a base graph sharing one mechanism node per
/// variable. Dereferences to the expanded [`Dag`].
#[derive(Debug, Clone)]
pub struct UnrolledGraph {
    base: Dag,
    graph: Dag,
    degenerate: BTreeSet<String>,
    dependencies: Vec<(String, String)>,
}

impl UnrolledGraph {
    pub fn base(&self) -> &Dag {
        &self.base
    }

    pub fn dag(&self) -> &Dag {
        &self.graph
    }

    /// Base variables whose mechanism is constant and therefore absent.
    pub fn degenerate(&self) -> &BTreeSet<String> {
        &self.degenerate
    }

    pub fn dependencies(&self) -> &[(String, String)] {
        &self.dependencies
    }

    /// Name of `var` in the given copy, e.g. `copy("T", SECOND_COPY) == "T_j"`.
    pub fn copy(var: &str, which: &str) -> String {
        format!("{var}_{which}")
    }
}

impl Deref for UnrolledGraph {
    type Target = Dag;

    fn deref(&self) -> &Dag {
        &self.graph
    }
}

/// Builds the two-copy graph for `base`.
///
/// Mechanisms named in `degenerate` are dropped. Each pair in
/// `mech_dependencies` gets a fresh latent parent `dep_A_B` pointing into both
/// mechanism nodes. Names may be given as `theta_V` or as the bare variable `V`.
pub fn unroll<S: AsRef<str>>(
    base: &Dag,
    degenerate: &[S],
    mech_dependencies: &[(S, S)],
) -> Result<UnrolledGraph> {
    let known = |name: &str| -> Result<String> {
        let b = base_of(name);
        if base.index_of(b).is_none() {
            return Err(Error::Graph(format!("`{name}` is not a mechanism of the base graph")));
        }
        Ok(b.to_string())
    };
    let degenerate: BTreeSet<String> =
        degenerate.iter().map(|d| known(d.as_ref())).collect::<Result<_>>()?;
    let mut dependencies = Vec::with_capacity(mech_dependencies.len());
    for (a, b) in mech_dependencies {
        let (a, b) = (known(a.as_ref())?, known(b.as_ref())?);
        for m in [&a, &b] {
            if degenerate.contains(m) {
                return Err(Error::Graph(format!(
                    "dependency names degenerate mechanism `{}`",
                    mechanism_name(m)
                )));
            }
        }
        if a == b {
            return Err(Error::Graph(format!("mechanism `{}` cannot depend on itself", mechanism_name(&a))));
        }
        dependencies.push((a, b));
    }

    let mut vars: Vec<(String, bool)> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    for copy in [FIRST_COPY, SECOND_COPY] {
        for (v, name) in base.names().iter().enumerate() {
            vars.push((UnrolledGraph::copy(name, copy), base.is_latent(v)));
        }
        for (from, to) in base.edges() {
            edges.push((UnrolledGraph::copy(from, copy), UnrolledGraph::copy(to, copy)));
        }
    }
    for name in base.names() {
        if degenerate.contains(name) {
            continue;
        }
        let mech = mechanism_name(name);
        vars.push((mech.clone(), true));
        for copy in [FIRST_COPY, SECOND_COPY] {
            edges.push((mech.clone(), UnrolledGraph::copy(name, copy)));
        }
    }
    for (a, b) in &dependencies {
        let dep = format!("dep_{a}_{b}");
        vars.push((dep.clone(), true));
        edges.push((dep.clone(), mechanism_name(a)));
        edges.push((dep, mechanism_name(b)));
    }

    let graph = Dag::new(&vars, &edges)?;
    Ok(UnrolledGraph { base: base.clone(), graph, degenerate, dependencies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{d_separated, DSepQuery};

    fn confounded() -> Dag {
        Dag::new(
            &[("T", false), ("Y", false), ("X", false), ("U", true)],
            &[("X", "T"), ("X", "Y"), ("T", "Y"), ("U", "T"), ("U", "Y"), ("U", "X")],
        )
        .unwrap()
    }

    fn theorem1_query() -> DSepQuery {
        DSepQuery::new(["T_j"], ["Y_i"], ["T_i", "X_i", "X_j"])
    }

    #[test]
    fn node_count_and_mechanism_degree() {
        let u = unroll::<&str>(&confounded(), &[], &[]).unwrap();
        assert_eq!(u.node_count(), 12);
        for v in ["T", "Y", "X", "U"] {
            let m = u.index_of(&mechanism_name(v)).unwrap();
            assert_eq!(u.children(m).len(), 2);
            assert!(u.parents(m).is_empty());
        }
        assert_eq!(u.edge_count(), 2 * 6 + 8);
    }

    #[test]
    fn degenerate_mechanisms_are_removed() {
        let u = unroll(&confounded(), &["theta_T", "U"], &[]).unwrap();
        assert_eq!(u.node_count(), 10);
        assert!(u.index_of("theta_T").is_none());
        assert!(u.index_of("theta_U").is_none());
    }

    #[test]
    fn dependent_mechanisms_open_a_path() {
        let g = Dag::new(
            &[("T", false), ("Y", false), ("X", false), ("U", true)],
            &[("X", "T"), ("X", "Y"), ("T", "Y")],
        )
        .unwrap();
        let plain = unroll::<&str>(&g, &[], &[]).unwrap();
        assert!(d_separated(&plain, &theorem1_query()).unwrap());
        let dependent = unroll(&g, &[], &[("theta_T", "theta_Y")]).unwrap();
        assert!(dependent.index_of("dep_T_Y").is_some());
        assert!(!d_separated(&dependent, &theorem1_query()).unwrap());
    }

    #[test]
    fn dependency_on_degenerate_mechanism_is_rejected() {
        let r = unroll(&confounded(), &["T"], &[("T", "Y")]);
        assert!(matches!(r, Err(Error::Graph(_))));
    }

    #[test]
    fn all_degenerate_disconnects_copies() {
        let u = unroll(&confounded(), &["T", "Y", "X", "U"], &[]).unwrap();
        for a in ["T", "Y", "X", "U"] {
            for b in ["T", "Y", "X", "U"] {
                let q = DSepQuery::new(
                    [UnrolledGraph::copy(a, FIRST_COPY)],
                    [UnrolledGraph::copy(b, SECOND_COPY)],
                    Vec::<String>::new(),
                );
                assert!(d_separated(&u, &q).unwrap());
            }
        }
    }
}
