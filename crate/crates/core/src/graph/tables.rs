//! Exhaustive enumeration of the small (T, Y, X, U) graph families and the
//! d-separation verdicts used to characterise hidden confounding.

use std::fmt::Write as _;

use super::{d_separated, unroll, DSepQuery, Dag};
use crate::error::Result;

pub const THEOREM1_GOLDEN: &str = include_str!("../../golden/table1.csv");
pub const THEOREM2_GOLDEN: &str = include_str!("../../golden/table2.csv");
pub const DEGENERATE_GOLDEN: &str = include_str!("../../golden/table3.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeState {
    Forward,
    Backward,
    Absent,
}

impl EdgeState {
    pub const ALL: [EdgeState; 3] = [EdgeState::Forward, EdgeState::Backward, EdgeState::Absent];

    pub fn symbol(self) -> &'static str {
        match self {
            EdgeState::Forward => "->",
            EdgeState::Backward => "<-",
            EdgeState::Absent => "none",
        }
    }
}

/// Orientation of each variable-pair slot of a small graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePattern {
    pub slots: Vec<(&'static str, &'static str, EdgeState)>,
}

impl EdgePattern {
    /// Reads the state of each `(a, b)` slot off an existing graph.
    pub fn read(g: &Dag, slots: &[(&'static str, &'static str)]) -> Self {
        let slots = slots
            .iter()
            .map(|&(a, b)| {
                let state = if g.has_edge(a, b) {
                    EdgeState::Forward
                } else if g.has_edge(b, a) {
                    EdgeState::Backward
                } else {
                    EdgeState::Absent
                };
                (a, b, state)
            })
            .collect();
        EdgePattern { slots }
    }

    pub fn state(&self, a: &str, b: &str) -> EdgeState {
        self.slots
            .iter()
            .find(|s| s.0 == a && s.1 == b)
            .map(|s| s.2)
            .unwrap_or(EdgeState::Absent)
    }

    fn edges(&self) -> Vec<(&'static str, &'static str)> {
        self.slots
            .iter()
            .filter_map(|&(a, b, s)| match s {
                EdgeState::Forward => Some((a, b)),
                EdgeState::Backward => Some((b, a)),
                EdgeState::Absent => None,
            })
            .collect()
    }
}

const THEOREM1_SLOTS: [(&str, &str); 6] =
    [("X", "T"), ("X", "Y"), ("T", "Y"), ("U", "T"), ("U", "Y"), ("U", "X")];
const THEOREM2_SLOTS: [(&str, &str); 3] = [("T", "Y"), ("U", "T"), ("U", "Y")];

/// All acyclic orientations of `slots`, odometer order with the last slot
/// fastest and states ordered forward, backward, absent. `fixed` pins the
/// leading slots.
fn enumerate(
    vars: &[(&str, bool)],
    slots: &[(&'static str, &'static str)],
    fixed: &[EdgeState],
) -> Vec<Dag> {
    let free = slots.len() - fixed.len();
    let total = 3usize.pow(free as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut states = fixed.to_vec();
        let mut rest = code;
        let mut tail = vec![EdgeState::Absent; free];
        for k in (0..free).rev() {
            tail[k] = EdgeState::ALL[rest % 3];
            rest /= 3;
        }
        states.extend(tail);
        let pattern = EdgePattern {
            slots: slots.iter().zip(&states).map(|(&(a, b), &s)| (a, b, s)).collect(),
        };
        if let Ok(g) = Dag::new(vars, &pattern.edges()) {
            out.push(g);
        }
    }
    out
}

const THEOREM1_VARS: [(&str, bool); 4] = [("T", false), ("Y", false), ("X", false), ("U", true)];
const THEOREM2_VARS: [(&str, bool); 3] = [("T", false), ("Y", false), ("U", true)];

/// The 40 graphs over (T, Y, X, U) with X→T, X→Y and Y not an ancestor of T.
pub fn enumerate_theorem1_family() -> Vec<Dag> {
    enumerate(&THEOREM1_VARS, &THEOREM1_SLOTS, &[EdgeState::Forward, EdgeState::Forward])
        .into_iter()
        .filter(|g| !g.is_ancestor("Y", "T"))
        .collect()
}

/// The 25 acyclic graphs over (T, Y, U).
pub fn enumerate_theorem2_family() -> Vec<Dag> {
    enumerate(&THEOREM2_VARS, &THEOREM2_SLOTS, &[])
}

fn is_confounder(g: &Dag) -> bool {
    g.has_edge("U", "T") && g.has_edge("U", "Y")
}

fn theorem1_query() -> DSepQuery {
    DSepQuery::new(["T_j"], ["Y_i"], ["T_i", "X_i", "X_j"])
}

#[derive(Debug, Clone)]
pub struct Theorem1Row {
    pub id: usize,
    pub pattern: EdgePattern,
    /// `true` when `T_j ⊥ Y_i | T_i, X_i, X_j` holds in the unrolled graph.
    pub separated: bool,
    pub u_is_confounder: bool,
}

pub fn verify_theorem1_table() -> Result<Vec<Theorem1Row>> {
    let q = theorem1_query();
    enumerate_theorem1_family()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let u = unroll::<&str>(g, &[], &[])?;
            Ok(Theorem1Row {
                id: k + 1,
                pattern: EdgePattern::read(g, &THEOREM1_SLOTS),
                separated: d_separated(&u, &q)?,
                u_is_confounder: is_confounder(g),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Theorem2Row {
    pub id: usize,
    pub pattern: EdgePattern,
    /// `T_j ⊥ Y_i | T_i`.
    pub separated_given_ti: bool,
    /// `T_j ⊥ Y_i | Y_j`.
    pub separated_given_yj: bool,
    pub u_is_confounder: bool,
    pub y_ancestor_of_t: bool,
}

pub fn verify_theorem2_table() -> Result<Vec<Theorem2Row>> {
    let given_ti = DSepQuery::new(["T_j"], ["Y_i"], ["T_i"]);
    let given_yj = DSepQuery::new(["T_j"], ["Y_i"], ["Y_j"]);
    enumerate_theorem2_family()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let u = unroll::<&str>(g, &[], &[])?;
            Ok(Theorem2Row {
                id: k + 1,
                pattern: EdgePattern::read(g, &THEOREM2_SLOTS),
                separated_given_ti: d_separated(&u, &given_ti)?,
                separated_given_yj: d_separated(&u, &given_yj)?,
                u_is_confounder: is_confounder(g),
                y_ancestor_of_t: g.is_ancestor("Y", "T"),
            })
        })
        .collect()
}

/// The 15 nonempty subsets of {T, Y, X, U}, by size then lexicographically
/// in that variable order.
pub fn mechanism_subsets() -> Vec<Vec<&'static str>> {
    const VARS: [&str; 4] = ["T", "Y", "X", "U"];
    let mut subsets: Vec<Vec<usize>> = (1u32..16)
        .map(|mask| (0..4).filter(|b| mask & (1 << b) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets.into_iter().map(|s| s.into_iter().map(|i| VARS[i]).collect()).collect()
}

#[derive(Debug, Clone)]
pub struct DegenerateRow {
    pub id: usize,
    pub pattern: EdgePattern,
    pub u_is_confounder: bool,
    /// One verdict per entry of [`mechanism_subsets`].
    pub separated: Vec<bool>,
}

pub fn verify_degenerate_table() -> Result<Vec<DegenerateRow>> {
    let q = theorem1_query();
    let subsets = mechanism_subsets();
    enumerate_theorem1_family()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let separated = subsets
                .iter()
                .map(|deg| d_separated(unroll(g, deg, &[])?.dag(), &q))
                .collect::<Result<Vec<_>>>()?;
            Ok(DegenerateRow {
                id: k + 1,
                pattern: EdgePattern::read(g, &THEOREM1_SLOTS),
                u_is_confounder: is_confounder(g),
                separated,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionBiasVerdicts {
    /// `T_j ⊥ Y_i | T_i, C_i, C_j` with a varying selection mechanism.
    pub theta_c_random: bool,
    /// The same query with the selection mechanism held fixed.
    pub theta_c_degenerate: bool,
}

/// Collider `T → C ← Y` with `T → Y`, optionally confounded by `U`.
pub fn selection_bias_check(confounded: bool) -> Result<SelectionBiasVerdicts> {
    let vars = [("T", false), ("Y", false), ("C", false), ("U", true)];
    let mut edges = vec![("T", "Y"), ("T", "C"), ("Y", "C")];
    if confounded {
        edges.extend([("U", "T"), ("U", "Y")]);
    }
    let g = Dag::new(&vars, &edges)?;
    let q = DSepQuery::new(["T_j"], ["Y_i"], ["T_i", "C_i", "C_j"]);
    Ok(SelectionBiasVerdicts {
        theta_c_random: d_separated(unroll::<&str>(&g, &[], &[])?.dag(), &q)?,
        theta_c_degenerate: d_separated(unroll(&g, &["C"], &[])?.dag(), &q)?,
    })
}

fn verdict(separated: bool) -> &'static str {
    if separated {
        "dsep"
    } else {
        "dep"
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn pattern_cells(p: &EdgePattern) -> String {
    p.slots.iter().map(|s| s.2.symbol()).collect::<Vec<_>>().join(",")
}

pub fn render_theorem1_csv(rows: &[Theorem1Row]) -> String {
    let mut out = String::from("id,x_t,x_y,t_y,u_t,u_y,u_x,tj_yi_given_ti_xi_xj,u_is_confounder\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.id,
            pattern_cells(&r.pattern),
            verdict(r.separated),
            flag(r.u_is_confounder)
        );
    }
    out
}

pub fn render_theorem2_csv(rows: &[Theorem2Row]) -> String {
    let mut out = String::from(
        "id,t_y,u_t,u_y,tj_yi_given_ti,tj_yi_given_yj,u_is_confounder,y_ancestor_of_t\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.id,
            pattern_cells(&r.pattern),
            verdict(r.separated_given_ti),
            verdict(r.separated_given_yj),
            flag(r.u_is_confounder),
            flag(r.y_ancestor_of_t)
        );
    }
    out
}

pub fn render_degenerate_csv(rows: &[DegenerateRow]) -> String {
    let mut out = String::from("id,x_t,x_y,t_y,u_t,u_y,u_x,u_is_confounder");
    for s in mechanism_subsets() {
        let _ = write!(out, ",deg_{}", s.concat());
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.id, pattern_cells(&r.pattern), flag(r.u_is_confounder));
        for &s in &r.separated {
            let _ = write!(out, ",{}", verdict(s));
        }
        out.push('\n');
    }
    out
}

/// One differing cell between a rendered table and its reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldenMismatch {
    pub row: String,
    pub column: String,
    pub expected: String,
    pub actual: String,
}

impl std::fmt::Display for GoldenMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "row {} column {}: expected {}, got {}",
            self.row, self.column, self.expected, self.actual
        )
    }
}

/// Cell-by-cell comparison keyed on the first column. Missing or extra rows
/// and header differences are reported as mismatches too.
pub fn compare_csv(actual: &str, golden: &str) -> Vec<GoldenMismatch> {
    let parse = |s: &str| -> Vec<Vec<String>> {
        s.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
            .collect()
    };
    let (a, g) = (parse(actual), parse(golden));
    let mut out = Vec::new();
    let header = g.first().cloned().unwrap_or_default();
    if a.first() != g.first() {
        out.push(GoldenMismatch {
            row: "header".into(),
            column: "*".into(),
            expected: header.join(","),
            actual: a.first().map(|h| h.join(",")).unwrap_or_default(),
        });
        return out;
    }
    let n = a.len().max(g.len());
    for k in 1..n {
        match (a.get(k), g.get(k)) {
            (Some(ar), Some(gr)) => {
                for (c, name) in header.iter().enumerate() {
                    let (av, gv) = (ar.get(c), gr.get(c));
                    if av != gv {
                        out.push(GoldenMismatch {
                            row: gr.first().cloned().unwrap_or_default(),
                            column: name.clone(),
                            expected: gv.cloned().unwrap_or_default(),
                            actual: av.cloned().unwrap_or_default(),
                        });
                    }
                }
            }
            (Some(ar), None) => out.push(GoldenMismatch {
                row: ar.first().cloned().unwrap_or_default(),
                column: "*".into(),
                expected: "<missing>".into(),
                actual: ar.join(","),
            }),
            (None, Some(gr)) => out.push(GoldenMismatch {
                row: gr.first().cloned().unwrap_or_default(),
                column: "*".into(),
                expected: gr.join(","),
                actual: "<missing>".into(),
            }),
            (None, None) => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes() {
        assert_eq!(enumerate_theorem1_family().len(), 40);
        assert_eq!(enumerate_theorem2_family().len(), 25);
        assert_eq!(mechanism_subsets().len(), 15);
    }

    #[test]
    fn first_theorem1_graph_has_every_edge_forward() {
        let g = &enumerate_theorem1_family()[0];
        let p = EdgePattern::read(g, &THEOREM1_SLOTS);
        assert!(p.slots.iter().all(|s| s.2 == EdgeState::Forward));
    }

    #[test]
    fn no_theorem1_graph_has_y_before_t() {
        assert!(enumerate_theorem1_family().iter().all(|g| !g.is_ancestor("Y", "T")));
    }

    #[test]
    fn theorem2_row18_and_row25() {
        let fam = enumerate_theorem2_family();
        let r18 = EdgePattern::read(&fam[17], &THEOREM2_SLOTS);
        assert_eq!(r18.state("T", "Y"), EdgeState::Absent);
        assert_eq!(r18.state("U", "T"), EdgeState::Forward);
        assert_eq!(r18.state("U", "Y"), EdgeState::Backward);
        assert!(fam[17].is_ancestor("Y", "T"));
        assert_eq!(fam[24].edge_count(), 0);
    }

    #[test]
    fn subset_column_order() {
        let names: Vec<String> = mechanism_subsets().iter().map(|s| s.concat()).collect();
        assert_eq!(
            names,
            [
                "T", "Y", "X", "U", "TY", "TX", "TU", "YX", "YU", "XU", "TYX", "TYU", "TXU",
                "YXU", "TYXU"
            ]
        );
    }

    #[test]
    fn theorem1_verdict_is_negated_confounder_flag() {
        for r in verify_theorem1_table().unwrap() {
            assert_eq!(r.separated, !r.u_is_confounder, "row {}", r.id);
        }
    }

    #[test]
    fn theorem2_row10() {
        let rows = verify_theorem2_table().unwrap();
        assert!(!rows[9].separated_given_ti);
        assert!(rows[9].separated_given_yj);
        assert!(rows[24].separated_given_ti && rows[24].separated_given_yj);
    }

    #[test]
    fn compare_reports_flipped_cell() {
        let golden = "id,a\n1,dep\n2,dsep\n";
        let actual = "id,a\n1,dep\n2,dep\n";
        let m = compare_csv(actual, golden);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].row, "2");
        assert!(compare_csv(golden, golden).is_empty());
    }
}
