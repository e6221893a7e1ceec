//! The matching LP with one constraint per vertex and incident edge subset,
//! solved by cutting planes.
//!
//! For a vertex `u` and `F ⊆ E_u` the constraint reads
//! `sum_{e in F} x_e <= 1 - prod_{e in F} (1 - p_e)`. The most violated set
//! at a vertex is always a prefix of `E_u` sorted by `x_e / p_e` descending,
//! so separation only scans `deg(u)` prefixes.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::StochasticGraph;
use crate::simplex::{LinearProgram, LpError, Relation};

/// Feasibility tolerance used throughout the LP code.
pub const FEASIBILITY_EPS: f64 = 1e-9;

/// Largest vertex degree accepted by the exhaustive feasibility check.
pub const EXHAUSTIVE_DEGREE_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexRef {
    pub side: Side,
    pub index: usize,
}

impl fmt::Display for VertexRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.side, self.index)
    }
}

impl VertexRef {
    pub fn a(index: usize) -> Self {
        VertexRef { side: Side::A, index }
    }

    pub fn b(index: usize) -> Self {
        VertexRef { side: Side::B, index }
    }

    pub fn incident<'g>(&self, graph: &'g StochasticGraph) -> &'g [usize] {
        match self.side {
            Side::A => graph.edges_at_a(self.index),
            Side::B => graph.edges_at_b(self.index),
        }
    }
}

/// A constraint of the family: vertex and the edge subset (sorted ids).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsetConstraint {
    pub vertex: VertexRef,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: SubsetConstraint,
    pub violation: f64,
}

/// LP optimum together with the constraints that were generated to reach it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub generated_constraints: Vec<SubsetConstraint>,
    pub rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Exhaustive,
    Prefix,
}

impl std::str::FromStr for CheckMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "prefix" => Ok(Self::Prefix),
            other => Err(Error::InvalidParameter(format!(
                "unknown check mode `{other}` (expected exhaustive or prefix)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Largest `sum x - rhs` over the checked sets. The empty set counts, so
    /// this is never negative.
    pub worst_violation: f64,
    /// Set attaining the worst violation; `None` when nothing beats the empty set.
    pub witness: Option<SubsetConstraint>,
    pub mode: CheckMode,
}

/// The on-disk solution format: objective and per-edge values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub objective: f64,
    pub x: Vec<f64>,
}

impl SolutionFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("solution file {}: {e}", path.display())))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Checks that the solution matches the graph's edge count.
    pub fn check_against(&self, graph: &StochasticGraph) -> Result<()> {
        if self.x.len() != graph.edge_count() {
            return Err(Error::InvalidParameter(format!(
                "solution has {} values but the instance has {} edges",
                self.x.len(),
                graph.edge_count()
            )));
        }
        if let Some(e) = self.x.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("solution value for edge {e} must be finite and nonnegative")));
        }
        Ok(())
    }
}

impl From<&FractionalSolution> for SolutionFile {
    fn from(s: &FractionalSolution) -> Self {
        SolutionFile { objective: s.objective, x: s.x.clone() }
    }
}

/// Probability that at least one edge of `edges` exists. All edges must
/// share an endpoint.
pub fn constraint_rhs(graph: &StochasticGraph, edges: &[usize]) -> Result<f64> {
    if let Some((&first, rest)) = edges.split_first() {
        let e0 = graph.edge(first);
        let share_a = rest.iter().all(|&e| graph.edge(e).a == e0.a);
        let share_b = rest.iter().all(|&e| graph.edge(e).b == e0.b);
        if !share_a && !share_b {
            return Err(Error::NoCommonVertex(edges.to_vec()));
        }
    }
    Ok(rhs_of(graph, edges.iter().copied()))
}

fn rhs_of(graph: &StochasticGraph, edges: impl Iterator<Item = usize>) -> f64 {
    1.0 - edges.map(|e| 1.0 - graph.edge(e).p).product::<f64>()
}

fn vertices(graph: &StochasticGraph) -> impl Iterator<Item = VertexRef> {
    (0..graph.a_count()).map(VertexRef::a).chain((0..graph.b_count()).map(VertexRef::b))
}

/// Incident edges of `vertex` ordered by `x_e / p_e` descending, ties by id.
fn ratio_order(graph: &StochasticGraph, x: &[f64], vertex: VertexRef) -> Vec<usize> {
    let mut order = vertex.incident(graph).to_vec();
    order.sort_by(|&e, &f| {
        let re = x[e] / graph.edge(e).p;
        let rf = x[f] / graph.edge(f).p;
        rf.total_cmp(&re).then(e.cmp(&f))
    });
    order
}

/// Scans the sorted prefixes at `vertex`, calling `visit(k, violation)` for
/// each prefix length `k >= 1`.
fn scan_prefixes(graph: &StochasticGraph, x: &[f64], order: &[usize], mut visit: impl FnMut(usize, f64)) {
    let mut sum = 0.0;
    let mut none = 1.0;
    for (k, &e) in order.iter().enumerate() {
        sum += x[e];
        none *= 1.0 - graph.edge(e).p;
        visit(k + 1, sum - (1.0 - none));
    }
}

/// Returns every sorted prefix whose constraint is violated by more than
/// [`FEASIBILITY_EPS`].
pub fn separate(graph: &StochasticGraph, x: &[f64]) -> Vec<Violation> {
    let mut out = Vec::new();
    for vertex in vertices(graph) {
        let order = ratio_order(graph, x, vertex);
        scan_prefixes(graph, x, &order, |k, violation| {
            if violation > FEASIBILITY_EPS {
                let mut edges = order[..k].to_vec();
                edges.sort_unstable();
                out.push(Violation { constraint: SubsetConstraint { vertex, edges }, violation });
            }
        });
    }
    out
}

/// Upper bound on cutting-plane rounds before the loop is declared stuck.
fn round_limit(graph: &StochasticGraph) -> usize {
    2 * graph.edge_count() + 10
}

/// Solves the matching LP: maximize `x·w` over the full constraint family.
pub fn solve_lp_match(graph: &StochasticGraph) -> Result<FractionalSolution> {
    let m = graph.edge_count();
    let weights = graph.weights();
    let mut generated: Vec<SubsetConstraint> = Vec::new();
    let mut seen: BTreeSet<SubsetConstraint> = BTreeSet::new();
    let mut add = |c: SubsetConstraint, generated: &mut Vec<SubsetConstraint>| {
        if seen.insert(c.clone()) {
            generated.push(c);
            true
        } else {
            false
        }
    };
    for e in 0..m {
        let edge = graph.edge(e);
        add(SubsetConstraint { vertex: VertexRef::a(edge.a), edges: vec![e] }, &mut generated);
    }
    for vertex in vertices(graph) {
        let edges = vertex.incident(graph);
        if edges.len() >= 2 {
            add(SubsetConstraint { vertex, edges: edges.to_vec() }, &mut generated);
        }
    }

    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut lp = LinearProgram::new(m);
        lp.set_objective(&weights)?;
        for c in &generated {
            let terms: Vec<_> = c.edges.iter().map(|&e| (e, 1.0)).collect();
            lp.add_sparse_constraint(&terms, Relation::LessEq, rhs_of(graph, c.edges.iter().copied()))?;
        }
        let solution = lp.solve()?;
        let x = solution.x;
        let violations = separate(graph, &x);
        let mut added = false;
        for v in violations {
            added |= add(v.constraint, &mut generated);
        }
        if !added {
            let objective = x.iter().zip(&weights).map(|(a, b)| a * b).sum();
            return Ok(FractionalSolution { x, objective, generated_constraints: generated, rounds });
        }
        if rounds >= round_limit(graph) {
            return Err(Error::Lp(LpError::IterationLimit(rounds)));
        }
    }
}

/// Worst constraint violation of `x`, by full subset enumeration or by the
/// sorted-prefix scan.
pub fn check_feasibility(graph: &StochasticGraph, x: &[f64], mode: CheckMode) -> Result<FeasibilityReport> {
    let mut worst = 0.0;
    let mut witness = None;
    for vertex in vertices(graph) {
        let incident = vertex.incident(graph);
        match mode {
            CheckMode::Prefix => {
                let order = ratio_order(graph, x, vertex);
                let mut best_k = 0;
                let mut best = 0.0;
                scan_prefixes(graph, x, &order, |k, v| {
                    if v > best {
                        best = v;
                        best_k = k;
                    }
                });
                if best > worst {
                    worst = best;
                    let mut edges = order[..best_k].to_vec();
                    edges.sort_unstable();
                    witness = Some(SubsetConstraint { vertex, edges });
                }
            }
            CheckMode::Exhaustive => {
                if incident.len() > EXHAUSTIVE_DEGREE_CAP {
                    return Err(Error::DegreeCap {
                        vertex: vertex.to_string(),
                        degree: incident.len(),
                        cap: EXHAUSTIVE_DEGREE_CAP,
                    });
                }
                let (best, mask) = worst_subset(graph, x, incident);
                if best > worst {
                    worst = best;
                    let edges = incident
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &e)| e)
                        .collect();
                    witness = Some(SubsetConstraint { vertex, edges });
                }
            }
        }
    }
    Ok(FeasibilityReport { feasible: worst <= FEASIBILITY_EPS, worst_violation: worst, witness, mode })
}

/// Most violated subset of `edges` by depth-first enumeration; returns the
/// violation and the subset as a bitmask over `edges`.
pub(crate) fn worst_subset(graph: &StochasticGraph, x: &[f64], edges: &[usize]) -> (f64, u32) {
    fn go(graph: &StochasticGraph, x: &[f64], edges: &[usize], i: usize, sum: f64, none: f64, mask: u32, best: &mut (f64, u32)) {
        if i == edges.len() {
            let v = sum - (1.0 - none);
            if v > best.0 {
                *best = (v, mask);
            }
            return;
        }
        go(graph, x, edges, i + 1, sum, none, mask, best);
        let e = edges[i];
        go(graph, x, edges, i + 1, sum + x[e], none * (1.0 - graph.edge(e).p), mask | 1 << i, best);
    }
    let mut best = (0.0, 0);
    go(graph, x, edges, 0, 0.0, 1.0, 0, &mut best);
    best
}
