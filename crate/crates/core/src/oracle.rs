//! Ground truth: exact offline optimum, exact event probabilities of the
//! rounding algorithms, and Monte Carlo estimation.
//!
//! The exact enumerator relies on two facts about the proposal loop. Each A
//! vertex examines only its own edges and proposes on the first realized
//! one whatever happens elsewhere, so the per-vertex behaviours are
//! independent and do not depend on the processing order. The order only
//! decides which proposer a B vertex accepts: the earliest one, which under a
//! uniform order is a uniform choice among its proposers, independently
//! across B vertices. The tree is therefore the product of the per-vertex
//! outcome trees followed by one uniform winner choice per B vertex.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{AlgorithmConfig, ApxBranch, DistributionCache, Execution, PreparedAlgorithm, Proposer, RoundPlan};
use crate::error::{Error, Result};
use crate::instance::{algorithm_stream, realization_stream, stream_rng, RealizationState, StochasticGraph};
use crate::permdist::enumerate_proposals;

/// Largest edge count accepted by [`expected_opt_exact`].
pub const OPT_EDGE_CAP: usize = 20;

/// Default cap on event-tree nodes.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Conditioning events below this mass give an undefined conditional.
pub const MIN_CONDITION_MASS: f64 = 1e-12;

/// Maximum-weight matching of a bipartite edge list `(a, b, w)`. Returns the
/// chosen positions in ascending order and the total weight.
///
/// Each connected component is solved by dynamic programming over the
/// vertices of its larger side, with a bitmask of used vertices on the
/// smaller side. A component with `k` edges has a smaller side of at most
/// `(k + 1) / 2` vertices.
pub fn max_weight_matching(edges: &[(usize, usize, f64)]) -> Result<(Vec<usize>, f64)> {
    let a_ids = dense_ids(edges.iter().map(|e| e.0));
    let b_ids = dense_ids(edges.iter().map(|e| e.1));
    let na = a_ids.len();
    let mut parent: Vec<usize> = (0..na + b_ids.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let ends: Vec<(usize, usize)> = edges
        .iter()
        .map(|e| (index_of(&a_ids, e.0), na + index_of(&b_ids, e.1)))
        .collect();
    for &(a, b) in &ends {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut components: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, &(a, _)) in ends.iter().enumerate() {
        let root = find(&mut parent, a);
        match components.iter_mut().find(|(r, _)| *r == root) {
            Some((_, list)) => list.push(i),
            None => components.push((root, vec![i])),
        }
    }
    let mut chosen = Vec::new();
    let mut total = 0.0;
    for (_, list) in components {
        let (picked, w) = component_matching(edges, &ends, &list)?;
        chosen.extend(picked);
        total += w;
    }
    chosen.sort_unstable();
    Ok((chosen, total))
}

fn dense_ids(it: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = it.collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn index_of(ids: &[usize], id: usize) -> usize {
    ids.binary_search(&id).expect("id present")
}

const MASK_SIDE_CAP: usize = 20;

fn component_matching(edges: &[(usize, usize, f64)], ends: &[(usize, usize)], list: &[usize]) -> Result<(Vec<usize>, f64)> {
    let left = dense_ids(list.iter().map(|&i| ends[i].0));
    let right = dense_ids(list.iter().map(|&i| ends[i].1));
    // Rows iterate over the larger side; the mask covers the smaller one.
    let a_rows = left.len() >= right.len();
    let (rows, cols) = if a_rows { (&left, &right) } else { (&right, &left) };
    if cols.len() > MASK_SIDE_CAP {
        return Err(Error::SizeCap { what: "vertices on the smaller side of a component", cap: MASK_SIDE_CAP, actual: cols.len() });
    }
    let mut by_row: Vec<Vec<(usize, usize)>> = vec![Vec::new(); rows.len()];
    for &i in list {
        let (a, b) = ends[i];
        let (r, c) = if a_rows { (a, b) } else { (b, a) };
        by_row[index_of(rows, r)].push((index_of(cols, c), i));
    }
    let size = 1usize << cols.len();
    let mut dp = vec![f64::NEG_INFINITY; size];
    dp[0] = 0.0;
    let mut choice = vec![usize::MAX; rows.len() * size];
    for (r, options) in by_row.iter().enumerate() {
        let mut next = dp.clone();
        for mask in 0..size {
            for &(c, i) in options {
                if mask >> c & 1 == 0 {
                    continue;
                }
                let prev = dp[mask ^ (1 << c)];
                let candidate = prev + edges[i].2;
                if prev > f64::NEG_INFINITY && candidate > next[mask] {
                    next[mask] = candidate;
                    choice[r * size + mask] = i;
                }
            }
        }
        dp = next;
    }
    let mut best = 0;
    for mask in 0..size {
        if dp[mask] > dp[best] {
            best = mask;
        }
    }
    let weight = dp[best];
    let mut picked = Vec::new();
    let mut mask = best;
    for r in (0..rows.len()).rev() {
        let i = choice[r * size + mask];
        if i != usize::MAX {
            picked.push(i);
            let (a, b) = ends[i];
            let c = if a_rows { b } else { a };
            mask ^= 1 << index_of(cols, c);
        }
    }
    Ok((picked, weight))
}

/// Expected weight of the offline optimum over all `2^|E|` realizations.
pub fn expected_opt_exact(graph: &StochasticGraph) -> Result<f64> {
    let m = graph.edge_count();
    if m > OPT_EDGE_CAP {
        return Err(Error::SizeCap { what: "edges", cap: OPT_EDGE_CAP, actual: m });
    }
    let mut total = 0.0;
    let mut realized = Vec::with_capacity(m);
    for mask in 0u32..(1u32 << m) {
        let mut prob = 1.0;
        realized.clear();
        for (e, edge) in graph.edges().iter().enumerate() {
            if mask >> e & 1 == 1 {
                prob *= edge.p;
                realized.push((edge.a, edge.b, edge.w));
            } else {
                prob *= 1.0 - edge.p;
            }
        }
        if prob == 0.0 {
            continue;
        }
        total += prob * max_weight_matching(&realized)?.1;
    }
    Ok(total)
}

/// Events over one execution of a proposal round. Edge ids refer to the
/// augmented layout: original edges first, then one id per dummy proposer
/// (see [`ExactOracle::dummy_edges`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Event {
    EdgeMatched(usize),
    EdgeExamined(usize),
    /// Not examined, both endpoints unmatched at the end of the round.
    EdgeAvailable(usize),
    AUnmatched(usize),
    BUnmatched(usize),
    /// The A endpoint proposes on this edge.
    Proposes(usize),
    /// The A endpoint proposes on this edge but another proposer got there first.
    Preempted(usize),
    Not(Box<Event>),
    And(Vec<Event>),
}

impl Event {
    pub fn not(self) -> Event {
        Event::Not(Box::new(self))
    }

    fn eval(&self, leaf: &Leaf, layout: &Layout) -> bool {
        let bit = |mask: u64, i: usize| mask >> i & 1 == 1;
        match self {
            Event::EdgeMatched(e) => bit(leaf.matched, *e),
            Event::EdgeExamined(e) => bit(leaf.examined, *e),
            Event::EdgeAvailable(e) => {
                let (a, b) = layout.ends[*e];
                !bit(leaf.examined, *e) && !bit(leaf.a_matched, a) && !bit(leaf.b_matched, b)
            }
            Event::AUnmatched(a) => !bit(leaf.a_matched, *a),
            Event::BUnmatched(b) => !bit(leaf.b_matched, *b),
            Event::Proposes(e) => bit(leaf.proposes, *e),
            Event::Preempted(e) => bit(leaf.proposes, *e) && !bit(leaf.matched, *e),
            Event::Not(inner) => !inner.eval(leaf, layout),
            Event::And(parts) => parts.iter().all(|p| p.eval(leaf, layout)),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::EdgeMatched(e) => write!(f, "matched(e{e})"),
            Event::EdgeExamined(e) => write!(f, "examined(e{e})"),
            Event::EdgeAvailable(e) => write!(f, "available(e{e})"),
            Event::AUnmatched(a) => write!(f, "unmatched(A{a})"),
            Event::BUnmatched(b) => write!(f, "unmatched(B{b})"),
            Event::Proposes(e) => write!(f, "proposes(e{e})"),
            Event::Preempted(e) => write!(f, "preempted(e{e})"),
            Event::Not(inner) => write!(f, "not {inner}"),
            Event::And(parts) => {
                let s: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "({})", s.join(" and "))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Leaf {
    prob: f64,
    matched: u64,
    examined: u64,
    proposes: u64,
    a_matched: u64,
    b_matched: u64,
}

#[derive(Debug, Clone)]
struct Layout {
    /// `(augmented A index, B index)` of each augmented edge.
    ends: Vec<(usize, usize)>,
    weights: Vec<f64>,
    original_edges: usize,
    a_count: usize,
    b_count: usize,
}

/// Which proposal loop the oracle enumerates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMode {
    /// Padded to `sigma` and thinned by `g(., sigma)`.
    Modified { sigma: f64 },
    /// Plain proportional sampling without dummies.
    Simple,
}

/// Exact leaf distribution of one proposal round.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    layout: Layout,
    leaves: Vec<Leaf>,
    nodes: u64,
    dummy_edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbabilities {
    pub edge: usize,
    pub matched: f64,
    pub examined: f64,
    pub available: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalProbability {
    pub target: String,
    pub given: String,
    pub given_mass: f64,
    /// `None` when the conditioning mass is below [`MIN_CONDITION_MASS`].
    pub value: Option<f64>,
}

/// Exact per-edge and per-vertex probabilities of one proposal round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactEventReport {
    pub edges: Vec<EdgeProbabilities>,
    pub a_unmatched: Vec<f64>,
    pub b_unmatched: Vec<f64>,
    pub expected_weight: f64,
    pub conditionals: Vec<ConditionalProbability>,
    pub leaves: usize,
    pub tree_nodes: u64,
}

impl ExactOracle {
    pub fn new(graph: &StochasticGraph, x: &[f64], mode: OracleMode, budget: u64) -> Result<Self> {
        let cache = DistributionCache::default();
        let plan = match mode {
            OracleMode::Modified { sigma } => RoundPlan::modified(graph, x, sigma, &cache)?,
            OracleMode::Simple => RoundPlan::simple(graph, x, &cache)?,
        };
        Self::from_plan(graph, &plan, budget)
    }

    /// Enumerates the round described by `plan`.
    pub fn from_plan(graph: &StochasticGraph, plan: &RoundPlan, budget: u64) -> Result<Self> {
        let m = graph.edge_count();
        if m > 64 {
            return Err(Error::SizeCap { what: "edges", cap: 64, actual: m });
        }
        let mut ends: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.a, e.b)).collect();
        let mut weights = graph.weights();
        let mut dummy_edges = Vec::new();
        let mut a_count = graph.a_count();
        // Per-proposer outcome lists: (proposal edge, examined mask, prob).
        let mut outcomes: Vec<Vec<(Option<usize>, u64, f64)>> = Vec::new();
        for proposer in &plan.proposers {
            match proposer {
                Proposer::Real { dist } => {
                    let list = enumerate_proposals(dist, graph, &plan.ratio);
                    outcomes.push(list.into_iter().map(|o| (o.proposal, o.examined, o.prob)).collect());
                }
                Proposer::Dummy { b, prob } => {
                    let id = ends.len();
                    ends.push((a_count, *b));
                    weights.push(0.0);
                    dummy_edges.push((id, *b));
                    a_count += 1;
                    outcomes.push(vec![(Some(id), 1 << id.min(63), *prob), (None, 0, 1.0 - prob)]);
                }
            }
        }
        if ends.len() > 64 || a_count > 64 || graph.b_count() > 64 {
            return Err(Error::SizeCap { what: "augmented edges or vertices", cap: 64, actual: ends.len().max(a_count) });
        }
        let layout = Layout { ends, weights, original_edges: m, a_count, b_count: graph.b_count() };
        let mut enumerator = Enumerator {
            layout: &layout,
            outcomes: &outcomes,
            budget,
            nodes: 0,
            leaves: Vec::new(),
            proposals: Vec::new(),
        };
        enumerator.product(0, 1.0, 0)?;
        let nodes = enumerator.nodes;
        let leaves = enumerator.leaves;
        Ok(ExactOracle { layout, leaves, nodes, dummy_edges })
    }

    /// `(augmented edge id, B vertex)` of every dummy proposer.
    pub fn dummy_edges(&self) -> &[(usize, usize)] {
        &self.dummy_edges
    }

    /// A vertices including one per dummy proposer.
    pub fn augmented_a_count(&self) -> usize {
        self.layout.a_count
    }

    pub fn augmented_edge_count(&self) -> usize {
        self.layout.ends.len()
    }

    /// `(A, B)` endpoints of an augmented edge.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.layout.ends[e]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn tree_nodes(&self) -> u64 {
        self.nodes
    }

    pub fn total_mass(&self) -> f64 {
        self.leaves.iter().map(|l| l.prob).sum()
    }

    pub fn probability(&self, event: &Event) -> f64 {
        self.leaves.iter().filter(|l| event.eval(l, &self.layout)).map(|l| l.prob).sum()
    }

    /// `Pr[target | given]`, or `None` when `Pr[given]` is below [`MIN_CONDITION_MASS`].
    pub fn conditional(&self, target: &Event, given: &Event) -> Option<f64> {
        let (joint, mass) = self.joint_and_mass(target, given);
        (mass >= MIN_CONDITION_MASS).then(|| joint / mass)
    }

    /// `Pr[given]` and `Pr[target_i | given]` for every target in one pass
    /// over the leaves; conditionals are `None` below [`MIN_CONDITION_MASS`].
    pub fn conditionals(&self, targets: &[Event], given: &Event) -> (f64, Vec<Option<f64>>) {
        let mut joint = vec![0.0; targets.len()];
        let mut mass = 0.0;
        for l in &self.leaves {
            if given.eval(l, &self.layout) {
                mass += l.prob;
                for (acc, t) in joint.iter_mut().zip(targets) {
                    if t.eval(l, &self.layout) {
                        *acc += l.prob;
                    }
                }
            }
        }
        let values = joint.into_iter().map(|j| (mass >= MIN_CONDITION_MASS).then(|| j / mass)).collect();
        (mass, values)
    }

    fn joint_and_mass(&self, target: &Event, given: &Event) -> (f64, f64) {
        let mut joint = 0.0;
        let mut mass = 0.0;
        for l in &self.leaves {
            if given.eval(l, &self.layout) {
                mass += l.prob;
                if target.eval(l, &self.layout) {
                    joint += l.prob;
                }
            }
        }
        (joint, mass)
    }

    pub fn expected_weight(&self) -> f64 {
        self.leaves
            .iter()
            .map(|l| {
                let w: f64 = (0..self.layout.original_edges)
                    .filter(|&e| l.matched >> e & 1 == 1)
                    .map(|e| self.layout.weights[e])
                    .sum();
                l.prob * w
            })
            .sum()
    }

    /// Standard per-edge and per-vertex probabilities plus the requested
    /// conditionals `(target, given)`.
    pub fn report(&self, conditionals: &[(Event, Event)]) -> ExactEventReport {
        let m = self.layout.original_edges;
        let edges = (0..m)
            .map(|e| EdgeProbabilities {
                edge: e,
                matched: self.probability(&Event::EdgeMatched(e)),
                examined: self.probability(&Event::EdgeExamined(e)),
                available: self.probability(&Event::EdgeAvailable(e)),
            })
            .collect();
        let real_a = self.layout.a_count - self.dummy_edges.len();
        ExactEventReport {
            edges,
            a_unmatched: (0..real_a).map(|a| self.probability(&Event::AUnmatched(a))).collect(),
            b_unmatched: (0..self.layout.b_count).map(|b| self.probability(&Event::BUnmatched(b))).collect(),
            expected_weight: self.expected_weight(),
            conditionals: conditionals
                .iter()
                .map(|(t, g)| {
                    let (joint, mass) = self.joint_and_mass(t, g);
                    ConditionalProbability {
                        target: t.to_string(),
                        given: g.to_string(),
                        given_mass: mass,
                        value: (mass >= MIN_CONDITION_MASS).then(|| joint / mass),
                    }
                })
                .collect(),
            leaves: self.leaves.len(),
            tree_nodes: self.nodes,
        }
    }
}

/// Exact report for the single-round algorithm at `sigma`.
pub fn exact_event_probabilities(graph: &StochasticGraph, x: &[f64], sigma: f64, queries: &[(Event, Event)]) -> Result<ExactEventReport> {
    Ok(ExactOracle::new(graph, x, OracleMode::Modified { sigma }, DEFAULT_BUDGET)?.report(queries))
}

struct Enumerator<'a> {
    layout: &'a Layout,
    outcomes: &'a [Vec<(Option<usize>, u64, f64)>],
    budget: u64,
    nodes: u64,
    leaves: Vec<Leaf>,
    /// Proposal edges chosen so far.
    proposals: Vec<usize>,
}

impl Enumerator<'_> {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded(self.budget));
        }
        Ok(())
    }

    fn product(&mut self, i: usize, prob: f64, examined: u64) -> Result<()> {
        self.tick()?;
        if i == self.outcomes.len() {
            let proposes = self.proposals.iter().fold(0u64, |m, &e| m | 1 << e);
            let mut by_b: Vec<Vec<usize>> = vec![Vec::new(); self.layout.b_count];
            for &e in &self.proposals {
                by_b[self.layout.ends[e].1].push(e);
            }
            let contested: Vec<Vec<usize>> = by_b.into_iter().filter(|v| !v.is_empty()).collect();
            return self.winners(&contested, 0, prob, Leaf { prob, matched: 0, examined, proposes, a_matched: 0, b_matched: 0 });
        }
        for &(proposal, seen, q) in &self.outcomes[i] {
            if q <= 0.0 {
                continue;
            }
            if let Some(e) = proposal {
                self.proposals.push(e);
            }
            self.product(i + 1, prob * q, examined | seen)?;
            if proposal.is_some() {
                self.proposals.pop();
            }
        }
        Ok(())
    }

    fn winners(&mut self, contested: &[Vec<usize>], j: usize, prob: f64, leaf: Leaf) -> Result<()> {
        self.tick()?;
        if j == contested.len() {
            self.leaves.push(Leaf { prob, ..leaf });
            return Ok(());
        }
        let share = prob / contested[j].len() as f64;
        for &e in &contested[j] {
            let (a, b) = self.layout.ends[e];
            let next = Leaf {
                matched: leaf.matched | 1 << e,
                a_matched: leaf.a_matched | 1 << a,
                b_matched: leaf.b_matched | 1 << b,
                ..leaf
            };
            self.winners(contested, j + 1, share, next)?;
        }
        Ok(())
    }
}

/// Monte Carlo estimate of an algorithm's expected matching weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
    /// Fraction of trials in which each edge was matched.
    pub match_frequency: Vec<f64>,
    pub branch: Option<ApxBranch>,
}

const CHUNK: u64 = 1 << 14;

/// Runs `trials` independent executions. Trial `t` draws coins from stream
/// `2t` and algorithm randomness from stream `2t + 1` of `config.seed`, so
/// the result does not depend on scheduling. Parallelism follows the
/// current rayon pool.
pub fn monte_carlo_estimate(graph: &StochasticGraph, x: Option<&[f64]>, config: &AlgorithmConfig, trials: u64) -> Result<MonteCarloEstimate> {
    let prepared = PreparedAlgorithm::new(graph, x, config)?;
    monte_carlo_prepared(&prepared, trials, config.seed)
}

pub fn monte_carlo_prepared(prepared: &PreparedAlgorithm<'_>, trials: u64, seed: u64) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let graph = prepared.graph();
    let m = graph.edge_count();
    let chunks: Vec<u64> = (0..trials.div_ceil(CHUNK)).collect();
    let results: Vec<Result<(Vec<f64>, Vec<u64>)>> = chunks
        .par_iter()
        .map(|&c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(trials);
            let mut exec = Execution::new(false);
            let mut state = RealizationState::new(m, stream_rng(seed, 0));
            let mut weights = Vec::with_capacity((end - start) as usize);
            let mut counts = vec![0u64; m];
            for t in start..end {
                state.reset(m, stream_rng(seed, realization_stream(t)));
                let mut rng = stream_rng(seed, algorithm_stream(t));
                prepared.execute(&mut exec, &mut state, &mut rng)?;
                weights.push(exec.weight());
                for &e in exec.matching() {
                    counts[e] += 1;
                }
            }
            Ok((weights, counts))
        })
        .collect();
    let mut weights = Vec::with_capacity(trials as usize);
    let mut counts = vec![0u64; m];
    for r in results {
        let (w, c) = r?;
        weights.extend(w);
        for (acc, v) in counts.iter_mut().zip(c) {
            *acc += v;
        }
    }
    let (mean, std_error) = mean_and_std_error(&weights);
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        trials,
        seed,
        match_frequency: counts.iter().map(|&c| c as f64 / trials as f64).collect(),
        branch: prepared.branch(),
    })
}

/// Mean and `stdev / sqrt(n)` with pairwise summation in index order.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Algorithm;
    use crate::lpmatch::solve_lp_match;
    use crate::transform::TransformParams;
    use proptest::prelude::*;

    /// Independent check: best weight over every subset of edges that forms a matching.
    fn brute_force(edges: &[(usize, usize, f64)]) -> f64 {
        let mut best: f64 = 0.0;
        for mask in 0u32..(1 << edges.len()) {
            let chosen: Vec<_> = (0..edges.len()).filter(|i| mask >> i & 1 == 1).collect();
            let ok = chosen.iter().enumerate().all(|(k, &i)| {
                chosen[k + 1..].iter().all(|&j| edges[i].0 != edges[j].0 && edges[i].1 != edges[j].1)
            });
            if ok {
                best = best.max(chosen.iter().map(|&i| edges[i].2).sum());
            }
        }
        best
    }

    #[test]
    fn matching_examples() {
        assert_eq!(max_weight_matching(&[]).unwrap(), (vec![], 0.0));
        assert_eq!(max_weight_matching(&[(0, 0, 3.0)]).unwrap(), (vec![0], 3.0));
        assert_eq!(max_weight_matching(&[(0, 0, 1.0), (1, 0, 2.0)]).unwrap(), (vec![1], 2.0));
        let (m, w) = max_weight_matching(&[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!((m.len(), w), (2, 2.0));
    }

    proptest! {
        #[test]
        fn matching_agrees_with_brute_force(cells in proptest::collection::vec((0usize..4, 0usize..4, 0.0f64..10.0), 0..12)) {
            let mut edges = cells;
            edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
            edges.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
            let (chosen, w) = max_weight_matching(&edges).unwrap();
            prop_assert!((w - brute_force(&edges)).abs() < 1e-9);
            let sum: f64 = chosen.iter().map(|&i| edges[i].2).sum();
            prop_assert!((sum - w).abs() < 1e-9);
            for (k, &i) in chosen.iter().enumerate() {
                for &j in &chosen[k + 1..] {
                    prop_assert!(edges[i].0 != edges[j].0 && edges[i].1 != edges[j].1);
                }
            }
        }
    }

    #[test]
    fn expected_opt_examples() {
        let g = StochasticGraph::new(1, 1, &[(0, 0, 2.0, 0.3)]).unwrap();
        assert!((expected_opt_exact(&g).unwrap() - 0.6).abs() < 1e-12);
        let g = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 0.5), (1, 0, 1.0, 0.5)]).unwrap();
        assert!((expected_opt_exact(&g).unwrap() - 0.75).abs() < 1e-12);
        let g = StochasticGraph::new(2, 2, &[(0, 0, 1.0, 1.0), (0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0), (1, 1, 1.0, 1.0)]).unwrap();
        assert!((expected_opt_exact(&g).unwrap() - 2.0).abs() < 1e-12);
        let edges: Vec<_> = (0..21).map(|a| (a, 0, 1.0, 0.5)).collect();
        let g = StochasticGraph::new(21, 1, &edges).unwrap();
        assert!(matches!(expected_opt_exact(&g), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn exact_single_edge() {
        let g = StochasticGraph::new(1, 1, &[(0, 0, 1.0, 1.0)]).unwrap();
        let o = ExactOracle::new(&g, &[1.0], OracleMode::Modified { sigma: 1.0 }, DEFAULT_BUDGET).unwrap();
        let target = 1.0 - (-1.0f64).exp();
        assert!((o.probability(&Event::EdgeMatched(0)) - target).abs() < 1e-12);
        assert!((o.probability(&Event::EdgeExamined(0)) - target).abs() < 1e-12);
        assert!((o.total_mass() - 1.0).abs() < 1e-12);
        let r = o.report(&[]);
        assert!((r.expected_weight - target).abs() < 1e-12);
    }

    #[test]
    fn exact_simple_star() {
        let g = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 1.0), (1, 0, 1.0, 1.0)]).unwrap();
        let o = ExactOracle::new(&g, &[0.5, 0.5], OracleMode::Simple, DEFAULT_BUDGET).unwrap();
        assert!((1.0 - o.probability(&Event::BUnmatched(0)) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn conditionals_and_budget() {
        let g = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 1.0), (1, 0, 1.0, 1.0)]).unwrap();
        let o = ExactOracle::new(&g, &[0.5, 0.5], OracleMode::Modified { sigma: 1.0 }, DEFAULT_BUDGET).unwrap();
        let impossible = Event::And(vec![Event::EdgeMatched(0), Event::EdgeMatched(1)]);
        assert_eq!(o.probability(&impossible), 0.0);
        assert_eq!(o.conditional(&Event::EdgeMatched(0), &impossible), None);
        let c = o.conditional(&Event::EdgeMatched(0), &Event::EdgeExamined(0)).unwrap();
        assert!(c > 0.0 && c <= 1.0);
        assert!(matches!(
            ExactOracle::new(&g, &[0.5, 0.5], OracleMode::Modified { sigma: 1.0 }, 3),
            Err(Error::BudgetExceeded(3))
        ));
    }

    #[test]
    fn expected_weight_matches_edge_sum() {
        let g = StochasticGraph::new(2, 2, &[(0, 0, 2.0, 0.6), (0, 1, 1.0, 0.9), (1, 0, 3.0, 0.4)]).unwrap();
        let sol = solve_lp_match(&g).unwrap();
        let o = ExactOracle::new(&g, &sol.x, OracleMode::Modified { sigma: 1.0 }, DEFAULT_BUDGET).unwrap();
        let r = o.report(&[]);
        let direct: f64 = r.edges.iter().map(|e| e.matched * g.edge(e.edge).w).sum();
        assert!((r.expected_weight - direct).abs() < 1e-9);
        assert!((o.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_examples() {
        let g = StochasticGraph::new(1, 1, &[(0, 0, 4.0, 1.0)]).unwrap();
        let cfg = AlgorithmConfig { algorithm: Algorithm::Greedy, params: TransformParams::default(), seed: 3 };
        let est = monte_carlo_estimate(&g, None, &cfg, 1000).unwrap();
        assert_eq!((est.mean, est.std_error), (4.0, 0.0));

        let cfg = AlgorithmConfig { algorithm: Algorithm::Alg1, params: TransformParams::default(), seed: 9 };
        let a = monte_carlo_estimate(&g, Some(&[1.0]), &cfg, 100_000).unwrap();
        let b = monte_carlo_estimate(&g, Some(&[1.0]), &cfg, 100_000).unwrap();
        assert_eq!(a, b);
        let target = 4.0 * (1.0 - (-1.0f64).exp());
        assert!((a.mean - target).abs() < 4.0 * a.std_error);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), v.iter().sum::<f64>());
        let (m, se) = mean_and_std_error(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }
}
