//! Query-commit execution and the rounding algorithms.
//!
//! Examining an edge flips its coin. The flip is a *query* when both
//! endpoints are still unmatched, in which case a realized edge joins the
//! matching irrevocably; otherwise it is a consequence-free coin flip.
//!
//! Rounding runs are driven by a [`RoundPlan`]: one proposer per A vertex
//! with a permutation distribution, plus one dummy proposer per B vertex
//! whose fractional degree falls short of `sigma`. Dummies are never
//! materialized as graph edges; a dummy proposes with probability
//! `g(slack, sigma)`, which is exactly what the modified sampler does on a
//! single edge with `p = 1`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{sample_realization, RealizationState, StochasticGraph};
use crate::permdist::{build_proportional_distribution, PermDistribution, SUPPORT_EPS};
use crate::transform::{dummy_slacks, g, rho, TransformParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeStatus {
    Unexamined,
    QueriedRealizedMatched,
    QueriedNotRealized,
    CoinflipRealized,
    CoinflipNotRealized,
}

impl EdgeStatus {
    pub fn examined(self) -> bool {
        self != EdgeStatus::Unexamined
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    Query { edge: usize, realized: bool },
    CoinFlip { edge: usize, realized: bool },
    /// A dummy edge claimed this B vertex.
    DummyBlock { b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub round: u8,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApxBranch {
    TwoRound,
    Heavy,
}

/// Outcome of one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Matched original edges, ascending.
    pub matching: Vec<usize>,
    pub weight: f64,
    /// Terminal status of every original edge.
    pub edge_log: Vec<EdgeStatus>,
    pub query_order: Vec<LoggedEvent>,
    /// Round in which each edge was examined.
    pub rounds: Vec<Option<u8>>,
    pub branch: Option<ApxBranch>,
}

impl RunResult {
    /// Replays the event log and checks every query-commit invariant.
    pub fn validate(&self, graph: &StochasticGraph) -> std::result::Result<(), String> {
        let m = graph.edge_count();
        if self.edge_log.len() != m || self.rounds.len() != m {
            return Err("log length differs from edge count".into());
        }
        let mut in_matching = vec![false; m];
        for &e in &self.matching {
            if e >= m || in_matching[e] {
                return Err(format!("matching entry {e} invalid or repeated"));
            }
            in_matching[e] = true;
        }
        let mut matched_a = vec![false; graph.a_count()];
        let mut matched_b = vec![false; graph.b_count()];
        let mut seen = vec![false; m];
        let mut rebuilt = Vec::new();
        for ev in &self.query_order {
            match ev.action {
                Action::DummyBlock { b } => {
                    if matched_b[b] {
                        return Err(format!("dummy blocked already matched B{b}"));
                    }
                    matched_b[b] = true;
                }
                Action::Query { edge, realized } | Action::CoinFlip { edge, realized } => {
                    if seen[edge] {
                        return Err(format!("edge {edge} examined twice"));
                    }
                    seen[edge] = true;
                    if self.rounds[edge] != Some(ev.round) {
                        return Err(format!("edge {edge} has inconsistent round"));
                    }
                    let (a, b) = (graph.edge(edge).a, graph.edge(edge).b);
                    let free = !matched_a[a] && !matched_b[b];
                    let is_query = matches!(ev.action, Action::Query { .. });
                    if is_query != free {
                        return Err(format!("edge {edge}: query iff both endpoints free"));
                    }
                    let expected = match (is_query, realized) {
                        (true, true) => EdgeStatus::QueriedRealizedMatched,
                        (true, false) => EdgeStatus::QueriedNotRealized,
                        (false, true) => EdgeStatus::CoinflipRealized,
                        (false, false) => EdgeStatus::CoinflipNotRealized,
                    };
                    if self.edge_log[edge] != expected {
                        return Err(format!("edge {edge}: status {:?} but replay gives {expected:?}", self.edge_log[edge]));
                    }
                    if is_query && realized {
                        matched_a[a] = true;
                        matched_b[b] = true;
                        rebuilt.push(edge);
                    }
                }
            }
        }
        for e in 0..m {
            if !seen[e] && (self.edge_log[e] != EdgeStatus::Unexamined || self.rounds[e].is_some()) {
                return Err(format!("edge {e} marked examined without an event"));
            }
        }
        rebuilt.sort_unstable();
        if rebuilt != self.matching {
            return Err("matching differs from the committed queries".into());
        }
        let weight: f64 = self.matching.iter().map(|&e| graph.edge(e).w).sum();
        if (weight - self.weight).abs() > 1e-9 * weight.abs().max(1.0) {
            return Err(format!("weight {} differs from matching weight {weight}", self.weight));
        }
        Ok(())
    }

    /// A and B vertices left matched by the run, dummy blocks included.
    pub fn matched_vertices(&self, graph: &StochasticGraph) -> (Vec<bool>, Vec<bool>) {
        let mut a = vec![false; graph.a_count()];
        let mut b = vec![false; graph.b_count()];
        for &e in &self.matching {
            a[graph.edge(e).a] = true;
            b[graph.edge(e).b] = true;
        }
        for ev in &self.query_order {
            if let Action::DummyBlock { b: u } = ev.action {
                b[u] = true;
            }
        }
        (a, b)
    }
}

/// Edges not examined by `run` whose endpoints both stayed unmatched.
pub fn available_edges(graph: &StochasticGraph, run: &RunResult) -> Vec<usize> {
    let (ma, mb) = run.matched_vertices(graph);
    (0..graph.edge_count())
        .filter(|&e| {
            let edge = graph.edge(e);
            run.edge_log[e] == EdgeStatus::Unexamined && !ma[edge.a] && !mb[edge.b]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Greedy,
    Simple,
    Alg1,
    Apx,
}

impl Algorithm {
    pub fn needs_solution(self) -> bool {
        self != Algorithm::Greedy
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "simple" => Ok(Self::Simple),
            "alg1" => Ok(Self::Alg1),
            "apx" => Ok(Self::Apx),
            other => Err(Error::InvalidParameter(format!(
                "unknown algorithm `{other}` (expected greedy, simple, alg1 or apx)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Greedy => "greedy",
            Self::Simple => "simple",
            Self::Alg1 => "alg1",
            Self::Apx => "apx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    pub params: TransformParams,
    pub seed: u64,
}

/// Proportional distributions for one fixed `x`, keyed by A vertex and the
/// subset of its edges kept in the support. Restricting `x` to a subgraph
/// only zeroes entries, so one cache serves every restriction.
#[derive(Debug, Default)]
pub struct DistributionCache {
    map: RwLock<HashMap<(usize, u64), Arc<PermDistribution>>>,
}

impl DistributionCache {
    fn get(&self, graph: &StochasticGraph, a: usize, x: &[f64]) -> Result<Option<Arc<PermDistribution>>> {
        let incident = graph.edges_at_a(a);
        let mut mask = 0u64;
        for (i, &e) in incident.iter().enumerate() {
            if x[e] > SUPPORT_EPS {
                if i >= 64 {
                    return Err(Error::SizeCap { what: "edges per A vertex", cap: 64, actual: incident.len() });
                }
                mask |= 1 << i;
            }
        }
        if mask == 0 {
            return Ok(None);
        }
        if let Some(d) = self.map.read().expect("cache lock").get(&(a, mask)) {
            return Ok(Some(d.clone()));
        }
        let dist = Arc::new(build_proportional_distribution(graph, a, x)?);
        self.map.write().expect("cache lock").insert((a, mask), dist.clone());
        Ok(Some(dist))
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Proposer {
    Real { dist: Arc<PermDistribution> },
    Dummy { b: usize, prob: f64 },
}

/// Proposers of one rounding round.
#[derive(Debug, Clone)]
pub struct RoundPlan {
    pub(crate) proposers: Vec<Proposer>,
    /// `x_tilde_e / x_e` per edge.
    pub(crate) ratio: Arc<Vec<f64>>,
    /// `false` for the unmodified sampler, where every base edge is kept.
    pub(crate) modified: bool,
    pub(crate) sigma: f64,
}

/// `g(x_e, sigma) / x_e` for every edge.
pub(crate) fn ratios(x: &[f64], sigma: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { (g(v, sigma) / v).min(1.0) } else { 0.0 }).collect()
}

impl RoundPlan {
    /// Plan for the single-round algorithm on `x` with degree cap `sigma`.
    pub fn modified(graph: &StochasticGraph, x: &[f64], sigma: f64, cache: &DistributionCache) -> Result<Self> {
        Self::modified_with_ratio(graph, x, sigma, cache, Arc::new(ratios(x, sigma)))
    }

    pub(crate) fn modified_with_ratio(
        graph: &StochasticGraph,
        x: &[f64],
        sigma: f64,
        cache: &DistributionCache,
        ratio: Arc<Vec<f64>>,
    ) -> Result<Self> {
        let slacks = dummy_slacks(graph, x, sigma)?;
        let mut proposers = real_proposers(graph, x, cache)?;
        for (b, slack) in slacks {
            let prob = g(slack, sigma);
            if prob > 0.0 {
                proposers.push(Proposer::Dummy { b, prob });
            }
        }
        Ok(RoundPlan { proposers, ratio, modified: true, sigma })
    }

    /// Plan for the unmodified sampler: no dummies, no thinning.
    pub fn simple(graph: &StochasticGraph, x: &[f64], cache: &DistributionCache) -> Result<Self> {
        let proposers = real_proposers(graph, x, cache)?;
        let ratio = Arc::new(x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect());
        Ok(RoundPlan { proposers, ratio, modified: false, sigma: 1.0 })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn real_proposers(graph: &StochasticGraph, x: &[f64], cache: &DistributionCache) -> Result<Vec<Proposer>> {
    let mut out = Vec::new();
    for a in 0..graph.a_count() {
        if let Some(dist) = cache.get(graph, a, x)? {
            out.push(Proposer::Real { dist });
        }
    }
    Ok(out)
}

#[derive(Debug)]
enum Prepared {
    Greedy { order: Vec<usize> },
    Single(RoundPlan),
    TwoRound { first: RoundPlan },
    Heavy(RoundPlan),
}

/// An algorithm bound to a graph and LP solution, ready for repeated runs.
#[derive(Debug)]
pub struct PreparedAlgorithm<'g> {
    graph: &'g StochasticGraph,
    algorithm: Algorithm,
    x: Vec<f64>,
    cache: DistributionCache,
    prepared: Prepared,
    light_mass: Option<f64>,
}

impl<'g> PreparedAlgorithm<'g> {
    pub fn new(graph: &'g StochasticGraph, x: Option<&[f64]>, config: &AlgorithmConfig) -> Result<Self> {
        config.params.validate()?;
        let x = match (x, config.algorithm) {
            (_, Algorithm::Greedy) => vec![0.0; graph.edge_count()],
            (Some(x), _) => {
                if x.len() != graph.edge_count() {
                    return Err(Error::InvalidParameter(format!(
                        "solution has {} values but the instance has {} edges",
                        x.len(),
                        graph.edge_count()
                    )));
                }
                x.to_vec()
            }
            (None, alg) => return Err(Error::InvalidParameter(format!("algorithm {alg} needs an LP solution"))),
        };
        let cache = DistributionCache::default();
        let mut light_mass = None;
        let prepared = match config.algorithm {
            Algorithm::Greedy => {
                let mut order: Vec<usize> = (0..graph.edge_count()).collect();
                order.sort_by(|&e, &f| graph.edge(f).w.total_cmp(&graph.edge(e).w).then(e.cmp(&f)));
                Prepared::Greedy { order }
            }
            Algorithm::Simple => Prepared::Single(RoundPlan::simple(graph, &x, &cache)?),
            Algorithm::Alg1 => Prepared::Single(RoundPlan::modified(graph, &x, config.params.sigma, &cache)?),
            Algorithm::Apx => {
                let params = config.params;
                let heavy = heavy_edges(graph, &x, params.tau);
                let total: f64 = (0..x.len()).map(|e| x[e] * graph.edge(e).w).sum();
                let light: f64 = (0..x.len()).filter(|&e| !heavy[e]).map(|e| x[e] * graph.edge(e).w).sum();
                light_mass = Some(light);
                if light >= params.lambda * total {
                    Prepared::TwoRound { first: RoundPlan::modified(graph, &x, 1.0, &cache)? }
                } else {
                    let xh: Vec<f64> = x.iter().zip(&heavy).map(|(&v, &h)| if h { v } else { 0.0 }).collect();
                    Prepared::Heavy(RoundPlan::modified(graph, &xh, rho(params.tau), &cache)?)
                }
            }
        };
        Ok(PreparedAlgorithm { graph, algorithm: config.algorithm, x, cache, prepared, light_mass })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn graph(&self) -> &StochasticGraph {
        self.graph
    }

    pub fn branch(&self) -> Option<ApxBranch> {
        match self.prepared {
            Prepared::TwoRound { .. } => Some(ApxBranch::TwoRound),
            Prepared::Heavy(_) => Some(ApxBranch::Heavy),
            _ => None,
        }
    }

    /// LP mass `sum x_e w_e` over light edges (two-branch algorithm only).
    pub fn light_mass(&self) -> Option<f64> {
        self.light_mass
    }

    /// The plan of the first (or only) rounding round, if any.
    pub fn first_round(&self) -> Option<&RoundPlan> {
        match &self.prepared {
            Prepared::Greedy { .. } => None,
            Prepared::Single(p) | Prepared::Heavy(p) => Some(p),
            Prepared::TwoRound { first } => Some(first),
        }
    }

    /// Runs once into `exec`, which is reset first.
    pub fn execute(&self, exec: &mut Execution, state: &mut RealizationState, rng: &mut ChaCha8Rng) -> Result<()> {
        exec.reset(self.graph);
        match &self.prepared {
            Prepared::Greedy { order } => {
                for &e in order {
                    let edge = self.graph.edge(e);
                    if exec.matched_a[edge.a] || exec.matched_b[edge.b] {
                        continue;
                    }
                    exec.examine(self.graph, state, e, 1);
                }
            }
            Prepared::Single(plan) | Prepared::Heavy(plan) => exec.run_round(self.graph, plan, 1, state, rng),
            Prepared::TwoRound { first } => {
                exec.run_round(self.graph, first, 1, state, rng);
                let mut x2 = std::mem::take(&mut exec.x2);
                x2.clear();
                x2.extend((0..self.graph.edge_count()).map(|e| {
                    let edge = self.graph.edge(e);
                    let free = exec.status[e] == EdgeStatus::Unexamined && !exec.matched_a[edge.a] && !exec.matched_b[edge.b];
                    if free {
                        self.x[e]
                    } else {
                        0.0
                    }
                }));
                let second = RoundPlan::modified_with_ratio(self.graph, &x2, 1.0, &self.cache, first.ratio.clone());
                exec.x2 = x2;
                exec.run_round(self.graph, &second?, 2, state, rng);
            }
        }
        exec.branch = self.branch();
        Ok(())
    }

    /// Runs once and returns the full record.
    pub fn run(&self, state: &mut RealizationState, rng: &mut ChaCha8Rng) -> Result<RunResult> {
        let mut exec = Execution::new(true);
        self.execute(&mut exec, state, rng)?;
        Ok(exec.result())
    }
}

/// Edges with `g(x_e, 1) / p_e > tau`.
pub fn heavy_edges(graph: &StochasticGraph, x: &[f64], tau: f64) -> Vec<bool> {
    (0..x.len()).map(|e| g(x[e].min(1.0), 1.0) / graph.edge(e).p > tau).collect()
}

/// Reusable scratch state of one execution.
#[derive(Debug, Clone, Default)]
pub struct Execution {
    record_events: bool,
    matched_a: Vec<bool>,
    matched_b: Vec<bool>,
    status: Vec<EdgeStatus>,
    round_of: Vec<Option<u8>>,
    events: Vec<LoggedEvent>,
    matching: Vec<usize>,
    weights: Vec<f64>,
    weight: f64,
    branch: Option<ApxBranch>,
    order: Vec<usize>,
    perm: Vec<usize>,
    x2: Vec<f64>,
}

impl Execution {
    /// `record_events` controls whether the event log is kept.
    pub fn new(record_events: bool) -> Self {
        Execution { record_events, ..Default::default() }
    }

    fn reset(&mut self, graph: &StochasticGraph) {
        let m = graph.edge_count();
        self.matched_a.clear();
        self.matched_a.resize(graph.a_count(), false);
        self.matched_b.clear();
        self.matched_b.resize(graph.b_count(), false);
        self.status.clear();
        self.status.resize(m, EdgeStatus::Unexamined);
        self.round_of.clear();
        self.round_of.resize(m, None);
        self.events.clear();
        self.matching.clear();
        self.weights.clear();
        self.weights.extend(graph.edges().iter().map(|e| e.w));
        self.weight = 0.0;
        self.branch = None;
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Matched edges in the order they were committed.
    pub fn matching(&self) -> &[usize] {
        &self.matching
    }

    pub fn status(&self) -> &[EdgeStatus] {
        &self.status
    }

    pub fn matched_b(&self) -> &[bool] {
        &self.matched_b
    }

    pub fn matched_a(&self) -> &[bool] {
        &self.matched_a
    }

    pub fn result(&self) -> RunResult {
        let mut matching = self.matching.clone();
        matching.sort_unstable();
        RunResult {
            matching,
            weight: self.weight,
            edge_log: self.status.clone(),
            query_order: self.events.clone(),
            rounds: self.round_of.clone(),
            branch: self.branch,
        }
    }

    /// Flips the coin of `e`, committing it when both endpoints are free.
    /// Returns whether the edge is realized.
    fn examine(&mut self, graph: &StochasticGraph, state: &mut RealizationState, e: usize, round: u8) -> bool {
        let realized = sample_realization(graph, state, e);
        let edge = graph.edge(e);
        let query = !self.matched_a[edge.a] && !self.matched_b[edge.b];
        self.status[e] = match (query, realized) {
            (true, true) => EdgeStatus::QueriedRealizedMatched,
            (true, false) => EdgeStatus::QueriedNotRealized,
            (false, true) => EdgeStatus::CoinflipRealized,
            (false, false) => EdgeStatus::CoinflipNotRealized,
        };
        self.round_of[e] = Some(round);
        if query && realized {
            self.matched_a[edge.a] = true;
            self.matched_b[edge.b] = true;
            self.matching.push(e);
            self.weight += self.weights[e];
        }
        if self.record_events {
            let action = if query {
                Action::Query { edge: e, realized }
            } else {
                Action::CoinFlip { edge: e, realized }
            };
            self.events.push(LoggedEvent { round, action });
        }
        realized
    }

    fn run_round(&mut self, graph: &StochasticGraph, plan: &RoundPlan, round: u8, state: &mut RealizationState, rng: &mut ChaCha8Rng) {
        let mut order = std::mem::take(&mut self.order);
        let mut perm = std::mem::take(&mut self.perm);
        order.clear();
        order.extend(0..plan.proposers.len());
        order.shuffle(rng);
        for &i in &order {
            match &plan.proposers[i] {
                Proposer::Real { dist } => {
                    if plan.modified {
                        dist.draw_into(graph, &plan.ratio, rng, &mut perm);
                    } else {
                        perm.clear();
                        perm.extend_from_slice(dist.sample(rng));
                    }
                    for &e in &perm {
                        if self.examine(graph, state, e, round) {
                            break;
                        }
                    }
                }
                Proposer::Dummy { b, prob } => {
                    if rng.gen::<f64>() < *prob && !self.matched_b[*b] {
                        self.matched_b[*b] = true;
                        if self.record_events {
                            self.events.push(LoggedEvent { round, action: Action::DummyBlock { b: *b } });
                        }
                    }
                }
            }
        }
        self.order = order;
        self.perm = perm;
    }
}

fn run_once(graph: &StochasticGraph, x: Option<&[f64]>, config: AlgorithmConfig, state: &mut RealizationState, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    PreparedAlgorithm::new(graph, x, &config)?.run(state, rng)
}

fn config(algorithm: Algorithm, params: TransformParams) -> AlgorithmConfig {
    AlgorithmConfig { algorithm, params, seed: 0 }
}

/// Queries edges by decreasing weight (ties by id) whenever both endpoints are free.
pub fn greedy_matching(graph: &StochasticGraph, state: &mut RealizationState, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    run_once(graph, None, config(Algorithm::Greedy, TransformParams::default()), state, rng)
}

/// Every A vertex, in uniform random order, examines a permutation drawn
/// from its proportional distribution and proposes on the first realized edge.
pub fn simple_matching(graph: &StochasticGraph, x: &[f64], state: &mut RealizationState, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    run_once(graph, Some(x), config(Algorithm::Simple, TransformParams::default()), state, rng)
}

/// The single-round algorithm: pad to degree `sigma`, thin with `g(., sigma)`
/// and run the proposal loop with the modified sampler.
pub fn alg1(graph: &StochasticGraph, x: &[f64], sigma: f64, state: &mut RealizationState, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    let params = TransformParams { sigma, ..TransformParams::default() };
    run_once(graph, Some(x), config(Algorithm::Alg1, params), state, rng)
}

/// The two-branch algorithm.
pub fn apx_matching(graph: &StochasticGraph, x: &[f64], params: TransformParams, state: &mut RealizationState, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    run_once(graph, Some(x), config(Algorithm::Apx, params), state, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::stream_rng;
    use crate::lpmatch::solve_lp_match;
    use proptest::prelude::*;

    fn streams(seed: u64, trial: u64, m: usize) -> (RealizationState, ChaCha8Rng) {
        (RealizationState::for_trial(m, seed, trial), stream_rng(seed, 2 * trial + 1))
    }

    fn mean<F: FnMut(&mut RealizationState, &mut ChaCha8Rng) -> f64>(n: u64, m: usize, mut f: F) -> f64 {
        (0..n).map(|t| {
            let (mut s, mut r) = streams(17, t, m);
            f(&mut s, &mut r)
        }).sum::<f64>() / n as f64
    }

    #[test]
    fn greedy_examples() {
        let g1 = StochasticGraph::new(1, 1, &[(0, 0, 2.5, 1.0)]).unwrap();
        let (mut s, mut r) = streams(0, 0, 1);
        let run = greedy_matching(&g1, &mut s, &mut r).unwrap();
        assert_eq!(run.matching, vec![0]);
        assert_eq!(run.weight, 2.5);

        let g2 = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 1.0), (1, 0, 2.0, 1.0)]).unwrap();
        let (mut s, mut r) = streams(0, 0, 2);
        let run = greedy_matching(&g2, &mut s, &mut r).unwrap();
        assert_eq!(run.matching, vec![1]);
        assert_eq!(run.edge_log[0], EdgeStatus::Unexamined);
        run.validate(&g2).unwrap();
    }

    #[test]
    fn greedy_path_expectation() {
        let g = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 0.5), (1, 0, 1.0, 0.5)]).unwrap();
        let n = 200_000;
        let m = mean(n, 2, |s, r| greedy_matching(&g, s, r).unwrap().weight);
        let se = (0.75 * 0.25 / n as f64).sqrt();
        assert!((m - 0.75).abs() < 4.0 * se, "{m}");
    }

    #[test]
    fn simple_examples() {
        let empty = StochasticGraph::new(1, 1, &[]).unwrap();
        let (mut s, mut r) = streams(0, 0, 0);
        assert!(simple_matching(&empty, &[], &mut s, &mut r).unwrap().matching.is_empty());

        let g1 = StochasticGraph::new(1, 1, &[(0, 0, 1.0, 1.0)]).unwrap();
        for t in 0..50 {
            let (mut s, mut r) = streams(1, t, 1);
            assert_eq!(simple_matching(&g1, &[1.0], &mut s, &mut r).unwrap().matching, vec![0]);
        }

        let g2 = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 1.0), (1, 0, 1.0, 1.0)]).unwrap();
        let n = 200_000;
        let m = mean(n, 2, |s, r| simple_matching(&g2, &[0.5, 0.5], s, r).unwrap().weight);
        assert!((m - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / n as f64).sqrt(), "{m}");
    }

    #[test]
    fn alg1_single_edge() {
        let g1 = StochasticGraph::new(1, 1, &[(0, 0, 1.0, 1.0)]).unwrap();
        let n = 200_000;
        let target = 1.0 - (-1.0f64).exp();
        let m = mean(n, 1, |s, r| alg1(&g1, &[1.0], 1.0, s, r).unwrap().weight);
        assert!((m - target).abs() < 4.0 * (target * (1.0 - target) / n as f64).sqrt(), "{m}");
    }

    #[test]
    fn alg1_rejects_excess_degree() {
        let g2 = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 1.0), (1, 0, 1.0, 1.0)]).unwrap();
        let (mut s, mut r) = streams(0, 0, 2);
        assert!(matches!(
            alg1(&g2, &[0.4, 0.4], 0.5, &mut s, &mut r),
            Err(Error::DegreeAboveSigma { .. })
        ));
    }

    #[test]
    fn apx_branches() {
        let g1 = StochasticGraph::new(1, 1, &[(0, 0, 1.0, 1.0)]).unwrap();
        let p = PreparedAlgorithm::new(&g1, Some(&[1.0]), &config(Algorithm::Apx, TransformParams::default())).unwrap();
        assert_eq!(p.branch(), Some(ApxBranch::TwoRound));

        let edges: Vec<_> = (0..3).map(|a| (a, a, 1.0, 0.1)).collect();
        let g3 = StochasticGraph::new(3, 3, &edges).unwrap();
        let p = PreparedAlgorithm::new(&g3, Some(&[0.1; 3]), &config(Algorithm::Apx, TransformParams::default())).unwrap();
        assert_eq!(p.branch(), Some(ApxBranch::Heavy));
        assert!((p.first_round().unwrap().sigma() - rho(0.8723)).abs() < 1e-12);
        let lam0 = TransformParams { lambda: 0.0, ..TransformParams::default() };
        let p = PreparedAlgorithm::new(&g3, Some(&[0.1; 3]), &config(Algorithm::Apx, lam0)).unwrap();
        assert_eq!(p.branch(), Some(ApxBranch::TwoRound));
    }

    #[test]
    fn available_edge_examples() {
        let g = StochasticGraph::new(2, 2, &[(0, 0, 1.0, 1.0), (0, 1, 1.0, 1.0), (1, 1, 1.0, 1.0)]).unwrap();
        let nothing = RunResult {
            matching: vec![],
            weight: 0.0,
            edge_log: vec![EdgeStatus::Unexamined; 3],
            query_order: vec![],
            rounds: vec![None; 3],
            branch: None,
        };
        assert_eq!(available_edges(&g, &nothing), vec![0, 1, 2]);
        let mut matched = nothing.clone();
        matched.matching = vec![0];
        matched.weight = 1.0;
        matched.edge_log[0] = EdgeStatus::QueriedRealizedMatched;
        matched.rounds[0] = Some(1);
        matched.query_order = vec![LoggedEvent { round: 1, action: Action::Query { edge: 0, realized: true } }];
        matched.validate(&g).unwrap();
        assert_eq!(available_edges(&g, &matched), vec![2]);
    }

    #[test]
    fn validate_catches_tampering() {
        let g = StochasticGraph::new(2, 1, &[(0, 0, 1.0, 1.0), (1, 0, 1.0, 1.0)]).unwrap();
        let (mut s, mut r) = streams(0, 0, 2);
        let run = greedy_matching(&g, &mut s, &mut r).unwrap();
        let mut bad = run.clone();
        bad.matching.push(1);
        assert!(bad.validate(&g).is_err());
        let mut bad = run.clone();
        bad.weight = 5.0;
        assert!(bad.validate(&g).is_err());
    }

    fn random_instance() -> impl Strategy<Value = StochasticGraph> {
        (1usize..=4, 1usize..=4).prop_flat_map(|(na, nb)| {
            proptest::collection::vec((any::<bool>(), 0.0f64..5.0, 0.05f64..=1.0), na * nb).prop_map(move |cells| {
                let edges: Vec<_> = cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.0)
                    .map(|(i, c)| (i / nb, i % nb, c.1, c.2))
                    .collect();
                StochasticGraph::new(na, nb, &edges).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn runs_respect_query_commit(g in random_instance(), seed in 0u64..1000) {
            let sol = solve_lp_match(&g).unwrap();
            for alg in [Algorithm::Greedy, Algorithm::Simple, Algorithm::Alg1, Algorithm::Apx] {
                let cfg = config(alg, TransformParams::default());
                let prepared = PreparedAlgorithm::new(&g, Some(&sol.x), &cfg).unwrap();
                for t in 0..20 {
                    let (mut s, mut r) = streams(seed, t, g.edge_count());
                    let run = prepared.run(&mut s, &mut r).unwrap();
                    prop_assert!(run.validate(&g).is_ok(), "{:?}", run.validate(&g));
                    // Memoized coins agree with the logged realizations.
                    for ev in &run.query_order {
                        if let Action::Query { edge, realized } | Action::CoinFlip { edge, realized } = ev.action {
                            let memo = s.outcome(edge) == crate::instance::Realization::Realized;
                            prop_assert_eq!(memo, realized);
                        }
                    }
                    if alg == Algorithm::Apx && run.branch == Some(ApxBranch::TwoRound) {
                        // Round two only touches edges whose endpoints round one left free.
                        let mut ma = vec![false; g.a_count()];
                        let mut mb = vec![false; g.b_count()];
                        for ev in run.query_order.iter().filter(|ev| ev.round == 1) {
                            match ev.action {
                                Action::Query { edge, realized: true } => {
                                    ma[g.edge(edge).a] = true;
                                    mb[g.edge(edge).b] = true;
                                }
                                Action::DummyBlock { b } => mb[b] = true,
                                _ => {}
                            }
                        }
                        for ev in run.query_order.iter().filter(|ev| ev.round == 2) {
                            if let Action::Query { edge, .. } | Action::CoinFlip { edge, .. } = ev.action {
                                prop_assert!(!ma[g.edge(edge).a] && !mb[g.edge(edge).b]);
                            }
                        }
                    }
                }
            }
        }
    }
}
