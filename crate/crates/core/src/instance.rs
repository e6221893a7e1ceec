//! Instance model, JSON I/O, random generators and lazy realization sampling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One edge of the bipartite graph. `id` is the position in the edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: usize,
    pub a: usize,
    pub b: usize,
    pub w: f64,
    pub p: f64,
    pub is_dummy: bool,
}

/// Bipartite graph with per-edge weight and existence probability.
///
/// Edge ids are list positions; every probability vector in the crate is
/// indexed by them. Graphs are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticGraph {
    a_count: usize,
    b_count: usize,
    edges: Vec<Edge>,
    adj_a: Vec<Vec<usize>>,
    adj_b: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    a_count: usize,
    b_count: usize,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    a: usize,
    b: usize,
    w: f64,
    p: f64,
}

impl StochasticGraph {
    /// Builds a graph from `(a, b, w, p)` tuples, validating every edge.
    pub fn new(a_count: usize, b_count: usize, edges: &[(usize, usize, f64, f64)]) -> Result<Self> {
        let mut graph = StochasticGraph {
            a_count,
            b_count,
            edges: Vec::with_capacity(edges.len()),
            adj_a: vec![Vec::new(); a_count],
            adj_b: vec![Vec::new(); b_count],
        };
        for (index, &(a, b, w, p)) in edges.iter().enumerate() {
            let invalid = |message: String| Error::InvalidEdge { index, message };
            if a >= a_count {
                return Err(invalid(format!("A index {a} out of range (a_count = {a_count})")));
            }
            if b >= b_count {
                return Err(invalid(format!("B index {b} out of range (b_count = {b_count})")));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(invalid(format!("probability must lie in (0,1], got {p}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(format!("weight must be finite and nonnegative, got {w}")));
            }
            if let Some(other) = graph.edge_between(a, b) {
                return Err(invalid(format!("duplicate (a, b) = ({a}, {b}) pair, first seen at edge {other}")));
            }
            graph.push(a, b, w, p, false);
        }
        Ok(graph)
    }

    fn push(&mut self, a: usize, b: usize, w: f64, p: f64, is_dummy: bool) {
        let id = self.edges.len();
        self.edges.push(Edge { id, a, b, w, p, is_dummy });
        self.adj_a[a].push(id);
        self.adj_b[b].push(id);
    }

    /// Returns a copy with one dummy edge (w = 0, p = 1) per listed B vertex,
    /// each attached to a fresh A vertex. Original ids are unchanged.
    pub(crate) fn with_dummies(&self, b_vertices: &[usize]) -> StochasticGraph {
        let mut graph = self.clone();
        for &b in b_vertices {
            graph.adj_a.push(Vec::new());
            graph.a_count += 1;
            graph.push(graph.a_count - 1, b, 0.0, 1.0, true);
        }
        graph
    }

    /// Parses the JSON instance format.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let tuples: Vec<_> = file.edges.iter().map(|e| (e.a, e.b, e.w, e.p)).collect();
        StochasticGraph::new(file.a_count, file.b_count, &tuples)
    }

    /// Canonical JSON serialization. Dummy edges are written as ordinary
    /// edges with w = 0 and p = 1.
    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            a_count: self.a_count,
            b_count: self.b_count,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord { a: e.a, b: e.b, w: e.w, p: e.p })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("instance serializes");
        text.push('\n');
        text
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn a_count(&self) -> usize {
        self.a_count
    }

    pub fn b_count(&self) -> usize {
        self.b_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edge ids incident to A vertex `a`, in id order.
    pub fn edges_at_a(&self, a: usize) -> &[usize] {
        &self.adj_a[a]
    }

    /// Edge ids incident to B vertex `b`, in id order.
    pub fn edges_at_b(&self, b: usize) -> &[usize] {
        &self.adj_b[b]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adj_a[a].iter().copied().find(|&e| self.edges[e].b == b)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.w).collect()
    }

    /// Number of non-dummy edges. Dummies are always appended after them.
    pub fn original_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_dummy).count()
    }

    pub fn max_degree(&self) -> usize {
        let a = self.adj_a.iter().map(Vec::len).max().unwrap_or(0);
        let b = self.adj_b.iter().map(Vec::len).max().unwrap_or(0);
        a.max(b)
    }
}

/// Supported random instance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorModel {
    /// Each (a, b) pair present independently with probability `density`.
    Uniform,
    /// Every (a, b) pair present.
    Complete,
    /// A single B vertex joined to every A vertex.
    Star,
    /// Uniform structure with small probabilities, so LP values sit close to
    /// `p` and most edges are heavy.
    SmallXHighRatio,
}

impl FromStr for GeneratorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "complete" => Ok(Self::Complete),
            "star" => Ok(Self::Star),
            "small-x-high-ratio" => Ok(Self::SmallXHighRatio),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

impl fmt::Display for GeneratorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Complete => "complete",
            Self::Star => "star",
            Self::SmallXHighRatio => "small-x-high-ratio",
        })
    }
}

/// Upper end of the probability range used by [`GeneratorModel::SmallXHighRatio`];
/// the requested range is scaled into `(0, SMALL_P_SCALE]`.
pub const SMALL_P_SCALE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub a_count: usize,
    pub b_count: usize,
    pub density: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            a_count: 4,
            b_count: 4,
            density: 0.5,
            w_min: 0.0,
            w_max: 1.0,
            p_min: 0.0,
            p_max: 1.0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.a_count == 0 || self.b_count == 0 {
            return bad("vertex counts must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.density) {
            return bad("density must lie in [0,1]");
        }
        if !(self.w_min >= 0.0 && self.w_min <= self.w_max && self.w_max.is_finite()) {
            return bad("weights need 0 <= w-min <= w-max");
        }
        if !(self.p_min >= 0.0 && self.p_min <= self.p_max && self.p_max <= 1.0 && self.p_max > 0.0) {
            return bad("probabilities need 0 <= p-min <= p-max <= 1 and p-max > 0");
        }
        Ok(())
    }
}

/// Generates an instance; the output depends only on `(model, params, seed)`.
pub fn generate_instance(model: GeneratorModel, params: &GeneratorParams, seed: u64) -> Result<StochasticGraph> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b_count = if model == GeneratorModel::Star { 1 } else { params.b_count };
    let p_scale = if model == GeneratorModel::SmallXHighRatio { SMALL_P_SCALE } else { 1.0 };
    let mut edges = Vec::new();
    for a in 0..params.a_count {
        for b in 0..b_count {
            let present = match model {
                GeneratorModel::Uniform | GeneratorModel::SmallXHighRatio => rng.gen::<f64>() < params.density,
                GeneratorModel::Complete | GeneratorModel::Star => true,
            };
            if !present {
                continue;
            }
            let w = params.w_min + rng.gen::<f64>() * (params.w_max - params.w_min);
            // Draw from (p_min, p_max] so that p = 0 never occurs.
            let p = params.p_max - rng.gen::<f64>() * (params.p_max - params.p_min);
            edges.push((a, b, w, p * p_scale));
        }
    }
    StochasticGraph::new(params.a_count, b_count, &edges)
}

/// Memoized state of one edge's coin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Realization {
    Unsampled,
    Realized,
    NotRealized,
}

/// Per-experiment realization record: each coin is flipped at most once,
/// at first examination, from the state's own RNG stream.
#[derive(Debug, Clone)]
pub struct RealizationState {
    outcomes: Vec<Realization>,
    rng: ChaCha8Rng,
}

impl RealizationState {
    pub fn new(edge_count: usize, rng: ChaCha8Rng) -> Self {
        RealizationState {
            outcomes: vec![Realization::Unsampled; edge_count],
            rng,
        }
    }

    /// State for trial `trial` of an experiment with master seed `seed`.
    pub fn for_trial(edge_count: usize, seed: u64, trial: u64) -> Self {
        Self::new(edge_count, stream_rng(seed, realization_stream(trial)))
    }

    /// Clears every memoized coin and installs a fresh stream.
    pub fn reset(&mut self, edge_count: usize, rng: ChaCha8Rng) {
        self.outcomes.clear();
        self.outcomes.resize(edge_count, Realization::Unsampled);
        self.rng = rng;
    }

    pub fn outcome(&self, e: usize) -> Realization {
        self.outcomes.get(e).copied().unwrap_or(Realization::Unsampled)
    }

    pub fn outcomes(&self) -> &[Realization] {
        &self.outcomes
    }
}

/// Returns whether edge `e` exists, flipping its coin on first access.
/// Dummy edges and edges with p = 1 are realized without consuming randomness.
pub fn sample_realization(graph: &StochasticGraph, state: &mut RealizationState, e: usize) -> bool {
    let edge = &graph.edges[e];
    if edge.is_dummy {
        return true;
    }
    if e >= state.outcomes.len() {
        state.outcomes.resize(e + 1, Realization::Unsampled);
    }
    match state.outcomes[e] {
        Realization::Realized => true,
        Realization::NotRealized => false,
        Realization::Unsampled => {
            let realized = edge.p >= 1.0 || state.rng.gen::<f64>() < edge.p;
            state.outcomes[e] = if realized { Realization::Realized } else { Realization::NotRealized };
            realized
        }
    }
}

/// Independent ChaCha stream `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream index reserved for the coins of trial `trial`.
pub fn realization_stream(trial: u64) -> u64 {
    trial.wrapping_mul(2)
}

/// Stream index reserved for the algorithm's own randomness in trial `trial`.
pub fn algorithm_stream(trial: u64) -> u64 {
    trial.wrapping_mul(2).wrapping_add(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(edges: &[(usize, usize, f64, f64)]) -> StochasticGraph {
        let na = edges.iter().map(|e| e.0 + 1).max().unwrap_or(1);
        let nb = edges.iter().map(|e| e.1 + 1).max().unwrap_or(1);
        StochasticGraph::new(na, nb, edges).unwrap()
    }

    #[test]
    fn loads_single_edge() {
        let g = StochasticGraph::from_json(r#"{"a_count":1,"b_count":1,"edges":[{"a":0,"b":0,"w":1,"p":0.5}]}"#)
            .unwrap();
        assert_eq!((g.a_count(), g.b_count(), g.edge_count()), (1, 1, 1));
        assert_eq!(g.edge(0).p, 0.5);
    }

    #[test]
    fn rejects_bad_probabilities_with_location() {
        for p in ["0", "1.5", "-0.1"] {
            let text = format!(
                r#"{{"a_count":1,"b_count":2,"edges":[{{"a":0,"b":0,"w":1,"p":0.5}},{{"a":0,"b":1,"w":1,"p":{p}}}]}}"#
            );
            let err = StochasticGraph::from_json(&text).unwrap_err().to_string();
            assert!(err.contains("edge 1"), "{err}");
            assert!(err.contains("probability must lie in (0,1]"), "{err}");
        }
    }

    #[test]
    fn rejects_negative_weight_and_duplicates() {
        let err = StochasticGraph::new(1, 1, &[(0, 0, -1.0, 0.5)]).unwrap_err().to_string();
        assert!(err.contains("nonnegative"));
        let err = StochasticGraph::new(1, 1, &[(0, 0, 1.0, 0.5), (0, 0, 2.0, 0.5)])
            .unwrap_err()
            .to_string();
        assert!(err.contains("edge 1") && err.contains("duplicate"));
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(matches!(StochasticGraph::from_json("{\"a_count\":1"), Err(Error::Parse(_))));
    }

    #[test]
    fn load_save_round_trip() {
        let g = graph(&[(0, 0, 1.25, 0.5), (1, 0, 0.1, 1.0), (1, 1, 3.0, 0.3)]);
        let text = g.to_json();
        let back = StochasticGraph::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn complete_generator() {
        let params = GeneratorParams {
            a_count: 2,
            b_count: 2,
            w_min: 1.0,
            w_max: 1.0,
            p_min: 1.0,
            p_max: 1.0,
            ..Default::default()
        };
        let g = generate_instance(GeneratorModel::Complete, &params, 0).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert!(g.edges().iter().all(|e| e.w == 1.0 && e.p == 1.0));
        let again = generate_instance(GeneratorModel::Complete, &params, 0).unwrap();
        assert_eq!(g.to_json(), again.to_json());
    }

    #[test]
    fn uniform_generator_is_deterministic_and_binomial() {
        let params = GeneratorParams { a_count: 5, b_count: 5, density: 0.5, ..Default::default() };
        let g = generate_instance(GeneratorModel::Uniform, &params, 7).unwrap();
        assert_eq!(g.to_json(), generate_instance(GeneratorModel::Uniform, &params, 7).unwrap().to_json());
        // Edge count over many seeds averages 12.5 with sd 2.5/sqrt(n).
        let n = 2000;
        let total: usize = (0..n)
            .map(|s| generate_instance(GeneratorModel::Uniform, &params, s).unwrap().edge_count())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 12.5).abs() < 4.0 * 2.5 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn star_and_small_models() {
        let params = GeneratorParams { a_count: 4, b_count: 3, density: 1.0, ..Default::default() };
        let star = generate_instance(GeneratorModel::Star, &params, 1).unwrap();
        assert_eq!(star.b_count(), 1);
        assert_eq!(star.edge_count(), 4);
        let small = generate_instance(GeneratorModel::SmallXHighRatio, &params, 1).unwrap();
        assert_eq!(small.edge_count(), 12);
        assert!(small.edges().iter().all(|e| e.p > 0.0 && e.p <= SMALL_P_SCALE));
    }

    #[test]
    fn unknown_model_and_bad_params() {
        assert!(matches!("bogus".parse::<GeneratorModel>(), Err(Error::UnknownModel(_))));
        let params = GeneratorParams { density: 1.5, ..Default::default() };
        assert!(generate_instance(GeneratorModel::Uniform, &params, 0).is_err());
    }

    #[test]
    fn dummy_and_certain_edges_are_realized() {
        let g = graph(&[(0, 0, 1.0, 1.0), (1, 0, 1.0, 0.5)]).with_dummies(&[0]);
        let mut state = RealizationState::for_trial(g.edge_count(), 3, 0);
        assert!(sample_realization(&g, &mut state, 0));
        assert!(sample_realization(&g, &mut state, 2));
        assert!(g.edge(2).is_dummy && g.edge(2).w == 0.0 && g.edge(2).p == 1.0);
    }

    #[test]
    fn realization_is_memoized() {
        let g = graph(&[(0, 0, 1.0, 0.5)]);
        for trial in 0..100 {
            let mut state = RealizationState::for_trial(1, 11, trial);
            let first = sample_realization(&g, &mut state, 0);
            for _ in 0..5 {
                assert_eq!(sample_realization(&g, &mut state, 0), first);
            }
        }
    }

    #[test]
    fn realization_frequency_matches_p() {
        let g = graph(&[(0, 0, 1.0, 0.5)]);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|&t| sample_realization(&g, &mut RealizationState::for_trial(1, 5, t), 0))
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.002, "{freq}");
    }

    #[test]
    fn equal_seeds_give_equal_sequences() {
        let g = graph(&[(0, 0, 1.0, 0.3), (0, 1, 1.0, 0.6), (1, 1, 1.0, 0.9)]);
        let run = |seed| {
            let mut s = RealizationState::for_trial(3, seed, 4);
            (0..3).map(|e| sample_realization(&g, &mut s, e)).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
    }
}
