//! Distributions over permutations of an A vertex's edges with prescribed
//! first-realized marginals, and the modified sampler that thins them.
//!
//! A permutation is consumed by examining its edges in order and stopping at
//! the first realized one. A distribution is *proportional* to `x` when every
//! edge is that stopping edge with probability exactly `x_e`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::StochasticGraph;
use crate::lpmatch::{worst_subset, FEASIBILITY_EPS};
use crate::simplex::{LinearProgram, LpError, Relation};

/// Default cap on the support size of `x` at one vertex.
pub const DEFAULT_DEGREE_CAP: usize = 7;

/// Edges with `x_e` at or below this value are left out of the support.
pub const SUPPORT_EPS: f64 = 1e-12;

/// Tolerance on reproduced marginals.
pub const MARGINAL_TOL: f64 = 1e-7;

/// Explicit distribution over permutations of subsets of `E_v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermDistribution {
    pub vertex: usize,
    pub support: Vec<(Vec<usize>, f64)>,
    /// `(edge, x_e)` for every edge of the vertex, in id order.
    pub targets: Vec<(usize, f64)>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// Permutation produced by [`draw_modified_perm`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermSample(pub Vec<usize>);

impl PermDistribution {
    fn from_support(vertex: usize, support: Vec<(Vec<usize>, f64)>, targets: Vec<(usize, f64)>) -> Self {
        let total: f64 = support.iter().map(|(_, q)| q).sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = support
            .iter()
            .map(|(_, q)| {
                acc += q / total;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        PermDistribution { vertex, support, targets, cumulative }
    }

    /// Draws a base permutation.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[usize] {
        let u: f64 = rng.gen();
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.support.len() - 1);
        &self.support[i].0
    }

    /// Edges with nonzero target, in id order.
    pub fn support_edges(&self) -> Vec<usize> {
        self.targets.iter().filter(|(_, x)| *x > SUPPORT_EPS).map(|&(e, _)| e).collect()
    }

    /// Walks a sampled base permutation and keeps, skips or cuts each edge
    /// as the modified sampler does. `ratio[e]` is `x_tilde_e / x_e`.
    pub(crate) fn draw_into<R: Rng + ?Sized>(
        &self,
        graph: &StochasticGraph,
        ratio: &[f64],
        rng: &mut R,
        out: &mut Vec<usize>,
    ) {
        out.clear();
        let base = self.sample(rng);
        for &e in base {
            let r = ratio[e];
            let cut = graph.edge(e).p * (1.0 - r);
            let c: f64 = rng.gen();
            if c < cut {
                break;
            }
            if c < cut + r {
                out.push(e);
            }
        }
    }
}

/// Builds a distribution over permutations of subsets of `E_v` whose
/// first-realized marginals equal `x` (indexed by edge id).
pub fn build_proportional_distribution(graph: &StochasticGraph, v: usize, x: &[f64]) -> Result<PermDistribution> {
    build_proportional_distribution_with_cap(graph, v, x, DEFAULT_DEGREE_CAP)
}

pub fn build_proportional_distribution_with_cap(
    graph: &StochasticGraph,
    v: usize,
    x: &[f64],
    cap: usize,
) -> Result<PermDistribution> {
    let incident = graph.edges_at_a(v);
    let targets: Vec<(usize, f64)> = incident.iter().map(|&e| (e, x[e])).collect();
    let support: Vec<usize> = incident.iter().copied().filter(|&e| x[e] > SUPPORT_EPS).collect();
    if support.len() > cap {
        return Err(Error::DegreeCap { vertex: format!("A{v}"), degree: support.len(), cap });
    }
    let (violation, mask) = worst_subset(graph, x, &support);
    let infeasible = |violation: f64| Error::InfeasibleMarginals {
        vertex: format!("A{v}"),
        witness: support.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e).collect(),
        violation,
    };
    if violation > FEASIBILITY_EPS {
        return Err(infeasible(violation));
    }

    let dist = match support.as_slice() {
        [] => PermDistribution::from_support(v, vec![(Vec::new(), 1.0)], targets),
        &[e] => {
            let q = (x[e] / graph.edge(e).p).min(1.0);
            let mut s = vec![(vec![e], q)];
            if q < 1.0 {
                s.push((Vec::new(), 1.0 - q));
            }
            PermDistribution::from_support(v, s, targets)
        }
        _ => {
            let columns = enumerate_permutations(graph, &support);
            let mut lp = LinearProgram::new(columns.len());
            for (row, &e) in support.iter().enumerate() {
                let coeffs = columns.iter().map(|(_, m)| m[row]).collect();
                lp.add_constraint(coeffs, Relation::Equal, x[e])?;
            }
            lp.add_constraint(vec![1.0; columns.len()], Relation::Equal, 1.0)?;
            let solution = match lp.solve() {
                Ok(s) => s,
                Err(LpError::Infeasible(r)) => return Err(infeasible(violation.max(r))),
                Err(e) => return Err(e.into()),
            };
            let s = columns
                .into_iter()
                .zip(solution.x)
                .filter(|(_, q)| *q > 1e-15)
                .map(|((perm, _), q)| (perm, q))
                .collect();
            PermDistribution::from_support(v, s, targets)
        }
    };

    let marginals = first_realized_marginals(&dist, graph);
    for &(e, target) in &dist.targets {
        if (marginals[e] - target).abs() > MARGINAL_TOL {
            return Err(Error::Numerical(format!(
                "vertex A{v}: marginal of edge {e} is {} instead of {target}",
                marginals[e]
            )));
        }
    }
    Ok(dist)
}

/// Every permutation of every subset of `support` (the empty one included)
/// with its first-realized marginal vector over `support`.
fn enumerate_permutations(graph: &StochasticGraph, support: &[usize]) -> Vec<(Vec<usize>, Vec<f64>)> {
    fn go(
        graph: &StochasticGraph,
        support: &[usize],
        used: u32,
        prefix: &mut Vec<usize>,
        marginal: &mut Vec<f64>,
        none: f64,
        out: &mut Vec<(Vec<usize>, Vec<f64>)>,
    ) {
        out.push((prefix.iter().map(|&i| support[i]).collect(), marginal.clone()));
        for i in 0..support.len() {
            if used >> i & 1 == 1 {
                continue;
            }
            let p = graph.edge(support[i]).p;
            prefix.push(i);
            marginal[i] = none * p;
            go(graph, support, used | 1 << i, prefix, marginal, none * (1.0 - p), out);
            marginal[i] = 0.0;
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(graph, support, 0, &mut Vec::new(), &mut vec![0.0; support.len()], 1.0, &mut out);
    out
}

/// Probability that each edge is the first realized edge of a permutation
/// drawn from `dist`; indexed by edge id over the whole graph.
pub fn first_realized_marginals(dist: &PermDistribution, graph: &StochasticGraph) -> Vec<f64> {
    let mut out = vec![0.0; graph.edge_count()];
    for (perm, q) in &dist.support {
        let mut none = *q;
        for &e in perm {
            let p = graph.edge(e).p;
            out[e] += none * p;
            none *= 1.0 - p;
        }
    }
    out
}

/// Samples a base permutation and thins it so that each edge becomes the
/// first realized edge with probability `x_tilde_e` instead of `x_e`.
///
/// For each edge of the base permutation a uniform `c` is drawn with
/// `r = x_tilde_e / x_e`: below `p_e (1 - r)` the walk ends, below
/// `p_e (1 - r) + r` the edge is appended, otherwise it is skipped.
pub fn draw_modified_perm<R: Rng + ?Sized>(
    dist: &PermDistribution,
    x: &[f64],
    x_tilde: &[f64],
    graph: &StochasticGraph,
    rng: &mut R,
) -> Result<PermSample> {
    let ratio = modification_ratios(dist, x, x_tilde)?;
    let mut out = Vec::new();
    dist.draw_into(graph, &ratio, rng, &mut out);
    Ok(PermSample(out))
}

/// `x_tilde_e / x_e` over the support of `dist` (zero elsewhere).
pub fn modification_ratios(dist: &PermDistribution, x: &[f64], x_tilde: &[f64]) -> Result<Vec<f64>> {
    let mut ratio = vec![0.0; x.len()];
    for &(e, _) in &dist.targets {
        if x_tilde[e] > x[e] || x_tilde[e] < 0.0 {
            return Err(Error::TildeAboveX(e));
        }
        if x[e] > 0.0 {
            ratio[e] = x_tilde[e] / x[e];
        }
    }
    Ok(ratio)
}

/// One leaf of the exact modified-sampler tree at a vertex: the edge the
/// vertex proposes on (if any) and the set of edges it examined, as a
/// bitmask over edge ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalOutcome {
    pub proposal: Option<usize>,
    pub examined: u64,
    pub prob: f64,
}

/// Exact distribution of the vertex's behaviour when the modified sampler is
/// consumed: walk the base permutation, and for each edge cut, append or
/// skip; appended edges are examined until one is realized, which becomes
/// the proposal. Identical outcomes are merged. Requires edge ids below 64.
pub fn enumerate_proposals(dist: &PermDistribution, graph: &StochasticGraph, ratio: &[f64]) -> Vec<ProposalOutcome> {
    let mut acc: BTreeMap<(Option<usize>, u64), f64> = BTreeMap::new();
    for (perm, q) in &dist.support {
        walk(graph, ratio, perm, *q, 0, &mut acc);
    }
    acc.into_iter()
        .map(|((proposal, examined), prob)| ProposalOutcome { proposal, examined, prob })
        .collect()
}

fn walk(graph: &StochasticGraph, ratio: &[f64], rest: &[usize], prob: f64, examined: u64, acc: &mut BTreeMap<(Option<usize>, u64), f64>) {
    if prob == 0.0 {
        return;
    }
    let Some((&e, tail)) = rest.split_first() else {
        *acc.entry((None, examined)).or_insert(0.0) += prob;
        return;
    };
    let p = graph.edge(e).p;
    let r = ratio[e];
    let cut = p * (1.0 - r);
    // Cut: nothing further is examined.
    if cut > 0.0 {
        *acc.entry((None, examined)).or_insert(0.0) += prob * cut;
    }
    // Append: the edge is examined; if realized the vertex proposes on it.
    if r > 0.0 {
        let seen = examined | 1 << e;
        *acc.entry((Some(e), seen)).or_insert(0.0) += prob * r * p;
        walk(graph, ratio, tail, prob * r * (1.0 - p), seen, acc);
    }
    let skip = 1.0 - cut - r;
    if skip > 0.0 {
        walk(graph, ratio, tail, prob * skip, examined, acc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::g;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vertex(ps: &[f64]) -> StochasticGraph {
        let edges: Vec<_> = ps.iter().enumerate().map(|(b, &p)| (0, b, 1.0, p)).collect();
        StochasticGraph::new(1, ps.len(), &edges).unwrap()
    }

    fn assert_exact(dist: &PermDistribution, graph: &StochasticGraph, x: &[f64]) {
        let m = first_realized_marginals(dist, graph);
        for (e, &target) in x.iter().enumerate() {
            assert!((m[e] - target).abs() < MARGINAL_TOL, "edge {e}: {} vs {target}", m[e]);
        }
        let total: f64 = dist.support.iter().map(|(_, q)| q).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(dist.support.iter().all(|(_, q)| *q >= 0.0));
    }

    #[test]
    fn single_edge_cases() {
        let g1 = vertex(&[0.6]);
        let d = build_proportional_distribution(&g1, 0, &[0.6]).unwrap();
        assert_eq!(d.support, vec![(vec![0], 1.0)]);
        let d = build_proportional_distribution(&g1, 0, &[0.3]).unwrap();
        assert_exact(&d, &g1, &[0.3]);
        assert!((d.support[0].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_certain_edges() {
        let g2 = vertex(&[1.0, 1.0]);
        let d = build_proportional_distribution(&g2, 0, &[0.5, 0.5]).unwrap();
        assert_exact(&d, &g2, &[0.5, 0.5]);
    }

    #[test]
    fn marginal_formula_examples() {
        let g2 = vertex(&[0.5, 0.5]);
        let d = PermDistribution::from_support(0, vec![(vec![0, 1], 1.0)], vec![]);
        assert_eq!(first_realized_marginals(&d, &g2), vec![0.5, 0.25]);
        let d = PermDistribution::from_support(0, vec![(vec![], 1.0)], vec![]);
        assert_eq!(first_realized_marginals(&d, &g2), vec![0.0, 0.0]);
        let g1 = vertex(&[0.7]);
        let d = PermDistribution::from_support(0, vec![(vec![0], 1.0)], vec![]);
        assert_eq!(first_realized_marginals(&d, &g1), vec![0.7]);
    }

    #[test]
    fn infeasible_and_capped() {
        let g2 = vertex(&[0.5, 0.5]);
        let err = build_proportional_distribution(&g2, 0, &[0.5, 0.5]).unwrap_err();
        match err {
            Error::InfeasibleMarginals { witness, violation, .. } => {
                assert_eq!(witness, vec![0, 1]);
                assert!((violation - 0.25).abs() < 1e-12);
            }
            other => panic!("{other}"),
        }
        let g8 = vertex(&[0.1; 8]);
        assert!(matches!(
            build_proportional_distribution(&g8, 0, &[0.01; 8]),
            Err(Error::DegreeCap { .. })
        ));
    }

    #[test]
    fn full_degree_cap_builds() {
        let ps = [0.9, 0.2, 0.5, 0.7, 0.3, 0.6, 0.4];
        let g7 = vertex(&ps);
        let x: Vec<f64> = ps.iter().map(|p| p * 0.12).collect();
        let d = build_proportional_distribution(&g7, 0, &x).unwrap();
        assert_exact(&d, &g7, &x);
    }

    #[test]
    fn sampler_edge_cases() {
        let g2 = vertex(&[0.5, 0.8]);
        let x = [0.3, 0.4];
        let d = build_proportional_distribution(&g2, 0, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let mut base_rng = rng.clone();
            let base = d.sample(&mut base_rng).to_vec();
            let s = draw_modified_perm(&d, &x, &x, &g2, &mut rng).unwrap();
            assert_eq!(s.0, base);
            assert!(draw_modified_perm(&d, &x, &[0.0, 0.0], &g2, &mut rng).unwrap().0.is_empty());
        }
        assert!(matches!(
            draw_modified_perm(&d, &x, &[0.31, 0.1], &g2, &mut rng),
            Err(Error::TildeAboveX(0))
        ));
    }

    #[test]
    fn exact_tree_on_two_certain_edges() {
        let g2 = vertex(&[1.0, 1.0]);
        let x = [0.5, 0.5];
        let d = build_proportional_distribution(&g2, 0, &x).unwrap();
        let xt: Vec<f64> = x.iter().map(|&v| g(v, 1.0)).collect();
        let ratio = modification_ratios(&d, &x, &xt).unwrap();
        let outcomes = enumerate_proposals(&d, &g2, &ratio);
        let total: f64 = outcomes.iter().map(|o| o.prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for e in 0..2 {
            let m: f64 = outcomes.iter().filter(|o| o.proposal == Some(e)).map(|o| o.prob).sum();
            assert!((m - 0.401_632_7).abs() < 1e-7, "{m}");
        }
    }

    #[test]
    fn sampled_proposals_match_tree() {
        let g3 = vertex(&[0.5, 0.8, 0.3]);
        let x = [0.2, 0.35, 0.1];
        let d = build_proportional_distribution(&g3, 0, &x).unwrap();
        let xt: Vec<f64> = x.iter().map(|&v| g(v, 1.0)).collect();
        let ratio = modification_ratios(&d, &x, &xt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut counts = [0usize; 3];
        let mut coins = ChaCha8Rng::seed_from_u64(6);
        let mut perm = Vec::new();
        for _ in 0..n {
            d.draw_into(&g3, &ratio, &mut rng, &mut perm);
            if let Some(&e) = perm.iter().find(|&&e| coins.gen::<f64>() < g3.edge(e).p) {
                counts[e] += 1;
            }
        }
        for e in 0..3 {
            let f = counts[e] as f64 / n as f64;
            let se = (xt[e] * (1.0 - xt[e]) / n as f64).sqrt();
            assert!((f - xt[e]).abs() < 4.0 * se, "edge {e}: {f} vs {}", xt[e]);
        }
    }

    fn feasible_vertex() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..=5).prop_flat_map(|k| {
            (proptest::collection::vec(0.05f64..=1.0, k), proptest::collection::vec(0.0f64..=1.0, k), 0.0f64..=1.0)
                .prop_map(|(ps, raw, scale)| {
                    let g = vertex(&ps);
                    let mut x: Vec<f64> = raw.iter().zip(&ps).map(|(r, p)| r * p).collect();
                    // Shrink toward zero until every subset constraint holds.
                    let edges: Vec<usize> = (0..ps.len()).collect();
                    while worst_subset(&g, &x, &edges).0 > 0.0 {
                        x.iter_mut().for_each(|v| *v *= 0.9);
                    }
                    x.iter_mut().for_each(|v| *v *= scale);
                    (ps, x)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn distributions_are_exact((ps, x) in feasible_vertex()) {
            let g = vertex(&ps);
            let d = build_proportional_distribution(&g, 0, &x).unwrap();
            let m = first_realized_marginals(&d, &g);
            for e in 0..ps.len() {
                prop_assert!((m[e] - x[e]).abs() < MARGINAL_TOL);
            }
        }

        #[test]
        fn samples_are_subsequences((ps, x) in feasible_vertex(), seed in any::<u64>()) {
            let g = vertex(&ps);
            let d = build_proportional_distribution(&g, 0, &x).unwrap();
            let xt: Vec<f64> = x.iter().map(|&v| 0.7 * v).collect();
            let ratio = modification_ratios(&d, &x, &xt).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut base_rng = rng.clone();
            let base = d.sample(&mut base_rng).to_vec();
            let mut out = Vec::new();
            d.draw_into(&g, &ratio, &mut rng, &mut out);
            let mut it = base.iter();
            prop_assert!(out.iter().all(|e| it.any(|b| b == e)));
        }
    }
}
