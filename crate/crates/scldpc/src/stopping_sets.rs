//! Size-2 stopping-set statistics of the coupled ensemble.
//!
//! Two variable nodes form a stopping set of size 2 exactly when their
//! check-node neighborhoods coincide, which requires their positions to
//! differ by less than `w`. For nodes `k` positions apart the collision
//! probability factorizes as `q_k = P_R * (1 - k/w)^dv`, where `P_R` is
//! the same-position collision probability
//!
//! ```text
//! P_R = (dc-1)^dv / sum_{l=0}^{dv} C(dv,l) C(n-dv, dv-l) (dc-1)^l dc^(dv-l)
//! ```
//!
//! with `n = w*M*dv/dc` check nodes in a window. Expected pair counts per
//! offset follow as `lambda_0 = L*C(M,2)*q_0` and
//! `lambda_k = (L-k)*M^2*q_k`, and restricting the same count to the bits
//! erased by a burst yields the error-floor estimate for block erasure
//! probability deep below the recoverable burst length.
//!
//! The binomial sums are evaluated in exact big-integer arithmetic and
//! converted to floating point at the very end, so the statistics stay
//! correct for `M` up to millions.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::burst::erased_counts;
use crate::ensemble::{CodeGraph, EnsembleParams};
use crate::seeds;
use crate::{Error, Result};

/// Analytic size-2 stopping-set statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// Same-position neighborhood-collision probability.
    pub p_r: f64,
    /// Collision probability per position offset `k = 0..w-1`; zero beyond.
    pub q: Vec<f64>,
    /// Expected pair counts per offset; empty until
    /// [`expected_counts`] fills them.
    pub lambda: Vec<f64>,
}

impl PairStats {
    /// `q_k`, zero for offsets at or beyond the coupling width.
    pub fn q_at(&self, k: usize) -> f64 {
        self.q.get(k).copied().unwrap_or(0.0)
    }

    /// Expected total number of size-2 stopping sets, `sum_k lambda_k`.
    pub fn expected_total(&self) -> f64 {
        self.lambda.iter().sum()
    }
}

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

fn ratio_to_f64(num: BigUint, den: BigUint) -> f64 {
    Ratio::<BigInt>::new(num.into(), den.into())
        .to_f64()
        .expect("finite probability ratio")
}

/// Numerator and denominator of the same-position collision probability,
/// as exact integers (a common `dv!` factor is cancelled from both).
pub fn pair_collision_counts(params: &EnsembleParams) -> (BigUint, BigUint) {
    let dv = params.dv;
    let dc = params.dc;
    let n = params.w * params.nodes_per_pos * dv / dc;
    let num = BigUint::from(dc - 1).pow(dv as u32);
    let mut den = BigUint::from(0u32);
    for l in 0..=dv {
        den += binomial(dv, l)
            * binomial(n - dv, dv - l)
            * BigUint::from(dc - 1).pow(l as u32)
            * BigUint::from(dc).pow((dv - l) as u32);
    }
    (num, den)
}

/// Collision probabilities `P_R` and `q_k` for the ensemble (expected
/// counts left empty; see [`expected_counts`]).
pub fn pair_probability(params: &EnsembleParams) -> PairStats {
    let (num, den) = pair_collision_counts(params);
    let p_r = ratio_to_f64(num, den);
    let w = params.w as f64;
    let q = (0..params.w)
        .map(|k| p_r * ((w - k as f64) / w).powi(params.dv as i32))
        .collect();
    PairStats { p_r, q, lambda: Vec::new() }
}

/// Full pair statistics including the expected counts
/// `lambda_0 = L*C(M,2)*q_0`, `lambda_k = (L-k)*M^2*q_k`.
pub fn expected_counts(params: &EnsembleParams) -> PairStats {
    let mut stats = pair_probability(params);
    let l = params.spatial_len as f64;
    let m = params.nodes_per_pos as f64;
    stats.lambda = (0..params.w)
        .map(|k| {
            if k == 0 {
                l * (m * (m - 1.0) / 2.0) * stats.q[0]
            } else {
                (l - k as f64) * m * m * stats.q[k]
            }
        })
        .collect();
    stats
}

fn check_vn(graph: &CodeGraph, v: usize) -> Result<()> {
    if v >= graph.params().vn_count() {
        return Err(Error::parameter(format!("unknown variable node id {v}")));
    }
    Ok(())
}

/// True iff the two (distinct) variable nodes have identical check-node
/// neighborhoods, i.e. form a stopping set of size 2.
pub fn is_pair_stopping_set(graph: &CodeGraph, v_i: usize, v_j: usize) -> Result<bool> {
    check_vn(graph, v_i)?;
    check_vn(graph, v_j)?;
    if v_i == v_j {
        return Err(Error::parameter(format!(
            "pair requires two distinct variable nodes, got {v_i} twice"
        )));
    }
    Ok(graph.vn_neighbors(v_i) == graph.vn_neighbors(v_j))
}

/// All size-2 stopping sets of the graph as ordered pairs `(v_i, v_j)`,
/// `v_i < v_j`, sorted lexicographically. Neighbor lists are canonical
/// (sorted), so grouping by them finds all collisions in near-linear time;
/// each candidate pair is then confirmed by direct comparison.
pub fn enumerate_size2(graph: &CodeGraph) -> Vec<(u32, u32)> {
    let nv = graph.params().vn_count();
    let mut groups: HashMap<&[u32], Vec<u32>> = HashMap::new();
    for v in 0..nv {
        groups.entry(graph.vn_neighbors(v)).or_default().push(v as u32);
    }
    let mut pairs = Vec::new();
    for members in groups.values() {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                debug_assert_eq!(graph.vn_neighbors(a as usize), graph.vn_neighbors(b as usize));
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// True iff every check node adjacent to the (nonempty) set of variable
/// nodes sees at least two of its members.
pub fn is_stopping_set(graph: &CodeGraph, vns: &[u32]) -> Result<bool> {
    if vns.is_empty() {
        return Err(Error::parameter("stopping-set test requires a nonempty set".to_string()));
    }
    let mut hits: HashMap<u32, u32> = HashMap::new();
    for &v in vns {
        check_vn(graph, v as usize)?;
        for &c in graph.vn_neighbors(v as usize) {
            *hits.entry(c).or_insert(0) += 1;
        }
    }
    Ok(hits.values().all(|&h| h >= 2))
}

/// Empirical per-offset pair counts averaged over sampled graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEmpirics {
    pub graphs: usize,
    /// Mean number of pairs at offset `k`, index `k = 0..w-1`.
    pub mean: Vec<f64>,
    /// Standard error of each mean.
    pub se: Vec<f64>,
}

/// Samples `n_graphs` graphs (streams derived from `seed`) and averages
/// the per-offset size-2 stopping-set counts.
pub fn empirical_pair_counts(
    params: &EnsembleParams,
    n_graphs: usize,
    seed: u64,
) -> Result<PairEmpirics> {
    if n_graphs == 0 {
        return Err(Error::parameter("need at least one graph".to_string()));
    }
    let w = params.w;
    let counts: Vec<Vec<u32>> = (0..n_graphs)
        .into_par_iter()
        .map(|i| {
            let graph = CodeGraph::sample(params, seeds::mix(seed, 0x5e7, i as u64))?;
            let mut per_offset = vec![0u32; w];
            for (a, b) in enumerate_size2(&graph) {
                let k = params.vn_position(b as usize) - params.vn_position(a as usize);
                per_offset[k] += 1;
            }
            Ok(per_offset)
        })
        .collect::<Result<_>>()?;
    let n = n_graphs as f64;
    let mut mean = vec![0.0; w];
    let mut se = vec![0.0; w];
    for k in 0..w {
        let sum: f64 = counts.iter().map(|c| c[k] as f64).sum();
        mean[k] = sum / n;
        let var: f64 = counts.iter().map(|c| (c[k] as f64 - mean[k]).powi(2)).sum::<f64>()
            / (n - 1.0).max(1.0);
        se[k] = (var / n).sqrt();
    }
    Ok(PairEmpirics { graphs: n_graphs, mean, se })
}

/// Predicted block-erasure probability in the error-floor region: the
/// expected number of size-2 stopping sets among the erased bits of a
/// length-`b` burst, averaged over the burst start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorEstimate {
    /// Requested burst length in positions.
    pub b: f64,
    /// Erased bits actually used: `floor(b*M)`.
    pub bits: usize,
    pub value: f64,
}

/// Error-floor estimate
/// `(1/M) * sum_{S=1}^{M} sum_{z} [ C(m_z,2) q_0 + sum_k m_z m_{z+k} q_k ]`
/// with `m_z` the per-position erased counts of a burst of `floor(b*M)`
/// bits starting at bit `S`.
///
/// Burst starts within the last couple of positions of the chain are not
/// treated specially: the sum runs over a start within one position,
/// which ignores an `O(1/L)` truncation correction at the chain end.
pub fn error_floor_estimate(params: &EnsembleParams, b: f64) -> Result<FloorEstimate> {
    if !(b.is_finite() && b >= 0.0 && b < params.spatial_len as f64) {
        return Err(Error::parameter(format!(
            "burst length must lie in [0, L), got {b}"
        )));
    }
    let m = params.nodes_per_pos;
    let bits = (b * m as f64 + 1e-9).floor() as usize;
    if bits == 0 {
        return Ok(FloorEstimate { b, bits, value: 0.0 });
    }
    let stats = pair_probability(params);
    let w = params.w;
    let span = b.ceil() as usize + 1;
    let mut total = 0.0;
    for start in 1..=m {
        let counts = erased_counts(bits, start, m, span + w)?;
        for z in 0..span {
            let mz = counts[z] as f64;
            let mut inner = mz * (mz - 1.0) / 2.0 * stats.q[0];
            for k in 1..w {
                inner += mz * counts[z + k] as f64 * stats.q[k];
            }
            total += inner;
        }
    }
    Ok(FloorEstimate { b, bits, value: total / m as f64 })
}

/// The floor estimate read as an approximate lower bound on block-erasure
/// probability: decoding fails whenever the burst erases a stopping set,
/// so `P_B >= P(at least one erased size-2 set) ~ E[count]` when the
/// expected count is small.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorBound {
    pub estimate: FloorEstimate,
    pub interpretation: String,
}

/// Wraps [`error_floor_estimate`] with its reading as an approximate
/// lower bound on the block-erasure probability.
pub fn floor_lower_bound(params: &EnsembleParams, b: f64) -> Result<FloorBound> {
    let estimate = error_floor_estimate(params, b)?;
    Ok(FloorBound {
        estimate,
        interpretation: "approximate lower bound on block-erasure probability: decoding fails \
                         whenever a size-2 stopping set is fully erased, and for small expected \
                         counts P(count >= 1) ~ E[count]"
            .to_string(),
    })
}
