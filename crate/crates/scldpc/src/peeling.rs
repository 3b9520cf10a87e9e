//! Finite-length erasure decoding by peeling, and the Monte Carlo sweep
//! machinery that estimates block-erasure probability over a grid of
//! burst lengths.
//!
//! Peeling repeatedly resolves any erased bit that some parity check sees
//! as its only erased neighbor; it terminates at the unique maximal
//! stopping set contained in the erased set, so decoding succeeds exactly
//! when the residual is empty. Sweeps draw a fresh code instance per
//! trial by default, stop a grid point once a target number of decoding
//! failures has been observed (or a trial cap is hit), and derive every
//! trial's RNG stream from `(seed, grid index, trial index)` so that
//! results are bit-reproducible regardless of worker count, batch size,
//! or checkpoint/resume boundaries.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::burst::{apply_background_erasures, sample_burst_pattern};
use crate::ensemble::{CodeGraph, EnsembleParams};
use crate::seeds;
use crate::stopping_sets::error_floor_estimate;
use crate::{Error, Result};

/// Outcome of peeling one erasure pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeelOutcome {
    /// Unresolved erased variable nodes (sorted ascending); the maximal
    /// stopping set inside the erased set.
    pub residual: Vec<u32>,
    /// True iff the residual is empty.
    pub success: bool,
}

/// Peels the erasure pattern on the graph: while some check node has
/// exactly one erased neighbor, that neighbor is resolved. Linear in the
/// number of edges.
pub fn peel(graph: &CodeGraph, erased: &[bool]) -> PeelOutcome {
    let params = graph.params();
    assert_eq!(erased.len(), params.vn_count(), "one erasure flag per variable node");
    let mut erased_now = erased.to_vec();
    let nc = params.cn_count();
    let mut deg = vec![0u32; nc];
    for (v, &e) in erased_now.iter().enumerate() {
        if e {
            for &c in graph.vn_neighbors(v) {
                deg[c as usize] += 1;
            }
        }
    }
    let mut queue: VecDeque<u32> =
        (0..nc as u32).filter(|&c| deg[c as usize] == 1).collect();
    while let Some(c) = queue.pop_front() {
        if deg[c as usize] != 1 {
            continue; // stale entry; the neighbor was resolved meanwhile
        }
        let v = *graph
            .cn_neighbors(c as usize)
            .iter()
            .find(|&&v| erased_now[v as usize])
            .expect("degree-1 check must have an erased neighbor");
        erased_now[v as usize] = false;
        for &c2 in graph.vn_neighbors(v as usize) {
            deg[c2 as usize] -= 1;
            if deg[c2 as usize] == 1 {
                queue.push_back(c2);
            }
        }
    }
    let residual: Vec<u32> =
        (0..erased_now.len() as u32).filter(|&v| erased_now[v as usize]).collect();
    let success = residual.is_empty();
    PeelOutcome { residual, success }
}

/// True iff two residual variable nodes share their full check
/// neighborhood, i.e. the residual contains a size-2 stopping set.
pub fn residual_contains_pair(graph: &CodeGraph, residual: &[u32]) -> bool {
    let mut keys: Vec<&[u32]> =
        residual.iter().map(|&v| graph.vn_neighbors(v as usize)).collect();
    keys.sort_unstable();
    keys.windows(2).any(|p| p[0] == p[1])
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(failures: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // At the boundaries the bound is exact; don't leak rounding residue.
    let lo = if failures == 0 { 0.0 } else { ((center - half) / denom).max(0.0) };
    let hi = if failures == trials { 1.0 } else { ((center + half) / denom).min(1.0) };
    (lo, hi)
}

/// Monte Carlo sweep configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: EnsembleParams,
    /// Burst lengths in positions; each `b*M` must be integral.
    pub b_grid: Vec<f64>,
    /// Background erasure rate applied outside the burst.
    pub eps: f64,
    /// Stop a grid point after this many decoding failures.
    pub target_failures: u64,
    /// Hard trial cap per grid point; hitting it censors the point.
    pub max_trials: u64,
    pub seed: u64,
    /// Draw a fresh code instance for every trial (ensemble average);
    /// false fixes one instance per sweep.
    pub resample_code_per_trial: bool,
    /// Trials dispatched per parallel batch; affects scheduling only,
    /// never results.
    pub batch_size: u64,
}

impl SimConfig {
    pub fn new(params: EnsembleParams, b_grid: Vec<f64>, seed: u64) -> Self {
        SimConfig {
            params,
            b_grid,
            eps: 0.0,
            target_failures: 400,
            max_trials: 10_000_000,
            seed,
            resample_code_per_trial: true,
            batch_size: 512,
        }
    }

    fn burst_bits(&self, b: f64) -> Result<usize> {
        let m = self.params.nodes_per_pos as f64;
        let bits = b * m;
        if !(b >= 0.0 && b <= self.params.spatial_len as f64) {
            return Err(Error::parameter(format!(
                "burst length must lie in [0, L], got {b}"
            )));
        }
        if (bits - bits.round()).abs() > 1e-6 {
            return Err(Error::parameter(format!(
                "burst length {b} does not give an integral bit count (b*M = {bits})"
            )));
        }
        Ok(bits.round() as usize)
    }

    fn validate(&self) -> Result<Vec<usize>> {
        if self.b_grid.is_empty() {
            return Err(Error::parameter("burst-length grid must be nonempty".to_string()));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::parameter(format!(
                "background erasure rate must be in [0,1), got {}",
                self.eps
            )));
        }
        if self.target_failures == 0 || self.max_trials == 0 || self.batch_size == 0 {
            return Err(Error::parameter(
                "target failures, trial cap, and batch size must be positive".to_string(),
            ));
        }
        self.b_grid.iter().map(|&b| self.burst_bits(b)).collect()
    }
}

/// Final tally for one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub b: f64,
    pub bits: usize,
    pub trials: u64,
    pub failures: u64,
    /// Failures whose residual contains a size-2 stopping set.
    pub failures_with_pair: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// False iff the point was censored by `max_trials`.
    pub reached_target: bool,
}

/// Resumable progress of one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointProgress {
    pub b: f64,
    pub bits: usize,
    /// Index of the next trial to run; doubles as the trial count so far.
    pub next_trial: u64,
    pub failures: u64,
    pub failures_with_pair: u64,
    pub done: bool,
}

/// Serializable checkpoint of a sweep; feed back to [`resume_sweep`] to
/// continue an interrupted run with identical results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepState {
    pub config: SimConfig,
    pub points: Vec<PointProgress>,
}

impl SweepState {
    fn fresh(config: &SimConfig, bits: &[usize]) -> SweepState {
        SweepState {
            config: config.clone(),
            points: config
                .b_grid
                .iter()
                .zip(bits)
                .map(|(&b, &bits)| PointProgress {
                    b,
                    bits,
                    next_trial: 0,
                    failures: 0,
                    failures_with_pair: 0,
                    done: false,
                })
                .collect(),
        }
    }

    fn finish(&self) -> Vec<SweepPoint> {
        self.points
            .iter()
            .map(|p| {
                let (ci_lo, ci_hi) = wilson_interval(p.failures, p.next_trial);
                SweepPoint {
                    b: p.b,
                    bits: p.bits,
                    trials: p.next_trial,
                    failures: p.failures,
                    failures_with_pair: p.failures_with_pair,
                    p_hat: if p.next_trial == 0 {
                        0.0
                    } else {
                        p.failures as f64 / p.next_trial as f64
                    },
                    ci_lo,
                    ci_hi,
                    reached_target: p.failures >= self.config.target_failures,
                }
            })
            .collect()
    }
}

struct TrialResult {
    failed: bool,
    has_pair: bool,
}

/// One decoding trial: draw the burst (plus background erasures) and peel.
/// Returns the decoding outcome; `graph` fixes the code instance, or pass
/// `None` to sample a fresh one from the trial's RNG stream.
fn trial(
    config: &SimConfig,
    fixed_graph: Option<&CodeGraph>,
    bits: usize,
    grid_idx: u64,
    trial_idx: u64,
) -> Result<TrialResult> {
    let stream = seeds::mix(config.seed, grid_idx, trial_idx);
    let mut rng = ChaCha12Rng::seed_from_u64(stream);
    let sampled;
    let graph = match fixed_graph {
        Some(g) => g,
        None => {
            sampled = CodeGraph::sample_with_rng(&config.params, stream, &mut rng)?;
            &sampled
        }
    };
    let mut erased = if bits == 0 {
        vec![false; config.params.vn_count()]
    } else {
        sample_burst_pattern(&config.params, bits, &mut rng)?.1
    };
    apply_background_erasures(&mut erased, config.eps, &mut rng);
    let outcome = peel(graph, &erased);
    let has_pair = !outcome.success && residual_contains_pair(graph, &outcome.residual);
    Ok(TrialResult { failed: !outcome.success, has_pair })
}

/// Runs one decoding trial on a fixed graph with an explicit RNG; exposed
/// for targeted experiments. `bits` is the burst length in bits.
pub fn run_trial(
    graph: &CodeGraph,
    bits: usize,
    eps: f64,
    rng: &mut impl rand::Rng,
) -> Result<PeelOutcome> {
    let mut erased = if bits == 0 {
        vec![false; graph.params().vn_count()]
    } else {
        sample_burst_pattern(graph.params(), bits, rng)?.1
    };
    apply_background_erasures(&mut erased, eps, rng);
    Ok(peel(graph, &erased))
}

fn advance_point(
    config: &SimConfig,
    fixed_graph: Option<&CodeGraph>,
    grid_idx: u64,
    point: &mut PointProgress,
) -> Result<()> {
    let lo = point.next_trial;
    let hi = (lo + config.batch_size).min(config.max_trials);
    let results: Vec<TrialResult> = (lo..hi)
        .into_par_iter()
        .map(|t| trial(config, fixed_graph, point.bits, grid_idx, t))
        .collect::<Result<_>>()?;
    // Commit strictly in trial order and cut at the exact trial where the
    // failure target is met, so the tally never depends on batching.
    point.next_trial = hi;
    for (i, r) in results.iter().enumerate() {
        if r.failed {
            point.failures += 1;
            if r.has_pair {
                point.failures_with_pair += 1;
            }
            if point.failures >= config.target_failures {
                point.next_trial = lo + i as u64 + 1;
                point.done = true;
                return Ok(());
            }
        }
    }
    if point.next_trial >= config.max_trials {
        point.done = true; // censored
    }
    Ok(())
}

fn drive(
    mut state: SweepState,
    mut on_batch: impl FnMut(&SweepState),
) -> Result<(Vec<SweepPoint>, SweepState)> {
    let config = state.config.clone();
    let fixed_graph = if config.resample_code_per_trial {
        None
    } else {
        Some(CodeGraph::sample(&config.params, seeds::mix(config.seed, u64::MAX, 0))?)
    };
    for grid_idx in 0..state.points.len() {
        while !state.points[grid_idx].done {
            let mut point = state.points[grid_idx];
            advance_point(&config, fixed_graph.as_ref(), grid_idx as u64, &mut point)?;
            state.points[grid_idx] = point;
            on_batch(&state);
        }
    }
    Ok((state.finish(), state))
}

/// Runs the full sweep to completion.
pub fn run_sweep(config: &SimConfig) -> Result<Vec<SweepPoint>> {
    let bits = config.validate()?;
    Ok(drive(SweepState::fresh(config, &bits), |_| {})?.0)
}

/// Runs the sweep, invoking `on_batch` with the current state after every
/// committed batch (for checkpointing).
pub fn run_sweep_with_checkpoints(
    config: &SimConfig,
    on_batch: impl FnMut(&SweepState),
) -> Result<(Vec<SweepPoint>, SweepState)> {
    let bits = config.validate()?;
    drive(SweepState::fresh(config, &bits), on_batch)
}

/// Continues a checkpointed sweep; the result is identical to an
/// uninterrupted run of the same configuration.
pub fn resume_sweep(
    state: SweepState,
    on_batch: impl FnMut(&SweepState),
) -> Result<(Vec<SweepPoint>, SweepState)> {
    state.config.validate()?;
    if state.points.len() != state.config.b_grid.len() {
        return Err(Error::parameter(
            "checkpoint does not match its own grid".to_string(),
        ));
    }
    drive(state, on_batch)
}

/// One row of the floor-versus-simulation comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorComparison {
    pub b: f64,
    pub trials: u64,
    pub failures: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub floor_estimate: f64,
    /// `p_hat / floor_estimate`; NaN when the estimate is zero.
    pub ratio: f64,
    /// True iff the analytic estimate lies inside the simulated 95% CI.
    pub ci_overlaps_floor: bool,
}

/// Joins sweep results with the analytic error-floor estimate per burst
/// length.
pub fn floor_vs_sim(
    params: &EnsembleParams,
    points: &[SweepPoint],
) -> Result<Vec<FloorComparison>> {
    points
        .iter()
        .map(|p| {
            let floor = error_floor_estimate(params, p.b)?.value;
            Ok(FloorComparison {
                b: p.b,
                trials: p.trials,
                failures: p.failures,
                p_hat: p.p_hat,
                ci_lo: p.ci_lo,
                ci_hi: p.ci_hi,
                floor_estimate: floor,
                ratio: if floor > 0.0 { p.p_hat / floor } else { f64::NAN },
                ci_overlaps_floor: p.ci_lo <= floor && floor <= p.ci_hi,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stopping_sets::{enumerate_size2, is_stopping_set};
    use rand::Rng;

    fn small_params() -> EnsembleParams {
        EnsembleParams::new(3, 6, 3, 12, 16).unwrap()
    }

    /// Reference peeling by simultaneous rounds: each round removes every
    /// erased node that some check sees alone, all at once. Confluence of
    /// peeling makes this equal to the queue-driven decoder.
    fn pruning_oracle(graph: &CodeGraph, erased: &[bool]) -> Vec<u32> {
        let params = graph.params();
        let mut er = erased.to_vec();
        loop {
            let mut deg = vec![0u32; params.cn_count()];
            for (v, &e) in er.iter().enumerate() {
                if e {
                    for &c in graph.vn_neighbors(v) {
                        deg[c as usize] += 1;
                    }
                }
            }
            let mut removed = false;
            let mut next = er.clone();
            for c in 0..params.cn_count() {
                if deg[c] == 1 {
                    let v = *graph
                        .cn_neighbors(c)
                        .iter()
                        .find(|&&v| er[v as usize])
                        .unwrap();
                    if next[v as usize] {
                        next[v as usize] = false;
                        removed = true;
                    }
                }
            }
            er = next;
            if !removed {
                break;
            }
        }
        (0..er.len() as u32).filter(|&v| er[v as usize]).collect()
    }

    /// Peeling variant that resolves a pseudo-randomly chosen degree-1
    /// check at every step instead of queue order.
    fn random_order_peel(graph: &CodeGraph, erased: &[bool], mut pick: impl FnMut(usize) -> usize) -> Vec<u32> {
        let params = graph.params();
        let mut er = erased.to_vec();
        let mut deg = vec![0u32; params.cn_count()];
        for (v, &e) in er.iter().enumerate() {
            if e {
                for &c in graph.vn_neighbors(v) {
                    deg[c as usize] += 1;
                }
            }
        }
        loop {
            let ones: Vec<usize> = (0..params.cn_count()).filter(|&c| deg[c] == 1).collect();
            if ones.is_empty() {
                break;
            }
            let c = ones[pick(ones.len())];
            let v = *graph.cn_neighbors(c).iter().find(|&&v| er[v as usize]).unwrap();
            er[v as usize] = false;
            for &c2 in graph.vn_neighbors(v as usize) {
                deg[c2 as usize] -= 1;
            }
        }
        (0..er.len() as u32).filter(|&v| er[v as usize]).collect()
    }

    #[test]
    fn empty_erasure_peels_to_success() {
        let g = CodeGraph::sample(&small_params(), 1).unwrap();
        let out = peel(&g, &vec![false; small_params().vn_count()]);
        assert!(out.success);
        assert!(out.residual.is_empty());
    }

    #[test]
    fn queue_decoder_matches_the_pruning_oracle() {
        let params = small_params();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for trial in 0..2000 {
            let g = CodeGraph::sample(&params, trial).unwrap();
            let p = [0.1, 0.2, 0.3, 0.4, 0.5][trial as usize % 5];
            let erased: Vec<bool> =
                (0..params.vn_count()).map(|_| rng.gen::<f64>() < p).collect();
            let fast = peel(&g, &erased);
            let slow = pruning_oracle(&g, &erased);
            assert_eq!(fast.residual, slow, "trial {trial}");
            assert_eq!(fast.success, slow.is_empty());
            if !fast.residual.is_empty() {
                assert!(is_stopping_set(&g, &fast.residual).unwrap());
            }
        }
    }

    #[test]
    fn removal_order_does_not_change_the_residual() {
        let params = small_params();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for trial in 0..200 {
            let g = CodeGraph::sample(&params, 1000 + trial).unwrap();
            let erased: Vec<bool> =
                (0..params.vn_count()).map(|_| rng.gen::<f64>() < 0.35).collect();
            let reference = peel(&g, &erased).residual;
            for _ in 0..3 {
                let shuffled = random_order_peel(&g, &erased, |n| rng.gen_range(0..n));
                assert_eq!(reference, shuffled, "trial {trial}");
            }
        }
    }

    #[test]
    fn erased_stopping_pairs_are_exactly_the_residual() {
        let params = EnsembleParams::new(3, 6, 3, 100, 64).unwrap();
        let mut found = 0;
        for seed in 0..40 {
            let g = CodeGraph::sample(&params, seed).unwrap();
            let pairs = enumerate_size2(&g);
            let Some(&(a, b)) = pairs.first() else { continue };
            found += 1;
            let mut erased = vec![false; params.vn_count()];
            erased[a as usize] = true;
            erased[b as usize] = true;
            let out = peel(&g, &erased);
            assert!(!out.success);
            assert_eq!(out.residual, vec![a, b]);
            assert!(residual_contains_pair(&g, &out.residual));
            // Adding resolvable bits around the pair must not change it.
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            for _ in 0..30 {
                erased[rng.gen_range(0..params.vn_count())] = true;
            }
            erased[a as usize] = true;
            erased[b as usize] = true;
            let out = peel(&g, &erased);
            assert!(out.residual.contains(&a) && out.residual.contains(&b));
            if found >= 5 {
                break;
            }
        }
        assert!(found >= 3, "expected several graphs with size-2 sets, found {found}");
    }

    #[test]
    fn full_erasure_fails_whenever_every_check_sees_two_bits() {
        let params = small_params();
        for seed in 0..10 {
            let g = CodeGraph::sample(&params, seed).unwrap();
            let all = vec![true; params.vn_count()];
            let out = peel(&g, &all);
            let min_deg = (0..params.cn_count())
                .filter(|&c| g.cn_degree(c) > 0)
                .map(|c| g.cn_degree(c))
                .min()
                .unwrap();
            if min_deg >= 2 {
                assert!(!out.success, "seed {seed}: no degree-1 check can start peeling");
            }
            assert_eq!(out.success, out.residual.is_empty());
        }
    }

    #[test]
    fn wilson_interval_matches_reference_values() {
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 2e-4, "lo={lo}");
        assert!((hi - 0.5962).abs() < 2e-4, "hi={hi}");
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.036994).abs() < 1e-5, "hi={hi}");
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        // Basic shape: contains the point estimate, shrinks with n.
        let (lo1, hi1) = wilson_interval(40, 1000);
        let (lo2, hi2) = wilson_interval(400, 10_000);
        assert!(lo1 < 0.04 && 0.04 < hi1);
        assert!(hi2 - lo2 < hi1 - lo1);
    }

    #[test]
    fn zero_burst_zero_background_always_succeeds() {
        let mut config = SimConfig::new(small_params(), vec![0.0], 5);
        config.target_failures = 5;
        config.max_trials = 50;
        let points = run_sweep(&config).unwrap();
        assert_eq!(points[0].failures, 0);
        assert_eq!(points[0].trials, 50);
        assert!(!points[0].reached_target);
        assert_eq!(points[0].p_hat, 0.0);
    }

    #[test]
    fn sweeps_are_reproducible_and_batch_size_independent() {
        let params = small_params();
        let mut base = SimConfig::new(params, vec![1.0, 2.5], 99);
        base.target_failures = 25;
        base.max_trials = 20_000;
        let a = run_sweep(&base).unwrap();
        let b = run_sweep(&base).unwrap();
        assert_eq!(a, b);
        let mut odd = base.clone();
        odd.batch_size = 37;
        let c = run_sweep(&odd).unwrap();
        assert_eq!(a, c, "batch size must not affect tallies");
        assert!(a[0].reached_target);
        assert!(a[1].p_hat > 0.5, "b=2.5 is far above the recoverable length");
        assert!(a[0].ci_lo <= a[0].p_hat && a[0].p_hat <= a[0].ci_hi);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let params = small_params();
        let mut config = SimConfig::new(params, vec![1.5], 7);
        config.target_failures = 20;
        config.max_trials = 5000;
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = pool1.install(|| run_sweep(&config)).unwrap();
        let b = pool3.install(|| run_sweep(&config)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interrupted_sweeps_resume_to_identical_results() {
        let params = small_params();
        let mut config = SimConfig::new(params, vec![1.0, 2.0], 31);
        config.target_failures = 15;
        config.max_trials = 20_000;
        config.batch_size = 64;
        let (full, _) = run_sweep_with_checkpoints(&config, |_| {}).unwrap();
        // Capture an early checkpoint, then restart from it.
        let mut snapshot: Option<SweepState> = None;
        let mut batches = 0;
        let _ = run_sweep_with_checkpoints(&config, |state| {
            batches += 1;
            if batches == 3 {
                snapshot = Some(state.clone());
            }
        })
        .unwrap();
        let snapshot = snapshot.expect("at least three batches");
        let json = serde_json::to_string(&snapshot).unwrap();
        let restored: SweepState = serde_json::from_str(&json).unwrap();
        let (resumed, _) = resume_sweep(restored, |_| {}).unwrap();
        assert_eq!(full, resumed);
    }

    #[test]
    fn fixed_code_mode_reuses_one_instance() {
        let params = small_params();
        let mut config = SimConfig::new(params, vec![1.0], 3);
        config.resample_code_per_trial = false;
        config.target_failures = 10;
        config.max_trials = 3000;
        let a = run_sweep(&config).unwrap();
        let b = run_sweep(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn floor_comparison_reports_overlap_flags() {
        let params = EnsembleParams::new(3, 6, 3, 12, 32).unwrap();
        let mut config = SimConfig::new(params, vec![0.0, 1.0], 17);
        config.target_failures = 60;
        config.max_trials = 40_000;
        let points = run_sweep(&config).unwrap();
        let rows = floor_vs_sim(&params, &points).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].floor_estimate, 0.0);
        assert!(rows[0].ratio.is_nan());
        assert!(rows[1].floor_estimate > 0.0);
        assert!(rows[1].p_hat > 0.0);
        // In the floor region the estimate and the simulation agree to
        // within a small factor even at tiny M.
        assert!(rows[1].ratio > 0.3 && rows[1].ratio < 3.0, "ratio {}", rows[1].ratio);
    }

    #[test]
    fn trial_helper_is_deterministic_for_a_fixed_stream() {
        let params = small_params();
        let g = CodeGraph::sample(&params, 8).unwrap();
        let mut rng1 = ChaCha12Rng::seed_from_u64(4);
        let mut rng2 = ChaCha12Rng::seed_from_u64(4);
        let a = run_trial(&g, 16, 0.0, &mut rng1).unwrap();
        let b = run_trial(&g, 16, 0.0, &mut rng2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let params = small_params();
        let empty = SimConfig::new(params, vec![], 1);
        assert!(run_sweep(&empty).is_err());
        let fractional = SimConfig::new(params, vec![0.03], 1); // 0.03*16 = 0.48 bits
        assert!(run_sweep(&fractional).is_err());
        let mut bad_eps = SimConfig::new(params, vec![1.0], 1);
        bad_eps.eps = 1.0;
        assert!(run_sweep(&bad_eps).is_err());
        let mut zero_target = SimConfig::new(params, vec![1.0], 1);
        zero_target.target_failures = 0;
        assert!(run_sweep(&zero_target).is_err());
    }
}
