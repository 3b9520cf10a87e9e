//! Scalar density evolution (DE) for erasure decoding of the coupled
//! ensemble under a burst-plus-background erasure profile.
//!
//! The chain state is the vector `x_z`, `z = 1..=L`, of average
//! erasure probabilities of messages leaving variable nodes at position
//! `z`; positions outside the chain are known (`x = 0`). One iteration is
//!
//! ```text
//! x'_z = eps_z * (1 - (1/w) * sum_{i<w} (1 - u_{z+i})^(dc-1))^(dv-1)
//! u_c  = (1/w) * sum_{j<w} x_{c-j}
//! ```
//!
//! started from all-ones and stopped when the mean absolute update falls
//! below `stop_tol`. On top of the iteration this module computes the
//! residual bit-error probability, its average over burst starts on a
//! `grid_step` grid, the maximum recoverable burst length as a bisection
//! in `b`, and the no-burst erasure threshold as a bisection in `eps`.

use serde::{Deserialize, Serialize};

use crate::burst::{burst_profile, ErasureProfile};
use crate::ensemble::EnsembleParams;
use crate::{Error, Result};

/// Chain geometry and node degrees used by density evolution. Unlike
/// [`EnsembleParams`] this carries no per-position node count: DE works in
/// the large-`M` limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    pub dv: usize,
    pub dc: usize,
    pub w: usize,
    pub spatial_len: usize,
}

impl ChainParams {
    pub fn new(dv: usize, dc: usize, w: usize, spatial_len: usize) -> Result<Self> {
        if dv < 2 {
            return Err(Error::parameter(format!("variable degree must be at least 2, got {dv}")));
        }
        if dc <= dv {
            return Err(Error::parameter(format!(
                "check degree must exceed variable degree, got dv={dv}, dc={dc}"
            )));
        }
        if w < 2 {
            return Err(Error::parameter(format!("coupling width must be at least 2, got {w}")));
        }
        if spatial_len <= w {
            return Err(Error::parameter(format!(
                "chain length must exceed the coupling width, got L={spatial_len}, w={w}"
            )));
        }
        Ok(ChainParams { dv, dc, w, spatial_len })
    }
}

impl From<&EnsembleParams> for ChainParams {
    fn from(p: &EnsembleParams) -> Self {
        ChainParams { dv: p.dv, dc: p.dc, w: p.w, spatial_len: p.spatial_len }
    }
}

/// Tolerances and grids controlling DE runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeControls {
    /// Mean absolute per-position update below which a run is converged.
    pub stop_tol: f64,
    /// Iteration cap; runs that hit it are flagged, never silently cut.
    pub max_iters: usize,
    /// Spacing of the burst-start grid used for averages over `s`.
    pub grid_step: f64,
    /// Residual bit-error probability below which a run counts as
    /// recovered.
    pub success_tol: f64,
}

impl Default for DeControls {
    fn default() -> Self {
        DeControls { stop_tol: 1e-5, max_iters: 100_000, grid_step: 1e-3, success_tol: 1e-6 }
    }
}

impl DeControls {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.stop_tol > 0.0 && self.success_tol > 0.0) {
            return Err(Error::parameter("tolerances must be positive".to_string()));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::parameter(format!(
                "grid step must lie in (0, 1], got {}",
                self.grid_step
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::parameter("iteration cap must be positive".to_string()));
        }
        Ok(())
    }
}

/// Result of a single DE run.
#[derive(Clone, Debug)]
pub struct DeState {
    /// Final message-erasure probabilities `x_z`, index `z-1`.
    pub x: Vec<f64>,
    /// Number of iterations performed.
    pub iterations: usize,
    /// Whether the stopping criterion was met before `max_iters`.
    pub converged: bool,
}

/// Average of `Pe` over the burst-start grid.
#[derive(Clone, Copy, Debug)]
pub struct StartAverage {
    pub pe: f64,
    pub grid_points: usize,
    /// False if any contributing run hit the iteration cap.
    pub all_converged: bool,
}

/// Output of the maximum-recoverable-burst bisection.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BurstScan {
    pub b_bp: f64,
    /// The background erasure rate alone already defeats the decoder, so no
    /// burst at all is recoverable.
    pub above_threshold: bool,
    /// The bracket expansion hit the chain length while still recoverable.
    pub hit_bracket_cap: bool,
    pub all_converged: bool,
}

/// Output of the no-burst erasure-threshold bisection.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub threshold: f64,
    pub all_converged: bool,
}

/// One DE sweep over `z in [z_lo, z_hi]` (0-based). Check-node factors are
/// written into `g` for the touched window; `next[z]` receives the updated
/// values, and the summed absolute change over the range is returned.
/// Positions outside the range are not written.
fn sweep(
    chain: &ChainParams,
    eps: &[f64],
    x: &[f64],
    next: &mut [f64],
    g: &mut [f64],
    z_lo: usize,
    z_hi: usize,
) -> f64 {
    let w = chain.w;
    let l = chain.spatial_len;
    let wf = w as f64;
    let dc1 = (chain.dc - 1) as i32;
    let dv1 = (chain.dv - 1) as i32;
    let c_hi = (z_hi + w - 1).min(l + w - 2);
    for (c, gc) in g.iter_mut().enumerate().take(c_hi + 1).skip(z_lo) {
        let j_lo = c.saturating_sub(w - 1);
        let j_hi = c.min(l - 1);
        let mut s = 0.0;
        for &xj in &x[j_lo..=j_hi] {
            s += xj;
        }
        *gc = (1.0 - s / wf).powi(dc1);
    }
    let mut diff = 0.0;
    for z in z_lo..=z_hi {
        let mut sg = 0.0;
        for gi in &g[z..z + w] {
            sg += gi;
        }
        let inner = (1.0 - sg / wf).max(0.0);
        let v = eps[z] * inner.powi(dv1);
        diff += (v - x[z]).abs();
        next[z] = v;
    }
    diff
}

/// One full DE iteration from the given state (pure; allocates the result).
pub fn de_step(chain: &ChainParams, profile: &ErasureProfile, x: &[f64]) -> Vec<f64> {
    let l = chain.spatial_len;
    assert_eq!(x.len(), l, "state length must equal the chain length");
    assert_eq!(profile.len(), l, "profile length must equal the chain length");
    let mut next = vec![0.0; l];
    let mut g = vec![0.0; l + chain.w - 1];
    sweep(chain, &profile.eps, x, &mut next, &mut g, 0, l - 1);
    next
}

/// Runs DE from the all-ones state until the mean absolute update drops
/// below `stop_tol` or `max_iters` is reached.
///
/// Positions with `eps_z = 0` are identically zero after the first sweep,
/// so later sweeps only touch the support of the profile; this is exact
/// and makes pure-burst (`eps = 0`) runs cost `O(b + w)` per iteration
/// rather than `O(L)`.
pub fn run_de(chain: &ChainParams, profile: &ErasureProfile, controls: &DeControls) -> DeState {
    let l = chain.spatial_len;
    assert_eq!(profile.len(), l, "profile length must equal the chain length");
    let eps = &profile.eps;
    let support_lo = eps.iter().position(|&e| e > 0.0);
    let support_hi = eps.iter().rposition(|&e| e > 0.0);
    let mut x = vec![1.0; l];
    let mut next = vec![0.0; l];
    let mut g = vec![0.0; l + chain.w - 1];
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=controls.max_iters {
        let (z_lo, z_hi) = if t == 1 {
            (0, l - 1)
        } else {
            match (support_lo, support_hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                _ => (0, l - 1),
            }
        };
        if t == 2 {
            // After the first sweep only the profile support can stay
            // nonzero; clear the stale all-ones buffer outside the range
            // that restricted sweeps will keep rewriting.
            next.fill(0.0);
        }
        let diff = sweep(chain, eps, &x, &mut next, &mut g, z_lo, z_hi);
        std::mem::swap(&mut x, &mut next);
        iterations = t;
        if diff / (l as f64) < controls.stop_tol {
            converged = true;
            break;
        }
    }
    DeState { x, iterations, converged }
}

/// Residual average bit-error probability of the state under the profile:
/// `(1/L) * sum_z eps_z * (1 - (1/w) sum_i (1 - u_{z+i})^(dc-1))^dv`.
pub fn bit_error_prob(chain: &ChainParams, profile: &ErasureProfile, x: &[f64]) -> f64 {
    let l = chain.spatial_len;
    assert_eq!(x.len(), l, "state length must equal the chain length");
    assert_eq!(profile.len(), l, "profile length must equal the chain length");
    let w = chain.w;
    let wf = w as f64;
    let dc1 = (chain.dc - 1) as i32;
    let dv = chain.dv as i32;
    let mut g = vec![0.0; l + w - 1];
    for (c, gc) in g.iter_mut().enumerate() {
        let j_lo = c.saturating_sub(w - 1);
        let j_hi = c.min(l - 1);
        let mut s = 0.0;
        for &xj in &x[j_lo..=j_hi] {
            s += xj;
        }
        *gc = (1.0 - s / wf).powi(dc1);
    }
    let mut pe = 0.0;
    for z in 0..l {
        let mut sg = 0.0;
        for gi in &g[z..z + w] {
            sg += gi;
        }
        let inner = (1.0 - sg / wf).max(0.0);
        pe += profile.eps[z] * inner.powi(dv);
    }
    pe / l as f64
}

/// Order-independent sum: fixed pairwise reduction tree over the slice, so
/// averages are reproducible no matter how the inputs were produced.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub(crate) fn check_burst_args(chain: &ChainParams, b: f64, eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::parameter(format!("background erasure rate must be in [0,1), got {eps}")));
    }
    if !(b.is_finite() && b >= 0.0 && b <= chain.spatial_len as f64) {
        return Err(Error::parameter(format!(
            "burst length must lie in [0, L] = [0, {}], got {b}",
            chain.spatial_len
        )));
    }
    Ok(())
}

/// Burst-start grid `s = k * grid_step`, `k = 0..=floor((L-b)/step)`.
pub(crate) fn start_grid(chain: &ChainParams, b: f64, step: f64) -> Vec<f64> {
    let l = chain.spatial_len as f64;
    let k_max = ((l - b) / step + 1e-9).floor() as usize;
    (0..=k_max).map(|k| (k as f64 * step).min(l - b)).collect()
}

fn run_pe(chain: &ChainParams, b: f64, s: f64, eps: f64, controls: &DeControls) -> (f64, bool) {
    let profile =
        burst_profile(chain.spatial_len, b, s, eps).expect("grid start within [0, L-b]");
    let state = run_de(chain, &profile, controls);
    (bit_error_prob(chain, &profile, &state.x), state.converged)
}

/// Average residual bit-error probability over the burst-start grid
/// (rectangle rule). For `b = 0` the profile is start-independent and a
/// single run is performed.
pub fn avg_error_over_start(
    chain: &ChainParams,
    b: f64,
    eps: f64,
    controls: &DeControls,
) -> Result<StartAverage> {
    controls.validate()?;
    check_burst_args(chain, b, eps)?;
    if b == 0.0 {
        let (pe, converged) = run_pe(chain, 0.0, 0.0, eps, controls);
        return Ok(StartAverage { pe, grid_points: 1, all_converged: converged });
    }
    let grid = start_grid(chain, b, controls.grid_step);
    let results: Vec<(f64, bool)> =
        grid.iter().map(|&s| run_pe(chain, b, s, eps, controls)).collect();
    let pes: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(StartAverage {
        pe: pairwise_sum(&pes) / pes.len() as f64,
        grid_points: pes.len(),
        all_converged: results.iter().all(|r| r.1),
    })
}

/// One unit period of burst starts anchored at an interior integer
/// position: `s = a + k*delta` for `k = 0..1/delta`, with `a` the given
/// anchor clamped so every point satisfies `s <= L - b`. In the bulk the
/// recursion is translation invariant — the profile at `s + 1` is the
/// profile at `s` shifted by one position — so this restricted grid probes
/// the same start alignments as the full grid at a fraction of the cost;
/// `anchored_grid_matches_full_grid` validates the agreement. `delta` must
/// divide 1.
pub fn anchored_start_grid(
    chain: &ChainParams,
    b: f64,
    delta: f64,
    anchor: f64,
) -> Result<Vec<f64>> {
    let n = (1.0 / delta).round();
    if !(delta > 0.0 && delta <= 1.0 && (n * delta - 1.0).abs() < 1e-9) {
        return Err(Error::parameter(format!(
            "anchored grids require a step that divides 1, got {delta}"
        )));
    }
    let s_max = chain.spatial_len as f64 - b;
    let a = anchor.min(s_max - 1.0 + delta).floor().max(0.0);
    Ok((0..n as usize)
        .map(|k| a + k as f64 * delta)
        .filter(|&s| s <= s_max + 1e-9)
        .collect())
}

/// Recovery predicate over an explicit burst-start grid: true when the
/// grid-averaged `Pe` stays below `success_tol`.
///
/// Grid points with integer `s` are evaluated first — the empirically worst
/// starts — and the scan stops as soon as the partial (nonnegative) sum
/// already exceeds the success budget, which cannot change the decision.
fn recoverable_on_grid(
    chain: &ChainParams,
    b: f64,
    eps: f64,
    controls: &DeControls,
    grid: &[f64],
) -> Result<(bool, bool)> {
    let budget = controls.success_tol * grid.len() as f64;
    let is_integer = |s: f64| (s - s.round()).abs() < 1e-9;
    let ordered = grid
        .iter()
        .copied()
        .filter(|&s| is_integer(s))
        .chain(grid.iter().copied().filter(|&s| !is_integer(s)));
    let mut sum = 0.0;
    let mut all_converged = true;
    for s in ordered {
        let (pe, converged) = run_pe(chain, b, s, eps, controls);
        all_converged &= converged;
        sum += pe;
        if sum >= budget {
            return Ok((false, all_converged));
        }
    }
    Ok((true, all_converged))
}

fn burst_recoverable(
    chain: &ChainParams,
    b: f64,
    eps: f64,
    controls: &DeControls,
    anchor: Option<f64>,
) -> Result<(bool, bool)> {
    controls.validate()?;
    check_burst_args(chain, b, eps)?;
    if b == 0.0 {
        let (pe, converged) = run_pe(chain, 0.0, 0.0, eps, controls);
        return Ok((pe < controls.success_tol, converged));
    }
    let grid = match anchor {
        None => start_grid(chain, b, controls.grid_step),
        Some(a) => anchored_start_grid(chain, b, controls.grid_step, a)?,
    };
    recoverable_on_grid(chain, b, eps, controls, &grid)
}

/// Width of the final bisection bracket on the burst length.
pub(crate) const B_BRACKET_TOL: f64 = 0.005;

/// Bisection driver shared by the burst-length scans of every channel:
/// given the recovery predicate, brackets the largest recoverable `b` in
/// `[0, min(b_hi, L)]` (expanding `b_hi` while still recoverable) and
/// bisects to width `tol`. Convergence flags are the predicate's
/// business; this driver only tracks the bracket.
pub(crate) fn scan_max_burst(
    spatial_len: usize,
    default_hi: f64,
    b_hi: Option<f64>,
    tol: f64,
    check: &mut dyn FnMut(f64) -> Result<bool>,
) -> Result<(f64, bool, bool)> {
    let l_f = spatial_len as f64;
    if !check(0.0)? {
        return Ok((0.0, true, false));
    }
    let mut lo = 0.0;
    let mut hi = b_hi.unwrap_or(default_hi).min(l_f);
    while check(hi)? {
        lo = hi;
        if hi >= l_f {
            return Ok((l_f, false, true));
        }
        hi = (2.0 * hi).min(l_f);
    }
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        if check(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), false, false))
}

/// Maximum recoverable burst length at background rate `eps`: bisection of
/// the recovery predicate over `b`, starting from the bracket
/// `[0, b_hi]` (default `w`) and expanding `b_hi` while still recoverable.
pub fn max_burst_length(
    chain: &ChainParams,
    eps: f64,
    controls: &DeControls,
    b_hi: Option<f64>,
) -> Result<BurstScan> {
    max_burst_length_inner(chain, eps, controls, b_hi, None)
}

/// [`max_burst_length`] on the anchored one-period start grid (see
/// [`anchored_start_grid`]); used where full-grid scans are too expensive.
pub fn max_burst_length_anchored(
    chain: &ChainParams,
    eps: f64,
    controls: &DeControls,
    b_hi: Option<f64>,
    anchor: f64,
) -> Result<BurstScan> {
    max_burst_length_inner(chain, eps, controls, b_hi, Some(anchor))
}

fn max_burst_length_inner(
    chain: &ChainParams,
    eps: f64,
    controls: &DeControls,
    b_hi: Option<f64>,
    anchor: Option<f64>,
) -> Result<BurstScan> {
    let mut all_converged = true;
    let mut check = |b: f64| -> Result<bool> {
        let (rec, c) = burst_recoverable(chain, b, eps, controls, anchor)?;
        all_converged &= c;
        Ok(rec)
    };
    let (b_bp, above_threshold, hit_bracket_cap) =
        scan_max_burst(chain.spatial_len, chain.w as f64, b_hi, B_BRACKET_TOL, &mut check)?;
    Ok(BurstScan { b_bp, above_threshold, hit_bracket_cap, all_converged })
}

/// No-burst erasure threshold of the coupled chain: bisection on the
/// background rate of the `b = 0` recovery predicate, to bracket width
/// `bracket_tol`.
pub fn uniform_threshold(
    chain: &ChainParams,
    controls: &DeControls,
    bracket_tol: f64,
) -> Result<ThresholdScan> {
    if !(bracket_tol > 0.0) {
        return Err(Error::parameter("bracket tolerance must be positive".to_string()));
    }
    let mut all_converged = true;
    let mut lo = 0.0;
    let mut hi = 1.0 - 1e-9;
    let (rec, conv) = burst_recoverable(chain, 0.0, hi, controls, None)?;
    all_converged &= conv;
    if rec {
        return Ok(ThresholdScan { threshold: hi, all_converged });
    }
    while hi - lo >= bracket_tol {
        let mid = 0.5 * (lo + hi);
        let (rec, conv) = burst_recoverable(chain, 0.0, mid, controls, None)?;
        all_converged &= conv;
        if rec {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdScan { threshold: 0.5 * (lo + hi), all_converged })
}

/// One step of uncoupled scalar DE for the `(dv, dc)` ensemble at erasure
/// rate `eps`: `y' = eps * (1 - (1-y)^(dc-1))^(dv-1)`.
pub fn uncoupled_step(y: f64, eps: f64, dv: usize, dc: usize) -> f64 {
    eps * (1.0 - (1.0 - y).powi((dc - 1) as i32)).powi((dv - 1) as i32)
}

fn uncoupled_recovers(eps: f64, dv: usize, dc: usize) -> bool {
    let mut y = 1.0;
    for _ in 0..200_000 {
        let y2 = uncoupled_step(y, eps, dv, dc);
        if y2 < 1e-12 {
            return true;
        }
        if y - y2 < 1e-15 {
            return false;
        }
        y = y2;
    }
    false
}

/// Erasure threshold of the uncoupled `(dv, dc)` ensemble by bisection of
/// the scalar recursion, to a bracket width of `1e-6`.
pub fn uncoupled_bp_threshold(dv: usize, dc: usize) -> Result<f64> {
    if dv < 2 || dc <= dv {
        return Err(Error::parameter(format!(
            "degrees must satisfy 2 <= dv < dc, got dv={dv}, dc={dc}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while hi - lo >= 1e-6 {
        let mid = 0.5 * (lo + hi);
        if uncoupled_recovers(mid, dv, dc) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Coupling-width bounds derived from the uncoupled threshold `e`:
/// `ceil(1/e)` is the smallest width at which a unit burst can possibly be
/// recovered (below it, a fully erased position reduces to uncoupled DE
/// above its threshold), and `ceil((k+1)/e)` is a width sufficient — but
/// not tight — to recover every burst of length up to `k`.
pub fn w_conditions(dv: usize, dc: usize, k: usize) -> Result<(usize, usize)> {
    if k == 0 {
        return Err(Error::parameter("burst-length bound k must be positive".to_string()));
    }
    let e = uncoupled_bp_threshold(dv, dc)?;
    let necessary = (1.0 / e).ceil() as usize;
    let sufficient = ((k + 1) as f64 / e).ceil() as usize;
    Ok((necessary, sufficient))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain36(l: usize) -> ChainParams {
        ChainParams::new(3, 6, 3, l).unwrap()
    }

    fn coarse(step: f64) -> DeControls {
        DeControls { grid_step: step, ..DeControls::default() }
    }

    #[test]
    fn all_zero_profile_steps_to_zero() {
        let chain = chain36(12);
        let profile = ErasureProfile { eps: vec![0.0; 12] };
        let next = de_step(&chain, &profile, &vec![1.0; 12]);
        assert!(next.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_from_all_ones_reproduces_the_profile_at_interior_positions() {
        let chain = chain36(20);
        let profile = burst_profile(20, 1.3, 6.4, 0.21).unwrap();
        let next = de_step(&chain, &profile, &vec![1.0; 20]);
        // Interior positions see fully saturated windows, so the
        // check-node factor vanishes and the update returns eps_z.
        for z in chain.w..=20 - chain.w + 1 {
            assert!(
                (next[z - 1] - profile.get(z as isize)).abs() < 1e-15,
                "z={z}: {} vs {}",
                next[z - 1],
                profile.get(z as isize)
            );
        }
    }

    #[test]
    fn iterates_decrease_monotonically_and_stay_in_unit_range() {
        let chain = chain36(18);
        let profile = burst_profile(18, 2.2, 3.7, 0.3).unwrap();
        let mut x = vec![1.0; 18];
        for _ in 0..300 {
            let next = de_step(&chain, &profile, &x);
            for z in 0..18 {
                assert!((0.0..=1.0).contains(&next[z]));
                assert!(next[z] <= x[z] + 1e-15);
            }
            x = next;
        }
    }

    #[test]
    fn single_position_burst_follows_the_uncoupled_recursion() {
        // A unit burst at integer start with no background reduces, at the
        // burst position, to uncoupled DE at erasure rate 1/w:
        // x_z* = w * y with y' = (1/w)(1 - (1-y)^(dc-1))^(dv-1), y0 = 1.
        for (dv, dc, w) in [(3, 6, 3), (3, 6, 4), (4, 8, 4)] {
            let l = 4 * w;
            let chain = ChainParams::new(dv, dc, w, l).unwrap();
            let s = (l / 2) as f64;
            let profile = burst_profile(l, 1.0, s, 0.0).unwrap();
            let z_star = l / 2; // 0-based index of position s+1
            let mut x = vec![1.0; l];
            let mut y = 1.0;
            for t in 1..=200 {
                x = de_step(&chain, &profile, &x);
                y = uncoupled_step(y, 1.0 / w as f64, dv, dc);
                assert!(
                    (x[z_star] - w as f64 * y).abs() < 1e-12,
                    "(dv={dv},dc={dc},w={w}) t={t}: {} vs {}",
                    x[z_star],
                    w as f64 * y
                );
            }
        }
    }

    #[test]
    fn restricted_sweeps_match_full_sweeps_exactly() {
        // run_de's support-restricted iteration must agree with naive
        // full-range stepping bit for bit.
        let chain = chain36(30);
        let profile = burst_profile(30, 1.7, 11.6, 0.0).unwrap();
        let controls = DeControls { max_iters: 57, stop_tol: 0.0, ..DeControls::default() };
        let fast = run_de(&chain, &profile, &controls);
        let mut x = vec![1.0; 30];
        for _ in 0..57 {
            x = de_step(&chain, &profile, &x);
        }
        assert_eq!(fast.iterations, 57);
        for z in 0..30 {
            assert_eq!(fast.x[z], x[z], "z={z}");
        }
    }

    #[test]
    fn error_probability_matches_a_straight_line_reimplementation() {
        let chain = ChainParams::new(4, 8, 3, 14).unwrap();
        let profile = burst_profile(14, 1.9, 4.3, 0.17).unwrap();
        let mut x = vec![1.0; 14];
        for _ in 0..5 {
            x = de_step(&chain, &profile, &x);
        }
        let (l, w) = (14usize, chain.w);
        let xat = |z: isize| {
            if z < 1 || z > l as isize {
                0.0
            } else {
                x[z as usize - 1]
            }
        };
        let mut expected = 0.0;
        for z in 1..=l as isize {
            let mut outer = 0.0;
            for i in 0..w as isize {
                let mut inner = 0.0;
                for j in 0..w as isize {
                    inner += xat(z + i - j);
                }
                outer += (1.0 - inner / w as f64).powi(chain.dc as i32 - 1);
            }
            expected += profile.get(z) * (1.0 - outer / w as f64).powi(chain.dv as i32);
        }
        expected /= l as f64;
        let got = bit_error_prob(&chain, &profile, &x);
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn fully_erased_all_ones_state_has_unit_error_probability() {
        let chain = chain36(12);
        let profile = ErasureProfile { eps: vec![1.0; 12] };
        // With x = 1 everywhere the interior factors vanish; boundary
        // windows leak a little, so restrict to a wide-interior check by
        // feeding an all-ones chain long enough that Pe ~ 1.
        let pe = bit_error_prob(&chain, &profile, &vec![1.0; 12]);
        assert!(pe > 0.8 && pe <= 1.0);
        let zero = bit_error_prob(&chain, &profile, &vec![0.0; 12]);
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn zero_burst_average_equals_single_run() {
        let chain = chain36(15);
        let controls = coarse(0.5);
        let avg = avg_error_over_start(&chain, 0.0, 0.35, &controls).unwrap();
        let profile = burst_profile(15, 0.0, 0.0, 0.35).unwrap();
        let state = run_de(&chain, &profile, &controls);
        let pe = bit_error_prob(&chain, &profile, &state.x);
        assert_eq!(avg.grid_points, 1);
        assert_eq!(avg.pe, pe);
    }

    #[test]
    fn short_bursts_recover_and_long_bursts_do_not() {
        let chain = chain36(30);
        let controls = coarse(0.25);
        let short = avg_error_over_start(&chain, 1.0, 0.0, &controls).unwrap();
        assert!(short.pe < 1e-6, "b=1 must be recoverable, Pe={}", short.pe);
        let long = avg_error_over_start(&chain, 2.2, 0.0, &controls).unwrap();
        assert!(long.pe > 1e-4, "b=2.2 must fail, Pe={}", long.pe);
        let (rec, _) = burst_recoverable(&chain, 1.0, 0.0, &controls, None).unwrap();
        assert!(rec);
        let (rec, _) = burst_recoverable(&chain, 2.2, 0.0, &controls, None).unwrap();
        assert!(!rec);
    }

    #[test]
    fn iteration_cap_is_reported_as_non_convergence() {
        let chain = chain36(15);
        let controls = DeControls { max_iters: 3, ..DeControls::default() };
        let profile = burst_profile(15, 2.0, 5.0, 0.2).unwrap();
        let state = run_de(&chain, &profile, &controls);
        assert!(!state.converged);
        assert_eq!(state.iterations, 3);
        let capped = DeControls { max_iters: 3, grid_step: 1.0, ..DeControls::default() };
        let avg = avg_error_over_start(&chain, 2.0, 0.2, &capped).unwrap();
        assert!(!avg.all_converged);
    }

    #[test]
    fn uncoupled_thresholds_match_scan_oracle() {
        // Frozen values for the classic regular ensembles, cross-checked by
        // scanning the recovery predicate in steps of 1e-4 around the
        // bisection output.
        for (dv, dc, expect) in [(3, 6, 0.4294), (4, 8, 0.3834)] {
            let t = uncoupled_bp_threshold(dv, dc).unwrap();
            assert!((t - expect).abs() < 5e-4, "({dv},{dc}): {t}");
            assert!(uncoupled_recovers(t - 1e-4, dv, dc));
            assert!(!uncoupled_recovers(t + 1e-4, dv, dc));
        }
        let t = uncoupled_bp_threshold(2, 3).unwrap();
        assert!(t > 0.0 && t < 1.0);
    }

    #[test]
    fn width_conditions_match_hand_ceilings() {
        let (nec, suf) = w_conditions(3, 6, 1).unwrap();
        assert_eq!(nec, 3); // ceil(1/0.4294)
        assert_eq!(suf, 5); // ceil(2/0.4294)
        let (nec, _) = w_conditions(4, 8, 1).unwrap();
        assert_eq!(nec, 3); // ceil(1/0.3834)
    }

    #[test]
    fn nested_profiles_give_nested_trajectories_and_errors() {
        // A longer burst at the same start dominates a shorter one
        // pointwise at every iteration, hence also in Pe.
        let chain = chain36(20);
        let pa = burst_profile(20, 1.2, 5.3, 0.1).unwrap();
        let pb = burst_profile(20, 1.9, 5.3, 0.1).unwrap();
        let mut xa = vec![1.0; 20];
        let mut xb = vec![1.0; 20];
        for _ in 0..100 {
            xa = de_step(&chain, &pa, &xa);
            xb = de_step(&chain, &pb, &xb);
            for z in 0..20 {
                assert!(xb[z] >= xa[z] - 1e-15);
            }
        }
        assert!(
            bit_error_prob(&chain, &pb, &xb) >= bit_error_prob(&chain, &pa, &xa) - 1e-15
        );
    }

    #[test]
    fn integer_starts_are_at_least_as_bad_as_fractional_ones() {
        let chain = chain36(20);
        let controls = DeControls::default();
        for (b, s) in [(1.8, 0.3), (1.8, 4.7), (2.4, 6.5)] {
            let (pe_frac, _) = run_pe(&chain, b, s, 0.0, &controls);
            let (pe_int, _) = run_pe(&chain, b, s.ceil(), 0.0, &controls);
            assert!(
                pe_int >= pe_frac - 1e-9,
                "b={b}, s={s}: Pe({}) = {pe_int} < Pe({s}) = {pe_frac}",
                s.ceil()
            );
        }
    }

    #[test]
    fn burst_length_bisection_brackets_the_failure_boundary() {
        let chain = chain36(30);
        let controls = coarse(0.25);
        let scan = max_burst_length(&chain, 0.0, &controls, None).unwrap();
        assert!(!scan.above_threshold && !scan.hit_bracket_cap);
        assert!(
            scan.b_bp > 1.3 && scan.b_bp < 1.9,
            "(3,6,w=3) burst threshold ~1.61, got {}",
            scan.b_bp
        );
        let (rec, _) = burst_recoverable(&chain, scan.b_bp - 0.01, 0.0, &controls, None).unwrap();
        assert!(rec);
        let (rec, _) = burst_recoverable(&chain, scan.b_bp + 0.01, 0.0, &controls, None).unwrap();
        assert!(!rec);
    }

    #[test]
    fn background_above_threshold_reports_zero_burst_capacity() {
        let chain = chain36(30);
        let scan = max_burst_length(&chain, 0.6, &coarse(0.25), None).unwrap();
        assert!(scan.above_threshold);
        assert_eq!(scan.b_bp, 0.0);
    }

    #[test]
    fn uniform_threshold_sits_near_the_known_coupled_value() {
        let chain = chain36(50);
        let scan = uniform_threshold(&chain, &DeControls::default(), 2e-3).unwrap();
        assert!(
            scan.threshold > 0.45 && scan.threshold < 0.52,
            "coupled (3,6) threshold ~0.488, got {}",
            scan.threshold
        );
    }

    #[test]
    fn anchored_grid_matches_full_grid() {
        // Bulk translation invariance: restricting the start scan to one
        // unit period around an interior integer anchor must reproduce the
        // full-grid maximum burst length. This justifies using the anchored
        // grid for channels whose DE runs are expensive.
        let chain = ChainParams::new(3, 6, 3, 30).unwrap();
        let controls = DeControls { grid_step: 0.25, ..DeControls::default() };
        for eps in [0.0, 0.15] {
            let full = max_burst_length(&chain, eps, &controls, None).unwrap();
            let anchored =
                max_burst_length_anchored(&chain, eps, &controls, None, 15.0).unwrap();
            assert!(
                (full.b_bp - anchored.b_bp).abs() <= 2.0 * B_BRACKET_TOL,
                "eps={eps}: full {} vs anchored {}",
                full.b_bp,
                anchored.b_bp
            );
            assert_eq!(full.above_threshold, anchored.above_threshold);
        }
        let grid = anchored_start_grid(&chain, 1.5, 0.25, 15.0).unwrap();
        assert_eq!(grid, vec![15.0, 15.25, 15.5, 15.75]);
        // Anchor beyond the feasible range clamps so that s <= L - b.
        let clamped = anchored_start_grid(&chain, 2.0, 0.5, 40.0).unwrap();
        assert_eq!(clamped, vec![27.0, 27.5]);
        assert!(anchored_start_grid(&chain, 1.0, 0.3, 15.0).is_err());
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(ChainParams::new(1, 6, 3, 20).is_err());
        assert!(ChainParams::new(3, 3, 3, 20).is_err());
        assert!(ChainParams::new(3, 6, 1, 20).is_err());
        assert!(ChainParams::new(3, 6, 6, 5).is_err());
        let chain = chain36(20);
        assert!(avg_error_over_start(&chain, -1.0, 0.0, &DeControls::default()).is_err());
        assert!(avg_error_over_start(&chain, 1.0, 1.0, &DeControls::default()).is_err());
        let bad = DeControls { grid_step: 0.0, ..DeControls::default() };
        assert!(avg_error_over_start(&chain, 1.0, 0.0, &bad).is_err());
        assert!(w_conditions(3, 6, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn de_runs_converge_monotonically_on_random_bursts(
            b in 0.0f64..2.5,
            s_frac in 0.0f64..1.0,
            eps in 0.0f64..0.35,
        ) {
            let chain = chain36(16);
            let s = s_frac * (16.0 - b);
            let profile = burst_profile(16, b, s, eps).unwrap();
            let mut x = vec![1.0; 16];
            for _ in 0..60 {
                let next = de_step(&chain, &profile, &x);
                for z in 0..16 {
                    prop_assert!(next[z] <= x[z] + 1e-15);
                    prop_assert!((0.0..=1.0).contains(&next[z]));
                }
                x = next;
            }
            let pe = bit_error_prob(&chain, &profile, &x);
            prop_assert!((0.0..=1.0).contains(&pe));
        }
    }
}
