//! Quantized log-likelihood-ratio (LLR) density evolution for the coupled
//! chain over a binary-input AWGN channel whose received bits are
//! additionally erased with a position-dependent probability (the burst),
//! plus the BiAWGN capacity map used to compare burst thresholds against
//! the erasure channel at equal capacity loss.
//!
//! Densities live on a symmetric grid of LLR bins at multiples of
//! `bin_width` in `[-half_range, +half_range]` with two overflow masses at
//! `±∞`. The `±∞` masses are reserved for genuinely infinite beliefs
//! (known bits, exact channel tails): variable-node updates are discrete
//! convolutions whose finite out-of-range sums clip to the outermost
//! finite bins rather than escalating to `±∞`. A finite message, however
//! confident, must stay revisable by later evidence — promoting it to `-∞`
//! would make a wrong belief permanent, and the check-node rule (where
//! `±∞` acts as the identity) would then replicate that stuck mass across
//! the chain. Check-node updates apply the pairwise combining rule
//! `2·atanh(tanh(a/2)·tanh(b/2))` through a precomputed magnitude table,
//! folded left to right. Positions outside the chain contribute a point
//! mass at `+∞` (known bits), mirroring `x_z = 0` in the scalar module;
//! densities supported on `{0, +∞}` reproduce the scalar erasure recursion
//! exactly, which makes that module a full oracle for this one.

use libm::{erfc, log1p};
use serde::{Deserialize, Serialize};

use crate::burst::burst_profile;
use crate::de_scalar::{
    anchored_start_grid, check_burst_args, scan_max_burst, start_grid, BurstScan, ChainParams,
    DeControls,
};
use crate::{Error, Result};

/// Symmetric LLR quantization grid: bins at `i * bin_width` for
/// `i = -half_bins ..= half_bins`, plus overflow at `±∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantGrid {
    bin_width: f64,
    half_bins: usize,
}

impl QuantGrid {
    pub fn new(bin_width: f64, half_range: f64) -> Result<QuantGrid> {
        if !(bin_width.is_finite() && bin_width > 0.0 && half_range.is_finite()) {
            return Err(Error::parameter(format!(
                "bin width and half range must be positive finite, got {bin_width}, {half_range}"
            )));
        }
        let half_bins = (half_range / bin_width).round() as isize;
        if half_bins < 1 || half_bins > 60_000 {
            return Err(Error::parameter(format!(
                "half range / bin width must give between 1 and 60000 bins, got {half_bins}"
            )));
        }
        Ok(QuantGrid { bin_width, half_bins: half_bins as usize })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Number of bins on each side of zero (`m`).
    pub fn half_bins(&self) -> usize {
        self.half_bins
    }

    pub fn half_range(&self) -> f64 {
        self.half_bins as f64 * self.bin_width
    }

    /// Total number of finite bins, `2m + 1`.
    pub fn len(&self) -> usize {
        2 * self.half_bins + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// LLR value represented by mass index `k` (index `m` is LLR zero).
    pub fn value(&self, k: usize) -> f64 {
        (k as f64 - self.half_bins as f64) * self.bin_width
    }

    /// Mass index of the nearest bin to an in-range `llr`; panics outside
    /// the grid.
    pub fn bin_index_of(&self, llr: f64) -> usize {
        match self.bin_of(llr) {
            Bin::At(k) => k,
            _ => panic!("LLR {llr} lies outside the grid"),
        }
    }

    /// Mass index of the nearest bin, or the overflow for out-of-range
    /// values.
    fn bin_of(&self, llr: f64) -> Bin {
        let m = self.half_bins as f64;
        let i = (llr / self.bin_width).round();
        if i < -m {
            Bin::NegInf
        } else if i > m {
            Bin::PosInf
        } else {
            Bin::At((i + m) as usize)
        }
    }
}

impl Default for QuantGrid {
    /// Defaults chosen so that the (3,6) no-burst BiAWGN threshold in
    /// capacity-loss units is stable to ±0.002 under halving the bin
    /// width; quantization remains an exposed control because the
    /// resolution/runtime trade-off is steep.
    fn default() -> Self {
        QuantGrid::new(0.01, 30.0).expect("default grid is valid")
    }
}

enum Bin {
    NegInf,
    At(usize),
    PosInf,
}

/// Probability density of an LLR message on a [`QuantGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct LlrDensity {
    grid: QuantGrid,
    mass: Vec<f64>,
    neg_inf: f64,
    pos_inf: f64,
}

impl LlrDensity {
    fn zeros(grid: QuantGrid) -> LlrDensity {
        LlrDensity { grid, mass: vec![0.0; grid.len()], neg_inf: 0.0, pos_inf: 0.0 }
    }

    /// Unit point mass at the bin nearest `llr` (`±∞` supported).
    pub fn point_mass(grid: QuantGrid, llr: f64) -> LlrDensity {
        let mut d = LlrDensity::zeros(grid);
        match grid.bin_of(llr) {
            Bin::NegInf => d.neg_inf = 1.0,
            Bin::At(k) => d.mass[k] = 1.0,
            Bin::PosInf => d.pos_inf = 1.0,
        }
        d
    }

    pub fn delta_zero(grid: QuantGrid) -> LlrDensity {
        LlrDensity::point_mass(grid, 0.0)
    }

    pub fn delta_plus_inf(grid: QuantGrid) -> LlrDensity {
        LlrDensity::point_mass(grid, f64::INFINITY)
    }

    /// Erasure-channel density: mass `eps` at LLR zero and `1 - eps` at
    /// `+∞`. Densities of this form stay supported on `{0, +∞}` under
    /// both updates and follow the scalar erasure recursion exactly.
    pub fn bec_channel(grid: QuantGrid, eps: f64) -> Result<LlrDensity> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::parameter(format!("erasure probability must be in [0,1], got {eps}")));
        }
        let mut d = LlrDensity::zeros(grid);
        d.mass[grid.half_bins] = eps;
        d.pos_inf = 1.0 - eps;
        Ok(d)
    }

    /// Builds a density from raw parts; masses must be nonnegative and sum
    /// to 1 within 1e-7.
    pub fn from_parts(
        grid: QuantGrid,
        mass: Vec<f64>,
        neg_inf: f64,
        pos_inf: f64,
    ) -> Result<LlrDensity> {
        if mass.len() != grid.len() {
            return Err(Error::parameter(format!(
                "expected {} masses, got {}",
                grid.len(),
                mass.len()
            )));
        }
        if mass.iter().chain([&neg_inf, &pos_inf]).any(|&p| !(p >= 0.0)) {
            return Err(Error::parameter("masses must be nonnegative".to_string()));
        }
        let d = LlrDensity { grid, mass, neg_inf, pos_inf };
        if (d.total_mass() - 1.0).abs() > 1e-7 {
            return Err(Error::parameter(format!("masses must sum to 1, got {}", d.total_mass())));
        }
        Ok(d)
    }

    pub fn grid(&self) -> QuantGrid {
        self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn neg_inf(&self) -> f64 {
        self.neg_inf
    }

    pub fn pos_inf(&self) -> f64 {
        self.pos_inf
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.neg_inf + self.pos_inf
    }

    /// Mass at LLR exactly zero (the erasure bin).
    pub fn zero_mass(&self) -> f64 {
        self.mass[self.grid.half_bins]
    }

    /// Hard-decision error functional: mass below zero, plus half the mass
    /// at zero, plus the `-∞` overflow.
    pub fn error_mass(&self) -> f64 {
        let m = self.grid.half_bins;
        self.mass[..m].iter().sum::<f64>() + 0.5 * self.mass[m] + self.neg_inf
    }

    /// Mean of the finite part (overflow masses ignored); used for moment
    /// checks on densities with negligible overflow.
    pub fn finite_mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(k, &p)| self.grid.value(k) * p).sum()
    }

    /// Total-variation distance, overflow masses included.
    pub fn tv_distance(&self, other: &LlrDensity) -> f64 {
        let bins: f64 =
            self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum();
        0.5 * (bins
            + (self.neg_inf - other.neg_inf).abs()
            + (self.pos_inf - other.pos_inf).abs())
    }

    /// Rescale so the total mass is exactly 1. The exact update operators
    /// conserve mass, but their floating-point versions leave a relative
    /// residue of order 1e-16 per application, and the density-evolution
    /// recursion multiplies totals (degree-many products per iteration), so
    /// an unrepaired residue compounds geometrically and overwhelms the
    /// state within tens of iterations. Renormalizing the output of each
    /// update pins the total without biasing the shape.
    fn into_normalized(mut self) -> LlrDensity {
        let t = self.total_mass();
        if t > 0.0 && t.is_finite() && t != 1.0 {
            let inv = 1.0 / t;
            for p in &mut self.mass {
                *p *= inv;
            }
            self.neg_inf *= inv;
            self.pos_inf *= inv;
        }
        self
    }
}

/// Convex mixture `Σ w_i · d_i`; the weights must be nonnegative (they are
/// not normalized here).
pub fn mix_densities(parts: &[(f64, &LlrDensity)]) -> Result<LlrDensity> {
    let Some(&(_, first)) = parts.first() else {
        return Err(Error::parameter("mixture needs at least one component".to_string()));
    };
    let mut out = LlrDensity::zeros(first.grid);
    for &(wt, d) in parts {
        if d.grid != out.grid {
            return Err(Error::parameter("mixture components use different grids".to_string()));
        }
        if !(wt >= 0.0) {
            return Err(Error::parameter(format!("mixture weights must be nonnegative, got {wt}")));
        }
        for (o, &p) in out.mass.iter_mut().zip(&d.mass) {
            *o += wt * p;
        }
        out.neg_inf += wt * d.neg_inf;
        out.pos_inf += wt * d.pos_inf;
    }
    Ok(out)
}

/// Channel seen at one position: Gaussian noise parameter plus the
/// probability that the bit was erased by the burst.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmsChannelSpec {
    /// One-sided noise parameter; the noise variance is `n0 / 2` and
    /// `SNR(dB) = 10·log10(2 / n0)`.
    pub n0: f64,
    /// Probability that the position's bit is erased (LLR 0) instead of
    /// passing through the Gaussian channel.
    pub erasure_weight: f64,
}

impl BmsChannelSpec {
    pub fn new(n0: f64, erasure_weight: f64) -> Result<BmsChannelSpec> {
        if !(n0.is_finite() && n0 > 0.0) {
            return Err(Error::parameter(format!("noise parameter must be positive, got {n0}")));
        }
        if !(0.0..=1.0).contains(&erasure_weight) {
            return Err(Error::parameter(format!(
                "erasure weight must be in [0,1], got {erasure_weight}"
            )));
        }
        Ok(BmsChannelSpec { n0, erasure_weight })
    }
}

/// SNR in dB for a noise parameter, `10·log10(2/n0)`.
pub fn snr_db(n0: f64) -> f64 {
    10.0 * (2.0 / n0).log10()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// LLR density of the mixed channel: with probability `erasure_weight` a
/// point mass at zero, otherwise the Gaussian LLR density with mean
/// `2/σ² = 4/n0` and variance `4/σ² = 8/n0` discretized by bin, tails
/// overflowing to `±∞`.
pub fn channel_density(spec: &BmsChannelSpec, grid: &QuantGrid) -> Result<LlrDensity> {
    BmsChannelSpec::new(spec.n0, spec.erasure_weight)?;
    let mean = 4.0 / spec.n0;
    let sd = (8.0 / spec.n0).sqrt();
    let m = grid.half_bins as isize;
    // CDF at every bin edge (i - 1/2)·Δ; consecutive differences give the
    // bin masses, so the total telescopes to 1 exactly.
    let edge = |i: isize| normal_cdf(((i as f64 - 0.5) * grid.bin_width - mean) / sd);
    let mut d = LlrDensity::zeros(*grid);
    let scale = 1.0 - spec.erasure_weight;
    let mut cdf_lo = edge(-m);
    d.neg_inf = scale * cdf_lo;
    for k in 0..grid.len() {
        let cdf_hi = edge(k as isize - m + 1);
        d.mass[k] = scale * (cdf_hi - cdf_lo).max(0.0);
        cdf_lo = cdf_hi;
    }
    d.pos_inf = scale * (1.0 - cdf_lo);
    d.mass[grid.half_bins] += spec.erasure_weight;
    Ok(d)
}

/// Discrete convolution of two densities: the density of the sum of
/// independent LLRs. Finite sums beyond the grid clip to the outermost
/// finite bins at `±half_range`; they never enter the `±∞` overflows,
/// which carry only genuinely infinite inputs. `±∞` plus a finite value
/// keeps its sign; the zero-probability combination `+∞ + (-∞)` is
/// assigned to LLR 0.
fn convolve(a: &LlrDensity, b: &LlrDensity) -> LlrDensity {
    let grid = a.grid;
    let m = grid.half_bins;
    let n = grid.len();
    let mut out = LlrDensity::zeros(grid);
    for (ka, &pa) in a.mass.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        // Output index for (ka, kb) is ka + kb - m; split the kb range at
        // the clipping boundaries.
        let kb_lo = m.saturating_sub(ka); // below: clip to the lowest bin
        let kb_hi = (3 * m).wrapping_sub(ka).min(n - 1); // above: highest
        for kb in 0..kb_lo.min(n) {
            out.mass[0] += pa * b.mass[kb];
        }
        if kb_lo < n {
            for (kb, &pb) in b.mass.iter().enumerate().take(kb_hi + 1).skip(kb_lo) {
                out.mass[ka + kb - m] += pa * pb;
            }
        }
        for kb in (kb_hi + 1).max(kb_lo)..n {
            out.mass[n - 1] += pa * b.mass[kb];
        }
    }
    let fin_a: f64 = a.mass.iter().sum();
    let fin_b: f64 = b.mass.iter().sum();
    out.pos_inf += a.pos_inf * (fin_b + b.pos_inf) + fin_a * b.pos_inf;
    out.neg_inf += a.neg_inf * (fin_b + b.neg_inf) + fin_a * b.neg_inf;
    out.mass[m] += a.pos_inf * b.neg_inf + a.neg_inf * b.pos_inf;
    out
}

/// Variable-node update: convolution of the channel density with every
/// incoming density (the LLRs add).
pub fn vn_update(incoming: &[&LlrDensity], channel: &LlrDensity) -> Result<LlrDensity> {
    let mut acc = channel.clone();
    for d in incoming {
        if d.grid != channel.grid {
            return Err(Error::parameter("densities use different grids".to_string()));
        }
        acc = convolve(&acc, d);
    }
    Ok(acc.into_normalized())
}

/// Precomputed two-input check-node table over magnitude bins: entry
/// `(i, j)` is the output bin of `2·atanh(tanh(iΔ/2)·tanh(jΔ/2))`, which
/// never exceeds `min(i, j)`.
#[derive(Clone, Debug)]
pub struct CnTable {
    grid: QuantGrid,
    out: Vec<u16>,
}

impl CnTable {
    pub fn grid(&self) -> QuantGrid {
        self.grid
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        self.out[i * (self.grid.half_bins + 1) + j] as usize
    }
}

/// Exact pairwise check-node magnitude for nonnegative `a`, `b`:
/// `min(a,b) + ln(1+e^{-(a+b)}) - ln(1+e^{-|a-b|})`, the stable form of
/// `2·atanh(tanh(a/2)·tanh(b/2))`.
fn cn_magnitude(a: f64, b: f64) -> f64 {
    a.min(b) + log1p((-(a + b)).exp()) - log1p((-(a - b).abs()).exp())
}

pub fn build_cn_table(grid: &QuantGrid) -> CnTable {
    let m = grid.half_bins;
    let dx = grid.bin_width;
    let mut out = vec![0u16; (m + 1) * (m + 1)];
    for i in 1..=m {
        for j in 1..=i {
            let g = cn_magnitude(i as f64 * dx, j as f64 * dx);
            let k = (g / dx).round() as u16;
            out[i * (m + 1) + j] = k;
            out[j * (m + 1) + i] = k;
        }
    }
    CnTable { grid: *grid, out }
}

/// Pairwise check-node update on full signed densities. Signs multiply and
/// magnitudes combine through the table; LLR 0 absorbs (an erased input
/// erases the output), `±∞` inputs act as the identity up to sign.
fn cn_pair(a: &LlrDensity, b: &LlrDensity, table: &CnTable) -> LlrDensity {
    let grid = a.grid;
    let m = grid.half_bins;
    let mut out = LlrDensity::zeros(grid);
    let za = a.mass[m];
    let zb = b.mass[m];
    let ta = a.total_mass();
    let tb = b.total_mass();
    // Zero absorbs from either side (counting the (zero, zero) pair once).
    out.mass[m] += za * tb + (ta - za) * zb;
    // Infinite inputs: identity on the partner's magnitude, signs multiply.
    out.pos_inf += a.pos_inf * b.pos_inf + a.neg_inf * b.neg_inf;
    out.neg_inf += a.pos_inf * b.neg_inf + a.neg_inf * b.pos_inf;
    for k in 1..=m {
        out.mass[m + k] += a.pos_inf * b.mass[m + k]
            + a.neg_inf * b.mass[m - k]
            + b.pos_inf * a.mass[m + k]
            + b.neg_inf * a.mass[m - k];
        out.mass[m - k] += a.pos_inf * b.mass[m - k]
            + a.neg_inf * b.mass[m + k]
            + b.pos_inf * a.mass[m - k]
            + b.neg_inf * a.mass[m + k];
    }
    // Finite nonzero magnitudes through the table.
    for i in 1..=m {
        let pa = a.mass[m + i];
        let na = a.mass[m - i];
        if pa == 0.0 && na == 0.0 {
            continue;
        }
        for j in 1..=m {
            let pb = b.mass[m + j];
            let nb = b.mass[m - j];
            if pb == 0.0 && nb == 0.0 {
                continue;
            }
            let k = table.at(i, j);
            out.mass[m + k] += pa * pb + na * nb;
            out.mass[m - k] += pa * nb + na * pb;
        }
    }
    out
}

/// Check-node update of `dc - 1` incoming densities, combined pairwise
/// left to right.
pub fn cn_update(incoming: &[&LlrDensity], table: &CnTable) -> Result<LlrDensity> {
    let Some(&first) = incoming.first() else {
        return Err(Error::parameter("check-node update needs at least one input".to_string()));
    };
    let mut acc = first.clone();
    for d in &incoming[1..] {
        if d.grid != acc.grid {
            return Err(Error::parameter("densities use different grids".to_string()));
        }
        acc = cn_pair(&acc, d, table);
    }
    Ok(acc.into_normalized())
}

/// Left fold of `count` copies of the same density (the check-node update
/// with equal inputs).
fn cn_fold_equal(d: &LlrDensity, count: usize, table: &CnTable) -> LlrDensity {
    let mut acc = d.clone();
    for _ in 1..count {
        acc = cn_pair(&acc, d, table);
    }
    acc.into_normalized()
}

/// Outcome of a coupled BiAWGN DE run.
#[derive(Clone, Copy, Debug)]
pub struct BmsRun {
    /// Position-averaged a-posteriori error mass at the final state.
    pub error_mass: f64,
    pub iterations: usize,
    /// True when either the state change fell below `stop_tol` or the
    /// error mass fell below `success_tol` before the iteration cap.
    pub converged: bool,
}

/// Coupled density-evolution state over the chain: one variable-to-check
/// message density per position.
pub struct BmsDe {
    chain: ChainParams,
    table: CnTable,
    channels: Vec<LlrDensity>,
    x: Vec<LlrDensity>,
    iterations: usize,
}

impl BmsDe {
    /// Builds the chain state from explicit per-position channel densities
    /// (length `L`); messages start as point masses at LLR 0.
    pub fn new(chain: &ChainParams, channels: Vec<LlrDensity>, table: &CnTable) -> Result<BmsDe> {
        if channels.len() != chain.spatial_len {
            return Err(Error::parameter(format!(
                "expected {} channel densities, got {}",
                chain.spatial_len,
                channels.len()
            )));
        }
        if channels.iter().any(|c| c.grid != table.grid) {
            return Err(Error::parameter("channel densities use a different grid".to_string()));
        }
        let x = vec![LlrDensity::delta_zero(table.grid); chain.spatial_len];
        Ok(BmsDe { chain: *chain, table: table.clone(), channels, x, iterations: 0 })
    }

    /// Builds the chain for a burst of length `b` starting at `s` over a
    /// Gaussian background with noise `n0` and background erasure rate
    /// `eps`: position `z` is erased with the burst-profile probability,
    /// otherwise received through the Gaussian channel.
    pub fn from_burst(
        chain: &ChainParams,
        n0: f64,
        b: f64,
        s: f64,
        eps: f64,
        table: &CnTable,
    ) -> Result<BmsDe> {
        let grid = table.grid;
        let weights = burst_profile(chain.spatial_len, b, s, eps)?;
        let gauss = channel_density(&BmsChannelSpec::new(n0, 0.0)?, &grid)?;
        let zero = LlrDensity::delta_zero(grid);
        let channels = weights
            .eps
            .iter()
            .map(|&wz| mix_densities(&[(wz, &zero), (1.0 - wz, &gauss)]))
            .collect::<Result<Vec<_>>>()?;
        BmsDe::new(chain, channels, table)
    }

    pub fn x(&self) -> &[LlrDensity] {
        &self.x
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Check-node output densities per check position `c = 0..L+w-1`
    /// (0-based): the update of `dc - 1` copies of the window mixture
    /// `(1/w)·Σ_j x_{c-j}`, with out-of-chain positions contributing a
    /// point mass at `+∞`.
    fn cn_outputs(&self) -> Vec<LlrDensity> {
        let w = self.chain.w;
        let l = self.chain.spatial_len;
        let inv_w = 1.0 / w as f64;
        let plus = LlrDensity::delta_plus_inf(self.table.grid);
        (0..l + w - 1)
            .map(|c| {
                let parts: Vec<(f64, &LlrDensity)> = (0..w)
                    .map(|j| {
                        let d = c
                            .checked_sub(j)
                            .and_then(|z| self.x.get(z))
                            .unwrap_or(&plus);
                        (inv_w, d)
                    })
                    .collect();
                let u = mix_densities(&parts).expect("window mixture on a shared grid");
                cn_fold_equal(&u, self.chain.dc - 1, &self.table)
            })
            .collect()
    }

    fn vn_input(&self, g: &[LlrDensity], z: usize) -> LlrDensity {
        let inv_w = 1.0 / self.chain.w as f64;
        let parts: Vec<(f64, &LlrDensity)> =
            g[z..z + self.chain.w].iter().map(|d| (inv_w, d)).collect();
        mix_densities(&parts).expect("window mixture on a shared grid")
    }

    /// One full iteration; returns the mean per-position total-variation
    /// change of the message densities.
    pub fn step(&mut self) -> f64 {
        let g = self.cn_outputs();
        let l = self.chain.spatial_len;
        let mut tv_sum = 0.0;
        let mut next = Vec::with_capacity(l);
        for z in 0..l {
            let mix_g = self.vn_input(&g, z);
            let inputs = vec![&mix_g; self.chain.dv - 1];
            let xn = vn_update(&inputs, &self.channels[z]).expect("densities share one grid");
            tv_sum += xn.tv_distance(&self.x[z]);
            next.push(xn);
        }
        self.x = next;
        self.iterations += 1;
        tv_sum / l as f64
    }

    /// Position-averaged error mass of the a-posteriori densities
    /// (channel combined with all `dv` check-side inputs).
    pub fn error_mass_avg(&self) -> f64 {
        let g = self.cn_outputs();
        let l = self.chain.spatial_len;
        let sum: f64 = (0..l)
            .map(|z| {
                let mix_g = self.vn_input(&g, z);
                let inputs = vec![&mix_g; self.chain.dv];
                vn_update(&inputs, &self.channels[z])
                    .expect("densities share one grid")
                    .error_mass()
            })
            .sum();
        sum / l as f64
    }

    /// Iterates until the mean state change falls below `stop_tol`, the
    /// error mass falls below `success_tol`, the error mass stops moving
    /// (a stalled decoding wave is a fixed point — a failure — and is
    /// cheaper to detect on the error functional than to wait out on the
    /// message densities), or the iteration cap is hit.
    pub fn run(&mut self, controls: &DeControls) -> Result<BmsRun> {
        controls.validate()?;
        let mut converged = false;
        let mut prev_err = f64::INFINITY;
        for it in 0..controls.max_iters {
            let tv = self.step();
            if tv < controls.stop_tol {
                converged = true;
                break;
            }
            if it % 8 == 7 {
                let err = self.error_mass_avg();
                // Success probe: once decoding has finished the error mass
                // is already below tolerance even though boundary densities
                // may still be drifting within the overflow bins.
                if err < controls.success_tol {
                    converged = true;
                    break;
                }
                // Stall probe (after a warm-up for the opening transient):
                // a moving wave frees mass every iteration, so a decrease
                // this small means the state has settled onto a failing
                // fixed point.
                if it >= 127 && prev_err - err < STALL_TOL {
                    converged = true;
                    break;
                }
                prev_err = err;
            }
        }
        Ok(BmsRun {
            error_mass: self.error_mass_avg(),
            iterations: self.iterations,
            converged,
        })
    }
}

/// Largest per-probe decrease of the average error mass that still counts
/// as a stall (probes are 8 iterations apart). A decoding wave moving at
/// speed `v` positions per iteration frees about `8·v/L` of error mass per
/// probe, so this threshold only fires for speeds far beyond any iteration
/// budget, while a settled fixed point drops below it within a few dozen
/// probes.
const STALL_TOL: f64 = 1e-10;

/// Runs coupled DE for one `(b, s)` burst over the Gaussian background.
pub fn run_de_bms(
    chain: &ChainParams,
    n0: f64,
    b: f64,
    s: f64,
    eps: f64,
    table: &CnTable,
    controls: &DeControls,
) -> Result<BmsRun> {
    BmsDe::from_burst(chain, n0, b, s, eps, table)?.run(controls)
}

/// Runs coupled DE from explicit channel densities (used to embed erasure
/// channels and check against the scalar module).
pub fn run_de_bms_with_channels(
    chain: &ChainParams,
    channels: Vec<LlrDensity>,
    table: &CnTable,
    controls: &DeControls,
) -> Result<BmsRun> {
    BmsDe::new(chain, channels, table)?.run(controls)
}

/// Final bisection bracket width for Gaussian burst scans. Wider than the
/// erasure-channel bracket because each probe is a full density-evolution
/// run whose iteration count diverges as the probe approaches the critical
/// burst length (the decoding wave slows to a halt): stopping earlier keeps
/// every probe in the regime where the wave either moves at a healthy speed
/// or visibly stalls within the iteration cap.
pub(crate) const AWGN_B_BRACKET_TOL: f64 = 0.02;

/// Maximum recoverable burst length over the Gaussian background: the same
/// bisection protocol as the erasure-channel scan, with recovery meaning
/// that the a-posteriori error mass averaged over the burst-start grid
/// stays below `success_tol`. `anchor = Some(a)` restricts the start grid
/// to one unit period at interior integer position `a` (validated against
/// the full grid on the erasure channel); `None` scans the full grid.
pub fn max_burst_length_awgn(
    chain: &ChainParams,
    n0: f64,
    eps: f64,
    controls: &DeControls,
    grid: &QuantGrid,
    anchor: Option<f64>,
    b_hi: Option<f64>,
) -> Result<BurstScan> {
    controls.validate()?;
    check_burst_args(chain, 0.0, eps)?;
    BmsChannelSpec::new(n0, 0.0)?;
    let table = build_cn_table(grid);
    let mut all_converged = true;
    let mut run_pe = |b: f64, s: f64| -> Result<f64> {
        let run = run_de_bms(chain, n0, b, s, eps, &table, controls)?;
        all_converged &= run.converged;
        Ok(run.error_mass)
    };
    let mut check = |b: f64| -> Result<bool> {
        if b == 0.0 {
            return Ok(run_pe(0.0, 0.0)? < controls.success_tol);
        }
        let s_grid = match anchor {
            Some(a) => anchored_start_grid(chain, b, controls.grid_step, a)?,
            None => start_grid(chain, b, controls.grid_step),
        };
        let budget = controls.success_tol * s_grid.len() as f64;
        let is_integer = |s: f64| (s - s.round()).abs() < 1e-9;
        let ordered = s_grid
            .iter()
            .copied()
            .filter(|&s| is_integer(s))
            .chain(s_grid.iter().copied().filter(|&s| !is_integer(s)));
        let mut sum = 0.0;
        for s in ordered {
            sum += run_pe(b, s)?;
            if sum >= budget {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let (b_bp, above_threshold, hit_bracket_cap) = scan_max_burst(
        chain.spatial_len,
        chain.w as f64,
        b_hi,
        AWGN_B_BRACKET_TOL,
        &mut check,
    )?;
    Ok(BurstScan { b_bp, above_threshold, hit_bracket_cap, all_converged })
}

/// Uncoupled `(dv, dc)` DE over one channel density: the message density
/// recursion without spatial structure, used for no-burst thresholds and
/// the quantization sensitivity study.
pub fn run_uncoupled_bms(
    dv: usize,
    dc: usize,
    channel: &LlrDensity,
    table: &CnTable,
    controls: &DeControls,
) -> Result<BmsRun> {
    controls.validate()?;
    if dv < 2 || dc <= dv {
        return Err(Error::parameter(format!("degrees must satisfy 2 <= dv < dc, got {dv}, {dc}")));
    }
    if channel.grid != table.grid {
        return Err(Error::parameter("channel density uses a different grid".to_string()));
    }
    let mut x = LlrDensity::delta_zero(table.grid);
    let mut iterations = 0;
    let mut converged = false;
    let mut prev_err = f64::INFINITY;
    let apo = |x: &LlrDensity| -> f64 {
        let u = cn_fold_equal(x, dc - 1, table);
        vn_update(&vec![&u; dv], channel).expect("same grid").error_mass()
    };
    for it in 0..controls.max_iters {
        let u = cn_fold_equal(&x, dc - 1, table);
        let xn = vn_update(&vec![&u; dv - 1], channel)?;
        let tv = xn.tv_distance(&x);
        x = xn;
        iterations = it + 1;
        if tv < controls.stop_tol {
            converged = true;
            break;
        }
        if it % 8 == 7 {
            let err = apo(&x);
            if err < controls.success_tol
                || (it >= 127 && prev_err - err < STALL_TOL)
            {
                converged = true;
                break;
            }
            prev_err = err;
        }
    }
    Ok(BmsRun { error_mass: apo(&x), iterations, converged })
}

/// No-burst BiAWGN threshold of the uncoupled `(dv, dc)` ensemble in
/// capacity-loss units: bisection of `1 - C(n0)` to bracket width
/// `bracket_tol`, where recovery means the uncoupled error mass falls
/// below `success_tol`.
pub fn uncoupled_threshold_awgn(
    dv: usize,
    dc: usize,
    grid: &QuantGrid,
    controls: &DeControls,
    bracket_tol: f64,
) -> Result<f64> {
    if !(bracket_tol > 0.0) {
        return Err(Error::parameter("bracket tolerance must be positive".to_string()));
    }
    let table = build_cn_table(grid);
    let recovers = |one_minus_c: f64| -> Result<bool> {
        let n0 = n0_for_capacity_loss(one_minus_c)?;
        let channel = channel_density(&BmsChannelSpec::new(n0, 0.0)?, grid)?;
        let run = run_uncoupled_bms(dv, dc, &channel, &table, controls)?;
        Ok(run.error_mass < controls.success_tol)
    };
    let mut lo = 0.02;
    let mut hi = 0.6;
    if !recovers(lo)? {
        return Err(Error::internal(format!(
            "capacity loss {lo} unexpectedly unrecoverable; grid too coarse"
        )));
    }
    if recovers(hi)? {
        return Err(Error::internal(format!("capacity loss {hi} unexpectedly recoverable")));
    }
    while hi - lo >= bracket_tol {
        let mid = 0.5 * (lo + hi);
        if recovers(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + log1p((-x).exp())
    } else {
        log1p(x.exp())
    }
}

/// BiAWGN channel capacity in bits for noise parameter `n0` (variance
/// `n0/2`): `1 - E[log2(1 + e^{-LLR})]` integrated by Simpson's rule over
/// twelve standard deviations, absolute error well below 1e-6.
pub fn biawgn_capacity(n0: f64) -> Result<f64> {
    if !(n0.is_finite() && n0 > 0.0) {
        return Err(Error::parameter(format!("noise parameter must be positive, got {n0}")));
    }
    let sigma = (n0 / 2.0).sqrt();
    let ln2 = std::f64::consts::LN_2;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    // LLR of a received value 1 + sigma*t is 2(1 + sigma t)/sigma^2.
    let f = |t: f64| {
        let llr = 2.0 * (1.0 + sigma * t) / (sigma * sigma);
        norm * (-0.5 * t * t).exp() * softplus(-llr) / ln2
    };
    let (a, b, n) = (-12.0f64, 12.0f64, 4096usize);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    Ok((1.0 - acc * h / 3.0).clamp(0.0, 1.0))
}

/// Inverts the capacity map: returns the `n0` with `1 - C(n0)` equal to
/// the given capacity loss (monotone bisection in `ln n0`).
pub fn n0_for_capacity_loss(one_minus_c: f64) -> Result<f64> {
    if !(one_minus_c > 0.0 && one_minus_c < 1.0) {
        return Err(Error::parameter(format!(
            "capacity loss must lie in (0,1), got {one_minus_c}"
        )));
    }
    let mut lo = (1e-6f64).ln();
    let mut hi = (1e6f64).ln();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let loss = 1.0 - biawgn_capacity(mid.exp())?;
        if (loss - one_minus_c).abs() < 1e-12 {
            return Ok(mid.exp());
        }
        if loss < one_minus_c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
