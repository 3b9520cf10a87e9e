//! Burst geometry over the coupled chain.
//!
//! A burst erases `b*M` consecutive bits starting at bit `S` (1-based), on
//! top of an optional uniform background erasure rate `eps`. For analysis
//! the burst is summarized per spatial position: `m_z` erased bits at
//! position `z`, or — in the `M -> infinity` limit used by density
//! evolution — a continuous erasure profile
//!
//! ```text
//! eps_z = eps + (1 - eps) * (burst mass fraction at position z)
//! ```
//!
//! where the burst of length `b` positions starts at the fractional
//! position `s`, covers `ceil(s)` partially with mass `min(b, ceil(s)-s)`,
//! and subsequent positions with mass `clamp(b + s - z + 1, 0, 1)`. When
//! `s` is an integer the burst begins exactly at position `s+1` and
//! position `s` carries no burst mass.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::ensemble::EnsembleParams;
use crate::{Error, Result};

/// Per-position erasure probabilities `eps_z` for `z = 1..=L`
/// (index `z-1`). Positions outside the chain are implicitly erasure-free.
#[derive(Clone, Debug, PartialEq)]
pub struct ErasureProfile {
    pub eps: Vec<f64>,
}

impl ErasureProfile {
    /// Chain length `L`.
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// `eps_z` for a 1-based position, zero outside `1..=L`.
    pub fn get(&self, z: isize) -> f64 {
        if z < 1 || z as usize > self.eps.len() {
            0.0
        } else {
            self.eps[z as usize - 1]
        }
    }

    /// Total burst mass above the background,
    /// `sum_z (eps_z - eps) / (1 - eps)`.
    pub fn burst_mass(&self, background: f64) -> f64 {
        self.eps.iter().map(|&e| (e - background) / (1.0 - background)).sum()
    }

    /// Writes the profile as CSV rows `z,eps_z` with no header; callers
    /// prepend their own metadata comments.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "z,eps_z")?;
        for (i, e) in self.eps.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, e)?;
        }
        Ok(())
    }

    /// Parses the CSV produced by [`ErasureProfile::write_csv`], ignoring
    /// comment lines starting with `#`.
    pub fn read_csv<R: BufRead>(input: R) -> Result<ErasureProfile> {
        let mut eps = Vec::new();
        let mut saw_header = false;
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != "z,eps_z" {
                    return Err(Error::parse(format!("expected profile header, got: {line}")));
                }
                saw_header = true;
                continue;
            }
            let (z, e) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(format!("bad profile row: {line}")))?;
            let z: usize = z.parse().map_err(|_| Error::parse(format!("bad position: {z}")))?;
            if z != eps.len() + 1 {
                return Err(Error::parse(format!("profile rows out of order at z={z}")));
            }
            eps.push(e.parse().map_err(|_| Error::parse(format!("bad eps value: {e}")))?);
        }
        if eps.is_empty() {
            return Err(Error::parse("empty profile"));
        }
        Ok(ErasureProfile { eps })
    }
}

/// Continuous erasure profile for a burst of length `b` positions starting
/// at fractional position `s in [0, L-b]`, over background rate `eps`.
pub fn burst_profile(chain_len: usize, b: f64, s: f64, eps: f64) -> Result<ErasureProfile> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::parameter(format!("background erasure rate must be in [0,1), got {eps}")));
    }
    if b < 0.0 || !b.is_finite() {
        return Err(Error::parameter(format!("burst length must be nonnegative, got {b}")));
    }
    let l = chain_len as f64;
    if s < 0.0 || s > l - b || !s.is_finite() {
        return Err(Error::parameter(format!(
            "burst start must lie in [0, L-b] = [0, {}], got {s}",
            l - b
        )));
    }
    let z0 = s.ceil();
    let profile = (1..=chain_len)
        .map(|z| {
            let zf = z as f64;
            let mass = if zf < z0 {
                0.0
            } else if zf == z0 {
                b.min(z0 - s)
            } else {
                (b + s - zf + 1.0).clamp(0.0, 1.0)
            };
            eps + (1.0 - eps) * mass
        })
        .collect();
    Ok(ErasureProfile { eps: profile })
}

/// Number of burst-erased bits at each of the first `positions` spatial
/// positions, for a burst of `bits` consecutive bits starting at 1-based
/// bit index `start`, with `m` bits per position.
pub fn erased_counts(bits: usize, start: usize, m: usize, positions: usize) -> Result<Vec<usize>> {
    if start == 0 {
        return Err(Error::parameter("burst start bit index is 1-based".to_string()));
    }
    if bits > 0 && start + bits - 1 > positions * m {
        return Err(Error::parameter(format!(
            "burst of {bits} bits starting at {start} exceeds {positions} positions of {m} bits"
        )));
    }
    let z0 = (start + m - 1) / m; // position of the first erased bit
    let counts = (1..=positions)
        .map(|z| {
            if bits == 0 || z < z0 {
                0
            } else if z == z0 {
                bits.min(z0 * m - start + 1)
            } else {
                let upper = bits + start; // first bit beyond the burst
                upper.saturating_sub(1 + (z - 1) * m).min(m)
            }
        })
        .collect();
    Ok(counts)
}

/// Erasure profile induced by per-position erased counts on top of a
/// background rate: `eps_z = eps + (m_z/M)(1 - eps)`.
pub fn counts_profile(counts: &[usize], m: usize, eps: f64) -> Result<ErasureProfile> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::parameter(format!("background erasure rate must be in [0,1), got {eps}")));
    }
    Ok(ErasureProfile {
        eps: counts
            .iter()
            .map(|&mz| {
                debug_assert!(mz <= m);
                eps + (mz as f64 / m as f64) * (1.0 - eps)
            })
            .collect(),
    })
}

/// Samples a burst pattern for simulation: the start bit `S` is uniform on
/// `[1, L*M - bits + 1]` and the `bits` consecutive bits are erased.
/// Returns the start and the per-bit erasure flags (bit `i` belongs to
/// variable node `i`).
pub fn sample_burst_pattern(
    params: &EnsembleParams,
    bits: usize,
    rng: &mut impl Rng,
) -> Result<(usize, Vec<bool>)> {
    let n = params.vn_count();
    if bits == 0 || bits > n {
        return Err(Error::parameter(format!(
            "burst must erase between 1 and {n} bits, got {bits}"
        )));
    }
    let start = rng.gen_range(1..=n - bits + 1);
    let mut erased = vec![false; n];
    erased[start - 1..start - 1 + bits].fill(true);
    Ok((start, erased))
}

/// Erases every bit independently with probability `eps` (in addition to
/// whatever is already erased).
pub fn apply_background_erasures(erased: &mut [bool], eps: f64, rng: &mut impl Rng) {
    if eps <= 0.0 {
        return;
    }
    for e in erased.iter_mut() {
        if !*e && rng.gen::<f64>() < eps {
            *e = true;
        }
    }
}
