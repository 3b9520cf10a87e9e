//! The `(dv, dc, w, L, M)` spatially coupled LDPC ensemble.
//!
//! Variable nodes live at spatial positions `1..=L`, `M` per position, each
//! with degree `dv`. Check nodes live at positions `1..=L+w-1`, `M*dv/dc`
//! per position, each with `dc` sockets. Every edge of a variable node at
//! position `z` attaches to a check node at one of the positions
//! `z..=z+w-1`; over the ensemble each of the `w` offsets carries the same
//! fraction of edges. Check nodes near the chain boundary end up with
//! degree below `dc`, and check nodes that receive no edge at all are
//! treated as absent (they contribute no constraint).
//!
//! Sampling uses the partition construction: the `M*dv` edge stubs of each
//! variable-node position are split evenly across the `w` offsets (a
//! uniformly random split), and within every check-node position the
//! incoming stubs are matched to that position's sockets by a uniform
//! shuffle. Supply and demand balance exactly at every interior position,
//! so sampling never stalls, and parallel edges are repaired by bounded
//! random swaps inside the affected position.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters of the coupled ensemble.
///
/// `spatial_len` is the chain length `L` (variable-node positions) and
/// `nodes_per_pos` is `M`, the number of variable nodes per position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub dv: usize,
    pub dc: usize,
    pub w: usize,
    pub spatial_len: usize,
    pub nodes_per_pos: usize,
}

impl EnsembleParams {
    /// Validates and builds a parameter set.
    ///
    /// Requirements: `dv >= 3`, `dc > dv`, `w >= 2`, `L > w`,
    /// `M*dv` divisible by `dc` (integral check-node count per position),
    /// and `w*M >= 2*(dv+1)*dc` (window large enough for sampling and for
    /// the ensemble's expansion arguments to hold).
    pub fn new(
        dv: usize,
        dc: usize,
        w: usize,
        spatial_len: usize,
        nodes_per_pos: usize,
    ) -> Result<Self> {
        if dv < 3 {
            return Err(Error::parameter(format!("dv must be at least 3, got {dv}")));
        }
        if dc <= dv {
            return Err(Error::parameter(format!(
                "dc must exceed dv for positive rate, got dv={dv}, dc={dc}"
            )));
        }
        if w < 2 {
            return Err(Error::parameter(format!("coupling width w must be at least 2, got {w}")));
        }
        if spatial_len <= w {
            return Err(Error::parameter(format!(
                "chain length L must exceed w, got L={spatial_len}, w={w}"
            )));
        }
        if nodes_per_pos == 0 || (nodes_per_pos * dv) % dc != 0 {
            return Err(Error::parameter(format!(
                "M*dv must be a positive multiple of dc, got M={nodes_per_pos}, dv={dv}, dc={dc}"
            )));
        }
        if w * nodes_per_pos < 2 * (dv + 1) * dc {
            return Err(Error::parameter(format!(
                "w*M must be at least 2*(dv+1)*dc, got w*M={} < {}",
                w * nodes_per_pos,
                2 * (dv + 1) * dc
            )));
        }
        let p = EnsembleParams { dv, dc, w, spatial_len, nodes_per_pos };
        if p.vn_count() * dv > u32::MAX as usize || p.cn_count() * dc > u32::MAX as usize {
            return Err(Error::parameter(
                "graph too large: node and edge identifiers must fit in 32 bits".to_string(),
            ));
        }
        Ok(p)
    }

    /// Number of variable nodes, `L*M`.
    pub fn vn_count(&self) -> usize {
        self.spatial_len * self.nodes_per_pos
    }

    /// Check nodes per spatial position, `M*dv/dc`.
    pub fn cns_per_pos(&self) -> usize {
        self.nodes_per_pos * self.dv / self.dc
    }

    /// Number of check-node positions, `L+w-1`.
    pub fn cn_pos_count(&self) -> usize {
        self.spatial_len + self.w - 1
    }

    /// Total number of check-node identifiers (including never-used ones).
    pub fn cn_count(&self) -> usize {
        self.cn_pos_count() * self.cns_per_pos()
    }

    /// 1-based spatial position of a variable node.
    pub fn vn_position(&self, v: usize) -> usize {
        v / self.nodes_per_pos + 1
    }

    /// 1-based spatial position of a check node.
    pub fn cn_position(&self, c: usize) -> usize {
        c / self.cns_per_pos() + 1
    }

    /// Design rate ignoring unused check nodes:
    /// `1 - (dv/dc) * (L+w-1)/L`, i.e. the uncoupled rate minus an `O(w/L)`
    /// boundary loss.
    pub fn nominal_rate(&self) -> f64 {
        1.0 - (self.dv as f64 / self.dc as f64) * (self.cn_pos_count() as f64 / self.spatial_len as f64)
    }
}

/// A sampled code graph from the ensemble.
///
/// Variable nodes are numbered `0..L*M` in position order; check nodes are
/// numbered `0..(L+w-1)*M*dv/dc` in position order. Identifiers are stable:
/// check nodes that received no edge keep their identifier and simply have
/// degree zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeGraph {
    params: EnsembleParams,
    seed: u64,
    /// Per-VN adjacency, `dv` sorted CN ids per variable node.
    vn_adj: Vec<u32>,
    /// CSR adjacency of check nodes (VN ids, in ascending order).
    cn_adj: Vec<u32>,
    cn_off: Vec<u32>,
}

/// Attempts to repair one duplicate assignment by swapping with a random
/// other socket of the same position. `committed` counts stubs whose
/// adjacency entries are already recorded and therefore must not move.
const SWAP_ATTEMPTS_PER_STUB: usize = 10;
const POSITION_RESTARTS: usize = 100;

impl CodeGraph {
    /// Samples a graph. Identical `(params, seed)` pairs always produce an
    /// identical graph.
    pub fn sample(params: &EnsembleParams, seed: u64) -> Result<CodeGraph> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Self::sample_with_rng(params, seed, &mut rng)
    }

    /// Samples a graph from an externally managed RNG stream (used by the
    /// simulation sweeps, which derive one stream per trial). The recorded
    /// `seed` is informational only in this case.
    pub fn sample_with_rng(
        params: &EnsembleParams,
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<CodeGraph> {
        let dv = params.dv;
        let nv = params.vn_count();
        let m_dv = params.nodes_per_pos * dv;
        let (base, extra) = (m_dv / params.w, m_dv % params.w);
        let cns_per_pos = params.cns_per_pos();

        // Stub partition: incoming[p] lists the VN of every stub assigned to
        // CN position p (0-based). The remainder `extra` goes to the lowest
        // offsets; the induced per-offset probability error is below
        // (w-1)/(M*dv), and capacity at every position stays exact.
        let mut incoming: Vec<Vec<u32>> = vec![Vec::new(); params.cn_pos_count()];
        let mut stubs: Vec<u32> = Vec::with_capacity(m_dv);
        for z in 0..params.spatial_len {
            stubs.clear();
            for m in 0..params.nodes_per_pos {
                let v = (z * params.nodes_per_pos + m) as u32;
                stubs.extend(std::iter::repeat(v).take(dv));
            }
            stubs.shuffle(rng);
            let mut at = 0;
            for i in 0..params.w {
                let size = base + usize::from(i < extra);
                incoming[z + i].extend_from_slice(&stubs[at..at + size]);
                at += size;
            }
        }

        // Within each CN position, match incoming stubs to the position's
        // sockets by a uniform shuffle, then repair parallel edges by
        // swapping with sockets not yet committed to an adjacency entry.
        let mut vn_adj = vec![0u32; nv * dv];
        let mut vn_deg = vec![0u8; nv];
        let mut sockets: Vec<u32> = Vec::with_capacity(cns_per_pos * params.dc);
        for (p, stubs_here) in incoming.iter().enumerate() {
            let n_in = stubs_here.len();
            debug_assert!(n_in <= cns_per_pos * params.dc);
            let mut restarts = 0;
            'position: loop {
                sockets.clear();
                for j in 0..cns_per_pos {
                    let c = (p * cns_per_pos + j) as u32;
                    sockets.extend(std::iter::repeat(c).take(params.dc));
                }
                sockets.shuffle(rng);
                // Tentatively assign sockets[k] to stubs_here[k].
                for k in 0..n_in {
                    let v = stubs_here[k] as usize;
                    let taken = &vn_adj[v * dv..v * dv + vn_deg[v] as usize];
                    if taken.contains(&sockets[k]) {
                        let mut fixed = false;
                        for _ in 0..SWAP_ATTEMPTS_PER_STUB * dv {
                            if k + 1 >= sockets.len() {
                                break;
                            }
                            let j = rng.gen_range(k + 1..sockets.len());
                            let cand = sockets[j];
                            if taken.contains(&cand) {
                                continue;
                            }
                            // The displaced socket goes to stub j (if j is a
                            // real stub); make sure it stays parallel-free.
                            if j < n_in {
                                let v2 = stubs_here[j] as usize;
                                let taken2 = &vn_adj[v2 * dv..v2 * dv + vn_deg[v2] as usize];
                                if taken2.contains(&sockets[k]) {
                                    continue;
                                }
                            }
                            sockets.swap(k, j);
                            fixed = true;
                            break;
                        }
                        if !fixed {
                            restarts += 1;
                            if restarts > POSITION_RESTARTS {
                                return Err(Error::Internal(format!(
                                    "socket assignment failed to avoid parallel edges at position {p}"
                                )));
                            }
                            // Roll back this position's commitments and reshuffle.
                            for s in &stubs_here[..k] {
                                vn_deg[*s as usize] -= 1;
                            }
                            continue 'position;
                        }
                    }
                    vn_adj[v * dv + vn_deg[v] as usize] = sockets[k];
                    vn_deg[v] += 1;
                }
                break;
            }
        }
        debug_assert!(vn_deg.iter().all(|&d| d as usize == dv));

        for chunk in vn_adj.chunks_mut(dv) {
            chunk.sort_unstable();
        }
        Ok(Self::from_parts(*params, seed, vn_adj))
    }

    fn from_parts(params: EnsembleParams, seed: u64, vn_adj: Vec<u32>) -> CodeGraph {
        // Build the check-node CSR by counting sort; VN ids come out ascending.
        let nc = params.cn_count();
        let mut cn_off = vec![0u32; nc + 1];
        for &c in &vn_adj {
            cn_off[c as usize + 1] += 1;
        }
        for i in 0..nc {
            cn_off[i + 1] += cn_off[i];
        }
        let mut cursor: Vec<u32> = cn_off[..nc].to_vec();
        let mut cn_adj = vec![0u32; vn_adj.len()];
        for (v, chunk) in vn_adj.chunks(params.dv).enumerate() {
            for &c in chunk {
                cn_adj[cursor[c as usize] as usize] = v as u32;
                cursor[c as usize] += 1;
            }
        }
        CodeGraph { params, seed, vn_adj, cn_adj, cn_off }
    }

    pub fn params(&self) -> &EnsembleParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The `dv` check-node neighbors of a variable node, sorted ascending.
    pub fn vn_neighbors(&self, v: usize) -> &[u32] {
        &self.vn_adj[v * self.params.dv..(v + 1) * self.params.dv]
    }

    /// The variable-node neighbors of a check node, sorted ascending.
    pub fn cn_neighbors(&self, c: usize) -> &[u32] {
        &self.cn_adj[self.cn_off[c] as usize..self.cn_off[c + 1] as usize]
    }

    pub fn cn_degree(&self, c: usize) -> usize {
        (self.cn_off[c + 1] - self.cn_off[c]) as usize
    }

    /// Number of check nodes with at least one edge.
    pub fn stored_cn_count(&self) -> usize {
        (0..self.params.cn_count()).filter(|&c| self.cn_degree(c) > 0).count()
    }

    /// Rate of the sampled code: `1 - (check nodes in use)/(L*M)`.
    pub fn design_rate(&self) -> f64 {
        1.0 - self.stored_cn_count() as f64 / self.params.vn_count() as f64
    }

    /// Writes the graph as a plain-text edge list. The header records the
    /// full parameter set and seed; the body lists `vn cn` pairs (0-based),
    /// variable nodes ascending, each node's check nodes ascending, so the
    /// output is a canonical byte representation of the graph.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# scldpc graph format=1 dv={} dc={} w={} L={} M={} seed={}",
            self.params.dv,
            self.params.dc,
            self.params.w,
            self.params.spatial_len,
            self.params.nodes_per_pos,
            self.seed
        )?;
        for v in 0..self.params.vn_count() {
            for &c in self.vn_neighbors(v) {
                writeln!(out, "{v} {c}")?;
            }
        }
        Ok(())
    }

    /// Parses an edge list produced by [`CodeGraph::write_edge_list`].
    /// Round-tripping a graph through write/read reproduces it exactly.
    pub fn read_edge_list<R: BufRead>(input: R) -> Result<CodeGraph> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("empty edge-list input"))??;
        let mut dv = None;
        let mut dc = None;
        let mut w = None;
        let mut l = None;
        let mut m = None;
        let mut seed = None;
        if !header.starts_with("# scldpc graph") {
            return Err(Error::parse("missing graph header line"));
        }
        for token in header.trim_start_matches('#').split_whitespace() {
            if let Some((key, value)) = token.split_once('=') {
                let slot = match key {
                    "dv" => &mut dv,
                    "dc" => &mut dc,
                    "w" => &mut w,
                    "L" => &mut l,
                    "M" => &mut m,
                    "seed" => &mut seed,
                    _ => continue,
                };
                *slot = Some(
                    value
                        .parse::<u64>()
                        .map_err(|_| Error::parse(format!("bad header field {key}={value}")))?,
                );
            }
        }
        let missing = || Error::parse("header missing one of dv/dc/w/L/M/seed");
        let params = EnsembleParams::new(
            dv.ok_or_else(missing)? as usize,
            dc.ok_or_else(missing)? as usize,
            w.ok_or_else(missing)? as usize,
            l.ok_or_else(missing)? as usize,
            m.ok_or_else(missing)? as usize,
        )?;
        let seed = seed.ok_or_else(missing)?;

        let nv = params.vn_count();
        let mut vn_adj = vec![0u32; nv * params.dv];
        let mut vn_deg = vec![0usize; nv];
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let v: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(format!("bad edge line: {line}")))?;
            let c: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(format!("bad edge line: {line}")))?;
            if v >= nv || c >= params.cn_count() {
                return Err(Error::parse(format!("edge ({v}, {c}) out of range")));
            }
            let zc = params.cn_position(c);
            let zv = params.vn_position(v);
            if zc < zv || zc >= zv + params.w {
                return Err(Error::parse(format!(
                    "edge ({v}, {c}) violates the coupling window"
                )));
            }
            if vn_deg[v] == params.dv {
                return Err(Error::parse(format!("variable node {v} has more than dv edges")));
            }
            vn_adj[v * params.dv + vn_deg[v]] = c as u32;
            vn_deg[v] += 1;
        }
        if let Some(v) = vn_deg.iter().position(|&d| d != params.dv) {
            return Err(Error::parse(format!(
                "variable node {v} has {} edges, expected {}",
                vn_deg[v], params.dv
            )));
        }
        for (v, chunk) in vn_adj.chunks(params.dv).enumerate() {
            if chunk.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::parse(format!(
                    "variable node {v} has unsorted or duplicate check nodes"
                )));
            }
        }
        Ok(Self::from_parts(params, seed, vn_adj))
    }
}
