//! Transfer-operator backends on a uniform grid and their compositions
//! along a driving path.
//!
//! Two backends are built from a map. `ExactMarkov` requires a verified
//! Markov partition whose points sit on the bin grid together with integer
//! branch slopes; its entries are the exact rationals 1/|slope| placed by
//! integer index arithmetic, so operator identities hold to machine
//! precision. `Ulam` covers every map by measuring interval intersections,
//! with O(1/n_bins) discretization bias.
//!
//! Compositions g -> g . f are realized on a refined grid (the least common
//! multiple of the integer slopes). On that grid every branch maps a
//! refined cell into a single base cell, so midpoint evaluation of the
//! composition is exact for exact-Markov families; for Ulam backends the
//! refinement degenerates to 1 and the midpoint rule carries the flagged
//! O(1/n_bins) error.

use crate::driving::OmegaPath;
use crate::error::{Error, Result};
use crate::maps::{MapFamily, PiecewiseMap};
use crate::spaces::GridFunction;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Grids up to this size keep a dense matrix; larger grids use sparse rows.
pub const DENSE_LIMIT: usize = 4096;

const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMethod {
    ExactMarkov,
    Ulam,
}

#[derive(Clone, Debug)]
enum Storage {
    /// Row-major target x source.
    Dense(Vec<f64>),
    /// CSR over target rows.
    Sparse { offsets: Vec<usize>, cols: Vec<u32>, weights: Vec<f64> },
}

/// Discretized transfer operator of one map: entry (target j, source i)
/// is the mass flow m(B_i intersect f^{-1} B_j) / m(B_j), so densities map
/// to densities.
#[derive(Clone, Debug)]
pub struct TransferBackend {
    pub method: BackendMethod,
    pub src_bins: usize,
    pub tgt_bins: usize,
    pub map_index: usize,
    storage: Storage,
}

impl TransferBackend {
    pub fn n_bins(&self) -> usize {
        self.tgt_bins
    }

    /// Push a density one step: matrix-vector product. Dense rows are
    /// chunked across threads above 2048 bins; each output slot is written
    /// by exactly one task, so results are bit-reproducible.
    pub fn apply(&self, g: &GridFunction) -> Result<GridFunction> {
        use rayon::prelude::*;
        if g.n_bins() != self.src_bins {
            return Err(Error::Shape { expected: self.src_bins, got: g.n_bins() });
        }
        let v = g.values();
        let out = match &self.storage {
            Storage::Dense(data) if self.tgt_bins >= 2048 => (0..self.tgt_bins)
                .into_par_iter()
                .map(|j| {
                    let row = &data[j * self.src_bins..(j + 1) * self.src_bins];
                    row.iter().zip(v).map(|(w, x)| w * x).sum()
                })
                .collect::<Vec<f64>>(),
            Storage::Dense(data) => (0..self.tgt_bins)
                .map(|j| {
                    let row = &data[j * self.src_bins..(j + 1) * self.src_bins];
                    row.iter().zip(v).map(|(w, x)| w * x).sum()
                })
                .collect::<Vec<f64>>(),
            Storage::Sparse { offsets, cols, weights } => (0..self.tgt_bins)
                .map(|j| {
                    let (a, b) = (offsets[j], offsets[j + 1]);
                    cols[a..b]
                        .iter()
                        .zip(&weights[a..b])
                        .map(|(&i, w)| w * v[i as usize])
                        .sum()
                })
                .collect::<Vec<f64>>(),
        };
        GridFunction::new(out)
    }

    /// All entries are nonnegative by construction; exposed for tests.
    pub fn min_entry(&self) -> f64 {
        match &self.storage {
            Storage::Dense(d) => d.iter().cloned().fold(f64::INFINITY, f64::min),
            Storage::Sparse { weights, .. } => weights.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn entry(&self, tgt: usize, src: usize) -> f64 {
        match &self.storage {
            Storage::Dense(d) => d[tgt * self.src_bins + src],
            Storage::Sparse { offsets, cols, weights } => {
                let (a, b) = (offsets[tgt], offsets[tgt + 1]);
                cols[a..b]
                    .iter()
                    .position(|&c| c as usize == src)
                    .map(|p| weights[a + p])
                    .unwrap_or(0.0)
            }
        }
    }

    /// Dump the dense matrix as CSV (target row per line) for debugging.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "target_bin,{}", (0..self.src_bins).map(|i| format!("src_{i}")).collect::<Vec<_>>().join(","))?;
        for j in 0..self.tgt_bins {
            let row: Vec<String> = (0..self.src_bins).map(|i| format!("{}", self.entry(j, i))).collect();
            writeln!(w, "{j},{}", row.join(","))?;
        }
        Ok(())
    }
}

fn finalize(rows: Vec<Vec<(u32, f64)>>, method: BackendMethod, src_bins: usize, map_index: usize) -> TransferBackend {
    let tgt_bins = rows.len();
    let mut merged: Vec<Vec<(u32, f64)>> = Vec::with_capacity(tgt_bins);
    for mut row in rows {
        row.sort_by_key(|e| e.0);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(row.len());
        for (c, w) in row {
            match out.last_mut() {
                Some(last) if last.0 == c => last.1 += w,
                _ => out.push((c, w)),
            }
        }
        merged.push(out);
    }
    let storage = if src_bins.max(tgt_bins) <= DENSE_LIMIT {
        let mut data = vec![0.0; src_bins * tgt_bins];
        for (j, row) in merged.iter().enumerate() {
            for &(i, w) in row {
                data[j * src_bins + i as usize] = w;
            }
        }
        Storage::Dense(data)
    } else {
        let mut offsets = Vec::with_capacity(tgt_bins + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for row in &merged {
            for &(i, w) in row {
                cols.push(i);
                weights.push(w);
            }
            offsets.push(cols.len());
        }
        Storage::Sparse { offsets, cols, weights }
    };
    TransferBackend { method, src_bins, tgt_bins, map_index, storage }
}

fn is_aligned(x: f64, n: usize) -> bool {
    let t = x * n as f64;
    (t - t.round()).abs() <= ALIGN_TOL
}

/// Build the exact backend by integer index arithmetic. Requires the
/// verified Markov partition on the bin grid and integer branch slopes.
fn build_exact(map: &PiecewiseMap, n_bins: usize, map_index: usize) -> Result<TransferBackend> {
    let partition = map.markov.as_ref().ok_or_else(|| {
        Error::Config(format!("map {}: exact backend needs a verified Markov partition", map.label))
    })?;
    for p in partition {
        if !is_aligned(*p, n_bins) {
            return Err(Error::Config(format!(
                "map {}: Markov partition point {p} is not on the {n_bins}-bin grid",
                map.label
            )));
        }
    }
    let slopes = map.integer_slopes().ok_or_else(|| {
        Error::Config(format!("map {}: exact backend needs integer branch slopes", map.label))
    })?;
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_bins];
    let nf = n_bins as f64;
    for (b, branch) in map.branches().iter().enumerate() {
        let s = slopes[b];
        let sa = s.unsigned_abs() as usize;
        let lo_bin = (branch.lo * nf).round() as usize;
        let hi_bin = (branch.hi * nf).round() as usize;
        // image of the branch start, as a bin index
        let img_start = (branch.forward(if s > 0 { branch.lo } else { branch.hi }) * nf).round() as i64;
        if !is_aligned(branch.forward(branch.lo), n_bins) || !is_aligned(branch.forward(branch.hi), n_bins) {
            return Err(Error::Config(format!(
                "map {}: branch {b} image endpoints are not on the {n_bins}-bin grid",
                map.label
            )));
        }
        let w = 1.0 / sa as f64;
        for i in lo_bin..hi_bin {
            // source bin i covers s target bins starting at:
            let local = if s > 0 { (i - lo_bin) * sa } else { (hi_bin - 1 - i) * sa };
            let start = img_start as usize + local;
            for j in start..start + sa {
                rows[j].push((i as u32, w));
            }
        }
    }
    Ok(finalize(rows, BackendMethod::ExactMarkov, n_bins, map_index))
}

/// Build the general backend by measuring interval intersections branch by
/// branch. Preimages of target-bin edges are computed once per edge, so the
/// source mass telescopes exactly.
fn build_ulam(map: &PiecewiseMap, n_bins: usize, map_index: usize) -> Result<TransferBackend> {
    let nf = n_bins as f64;
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_bins];
    for (b, branch) in map.branches().iter().enumerate() {
        let c = branch.img_lo.max(0.0);
        let d = branch.img_hi.min(1.0);
        if d <= c {
            continue;
        }
        // y-cuts: image endpoints plus every grid edge strictly inside
        let mut cuts = vec![c];
        let j0 = (c * nf).floor() as usize + 1;
        let j1 = (d * nf).ceil() as usize;
        for j in j0..j1 {
            let y = j as f64 / nf;
            if y > c && y < d {
                cuts.push(y);
            }
        }
        cuts.push(d);
        let xs: Vec<f64> = cuts
            .iter()
            .map(|&y| branch.inverse(y, b))
            .collect::<Result<Vec<_>>>()?;
        for (k, w) in cuts.windows(2).enumerate() {
            let (ya, yb) = (w[0], w[1]);
            if yb <= ya {
                continue;
            }
            let j = GridFunction::bin_of(n_bins, 0.5 * (ya + yb));
            let (mut xa, mut xb) = (xs[k], xs[k + 1]);
            if xa > xb {
                std::mem::swap(&mut xa, &mut xb);
            }
            let i0 = GridFunction::bin_of(n_bins, xa);
            let i1 = GridFunction::bin_of(n_bins, xb.max(xa));
            for i in i0..=i1 {
                let lo = xa.max(i as f64 / nf);
                let hi = xb.min((i + 1) as f64 / nf);
                if hi > lo {
                    rows[j].push((i as u32, (hi - lo) * nf));
                }
            }
        }
    }
    Ok(finalize(rows, BackendMethod::Ulam, n_bins, map_index))
}

/// Build a backend for one map.
pub fn build_backend(map: &PiecewiseMap, n_bins: usize, method: BackendMethod) -> Result<TransferBackend> {
    build_backend_indexed(map, n_bins, method, 0)
}

pub fn build_backend_indexed(
    map: &PiecewiseMap,
    n_bins: usize,
    method: BackendMethod,
    map_index: usize,
) -> Result<TransferBackend> {
    if n_bins < 2 {
        return Err(Error::Config("backend needs at least 2 bins".into()));
    }
    match method {
        BackendMethod::ExactMarkov => build_exact(map, n_bins, map_index),
        BackendMethod::Ulam => build_ulam(map, n_bins, map_index),
    }
}

/// The family of backends driven by a path: one operator per symbol plus,
/// for exact families, the refined-grid twins used for compositions.
#[derive(Clone, Debug)]
pub struct BackendSet {
    pub method: BackendMethod,
    pub n_bins: usize,
    pub family: MapFamily,
    per_symbol: Vec<TransferBackend>,
    /// Composition-exact refinement factor (1 for Ulam).
    refine: usize,
    refined: Vec<TransferBackend>,
}

impl BackendSet {
    pub fn build(family: &MapFamily, n_bins: usize, method: BackendMethod) -> Result<Self> {
        let per_symbol = family
            .maps
            .iter()
            .enumerate()
            .map(|(i, m)| build_backend_indexed(m, n_bins, method, i))
            .collect::<Result<Vec<_>>>()?;
        let refine = match method {
            BackendMethod::ExactMarkov => family.integer_slope_refinement().ok_or_else(|| {
                Error::Config("exact backend needs integer branch slopes across the family".into())
            })?,
            BackendMethod::Ulam => 1,
        };
        let refined = if refine > 1 {
            family
                .maps
                .iter()
                .enumerate()
                .map(|(i, m)| build_backend_indexed(m, refine * n_bins, method, i))
                .collect::<Result<Vec<_>>>()?
        } else {
            per_symbol.clone()
        };
        Ok(BackendSet { method, n_bins, family: family.clone(), per_symbol, refine, refined })
    }

    pub fn refine(&self) -> usize {
        self.refine
    }

    pub fn backend(&self, symbol: usize) -> &TransferBackend {
        &self.per_symbol[symbol]
    }

    pub fn refined_backend(&self, symbol: usize) -> &TransferBackend {
        &self.refined[symbol]
    }

    pub fn backend_at(&self, path: &OmegaPath, offset: i64) -> Result<&TransferBackend> {
        Ok(&self.per_symbol[path.symbol(offset)?])
    }

    pub fn refined_backend_at(&self, path: &OmegaPath, offset: i64) -> Result<&TransferBackend> {
        Ok(&self.refined[path.symbol(offset)?])
    }

    /// Apply the operators for offsets start, start+1, ..., start+steps-1 in
    /// that order. An empty composition is the identity.
    pub fn cocycle_apply(
        &self,
        path: &OmegaPath,
        start: i64,
        steps: usize,
        g: &GridFunction,
    ) -> Result<GridFunction> {
        path.require(start, start + steps as i64)?;
        let mut cur = g.clone();
        for k in 0..steps {
            cur = self.backend_at(path, start + k as i64)?.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Same walk on the refined grid.
    pub fn cocycle_apply_refined(
        &self,
        path: &OmegaPath,
        start: i64,
        steps: usize,
        g: &GridFunction,
    ) -> Result<GridFunction> {
        path.require(start, start + steps as i64)?;
        let mut cur = g.clone();
        for k in 0..steps {
            cur = self.refined_backend_at(path, start + k as i64)?.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Composition g . f realized on the refined grid by midpoint
    /// evaluation; exact for exact-Markov families, O(1/n_bins) for Ulam.
    pub fn compose(&self, symbol: usize, g_target: &GridFunction) -> Result<GridFunction> {
        if g_target.n_bins() != self.n_bins {
            return Err(Error::Shape { expected: self.n_bins, got: g_target.n_bins() });
        }
        let map = self.family.map(symbol)?;
        let rn = self.refine * self.n_bins;
        let rnf = rn as f64;
        let mut values = Vec::with_capacity(rn);
        for r in 0..rn {
            let mid = (r as f64 + 0.5) / rnf;
            values.push(g_target.eval(map.evaluate(mid)?));
        }
        GridFunction::new(values)
    }

    pub fn compose_at(&self, path: &OmegaPath, offset: i64, g_target: &GridFunction) -> Result<GridFunction> {
        self.compose(path.symbol(offset)?, g_target)
    }
}

/// Max of the two duality defects for one symbol:
/// |int (L phi) psi - int phi (psi . f)| and |L((psi . f) phi) - psi L phi|_1.
/// Exact-Markov backends drive both to machine precision.
pub fn duality_residual(set: &BackendSet, symbol: usize, phi: &GridFunction, psi: &GridFunction) -> Result<f64> {
    let r = set.refine();
    let lphi = set.backend(symbol).apply(phi)?;
    let psi_f = set.compose(symbol, psi)?;
    let phi_up = phi.upsample(r);
    let term1 = (lphi.inner(psi)? - phi_up.inner(&psi_f)?).abs();
    let product = psi_f.product(&phi_up)?;
    let lhs = set.refined_backend(symbol).apply(&product)?;
    let rhs = psi.product(&lphi)?.upsample(r);
    let term2 = lhs.l1_distance(&rhs)?;
    Ok(term1.max(term2))
}

/// Fitted constants of the iterated variation inequality
/// var(L^N g) <= alpha var(g) + k l1(g).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LyFit {
    pub iterate: usize,
    pub alpha: f64,
    pub k_const: f64,
    /// k / (1 - alpha), the iterated-form constant.
    pub c_iterated: f64,
    /// Largest excess var(L^N g) - (alpha var(g) + k l1(g)) over the samples.
    pub max_violation: f64,
}

/// Fit the variation inequality along a path by an envelope over random
/// test functions: spikes pin the variation coefficient, smooth profiles
/// pin the l1 coefficient.
pub fn fit_lasota_yorke(
    set: &BackendSet,
    path: &OmegaPath,
    iterate: usize,
    trials: usize,
    seed: u64,
) -> Result<LyFit> {
    use rand::Rng;
    let n = set.n_bins;
    let (lo, hi) = path.index_range();
    let max_start = hi - iterate as i64;
    if max_start < lo {
        return Err(Error::Window { need_lo: lo, need_hi: lo + iterate as i64, have_lo: lo, have_hi: hi });
    }
    let mut rng = crate::driving::stream(seed, 0x17A5);
    let mut starts = Vec::with_capacity(trials);
    for _ in 0..trials {
        let span = (max_start - lo + 1) as u64;
        starts.push(lo + (rng.random::<u64>() % span) as i64);
    }

    // spikes: mean-zero single-bin bumps; variation dominates
    let mut alpha: f64 = 0.0;
    for (t, &start) in starts.iter().enumerate() {
        let i = (t * 131 + 7) % n;
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        let spike = GridFunction::new(v)?;
        let out = set.cocycle_apply(path, start, iterate, &spike)?;
        alpha = alpha.max(out.variation() / spike.variation());
    }

    // low-variation profiles (ramps and interval indicators); l1 dominates
    let mut k_const: f64 = 0.0;
    let mut max_violation = f64::NEG_INFINITY;
    for (t, &start) in starts.iter().enumerate() {
        let g = if t % 2 == 0 {
            let a: f64 = rng.random::<f64>() * 2.0;
            let b: f64 = rng.random::<f64>() - 0.5;
            GridFunction::from_midpoints(n, move |x| a + b * x)
        } else {
            let w: f64 = 0.1 + 0.8 * rng.random::<f64>();
            GridFunction::from_midpoints(n, move |x| if x < w { 1.0 } else { 0.0 })
        };
        let out = set.cocycle_apply(path, start, iterate, &g)?;
        let excess = (out.variation() - alpha * g.variation()) / g.l1_norm();
        k_const = k_const.max(excess.max(0.0));
    }
    for &start in &starts {
        let g = GridFunction::from_midpoints(n, |x| (6.3 * x).sin().abs() + 0.2);
        let out = set.cocycle_apply(path, start, iterate, &g)?;
        let violation = out.variation() - alpha * g.variation() - k_const * g.l1_norm();
        max_violation = max_violation.max(violation);
    }
    let c_iterated = if alpha < 1.0 { k_const / (1.0 - alpha) } else { f64::INFINITY };
    Ok(LyFit { iterate, alpha, k_const, c_iterated, max_violation })
}

/// Empirical check of the uniform bound bv(L g) <= C bv(g).
#[derive(Clone, Debug, Serialize)]
pub struct UniformBoundReport {
    pub bound: f64,
    pub n_bins: usize,
    pub max_ratio: f64,
    pub violations: usize,
    pub trials: usize,
}

pub fn uniform_bound_check(
    family: &MapFamily,
    method: BackendMethod,
    bound: f64,
    n_bins: usize,
    trials: usize,
    seed: u64,
) -> Result<UniformBoundReport> {
    use rand::Rng;
    let set = BackendSet::build(family, n_bins, method)?;
    let mut rng = crate::driving::stream(seed, 0xB0B0);
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0usize;
    for t in 0..trials {
        let symbol = t % family.len();
        let g = GridFunction::new((0..n_bins).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect())?;
        let out = set.backend(symbol).apply(&g)?;
        let ratio = out.bv_norm() / g.bv_norm();
        max_ratio = max_ratio.max(ratio);
        if ratio > bound {
            violations += 1;
        }
    }
    Ok(UniformBoundReport { bound, n_bins, max_ratio, violations, trials })
}
