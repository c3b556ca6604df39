//! Equivariant fiber densities of the transfer cocycle.
//!
//! The family {h_k} (one density per path offset) is computed by pulling
//! the constant density back through the cocycle: h_k is the image of 1
//! under the `depth` operators ending at offset k, renormalized. A
//! fixed-point power iteration is available as an oracle for single-map
//! families. Equivariance L_k h_k = h_{k+1} is then checked a posteriori,
//! never assumed.

use crate::driving::{stream, OmegaPath};
use crate::error::{Error, Result};
use crate::spaces::{cone_contains, hilbert_metric, sample_cone_element, ConeParams, GridFunction};
use crate::transfer::BackendSet;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// How the density family is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Pull the constant density back `depth` steps to each offset.
    Pullback,
    /// Power iteration on the single backend (single-map families only).
    ExactFixedPoint,
}

/// The solved family of fiber densities along a path.
#[derive(Clone, Debug)]
pub struct EquivariantDensity {
    first_offset: i64,
    densities: Vec<GridFunction>,
    pub depth: usize,
    pub method: SolveMethod,
    /// L1 gap between the depth and depth-5 pullbacks at the first offset;
    /// above 1e-6 the family is flagged unconverged.
    pub convergence_gap: f64,
    /// Min over stored offsets of esinf h_k.
    pub c_lower: f64,
}

impl EquivariantDensity {
    #[doc(hidden)]
    pub fn from_parts(first_offset: i64, densities: Vec<GridFunction>, depth: usize) -> Self {
        let mut d = EquivariantDensity {
            first_offset,
            densities,
            depth,
            method: SolveMethod::Pullback,
            convergence_gap: 0.0,
            c_lower: 0.0,
        };
        d.update_c_lower();
        d
    }

    pub fn offsets(&self) -> std::ops::Range<i64> {
        self.first_offset..self.first_offset + self.densities.len() as i64
    }

    pub fn at(&self, offset: i64) -> Result<&GridFunction> {
        let r = self.offsets();
        if !r.contains(&offset) {
            return Err(Error::Window { need_lo: offset, need_hi: offset + 1, have_lo: r.start, have_hi: r.end });
        }
        Ok(&self.densities[(offset - self.first_offset) as usize])
    }

    pub fn converged(&self) -> bool {
        self.convergence_gap <= 1e-6
    }

    pub fn n_bins(&self) -> usize {
        self.densities[0].n_bins()
    }

    fn update_c_lower(&mut self) {
        self.c_lower = self.densities.iter().map(|h| h.esinf()).fold(f64::INFINITY, f64::min);
    }

    /// Extend the family to cover offsets up to `upto` (exclusive) by
    /// pushing the last stored density forward. A forward push of a depth-d
    /// pullback is a depth-(d+1) pullback, so the extension only improves
    /// convergence.
    pub fn extend_forward(&mut self, set: &BackendSet, path: &OmegaPath, upto: i64) -> Result<()> {
        let mut last = self.offsets().end;
        while last < upto {
            let prev = self.densities.last().expect("nonempty").clone();
            let next = set.backend_at(path, last - 1)?.apply(&prev)?.normalize_mass()?;
            self.densities.push(next);
            last += 1;
        }
        self.update_c_lower();
        Ok(())
    }
}

fn pullback(set: &BackendSet, path: &OmegaPath, offset: i64, depth: usize) -> Result<GridFunction> {
    let one = GridFunction::constant(set.n_bins, 1.0);
    set.cocycle_apply(path, offset - depth as i64, depth, &one)?.normalize_mass()
}

/// Power iteration on one backend to L1 residual 1e-13.
pub fn fixed_point_density(set: &BackendSet, symbol: usize) -> Result<GridFunction> {
    let mut v = GridFunction::constant(set.n_bins, 1.0);
    for _ in 0..100_000 {
        let next = set.backend(symbol).apply(&v)?.normalize_mass()?;
        let gap = next.l1_distance(&v)?;
        v = next;
        if gap <= 1e-13 {
            return Ok(v);
        }
    }
    Err(Error::Numerical { branch: symbol, message: "fixed-point iteration did not reach 1e-13".into() })
}

/// Solve for the density family on `offsets` along `path`.
pub fn solve_equivariant(
    set: &BackendSet,
    path: &OmegaPath,
    depth: usize,
    offsets: std::ops::Range<i64>,
    method: SolveMethod,
) -> Result<EquivariantDensity> {
    if offsets.is_empty() {
        return Err(Error::Precondition("offset range is empty".into()));
    }
    match method {
        SolveMethod::ExactFixedPoint => {
            if set.family.len() != 1 {
                return Err(Error::Precondition(
                    "exact fixed point is only defined for single-map families".into(),
                ));
            }
            let h = fixed_point_density(set, 0)?;
            let densities = vec![h; (offsets.end - offsets.start) as usize];
            let mut d = EquivariantDensity {
                first_offset: offsets.start,
                densities,
                depth: 0,
                method,
                convergence_gap: 0.0,
                c_lower: 0.0,
            };
            d.update_c_lower();
            Ok(d)
        }
        SolveMethod::Pullback => {
            if depth == 0 {
                return Err(Error::Precondition("pullback depth must be at least 1".into()));
            }
            path.require(offsets.start - depth as i64, offsets.end)?;
            let ks: Vec<i64> = offsets.clone().collect();
            let densities: Vec<GridFunction> = ks
                .par_iter()
                .map(|&k| pullback(set, path, k, depth))
                .collect::<Result<Vec<_>>>()?;
            let convergence_gap = if depth > 5 {
                let shallow = pullback(set, path, offsets.start, depth - 5)?;
                densities[0].l1_distance(&shallow)?
            } else {
                f64::INFINITY
            };
            let mut d = EquivariantDensity {
                first_offset: offsets.start,
                densities,
                depth,
                method,
                convergence_gap,
                c_lower: 0.0,
            };
            d.update_c_lower();
            Ok(d)
        }
    }
}

/// Max over consecutive stored offsets of |L_k h_k - h_{k+1}|_1.
pub fn equivariance_residual(set: &BackendSet, path: &OmegaPath, h: &EquivariantDensity) -> Result<f64> {
    let r = h.offsets();
    if r.end - r.start < 2 {
        return Err(Error::Precondition("equivariance needs at least two consecutive offsets".into()));
    }
    let mut worst: f64 = 0.0;
    for k in r.start..r.end - 1 {
        let pushed = set.backend_at(path, k)?.apply(h.at(k)?)?;
        worst = worst.max(pushed.l1_distance(h.at(k + 1)?)?);
    }
    Ok(worst)
}

/// Empirical uniform lower bound: the minimum of esinf over cocycle images
/// of random unit-mass cone elements pushed `n` steps from random offsets.
pub fn minoration_estimate(
    set: &BackendSet,
    path: &OmegaPath,
    cone: &ConeParams,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 || trials == 0 {
        return Err(Error::Precondition("minoration needs n >= 1 and trials >= 1".into()));
    }
    let (lo, hi) = path.index_range();
    let max_start = hi - n as i64;
    if max_start < lo {
        return Err(Error::Window { need_lo: lo, need_hi: lo + n as i64, have_lo: lo, have_hi: hi });
    }
    let span = (max_start - lo + 1) as u64;
    let results: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = stream(seed, 0x3100 + t as u64);
            let start = lo + (rng.random::<u64>() % span) as i64;
            let g = sample_cone_element(set.n_bins, cone, &mut rng)?;
            let out = set.cocycle_apply(path, start, n, &g)?;
            Ok(out.esinf())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().fold(f64::INFINITY, f64::min))
}

/// Contraction statistics of the cocycle on the cone.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConeContractionReport {
    /// Fraction of pushed samples landing in the half-aperture cone.
    pub inclusion_rate: f64,
    /// Max ratio theta_after / theta_before over pairs with finite metric.
    pub kappa_hat: f64,
    /// Max theta_after over pairs (diameter proxy).
    pub delta_hat: f64,
    /// tanh(delta_hat / 4), the Birkhoff bound kappa should respect.
    pub tanh_bound: f64,
    pub pairs_used: usize,
}

/// Push random cone pairs `steps` times and measure projective contraction
/// and inclusion into the half-aperture cone.
pub fn cone_contraction_check(
    set: &BackendSet,
    path: &OmegaPath,
    cone: &ConeParams,
    steps: usize,
    pairs: usize,
    seed: u64,
) -> Result<ConeContractionReport> {
    let (lo, hi) = path.index_range();
    let max_start = hi - steps as i64;
    if max_start < lo {
        return Err(Error::Window { need_lo: lo, need_hi: lo + steps as i64, have_lo: lo, have_hi: hi });
    }
    let span = (max_start - lo + 1) as u64;
    let half = cone.halved();
    let samples: Vec<(bool, bool, f64, f64)> = (0..pairs)
        .into_par_iter()
        .map(|p| -> Result<(bool, bool, f64, f64)> {
            let mut rng = stream(seed, 0xC0DE + p as u64);
            let start = lo + (rng.random::<u64>() % span) as i64;
            let phi = sample_cone_element(set.n_bins, cone, &mut rng)?;
            let psi = sample_cone_element(set.n_bins, cone, &mut rng)?;
            let before = hilbert_metric(&phi, &psi, cone)?.theta;
            let phi_n = set.cocycle_apply(path, start, steps, &phi)?;
            let psi_n = set.cocycle_apply(path, start, steps, &psi)?;
            let inc_phi = cone_contains(&phi_n, &half);
            let inc_psi = cone_contains(&psi_n, &half);
            let after = hilbert_metric(&phi_n, &psi_n, cone)?.theta;
            Ok((inc_phi, inc_psi, before, after))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut included = 0usize;
    let mut kappa_hat: f64 = 0.0;
    let mut delta_hat: f64 = 0.0;
    let mut finite = 0usize;
    for &(a, b, before, after) in &samples {
        included += a as usize + b as usize;
        if before.is_finite() && after.is_finite() && before > 1e-12 {
            kappa_hat = kappa_hat.max(after / before);
            delta_hat = delta_hat.max(after);
            finite += 1;
        }
    }
    if finite == 0 {
        return Err(Error::Sampling(
            "all sampled pairs had infinite projective distance; try a larger cone aperture".into(),
        ));
    }
    Ok(ConeContractionReport {
        inclusion_rate: included as f64 / (2 * samples.len()) as f64,
        kappa_hat,
        delta_hat,
        tanh_bound: (delta_hat / 4.0).tanh(),
        pairs_used: finite,
    })
}
