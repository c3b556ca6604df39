//! Fiberwise correlation decay, exponential-rate fitting, and the two
//! variance routes: the ensemble Green-Kubo sum and the single-path
//! fiberwise variance.
//!
//! Every number here is a grid quadrature routed through the transfer
//! cocycle; Monte Carlo sampling lives in the `limits` module so the two
//! error channels stay independent.

use crate::acim::{solve_equivariant, EquivariantDensity, SolveMethod};
use crate::driving::{derive_seed, sample_path, BaseSpec, OmegaPath};
use crate::error::{Error, Result};
use crate::spaces::GridFunction;
use crate::transfer::BackendSet;
use rayon::prelude::*;
use serde::Serialize;

/// A bounded-variation observable realized on the grid, either shared by
/// all fibers or chosen per driving symbol.
#[derive(Clone, Debug)]
pub struct Observable {
    data: ObservableData,
}

#[derive(Clone, Debug)]
enum ObservableData {
    Shared(GridFunction),
    PerSymbol(Vec<GridFunction>),
}

impl Observable {
    pub fn shared(g: GridFunction) -> Self {
        Observable { data: ObservableData::Shared(g) }
    }

    pub fn per_symbol(gs: Vec<GridFunction>) -> Result<Self> {
        if gs.is_empty() {
            return Err(Error::Config("per-symbol observable needs at least one fiber".into()));
        }
        if gs.iter().any(|g| g.n_bins() != gs[0].n_bins()) {
            return Err(Error::Shape { expected: gs[0].n_bins(), got: 0 });
        }
        Ok(Observable { data: ObservableData::PerSymbol(gs) })
    }

    pub fn on_symbol(&self, symbol: usize) -> &GridFunction {
        match &self.data {
            ObservableData::Shared(g) => g,
            ObservableData::PerSymbol(gs) => &gs[symbol % gs.len()],
        }
    }

    pub fn n_bins(&self) -> usize {
        match &self.data {
            ObservableData::Shared(g) => g.n_bins(),
            ObservableData::PerSymbol(gs) => gs[0].n_bins(),
        }
    }

    /// Declared bound: max bv norm over the fibers.
    pub fn bv_bound(&self) -> f64 {
        match &self.data {
            ObservableData::Shared(g) => g.bv_norm(),
            ObservableData::PerSymbol(gs) => gs.iter().map(|g| g.bv_norm()).fold(0.0, f64::max),
        }
    }
}

/// An observable centered fiber by fiber: at each stored offset k the mean
/// against the fiber measure h_k dm has been subtracted.
#[derive(Clone, Debug)]
pub struct CenteredObservable {
    first_offset: i64,
    fibers: Vec<GridFunction>,
}

impl CenteredObservable {
    pub fn offsets(&self) -> std::ops::Range<i64> {
        self.first_offset..self.first_offset + self.fibers.len() as i64
    }

    pub fn at(&self, offset: i64) -> Result<&GridFunction> {
        let r = self.offsets();
        if !r.contains(&offset) {
            return Err(Error::Window { need_lo: offset, need_hi: offset + 1, have_lo: r.start, have_hi: r.end });
        }
        Ok(&self.fibers[(offset - self.first_offset) as usize])
    }

    pub fn sup_bound(&self) -> f64 {
        self.fibers.iter().map(|g| g.sup_norm()).fold(0.0, f64::max)
    }

    /// True when every fiber is identically zero.
    pub fn is_null(&self) -> bool {
        self.fibers.iter().all(|g| g.sup_norm() == 0.0)
    }
}

/// Subtract the fiber mean at every offset covered by the density family.
pub fn center_observable(
    psi: &Observable,
    h: &EquivariantDensity,
    path: &OmegaPath,
) -> Result<CenteredObservable> {
    let offsets = h.offsets();
    path.require(offsets.start, offsets.end)?;
    let mut fibers = Vec::with_capacity((offsets.end - offsets.start) as usize);
    for k in offsets.clone() {
        let raw = psi.on_symbol(path.symbol(k)?);
        let mean = raw.inner(h.at(k)?)?;
        fibers.push(raw.shift_by(-mean));
    }
    Ok(CenteredObservable { first_offset: offsets.start, fibers })
}

/// Correlation sequence C_1..C_n_max along the path:
/// C_n = int L^(n)(phi h_0) psi_n dm - int phi h_0 dm * int psi_n h_n dm.
pub fn correlations(
    set: &BackendSet,
    path: &OmegaPath,
    phi: &Observable,
    psi: &Observable,
    h: &EquivariantDensity,
    n_max: usize,
) -> Result<Vec<f64>> {
    let r = h.offsets();
    if r.start > 0 || r.end < n_max as i64 + 1 {
        return Err(Error::Window { need_lo: 0, need_hi: n_max as i64 + 1, have_lo: r.start, have_hi: r.end });
    }
    path.require(0, n_max as i64 + 1)?;
    let phi0 = phi.on_symbol(path.symbol(0)?);
    let mean_phi = phi0.inner(h.at(0)?)?;
    let mut u = phi0.product(h.at(0)?)?;
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        u = set.backend_at(path, n as i64 - 1)?.apply(&u)?;
        let psi_n = psi.on_symbol(path.symbol(n as i64)?);
        let c = u.inner(psi_n)? - mean_phi * psi_n.inner(h.at(n as i64)?)?;
        out.push(c);
    }
    Ok(out)
}

/// Fitted exponential decay of a correlation sequence.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub k_hat: f64,
    pub rho_hat: f64,
    pub r2: f64,
    pub noise_floor: f64,
    pub usable_lags: usize,
}

/// Least-squares fit of log |C_n| against n over lags above the noise
/// floor. Needs at least 3 usable lags.
pub fn fit_decay(seq: &[f64], noise_floor: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = seq
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > noise_floor)
        .map(|(i, c)| ((i + 1) as f64, c.abs().ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Precondition(format!(
            "decay below noise floor: only {} usable lags (need 3)",
            pts.len()
        )));
    }
    let (slope, intercept, r2) = linear_fit(&pts);
    Ok(DecayFit {
        k_hat: intercept.exp(),
        rho_hat: slope.exp(),
        r2,
        noise_floor,
        usable_lags: pts.len(),
    })
}

/// Ordinary least squares on (x, y) points: slope, intercept, r^2.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Slope standard error of the OLS fit.
pub fn linear_fit_stderr(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return f64::INFINITY;
    }
    let (slope, intercept, _) = linear_fit(pts);
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sse: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    (sse / (n - 2.0) / sxx).sqrt()
}

/// Ensemble Green-Kubo variance report.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceReport {
    pub sigma2: f64,
    /// True when a tiny negative estimate was clipped to zero.
    pub clipped: bool,
    /// Ensemble-averaged partial sums after each lag 0..n_max.
    pub partial_sums: Vec<f64>,
    pub ensemble: usize,
    pub n_max: usize,
}

/// Green-Kubo variance: ensemble average over independent driving paths of
/// the fiber quadrature
/// int psi~^2 dmu + 2 sum_{n<=n_max} int psi~ (psi~ . f^n) dmu.
/// The observable is centered per fiber on each sampled path.
pub fn green_kubo_sigma2(
    set: &BackendSet,
    base: &BaseSpec,
    psi: &Observable,
    depth: usize,
    n_max: usize,
    ensemble: usize,
    seed: u64,
) -> Result<VarianceReport> {
    if n_max == 0 || ensemble == 0 {
        return Err(Error::Precondition("green-kubo needs n_max >= 1 and ensemble >= 1".into()));
    }
    let partials: Vec<Vec<f64>> = (0..ensemble)
        .into_par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let path = sample_path(base, depth, n_max + 1, derive_seed(seed, 0x6B00 + e as u64))?;
            let mut h = solve_equivariant(set, &path, depth, 0..1, SolveMethod::Pullback)?;
            h.extend_forward(set, &path, n_max as i64 + 1)?;
            let centered = center_observable(psi, &h, &path)?;
            let psi0 = centered.at(0)?;
            let mut s = psi0.product(psi0)?.inner(h.at(0)?)?;
            let mut row = Vec::with_capacity(n_max + 1);
            row.push(s);
            let mut u = psi0.product(h.at(0)?)?;
            for n in 1..=n_max {
                u = set.backend_at(&path, n as i64 - 1)?.apply(&u)?;
                s += 2.0 * u.inner(centered.at(n as i64)?)?;
                row.push(s);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = vec![0.0; n_max + 1];
    for row in &partials {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= ensemble as f64;
    }
    let raw = *mean.last().expect("nonempty");
    let clipped = raw < 0.0;
    Ok(VarianceReport {
        sigma2: if clipped { 0.0 } else { raw },
        clipped,
        partial_sums: mean,
        ensemble,
        n_max,
    })
}

/// Fiberwise variance sequence tau_1^2 .. tau_n^2 along one path, computed
/// by the pair-correlation expansion with a running pushed sum: when U_j
/// accumulates the pushed products of all earlier fibers,
/// tau_{j+1}^2 = tau_j^2 + int psi~_j^2 h_j dm + 2 int U_j psi~_j dm.
pub fn fiberwise_variance(
    set: &BackendSet,
    path: &OmegaPath,
    psi: &CenteredObservable,
    h: &EquivariantDensity,
    n: usize,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Precondition("fiberwise variance needs n >= 1".into()));
    }
    let r = h.offsets();
    if r.start > 0 || r.end < n as i64 {
        return Err(Error::Window { need_lo: 0, need_hi: n as i64, have_lo: r.start, have_hi: r.end });
    }
    let mut out = Vec::with_capacity(n);
    let mut tau = 0.0;
    let mut pushed = GridFunction::zeros(set.n_bins);
    for j in 0..n {
        let psi_j = psi.at(j as i64)?;
        let h_j = h.at(j as i64)?;
        let diag = psi_j.product(psi_j)?.inner(h_j)?;
        let cross = pushed.inner(psi_j)?;
        tau += diag + 2.0 * cross;
        out.push(tau);
        if j + 1 < n {
            let injected = pushed.add(&psi_j.product(h_j)?)?;
            pushed = set.backend_at(path, j as i64)?.apply(&injected)?;
        }
    }
    Ok(out)
}

/// Fitted slope of tau_n^2 against n over the second half of the sequence.
pub fn tau_slope(tau: &[f64]) -> f64 {
    let half = tau.len() / 2;
    let pts: Vec<(f64, f64)> = tau
        .iter()
        .enumerate()
        .skip(half.max(1))
        .map(|(i, t)| ((i + 1) as f64, *t))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    linear_fit(&pts).0
}
