//! Reverse-martingale decomposition of a centered observable along a path.
//!
//! The corrector sequence G is built by the one-step recursion
//! G_{k+1} = L_k((psi~_k + G_k) h_k) / h_{k+1} with G_0 = 0, or by the
//! closed-form sum G_n = (1/h_n) sum_{j<n} L^(n-j)(psi~_j h_j); the two are
//! algebraically identical and serve as each other's oracle. The
//! differences M_k = psi~_k + G_k - G_{k+1} . f_k live on the refined grid
//! where the composition is exact, so on exact backends the defining
//! identity L_k(h_k M_k) = 0 holds to machine precision, as do the
//! orthogonality and telescoping consequences checked here.

use crate::acim::EquivariantDensity;
use crate::driving::OmegaPath;
use crate::error::{Error, Result};
use crate::limits::sample_from_density;
use crate::spaces::GridFunction;
use crate::stats::{linear_fit, linear_fit_stderr, CenteredObservable};
use crate::transfer::BackendSet;
use serde::Serialize;

/// Fiber densities below this floor abort divisions instead of
/// regularizing: in-model densities are uniformly bounded below, so a
/// violation signals a configuration bug.
pub const DENSITY_FLOOR: f64 = 1e-8;

pub use crate::stats::center_observable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildMode {
    Recursion,
    ClosedForm,
    Both,
}

/// The corrector and martingale-difference sequences along a path.
#[derive(Clone, Debug)]
pub struct MartingaleSequences {
    /// G_0..G_n on the base grid; G_0 = 0 exactly.
    pub g_seq: Vec<GridFunction>,
    /// M_0..M_{n-1} on the refined grid.
    pub m_seq: Vec<GridFunction>,
    pub refine: usize,
    pub built_by: BuildMode,
    /// Max L1 gap between the recursion and closed-form correctors
    /// (populated when built with `BuildMode::Both`).
    pub cross_check_gap: Option<f64>,
}

impl MartingaleSequences {
    pub fn len(&self) -> usize {
        self.m_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_seq.is_empty()
    }

    pub fn sup_m(&self) -> f64 {
        self.m_seq.iter().map(|m| m.sup_norm()).fold(0.0, f64::max)
    }

    pub fn sup_g_bv(&self) -> f64 {
        self.g_seq.iter().map(|g| g.bv_norm()).fold(0.0, f64::max)
    }

    pub fn sup_m2_bv(&self) -> f64 {
        self.m_seq
            .iter()
            .map(|m| m.product(m).map(|m2| m2.bv_norm()).unwrap_or(f64::NAN))
            .fold(0.0, f64::max)
    }
}

fn require_fibers(
    psi: &CenteredObservable,
    h: &EquivariantDensity,
    path: &OmegaPath,
    n: usize,
) -> Result<()> {
    let need = n as i64 + 1;
    for (name, r) in [("centered observable", psi.offsets()), ("density family", h.offsets())] {
        if r.start > 0 || r.end < need {
            return Err(Error::Window { need_lo: 0, need_hi: need, have_lo: r.start, have_hi: r.end });
        }
        let _ = name;
    }
    path.require(0, n as i64)?;
    for k in 0..=n as i64 {
        let esinf = h.at(k)?.esinf();
        if esinf <= DENSITY_FLOOR {
            return Err(Error::DensityFloor { esinf, floor: DENSITY_FLOOR });
        }
    }
    Ok(())
}

fn recursion_correctors(
    set: &BackendSet,
    path: &OmegaPath,
    psi: &CenteredObservable,
    h: &EquivariantDensity,
    n: usize,
) -> Result<Vec<GridFunction>> {
    let mut g_seq = Vec::with_capacity(n + 1);
    g_seq.push(GridFunction::zeros(set.n_bins));
    for k in 0..n {
        let g_k = &g_seq[k];
        let w = psi.at(k as i64)?.add(g_k)?.product(h.at(k as i64)?)?;
        let pushed = set.backend_at(path, k as i64)?.apply(&w)?;
        g_seq.push(pushed.quotient(h.at(k as i64 + 1)?, DENSITY_FLOOR)?);
    }
    Ok(g_seq)
}

fn closed_form_correctors(
    set: &BackendSet,
    path: &OmegaPath,
    psi: &CenteredObservable,
    h: &EquivariantDensity,
    n: usize,
) -> Result<Vec<GridFunction>> {
    let mut g_seq = Vec::with_capacity(n + 1);
    g_seq.push(GridFunction::zeros(set.n_bins));
    // terms[j] carries L^(k-j)(psi~_j h_j); each is pushed separately and
    // the sum is re-taken fresh at every level
    let mut terms: Vec<GridFunction> = Vec::with_capacity(n);
    for k in 0..n {
        let backend = set.backend_at(path, k as i64)?;
        for t in terms.iter_mut() {
            *t = backend.apply(t)?;
        }
        terms.push(backend.apply(&psi.at(k as i64)?.product(h.at(k as i64)?)?)?);
        let mut sum = GridFunction::zeros(set.n_bins);
        for t in &terms {
            sum = sum.add(t)?;
        }
        g_seq.push(sum.quotient(h.at(k as i64 + 1)?, DENSITY_FLOOR)?);
    }
    Ok(g_seq)
}

/// Build the corrector and martingale-difference sequences up to index n.
pub fn decompose(
    set: &BackendSet,
    path: &OmegaPath,
    psi: &CenteredObservable,
    h: &EquivariantDensity,
    n: usize,
    mode: BuildMode,
) -> Result<MartingaleSequences> {
    if n == 0 {
        return Err(Error::Precondition("decomposition needs n >= 1".into()));
    }
    require_fibers(psi, h, path, n)?;
    let (g_seq, cross_check_gap) = match mode {
        BuildMode::Recursion => (recursion_correctors(set, path, psi, h, n)?, None),
        BuildMode::ClosedForm => (closed_form_correctors(set, path, psi, h, n)?, None),
        BuildMode::Both => {
            let rec = recursion_correctors(set, path, psi, h, n)?;
            let closed = closed_form_correctors(set, path, psi, h, n)?;
            let mut gap: f64 = 0.0;
            for (a, b) in rec.iter().zip(&closed) {
                gap = gap.max(a.l1_distance(b)?);
            }
            (rec, Some(gap))
        }
    };
    let r = set.refine();
    let mut m_seq = Vec::with_capacity(n);
    for k in 0..n {
        let composed = set.compose_at(path, k as i64, &g_seq[k + 1])?;
        let m = psi.at(k as i64)?.upsample(r).add(&g_seq[k].upsample(r))?.sub(&composed)?;
        m_seq.push(m);
    }
    Ok(MartingaleSequences { g_seq, m_seq, refine: r, built_by: mode, cross_check_gap })
}

/// Fiber function whose composition with the n-step orbit map realizes the
/// conditional expectation of phi . f^l on the n-step pullback algebra:
/// L^(n-l)(h_l phi) / h_n.
pub fn conditional_expectation(
    set: &BackendSet,
    path: &OmegaPath,
    phi: &GridFunction,
    l: usize,
    n: usize,
    h: &EquivariantDensity,
) -> Result<GridFunction> {
    if l > n {
        return Err(Error::Precondition(format!("conditioning needs l <= n, got l = {l}, n = {n}")));
    }
    let weighted = h.at(l as i64)?.product(phi)?;
    let pushed = set.cocycle_apply(path, l as i64, n - l, &weighted)?;
    pushed.quotient(h.at(n as i64)?, DENSITY_FLOOR)
}

/// Max over k of |L_k(h_k M_k)|_1, the defining identity of the reverse
/// martingale; zero in exact arithmetic.
pub fn martingale_residual(
    set: &BackendSet,
    path: &OmegaPath,
    seqs: &MartingaleSequences,
    h: &EquivariantDensity,
) -> Result<f64> {
    let r = set.refine();
    let mut worst: f64 = 0.0;
    for (k, m_k) in seqs.m_seq.iter().enumerate() {
        let weighted = h.at(k as i64)?.upsample(r).product(m_k)?;
        let pushed = set.refined_backend_at(path, k as i64)?.apply(&weighted)?;
        worst = worst.max(pushed.l1_norm());
    }
    Ok(worst)
}

/// Max over pairs i < j <= upto of |E(X_i X_j)| where X_k = M_k . f^k,
/// computed by pushing h_i M_i forward j - i steps and pairing with M_j.
pub fn orthogonality_residual(
    set: &BackendSet,
    path: &OmegaPath,
    seqs: &MartingaleSequences,
    h: &EquivariantDensity,
    upto: usize,
) -> Result<f64> {
    let last = upto.min(seqs.m_seq.len() - 1);
    let r = set.refine();
    let mut worst: f64 = 0.0;
    for i in 0..last {
        let mut u = h.at(i as i64)?.upsample(r).product(&seqs.m_seq[i])?;
        for j in i + 1..=last {
            u = set.refined_backend_at(path, j as i64 - 1)?.apply(&u)?;
            worst = worst.max(u.inner(&seqs.m_seq[j])?.abs());
        }
    }
    Ok(worst)
}

/// Max over sampled start points of the telescoping defect
/// |sum_k M_k(x_k) - (sum_k psi~_k(x_k) - G_n(x_n))| along forward orbits.
pub fn telescoping_residual(
    set: &BackendSet,
    path: &OmegaPath,
    seqs: &MartingaleSequences,
    psi: &CenteredObservable,
    h: &EquivariantDensity,
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    let n = seqs.m_seq.len();
    let mut rng = crate::driving::stream(seed, 0x7E1E);
    let mut worst: f64 = 0.0;
    for _ in 0..n_points {
        let mut x = sample_from_density(h.at(0)?, &mut rng);
        let mut sum_m = 0.0;
        let mut sum_psi = 0.0;
        for k in 0..n {
            sum_m += seqs.m_seq[k].eval(x);
            sum_psi += psi.at(k as i64)?.eval(x);
            x = set.family.map(path.symbol(k as i64)?)?.evaluate(x)?;
        }
        let rhs = sum_psi - seqs.g_seq[n].eval(x);
        worst = worst.max((sum_m - rhs).abs());
    }
    Ok(worst)
}

/// Numerical hypothesis checks feeding the coupling theorem.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CmtChecks {
    /// sigma_n^2 = sum of step second moments at the full horizon.
    pub sigma2_total: f64,
    /// (sigma_n^2 / n) / (sigma_{n/2}^2 / (n/2)); near 1 for linear growth.
    pub sigma2_growth_ratio: f64,
    pub sup_step_second_moment: f64,
    pub sup_martingale_sup: f64,
    /// a_n / sigma_n^2 non-increasing over the tail, a_n = n^(1/2 + d).
    pub a_over_sigma2_nonincreasing: bool,
    /// a_n / sigma_n non-decreasing over the tail.
    pub a_over_sigma_nondecreasing: bool,
}

/// The fluctuation diagnostic of the conditional variances.
#[derive(Clone, Debug, Serialize)]
pub struct SprindzukReport {
    pub skipped: bool,
    /// Cumulative sum of step second moments plus var norms of M_k^2.
    pub theta: Vec<f64>,
    pub step_second_moments: Vec<f64>,
    pub m2_var_norms: Vec<f64>,
    /// sup over k of the sup norm of the conditional variance function
    /// L_k(h_k M_k^2) / h_(k+1).
    pub sup_conditional_m2: f64,
    /// Fitted exponent of log mean max_{m<=n} |D_m| against log n.
    pub slope: f64,
    pub slope_stderr: f64,
    pub checkpoints: Vec<(usize, f64)>,
    pub d_exponent: f64,
    /// Spread of the estimator at the final horizon.
    pub d_final_sd: f64,
    pub cmt: CmtChecks,
}

fn skipped_report(d_exponent: f64) -> SprindzukReport {
    SprindzukReport {
        skipped: true,
        theta: Vec::new(),
        step_second_moments: Vec::new(),
        m2_var_norms: Vec::new(),
        sup_conditional_m2: 0.0,
        slope: f64::NAN,
        slope_stderr: f64::NAN,
        checkpoints: Vec::new(),
        d_exponent,
        d_final_sd: 0.0,
        cmt: CmtChecks {
            sigma2_total: 0.0,
            sigma2_growth_ratio: f64::NAN,
            sup_step_second_moment: 0.0,
            sup_martingale_sup: 0.0,
            a_over_sigma2_nonincreasing: true,
            a_over_sigma_nondecreasing: true,
        },
    }
}

/// Track the centered conditional-variance sums D_n along sampled orbits
/// and fit their growth exponent; also accumulate the deterministic
/// quadrature pieces (step second moments, var norms, their cumulative
/// sum) and the numerical hypothesis checks.
pub fn sprindzuk_diagnostic(
    set: &BackendSet,
    path: &OmegaPath,
    seqs: &MartingaleSequences,
    h: &EquivariantDensity,
    n_max: usize,
    trajectories: &[Vec<f64>],
    d_exponent: f64,
) -> Result<SprindzukReport> {
    if seqs.m_seq.len() < n_max {
        return Err(Error::Precondition(format!(
            "sequences built to {}, diagnostic needs {n_max}",
            seqs.m_seq.len()
        )));
    }
    if seqs.sup_m() == 0.0 {
        return Ok(skipped_report(d_exponent));
    }
    if trajectories.is_empty() || trajectories.iter().any(|t| t.len() < n_max + 1) {
        return Err(Error::Precondition("trajectories must cover n_max + 1 points".into()));
    }
    let r = set.refine();
    let n_samples = trajectories.len();

    let mut checkpoints_n = Vec::new();
    let mut v = 8usize.min(n_max);
    while v < n_max {
        checkpoints_n.push(v);
        v = (v as f64 * 1.4).ceil() as usize;
    }
    checkpoints_n.push(n_max);

    let mut step_second_moments = Vec::with_capacity(n_max);
    let mut m2_var_norms = Vec::with_capacity(n_max);
    let mut theta = Vec::with_capacity(n_max);
    let mut theta_cum = 0.0;
    let mut sup_conditional_m2: f64 = 0.0;
    let mut d_run = vec![0.0f64; n_samples];
    let mut d_max = vec![0.0f64; n_samples];
    let mut mean_max_at = Vec::with_capacity(checkpoints_n.len());
    let mut ci = 0;
    for k in 0..n_max {
        let m2 = seqs.m_seq[k].product(&seqs.m_seq[k])?;
        let h_up = h.at(k as i64)?.upsample(r);
        let e_k = m2.inner(&h_up)?;
        let weighted = h_up.product(&m2)?;
        let pushed = set.refined_backend_at(path, k as i64)?.apply(&weighted)?;
        let ce = pushed.quotient(&h.at(k as i64 + 1)?.upsample(r), DENSITY_FLOOR)?;
        sup_conditional_m2 = sup_conditional_m2.max(ce.sup_norm());
        for (s, traj) in trajectories.iter().enumerate() {
            d_run[s] += ce.eval(traj[k + 1]) - e_k;
            d_max[s] = d_max[s].max(d_run[s].abs());
        }
        step_second_moments.push(e_k);
        m2_var_norms.push(m2.var_norm());
        theta_cum += e_k + m2.var_norm();
        theta.push(theta_cum);
        if ci < checkpoints_n.len() && k + 1 == checkpoints_n[ci] {
            mean_max_at.push(d_max.iter().sum::<f64>() / n_samples as f64);
            ci += 1;
        }
    }

    let checkpoints: Vec<(usize, f64)> =
        checkpoints_n.iter().cloned().zip(mean_max_at.iter().cloned()).collect();
    // the exponent is an asymptotic quantity: fit over the upper half of
    // the log-range so the ramp-up of the running max does not bias it
    let lo_ln = (checkpoints_n[0] as f64).ln();
    let hi_ln = (n_max as f64).ln();
    let cut = 0.5 * (lo_ln + hi_ln);
    let mut pts: Vec<(f64, f64)> = checkpoints
        .iter()
        .filter(|(n, m)| *m > 0.0 && (*n as f64).ln() >= cut)
        .map(|(n, m)| ((*n as f64).ln(), m.ln()))
        .collect();
    if pts.len() < 3 {
        pts = checkpoints
            .iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(n, m)| ((*n as f64).ln(), m.ln()))
            .collect();
    }
    let (slope, slope_stderr) = if pts.len() >= 3 {
        (linear_fit(&pts).0, linear_fit_stderr(&pts))
    } else {
        (f64::NAN, f64::NAN)
    };

    let sigma2: Vec<f64> = step_second_moments
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e;
            Some(*acc)
        })
        .collect();
    let half = n_max / 2;
    let sigma2_growth_ratio = (sigma2[n_max - 1] / n_max as f64) / (sigma2[half - 1] / half as f64);
    let tail = n_max / 2;
    let a_n = |n: usize| (n as f64).powf(0.5 + d_exponent);
    let mut nonincreasing = true;
    let mut nondecreasing = true;
    for k in tail..n_max - 1 {
        if a_n(k + 2) / sigma2[k + 1] > a_n(k + 1) / sigma2[k] * (1.0 + 1e-9) {
            nonincreasing = false;
        }
        if a_n(k + 2) / sigma2[k + 1].sqrt() < a_n(k + 1) / sigma2[k].sqrt() * (1.0 - 1e-9) {
            nondecreasing = false;
        }
    }
    let mean_final = d_run.iter().sum::<f64>() / n_samples as f64;
    let d_final_sd = (d_run.iter().map(|d| (d - mean_final).powi(2)).sum::<f64>()
        / (n_samples.max(2) - 1) as f64)
        .sqrt();

    Ok(SprindzukReport {
        skipped: false,
        theta,
        step_second_moments: step_second_moments.clone(),
        m2_var_norms,
        sup_conditional_m2,
        slope,
        slope_stderr,
        checkpoints,
        d_exponent,
        d_final_sd,
        cmt: CmtChecks {
            sigma2_total: sigma2[n_max - 1],
            sigma2_growth_ratio,
            sup_step_second_moment: step_second_moments.iter().cloned().fold(0.0, f64::max),
            sup_martingale_sup: seqs.sup_m(),
            a_over_sigma2_nonincreasing: nonincreasing,
            a_over_sigma_nondecreasing: nondecreasing,
        },
    })
}
