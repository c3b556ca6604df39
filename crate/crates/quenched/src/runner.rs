//! Experiment orchestration: run every section of the laboratory over one
//! configuration, assemble a deterministic JSON report plus CSV artifacts,
//! and evaluate the configured assertions.
//!
//! Reports never contain JSON nulls: optional sections are tagged
//! skipped-with-reason enums, and every float is checked finite before
//! serialization, so a NaN anywhere fails the run loudly. Wall-clock
//! timings go to a separate file to keep report.json byte-identical across
//! reruns of the same config.

use crate::acim::{
    cone_contraction_check, equivariance_residual, minoration_estimate, solve_equivariant,
    ConeContractionReport, SolveMethod,
};
use crate::config::ExperimentConfig;
use crate::driving::{derive_seed, sample_path};
use crate::error::{Error, Result};
use crate::limits::{
    asip_error_scaling, birkhoff_samples, clt_test, coboundary_test, sample_trajectories,
    BirkhoffSamples, CltReport, CoboundaryReport, CoboundaryVerdict,
};
use crate::maps::UniformConstants;
use crate::martingale::{
    conditional_expectation, decompose, martingale_residual, orthogonality_residual,
    sprindzuk_diagnostic, telescoping_residual, BuildMode,
};
use crate::spaces::{ConeParams, GridFunction};
use crate::stats::{
    center_observable, correlations, fiberwise_variance, fit_decay, green_kubo_sigma2, tau_slope,
    DecayFit, VarianceReport,
};
use crate::transfer::{fit_lasota_yorke, uniform_bound_check, BackendSet, LyFit, UniformBoundReport};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// A section that may be skipped with an explicit reason.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Section<T: Serialize> {
    Computed { data: T },
    Skipped { reason: String },
}

impl<T: Serialize> Section<T> {
    pub fn data(&self) -> Option<&T> {
        match self {
            Section::Computed { data } => Some(data),
            Section::Skipped { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsSection {
    pub branch_count: usize,
    pub expansion: f64,
    pub distortion: f64,
    pub bv_bound: f64,
    pub composition_refine: usize,
    pub ly: LyFit,
    pub uniform_bound_checks: Vec<UniformBoundReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensitySection {
    pub depth: usize,
    pub pullback_offsets: usize,
    pub equivariance_residual: f64,
    pub min_esinf: f64,
    pub max_bv: f64,
    pub convergence_gap: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DecayFitOutcome {
    Fitted { fit: DecayFit },
    BelowNoiseFloor { reason: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct DecaySection {
    pub correlations: Vec<f64>,
    pub noise_floor: f64,
    pub fit: DecayFitOutcome,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceSection {
    pub green_kubo: VarianceReport,
    pub tau_final: f64,
    pub tau_over_n_final: f64,
    pub tau_fit_slope: f64,
    /// |tau_n^2 / n - sigma^2| / sigma^2 at the final horizon (0 when the
    /// variance degenerates).
    pub route_disagreement: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleSection {
    pub horizon: usize,
    pub cross_check_gap: f64,
    pub residual: f64,
    pub orthogonality: f64,
    pub telescoping: f64,
    pub conditional_expectation_defect: f64,
    pub sup_corrector_bv: f64,
    pub sup_m2_bv: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SprindzukSection {
    pub horizon: usize,
    pub slope: f64,
    pub slope_stderr: f64,
    pub theta_over_n_first: f64,
    pub theta_over_n_last: f64,
    pub d_exponent: f64,
    pub d_final_sd: f64,
    pub sigma2_growth_ratio: f64,
    pub sup_step_second_moment: f64,
    pub sup_martingale_sup: f64,
    pub a_over_sigma2_nonincreasing: bool,
    pub a_over_sigma_nondecreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeSection {
    pub aperture: f64,
    pub steps: usize,
    pub minoration_c: f64,
    pub min_esinf_h: f64,
    pub contraction: ConeContractionReport,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AsipSection {
    Fitted {
        exponent: f64,
        ci_low: f64,
        ci_high: f64,
        label: String,
    },
    Degenerate {
        reason: String,
        label: String,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub constants: ConstantsSection,
    pub density: DensitySection,
    pub decay: DecaySection,
    pub variance: VarianceSection,
    pub martingale: Section<MartingaleSection>,
    pub sprindzuk: Section<SprindzukSection>,
    pub cone: ConeSection,
    pub clt: Section<CltReport>,
    pub coboundary: CoboundaryReport,
    pub asip: Section<AsipSection>,
    pub assertions: Vec<AssertionOutcome>,
    pub all_assertions_passed: bool,
}

/// Result of a full run.
pub struct RunOutcome {
    pub report: ExperimentReport,
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
    /// (section, seconds), written separately from the report.
    pub timings: Vec<(String, f64)>,
}

/// Probe the pullback contraction rate on a coarse grid and choose the
/// smallest depth with fitted decay below 1e-10, capped at 200.
pub fn probe_default_depth(cfg: &ExperimentConfig) -> Result<usize> {
    let family = cfg.build_family()?;
    let probe_bins = cfg.n_bins.min(256);
    let set = BackendSet::build(&family, probe_bins, crate::transfer::BackendMethod::Ulam)?;
    let path = sample_path(&cfg.base, 64, 1, derive_seed(cfg.seed, 0xDEE9))?;
    let one = GridFunction::constant(probe_bins, 1.0);
    let mut prev = set.cocycle_apply(&path, -1, 1, &one)?.normalize_mass()?;
    let mut gaps = Vec::new();
    for d in 2..=60usize {
        let cur = set.cocycle_apply(&path, -(d as i64), d, &one)?.normalize_mass()?;
        gaps.push(cur.l1_distance(&prev)?);
        prev = cur;
    }
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| **g > 1e-13)
        .map(|(i, g)| ((i + 2) as f64, g.ln()))
        .collect();
    if pts.len() < 3 {
        return Ok(20);
    }
    let (slope, _, _) = crate::stats::linear_fit(&pts);
    let rho = slope.exp();
    if !(rho > 0.0 && rho < 1.0) {
        return Ok(200);
    }
    let depth = ((1e-10f64).ln() / rho.ln()).ceil() as usize;
    Ok(depth.clamp(20, 200))
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical { branch: 0, message: format!("non-finite value in report field {name}: {v}") })
    }
}

/// Recursively reject JSON nulls; sections encode skips explicitly, so a
/// null can only come from a non-finite float.
fn reject_nulls(value: &serde_json::Value, path: &str, bad: &mut Vec<String>) {
    match value {
        serde_json::Value::Null => bad.push(path.to_string()),
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                reject_nulls(item, &format!("{path}[{i}]"), bad);
            }
        }
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                reject_nulls(v, &format!("{path}.{k}"), bad);
            }
        }
        _ => {}
    }
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    Ok(())
}

fn csv_num(v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::Numerical { branch: 0, message: format!("non-finite value in CSV artifact: {v}") });
    }
    Ok(format!("{v}"))
}

struct Timer {
    start: Instant,
    laps: Vec<(String, f64)>,
}

impl Timer {
    fn new() -> Self {
        Timer { start: Instant::now(), laps: Vec::new() }
    }
    fn lap(&mut self, name: &str) {
        self.laps.push((name.to_string(), self.start.elapsed().as_secs_f64()));
        self.start = Instant::now();
    }
}

/// Run every section over one configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut timer = Timer::new();
    let family = cfg.build_family()?;
    let constants: UniformConstants = family.constants()?;
    let set = BackendSet::build(&family, cfg.n_bins, cfg.method)?;
    let depth = match cfg.depth {
        Some(d) => d,
        None => probe_default_depth(cfg)?,
    };
    let mut echoed = cfg.clone();
    echoed.depth = Some(depth);
    timer.lap("setup");

    let n_future = cfg.max_horizon() as i64 + 2;
    let path = sample_path(&cfg.base, depth + 8, n_future as usize, cfg.seed)?;
    let pullback_offsets = cfg.horizons.density_offsets.min(n_future as usize - 1);
    let mut h = solve_equivariant(&set, &path, depth, 0..pullback_offsets as i64, SolveMethod::Pullback)?;
    let equiv_residual = equivariance_residual(&set, &path, &h)?;
    h.extend_forward(&set, &path, n_future)?;
    let max_bv = (0..pullback_offsets as i64)
        .map(|k| h.at(k).map(|g| g.bv_norm()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let density = DensitySection {
        depth,
        pullback_offsets,
        equivariance_residual: finite("equivariance_residual", equiv_residual)?,
        min_esinf: finite("min_esinf", h.c_lower)?,
        max_bv: finite("max_bv", max_bv)?,
        convergence_gap: finite("convergence_gap", h.convergence_gap)?,
        converged: h.converged(),
    };
    timer.lap("density");

    let ly = fit_lasota_yorke(&set, &path, family.ly_iterate()?, 40, derive_seed(cfg.seed, 1))?;
    // grid-refinement probe of the uniform bound; the interval-measure
    // backend applies to every map at every resolution
    let mut uniform_bound_checks = Vec::new();
    for n in [64usize, 256, 1024] {
        if n <= cfg.n_bins {
            uniform_bound_checks.push(uniform_bound_check(
                &family,
                crate::transfer::BackendMethod::Ulam,
                constants.bv_bound,
                n,
                40,
                derive_seed(cfg.seed, 2),
            )?);
        }
    }
    let constants_section = ConstantsSection {
        branch_count: constants.branch_count,
        expansion: constants.expansion,
        distortion: constants.distortion,
        bv_bound: constants.bv_bound,
        composition_refine: set.refine(),
        ly,
        uniform_bound_checks,
    };
    timer.lap("constants");

    let psi = cfg.observable.build(cfg.n_bins)?;
    let centered = center_observable(&psi, &h, &path)?;
    let corr = correlations(&set, &path, &psi, &psi, &h, cfg.horizons.decay_n_max)?;
    let noise_floor = 10.0 / cfg.n_bins as f64;
    let fit = match fit_decay(&corr, noise_floor) {
        Ok(f) => DecayFitOutcome::Fitted { fit: f },
        Err(e) => DecayFitOutcome::BelowNoiseFloor { reason: format!("{e}") },
    };
    for (i, c) in corr.iter().enumerate() {
        finite(&format!("correlations[{i}]"), *c)?;
    }
    let decay = DecaySection { correlations: corr.clone(), noise_floor, fit };
    timer.lap("decay");

    let gk = green_kubo_sigma2(
        &set,
        &cfg.base,
        &psi,
        depth,
        cfg.horizons.variance_n_max,
        cfg.monte_carlo.ensemble,
        derive_seed(cfg.seed, 3),
    )?;
    let tau = fiberwise_variance(&set, &path, &centered, &h, cfg.horizons.tau_n_max)?;
    let tau_final = *tau.last().expect("nonempty");
    let tau_over_n = tau_final / cfg.horizons.tau_n_max as f64;
    let route_disagreement = if gk.sigma2 > 1e-9 { (tau_over_n - gk.sigma2).abs() / gk.sigma2 } else { 0.0 };
    let variance = VarianceSection {
        green_kubo: gk.clone(),
        tau_final: finite("tau_final", tau_final)?,
        tau_over_n_final: finite("tau_over_n_final", tau_over_n)?,
        tau_fit_slope: finite("tau_fit_slope", tau_slope(&tau))?,
        route_disagreement: finite("route_disagreement", route_disagreement)?,
    };
    timer.lap("variance");

    let null_observable = centered.is_null();
    let mut martingale_csv: Vec<(usize, f64, f64)> = Vec::new();
    let martingale_section = if null_observable {
        Section::Skipped { reason: "observable centers to zero on every fiber".into() }
    } else {
        let n = cfg.horizons.martingale_n;
        let seqs = decompose(&set, &path, &centered, &h, n, BuildMode::Both)?;
        for k in 0..seqs.m_seq.len() {
            let m2 = seqs.m_seq[k].product(&seqs.m_seq[k])?;
            martingale_csv.push((k, seqs.g_seq[k].bv_norm(), m2.var_norm()));
        }
        let residual = martingale_residual(&set, &path, &seqs, &h)?;
        let ortho = orthogonality_residual(&set, &path, &seqs, &h, 30.min(n - 1))?;
        let tele = telescoping_residual(
            &set,
            &path,
            &seqs,
            &centered,
            &h,
            cfg.monte_carlo.telescoping_points,
            derive_seed(cfg.seed, 4),
        )?;
        let phi_test = GridFunction::from_midpoints(cfg.n_bins, |x| x * (1.0 - x) + 0.25);
        let n_ce = 10.min(n);
        let g_tests: Vec<GridFunction> = (0..5)
            .map(|i| {
                GridFunction::from_midpoints(cfg.n_bins, move |x| {
                    (2.0 * std::f64::consts::PI * (i as f64 + 1.0) * x).cos() + x
                })
            })
            .collect();
        let mut ce_defect: f64 = 0.0;
        for l in [0usize, 3.min(n_ce), n_ce] {
            let ce = conditional_expectation(&set, &path, &phi_test, l, n_ce, &h)?;
            let h_l = set.cocycle_apply(&path, 0, l, h.at(0)?)?;
            let pushed = set.cocycle_apply(&path, l as i64, n_ce - l, &h_l.product(&phi_test)?)?;
            for g in &g_tests {
                let lhs = pushed.inner(g)?;
                let rhs = ce.product(g)?.inner(h.at(n_ce as i64)?)?;
                ce_defect = ce_defect.max((lhs - rhs).abs());
            }
        }
        Section::Computed {
            data: MartingaleSection {
                horizon: n,
                cross_check_gap: finite("cross_check_gap", seqs.cross_check_gap.unwrap_or(0.0))?,
                residual: finite("martingale_residual", residual)?,
                orthogonality: finite("orthogonality", ortho)?,
                telescoping: finite("telescoping", tele)?,
                conditional_expectation_defect: finite("ce_defect", ce_defect)?,
                sup_corrector_bv: finite("sup_corrector_bv", seqs.sup_g_bv())?,
                sup_m2_bv: finite("sup_m2_bv", seqs.sup_m2_bv())?,
            },
        }
    };
    timer.lap("martingale");

    let mut theta_csv: Vec<f64> = Vec::new();
    let mut d_trace_csv: Vec<(usize, f64)> = Vec::new();
    let mut step_variances: Vec<f64> = Vec::new();
    let sprindzuk_section = if null_observable {
        Section::Skipped { reason: "martingale differences vanish identically".into() }
    } else {
        let n_max = cfg.horizons.sprindzuk_n_max;
        let seqs = decompose(&set, &path, &centered, &h, n_max, BuildMode::Recursion)?;
        let trajectories = sample_trajectories(
            &set,
            &path,
            &h,
            n_max,
            cfg.monte_carlo.sprindzuk_samples,
            derive_seed(cfg.seed, 5),
        )?;
        let rep = sprindzuk_diagnostic(&set, &path, &seqs, &h, n_max, &trajectories, cfg.d_exponent)?;
        if rep.skipped {
            Section::Skipped { reason: "martingale differences vanish identically".into() }
        } else {
            theta_csv = rep.theta.clone();
            d_trace_csv = rep.checkpoints.clone();
            step_variances = rep.step_second_moments.clone();
            Section::Computed {
                data: SprindzukSection {
                    horizon: n_max,
                    slope: finite("sprindzuk_slope", rep.slope)?,
                    slope_stderr: finite("sprindzuk_slope_stderr", rep.slope_stderr)?,
                    theta_over_n_first: finite("theta_over_n_first", rep.theta[9.min(n_max - 1)] / (10.min(n_max)) as f64)?,
                    theta_over_n_last: finite("theta_over_n_last", rep.theta[n_max - 1] / n_max as f64)?,
                    d_exponent: cfg.d_exponent,
                    d_final_sd: finite("d_final_sd", rep.d_final_sd)?,
                    sigma2_growth_ratio: finite("sigma2_growth_ratio", rep.cmt.sigma2_growth_ratio)?,
                    sup_step_second_moment: finite("sup_step_second_moment", rep.cmt.sup_step_second_moment)?,
                    sup_martingale_sup: finite("sup_martingale_sup", rep.cmt.sup_martingale_sup)?,
                    a_over_sigma2_nonincreasing: rep.cmt.a_over_sigma2_nonincreasing,
                    a_over_sigma_nondecreasing: rep.cmt.a_over_sigma_nondecreasing,
                },
            }
        }
    };
    timer.lap("sprindzuk");

    let cone = ConeParams::new(cfg.cone_aperture)?;
    let minoration_c = minoration_estimate(
        &set,
        &path,
        &cone,
        cfg.monte_carlo.minoration_steps,
        cfg.monte_carlo.minoration_trials,
        derive_seed(cfg.seed, 6),
    )?;
    let contraction = cone_contraction_check(
        &set,
        &path,
        &cone,
        cfg.monte_carlo.cone_steps,
        cfg.monte_carlo.cone_pairs,
        derive_seed(cfg.seed, 7),
    )?;
    let cone_section = ConeSection {
        aperture: cfg.cone_aperture,
        steps: cfg.monte_carlo.cone_steps,
        minoration_c: finite("minoration_c", minoration_c)?,
        min_esinf_h: finite("min_esinf_h", h.c_lower)?,
        contraction,
    };
    timer.lap("cone");

    let coboundary = coboundary_test(&set, &path, &centered, &h, cfg.horizons.tau_n_max, &gk)?;
    timer.lap("coboundary");

    let degenerate_variance =
        gk.sigma2 <= 1e-9 || coboundary.verdict == CoboundaryVerdict::Coboundary;
    let mut samples_for_csv: Option<BirkhoffSamples> = None;
    let clt_section = if degenerate_variance {
        Section::Skipped {
            reason: "variance degenerates; see the coboundary verdict".into(),
        }
    } else {
        let samples = birkhoff_samples(
            &set,
            &path,
            &centered,
            &h,
            cfg.horizons.clt_k,
            cfg.monte_carlo.birkhoff_samples,
            derive_seed(cfg.seed, 8),
        )?;
        let rep = clt_test(&samples, gk.sigma2, cfg.horizons.clt_k)?;
        samples_for_csv = Some(samples);
        Section::Computed { data: rep }
    };
    timer.lap("clt");

    let asip_section = if degenerate_variance {
        Section::Skipped { reason: "variance degenerates; scaling diagnostic undefined".into() }
    } else if step_variances.len() < cfg.horizons.clt_k {
        Section::Skipped {
            reason: "martingale step variances unavailable at the sample horizon".into(),
        }
    } else {
        let samples = samples_for_csv.as_ref().expect("clt ran");
        let rep = asip_error_scaling(samples, gk.sigma2, &step_variances, derive_seed(cfg.seed, 9))?;
        Section::Computed {
            data: if rep.flagged {
                AsipSection::Degenerate {
                    reason: "discrepancy degenerated to zero".into(),
                    label: rep.label.to_string(),
                }
            } else {
                AsipSection::Fitted {
                    exponent: finite("asip_exponent", rep.exponent)?,
                    ci_low: finite("asip_ci_low", rep.ci_low)?,
                    ci_high: finite("asip_ci_high", rep.ci_high)?,
                    label: rep.label.to_string(),
                }
            },
        }
    };
    timer.lap("asip");

    let mut assertions = Vec::new();
    let a = &cfg.assertions;
    if let Some(tol) = a.max_equivariance_residual {
        assertions.push(AssertionOutcome {
            name: "equivariance_residual".into(),
            passed: density.equivariance_residual <= tol,
            detail: format!("{} <= {tol}", density.equivariance_residual),
        });
    }
    if let Some([lo, hi]) = a.sigma2_range {
        assertions.push(AssertionOutcome {
            name: "sigma2_range".into(),
            passed: gk.sigma2 >= lo && gk.sigma2 <= hi,
            detail: format!("{} in [{lo}, {hi}]", gk.sigma2),
        });
    }
    if let Some(expected) = &a.expect_verdict {
        let got = match coboundary.verdict {
            CoboundaryVerdict::Coboundary => "coboundary",
            CoboundaryVerdict::Nondegenerate => "nondegenerate",
            CoboundaryVerdict::Inconclusive => "inconclusive",
        };
        assertions.push(AssertionOutcome {
            name: "coboundary_verdict".into(),
            passed: got == expected,
            detail: format!("got {got}, expected {expected}"),
        });
    }
    if let Some(min_p) = a.min_clt_p_value {
        let (passed, detail) = match clt_section.data() {
            Some(rep) => (rep.p_value >= min_p, format!("p = {} >= {min_p}", rep.p_value)),
            None => (false, "clt section skipped".into()),
        };
        assertions.push(AssertionOutcome { name: "clt_p_value".into(), passed, detail });
    }
    if let Some(tol) = a.max_martingale_residual {
        let (passed, detail) = match martingale_section.data() {
            Some(m) => (m.residual <= tol, format!("{} <= {tol}", m.residual)),
            None => (true, "martingale section skipped (null observable)".into()),
        };
        assertions.push(AssertionOutcome { name: "martingale_residual".into(), passed, detail });
    }
    if let Some(min_c) = a.min_minoration {
        assertions.push(AssertionOutcome {
            name: "minoration".into(),
            passed: minoration_c >= min_c && h.c_lower >= minoration_c / 2.0,
            detail: format!("c = {minoration_c} >= {min_c} and min esinf h = {} >= c/2", h.c_lower),
        });
    }
    if let Some(min_rate) = a.min_cone_inclusion {
        assertions.push(AssertionOutcome {
            name: "cone_inclusion".into(),
            passed: cone_section.contraction.inclusion_rate >= min_rate,
            detail: format!("{} >= {min_rate}", cone_section.contraction.inclusion_rate),
        });
    }
    if let Some(max_slope) = a.max_sprindzuk_slope {
        let (passed, detail) = match sprindzuk_section.data() {
            Some(s) => (s.slope <= max_slope, format!("{} <= {max_slope}", s.slope)),
            None => (true, "sprindzuk section skipped (null observable)".into()),
        };
        assertions.push(AssertionOutcome { name: "sprindzuk_slope".into(), passed, detail });
    }
    let all_assertions_passed = assertions.iter().all(|x| x.passed);

    let report = ExperimentReport {
        name: cfg.name.clone(),
        config: echoed,
        constants: constants_section,
        density,
        decay,
        variance,
        martingale: martingale_section,
        sprindzuk: sprindzuk_section,
        cone: cone_section,
        clt: clt_section,
        coboundary,
        asip: asip_section,
        assertions,
        all_assertions_passed,
    };

    // fail loudly on any NaN that slipped into the report tree
    let value = serde_json::to_value(&report).map_err(|e| Error::Parse(format!("{e}")))?;
    let mut bad = Vec::new();
    reject_nulls(&value, "report", &mut bad);
    if !bad.is_empty() {
        return Err(Error::Numerical {
            branch: 0,
            message: format!("non-finite values in report: {}", bad.join(", ")),
        });
    }

    let mut artifacts = Vec::new();
    if let Some(dir) = &cfg.output_dir {
        let dir = PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;

        let report_path = dir.join("report.json");
        let mut w = std::io::BufWriter::new(std::fs::File::create(&report_path)?);
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Parse(format!("{e}")))?;
        writeln!(w)?;
        artifacts.push(report_path);

        let p = dir.join("densities.csv");
        let mut rows = Vec::new();
        for k in 0..pullback_offsets as i64 {
            let g = h.at(k)?;
            for (b, v) in g.values().iter().enumerate() {
                rows.push(format!("{k},{b},{}", csv_num(*v)?));
            }
        }
        write_csv(&p, "offset,bin,value", rows.into_iter())?;
        artifacts.push(p);

        let p = dir.join("correlations.csv");
        let rows = corr
            .iter()
            .enumerate()
            .map(|(i, c)| csv_num(*c).map(|s| format!("{},{s}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        write_csv(&p, "lag,value", rows.into_iter())?;
        artifacts.push(p);

        let p = dir.join("tau.csv");
        let rows = tau
            .iter()
            .enumerate()
            .map(|(i, t)| csv_num(*t).map(|s| format!("{},{s}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        write_csv(&p, "n,tau_sq", rows.into_iter())?;
        artifacts.push(p);

        if !martingale_csv.is_empty() {
            let p = dir.join("martingale.csv");
            let rows = martingale_csv
                .iter()
                .map(|(k, g, m2)| {
                    Ok(format!("{k},{},{}", csv_num(*g)?, csv_num(*m2)?))
                })
                .collect::<Result<Vec<_>>>()?;
            write_csv(&p, "k,corrector_bv,m2_var_norm", rows.into_iter())?;
            artifacts.push(p);
        }

        if !d_trace_csv.is_empty() {
            let p = dir.join("d_trace.csv");
            let rows = d_trace_csv
                .iter()
                .map(|(n, m)| Ok(format!("{n},{}", csv_num(*m)?)))
                .collect::<Result<Vec<_>>>()?;
            write_csv(&p, "n,mean_max_abs_d", rows.into_iter())?;
            artifacts.push(p);
        }

        if !theta_csv.is_empty() {
            let p = dir.join("theta.csv");
            let rows = theta_csv
                .iter()
                .enumerate()
                .map(|(i, t)| csv_num(*t).map(|s| format!("{},{s}", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            write_csv(&p, "n,theta", rows.into_iter())?;
            artifacts.push(p);
        }

        if let Some(samples) = &samples_for_csv {
            let p = dir.join("samples.csv");
            let mut rows = Vec::new();
            let mut k = 8usize;
            let mut ks = Vec::new();
            while k < samples.n {
                ks.push(k);
                k = (k as f64 * 1.6).ceil() as usize;
            }
            ks.push(samples.n);
            for k in ks {
                let vals: Vec<f64> = samples.partials.iter().map(|r| r[k - 1]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (vals.len() - 1) as f64;
                rows.push(format!("{k},{},{}", csv_num(mean)?, csv_num(var)?));
            }
            write_csv(&p, "k,mean,variance", rows.into_iter())?;
            artifacts.push(p);
        }

        let p = dir.join("timings.json");
        let timing_map: Vec<serde_json::Value> = timer
            .laps
            .iter()
            .map(|(name, secs)| serde_json::json!({"section": name, "seconds": secs}))
            .collect();
        std::fs::write(&p, serde_json::to_string_pretty(&timing_map).map_err(|e| Error::Parse(format!("{e}")))?)?;
        artifacts.push(p);
    }

    Ok(RunOutcome { report, passed: all_assertions_passed, artifacts, timings: timer.laps.clone() })
}
