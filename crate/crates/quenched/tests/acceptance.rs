//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (run with `cargo test --test acceptance -- --nocapture` to see
//! them). Tolerances are pinned in the asserts.

use quenched::acim::{
    cone_contraction_check, equivariance_residual, minoration_estimate, solve_equivariant, SolveMethod,
};
use quenched::config::example_config;
use quenched::driving::{derive_seed, sample_path, stream, BaseSpec, OmegaPath};
use quenched::limits::{asip_error_scaling, birkhoff_samples, clt_test, coboundary_test, sample_trajectories, CoboundaryVerdict};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::martingale::{
    conditional_expectation, decompose, martingale_residual, orthogonality_residual,
    sprindzuk_diagnostic, telescoping_residual, BuildMode,
};
use quenched::spaces::{hilbert_metric, sample_cone_element, ConeParams, GridFunction};
use quenched::stats::{center_observable, fiberwise_variance, green_kubo_sigma2, Observable};
use quenched::transfer::{BackendMethod, BackendSet};
use quenched::acim::EquivariantDensity;
use std::f64::consts::PI;
use std::time::Instant;

fn pass(criterion: &str, detail: String) {
    println!("criterion {criterion}: PASS - {detail}");
}

fn lebesgue_pair_family() -> MapFamily {
    MapFamily::new(vec![PiecewiseMap::affine_mod1(2).unwrap(), PiecewiseMap::affine_mod1(3).unwrap()]).unwrap()
}

fn smooth_pair_family() -> MapFamily {
    MapFamily::new(vec![
        PiecewiseMap::sine_perturbed(3, 0.2).unwrap(),
        PiecewiseMap::sine_perturbed(3, -0.15).unwrap(),
    ])
    .unwrap()
}

fn fair_pair_path(n_past: usize, n_future: usize, seed: u64) -> OmegaPath {
    let spec = BaseSpec::Iid { weights: vec![0.5, 0.5], seed };
    sample_path(&spec, n_past, n_future, seed).unwrap()
}

fn single_map_path(n_past: usize, n_future: usize, seed: u64) -> OmegaPath {
    let spec = BaseSpec::Iid { weights: vec![1.0], seed };
    sample_path(&spec, n_past, n_future, seed).unwrap()
}

fn cos_mid(n_bins: usize, freq: f64) -> GridFunction {
    GridFunction::from_midpoints(n_bins, move |x| (2.0 * PI * freq * x).cos())
}

fn solved(
    set: &BackendSet,
    path: &OmegaPath,
    depth: usize,
    offsets: std::ops::Range<i64>,
    horizon: i64,
) -> EquivariantDensity {
    let mut h = solve_equivariant(set, path, depth, offsets, SolveMethod::Pullback).unwrap();
    h.extend_forward(set, path, horizon).unwrap();
    h
}

#[test]
fn criterion_01_equivariant_density_trivial_family() {
    let start = Instant::now();
    let family = lebesgue_pair_family();
    let set = BackendSet::build(&family, 1024, BackendMethod::Ulam).unwrap();
    let path = fair_pair_path(50, 12, 42);
    let h = solve_equivariant(&set, &path, 40, 0..10, SolveMethod::Pullback).unwrap();
    let one = GridFunction::constant(1024, 1.0);
    let mut max_gap: f64 = 0.0;
    for k in 0..10 {
        max_gap = max_gap.max(h.at(k).unwrap().l1_distance(&one).unwrap());
    }
    let residual = equivariance_residual(&set, &path, &h).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(max_gap <= 1e-6, "max |h - 1|_1 = {max_gap}");
    assert!(residual <= 1e-12, "equivariance residual = {residual}");
    assert!(elapsed < 5.0, "runtime {elapsed}s");
    pass("01 equivariant density, trivial family", format!("max gap {max_gap:.2e}, residual {residual:.2e}, {elapsed:.2}s"));
}

#[test]
fn criterion_02_equivariant_density_smooth_family() {
    let start = Instant::now();
    let family = smooth_pair_family();
    let n_bins = 2048;
    let path = fair_pair_path(70, 4, 7);
    let set = BackendSet::build(&family, n_bins, BackendMethod::Ulam).unwrap();
    let set2 = BackendSet::build(&family, 2 * n_bins, BackendMethod::Ulam).unwrap();
    let h = solve_equivariant(&set, &path, 60, 0..2, SolveMethod::Pullback).unwrap();
    let h2 = solve_equivariant(&set2, &path, 60, 0..2, SolveMethod::Pullback).unwrap();
    let mut max_gap: f64 = 0.0;
    for k in 0..2 {
        let coarse = h.at(k).unwrap();
        let fine = h2.at(k).unwrap().downsample(2).unwrap();
        max_gap = max_gap.max(coarse.l1_distance(&fine).unwrap());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let budget = 2.0 / n_bins as f64;
    assert!(max_gap <= budget, "resolution gap {max_gap} > {budget}");
    assert!(elapsed < 60.0, "runtime {elapsed}s");
    pass("02 equivariant density, smooth family", format!("gap {max_gap:.2e} <= {budget:.2e}, {elapsed:.1}s"));
}

#[test]
fn criterion_03_green_kubo_and_fiberwise_variance() {
    let n_bins = 4096;
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2).unwrap()]).unwrap();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let base = BaseSpec::Iid { weights: vec![1.0], seed: 42 };
    let psi = Observable::shared(cos_mid(n_bins, 1.0));
    let gk = green_kubo_sigma2(&set, &base, &psi, 40, 20, 4, 42).unwrap();
    assert!((gk.sigma2 - 0.5).abs() <= 0.01, "sigma2 = {}", gk.sigma2);

    let path = single_map_path(50, 2002, 42);
    let h = solved(&set, &path, 40, 0..1, 2002);
    let centered = center_observable(&psi, &h, &path).unwrap();
    let tau = fiberwise_variance(&set, &path, &centered, &h, 2000).unwrap();
    let per_n = tau[1999] / 2000.0;
    assert!((per_n - gk.sigma2).abs() <= 0.05 * gk.sigma2, "tau/n = {per_n}");
    pass("03 variance routes", format!("green-kubo {:.6}, tau_2000^2/2000 = {per_n:.6}", gk.sigma2));
}

#[test]
fn criterion_04_coboundary_dichotomy() {
    // coboundary observable under the doubling map
    let n_bins = 1024;
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2).unwrap()]).unwrap();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let base = BaseSpec::Iid { weights: vec![1.0], seed: 42 };
    let psi = Observable::shared(GridFunction::from_midpoints(n_bins, |x| {
        (4.0 * PI * x).cos() - (2.0 * PI * x).cos()
    }));
    let path = single_map_path(50, 2002, 42);
    let h = solved(&set, &path, 40, 0..1, 2002);
    let centered = center_observable(&psi, &h, &path).unwrap();
    let gk = green_kubo_sigma2(&set, &base, &psi, 40, 20, 4, 42).unwrap();
    let rep = coboundary_test(&set, &path, &centered, &h, 2000, &gk).unwrap();
    assert_eq!(rep.verdict, CoboundaryVerdict::Coboundary);
    let tau = fiberwise_variance(&set, &path, &centered, &h, 2000).unwrap();
    let sup = tau.iter().cloned().fold(0.0, f64::max);
    assert!(sup <= 4.0 + 0.1, "sup tau^2 = {sup}");

    // nondegenerate observable under the random pair
    let n_bins = 768;
    let family = lebesgue_pair_family();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 42 };
    let psi = Observable::shared(cos_mid(n_bins, 1.0));
    let path = fair_pair_path(50, 2002, 42);
    let h = solved(&set, &path, 40, 0..1, 2002);
    let centered = center_observable(&psi, &h, &path).unwrap();
    let gk = green_kubo_sigma2(&set, &base, &psi, 40, 20, 16, 42).unwrap();
    assert!((gk.sigma2 - 0.5).abs() <= 0.015, "sigma2 = {}", gk.sigma2);
    let rep = coboundary_test(&set, &path, &centered, &h, 2000, &gk).unwrap();
    assert_eq!(rep.verdict, CoboundaryVerdict::Nondegenerate);
    pass("04 coboundary dichotomy", format!("coboundary sup tau^2 {sup:.3}, pair sigma2 {:.6}", gk.sigma2));
}

#[test]
fn criterion_05_martingale_identities() {
    let start = Instant::now();
    let n_bins = 768;
    let family = lebesgue_pair_family();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let path = fair_pair_path(60, 54, 42);
    let h = solved(&set, &path, 50, 0..1, 54);
    let psi = Observable::shared(cos_mid(n_bins, 1.0));
    let centered = center_observable(&psi, &h, &path).unwrap();
    let seqs = decompose(&set, &path, &centered, &h, 50, BuildMode::Both).unwrap();
    let gap = seqs.cross_check_gap.unwrap();
    let residual = martingale_residual(&set, &path, &seqs, &h).unwrap();
    let ortho = orthogonality_residual(&set, &path, &seqs, &h, 30).unwrap();
    let tele = telescoping_residual(&set, &path, &seqs, &centered, &h, 300, 42).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(gap <= 1e-10, "recursion vs closed form {gap}");
    assert!(residual <= 1e-9, "martingale residual {residual}");
    assert!(ortho <= 1e-9, "orthogonality {ortho}");
    assert!(tele <= 1e-9, "telescoping {tele}");
    assert!(elapsed < 30.0, "runtime {elapsed}s");
    pass(
        "05 martingale identities",
        format!("cross-check {gap:.1e}, residual {residual:.1e}, orthogonality {ortho:.1e}, telescoping {tele:.1e}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_06_conditional_expectation() {
    // exact backend with a non-constant invariant density
    let n_bins = 768;
    let family = MapFamily::new(vec![PiecewiseMap::three_branch_markov().unwrap()]).unwrap();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let path = single_map_path(90, 14, 42);
    let h = solved(&set, &path, 80, 0..1, 14);
    let n = 10;
    let phi = GridFunction::from_midpoints(n_bins, |x| x * (1.0 - x) + 0.25);
    let tests: Vec<GridFunction> = (0..5)
        .map(|i| GridFunction::from_midpoints(n_bins, move |x| (2.0 * PI * (i as f64 + 1.0) * x).cos() + x))
        .collect();
    let mut worst: f64 = 0.0;
    for l in [0usize, 3, n] {
        let ce = conditional_expectation(&set, &path, &phi, l, n, &h).unwrap();
        let h_l = set.cocycle_apply(&path, 0, l, h.at(0).unwrap()).unwrap();
        let pushed = set
            .cocycle_apply(&path, l as i64, n - l, &h_l.product(&phi).unwrap())
            .unwrap();
        for g in &tests {
            let lhs = pushed.inner(g).unwrap();
            let rhs = ce.product(g).unwrap().inner(h.at(n as i64).unwrap()).unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    assert!(worst <= 1e-10, "defining-property defect {worst}");
    pass("06 conditional expectation", format!("max defect {worst:.2e} over 5 test functions, l in {{0, 3, {n}}}"));
}

#[test]
fn criterion_07_clt() {
    let n_bins = 1024;
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2).unwrap()]).unwrap();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let path = single_map_path(50, 302, 42);
    let h = solved(&set, &path, 40, 0..1, 302);
    let psi = Observable::shared(cos_mid(n_bins, 1.0));
    let centered = center_observable(&psi, &h, &path).unwrap();
    let samples = birkhoff_samples(&set, &path, &centered, &h, 300, 5000, 42).unwrap();
    let rep = clt_test(&samples, 0.5, 300).unwrap();
    assert!(rep.p_value > 0.01, "p = {}", rep.p_value);
    let target = 150.0;
    assert!(
        (rep.sample_variance - target).abs() <= 0.05 * target,
        "sample variance {} vs {target}",
        rep.sample_variance
    );
    pass("07 clt", format!("p = {:.4}, sample variance {:.2} vs 150", rep.p_value, rep.sample_variance));
}

#[test]
fn criterion_08_sprindzuk_diagnostic() {
    let n_bins = 768;
    let family = lebesgue_pair_family();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let n_max = 2000;
    let path = fair_pair_path(50, n_max + 2, 42);
    let h = solved(&set, &path, 40, 0..1, n_max as i64 + 2);
    let psi = Observable::shared(cos_mid(n_bins, 1.0));
    let centered = center_observable(&psi, &h, &path).unwrap();
    let seqs = decompose(&set, &path, &centered, &h, n_max, BuildMode::Recursion).unwrap();
    let trajectories = sample_trajectories(&set, &path, &h, n_max, 4000, derive_seed(42, 5)).unwrap();
    let rep = sprindzuk_diagnostic(&set, &path, &seqs, &h, n_max, &trajectories, 0.25).unwrap();
    assert!(!rep.skipped);
    assert!(rep.slope <= 0.6, "fitted exponent {}", rep.slope);
    let sigma2 = 0.5;
    let sup_var_norm = rep.m2_var_norms.iter().cloned().fold(0.0, f64::max);
    let theta_per_n = rep.theta[n_max - 1] / n_max as f64;
    assert!(
        theta_per_n >= 0.1 * sigma2 && theta_per_n <= 10.0 * (sigma2 + sup_var_norm),
        "theta/n = {theta_per_n}"
    );
    pass(
        "08 sprindzuk diagnostic",
        format!("exponent {:.3} <= 0.6, theta/n = {theta_per_n:.3} in [{:.3}, {:.3}]", rep.slope, 0.1 * sigma2, 10.0 * (sigma2 + sup_var_norm)),
    );
}

#[test]
fn criterion_09_cone_machinery() {
    let n_bins = 768;
    let family = lebesgue_pair_family();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let path = fair_pair_path(40, 40, 42);
    let cone = ConeParams::new(8.0).unwrap();
    let rep = cone_contraction_check(&set, &path, &cone, 10, 50, 42).unwrap();
    assert_eq!(rep.inclusion_rate, 1.0, "inclusion rate {}", rep.inclusion_rate);
    assert!(rep.kappa_hat < 1.0, "kappa {}", rep.kappa_hat);
    assert!(rep.kappa_hat <= rep.tanh_bound + 0.05, "kappa {} vs tanh bound {}", rep.kappa_hat, rep.tanh_bound);

    // projective metric controls the bv distance on every sampled
    // normalized pair
    let mut rng = stream(42, 0xE0);
    for _ in 0..50 {
        let a = sample_cone_element(n_bins, &cone, &mut rng).unwrap();
        let b = sample_cone_element(n_bins, &cone, &mut rng).unwrap();
        let theta = hilbert_metric(&a, &b, &cone).unwrap().theta;
        if theta.is_finite() {
            let d = a.sub(&b).unwrap().bv_norm();
            assert!(d <= 2.0 * (1.0 + cone.aperture) * theta + 1e-9, "bv {d} vs theta {theta}");
        }
    }
    pass(
        "09 cone machinery",
        format!("inclusion 1.0, kappa {:.3} <= tanh({:.3}/4) + 0.05 = {:.3}", rep.kappa_hat, rep.delta_hat, rep.tanh_bound + 0.05),
    );
}

#[test]
fn criterion_10_minoration() {
    let cone = ConeParams::new(8.0).unwrap();
    let cases: Vec<(&str, MapFamily, Vec<f64>, BackendMethod, usize)> = vec![
        ("lebesgue_pair", lebesgue_pair_family(), vec![0.5, 0.5], BackendMethod::ExactMarkov, 768),
        (
            "doubling",
            MapFamily::new(vec![PiecewiseMap::affine_mod1(2).unwrap()]).unwrap(),
            vec![1.0],
            BackendMethod::ExactMarkov,
            1024,
        ),
        ("smooth_pair", smooth_pair_family(), vec![0.5, 0.5], BackendMethod::Ulam, 1024),
        (
            "markov_three",
            MapFamily::new(vec![PiecewiseMap::three_branch_markov().unwrap()]).unwrap(),
            vec![1.0],
            BackendMethod::ExactMarkov,
            768,
        ),
    ];
    let mut details = Vec::new();
    for (name, family, weights, method, n_bins) in cases {
        let set = BackendSet::build(&family, n_bins, method).unwrap();
        let spec = BaseSpec::Iid { weights, seed: 42 };
        let path = sample_path(&spec, 80, 30, 42).unwrap();
        let c = minoration_estimate(&set, &path, &cone, 10, 100, 42).unwrap();
        let h = solved(&set, &path, 60, 0..10, 30);
        assert!(c >= 0.05, "{name}: c = {c}");
        assert!(h.c_lower >= c / 2.0, "{name}: min esinf h = {} < c/2 = {}", h.c_lower, c / 2.0);
        details.push(format!("{name} c = {c:.3}"));
    }
    pass("10 minoration", details.join(", "));
}

#[test]
fn criterion_11_space_axioms() {
    use rand::Rng;
    let mut rng = stream(42, 0x5A);
    let tol = 1e-9;
    for trial in 0..10_000 {
        let n = 2 + (rng.random::<u32>() % 62) as usize;
        let g = GridFunction::new((0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).unwrap();
        let hpos = GridFunction::new((0..n).map(|_| rng.random::<f64>() * 3.0).collect()).unwrap();
        let gpos = GridFunction::new((0..n).map(|_| rng.random::<f64>() * 3.0).collect()).unwrap();
        let t = rng.random::<f64>() * 6.0 - 3.0;
        // homogeneity
        assert!(
            (g.scale(t).variation() - t.abs() * g.variation()).abs() <= tol * (1.0 + g.variation()),
            "trial {trial}"
        );
        // subadditivity
        let sum = gpos.add(&g).unwrap();
        assert!(sum.variation() <= gpos.variation() + g.variation() + tol, "trial {trial}");
        // sup bounded by l1 plus variation
        assert!(g.sup_norm() <= g.l1_norm() + g.variation() + tol, "trial {trial}");
        // algebra bound on nonnegative grids
        let prod = gpos.product(&hpos).unwrap();
        assert!(prod.bv_norm() <= gpos.bv_norm() * hpos.bv_norm() + tol, "trial {trial}");
        // reciprocal bound away from zero
        let shifted = hpos.shift_by(0.25);
        let inv = GridFunction::new(shifted.values().iter().map(|v| 1.0 / v).collect()).unwrap();
        assert!(
            inv.variation() <= shifted.variation() / (shifted.esinf() * shifted.esinf()) + tol,
            "trial {trial}"
        );
    }
    pass("11 space axioms", "homogeneity, subadditivity, sup bound, algebra bound, reciprocal bound on 10^4 grids".into());
}

#[test]
fn criterion_12_asip_scaling_diagnostic() {
    let n_bins = 768;
    let family = lebesgue_pair_family();
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov).unwrap();
    let n = 300;
    let path = fair_pair_path(50, n + 2, 42);
    let h = solved(&set, &path, 40, 0..1, n as i64 + 2);
    let psi = Observable::shared(cos_mid(n_bins, 1.0));
    let centered = center_observable(&psi, &h, &path).unwrap();
    let samples = birkhoff_samples(&set, &path, &centered, &h, n, 1500, 42).unwrap();
    let seqs = decompose(&set, &path, &centered, &h, n, BuildMode::Recursion).unwrap();
    let step_variances: Vec<f64> = (0..n)
        .map(|k| {
            let m2 = seqs.m_seq[k].product(&seqs.m_seq[k]).unwrap();
            m2.inner(&h.at(k as i64).unwrap().upsample(set.refine())).unwrap()
        })
        .collect();
    let rep = asip_error_scaling(&samples, 0.5, &step_variances, 42).unwrap();
    let rep2 = asip_error_scaling(&samples, 0.5, &step_variances, 42).unwrap();
    assert_eq!(rep.label, "diagnostic");
    assert!(!rep.flagged);
    assert!(rep.exponent.is_finite());
    assert!(rep.ci_low.is_finite() && rep.ci_high.is_finite());
    assert!(rep.ci_low <= rep.exponent && rep.exponent <= rep.ci_high);
    // determinism: identical seeds give bit-identical results
    assert_eq!(rep.exponent.to_bits(), rep2.exponent.to_bits());
    for ((_, a), (_, b)) in rep.checkpoints.iter().zip(&rep2.checkpoints) {
        assert!(a.is_finite());
        assert_eq!(a.to_bits(), b.to_bits());
    }
    pass(
        "12 asip scaling diagnostic",
        format!("exponent {:.3} with CI [{:.3}, {:.3}], label '{}', deterministic", rep.exponent, rep.ci_low, rep.ci_high, rep.label),
    );
}

#[test]
fn shipped_experiments_pass_their_assertions() {
    // end-to-end runs of the shipped configs through the experiment runner
    for name in ["single_doubling", "markov_three"] {
        let cfg = example_config(name).unwrap();
        let outcome = quenched::runner::run_experiment(&cfg).unwrap();
        assert!(outcome.passed, "{name}: {:?}", outcome.report.assertions);
        println!("shipped config {name}: all assertions pass");
    }
}
