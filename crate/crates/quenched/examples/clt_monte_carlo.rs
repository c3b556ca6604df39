//! Monte Carlo test of the central limit theorem for Birkhoff sums: sample
//! orbits from the fiber measure, normalize the partial sums by the
//! quadrature variance, and compare with the standard normal law.
//!
//! Run: cargo run --release --example clt_monte_carlo

use quenched::acim::{solve_equivariant, SolveMethod};
use quenched::driving::{sample_path, BaseSpec};
use quenched::limits::{birkhoff_samples, clt_test, sampling_frequency_agreement};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::spaces::GridFunction;
use quenched::stats::{center_observable, Observable};
use quenched::transfer::{BackendMethod, BackendSet};
use std::f64::consts::PI;

fn main() -> quenched::Result<()> {
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2)?, PiecewiseMap::affine_mod1(3)?])?;
    let n_bins = 768;
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov)?;
    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 4 };
    let k = 300;
    let path = sample_path(&base, 45, k + 2, 4)?;
    let mut h = solve_equivariant(&set, &path, 40, 0..1, SolveMethod::Pullback)?;
    h.extend_forward(&set, &path, k as i64 + 2)?;

    let psi = Observable::shared(GridFunction::from_midpoints(n_bins, |x| (2.0 * PI * x).cos()));
    let centered = center_observable(&psi, &h, &path)?;

    let n_samples = 4000;
    println!("sampling {n_samples} orbits of length {k} from the fiber measure...");
    let samples = birkhoff_samples(&set, &path, &centered, &h, k, n_samples, 4)?;
    let agreement = sampling_frequency_agreement(&samples.starts, h.at(0)?, 16);
    println!("start-point bin frequencies within tolerance: {:.1}%", 100.0 * agreement);

    let sigma2 = 0.5; // analytic value for the cosine observable here
    let rep = clt_test(&samples, sigma2, k)?;
    println!("S_{k} / sqrt({k} sigma^2) against the standard normal:");
    println!("  ks statistic    = {:.5}", rep.ks_statistic);
    println!("  p value         = {:.4}", rep.p_value);
    println!("  sample variance = {:.2} (target {})", rep.sample_variance, k as f64 * sigma2);
    Ok(())
}
