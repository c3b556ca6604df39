//! The limiting variance by two independent routes: the ensemble
//! Green-Kubo sum and the single-path fiberwise variance per step.
//!
//! For the doubling map with the cosine observable the analytic value is
//! 1/2; the random doubling/tripling pair shares it because every cross
//! correlation vanishes.
//!
//! Run: cargo run --release --example green_kubo_variance

use quenched::acim::{solve_equivariant, SolveMethod};
use quenched::driving::{sample_path, BaseSpec};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::spaces::GridFunction;
use quenched::stats::{center_observable, fiberwise_variance, green_kubo_sigma2, Observable};
use quenched::transfer::{BackendMethod, BackendSet};
use std::f64::consts::PI;

fn main() -> quenched::Result<()> {
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2)?, PiecewiseMap::affine_mod1(3)?])?;
    let n_bins = 768;
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov)?;
    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 21 };
    let psi = Observable::shared(GridFunction::from_midpoints(n_bins, |x| (2.0 * PI * x).cos()));

    let gk = green_kubo_sigma2(&set, &base, &psi, 40, 20, 32, 21)?;
    println!("green-kubo over 32 paths: sigma^2 = {:.10} (analytic 0.5)", gk.sigma2);
    println!("partial sums over the lag cutoff:");
    for (n, s) in gk.partial_sums.iter().enumerate().step_by(4) {
        println!("  lags <= {n:2}: {s:.10}");
    }

    let horizon = 1000;
    let path = sample_path(&base, 45, horizon + 1, 21)?;
    let mut h = solve_equivariant(&set, &path, 40, 0..1, SolveMethod::Pullback)?;
    h.extend_forward(&set, &path, horizon as i64 + 1)?;
    let centered = center_observable(&psi, &h, &path)?;
    let tau = fiberwise_variance(&set, &path, &centered, &h, horizon)?;
    for n in [10usize, 100, 500, 1000] {
        println!("tau_{n}^2 / {n} = {:.10}", tau[n - 1] / n as f64);
    }
    println!(
        "route agreement: |tau/n - sigma^2| / sigma^2 = {:.3e}",
        (tau[horizon - 1] / horizon as f64 - gk.sigma2).abs() / gk.sigma2
    );
    Ok(())
}
