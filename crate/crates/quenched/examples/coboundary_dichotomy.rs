//! The variance dichotomy: an observable either telescopes (bounded
//! fiberwise variance, vanishing limiting variance) or has linearly
//! growing variance. Both branches are classified here.
//!
//! Run: cargo run --release --example coboundary_dichotomy

use quenched::acim::{solve_equivariant, SolveMethod};
use quenched::driving::{sample_path, BaseSpec};
use quenched::limits::coboundary_test;
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::spaces::GridFunction;
use quenched::stats::{center_observable, green_kubo_sigma2, Observable};
use quenched::transfer::{BackendMethod, BackendSet};
use std::f64::consts::PI;

fn main() -> quenched::Result<()> {
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2)?])?;
    let n_bins = 1024;
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov)?;
    let base = BaseSpec::Iid { weights: vec![1.0], seed: 2 };
    let n_max = 1000;
    let path = sample_path(&base, 45, n_max + 2, 2)?;
    let mut h = solve_equivariant(&set, &path, 40, 0..1, SolveMethod::Pullback)?;
    h.extend_forward(&set, &path, n_max as i64 + 2)?;

    // cos(4 pi x) - cos(2 pi x) telescopes under the doubling map
    let telescoping = Observable::shared(GridFunction::from_midpoints(n_bins, |x| {
        (4.0 * PI * x).cos() - (2.0 * PI * x).cos()
    }));
    // cos(2 pi x) does not
    let generic = Observable::shared(GridFunction::from_midpoints(n_bins, |x| (2.0 * PI * x).cos()));

    for (name, psi) in [("cos(4 pi x) - cos(2 pi x)", &telescoping), ("cos(2 pi x)", &generic)] {
        let centered = center_observable(psi, &h, &path)?;
        let gk = green_kubo_sigma2(&set, &base, psi, 40, 20, 8, 2)?;
        let rep = coboundary_test(&set, &path, &centered, &h, n_max, &gk)?;
        println!("observable {name}:");
        println!("  green-kubo sigma^2 = {:.6}", rep.sigma2);
        for (n, t) in &rep.tau_checkpoints {
            println!("  tau_{n}^2 = {t:.4}  (tau^2/n = {:.6})", t / *n as f64);
        }
        println!("  verdict: {:?}", rep.verdict);
    }
    Ok(())
}
