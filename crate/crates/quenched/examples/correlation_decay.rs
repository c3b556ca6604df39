//! Fiberwise decay of correlations for a smooth non-Markov map, with the
//! fitted exponential rate.
//!
//! Run: cargo run --release --example correlation_decay

use quenched::acim::{solve_equivariant, SolveMethod};
use quenched::driving::{sample_path, BaseSpec};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::spaces::GridFunction;
use quenched::stats::{correlations, fit_decay, Observable};
use quenched::transfer::{BackendMethod, BackendSet};

fn main() -> quenched::Result<()> {
    let family = MapFamily::new(vec![
        PiecewiseMap::sine_perturbed(3, 0.2)?,
        PiecewiseMap::sine_perturbed(3, -0.15)?,
    ])?;
    let n_bins = 1024;
    let set = BackendSet::build(&family, n_bins, BackendMethod::Ulam)?;
    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 5 };
    let n_max = 25;
    let path = sample_path(&base, 70, n_max + 1, 5)?;

    let mut h = solve_equivariant(&set, &path, 60, 0..1, SolveMethod::Pullback)?;
    h.extend_forward(&set, &path, n_max as i64 + 1)?;

    let phi = Observable::shared(GridFunction::from_midpoints(n_bins, |x| x));
    let seq = correlations(&set, &path, &phi, &phi, &h, n_max)?;
    println!("lag  correlation");
    for (i, c) in seq.iter().enumerate() {
        println!("{:3}  {c:+.6e}", i + 1);
    }

    let fit = fit_decay(&seq, 1e-9)?;
    println!(
        "fitted decay: |C_n| ~ {:.3} * {:.4}^n  (r2 = {:.6}, {} usable lags)",
        fit.k_hat, fit.rho_hat, fit.r2, fit.usable_lags
    );
    Ok(())
}
