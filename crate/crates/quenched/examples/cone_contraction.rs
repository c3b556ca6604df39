//! Projective-metric contraction of the cocycle on the positive cone:
//! inclusion into the half-aperture cone, the contraction coefficient
//! against its hyperbolic bound, and the uniform lower bound estimate.
//!
//! Run: cargo run --release --example cone_contraction

use quenched::acim::{cone_contraction_check, minoration_estimate};
use quenched::driving::{sample_path, stream, BaseSpec};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::spaces::{cone_contains, hilbert_metric, sample_cone_element, ConeParams};
use quenched::transfer::{BackendMethod, BackendSet};

fn main() -> quenched::Result<()> {
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2)?, PiecewiseMap::affine_mod1(3)?])?;
    let n_bins = 384;
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov)?;
    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 14 };
    let path = sample_path(&base, 30, 30, 14)?;
    let cone = ConeParams::new(8.0)?;

    // one random pair in detail
    let mut rng = stream(14, 1);
    let phi = sample_cone_element(n_bins, &cone, &mut rng)?;
    let psi = sample_cone_element(n_bins, &cone, &mut rng)?;
    let before = hilbert_metric(&phi, &psi, &cone)?;
    let phi_n = set.cocycle_apply(&path, 0, 10, &phi)?;
    let psi_n = set.cocycle_apply(&path, 0, 10, &psi)?;
    let after = hilbert_metric(&phi_n, &psi_n, &cone)?;
    println!("one sampled pair, 10 cocycle steps:");
    println!("  theta before = {:.6}  (xi {:.4}, upsilon {:.4})", before.theta, before.xi, before.upsilon);
    println!("  theta after  = {:.6}  (xi {:.4}, upsilon {:.4})", after.theta, after.xi, after.upsilon);
    println!("  both images in the half-aperture cone: {}", cone_contains(&phi_n, &cone.halved()) && cone_contains(&psi_n, &cone.halved()));

    // aggregate over 50 pairs
    let rep = cone_contraction_check(&set, &path, &cone, 10, 50, 14)?;
    println!("over 50 sampled pairs:");
    println!("  inclusion rate into the half cone = {}", rep.inclusion_rate);
    println!("  contraction coefficient kappa = {:.3e}", rep.kappa_hat);
    println!("  diameter proxy delta = {:.3e}, tanh(delta/4) = {:.3e}", rep.delta_hat, rep.tanh_bound);

    // empirical uniform lower bound for cocycle images of cone elements
    let c = minoration_estimate(&set, &path, &cone, 10, 100, 14)?;
    println!("minoration estimate over 100 trials, 10 steps: c = {c:.4}");
    Ok(())
}
