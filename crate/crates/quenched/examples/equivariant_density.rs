//! Solve the equivariant family of fiber densities along a driving path
//! and check equivariance, positivity and convergence.
//!
//! Run: cargo run --release --example equivariant_density

use quenched::acim::{equivariance_residual, solve_equivariant, SolveMethod};
use quenched::driving::{sample_path, BaseSpec};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::transfer::{BackendMethod, BackendSet};

fn main() -> quenched::Result<()> {
    // a random family with a non-trivial invariant density on each fiber:
    // the three-branch Markov map mixed with the doubling map
    let family = MapFamily::new(vec![
        PiecewiseMap::three_branch_markov()?,
        PiecewiseMap::affine_mod1(2)?,
    ])?;
    let n_bins = 768;
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov)?;

    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 11 };
    let depth = 60;
    let path = sample_path(&base, depth + 5, 16, 11)?;

    println!("pulling the constant density back {depth} steps to offsets 0..12");
    let h = solve_equivariant(&set, &path, depth, 0..12, SolveMethod::Pullback)?;

    for k in 0..12 {
        let g = h.at(k)?;
        println!(
            "  offset {k:2}  symbol {}  esinf {:.4}  sup {:.4}  bv {:.4}",
            path.symbol(k)?,
            g.esinf(),
            g.sup_norm(),
            g.bv_norm()
        );
    }

    let residual = equivariance_residual(&set, &path, &h)?;
    println!("equivariance residual  max_k |L_k h_k - h_(k+1)|_1 = {residual:.3e}");
    println!("uniform lower bound    min_k esinf h_k = {:.6}", h.c_lower);
    println!("depth stability        |h(depth) - h(depth-5)|_1 = {:.3e}", h.convergence_gap);
    println!("converged              {}", h.converged());
    Ok(())
}
