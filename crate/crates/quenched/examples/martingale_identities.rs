//! The reverse-martingale decomposition and its exact algebraic
//! identities: recursion vs closed form, the vanishing pushed residual,
//! pairwise orthogonality, and the pointwise telescoping identity.
//!
//! Run: cargo run --release --example martingale_identities

use quenched::acim::{solve_equivariant, SolveMethod};
use quenched::driving::{sample_path, BaseSpec};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::martingale::{
    center_observable, decompose, martingale_residual, orthogonality_residual,
    telescoping_residual, BuildMode,
};
use quenched::spaces::GridFunction;
use quenched::stats::Observable;
use quenched::transfer::{BackendMethod, BackendSet};
use std::f64::consts::PI;

fn main() -> quenched::Result<()> {
    // the three-branch Markov map has a non-constant density, so every
    // division by h is exercised for real
    let family = MapFamily::new(vec![
        PiecewiseMap::three_branch_markov()?,
        PiecewiseMap::affine_mod1(2)?,
    ])?;
    let n_bins = 384;
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov)?;
    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 8 };
    let n = 40;
    let path = sample_path(&base, 65, n + 2, 8)?;
    let mut h = solve_equivariant(&set, &path, 60, 0..1, SolveMethod::Pullback)?;
    h.extend_forward(&set, &path, n as i64 + 2)?;

    let psi = Observable::shared(GridFunction::from_midpoints(n_bins, |x| (2.0 * PI * x).cos()));
    let centered = center_observable(&psi, &h, &path)?;
    let seqs = decompose(&set, &path, &centered, &h, n, BuildMode::Both)?;

    println!("decomposition to n = {n} on the refined grid (factor {})", seqs.refine);
    println!("recursion vs closed form   max_k |G_k gap|_1 = {:.3e}", seqs.cross_check_gap.unwrap());
    println!("corrector size             sup_k |G_k|_bv = {:.4}", seqs.sup_g_bv());
    println!("squared difference size    sup_k |M_k^2|_bv = {:.4}", seqs.sup_m2_bv());

    let residual = martingale_residual(&set, &path, &seqs, &h)?;
    println!("pushed residual            max_k |L_k(h_k M_k)|_1 = {residual:.3e}");

    let ortho = orthogonality_residual(&set, &path, &seqs, &h, 20)?;
    println!("pair orthogonality         max_(i<j) |E(X_i X_j)| = {ortho:.3e}");

    let tele = telescoping_residual(&set, &path, &seqs, &centered, &h, 500, 8)?;
    println!("telescoping identity       max defect over 500 orbits = {tele:.3e}");
    Ok(())
}
