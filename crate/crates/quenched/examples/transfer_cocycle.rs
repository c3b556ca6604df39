//! Build transfer-operator backends, compose them along a path, and check
//! the structural properties: mass conservation, positivity, the duality
//! defect, and the iterated variation inequality.
//!
//! Run: cargo run --release --example transfer_cocycle

use quenched::driving::{sample_path, BaseSpec};
use quenched::maps::{MapFamily, PiecewiseMap};
use quenched::spaces::GridFunction;
use quenched::transfer::{duality_residual, fit_lasota_yorke, BackendMethod, BackendSet};

fn main() -> quenched::Result<()> {
    let family = MapFamily::new(vec![PiecewiseMap::affine_mod1(2)?, PiecewiseMap::affine_mod1(3)?])?;
    let c = family.constants()?;
    println!(
        "family constants: branches {}, expansion {}, distortion {}, bv bound {}",
        c.branch_count, c.expansion, c.distortion, c.bv_bound
    );

    let n_bins = 384;
    let set = BackendSet::build(&family, n_bins, BackendMethod::ExactMarkov)?;
    println!("composition-exact refinement factor: {}", set.refine());

    let base = BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 3 };
    let path = sample_path(&base, 10, 40, 3)?;

    // mass conservation along a 25-step cocycle
    let g = GridFunction::from_midpoints(n_bins, |x| 1.0 + 0.8 * (6.2831853 * x).cos().abs());
    let pushed = set.cocycle_apply(&path, 0, 25, &g)?;
    println!(
        "mass defect after 25 steps: {:.3e} (positivity: min = {:.3e})",
        (pushed.l1_norm() - g.l1_norm()).abs(),
        pushed.esinf()
    );

    // duality defect for a random pair of grid observables
    let phi = GridFunction::from_midpoints(n_bins, |x| x * x + 0.1);
    let psi = GridFunction::from_midpoints(n_bins, |x| if x < 0.4 { 1.0 } else { -0.5 });
    for symbol in 0..family.len() {
        let r = duality_residual(&set, symbol, &phi, &psi)?;
        println!("duality defect, symbol {symbol}: {r:.3e}");
    }

    // fitted iterated variation inequality
    let fit = fit_lasota_yorke(&set, &path, family.ly_iterate()?, 40, 99)?;
    println!(
        "variation inequality over {} steps: var(L^N g) <= {:.3} var(g) + {:.3} l1(g)  (iterated constant {:.3})",
        fit.iterate, fit.alpha, fit.k_const, fit.c_iterated
    );
    Ok(())
}
