//! Run a complete shipped experiment through the orchestrator and print
//! the headline numbers from every section.
//!
//! Run: cargo run --release --example full_experiment

use quenched::config::example_config;
use quenched::runner::{run_experiment, Section};

fn main() -> quenched::Result<()> {
    let cfg = example_config("markov_three")?;
    println!("running experiment '{}' (seed {}, {} bins)...", cfg.name, cfg.seed, cfg.n_bins);
    let outcome = run_experiment(&cfg)?;
    let r = &outcome.report;

    println!("constants: expansion {}, bv bound {}", r.constants.expansion, r.constants.bv_bound);
    println!(
        "density: equivariance residual {:.2e}, min esinf {:.4}",
        r.density.equivariance_residual, r.density.min_esinf
    );
    println!(
        "variance: green-kubo {:.6}, tau/n {:.6}",
        r.variance.green_kubo.sigma2, r.variance.tau_over_n_final
    );
    if let Section::Computed { data } = &r.martingale {
        println!(
            "martingale: cross-check {:.1e}, residual {:.1e}, orthogonality {:.1e}",
            data.cross_check_gap, data.residual, data.orthogonality
        );
    }
    if let Section::Computed { data } = &r.sprindzuk {
        println!("sprindzuk: exponent {:.3}, theta/n {:.3}", data.slope, data.theta_over_n_last);
    }
    println!(
        "cone: minoration c = {:.3}, inclusion rate {}, kappa {:.3}",
        r.cone.minoration_c, r.cone.contraction.inclusion_rate, r.cone.contraction.kappa_hat
    );
    if let Section::Computed { data } = &r.clt {
        println!("clt: p = {:.4}, sample variance {:.2}", data.p_value, data.sample_variance);
    }
    println!("coboundary verdict: {:?}", r.coboundary.verdict);
    for a in &r.assertions {
        println!("assertion {}: {}", a.name, if a.passed { "pass" } else { "FAIL" });
    }
    for (section, secs) in &outcome.timings {
        println!("  [{section}] {secs:.2}s");
    }
    Ok(())
}
