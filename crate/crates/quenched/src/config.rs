//! Experiment configuration: a single JSON file declaring the driving law,
//! the map family, the observable, grid and horizon settings, Monte Carlo
//! sizes and seeds. Defaults are filled in and echoed back into the report
//! so a run is reproducible from its own output.

use crate::driving::BaseSpec;
use crate::error::{Error, Result};
use crate::maps::{MapFamily, PiecewiseMap};
use crate::spaces::GridFunction;
use crate::stats::Observable;
use crate::transfer::BackendMethod;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Declaration of one map of the family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MapDecl {
    /// x -> k x mod 1.
    AffineMod1 { k: u32 },
    /// The symmetric tent map.
    Tent,
    /// Three-branch Markov map with invariant density (2/3, 4/3, 1).
    ThreeBranchMarkov,
    /// x -> base x + eps sin(2 pi x) mod 1 (smooth, non-Markov).
    SinePerturbed { base: u32, eps: f64 },
    /// Explicit affine branch table.
    BranchTable {
        breakpoints: Vec<f64>,
        slopes: Vec<f64>,
        intercepts: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        markov: Option<Vec<f64>>,
    },
}

impl MapDecl {
    pub fn build(&self) -> Result<PiecewiseMap> {
        match self {
            MapDecl::AffineMod1 { k } => PiecewiseMap::affine_mod1(*k),
            MapDecl::Tent => PiecewiseMap::tent(),
            MapDecl::ThreeBranchMarkov => PiecewiseMap::three_branch_markov(),
            MapDecl::SinePerturbed { base, eps } => PiecewiseMap::sine_perturbed(*base, *eps),
            MapDecl::BranchTable { breakpoints, slopes, intercepts, markov } => {
                PiecewiseMap::from_branch_table("branch_table", breakpoints, slopes, intercepts, markov.clone())
            }
        }
    }
}

/// Declaration of the observable, realized by midpoint sampling.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableDecl {
    /// amplitude * cos(2 pi freq x).
    Cosine {
        freq: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Sum of cosine terms (amplitude, freq).
    CosineCombo { terms: Vec<(f64, f64)> },
    /// The coordinate x.
    Coordinate,
    /// A constant (centers to zero on every fiber).
    Constant { value: f64 },
    /// One cosine frequency per driving symbol.
    PerSymbolCosine { freqs: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl ObservableDecl {
    pub fn build(&self, n_bins: usize) -> Result<Observable> {
        match self {
            ObservableDecl::Cosine { freq, amplitude } => {
                let (f, a) = (*freq, *amplitude);
                Ok(Observable::shared(GridFunction::from_midpoints(n_bins, move |x| {
                    a * (2.0 * PI * f * x).cos()
                })))
            }
            ObservableDecl::CosineCombo { terms } => {
                let terms = terms.clone();
                Ok(Observable::shared(GridFunction::from_midpoints(n_bins, move |x| {
                    terms.iter().map(|(a, f)| a * (2.0 * PI * f * x).cos()).sum()
                })))
            }
            ObservableDecl::Coordinate => {
                Ok(Observable::shared(GridFunction::from_midpoints(n_bins, |x| x)))
            }
            ObservableDecl::Constant { value } => {
                Ok(Observable::shared(GridFunction::constant(n_bins, *value)))
            }
            ObservableDecl::PerSymbolCosine { freqs } => {
                if freqs.is_empty() {
                    return Err(Error::Config("per_symbol_cosine needs at least one frequency".into()));
                }
                let fibers = freqs
                    .iter()
                    .map(|&f| GridFunction::from_midpoints(n_bins, move |x| (2.0 * PI * f * x).cos()))
                    .collect();
                Observable::per_symbol(fibers)
            }
        }
    }
}

/// Quadrature and Monte Carlo horizons.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Horizons {
    /// Correlation lags for the decay fit.
    pub decay_n_max: usize,
    /// Green-Kubo lag cutoff.
    pub variance_n_max: usize,
    /// Fiberwise variance horizon.
    pub tau_n_max: usize,
    /// Birkhoff-sum length tested against the normal law.
    pub clt_k: usize,
    /// Martingale identity horizon (closed-form cross-check runs here).
    pub martingale_n: usize,
    /// Conditional-variance diagnostic horizon.
    pub sprindzuk_n_max: usize,
    /// Number of offsets solved by independent pullbacks.
    pub density_offsets: usize,
}

impl Default for Horizons {
    fn default() -> Self {
        Horizons {
            decay_n_max: 20,
            variance_n_max: 20,
            tau_n_max: 2000,
            clt_k: 300,
            martingale_n: 50,
            sprindzuk_n_max: 2000,
            density_offsets: 50,
        }
    }
}

/// Monte Carlo sample sizes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarlo {
    pub birkhoff_samples: usize,
    pub sprindzuk_samples: usize,
    /// Independent paths averaged in the Green-Kubo sum.
    pub ensemble: usize,
    pub minoration_trials: usize,
    pub minoration_steps: usize,
    pub cone_pairs: usize,
    /// Cocycle steps for the cone-contraction check.
    pub cone_steps: usize,
    pub telescoping_points: usize,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            birkhoff_samples: 5000,
            sprindzuk_samples: 4000,
            ensemble: 64,
            minoration_trials: 100,
            minoration_steps: 10,
            cone_pairs: 50,
            cone_steps: 10,
            telescoping_points: 200,
        }
    }
}

/// Optional pass/fail thresholds evaluated at the end of a run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Assertions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_equivariance_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_range: Option<[f64; 2]>,
    /// "coboundary" or "nondegenerate".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect_verdict: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_clt_p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_martingale_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_minoration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_cone_inclusion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_sprindzuk_slope: Option<f64>,
}

/// Full experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub base: BaseSpec,
    pub family: Vec<MapDecl>,
    pub observable: ObservableDecl,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    #[serde(default = "default_method")]
    pub method: BackendMethod,
    /// Pullback depth; when absent the smallest depth with fitted
    /// contraction below 1e-10 is probed (capped at 200).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default = "default_aperture")]
    pub cone_aperture: f64,
    #[serde(default)]
    pub horizons: Horizons,
    #[serde(default)]
    pub monte_carlo: MonteCarlo,
    /// Rate exponent echoed into the diagnostic scalings; must lie in
    /// (0, 1/2).
    #[serde(default = "default_d")]
    pub d_exponent: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub assertions: Assertions,
}

fn default_n_bins() -> usize {
    1024
}
fn default_method() -> BackendMethod {
    BackendMethod::Ulam
}
fn default_aperture() -> f64 {
    8.0
}
fn default_d() -> f64 {
    0.25
}
fn default_seed() -> u64 {
    42
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.family.is_empty() {
            return Err(Error::Config("family must declare at least one map".into()));
        }
        if self.base.symbol_count() != self.family.len() {
            return Err(Error::Config(format!(
                "base has {} symbols but the family declares {} maps",
                self.base.symbol_count(),
                self.family.len()
            )));
        }
        if !(self.d_exponent > 0.0 && self.d_exponent < 0.5) {
            return Err(Error::Config(format!(
                "d must lie in (0, 1/2), got {}",
                self.d_exponent
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::Config("n_bins must be at least 2".into()));
        }
        if self.cone_aperture <= 0.0 {
            return Err(Error::Config("cone aperture must be positive".into()));
        }
        let h = &self.horizons;
        for (name, v) in [
            ("decay_n_max", h.decay_n_max),
            ("variance_n_max", h.variance_n_max),
            ("tau_n_max", h.tau_n_max),
            ("clt_k", h.clt_k),
            ("martingale_n", h.martingale_n),
            ("sprindzuk_n_max", h.sprindzuk_n_max),
            ("density_offsets", h.density_offsets),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("horizon {name} must be positive")));
            }
        }
        if h.tau_n_max < 8 {
            return Err(Error::Config("tau_n_max must be at least 8".into()));
        }
        for decl in &self.family {
            decl.build()?;
        }
        self.build_family()?.constants()?;
        self.observable.build(self.n_bins)?;
        Ok(())
    }

    pub fn build_family(&self) -> Result<MapFamily> {
        MapFamily::new(self.family.iter().map(|d| d.build()).collect::<Result<Vec<_>>>()?)
    }

    /// The longest future horizon any section walks to.
    pub fn max_horizon(&self) -> usize {
        let h = &self.horizons;
        [h.decay_n_max, h.variance_n_max, h.tau_n_max, h.clt_k, h.martingale_n, h.sprindzuk_n_max]
            .into_iter()
            .max()
            .unwrap_or(1)
    }
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{} at line {}, column {}", e, e.line(), e.column())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Names of the shipped example configurations.
pub const EXAMPLE_NAMES: &[&str] =
    &["lebesgue_pair", "coboundary", "single_doubling", "smooth_pair", "markov_three"];

/// A ready-to-run configuration by name.
pub fn example_config(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "lebesgue_pair" => ExperimentConfig {
            name: "lebesgue_pair".into(),
            base: BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 42 },
            family: vec![MapDecl::AffineMod1 { k: 2 }, MapDecl::AffineMod1 { k: 3 }],
            observable: ObservableDecl::Cosine { freq: 1.0, amplitude: 1.0 },
            n_bins: 768,
            method: BackendMethod::ExactMarkov,
            depth: Some(40),
            cone_aperture: 8.0,
            horizons: Horizons::default(),
            monte_carlo: MonteCarlo::default(),
            d_exponent: 0.25,
            seed: 42,
            output_dir: None,
            assertions: Assertions {
                max_equivariance_residual: Some(1e-12),
                sigma2_range: Some([0.485, 0.515]),
                expect_verdict: Some("nondegenerate".into()),
                min_clt_p_value: Some(0.01),
                max_martingale_residual: Some(1e-9),
                min_minoration: Some(0.05),
                min_cone_inclusion: Some(1.0),
                max_sprindzuk_slope: Some(0.6),
            },
        },
        "coboundary" => ExperimentConfig {
            name: "coboundary".into(),
            base: BaseSpec::Iid { weights: vec![1.0], seed: 42 },
            family: vec![MapDecl::AffineMod1 { k: 2 }],
            observable: ObservableDecl::CosineCombo { terms: vec![(1.0, 2.0), (-1.0, 1.0)] },
            n_bins: 1024,
            method: BackendMethod::ExactMarkov,
            depth: Some(40),
            cone_aperture: 8.0,
            horizons: Horizons::default(),
            monte_carlo: MonteCarlo::default(),
            d_exponent: 0.25,
            seed: 42,
            output_dir: None,
            assertions: Assertions {
                max_equivariance_residual: Some(1e-12),
                expect_verdict: Some("coboundary".into()),
                max_martingale_residual: Some(1e-9),
                min_minoration: Some(0.05),
                ..Assertions::default()
            },
        },
        "single_doubling" => ExperimentConfig {
            name: "single_doubling".into(),
            base: BaseSpec::Iid { weights: vec![1.0], seed: 42 },
            family: vec![MapDecl::AffineMod1 { k: 2 }],
            observable: ObservableDecl::Constant { value: 1.0 },
            n_bins: 512,
            method: BackendMethod::ExactMarkov,
            depth: Some(40),
            cone_aperture: 8.0,
            horizons: Horizons { tau_n_max: 500, sprindzuk_n_max: 500, ..Horizons::default() },
            monte_carlo: MonteCarlo::default(),
            d_exponent: 0.25,
            seed: 42,
            output_dir: None,
            assertions: Assertions {
                max_equivariance_residual: Some(1e-12),
                expect_verdict: Some("coboundary".into()),
                ..Assertions::default()
            },
        },
        "smooth_pair" => ExperimentConfig {
            name: "smooth_pair".into(),
            base: BaseSpec::Iid { weights: vec![0.5, 0.5], seed: 42 },
            family: vec![
                MapDecl::SinePerturbed { base: 3, eps: 0.2 },
                MapDecl::SinePerturbed { base: 3, eps: -0.15 },
            ],
            observable: ObservableDecl::Coordinate,
            n_bins: 1024,
            method: BackendMethod::Ulam,
            depth: None,
            cone_aperture: 8.0,
            horizons: Horizons { tau_n_max: 1000, sprindzuk_n_max: 1000, clt_k: 200, ..Horizons::default() },
            monte_carlo: MonteCarlo { birkhoff_samples: 3000, sprindzuk_samples: 2000, ..MonteCarlo::default() },
            d_exponent: 0.25,
            seed: 42,
            output_dir: None,
            assertions: Assertions {
                max_equivariance_residual: Some(1e-10),
                expect_verdict: Some("nondegenerate".into()),
                min_clt_p_value: Some(0.01),
                min_minoration: Some(0.05),
                ..Assertions::default()
            },
        },
        "markov_three" => ExperimentConfig {
            name: "markov_three".into(),
            base: BaseSpec::Iid { weights: vec![1.0], seed: 42 },
            family: vec![MapDecl::ThreeBranchMarkov],
            observable: ObservableDecl::Cosine { freq: 1.0, amplitude: 1.0 },
            n_bins: 768,
            method: BackendMethod::ExactMarkov,
            depth: Some(60),
            cone_aperture: 8.0,
            horizons: Horizons { tau_n_max: 1000, sprindzuk_n_max: 1000, ..Horizons::default() },
            monte_carlo: MonteCarlo::default(),
            d_exponent: 0.25,
            seed: 42,
            output_dir: None,
            assertions: Assertions {
                max_equivariance_residual: Some(1e-12),
                expect_verdict: Some("nondegenerate".into()),
                max_martingale_residual: Some(1e-9),
                min_minoration: Some(0.05),
                min_clt_p_value: Some(0.01),
                ..Assertions::default()
            },
        },
        other => {
            return Err(Error::Config(format!(
                "unknown example '{other}'; available: {}",
                EXAMPLE_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let text = r#"{
            "name": "minimal",
            "base": {"kind": "iid", "weights": [1.0], "seed": 1},
            "family": [{"form": "affine_mod1", "k": 2}],
            "observable": {"kind": "cosine", "freq": 1.0}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_bins, 1024);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.horizons.clt_k, 300);
        assert!((cfg.d_exponent - 0.25).abs() < 1e-15);
    }

    #[test]
    fn d_outside_range_is_rejected() {
        let mut cfg = example_config("single_doubling").unwrap();
        cfg.d_exponent = 0.7;
        let err = cfg.validate().unwrap_err();
        assert!(format!("{err}").contains("d must lie in (0, 1/2)"), "{err}");
    }

    #[test]
    fn negative_weight_is_rejected() {
        let mut cfg = example_config("single_doubling").unwrap();
        cfg.base = BaseSpec::Iid { weights: vec![1.5, -0.5], seed: 1 };
        cfg.family = vec![MapDecl::AffineMod1 { k: 2 }, MapDecl::AffineMod1 { k: 3 }];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn symbol_map_mismatch_is_rejected() {
        let mut cfg = example_config("lebesgue_pair").unwrap();
        cfg.family.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn all_examples_validate() {
        for name in EXAMPLE_NAMES {
            let cfg = example_config(name).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(example_config("nope").is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = example_config("lebesgue_pair").unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
    }
}
