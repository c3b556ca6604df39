//! Discrete function space on the unit interval: piecewise-constant grid
//! functions with L1 / variation / sup / esinf functionals, the positive
//! cone of bounded-ratio variation, and the projective (Hilbert) metric on
//! that cone.
//!
//! The variation of a grid function is the total variation of its
//! piecewise-constant representative, interior jumps only. Constants have
//! zero variation, and the indicator of a half interval has variation 1,
//! matching the classical value.

use crate::error::{Error, Result};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Relative tolerance for the cone-metric bisections.
const BISECT_TOL: f64 = 1e-10;

/// Piecewise-constant function on `n_bins` equal bins of [0, 1], stored as
/// bin values. Lebesgue measure gives each bin mass 1/n_bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
}

/// The four base functionals plus the two derived norms.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Norms {
    pub l1: f64,
    pub variation: f64,
    pub sup: f64,
    pub esinf: f64,
    /// variation + l1
    pub bv: f64,
    /// variation + sup
    pub var_norm: f64,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("grid needs at least 2 bins".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("grid values must be finite".into()));
        }
        Ok(GridFunction { values })
    }

    pub fn constant(n_bins: usize, c: f64) -> Self {
        GridFunction { values: vec![c; n_bins] }
    }

    pub fn zeros(n_bins: usize) -> Self {
        Self::constant(n_bins, 0.0)
    }

    /// Sample `f` at bin midpoints.
    pub fn from_midpoints(n_bins: usize, f: impl Fn(f64) -> f64) -> Self {
        let n = n_bins as f64;
        GridFunction {
            values: (0..n_bins).map(|i| f((i as f64 + 0.5) / n)).collect(),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Index of the bin containing x (right-open bins, last bin closed).
    pub fn bin_of(n_bins: usize, x: f64) -> usize {
        let i = (x * n_bins as f64).floor() as isize;
        i.clamp(0, n_bins as isize - 1) as usize
    }

    /// Value of the representative at x.
    pub fn eval(&self, x: f64) -> f64 {
        self.values[Self::bin_of(self.values.len(), x)]
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() / self.values.len() as f64
    }

    pub fn variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn esinf(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn bv_norm(&self) -> f64 {
        self.variation() + self.l1_norm()
    }

    pub fn var_norm(&self) -> f64 {
        self.variation() + self.sup_norm()
    }

    /// Signed integral against Lebesgue measure.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Integral of the pointwise product against Lebesgue measure.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.values.len() as f64)
    }

    pub fn l1_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.values.len() as f64)
    }

    fn check_shape(&self, other: &GridFunction) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(Error::Shape { expected: self.values.len(), got: other.values.len() });
        }
        Ok(())
    }

    pub fn scale(&self, t: f64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|v| t * v).collect() }
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_shape(other)?;
        Ok(GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_shape(other)?;
        Ok(GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn shift_by(&self, c: f64) -> GridFunction {
        GridFunction { values: self.values.iter().map(|v| v + c).collect() }
    }

    /// Pointwise product of representatives.
    pub fn product(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_shape(other)?;
        Ok(GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    /// Pointwise quotient, guarded by a positive floor on the denominator.
    pub fn quotient(&self, denom: &GridFunction, floor: f64) -> Result<GridFunction> {
        self.check_shape(denom)?;
        let esinf = denom.esinf();
        if esinf <= floor {
            return Err(Error::DensityFloor { esinf, floor });
        }
        Ok(GridFunction {
            values: self.values.iter().zip(&denom.values).map(|(a, b)| a / b).collect(),
        })
    }

    /// Rescale so the signed integral is 1.
    pub fn normalize_mass(&self) -> Result<GridFunction> {
        let s = self.integral();
        if s.abs() < 1e-300 {
            return Err(Error::Precondition("cannot normalize a zero-mass function".into()));
        }
        Ok(self.scale(1.0 / s))
    }

    /// Repeat each value r times (exact refinement of the representative).
    pub fn upsample(&self, r: usize) -> GridFunction {
        let mut values = Vec::with_capacity(self.values.len() * r);
        for &v in &self.values {
            values.extend(std::iter::repeat(v).take(r));
        }
        GridFunction { values }
    }

    /// Average r consecutive bins (adjoint of `upsample`).
    pub fn downsample(&self, r: usize) -> Result<GridFunction> {
        if r == 0 || self.values.len() % r != 0 {
            return Err(Error::Shape { expected: self.values.len(), got: r });
        }
        let values = self
            .values
            .chunks(r)
            .map(|c| c.iter().sum::<f64>() / r as f64)
            .collect();
        Ok(GridFunction { values })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// The four functionals of a grid function together with both norms.
pub fn norms(g: &GridFunction) -> Norms {
    let l1 = g.l1_norm();
    let variation = g.variation();
    let sup = g.sup_norm();
    Norms { l1, variation, sup, esinf: g.esinf(), bv: variation + l1, var_norm: variation + sup }
}

/// Aperture of the positive cone {g >= 0, var(g) <= a * l1(g)}.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConeParams {
    pub aperture: f64,
}

impl ConeParams {
    pub fn new(aperture: f64) -> Result<Self> {
        if !(aperture > 0.0) {
            return Err(Error::Config(format!("cone aperture must be positive, got {aperture}")));
        }
        Ok(ConeParams { aperture })
    }

    pub fn halved(&self) -> ConeParams {
        ConeParams { aperture: self.aperture / 2.0 }
    }
}

/// Membership in the cone. The zero function belongs (both sides vanish).
pub fn cone_contains(g: &GridFunction, cone: &ConeParams) -> bool {
    g.esinf() >= 0.0 && g.variation() <= cone.aperture * g.l1_norm()
}

/// Projective metric data between two cone elements.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HilbertReport {
    /// Largest lambda with g2 - lambda g1 still in the cone.
    pub xi: f64,
    /// Smallest mu with mu g1 - g2 in the cone (infinite if none).
    pub upsilon: f64,
    /// log(upsilon / xi); infinite when either endpoint degenerates.
    pub theta: f64,
}

fn cone_member_scaled(g1: &GridFunction, g2: &GridFunction, lam: f64, sign: bool, cone: &ConeParams) -> bool {
    // sign = false: test g2 - lam g1; sign = true: test lam g1 - g2
    let n = g1.values.len() as f64;
    let mut min = f64::INFINITY;
    let mut l1 = 0.0;
    let mut var = 0.0;
    let mut prev = 0.0;
    for (i, (&a, &b)) in g1.values.iter().zip(&g2.values).enumerate() {
        let v = if sign { lam * a - b } else { b - lam * a };
        min = min.min(v);
        if min < 0.0 {
            return false;
        }
        l1 += v;
        if i > 0 {
            var += (v - prev).abs();
        }
        prev = v;
    }
    var <= cone.aperture * (l1 / n)
}

fn describe_violation(g: &GridFunction, cone: &ConeParams) -> String {
    let min = g.esinf();
    if min < 0.0 {
        format!("nonnegativity fails: min value {min:.6e} < 0")
    } else {
        format!(
            "variation bound fails: var = {:.6e} > a * l1 = {:.6e}",
            g.variation(),
            cone.aperture * g.l1_norm()
        )
    }
}

/// Projective distance between two cone elements on the same grid.
///
/// Both feasibility families cut out an interval of scalars, so the
/// endpoints are located by doubling plus bisection to relative tolerance
/// 1e-10. An empty family maps to xi = 0 / upsilon = +inf and theta = +inf.
pub fn hilbert_metric(g1: &GridFunction, g2: &GridFunction, cone: &ConeParams) -> Result<HilbertReport> {
    if g1.n_bins() != g2.n_bins() {
        return Err(Error::Shape { expected: g1.n_bins(), got: g2.n_bins() });
    }
    for (g, name) in [(g1, "first"), (g2, "second")] {
        if !cone_contains(g, cone) {
            return Err(Error::Precondition(format!(
                "{name} argument is not in the cone (a = {}): {}",
                cone.aperture,
                describe_violation(g, cone)
            )));
        }
    }
    if g1.l1_norm() < 1e-300 || g2.l1_norm() < 1e-300 {
        return Ok(HilbertReport { xi: 0.0, upsilon: f64::INFINITY, theta: f64::INFINITY });
    }

    // xi: feasible set is an interval containing 0; find its right endpoint.
    let xi = {
        let feasible = |lam: f64| cone_member_scaled(g1, g2, lam, false, cone);
        let mut hi = 1.0;
        let mut grew = 0;
        while feasible(hi) {
            hi *= 2.0;
            grew += 1;
            if grew > 200 {
                break;
            }
        }
        if grew > 200 {
            f64::INFINITY
        } else {
            let mut lo = if hi == 1.0 { 0.0 } else { hi / 2.0 };
            while hi - lo > BISECT_TOL * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        }
    };

    // upsilon: feasible set is an upward-closed interval; find its left endpoint.
    let upsilon = {
        let feasible = |mu: f64| cone_member_scaled(g1, g2, mu, true, cone);
        let mut hi = 1.0;
        let mut grew = 0;
        while !feasible(hi) {
            hi *= 2.0;
            grew += 1;
            if grew > 200 {
                break;
            }
        }
        if grew > 200 {
            f64::INFINITY
        } else {
            let mut lo = 0.0;
            while hi - lo > BISECT_TOL * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    };

    let theta = if xi <= 0.0 || !upsilon.is_finite() || !xi.is_finite() {
        f64::INFINITY
    } else {
        (upsilon / xi).ln().max(0.0)
    };
    Ok(HilbertReport { xi, upsilon, theta })
}

/// Project a nonnegative function into the cone by repeated neighbor
/// averaging (kernel 1/4, 1/2, 1/4 with reflecting ends), which preserves
/// mass and nonnegativity while strictly shrinking variation. The result is
/// normalized to unit mass.
pub fn project_into_cone(g: &GridFunction, cone: &ConeParams, max_rounds: usize) -> Result<GridFunction> {
    if g.esinf() < 0.0 {
        return Err(Error::Precondition("cone projection needs a nonnegative start".into()));
    }
    if g.integral() < 1e-300 {
        return Err(Error::Sampling("cone projection of a zero-mass function".into()));
    }
    let mut v = g.values.clone();
    for _ in 0..max_rounds {
        let gf = GridFunction { values: v.clone() };
        if cone_contains(&gf, cone) {
            return gf.normalize_mass();
        }
        let n = v.len();
        let mut next = vec![0.0; n];
        for i in 0..n {
            let left = if i == 0 { v[0] } else { v[i - 1] };
            let right = if i + 1 == n { v[n - 1] } else { v[i + 1] };
            next[i] = 0.25 * left + 0.5 * v[i] + 0.25 * right;
        }
        v = next;
    }
    let gf = GridFunction { values: v };
    if cone_contains(&gf, cone) {
        gf.normalize_mass()
    } else {
        Err(Error::Sampling(format!(
            "cone projection did not land in the cone after {max_rounds} rounds"
        )))
    }
}

/// Random unit-mass cone element: uniform bin values smoothed into the cone.
pub fn sample_cone_element(n_bins: usize, cone: &ConeParams, rng: &mut ChaCha12Rng) -> Result<GridFunction> {
    use rand::Rng;
    let values: Vec<f64> = (0..n_bins).map(|_| rng.random::<f64>() + 1e-3).collect();
    project_into_cone(&GridFunction { values }, cone, 10_000)
}
