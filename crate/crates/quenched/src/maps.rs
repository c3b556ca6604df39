//! Piecewise monotone expanding maps of [0, 1] with exact branch data and
//! certified expansion / distortion constants.
//!
//! Branches are affine or a sine-perturbed affine lift. Smooth branches
//! carry explicit derivative expressions so the family constants entering
//! the uniform bounds are certified, not estimated.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const GEOM_TOL: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-13;
const ROOT_ITER_CAP: usize = 200;

/// Analytic form of one branch, as a map on its domain (sheet already
/// subtracted, so the branch maps into [0, 1]).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum BranchForm {
    Affine { slope: f64, intercept: f64 },
    /// x -> base x + eps sin(2 pi x) - sheet
    SineLift { base: f64, eps: f64, sheet: f64 },
}

/// One monotone branch: domain, form, image and certified derivative bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub form: BranchForm,
    pub img_lo: f64,
    pub img_hi: f64,
    /// Certified bounds on |f'| over the branch.
    pub deriv_min: f64,
    pub deriv_max: f64,
    /// Certified bound on |f''| over the branch.
    pub second_max: f64,
    pub increasing: bool,
}

impl Branch {
    pub fn affine(lo: f64, hi: f64, slope: f64, intercept: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Config(format!("branch domain [{lo}, {hi}] is empty")));
        }
        if slope.abs() <= 1.0 {
            return Err(Error::Config(format!("branch slope {slope} is not expanding")));
        }
        let (y0, y1) = (slope * lo + intercept, slope * hi + intercept);
        let (img_lo, img_hi) = if slope > 0.0 { (y0, y1) } else { (y1, y0) };
        Ok(Branch {
            lo,
            hi,
            form: BranchForm::Affine { slope, intercept },
            img_lo,
            img_hi,
            deriv_min: slope.abs(),
            deriv_max: slope.abs(),
            second_max: 0.0,
            increasing: slope > 0.0,
        })
    }

    fn sine(lo: f64, hi: f64, base: f64, eps: f64, sheet: f64) -> Result<Self> {
        let amp = 2.0 * PI * eps.abs();
        if base - amp <= 1.0 {
            return Err(Error::Config(format!(
                "sine branch: base {base} with eps {eps} gives min slope {} <= 1",
                base - amp
            )));
        }
        let f = |x: f64| base * x + eps * (2.0 * PI * x).sin() - sheet;
        Ok(Branch {
            lo,
            hi,
            form: BranchForm::SineLift { base, eps, sheet },
            img_lo: f(lo),
            img_hi: f(hi),
            deriv_min: base - amp,
            deriv_max: base + amp,
            second_max: 4.0 * PI * PI * eps.abs(),
            increasing: true,
        })
    }

    pub fn forward(&self, x: f64) -> f64 {
        match &self.form {
            BranchForm::Affine { slope, intercept } => slope * x + intercept,
            BranchForm::SineLift { base, eps, sheet } => base * x + eps * (2.0 * PI * x).sin() - sheet,
        }
    }

    /// Signed derivative at x.
    pub fn derivative(&self, x: f64) -> f64 {
        match &self.form {
            BranchForm::Affine { slope, .. } => *slope,
            BranchForm::SineLift { base, eps, .. } => base + eps * 2.0 * PI * (2.0 * PI * x).cos(),
        }
    }

    pub fn contains_image(&self, y: f64) -> bool {
        y >= self.img_lo - GEOM_TOL && y <= self.img_hi + GEOM_TOL
    }

    /// Branch inverse of y. Closed form for affine branches, bracketed
    /// Newton with bisection fallback for smooth ones.
    pub fn inverse(&self, y: f64, branch_index: usize) -> Result<f64> {
        match &self.form {
            BranchForm::Affine { slope, intercept } => {
                let x = (y - intercept) / slope;
                Ok(x.clamp(self.lo, self.hi))
            }
            BranchForm::SineLift { .. } => {
                let mut lo = self.lo;
                let mut hi = self.hi;
                let mut x = 0.5 * (lo + hi);
                for _ in 0..ROOT_ITER_CAP {
                    let fx = self.forward(x) - y;
                    if fx.abs() < ROOT_TOL {
                        return Ok(x.clamp(self.lo, self.hi));
                    }
                    if fx > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let d = self.derivative(x);
                    let newton = x - fx / d;
                    x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                    if hi - lo < ROOT_TOL * 0.01 {
                        return Ok(x.clamp(self.lo, self.hi));
                    }
                }
                Err(Error::Numerical {
                    branch: branch_index,
                    message: format!("branch inverse did not converge at y = {y}"),
                })
            }
        }
    }
}

/// A piecewise monotone expanding map of the unit interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PiecewiseMap {
    pub label: String,
    branches: Vec<Branch>,
    /// Branch count.
    pub branch_count: usize,
    /// Certified min of |f'| over the map.
    pub expansion_min: f64,
    /// Certified max of |f''| over the map.
    pub second_deriv_max: f64,
    /// Verified Markov partition, when the map has one.
    pub markov: Option<Vec<f64>>,
}

impl PiecewiseMap {
    pub fn new(label: impl Into<String>, branches: Vec<Branch>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Config("map needs at least one branch".into()));
        }
        if (branches[0].lo).abs() > GEOM_TOL || (branches[branches.len() - 1].hi - 1.0).abs() > GEOM_TOL {
            return Err(Error::Config("branch domains must tile [0, 1]".into()));
        }
        for w in branches.windows(2) {
            if (w[0].hi - w[1].lo).abs() > GEOM_TOL {
                return Err(Error::Config(format!(
                    "branch domains must tile [0, 1]: gap between {} and {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        let mut expansion_min = f64::INFINITY;
        let mut second_deriv_max: f64 = 0.0;
        for b in &branches {
            if b.deriv_min <= 1.0 {
                return Err(Error::ModelViolation(format!(
                    "branch [{}, {}] has |f'| lower bound {} <= 1",
                    b.lo, b.hi, b.deriv_min
                )));
            }
            if b.img_lo < -GEOM_TOL || b.img_hi > 1.0 + GEOM_TOL {
                return Err(Error::Config(format!(
                    "branch image [{}, {}] leaves [0, 1]",
                    b.img_lo, b.img_hi
                )));
            }
            expansion_min = expansion_min.min(b.deriv_min);
            second_deriv_max = second_deriv_max.max(b.second_max);
        }
        Ok(PiecewiseMap {
            label: label.into(),
            branch_count: branches.len(),
            expansion_min,
            second_deriv_max,
            markov: None,
            branches,
        })
    }

    /// Verify and record a Markov partition: branch endpoints must be
    /// partition points and branch endpoint images must land on partition
    /// points. The flag is verified, never trusted.
    pub fn with_markov_partition(mut self, partition: Vec<f64>) -> Result<Self> {
        let on_partition = |x: f64| partition.iter().any(|p| (p - x).abs() <= GEOM_TOL);
        for b in &self.branches {
            for x in [b.lo, b.hi] {
                if !on_partition(x) {
                    return Err(Error::Config(format!(
                        "markov check failed: branch endpoint {x} is not a partition point"
                    )));
                }
            }
            for y in [b.img_lo, b.img_hi] {
                if !on_partition(y) {
                    return Err(Error::Config(format!(
                        "markov check failed: branch endpoint image {y} is not a partition point"
                    )));
                }
            }
        }
        self.markov = Some(partition);
        Ok(self)
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// The full-branch map x -> k x mod 1.
    pub fn affine_mod1(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config("affine_mod1 needs k >= 2".into()));
        }
        let kf = k as f64;
        let branches = (0..k)
            .map(|j| Branch::affine(j as f64 / kf, (j + 1) as f64 / kf, kf, -(j as f64)))
            .collect::<Result<Vec<_>>>()?;
        let partition = (0..=k).map(|j| j as f64 / kf).collect();
        PiecewiseMap::new(format!("affine_mod1({k})"), branches)?.with_markov_partition(partition)
    }

    /// The symmetric tent map.
    pub fn tent() -> Result<Self> {
        let branches = vec![
            Branch::affine(0.0, 0.5, 2.0, 0.0)?,
            Branch::affine(0.5, 1.0, -2.0, 2.0)?,
        ];
        PiecewiseMap::new("tent", branches)?.with_markov_partition(vec![0.0, 0.5, 1.0])
    }

    /// Three-branch Markov map with a non-constant invariant density:
    /// 2x on [0, 1/3], 2x - 1/3 on [1/3, 2/3], 3x - 2 on [2/3, 1].
    /// Its invariant density is (2/3, 4/3, 1) on the thirds.
    pub fn three_branch_markov() -> Result<Self> {
        let third = 1.0 / 3.0;
        let branches = vec![
            Branch::affine(0.0, third, 2.0, 0.0)?,
            Branch::affine(third, 2.0 * third, 2.0, -third)?,
            Branch::affine(2.0 * third, 1.0, 3.0, -2.0)?,
        ];
        PiecewiseMap::new("three_branch_markov", branches)?
            .with_markov_partition(vec![0.0, third, 2.0 * third, 1.0])
    }

    /// Smooth non-Markov full-branch map x -> base x + eps sin(2 pi x) mod 1.
    pub fn sine_perturbed(base: u32, eps: f64) -> Result<Self> {
        if base < 2 {
            return Err(Error::Config("sine_perturbed needs base >= 2".into()));
        }
        let bf = base as f64;
        if bf - 2.0 * PI * eps.abs() <= 1.0 {
            return Err(Error::Config(format!(
                "sine_perturbed({base}, {eps}) is not uniformly expanding"
            )));
        }
        // branch cuts where the lift crosses integers
        let lift = |x: f64| bf * x + eps * (2.0 * PI * x).sin();
        let mut cuts = vec![0.0];
        for j in 1..base {
            let target = j as f64;
            let mut lo = 0.0;
            let mut hi = 1.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if lift(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        cuts.push(1.0);
        let branches = (0..base as usize)
            .map(|j| Branch::sine(cuts[j], cuts[j + 1], bf, eps, j as f64))
            .collect::<Result<Vec<_>>>()?;
        PiecewiseMap::new(format!("sine_perturbed({base}, {eps})"), branches)
    }

    /// Map from an explicit affine branch table.
    pub fn from_branch_table(
        label: impl Into<String>,
        breakpoints: &[f64],
        slopes: &[f64],
        intercepts: &[f64],
        markov: Option<Vec<f64>>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 || slopes.len() != breakpoints.len() - 1 || intercepts.len() != slopes.len() {
            return Err(Error::Config(
                "branch table needs n+1 breakpoints and n slopes and intercepts".into(),
            ));
        }
        let branches = (0..slopes.len())
            .map(|j| Branch::affine(breakpoints[j], breakpoints[j + 1], slopes[j], intercepts[j]))
            .collect::<Result<Vec<_>>>()?;
        let map = PiecewiseMap::new(label, branches)?;
        match markov {
            Some(p) => map.with_markov_partition(p),
            None => Ok(map),
        }
    }

    fn branch_at(&self, x: f64) -> &Branch {
        // shared endpoints belong to the left branch
        let idx = self.branches.partition_point(|b| b.hi < x);
        &self.branches[idx.min(self.branches.len() - 1)]
    }

    /// Pointwise image of x under the map.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain { x });
        }
        Ok(self.branch_at(x).forward(x).clamp(0.0, 1.0))
    }

    /// Signed derivative at x (branch chosen by the same endpoint rule).
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain { x });
        }
        Ok(self.branch_at(x).derivative(x))
    }

    /// All branch inverses of y with their absolute derivatives: one entry
    /// per branch whose image contains y.
    pub fn branch_preimages(&self, y: f64) -> Result<Vec<(f64, f64)>> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain { x: y });
        }
        let mut out = Vec::with_capacity(self.branches.len());
        for (i, b) in self.branches.iter().enumerate() {
            if b.contains_image(y) {
                let x = b.inverse(y, i)?;
                out.push((x, b.derivative(x).abs()));
            }
        }
        Ok(out)
    }

    /// True when every branch is affine with an integer slope.
    pub fn integer_slopes(&self) -> Option<Vec<i64>> {
        let mut out = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            match &b.form {
                BranchForm::Affine { slope, .. } => {
                    let r = slope.round();
                    if (slope - r).abs() > 1e-9 {
                        return None;
                    }
                    out.push(r as i64);
                }
                _ => return None,
            }
        }
        Some(out)
    }
}

/// Family of maps indexed by the driving symbol.
#[derive(Clone, Debug)]
pub struct MapFamily {
    pub maps: Vec<PiecewiseMap>,
}

/// Uniform constants of a family: branch count, expansion, distortion and
/// the derived uniform transfer bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct UniformConstants {
    /// Max branch count over the family.
    pub branch_count: usize,
    /// Min expansion over the family (must exceed 1).
    pub expansion: f64,
    /// Max |f''| bound over the family.
    pub distortion: f64,
    /// 4 (N/delta v 1)(D/delta^2 v 1)(1/delta v 1).
    pub bv_bound: f64,
}

impl MapFamily {
    pub fn new(maps: Vec<PiecewiseMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Config("map family must be nonempty".into()));
        }
        Ok(MapFamily { maps })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn map(&self, symbol: usize) -> Result<&PiecewiseMap> {
        self.maps.get(symbol).ok_or_else(|| {
            Error::Config(format!("symbol {symbol} has no map (family size {})", self.maps.len()))
        })
    }

    /// Uniform family constants.
    pub fn constants(&self) -> Result<UniformConstants> {
        let branch_count = self.maps.iter().map(|m| m.branch_count).max().unwrap_or(0);
        let expansion = self.maps.iter().map(|m| m.expansion_min).fold(f64::INFINITY, f64::min);
        let distortion = self.maps.iter().map(|m| m.second_deriv_max).fold(0.0, f64::max);
        if expansion <= 1.0 {
            return Err(Error::ModelViolation(format!(
                "uniform expansion constant {expansion} must exceed 1"
            )));
        }
        let d = expansion;
        let bv_bound = 4.0
            * (branch_count as f64 / d).max(1.0)
            * (distortion / (d * d)).max(1.0)
            * (1.0 / d).max(1.0);
        Ok(UniformConstants { branch_count, expansion, distortion, bv_bound })
    }

    /// Least common multiple of all integer branch slopes, when every map
    /// is affine with integer slopes. This is the grid refinement on which
    /// compositions with any family member stay piecewise constant.
    pub fn integer_slope_refinement(&self) -> Option<usize> {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        let mut l: u64 = 1;
        for m in &self.maps {
            for s in m.integer_slopes()? {
                let s = s.unsigned_abs();
                l = l / gcd(l, s) * s;
                if l > 4096 {
                    return None;
                }
            }
        }
        Some(l as usize)
    }

    /// Smallest iterate whose uniform expansion exceeds 2 (the step count
    /// used by the iterated variation inequality).
    pub fn ly_iterate(&self) -> Result<usize> {
        let c = self.constants()?;
        let mut n = 1usize;
        let mut pow = c.expansion;
        while pow <= 2.0 {
            n += 1;
            pow *= c.expansion;
            if n > 64 {
                return Err(Error::ModelViolation("expansion too weak to iterate".into()));
            }
        }
        Ok(n)
    }
}
