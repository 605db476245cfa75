//! Gaussian type-1 and interval type-2 fuzzy sets.
//!
//! An interval type-2 set here is a Gaussian with a fixed mean whose standard
//! deviation is only known to lie in `[sigma_lower, sigma_upper]`. Its upper
//! membership function is the Gaussian with `sigma_upper` and its lower one
//! the Gaussian with `sigma_lower`; every Gaussian with a sigma in between is
//! an embedded type-1 set lying inside the footprint.

use crate::engine::{km_reduce, FiringInterval, TypeReducedInterval};
use crate::error::{Error, Result};

/// Half-width of the default centroid support, in multiples of `sigma_upper`.
pub const CENTROID_SUPPORT_SIGMAS: f64 = 4.0;
/// Default number of samples on the centroid support.
pub const CENTROID_RESOLUTION: usize = 201;

#[inline]
pub(crate) fn gaussian(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    let g = (-0.5 * z * z).exp();
    debug_assert!((0.0..=1.0).contains(&g), "gaussian grade {g} outside [0, 1]");
    g
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianT1Set {
    mean: f64,
    sigma: f64,
}

impl GaussianT1Set {
    pub fn new(mean: f64, sigma: f64) -> Result<Self> {
        if !mean.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian set needs finite mean and sigma > 0, got ({mean}, {sigma})"
            )));
        }
        Ok(GaussianT1Set { mean, sigma })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `exp(-½((x - mean) / sigma)²)`.
    pub fn membership(&self, x: f64) -> Result<f64> {
        check_finite(x)?;
        Ok(gaussian(x, self.mean, self.sigma))
    }
}

/// Membership grade of an interval type-2 set at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipInterval {
    pub lower: f64,
    pub upper: f64,
}

impl MembershipInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IT2GaussianSet {
    mean: f64,
    sigma_lower: f64,
    sigma_upper: f64,
}

impl IT2GaussianSet {
    pub fn new(mean: f64, sigma_lower: f64, sigma_upper: f64) -> Result<Self> {
        if !mean.is_finite() || !sigma_upper.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite parameters ({mean}, {sigma_lower}, {sigma_upper})"
            )));
        }
        if !(sigma_lower > 0.0 && sigma_lower <= sigma_upper) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_lower <= sigma_upper, got [{sigma_lower}, {sigma_upper}]"
            )));
        }
        Ok(IT2GaussianSet {
            mean,
            sigma_lower,
            sigma_upper,
        })
    }

    /// Degenerate interval set with `sigma_lower == sigma_upper`.
    pub fn from_t1(set: GaussianT1Set) -> Self {
        IT2GaussianSet {
            mean: set.mean,
            sigma_lower: set.sigma,
            sigma_upper: set.sigma,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sigma_lower(&self) -> f64 {
        self.sigma_lower
    }

    pub fn sigma_upper(&self) -> f64 {
        self.sigma_upper
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_lower == self.sigma_upper
    }

    pub fn upper_set(&self) -> GaussianT1Set {
        GaussianT1Set {
            mean: self.mean,
            sigma: self.sigma_upper,
        }
    }

    pub fn lower_set(&self) -> GaussianT1Set {
        GaussianT1Set {
            mean: self.mean,
            sigma: self.sigma_lower,
        }
    }

    pub fn membership(&self, x: f64) -> Result<MembershipInterval> {
        check_finite(x)?;
        Ok(self.grade(x))
    }

    #[inline]
    pub(crate) fn grade(&self, x: f64) -> MembershipInterval {
        MembershipInterval {
            lower: gaussian(x, self.mean, self.sigma_lower),
            upper: gaussian(x, self.mean, self.sigma_upper),
        }
    }

    /// Centroid interval on the default support `mean ± 4·sigma_upper`
    /// sampled at 201 points.
    pub fn centroid(&self) -> TypeReducedInterval {
        let half = CENTROID_SUPPORT_SIGMAS * self.sigma_upper;
        set_centroid_interval(
            self,
            (self.mean - half, self.mean + half),
            CENTROID_RESOLUTION,
        )
        .expect("default support is non-degenerate and contains the mean")
    }
}

/// Centroid of an interval type-2 set: the range of centroids of all embedded
/// type-1 sets on a uniform grid over `support`, computed with Karnik-Mendel.
pub fn set_centroid_interval(
    set: &IT2GaussianSet,
    support: (f64, f64),
    resolution: usize,
) -> Result<TypeReducedInterval> {
    let (lo, hi) = support;
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "centroid resolution must be at least 2, got {resolution}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "degenerate centroid support [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (resolution - 1) as f64;
    let points: Vec<f64> = (0..resolution).map(|k| lo + step * k as f64).collect();
    let grades: Vec<FiringInterval> = points
        .iter()
        .map(|&y| {
            let g = set.grade(y);
            FiringInterval {
                lower: g.lower,
                upper: g.upper,
            }
        })
        .collect();
    km_reduce(&grades, &points)
}
