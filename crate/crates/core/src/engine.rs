//! Mamdani inference: singleton fuzzification, product t-norm firing,
//! Karnik-Mendel center-of-sets type reduction, defuzzification and
//! thresholding into a class label.

use crate::data::POSITIVE;
use crate::error::{Error, Result};
use crate::rules::{Defuzzifier, OutputMode, RuleBase, RuleKind};
use crate::sets::gaussian;

/// Firing strength of an interval type-2 rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiringInterval {
    pub lower: f64,
    pub upper: f64,
}

impl FiringInterval {
    pub fn point(v: f64) -> Self {
        FiringInterval { lower: v, upper: v }
    }
}

/// Output of center-of-sets type reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeReducedInterval {
    pub y_l: f64,
    pub y_r: f64,
    /// `(y_l + y_r) / 2`.
    pub crisp: f64,
    /// Number of centroids (in ascending order) weighted by their upper
    /// firing when computing `y_l`.
    pub switch_left: usize,
    /// Number of centroids (in ascending order) weighted by their lower
    /// firing when computing `y_r`.
    pub switch_right: usize,
}

impl TypeReducedInterval {
    pub fn point(v: f64) -> Self {
        TypeReducedInterval {
            y_l: v,
            y_r: v,
            crisp: v,
            switch_left: 0,
            switch_right: 0,
        }
    }

    pub fn width(&self) -> f64 {
        self.y_r - self.y_l
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub crisp: f64,
    pub label: u8,
    pub threshold: f64,
    pub interval: TypeReducedInterval,
    /// Set when no rule fired and the fallback label was used.
    pub flagged: bool,
}

/// Product of antecedent grades per rule.
pub fn fire_t1(rb: &RuleBase, x: &[f64]) -> Result<Vec<f64>> {
    rb.expect_kind(RuleKind::Type1)?;
    rb.check_input(x)?;
    Ok(rb
        .rules()
        .iter()
        .map(|r| {
            r.antecedents
                .iter()
                .zip(x)
                .map(|(s, &xf)| gaussian(xf, s.mean(), s.sigma_upper()))
                .product()
        })
        .collect())
}

/// Products of lower and of upper antecedent grades per rule.
pub fn fire_it2(rb: &RuleBase, x: &[f64]) -> Result<Vec<FiringInterval>> {
    rb.expect_kind(RuleKind::IntervalType2)?;
    rb.check_input(x)?;
    Ok(rb
        .rules()
        .iter()
        .map(|r| {
            let (mut lower, mut upper) = (1.0, 1.0);
            for (s, &xf) in r.antecedents.iter().zip(x) {
                let g = s.grade(xf);
                lower *= g.lower;
                upper *= g.upper;
            }
            FiringInterval { lower, upper }
        })
        .collect())
}

/// Firing intervals divided by the largest upper firing, computed in the log
/// domain so that long antecedent products cannot underflow to zero. Every
/// center-of-sets output is invariant to this common scale.
pub(crate) fn scaled_firings(rb: &RuleBase, x: &[f64]) -> Vec<FiringInterval> {
    let logs: Vec<(f64, f64)> = rb
        .rules()
        .iter()
        .map(|r| {
            let (mut lo, mut up) = (0.0, 0.0);
            for (s, &xf) in r.antecedents.iter().zip(x) {
                let d = xf - s.mean();
                lo -= 0.5 * (d / s.sigma_lower()).powi(2);
                up -= 0.5 * (d / s.sigma_upper()).powi(2);
            }
            (lo, up)
        })
        .collect();
    let top = logs.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    logs.into_iter()
        .map(|(lo, up)| FiringInterval {
            lower: (lo - top).exp(),
            upper: (up - top).exp(),
        })
        .collect()
}

/// Indices that sort `values` ascending; ties keep input order.
pub(crate) fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

fn weighted_average(ys: &[f64], ws: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for (y, w) in ys.iter().zip(ws) {
        num += w * y;
        den += w;
    }
    (num / den, den)
}

/// Center-of-sets type reduction by the Karnik-Mendel iteration.
///
/// `y_l` minimizes and `y_r` maximizes `Σ f·c / Σ f` over every choice of
/// `f` inside the firing intervals.
pub fn km_reduce(firings: &[FiringInterval], centroids: &[f64]) -> Result<TypeReducedInterval> {
    km_reduce_sorted(firings, centroids).map(|(tr, _)| tr)
}

/// [`km_reduce`] plus the ascending permutation of the centroids that the
/// switch points refer to.
pub(crate) fn km_reduce_sorted(
    firings: &[FiringInterval],
    centroids: &[f64],
) -> Result<(TypeReducedInterval, Vec<usize>)> {
    if firings.len() != centroids.len() {
        return Err(Error::DimensionMismatch {
            expected: centroids.len(),
            got: firings.len(),
        });
    }
    if firings.is_empty() {
        return Err(Error::InvalidParameter("type reduction needs at least one rule".into()));
    }
    for f in firings {
        if !(f.lower >= 0.0 && f.lower <= f.upper && f.upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "invalid firing interval [{}, {}]",
                f.lower, f.upper
            )));
        }
    }
    if centroids.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite);
    }
    if firings.iter().all(|f| f.upper == 0.0) {
        return Err(Error::NoCoverage);
    }

    let order = ascending_order(centroids);
    let ys: Vec<f64> = order.iter().map(|&i| centroids[i]).collect();
    let lower: Vec<f64> = order.iter().map(|&i| firings[i].lower).collect();
    let upper: Vec<f64> = order.iter().map(|&i| firings[i].upper).collect();
    let d = ys.len();

    let (start, _) = weighted_average(&ys, lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)));

    // Left end: upper weights below the switch point, lower weights above.
    // Rounding can leave y a hair below the only centroid carrying weight,
    // so the switch point moves past zero-weight mixes, which leave the
    // average unchanged.
    let left_mix = |k: usize| weighted_average(&ys, (0..d).map(|i| if i < k { upper[i] } else { lower[i] }));
    let right_mix = |k: usize| weighted_average(&ys, (0..d).map(|i| if i < k { lower[i] } else { upper[i] }));
    let mut y = start;
    let mut left = usize::MAX;
    for _ in 0..=d + 1 {
        let mut k = ys.partition_point(|&c| c <= y);
        while k < d && left_mix(k).1 == 0.0 {
            k += 1;
        }
        y = left_mix(k).0;
        if k == left {
            break;
        }
        left = k;
    }
    let y_l = y;

    // Right end: lower weights below the switch point, upper weights above.
    let mut y = start;
    let mut right = usize::MAX;
    for _ in 0..=d + 1 {
        let mut k = ys.partition_point(|&c| c < y);
        while k > 0 && right_mix(k).1 == 0.0 {
            k -= 1;
        }
        y = right_mix(k).0;
        if k == right {
            break;
        }
        right = k;
    }
    let y_r = y.max(y_l);

    Ok((
        TypeReducedInterval {
            y_l,
            y_r,
            crisp: 0.5 * (y_l + y_r),
            switch_left: left,
            switch_right: right,
        },
        order,
    ))
}

/// Firing-weighted average of centroids.
pub fn center_of_sets(weights: &[f64], centroids: &[f64]) -> Result<f64> {
    let den: f64 = weights.iter().sum();
    if !(den > 0.0) {
        return Err(Error::NoCoverage);
    }
    Ok(weights.iter().zip(centroids).map(|(w, c)| w * c).sum::<f64>() / den)
}

/// Crisp value of a sampled output membership curve.
pub fn defuzzify_t1(ys: &[f64], mu: &[f64], method: Defuzzifier) -> Result<f64> {
    if ys.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: ys.len(),
            got: mu.len(),
        });
    }
    if ys.len() < 2 {
        return Err(Error::InvalidParameter("a membership curve needs at least 2 samples".into()));
    }
    if mu.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::InvalidParameter("membership grades must be finite and non-negative".into()));
    }
    if mu.iter().all(|&m| m == 0.0) {
        return Err(Error::NoCoverage);
    }
    match method {
        Defuzzifier::Centroid => Ok(weighted_average(ys, mu.iter().copied()).0),
        Defuzzifier::Yager(w) => Ok(weighted_average(ys, mu.iter().map(|m| m.powf(w))).0),
        Defuzzifier::Bisector => Ok(bisector(ys, mu)),
    }
}

/// Point splitting the area under the piecewise-linear curve in half.
fn bisector(ys: &[f64], mu: &[f64]) -> f64 {
    let areas: Vec<f64> = ys
        .windows(2)
        .zip(mu.windows(2))
        .map(|(y, m)| 0.5 * (y[1] - y[0]) * (m[0] + m[1]))
        .collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        // all mass sits on isolated samples; fall back to the discrete median
        let half = mu.iter().sum::<f64>() / 2.0;
        let mut acc = 0.0;
        for (y, m) in ys.iter().zip(mu) {
            acc += m;
            if acc >= half {
                return *y;
            }
        }
        return ys[ys.len() - 1];
    }
    let mut need = total / 2.0;
    for (k, a) in areas.iter().enumerate() {
        if need <= *a && *a > 0.0 {
            let h = ys[k + 1] - ys[k];
            let (m0, m1) = (mu[k], mu[k + 1]);
            let slope = m1 - m0;
            // area over [0, t·h] is h·(m0·t + slope·t²/2)
            let t = if slope.abs() < 1e-12 * m0.abs().max(m1.abs()) {
                need / (h * m0)
            } else {
                let (qa, qb, qc) = (slope / 2.0, m0, -need / h);
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
                // numerically stable root of qa·t² + qb·t + qc = 0 in [0, 1]
                (2.0 * -qc) / (qb + disc.sqrt())
            };
            return ys[k] + t.clamp(0.0, 1.0) * h;
        }
        need -= a;
    }
    ys[ys.len() - 1]
}

/// Type-reduced output for one input, or `NoCoverage`.
pub fn infer(rb: &RuleBase, x: &[f64]) -> Result<TypeReducedInterval> {
    rb.check_input(x)?;
    let firings = scaled_firings(rb, x);
    let centroids: Vec<f64> = rb.rules().iter().map(|r| r.consequent_centroid()).collect();
    match rb.kind() {
        RuleKind::IntervalType2 => km_reduce(&firings, &centroids),
        RuleKind::Type1 => {
            let weights: Vec<f64> = firings.iter().map(|f| f.upper).collect();
            let crisp = match rb.config.output_mode {
                OutputMode::CenterOfSets => center_of_sets(&weights, &centroids)?,
                OutputMode::Aggregate(method) => {
                    let (ys, mu) = aggregate_curve(rb, &weights);
                    defuzzify_t1(&ys, &mu, method)?
                }
            };
            Ok(TypeReducedInterval::point(crisp))
        }
    }
}

/// Max of firing-scaled consequent Gaussians sampled over the union of the
/// consequents' ±4σ supports.
fn aggregate_curve(rb: &RuleBase, weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = rb.rules().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        let s = &r.consequent;
        (
            lo.min(s.mean() - 4.0 * s.sigma_upper()),
            hi.max(s.mean() + 4.0 * s.sigma_upper()),
        )
    });
    let n = rb.config.aggregate_resolution.max(2);
    let ys: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let mu = ys
        .iter()
        .map(|&y| {
            rb.rules()
                .iter()
                .zip(weights)
                .map(|(r, w)| w * gaussian(y, r.consequent.mean(), r.consequent.sigma_upper()))
                .fold(0.0, f64::max)
        })
        .collect();
    (ys, mu)
}

/// Runs inference and thresholds the crisp score.
pub fn predict(rb: &RuleBase, x: &[f64], threshold: f64) -> Result<Prediction> {
    let interval = infer(rb, x)?;
    Ok(Prediction {
        crisp: interval.crisp,
        label: label_for(interval.crisp, threshold),
        threshold,
        interval,
        flagged: false,
    })
}

#[inline]
pub fn label_for(crisp: f64, threshold: f64) -> u8 {
    if crisp >= threshold {
        POSITIVE
    } else {
        crate::data::NEGATIVE
    }
}

/// Predicts with the rule base's own threshold; inputs no rule covers get the
/// configured fallback label and are flagged. Other errors propagate.
pub fn predict_or_fallback(rb: &RuleBase, x: &[f64]) -> Result<Prediction> {
    match predict(rb, x, rb.config.threshold) {
        Err(Error::NoCoverage) => Ok(Prediction {
            crisp: f64::NAN,
            label: rb.config.fallback_label,
            threshold: rb.config.threshold,
            interval: TypeReducedInterval::point(f64::NAN),
            flagged: true,
        }),
        other => other,
    }
}
