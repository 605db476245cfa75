//! Rule-base representation shared by learning, inference and the model file.

use std::fmt;

use crate::data::NEGATIVE;
use crate::error::{Error, Result};
use crate::sets::{GaussianT1Set, IT2GaussianSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Type1,
    IntervalType2,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Type1 => "type-1",
            RuleKind::IntervalType2 => "interval-type-2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "type-1" => Some(RuleKind::Type1),
            "interval-type-2" => Some(RuleKind::IntervalType2),
            _ => None,
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Defuzzifier {
    Centroid,
    Bisector,
    /// Power-weighted centroid `Σ y·μ(y)^w / Σ μ(y)^w`.
    Yager(f64),
}

impl Defuzzifier {
    pub fn parse(s: &str) -> Option<Self> {
        let mut parts = s.split_whitespace();
        let d = match parts.next()? {
            "centroid" => Defuzzifier::Centroid,
            "bisector" => Defuzzifier::Bisector,
            "yager" => Defuzzifier::Yager(parts.next()?.parse().ok()?),
            _ => return None,
        };
        parts.next().is_none().then_some(d)
    }
}

impl fmt::Display for Defuzzifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defuzzifier::Centroid => f.write_str("centroid"),
            Defuzzifier::Bisector => f.write_str("bisector"),
            Defuzzifier::Yager(w) => write!(f, "yager {w}"),
        }
    }
}

/// How a type-1 rule base turns firing strengths into a crisp output.
/// Interval type-2 bases always use center-of-sets type reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputMode {
    /// Firing-weighted average of consequent means.
    CenterOfSets,
    /// Max-aggregate of the firing-scaled consequents, then defuzzify.
    Aggregate(Defuzzifier),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub output_mode: OutputMode,
    /// Grid size for the aggregate output curve.
    pub aggregate_resolution: usize,
    /// Crisp scores at or above this are labelled positive.
    pub threshold: f64,
    /// Label assigned when no rule fires.
    pub fallback_label: u8,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            output_mode: OutputMode::CenterOfSets,
            aggregate_resolution: 201,
            threshold: 1.5,
            fallback_label: NEGATIVE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub antecedents: Vec<IT2GaussianSet>,
    pub consequent: IT2GaussianSet,
}

impl Rule {
    pub fn type1(antecedents: &[GaussianT1Set], consequent: GaussianT1Set) -> Self {
        Rule {
            antecedents: antecedents.iter().copied().map(IT2GaussianSet::from_t1).collect(),
            consequent: IT2GaussianSet::from_t1(consequent),
        }
    }

    /// Centroid used by center-of-sets reduction: the midpoint of the
    /// consequent's centroid interval, which for a Gaussian with a fixed mean
    /// is the mean itself.
    #[inline]
    pub fn consequent_centroid(&self) -> f64 {
        self.consequent.mean()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleBase {
    kind: RuleKind,
    variables: Vec<String>,
    output: String,
    rules: Vec<Rule>,
    pub config: InferenceConfig,
}

impl RuleBase {
    pub fn new(
        kind: RuleKind,
        variables: Vec<String>,
        output: impl Into<String>,
        rules: Vec<Rule>,
        config: InferenceConfig,
    ) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::InvalidParameter("a rule base needs at least one rule".into()));
        }
        for (s, rule) in rules.iter().enumerate() {
            if rule.antecedents.len() != variables.len() {
                return Err(Error::InvalidParameter(format!(
                    "rule {} has {} antecedents for {} variables",
                    s + 1,
                    rule.antecedents.len(),
                    variables.len()
                )));
            }
            if kind == RuleKind::Type1
                && !(rule.consequent.is_degenerate()
                    && rule.antecedents.iter().all(IT2GaussianSet::is_degenerate))
            {
                return Err(Error::InvalidParameter(format!(
                    "rule {} of a type-1 base has an interval sigma",
                    s + 1
                )));
            }
        }
        Ok(RuleBase {
            kind,
            variables,
            output: output.into(),
            rules,
            config,
        })
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.variables.len()
    }

    pub(crate) fn expect_kind(&self, kind: RuleKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind.as_str(),
                got: self.kind.as_str(),
            })
        }
    }

    pub(crate) fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// `[min, max]` of the consequent centroids.
    pub fn consequent_range(&self) -> (f64, f64) {
        self.rules
            .iter()
            .map(Rule::consequent_centroid)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)))
    }

    /// Flat parameter vector. Per rule, per antecedent then consequent:
    /// `(mean, sigma)` for type-1 and `(mean, sigma_lower, sigma_upper)` for
    /// interval type-2.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for rule in &self.rules {
            for set in rule.antecedents.iter().chain(std::iter::once(&rule.consequent)) {
                out.push(set.mean());
                match self.kind {
                    RuleKind::Type1 => out.push(set.sigma_upper()),
                    RuleKind::IntervalType2 => {
                        out.push(set.sigma_lower());
                        out.push(set.sigma_upper());
                    }
                }
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.n_rules() * (self.n_inputs() + 1) * self.params_per_set()
    }

    pub(crate) fn params_per_set(&self) -> usize {
        match self.kind {
            RuleKind::Type1 => 2,
            RuleKind::IntervalType2 => 3,
        }
    }

    /// Same structure with parameters taken from a flat vector laid out as
    /// in [`RuleBase::parameters`].
    pub fn with_parameters(&self, params: &[f64]) -> Result<RuleBase> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        let per = self.params_per_set();
        let mut chunks = params.chunks_exact(per);
        let mut next = || -> Result<IT2GaussianSet> {
            let p = chunks.next().expect("length checked above");
            match per {
                2 => IT2GaussianSet::new(p[0], p[1], p[1]),
                _ => IT2GaussianSet::new(p[0], p[1], p[2]),
            }
        };
        let mut rules = Vec::with_capacity(self.n_rules());
        for _ in 0..self.n_rules() {
            let antecedents = (0..self.n_inputs()).map(|_| next()).collect::<Result<Vec<_>>>()?;
            let consequent = next()?;
            rules.push(Rule {
                antecedents,
                consequent,
            });
        }
        RuleBase::new(
            self.kind,
            self.variables.clone(),
            self.output.clone(),
            rules,
            self.config,
        )
    }
}
