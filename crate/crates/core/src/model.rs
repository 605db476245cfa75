//! Versioned, line-oriented text format for rule bases.
//!
//! ```text
//! it2fuzzy-model
//! version = 1
//! kind = interval-type-2
//! output = icu
//! tnorm = product
//! output_mode = center-of-sets
//! aggregate_resolution = 201
//! threshold = 1.5
//! fallback_label = 0
//! variable = age
//! provenance.seed = 7
//!
//! [rule 1]
//! age = 32.562 9.501 5.7
//! consequent = 1.066 0.095 0.057
//! ```
//!
//! Every set is written as `mean sigma_upper sigma_lower`. Numbers use the
//! shortest decimal that parses back to the same `f64`, so a save/load round
//! trip is bit-exact. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rules::{Defuzzifier, InferenceConfig, OutputMode, Rule, RuleBase, RuleKind};
use crate::sets::IT2GaussianSet;

pub const MAGIC: &str = "it2fuzzy-model";
pub const VERSION: u32 = 1;
const CONSEQUENT: &str = "consequent";

/// Text of the bundled five-rule, 27-input model.
pub const TABLE2_TEXT: &str = include_str!("../models/table2.model");

/// A rule base plus free-form provenance (`provenance.<key> = <value>`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub rule_base: RuleBase,
    pub provenance: Vec<(String, String)>,
}

impl ModelFile {
    pub fn new(rule_base: RuleBase) -> Self {
        ModelFile {
            rule_base,
            provenance: Vec::new(),
        }
    }

    pub fn with_provenance(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.provenance.push((key.into(), value.to_string()));
        self
    }

    pub fn provenance(&self, key: &str) -> Option<&str> {
        self.provenance
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> Result<String> {
        let rb = &self.rule_base;
        for name in rb.variables().iter().map(String::as_str).chain([rb.output()]) {
            check_name(name)?;
        }
        for (k, v) in &self.provenance {
            if k.contains(char::is_whitespace) || k.contains('=') || v.contains('\n') {
                return Err(Error::InvalidParameter(format!("provenance entry {k:?} cannot be written")));
            }
        }
        let cfg = &rb.config;
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "version = {VERSION}");
        let _ = writeln!(s, "kind = {}", rb.kind());
        let _ = writeln!(s, "output = {}", rb.output());
        let _ = writeln!(s, "tnorm = product");
        let _ = writeln!(s, "output_mode = {}", render_mode(cfg.output_mode));
        let _ = writeln!(s, "aggregate_resolution = {}", cfg.aggregate_resolution);
        let _ = writeln!(s, "threshold = {}", cfg.threshold);
        let _ = writeln!(s, "fallback_label = {}", cfg.fallback_label);
        for v in rb.variables() {
            let _ = writeln!(s, "variable = {v}");
        }
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "provenance.{k} = {v}");
        }
        for (i, rule) in rb.rules().iter().enumerate() {
            let _ = writeln!(s, "\n[rule {}]", i + 1);
            for (name, set) in rb.variables().iter().zip(&rule.antecedents) {
                let _ = writeln!(s, "{name} = {}", render_set(set));
            }
            let _ = writeln!(s, "{CONSEQUENT} = {}", render_set(&rule.consequent));
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<ModelFile> {
        Parser::default().run(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelFile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()?).map_err(|e| Error::io(path, e))
    }
}

/// The bundled model: five interval type-2 rules over 27 inputs, stored
/// with the published three-decimal parameters.
pub fn table2() -> ModelFile {
    ModelFile::parse(TABLE2_TEXT).expect("bundled model parses")
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(" = ") || name.contains('\n') || name.starts_with('[') || name.starts_with('#') {
        Err(Error::InvalidParameter(format!("variable name {name:?} cannot be written")))
    } else {
        Ok(())
    }
}

fn render_set(s: &IT2GaussianSet) -> String {
    format!("{} {} {}", s.mean(), s.sigma_upper(), s.sigma_lower())
}

fn render_mode(m: OutputMode) -> String {
    match m {
        OutputMode::CenterOfSets => "center-of-sets".into(),
        OutputMode::Aggregate(d) => format!("aggregate {d}"),
    }
}

fn parse_mode(s: &str) -> Option<OutputMode> {
    if s == "center-of-sets" {
        return Some(OutputMode::CenterOfSets);
    }
    s.strip_prefix("aggregate ")
        .and_then(Defuzzifier::parse)
        .map(OutputMode::Aggregate)
}

#[derive(Default)]
struct Parser {
    version: Option<u32>,
    kind: Option<RuleKind>,
    output: Option<String>,
    config: InferenceConfig,
    variables: Vec<String>,
    provenance: Vec<(String, String)>,
    rules: Vec<Rule>,
    /// Sets read so far for the rule being parsed.
    pending: Option<(usize, Vec<IT2GaussianSet>)>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Model {
        line,
        message: message.into(),
    }
}

impl Parser {
    fn run(mut self, text: &str) -> Result<ModelFile> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(err(1, format!("expected `{MAGIC}` header"))),
        }
        let mut last = 1;
        for (n, line) in lines {
            last = n;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(inner) = line.strip_prefix('[') {
                self.start_rule(n, inner)?;
                continue;
            }
            let (key, value) = line
                .split_once(" = ")
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(n, "expected `key = value`"))?;
            if self.pending.is_some() {
                self.set_line(n, key, value)?;
            } else {
                self.header_line(n, key, value)?;
            }
        }
        self.finish_rule(last)?;
        let kind = self.kind.ok_or_else(|| err(last, "missing `kind`"))?;
        let output = self.output.ok_or_else(|| err(last, "missing `output`"))?;
        if self.version.is_none() {
            return Err(err(last, "missing `version`"));
        }
        let rule_base = RuleBase::new(kind, self.variables, output, self.rules, self.config)
            .map_err(|e| err(last, e.to_string()))?;
        Ok(ModelFile {
            rule_base,
            provenance: self.provenance,
        })
    }

    fn header_line(&mut self, n: usize, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| err(n, format!("invalid {what} `{value}`"));
        if self.version.is_none() && key != "version" {
            return Err(err(n, "`version` must precede other fields"));
        }
        match key {
            "version" => {
                let v: u32 = value.parse().map_err(|_| bad("version"))?;
                if v != VERSION {
                    return Err(err(n, format!("unsupported version {v}; this build reads version {VERSION}")));
                }
                self.version = Some(v);
            }
            "kind" => self.kind = Some(RuleKind::parse(value).ok_or_else(|| bad("kind"))?),
            "output" => self.output = Some(value.to_owned()),
            "tnorm" => {
                if value != "product" {
                    return Err(bad("t-norm"));
                }
            }
            "output_mode" => self.config.output_mode = parse_mode(value).ok_or_else(|| bad("output mode"))?,
            "aggregate_resolution" => {
                self.config.aggregate_resolution = value
                    .parse()
                    .ok()
                    .filter(|&r: &usize| r >= 2)
                    .ok_or_else(|| bad("resolution"))?
            }
            "threshold" => {
                self.config.threshold = value
                    .parse()
                    .ok()
                    .filter(|t: &f64| t.is_finite())
                    .ok_or_else(|| bad("threshold"))?
            }
            "fallback_label" => {
                self.config.fallback_label = value
                    .parse()
                    .ok()
                    .filter(|&l: &u8| l <= 1)
                    .ok_or_else(|| bad("label"))?
            }
            "variable" => {
                if self.variables.iter().any(|v| v == value) {
                    return Err(err(n, format!("duplicate variable `{value}`")));
                }
                self.variables.push(value.to_owned());
            }
            _ => match key.strip_prefix("provenance.") {
                Some(k) => self.provenance.push((k.to_owned(), value.to_owned())),
                None => return Err(err(n, format!("unknown field `{key}`"))),
            },
        }
        Ok(())
    }

    fn start_rule(&mut self, n: usize, inner: &str) -> Result<()> {
        self.finish_rule(n)?;
        let index: usize = inner
            .strip_suffix(']')
            .and_then(|s| s.strip_prefix("rule "))
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| err(n, "expected `[rule N]`"))?;
        if index != self.rules.len() + 1 {
            return Err(err(n, format!("expected rule {}, found rule {index}", self.rules.len() + 1)));
        }
        if self.variables.is_empty() {
            return Err(err(n, "no variables declared before the first rule"));
        }
        self.pending = Some((index, Vec::with_capacity(self.variables.len() + 1)));
        Ok(())
    }

    fn set_line(&mut self, n: usize, key: &str, value: &str) -> Result<()> {
        let (rule, sets) = self.pending.as_mut().expect("inside a rule block");
        let expected = self.variables.get(sets.len()).map_or(CONSEQUENT, String::as_str);
        if sets.len() > self.variables.len() {
            return Err(err(n, format!("rule {rule} has extra line `{key}`")));
        }
        if key != expected {
            return Err(err(n, format!("rule {rule}: expected `{expected}`, found `{key}`")));
        }
        let nums: Vec<f64> = value
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(n, format!("rule {rule}, {key}: malformed number")))?;
        let &[mean, upper, lower] = nums.as_slice() else {
            return Err(err(n, format!("rule {rule}, {key}: expected `mean sigma_upper sigma_lower`")));
        };
        if lower > upper {
            return Err(err(
                n,
                format!("rule {rule}, variable {key}: sigma_lower {lower} exceeds sigma_upper {upper}"),
            ));
        }
        let set = IT2GaussianSet::new(mean, lower, upper)
            .map_err(|e| err(n, format!("rule {rule}, variable {key}: {e}")))?;
        sets.push(set);
        Ok(())
    }

    fn finish_rule(&mut self, n: usize) -> Result<()> {
        if let Some((rule, mut sets)) = self.pending.take() {
            if sets.len() != self.variables.len() + 1 {
                return Err(err(
                    n,
                    format!("rule {rule} has {} of {} sets", sets.len(), self.variables.len() + 1),
                ));
            }
            let consequent = sets.pop().expect("length checked");
            self.rules.push(Rule {
                antecedents: sets,
                consequent,
            });
        }
        Ok(())
    }
}
