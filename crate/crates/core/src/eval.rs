//! Train/test splitting, classification metrics and the comparison
//! baselines.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, NEGATIVE, POSITIVE};
use crate::engine::{infer, label_for};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rules::RuleBase;

pub const TRAIN_RATIO: f64 = 0.7;
pub const KNN_K: usize = 5;
pub const NB_ALPHA: f64 = 1.0;
/// Points in the threshold sweep.
pub const THRESHOLD_STEPS: usize = 101;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub ratio_permille: u32,
    pub seed: u64,
    pub stratified: bool,
}

impl Split {
    pub fn apply(&self, data: &Dataset) -> (Dataset, Dataset) {
        (data.subset(&self.train), data.subset(&self.test))
    }
}

/// Seeded shuffle-and-cut. `|train| = round(ratio · N)` in both modes; the
/// stratified mode hands out per-class quotas by largest remainder.
pub fn split(data: &Dataset, ratio: f64, seed: u64, stratified: bool) -> Result<Split> {
    let n = data.n_samples();
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParameter(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("cannot split {n} rows")));
    }
    let n_train = (ratio * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    if stratified {
        let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, &l) in data.labels().iter().enumerate() {
            by_class[l as usize].push(i);
        }
        let exact: Vec<f64> = by_class.iter().map(|c| ratio * c.len() as f64).collect();
        let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        let mut left = n_train - quota.iter().sum::<usize>();
        for &c in order.iter().cycle().take(4) {
            if left == 0 {
                break;
            }
            if quota[c] < by_class[c].len() {
                quota[c] += 1;
                left -= 1;
            }
        }
        for (c, idx) in by_class.iter_mut().enumerate() {
            if idx.is_empty() {
                continue;
            }
            if quota[c] == 0 || quota[c] == idx.len() {
                return Err(Error::InvalidParameter(format!(
                    "class {c} has {} rows and cannot appear on both sides of the split",
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            train.extend_from_slice(&idx[..quota[c]]);
            test.extend_from_slice(&idx[quota[c]..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        test,
        ratio_permille: (ratio * 1000.0).round() as u32,
        seed,
        stratified,
    })
}

/// Precision, recall and F-measure with one class designated positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `confusion[truth][prediction]`.
    pub confusion: [[usize; 2]; 2],
    pub positive_class: u8,
    /// More frequent class in the truth labels (ties go to negative).
    pub majority_class: u8,
    pub accuracy: f64,
    /// Indexed by class code.
    pub per_class: [ClassScores; 2],
    pub macro_f: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(predictions: &[u8], truth: &[u8], positive_class: u8) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidParameter("no predictions to score".into()));
    }
    if positive_class > POSITIVE {
        return Err(Error::InvalidLabel(positive_class));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&p, &t) in predictions.iter().zip(truth) {
        if p > POSITIVE {
            return Err(Error::InvalidLabel(p));
        }
        if t > POSITIVE {
            return Err(Error::InvalidLabel(t));
        }
        confusion[t as usize][p as usize] += 1;
    }
    let total = truth.len();
    let scores = |c: usize| {
        let tp = confusion[c][c];
        let predicted = confusion[0][c] + confusion[1][c];
        let actual = confusion[c][0] + confusion[c][1];
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            precision,
            recall,
            f_measure,
        }
    };
    let per_class = [scores(0), scores(1)];
    let actual = |c: usize| confusion[c][0] + confusion[c][1];
    Ok(MetricsReport {
        confusion,
        positive_class,
        majority_class: if actual(1) > actual(0) { POSITIVE } else { NEGATIVE },
        accuracy: ratio(confusion[0][0] + confusion[1][1], total),
        per_class,
        macro_f: 0.5 * (per_class[0].f_measure + per_class[1].f_measure),
    })
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn positive(&self) -> ClassScores {
        self.per_class[self.positive_class as usize]
    }

    /// F-measure with the majority class as positive, which is the figure
    /// comparable to published results on imbalanced data.
    pub fn majority_f(&self) -> f64 {
        self.per_class[self.majority_class as usize].f_measure
    }

    /// `key=value` lines, each key prefixed with `prefix.` when non-empty.
    pub fn key_values(&self, prefix: &str) -> String {
        let p = if prefix.is_empty() {
            String::new()
        } else {
            format!("{prefix}.")
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{p}{k}={v}\n"));
        kv("total", self.total().to_string());
        kv("accuracy", self.accuracy.to_string());
        kv("positive_class", self.positive_class.to_string());
        kv("majority_class", self.majority_class.to_string());
        for t in 0..2 {
            for q in 0..2 {
                kv(&format!("confusion.truth{t}.pred{q}"), self.confusion[t][q].to_string());
            }
        }
        for (c, s) in self.per_class.iter().enumerate() {
            kv(&format!("class{c}.precision"), s.precision.to_string());
            kv(&format!("class{c}.recall"), s.recall.to_string());
            kv(&format!("class{c}.f_measure"), s.f_measure.to_string());
        }
        kv("f_positive", self.positive().f_measure.to_string());
        kv("f_majority", self.majority_f().to_string());
        kv("macro_f", self.macro_f.to_string());
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        writeln!(f, "samples      {}", self.total())?;
        writeln!(f, "accuracy     {:.4}", self.accuracy)?;
        writeln!(f, "confusion    truth\\pred      0      1")?;
        writeln!(f, "                     0 {:>6} {:>6}", c[0][0], c[0][1])?;
        writeln!(f, "                     1 {:>6} {:>6}", c[1][0], c[1][1])?;
        for (k, s) in self.per_class.iter().enumerate() {
            let mut tags = Vec::new();
            if k as u8 == self.positive_class {
                tags.push("positive");
            }
            if k as u8 == self.majority_class {
                tags.push("majority");
            }
            let tag = if tags.is_empty() {
                String::new()
            } else {
                format!("  ({})", tags.join(", "))
            };
            writeln!(
                f,
                "class {k}      P {:.4}  R {:.4}  F {:.4}{tag}",
                s.precision, s.recall, s.f_measure
            )?;
        }
        write!(f, "macro F      {:.4}", self.macro_f)
    }
}

/// Crisp score per row; `None` where no rule fired.
pub fn crisp_scores(rb: &RuleBase, x: &Matrix) -> Result<Vec<Option<f64>>> {
    let rows: Vec<&[f64]> = x.iter_rows().collect();
    rows.par_iter()
        .map(|row| match infer(rb, row) {
            Ok(t) => Ok(Some(t.crisp)),
            Err(Error::NoCoverage) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

fn labels_at(scores: &[Option<f64>], threshold: f64, fallback: u8) -> Vec<u8> {
    scores
        .iter()
        .map(|s| s.map_or(fallback, |v| label_for(v, threshold)))
        .collect()
}

/// Threshold in `[min, max]` consequent centroid maximizing macro F-measure
/// on `data`; the lowest such threshold wins ties.
pub fn calibrate_threshold(rb: &RuleBase, data: &Dataset) -> Result<f64> {
    let scores = crisp_scores(rb, data.features())?;
    let (lo, hi) = rb.consequent_range();
    let mut best = (f64::NEG_INFINITY, lo);
    for k in 0..THRESHOLD_STEPS {
        let t = lo + (hi - lo) * k as f64 / (THRESHOLD_STEPS - 1) as f64;
        let pred = labels_at(&scores, t, rb.config.fallback_label);
        let f = compute_metrics(&pred, data.labels(), POSITIVE)?.macro_f;
        if f > best.0 {
            best = (f, t);
        }
    }
    Ok(best.1)
}

/// Labels from a rule base using its configured threshold and fallback.
pub fn predict_labels(rb: &RuleBase, x: &Matrix) -> Result<Vec<u8>> {
    let scores = crisp_scores(rb, x)?;
    Ok(labels_at(&scores, rb.config.threshold, rb.config.fallback_label))
}

/// More frequent training class; ties go to negative.
pub fn majority_class(labels: &[u8]) -> u8 {
    let pos = labels.iter().filter(|&&l| l == POSITIVE).count();
    if 2 * pos > labels.len() {
        POSITIVE
    } else {
        NEGATIVE
    }
}

pub fn baseline_majority(train: &Dataset, test: &Dataset) -> Vec<u8> {
    vec![majority_class(train.labels()); test.n_samples()]
}

/// Columns whose training values are all 0 or 1.
fn binary_columns(x: &Matrix) -> Vec<bool> {
    (0..x.cols())
        .map(|k| x.iter_rows().all(|r| r[k] == 0.0 || r[k] == 1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Likelihood {
    /// Smoothed `P(x = 1 | class)` per class.
    Bernoulli([f64; 2]),
    /// Mean and variance per class.
    Gaussian([(f64, f64); 2]),
}

/// Naive Bayes with Bernoulli likelihoods on 0/1 columns and Gaussian ones
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    log_prior: [f64; 2],
    columns: Vec<Likelihood>,
}

impl NaiveBayes {
    pub fn fit(train: &Dataset, alpha: f64) -> Result<NaiveBayes> {
        let counts = train.class_counts();
        for (c, &n) in counts.iter().enumerate() {
            if n == 0 {
                return Err(Error::EmptyClass(c as u8));
            }
        }
        let x = train.features();
        let labels = train.labels();
        let n = train.n_samples() as f64;
        let binary = binary_columns(x);
        let mut columns = Vec::with_capacity(x.cols());
        let mut max_var: f64 = 0.0;
        for (k, &is_binary) in binary.iter().enumerate() {
            let mut sum = [0.0; 2];
            for (r, &l) in x.iter_rows().zip(labels) {
                sum[l as usize] += r[k];
            }
            if is_binary {
                columns.push(Likelihood::Bernoulli([0, 1].map(|c| {
                    (sum[c] + alpha) / (counts[c] as f64 + 2.0 * alpha)
                })));
            } else {
                let mean = [0, 1].map(|c| sum[c] / counts[c] as f64);
                let mut ss = [0.0; 2];
                for (r, &l) in x.iter_rows().zip(labels) {
                    let d = r[k] - mean[l as usize];
                    ss[l as usize] += d * d;
                }
                let var = [0, 1].map(|c| ss[c] / counts[c] as f64);
                let col = x.column(k);
                let mu = col.iter().sum::<f64>() / n;
                max_var = max_var.max(col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n);
                columns.push(Likelihood::Gaussian([(mean[0], var[0]), (mean[1], var[1])]));
            }
        }
        // variance smoothing keeps constant-within-class columns usable
        let eps = 1e-9 * max_var.max(1.0);
        for col in &mut columns {
            if let Likelihood::Gaussian(g) = col {
                for (_, v) in g.iter_mut() {
                    *v += eps;
                }
            }
        }
        Ok(NaiveBayes {
            log_prior: [0, 1].map(|c| (counts[c] as f64 / n).ln()),
            columns,
        })
    }

    /// Unnormalized log posterior per class.
    pub fn log_joint(&self, x: &[f64]) -> [f64; 2] {
        let mut out = self.log_prior;
        for (col, &v) in self.columns.iter().zip(x) {
            for (c, o) in out.iter_mut().enumerate() {
                *o += match col {
                    Likelihood::Bernoulli(p) => v * p[c].ln() + (1.0 - v) * (1.0 - p[c]).ln(),
                    Likelihood::Gaussian(g) => {
                        let (m, var) = g[c];
                        -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - m) * (v - m) / var)
                    }
                };
            }
        }
        out
    }

    /// Normalized posterior `P(class | x)`.
    pub fn posterior(&self, x: &[f64]) -> [f64; 2] {
        let lj = self.log_joint(x);
        let m = lj[0].max(lj[1]);
        let e = lj.map(|v| (v - m).exp());
        let z = e[0] + e[1];
        e.map(|v| v / z)
    }

    /// Argmax posterior; exact ties go to the larger prior.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let lj = self.log_joint(x);
        if lj[1] > lj[0] || (lj[1] == lj[0] && self.log_prior[1] > self.log_prior[0]) {
            POSITIVE
        } else {
            NEGATIVE
        }
    }
}

pub fn baseline_nb(train: &Dataset, test: &Dataset) -> Result<Vec<u8>> {
    check_columns(train, test)?;
    let nb = NaiveBayes::fit(train, NB_ALPHA)?;
    Ok(test.features().iter_rows().map(|r| nb.predict(r)).collect())
}

fn check_columns(train: &Dataset, test: &Dataset) -> Result<()> {
    if train.n_features() == test.n_features() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: train.n_features(),
            got: test.n_features(),
        })
    }
}

/// k-nearest-neighbour vote under Euclidean distance. Non-binary columns are
/// min-max scaled with training ranges. Equal distances prefer the lower
/// training row; a tied vote goes to the nearest neighbour's label.
pub fn baseline_knn(train: &Dataset, test: &Dataset, k: usize) -> Result<Vec<u8>> {
    check_columns(train, test)?;
    if k == 0 || k > train.n_samples() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} needs 1 <= k <= {} training rows",
            train.n_samples()
        )));
    }
    let binary = binary_columns(train.features());
    let ranges: Vec<Option<(f64, f64)>> = (0..train.n_features())
        .map(|c| {
            (!binary[c]).then(|| {
                let col = train.features().column(c);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, if hi > lo { hi - lo } else { 1.0 })
            })
        })
        .collect();
    let scale = |m: &Matrix| {
        let mut out = m.clone();
        for i in 0..m.rows() {
            for (v, r) in out.row_mut(i).iter_mut().zip(&ranges) {
                if let Some((lo, width)) = r {
                    *v = (*v - lo) / width;
                }
            }
        }
        out
    };
    let xtr = scale(train.features());
    let xte = scale(test.features());
    let labels = train.labels();
    let rows: Vec<&[f64]> = xte.iter_rows().collect();
    Ok(rows
        .par_iter()
        .map(|q| {
            // sorted ascending by (distance, index)
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for (i, r) in xtr.iter_rows().enumerate() {
                let d: f64 = q.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.len() == k && d >= best[k - 1].0 {
                    continue;
                }
                let at = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(at, (d, i));
                best.truncate(k);
            }
            let pos = best.iter().filter(|&&(_, i)| labels[i] == POSITIVE).count();
            match (2 * pos).cmp(&k) {
                std::cmp::Ordering::Greater => POSITIVE,
                std::cmp::Ordering::Less => NEGATIVE,
                std::cmp::Ordering::Equal => labels[best[0].1],
            }
        })
        .collect())
}
