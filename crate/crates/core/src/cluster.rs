//! Fuzzy c-means, Gustafson-Kessel, and Fukuyama-Sugeno cluster-count
//! selection.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Default fuzziness degree.
pub const FUZZINESS: f64 = 2.0;
/// Default convergence tolerance on the largest membership change.
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITER: usize = 300;
/// Default covariance blending weight for Gustafson-Kessel.
pub const GK_REGULARIZATION: f64 = 1e-3;
/// Default upper bound on the cluster count scan.
pub const C_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FcmParams {
    pub clusters: usize,
    pub fuzziness: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl FcmParams {
    pub fn new(clusters: usize) -> Self {
        FcmParams {
            clusters,
            fuzziness: FUZZINESS,
            tol: TOLERANCE,
            max_iter: MAX_ITER,
            seed: 0,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn fuzziness(mut self, m: f64) -> Self {
        self.fuzziness = m;
        self
    }
}

/// Memberships (`c × N`, columns sum to one) and prototypes (`c × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyPartition {
    pub memberships: Matrix,
    pub prototypes: Matrix,
    pub fuzziness: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FuzzyPartition {
    pub fn clusters(&self) -> usize {
        self.memberships.rows()
    }

    /// Index of the largest membership for sample `j`.
    pub fn hard_label(&self, j: usize) -> usize {
        (0..self.clusters())
            .max_by(|&a, &b| {
                self.memberships
                    .get(a, j)
                    .total_cmp(&self.memberships.get(b, j))
            })
            .unwrap_or(0)
    }
}

/// Snapshot handed to iteration observers.
#[derive(Debug)]
pub struct IterationState<'a> {
    pub iteration: usize,
    pub memberships: &'a Matrix,
    pub prototypes: &'a Matrix,
    pub objective: f64,
    pub max_change: f64,
}

fn validate(x: &Matrix, p: &FcmParams) -> Result<()> {
    if p.clusters == 0 {
        return Err(Error::InvalidParameter("cluster count must be at least 1".into()));
    }
    if !(p.fuzziness > 1.0) || !p.fuzziness.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "fuzziness must exceed 1, got {}",
            p.fuzziness
        )));
    }
    if p.clusters > x.rows() {
        return Err(Error::InvalidParameter(format!(
            "{} clusters requested for {} samples",
            p.clusters,
            x.rows()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn random_memberships(c: usize, n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Matrix::zeros(c, n);
    for i in 0..c {
        for j in 0..n {
            u.set(i, j, rng.gen::<f64>() + f64::EPSILON);
        }
    }
    for j in 0..n {
        let s: f64 = (0..c).map(|i| u.get(i, j)).sum();
        for i in 0..c {
            u.set(i, j, u.get(i, j) / s);
        }
    }
    u
}

/// Membership-weighted means, weights `u^m`.
fn prototypes(x: &Matrix, u: &Matrix, m: f64) -> Matrix {
    let (c, d) = (u.rows(), x.cols());
    let mut v = Matrix::zeros(c, d);
    for i in 0..c {
        let mut mass = 0.0;
        let row = v.row_mut(i);
        for (j, xj) in x.iter_rows().enumerate() {
            let w = u.get(i, j).powf(m);
            mass += w;
            for (acc, &xv) in row.iter_mut().zip(xj) {
                *acc += w * xv;
            }
        }
        if mass > 0.0 {
            row.iter_mut().for_each(|a| *a /= mass);
        }
    }
    v
}

/// Column-wise membership update from squared distances (`c × N`).
fn update_memberships(d2: &Matrix, m: f64) -> Matrix {
    let (c, n) = (d2.rows(), d2.cols());
    let p = 1.0 / (m - 1.0);
    let mut u = Matrix::zeros(c, n);
    let mut ratio = vec![0.0; c];
    for j in 0..n {
        let dmin = (0..c).map(|i| d2.get(i, j)).fold(f64::INFINITY, f64::min);
        if dmin == 0.0 {
            let zeros = (0..c).filter(|&i| d2.get(i, j) == 0.0).count() as f64;
            for i in 0..c {
                u.set(i, j, if d2.get(i, j) == 0.0 { 1.0 / zeros } else { 0.0 });
            }
            continue;
        }
        let mut total = 0.0;
        for (i, r) in ratio.iter_mut().enumerate() {
            *r = (dmin / d2.get(i, j)).powf(p);
            total += *r;
        }
        for (i, r) in ratio.iter().enumerate() {
            u.set(i, j, r / total);
        }
    }
    u
}

fn objective(u: &Matrix, d2: &Matrix, m: f64) -> f64 {
    u.as_slice()
        .iter()
        .zip(d2.as_slice())
        .map(|(uij, d)| uij.powf(m) * d)
        .sum()
}

fn euclidean_d2(x: &Matrix, v: &Matrix) -> Matrix {
    let mut d2 = Matrix::zeros(v.rows(), x.rows());
    for i in 0..v.rows() {
        let vi = v.row(i);
        for (j, xj) in x.iter_rows().enumerate() {
            d2.set(i, j, squared_distance(xj, vi));
        }
    }
    d2
}

/// Alternating optimization shared by FCM and GK: prototypes from
/// memberships, then memberships from the (possibly adaptive) distances.
fn alternate<D, O>(
    x: &Matrix,
    params: &FcmParams,
    mut u: Matrix,
    mut distances: D,
    mut observer: O,
) -> Result<FuzzyPartition>
where
    D: FnMut(&Matrix, &Matrix) -> Result<Matrix>,
    O: FnMut(&IterationState),
{
    let m = params.fuzziness;
    let mut v = prototypes(x, &u, m);
    let mut obj = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=params.max_iter.max(1) {
        v = prototypes(x, &u, m);
        let d2 = distances(&u, &v)?;
        let next = update_memberships(&d2, m);
        obj = objective(&next, &d2, m);
        let change = next
            .as_slice()
            .iter()
            .zip(u.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        u = next;
        iterations = it;
        observer(&IterationState {
            iteration: it,
            memberships: &u,
            prototypes: &v,
            objective: obj,
            max_change: change,
        });
        if change < params.tol {
            converged = true;
            break;
        }
    }
    Ok(FuzzyPartition {
        memberships: u,
        prototypes: v,
        fuzziness: m,
        objective: obj,
        iterations,
        converged,
    })
}

/// Fuzzy c-means from a seeded random partition.
pub fn fcm(x: &Matrix, params: &FcmParams) -> Result<FuzzyPartition> {
    fcm_observed(x, params, |_| {})
}

/// [`fcm`] calling `observer` after every iteration.
pub fn fcm_observed(
    x: &Matrix,
    params: &FcmParams,
    observer: impl FnMut(&IterationState),
) -> Result<FuzzyPartition> {
    validate(x, params)?;
    let u = random_memberships(params.clusters, x.rows(), params.seed);
    alternate(x, params, u, |_, v| Ok(euclidean_d2(x, v)), observer)
}

/// Gustafson-Kessel from a seeded random partition.
pub fn gk(x: &Matrix, params: &FcmParams, regularization: f64) -> Result<FuzzyPartition> {
    validate(x, params)?;
    let u = random_memberships(params.clusters, x.rows(), params.seed);
    gk_run(x, params, u, regularization, |_| {})
}

/// Gustafson-Kessel started from an existing partition's memberships.
pub fn gk_from(
    x: &Matrix,
    init: &FuzzyPartition,
    params: &FcmParams,
    regularization: f64,
) -> Result<FuzzyPartition> {
    validate(x, params)?;
    if init.memberships.rows() != params.clusters || init.memberships.cols() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: params.clusters * x.rows(),
            got: init.memberships.rows() * init.memberships.cols(),
        });
    }
    gk_run(x, params, init.memberships.clone(), regularization, |_| {})
}

/// [`gk`] calling `observer` after every iteration.
pub fn gk_observed(
    x: &Matrix,
    params: &FcmParams,
    regularization: f64,
    observer: impl FnMut(&IterationState),
) -> Result<FuzzyPartition> {
    validate(x, params)?;
    let u = random_memberships(params.clusters, x.rows(), params.seed);
    gk_run(x, params, u, regularization, observer)
}

fn gk_run(
    x: &Matrix,
    params: &FcmParams,
    u: Matrix,
    regularization: f64,
    observer: impl FnMut(&IterationState),
) -> Result<FuzzyPartition> {
    if !(0.0..=1.0).contains(&regularization) {
        return Err(Error::InvalidParameter(format!(
            "regularization must lie in [0, 1], got {regularization}"
        )));
    }
    let global = global_variances(x);
    let m = params.fuzziness;
    alternate(
        x,
        params,
        u,
        |u, v| {
            let d = x.cols();
            let mut d2 = Matrix::zeros(v.rows(), x.rows());
            let mut diff = DVector::zeros(d);
            for i in 0..v.rows() {
                let cov = fuzzy_covariance(x, u, v, i, m, &global, regularization);
                let chol = cov
                    .cholesky()
                    .ok_or(Error::SingularCovariance { cluster: i })?;
                let l = chol.l();
                let log_det: f64 = 2.0 * (0..d).map(|k| l[(k, k)].ln()).sum::<f64>();
                if !log_det.is_finite() {
                    return Err(Error::SingularCovariance { cluster: i });
                }
                // unit-volume norm: det(A) = 1 with A = det(F)^(1/d) F^-1
                let scale = (log_det / d as f64).exp();
                let vi = v.row(i);
                for (j, xj) in x.iter_rows().enumerate() {
                    for k in 0..d {
                        diff[k] = xj[k] - vi[k];
                    }
                    let y = l
                        .solve_lower_triangular(&diff)
                        .ok_or(Error::SingularCovariance { cluster: i })?;
                    d2.set(i, j, scale * y.norm_squared());
                }
            }
            Ok(d2)
        },
        observer,
    )
}

fn global_variances(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    (0..x.cols())
        .map(|k| {
            let col = x.column(k);
            let mu = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n
        })
        .collect()
}

fn fuzzy_covariance(
    x: &Matrix,
    u: &Matrix,
    v: &Matrix,
    i: usize,
    m: f64,
    global: &[f64],
    gamma: f64,
) -> DMatrix<f64> {
    let d = x.cols();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut mass = 0.0;
    let vi = v.row(i);
    let mut diff = vec![0.0; d];
    for (j, xj) in x.iter_rows().enumerate() {
        let w = u.get(i, j).powf(m);
        if w == 0.0 {
            continue;
        }
        mass += w;
        for k in 0..d {
            diff[k] = xj[k] - vi[k];
        }
        for a in 0..d {
            let wa = w * diff[a];
            for b in 0..=a {
                cov[(a, b)] += wa * diff[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let val = if mass > 0.0 { cov[(a, b)] / mass } else { 0.0 };
            let blended = (1.0 - gamma) * val + if a == b { gamma * global[a] } else { 0.0 };
            cov[(a, b)] = blended;
            cov[(b, a)] = blended;
        }
    }
    cov
}

/// Regularized fuzzy covariance matrices of a partition, one `d × d` matrix
/// per cluster, as used by the Gustafson-Kessel norm.
pub fn gk_covariances(x: &Matrix, p: &FuzzyPartition, regularization: f64) -> Result<Vec<Matrix>> {
    check_partition(x, p)?;
    let global = global_variances(x);
    (0..p.clusters())
        .map(|i| {
            let cov = fuzzy_covariance(x, &p.memberships, &p.prototypes, i, p.fuzziness, &global, regularization);
            let d = cov.nrows();
            Matrix::from_vec(d, d, cov.as_slice().to_vec())
        })
        .collect()
}

fn check_partition(x: &Matrix, p: &FuzzyPartition) -> Result<()> {
    if p.prototypes.cols() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            got: p.prototypes.cols(),
        });
    }
    if p.memberships.cols() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: p.memberships.cols(),
        });
    }
    if p.memberships.rows() != p.prototypes.rows() {
        return Err(Error::DimensionMismatch {
            expected: p.prototypes.rows(),
            got: p.memberships.rows(),
        });
    }
    Ok(())
}

/// Fukuyama-Sugeno validity index: compactness minus separation from the
/// mean prototype `v̄ = Σ v_i / c`. Lower is better.
pub fn fukuyama_index(x: &Matrix, p: &FuzzyPartition) -> Result<f64> {
    check_partition(x, p)?;
    let (c, d) = (p.clusters(), x.cols());
    let mut vbar = vec![0.0; d];
    for i in 0..c {
        for (acc, v) in vbar.iter_mut().zip(p.prototypes.row(i)) {
            *acc += v;
        }
    }
    vbar.iter_mut().for_each(|v| *v /= c as f64);
    let mut total = 0.0;
    for i in 0..c {
        let vi = p.prototypes.row(i);
        let sep = squared_distance(vi, &vbar);
        for (j, xj) in x.iter_rows().enumerate() {
            let w = p.memberships.get(i, j).powf(p.fuzziness);
            total += w * (squared_distance(xj, vi) - sep);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityScan {
    pub candidates: Vec<usize>,
    pub index: Vec<f64>,
    pub selected: usize,
}

/// Scores every `c` in `2..=c_max` with the Fukuyama-Sugeno index of the
/// lowest-objective FCM run across `seeds`, and selects the minimum.
pub fn select_cluster_count(x: &Matrix, c_max: usize, fuzziness: f64, seeds: &[u64]) -> Result<ValidityScan> {
    if c_max < 2 {
        return Err(Error::InvalidParameter(format!(
            "the cluster count scan needs c_max >= 2, got {c_max}"
        )));
    }
    if c_max > x.rows() {
        return Err(Error::InvalidParameter(format!(
            "c_max {c_max} exceeds the {} available samples",
            x.rows()
        )));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let candidates: Vec<usize> = (2..=c_max).collect();
    let runs: Vec<(usize, u64)> = candidates
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let partitions = runs
        .par_iter()
        .map(|&(c, s)| fcm(x, &FcmParams::new(c).fuzziness(fuzziness).seed(s)))
        .collect::<Result<Vec<_>>>()?;
    let mut index = Vec::with_capacity(candidates.len());
    for chunk in partitions.chunks(seeds.len()) {
        let best = chunk
            .iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .expect("non-empty seed list");
        index.push(fukuyama_index(x, best)?);
    }
    let best = (0..candidates.len())
        .min_by(|&a, &b| index[a].total_cmp(&index[b]))
        .expect("at least one candidate");
    Ok(ValidityScan {
        selected: candidates[best],
        candidates,
        index,
    })
}
