//! Diagonal-covariance Gaussian mixtures.

use rand::Rng;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const KMEANS_MAX_ITERS: usize = 100;

/// log(sum(exp(xs))) without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    // log w_m - 0.5 * (D ln 2pi + sum ln var)
    log_consts: Vec<f64>,
}

impl Gmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || variances.len() != m {
            return Err(Error::ModelFormat("mixture component counts disagree".into()));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|v| v.len() != dim) {
            return Err(Error::ModelFormat("mixture dimensions disagree".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::ModelFormat("negative or non-finite mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::ModelFormat(format!("mixture weights sum to {total}")));
        }
        if variances.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::ModelFormat("non-positive variance".into()));
        }
        if means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat("non-finite mean".into()));
        }
        let mut gmm = Gmm {
            weights,
            means,
            variances,
            log_consts: Vec::new(),
        };
        gmm.refresh();
        Ok(gmm)
    }

    fn refresh(&mut self) {
        let dim = self.dim() as f64;
        self.log_consts = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(w, var)| w.ln() - 0.5 * (dim * LN_2PI + var.iter().map(|v| v.ln()).sum::<f64>()))
            .collect();
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// log sum_m w_m N(x; mu_m, diag var_m).
    pub fn log_pdf(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.log_pdf_unchecked(x))
    }

    pub(crate) fn log_pdf_unchecked(&self, x: &[f32]) -> f64 {
        let mut scratch = vec![0.0; self.components()];
        self.component_log_terms(x, &mut scratch);
        log_sum_exp(&scratch)
    }

    /// Per-component log(w_m N(x; m)) into `out`.
    pub(crate) fn component_log_terms(&self, x: &[f32], out: &mut [f64]) {
        for (m, slot) in out.iter_mut().enumerate() {
            let mut quad = 0.0;
            for ((xi, mu), var) in x.iter().zip(&self.means[m]).zip(&self.variances[m]) {
                let d = f64::from(*xi) - mu;
                quad += d * d / var;
            }
            *slot = self.log_consts[m] - 0.5 * quad;
        }
    }

    /// Fits weights, means and variances from hard cluster assignments found
    /// by k-means; variances are floored per dimension.
    pub fn from_frames<R: Rng>(frames: &[&[f32]], components: usize, floor: &[f64], rng: &mut R) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::NoTrainingData("mixture initialization".into()));
        }
        if frames.len() < components {
            return Err(Error::Numerical(format!(
                "{} frames cannot seed {components} mixture components",
                frames.len()
            )));
        }
        let dim = frames[0].len();
        let (centers, assignment) = kmeans(frames, components, rng);
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut variances = Vec::new();
        for (k, center) in centers.into_iter().enumerate() {
            let members: Vec<&[f32]> = frames
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == k)
                .map(|(f, _)| *f)
                .collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            let mut var = vec![0.0; dim];
            for f in &members {
                for d in 0..dim {
                    let diff = f64::from(f[d]) - center[d];
                    var[d] += diff * diff;
                }
            }
            for d in 0..dim {
                var[d] = (var[d] / n).max(floor[d]);
            }
            weights.push(n / frames.len() as f64);
            means.push(center);
            variances.push(var);
        }
        Gmm::new(weights, means, variances)
    }

    pub(crate) fn set_parameters(&mut self, weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) {
        self.weights = weights;
        self.means = means;
        self.variances = variances;
        self.refresh();
    }
}

/// Lloyd's k-means with k-means++ seeding. Returns centers and the
/// assignment of each point. Ties go to the lowest center index.
pub fn kmeans<R: Rng>(points: &[&[f32]], k: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(k >= 1 && points.len() >= k);
    let to_f64 = |p: &[f32]| p.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
    let dist2 = |p: &[f32], c: &[f64]| -> f64 { p.iter().zip(c).map(|(a, b)| (f64::from(*a) - b).powi(2)).sum() };

    let mut centers = vec![to_f64(points[rng.gen_range(0..points.len())])];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let c = to_f64(points[pick]);
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(p, &c));
        }
        centers.push(c);
    }

    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = dist2(p, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = centers[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for d in 0..dim {
                sums[a][d] += f64::from(p[d]);
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    (centers, assignment)
}
