// SPDX-License-Identifier: Apache-2.0

//! Linear knowledge probes.
//!
//! A probe is a logistic-regression model mapping a hidden vector of a
//! (question, answer) pair to `p(correct | h)`. Fitting minimizes
//!
//! ```text
//! mean_i logloss(y_i, w . x_i + b) + l2 * |w|_2^2 + l1 * |w|_1
//! ```
//!
//! over features standardized with training statistics. The bias is never
//! penalized. The solver is accelerated proximal gradient (soft-thresholding
//! for the l1 term) with backtracking on the step size and adaptive momentum
//! restart, so l1 solutions contain exact zeros.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::{RepresentationDump, Split};
use crate::error::{Error, Result};

/// Outputs of [`predict_correct`] are clamped to `[P_FLOOR, 1 - P_FLOOR]`.
pub const P_FLOOR: f64 = 1e-15;

/// Rows per partial sum. Summation order depends only on this constant, so
/// results are bitwise identical whatever the thread count.
const CHUNK_ROWS: usize = 256;
const PARALLEL_MIN_WORK: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegConfig {
    pub l2_strength: f64,
    pub l1_strength: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub seed: u64,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            l2_strength: 1e-4,
            l1_strength: 0.0,
            max_iterations: 10_000,
            gradient_tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl RegConfig {
    pub fn l2(strength: f64) -> Self {
        RegConfig {
            l2_strength: strength,
            ..Default::default()
        }
    }

    pub fn l1(strength: f64) -> Self {
        RegConfig {
            l2_strength: 0.0,
            l1_strength: strength,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !nonneg(self.l2_strength) || !nonneg(self.l1_strength) {
            return Err(Error::invalid(format!(
                "penalty strengths must be finite and nonnegative (l2 = {}, l1 = {})",
                self.l2_strength, self.l1_strength
            )));
        }
        if !(self.gradient_tolerance.is_finite() && self.gradient_tolerance > 0.0) {
            return Err(Error::invalid("gradient_tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Labeled hidden vectors, stored row-major in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<bool>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        TrainingSet {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push<T: Copy + Into<f64>>(&mut self, features: &[T], correct: bool) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: features.len(),
            });
        }
        let start = self.features.len();
        self.features.extend(features.iter().map(|&v| v.into()));
        if self.features[start..].iter().any(|v| !v.is_finite()) {
            self.features.truncate(start);
            return Err(Error::invalid(format!(
                "non-finite feature in point {}",
                self.labels.len()
            )));
        }
        self.labels.push(correct);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// `true` means the (question, answer) pair is correct.
    pub fn label(&self, i: usize) -> bool {
        self.labels[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }
}

/// Two points per example of `split`: the gold candidate labeled correct and
/// the distractor labeled incorrect.
pub fn build_training_set(dump: &RepresentationDump, split: Split) -> Result<TrainingSet> {
    let mut set = TrainingSet::new(dump.hidden_dim());
    for record in dump.examples(split) {
        let gold = record.gold_index;
        set.push(dump.candidate_vector(record, gold), true)?;
        set.push(dump.candidate_vector(record, 1 - gold), false)?;
    }
    if set.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    Ok(set)
}

/// Anything that scores a hidden vector with `p(correct | h)`.
pub trait CorrectnessScorer {
    fn dim(&self) -> usize;
    fn predict_correct(&self, h: &[f32]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub reg: RegConfig,
    /// Penalized objective at the returned parameters.
    pub train_loss: f64,
    pub converged: bool,
}

impl ProbeModel {
    pub fn logit(&self, h: &[f32]) -> Result<f64> {
        if h.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: h.len(),
            });
        }
        let mut z = self.bias;
        for (((&x, w), m), s) in h
            .iter()
            .zip(&self.weights)
            .zip(&self.feature_means)
            .zip(&self.feature_scales)
        {
            z += w * ((f64::from(x) - m) / s);
        }
        Ok(z)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("probe model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ProbeModel =
            serde_json::from_str(text).map_err(|e| Error::json("probe model", e))?;
        let d = model.weights.len();
        if model.feature_means.len() != d || model.feature_scales.len() != d {
            return Err(Error::invalid(
                "probe model vectors have inconsistent lengths",
            ));
        }
        if model
            .feature_scales
            .iter()
            .any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return Err(Error::invalid(
                "probe model feature_scales must be positive",
            ));
        }
        Ok(model)
    }
}

impl CorrectnessScorer for ProbeModel {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn predict_correct(&self, h: &[f32]) -> Result<f64> {
        Ok(clamp_probability(sigmoid(self.logit(h)?)))
    }
}

pub fn predict_correct(model: &ProbeModel, h: &[f32]) -> Result<f64> {
    model.predict_correct(h)
}

/// Fraction of weights that are exactly zero.
pub fn sparsity(model: &ProbeModel) -> f64 {
    if model.weights.is_empty() {
        return 1.0;
    }
    let zeros = model.weights.iter().filter(|&&w| w == 0.0).count();
    zeros as f64 / model.weights.len() as f64
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(P_FLOOR, 1.0 - P_FLOOR)
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn fit_probe(points: &TrainingSet, reg: &RegConfig) -> Result<ProbeModel> {
    reg.validate()?;
    let positives = points.labels.iter().filter(|&&c| c).count();
    if positives == 0 || positives == points.len() {
        return Err(Error::invalid(
            "probe training needs at least one correct and one incorrect point",
        ));
    }
    let (means, scales) = standardization(points);
    let problem = Problem::new(points, &means, &scales, reg);
    let solution = problem.solve(reg.max_iterations, reg.gradient_tolerance);
    let d = points.dim();
    Ok(ProbeModel {
        weights: solution.theta[..d].to_vec(),
        bias: solution.theta[d],
        feature_means: means,
        feature_scales: scales,
        reg: reg.clone(),
        train_loss: solution.objective,
        converged: solution.converged,
    })
}

/// Per-feature mean and population standard deviation; zero-variance
/// features get scale 1.
fn standardization(points: &TrainingSet) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() as f64;
    let d = points.dim();
    let mut means = vec![0.0; d];
    for i in 0..points.len() {
        for (m, x) in means.iter_mut().zip(points.row(i)) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for i in 0..points.len() {
        for ((v, x), m) in var.iter_mut().zip(points.row(i)).zip(&means) {
            let c = x - m;
            *v += c * c;
        }
    }
    let scales = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (means, scales)
}

struct Problem {
    n: usize,
    d: usize,
    /// Standardized design, row-major.
    x: Vec<f64>,
    y: Vec<f64>,
    l2: f64,
    l1: f64,
    parallel: bool,
}

struct Solution {
    theta: Vec<f64>,
    objective: f64,
    converged: bool,
}

impl Problem {
    fn new(points: &TrainingSet, means: &[f64], scales: &[f64], reg: &RegConfig) -> Self {
        let d = points.dim();
        let mut x = Vec::with_capacity(points.len() * d);
        for i in 0..points.len() {
            x.extend(
                points
                    .row(i)
                    .iter()
                    .zip(means)
                    .zip(scales)
                    .map(|((v, m), s)| (v - m) / s),
            );
        }
        let y = points
            .labels
            .iter()
            .map(|&c| if c { 1.0 } else { 0.0 })
            .collect();
        Problem {
            n: points.len(),
            d,
            x,
            y,
            l2: reg.l2_strength,
            l1: reg.l1_strength,
            parallel: points.len() * d >= PARALLEL_MIN_WORK,
        }
    }

    fn margin(&self, theta: &[f64], i: usize) -> f64 {
        let row = &self.x[i * self.d..(i + 1) * self.d];
        row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[self.d]
    }

    fn chunk_ranges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .step_by(CHUNK_ROWS)
            .map(|s| (s, (s + CHUNK_ROWS).min(self.n)))
            .collect()
    }

    /// Runs `f` over row chunks and returns the partial results in chunk order.
    fn map_chunks<T: Send>(&self, f: impl Fn(usize, usize) -> T + Sync) -> Vec<T> {
        let ranges = self.chunk_ranges();
        if self.parallel {
            ranges.into_par_iter().map(|(a, b)| f(a, b)).collect()
        } else {
            ranges.into_iter().map(|(a, b)| f(a, b)).collect()
        }
    }

    /// Smooth part of the objective: mean log loss plus the l2 term.
    fn smooth_value(&self, theta: &[f64]) -> f64 {
        let partials = self.map_chunks(|a, b| {
            (a..b)
                .map(|i| {
                    let z = self.margin(theta, i);
                    softplus(z) - self.y[i] * z
                })
                .sum::<f64>()
        });
        let loss = partials.into_iter().sum::<f64>() / self.n as f64;
        loss + self.l2 * theta[..self.d].iter().map(|w| w * w).sum::<f64>()
    }

    /// Value and gradient of the smooth part.
    fn smooth_with_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.d;
        let partials = self.map_chunks(|a, b| {
            let mut g = vec![0.0; d + 1];
            let mut loss = 0.0;
            for i in a..b {
                let z = self.margin(theta, i);
                loss += softplus(z) - self.y[i] * z;
                let r = sigmoid(z) - self.y[i];
                let row = &self.x[i * d..(i + 1) * d];
                for (gj, xj) in g.iter_mut().zip(row) {
                    *gj += r * xj;
                }
                g[d] += r;
            }
            (loss, g)
        });
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        let n = self.n as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        for (g, w) in grad[..d].iter_mut().zip(theta) {
            *g += 2.0 * self.l2 * w;
        }
        loss / n + self.l2 * theta[..d].iter().map(|w| w * w).sum::<f64>()
    }

    fn l1_value(&self, theta: &[f64]) -> f64 {
        self.l1 * theta[..self.d].iter().map(|w| w.abs()).sum::<f64>()
    }

    /// Norm of the minimum-norm element of the subdifferential of the full
    /// objective at `theta`, given the smooth gradient there.
    fn optimality(&self, theta: &[f64], grad: &[f64]) -> f64 {
        let mut sq = grad[self.d] * grad[self.d];
        for (&w, &g) in theta[..self.d].iter().zip(grad) {
            let r = if self.l1 == 0.0 {
                g
            } else if w != 0.0 {
                g + self.l1 * w.signum()
            } else {
                (g.abs() - self.l1).max(0.0)
            };
            sq += r * r;
        }
        sq.sqrt()
    }

    fn prox_step(&self, from: &[f64], grad: &[f64], lipschitz: f64, out: &mut [f64]) {
        let step = 1.0 / lipschitz;
        let thresh = self.l1 * step;
        for j in 0..self.d {
            out[j] = soft_threshold(from[j] - step * grad[j], thresh);
        }
        out[self.d] = from[self.d] - step * grad[self.d];
    }

    fn solve(&self, max_iterations: usize, tolerance: f64) -> Solution {
        let p = self.d + 1;
        let mut x = vec![0.0; p];
        let mut y = x.clone();
        let mut next = vec![0.0; p];
        let mut grad_y = vec![0.0; p];
        let mut grad_x = vec![0.0; p];
        let mut momentum = 1.0_f64;
        let mut lipschitz = 1.0_f64;

        let smooth_x = self.smooth_with_gradient(&x, &mut grad_x);
        let mut objective = smooth_x + self.l1_value(&x);
        let mut converged = self.optimality(&x, &grad_x) <= tolerance;

        for _ in 0..max_iterations {
            if converged {
                break;
            }
            let smooth_y = self.smooth_with_gradient(&y, &mut grad_y);
            loop {
                self.prox_step(&y, &grad_y, lipschitz, &mut next);
                let f_next = self.smooth_value(&next);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for j in 0..p {
                    let diff = next[j] - y[j];
                    lin += grad_y[j] * diff;
                    sq += diff * diff;
                }
                let bound = smooth_y + lin + 0.5 * lipschitz * sq;
                let slack = 1e-12 * smooth_y.abs().max(1.0);
                if f_next <= bound + slack || lipschitz > 1e16 {
                    break;
                }
                lipschitz *= 2.0;
            }

            let smooth_next = self.smooth_with_gradient(&next, &mut grad_y);
            let obj_next = smooth_next + self.l1_value(&next);
            if obj_next > objective && momentum > 1.0 {
                // Momentum overshot: restart from the last accepted iterate.
                momentum = 1.0;
                y.copy_from_slice(&x);
                continue;
            }

            let restart = (0..p)
                .map(|j| (y[j] - next[j]) * (next[j] - x[j]))
                .sum::<f64>()
                > 0.0;
            let momentum_next = if restart {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt())
            };
            let beta = if restart {
                0.0
            } else {
                (momentum - 1.0) / momentum_next
            };
            for j in 0..p {
                y[j] = next[j] + beta * (next[j] - x[j]);
            }
            momentum = momentum_next;
            std::mem::swap(&mut x, &mut next);
            grad_x.copy_from_slice(&grad_y);
            objective = obj_next;
            converged = self.optimality(&x, &grad_x) <= tolerance;
            lipschitz = (lipschitz / 1.25).max(1e-8);
        }

        Solution {
            theta: x,
            objective,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> TrainingSet {
        let mut set = TrainingSet::new(2);
        for _ in 0..50 {
            set.push(&[1.0_f64, 0.0], true).unwrap();
            set.push(&[-1.0_f64, 0.0], false).unwrap();
        }
        set
    }

    #[test]
    fn separable_points_are_classified_perfectly() {
        let set = separable();
        let model = fit_probe(&set, &RegConfig::l2(0.01)).unwrap();
        assert!(model.converged);
        for i in 0..set.len() {
            let h: Vec<f32> = set.row(i).iter().map(|&v| v as f32).collect();
            let z = model.logit(&h).unwrap();
            assert_eq!(z > 0.0, set.label(i));
        }
    }

    #[test]
    fn huge_l1_zeroes_everything() {
        let set = separable();
        let model = fit_probe(&set, &RegConfig::l1(1e6)).unwrap();
        assert!(model.weights.iter().all(|&w| w == 0.0));
        assert_eq!(model.bias, 0.0);
        assert_eq!(sparsity(&model), 1.0);
        assert_eq!(model.predict_correct(&[0.3, -7.0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_rejected() {
        let mut set = TrainingSet::new(1);
        set.push(&[1.0_f64], true).unwrap();
        set.push(&[2.0_f64], true).unwrap();
        assert!(fit_probe(&set, &RegConfig::default()).is_err());
    }

    #[test]
    fn non_finite_feature_is_rejected() {
        let mut set = TrainingSet::new(2);
        assert!(set.push(&[1.0_f64, f64::NAN], true).is_err());
        assert!(set.is_empty());
    }

    #[test]
    fn sigmoid_of_ln3_is_three_quarters() {
        let model = ProbeModel {
            weights: vec![3f64.ln(), 0.0],
            bias: 0.0,
            feature_means: vec![0.0, 0.0],
            feature_scales: vec![1.0, 1.0],
            reg: RegConfig::default(),
            train_loss: 0.0,
            converged: true,
        };
        let p = predict_correct(&model, &[1.0, 5.0]).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        assert!(matches!(
            predict_correct(&model, &[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn zero_model_predicts_half() {
        let model = ProbeModel {
            weights: vec![0.0; 3],
            bias: 0.0,
            feature_means: vec![1.0; 3],
            feature_scales: vec![2.0; 3],
            reg: RegConfig::default(),
            train_loss: 0.0,
            converged: true,
        };
        assert_eq!(model.predict_correct(&[9.0, -4.0, 1e6]).unwrap(), 0.5);
    }

    #[test]
    fn sparsity_counts_exact_zeros() {
        let mut model = ProbeModel {
            weights: vec![0.0, 0.3, 0.0, -1.0],
            bias: 0.0,
            feature_means: vec![0.0; 4],
            feature_scales: vec![1.0; 4],
            reg: RegConfig::default(),
            train_loss: 0.0,
            converged: true,
        };
        assert_eq!(sparsity(&model), 0.5);
        model.weights = vec![0.0; 4];
        assert_eq!(sparsity(&model), 1.0);
    }

    #[test]
    fn zero_variance_feature_gets_unit_scale() {
        let mut set = TrainingSet::new(2);
        set.push(&[1.0_f64, 4.0], true).unwrap();
        set.push(&[-1.0_f64, 4.0], false).unwrap();
        let (means, scales) = standardization(&set);
        assert_eq!(means, vec![0.0, 4.0]);
        assert_eq!(scales, vec![1.0, 1.0]);
    }

    #[test]
    fn saturated_logits_stay_inside_unit_interval() {
        let model = ProbeModel {
            weights: vec![1.0],
            bias: 0.0,
            feature_means: vec![0.0],
            feature_scales: vec![1.0],
            reg: RegConfig::default(),
            train_loss: 0.0,
            converged: true,
        };
        let hi = model.predict_correct(&[1e30]).unwrap();
        let lo = model.predict_correct(&[-1e30]).unwrap();
        assert!(hi < 1.0 && lo > 0.0);
    }

    #[test]
    fn invalid_reg_config_is_rejected() {
        let set = separable();
        let reg = RegConfig {
            gradient_tolerance: 0.0,
            ..Default::default()
        };
        assert!(fit_probe(&set, &reg).is_err());
        assert!(fit_probe(&set, &RegConfig::l1(-1.0)).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let model = fit_probe(&separable(), &RegConfig::l2(0.01)).unwrap();
        let back = ProbeModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
