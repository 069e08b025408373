// SPDX-License-Identifier: Apache-2.0

//! Test-only oracles and fixtures. Nothing here calls into the crate's
//! optimizer: standardization, objective and minimizers are written from
//! scratch so they can check `fit_probe` independently.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use veracity_core::probe::TrainingSet;

/// Dense logistic problem in standardized coordinates.
pub struct Reference {
    pub n: usize,
    pub d: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub l2: f64,
    pub l1: f64,
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        z.exp() / (1.0 + z.exp())
    }
}

impl Reference {
    /// Standardizes with population mean and standard deviation (scale 1
    /// for constant features).
    pub fn new(set: &TrainingSet, l2: f64, l1: f64) -> Self {
        let n = set.len();
        let d = set.dim();
        let mut x: Vec<Vec<f64>> = (0..n).map(|i| set.row(i).to_vec()).collect();
        for j in 0..d {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for r in x.iter_mut() {
                r[j] = (r[j] - mean) / sd;
            }
        }
        let y = set
            .labels()
            .iter()
            .map(|&c| f64::from(u8::from(c)))
            .collect();
        Reference { n, d, x, y, l2, l1 }
    }

    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.x
            .iter()
            .map(|r| r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }

    pub fn objective(&self, w: &[f64], b: f64) -> f64 {
        let z = self.margins(w, b);
        let loss: f64 = z
            .iter()
            .zip(&self.y)
            .map(|(&z, &y)| log1pexp(z) - y * z)
            .sum::<f64>()
            / self.n as f64;
        loss + self.l2 * w.iter().map(|v| v * v).sum::<f64>()
            + self.l1 * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Gradient of the smooth part (log loss + l2) in (w, b).
    pub fn smooth_gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let z = self.margins(w, b);
        let mut g = vec![0.0; self.d];
        let mut gb = 0.0;
        for (i, zi) in z.iter().enumerate() {
            let r = logistic(*zi) - self.y[i];
            for j in 0..self.d {
                g[j] += r * self.x[i][j];
            }
            gb += r;
        }
        for j in 0..self.d {
            g[j] = g[j] / self.n as f64 + 2.0 * self.l2 * w[j];
        }
        (g, gb / self.n as f64)
    }

    /// Minimum-norm subgradient of the full objective.
    pub fn subgradient_norm(&self, w: &[f64], b: f64) -> f64 {
        let (g, gb) = self.smooth_gradient(w, b);
        let mut sq = gb * gb;
        for j in 0..self.d {
            let r = if self.l1 == 0.0 {
                g[j]
            } else if w[j] > 0.0 {
                g[j] + self.l1
            } else if w[j] < 0.0 {
                g[j] - self.l1
            } else {
                (g[j].abs() - self.l1).max(0.0)
            };
            sq += r * r;
        }
        sq.sqrt()
    }

    /// Plain fixed-step gradient descent for smooth problems (`l1 == 0`),
    /// run until the gradient norm is at most `tol`. The step is 1 / L with
    /// `L = 0.25 * (sum of squared standardized entries / n + 1) + 2 l2`,
    /// an upper bound on the Hessian spectral norm.
    pub fn gradient_descent(&self, tol: f64, max_iter: usize) -> (Vec<f64>, f64, f64) {
        assert_eq!(self.l1, 0.0);
        let frob: f64 = self.x.iter().flatten().map(|v| v * v).sum::<f64>() / self.n as f64;
        let lipschitz = 0.25 * (frob + 1.0) + 2.0 * self.l2;
        let step = 1.0 / lipschitz;
        let mut w = vec![0.0; self.d];
        let mut b = 0.0;
        let mut norm = f64::INFINITY;
        for _ in 0..max_iter {
            let (g, gb) = self.smooth_gradient(&w, b);
            norm = (g.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt();
            if norm <= tol {
                break;
            }
            for j in 0..self.d {
                w[j] -= step * g[j];
            }
            b -= step * gb;
        }
        (w, b, norm)
    }

    /// Cyclic coordinate descent with each coordinate minimized exactly:
    /// the one-dimensional optimality condition is solved by bisection on
    /// its monotone (sub)derivative. Handles any `l1 >= 0`.
    pub fn coordinate_descent(&self, tol: f64, max_sweeps: usize) -> (Vec<f64>, f64, f64) {
        let mut w = vec![0.0; self.d];
        let mut b = 0.0;
        let mut z = self.margins(&w, b);
        let mut norm = f64::INFINITY;
        for _ in 0..max_sweeps {
            for j in 0..=self.d {
                let col: Vec<f64> = if j < self.d {
                    self.x.iter().map(|r| r[j]).collect()
                } else {
                    vec![1.0; self.n]
                };
                let current = if j < self.d { w[j] } else { b };
                let penalized = j < self.d;
                // Smooth derivative along this coordinate at value t.
                let deriv = |t: f64| -> f64 {
                    let delta = t - current;
                    let mut g = 0.0;
                    for i in 0..self.n {
                        g += (logistic(z[i] + delta * col[i]) - self.y[i]) * col[i];
                    }
                    g /= self.n as f64;
                    if penalized {
                        g += 2.0 * self.l2 * t;
                    }
                    g
                };
                let l1 = if penalized { self.l1 } else { 0.0 };
                let g0 = deriv(0.0);
                let target = if l1 > 0.0 && g0.abs() <= l1 {
                    0.0
                } else {
                    // Root of deriv(t) + sign * l1 on the side where it lies.
                    let sign = if l1 == 0.0 {
                        0.0
                    } else if g0 < -l1 {
                        1.0
                    } else {
                        -1.0
                    };
                    let f = |t: f64| deriv(t) + sign * l1;
                    let (mut lo, mut hi) = if sign > 0.0 {
                        (0.0, 1.0)
                    } else if sign < 0.0 {
                        (-1.0, 0.0)
                    } else {
                        (current - 1.0, current + 1.0)
                    };
                    while f(lo) > 0.0 {
                        lo -= 2.0 * (hi - lo);
                    }
                    while f(hi) < 0.0 {
                        hi += 2.0 * (hi - lo);
                    }
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if f(mid) < 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                };
                let delta = target - current;
                if delta != 0.0 {
                    for i in 0..self.n {
                        z[i] += delta * col[i];
                    }
                }
                if j < self.d {
                    w[j] = target;
                } else {
                    b = target;
                }
            }
            // Re-sync margins to avoid drift from incremental updates.
            z = self.margins(&w, b);
            norm = self.subgradient_norm(&w, b);
            if norm <= tol {
                break;
            }
        }
        (w, b, norm)
    }
}

/// Random logistic problem with badly scaled, offset features so that
/// standardization matters. Labels follow a logistic model with a random
/// planted weight vector.
pub fn random_problem(seed: u64, n: usize, d: usize) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: Vec<f64> = (0..d)
        .map(|_| (rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let offsets: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let planted: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    loop {
        let mut set = TrainingSet::new(d);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let z: f64 = x.iter().zip(&planted).map(|(a, b)| a * b).sum();
            let y = rng.random::<f64>() < logistic(z);
            let raw: Vec<f64> = x
                .iter()
                .zip(&scales)
                .zip(&offsets)
                .map(|((v, s), o)| v * s + o)
                .collect();
            set.push(&raw, y).unwrap();
        }
        let pos = set.labels().iter().filter(|&&c| c).count();
        if pos > 0 && pos < n {
            return set;
        }
    }
}

/// Reference objective value: GD for smooth problems, coordinate descent
/// otherwise, both to subgradient norm 1e-12.
pub fn reference_optimum(reference: &Reference) -> (f64, f64) {
    let (w, b, norm) = if reference.l1 == 0.0 {
        reference.gradient_descent(1e-12, 2_000_000)
    } else {
        reference.coordinate_descent(1e-12, 200_000)
    };
    (reference.objective(&w, b), norm)
}
