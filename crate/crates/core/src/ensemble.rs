// SPDX-License-Identifier: Apache-2.0

//! Convex probe/query mixture `lambda * p_probe + (1 - lambda) * p_query`
//! with lambda picked by grid search on validation pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::PredictionPair;

pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_VALIDATION_LIMIT: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub lambda: f64,
    pub validation_accuracy: f64,
    pub grid_step: f64,
    pub validation_size: usize,
}

impl EnsembleConfig {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("ensemble config", e))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )))
    }
}

pub fn ensemble_prob(p_probe_gold: f64, p_query_gold: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    for p in [p_probe_gold, p_query_gold] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability out of range: {p}")));
        }
    }
    Ok(mix(p_probe_gold, p_query_gold, lambda))
}

fn mix(p: f64, q: f64, lambda: f64) -> f64 {
    lambda * p + (1.0 - lambda) * q
}

fn mixture_accuracy(pairs: &[PredictionPair], lambda: f64) -> f64 {
    let hits = pairs
        .iter()
        .filter(|p| mix(p.p_probe_gold, p.p_query_gold, lambda) > 0.5)
        .count();
    hits as f64 / pairs.len() as f64
}

/// `0, step, 2 step, ...` up to and including 1. When `1 / step` is (within
/// rounding) an integer `k`, points are computed as `i / k` so that e.g.
/// step 0.01 yields exactly the doubles nearest 0.00, 0.01, ..., 1.00.
pub fn lambda_grid(grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::invalid(format!(
            "grid_step must lie in (0, 1], got {grid_step}"
        )));
    }
    let k = (1.0 / grid_step).round();
    if ((k * grid_step) - 1.0).abs() < 1e-9 {
        let k = k as usize;
        return Ok((0..=k).map(|i| i as f64 / k as f64).collect());
    }
    let mut grid: Vec<f64> = (0..)
        .map(|i| i as f64 * grid_step)
        .take_while(|&l| l < 1.0)
        .collect();
    grid.push(1.0);
    Ok(grid)
}

/// Smallest grid lambda with maximal validation accuracy.
pub fn fit_lambda(validation_pairs: &[PredictionPair], grid_step: f64) -> Result<EnsembleConfig> {
    let grid = lambda_grid(grid_step)?;
    if validation_pairs.is_empty() {
        return Err(Error::Empty);
    }
    let scores: Vec<f64> = grid
        .par_iter()
        .map(|&l| mixture_accuracy(validation_pairs, l))
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(EnsembleConfig {
        lambda: grid[best],
        validation_accuracy: scores[best],
        grid_step,
        validation_size: validation_pairs.len(),
    })
}

pub fn evaluate_ensemble(test_pairs: &[PredictionPair], config: &EnsembleConfig) -> Result<f64> {
    check_lambda(config.lambda)?;
    if test_pairs.is_empty() {
        return Err(Error::Empty);
    }
    Ok(mixture_accuracy(test_pairs, config.lambda))
}
