// SPDX-License-Identifier: Apache-2.0

//! Synthetic dumps with known ground truth.
//!
//! Hidden vectors come from two isotropic unit-variance Gaussians in `d`
//! dimensions: the gold candidate around `+separation/2 * e1`, the distractor
//! around `-separation/2 * e1`. For these class conditionals the Bayes
//! posterior is `sigmoid(separation * h[0])`, which [`bayes_probe`] exposes
//! as an oracle. Query log-probabilities are set per regime:
//!
//! | regime          | hidden vectors                         | query gold probability       |
//! |-----------------|----------------------------------------|------------------------------|
//! | `deception`     | separation (default 6)                 | `1 - query_confidence`       |
//! | `confabulation` | separation (default 0.3)               | `1 - query_confidence`       |
//! | `heterogeneity` | even items: separation (default 6)     | even items: `0.5 +- 0.02`     |
//! |                 | odd items: both candidates at origin   | odd items: `query_confidence`|
//! | `agreement`     | separation (default 6)                 | `query_confidence`           |
//! | `calibrated`    | separation (default 2), antithetic     | `u ~ U(0,1)` on candidate 0, which is gold with probability `u` |
//!
//! In the calibrated regime the distractor vector is the negated gold
//! vector. Marginally it is still drawn from the distractor Gaussian, and the
//! per-candidate probe probabilities then renormalize to the exact pair
//! posterior, so a well-fit probe is calibrated on answer distributions.
//!
//! Randomness is ChaCha20 seeded with `seed` via `seed_from_u64`; normals use
//! the `rand_distr` standard normal sampler. Raw log-probabilities carry a
//! common random offset per example so consumers must renormalize.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dump::{DumpManifest, ExampleRecord, RepresentationDump, Split};
use crate::error::{Error, Result};
use crate::probe::{clamp_probability, sigmoid, CorrectnessScorer};

pub const CONFIDENT_SEPARATION: f64 = 6.0;
pub const CONFABULATION_SEPARATION: f64 = 0.3;
pub const CALIBRATED_SEPARATION: f64 = 2.0;
pub const DEFAULT_QUERY_CONFIDENCE: f64 = 0.9;
const HETEROGENEITY_QUERY_JITTER: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Deception,
    Confabulation,
    Heterogeneity,
    Agreement,
    Calibrated,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Deception,
        Regime::Confabulation,
        Regime::Heterogeneity,
        Regime::Agreement,
        Regime::Calibrated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Deception => "deception",
            Regime::Confabulation => "confabulation",
            Regime::Heterogeneity => "heterogeneity",
            Regime::Agreement => "agreement",
            Regime::Calibrated => "calibrated",
        }
    }

    pub fn default_separation(self) -> f64 {
        match self {
            Regime::Confabulation => CONFABULATION_SEPARATION,
            Regime::Calibrated => CALIBRATED_SEPARATION,
            _ => CONFIDENT_SEPARATION,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub regime: Regime,
    /// Examples per split; every split gets `n`.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Class-mean distance in standard deviations. `None` uses the regime
    /// default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default = "default_query_confidence")]
    pub query_confidence: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    1000
}

fn default_d() -> usize {
    8
}

fn default_query_confidence() -> f64 {
    DEFAULT_QUERY_CONFIDENCE
}

impl RegimeSpec {
    pub fn new(regime: Regime) -> Self {
        RegimeSpec {
            regime,
            n: default_n(),
            d: default_d(),
            separation: None,
            query_confidence: DEFAULT_QUERY_CONFIDENCE,
            seed: 0,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_separation(mut self, separation: f64) -> Self {
        self.separation = Some(separation);
        self
    }

    pub fn separation(&self) -> f64 {
        self.separation
            .unwrap_or_else(|| self.regime.default_separation())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.d < 1 {
            return Err(Error::invalid("regime spec needs n >= 1 and d >= 1"));
        }
        let s = self.separation();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!(
                "separation must be positive, got {s}"
            )));
        }
        let q = self.query_confidence;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!(
                "query_confidence must lie in (0, 1), got {q}"
            )));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!(
            "synthetic regime={} n={} d={} separation={} query_confidence={} seed={}",
            self.regime,
            self.n,
            self.d,
            self.separation(),
            self.query_confidence,
            self.seed
        )
    }
}

struct Item {
    separation: f64,
    antithetic: bool,
    gold_index: usize,
    p_query_gold: f64,
}

fn plan_item(spec: &RegimeSpec, index: usize, rng: &mut ChaCha20Rng) -> Item {
    let s = spec.separation();
    let q = spec.query_confidence;
    let random_gold = |rng: &mut ChaCha20Rng| usize::from(rng.random::<bool>());
    match spec.regime {
        Regime::Deception | Regime::Confabulation => Item {
            separation: s,
            antithetic: false,
            gold_index: random_gold(rng),
            p_query_gold: 1.0 - q,
        },
        Regime::Agreement => Item {
            separation: s,
            antithetic: false,
            gold_index: random_gold(rng),
            p_query_gold: q,
        },
        Regime::Heterogeneity if index.is_multiple_of(2) => {
            let gold_index = random_gold(rng);
            let jitter = rng.random_range(-HETEROGENEITY_QUERY_JITTER..=HETEROGENEITY_QUERY_JITTER);
            Item {
                separation: s,
                antithetic: false,
                gold_index,
                p_query_gold: 0.5 + jitter,
            }
        }
        Regime::Heterogeneity => Item {
            separation: 0.0,
            antithetic: false,
            gold_index: random_gold(rng),
            p_query_gold: q,
        },
        Regime::Calibrated => {
            let u: f64 = rng.random_range(1e-9..1.0 - 1e-9);
            let gold_index = if rng.random::<f64>() < u { 0 } else { 1 };
            let p_query_gold = if gold_index == 0 { u } else { 1.0 - u };
            Item {
                separation: s,
                antithetic: true,
                gold_index,
                p_query_gold,
            }
        }
    }
}

fn gaussian(rng: &mut ChaCha20Rng, d: usize, shift: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    v[0] += shift;
    v
}

pub fn generate(spec: &RegimeSpec) -> Result<RepresentationDump> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(3 * spec.n);
    let mut vectors = Vec::with_capacity(6 * spec.n);
    let mut split_counts = BTreeMap::new();

    for split in Split::ALL {
        split_counts.insert(split, spec.n);
        for i in 0..spec.n {
            let item = plan_item(spec, i, &mut rng);
            let half = item.separation / 2.0;
            let gold_vec = gaussian(&mut rng, spec.d, half);
            let other_vec = if item.antithetic {
                gold_vec.iter().map(|v| -v).collect()
            } else {
                gaussian(&mut rng, spec.d, -half)
            };
            let offset: f64 = rng.random_range(-4.0..-0.5);

            let mut logprobs = [0.0; 2];
            logprobs[item.gold_index] = item.p_query_gold.ln() + offset;
            logprobs[1 - item.gold_index] = (1.0 - item.p_query_gold).ln() + offset;

            let mut pair = [gold_vec, other_vec];
            if item.gold_index == 1 {
                pair.swap(0, 1);
            }
            let row = vectors.len();
            for v in pair {
                vectors.push(v.into_iter().map(|x| x as f32).collect::<Vec<f32>>());
            }
            records.push(ExampleRecord {
                id: format!("{split}-{i:06}"),
                split,
                question: format!("synthetic {} item {i}", spec.regime),
                candidates: ["A".to_string(), "B".to_string()],
                gold_index: item.gold_index,
                query_logprobs: logprobs,
                hidden_rows: [row, row + 1],
            });
        }
    }

    let manifest = DumpManifest::new(
        format!("synthetic:{}", spec.regime),
        "synthetic",
        spec.d,
        spec.describe(),
        split_counts,
    );
    RepresentationDump::new(manifest, records, &vectors)
}

/// Closed-form Bayes posterior `p(correct | h)` for the generating Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesProbe {
    pub dim: usize,
    /// Weight on `h[0]`; every other coordinate has weight 0.
    pub weight: f64,
    pub bias: f64,
}

impl CorrectnessScorer for BayesProbe {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_correct(&self, h: &[f32]) -> Result<f64> {
        if h.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: h.len(),
            });
        }
        Ok(clamp_probability(sigmoid(
            self.weight * f64::from(h[0]) + self.bias,
        )))
    }
}

/// Log-odds of N(+m, I) against N(-m, I) with `m = s/2 e1` and equal priors
/// is `s * h[0]`. For the heterogeneity mixture this is the discriminant of
/// the probe-strong component.
pub fn bayes_probe(spec: &RegimeSpec) -> BayesProbe {
    BayesProbe {
        dim: spec.d,
        weight: spec.separation(),
        bias: 0.0,
    }
}
