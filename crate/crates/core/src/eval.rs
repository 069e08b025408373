// SPDX-License-Identifier: Apache-2.0

//! Answer distributions, accuracy, entropy and calibration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dump::{RepresentationDump, Split};
use crate::error::{Error, Result};
use crate::probe::CorrectnessScorer;

pub const DEFAULT_CALIBRATION_BINS: usize = 10;

/// Softmax over the two raw candidate log-probabilities.
pub fn normalize_query(logprobs: [f64; 2]) -> Result<[f64; 2]> {
    if logprobs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "query log-probabilities must be finite, got {logprobs:?}"
        )));
    }
    let top = logprobs[0].max(logprobs[1]);
    let e0 = (logprobs[0] - top).exp();
    let e1 = (logprobs[1] - top).exp();
    let total = e0 + e1;
    Ok([e0 / total, e1 / total])
}

/// Renormalize per-candidate `p(correct)` into a distribution over answers.
pub fn normalize_probe(p_correct_a0: f64, p_correct_a1: f64) -> Result<[f64; 2]> {
    let valid = |p: f64| (0.0..=1.0).contains(&p);
    if !valid(p_correct_a0) || !valid(p_correct_a1) {
        return Err(Error::invalid(format!(
            "probe probabilities must lie in [0, 1], got ({p_correct_a0}, {p_correct_a1})"
        )));
    }
    let total = p_correct_a0 + p_correct_a1;
    if total == 0.0 {
        return Err(Error::invalid("both probe probabilities are zero"));
    }
    Ok([p_correct_a0 / total, p_correct_a1 / total])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Probe,
    Query,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Probe => "probe",
            Source::Query => "query",
        })
    }
}

/// Normalized gold-answer probability from each source. A source is correct
/// only if it puts strictly more than half its mass on the gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub example_id: String,
    pub p_probe_gold: f64,
    pub p_query_gold: f64,
    pub probe_correct: bool,
    pub query_correct: bool,
}

impl PredictionPair {
    pub fn new(example_id: impl Into<String>, p_probe_gold: f64, p_query_gold: f64) -> Self {
        PredictionPair {
            example_id: example_id.into(),
            p_probe_gold,
            p_query_gold,
            probe_correct: p_probe_gold > 0.5,
            query_correct: p_query_gold > 0.5,
        }
    }

    pub fn gold_probability(&self, source: Source) -> f64 {
        match source {
            Source::Probe => self.p_probe_gold,
            Source::Query => self.p_query_gold,
        }
    }

    pub fn is_correct(&self, source: Source) -> bool {
        match source {
            Source::Probe => self.probe_correct,
            Source::Query => self.query_correct,
        }
    }

    /// Probability the source assigns to the answer it picks.
    pub fn confidence(&self, source: Source) -> f64 {
        let p = self.gold_probability(source);
        p.max(1.0 - p)
    }
}

/// One [`PredictionPair`] per example of `split`, in canonical order.
pub fn pair_predictions<S: CorrectnessScorer + ?Sized>(
    dump: &RepresentationDump,
    scorer: &S,
    split: Split,
) -> Result<Vec<PredictionPair>> {
    if scorer.dim() != dump.hidden_dim() {
        return Err(Error::DimensionMismatch {
            expected: dump.hidden_dim(),
            found: scorer.dim(),
        });
    }
    let pairs = dump
        .examples(split)
        .map(|record| {
            let gold = record.gold_index;
            let p0 = scorer.predict_correct(dump.candidate_vector(record, 0))?;
            let p1 = scorer.predict_correct(dump.candidate_vector(record, 1))?;
            let probe = normalize_probe(p0, p1)?;
            let query = normalize_query(record.query_logprobs)?;
            Ok(PredictionPair::new(
                record.id.clone(),
                probe[gold],
                query[gold],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    Ok(pairs)
}

pub fn accuracy(pairs: &[PredictionPair], source: Source) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty);
    }
    let hits = pairs.iter().filter(|p| p.is_correct(source)).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn probe_entropy(p_correct: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_correct) {
        return Err(Error::invalid(format!(
            "entropy needs a probability in [0, 1], got {p_correct}"
        )));
    }
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    Ok(term(p_correct) + term(1.0 - p_correct))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    /// `None` for an empty bin.
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub source: Source,
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
}

impl CalibrationReport {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// CSV rows `lower,upper,mean_confidence,empirical_accuracy,count`;
    /// empty bins leave the two mean columns blank.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "lower",
            "upper",
            "mean_confidence",
            "empirical_accuracy",
            "count",
        ])
        .map_err(|e| Error::csv("calibration", e))?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            w.write_record([
                b.lower.to_string(),
                b.upper.to_string(),
                opt(b.mean_confidence),
                opt(b.empirical_accuracy),
                b.count.to_string(),
            ])
            .map_err(|e| Error::csv("calibration", e))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(source: Source, text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut bins = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::csv("calibration", e))?;
            let num = |i: usize| -> Result<f64> {
                row.get(i)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad calibration field {i} in {row:?}")))
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                match row.get(i).unwrap_or("") {
                    "" => Ok(None),
                    _ => num(i).map(Some),
                }
            };
            bins.push(CalibrationBin {
                lower: num(0)?,
                upper: num(1)?,
                mean_confidence: opt(2)?,
                empirical_accuracy: opt(3)?,
                count: row
                    .get(4)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad calibration count in {row:?}")))?,
            });
        }
        let ece = ece_from_bins(&bins);
        Ok(CalibrationReport { source, bins, ece })
    }
}

/// `sum_k (count_k / total) * |mean_confidence_k - accuracy_k|`.
pub fn ece_from_bins(bins: &[CalibrationBin]) -> f64 {
    let total: usize = bins.iter().map(|b| b.count).sum();
    if total == 0 {
        return 0.0;
    }
    bins.iter()
        .filter_map(|b| {
            let conf = b.mean_confidence?;
            let acc = b.empirical_accuracy?;
            Some(b.count as f64 / total as f64 * (conf - acc).abs())
        })
        .sum()
}

/// Lower edge of bin `k` of `num_bins` equal-width bins over `[lo, hi]`.
pub(crate) fn bin_edge(lo: f64, hi: f64, k: usize, num_bins: usize) -> f64 {
    if k == num_bins {
        hi
    } else {
        lo + (hi - lo) * k as f64 / num_bins as f64
    }
}

/// Index of the bin holding `v`: lower-inclusive, last bin closed on the
/// right, values outside `[lo, hi]` go to the nearest end bin.
pub(crate) fn bin_index(v: f64, lo: f64, hi: f64, num_bins: usize) -> usize {
    let guess = ((v - lo) / (hi - lo) * num_bins as f64).floor();
    let mut k = if guess.is_nan() || guess < 0.0 {
        0
    } else {
        (guess as usize).min(num_bins - 1)
    };
    // Repair floating-point disagreements with the edges themselves.
    while k > 0 && v < bin_edge(lo, hi, k, num_bins) {
        k -= 1;
    }
    while k + 1 < num_bins && v >= bin_edge(lo, hi, k + 1, num_bins) {
        k += 1;
    }
    k
}

/// Reliability bins over confidence in `[0.5, 1]`.
pub fn calibration(
    pairs: &[PredictionPair],
    source: Source,
    num_bins: usize,
) -> Result<CalibrationReport> {
    if num_bins < 1 {
        return Err(Error::invalid("calibration needs at least one bin"));
    }
    if pairs.is_empty() {
        return Err(Error::Empty);
    }
    let mut conf_sum = vec![0.0; num_bins];
    let mut hits = vec![0usize; num_bins];
    let mut counts = vec![0usize; num_bins];
    for pair in pairs {
        let c = pair.confidence(source);
        let k = bin_index(c, 0.5, 1.0, num_bins);
        conf_sum[k] += c;
        counts[k] += 1;
        hits[k] += usize::from(pair.is_correct(source));
    }
    let bins: Vec<CalibrationBin> = (0..num_bins)
        .map(|k| {
            let n = counts[k];
            let mean = |x: f64| (n > 0).then(|| x / n as f64);
            CalibrationBin {
                lower: bin_edge(0.5, 1.0, k, num_bins),
                upper: bin_edge(0.5, 1.0, k + 1, num_bins),
                mean_confidence: mean(conf_sum[k]),
                empirical_accuracy: mean(hits[k] as f64),
                count: n,
            }
        })
        .collect();
    let ece = ece_from_bins(&bins);
    Ok(CalibrationReport { source, bins, ece })
}
