//! Accuracy metrics and training-dynamics analyses: Levenshtein-based
//! character/word accuracy, position-wise confusion matrices, character
//! learning order, Spearman rank correlation, and curve AUC.

use crate::textcorpus::Alphabet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth and prediction lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sample {0}: empty ground-truth string")]
    EmptyGroundTruth(usize),
    #[error("need at least {0} data points")]
    TooFewPoints(usize),
}

/// Minimum insertions+deletions+substitutions (unit costs) transforming
/// `a` into `b`, over any token type comparable for equality.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

pub fn edit_distance_chars(a: &str, b: &str) -> usize {
    let av: Vec<char> = a.chars().collect();
    let bv: Vec<char> = b.chars().collect();
    edit_distance(&av, &bv)
}

pub fn edit_distance_words(a: &str, b: &str) -> usize {
    let av: Vec<&str> = a.split_whitespace().collect();
    let bv: Vec<&str> = b.split_whitespace().collect();
    edit_distance(&av, &bv)
}

/// Character and word accuracy over a list of samples.
#[derive(Clone, Debug)]
pub struct AccuracyReport {
    pub char_accuracy: f64,
    pub word_accuracy: f64,
    pub sample_count: usize,
    pub char_distances: Vec<usize>,
    pub word_distances: Vec<usize>,
}

/// `1 - (1/N) * sum EditDist(gt, pred) / Length(gt)` at character
/// granularity, and the same with whitespace-delimited word tokens
/// normalized by ground-truth word count. Not clamped at zero.
pub fn accuracy_report(gt: &[&str], pred: &[&str]) -> Result<AccuracyReport, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch(gt.len(), pred.len()));
    }
    let mut char_sum = 0.0;
    let mut word_sum = 0.0;
    let mut char_distances = Vec::with_capacity(gt.len());
    let mut word_distances = Vec::with_capacity(gt.len());
    for (i, (&g, &p)) in gt.iter().zip(pred).enumerate() {
        if g.is_empty() {
            return Err(EvalError::EmptyGroundTruth(i));
        }
        let cd = edit_distance_chars(g, p);
        char_sum += cd as f64 / g.chars().count() as f64;
        char_distances.push(cd);
        let wd = edit_distance_words(g, p);
        let gw = g.split_whitespace().count();
        word_sum += wd as f64 / gw as f64;
        word_distances.push(wd);
    }
    let n = gt.len() as f64;
    Ok(AccuracyReport {
        char_accuracy: 1.0 - char_sum / n,
        word_accuracy: 1.0 - word_sum / n,
        sample_count: gt.len(),
        char_distances,
        word_distances,
    })
}

pub fn char_accuracy(gt: &[&str], pred: &[&str]) -> Result<f64, EvalError> {
    accuracy_report(gt, pred).map(|r| r.char_accuracy)
}

pub fn word_accuracy(gt: &[&str], pred: &[&str]) -> Result<f64, EvalError> {
    accuracy_report(gt, pred).map(|r| r.word_accuracy)
}

/// K x K counts, rows ground truth, columns prediction, accumulated
/// position-wise over fixed-length encoded pairs. Positions where both
/// sides are the null symbol are excluded.
#[derive(Clone, Debug)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn at(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    pub fn row_sum(&self, gt: usize) -> u64 {
        self.counts[gt * self.k..(gt + 1) * self.k].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.at(i, i)).sum()
    }

    /// trace/total: position-wise accuracy over the accumulated pairs.
    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.trace() as f64 / t as f64
        }
    }

    pub fn accumulate(
        &mut self,
        alphabet: &Alphabet,
        gt: &[usize],
        pred: &[usize],
    ) -> Result<(), EvalError> {
        if gt.len() != pred.len() {
            return Err(EvalError::LengthMismatch(gt.len(), pred.len()));
        }
        let null = alphabet.null_index();
        for (&g, &p) in gt.iter().zip(pred) {
            if g == null && p == null {
                continue;
            }
            self.counts[g * self.k + p] += 1;
        }
        Ok(())
    }
}

pub fn confusion(
    alphabet: &Alphabet,
    gt: &[Vec<usize>],
    pred: &[Vec<usize>],
) -> Result<ConfusionMatrix, EvalError> {
    if gt.len() != pred.len() {
        return Err(EvalError::LengthMismatch(gt.len(), pred.len()));
    }
    let mut m = ConfusionMatrix::new(alphabet.len());
    for (g, p) in gt.iter().zip(pred) {
        m.accumulate(alphabet, g, p)?;
    }
    Ok(m)
}

/// Confusion matrix as CSV with alphabet-ordered headers; rows are ground
/// truth, columns predictions.
pub fn confusion_csv(m: &ConfusionMatrix, alphabet: &Alphabet) -> String {
    assert_eq!(m.k, alphabet.len());
    let mut out = String::from("gt\\pred");
    for j in 0..m.k {
        out.push(',');
        out.push_str(alphabet.symbol_token(j));
    }
    out.push('\n');
    for i in 0..m.k {
        out.push_str(alphabet.symbol_token(i));
        for j in 0..m.k {
            out.push(',');
            out.push_str(&m.at(i, j).to_string());
        }
        out.push('\n');
    }
    out
}

/// Per-character learning order: the first eval iteration at which each
/// character's accuracy reaches 50%, with never-crossing characters
/// flagged unlearned and excluded from ranks.
#[derive(Clone, Debug)]
pub struct LearningOrderRecord {
    /// Crossing iteration per character, `None` if never learned.
    pub crossing_iter: Vec<Option<u64>>,
    /// Rank per character (0 = learnt first), `None` for unlearned.
    pub rank: Vec<Option<usize>>,
}

/// `curves[c]` holds (iteration, accuracy) samples for character `c`,
/// all sampled at shared eval iterations.
pub fn learning_order(curves: &[Vec<(u64, f64)>]) -> Result<LearningOrderRecord, EvalError> {
    if curves.is_empty() {
        return Err(EvalError::TooFewPoints(1));
    }
    let crossing_iter: Vec<Option<u64>> = curves
        .iter()
        .map(|c| c.iter().find(|(_, acc)| *acc >= 0.5).map(|(it, _)| *it))
        .collect();
    // rank learned characters by crossing iteration, ties by character index
    let mut learned: Vec<(u64, usize)> = crossing_iter
        .iter()
        .enumerate()
        .filter_map(|(c, it)| it.map(|i| (i, c)))
        .collect();
    learned.sort();
    let mut rank = vec![None; curves.len()];
    for (r, &(_, c)) in learned.iter().enumerate() {
        rank[c] = Some(r);
    }
    Ok(LearningOrderRecord {
        crossing_iter,
        rank,
    })
}

/// Average ranks with ties shared (1-based, as in the standard definition).
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation between two score vectors over the same items.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewPoints(2));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    let denom = (va * vb).sqrt();
    if denom == 0.0 {
        return Err(EvalError::TooFewPoints(2));
    }
    Ok(cov / denom)
}

/// Trapezoidal area under a curve sampled at strictly increasing iterations.
pub fn curve_auc(iterations: &[u64], values: &[f64]) -> Result<f64, EvalError> {
    if iterations.len() != values.len() {
        return Err(EvalError::LengthMismatch(iterations.len(), values.len()));
    }
    if iterations.len() < 2 {
        return Err(EvalError::TooFewPoints(2));
    }
    assert!(
        iterations.windows(2).all(|w| w[0] < w[1]),
        "iterations must be strictly increasing"
    );
    let mut area = 0.0;
    for i in 1..iterations.len() {
        let dt = (iterations[i] - iterations[i - 1]) as f64;
        area += 0.5 * (values[i] + values[i - 1]) * dt;
    }
    Ok(area)
}
