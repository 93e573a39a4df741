//! Per-run training log and its CSV persistence.
//!
//! `runlog.csv` columns: iter,d_loss,g_loss,char_acc,word_acc,checkpoint —
//! the last three filled only on eval rows. `per_char.csv` holds one column
//! per alphabet symbol, one row per eval.

use crate::textcorpus::Alphabet;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed run log: line {0}: {1}")]
    Malformed(usize, String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalEntry {
    pub char_acc: f64,
    pub word_acc: f64,
    /// Identifier of the model state measured (directory name under
    /// `checkpoints/` when one was persisted at this iteration).
    pub checkpoint: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iter: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub eval: Option<EvalEntry>,
}

/// Losses per iteration, accuracy per eval, and per-character accuracy
/// curves, for one training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    /// Eval iterations, shared by all per-character curves.
    pub eval_iters: Vec<u64>,
    /// `per_char[e][c]` = accuracy of symbol `c` at eval `e`; None when the
    /// symbol never occurs in the eval ground truth.
    pub per_char: Vec<Vec<Option<f64>>>,
}

impl RunLog {
    pub fn push_loss(&mut self, iter: u64, d_loss: f64, g_loss: f64) {
        self.assert_increasing(iter);
        self.rows.push(LogRow {
            iter,
            d_loss,
            g_loss,
            eval: None,
        });
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push_eval(
        &mut self,
        iter: u64,
        d_loss: f64,
        g_loss: f64,
        char_acc: f64,
        word_acc: f64,
        checkpoint: String,
        per_char: Vec<Option<f64>>,
    ) {
        self.assert_increasing(iter);
        self.rows.push(LogRow {
            iter,
            d_loss,
            g_loss,
            eval: Some(EvalEntry {
                char_acc,
                word_acc,
                checkpoint,
            }),
        });
        self.eval_iters.push(iter);
        self.per_char.push(per_char);
    }

    fn assert_increasing(&self, iter: u64) {
        if let Some(last) = self.rows.last() {
            assert!(last.iter < iter, "iteration indices must strictly increase");
        }
    }

    /// (iterations, char accuracy) eval curve.
    pub fn accuracy_curve(&self) -> (Vec<u64>, Vec<f64>) {
        let mut iters = Vec::new();
        let mut vals = Vec::new();
        for r in &self.rows {
            if let Some(e) = &r.eval {
                iters.push(r.iter);
                vals.push(e.char_acc);
            }
        }
        (iters, vals)
    }

    /// Per-character curves keyed like [`crate::evalkit::learning_order`]
    /// expects: `curves[c]` = (iter, acc) samples where the symbol occurred.
    pub fn per_char_curves(&self, k: usize) -> Vec<Vec<(u64, f64)>> {
        let mut curves = vec![Vec::new(); k];
        for (e, &iter) in self.eval_iters.iter().enumerate() {
            for (c, acc) in self.per_char[e].iter().enumerate() {
                if let Some(a) = acc {
                    curves[c].push((iter, *a));
                }
            }
        }
        curves
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,d_loss,g_loss,char_acc,word_acc,checkpoint\n");
        for r in &self.rows {
            match &r.eval {
                Some(e) => writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.iter, r.d_loss, r.g_loss, e.char_acc, e.word_acc, e.checkpoint
                )
                .unwrap(),
                None => writeln!(out, "{},{},{},,,", r.iter, r.d_loss, r.g_loss).unwrap(),
            }
        }
        out
    }

    pub fn per_char_csv(&self, alphabet: &Alphabet) -> String {
        let mut out = String::from("iter");
        for c in 0..alphabet.len() {
            out.push(',');
            out.push_str(alphabet.symbol_token(c));
        }
        out.push('\n');
        for (e, &iter) in self.eval_iters.iter().enumerate() {
            out.push_str(&iter.to_string());
            for acc in &self.per_char[e] {
                out.push(',');
                if let Some(a) = acc {
                    write!(out, "{a}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path, alphabet: &Alphabet) -> Result<(), RunLogError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("runlog.csv"), self.to_csv())?;
        std::fs::write(dir.join("per_char.csv"), self.per_char_csv(alphabet))?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<RunLog, RunLogError> {
        let mut log = RunLog::default();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line != "iter,d_loss,g_loss,char_acc,word_acc,checkpoint" {
                    return Err(RunLogError::Malformed(1, "unexpected header".into()));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(RunLogError::Malformed(i + 1, "expected 6 fields".into()));
            }
            let parse_f = |s: &str, what: &str| -> Result<f64, RunLogError> {
                s.parse()
                    .map_err(|_| RunLogError::Malformed(i + 1, format!("bad {what}: {s:?}")))
            };
            let iter: u64 = fields[0]
                .parse()
                .map_err(|_| RunLogError::Malformed(i + 1, "bad iter".into()))?;
            if log.rows.last().is_some_and(|r| r.iter >= iter) {
                return Err(RunLogError::Malformed(
                    i + 1,
                    "iterations must strictly increase".into(),
                ));
            }
            let d_loss = parse_f(fields[1], "d_loss")?;
            let g_loss = parse_f(fields[2], "g_loss")?;
            let eval = if fields[3].is_empty() {
                None
            } else {
                Some(EvalEntry {
                    char_acc: parse_f(fields[3], "char_acc")?,
                    word_acc: parse_f(fields[4], "word_acc")?,
                    checkpoint: fields[5].to_string(),
                })
            };
            if let Some(e) = &eval {
                log.eval_iters.push(iter);
                let _ = e;
            }
            log.rows.push(LogRow {
                iter,
                d_loss,
                g_loss,
                eval,
            });
        }
        Ok(log)
    }

    pub fn read(dir: &Path) -> Result<RunLog, RunLogError> {
        let text = std::fs::read_to_string(dir.join("runlog.csv"))?;
        let mut log = RunLog::parse_csv(&text)?;
        // per-char curves are optional companions
        if let Ok(pc) = std::fs::read_to_string(dir.join("per_char.csv")) {
            log.load_per_char(&pc)?;
        }
        Ok(log)
    }

    pub fn load_per_char(&mut self, text: &str) -> Result<(), RunLogError> {
        self.per_char.clear();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let mut row = Vec::with_capacity(fields.len() - 1);
            for f in &fields[1..] {
                if f.is_empty() {
                    row.push(None);
                } else {
                    row.push(Some(f.parse().map_err(|_| {
                        RunLogError::Malformed(i + 1, format!("bad accuracy {f:?}"))
                    })?));
                }
            }
            self.per_char.push(row);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips() {
        let mut log = RunLog::default();
        log.push_loss(1, 0.5, 0.25);
        log.push_loss(2, 0.4375, 0.21875);
        log.push_eval(
            5,
            0.4,
            0.2,
            0.875,
            0.5,
            "it5".into(),
            vec![Some(1.0), None, Some(0.25)],
        );
        let parsed = RunLog::parse_csv(&log.to_csv()).unwrap();
        assert_eq!(parsed.rows, log.rows);
        assert_eq!(parsed.eval_iters, vec![5]);
    }

    #[test]
    #[should_panic(expected = "strictly increase")]
    fn iterations_must_increase() {
        let mut log = RunLog::default();
        log.push_loss(3, 0.1, 0.1);
        log.push_loss(3, 0.1, 0.1);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(RunLog::parse_csv("not,a,log\n").is_err());
        let bad = "iter,d_loss,g_loss,char_acc,word_acc,checkpoint\n5,x,0,,,\n";
        assert!(RunLog::parse_csv(bad).is_err());
    }

    #[test]
    fn per_char_curves_skip_missing_symbols() {
        let mut log = RunLog::default();
        log.push_eval(10, 0.5, 0.5, 0.2, 0.0, "it10".into(), vec![Some(0.1), None]);
        log.push_eval(20, 0.4, 0.4, 0.6, 0.2, "it20".into(), vec![Some(0.7), None]);
        let curves = log.per_char_curves(2);
        assert_eq!(curves[0], vec![(10, 0.1), (20, 0.7)]);
        assert!(curves[1].is_empty());
    }
}
