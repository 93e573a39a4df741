//! Least-squares adversarial training of the recogniser against the
//! spell-checker on unpaired image and string streams, a supervised
//! cross-entropy mode for architecture sanity, restart management with
//! AUC-based selection, checkpointing and run logs.

pub mod runlog;

use crate::checkpoint;
use crate::evalkit::{self, ConfusionMatrix};
use crate::nets::{
    discriminator_forward, recognise, recogniser_forward, DiscriminatorConfig, Mode, ModelBundle,
    RecogniserConfig,
};
use crate::shard::{Shard, ShardError};
use crate::textcorpus::{
    encode, sample_real_batch, Corpus, CorpusError, CorpusKind, NormalizeMode,
};
use ndgrad::optim::RmsProp;
use ndgrad::{Graph, Scalar, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use runlog::RunLog;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("shard: {0}")]
    Shard(#[from] ShardError),
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error("run log: {0}")]
    RunLog(#[from] runlog::RunLogError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iter}: d_loss={d_loss}, g_loss={g_loss}")]
    Diverged { iter: u64, d_loss: f64, g_loss: f64 },
    #[error("all {0} restarts failed")]
    AllRunsFailed(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Adversarial,
    Supervised,
}

/// Everything one `train` invocation needs; flat so it maps 1:1 onto the
/// JSON config files and CLI overrides.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Directory holding `train/` and `test/` shards.
    pub dataset: PathBuf,
    /// Unpaired text source for the discriminator.
    pub corpus: PathBuf,
    pub corpus_kind: CorpusKind,
    /// Exact word length to keep (word corpora only).
    pub word_length: Option<usize>,
    pub mode: TrainMode,
    pub n: usize,
    pub batch: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Discriminator updates per recogniser update (>= 1).
    pub d_steps: u32,
    pub g_steps: u32,
    pub eval_interval: u64,
    /// Persist a checkpoint every this many iterations; 0 = final only.
    pub checkpoint_interval: u64,
    pub restarts: u32,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub skip_rnn: bool,
    /// Discriminator architecture overrides (real-book: 8 layers, kernel 11).
    pub disc_layers: Option<usize>,
    pub disc_kernel: Option<usize>,
    /// Restart-failure rule: abort a run whose best char accuracy is still
    /// below `abort_below_acc` at iteration `abort_at_iter`.
    pub abort_below_acc: Option<f64>,
    pub abort_at_iter: Option<u64>,
}

impl TrainConfig {
    pub fn new(dataset: PathBuf, corpus: PathBuf, n: usize) -> Self {
        TrainConfig {
            dataset,
            corpus,
            corpus_kind: CorpusKind::Words,
            word_length: None,
            mode: TrainMode::Adversarial,
            n,
            batch: 32,
            iterations: 60_000,
            seed: 0,
            d_steps: 1,
            g_steps: 1,
            eval_interval: 250,
            checkpoint_interval: 0,
            restarts: 8,
            lr: 0.001,
            decay: 0.9,
            eps: 1e-8,
            skip_rnn: false,
            disc_layers: None,
            disc_kernel: None,
            abort_below_acc: None,
            abort_at_iter: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch < 1 {
            return Err(TrainError::Config("batch must be >= 1".into()));
        }
        if self.iterations < 1 || self.restarts < 1 {
            return Err(TrainError::Config(
                "iterations and restarts must be positive".into(),
            ));
        }
        if self.g_steps != 1 || self.d_steps < 1 {
            return Err(TrainError::Config(
                "update ratio must be d:1 with d >= 1".into(),
            ));
        }
        if self.eval_interval < 1 {
            return Err(TrainError::Config("eval_interval must be >= 1".into()));
        }
        Ok(())
    }

    /// Independent seed for restart `run`.
    pub fn run_seed(&self, run: u32) -> u64 {
        self.seed ^ (run as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }
}

// ── losses ──────────────────────────────────────────────────────────────

/// Least-squares discrimination: `0.5 * (mean((real-1)^2) + mean(fake^2))`.
pub fn d_loss<T: Scalar>(g: &mut Graph<T>, real_scores: Var, fake_scores: Var) -> Var {
    let r = g.sub_scalar(real_scores, 1.0);
    let r = g.square(r);
    let r = g.mean_all(r);
    let f = g.square(fake_scores);
    let f = g.mean_all(f);
    let sum = g.add(r, f);
    g.mul_scalar(sum, 0.5)
}

/// Generator side: `0.5 * mean((fake-1)^2)`.
pub fn g_loss<T: Scalar>(g: &mut Graph<T>, fake_scores: Var) -> Var {
    let f = g.sub_scalar(fake_scores, 1.0);
    let f = g.square(f);
    let f = g.mean_all(f);
    g.mul_scalar(f, 0.5)
}

// ── phases ──────────────────────────────────────────────────────────────

/// One discriminator update: d_loss on real one-hots and detached fake
/// softmaxes; steps the discriminator and the character embeddings. The
/// recogniser's trainable parameters are untouched (its batch-norm running
/// moments do advance, as in any joint train-mode forward).
pub fn discriminator_phase<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    real_onehot: &Tensor<T>,
    opt_d: &mut RmsProp<T>,
) -> Result<f64, TrainError> {
    // detached fakes: train-mode statistics, no gradient tracking
    let fake = {
        let mut gf = Graph::new();
        let x = gf.constant(images.clone());
        let logits = recogniser_forward(&mut gf, bundle, x, Mode::Train, false);
        let probs = gf.softmax(logits, 1);
        gf.value(probs).clone()
    };
    let mut g = Graph::new();
    let real_var = g.constant(real_onehot.clone());
    let fake_var = g.constant(fake);
    let s_real = discriminator_forward(&mut g, bundle, real_var, true);
    let s_fake = discriminator_forward(&mut g, bundle, fake_var, true);
    let loss = d_loss(&mut g, s_real, s_fake);
    let value = g.value(loss).item().to_f64();
    if !value.is_finite() {
        return Err(TrainError::Diverged {
            iter: 0,
            d_loss: value,
            g_loss: f64::NAN,
        });
    }
    let ids = bundle.discriminator_params_with_embedding();
    bundle.store.zero_grads(&ids);
    g.backward(loss, &mut bundle.store);
    opt_d.step(&mut bundle.store, &ids);
    Ok(value)
}

/// One recogniser update: g_loss through softmax-normalized logits and the
/// (frozen) embeddings and discriminator; steps the recogniser only.
pub fn recogniser_phase<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    opt_g: &mut RmsProp<T>,
) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let x = g.constant(images.clone());
    let logits = recogniser_forward(&mut g, bundle, x, Mode::Train, true);
    let probs = g.softmax(logits, 1);
    let s_fake = discriminator_forward(&mut g, bundle, probs, false);
    let loss = g_loss(&mut g, s_fake);
    let value = g.value(loss).item().to_f64();
    if !value.is_finite() {
        return Err(TrainError::Diverged {
            iter: 0,
            d_loss: f64::NAN,
            g_loss: value,
        });
    }
    let ids = bundle.recogniser_params().to_vec();
    bundle.store.zero_grads(&ids);
    g.backward(loss, &mut bundle.store);
    opt_g.step(&mut bundle.store, &ids);
    Ok(value)
}

/// One adversarial step: a discriminator update on (real, detached fake)
/// followed by a recogniser update, RMSProp applied per phase, gradients
/// zeroed between phases.
pub fn train_step<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    real_onehot: &Tensor<T>,
    opt_d: &mut RmsProp<T>,
    opt_g: &mut RmsProp<T>,
) -> Result<(f64, f64), TrainError> {
    let d = discriminator_phase(bundle, images, real_onehot, opt_d)?;
    let g = recogniser_phase(bundle, images, opt_g)?;
    Ok((d, g))
}

/// Supervised cross-entropy step over aligned labels (null positions
/// included); updates the recogniser only.
pub fn supervised_step<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    labels: Vec<usize>,
    opt_g: &mut RmsProp<T>,
) -> Result<f64, TrainError> {
    let mut g = Graph::new();
    let x = g.constant(images.clone());
    let logits = recogniser_forward(&mut g, bundle, x, Mode::Train, true);
    let loss = g.cross_entropy(logits, labels);
    let value = g.value(loss).item().to_f64();
    if !value.is_finite() {
        return Err(TrainError::Diverged {
            iter: 0,
            d_loss: 0.0,
            g_loss: value,
        });
    }
    let ids = bundle.recogniser_params().to_vec();
    bundle.store.zero_grads(&ids);
    g.backward(loss, &mut bundle.store);
    opt_g.step(&mut bundle.store, &ids);
    Ok(value)
}

// ── evaluation ──────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub char_acc: f64,
    pub word_acc: f64,
    /// Position-wise accuracy per alphabet symbol; None when the symbol
    /// never occurs in the evaluated ground truth.
    pub per_char: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

/// Evaluate on a shard with per-position argmax decoding and null
/// stripping, in eval mode.
pub fn evaluate<T: Scalar>(
    bundle: &mut ModelBundle<T>,
    shard: &Shard,
    batch: usize,
) -> Result<Evaluation, TrainError> {
    let alphabet = bundle.alphabet.clone();
    let k = alphabet.len();
    let n = shard.manifest.n;
    let mut gt_texts: Vec<String> = Vec::with_capacity(shard.len());
    let mut pred_texts: Vec<String> = Vec::with_capacity(shard.len());
    let mut correct = vec![0u64; k];
    let mut total = vec![0u64; k];
    let mut confusion = ConfusionMatrix::new(k);

    let mut start = 0;
    while start < shard.len() {
        let end = (start + batch).min(shard.len());
        let indices: Vec<usize> = (start..end).collect();
        let images = shard.image_batch::<T>(&indices);
        let logits = recognise(bundle, &images);
        let data = logits.data();
        for (row, &idx) in indices.iter().enumerate() {
            let slice = &data[row * k * n..(row + 1) * k * n];
            let mut pred_idx = Vec::with_capacity(n);
            for pos in 0..n {
                let mut best = 0usize;
                for j in 1..k {
                    if slice[j * n + pos] > slice[best * n + pos] {
                        best = j;
                    }
                }
                pred_idx.push(best);
            }
            let gt = shard.label(idx).to_string();
            let gt_idx = encode(&gt, &alphabet, n).indices().to_vec();
            for (&g_i, &p_i) in gt_idx.iter().zip(&pred_idx) {
                total[g_i] += 1;
                if g_i == p_i {
                    correct[g_i] += 1;
                }
            }
            confusion
                .accumulate(&alphabet, &gt_idx, &pred_idx)
                .map_err(|e| TrainError::Config(e.to_string()))?;
            let mut pred = String::new();
            for &p in &pred_idx {
                if p == alphabet.null_index() {
                    break;
                }
                if let Some(c) = alphabet.char_of(p) {
                    pred.push(c);
                }
            }
            gt_texts.push(gt);
            pred_texts.push(pred);
        }
        start = end;
    }

    let gt_refs: Vec<&str> = gt_texts.iter().map(|s| s.as_str()).collect();
    let pred_refs: Vec<&str> = pred_texts.iter().map(|s| s.as_str()).collect();
    let report = evalkit::accuracy_report(&gt_refs, &pred_refs)
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let per_char = (0..k)
        .map(|c| {
            if total[c] == 0 {
                None
            } else {
                Some(correct[c] as f64 / total[c] as f64)
            }
        })
        .collect();
    Ok(Evaluation {
        char_acc: report.char_accuracy,
        word_acc: report.word_accuracy,
        per_char,
        confusion,
    })
}

// ── run orchestration ───────────────────────────────────────────────────

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: u32,
    pub seed: u64,
    pub auc: f64,
    pub final_char_acc: f64,
    pub final_word_acc: f64,
    pub failed: Option<String>,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub runs: Vec<RunSummary>,
    /// Index into `runs` of the best-AUC non-failed run.
    pub best: usize,
    pub best_dir: PathBuf,
}

fn bundle_for<T: Scalar>(
    cfg: &TrainConfig,
    shard: &Shard,
    run_seed: u64,
) -> ModelBundle<T> {
    let alphabet = shard.alphabet();
    let k = alphabet.len();
    let mut rec = if cfg.skip_rnn {
        RecogniserConfig::real_book(cfg.n, k, shard.manifest.channels)
    } else {
        RecogniserConfig::synthetic(cfg.n, k, shard.manifest.channels)
    };
    rec.channels = shard.manifest.channels;
    let mut disc = DiscriminatorConfig::synthetic(k, cfg.n);
    if let Some(l) = cfg.disc_layers {
        disc.layers = l;
    }
    if let Some(kk) = cfg.disc_kernel {
        disc.kernel = kk;
    }
    ModelBundle::new(rec, disc, alphabet, run_seed)
}

/// One restart: full training loop with periodic evaluation, checkpoints,
/// and a persisted run log. Deterministic given the run seed.
pub fn run_one<T: Scalar>(
    cfg: &TrainConfig,
    train_shard: &Shard,
    test_shard: &Shard,
    corpus: &Corpus,
    run: u32,
    run_dir: &Path,
) -> Result<RunSummary, TrainError> {
    let run_seed = cfg.run_seed(run);
    std::fs::create_dir_all(run_dir)?;
    std::fs::write(
        run_dir.join("config.json"),
        serde_json::to_vec_pretty(cfg).map_err(|e| TrainError::Config(e.to_string()))?,
    )?;
    let mut bundle: ModelBundle<T> = bundle_for(cfg, train_shard, run_seed);
    let alphabet = bundle.alphabet.clone();
    let mut opt_d = RmsProp::new(cfg.lr, cfg.decay, cfg.eps);
    let mut opt_g = RmsProp::new(cfg.lr, cfg.decay, cfg.eps);
    let mut image_rng = ChaCha12Rng::seed_from_u64(run_seed ^ 0x01ca_6e55);
    let mut string_rng = ChaCha12Rng::seed_from_u64(run_seed ^ 0x0057_2165);

    let mut log = RunLog::default();
    let mut best_acc = f64::NEG_INFINITY;
    let mut failed: Option<String> = None;

    for iter in 1..=cfg.iterations {
        let indices: Vec<usize> = (0..cfg.batch)
            .map(|_| image_rng.random_range(0..train_shard.len()))
            .collect();
        let images = train_shard.image_batch::<T>(&indices);

        let step = match cfg.mode {
            TrainMode::Adversarial => {
                let mut extra_err = None;
                for _ in 1..cfg.d_steps {
                    let extra_idx: Vec<usize> = (0..cfg.batch)
                        .map(|_| image_rng.random_range(0..train_shard.len()))
                        .collect();
                    let extra_images = train_shard.image_batch::<T>(&extra_idx);
                    let real =
                        sample_real_batch::<T>(corpus, &alphabet, cfg.n, cfg.batch, &mut string_rng);
                    if let Err(e) =
                        discriminator_phase(&mut bundle, &extra_images, &real, &mut opt_d)
                    {
                        extra_err = Some(e);
                        break;
                    }
                }
                match extra_err {
                    Some(e) => Err(e),
                    None => {
                        let real = sample_real_batch::<T>(
                            corpus,
                            &alphabet,
                            cfg.n,
                            cfg.batch,
                            &mut string_rng,
                        );
                        train_step(&mut bundle, &images, &real, &mut opt_d, &mut opt_g)
                    }
                }
            }
            TrainMode::Supervised => {
                let labels = train_shard.label_indices(&indices);
                supervised_step(&mut bundle, &images, labels, &mut opt_g).map(|l| (0.0, l))
            }
        };

        let (d, g) = match step {
            Ok(v) => v,
            Err(TrainError::Diverged { d_loss, g_loss, .. }) => {
                // diagnostic snapshot of the diverged state
                checkpoint::save(&bundle, &run_dir.join("diverged"))?;
                failed = Some(format!(
                    "diverged at iteration {iter} (d_loss={d_loss}, g_loss={g_loss})"
                ));
                break;
            }
            Err(e) => return Err(e),
        };

        if iter % cfg.eval_interval == 0 || iter == cfg.iterations {
            let eval = evaluate(&mut bundle, test_shard, 64)?;
            best_acc = best_acc.max(eval.char_acc);
            let tag = format!("it{iter}");
            if cfg.checkpoint_interval > 0 && iter % cfg.checkpoint_interval == 0 {
                checkpoint::save(&bundle, &run_dir.join("checkpoints").join(&tag))?;
            }
            log.push_eval(iter, d, g, eval.char_acc, eval.word_acc, tag, eval.per_char);
        } else {
            log.push_loss(iter, d, g);
        }

        if let (Some(th), Some(at)) = (cfg.abort_below_acc, cfg.abort_at_iter) {
            if iter >= at && best_acc < th {
                failed = Some(format!(
                    "no takeoff: best char accuracy {best_acc:.3} below {th} at iteration {iter}"
                ));
                break;
            }
        }
    }

    checkpoint::save(&bundle, &run_dir.join("final"))?;
    let final_eval = evaluate(&mut bundle, test_shard, 64)?;
    std::fs::write(
        run_dir.join("confusion.csv"),
        evalkit::confusion_csv(&final_eval.confusion, &alphabet),
    )?;
    log.write(run_dir, &alphabet)?;

    let (iters, accs) = log.accuracy_curve();
    let auc = if iters.len() >= 2 {
        evalkit::curve_auc(&iters, &accs).unwrap_or(0.0)
    } else {
        0.0
    };
    Ok(RunSummary {
        run,
        seed: run_seed,
        auc,
        final_char_acc: final_eval.char_acc,
        final_word_acc: final_eval.word_acc,
        failed,
        dir: run_dir.to_path_buf(),
    })
}

/// Number of parallel restart threads: `UNSPELL_THREADS` capped by the
/// machine, at least 1.
pub fn restart_threads(restarts: u32) -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("UNSPELL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(hw);
    cap.clamp(1, restarts as usize)
}

/// Execute `cfg.restarts` independent seeded runs (in parallel up to
/// `UNSPELL_THREADS`), evaluate each on the test shard, and mark the run
/// with the maximum AUC of its character-accuracy curve.
pub fn run_training<T: Scalar>(
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainingSummary, TrainError> {
    cfg.validate()?;
    let train_shard = Shard::open(&cfg.dataset.join("train"))?;
    let test_shard = Shard::open(&cfg.dataset.join("test"))?;
    if train_shard.manifest.n != cfg.n {
        return Err(TrainError::Config(format!(
            "dataset n={} does not match configured n={}",
            train_shard.manifest.n, cfg.n
        )));
    }
    if train_shard.manifest.normalize_mode != test_shard.manifest.normalize_mode {
        return Err(TrainError::Config(
            "train and test shards disagree on the alphabet".into(),
        ));
    }
    let mode = train_shard.manifest.normalize_mode;
    let corpus = Corpus::load(
        &cfg.corpus,
        cfg.corpus_kind,
        mode,
        cfg.word_length,
        Some(cfg.n),
    )?;
    if cfg.mode == TrainMode::Adversarial && mode == NormalizeMode::Synthetic {
        // every corpus entry must encode at n (guaranteed by loading rules)
        debug_assert!(corpus.entries.iter().all(|e| e.chars().count() <= cfg.n));
    }

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_vec_pretty(cfg).map_err(|e| TrainError::Config(e.to_string()))?,
    )?;

    let threads = restart_threads(cfg.restarts);
    let next = AtomicU32::new(0);
    let results: Mutex<Vec<Result<RunSummary, TrainError>>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let run = next.fetch_add(1, Ordering::SeqCst);
                if run >= cfg.restarts {
                    break;
                }
                let run_dir = out_dir.join(format!("run_{run}"));
                let res = run_one::<T>(cfg, &train_shard, &test_shard, &corpus, run, &run_dir);
                results.lock().unwrap().push(res);
            });
        }
    });

    let mut runs: Vec<RunSummary> = Vec::new();
    for r in results.into_inner().unwrap() {
        runs.push(r?);
    }
    runs.sort_by_key(|r| r.run);

    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.failed.is_none())
        .max_by(|(_, a), (_, b)| a.auc.partial_cmp(&b.auc).unwrap())
        .map(|(i, _)| i)
        .ok_or(TrainError::AllRunsFailed(cfg.restarts))?;

    let best_dir = out_dir.join("best");
    std::fs::create_dir_all(&best_dir)?;
    for f in ["manifest.json", "weights.bin"] {
        std::fs::copy(runs[best].dir.join("final").join(f), best_dir.join(f))?;
    }
    let summary = TrainingSummary {
        runs,
        best,
        best_dir,
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_vec_pretty(&summary).map_err(|e| TrainError::Config(e.to_string()))?,
    )?;
    Ok(summary)
}
