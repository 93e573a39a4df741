//! The recogniser (fully-convolutional, optional skip-RNN), the character
//! embedding matrix, and the spell-checker discriminator, plus receptive
//! field accounting for both stacks.

use crate::textcorpus::Alphabet;
use ndgrad::init::xavier_uniform;
use ndgrad::{Graph, PadMode, ParamId, ParamStore, PoolKind, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RecogniserConfig {
    pub n: usize,
    pub k: usize,
    pub channels: usize,
    pub blocks: usize,
    pub convs_per_block: usize,
    pub filters: usize,
    pub kernel: usize,
    pub leaky_slope: f64,
    pub feature_dim: usize,
    /// Hidden size of the residual skip-RNN, when enabled.
    pub skip_rnn: Option<usize>,
}

impl RecogniserConfig {
    /// Four blocks of two 3x3/32 convolutions each, as used for synthetic data.
    pub fn synthetic(n: usize, k: usize, channels: usize) -> Self {
        RecogniserConfig {
            n,
            k,
            channels,
            blocks: 4,
            convs_per_block: 2,
            filters: 32,
            kernel: 3,
            leaky_slope: 0.2,
            feature_dim: 32,
            skip_rnn: None,
        }
    }

    /// Synthetic stack plus the 256-unit residual skip-RNN.
    pub fn real_book(n: usize, k: usize, channels: usize) -> Self {
        let mut cfg = RecogniserConfig::synthetic(n, k, channels);
        cfg.skip_rnn = Some(256);
        cfg
    }

    pub fn validate(&self) {
        assert_eq!(
            self.feature_dim, self.filters,
            "feature_dim must equal the filter count"
        );
        assert_eq!(
            (self.n * 16) % (1 << self.blocks),
            0,
            "input width {} not divisible by 2^{}",
            self.n * 16,
            self.blocks
        );
        assert!(self.kernel % 2 == 1, "conv kernel must be odd");
    }

    pub fn input_width(&self) -> usize {
        self.n * 16
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiscriminatorConfig {
    pub k: usize,
    pub n: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub filters: usize,
    pub kernel: usize,
    pub leaky_slope: f64,
}

impl DiscriminatorConfig {
    /// Five 1-D layers of 512 size-5 filters (21-position receptive field).
    pub fn synthetic(k: usize, n: usize) -> Self {
        DiscriminatorConfig {
            k,
            n,
            embed_dim: 256,
            layers: 5,
            filters: 512,
            kernel: 5,
            leaky_slope: 0.2,
        }
    }

    /// Real-book variant: filter size 11, eight layers.
    pub fn real_book(k: usize, n: usize) -> Self {
        DiscriminatorConfig {
            kernel: 11,
            layers: 8,
            ..DiscriminatorConfig::synthetic(k, n)
        }
    }

    pub fn validate(&self) {
        assert!(self.kernel % 2 == 1, "discriminator kernel must be odd");
        assert!(self.layers >= 1, "discriminator needs at least one layer");
    }
}

/// One conv/pool stage, for receptive-field accounting.
#[derive(Clone, Copy, Debug)]
pub struct LayerSpec {
    pub kernel: usize,
    pub stride: usize,
}

/// Receptive field of the top of a stack (listed input-first) by the
/// standard backward recurrence `rf <- rf*s + (k - s)`, applied top-down.
pub fn receptive_field(stack: &[LayerSpec]) -> usize {
    let mut rf = 1usize;
    for l in stack.iter().rev() {
        rf = rf * l.stride + (l.kernel - l.stride);
    }
    rf
}

pub fn recogniser_stack(cfg: &RecogniserConfig) -> Vec<LayerSpec> {
    let mut stack = Vec::new();
    for _ in 0..cfg.blocks {
        for _ in 0..cfg.convs_per_block {
            stack.push(LayerSpec {
                kernel: cfg.kernel,
                stride: 1,
            });
        }
        stack.push(LayerSpec {
            kernel: 2,
            stride: 2,
        });
    }
    stack
}

pub fn discriminator_stack(cfg: &DiscriminatorConfig) -> Vec<LayerSpec> {
    vec![
        LayerSpec {
            kernel: cfg.kernel,
            stride: 1,
        };
        cfg.layers
    ]
}

/// Receptive field of the recogniser's prediction layer, in input pixels.
pub fn receptive_field_pixels(cfg: &RecogniserConfig) -> usize {
    receptive_field(&recogniser_stack(cfg))
}

/// Receptive field of the discriminator's projection layer, in positions.
pub fn receptive_field_positions(cfg: &DiscriminatorConfig) -> usize {
    receptive_field(&discriminator_stack(cfg))
}

/// Whether a forward pass tracks gradients and (for batch norm) uses batch
/// statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Recogniser, discriminator and embedding parameters with their configs.
pub struct ModelBundle<T: Scalar> {
    pub rec_cfg: RecogniserConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub alphabet: Alphabet,
    pub seed: u64,
    pub store: ParamStore<T>,
    rec_params: Vec<ParamId>,
    disc_params: Vec<ParamId>,
    embed_param: ParamId,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(
        rec_cfg: RecogniserConfig,
        disc_cfg: DiscriminatorConfig,
        alphabet: Alphabet,
        seed: u64,
    ) -> Self {
        rec_cfg.validate();
        disc_cfg.validate();
        assert_eq!(rec_cfg.k, alphabet.len(), "recogniser K must match alphabet");
        assert_eq!(disc_cfg.k, alphabet.len(), "discriminator K must match alphabet");
        assert_eq!(rec_cfg.n, disc_cfg.n, "recogniser and discriminator n differ");

        let mut store = ParamStore::new();
        let mut counter = 0u64;
        let mut init = |store: &mut ParamStore<T>, name: &str, shape: &[usize]| -> ParamId {
            counter += 1;
            store.add(name, xavier_uniform(shape, seed ^ counter.wrapping_mul(0x9e37_79b9)))
        };

        let mut rec_params = Vec::new();
        let mut c_in = rec_cfg.channels;
        for b in 0..rec_cfg.blocks {
            for c in 0..rec_cfg.convs_per_block {
                let w = init(
                    &mut store,
                    &format!("rec.b{b}.c{c}.w"),
                    &[rec_cfg.kernel, rec_cfg.kernel, c_in, rec_cfg.filters],
                );
                rec_params.push(w);
                let gamma = store.add(
                    &format!("rec.b{b}.n{c}.gamma"),
                    Tensor::full(vec![rec_cfg.filters], T::one()),
                );
                let beta = store.add(
                    &format!("rec.b{b}.n{c}.beta"),
                    Tensor::zeros(vec![rec_cfg.filters]),
                );
                rec_params.push(gamma);
                rec_params.push(beta);
                store.add_buffer(
                    &format!("rec.b{b}.n{c}.mean"),
                    Tensor::zeros(vec![rec_cfg.filters]),
                );
                store.add_buffer(
                    &format!("rec.b{b}.n{c}.var"),
                    Tensor::full(vec![rec_cfg.filters], T::one()),
                );
                c_in = rec_cfg.filters;
            }
        }
        if let Some(hidden) = rec_cfg.skip_rnn {
            for (name, shape) in [
                ("rec.skip.lstm.wih", vec![rec_cfg.feature_dim, 4 * hidden]),
                ("rec.skip.lstm.whh", vec![hidden, 4 * hidden]),
            ] {
                let id = init(&mut store, name, &shape);
                rec_params.push(id);
            }
            rec_params.push(store.add(
                "rec.skip.lstm.bias",
                Tensor::zeros(vec![4 * hidden]),
            ));
            let w = init(&mut store, "rec.skip.proj.w", &[hidden, rec_cfg.feature_dim]);
            rec_params.push(w);
            rec_params.push(store.add(
                "rec.skip.proj.b",
                Tensor::zeros(vec![rec_cfg.feature_dim]),
            ));
        }
        let w = init(&mut store, "rec.proj.w", &[rec_cfg.feature_dim, rec_cfg.k]);
        rec_params.push(w);
        rec_params.push(store.add("rec.proj.b", Tensor::zeros(vec![rec_cfg.k])));

        let embed_param = init(&mut store, "emb.w", &[disc_cfg.k, disc_cfg.embed_dim]);

        let mut disc_params = Vec::new();
        let mut c_in = disc_cfg.embed_dim;
        for l in 0..disc_cfg.layers {
            let w = init(
                &mut store,
                &format!("disc.l{l}.w"),
                &[disc_cfg.kernel, c_in, disc_cfg.filters],
            );
            disc_params.push(w);
            let gamma = store.add(
                &format!("disc.l{l}.gamma"),
                Tensor::full(vec![disc_cfg.filters], T::one()),
            );
            let beta = store.add(
                &format!("disc.l{l}.beta"),
                Tensor::zeros(vec![disc_cfg.filters]),
            );
            disc_params.push(gamma);
            disc_params.push(beta);
            c_in = disc_cfg.filters;
        }
        let w = init(&mut store, "disc.proj.w", &[disc_cfg.filters, 1]);
        disc_params.push(w);
        disc_params.push(store.add("disc.proj.b", Tensor::zeros(vec![1])));

        ModelBundle {
            rec_cfg,
            disc_cfg,
            alphabet,
            seed,
            store,
            rec_params,
            disc_params,
            embed_param,
        }
    }

    /// Parameters updated in the recogniser phase.
    pub fn recogniser_params(&self) -> &[ParamId] {
        &self.rec_params
    }

    /// Parameters updated in the discriminator phase (embedding included:
    /// it participates in the discriminator's update only).
    pub fn discriminator_params_with_embedding(&self) -> Vec<ParamId> {
        let mut ids = self.disc_params.clone();
        ids.push(self.embed_param);
        ids
    }

    pub fn embedding_param(&self) -> ParamId {
        self.embed_param
    }

    pub fn clone_bundle(&self) -> ModelBundle<T> {
        ModelBundle {
            rec_cfg: self.rec_cfg.clone(),
            disc_cfg: self.disc_cfg.clone(),
            alphabet: self.alphabet.clone(),
            seed: self.seed,
            store: self.store.clone_store(),
            rec_params: self.rec_params.clone(),
            disc_params: self.disc_params.clone(),
            embed_param: self.embed_param,
        }
    }

    fn tracked(&self, g: &mut Graph<T>, name: &str, track: bool) -> Var {
        let id = self.store.lookup(name).expect("parameter registered");
        if track {
            g.param(&self.store, id)
        } else {
            g.frozen_param(&self.store, id)
        }
    }
}

/// Forward pass of the recogniser: images `[B,32,n*16,C]` to logits
/// `[B,K,n]`. `mode` picks batch statistics (train, with running-moment
/// updates) or running moments (eval); `track` controls whether the
/// recogniser parameters receive gradients.
pub fn recogniser_forward<T: Scalar>(
    g: &mut Graph<T>,
    bundle: &mut ModelBundle<T>,
    images: Var,
    mode: Mode,
    track: bool,
) -> Var {
    let cfg = bundle.rec_cfg.clone();
    let shape = g.shape(images).to_vec();
    assert_eq!(
        shape[1..],
        [32, cfg.input_width(), cfg.channels],
        "image extents {:?} do not match config (32, {}, {})",
        shape,
        cfg.input_width(),
        cfg.channels
    );
    let mut x = images;
    for b in 0..cfg.blocks {
        for c in 0..cfg.convs_per_block {
            let w = bundle.tracked(g, &format!("rec.b{b}.c{c}.w"), track);
            x = g.conv2d(x, w, 1, PadMode::SameZero);
            let gamma = bundle.tracked(g, &format!("rec.b{b}.n{c}.gamma"), track);
            let beta = bundle.tracked(g, &format!("rec.b{b}.n{c}.beta"), track);
            let mean_id = bundle.store.lookup(&format!("rec.b{b}.n{c}.mean")).unwrap();
            let var_id = bundle.store.lookup(&format!("rec.b{b}.n{c}.var")).unwrap();
            let mut rm = bundle.store.value(mean_id).clone();
            let mut rv = bundle.store.value(var_id).clone();
            let train_stats = mode == Mode::Train;
            x = g.batch_norm(x, gamma, beta, &mut rm, &mut rv, BN_MOMENTUM, train_stats);
            if train_stats {
                *bundle.store.value_mut(mean_id) = rm;
                *bundle.store.value_mut(var_id) = rv;
            }
            x = g.leaky_relu(x, cfg.leaky_slope);
        }
        x = g.pool(x, PoolKind::Max2x2);
    }
    // features are now [B, 2, n, D]; collapse height
    x = g.pool(x, PoolKind::AvgOverHeight); // [B, n, D]
    if bundle.rec_cfg.skip_rnn.is_some() {
        x = skip_rnn(g, bundle, x, track);
    }
    let w = bundle.tracked(g, "rec.proj.w", track);
    let bias = bundle.tracked(g, "rec.proj.b", track);
    let logits_nk = g.linear(x, w, bias); // [B, n, K]
    g.permute_last2(logits_nk) // [B, K, n]
}

/// Residual skip-RNN over positional features `[B,n,D]`: a left-to-right
/// LSTM whose projected output is added back onto its input.
pub fn skip_rnn<T: Scalar>(
    g: &mut Graph<T>,
    bundle: &ModelBundle<T>,
    features: Var,
    track: bool,
) -> Var {
    assert!(
        bundle.rec_cfg.skip_rnn.is_some(),
        "skip-RNN not enabled in config"
    );
    let wih = bundle.tracked(g, "rec.skip.lstm.wih", track);
    let whh = bundle.tracked(g, "rec.skip.lstm.whh", track);
    let bias = bundle.tracked(g, "rec.skip.lstm.bias", track);
    let h = g.lstm_seq(features, wih, whh, bias);
    let pw = bundle.tracked(g, "rec.skip.proj.w", track);
    let pb = bundle.tracked(g, "rec.skip.proj.b", track);
    let residual = g.linear(h, pw, pb);
    g.add(features, residual)
}

/// Maximum tolerated deviation of discriminator input columns from the
/// simplex.
pub const SIMPLEX_TOL: f64 = 1e-4;

/// Forward pass of the spell-checker: strings `[B,K,n]` (one-hot or
/// softmax-normalized columns) to a scalar score per sample.
pub fn discriminator_forward<T: Scalar>(
    g: &mut Graph<T>,
    bundle: &ModelBundle<T>,
    strings: Var,
    track: bool,
) -> Var {
    let cfg = &bundle.disc_cfg;
    let shape = g.shape(strings).to_vec();
    assert_eq!(
        shape[1..],
        [cfg.k, cfg.n],
        "string tensor {shape:?} does not match K={} n={}",
        cfg.k,
        cfg.n
    );
    assert_columns_on_simplex(g.value(strings).data(), shape[0], cfg.k, cfg.n);

    let w_embed = bundle.tracked(g, "emb.w", track);
    let mut x = g.embed(strings, w_embed); // [B, n, d]
    for l in 0..cfg.layers {
        let w = bundle.tracked(g, &format!("disc.l{l}.w"), track);
        x = g.conv1d(x, w);
        let gamma = bundle.tracked(g, &format!("disc.l{l}.gamma"), track);
        let beta = bundle.tracked(g, &format!("disc.l{l}.beta"), track);
        x = g.layer_norm(x, gamma, beta);
        x = g.leaky_relu(x, cfg.leaky_slope);
    }
    let pw = bundle.tracked(g, "disc.proj.w", track);
    let pb = bundle.tracked(g, "disc.proj.b", track);
    let s = g.linear(x, pw, pb); // [B, n, 1]
    let pooled = g.pool(s, PoolKind::AvgOverLength); // [B, 1]
    let batch = shape[0];
    g.reshape(pooled, vec![batch])
}

fn assert_columns_on_simplex<T: Scalar>(data: &[T], batch: usize, k: usize, n: usize) {
    for s in 0..batch {
        for pos in 0..n {
            let mut sum = 0.0;
            let mut min = f64::INFINITY;
            for j in 0..k {
                let v = data[(s * k + j) * n + pos].to_f64();
                sum += v;
                min = min.min(v);
            }
            assert!(
                (sum - 1.0).abs() <= SIMPLEX_TOL && min >= -SIMPLEX_TOL,
                "discriminator input column (sample {s}, position {pos}) is off the simplex: sum={sum}, min={min}"
            );
        }
    }
}

/// Gradient-free recognition: images to logits on an eval-mode graph.
pub fn recognise<T: Scalar>(bundle: &mut ModelBundle<T>, images: &Tensor<T>) -> Tensor<T> {
    let mut g = Graph::new();
    let x = g.constant(images.clone());
    let logits = recogniser_forward(&mut g, bundle, x, Mode::Eval, false);
    g.value(logits).clone()
}
