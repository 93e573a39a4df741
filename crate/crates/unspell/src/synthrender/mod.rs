//! Deterministic synthetic text-line image generation in the style of old
//! printed documents: fixed-pitch glyphs over noisy backgrounds with a
//! clustered colour model, plus the recogniser's exact input sizing rule.

pub mod background;
pub mod glyphs;

use crate::textcorpus::{encode, normalize, Alphabet, Corpus, NormalizeMode};
use background::{build_colour_model, luminance, procedural_background, ColourPalette};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Recogniser input height is fixed.
pub const RECOG_HEIGHT: usize = 32;
/// Width budget per predicted position.
pub const PX_PER_POSITION: usize = 16;

/// H x W x C image with values in [0,1], row-major (row, column, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct TextImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl TextImage {
    pub fn solid(height: usize, width: usize, channels: usize, value: f64) -> Self {
        TextImage {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn px(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn px_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn mean_per_channel(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (m, v) in mean.iter_mut().zip(px) {
                *m += v;
            }
        }
        let n = (self.height * self.width) as f64;
        mean.iter().map(|m| m / n).collect()
    }

    /// Quantize to unsigned 8-bit, row-major (row, column, channel).
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), height * width * channels);
        TextImage {
            height,
            width,
            channels,
            data: bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }
}

/// Aspect-preserving rescale to height 32 with width capped at `n*16`,
/// then right-padding with the per-channel mean of the rescaled image.
pub fn size_and_pad(image: &TextImage, n: usize) -> TextImage {
    assert!(image.height >= 1 && image.width >= 1);
    let cap = n * PX_PER_POSITION;
    let aspect_w = (image.width * RECOG_HEIGHT).div_ceil(image.height);
    let target_w = aspect_w.min(cap);

    let rescaled = if image.height == RECOG_HEIGHT && image.width == target_w {
        image.clone()
    } else {
        bilinear_resize(image, RECOG_HEIGHT, target_w)
    };
    if target_w == cap {
        return rescaled;
    }
    let mean = rescaled.mean_per_channel();
    let mut out = TextImage::solid(RECOG_HEIGHT, cap, image.channels, 0.0);
    for y in 0..RECOG_HEIGHT {
        for x in 0..cap {
            let dst = out.px_mut(y, x);
            if x < target_w {
                dst.copy_from_slice(rescaled.px(y, x));
            } else {
                dst.copy_from_slice(&mean);
            }
        }
    }
    out
}

fn bilinear_resize(image: &TextImage, out_h: usize, out_w: usize) -> TextImage {
    let mut out = TextImage::solid(out_h, out_w, image.channels, 0.0);
    let sy_scale = image.height as f64 / out_h as f64;
    let sx_scale = image.width as f64 / out_w as f64;
    for y in 0..out_h {
        let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, image.height as f64 - 1.0);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(image.height - 1);
        let fy = sy - y0 as f64;
        for x in 0..out_w {
            let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, image.width as f64 - 1.0);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(image.width - 1);
            let fx = sx - x0 as f64;
            for c in 0..image.channels {
                let v00 = image.px(y0, x0)[c];
                let v01 = image.px(y0, x1)[c];
                let v10 = image.px(y1, x0)[c];
                let v11 = image.px(y1, x1)[c];
                let top = v00 * (1.0 - fx) + v01 * fx;
                let bot = v10 * (1.0 - fx) + v11 * fx;
                out.px_mut(y, x)[c] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// How a sample's background is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Background {
    /// Built-in paper simulation with the given grain amplitude.
    Procedural { grain: f64 },
    /// Index into a user-supplied background pool.
    Patch(usize),
    /// Uniform colour (clean renders).
    Solid(Vec<f64>),
}

/// Style of one rendered line. Pitch is constant across the line
/// (fixed-width); the font colour must clear the background's mean
/// intensity by a minimum contrast margin.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderStyle {
    pub pitch: usize,
    pub glyph_height: usize,
    pub colour: Vec<f64>,
    pub background: Background,
    pub noise_sigma: f64,
    /// Max absolute per-character offset, both axes, in pixels.
    pub jitter: usize,
}

pub const MIN_CONTRAST: f64 = 0.15;

/// A rendered sample: the image, its ground truth, and the seed of the
/// per-sample RNG stream that produced it.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub image: TextImage,
    pub text: String,
    pub style_seed: u64,
}

/// Knobs of the synthetic generator, echoed into dataset manifests.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GeneratorConfig {
    pub channels: usize,
    pub pitch: usize,
    pub glyph_height: usize,
    pub jitter: usize,
    pub noise_sigma: f64,
    pub grain: f64,
    pub palette_k: usize,
    /// White background, black glyphs, zero noise and jitter.
    pub clean: bool,
}

impl GeneratorConfig {
    /// Aged-paper defaults: RGB, nominal pitch aligned to one output
    /// position, k-means font colours.
    pub fn default_noisy() -> Self {
        GeneratorConfig {
            channels: 3,
            pitch: PX_PER_POSITION,
            glyph_height: 22,
            jitter: 1,
            noise_sigma: 0.03,
            grain: 0.02,
            palette_k: 4,
            clean: false,
        }
    }

    /// Clean grayscale render for supervised sanity checks.
    pub fn clean_gray() -> Self {
        GeneratorConfig {
            channels: 1,
            pitch: PX_PER_POSITION,
            glyph_height: 22,
            jitter: 0,
            noise_sigma: 0.0,
            grain: 0.0,
            palette_k: 2,
            clean: true,
        }
    }

    /// Low-noise grayscale render used by the reduced-scale adversarial run.
    pub fn low_noise_gray() -> Self {
        GeneratorConfig {
            channels: 1,
            pitch: PX_PER_POSITION,
            glyph_height: 22,
            jitter: 1,
            noise_sigma: 0.005,
            grain: 0.004,
            palette_k: 2,
            clean: false,
        }
    }

    /// Wide-pitch variant: rendered characters span about 30 px, so text
    /// occupies fewer than `n` positions.
    pub fn wide_pitch(mut self) -> Self {
        self.pitch = 30;
        self
    }
}

/// Draw a style for one sample: background choice, font colour from the
/// palette's low-luminance clusters with the contrast margin enforced.
pub fn sample_style(
    cfg: &GeneratorConfig,
    palette: &ColourPalette,
    rng: &mut dyn RngCore,
) -> RenderStyle {
    if cfg.clean {
        return RenderStyle {
            pitch: cfg.pitch,
            glyph_height: cfg.glyph_height,
            colour: vec![0.0; cfg.channels],
            background: Background::Solid(vec![1.0; cfg.channels]),
            noise_sigma: 0.0,
            jitter: 0,
        };
    }
    // the procedural paper tone averages at least ~0.62 after blotches;
    // keep ink at or below 0.45 so the contrast margin always clears
    const MAX_INK_LUM: f64 = 0.45;
    let dark: Vec<&Vec<f64>> = palette
        .centroids
        .iter()
        .filter(|c| luminance(c) <= MAX_INK_LUM)
        .collect();
    let mut colour = if dark.is_empty() {
        palette.centroids[0].clone() // darkest available
    } else {
        dark[rng.random_range(0..dark.len())].clone()
    };
    // enforce the margin by darkening if the palette is too light
    while luminance(&colour) > MAX_INK_LUM {
        for c in colour.iter_mut() {
            *c *= 0.8;
        }
    }
    RenderStyle {
        pitch: cfg.pitch,
        glyph_height: cfg.glyph_height,
        colour,
        background: Background::Procedural { grain: cfg.grain },
        noise_sigma: cfg.noise_sigma,
        jitter: cfg.jitter,
    }
}

/// Pool of images font colours are clustered from; procedural fallback
/// when no user pool is supplied.
pub fn default_background_pool(cfg: &GeneratorConfig, seed: u64) -> Vec<TextImage> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xba5e_b00c);
    let mut pool = Vec::with_capacity(8);
    for _ in 0..8 {
        pool.push(procedural_background(
            RECOG_HEIGHT,
            8 * PX_PER_POSITION,
            cfg.channels,
            cfg.grain,
            &mut rng,
        ));
    }
    // ink tones so the colour model has low-luminance clusters to offer
    for shade in [0.05, 0.15, 0.25] {
        pool.push(TextImage::solid(8, 8, cfg.channels, shade));
    }
    pool
}

fn gaussian(rng: &mut dyn RngCore) -> f64 {
    // Box-Muller; u1 in (0,1]
    let u1: f64 = 1.0 - rng.random_range(0.0..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Render one text line. Deterministic given (text, style, seed); glyphs
/// are drawn at constant pitch, then the canvas goes through
/// [`size_and_pad`]. Text must be normalized and fit `n`.
pub fn render_line(
    text: &str,
    n: usize,
    style: &RenderStyle,
    pool: &[TextImage],
    style_seed: u64,
) -> SampleRecord {
    let chars: Vec<char> = text.chars().collect();
    assert!(chars.len() <= n, "text longer than n");
    let mut rng = ChaCha12Rng::seed_from_u64(style_seed);

    let width = (n * PX_PER_POSITION).max(chars.len() * style.pitch);
    let mut canvas = match &style.background {
        Background::Procedural { grain } => {
            procedural_background(RECOG_HEIGHT, width, styled_channels(style), *grain, &mut rng)
        }
        Background::Patch(i) => {
            let src = &pool[*i % pool.len()];
            tile_patch(src, RECOG_HEIGHT, width)
        }
        Background::Solid(colour) => {
            let mut im = TextImage::solid(RECOG_HEIGHT, width, colour.len(), 0.0);
            for px in im.data.chunks_exact_mut(colour.len()) {
                px.copy_from_slice(colour);
            }
            im
        }
    };

    let bg_lum = luminance(&canvas.mean_per_channel());
    assert!(
        (bg_lum - luminance(&style.colour)).abs() >= MIN_CONTRAST,
        "font colour too close to background intensity"
    );

    let gap = (style.pitch / 8).max(2);
    let glyph_w = style.pitch - gap;
    let y0 = (RECOG_HEIGHT - style.glyph_height) / 2;
    for (i, &c) in chars.iter().enumerate() {
        let (jx, jy) = if style.jitter > 0 {
            let j = style.jitter as i32;
            (
                rng.random_range(-j..=j),
                rng.random_range(-j..=j),
            )
        } else {
            (0, 0)
        };
        if let Some(g) = glyphs::glyph(c) {
            let x0 = (i * style.pitch) as i32 + (gap / 2) as i32 + jx;
            draw_glyph(&mut canvas, g, x0, y0 as i32 + jy, glyph_w, style.glyph_height, &style.colour);
        }
        // space: no ink
    }

    if style.noise_sigma > 0.0 {
        for v in canvas.data.iter_mut() {
            *v = (*v + style.noise_sigma * gaussian(&mut rng)).clamp(0.0, 1.0);
        }
    }

    SampleRecord {
        image: size_and_pad(&canvas, n),
        text: text.to_string(),
        style_seed,
    }
}

fn styled_channels(style: &RenderStyle) -> usize {
    style.colour.len()
}

fn tile_patch(src: &TextImage, h: usize, w: usize) -> TextImage {
    let mut out = TextImage::solid(h, w, src.channels, 0.0);
    for y in 0..h {
        for x in 0..w {
            let sp = src.px(y % src.height, x % src.width).to_vec();
            out.px_mut(y, x).copy_from_slice(&sp);
        }
    }
    out
}

/// Nearest-neighbour scale of a glyph mask into the canvas.
fn draw_glyph(
    canvas: &mut TextImage,
    g: &glyphs::Glyph,
    x0: i32,
    y0: i32,
    w: usize,
    h: usize,
    colour: &[f64],
) {
    for dy in 0..h {
        let sy = dy * g.height / h;
        let y = y0 + dy as i32;
        if y < 0 || y >= canvas.height as i32 {
            continue;
        }
        for dx in 0..w {
            let sx = dx * g.width / w;
            let x = x0 + dx as i32;
            if x < 0 || x >= canvas.width as i32 {
                continue;
            }
            if g.ink(sy, sx) {
                canvas.px_mut(y as usize, x as usize).copy_from_slice(colour);
            }
        }
    }
}

/// Everything needed to produce one dataset (a train and a test shard).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetSpec {
    pub n: usize,
    pub count_train: usize,
    pub count_test: usize,
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub normalize_mode: NormalizeMode,
}

impl DatasetSpec {
    /// Paper-scale defaults: 100k training samples, 1k test samples.
    pub fn with_defaults(n: usize, seed: u64, generator: GeneratorConfig) -> Self {
        DatasetSpec {
            n,
            count_train: 100_000,
            count_test: 1_000,
            seed,
            generator,
            normalize_mode: NormalizeMode::Synthetic,
        }
    }
}

/// Render `count` samples, calling `emit(index, record)` in index order.
/// Per-sample RNG streams are derived as `seed ^ index`, so generation is
/// order-independent.
pub fn generate_samples<F>(
    corpus: &Corpus,
    alphabet: &Alphabet,
    n: usize,
    count: usize,
    shard_seed: u64,
    cfg: &GeneratorConfig,
    mut emit: F,
) where
    F: FnMut(usize, SampleRecord),
{
    let pool = default_background_pool(cfg, shard_seed);
    let mut palette_rng = ChaCha12Rng::seed_from_u64(shard_seed ^ 0x00c0_10c5);
    let palette = build_colour_model(&pool, cfg.palette_k, &mut palette_rng);
    for index in 0..count {
        let sample_seed = shard_seed ^ index as u64;
        let mut rng = ChaCha12Rng::seed_from_u64(sample_seed);
        let text = corpus.sample(&mut rng).to_string();
        debug_assert_eq!(normalize(&text, corpus.mode()), text);
        // labels must encode at the dataset's n
        let _ = encode(&text, alphabet, n);
        let style = sample_style(cfg, &palette, &mut rng);
        let record = render_line(&text, n, &style, &pool, sample_seed.wrapping_add(1));
        emit(index, record);
    }
}
