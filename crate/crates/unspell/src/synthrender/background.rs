//! Background generation and the k-means colour model used to pick font
//! colours. The built-in procedural backgrounds (low-frequency blotches
//! plus high-frequency grain over a paper tone) keep the pipeline
//! self-contained; a pool of user-supplied images can replace them.

use super::TextImage;
use rand::{Rng, RngCore};

/// Luminance of a pixel (perceptual weights for RGB, identity for gray).
pub fn luminance(px: &[f64]) -> f64 {
    match px.len() {
        1 => px[0],
        3 => 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2],
        _ => px.iter().sum::<f64>() / px.len() as f64,
    }
}

/// k-means colour palette, centroids sorted by luminance (darkest first).
#[derive(Clone, Debug)]
pub struct ColourPalette {
    pub centroids: Vec<Vec<f64>>,
    /// Set when k exceeded the number of distinct colours and duplicate
    /// centroids had to be kept.
    pub duplicate_warning: bool,
}

/// Lloyd's algorithm over a uniform pixel sample from the pool
/// (up to 100k pixels, or all available), at most 50 iterations,
/// seeded initialization.
pub fn build_colour_model(
    pool: &[TextImage],
    k: usize,
    rng: &mut dyn RngCore,
) -> ColourPalette {
    assert!(!pool.is_empty(), "background pool must be nonempty");
    assert!(k >= 1, "k must be at least 1");
    let channels = pool[0].channels;
    // uniform sample of pixels across the pool
    let total: usize = pool.iter().map(|im| im.height * im.width).sum();
    let want = total.min(100_000);
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(want);
    for _ in 0..want {
        let im = &pool[rng.random_range(0..pool.len())];
        let p = rng.random_range(0..im.height * im.width);
        samples.push(im.data[p * channels..(p + 1) * channels].to_vec());
    }

    // init: random distinct sample points where possible
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut tries = 0;
    while centroids.len() < k {
        let cand = samples[rng.random_range(0..samples.len())].clone();
        tries += 1;
        if tries < 20 * k && centroids.iter().any(|c| c == &cand) {
            continue;
        }
        centroids.push(cand);
    }

    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    let mut assign = vec![0usize; samples.len()];
    let mut prev_wcss = f64::INFINITY;
    for _ in 0..50 {
        let mut wcss = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let (mut best, mut bd) = (0usize, f64::INFINITY);
            for (j, c) in centroids.iter().enumerate() {
                let d = dist2(s, c);
                if d < bd {
                    bd = d;
                    best = j;
                }
            }
            assign[i] = best;
            wcss += bd;
        }
        let mut sums = vec![vec![0.0; channels]; k];
        let mut counts = vec![0usize; k];
        for (i, s) in samples.iter().enumerate() {
            counts[assign[i]] += 1;
            for (acc, v) in sums[assign[i]].iter_mut().zip(s) {
                *acc += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
            // empty clusters keep their previous centroid
        }
        if (prev_wcss - wcss).abs() < 1e-12 {
            break;
        }
        prev_wcss = wcss;
    }

    centroids.sort_by(|a, b| luminance(a).partial_cmp(&luminance(b)).unwrap());
    let mut duplicate_warning = false;
    for i in 1..centroids.len() {
        if centroids[i] == centroids[i - 1] {
            duplicate_warning = true;
        }
    }
    ColourPalette {
        centroids,
        duplicate_warning,
    }
}

/// Within-cluster sum of squares for a given assignment of pixels to the
/// nearest centroid (used by tests to check Lloyd's descent property).
pub fn wcss(samples: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    samples
        .iter()
        .map(|s| {
            centroids
                .iter()
                .map(|c| {
                    s.iter()
                        .zip(c)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Procedural paper-like background: a base tone, a few smooth
/// low-frequency blotches, and per-pixel grain.
pub fn procedural_background(
    height: usize,
    width: usize,
    channels: usize,
    grain: f64,
    rng: &mut dyn RngCore,
) -> TextImage {
    let base: Vec<f64> = match channels {
        1 => vec![rng.random_range(0.70..0.92)],
        _ => {
            let warm = rng.random_range(0.72..0.90);
            (0..channels)
                .map(|c| (warm - 0.04 * c as f64 + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0))
                .collect()
        }
    };
    let n_blobs = rng.random_range(3..7);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            (
                rng.random_range(0.0..height as f64),
                rng.random_range(0.0..width as f64),
                rng.random_range(6.0..40.0),
                rng.random_range(-0.09..0.06),
            )
        })
        .collect();
    let mut data = vec![0.0; height * width * channels];
    for y in 0..height {
        for x in 0..width {
            let mut shade = 0.0;
            for &(cy, cx, r, amp) in &blobs {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                shade += amp * (-d2 / (2.0 * r * r)).exp();
            }
            for c in 0..channels {
                let g = if grain > 0.0 {
                    rng.random_range(-grain..grain)
                } else {
                    0.0
                };
                data[(y * width + x) * channels + c] = (base[c] + shade + g).clamp(0.0, 1.0);
            }
        }
    }
    TextImage {
        height,
        width,
        channels,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn solid(c: f64, channels: usize) -> TextImage {
        TextImage {
            height: 8,
            width: 8,
            channels,
            data: vec![c; 64 * channels],
        }
    }

    #[test]
    fn two_solid_images_k2_recovers_both_colours() {
        let pool = vec![solid(0.1, 1), solid(0.9, 1)];
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let pal = build_colour_model(&pool, 2, &mut rng);
        assert!((pal.centroids[0][0] - 0.1).abs() < 1e-9);
        assert!((pal.centroids[1][0] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn k1_centroid_is_mean_pixel_value() {
        let pool = vec![solid(0.2, 1), solid(0.6, 1)];
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let pal = build_colour_model(&pool, 1, &mut rng);
        // sampled pixels are half 0.2, half 0.6 in expectation
        assert!((pal.centroids[0][0] - 0.4).abs() < 0.02);
    }

    #[test]
    fn duplicate_centroids_flagged_when_k_exceeds_distinct_colours() {
        let pool = vec![solid(0.5, 1)];
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let pal = build_colour_model(&pool, 3, &mut rng);
        assert!(pal.duplicate_warning);
        assert_eq!(pal.centroids.len(), 3);
    }

    #[test]
    fn lloyds_objective_is_non_increasing() {
        // run k-means step by step on a fixed sample and track WCSS
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let samples: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let mut centroids = vec![samples[0].clone(), samples[1].clone(), samples[2].clone()];
        let mut last = wcss(&samples, &centroids);
        for _ in 0..10 {
            // one Lloyd iteration
            let mut sums = vec![vec![0.0; 2]; 3];
            let mut counts = vec![0usize; 3];
            for s in &samples {
                let (mut best, mut bd) = (0, f64::INFINITY);
                for (j, c) in centroids.iter().enumerate() {
                    let d: f64 = s.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
                    if d < bd {
                        bd = d;
                        best = j;
                    }
                }
                counts[best] += 1;
                for (acc, v) in sums[best].iter_mut().zip(s) {
                    *acc += v;
                }
            }
            for j in 0..3 {
                if counts[j] > 0 {
                    for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                        *c = s / counts[j] as f64;
                    }
                }
            }
            let now = wcss(&samples, &centroids);
            assert!(now <= last + 1e-12, "WCSS increased: {last} -> {now}");
            last = now;
        }
    }

    #[test]
    fn procedural_background_is_deterministic_and_in_range() {
        let mk = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            procedural_background(32, 64, 3, 0.02, &mut rng)
        };
        let a = mk(9);
        let b = mk(9);
        assert_eq!(a.data, b.data);
        assert!(a.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
