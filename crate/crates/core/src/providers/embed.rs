use std::time::Duration;

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::http::{data_url, make_agent, post_json};
use super::{HttpConfig, ProviderError};
use crate::cppn::decode_png;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    /// Vectors are only comparable under equal model tags.
    pub model: String,
}

pub trait Embedder: Send + Sync {
    fn model(&self) -> &str;
    fn embed_image(&self, png: &[u8]) -> Result<Embedding, ProviderError>;
    fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError>;
}

/// Cosine similarity; a zero vector is similar to nothing (0.0).
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_similarity(a, b)
}

/// Offline embedder. Images become their 8×8 mean-pooled luma grid in
/// [0,1], row-major; text becomes a uniform [0,1] vector seeded by its SHA-256.
#[derive(Debug, Clone, Copy, Default)]
pub struct TestEmbedder;

pub const TEST_GRID: usize = 8;
pub const TEST_DIM: usize = TEST_GRID * TEST_GRID;

impl TestEmbedder {
    pub const MODEL: &'static str = "test-luma-8x8";

    pub fn downsample(img: &image::RgbImage) -> Vec<f64> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut sums = [0.0f64; TEST_DIM];
        let mut counts = [0usize; TEST_DIM];
        for (x, y, p) in img.enumerate_pixels() {
            let cell = (y as usize * TEST_GRID / h) * TEST_GRID + x as usize * TEST_GRID / w;
            let [r, g, b] = p.0;
            sums[cell] += (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0;
            counts[cell] += 1;
        }
        sums.iter()
            .zip(counts)
            .map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect()
    }
}

impl Embedder for TestEmbedder {
    fn model(&self) -> &str {
        Self::MODEL
    }

    fn embed_image(&self, png: &[u8]) -> Result<Embedding, ProviderError> {
        let img = decode_png(png).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        Ok(Embedding {
            values: Self::downsample(&img),
            model: Self::MODEL.into(),
        })
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError> {
        let seed: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        let mut rng = Rng::from_seed(seed);
        Ok(Embedding {
            values: (0..TEST_DIM).map(|_| rng.random::<f64>()).collect(),
            model: Self::MODEL.into(),
        })
    }
}

/// Client for OpenAI-compatible `embeddings` endpoints. Images are sent as
/// PNG data URLs, which joint text-image embedding services accept as input.
pub struct HttpEmbedder {
    config: HttpConfig,
    model: String,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(config: HttpConfig, model: impl Into<String>) -> Self {
        HttpEmbedder {
            agent: make_agent(config.timeout.max(Duration::from_secs(1))),
            model: model.into(),
            config,
        }
    }

    fn embed(&self, input: String) -> Result<Embedding, ProviderError> {
        let url = format!("{}/embeddings", self.config.endpoint);
        let body = json!({ "model": self.model, "input": [input] });
        let reply = post_json(&self.agent, &url, self.config.api_key.as_deref(), &body, 0)?;
        let values = reply["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| ProviderError::Malformed("missing data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| ProviderError::Malformed("non-numeric embedding component".into()))?;
        Ok(Embedding {
            values,
            model: self.model.clone(),
        })
    }
}

impl Embedder for HttpEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    fn embed_image(&self, png: &[u8]) -> Result<Embedding, ProviderError> {
        self.embed(data_url(png))
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, ProviderError> {
        self.embed(text.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cppn::encode_png;
    use image::{Rgb, RgbImage};

    fn solid(w: u32, h: u32, v: u8) -> Vec<u8> {
        encode_png(&RgbImage::from_pixel(w, h, Rgb([v, v, v]))).unwrap()
    }

    #[test]
    fn identical_images_identical_vectors() {
        let e = TestEmbedder;
        let a = e.embed_image(&solid(16, 16, 90)).unwrap();
        let b = e.embed_image(&solid(16, 16, 90)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.len(), TEST_DIM);
    }

    #[test]
    fn solid_levels_by_hand() {
        let e = TestEmbedder;
        let white = e.embed_image(&solid(32, 32, 255)).unwrap().values;
        let gray = e.embed_image(&solid(32, 32, 51)).unwrap().values;
        let black = e.embed_image(&solid(32, 32, 0)).unwrap().values;
        // every cell of white is 1.0, of gray 0.2, of black 0.0
        assert!(white.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(gray.iter().all(|&v| (v - 0.2).abs() < 1e-12));
        assert!((cosine_similarity(&white, &gray) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&white, &black), 0.0);
    }

    #[test]
    fn half_image_cells() {
        let mut img = RgbImage::from_pixel(16, 16, Rgb([0, 0, 0]));
        for y in 0..16 {
            for x in 8..16 {
                img.put_pixel(x, y, Rgb([255, 255, 255]));
            }
        }
        let v = TestEmbedder::downsample(&img);
        for row in 0..8 {
            for col in 0..8 {
                let expected = if col >= 4 { 1.0 } else { 0.0 };
                assert!((v[row * 8 + col] - expected).abs() < 1e-12);
            }
        }
        // cos(half, white) = 32 / (sqrt(32) * 8)
        let white = vec![1.0; 64];
        assert!((cosine_similarity(&v, &white) - 32.0 / (32f64.sqrt() * 8.0)).abs() < 1e-12);
    }

    #[test]
    fn text_vectors_are_pure() {
        let e = TestEmbedder;
        assert_eq!(e.embed_text("dog").unwrap(), e.embed_text("dog").unwrap());
        assert_ne!(e.embed_text("dog").unwrap(), e.embed_text("cat").unwrap());
        assert!(e.embed_text("dog").unwrap().values.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn http_embedder_parses_vectors() {
        let (url, server) = super::super::http::tests::one_shot(
            200,
            "",
            r#"{"data":[{"embedding":[0.5,-1,2]}]}"#,
        );
        let e = HttpEmbedder::new(HttpConfig::new(url), "clip");
        let v = e.embed_text("fox").unwrap();
        assert_eq!(v.values, vec![0.5, -1.0, 2.0]);
        assert_eq!(v.model, "clip");
        let sent: serde_json::Value = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(sent["input"][0], "fox");
    }
}
