use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fps::{farthest_point_sample, k_covering_radius};
use super::MetricError;
use crate::archive::ArchiveView;
use crate::providers::{Captioner, Embedder, Embedding};

/// String-keyed memo, optionally backed by a JSON file so re-runs do not
/// repeat provider calls. Writes are serialized by a mutex.
#[derive(Debug)]
struct KeyedCache<V> {
    map: Mutex<HashMap<String, V>>,
    path: Option<PathBuf>,
}

impl<V> Default for KeyedCache<V> {
    fn default() -> Self {
        KeyedCache {
            map: Mutex::new(HashMap::new()),
            path: None,
        }
    }
}

impl<V: Clone + Serialize + for<'de> Deserialize<'de>> KeyedCache<V> {
    fn open(path: &Path) -> Result<Self, MetricError> {
        let map = match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashMap::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(KeyedCache {
            map: Mutex::new(map),
            path: Some(path.to_path_buf()),
        })
    }

    fn get(&self, key: &str) -> Option<V> {
        self.map.lock().expect("cache poisoned").get(key).cloned()
    }

    fn insert(&self, key: String, value: V) {
        self.map.lock().expect("cache poisoned").insert(key, value);
    }

    fn len(&self) -> usize {
        self.map.lock().expect("cache poisoned").len()
    }

    fn save(&self) -> Result<(), MetricError> {
        if let Some(path) = &self.path {
            let map = self.map.lock().expect("cache poisoned");
            let text = serde_json::to_string(&*map).expect("cache serializes");
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, text)?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }
}

/// Embeddings keyed by model and archive cache key.
#[derive(Debug, Default)]
pub struct EmbeddingCache(KeyedCache<Embedding>);

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, MetricError> {
        Ok(EmbeddingCache(KeyedCache::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self) -> Result<(), MetricError> {
        self.0.save()
    }

    pub(super) fn get_or_try(
        &self,
        key: String,
        f: impl FnOnce() -> Result<Embedding, MetricError>,
    ) -> Result<Embedding, MetricError> {
        if let Some(e) = self.0.get(&key) {
            return Ok(e);
        }
        let e = f()?;
        self.0.insert(key, e.clone());
        Ok(e)
    }
}

/// Captions keyed by archive cache key.
#[derive(Debug, Default)]
pub struct CaptionCache(KeyedCache<String>);

impl CaptionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, MetricError> {
        Ok(CaptionCache(KeyedCache::open(path)?))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.0.get(key)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self) -> Result<(), MetricError> {
        self.0.save()
    }
}

/// Image embeddings for the first `n` entries, in position order. On
/// error, embeddings computed so far stay in the cache.
pub fn embed_archive_images(
    view: &dyn ArchiveView,
    n: usize,
    embedder: &dyn Embedder,
    cache: &EmbeddingCache,
) -> Result<Vec<Embedding>, MetricError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let key = format!("image:{}:{}", embedder.model(), view.cache_key(i));
            cache.get_or_try(key, || Ok(embedder.embed_image(&view.image_png(i)?)?))
        })
        .collect()
}

/// One-sentence caption embeddings for the first `n` entries.
pub fn embed_captions(
    view: &dyn ArchiveView,
    n: usize,
    captioner: &dyn Captioner,
    captions: &CaptionCache,
    embedder: &dyn Embedder,
    cache: &EmbeddingCache,
) -> Result<Vec<Embedding>, MetricError> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let key = view.cache_key(i);
            let caption = match captions.get(&key) {
                Some(c) => c,
                None => {
                    let c = captioner.caption(&view.image_png(i)?)?;
                    captions.0.insert(key.clone(), c.clone());
                    c
                }
            };
            let ekey = format!("text:{}:{}", embedder.model(), caption);
            cache.get_or_try(ekey, || Ok(embedder.embed_text(&caption)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub radius: f64,
    /// k actually used; lower than requested when the archive is smaller.
    pub k: usize,
    pub k_lowered: bool,
    pub representatives: Vec<usize>,
}

pub(super) fn coverage_of(points: &[Vec<f64>], k: usize, start: usize) -> Result<CoverageResult, MetricError> {
    if points.is_empty() {
        return Err(MetricError::Empty("archive"));
    }
    if k == 0 {
        return Err(MetricError::KOutOfRange { k, n: points.len() });
    }
    let used = k.min(points.len());
    let representatives = farthest_point_sample(points, used, start)?;
    Ok(CoverageResult {
        radius: k_covering_radius(points, &representatives)?,
        k: used,
        k_lowered: used < k,
        representatives,
    })
}

pub fn visual_coverage(
    view: &dyn ArchiveView,
    embedder: &dyn Embedder,
    cache: &EmbeddingCache,
    k: usize,
) -> Result<CoverageResult, MetricError> {
    let vecs = embed_archive_images(view, view.len(), embedder, cache)?;
    let points: Vec<Vec<f64>> = vecs.into_iter().map(|e| e.values).collect();
    coverage_of(&points, k, 0)
}

pub fn semantic_coverage(
    view: &dyn ArchiveView,
    captioner: &dyn Captioner,
    captions: &CaptionCache,
    embedder: &dyn Embedder,
    cache: &EmbeddingCache,
    k: usize,
) -> Result<CoverageResult, MetricError> {
    let vecs = embed_captions(view, view.len(), captioner, captions, embedder, cache)?;
    let points: Vec<Vec<f64>> = vecs.into_iter().map(|e| e.values).collect();
    coverage_of(&points, k, 0)
}
