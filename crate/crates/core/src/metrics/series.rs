use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coverage::{coverage_of, embed_archive_images, embed_captions, CaptionCache, EmbeddingCache};
use super::j1::j1_index;
use super::nouns::NounList;
use super::similarity::{semantic_fidelity, semantic_recall, RecallAggregate};
use super::MetricError;
use crate::archive::{ArchiveView, PhylogenyForest};
use crate::providers::{Captioner, Embedder, Embedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    RecallSum,
    Fidelity,
    VisualCoverage,
    SemanticCoverage,
    J1,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Recall,
        Metric::RecallSum,
        Metric::Fidelity,
        Metric::VisualCoverage,
        Metric::SemanticCoverage,
        Metric::J1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::RecallSum => "recall_sum",
            Metric::Fidelity => "fidelity",
            Metric::VisualCoverage => "visual_coverage",
            Metric::SemanticCoverage => "semantic_coverage",
            Metric::J1 => "j1",
        }
    }

    pub fn parse(s: &str) -> Result<Metric, MetricError> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .or(match s.as_str() {
                "semantic_recall" => Some(Metric::Recall),
                "semantic_fidelity" => Some(Metric::Fidelity),
                "tree_balance" => Some(Metric::J1),
                _ => None,
            })
            .ok_or(MetricError::UnknownMetric(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric: String,
    /// `(archive size, value)`, sizes strictly increasing.
    pub points: Vec<(usize, f64)>,
}

impl MetricSeries {
    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "archive_size,{}", self.metric)?;
        for (n, v) in &self.points {
            writeln!(out, "{n},{v}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// `step, 2*step, ...` up to `n`, ending with `n` itself.
pub fn prefix_sizes(n: usize, step: usize) -> Result<Vec<usize>, MetricError> {
    if step == 0 {
        return Err(MetricError::ZeroStep);
    }
    let mut sizes: Vec<usize> = (1..=n / step).map(|i| i * step).collect();
    if n > 0 && sizes.last() != Some(&n) {
        sizes.push(n);
    }
    Ok(sizes)
}

/// Evaluates `f` on every prefix size, in parallel.
pub fn series(
    name: &str,
    n: usize,
    step: usize,
    f: impl Fn(usize) -> Result<f64, MetricError> + Sync,
) -> Result<MetricSeries, MetricError> {
    let sizes = prefix_sizes(n, step)?;
    let values: Vec<f64> = sizes.par_iter().map(|&s| f(s)).collect::<Result<_, _>>()?;
    Ok(MetricSeries {
        metric: name.to_string(),
        points: sizes.into_iter().zip(values).collect(),
    })
}

/// Providers and caches needed to evaluate any [`Metric`] on an archive.
/// One embedder serves images, nouns and captions (a joint space).
pub struct MetricContext {
    pub embedder: Arc<dyn Embedder>,
    pub captioner: Option<Arc<dyn Captioner>>,
    pub nouns: NounList,
    pub k: usize,
    pub embeddings: EmbeddingCache,
    pub captions: CaptionCache,
}

impl MetricContext {
    pub fn new(embedder: Arc<dyn Embedder>, nouns: NounList) -> Self {
        MetricContext {
            embedder,
            captioner: None,
            nouns,
            k: 100,
            embeddings: EmbeddingCache::in_memory(),
            captions: CaptionCache::in_memory(),
        }
    }

    pub fn with_captioner(mut self, captioner: Arc<dyn Captioner>) -> Self {
        self.captioner = Some(captioner);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn noun_embeddings(&self) -> Result<Vec<Embedding>, MetricError> {
        self.nouns
            .nouns()
            .par_iter()
            .map(|noun| {
                let key = format!("text:{}:{}", self.embedder.model(), noun);
                self.embeddings
                    .get_or_try(key, || Ok(self.embedder.embed_text(noun)?))
            })
            .collect()
    }

    fn caption_vectors(&self, view: &dyn ArchiveView) -> Result<Vec<Embedding>, MetricError> {
        let captioner = self
            .captioner
            .as_deref()
            .ok_or(MetricError::MissingProvider("captioner"))?;
        embed_captions(view, view.len(), captioner, &self.captions, &*self.embedder, &self.embeddings)
    }

    /// The metric over prefixes of `step` entries, ending at the full archive.
    pub fn series(
        &self,
        view: &dyn ArchiveView,
        metric: Metric,
        step: usize,
    ) -> Result<MetricSeries, MetricError> {
        let n = view.len();
        if n == 0 {
            return Err(MetricError::Empty("archive"));
        }
        let name = metric.name();
        match metric {
            Metric::J1 => {
                let forest = PhylogenyForest::from_parents(&view.parent_positions()).map_err(
                    |(child, parent)| {
                        crate::archive::ArchiveError::InvalidParent {
                            id: crate::archive::EntryId(child as u64),
                            parent: crate::archive::EntryId(parent as u64),
                        }
                    },
                )?;
                series(name, n, step, |s| j1_index(&forest.prefix(s)))
            }
            Metric::Recall | Metric::RecallSum | Metric::Fidelity => {
                let images = embed_archive_images(view, n, &*self.embedder, &self.embeddings)?;
                let nouns = self.noun_embeddings()?;
                series(name, n, step, |s| match metric {
                    Metric::Recall => semantic_recall(&images[..s], &nouns, RecallAggregate::MeanSimilarity),
                    Metric::RecallSum => semantic_recall(&images[..s], &nouns, RecallAggregate::SumDistance),
                    _ => semantic_fidelity(&images[..s], &nouns),
                })
            }
            Metric::VisualCoverage | Metric::SemanticCoverage => {
                let vecs = if metric == Metric::VisualCoverage {
                    embed_archive_images(view, n, &*self.embedder, &self.embeddings)?
                } else {
                    self.caption_vectors(view)?
                };
                let points: Vec<Vec<f64>> = vecs.into_iter().map(|e| e.values).collect();
                series(name, n, step, |s| Ok(coverage_of(&points[..s], self.k, 0)?.radius))
            }
        }
    }

    /// The metric over the whole archive.
    pub fn value(&self, view: &dyn ArchiveView, metric: Metric) -> Result<f64, MetricError> {
        let s = self.series(view, metric, view.len().max(1))?;
        Ok(s.last().expect("nonempty archive gives one point"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_sizes_end_at_n() {
        assert_eq!(prefix_sizes(10, 3).unwrap(), vec![3, 6, 9, 10]);
        assert_eq!(prefix_sizes(9, 3).unwrap(), vec![3, 6, 9]);
        assert_eq!(prefix_sizes(2, 5).unwrap(), vec![2]);
        assert!(prefix_sizes(5, 0).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::parse(m.name()).unwrap(), m);
        }
        assert_eq!(Metric::parse("tree-balance").unwrap(), Metric::J1);
        assert!(Metric::parse("beauty").is_err());
    }

    #[test]
    fn csv_export() {
        let s = MetricSeries {
            metric: "j1".into(),
            points: vec![(5, 0.5), (10, 0.25)],
        };
        assert_eq!(s.to_csv(), "archive_size,j1\n5,0.5\n10,0.25\n");
    }
}
