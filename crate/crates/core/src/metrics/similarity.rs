use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::providers::{cosine_distance, cosine_similarity, Embedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallAggregate {
    /// Mean over nouns of the best cosine similarity to any image.
    #[default]
    MeanSimilarity,
    /// Sum over nouns of the smallest cosine distance to any image.
    SumDistance,
}

pub(super) fn check(a: &[Embedding], b: &[Embedding]) -> Result<(), MetricError> {
    let first = a.first().or(b.first()).ok_or(MetricError::Empty("embeddings"))?;
    for e in a.iter().chain(b) {
        if e.model != first.model {
            return Err(MetricError::ModelMismatch(first.model.clone(), e.model.clone()));
        }
        if e.values.len() != first.values.len() {
            return Err(MetricError::DimensionMismatch {
                expected: first.values.len(),
                found: e.values.len(),
            });
        }
    }
    Ok(())
}

fn best_similarity(query: &Embedding, pool: &[Embedding]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in pool.iter().enumerate() {
        let s = cosine_similarity(&query.values, &p.values);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

pub fn semantic_recall(
    images: &[Embedding],
    nouns: &[Embedding],
    aggregate: RecallAggregate,
) -> Result<f64, MetricError> {
    if images.is_empty() {
        return Err(MetricError::Empty("images"));
    }
    if nouns.is_empty() {
        return Err(MetricError::Empty("nouns"));
    }
    check(images, nouns)?;
    Ok(match aggregate {
        RecallAggregate::MeanSimilarity => {
            nouns.iter().map(|n| best_similarity(n, images).1).sum::<f64>() / nouns.len() as f64
        }
        RecallAggregate::SumDistance => nouns
            .iter()
            .map(|n| {
                images
                    .iter()
                    .map(|i| cosine_distance(&n.values, &i.values))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum(),
    })
}

/// Mean over images of the best similarity to any noun.
pub fn semantic_fidelity(images: &[Embedding], nouns: &[Embedding]) -> Result<f64, MetricError> {
    if images.is_empty() {
        return Err(MetricError::Empty("images"));
    }
    if nouns.is_empty() {
        return Err(MetricError::Empty("nouns"));
    }
    check(images, nouns)?;
    Ok(images.iter().map(|i| best_similarity(i, nouns).1).sum::<f64>() / images.len() as f64)
}

/// For each noun, the image most similar to it (lowest index on ties) and
/// that similarity, sorted by similarity descending then noun index.
pub fn best_matches(
    images: &[Embedding],
    nouns: &[Embedding],
) -> Result<Vec<(usize, usize, f64)>, MetricError> {
    if images.is_empty() {
        return Err(MetricError::Empty("images"));
    }
    check(images, nouns)?;
    let mut out: Vec<(usize, usize, f64)> = nouns
        .iter()
        .enumerate()
        .map(|(n, e)| {
            let (i, s) = best_similarity(e, images);
            (n, i, s)
        })
        .collect();
    out.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{Embedder, TestEmbedder};

    fn emb(v: &[f64]) -> Embedding {
        Embedding {
            values: v.to_vec(),
            model: "m".into(),
        }
    }

    #[test]
    fn recall_by_hand() {
        let e = TestEmbedder;
        let a = e.embed_text("apple").unwrap();
        let b = e.embed_text("boat").unwrap();
        let images = vec![a.clone()];
        let cos_ab = cosine_similarity(&a.values, &b.values);
        let recall = semantic_recall(&images, &[a, b], RecallAggregate::MeanSimilarity).unwrap();
        assert!((recall - (1.0 + cos_ab) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn recall_ignores_duplicates_fidelity_does_not() {
        let nouns = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        let good = emb(&[1.0, 0.1]);
        let poor = emb(&[1.0, 1.5]);
        let base = vec![good.clone(), poor.clone()];
        let dup = vec![good.clone(), poor, good.clone(), good];
        let agg = RecallAggregate::MeanSimilarity;
        assert_eq!(semantic_recall(&base, &nouns, agg).unwrap(), semantic_recall(&dup, &nouns, agg).unwrap());
        assert!(semantic_fidelity(&dup, &nouns).unwrap() > semantic_fidelity(&base, &nouns).unwrap());
    }

    #[test]
    fn orthogonal_fidelity_is_zero() {
        let images = vec![emb(&[1.0, 0.0, 0.0, 0.0]), emb(&[0.0, 1.0, 0.0, 0.0])];
        let nouns = vec![emb(&[0.0, 0.0, 1.0, 0.0]), emb(&[0.0, 0.0, 0.0, 1.0])];
        assert_eq!(semantic_fidelity(&images, &nouns).unwrap(), 0.0);
    }

    #[test]
    fn sum_distance_variant() {
        let nouns = vec![emb(&[1.0, 0.0]), emb(&[0.0, 1.0])];
        let images = vec![emb(&[1.0, 0.0])];
        let v = semantic_recall(&images, &nouns, RecallAggregate::SumDistance).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatches_are_errors() {
        let a = vec![emb(&[1.0, 0.0])];
        let b = vec![emb(&[1.0])];
        assert!(matches!(
            semantic_recall(&a, &b, RecallAggregate::MeanSimilarity),
            Err(MetricError::DimensionMismatch { .. })
        ));
        let mut c = emb(&[1.0, 0.0]);
        c.model = "other".into();
        assert!(matches!(semantic_fidelity(&a, &[c]), Err(MetricError::ModelMismatch(..))));
        assert!(matches!(semantic_fidelity(&[], &a), Err(MetricError::Empty(_))));
    }
}
