use super::MetricError;
use crate::archive::PhylogenyForest;

/// Balance contribution of one node with at least two children.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBalance {
    pub node: usize,
    /// Total weight below the node, its own weight excluded.
    pub weight: f64,
    /// Entropy of the children's subtree weights, in log base child count.
    pub entropy: f64,
}

fn entropy(children: &[f64]) -> f64 {
    let total: f64 = children.iter().sum();
    let base = (children.len() as f64).ln();
    -children
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            p * p.ln()
        })
        .sum::<f64>()
        / base
}

/// Every node with two or more children, in position order.
pub fn node_balances(forest: &PhylogenyForest) -> Vec<NodeBalance> {
    let sizes = forest.subtree_sizes();
    (0..forest.len())
        .filter(|&i| forest.children(i).len() >= 2)
        .map(|i| {
            let child_weights: Vec<f64> = forest.children(i).iter().map(|&c| sizes[c] as f64).collect();
            NodeBalance {
                node: i,
                weight: child_weights.iter().sum(),
                entropy: entropy(&child_weights),
            }
        })
        .collect()
}

/// J¹ tree balance with unit node weights: the mean of per-node entropies
/// over nodes with at least two children, weighted by the weight below each
/// node. Separate trees hang under a zero-weight virtual root that is not
/// itself scored. A forest without any such node scores 0.
pub fn j1_index(forest: &PhylogenyForest) -> Result<f64, MetricError> {
    if forest.is_empty() {
        return Err(MetricError::Empty("forest"));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for b in node_balances(forest) {
        num += b.weight * b.entropy;
        den += b.weight;
    }
    Ok(if den == 0.0 { 0.0 } else { (num / den).clamp(0.0, 1.0) })
}

pub fn j1_index_of_parents(parents: &[Option<usize>]) -> Result<f64, MetricError> {
    let forest = PhylogenyForest::from_parents(parents).map_err(|(child, parent)| {
        MetricError::Archive(crate::archive::ArchiveError::InvalidParent {
            id: crate::archive::EntryId(child as u64),
            parent: crate::archive::EntryId(parent as u64),
        })
    })?;
    j1_index(&forest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cherry_is_perfectly_balanced() {
        assert_eq!(j1_index_of_parents(&[None, Some(0), Some(0)]).unwrap(), 1.0);
    }

    #[test]
    fn chain_scores_zero() {
        assert_eq!(j1_index_of_parents(&[None, Some(0), Some(1), Some(2)]).unwrap(), 0.0);
        assert_eq!(j1_index_of_parents(&[None, None, None]).unwrap(), 0.0);
    }

    #[test]
    fn uneven_root_by_hand() {
        // root 0 with children 1 (which has child 3) and 2
        let parents = [None, Some(0), Some(0), Some(1)];
        let p = [2.0 / 3.0, 1.0 / 3.0];
        let h = -(p[0] * f64::ln(p[0]) + p[1] * f64::ln(p[1])) / 2f64.ln();
        assert!((j1_index_of_parents(&parents).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn empty_is_error() {
        assert!(j1_index_of_parents(&[]).is_err());
    }
}
