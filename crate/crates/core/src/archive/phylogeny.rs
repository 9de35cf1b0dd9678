/// Rooted trees over archive positions. Roots are fresh-origin entries;
/// every other entry hangs under the entry it was branched from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhylogenyForest {
    parents: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    roots: Vec<usize>,
}

impl PhylogenyForest {
    /// Fails with `(child, parent)` when a parent does not precede its child.
    pub fn from_parents(parents: &[Option<usize>]) -> Result<PhylogenyForest, (usize, usize)> {
        let mut children = vec![Vec::new(); parents.len()];
        let mut roots = Vec::new();
        for (i, p) in parents.iter().enumerate() {
            match *p {
                None => roots.push(i),
                Some(p) if p < i => children[p].push(i),
                Some(p) => return Err((i, p)),
            }
        }
        Ok(PhylogenyForest {
            parents: parents.to_vec(),
            children,
            roots,
        })
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    /// Number of nodes on the path from `node` up to its root, inclusive.
    pub fn depth(&self, node: usize) -> usize {
        self.ancestry(node).len()
    }

    /// `node`, its parent, ..., its root.
    pub fn ancestry(&self, node: usize) -> Vec<usize> {
        let mut chain = vec![node];
        let mut cur = node;
        while let Some(p) = self.parents[cur] {
            chain.push(p);
            cur = p;
        }
        chain
    }

    /// Subtree sizes, counting each node once. Relies on parents preceding
    /// children, so a reverse sweep suffices.
    pub fn subtree_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![1u64; self.len()];
        for i in (0..self.len()).rev() {
            if let Some(p) = self.parents[i] {
                sizes[p] += sizes[i];
            }
        }
        sizes
    }

    /// The forest restricted to the first `n` positions.
    pub fn prefix(&self, n: usize) -> PhylogenyForest {
        PhylogenyForest::from_parents(&self.parents[..n]).expect("prefix of a valid forest")
    }
}
