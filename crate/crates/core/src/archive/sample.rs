use std::cmp::Reverse;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{rating_order, ArchiveEntry, EntryId};
use crate::rng::Rng;

pub const SAMPLE_CATEGORY_SIZE: usize = 20;
pub const SAMPLE_SIZE: usize = 5 * SAMPLE_CATEGORY_SIZE;
/// Window of most recent publications the "best new" category draws from.
const RECENT_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TopRated,
    BestNew,
    MostBranched,
    Latest,
    Random,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::TopRated,
        Category::BestNew,
        Category::MostBranched,
        Category::Latest,
        Category::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::TopRated => "top_rated",
            Category::BestNew => "best_new",
            Category::MostBranched => "most_branched",
            Category::Latest => "latest",
            Category::Random => "random",
        }
    }
}

/// Five mutually exclusive categories, filled in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveSample {
    pub top_rated: Vec<EntryId>,
    pub best_new: Vec<EntryId>,
    pub most_branched: Vec<EntryId>,
    pub latest: Vec<EntryId>,
    pub random: Vec<EntryId>,
}

impl ArchiveSample {
    pub fn category(&self, c: Category) -> &[EntryId] {
        match c {
            Category::TopRated => &self.top_rated,
            Category::BestNew => &self.best_new,
            Category::MostBranched => &self.most_branched,
            Category::Latest => &self.latest,
            Category::Random => &self.random,
        }
    }

    /// All ids in presentation order, tagged with their category.
    pub fn items(&self) -> Vec<(Category, EntryId)> {
        Category::ALL
            .iter()
            .flat_map(|&c| self.category(c).iter().map(move |&id| (c, id)))
            .collect()
    }

    pub fn ids(&self) -> Vec<EntryId> {
        self.items().into_iter().map(|(_, id)| id).collect()
    }

    pub fn len(&self) -> usize {
        Category::ALL.iter().map(|&c| self.category(c).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: EntryId) -> bool {
        Category::ALL.iter().any(|&c| self.category(c).contains(&id))
    }
}

/// Draws the branching sample. Below 100 entries every entry appears exactly
/// once and later categories may come up short.
pub(super) fn draw(entries: &[ArchiveEntry], rng: &mut Rng) -> ArchiveSample {
    let n = entries.len();
    let mut taken = vec![false; n];
    let take = |order: Vec<usize>, taken: &mut Vec<bool>| -> Vec<EntryId> {
        let picked: Vec<usize> = order
            .into_iter()
            .filter(|&i| !taken[i])
            .take(SAMPLE_CATEGORY_SIZE)
            .collect();
        for &i in &picked {
            taken[i] = true;
        }
        picked.into_iter().map(|i| entries[i].id).collect()
    };

    let mut by_rating: Vec<usize> = (0..n).collect();
    by_rating.sort_by(|&a, &b| rating_order(&entries[a], &entries[b]));
    let top_rated = take(by_rating, &mut taken);

    let mut recent: Vec<usize> = (n.saturating_sub(RECENT_WINDOW)..n).collect();
    recent.sort_by(|&a, &b| rating_order(&entries[a], &entries[b]));
    let best_new = take(recent, &mut taken);

    let mut by_branches: Vec<usize> = (0..n).collect();
    by_branches.sort_by_key(|&i| (Reverse(entries[i].branch_count), Reverse(entries[i].id)));
    let most_branched = take(by_branches, &mut taken);

    let latest = take((0..n).rev().collect(), &mut taken);

    let remainder: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    let k = remainder.len().min(SAMPLE_CATEGORY_SIZE);
    let random = index::sample(rng, remainder.len(), k)
        .into_iter()
        .map(|j| entries[remainder[j]].id)
        .collect();

    ArchiveSample {
        top_rated,
        best_new,
        most_branched,
        latest,
        random,
    }
}
