//! Partitioning of the training pages into `k` ordered batches.
//!
//! The sorted curriculum ranks pages by their ground-truth box count
//! (descending, ties by ascending page id) and slices the ranking into `k`
//! contiguous batches whose sizes differ by at most one, with the extra pages
//! going to the earliest batches.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curriculum {
    pub k: usize,
    /// Page ids of `B_1..B_k`.
    pub batches: Vec<Vec<String>>,
}

/// Sizes of `k` near-equal slices of `n` items; the first `n % k` get one extra.
pub fn batch_sizes(n: usize, k: usize) -> Vec<usize> {
    let (q, r) = (n / k, n % k);
    (0..k).map(|i| q + usize::from(i < r)).collect()
}

fn check_k(corpus: &Corpus, k: usize) -> Result<()> {
    if k == 0 || k > corpus.len() {
        return Err(Error::Curriculum(format!(
            "k = {k} must lie in [1, {}] (number of pages)",
            corpus.len()
        )));
    }
    Ok(())
}

fn slice(ids: Vec<String>, k: usize) -> Curriculum {
    let mut rest = ids.into_iter();
    let batches = batch_sizes(rest.len(), k)
        .into_iter()
        .map(|size| rest.by_ref().take(size).collect())
        .collect();
    Curriculum { k, batches }
}

/// Sort by ground-truth count, descending, then split into `k` batches.
pub fn build_sorted_curriculum(corpus: &Corpus, k: usize) -> Result<Curriculum> {
    check_k(corpus, k)?;
    let mut ranked: Vec<(usize, &str)> = corpus
        .pages
        .iter()
        .map(|p| (p.ground_truth_count(), p.id()))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(slice(ranked.into_iter().map(|(_, id)| id.to_owned()).collect(), k))
}

/// Seeded uniform permutation split into `k` batches.
pub fn build_random_curriculum(corpus: &Corpus, k: usize, seed: u64) -> Result<Curriculum> {
    check_k(corpus, k)?;
    let mut ids: Vec<String> = corpus.pages.iter().map(|p| p.id().to_owned()).collect();
    ids.shuffle(&mut seeding::rng(seed, 0));
    Ok(slice(ids, k))
}

impl Curriculum {
    pub fn sizes(&self) -> Vec<usize> {
        self.batches.iter().map(Vec::len).collect()
    }

    /// Checks that the batches partition exactly the pages of `corpus`.
    pub fn check_partition(&self, corpus: &Corpus) -> Result<()> {
        if self.k != self.batches.len() || self.k == 0 {
            return Err(Error::Curriculum(format!(
                "k = {} but {} batches",
                self.k,
                self.batches.len()
            )));
        }
        let index = corpus.index();
        let mut seen = HashSet::new();
        for id in self.batches.iter().flatten() {
            if !index.contains_key(id.as_str()) {
                return Err(Error::Curriculum(format!("page {id} is not in the corpus")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Curriculum(format!("page {id} appears twice")));
            }
        }
        if seen.len() != corpus.len() {
            return Err(Error::Curriculum(format!(
                "curriculum covers {} of {} pages",
                seen.len(),
                corpus.len()
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::io(path, e.into()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Curriculum(format!("{}: {e}", path.display())))
    }
}
