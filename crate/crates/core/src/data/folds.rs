use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Cell;
use crate::error::{Error, Result};

/// Assignment of each observation to one of `k` cross-fitting folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn from_labels(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Usage("number of folds must be positive".into()));
        }
        if let Some(&bad) = fold_of.iter().find(|&&f| f >= k) {
            return Err(Error::Usage(format!("fold label {bad} out of range 0..{k}")));
        }
        Ok(FoldAssignment { fold_of, k })
    }

    /// Everything in fold 0. Used when nuisances are known and need no fitting.
    pub fn single(n: usize) -> Self {
        FoldAssignment { fold_of: vec![0; n], k: 1 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn fold(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    /// Indices in fold `f`, ascending.
    pub fn indices(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Indices outside fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }

    /// Per-fold cell counts, `counts[fold][cell]`.
    pub fn cell_counts(&self, cells: &[Cell]) -> Vec<[usize; 4]> {
        let mut counts = vec![[0usize; 4]; self.k];
        for (i, c) in cells.iter().enumerate() {
            counts[self.fold_of[i]][c.index()] += 1;
        }
        counts
    }

    /// Fails with an overlap error when some fold misses a cell.
    pub fn check_cells(&self, cells: &[Cell]) -> Result<()> {
        if cells.len() != self.n() {
            return Err(Error::Shape { expected: self.n(), got: cells.len() });
        }
        for (f, counts) in self.cell_counts(cells).iter().enumerate() {
            for c in Cell::ALL {
                if counts[c.index()] == 0 {
                    return Err(Error::Overlap(format!("fold {f} has no observations in cell {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Stratified fold assignment.
///
/// Within each cell the observations are shuffled by a generator seeded from
/// `seed` and dealt round-robin. The dealing position carries over from one
/// cell to the next, so both total fold sizes and per-cell fold counts differ
/// by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64, cells: &[Cell]) -> Result<FoldAssignment> {
    if cells.len() != n {
        return Err(Error::Shape { expected: n, got: cells.len() });
    }
    if k < 2 || k > n {
        return Err(Error::Usage(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut by_cell: [Vec<usize>; 4] = Default::default();
    for (i, c) in cells.iter().enumerate() {
        by_cell[c.index()].push(i);
    }
    for c in Cell::ALL {
        let count = by_cell[c.index()].len();
        if count < k {
            return Err(Error::InfeasibleStratification { cell: c.to_string(), count, k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; n];
    let mut next = 0;
    for members in by_cell.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { fold_of, k })
}
