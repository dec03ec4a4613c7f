use serde::{Deserialize, Serialize};

/// Dense storage for a symmetric `K x K` table indexed by unordered cluster
/// pairs. Entry `(k, l)` and `(l, k)` share one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTable<T> {
    k: usize,
    // upper triangle, row-major: (0,0), (0,1), ..., (0,K-1), (1,1), ...
    entries: Vec<T>,
}

impl<T> BlockTable<T> {
    pub fn from_fn(k: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut entries = Vec::with_capacity(k * (k + 1) / 2);
        for a in 0..k {
            for b in a..k {
                entries.push(f(a, b));
            }
        }
        Self { k, entries }
    }

    /// Builds from upper-triangle entries in row-major order.
    pub fn from_upper(k: usize, entries: Vec<T>) -> Option<Self> {
        (entries.len() == k * (k + 1) / 2).then_some(Self { k, entries })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pair_count(&self) -> usize {
        self.entries.len()
    }

    pub fn index(&self, k: usize, l: usize) -> usize {
        let (a, b) = if k <= l { (k, l) } else { (l, k) };
        a * self.k - a * (a + 1) / 2 + b
    }

    pub fn get(&self, k: usize, l: usize) -> &T {
        &self.entries[self.index(k, l)]
    }

    pub fn get_mut(&mut self, k: usize, l: usize) -> &mut T {
        let idx = self.index(k, l);
        &mut self.entries[idx]
    }

    /// Unordered pairs `(k, l)` with `k <= l`, in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let k = self.k;
        (0..k).flat_map(move |a| (a..k).map(move |b| (a, b)))
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        self.pairs().zip(self.entries.iter())
    }

    pub fn values(&self) -> &[T] {
        &self.entries
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> BlockTable<U> {
        BlockTable { k: self.k, entries: self.entries.iter().map(&mut f).collect() }
    }

    /// Relabels clusters: entry `(k, l)` of the result is entry
    /// `(perm[k], perm[l])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self
    where
        T: Clone,
    {
        Self::from_fn(self.k, |a, b| self.get(perm[a], perm[b]).clone())
    }
}
