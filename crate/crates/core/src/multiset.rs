//! Finite multisets with occurrence counts.
//!
//! Elements absent from the map have occurrence zero. The map never stores a
//! zero count, so two multisets with the same occurrences compare equal
//! regardless of how they were built.

use std::collections::btree_map::{self, BTreeMap};
use std::fmt;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multiset<T: Ord> {
    counts: BTreeMap<T, usize>,
}

impl<T: Ord> Default for Multiset<T> {
    fn default() -> Self {
        Multiset {
            counts: BTreeMap::new(),
        }
    }
}

impl<T: Ord> Multiset<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one occurrence of `elem`.
    pub fn insert(&mut self, elem: T) {
        self.insert_n(elem, 1);
    }

    /// Adds `n` occurrences of `elem`. Inserting zero occurrences is a no-op.
    pub fn insert_n(&mut self, elem: T, n: usize) {
        if n > 0 {
            *self.counts.entry(elem).or_insert(0) += n;
        }
    }

    /// Removes one occurrence of `elem`, returning whether anything was removed.
    pub fn remove(&mut self, elem: &T) -> bool {
        match self.counts.get_mut(elem) {
            Some(c) if *c > 1 => {
                *c -= 1;
                true
            }
            Some(_) => {
                self.counts.remove(elem);
                true
            }
            None => false,
        }
    }

    pub fn occurrence(&self, elem: &T) -> usize {
        self.counts.get(elem).copied().unwrap_or(0)
    }

    pub fn contains(&self, elem: &T) -> bool {
        self.counts.contains_key(elem)
    }

    /// Total number of elements, counting multiplicity.
    pub fn len(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of distinct elements.
    pub fn distinct_len(&self) -> usize {
        self.counts.len()
    }

    /// Distinct elements with their occurrence counts, in ascending order.
    pub fn iter_counts(&self) -> btree_map::Iter<'_, T, usize> {
        self.counts.iter()
    }

    /// Every element repeated by its occurrence count.
    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.counts
            .iter()
            .flat_map(|(e, &c)| std::iter::repeat_n(e, c))
    }

    /// True iff every element occurs at most as often here as in `other`.
    pub fn is_multisubset(&self, other: &Multiset<T>) -> bool {
        self.counts
            .iter()
            .all(|(e, &c)| c <= other.occurrence(e))
    }
}

impl<T: Ord + Clone> Multiset<T> {
    /// Occurrence-summing union.
    pub fn union(&self, other: &Multiset<T>) -> Multiset<T> {
        let mut out = self.clone();
        out.extend_from(other);
        out
    }

    pub fn extend_from(&mut self, other: &Multiset<T>) {
        for (e, &c) in &other.counts {
            self.insert_n(e.clone(), c);
        }
    }
}

impl<T: Ord> FromIterator<T> for Multiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for e in iter {
            m.insert(e);
        }
        m
    }
}

impl<T: Ord> Extend<T> for Multiset<T> {
    fn extend<I: IntoIterator<Item = T>>(&mut self, iter: I) {
        for e in iter {
            self.insert(e);
        }
    }
}

impl<T: Ord + fmt::Debug> fmt::Debug for Multiset<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}
