//! Fixed-capacity bit sets over dense state indices.
//!
//! All set-valued data in the solver (knowledges, winning families, supports,
//! final-state sets) lives in [`StateSet`]. The capacity is the number of
//! states of the arena the set talks about; sets of different capacities never
//! mix. Ordering and hashing are structural, so sets can key deterministic
//! maps.

use std::fmt;

/// A set of dense indices below a fixed capacity, packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateSet {
    capacity: usize,
    words: Vec<u64>,
}

impl StateSet {
    /// The empty set over `capacity` indices.
    pub fn empty(capacity: usize) -> Self {
        StateSet {
            capacity,
            words: vec![0; capacity.div_ceil(64)],
        }
    }

    /// The full set `{0, …, capacity-1}`.
    pub fn full(capacity: usize) -> Self {
        let mut s = Self::empty(capacity);
        for i in 0..capacity {
            s.insert(i);
        }
        s
    }

    /// Builds a set from an iterator of indices.
    pub fn from_iter<I: IntoIterator<Item = usize>>(capacity: usize, iter: I) -> Self {
        let mut s = Self::empty(capacity);
        for i in iter {
            s.insert(i);
        }
        s
    }

    /// Singleton `{i}`.
    pub fn singleton(capacity: usize, i: usize) -> Self {
        Self::from_iter(capacity, [i])
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.capacity);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        debug_assert!(i < self.capacity);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        debug_assert!(i < self.capacity);
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &StateSet) {
        debug_assert_eq!(self.capacity, other.capacity);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &StateSet) {
        debug_assert_eq!(self.capacity, other.capacity);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn difference_with(&mut self, other: &StateSet) {
        debug_assert_eq!(self.capacity, other.capacity);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        let mut s = self.clone();
        s.union_with(other);
        s
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        let mut s = self.clone();
        s.intersect_with(other);
        s
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        let mut s = self.clone();
        s.difference_with(other);
        s
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        debug_assert_eq!(self.capacity, other.capacity);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn intersects(&self, other: &StateSet) -> bool {
        debug_assert_eq!(self.capacity, other.capacity);
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    /// Iterates the member indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, w)| {
            let mut w = *w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    /// Smallest member, if any.
    pub fn first(&self) -> Option<usize> {
        self.iter().next()
    }

    /// Enumerates every subset of this set, the empty set first.
    ///
    /// Intended for per-observation-class families, so the member count stays
    /// small; panics above 63 members.
    pub fn subsets(&self) -> Vec<StateSet> {
        let members: Vec<usize> = self.iter().collect();
        assert!(members.len() < 64, "subset enumeration over too large a set");
        let mut out = Vec::with_capacity(1 << members.len());
        for mask in 0u64..(1u64 << members.len()) {
            let mut s = StateSet::empty(self.capacity);
            for (j, &m) in members.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    s.insert(m);
                }
            }
            out.push(s);
        }
        out
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_ops() {
        let mut a = StateSet::empty(70);
        a.insert(0);
        a.insert(65);
        assert!(a.contains(0) && a.contains(65) && !a.contains(3));
        assert_eq!(a.len(), 2);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 65]);

        let b = StateSet::from_iter(70, [65, 69]);
        assert!(a.intersects(&b));
        assert_eq!(a.intersection(&b).iter().collect::<Vec<_>>(), vec![65]);
        assert!(a.intersection(&b).is_subset(&a));
        assert_eq!(a.union(&b).len(), 3);
        assert_eq!(a.difference(&b).iter().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn subsets_enumeration() {
        let s = StateSet::from_iter(10, [1, 4, 7]);
        let subs = s.subsets();
        assert_eq!(subs.len(), 8);
        assert!(subs[0].is_empty());
        assert!(subs.iter().all(|c| c.is_subset(&s)));
    }
}
