//! Canonical indexing of actor pairs.
//!
//! Relations of an undirected network on `n` actors are stored as a vector of
//! length `n(n-1)/2`, ordered by a column-wise vectorization of the upper
//! triangle of the adjacency matrix: position `d` of pair `(i, j)`, `i < j`,
//! is `j(j-1)/2 + i`.
//!
//! Ordered pairs of relations fall into three classes depending on how many
//! actors they share; the class sizes drive the correlation estimator's
//! normalizing constants.

use crate::error::{PxError, Result};
use rand::Rng;

/// Index mapping between actor pairs `(i, j)`, `i < j < n`, and positions in
/// the vectorized upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationIndex {
    n: usize,
}

impl RelationIndex {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(PxError::Domain(format!("need at least 3 actors, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn actor_count(&self) -> usize {
        self.n
    }

    /// Number of relations, `n(n-1)/2`.
    pub fn len(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of pair `(i, j)` in column-wise upper-triangle order.
    pub fn pair_to_index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= j || j >= self.n {
            return Err(PxError::Domain(format!(
                "pair ({i}, {j}) invalid for n = {}",
                self.n
            )));
        }
        Ok(j * (j - 1) / 2 + i)
    }

    /// Inverse of [`pair_to_index`](Self::pair_to_index).
    pub fn index_to_pair(&self, d: usize) -> (usize, usize) {
        debug_assert!(d < self.len());
        // j is the largest integer with j(j-1)/2 <= d.
        let j = ((1.0 + (1.0 + 8.0 * d as f64).sqrt()) / 2.0).floor() as usize;
        let j = if j * (j - 1) / 2 > d { j - 1 } else { j };
        (d - j * (j - 1) / 2, j)
    }

    /// Iterate all pairs in index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (1..n).flat_map(move |j| (0..j).map(move |i| (i, j)))
    }
}

/// How an ordered pair of relations shares actors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    /// Same relation twice.
    Identical,
    /// Exactly one shared actor.
    ShareActor,
    /// No shared actor.
    Disjoint,
}

impl PairClass {
    pub fn of(a: (usize, usize), b: (usize, usize)) -> PairClass {
        let shared = usize::from(a.0 == b.0 || a.0 == b.1)
            + usize::from(a.1 == b.0 || a.1 == b.1);
        match shared {
            2 => PairClass::Identical,
            1 => PairClass::ShareActor,
            _ => PairClass::Disjoint,
        }
    }
}

/// Ordered (matrix-entry) counts of the three relation-pair classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairClassCounts {
    pub identical: u64,
    pub share_actor: u64,
    pub disjoint: u64,
}

/// Counts of ordered relation pairs per class: `n(n-1)/2` identical,
/// `n(n-1)(n-2)` sharing one actor, and `n(n-1)/2 * (n-2)(n-3)/2` disjoint.
/// The three counts sum to the square of the relation count.
pub fn pair_class_counts(n: usize) -> Result<PairClassCounts> {
    if n < 3 {
        return Err(PxError::Domain(format!("need at least 3 actors, got {n}")));
    }
    let nu = n as u64;
    let relations = nu * (nu - 1) / 2;
    Ok(PairClassCounts {
        identical: relations,
        share_actor: nu * (nu - 1) * (nu - 2),
        disjoint: relations * (nu - 2) * (nu - 3) / 2,
    })
}

/// Sample `m` unordered pairs of relations that share exactly one actor,
/// uniformly over admissible pairs (both relations observed when a mask is
/// given). Sampling is with replacement; if the request meets or exceeds the
/// admissible population the whole population is returned instead.
///
/// Uniformity: each admissible pair has a unique shared actor, so drawing the
/// shared actor with probability proportional to its number of admissible
/// neighbor pairs and then a uniform neighbor pair is uniform overall.
pub fn sample_share_actor_pairs<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    observed: Option<&[bool]>,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let idx = RelationIndex::new(n)?;
    if m == 0 {
        return Err(PxError::Domain("sample size must be at least 1".into()));
    }
    if let Some(mask) = observed {
        if mask.len() != idx.len() {
            return Err(PxError::Domain(format!(
                "mask length {} != relation count {}",
                mask.len(),
                idx.len()
            )));
        }
    }
    let is_observed = |d: usize| observed.map_or(true, |m| m[d]);

    // Observed neighbor relation lists per actor.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j) in idx.pairs() {
        let d = idx.pair_to_index(i, j)?;
        if is_observed(d) {
            neighbors[i].push(d);
            neighbors[j].push(d);
        }
    }
    let weights: Vec<u64> = neighbors
        .iter()
        .map(|nb| (nb.len() * nb.len().saturating_sub(1) / 2) as u64)
        .collect();
    let population: u64 = weights.iter().sum();
    if population == 0 {
        return Err(PxError::Degenerate(
            "no observed relation pairs share an actor".into(),
        ));
    }

    // The request is quoted against the ordered (matrix-entry) population,
    // matching the class-count convention; each unordered pair counts twice.
    if m as u64 >= 2 * population {
        let mut all = Vec::with_capacity(population as usize);
        for nb in &neighbors {
            for a in 0..nb.len() {
                for b in a + 1..nb.len() {
                    all.push((nb[a], nb[b]));
                }
            }
        }
        return Ok(all);
    }

    // Cumulative weights for actor choice.
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0u64;
    for &w in &weights {
        acc += w;
        cum.push(acc);
    }
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let t = rng.random_range(0..population);
        let actor = cum.partition_point(|&c| c <= t);
        let nb = &neighbors[actor];
        let a = rng.random_range(0..nb.len());
        let b = loop {
            let b = rng.random_range(0..nb.len());
            if b != a {
                break b;
            }
        };
        out.push((nb[a], nb[b]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Brute-force column-wise enumeration of the upper triangle.
    fn enumerate_pairs(n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..n {
            for i in 0..j {
                out.push((i, j));
            }
        }
        out
    }

    #[test]
    fn index_matches_enumeration() {
        for n in 3..=12 {
            let idx = RelationIndex::new(n).unwrap();
            let pairs = enumerate_pairs(n);
            assert_eq!(pairs.len(), idx.len());
            for (d, &(i, j)) in pairs.iter().enumerate() {
                assert_eq!(idx.pair_to_index(i, j).unwrap(), d);
                assert_eq!(idx.index_to_pair(d), (i, j));
            }
        }
    }

    #[test]
    fn spec_index_examples() {
        let idx = RelationIndex::new(4).unwrap();
        assert_eq!(idx.pair_to_index(0, 1).unwrap(), 0);
        assert_eq!(idx.pair_to_index(2, 3).unwrap(), 5);
        assert_eq!(idx.pair_to_index(0, 3).unwrap(), 3);
    }

    #[test]
    fn invalid_pairs_rejected() {
        let idx = RelationIndex::new(5).unwrap();
        assert!(idx.pair_to_index(2, 2).is_err());
        assert!(idx.pair_to_index(3, 1).is_err());
        assert!(idx.pair_to_index(0, 5).is_err());
        assert!(RelationIndex::new(2).is_err());
    }

    /// O(n^4) oracle: classify every ordered pair of relations.
    fn brute_force_counts(n: usize) -> (u64, u64, u64) {
        let pairs = enumerate_pairs(n);
        let (mut c1, mut c2, mut c3) = (0u64, 0u64, 0u64);
        for &a in &pairs {
            for &b in &pairs {
                match PairClass::of(a, b) {
                    PairClass::Identical => c1 += 1,
                    PairClass::ShareActor => c2 += 1,
                    PairClass::Disjoint => c3 += 1,
                }
            }
        }
        (c1, c2, c3)
    }

    #[test]
    fn class_counts_match_brute_force() {
        for n in 3..=9 {
            let c = pair_class_counts(n).unwrap();
            let (b1, b2, b3) = brute_force_counts(n);
            assert_eq!((c.identical, c.share_actor, c.disjoint), (b1, b2, b3), "n={n}");
            let rel = c.identical;
            assert_eq!(c.identical + c.share_actor + c.disjoint, rel * rel);
        }
    }

    #[test]
    fn spec_count_examples() {
        let c4 = pair_class_counts(4).unwrap();
        assert_eq!((c4.identical, c4.share_actor, c4.disjoint), (6, 24, 6));
        let c5 = pair_class_counts(5).unwrap();
        assert_eq!((c5.identical, c5.share_actor, c5.disjoint), (10, 60, 30));
        let c3 = pair_class_counts(3).unwrap();
        assert_eq!((c3.identical, c3.share_actor, c3.disjoint), (3, 6, 0));
        assert!(pair_class_counts(2).is_err());
    }

    #[test]
    fn sampled_pairs_share_exactly_one_actor() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 20;
        let idx = RelationIndex::new(n).unwrap();
        let m = 10 * n * (n - 1);
        let pairs = sample_share_actor_pairs(n, m, None, &mut rng).unwrap();
        assert_eq!(pairs.len(), m);
        for &(d1, d2) in &pairs {
            let a = idx.index_to_pair(d1);
            let b = idx.index_to_pair(d2);
            assert_eq!(PairClass::of(a, b), PairClass::ShareActor);
        }
    }

    #[test]
    fn small_population_short_circuit() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        // n=4 has 12 unordered share-actor pairs; asking for 24 returns all 12.
        let pairs = sample_share_actor_pairs(4, 24, None, &mut rng).unwrap();
        assert_eq!(pairs.len(), 12);
        let mut seen = pairs.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn mask_excludes_actors() {
        let n = 10;
        let idx = RelationIndex::new(n).unwrap();
        let mut mask = vec![true; idx.len()];
        for (i, j) in idx.pairs() {
            if i == 0 || j == 0 {
                mask[idx.pair_to_index(i, j).unwrap()] = false;
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let pairs = sample_share_actor_pairs(n, 500, Some(&mask), &mut rng).unwrap();
        for &(d1, d2) in &pairs {
            for d in [d1, d2] {
                let (i, j) = idx.index_to_pair(d);
                assert!(i != 0 && j != 0);
            }
        }
    }

    #[test]
    fn fully_masked_is_degenerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mask = vec![false; 10];
        let err = sample_share_actor_pairs(5, 5, Some(&mask), &mut rng).unwrap_err();
        assert!(matches!(err, PxError::Degenerate(_)));
    }

    #[test]
    fn sampling_is_uniform_over_pairs() {
        // n=5: 30 unordered share-actor pairs. Frequencies over 10^6 draws stay
        // within 4 standard errors of uniform. Draw in small batches so the
        // with-replacement path (not the population short-circuit) is tested.
        let n = 5;
        let batch = 50usize;
        let batches = 20_000usize;
        let draws = batch * batches;
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..batches {
            let pairs = sample_share_actor_pairs(n, batch, None, &mut rng).unwrap();
            for &(a, b) in &pairs {
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0usize) += 1;
            }
        }
        let n_pairs = 30.0;
        assert_eq!(counts.len(), 30);
        let p = 1.0 / n_pairs;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for (&key, &c) in &counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - p).abs() < 4.0 * se,
                "pair {key:?}: freq {freq} vs {p} (se {se})"
            );
        }
    }
}
