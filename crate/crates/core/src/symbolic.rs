//! Two-shift combinatorics: primitive symbol cycles over {-1, +1}, the
//! closed-form census of least-period points and cycles, and seed points
//! placed in the coding bands for the Newton solver.
//!
//! Coding convention: +1 is the left band J1, -1 the right band J2. A cycle
//! is stored as the lexicographically smallest rotation of its word, with
//! -1 ordered below +1; primitive words only, so the word length is the
//! least period.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::family::{HorseshoeGeometry, Vec2};

/// Exhaustive enumeration is capped at this period.
pub const ENUMERATION_CAP: u32 = 24;
/// Closed-form census cap (2^k must fit in 128-bit arithmetic).
pub const CENSUS_CAP: u32 = 126;

/// A primitive cycle of the full two-shift, canonically rotated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SymbolCycle {
    word: Vec<i8>,
}

impl SymbolCycle {
    /// Builds a cycle from a word of +1/-1 symbols, canonicalizing the
    /// rotation; rejects empty, non-symbol, and imprimitive words.
    pub fn new(word: Vec<i8>) -> Result<Self> {
        if word.is_empty() {
            return Err(CoreError::InvalidCycle {
                reason: "empty word".into(),
            });
        }
        if let Some(&bad) = word.iter().find(|&&s| s != 1 && s != -1) {
            return Err(CoreError::InvalidCycle {
                reason: format!("symbol {bad} is not +1 or -1"),
            });
        }
        if least_period(&word) != word.len() {
            return Err(CoreError::InvalidCycle {
                reason: format!(
                    "word of length {} is not primitive (least period {})",
                    word.len(),
                    least_period(&word)
                ),
            });
        }
        Ok(Self {
            word: canonical_rotation(&word),
        })
    }

    /// Least period = word length.
    pub fn k(&self) -> usize {
        self.word.len()
    }

    /// Canonical word, smallest rotation first (-1 < +1).
    pub fn word(&self) -> &[i8] {
        &self.word
    }

    /// True iff the product of the symbols is +1, i.e. the cycle visits the
    /// right band an even number of times.
    pub fn is_even(&self) -> bool {
        self.word.iter().filter(|&&s| s == -1).count() % 2 == 0
    }

    /// Filename-safe label: `p` for +1, `m` for -1.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SymbolCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.word {
            f.write_str(if s == 1 { "p" } else { "m" })?;
        }
        Ok(())
    }
}

impl FromStr for SymbolCycle {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let word = s
            .chars()
            .map(|c| match c {
                'p' | '+' => Ok(1i8),
                'm' | '-' => Ok(-1i8),
                other => Err(CoreError::InvalidCycle {
                    reason: format!("unexpected character `{other}`"),
                }),
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::new(word)
    }
}

fn least_period(word: &[i8]) -> usize {
    let n = word.len();
    'outer: for d in 1..=n {
        if !n.is_multiple_of(d) {
            continue;
        }
        for i in d..n {
            if word[i] != word[i % d] {
                continue 'outer;
            }
        }
        return d;
    }
    n
}

fn canonical_rotation(word: &[i8]) -> Vec<i8> {
    let n = word.len();
    let mut best: Option<Vec<i8>> = None;
    for r in 0..n {
        let rot: Vec<i8> = (0..n).map(|i| word[(i + r) % n]).collect();
        if best.as_ref().is_none_or(|b| rot < *b) {
            best = Some(rot);
        }
    }
    best.unwrap()
}

/// Census of the full two-shift at one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShiftCensus {
    pub k: u32,
    /// Points of least period k.
    pub points: u128,
    /// Cycles of least period k.
    pub orbits: u128,
    /// Cycles with symbol product +1.
    pub even_orbits: u128,
    /// Sum of even-cycle counts over j < k with k/j a power of two.
    #[serde(rename = "L")]
    pub l: u128,
}

/// Closed-form census: points by Mobius inversion over the divisors of k,
/// even cycles by the halving recursion even(k) = (orbits(k) - L(k)) / 2.
pub fn census(k: u32) -> Result<ShiftCensus> {
    if k == 0 || k > CENSUS_CAP {
        return Err(CoreError::EnumerationWindow { k, cap: CENSUS_CAP });
    }
    let points = least_period_points(k);
    assert!(
        points.is_multiple_of(k as u128),
        "least-period point count must be divisible by k"
    );
    let orbits = points / k as u128;
    let l = halving_sum(k);
    assert!(
        orbits >= l && (orbits - l).is_multiple_of(2),
        "even-cycle recursion must divide evenly (k = {k})"
    );
    Ok(ShiftCensus {
        k,
        points,
        orbits,
        even_orbits: (orbits - l) / 2,
        l,
    })
}

/// Number of two-shift points of least period k: sum over d | k of
/// mu(d) 2^(k/d).
fn least_period_points(k: u32) -> u128 {
    let mut total: i128 = 0;
    for d in 1..=k {
        if k.is_multiple_of(d) {
            total += mobius(d) as i128 * (1i128 << (k / d));
        }
    }
    debug_assert!(total >= 0);
    total as u128
}

/// L(k): even cycles accumulated along the halving chain k/2, k/4, ...
fn halving_sum(k: u32) -> u128 {
    let mut sum = 0u128;
    let mut j = k;
    while j.is_multiple_of(2) {
        j /= 2;
        sum += even_cycles(j);
    }
    sum
}

fn even_cycles(k: u32) -> u128 {
    let orbits = least_period_points(k) / k as u128;
    (orbits - halving_sum(k)) / 2
}

fn mobius(n: u32) -> i32 {
    let mut n = n;
    let mut primes = 0;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return 0; // squareful
            }
            primes += 1;
        }
        p += 1;
    }
    if n > 1 {
        primes += 1;
    }
    if primes % 2 == 0 {
        1
    } else {
        -1
    }
}

/// All primitive cycles of least period exactly k, in lexicographic order of
/// their canonical words (Duval's Lyndon-word generator; a Lyndon word is
/// precisely the canonical rotation of a primitive cycle).
pub fn enumerate_cycles(k: u32) -> Result<Vec<SymbolCycle>> {
    if k == 0 || k > ENUMERATION_CAP {
        return Err(CoreError::EnumerationWindow {
            k,
            cap: ENUMERATION_CAP,
        });
    }
    let n = k as usize;
    let mut out = Vec::new();
    let mut w: Vec<i8> = vec![-1];
    loop {
        if w.len() == n {
            // every word reached here is Lyndon: primitive and canonical
            out.push(SymbolCycle { word: w.clone() });
        }
        let m = w.len();
        while w.len() < n {
            let c = w[w.len() - m];
            w.push(c);
        }
        while w.last() == Some(&1) {
            w.pop();
        }
        match w.last_mut() {
            None => break,
            Some(last) => *last = 1,
        }
    }
    Ok(out)
}

/// Newton seeds for a cycle: x at the midpoint of the band the symbol names
/// (+1 -> J1, -1 -> J2), y copying the previous point's x cyclically.
pub fn seed_points(cycle: &SymbolCycle, geo: &HorseshoeGeometry) -> Vec<Vec2> {
    let k = cycle.k();
    let xs: Vec<f64> = cycle
        .word()
        .iter()
        .map(|&s| {
            if s == 1 {
                geo.j1.midpoint()
            } else {
                geo.j2.midpoint()
            }
        })
        .collect();
    (0..k)
        .map(|i| Vec2::new(xs[i], xs[(i + k - 1) % k]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{geometry_for, FamilySpec};
    use std::collections::BTreeSet;

    /// Independent oracle: scan all 2^k words, keep primitive ones, and
    /// dedupe by canonical rotation.
    fn brute_force(k: u32) -> (BTreeSet<Vec<i8>>, u128, u128) {
        let n = k as usize;
        let mut canon = BTreeSet::new();
        for bits in 0u32..(1u32 << n) {
            let word: Vec<i8> = (0..n)
                .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            if least_period(&word) != n {
                continue;
            }
            canon.insert(canonical_rotation(&word));
        }
        let even = canon
            .iter()
            .filter(|w| w.iter().filter(|&&s| s == -1).count() % 2 == 0)
            .count() as u128;
        let total = canon.len() as u128;
        (canon, total, even)
    }

    #[test]
    fn census_matches_hand_table_through_k8() {
        let points = [2u128, 2, 6, 12, 30, 54, 126, 240];
        let orbits = [2u128, 1, 2, 3, 6, 9, 18, 30];
        let even = [1u128, 0, 1, 1, 3, 4, 9, 14];
        let l = [0u128, 1, 0, 1, 0, 1, 0, 2];
        for k in 1..=8u32 {
            let c = census(k).unwrap();
            let i = (k - 1) as usize;
            assert_eq!(c.points, points[i], "points at k={k}");
            assert_eq!(c.orbits, orbits[i], "orbits at k={k}");
            assert_eq!(c.even_orbits, even[i], "even orbits at k={k}");
            assert_eq!(c.l, l[i], "L at k={k}");
        }
    }

    #[test]
    fn census_matches_brute_force() {
        for k in 1..=14u32 {
            let (_, total, even) = brute_force(k);
            let c = census(k).unwrap();
            assert_eq!(c.orbits, total, "orbit count at k={k}");
            assert_eq!(c.even_orbits, even, "even count at k={k}");
        }
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for k in 1..=12u32 {
            let (canon, ..) = brute_force(k);
            let cycles = enumerate_cycles(k).unwrap();
            let got: BTreeSet<Vec<i8>> = cycles.iter().map(|c| c.word().to_vec()).collect();
            assert_eq!(got, canon, "cycle set at k={k}");
        }
    }

    #[test]
    fn enumeration_matches_census_to_the_cap() {
        for k in 1..=ENUMERATION_CAP {
            let cycles = enumerate_cycles(k).unwrap();
            let even = cycles.iter().filter(|c| c.is_even()).count() as u128;
            let c = census(k).unwrap();
            assert_eq!(cycles.len() as u128, c.orbits, "count at k={k}");
            assert_eq!(even, c.even_orbits, "even count at k={k}");
        }
    }

    #[test]
    fn enumerated_cycles_are_canonical_primitive_and_sorted() {
        for k in 1..=12u32 {
            let cycles = enumerate_cycles(k).unwrap();
            for pair in cycles.windows(2) {
                assert!(pair[0] < pair[1], "lexicographic order at k={k}");
            }
            for c in &cycles {
                assert_eq!(c.k(), k as usize);
                assert_eq!(canonical_rotation(c.word()), c.word(), "canonical");
                assert_eq!(least_period(c.word()), k as usize, "primitive");
            }
        }
    }

    #[test]
    fn odd_periods_split_evenly() {
        for k in [3u32, 5, 7, 9, 11, 13] {
            let c = census(k).unwrap();
            assert_eq!(c.l, 0);
            assert_eq!(c.even_orbits * 2, c.orbits, "half of cycles even at k={k}");
        }
    }

    #[test]
    fn prime_periods_have_closed_form() {
        for p in [2u32, 3, 5, 7, 11, 13, 17, 19, 23] {
            let c = census(p).unwrap();
            assert_eq!(c.points, (1u128 << p) - 2);
            assert_eq!(c.orbits, ((1u128 << p) - 2) / p as u128);
        }
    }

    #[test]
    fn fixed_point_cycles() {
        let cycles = enumerate_cycles(1).unwrap();
        assert_eq!(cycles.len(), 2);
        assert_eq!(cycles[0].word(), &[-1]);
        assert_eq!(cycles[1].word(), &[1]);
        assert!(!cycles[0].is_even(), "one visit to the right band is odd");
        assert!(cycles[1].is_even());
    }

    #[test]
    fn period_two_has_one_cycle() {
        let cycles = enumerate_cycles(2).unwrap();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].word(), &[-1, 1]);
        assert!(!cycles[0].is_even());
    }

    #[test]
    fn period_four_evenness() {
        let cycles = enumerate_cycles(4).unwrap();
        assert_eq!(cycles.len(), 3);
        assert_eq!(cycles.iter().filter(|c| c.is_even()).count(), 1);
    }

    #[test]
    fn even_parity_examples() {
        let c: SymbolCycle = "pmm".parse().unwrap();
        assert!(c.is_even(), "two right-band visits");
        let f: SymbolCycle = "m".parse().unwrap();
        assert!(!f.is_even());
    }

    #[test]
    fn imprimitive_words_are_rejected() {
        let err = SymbolCycle::new(vec![1, -1, 1, -1]).unwrap_err();
        assert!(matches!(err, CoreError::InvalidCycle { .. }));
        let err = SymbolCycle::new(vec![]).unwrap_err();
        assert!(matches!(err, CoreError::InvalidCycle { .. }));
        let err = SymbolCycle::new(vec![2, 1]).unwrap_err();
        assert!(matches!(err, CoreError::InvalidCycle { .. }));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let err = enumerate_cycles(25).unwrap_err();
        assert!(matches!(err, CoreError::EnumerationWindow { .. }));
        assert!(census(0).is_err());
        assert!(census(CENSUS_CAP + 1).is_err());
    }

    #[test]
    fn display_parse_roundtrip() {
        for k in 1..=8u32 {
            for c in enumerate_cycles(k).unwrap() {
                let back: SymbolCycle = c.to_string().parse().unwrap();
                assert_eq!(back, c);
            }
        }
    }

    #[test]
    fn seeds_sit_at_band_midpoints() {
        let spec = FamilySpec::unperturbed(0.3).unwrap();
        let geo = geometry_for(&spec, 9.0).unwrap();

        let fixed: SymbolCycle = "p".parse().unwrap();
        let seeds = seed_points(&fixed, &geo);
        assert_eq!(seeds, vec![Vec2::new(-3.75, -3.75)]);

        // canonical rotation of (+1, -1) starts at the -1 symbol; the seed
        // list is the same cyclic pair starting from the right band
        let two: SymbolCycle = "pm".parse().unwrap();
        assert_eq!(two.word(), &[-1, 1]);
        let seeds = seed_points(&two, &geo);
        assert_eq!(seeds, vec![Vec2::new(3.75, -3.75), Vec2::new(-3.75, 3.75)]);
    }
}
