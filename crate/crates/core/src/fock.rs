//! Occupation-number bases for fermion chains in fixed particle-number
//! sectors, and the elementary bit-level operator actions with fermionic
//! signs.
//!
//! A state is one bit word per spin species; bit `j` set means site `j` is
//! occupied by that species. Basis states are ordered products of creation
//! operators, species-major: every up-spin creation operator (ascending
//! site) stands to the left of every down-spin one (ascending site). Under
//! this ordering the sign of a same-species hop depends only on that
//! species' word, and number-conserving bilinears of one species pick up no
//! sign from the other species' block.
//!
//! Spinless chains use the up word only; the down word stays zero.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Spin species label. Spinless chains use [`Spin::Up`] throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Up,
    Dn,
}

/// Lattice site, `0 ≤ j < L`. On rings, site arithmetic is mod `L`.
pub type SiteIndex = usize;

/// Unit cell of site `j` when cells group `(2j, 2j+1)`.
pub fn cell_a(j: SiteIndex) -> usize {
    j / 2
}

/// Unit cell of site `j` when cells group `(2j-1, 2j)`.
pub fn cell_b(j: SiteIndex) -> usize {
    (j + 1) / 2
}

/// Particle-number sector: total `N` (spinless) or `(N↑, N↓)` (spinful).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Spinless { n: usize },
    Spinful { up: usize, dn: usize },
}

impl Sector {
    pub fn is_spinful(&self) -> bool {
        matches!(self, Sector::Spinful { .. })
    }
}

/// One occupation configuration: a bit word per species.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FockState {
    pub up: u64,
    pub dn: u64,
}

impl FockState {
    pub fn spinless(word: u64) -> Self {
        FockState { up: word, dn: 0 }
    }

    pub fn word(&self, spin: Spin) -> u64 {
        match spin {
            Spin::Up => self.up,
            Spin::Dn => self.dn,
        }
    }

    fn set_word(&mut self, spin: Spin, word: u64) {
        match spin {
            Spin::Up => self.up = word,
            Spin::Dn => self.dn = word,
        }
    }
}

/// Binomial coefficient, exact in `u64` for the chain lengths in scope.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// All `L`-bit words with exactly `n` bits set, in increasing numeric order
/// (Gosper's hack).
fn words_with_popcount(l: usize, n: usize) -> Vec<u64> {
    assert!(l < 64, "chain length must stay below 64 sites");
    assert!(n <= l);
    if n == 0 {
        return vec![0];
    }
    let limit: u64 = (1u64 << l) - 1;
    let mut out = Vec::with_capacity(binomial(l, n) as usize);
    let mut w: u64 = (1u64 << n) - 1;
    loop {
        out.push(w);
        let c = w & w.wrapping_neg();
        let r = w.wrapping_add(c);
        if r == 0 {
            break;
        }
        let next = (((r ^ w) >> 2) / c) | r;
        if next > limit {
            break;
        }
        w = next;
    }
    out
}

/// Rank of `w` among equal-popcount words in increasing numeric order.
fn rank_word(mut w: u64) -> u64 {
    let mut rank = 0u64;
    let mut t = 1usize;
    while w != 0 {
        let p = w.trailing_zeros() as usize;
        rank += binomial(p, t);
        t += 1;
        w &= w - 1;
    }
    rank
}

/// Enumerated basis of one particle-number sector.
///
/// States are strictly increasing under the `(up, dn)` word order, so the
/// ordering is deterministic and hash-free; `index_of` inverts it through
/// combinatorial ranking.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub l: usize,
    pub sector: Sector,
    states: Vec<FockState>,
    dn_count: u64,
}

impl FockBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> FockState {
        self.states[i]
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    /// Exact reverse lookup: ordinal of `state` in this basis.
    pub fn index_of(&self, state: FockState) -> Option<usize> {
        match self.sector {
            Sector::Spinless { n } => {
                if state.dn != 0
                    || state.up.count_ones() as usize != n
                    || state.up >> self.l != 0
                {
                    return None;
                }
                Some(rank_word(state.up) as usize)
            }
            Sector::Spinful { up, dn } => {
                if state.up.count_ones() as usize != up
                    || state.dn.count_ones() as usize != dn
                    || state.up >> self.l != 0
                    || state.dn >> self.l != 0
                {
                    return None;
                }
                Some((rank_word(state.up) * self.dn_count + rank_word(state.dn)) as usize)
            }
        }
    }
}

/// Enumerate the occupation basis of one sector in deterministic order.
pub fn enumerate_basis(l: usize, sector: Sector) -> Result<FockBasis> {
    if l == 0 || l >= 64 {
        return Err(Error::Domain(format!("chain length {l} out of range")));
    }
    let check = |n: usize| -> Result<()> {
        if n > l {
            Err(Error::Domain(format!(
                "sector particle number {n} exceeds chain length {l}"
            )))
        } else {
            Ok(())
        }
    };
    let (states, dn_count) = match sector {
        Sector::Spinless { n } => {
            check(n)?;
            let states = words_with_popcount(l, n)
                .into_iter()
                .map(FockState::spinless)
                .collect();
            (states, 1)
        }
        Sector::Spinful { up, dn } => {
            check(up)?;
            check(dn)?;
            let ups = words_with_popcount(l, up);
            let dns = words_with_popcount(l, dn);
            let mut states = Vec::with_capacity(ups.len() * dns.len());
            for &u in &ups {
                for &d in &dns {
                    states.push(FockState { up: u, dn: d });
                }
            }
            (states, dns.len() as u64)
        }
    };
    Ok(FockBasis {
        l,
        sector,
        states,
        dn_count,
    })
}

/// Apply `c†_to c_from` (one species) to a configuration.
///
/// Returns the image state and the fermionic sign, or `None` when the matrix
/// element vanishes (`from` empty or `to` occupied). The sign is the parity
/// of the occupied sites strictly between the two positions after the
/// annihilation, which matches the species-major operator ordering.
pub fn apply_hop(
    state: FockState,
    to: SiteIndex,
    from: SiteIndex,
    spin: Spin,
) -> Option<(FockState, i32)> {
    debug_assert_ne!(to, from, "hop endpoints must differ");
    let w = state.word(spin);
    if w & (1 << from) == 0 || w & (1 << to) != 0 {
        return None;
    }
    let removed = w & !(1 << from);
    let (lo, hi) = if to < from { (to, from) } else { (from, to) };
    let between = ((1u64 << hi) - 1) & !((1u64 << (lo + 1)) - 1);
    let crossings = (removed & between).count_ones();
    let sign = if crossings % 2 == 0 { 1 } else { -1 };
    let mut out = state;
    out.set_word(spin, removed | (1 << to));
    Some((out, sign))
}

/// Occupation eigenvalue `n_{j,σ} ∈ {0, 1}`.
pub fn number_eigenvalue(state: FockState, j: SiteIndex, spin: Spin) -> u32 {
    ((state.word(spin) >> j) & 1) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_bases_match_counts() {
        let b = enumerate_basis(2, Sector::Spinless { n: 1 }).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.state(0).up, 0b01);
        assert_eq!(b.state(1).up, 0b10);

        let b = enumerate_basis(4, Sector::Spinless { n: 2 }).unwrap();
        assert_eq!(b.len(), 6);
    }

    #[test]
    fn large_basis_matches_independent_binomial() {
        // Pascal-triangle count, independent of the multiplicative binomial.
        let mut row = vec![1u64];
        for _ in 0..16 {
            let mut next = vec![1u64];
            for i in 0..row.len() - 1 {
                next.push(row[i] + row[i + 1]);
            }
            next.push(1);
            row = next;
        }
        let b = enumerate_basis(16, Sector::Spinless { n: 8 }).unwrap();
        assert_eq!(b.len() as u64, row[8]);
        assert_eq!(b.len(), 12870);
    }

    #[test]
    fn sector_out_of_range_is_domain_error() {
        assert!(enumerate_basis(4, Sector::Spinless { n: 5 }).is_err());
        assert!(enumerate_basis(4, Sector::Spinful { up: 5, dn: 0 }).is_err());
    }

    #[test]
    fn index_round_trips_all_sectors_up_to_l12() {
        for l in 1..=12 {
            for n in 0..=l {
                let b = enumerate_basis(l, Sector::Spinless { n }).unwrap();
                for i in 0..b.len() {
                    assert_eq!(b.index_of(b.state(i)), Some(i));
                }
            }
        }
        let b = enumerate_basis(6, Sector::Spinful { up: 3, dn: 2 }).unwrap();
        assert_eq!(b.len(), 20 * 15);
        for i in 0..b.len() {
            assert_eq!(b.index_of(b.state(i)), Some(i));
        }
    }

    #[test]
    fn states_strictly_increase() {
        let b = enumerate_basis(8, Sector::Spinful { up: 3, dn: 2 }).unwrap();
        for w in b.states().windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn hop_examples() {
        // c†_1 c_0 on occ{0}: no intermediate sites.
        let s = FockState::spinless(0b001);
        assert_eq!(
            apply_hop(s, 1, 0, Spin::Up),
            Some((FockState::spinless(0b010), 1))
        );
        // c†_2 c_0 on occ{0,1}: crosses the occupied site 1.
        let s = FockState::spinless(0b011);
        assert_eq!(
            apply_hop(s, 2, 0, Spin::Up),
            Some((FockState::spinless(0b110), -1))
        );
        // Target already occupied.
        let s = FockState::spinless(0b010);
        assert_eq!(apply_hop(s, 1, 0, Spin::Up), None);
    }

    #[test]
    fn number_readout() {
        let s = FockState::spinless(0b1001);
        assert_eq!(number_eigenvalue(s, 3, Spin::Up), 1);
        assert_eq!(number_eigenvalue(s, 1, Spin::Up), 0);
        let total: u32 = (0..4).map(|j| number_eigenvalue(s, j, Spin::Up)).sum();
        assert_eq!(total, 2);
    }

    proptest! {
        #[test]
        fn hop_conserves_popcount(word in 0u64..(1 << 10), to in 0usize..10, from in 0usize..10) {
            prop_assume!(to != from);
            let s = FockState::spinless(word);
            if let Some((t, sign)) = apply_hop(s, to, from, Spin::Up) {
                prop_assert_eq!(t.up.count_ones(), word.count_ones());
                prop_assert!(sign == 1 || sign == -1);
            }
        }

        #[test]
        fn rank_matches_enumeration(l in 1usize..12, seed in 0u64..1000) {
            let n = (seed as usize) % (l + 1);
            let b = enumerate_basis(l, Sector::Spinless { n }).unwrap();
            let i = (seed as usize * 7919) % b.len();
            prop_assert_eq!(b.index_of(b.state(i)), Some(i));
        }
    }
}
