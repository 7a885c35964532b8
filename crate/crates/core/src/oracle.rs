//! Brute-force dense reference operators on the full Fock space.
//!
//! Everything here is assembled from explicit annihilation matrices and
//! matrix products, with no shared code with the bit-level kernels or the
//! sector assembler. Tests use these operators to cross-check fermionic
//! signs, assembled Hamiltonians, symmetry validators, and twist phases on
//! small chains.
//!
//! Mode convention: `M` fermionic modes indexed `0..M`; the full-space basis
//! vector with index `b` is `∏_{i ascending} (c†_i)^{b_i} |vac⟩` where `b_i`
//! is bit `i` of `b`. For spinful chains of length `L`, modes `0..L` are the
//! up-spin sites and `L..2L` the down-spin sites, matching the species-major
//! ordering of [`crate::fock`].

use nalgebra::DMatrix;

use crate::fock::Spin;
use crate::models::{ModelSpec, SpinKind};
use crate::{Cx, Scalar};

/// Dense matrix of the annihilator `c_i` on `M` modes.
pub fn annihilator<S: Scalar>(modes: usize, i: usize) -> DMatrix<Cx<S>> {
    let dim = 1usize << modes;
    let mut m = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        if b & (1 << i) != 0 {
            let target = b & !(1 << i);
            let crossings = (b & ((1 << i) - 1)).count_ones();
            let sign = if crossings % 2 == 0 { 1.0 } else { -1.0 };
            m[(target, b)] = Cx::new(S::of(sign), S::zero());
        }
    }
    m
}

/// Dense matrix of the creator `c†_i`.
pub fn creator<S: Scalar>(modes: usize, i: usize) -> DMatrix<Cx<S>> {
    annihilator::<S>(modes, i).adjoint()
}

/// Dense matrix of the hop `c†_j c_k`.
pub fn hop_matrix<S: Scalar>(modes: usize, j: usize, k: usize) -> DMatrix<Cx<S>> {
    creator::<S>(modes, j) * annihilator::<S>(modes, k)
}

/// Dense matrix of the number operator `n_i`.
pub fn number_matrix<S: Scalar>(modes: usize, i: usize) -> DMatrix<Cx<S>> {
    hop_matrix::<S>(modes, i, i)
}

/// Diagonal unitary with phase `offset + Σ_i phases[i]·n_i`.
pub fn diagonal_phase<S: Scalar>(phases: &[S], offset: S) -> DMatrix<Cx<S>> {
    let modes = phases.len();
    let dim = 1usize << modes;
    let mut m = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        let mut phi = offset;
        for (i, &p) in phases.iter().enumerate() {
            if b & (1 << i) != 0 {
                phi += p;
            }
        }
        m[(b, b)] = crate::unit_phase(phi);
    }
    m
}

/// Mode index of `(site, spin)` in the species-major layout.
pub fn mode_of(l: usize, site: usize, spin: Spin) -> usize {
    match spin {
        Spin::Up => site,
        Spin::Dn => l + site,
    }
}

/// Number of modes needed to represent a spec on the full Fock space.
pub fn mode_count<S: Scalar>(spec: &ModelSpec<S>) -> usize {
    match spec.spin {
        SpinKind::Spinless => spec.l,
        SpinKind::Spinful => 2 * spec.l,
    }
}

/// Full-Fock-space Hamiltonian of a spec, term by term from dense operator
/// matrices.
pub fn assemble_full<S: Scalar>(spec: &ModelSpec<S>) -> DMatrix<Cx<S>> {
    let l = spec.l;
    let modes = mode_count(spec);
    let dim = 1usize << modes;
    let mut h: DMatrix<Cx<S>> = DMatrix::zeros(dim, dim);
    let species: &[Spin] = match spec.spin {
        SpinKind::Spinless => &[Spin::Up],
        SpinKind::Spinful => &[Spin::Up, Spin::Dn],
    };

    let half = Cx::new(S::of(0.5), S::zero());
    let one = DMatrix::<Cx<S>>::identity(dim, dim);

    for hop in &spec.hops {
        for &sp in species {
            let a = hop_matrix::<S>(modes, mode_of(l, hop.i, sp), mode_of(l, hop.j, sp));
            let amp = Cx::new(hop.amp.re, hop.amp.im);
            h += &a * amp + a.adjoint() * amp.conj();
        }
    }
    for (mode, mu) in &spec.potentials {
        let n = number_matrix::<S>(modes, mode_of(l, mode.site, mode.spin));
        h += n * Cx::new(*mu, S::zero());
    }
    if let Some(mu) = spec.chem_potential {
        for site in 0..l {
            for &sp in species {
                let n = number_matrix::<S>(modes, mode_of(l, site, sp));
                h -= n * Cx::new(mu, S::zero());
            }
        }
    }
    for term in &spec.interactions {
        let mut acc = one.clone();
        for mode in &term.modes {
            let n = number_matrix::<S>(modes, mode_of(l, mode.site, mode.spin));
            acc *= n - &one * half;
        }
        h += acc * Cx::new(term.coeff, S::zero());
    }
    for ex in &spec.exchanges {
        // -J S_a·S_b in the fermionic form: transverse part plus
        // (n↑-n↓)(n↑-n↓)/4.
        let (a, b, j) = (ex.a, ex.b, ex.coupling);
        let sp_a = hop_matrix::<S>(modes, mode_of(l, a, Spin::Up), mode_of(l, a, Spin::Dn));
        let sm_b = hop_matrix::<S>(modes, mode_of(l, b, Spin::Dn), mode_of(l, b, Spin::Up));
        let flip = &sp_a * &sm_b;
        let jc = Cx::new(j, S::zero());
        h -= (&flip + flip.adjoint()) * (jc * half);
        let sz = |site: usize| {
            (number_matrix::<S>(modes, mode_of(l, site, Spin::Up))
                - number_matrix::<S>(modes, mode_of(l, site, Spin::Dn)))
                * half
        };
        h -= sz(a) * sz(b) * jc;
    }
    h += &one * Cx::new(spec.constant, S::zero());
    h
}

/// Finite-chain unitary realizing the combined particle-hole and odd-site
/// gauge transformation: the ordered product of `(c_j - c†_j)` over even `j`
/// and `(c_j + c†_j)` over odd `j` (up and down species for spinful chains).
pub fn phg_unitary<S: Scalar>(l: usize, spin: SpinKind) -> DMatrix<Cx<S>> {
    let modes = match spin {
        SpinKind::Spinless => l,
        SpinKind::Spinful => 2 * l,
    };
    let dim = 1usize << modes;
    let mut u = DMatrix::<Cx<S>>::identity(dim, dim);
    let species: &[Spin] = match spin {
        SpinKind::Spinless => &[Spin::Up],
        SpinKind::Spinful => &[Spin::Up, Spin::Dn],
    };
    for &sp in species {
        for site in 0..l {
            let m = mode_of(l, site, sp);
            let c = annihilator::<S>(modes, m);
            let factor = if site % 2 == 0 {
                &c - c.adjoint()
            } else {
                &c + c.adjoint()
            };
            u *= factor;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{apply_hop, enumerate_basis, FockState, Sector};

    fn approx_zero(x: f64) -> bool {
        x.abs() < 1e-12
    }

    #[test]
    fn anticommutators_hold() {
        let modes = 4;
        let dim = 1 << modes;
        for i in 0..modes {
            for j in 0..modes {
                let ci = annihilator::<f64>(modes, i);
                let cj = annihilator::<f64>(modes, j);
                let acc = &ci * &cj + &cj * &ci;
                assert!(acc.iter().all(|z| approx_zero(z.norm())));
                let acd = &ci * cj.adjoint() + cj.adjoint() * &ci;
                let expect = if i == j { 1.0 } else { 0.0 };
                for r in 0..dim {
                    for c in 0..dim {
                        let want = if r == c { expect } else { 0.0 };
                        assert!(approx_zero((acd[(r, c)] - Cx::new(want, 0.0)).norm()));
                    }
                }
            }
        }
    }

    #[test]
    fn bit_kernel_signs_match_dense_operators() {
        // Every (j,k) pair on L ≤ 4, every sector: the sector block of the
        // dense c†_j c_k equals the apply_hop matrix entry by entry.
        for l in 2..=4usize {
            for j in 0..l {
                for k in 0..l {
                    if j == k {
                        continue;
                    }
                    let dense = hop_matrix::<f64>(l, j, k);
                    for n in 0..=l {
                        let basis = enumerate_basis(l, Sector::Spinless { n }).unwrap();
                        for col in 0..basis.len() {
                            let src = basis.state(col);
                            let img = apply_hop(src, j, k, Spin::Up);
                            for row in 0..basis.len() {
                                let dst = basis.state(row);
                                let got = dense[(dst.up as usize, src.up as usize)];
                                let want = match img {
                                    Some((s, sign)) if s == dst => sign as f64,
                                    _ => 0.0,
                                };
                                assert!(
                                    approx_zero((got - Cx::new(want, 0.0)).norm()),
                                    "mismatch at L={l} j={j} k={k} col={col} row={row}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn hop_matrices_are_mutually_adjoint() {
        for l in 2..=6usize {
            for j in 0..l {
                for k in 0..l {
                    let a = hop_matrix::<f64>(l, j, k);
                    let b = hop_matrix::<f64>(l, k, j).adjoint();
                    assert!((a - b).iter().all(|z| approx_zero(z.norm())));
                }
            }
        }
    }

    #[test]
    fn spinful_modes_follow_species_major_order() {
        // c†_{0↑} c†_{1↓} |vac⟩ has index bit0 | bit(L+1); the species-major
        // bit order matches the FockState words.
        let l = 2;
        let s = FockState { up: 0b01, dn: 0b10 };
        let idx = (s.up as usize) | ((s.dn as usize) << l);
        assert_eq!(idx, 0b1001);
        assert_eq!(mode_of(l, 0, Spin::Up), 0);
        assert_eq!(mode_of(l, 1, Spin::Dn), 3);
    }
}
