//! Declarative Hamiltonian specifications: the dimerized SSH family, its
//! interacting, disordered, and electron (spinful) extensions, symmetry
//! validation, and boundary surgery.
//!
//! A spec stores hopping bonds, interaction monomials in `(n - 1/2)` form,
//! spin-exchange bonds, on-site potentials, and an optional uniform chemical
//! potential, together with bookkeeping bounds: the interaction range `r0`,
//! the weighted hop row-sum bound `t0` (rows summed with `(d+1)^2` weights),
//! and the interaction strength bound `v0`. Storing interactions as
//! monomials in `(n - 1/2)` makes the particle-hole-gauge evenness check
//! syntactic; the remainder of e.g. a Hubbard `U n↑ n↓` term lives in the
//! chemical potential and the scalar constant, both of which are constant on
//! fixed-number sectors.

use std::collections::HashMap;

use num_complex::Complex;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fock::{Sector, Spin};
use crate::{Cx, Error, Result, Scalar};

/// Chain boundary condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Ring,
    Open,
    /// Open chain obtained by cutting a ring at the seam; used as the
    /// finite proxy of a half-infinite chain with its edge at site 0.
    HalfChain,
    /// Open chain with all hopping (and exchange) removed across the bond
    /// entering `cut`; density interactions may still cross.
    Decoupled {
        cut: usize,
    },
}

/// Spin structure of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinKind {
    Spinless,
    Spinful,
}

/// Symmetry classes the validator understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryTag {
    /// Particle-hole transformation combined with the gauge flip on odd
    /// sites: hops real at odd distance, pure imaginary at even distance,
    /// zero diagonal, interactions even in `(n - 1/2)`.
    Phg,
    /// Plain particle-hole: all hops pure imaginary, zero diagonal,
    /// interactions even.
    Ph,
    /// Inversion about the central bond, `j -> L-1-j`.
    BondInversion,
    /// Inversion about site 0 (equivalently `L/2`), `j -> (L-j) mod L`.
    SiteInversion,
    None,
}

/// One fermionic mode `(site, spin)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub site: usize,
    pub spin: Spin,
}

impl Mode {
    pub fn spinless(site: usize) -> Self {
        Mode {
            site,
            spin: Spin::Up,
        }
    }
}

/// Hopping bond `amp·c†_i c_j + h.c.`, stored once with `i < j`. Spinful
/// specs apply the same amplitude to both species.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopTerm<S: Scalar> {
    pub i: usize,
    pub j: usize,
    pub amp: Cx<S>,
}

/// Interaction monomial `coeff · ∏ (n_mode - 1/2)` over distinct modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntMonomial<S: Scalar> {
    pub coeff: S,
    pub modes: Vec<Mode>,
}

/// Heisenberg exchange bond `-coupling · S_a · S_b` in the fermionic form
/// (transverse spin flip plus `(n↑-n↓)(n↑-n↓)/4`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinExchange<S: Scalar> {
    pub a: usize,
    pub b: usize,
    pub coupling: S,
}

/// Additional terms merged at the edge when restricting to a half chain.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeTerms<S: Scalar> {
    pub hops: Vec<HopTerm<S>>,
    pub potentials: Vec<(Mode, S)>,
    pub interactions: Vec<IntMonomial<S>>,
}

/// Declarative description of one Hamiltonian in the short-ranged
/// number-conserving class.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec<S: Scalar> {
    pub l: usize,
    pub boundary: Boundary,
    pub spin: SpinKind,
    pub hops: Vec<HopTerm<S>>,
    #[serde(default)]
    pub interactions: Vec<IntMonomial<S>>,
    #[serde(default)]
    pub exchanges: Vec<SpinExchange<S>>,
    #[serde(default)]
    pub potentials: Vec<(Mode, S)>,
    #[serde(default)]
    pub chem_potential: Option<S>,
    #[serde(default = "zero_scalar")]
    pub constant: S,
    /// Declared symmetry class; validated, not assumed.
    #[serde(default)]
    pub symmetry: Option<SymmetryTag>,
    /// Max term diameter (bookkeeping, recomputed by `finalize`).
    #[serde(default)]
    pub range_bound: usize,
    /// Upper bound on the weighted hop row sums (bookkeeping).
    #[serde(default = "zero_scalar")]
    pub hop_weight_bound: S,
    /// Upper bound on the per-site interaction norm (bookkeeping).
    #[serde(default = "zero_scalar")]
    pub int_bound: S,
}

fn zero_scalar<S: Scalar>() -> S {
    S::zero()
}

impl<S: Scalar> ModelSpec<S> {
    /// Empty spec; push terms, then call [`ModelSpec::finalize`].
    pub fn new(l: usize, boundary: Boundary, spin: SpinKind) -> Self {
        ModelSpec {
            l,
            boundary,
            spin,
            hops: Vec::new(),
            interactions: Vec::new(),
            exchanges: Vec::new(),
            potentials: Vec::new(),
            chem_potential: None,
            constant: S::zero(),
            symmetry: None,
            range_bound: 0,
            hop_weight_bound: S::zero(),
            int_bound: S::zero(),
        }
    }

    pub fn is_interacting(&self) -> bool {
        !self.interactions.is_empty() || !self.exchanges.is_empty()
    }

    /// Distance between two sites in the active metric (ring-aware).
    pub fn distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        match self.boundary {
            Boundary::Ring => d.min(self.l - d),
            _ => d,
        }
    }

    /// Add `amp·c†_i c_j + h.c.`; merges with an existing bond on the same
    /// pair.
    pub fn push_hop(&mut self, i: usize, j: usize, amp: Cx<S>) {
        assert!(i != j, "diagonal hops are potentials");
        assert!(i < self.l && j < self.l);
        let (a, b, amp) = if i < j { (i, j, amp) } else { (j, i, amp.conj()) };
        if let Some(h) = self.hops.iter_mut().find(|h| h.i == a && h.j == b) {
            h.amp += amp;
        } else {
            self.hops.push(HopTerm { i: a, j: b, amp });
        }
    }

    pub fn push_interaction(&mut self, coeff: S, mut modes: Vec<Mode>) {
        modes.sort();
        modes.dedup();
        self.interactions.push(IntMonomial { coeff, modes });
    }

    pub fn push_potential(&mut self, mode: Mode, strength: S) {
        self.potentials.push((mode, strength));
    }

    pub fn push_exchange(&mut self, a: usize, b: usize, coupling: S) {
        self.exchanges.push(SpinExchange { a, b, coupling });
    }

    /// Drop exact-zero terms, order terms deterministically, and recompute
    /// the bookkeeping bounds `r0`, `t0`, `v0`.
    pub fn finalize(&mut self) {
        self.hops.retain(|h| h.amp.norm_sqr() != S::zero());
        self.interactions.retain(|t| t.coeff != S::zero());
        self.exchanges.retain(|e| e.coupling != S::zero());
        self.potentials.retain(|(_, v)| *v != S::zero());
        self.hops.sort_by_key(|h| (h.i, h.j));
        self.potentials.sort_by_key(|(m, _)| *m);
        self.exchanges.sort_by_key(|e| (e.a.min(e.b), e.a.max(e.b)));
        self.interactions.sort_by(|a, b| a.modes.cmp(&b.modes));

        let mut r0 = 0usize;
        for h in &self.hops {
            r0 = r0.max(self.distance(h.i, h.j));
        }
        for e in &self.exchanges {
            r0 = r0.max(self.distance(e.a, e.b));
        }
        for t in &self.interactions {
            for a in &t.modes {
                for b in &t.modes {
                    r0 = r0.max(self.distance(a.site, b.site));
                }
            }
        }
        self.range_bound = r0;

        // t0: max over sites of Σ_k |t_{j,k}| (d+1)^2.
        let mut row = vec![S::zero(); self.l];
        for h in &self.hops {
            let d = S::of((self.distance(h.i, h.j) + 1) as f64);
            let w = crate::cx_abs(h.amp) * d * d;
            row[h.i] += w;
            row[h.j] += w;
        }
        self.hop_weight_bound = row
            .iter()
            .copied()
            .fold(S::zero(), |a, b| if b > a { b } else { a });

        // v0: max over sites of the summed operator-norm bounds of the
        // interaction terms touching that site.
        let mut vrow = vec![S::zero(); self.l];
        for t in &self.interactions {
            let bound = t.coeff.abs() * S::of(0.5f64.powi(t.modes.len() as i32));
            for m in &t.modes {
                vrow[m.site] += bound;
            }
        }
        for e in &self.exchanges {
            let bound = e.coupling.abs() * S::of(0.75);
            vrow[e.a] += bound;
            vrow[e.b] += bound;
        }
        for (m, v) in &self.potentials {
            vrow[m.site] += v.abs();
        }
        self.int_bound = vrow
            .iter()
            .copied()
            .fold(S::zero(), |a, b| if b > a { b } else { a });
    }

    /// Half-filling sector: `N = L/2`, or `N↑ = N↓ = L/2` for electrons.
    pub fn half_filling_sector(&self) -> Sector {
        match self.spin {
            SpinKind::Spinless => Sector::Spinless { n: self.l / 2 },
            SpinKind::Spinful => Sector::Spinful {
                up: self.l / 2,
                dn: self.l / 2,
            },
        }
    }

    /// Spec with all sites translated by `shift` (rings only).
    pub fn translated(&self, shift: usize) -> Result<ModelSpec<S>> {
        if self.boundary != Boundary::Ring {
            return Err(Error::Domain("translation needs a ring".into()));
        }
        let l = self.l;
        let map = |j: usize| (j + shift) % l;
        let mut out = ModelSpec::new(l, self.boundary, self.spin);
        for h in &self.hops {
            out.push_hop(map(h.i), map(h.j), h.amp);
        }
        for t in &self.interactions {
            out.push_interaction(
                t.coeff,
                t.modes
                    .iter()
                    .map(|m| Mode {
                        site: map(m.site),
                        spin: m.spin,
                    })
                    .collect(),
            );
        }
        for e in &self.exchanges {
            out.push_exchange(map(e.a), map(e.b), e.coupling);
        }
        for (m, v) in &self.potentials {
            out.push_potential(
                Mode {
                    site: map(m.site),
                    spin: m.spin,
                },
                *v,
            );
        }
        out.chem_potential = self.chem_potential;
        out.constant = self.constant;
        out.symmetry = None;
        out.finalize();
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self>
    where
        S: serde::de::DeserializeOwned,
    {
        Ok(serde_json::from_str(text)?)
    }
}

fn require_even(l: usize) -> Result<()> {
    if l == 0 || l % 2 != 0 {
        Err(Error::Domain(format!(
            "chain length must be even and positive, got {l}"
        )))
    } else {
        Ok(())
    }
}

/// Bonds of the dimerized chain: `(2j, 2j+1)` with amplitude `intra` and
/// `(2j+1, 2j+2)` with amplitude `inter` (the latter wraps on rings).
fn dimerized_hops<S: Scalar>(spec: &mut ModelSpec<S>, intra: S, inter: S) {
    let l = spec.l;
    for x in (0..l).step_by(2) {
        if intra != S::zero() {
            spec.push_hop(x, x + 1, Complex::new(intra, S::zero()));
        }
    }
    for x in (1..l).step_by(2) {
        let next = x + 1;
        if inter == S::zero() {
            continue;
        }
        if next < l {
            spec.push_hop(x, next, Complex::new(inter, S::zero()));
        } else if spec.boundary == Boundary::Ring {
            spec.push_hop(x, 0, Complex::new(inter, S::zero()));
        }
    }
}

/// Dimerized chain with intra-cell amplitude `1-s` and inter-cell amplitude
/// `s`, at half filling the reference topological insulator.
pub fn build_ssh<S: Scalar>(l: usize, s: S, boundary: Boundary) -> Result<ModelSpec<S>> {
    require_even(l)?;
    if s < S::zero() || s > S::one() {
        return Err(Error::Domain("coupling must lie in [0, 1]".into()));
    }
    let mut spec = ModelSpec::new(l, boundary, SpinKind::Spinless);
    dimerized_hops(&mut spec, S::one() - s, s);
    spec.symmetry = Some(SymmetryTag::Phg);
    spec.finalize();
    Ok(spec)
}

/// Electron chain with SSH hopping for both species and on-site repulsion
/// `U n↑ n↓`, stored as `U (n↑-1/2)(n↓-1/2)` plus the chemical-potential and
/// constant remainders.
pub fn build_hubbard_ssh<S: Scalar>(
    l: usize,
    s: S,
    u: S,
    boundary: Boundary,
) -> Result<ModelSpec<S>> {
    require_even(l)?;
    let mut spec = ModelSpec::new(l, boundary, SpinKind::Spinful);
    dimerized_hops(&mut spec, S::one() - s, s);
    let half = S::of(0.5);
    for k in 0..l {
        spec.push_interaction(
            u,
            vec![
                Mode {
                    site: k,
                    spin: Spin::Up,
                },
                Mode {
                    site: k,
                    spin: Spin::Dn,
                },
            ],
        );
    }
    // U n↑n↓ = U(n↑-1/2)(n↓-1/2) + U(n↑+n↓)/2 - U/4.
    spec.chem_potential = if u == S::zero() {
        None
    } else {
        Some(-u * half)
    };
    spec.constant = -u * S::of(l as f64) * S::of(0.25);
    spec.symmetry = Some(SymmetryTag::Phg);
    spec.finalize();
    Ok(spec)
}

/// Extended Hubbard chain: inter-cell hopping of unit strength, on-site
/// repulsion `U`, and ferromagnetic exchange `-J S·S` inside each cell.
pub fn build_extended_hubbard<S: Scalar>(
    l: usize,
    u: S,
    j: S,
    boundary: Boundary,
) -> Result<ModelSpec<S>> {
    let mut spec = build_hubbard_ssh(l, S::one(), u, boundary)?;
    for x in (0..l).step_by(2) {
        if j != S::zero() {
            spec.push_exchange(x, x + 1, j);
        }
    }
    spec.finalize();
    Ok(spec)
}

/// Alternating on-site potential `∓delta` on even/odd sites plus a uniform
/// nearest-neighbor hop; `delta > 0` favors the even-site atomic state. The
/// spec is site-inversion symmetric.
pub fn build_staggered<S: Scalar>(
    l: usize,
    delta: S,
    hop: S,
    boundary: Boundary,
) -> Result<ModelSpec<S>> {
    require_even(l)?;
    let mut spec = ModelSpec::new(l, boundary, SpinKind::Spinless);
    for j in 0..l {
        let v = if j % 2 == 0 { -delta } else { delta };
        if v != S::zero() {
            spec.push_potential(Mode::spinless(j), v);
        }
    }
    if hop != S::zero() {
        for j in 0..l {
            let next = (j + 1) % l;
            if next == 0 && boundary != Boundary::Ring {
                continue;
            }
            spec.push_hop(j, next, Complex::new(hop, S::zero()));
        }
    }
    spec.symmetry = Some(SymmetryTag::SiteInversion);
    spec.finalize();
    Ok(spec)
}

/// Rice-Mele chain: dimerized hopping `1 ± dimer` and staggered potential
/// `± stagger`. Only the particle-number symmetry survives; cycling
/// `(dimer, stagger)` around the origin pumps one charge per period.
pub fn build_rice_mele<S: Scalar>(
    l: usize,
    dimer: S,
    stagger: S,
    boundary: Boundary,
) -> Result<ModelSpec<S>> {
    require_even(l)?;
    let mut spec = ModelSpec::new(l, boundary, SpinKind::Spinless);
    dimerized_hops(&mut spec, S::one() + dimer, S::one() - dimer);
    for j in 0..l {
        let v = if j % 2 == 0 { stagger } else { -stagger };
        if v != S::zero() {
            spec.push_potential(Mode::spinless(j), v);
        }
    }
    spec.symmetry = Some(SymmetryTag::None);
    spec.finalize();
    Ok(spec)
}

const VALIDATOR_TOL: f64 = 1e-12;

fn hop_amp_map<S: Scalar>(spec: &ModelSpec<S>) -> HashMap<(usize, usize), Cx<S>> {
    let mut map: HashMap<(usize, usize), Cx<S>> = HashMap::new();
    for h in &spec.hops {
        *map.entry((h.i, h.j)).or_insert_with(Cx::zero) += h.amp;
        *map.entry((h.j, h.i)).or_insert_with(Cx::zero) += h.amp.conj();
    }
    map
}

fn aggregate_interactions<S: Scalar>(spec: &ModelSpec<S>) -> HashMap<Vec<Mode>, S> {
    let mut map: HashMap<Vec<Mode>, S> = HashMap::new();
    for t in &spec.interactions {
        *map.entry(t.modes.clone()).or_insert_with(S::zero) += t.coeff;
    }
    map
}

fn inversion_violations<S: Scalar>(
    spec: &ModelSpec<S>,
    mu: impl Fn(usize) -> usize,
    label: &str,
) -> Vec<String> {
    let tol = S::of(VALIDATOR_TOL);
    let mut out = Vec::new();
    let hops = hop_amp_map(spec);
    for (&(i, j), amp) in &hops {
        let mirrored = hops.get(&(mu(i), mu(j))).copied().unwrap_or_else(Cx::zero);
        if crate::cx_abs(mirrored - amp) > tol {
            out.push(format!(
                "{label}: hop ({i},{j}) has no matching image at ({},{})",
                mu(i),
                mu(j)
            ));
        }
    }
    let mut pots: HashMap<Mode, S> = HashMap::new();
    for (m, v) in &spec.potentials {
        *pots.entry(*m).or_insert_with(S::zero) += *v;
    }
    for (m, v) in &pots {
        let mirror = Mode {
            site: mu(m.site),
            spin: m.spin,
        };
        let got = pots.get(&mirror).copied().unwrap_or_else(S::zero);
        if (got - *v).abs() > tol {
            out.push(format!("{label}: potential at site {} unmatched", m.site));
        }
    }
    let ints = aggregate_interactions(spec);
    for (modes, coeff) in &ints {
        let mut mirrored: Vec<Mode> = modes
            .iter()
            .map(|m| Mode {
                site: mu(m.site),
                spin: m.spin,
            })
            .collect();
        mirrored.sort();
        let got = ints.get(&mirrored).copied().unwrap_or_else(S::zero);
        if (got - *coeff).abs() > tol {
            out.push(format!("{label}: interaction {modes:?} unmatched"));
        }
    }
    let mut exch: HashMap<(usize, usize), S> = HashMap::new();
    for e in &spec.exchanges {
        let key = (e.a.min(e.b), e.a.max(e.b));
        *exch.entry(key).or_insert_with(S::zero) += e.coupling;
    }
    for (&(a, b), j) in &exch {
        let key = (mu(a).min(mu(b)), mu(a).max(mu(b)));
        let got = exch.get(&key).copied().unwrap_or_else(S::zero);
        if (got - *j).abs() > tol {
            out.push(format!("{label}: exchange ({a},{b}) unmatched"));
        }
    }
    out
}

/// Check a spec against a symmetry class. An empty list means the spec
/// passes; violations are data, not errors.
pub fn validate_symmetry<S: Scalar>(spec: &ModelSpec<S>, tag: SymmetryTag) -> Vec<String> {
    let tol = S::of(VALIDATOR_TOL);
    let mut out = Vec::new();
    match tag {
        SymmetryTag::Phg => {
            for h in &spec.hops {
                let span = h.i.abs_diff(h.j);
                if span % 2 == 1 {
                    if h.amp.im.abs() > tol {
                        out.push(format!(
                            "hop ({},{}): odd-distance amplitude must be real",
                            h.i, h.j
                        ));
                    }
                } else if h.amp.re.abs() > tol {
                    out.push(format!(
                        "hop ({},{}): even-distance amplitude must be pure imaginary",
                        h.i, h.j
                    ));
                }
            }
            for (m, _) in &spec.potentials {
                out.push(format!(
                    "on-site potential at site {} breaks particle-hole-gauge symmetry",
                    m.site
                ));
            }
            for t in &spec.interactions {
                if t.modes.len() % 2 == 1 {
                    out.push(format!(
                        "interaction {:?} has odd degree in (n - 1/2)",
                        t.modes
                    ));
                }
            }
        }
        SymmetryTag::Ph => {
            for h in &spec.hops {
                if h.amp.re.abs() > tol {
                    out.push(format!(
                        "hop ({},{}): amplitude must be pure imaginary",
                        h.i, h.j
                    ));
                }
            }
            for (m, _) in &spec.potentials {
                out.push(format!(
                    "on-site potential at site {} breaks particle-hole symmetry",
                    m.site
                ));
            }
            for t in &spec.interactions {
                if t.modes.len() % 2 == 1 {
                    out.push(format!(
                        "interaction {:?} has odd degree in (n - 1/2)",
                        t.modes
                    ));
                }
            }
        }
        SymmetryTag::BondInversion => {
            let l = spec.l;
            out.extend(inversion_violations(spec, |j| l - 1 - j, "bond inversion"));
        }
        SymmetryTag::SiteInversion => {
            let l = spec.l;
            out.extend(inversion_violations(
                spec,
                |j| (l - j) % l,
                "site inversion",
            ));
        }
        SymmetryTag::None => {}
    }
    out
}

/// Like [`validate_symmetry`] but turning violations into an error.
pub fn assert_symmetry<S: Scalar>(spec: &ModelSpec<S>, tag: SymmetryTag) -> Result<()> {
    let violations = validate_symmetry(spec, tag);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Symmetry(violations.join("; ")))
    }
}

/// Whether the stored bond wraps around the ring seam.
fn wraps_seam(l: usize, i: usize, j: usize) -> bool {
    2 * i.abs_diff(j) > l
}

/// Restriction of a ring to the chain `{0, …, L-1}` with the seam cut open:
/// drops every term whose support crosses the seam and merges the optional
/// symmetric edge terms.
pub fn restrict_half_chain<S: Scalar>(
    spec: &ModelSpec<S>,
    edge: Option<&EdgeTerms<S>>,
) -> Result<ModelSpec<S>> {
    match spec.boundary {
        Boundary::Ring | Boundary::Open => {}
        _ => {
            return Err(Error::Domain(
                "half-chain restriction expects a ring or open chain".into(),
            ))
        }
    }
    let l = spec.l;
    let mut out = spec.clone();
    out.boundary = Boundary::HalfChain;
    if spec.boundary == Boundary::Ring {
        out.hops.retain(|h| !wraps_seam(l, h.i, h.j));
        out.exchanges.retain(|e| !wraps_seam(l, e.a, e.b));
        out.interactions.retain(|t| {
            t.modes
                .iter()
                .all(|a| t.modes.iter().all(|b| !wraps_seam(l, a.site, b.site)))
        });
    }
    if let Some(extra) = edge {
        for h in &extra.hops {
            out.push_hop(h.i, h.j, h.amp);
        }
        for (m, v) in &extra.potentials {
            out.push_potential(*m, *v);
        }
        for t in &extra.interactions {
            out.push_interaction(t.coeff, t.modes.clone());
        }
    }
    out.finalize();
    match out.symmetry {
        Some(tag @ (SymmetryTag::Phg | SymmetryTag::Ph)) => {
            assert_symmetry(&out, tag)?;
        }
        // Finite-window inversion centers do not survive the cut.
        Some(_) => out.symmetry = None,
        None => {}
    }
    Ok(out)
}

/// Remove all particle transport (hops and exchange) across the bond
/// entering `cut`, leaving density interactions intact. The cut must fall
/// on a unit-cell boundary of the `(2j, 2j+1)` grouping.
pub fn decouple_at<S: Scalar>(spec: &ModelSpec<S>, cut: usize) -> Result<ModelSpec<S>> {
    if cut % 2 != 0 || cut == 0 || cut >= spec.l {
        return Err(Error::Domain(format!(
            "cut {cut} must fall on an interior unit-cell boundary"
        )));
    }
    if spec.boundary == Boundary::Ring {
        return Err(Error::Domain(
            "decoupling expects an open chain; restrict the ring first".into(),
        ));
    }
    let crosses = |a: usize, b: usize| (a < cut) != (b < cut);
    let mut out = spec.clone();
    out.boundary = Boundary::Decoupled { cut };
    out.hops.retain(|h| !crosses(h.i, h.j));
    out.exchanges.retain(|e| !crosses(e.a, e.b));
    out.finalize();
    Ok(out)
}

/// Verify that no particle transport crosses the declared cut.
pub fn verify_cut<S: Scalar>(spec: &ModelSpec<S>) -> Result<usize> {
    let cut = match spec.boundary {
        Boundary::Decoupled { cut } => cut,
        _ => {
            return Err(Error::Domain(
                "spec does not declare a decoupling cut".into(),
            ))
        }
    };
    let crosses = |a: usize, b: usize| (a < cut) != (b < cut);
    for h in &spec.hops {
        if crosses(h.i, h.j) {
            return Err(Error::Domain(format!(
                "hop ({},{}) crosses the declared cut {cut}",
                h.i, h.j
            )));
        }
    }
    for e in &spec.exchanges {
        if crosses(e.a, e.b) {
            return Err(Error::Domain(format!(
                "exchange ({},{}) crosses the declared cut {cut}",
                e.a, e.b
            )));
        }
    }
    Ok(cut)
}

/// Symmetry-preserving disorder: real uniform deviates on the odd-distance
/// hops (pure imaginary ones for plain particle-hole specs) and random
/// `(n-1/2)(n-1/2)` couplings on nearest-neighbor pairs. Deterministic for
/// a fixed seed; deviates are mirrored for inversion-symmetric specs.
pub fn add_disorder<S: Scalar>(
    spec: &ModelSpec<S>,
    seed: u64,
    hop_amplitude: S,
    int_amplitude: S,
) -> Result<ModelSpec<S>> {
    if hop_amplitude < S::zero() || int_amplitude < S::zero() {
        return Err(Error::Domain("disorder amplitudes must be >= 0".into()));
    }
    let mut out = spec.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |amp: S| -> S {
        let x: f64 = rng.gen();
        S::of(2.0 * x - 1.0) * amp
    };
    let tag = spec.symmetry.unwrap_or(SymmetryTag::None);
    let l = spec.l;
    let mirror: Option<Box<dyn Fn(usize) -> usize>> = match tag {
        SymmetryTag::BondInversion => Some(Box::new(move |j| l - 1 - j)),
        SymmetryTag::SiteInversion => Some(Box::new(move |j| (l - j) % l)),
        _ => None,
    };

    if hop_amplitude > S::zero() {
        let pairs: Vec<(usize, usize)> = out.hops.iter().map(|h| (h.i, h.j)).collect();
        let index: HashMap<(usize, usize), usize> = pairs
            .iter()
            .enumerate()
            .map(|(idx, &p)| (p, idx))
            .collect();
        let mut deltas: Vec<S> = vec![S::zero(); out.hops.len()];
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let span = i.abs_diff(j);
            let eligible = match tag {
                SymmetryTag::Ph => true,
                _ => span % 2 == 1,
            };
            if !eligible {
                continue;
            }
            if let Some(mu) = &mirror {
                let (a, b) = (mu(i).min(mu(j)), mu(i).max(mu(j)));
                if (a, b) < (i, j) {
                    continue; // the partner draws for this orbit
                }
                let d = draw(hop_amplitude);
                deltas[idx] = d;
                if let Some(&pidx) = index.get(&(a, b)) {
                    deltas[pidx] = d;
                }
            } else {
                deltas[idx] = draw(hop_amplitude);
            }
        }
        for (h, d) in out.hops.iter_mut().zip(&deltas) {
            if tag == SymmetryTag::Ph {
                h.amp.im += *d;
            } else {
                h.amp.re += *d;
            }
        }
    }

    if int_amplitude > S::zero() {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for j in 0..l {
            let next = (j + 1) % l;
            if next == 0 && spec.boundary != Boundary::Ring {
                continue;
            }
            if let Boundary::Decoupled { cut } = spec.boundary {
                if (j < cut) != (next < cut) {
                    continue;
                }
            }
            pairs.push((j.min(next), j.max(next)));
        }
        let mut coeffs: HashMap<(usize, usize), S> = HashMap::new();
        for &(a, b) in &pairs {
            if let Some(mu) = &mirror {
                let m = (mu(a).min(mu(b)), mu(a).max(mu(b)));
                if m < (a, b) && pairs.contains(&m) {
                    continue;
                }
                let d = draw(int_amplitude);
                coeffs.insert((a, b), d);
                coeffs.insert(m, d);
            } else {
                coeffs.insert((a, b), draw(int_amplitude));
            }
        }
        for &(a, b) in &pairs {
            let u = coeffs[&(a, b)];
            match spec.spin {
                SpinKind::Spinless => {
                    out.push_interaction(u, vec![Mode::spinless(a), Mode::spinless(b)]);
                }
                SpinKind::Spinful => {
                    // Charge-charge coupling (n̄_a - 1)(n̄_b - 1) expanded
                    // into the four even monomials.
                    for sa in [Spin::Up, Spin::Dn] {
                        for sb in [Spin::Up, Spin::Dn] {
                            out.push_interaction(
                                u,
                                vec![Mode { site: a, spin: sa }, Mode { site: b, spin: sb }],
                            );
                        }
                    }
                }
            }
        }
    }

    out.finalize();
    if let Some(tag) = out.symmetry {
        assert_symmetry(&out, tag)?;
    }
    Ok(out)
}
