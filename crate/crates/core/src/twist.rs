//! Twist (flux-insertion) operators, their ground-state expectations, and
//! the Z₂ index machinery built on them: index extraction with reality and
//! magnitude gates, the unit-cell duality check, the variational energy
//! bound, the edge-excitation search on half chains, and the decoupled-chain
//! index.
//!
//! A twist operator is diagonal in the occupation basis: it multiplies a
//! configuration by `exp(i·(offset + Σ_modes phase(mode)·n_mode))`. The
//! phase assignment per mode encodes the unit-cell convention. Because cell
//! charges are integers, phases outside the ramp window shift the total by
//! multiples of 2π, so the operator is local to the window exactly.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::fock::{FockBasis, FockState};
use crate::models::{self, Boundary, ModelSpec, SpinKind, SymmetryTag};
use crate::solver::{GroundStateResult, SectorMatrix};
use crate::{unit_phase, Cx, Error, Result, Scalar};

/// Ramp shape of the twist angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    /// Piecewise-linear ramp; slope bound `2π/(ℓ-2r0)`.
    Linear,
    /// Half-cosine ramp; slope bound `π²/(ℓ-2r0)`.
    Smoothstep,
}

/// Twist angle profile: 0 left of `x0`, one full turn up to
/// `x1 = x0 + ℓ - 2 r0`, then 2π.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TwistProfile<S: Scalar> {
    pub x0: S,
    pub x1: S,
    /// Window length ℓ (ramp width plus the `2 r0` margins).
    pub window: S,
    pub shape: RampShape,
    /// Max slope γ of the ramp.
    pub slope_bound: S,
}

impl<S: Scalar> TwistProfile<S> {
    /// Twist angle at coordinate `x`.
    pub fn theta(&self, x: S) -> S {
        let two_pi = S::two_pi();
        if x <= self.x0 {
            S::zero()
        } else if x >= self.x1 {
            two_pi
        } else {
            let u = (x - self.x0) / (self.x1 - self.x0);
            match self.shape {
                RampShape::Linear => two_pi * u,
                RampShape::Smoothstep => S::pi() * (S::one() - (S::pi() * u).cos()),
            }
        }
    }

    /// Ramp midpoint.
    pub fn center(&self) -> S {
        (self.x0 + self.x1) * S::of(0.5)
    }

    /// Copy shifted by `dx`; used internally for sliding windows, no margin
    /// checks.
    pub fn shifted(&self, dx: S) -> Self {
        TwistProfile {
            x0: self.x0 + dx,
            x1: self.x1 + dx,
            ..*self
        }
    }

    /// The identity profile (θ ≡ 0), for reference checks.
    pub fn zero() -> Self {
        TwistProfile {
            x0: S::of(1e30),
            x1: S::of(2e30),
            window: S::zero(),
            shape: RampShape::Linear,
            slope_bound: S::zero(),
        }
    }
}

fn ramp_slope<S: Scalar>(shape: RampShape, width: S) -> S {
    match shape {
        RampShape::Linear => S::two_pi() / width,
        RampShape::Smoothstep => S::pi() * S::pi() / width,
    }
}

/// Build a profile with ramp `[x0, x0 + ℓ - 2 r0]` validated against the
/// chain geometry: the window must keep an `r0` margin from the ring seam
/// and stay strictly shorter than the ring.
pub fn make_profile<S: Scalar>(
    l: usize,
    boundary: Boundary,
    r0: usize,
    x0: S,
    ell: S,
    shape: RampShape,
) -> Result<TwistProfile<S>> {
    let margin = S::of(r0 as f64);
    let width = ell - S::of(2.0 * r0 as f64);
    if width < S::of(2.0) {
        return Err(Error::Domain(format!(
            "window length {} leaves a ramp narrower than two sites",
            ell.to_f64_lossy()
        )));
    }
    let x1 = x0 + width;
    let lf = S::of(l as f64);
    match boundary {
        Boundary::Ring => {
            if x0 - margin < S::zero() || x1 + margin > lf || ell > lf - S::one() {
                return Err(Error::Domain(format!(
                    "twist window [{}, {}] does not fit inside the ring of {l} sites",
                    x0.to_f64_lossy(),
                    x1.to_f64_lossy()
                )));
            }
        }
        _ => {
            if x0 < S::zero() || x1 > lf - S::one() {
                return Err(Error::Domain(format!(
                    "twist window [{}, {}] does not fit inside the open chain of {l} sites",
                    x0.to_f64_lossy(),
                    x1.to_f64_lossy()
                )));
            }
        }
    }
    Ok(TwistProfile {
        x0,
        x1,
        window: ell,
        shape,
        slope_bound: ramp_slope(shape, width),
    })
}

/// Profile for a spec with the default placement: ramp centered at `L/2`.
/// Inversion-symmetric conventions need exactly this centering.
pub fn make_centered_profile<S: Scalar>(
    spec: &ModelSpec<S>,
    ell: S,
    shape: RampShape,
) -> Result<TwistProfile<S>> {
    let width = ell - S::of(2.0 * spec.range_bound as f64);
    let x0 = S::of(spec.l as f64 / 2.0) - width * S::of(0.5);
    make_profile(spec.l, spec.boundary, spec.range_bound, x0, ell, shape)
}

/// Declarative profile parameters. Unset fields pick the default placement:
/// window length `L/2 + 2 r0` with the ramp centered at `L/2`, which keeps
/// the window maximally far from the ring seam and satisfies the centering
/// that the inversion-symmetric conventions require.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileParams<S: Scalar> {
    pub x0: Option<S>,
    pub window: Option<S>,
    pub shape: RampShape,
}

impl<S: Scalar> Default for ProfileParams<S> {
    fn default() -> Self {
        ProfileParams {
            x0: None,
            window: None,
            shape: RampShape::Linear,
        }
    }
}

impl<S: Scalar> ProfileParams<S> {
    pub fn resolve(&self, spec: &ModelSpec<S>) -> Result<TwistProfile<S>> {
        let r0 = spec.range_bound;
        let margins = S::of(2.0 * r0 as f64);
        let ell = self
            .window
            .unwrap_or_else(|| S::of(spec.l as f64 / 2.0) + margins);
        let width = ell - margins;
        let x0 = self
            .x0
            .unwrap_or_else(|| (S::of(spec.l as f64) - width) * S::of(0.5));
        make_profile(spec.l, spec.boundary, r0, x0, ell, self.shape)
    }
}

/// Phase-assignment convention of the twist operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Cell charges grouped as `(2j, 2j+1)`, phase `θ(2j)·(charge - 1)`.
    CellA,
    /// Dual grouping `(2j-1, 2j)`, phase `θ(2j)·(charge - 1)`.
    CellBDual,
    /// Per-site phase `θ(j + 1/2)·n_j`; pair with bond-centered inversion.
    BondCentered,
    /// Per-site phase `θ(j)·n_j`; pair with site-centered inversion.
    SiteCentered,
    /// Up-spin cell charges only, `θ(2j)·(n_{2j,↑} + n_{2j+1,↑} - 1)`.
    SpinUpCell,
}

impl Convention {
    pub fn needs_spinful(self) -> bool {
        matches!(self, Convention::SpinUpCell)
    }
}

/// Diagonal twist operator: per-mode phases plus a scalar offset. Up-spin
/// modes occupy slots `0..L`, down-spin modes `L..2L`.
#[derive(Clone, Debug)]
pub struct TwistOperator<S: Scalar> {
    pub convention: Convention,
    pub l: usize,
    pub spinful: bool,
    pub mode_phases: Vec<S>,
    pub offset: S,
}

impl<S: Scalar> TwistOperator<S> {
    /// Total phase of a configuration.
    pub fn phase_of(&self, state: FockState) -> S {
        let mut phi = self.offset;
        let mut up = state.up;
        while up != 0 {
            let j = up.trailing_zeros() as usize;
            phi += self.mode_phases[j];
            up &= up - 1;
        }
        if self.spinful {
            let mut dn = state.dn;
            while dn != 0 {
                let j = dn.trailing_zeros() as usize;
                phi += self.mode_phases[self.l + j];
                dn &= dn - 1;
            }
        }
        phi
    }

    /// `e^{iφ}` for a configuration.
    pub fn unit(&self, state: FockState) -> Cx<S> {
        unit_phase(self.phase_of(state))
    }

    /// Per-site up-spin phases, the form the determinant oracle consumes.
    pub fn up_site_phases(&self) -> &[S] {
        &self.mode_phases[..self.l]
    }
}

/// Build the diagonal twist operator for a convention.
pub fn build_twist<S: Scalar>(
    profile: &TwistProfile<S>,
    convention: Convention,
    l: usize,
    spin: SpinKind,
) -> Result<TwistOperator<S>> {
    let spinful = matches!(spin, SpinKind::Spinful);
    if convention.needs_spinful() != spinful {
        return Err(Error::Domain(format!(
            "convention {convention:?} is incompatible with a {spin:?} chain"
        )));
    }
    let site = |x: usize| S::of(x as f64);
    let n_modes = if spinful { 2 * l } else { l };
    let mut phases = vec![S::zero(); n_modes];
    let mut offset = S::zero();
    match convention {
        Convention::CellA | Convention::SpinUpCell => {
            for x in 0..l {
                phases[x] = profile.theta(site(2 * (x / 2)));
            }
            for j in 0..l / 2 {
                offset -= profile.theta(site(2 * j));
            }
        }
        Convention::CellBDual => {
            for x in 0..l {
                let pos = if x % 2 == 0 { x } else { x + 1 };
                phases[x] = profile.theta(site(pos));
            }
            for j in 0..=l / 2 {
                offset -= profile.theta(site(2 * j));
            }
        }
        Convention::BondCentered => {
            for x in 0..l {
                phases[x] = profile.theta(site(x) + S::of(0.5));
            }
        }
        Convention::SiteCentered => {
            for x in 0..l {
                phases[x] = profile.theta(site(x));
            }
        }
    }
    Ok(TwistOperator {
        convention,
        l,
        spinful,
        mode_phases: phases,
        offset,
    })
}

/// Ground-state expectation `⟨U⟩ = Σ_n |v_n|² e^{iφ_n}`.
pub fn expectation<S: Scalar>(
    gs: &GroundStateResult<S>,
    op: &TwistOperator<S>,
    basis: &FockBasis,
) -> Result<Cx<S>> {
    if op.l != basis.l || op.spinful != basis.sector.is_spinful() {
        return Err(Error::Domain(
            "twist operator and basis disagree on the chain".into(),
        ));
    }
    if gs.vector.len() != basis.len() {
        return Err(Error::Domain("state vector does not match the basis".into()));
    }
    let mut acc = Cx::zero();
    for (n, v) in gs.vector.iter().enumerate() {
        acc += op.unit(basis.state(n)) * v.norm_sqr();
    }
    Ok(acc)
}

/// Component-wise twisted vector `(Uv)_n = e^{iφ_n} v_n`.
pub fn twisted_vector<S: Scalar>(
    vector: &[Cx<S>],
    op: &TwistOperator<S>,
    basis: &FockBasis,
) -> Vec<Cx<S>> {
    vector
        .iter()
        .enumerate()
        .map(|(n, v)| op.unit(basis.state(n)) * v)
        .collect()
}

/// `(⟨U†[H,U]⟩, t0·γ²·ℓ)`: the twisted excitation energy of the ground
/// vector against its variational upper bound.
pub fn lsm_bound<S: Scalar>(
    gs: &GroundStateResult<S>,
    matrix: &SectorMatrix<S>,
    spec: &ModelSpec<S>,
    op: &TwistOperator<S>,
    profile: &TwistProfile<S>,
) -> (S, S) {
    let uv = twisted_vector(&gs.vector, op, &matrix.basis);
    let lhs = matrix.expectation_value(&uv) - gs.e0();
    let gamma = profile.slope_bound;
    let rhs = spec.hop_weight_bound * gamma * gamma * profile.window;
    (lhs, rhs)
}

/// Why an index came out undefined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    DegenerateGroundState,
    ImaginaryPart,
    SmallMagnitude,
}

/// Z₂ index value, or the reason it is withheld.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexValue {
    Zero,
    One,
    Undefined(UndefinedReason),
}

impl IndexValue {
    pub fn as_int(self) -> Option<u8> {
        match self {
            IndexValue::Zero => Some(0),
            IndexValue::One => Some(1),
            IndexValue::Undefined(_) => None,
        }
    }
}

/// Gates applied before an index is declared.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexTolerances<S: Scalar> {
    /// Max |Im⟨U⟩| accepted as real.
    pub reality: S,
    /// Min |Re⟨U⟩| accepted as decisively signed.
    pub magnitude: S,
}

impl<S: Scalar> Default for IndexTolerances<S> {
    fn default() -> Self {
        IndexTolerances {
            reality: S::of(1e-9),
            magnitude: S::of(1e-6),
        }
    }
}

/// Full record of one index evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexReport<S: Scalar> {
    pub convention: Convention,
    pub shape: RampShape,
    pub x0: S,
    pub window: S,
    pub slope_bound: S,
    pub re: S,
    pub im: S,
    pub imag_residual: S,
    pub index: IndexValue,
    /// Twisted excitation energy `⟨U†[H,U]⟩`.
    pub bound_lhs: S,
    /// Variational bound `t0·γ²·ℓ`.
    pub bound_rhs: S,
    /// Whether `γ²ℓ < gap/t0` held; the index is reported either way, with
    /// this flag recording that the sufficient condition was not met.
    pub gate_satisfied: bool,
    pub gap: S,
    pub ground_energy: S,
}

fn classify<S: Scalar>(
    z: Cx<S>,
    degenerate: bool,
    tols: &IndexTolerances<S>,
) -> (IndexValue, S) {
    let imag = z.im.abs();
    let index = if degenerate {
        IndexValue::Undefined(UndefinedReason::DegenerateGroundState)
    } else if imag > tols.reality {
        IndexValue::Undefined(UndefinedReason::ImaginaryPart)
    } else if z.re.abs() < tols.magnitude {
        IndexValue::Undefined(UndefinedReason::SmallMagnitude)
    } else if z.re > S::zero() {
        IndexValue::Zero
    } else {
        IndexValue::One
    };
    (index, imag)
}

fn required_symmetry_holds<S: Scalar>(
    spec: &ModelSpec<S>,
    convention: Convention,
    profile: &TwistProfile<S>,
) -> Result<()> {
    match convention {
        Convention::CellA | Convention::CellBDual | Convention::SpinUpCell => {
            let phg = models::validate_symmetry(spec, SymmetryTag::Phg);
            if phg.is_empty() {
                return Ok(());
            }
            let ph = models::validate_symmetry(spec, SymmetryTag::Ph);
            if ph.is_empty() {
                return Ok(());
            }
            Err(Error::Domain(format!(
                "cell-convention index needs particle-hole(-gauge) symmetry: {}",
                phg.join("; ")
            )))
        }
        Convention::BondCentered | Convention::SiteCentered => {
            let tag = if convention == Convention::BondCentered {
                SymmetryTag::BondInversion
            } else {
                SymmetryTag::SiteInversion
            };
            models::assert_symmetry(spec, tag).map_err(|e| {
                Error::Domain(format!("inversion-convention index rejected: {e}"))
            })?;
            // In the coordinate of the phase argument both inversions act as
            // x -> L - x, so the ramp must be antisymmetric about L/2.
            let center = S::of(spec.l as f64 / 2.0);
            if (profile.center() - center).abs() > S::of(1e-9) {
                return Err(Error::Domain(format!(
                    "inversion-symmetric twist needs the ramp centered at {}, got {}",
                    center.to_f64_lossy(),
                    profile.center().to_f64_lossy()
                )));
            }
            Ok(())
        }
    }
}

/// Extract the Z₂ index of a computed ground state.
///
/// The symmetry matching the convention is validated first; a degenerate
/// ground state, a complex expectation, or a tiny real part all yield an
/// undefined index rather than a guess. When the sufficient gate
/// `γ²ℓ < gap/t0` fails the report flags it and proceeds, since the
/// finite-size expectation may still be decisive.
pub fn z2_index<S: Scalar>(
    gs: &GroundStateResult<S>,
    matrix: &SectorMatrix<S>,
    spec: &ModelSpec<S>,
    profile: &TwistProfile<S>,
    convention: Convention,
    tols: &IndexTolerances<S>,
) -> Result<IndexReport<S>> {
    required_symmetry_holds(spec, convention, profile)?;
    let op = build_twist(profile, convention, spec.l, spec.spin)?;
    let z = expectation(gs, &op, &matrix.basis)?;
    let (index, imag_residual) = classify(z, gs.degenerate, tols);
    let (bound_lhs, bound_rhs) = lsm_bound(gs, matrix, spec, &op, profile);
    let gamma = profile.slope_bound;
    let t0 = spec.hop_weight_bound;
    let gate_satisfied = if t0 > S::zero() {
        gamma * gamma * profile.window < gs.gap / t0
    } else {
        true
    };
    Ok(IndexReport {
        convention,
        shape: profile.shape,
        x0: profile.x0,
        window: profile.window,
        slope_bound: profile.slope_bound,
        re: z.re,
        im: z.im,
        imag_residual,
        index,
        bound_lhs,
        bound_rhs,
        gate_satisfied,
        gap: gs.gap,
        ground_energy: gs.e0(),
    })
}

/// Indices of both unit-cell conventions on the same profile, plus their
/// sum when both are defined (the duality predicts 1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualityReport<S: Scalar> {
    pub cell_a: IndexReport<S>,
    pub cell_b: IndexReport<S>,
    pub sum: Option<u8>,
}

pub fn duality_check<S: Scalar>(
    gs: &GroundStateResult<S>,
    matrix: &SectorMatrix<S>,
    spec: &ModelSpec<S>,
    profile: &TwistProfile<S>,
    tols: &IndexTolerances<S>,
) -> Result<DualityReport<S>> {
    let cell_a = z2_index(gs, matrix, spec, profile, Convention::CellA, tols)?;
    let cell_b = z2_index(gs, matrix, spec, profile, Convention::CellBDual, tols)?;
    let sum = match (cell_a.index.as_int(), cell_b.index.as_int()) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    Ok(DualityReport {
        cell_a,
        cell_b,
        sum,
    })
}

/// Outcome of the sliding-window search for a low-energy edge excitation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeSearchResult<S: Scalar> {
    /// `(window shift, Re⟨U⟩)` along the scan grid.
    pub trace: Vec<(S, S)>,
    pub witness: Option<EdgeWitness<S>>,
}

/// A unitary orthogonal to the ground state with bounded excitation energy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeWitness<S: Scalar> {
    /// Ramp shift at the sign crossing.
    pub shift: S,
    /// `|⟨U⟩|` at the crossing (orthogonality residual).
    pub orthogonality: S,
    /// Excitation energy `⟨U†[H,U]⟩` of the twisted state.
    pub energy: S,
    /// The `t0·γ²·ℓ` bound for the profile used.
    pub bound_rhs: S,
    /// Whether the energy met the requested budget.
    pub accepted: bool,
}

/// Slide a twist window from beyond the edge into the bulk of a half chain,
/// looking for a zero of `Re⟨U⟩`. A crossing yields a number-conserving
/// unitary that is orthogonal to the ground state and costs at most the
/// variational bound; `energy_budget` filters the witness.
pub fn edge_excitation_search<S: Scalar>(
    spec_half: &ModelSpec<S>,
    gs: &GroundStateResult<S>,
    matrix: &SectorMatrix<S>,
    ramp_width: S,
    energy_budget: S,
    shift_grid: Option<&[S]>,
) -> Result<EdgeSearchResult<S>> {
    match spec_half.boundary {
        Boundary::HalfChain | Boundary::Open => {}
        _ => {
            return Err(Error::Domain(
                "edge search expects a half-chain (open) spec".into(),
            ))
        }
    }
    let convention = match spec_half.spin {
        SpinKind::Spinless => Convention::CellA,
        SpinKind::Spinful => Convention::SpinUpCell,
    };
    let base = TwistProfile {
        x0: S::zero(),
        x1: ramp_width,
        window: ramp_width + S::of(2.0 * spec_half.range_bound as f64),
        shape: RampShape::Linear,
        slope_bound: ramp_slope(RampShape::Linear, ramp_width),
    };
    let eval = |shift: S| -> Result<Cx<S>> {
        let op = build_twist(&base.shifted(shift), convention, spec_half.l, spec_half.spin)?;
        expectation(gs, &op, &matrix.basis)
    };

    let default_grid: Vec<S>;
    let grid: &[S] = match shift_grid {
        Some(g) => g,
        None => {
            let lo = -(ramp_width.to_f64_lossy()) - 2.0;
            let hi = (spec_half.l as f64) - ramp_width.to_f64_lossy() - 1.0;
            let mut g = Vec::new();
            let mut r = lo;
            while r <= hi {
                g.push(S::of(r));
                r += 2.0; // one cell per step
            }
            default_grid = g;
            &default_grid
        }
    };

    let mut trace = Vec::with_capacity(grid.len());
    for &r in grid {
        trace.push((r, eval(r)?.re));
    }

    let mut bracket = None;
    for w in trace.windows(2) {
        if w[0].1 * w[1].1 < S::zero() {
            bracket = Some((w[0].0, w[1].0));
            break;
        }
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok(EdgeSearchResult {
            trace,
            witness: None,
        });
    };
    let mut f_lo = eval(lo)?.re;
    for _ in 0..60 {
        let mid = (lo + hi) * S::of(0.5);
        let f_mid = eval(mid)?.re;
        if f_mid * f_lo >= S::zero() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() < S::of(1e-10) {
            break;
        }
    }
    let shift = (lo + hi) * S::of(0.5);
    let profile = base.shifted(shift);
    let op = build_twist(&profile, convention, spec_half.l, spec_half.spin)?;
    let z = expectation(gs, &op, &matrix.basis)?;
    let uv = twisted_vector(&gs.vector, &op, &matrix.basis);
    let energy = matrix.expectation_value(&uv) - gs.e0();
    let gamma = profile.slope_bound;
    let bound_rhs = spec_half.hop_weight_bound * gamma * gamma * profile.window;
    let witness = EdgeWitness {
        shift,
        orthogonality: crate::cx_abs(z),
        energy,
        bound_rhs,
        accepted: energy <= energy_budget,
    };
    Ok(EdgeSearchResult {
        trace,
        witness: Some(witness),
    })
}

/// Index of a decoupled chain, evaluated with the two-sided profile that is
/// discontinuous across the cut (admissible there because no hopping
/// crosses it). The window retracts from the cut in steps; the sign must
/// stay constant and ends at the exact value +1, so a gapped decoupled
/// ground state reports index 0.
pub fn decoupled_index<S: Scalar>(
    spec_dec: &ModelSpec<S>,
    gs: &GroundStateResult<S>,
    matrix: &SectorMatrix<S>,
    ramp_width: S,
    tols: &IndexTolerances<S>,
) -> Result<IndexReport<S>> {
    let cut = models::verify_cut(spec_dec)?;
    if matches!(spec_dec.spin, SpinKind::Spinful) {
        return Err(Error::Domain(
            "decoupled-index evaluation covers spinless chains".into(),
        ));
    }
    models::assert_symmetry(
        spec_dec,
        spec_dec.symmetry.unwrap_or(SymmetryTag::Phg),
    )?;

    let half_w = ramp_width * S::of(0.5);
    let base = TwistProfile {
        x0: -half_w,
        x1: half_w,
        window: ramp_width + S::of(2.0 * spec_dec.range_bound as f64),
        shape: RampShape::Linear,
        slope_bound: ramp_slope(RampShape::Linear, ramp_width),
    };
    let cut_f = S::of(cut as f64);
    let l = spec_dec.l;

    let op_at = |retract: S| -> TwistOperator<S> {
        let mut phases = vec![S::zero(); l];
        let mut offset = S::zero();
        for x in 0..l {
            let pos = S::of((2 * (x / 2)) as f64);
            let local = pos - cut_f;
            let theta = if pos >= cut_f {
                base.theta(local + retract)
            } else {
                base.theta(local - retract)
            };
            phases[x] = theta;
        }
        for j in 0..l / 2 {
            let pos = S::of((2 * j) as f64);
            let local = pos - cut_f;
            offset -= if pos >= cut_f {
                base.theta(local + retract)
            } else {
                base.theta(local - retract)
            };
        }
        TwistOperator {
            convention: Convention::CellA,
            l,
            spinful: false,
            mode_phases: phases,
            offset,
        }
    };

    let steps = (ramp_width.to_f64_lossy() / 2.0).ceil() as usize + 2;
    let mut first = None;
    let mut sign_ok = true;
    for step in 0..=steps {
        let op = op_at(S::of(step as f64));
        let z = expectation(gs, &op, &matrix.basis)?;
        if step == 0 {
            first = Some((op, z));
        }
        let (index, _) = classify(z, gs.degenerate, tols);
        match index {
            IndexValue::Zero => {}
            _ => sign_ok = false,
        }
    }
    let (op, z) = first.expect("at least one retraction step");
    let (mut index, imag_residual) = classify(z, gs.degenerate, tols);
    if !sign_ok {
        index = IndexValue::Undefined(UndefinedReason::SmallMagnitude);
    }
    let (bound_lhs, bound_rhs) = lsm_bound(gs, matrix, spec_dec, &op, &base);
    Ok(IndexReport {
        convention: Convention::CellA,
        shape: base.shape,
        x0: cut_f - half_w,
        window: base.window,
        slope_bound: base.slope_bound,
        re: z.re,
        im: z.im,
        imag_residual,
        index,
        bound_lhs,
        bound_rhs,
        gate_satisfied: true,
        gap: gs.gap,
        ground_energy: gs.e0(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Sector;
    use crate::models::{add_disorder, build_ssh, decouple_at, restrict_half_chain, Mode};
    use crate::solver::{assemble, ground_state, SolverOptions};

    fn solve(spec: &ModelSpec<f64>) -> (GroundStateResult<f64>, SectorMatrix<f64>) {
        let m = assemble(spec, spec.half_filling_sector()).unwrap();
        let gs = ground_state(&m, &SolverOptions::default()).unwrap();
        (gs, m)
    }

    #[test]
    fn profile_examples() {
        // linear ramp of width 8 has slope 2π/8
        let p = make_profile::<f64>(16, Boundary::Ring, 1, 4.0, 10.0, RampShape::Linear).unwrap();
        assert!((p.slope_bound - std::f64::consts::PI / 4.0).abs() < 1e-15);
        assert_eq!(p.theta(4.0), 0.0);
        assert!((p.theta(12.0) - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        let ps =
            make_profile::<f64>(16, Boundary::Ring, 1, 4.0, 10.0, RampShape::Smoothstep).unwrap();
        assert_eq!(ps.theta(4.0), 0.0);
        assert!((ps.theta(12.0) - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        // window as long as the ring is rejected
        assert!(make_profile::<f64>(12, Boundary::Ring, 1, 0.0, 12.0, RampShape::Linear).is_err());
    }

    #[test]
    fn zero_profile_gives_identity_twist() {
        let p = TwistProfile::<f64>::zero();
        let op = build_twist(&p, Convention::CellA, 8, SpinKind::Spinless).unwrap();
        let basis = crate::fock::enumerate_basis(8, Sector::Spinless { n: 4 }).unwrap();
        for i in 0..basis.len() {
            assert_eq!(op.unit(basis.state(i)), Cx::new(1.0, 0.0));
        }
    }

    #[test]
    fn unit_cell_charge_states_have_zero_phase() {
        let spec = build_ssh::<f64>(12, 0.0, Boundary::Ring).unwrap();
        let p = make_centered_profile(&spec, 8.0, RampShape::Linear).unwrap();
        let op = build_twist(&p, Convention::CellA, 12, SpinKind::Spinless).unwrap();
        // any state with one particle per (2j, 2j+1) cell has unit phase
        let basis = crate::fock::enumerate_basis(12, Sector::Spinless { n: 6 }).unwrap();
        for i in 0..basis.len() {
            let s = basis.state(i);
            let all_cells_one = (0..6).all(|c| {
                let a = (s.up >> (2 * c)) & 1;
                let b = (s.up >> (2 * c + 1)) & 1;
                a + b == 1
            });
            if all_cells_one {
                assert!((op.unit(s) - Cx::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn extreme_state_expectations_match_closed_forms() {
        // s = 0: every amplitude sits in cell-charge-1 states, so exactly +1
        let spec = build_ssh::<f64>(12, 0.0, Boundary::Ring).unwrap();
        let (gs, m) = solve(&spec);
        let p = make_profile::<f64>(12, Boundary::Ring, 1, 3.0, 8.0, RampShape::Linear).unwrap();
        let op = build_twist(&p, Convention::CellA, 12, SpinKind::Spinless).unwrap();
        let z = expectation(&gs, &op, &m.basis).unwrap();
        assert!((z - Cx::new(1.0, 0.0)).norm() < 1e-12);

        // s = 1: product of dimers straddling cells; the expectation is the
        // product of the per-dimer cosine factors with an overall sign flip
        let spec = build_ssh::<f64>(12, 1.0, Boundary::Ring).unwrap();
        let (gs, m) = solve(&spec);
        let z = expectation(&gs, &op, &m.basis).unwrap();
        let mut closed = Cx::new(-1.0, 0.0);
        for j in 0..6usize {
            let a = p.theta((2 * j) as f64 - 2.0);
            let b = p.theta((2 * j) as f64);
            closed *= ((b - a) / 2.0).cos();
        }
        assert!(
            (z.re - closed.re).abs() < 1e-10 && z.im.abs() < 1e-10,
            "got {z}, closed form {closed}"
        );
    }

    #[test]
    fn twist_phases_are_local_to_the_window() {
        let p = make_profile::<f64>(16, Boundary::Ring, 1, 4.0, 10.0, RampShape::Linear).unwrap();
        for convention in [
            Convention::CellA,
            Convention::CellBDual,
            Convention::BondCentered,
            Convention::SiteCentered,
        ] {
            let op = build_twist(&p, convention, 16, SpinKind::Spinless).unwrap();
            // toggling occupations outside [x0-2, x1+2] leaves e^{iφ} fixed
            let inside = FockState::spinless(0b0000_1111_0000_0000 >> 2);
            for outside_bit in [0usize, 1, 15] {
                let toggled = FockState::spinless(inside.up ^ (1 << outside_bit));
                let a = op.unit(inside);
                let b = op.unit(toggled);
                assert!(
                    (a - b).norm() < 1e-12,
                    "{convention:?}: phase moved with occupation at site {outside_bit}"
                );
            }
        }
    }

    #[test]
    fn unitarity_and_identity() {
        let spec = build_ssh::<f64>(10, 0.4, Boundary::Ring).unwrap();
        let (gs, m) = solve(&spec);
        let p = make_profile::<f64>(10, Boundary::Ring, 1, 2.0, 8.0, RampShape::Linear).unwrap();
        let op = build_twist(&p, Convention::CellA, 10, SpinKind::Spinless).unwrap();
        for i in 0..m.basis.len() {
            assert!((op.unit(m.basis.state(i)).norm() - 1.0).abs() < 1e-14);
        }
        let z = expectation(&gs, &build_twist(&TwistProfile::zero(), Convention::CellA, 10, SpinKind::Spinless).unwrap(), &m.basis).unwrap();
        assert!((z - Cx::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn reality_for_symmetric_specs() {
        for seed in [1u64, 2, 3] {
            let base = build_ssh::<f64>(10, 0.25, Boundary::Ring).unwrap();
            let spec = add_disorder(&base, seed, 0.2, 0.3).unwrap();
            let (gs, m) = solve(&spec);
            let p =
                make_profile::<f64>(10, Boundary::Ring, 1, 2.0, 8.0, RampShape::Linear).unwrap();
            let op = build_twist(&p, Convention::CellA, 10, SpinKind::Spinless).unwrap();
            let z = expectation(&gs, &op, &m.basis).unwrap();
            assert!(z.im.abs() <= 1e-9, "seed {seed}: Im = {}", z.im);
        }
    }

    #[test]
    fn index_examples_and_profile_independence() {
        let tols = IndexTolerances::default();
        for (s, want) in [(0.1, IndexValue::Zero), (0.9, IndexValue::One)] {
            let spec = build_ssh::<f64>(12, s, Boundary::Ring).unwrap();
            let (gs, m) = solve(&spec);
            let mut signs = Vec::new();
            for (x0, ell, shape) in [
                (2.0, 8.0, RampShape::Linear),
                (3.0, 8.0, RampShape::Linear),
                (2.0, 9.0, RampShape::Linear),
                (2.0, 8.0, RampShape::Smoothstep),
                (1.5, 10.0, RampShape::Linear),
            ] {
                let p =
                    make_profile::<f64>(12, Boundary::Ring, 1, x0, ell, shape).unwrap();
                let r = z2_index(&gs, &m, &spec, &p, Convention::CellA, &tols).unwrap();
                assert_eq!(r.index, want, "s={s} x0={x0} ell={ell} {shape:?}");
                signs.push(r.re > 0.0);
            }
            assert!(signs.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn window_translation_leaves_the_index_alone() {
        let spec = build_ssh::<f64>(14, 0.2, Boundary::Ring).unwrap();
        let (gs, m) = solve(&spec);
        let tols = IndexTolerances::default();
        let mut indices = Vec::new();
        for x0 in [1.0, 2.0, 3.0, 4.0] {
            let p = make_profile::<f64>(14, Boundary::Ring, 1, x0, 9.0, RampShape::Linear).unwrap();
            let r = z2_index(&gs, &m, &spec, &p, Convention::CellA, &tols).unwrap();
            indices.push(r.index);
        }
        assert!(indices.iter().all(|&i| i == IndexValue::Zero));
    }

    #[test]
    fn duality_at_the_extremes() {
        let tols = IndexTolerances::default();
        for (s, a, b) in [(0.0, 0u8, 1u8), (1.0, 1, 0)] {
            let spec = build_ssh::<f64>(12, s, Boundary::Ring).unwrap();
            let (gs, m) = solve(&spec);
            let p = make_profile::<f64>(12, Boundary::Ring, 1, 2.0, 8.0, RampShape::Linear).unwrap();
            let d = duality_check(&gs, &m, &spec, &p, &tols).unwrap();
            assert_eq!(d.cell_a.index.as_int(), Some(a));
            assert_eq!(d.cell_b.index.as_int(), Some(b));
            assert_eq!(d.sum, Some(1));
        }
    }

    #[test]
    fn bound_examples() {
        // s = 0 with a cell-aligned twist: intra-cell hops see equal phases
        let spec = build_ssh::<f64>(12, 0.0, Boundary::Ring).unwrap();
        let (gs, m) = solve(&spec);
        let p = make_profile::<f64>(12, Boundary::Ring, 1, 2.0, 8.0, RampShape::Linear).unwrap();
        let op = build_twist(&p, Convention::CellA, 12, SpinKind::Spinless).unwrap();
        let (lhs, rhs) = lsm_bound(&gs, &m, &spec, &op, &p);
        assert!(lhs.abs() < 1e-10);
        assert!(rhs > 0.0);

        let spec = build_ssh::<f64>(12, 0.3, Boundary::Ring).unwrap();
        let (gs, m) = solve(&spec);
        let op = build_twist(&p, Convention::CellA, 12, SpinKind::Spinless).unwrap();
        let (lhs, rhs) = lsm_bound(&gs, &m, &spec, &op, &p);
        assert!(lhs <= rhs + 1e-9);
        assert!(lhs > 0.0);

        let zero = build_twist(&TwistProfile::zero(), Convention::CellA, 12, SpinKind::Spinless)
            .unwrap();
        let (lhs, _) = lsm_bound(&gs, &m, &spec, &zero, &TwistProfile::zero());
        assert!(lhs.abs() < 1e-10);
    }

    #[test]
    fn edge_search_finds_crossing_only_in_the_nontrivial_phase() {
        // nontrivial bulk: dimers straddle cells, the half chain hosts a
        // zero mode and the window scan crosses zero
        let ring = build_ssh::<f64>(12, 1.0, Boundary::Ring).unwrap();
        let half = restrict_half_chain(&ring, None).unwrap();
        let m = assemble(&half, half.half_filling_sector()).unwrap();
        let gs = ground_state(&m, &SolverOptions::default()).unwrap();
        let res = edge_excitation_search(&half, &gs, &m, 6.0, 10.0, None).unwrap();
        let w = res.witness.expect("crossing expected for the nontrivial phase");
        assert!(w.orthogonality < 1e-6);
        assert!(w.energy <= w.bound_rhs + 1e-9);
        assert!(w.accepted);

        // trivial bulk: expectation stays near +1, no crossing
        let ring = build_ssh::<f64>(12, 0.0, Boundary::Ring).unwrap();
        let half = restrict_half_chain(&ring, None).unwrap();
        let m = assemble(&half, half.half_filling_sector()).unwrap();
        let gs = ground_state(&m, &SolverOptions::default()).unwrap();
        let res = edge_excitation_search(&half, &gs, &m, 6.0, 10.0, None).unwrap();
        assert!(res.witness.is_none());
        assert!(res.trace.iter().all(|&(_, re)| re > 0.9));

        // a budget below the measured energy rejects the witness
        let ring = build_ssh::<f64>(12, 1.0, Boundary::Ring).unwrap();
        let half = restrict_half_chain(&ring, None).unwrap();
        let m = assemble(&half, half.half_filling_sector()).unwrap();
        let gs = ground_state(&m, &SolverOptions::default()).unwrap();
        let res = edge_excitation_search(&half, &gs, &m, 6.0, 1e-12, None).unwrap();
        let w = res.witness.unwrap();
        assert!(!w.accepted && w.energy > 1e-12);
    }

    #[test]
    fn decoupled_chain_reports_trivial_index() {
        let open = build_ssh::<f64>(12, 0.2, Boundary::Open).unwrap();
        let mut dec = decouple_at(&open, 6).unwrap();
        dec.push_interaction(0.4, vec![Mode::spinless(5), Mode::spinless(6)]);
        dec.finalize();
        let (gs, m) = solve(&dec);
        let tols = IndexTolerances::default();
        let r = decoupled_index(&dec, &gs, &m, 6.0, &tols).unwrap();
        assert_eq!(r.index, IndexValue::Zero);

        // a cut through a cell interior is refused upstream
        assert!(decouple_at(&open, 5).is_err());
    }
}
