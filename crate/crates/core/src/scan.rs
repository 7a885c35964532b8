//! Parameter sweeps, disorder ensembles, winding numbers along closed model
//! paths, and edge-gap scaling studies.
//!
//! Grid points and disorder seeds are independent work items evaluated on a
//! rayon pool; results are collected in grid order, so output rows are
//! deterministic regardless of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{
    self, add_disorder, build_hubbard_ssh, build_rice_mele, build_ssh, Boundary, ModelSpec,
    SpinKind,
};
use crate::quadratic;
use crate::solver::{assemble_capped, ground_state, SolverOptions};
use crate::twist::{
    build_twist, expectation, z2_index, Convention, IndexTolerances, IndexValue, ProfileParams,
};
use crate::{Cx, Error, Result, Scalar};

/// Parametrized model family over `s ∈ [0, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum PathFamily<S: Scalar> {
    /// Dimerized chain, `s` interpolating the two extreme couplings.
    Ssh { l: usize },
    /// Electron chain with SSH hopping and on-site repulsion `u`.
    HubbardSsh { l: usize, u: S },
    /// Closed pumping cycle: dimerization `dimer·cos(2πs)` against staggered
    /// potential `stagger·sin(2πs)`.
    RiceMeleCycle { l: usize, dimer: S, stagger: S },
    /// Constant path (every point is the same spec).
    Constant { spec: Box<ModelSpec<S>> },
}

impl<S: Scalar> PathFamily<S> {
    pub fn spec_at(&self, s: S) -> Result<ModelSpec<S>> {
        match self {
            PathFamily::Ssh { l } => build_ssh(*l, s, Boundary::Ring),
            PathFamily::HubbardSsh { l, u } => build_hubbard_ssh(*l, s, *u, Boundary::Ring),
            PathFamily::RiceMeleCycle { l, dimer, stagger } => {
                let angle = S::two_pi() * s;
                build_rice_mele(*l, *dimer * angle.cos(), *stagger * angle.sin(), Boundary::Ring)
            }
            PathFamily::Constant { spec } => Ok((**spec).clone()),
        }
    }

    /// Whether the family returns to its start at `s = 1`.
    pub fn is_closed(&self) -> bool {
        matches!(
            self,
            PathFamily::RiceMeleCycle { .. } | PathFamily::Constant { .. }
        )
    }
}

/// A sampled path of models.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSpec<S: Scalar> {
    pub family: PathFamily<S>,
    pub grid: Vec<S>,
    pub closed: bool,
}

impl<S: Scalar> PathSpec<S> {
    /// Uniform grid with `points` samples of `[0, 1]`.
    pub fn uniform(family: PathFamily<S>, points: usize) -> Self {
        let n = points.max(2);
        let grid = (0..n)
            .map(|i| S::of(i as f64) / S::of((n - 1) as f64))
            .collect();
        let closed = family.is_closed();
        PathSpec {
            family,
            grid,
            closed,
        }
    }

    /// Path traversed in the opposite orientation.
    pub fn reversed(&self) -> Self {
        let mut grid = self.grid.clone();
        grid.reverse();
        PathSpec {
            family: self.family.clone(),
            grid,
            closed: self.closed,
        }
    }
}

/// One sweep sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow<S: Scalar> {
    pub s: S,
    pub ground_energy: Option<S>,
    pub gap: Option<S>,
    pub re: Option<S>,
    pub im: Option<S>,
    pub index: Option<IndexValue>,
    pub error: Option<String>,
}

/// Interval on which the index changes or becomes undefined.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bracket<S: Scalar> {
    pub lo: S,
    pub hi: S,
    pub midpoint: S,
    pub refined: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult<S: Scalar> {
    pub rows: Vec<SweepRow<S>>,
    pub transitions: Vec<Bracket<S>>,
}

fn index_point<S: Scalar>(
    family: &PathFamily<S>,
    s: S,
    profile: &ProfileParams<S>,
    convention: Convention,
    opts: &SolverOptions<S>,
    tols: &IndexTolerances<S>,
) -> SweepRow<S> {
    let run = || -> Result<SweepRow<S>> {
        let spec = family.spec_at(s)?;
        let p = profile.resolve(&spec)?;
        let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
        let gs = ground_state(&matrix, opts)?;
        let report = z2_index(&gs, &matrix, &spec, &p, convention, tols)?;
        Ok(SweepRow {
            s,
            ground_energy: Some(gs.e0()),
            gap: Some(gs.gap),
            re: Some(report.re),
            im: Some(report.im),
            index: Some(report.index),
            error: None,
        })
    };
    run().unwrap_or_else(|e| SweepRow {
        s,
        ground_energy: None,
        gap: None,
        re: None,
        im: None,
        index: None,
        error: Some(e.to_string()),
    })
}

/// Evaluate the index along a path; transition brackets are the intervals
/// between adjacent defined indices that disagree (undefined rows in the
/// interior widen the bracket). With `refine_to` set, brackets are narrowed
/// by bisection on the sign of the expectation.
pub fn sweep<S: Scalar>(
    path: &PathSpec<S>,
    profile: &ProfileParams<S>,
    convention: Convention,
    opts: &SolverOptions<S>,
    tols: &IndexTolerances<S>,
    refine_to: Option<S>,
) -> Result<SweepResult<S>> {
    if path.grid.len() < 2 {
        return Err(Error::Domain("sweep needs at least two grid points".into()));
    }
    let rows: Vec<SweepRow<S>> = path
        .grid
        .par_iter()
        .map(|&s| index_point(&path.family, s, profile, convention, opts, tols))
        .collect();

    let mut transitions = Vec::new();
    let defined: Vec<(usize, u8)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.index.and_then(IndexValue::as_int).map(|v| (i, v)))
        .collect();
    for pair in defined.windows(2) {
        let (i, a) = pair[0];
        let (j, b) = pair[1];
        if a != b {
            let mut lo = rows[i].s;
            let mut hi = rows[j].s;
            let mut refined = false;
            if let Some(res) = refine_to {
                let mut guard = 0;
                while hi - lo > res && guard < 40 {
                    let mid = (lo + hi) * S::of(0.5);
                    let row = index_point(&path.family, mid, profile, convention, opts, tols);
                    match row.index.and_then(IndexValue::as_int) {
                        Some(v) if v == a => lo = mid,
                        Some(_) => hi = mid,
                        // an undefined midpoint sits inside the transition
                        None => break,
                    }
                    refined = true;
                    guard += 1;
                }
            }
            transitions.push(Bracket {
                lo,
                hi,
                midpoint: (lo + hi) * S::of(0.5),
                refined,
            });
        }
    }
    Ok(SweepResult { rows, transitions })
}

/// One disorder realization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleRow<S: Scalar> {
    pub seed: u64,
    pub index: Option<IndexValue>,
    pub re: Option<S>,
    pub gap: Option<S>,
    pub error: Option<String>,
}

/// Histogram and gap statistics of a disorder ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleResult<S: Scalar> {
    pub rows: Vec<EnsembleRow<S>>,
    pub count_zero: usize,
    pub count_one: usize,
    pub count_undefined: usize,
    pub min_gap: Option<S>,
    pub mean_gap: Option<S>,
}

/// Index statistics over symmetry-preserving disorder realizations of a
/// base spec; seeds are explicit inputs.
pub fn disorder_ensemble<S: Scalar>(
    base: &ModelSpec<S>,
    hop_amplitude: S,
    int_amplitude: S,
    seeds: &[u64],
    profile: &ProfileParams<S>,
    convention: Convention,
    opts: &SolverOptions<S>,
    tols: &IndexTolerances<S>,
) -> Result<EnsembleResult<S>> {
    let rows: Vec<EnsembleRow<S>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<EnsembleRow<S>> {
                let spec = add_disorder(base, seed, hop_amplitude, int_amplitude)?;
                let p = profile.resolve(&spec)?;
                let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
                let gs = ground_state(&matrix, opts)?;
                let report = z2_index(&gs, &matrix, &spec, &p, convention, tols)?;
                Ok(EnsembleRow {
                    seed,
                    index: Some(report.index),
                    re: Some(report.re),
                    gap: Some(gs.gap),
                    error: None,
                })
            };
            run().unwrap_or_else(|e| EnsembleRow {
                seed,
                index: None,
                re: None,
                gap: None,
                error: Some(e.to_string()),
            })
        })
        .collect();

    let mut count_zero = 0;
    let mut count_one = 0;
    let mut count_undefined = 0;
    let mut gaps = Vec::new();
    for r in &rows {
        match r.index {
            Some(IndexValue::Zero) => count_zero += 1,
            Some(IndexValue::One) => count_one += 1,
            _ => count_undefined += 1,
        }
        if let Some(g) = r.gap {
            gaps.push(g);
        }
    }
    let min_gap = gaps
        .iter()
        .copied()
        .fold(None, |acc: Option<S>, g| Some(acc.map_or(g, |a| a.min(g))));
    let mean_gap = if gaps.is_empty() {
        None
    } else {
        Some(gaps.iter().copied().sum::<S>() / S::of(gaps.len() as f64))
    };
    Ok(EnsembleResult {
        rows,
        count_zero,
        count_one,
        count_undefined,
        min_gap,
        mean_gap,
    })
}

/// Winding of the complex twist expectation along a closed path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindingResult<S: Scalar> {
    pub winding: i64,
    /// `(s, Re⟨U⟩, Im⟨U⟩)` samples after adaptive refinement.
    pub samples: Vec<(S, S, S)>,
}

fn twist_expectation_at<S: Scalar>(
    family: &PathFamily<S>,
    s: S,
    profile: &ProfileParams<S>,
    convention: Convention,
    opts: &SolverOptions<S>,
) -> Result<Cx<S>> {
    let spec = family.spec_at(s)?;
    let p = profile.resolve(&spec)?;
    let op = build_twist(&p, convention, spec.l, spec.spin)?;
    if !spec.is_interacting() && matches!(spec.spin, SpinKind::Spinless) {
        // free-fermion determinant route
        let n = spec.l / 2;
        let c = quadratic::correlation_matrix(&spec, n)?;
        quadratic::slater_twist_expectation(&c, op.up_site_phases(), op.offset)
    } else {
        let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
        let gs = ground_state(&matrix, opts)?;
        expectation(&gs, &op, &matrix.basis)
    }
}

/// Integer winding number of `⟨U_θ⟩(s)` about the origin along a closed
/// path. Adaptive refinement keeps each argument step below π/2; a sample
/// with magnitude under the tolerance aborts with a refinement error.
pub fn winding_number<S: Scalar>(
    path: &PathSpec<S>,
    profile: &ProfileParams<S>,
    convention: Convention,
    opts: &SolverOptions<S>,
    magnitude_tol: S,
) -> Result<WindingResult<S>> {
    if !path.closed {
        return Err(Error::Domain("winding needs a closed path".into()));
    }
    if path.grid.len() < 3 {
        return Err(Error::Domain("winding needs at least three samples".into()));
    }
    let eval = |s: S| -> Result<Cx<S>> {
        let z = twist_expectation_at(&path.family, s, profile, convention, opts)?;
        if crate::cx_abs(z) < magnitude_tol {
            return Err(Error::Numerical(format!(
                "twist expectation too close to the origin at s = {} (|z| = {:.3e}); refine the model path",
                s.to_f64_lossy(),
                crate::cx_abs(z).to_f64_lossy()
            )));
        }
        Ok(z)
    };

    let mut samples: Vec<(S, Cx<S>)> = Vec::new();
    for &s in &path.grid {
        samples.push((s, eval(s)?));
    }

    // subdivide until each step turns by less than π/2
    let quarter_turn = S::pi() * S::of(0.5);
    let mut depth = 0;
    loop {
        let mut refined = Vec::with_capacity(samples.len() * 2);
        let mut any = false;
        for w in samples.windows(2) {
            let (s0, z0) = w[0];
            let (s1, z1) = w[1];
            refined.push((s0, z0));
            let step = (z1 / z0).im.atan2((z1 / z0).re).abs();
            if step >= quarter_turn {
                let mid = (s0 + s1) * S::of(0.5);
                refined.push((mid, eval(mid)?));
                any = true;
            }
        }
        refined.push(*samples.last().unwrap());
        samples = refined;
        if !any {
            break;
        }
        depth += 1;
        if depth > 12 {
            return Err(Error::Numerical(
                "winding refinement failed to settle after 12 subdivisions".into(),
            ));
        }
    }

    let mut total = S::zero();
    for w in samples.windows(2) {
        let ratio = w[1].1 / w[0].1;
        total += ratio.im.atan2(ratio.re);
    }
    let turns = total / S::two_pi();
    let q = turns.round();
    if (turns - q).abs() > S::of(0.1) {
        return Err(Error::Numerical(format!(
            "accumulated winding {:.4} is not close to an integer",
            turns.to_f64_lossy()
        )));
    }
    Ok(WindingResult {
        winding: q.to_f64_lossy() as i64,
        samples: samples
            .into_iter()
            .map(|(s, z)| (s, z.re, z.im))
            .collect(),
    })
}

/// One row of the edge-gap scaling table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeGapRow<S: Scalar> {
    pub l: usize,
    pub bulk_index: IndexValue,
    pub half_chain_gap: S,
}

/// For each size: the bulk index of the ring spec and the in-sector gap of
/// its half-chain restriction.
pub fn edge_gap_scaling<S: Scalar>(
    family: impl Fn(usize) -> Result<ModelSpec<S>> + Sync,
    sizes: &[usize],
    profile: &ProfileParams<S>,
    opts: &SolverOptions<S>,
    tols: &IndexTolerances<S>,
) -> Result<Vec<EdgeGapRow<S>>> {
    sizes
        .par_iter()
        .map(|&l| {
            let parent = family(l)?;
            let p = profile.resolve(&parent)?;
            let convention = match parent.spin {
                SpinKind::Spinless => Convention::CellA,
                SpinKind::Spinful => Convention::SpinUpCell,
            };
            let matrix = assemble_capped(&parent, parent.half_filling_sector(), opts.dim_cap)?;
            let gs = ground_state(&matrix, opts)?;
            let bulk = z2_index(&gs, &matrix, &parent, &p, convention, tols)?;
            let half = models::restrict_half_chain(&parent, None)?;
            let hmatrix = assemble_capped(&half, half.half_filling_sector(), opts.dim_cap)?;
            let hgs = ground_state(&hmatrix, opts)?;
            Ok(EdgeGapRow {
                l,
                bulk_index: bulk.index,
                half_chain_gap: hgs.gap,
            })
        })
        .collect()
}
