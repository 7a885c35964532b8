//! Sector Hamiltonian assembly and ground-state solves.
//!
//! A [`SectorMatrix`] is the sparse Hermitian matrix of a spec restricted to
//! one particle-number sector in the deterministic basis order of
//! [`crate::fock`]. Ground states come from a dense Hermitian
//! eigendecomposition below a dimension threshold and from a Lanczos
//! iteration with full reorthogonalization above it; the first excited level
//! is obtained from a second, deflated Lanczos pass, which stays correct
//! when the ground level is degenerate. Runs are deterministic: the Krylov
//! start vector is the normalized all-ones vector and restarts draw from a
//! fixed seed.

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fock::{apply_hop, enumerate_basis, number_eigenvalue, FockBasis, Sector, Spin};
use crate::models::{Mode, ModelSpec, SpinKind};
use crate::{Cx, Error, Result, Scalar};

/// Hard cap on sector dimensions accepted by [`assemble`].
pub const DEFAULT_DIM_CAP: usize = 4_000_000;

/// Sparse Hermitian sector matrix in CSR layout.
pub struct SectorMatrix<S: Scalar> {
    pub basis: FockBasis,
    pub dim: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<Cx<S>>,
    /// True when every stored entry is real.
    pub real: bool,
}

impl<S: Scalar> SectorMatrix<S> {
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// `y = H x`.
    pub fn matvec(&self, x: &[Cx<S>], y: &mut [Cx<S>]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = Cx::zero();
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.val[idx] * x[self.col[idx] as usize];
            }
            *yr = acc;
        }
    }

    /// Real quadratic form `Re ⟨x|H|x⟩` (exact for Hermitian `H` and any
    /// `x`).
    pub fn expectation_value(&self, x: &[Cx<S>]) -> S {
        let mut y = vec![Cx::zero(); self.dim];
        self.matvec(x, &mut y);
        x.iter()
            .zip(&y)
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn to_dense_complex(&self) -> DMatrix<Cx<S>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col[idx] as usize)] = self.val[idx];
            }
        }
        m
    }

    fn to_dense_real(&self) -> DMatrix<S> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col[idx] as usize)] = self.val[idx].re;
            }
        }
        m
    }

    /// Text dump in sparse triplet form: one `row col re im` line per stored
    /// entry, zero-based indices, preceded by a `# dim nnz` header.
    pub fn write_triplets<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {} {}", self.dim, self.nnz())?;
        for r in 0..self.dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(
                    w,
                    "{} {} {} {}",
                    r,
                    self.col[idx],
                    crate::report::fmt_g17(self.val[idx].re.to_f64_lossy()),
                    crate::report::fmt_g17(self.val[idx].im.to_f64_lossy()),
                )?;
            }
        }
        Ok(())
    }
}

fn species_of<S: Scalar>(spec: &ModelSpec<S>) -> &'static [Spin] {
    match spec.spin {
        SpinKind::Spinless => &[Spin::Up],
        SpinKind::Spinful => &[Spin::Up, Spin::Dn],
    }
}

fn diagonal_element<S: Scalar>(spec: &ModelSpec<S>, state: crate::fock::FockState) -> S {
    let half = S::of(0.5);
    let mut acc = spec.constant;
    for (m, v) in &spec.potentials {
        if number_eigenvalue(state, m.site, m.spin) == 1 {
            acc += *v;
        }
    }
    if let Some(mu) = spec.chem_potential {
        let n = (state.up.count_ones() + state.dn.count_ones()) as f64;
        acc -= mu * S::of(n);
    }
    for t in &spec.interactions {
        let mut prod = t.coeff;
        for m in &t.modes {
            let occ = S::of(number_eigenvalue(state, m.site, m.spin) as f64);
            prod *= occ - half;
        }
        acc += prod;
    }
    for e in &spec.exchanges {
        let z = |site: usize| {
            S::of(number_eigenvalue(state, site, Spin::Up) as f64)
                - S::of(number_eigenvalue(state, site, Spin::Dn) as f64)
        };
        acc -= e.coupling * S::of(0.25) * z(e.a) * z(e.b);
    }
    acc
}

/// Visit every off-diagonal image `a·|m⟩` of `H|n⟩` for the basis state `n`.
fn for_each_offdiagonal<S: Scalar>(
    spec: &ModelSpec<S>,
    state: crate::fock::FockState,
    mut emit: impl FnMut(crate::fock::FockState, Cx<S>),
) {
    let species = species_of(spec);
    for h in &spec.hops {
        for &sp in species {
            if let Some((t, sign)) = apply_hop(state, h.i, h.j, sp) {
                emit(t, h.amp * S::of(sign as f64));
            }
            if let Some((t, sign)) = apply_hop(state, h.j, h.i, sp) {
                emit(t, h.amp.conj() * S::of(sign as f64));
            }
        }
    }
    // Transverse exchange: -J/2 (S+_a S-_b + S+_b S-_a) equals
    // +J/2 [(c†_{a↑}c_{b↑})(c†_{b↓}c_{a↓}) + (a <-> b)] after normal
    // ordering; the species-local hop signs multiply.
    for e in &spec.exchanges {
        let half_j = e.coupling * S::of(0.5);
        for (to, from) in [(e.a, e.b), (e.b, e.a)] {
            if let Some((t1, s1)) = apply_hop(state, to, from, Spin::Up) {
                if let Some((t2, s2)) = apply_hop(t1, from, to, Spin::Dn) {
                    emit(t2, Cx::new(half_j * S::of((s1 * s2) as f64), S::zero()));
                }
            }
        }
    }
}

/// Assemble the sector matrix of a spec with the default dimension cap.
pub fn assemble<S: Scalar>(spec: &ModelSpec<S>, sector: Sector) -> Result<SectorMatrix<S>> {
    assemble_capped(spec, sector, DEFAULT_DIM_CAP)
}

/// Assemble with an explicit sector-dimension cap.
pub fn assemble_capped<S: Scalar>(
    spec: &ModelSpec<S>,
    sector: Sector,
    dim_cap: usize,
) -> Result<SectorMatrix<S>> {
    if sector.is_spinful() != matches!(spec.spin, SpinKind::Spinful) {
        return Err(Error::Domain(
            "sector spin structure does not match the spec".into(),
        ));
    }
    let basis = enumerate_basis(spec.l, sector)?;
    let dim = basis.len();
    if dim == 0 {
        return Err(Error::Domain("empty sector".into()));
    }
    if dim > dim_cap {
        return Err(Error::Resource(format!(
            "sector dimension {dim} exceeds the cap {dim_cap}"
        )));
    }

    let mut triplets: Vec<(u32, u32, Cx<S>)> = Vec::with_capacity(dim * (spec.hops.len() + 1));
    for n in 0..dim {
        let state = basis.state(n);
        let d = diagonal_element(spec, state);
        if d != S::zero() {
            triplets.push((n as u32, n as u32, Cx::new(d, S::zero())));
        }
        for_each_offdiagonal(spec, state, |t, a| {
            let m = basis
                .index_of(t)
                .expect("number-conserving term left the sector");
            triplets.push((m as u32, n as u32, a));
        });
    }
    triplets.sort_by_key(|&(r, c, _)| (r, c));

    let mut row_ptr = vec![0usize; dim + 1];
    let mut col = Vec::with_capacity(triplets.len());
    let mut val: Vec<Cx<S>> = Vec::with_capacity(triplets.len());
    let mut last: Option<(u32, u32)> = None;
    for (r, c, a) in triplets {
        if last == Some((r, c)) {
            *val.last_mut().unwrap() += a;
        } else {
            col.push(c);
            val.push(a);
            row_ptr[r as usize + 1] += 1;
            last = Some((r, c));
        }
    }
    for r in 0..dim {
        row_ptr[r + 1] += row_ptr[r];
    }
    let real = val.iter().all(|z| z.im == S::zero());
    Ok(SectorMatrix {
        basis,
        dim,
        row_ptr,
        col,
        val,
        real,
    })
}

/// Matrix-free application of a spec to a sector vector; must agree with the
/// stored-matrix product.
pub fn apply_spec<S: Scalar>(
    spec: &ModelSpec<S>,
    basis: &FockBasis,
    x: &[Cx<S>],
    y: &mut [Cx<S>],
) {
    for e in y.iter_mut() {
        *e = Cx::zero();
    }
    for n in 0..basis.len() {
        let state = basis.state(n);
        let d = diagonal_element(spec, state);
        y[n] += x[n] * d;
        for_each_offdiagonal(spec, state, |t, a| {
            let m = basis.index_of(t).expect("term left the sector");
            y[m] += a * x[n];
        });
    }
}

/// Options controlling [`ground_state`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions<S: Scalar> {
    /// Sector dimensions up to this bound use a dense eigensolve.
    pub dense_cutoff: usize,
    /// Relative residual target for the iterative path.
    pub tolerance: S,
    pub max_iterations: usize,
    /// Number of lowest eigenpairs to resolve (at least 2 for a gap).
    pub eigenpairs: usize,
    /// Gap below `degeneracy_factor · max(1, |E0|)` flags degeneracy.
    pub degeneracy_factor: S,
    /// Seed for deflated restarts.
    pub restart_seed: u64,
    /// Sector dimension cap for assembly.
    pub dim_cap: usize,
}

impl<S: Scalar> Default for SolverOptions<S> {
    fn default() -> Self {
        SolverOptions {
            dense_cutoff: 2000,
            tolerance: S::of(1e-11),
            max_iterations: 600,
            eigenpairs: 2,
            degeneracy_factor: S::of(1e-8),
            restart_seed: 0x5eed,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

/// Ground-state data for one sector.
#[derive(Clone, Debug)]
pub struct GroundStateResult<S: Scalar> {
    /// Lowest resolved energies, ascending.
    pub energies: Vec<S>,
    /// Normalized ground vector in basis order.
    pub vector: Vec<Cx<S>>,
    /// In-sector gap `E1 - E0`, clamped at zero.
    pub gap: S,
    pub degenerate: bool,
    /// Explicit residual `‖Hv - E0 v‖`.
    pub residual: S,
}

impl<S: Scalar> GroundStateResult<S> {
    pub fn e0(&self) -> S {
        self.energies[0]
    }

    pub fn e1(&self) -> S {
        self.energies[1]
    }
}

fn norm<S: Scalar>(x: &[Cx<S>]) -> S {
    x.iter().map(|z| z.norm_sqr()).sum::<S>().sqrt()
}

fn dot<S: Scalar>(a: &[Cx<S>], b: &[Cx<S>]) -> Cx<S> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy<S: Scalar>(y: &mut [Cx<S>], alpha: Cx<S>, x: &[Cx<S>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

fn project_out<S: Scalar>(v: &mut [Cx<S>], others: &[Vec<Cx<S>>]) {
    for o in others {
        let c = dot(o, v);
        axpy(v, -c, o);
    }
}

fn sorted_sym_eigen_real<S: Scalar>(m: DMatrix<S>) -> (Vec<S>, DMatrix<S>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let dim = eig.eigenvectors.nrows();
    let mut vecs = DMatrix::zeros(dim, order.len());
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues and
/// matching eigenvector columns.
pub fn sorted_hermitian_eigen<S: Scalar>(m: DMatrix<Cx<S>>) -> (Vec<S>, DMatrix<Cx<S>>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let dim = eig.eigenvectors.nrows();
    let mut vecs = DMatrix::zeros(dim, order.len());
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// One Lanczos run with full reorthogonalization, restricted to the
/// orthogonal complement of `deflate`. Returns the lowest Ritz pair.
fn lanczos_lowest<S: Scalar>(
    matrix: &SectorMatrix<S>,
    start: Vec<Cx<S>>,
    deflate: &[Vec<Cx<S>>],
    tol: S,
    max_iter: usize,
) -> Result<(S, Vec<Cx<S>>, S)> {
    let dim = matrix.dim;
    let mut v = start;
    project_out(&mut v, deflate);
    let n0 = norm(&v);
    if n0 < S::of(1e-12) {
        return Err(Error::Numerical(
            "Lanczos start vector vanishes in the deflated subspace".into(),
        ));
    }
    let inv = Cx::new(S::one() / n0, S::zero());
    for z in v.iter_mut() {
        *z *= inv;
    }

    let m_max = max_iter.min(dim - deflate.len()).max(1);
    let mut alphas: Vec<S> = Vec::with_capacity(m_max);
    let mut betas: Vec<S> = Vec::with_capacity(m_max);
    let mut vecs: Vec<Vec<Cx<S>>> = vec![v.clone()];
    let mut w = vec![Cx::zero(); dim];

    let ritz = |alphas: &[S], betas: &[S]| -> (S, Vec<S>) {
        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let (vals, vecs) = sorted_sym_eigen_real(t);
        (vals[0], vecs.column(0).iter().copied().collect())
    };

    let mut exhausted = false;
    for j in 0..m_max {
        matrix.matvec(&vecs[j], &mut w);
        project_out(&mut w, deflate);
        let a = dot(&vecs[j], &w).re;
        alphas.push(a);
        axpy(&mut w, Cx::new(-a, S::zero()), &vecs[j]);
        if j > 0 {
            let b = betas[j - 1];
            axpy(&mut w, Cx::new(-b, S::zero()), &vecs[j - 1]);
        }
        // full reorthogonalization, two passes
        for _ in 0..2 {
            for prev in &vecs {
                let c = dot(prev, &w);
                axpy(&mut w, -c, prev);
            }
            project_out(&mut w, deflate);
        }
        let b = norm(&w);
        if b < S::of(1e-13) {
            exhausted = true;
            break;
        }
        betas.push(b);
        let scale = Cx::new(S::one() / b, S::zero());
        let next: Vec<Cx<S>> = w.iter().map(|z| *z * scale).collect();
        vecs.push(next);

        if (j + 1) % 5 == 0 || j + 1 == m_max {
            let (theta, s) = ritz(&alphas, &betas[..alphas.len() - 1]);
            let res_est = b * s.last().copied().unwrap_or_else(S::one).abs();
            if res_est <= tol * S::one().max(theta.abs()) {
                break;
            }
        }
    }

    let m = alphas.len();
    let (theta, s) = ritz(&alphas, &betas[..m - 1]);
    let mut ground = vec![Cx::zero(); dim];
    for (i, coeff) in s.iter().enumerate() {
        axpy(&mut ground, Cx::new(*coeff, S::zero()), &vecs[i]);
    }
    project_out(&mut ground, deflate);
    let n = norm(&ground);
    let scale = Cx::new(S::one() / n, S::zero());
    for z in ground.iter_mut() {
        *z *= scale;
    }
    matrix.matvec(&ground, &mut w);
    project_out(&mut w, deflate);
    axpy(&mut w, Cx::new(-theta, S::zero()), &ground);
    let residual = norm(&w);
    if !exhausted && residual > tol * S::of(100.0) * S::one().max(theta.abs()) {
        return Err(Error::Numerical(format!(
            "Lanczos did not converge within {m} iterations (residual {:.3e})",
            residual.to_f64_lossy()
        )));
    }
    Ok((theta, ground, residual))
}

/// Lowest eigenpairs of a sector matrix: dense below the cutoff, deflated
/// Lanczos above it.
pub fn ground_state<S: Scalar>(
    matrix: &SectorMatrix<S>,
    opts: &SolverOptions<S>,
) -> Result<GroundStateResult<S>> {
    let k = opts.eigenpairs.max(2);
    if matrix.dim < 2 {
        return Err(Error::Domain(
            "sector dimension below 2: no in-sector gap to report".into(),
        ));
    }
    let (energies, vector, residual) = if matrix.dim <= opts.dense_cutoff {
        let (vals, vecs) = if matrix.real {
            let (vals, v) = sorted_sym_eigen_real(matrix.to_dense_real());
            let vc = DMatrix::from_iterator(
                v.nrows(),
                v.ncols(),
                v.iter().map(|&x| Cx::new(x, S::zero())),
            );
            (vals, vc)
        } else {
            sorted_hermitian_eigen(matrix.to_dense_complex())
        };
        let ground: Vec<Cx<S>> = vecs.column(0).iter().copied().collect();
        let mut w = vec![Cx::zero(); matrix.dim];
        matrix.matvec(&ground, &mut w);
        axpy(&mut w, Cx::new(-vals[0], S::zero()), &ground);
        let residual = norm(&w);
        (vals[..k.min(vals.len())].to_vec(), ground, residual)
    } else {
        let dim = matrix.dim;
        let uniform = Cx::new(S::one() / S::of(dim as f64).sqrt(), S::zero());
        let start = vec![uniform; dim];
        let (e0, v0, res0) =
            lanczos_lowest(matrix, start, &[], opts.tolerance, opts.max_iterations)?;
        let mut energies = vec![e0];
        let mut deflate = vec![v0.clone()];
        let mut rng = ChaCha8Rng::seed_from_u64(opts.restart_seed);
        while energies.len() < k {
            let start: Vec<Cx<S>> = (0..dim)
                .map(|_| {
                    let re: f64 = rng.gen::<f64>() - 0.5;
                    let im: f64 = rng.gen::<f64>() - 0.5;
                    Cx::new(S::of(re), S::of(im))
                })
                .collect();
            let (e, v, _) = lanczos_lowest(
                matrix,
                start,
                &deflate,
                opts.tolerance,
                opts.max_iterations,
            )?;
            energies.push(e);
            deflate.push(v);
        }
        (energies, v0, res0)
    };

    let e0 = energies[0];
    let e1 = energies[1];
    let gap = (e1 - e0).max(S::zero());
    let degenerate = gap < opts.degeneracy_factor * S::one().max(e0.abs());
    Ok(GroundStateResult {
        energies,
        vector,
        gap,
        degenerate,
        residual,
    })
}

/// Per-size gaps of a spec family at half filling.
pub fn gap_scan<S: Scalar>(
    family: impl Fn(usize) -> Result<ModelSpec<S>>,
    sizes: &[usize],
    opts: &SolverOptions<S>,
) -> Result<Vec<(usize, S)>> {
    let mut out = Vec::with_capacity(sizes.len());
    for &l in sizes {
        let spec = family(l)?;
        let matrix = assemble_capped(&spec, spec.half_filling_sector(), opts.dim_cap)?;
        let gs = ground_state(&matrix, opts)?;
        out.push((l, gs.gap));
    }
    Ok(out)
}

/// Random number-conserving operator supported on a few contiguous sites;
/// used as a variational witness against computed ground states.
#[derive(Clone, Debug)]
pub struct LocalPerturbation<S: Scalar> {
    /// `z · c†_a c_b` bilinears (same species).
    pub bilinears: Vec<(Mode, Mode, Cx<S>)>,
    /// Spin-flip pairs `z · S+_a S-_b` (spinful only).
    pub flips: Vec<(usize, usize, Cx<S>)>,
    /// Diagonal monomials `coeff · ∏ (n - 1/2)`.
    pub diagonals: Vec<(S, Vec<Mode>)>,
}

impl<S: Scalar> LocalPerturbation<S> {
    /// Draw a random perturbation with support in a window of at most
    /// `max_support` sites.
    pub fn random(rng: &mut impl Rng, l: usize, spin: SpinKind, max_support: usize) -> Self {
        let width = rng.gen_range(2..=max_support.min(l));
        let start = rng.gen_range(0..=l - width);
        let sites: Vec<usize> = (start..start + width).collect();
        let species: &[Spin] = match spin {
            SpinKind::Spinless => &[Spin::Up],
            SpinKind::Spinful => &[Spin::Up, Spin::Dn],
        };
        let draw = |rng: &mut dyn rand::RngCore| -> Cx<S> {
            let mut r = || S::of(2.0 * rand::Rng::gen::<f64>(&mut *rng) - 1.0);
            Cx::new(r(), r())
        };
        let mut bilinears = Vec::new();
        for &sp in species {
            for &a in &sites {
                for &b in &sites {
                    if a != b && rng.gen_bool(0.5) {
                        bilinears.push((
                            Mode { site: a, spin: sp },
                            Mode { site: b, spin: sp },
                            draw(rng),
                        ));
                    }
                }
            }
        }
        let mut flips = Vec::new();
        if matches!(spin, SpinKind::Spinful) {
            for &a in &sites {
                for &b in &sites {
                    if a != b && rng.gen_bool(0.3) {
                        flips.push((a, b, draw(rng)));
                    }
                }
            }
        }
        let mut diagonals = Vec::new();
        for _ in 0..2 {
            let deg = rng.gen_range(1..=2.min(width));
            let mut modes: Vec<Mode> = Vec::new();
            for _ in 0..deg {
                let site = sites[rng.gen_range(0..sites.len())];
                let sp = species[rng.gen_range(0..species.len())];
                modes.push(Mode { site, spin: sp });
            }
            modes.sort();
            modes.dedup();
            diagonals.push((S::of(2.0 * rng.gen::<f64>() - 1.0), modes));
        }
        LocalPerturbation {
            bilinears,
            flips,
            diagonals,
        }
    }

    /// `y = V x` in the given sector basis.
    pub fn apply(&self, basis: &FockBasis, x: &[Cx<S>]) -> Vec<Cx<S>> {
        let half = S::of(0.5);
        let mut y = vec![Cx::zero(); basis.len()];
        for n in 0..basis.len() {
            let state = basis.state(n);
            if x[n] == Cx::zero() {
                continue;
            }
            let mut diag: Cx<S> = Cx::zero();
            for (coeff, modes) in &self.diagonals {
                let mut prod = *coeff;
                for m in modes {
                    prod *= S::of(number_eigenvalue(state, m.site, m.spin) as f64) - half;
                }
                diag += Cx::new(prod, S::zero());
            }
            y[n] += diag * x[n];
            for (a, b, z) in &self.bilinears {
                debug_assert_eq!(a.spin, b.spin);
                if let Some((t, sign)) = apply_hop(state, a.site, b.site, a.spin) {
                    let m = basis.index_of(t).expect("bilinear left the sector");
                    y[m] += *z * S::of(sign as f64) * x[n];
                }
            }
            for (a, b, z) in &self.flips {
                if let Some((t1, s1)) = apply_hop(state, *a, *b, Spin::Up) {
                    if let Some((t2, s2)) = apply_hop(t1, *b, *a, Spin::Dn) {
                        let m = basis.index_of(t2).expect("flip left the sector");
                        y[m] -= *z * S::of((s1 * s2) as f64) * x[n];
                    }
                }
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_hubbard_ssh, build_ssh, Boundary};
    use crate::quadratic;

    fn default_opts() -> SolverOptions<f64> {
        SolverOptions::default()
    }

    #[test]
    fn two_site_hop_matrix() {
        let spec = build_ssh::<f64>(2, 0.0, Boundary::Open).unwrap();
        let m = assemble(&spec, Sector::Spinless { n: 1 }).unwrap();
        let dense = m.to_dense_complex();
        assert_eq!(dense[(0, 0)], Cx::new(0.0, 0.0));
        assert_eq!(dense[(0, 1)], Cx::new(1.0, 0.0));
        assert_eq!(dense[(1, 0)], Cx::new(1.0, 0.0));
        let gs = ground_state(&m, &default_opts()).unwrap();
        assert!((gs.e0() + 1.0).abs() < 1e-12);
        assert!((gs.gap - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hubbard_dimer_block_structure_and_energy() {
        for u in [-5.0, 0.0, 3.0, 8.0] {
            let spec = build_hubbard_ssh::<f64>(2, 0.0, u, Boundary::Open).unwrap();
            let m = assemble(&spec, Sector::Spinful { up: 1, dn: 1 }).unwrap();
            assert_eq!(m.dim, 4);
            let gs = ground_state(&m, &default_opts()).unwrap();
            let expect = (u - (u * u + 16.0).sqrt()) / 2.0;
            assert!(
                (gs.e0() - expect).abs() < 1e-12,
                "U={u}: {} vs {expect}",
                gs.e0()
            );
        }
    }

    #[test]
    fn exchange_splitting_on_isolated_cell() {
        let j = 2.0;
        let mut spec = ModelSpec::<f64>::new(2, Boundary::Open, SpinKind::Spinful);
        spec.push_exchange(0, 1, j);
        spec.finalize();
        let m = assemble(&spec, Sector::Spinful { up: 1, dn: 1 }).unwrap();
        let dense = m.to_dense_complex();
        // the spin-flip element has magnitude J/2
        let basis = &m.basis;
        let up0dn1 = basis
            .index_of(crate::fock::FockState { up: 0b01, dn: 0b10 })
            .unwrap();
        let up1dn0 = basis
            .index_of(crate::fock::FockState { up: 0b10, dn: 0b01 })
            .unwrap();
        assert!((dense[(up1dn0, up0dn1)].norm() - j / 2.0).abs() < 1e-12);
        // spectrum: triplet at -J/4, singlet at +3J/4, double occupancies at 0
        let (vals, _) = sorted_hermitian_eigen(dense);
        let expect = [-j / 4.0, 0.0, 0.0, 3.0 * j / 4.0];
        for (a, b) in vals.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // the m = ±1 triplet components sit at the same energy
        let mz = assemble(&spec, Sector::Spinful { up: 2, dn: 0 }).unwrap();
        let dz = mz.to_dense_complex();
        assert!((dz[(0, 0)].re + j / 4.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_free_apply_matches_csr() {
        let spec = build_hubbard_ssh::<f64>(4, 0.4, 2.5, Boundary::Ring).unwrap();
        let sector = Sector::Spinful { up: 2, dn: 2 };
        let m = assemble(&spec, sector).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Cx<f64>> = (0..m.dim)
            .map(|_| Cx::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut y1 = vec![Cx::new(0.0, 0.0); m.dim];
        m.matvec(&x, &mut y1);
        let mut y2 = vec![Cx::new(0.0, 0.0); m.dim];
        apply_spec(&spec, &m.basis, &x, &mut y2);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn assembled_matrices_are_hermitian_small() {
        for l in [4usize, 6] {
            let spec = build_ssh::<f64>(l, 0.35, Boundary::Ring).unwrap();
            for n in 0..=l {
                let m = assemble(&spec, Sector::Spinless { n }).unwrap();
                let d = m.to_dense_complex();
                let diff = (&d - d.adjoint()).norm();
                assert!(diff == 0.0, "L={l} N={n}: non-Hermitian by {diff}");
            }
        }
        let spec = build_hubbard_ssh::<f64>(4, 0.7, -3.0, Boundary::Ring).unwrap();
        for up in 0..=2 {
            let m = assemble(&spec, Sector::Spinful { up, dn: 1 }).unwrap();
            let d = m.to_dense_complex();
            assert!((&d - d.adjoint()).norm() == 0.0);
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        // force the iterative path on a sector that the dense path can check
        let spec = build_ssh::<f64>(12, 0.3, Boundary::Ring).unwrap();
        let m = assemble(&spec, Sector::Spinless { n: 6 }).unwrap();
        let dense = ground_state(&m, &default_opts()).unwrap();
        let mut opts = default_opts();
        opts.dense_cutoff = 10;
        let kry = ground_state(&m, &opts).unwrap();
        assert!((dense.e0() - kry.e0()).abs() < 1e-9);
        assert!((dense.e1() - kry.e1()).abs() < 1e-8);
        let overlap: Cx<f64> = dense
            .vector
            .iter()
            .zip(&kry.vector)
            .map(|(a, b)| a.conj() * b)
            .sum();
        assert!(overlap.norm() > 1.0 - 1e-8);
    }

    #[test]
    fn lanczos_resolves_exact_degeneracy() {
        // half-chain dimerized limit: two zero modes, doubly degenerate sector
        let ring = build_ssh::<f64>(12, 1.0, Boundary::Ring).unwrap();
        let half = crate::models::restrict_half_chain(&ring, None).unwrap();
        let m = assemble(&half, Sector::Spinless { n: 6 }).unwrap();
        let mut opts = default_opts();
        opts.dense_cutoff = 10;
        let gs = ground_state(&m, &opts).unwrap();
        assert!(gs.gap < 1e-10);
        assert!(gs.degenerate);
    }

    #[test]
    fn free_fermion_oracle_matches_ed() {
        for (l, s) in [(8usize, 0.2), (10, 0.45), (12, 0.8)] {
            let spec = build_ssh::<f64>(l, s, Boundary::Ring).unwrap();
            let m = assemble(&spec, spec.half_filling_sector()).unwrap();
            let gs = ground_state(&m, &default_opts()).unwrap();
            let (e0_ff, gap_ff) = quadratic::free_ground_energy_and_gap(&spec, l / 2).unwrap();
            assert!((gs.e0() - e0_ff).abs() < 1e-9, "E0 mismatch at L={l} s={s}");
            assert!((gs.gap - gap_ff).abs() < 1e-9, "gap mismatch at L={l} s={s}");
        }
    }

    #[test]
    fn gap_scan_examples() {
        let opts = default_opts();
        let flat = gap_scan(
            |l| build_ssh::<f64>(l, 0.0, Boundary::Ring),
            &[8, 10, 12],
            &opts,
        )
        .unwrap();
        for (_, gap) in flat {
            assert!((gap - 2.0).abs() < 1e-10);
        }
        let quarter = gap_scan(
            |l| build_ssh::<f64>(l, 0.25, Boundary::Ring),
            &[8, 12],
            &opts,
        )
        .unwrap();
        for (_, gap) in quarter {
            assert!((gap - 1.0).abs() < 0.1);
        }
        let critical = gap_scan(
            |l| build_ssh::<f64>(l, 0.5, Boundary::Ring),
            &[8, 12],
            &opts,
        )
        .unwrap();
        for (l, gap) in critical {
            assert!(gap <= 8.0 / l as f64);
        }
    }

    #[test]
    fn critical_chain_gap_shrinks() {
        let spec = build_ssh::<f64>(12, 0.5, Boundary::Ring).unwrap();
        let m = assemble(&spec, Sector::Spinless { n: 6 }).unwrap();
        let gs = ground_state(&m, &default_opts()).unwrap();
        assert!(gs.gap < 0.2);
    }

    #[test]
    fn variational_inequalities_hold() {
        let spec = build_ssh::<f64>(10, 0.3, Boundary::Ring).unwrap();
        let m = assemble(&spec, Sector::Spinless { n: 5 }).unwrap();
        let gs = ground_state(&m, &default_opts()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let v = LocalPerturbation::random(&mut rng, 10, SpinKind::Spinless, 4);
            let w = v.apply(&m.basis, &gs.vector);
            let n2: f64 = w.iter().map(|z| z.norm_sqr()).sum();
            if n2 < 1e-18 {
                continue;
            }
            let energy = m.expectation_value(&w) - gs.e0() * n2;
            assert!(energy >= -1e-9, "ground-state inequality violated: {energy}");

            // projected witness for the gap inequality
            let ip: Cx<f64> = gs.vector.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
            let mut wp = w.clone();
            for (wi, vi) in wp.iter_mut().zip(&gs.vector) {
                *wi -= ip * vi;
            }
            let np: f64 = wp.iter().map(|z| z.norm_sqr()).sum();
            if np < 1e-14 {
                continue;
            }
            let ep = m.expectation_value(&wp) - gs.e0() * np;
            assert!(
                ep >= gs.gap * np - 1e-8,
                "gap inequality violated: {ep} vs {}",
                gs.gap * np
            );
        }
    }

    #[test]
    fn resource_and_convergence_errors() {
        let spec = build_ssh::<f64>(12, 0.3, Boundary::Ring).unwrap();
        assert!(matches!(
            assemble_capped(&spec, Sector::Spinless { n: 6 }, 100),
            Err(Error::Resource(_))
        ));
        let m = assemble(&spec, Sector::Spinless { n: 6 }).unwrap();
        let mut opts = default_opts();
        opts.dense_cutoff = 10;
        opts.max_iterations = 3;
        assert!(matches!(
            ground_state(&m, &opts),
            Err(Error::Numerical(_))
        ));
    }
}
