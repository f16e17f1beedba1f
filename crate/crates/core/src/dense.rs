//! Exact diagonalisation for small spin chains.
//!
//! A [`DenseModel`] stores its Hamiltonian as a sparse real matrix and a full
//! eigendecomposition computed once at construction; every time evolution is
//! then a phase applied in the eigenbasis. Models can be restricted to the
//! sector of states even under site reflection `n -> N-1-n`, which halves the
//! dimension. States and observables are always specified in the full `2^N`
//! computational basis and projected internally.
//!
//! Basis convention: bit `n` of the index is the occupation of site `n`
//! (`σ_z = +1` on `|0⟩`, `-1` on `|1⟩`).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::filter::{cosine_power, ln_cosine_power, FilterExpansion, FilterSpec};
use crate::ising::FockState;

pub const MAX_SITES: usize = 14;
/// Largest dimension handed to the dense eigensolver.
pub const MAX_DIM: usize = 8256;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Applies a Pauli string to a basis state: returns `(phase, image)`.
fn apply_pauli_string(ops: &[(usize, Pauli)], state: usize) -> (Complex64, usize) {
    let mut phase = ONE;
    let mut s = state;
    for &(site, p) in ops.iter().rev() {
        let bit = (s >> site) & 1;
        match p {
            Pauli::X => s ^= 1 << site,
            Pauli::Y => {
                phase *= if bit == 0 { I } else { -I };
                s ^= 1 << site;
            }
            Pauli::Z => {
                if bit == 1 {
                    phase = -phase;
                }
            }
        }
    }
    (phase, s)
}

/// Sign of `a†_site` / `a_site` acting on `state` under Jordan-Wigner ordering.
fn jw_sign(state: usize, site: usize) -> f64 {
    if (state & ((1usize << site) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FermionOp {
    Create(usize),
    Annihilate(usize),
}

/// Applies a product of fermion operators (rightmost first).
fn apply_fermion_string(ops: &[FermionOp], state: usize) -> Option<(f64, usize)> {
    let mut sign = 1.0;
    let mut s = state;
    for op in ops.iter().rev() {
        match *op {
            FermionOp::Create(n) => {
                if s >> n & 1 == 1 {
                    return None;
                }
                sign *= jw_sign(s, n);
                s |= 1 << n;
            }
            FermionOp::Annihilate(n) => {
                if s >> n & 1 == 0 {
                    return None;
                }
                sign *= jw_sign(s, n);
                s &= !(1 << n);
            }
        }
    }
    Some((sign, s))
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
struct Csr<T> {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Copy + Into<Complex64>> Csr<T> {
    fn from_rows(dim: usize, mut row: impl FnMut(usize, &mut Vec<(usize, T)>)) -> Self
    where
        T: std::ops::AddAssign + PartialEq + Default,
    {
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut scratch = Vec::new();
        indptr.push(0);
        for r in 0..dim {
            scratch.clear();
            row(r, &mut scratch);
            scratch.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(c, v) in &scratch {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            // Drop exact cancellations.
            let start = indptr[r];
            let mut w = start;
            for k in start..indices.len() {
                if values[k] != T::default() {
                    indices[w] = indices[k];
                    values[w] = values[k];
                    w += 1;
                }
            }
            indices.truncate(w);
            values.truncate(w);
            indptr.push(w);
        }
        Self {
            indptr,
            indices,
            values,
        }
    }

    fn dim(&self) -> usize {
        self.indptr.len() - 1
    }

    fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|r| self.row(r).map(|(c, v)| x[c] * v.into()).sum())
            .collect()
    }

    /// `⟨x|A|y⟩`.
    fn bracket(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        (0..self.dim())
            .map(|r| {
                let ay: Complex64 = self.row(r).map(|(c, v)| y[c] * v.into()).sum();
                x[r].conj() * ay
            })
            .sum()
    }

    /// `⟨v|A|v⟩` for a real vector.
    fn bracket_real(&self, v: &[f64]) -> f64 {
        (0..self.dim())
            .map(|r| {
                let av: Complex64 = self.row(r).map(|(c, a)| a.into() * v[c]).sum();
                v[r] * av.re
            })
            .sum()
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    fn gershgorin(&self) -> f64 {
        (0..self.dim())
            .map(|r| self.row(r).map(|(_, v)| v.into().norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim() {
            for (c, v) in self.row(r) {
                let back = self
                    .row(c)
                    .find(|&(cc, _)| cc == r)
                    .map(|(_, w)| w.into())
                    .unwrap_or(ZERO);
                worst = worst.max((v.into() - back.conj()).norm());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Full,
    /// States symmetric under site reflection.
    ReflectionEven,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseKind {
    /// The free-fermion chain `g/2 Σ (a_n + a†_n)(a_{n+1} - a†_{n+1}) + h Σ (n_n - 1/2)`
    /// with `a_{N+1} = a_1`, built in the fermion occupation basis.
    TransverseIsing { g: f64, h: f64 },
    /// `J [Σ_{n<N} Z_n Z_{n+1} + h Σ Z_n + g Σ X_n]`, open boundaries.
    TiltedIsing { j: f64, h: f64, g: f64 },
    /// `Σ_n jx_n X_n X_{n+1} + Σ_n h_n Z_n`, open chain.
    XyChain { jx: Vec<f64>, fields: Vec<f64> },
    /// User-supplied real symmetric matrix (row-major, `2^N x 2^N`).
    Custom,
}

/// Reflection-even basis: vectors `|s⟩` for palindromes and
/// `(|s⟩ + |rev s⟩)/√2` otherwise.
#[derive(Debug, Clone, PartialEq)]
struct SectorBasis {
    n_sites: usize,
    reps: Vec<usize>,
    /// Full index -> sector index.
    index: Vec<u32>,
}

fn reverse_bits(s: usize, n: usize) -> usize {
    s.reverse_bits() >> (usize::BITS as usize - n)
}

impl SectorBasis {
    fn reflection_even(n_sites: usize) -> Self {
        let full = 1usize << n_sites;
        let mut reps = Vec::with_capacity(full / 2 + (1 << (n_sites / 2)));
        let mut index = vec![0u32; full];
        for s in 0..full {
            let r = reverse_bits(s, n_sites);
            if s <= r {
                index[s] = reps.len() as u32;
                index[r] = reps.len() as u32;
                reps.push(s);
            }
        }
        Self {
            n_sites,
            reps,
            index,
        }
    }

    fn dim(&self) -> usize {
        self.reps.len()
    }

    /// `(partner, coefficient)` of sector vector `i` on its support.
    fn support(&self, i: usize) -> ([usize; 2], usize, f64) {
        let s = self.reps[i];
        let r = reverse_bits(s, self.n_sites);
        if s == r {
            ([s, s], 1, 1.0)
        } else {
            ([s, r], 2, std::f64::consts::FRAC_1_SQRT_2)
        }
    }

    fn coefficient(&self, full_index: usize) -> (usize, f64) {
        let i = self.index[full_index] as usize;
        (i, self.support(i).2)
    }

    fn project_vector(&self, psi: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|i| {
                let (sup, len, c) = self.support(i);
                sup[..len].iter().map(|&u| psi[u] * c).sum()
            })
            .collect()
    }

    fn lift_vector(&self, c: &[Complex64]) -> Vec<Complex64> {
        (0..self.index.len())
            .map(|u| {
                let (i, coef) = self.coefficient(u);
                c[i] * coef
            })
            .collect()
    }

    fn project_operator<T>(&self, op: &Csr<T>) -> Csr<T>
    where
        T: Copy + Into<Complex64> + std::ops::AddAssign + PartialEq + Default + std::ops::Mul<f64, Output = T>,
    {
        Csr::from_rows(self.dim(), |i, out| {
            let (sup, len, ci) = self.support(i);
            for &u in &sup[..len] {
                for (w, v) in op.row(u) {
                    let (j, cj) = self.coefficient(w);
                    out.push((j, v * (ci * cj)));
                }
            }
        })
    }
}

/// Hermitian operator on the full `2^N` computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseObservable {
    n_sites: usize,
    matrix: Csr<Complex64>,
    norm_bound: f64,
}

impl DenseObservable {
    fn from_csr(n_sites: usize, matrix: Csr<Complex64>) -> Result<Self> {
        let defect = matrix.hermiticity_defect();
        if defect > 1e-12 {
            return Err(invalid(format!("observable is not Hermitian (defect {defect:e})")));
        }
        let norm_bound = matrix.gershgorin();
        Ok(Self {
            n_sites,
            matrix,
            norm_bound,
        })
    }

    /// `Σ_i coef_i · P_i` for Pauli strings `P_i`.
    pub fn pauli_sum(n_sites: usize, terms: &[(f64, Vec<(usize, Pauli)>)]) -> Result<Self> {
        check_sites(n_sites)?;
        for (_, ops) in terms {
            if ops.iter().any(|&(s, _)| s >= n_sites) {
                return Err(invalid("Pauli string acts outside the chain"));
            }
        }
        let m = Csr::from_rows(1 << n_sites, |s, out| {
            for (coef, ops) in terms {
                // Row s: ⟨s|P|u⟩ is nonzero for u = P(s) since Pauli strings
                // are Hermitian involutions.
                let (phase, u) = apply_pauli_string(ops, s);
                out.push((u, phase.conj() * *coef));
            }
        });
        Self::from_csr(n_sites, m)
    }

    /// Single-site `σ` at `site`.
    pub fn pauli(n_sites: usize, site: usize, p: Pauli) -> Result<Self> {
        Self::pauli_sum(n_sites, &[(1.0, vec![(site, p)])])
    }

    /// `(1/N) Σ_n a†_n a_n` in the fermion occupation basis.
    pub fn fermion_density(n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let n = n_sites as f64;
        let m = Csr::from_rows(1 << n_sites, |s, out| {
            out.push((s, Complex64::new(s.count_ones() as f64 / n, 0.0)));
        });
        Self::from_csr(n_sites, m)
    }

    /// Row-major dense Hermitian matrix.
    pub fn from_matrix(n_sites: usize, matrix: &[Complex64]) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        if matrix.len() != dim * dim {
            return Err(invalid(format!(
                "matrix has {} entries, expected {}",
                matrix.len(),
                dim * dim
            )));
        }
        let m = Csr::from_rows(dim, |r, out| {
            for c in 0..dim {
                let v = matrix[r * dim + c];
                if v != ZERO {
                    out.push((c, v));
                }
            }
        });
        Self::from_csr(n_sites, m)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `⟨ψ|A|ψ⟩` in the full basis.
    pub fn expectation(&self, state: &DenseState) -> Result<f64> {
        if state.n_sites() != self.n_sites {
            return Err(invalid("state and observable sizes differ"));
        }
        Ok(self.matrix.bracket(&state.amplitudes, &state.amplitudes).re)
    }
}

fn check_sites(n_sites: usize) -> Result<()> {
    if n_sites == 0 {
        return Err(invalid("need at least one site"));
    }
    if n_sites > MAX_SITES {
        return Err(Error::Resource(format!(
            "dense backend is limited to N <= {MAX_SITES}, got {n_sites}"
        )));
    }
    Ok(())
}

/// Normalised vector in the full `2^N` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    n_sites: usize,
    amplitudes: Vec<Complex64>,
}

impl DenseState {
    pub fn new(n_sites: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_sites(n_sites)?;
        if amplitudes.len() != 1 << n_sites {
            return Err(invalid("state length is not 2^N"));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("state norm^2 is {norm}, expected 1")));
        }
        Ok(Self {
            n_sites,
            amplitudes,
        })
    }

    /// Normalises `amplitudes` first.
    pub fn normalized(n_sites: usize, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("cannot normalise a zero vector"));
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self::new(n_sites, amplitudes)
    }

    pub fn basis(n_sites: usize, index: usize) -> Result<Self> {
        check_sites(n_sites)?;
        let mut amps = vec![ZERO; 1 << n_sites];
        *amps
            .get_mut(index)
            .ok_or_else(|| invalid("basis index out of range"))? = ONE;
        Self::new(n_sites, amps)
    }

    /// `⊗_n (u_n |0⟩ + v_n |1⟩)` from per-site normalised pairs.
    pub fn product(sites: &[[Complex64; 2]]) -> Result<Self> {
        let n = sites.len();
        check_sites(n)?;
        for (k, s) in sites.iter().enumerate() {
            let norm = s[0].norm_sqr() + s[1].norm_sqr();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("site {k} is not normalised")));
            }
        }
        let amps = (0..1usize << n)
            .map(|s| {
                sites
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p[(s >> k) & 1])
                    .product()
            })
            .collect();
        Self::new(n, amps)
    }

    /// `(cos θ |0⟩ + sin θ |1⟩)^{⊗N}`.
    pub fn product_theta(theta: f64, n_sites: usize) -> Result<Self> {
        let (s, c) = theta.sin_cos();
        Self::product(&vec![[c.into(), s.into()]; n_sites])
    }

    /// The free-fermion Fock state with the given block labels, in the
    /// occupation basis of the chain sites.
    pub fn fock(n_sites: usize, state: &FockState) -> Result<Self> {
        check_sites(n_sites)?;
        if n_sites % 2 != 0 || state.n_blocks() != n_sites / 2 {
            return Err(invalid("Fock state does not match the chain length"));
        }
        let half = (n_sites / 2) as i64;
        let mut psi = vec![ZERO; 1 << n_sites];
        psi[0] = ONE;
        for (k, &label) in state.labels().iter().enumerate() {
            let k = k as i64;
            // Creation operators, rightmost applied first.
            let modes: &[i64] = match (k, label) {
                (_, 1) => &[],
                (0, 2) => &[half, 0],
                (0, 3) => &[half],
                (0, 4) => &[0],
                (_, 2) => &[k, -k],
                (_, 3) => &[k],
                _ => &[-k],
            };
            for &q in modes.iter().rev() {
                psi = apply_momentum_creation(n_sites, q, &psi);
            }
        }
        Self::new(n_sites, psi)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }
}

/// `b†_q ψ` with `b_q = N^{-1/2} Σ_{n=1}^{N} e^{i 2π q n/N} a_n`; site `n` is bit `n-1`.
pub fn apply_momentum_creation(n_sites: usize, q: i64, psi: &[Complex64]) -> Vec<Complex64> {
    apply_momentum(n_sites, q, psi, true)
}

/// `b_q ψ`.
pub fn apply_momentum_annihilation(n_sites: usize, q: i64, psi: &[Complex64]) -> Vec<Complex64> {
    apply_momentum(n_sites, q, psi, false)
}

fn apply_momentum(n_sites: usize, q: i64, psi: &[Complex64], create: bool) -> Vec<Complex64> {
    let n = n_sites as f64;
    let norm = n.sqrt().recip();
    let mut out = vec![ZERO; psi.len()];
    for site in 0..n_sites {
        let angle = 2.0 * PI * q as f64 * (site + 1) as f64 / n;
        let (op, phase) = if create {
            (FermionOp::Create(site), Complex64::from_polar(norm, -angle))
        } else {
            (FermionOp::Annihilate(site), Complex64::from_polar(norm, angle))
        };
        for (s, &amp) in psi.iter().enumerate() {
            if amp == ZERO {
                continue;
            }
            if let Some((sign, u)) = apply_fermion_string(&[op], s) {
                out[u] += amp * phase * sign;
            }
        }
    }
    out
}

/// A state resolved in a model's eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    /// `⟨E_i|ψ⟩`.
    pub coefficients: Vec<Complex64>,
    /// `|⟨E_i|ψ⟩|^2`.
    pub weights: Vec<f64>,
    sector_vector: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel {
    kind: DenseKind,
    n_sites: usize,
    sector: Sector,
    basis: Option<SectorBasis>,
    hamiltonian: Csr<f64>,
    eigenvalues: Vec<f64>,
    /// Column-major, column `i` is the eigenvector of `eigenvalues[i]`.
    eigenvectors: Vec<f64>,
}

impl DenseModel {
    pub fn transverse_ising(g: f64, h: f64, n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if n_sites < 2 || n_sites % 2 != 0 {
            return Err(invalid("the fermion chain needs an even N"));
        }
        let terms = fermion_ising_terms(g, h, n_sites);
        let full = Csr::from_rows(1 << n_sites, |s, out| {
            // ⟨s|H|u⟩ = ⟨u|H|s⟩ for the real symmetric H: collect the column.
            for (coef, ops) in &terms {
                if let Some((sign, u)) = apply_fermion_string(ops, s) {
                    out.push((u, coef * sign));
                }
            }
        });
        Self::finish(
            DenseKind::TransverseIsing { g, h },
            n_sites,
            Sector::Full,
            full,
        )
    }

    pub fn tilted_ising(j: f64, h: f64, g: f64, n_sites: usize, sector: Sector) -> Result<Self> {
        check_sites(n_sites)?;
        let mut terms = Vec::new();
        for n in 0..n_sites.saturating_sub(1) {
            terms.push((j, vec![(n, Pauli::Z), (n + 1, Pauli::Z)]));
        }
        for n in 0..n_sites {
            terms.push((j * h, vec![(n, Pauli::Z)]));
            terms.push((j * g, vec![(n, Pauli::X)]));
        }
        let full = pauli_hamiltonian(n_sites, &terms)?;
        Self::finish(DenseKind::TiltedIsing { j, h, g }, n_sites, sector, full)
    }

    pub fn xy_chain(jx: Vec<f64>, fields: Vec<f64>) -> Result<Self> {
        let n_sites = fields.len();
        check_sites(n_sites)?;
        if jx.len() + 1 != n_sites {
            return Err(invalid("an open chain of N sites has N-1 bonds"));
        }
        let mut terms = Vec::new();
        for (n, &c) in jx.iter().enumerate() {
            terms.push((c, vec![(n, Pauli::X), (n + 1, Pauli::X)]));
        }
        for (n, &c) in fields.iter().enumerate() {
            terms.push((c, vec![(n, Pauli::Z)]));
        }
        let full = pauli_hamiltonian(n_sites, &terms)?;
        Self::finish(DenseKind::XyChain { jx, fields }, n_sites, Sector::Full, full)
    }

    /// Row-major real symmetric `2^N x 2^N` matrix.
    pub fn custom(n_sites: usize, matrix: &[f64]) -> Result<Self> {
        check_sites(n_sites)?;
        let dim = 1usize << n_sites;
        if matrix.len() != dim * dim {
            return Err(invalid("matrix is not 2^N x 2^N"));
        }
        for r in 0..dim {
            for c in 0..r {
                if (matrix[r * dim + c] - matrix[c * dim + r]).abs() > 1e-12 {
                    return Err(invalid(format!("matrix is not symmetric at ({r}, {c})")));
                }
            }
        }
        let full = Csr::from_rows(dim, |r, out| {
            for c in 0..dim {
                let v = matrix[r * dim + c];
                if v != 0.0 {
                    out.push((c, v));
                }
            }
        });
        Self::finish(DenseKind::Custom, n_sites, Sector::Full, full)
    }

    fn finish(kind: DenseKind, n_sites: usize, sector: Sector, full: Csr<f64>) -> Result<Self> {
        let basis = match sector {
            Sector::Full => None,
            Sector::ReflectionEven => Some(SectorBasis::reflection_even(n_sites)),
        };
        let hamiltonian = match &basis {
            None => full,
            Some(b) => b.project_operator(&full),
        };
        let dim = hamiltonian.dim();
        if dim > MAX_DIM {
            return Err(Error::Resource(format!(
                "dimension {dim} exceeds the dense limit {MAX_DIM}; use the reflection-even sector"
            )));
        }
        let mut dense = vec![0.0; dim * dim];
        for r in 0..dim {
            for (c, v) in hamiltonian.row(r) {
                dense[c * dim + r] = v;
            }
        }
        let (eigenvalues, eigenvectors) = symmetric_eigen(dense, dim)?;
        Ok(Self {
            kind,
            n_sites,
            sector,
            basis,
            hamiltonian,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn kind(&self) -> &DenseKind {
        &self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn eigenvector(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.eigenvectors[i * d..(i + 1) * d]
    }

    /// Energy scale `N |J| (1 + |h| + |g|)` bounding the tilted-field spectrum.
    pub fn tilted_scale(&self) -> Option<f64> {
        match self.kind {
            DenseKind::TiltedIsing { j, h, g } => {
                Some(self.n_sites as f64 * j.abs() * (1.0 + h.abs() + g.abs()))
            }
            _ => None,
        }
    }

    fn to_sector(&self, state: &DenseState) -> Result<Vec<Complex64>> {
        if state.n_sites != self.n_sites {
            return Err(invalid(format!(
                "state has {} sites, model has {}",
                state.n_sites, self.n_sites
            )));
        }
        match &self.basis {
            None => Ok(state.amplitudes.clone()),
            Some(b) => {
                let c = b.project_vector(&state.amplitudes);
                let kept: f64 = c.iter().map(|a| a.norm_sqr()).sum();
                if (1.0 - kept).abs() > 1e-10 {
                    return Err(invalid(format!(
                        "state has weight {:e} outside the reflection-even sector",
                        1.0 - kept
                    )));
                }
                Ok(c)
            }
        }
    }

    fn sector_operator(&self, obs: &DenseObservable) -> Result<Csr<Complex64>> {
        if obs.n_sites != self.n_sites {
            return Err(invalid("observable and model sizes differ"));
        }
        Ok(match &self.basis {
            None => obs.matrix.clone(),
            Some(b) => b.project_operator(&obs.matrix),
        })
    }

    /// Eigenbasis coefficients of a state.
    pub fn decompose(&self, state: &DenseState) -> Result<SpectralState> {
        let v = self.to_sector(state)?;
        let re: Vec<f64> = v.iter().map(|a| a.re).collect();
        let im: Vec<f64> = v.iter().map(|a| a.im).collect();
        let coefficients: Vec<Complex64> = (0..self.dim())
            .map(|i| {
                let col = self.eigenvector(i);
                Complex64::new(dot(col, &re), dot(col, &im))
            })
            .collect();
        let weights = coefficients.iter().map(|c| c.norm_sqr()).collect();
        Ok(SpectralState {
            coefficients,
            weights,
            sector_vector: v,
        })
    }

    /// `Σ_i f_i |E_i⟩` in sector coordinates.
    fn synthesize(&self, f: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim();
        let mut out = vec![ZERO; d];
        for (i, &fi) in f.iter().enumerate() {
            if fi == ZERO {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(self.eigenvector(i)) {
                *o += fi * v;
            }
        }
        out
    }

    /// `e^{-iHt} ψ` in the full basis.
    pub fn evolve(&self, state: &DenseState, t: f64) -> Result<DenseState> {
        let spec = self.decompose(state)?;
        let v = self.evolved_sector(&spec, t);
        let full = match &self.basis {
            None => v,
            Some(b) => b.lift_vector(&v),
        };
        Ok(DenseState {
            n_sites: self.n_sites,
            amplitudes: full,
        })
    }

    fn evolved_sector(&self, spec: &SpectralState, t: f64) -> Vec<Complex64> {
        let f: Vec<Complex64> = spec
            .coefficients
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&c, &e)| c * Complex64::from_polar(1.0, -e * t))
            .collect();
        self.synthesize(&f)
    }

    /// `⟨ψ|e^{-iHt}|ψ⟩`.
    pub fn amplitude(&self, state: &DenseState, t: f64) -> Result<Complex64> {
        Ok(self.spectral_amplitude(&self.decompose(state)?, t))
    }

    pub fn spectral_amplitude(&self, spec: &SpectralState, t: f64) -> Complex64 {
        spec.weights
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&w, &e)| Complex64::from_polar(w, -e * t))
            .sum()
    }

    /// `⟨ψ|e^{iHt₁} A e^{-iHt₂}|ψ⟩`.
    pub fn observable_amplitude(
        &self,
        state: &DenseState,
        obs: &DenseObservable,
        t1: f64,
        t2: f64,
    ) -> Result<Complex64> {
        let grid = self.observable_amplitude_grid(state, obs, &[t1], &[t2])?;
        Ok(grid[0])
    }

    /// Row-major table of `⟨ψ(t₁)|A|ψ(t₂)⟩` over `times1 x times2`.
    pub fn observable_amplitude_grid(
        &self,
        state: &DenseState,
        obs: &DenseObservable,
        times1: &[f64],
        times2: &[f64],
    ) -> Result<Vec<Complex64>> {
        let spec = self.decompose(state)?;
        let a = self.sector_operator(obs)?;
        let right: Vec<Vec<Complex64>> = times2
            .iter()
            .map(|&t| a.apply(&self.evolved_sector(&spec, t)))
            .collect();
        let mut out = Vec::with_capacity(times1.len() * times2.len());
        for &t in times1 {
            let left = self.evolved_sector(&spec, t);
            for r in &right {
                out.push(left.iter().zip(r).map(|(l, x)| l.conj() * x).sum());
            }
        }
        Ok(out)
    }

    /// `(⟨H⟩, ⟨H²⟩ - ⟨H⟩²)`.
    pub fn moments(&self, state: &DenseState) -> Result<(f64, f64)> {
        let v = self.to_sector(state)?;
        let hv = self.hamiltonian.apply(&v);
        let mean = v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum::<Complex64>().re;
        let second: f64 = hv.iter().map(|a| a.norm_sqr()).sum();
        Ok((mean, (second - mean * mean).max(0.0)))
    }

    pub fn expectation(&self, state: &DenseState, obs: &DenseObservable) -> Result<f64> {
        let v = self.to_sector(state)?;
        Ok(self.sector_operator(obs)?.bracket(&v, &v).re)
    }

    /// `⟨E_i|A|E_i⟩` for every eigenvector.
    pub fn eigen_expectations(&self, obs: &DenseObservable) -> Result<Vec<f64>> {
        let a = self.sector_operator(obs)?;
        Ok((0..self.dim())
            .map(|i| a.bracket_real(self.eigenvector(i)))
            .collect())
    }

    /// Largest `|E_i - E| / s` and the matching weight `|cos|^M` past the first
    /// quarter period, where the cosine filter stops decaying.
    pub fn revival_weight(&self, spec: &FilterSpec, energy: f64) -> f64 {
        let s = spec.exponent_scale();
        let lo = self.eigenvalues[0];
        let hi = *self.eigenvalues.last().unwrap();
        let arg = ((lo - energy).abs().max((hi - energy).abs()) / s).min(PI);
        if arg <= PI / 2.0 {
            0.0
        } else {
            cosine_power(arg, spec.order()).abs()
        }
    }

    fn check_range(&self, spec: &FilterSpec, energy: f64) -> Result<()> {
        let weight = self.revival_weight(spec, energy);
        let bound = crate::filter::truncation_error_bound(spec.x);
        if weight > bound {
            return Err(invalid(format!(
                "filter scale {} lets cos^M revive to {weight:e} inside the spectrum",
                spec.exponent_scale()
            )));
        }
        Ok(())
    }

    /// `ln cos^M((E_i - E)/s)` for every level.
    fn ln_filter(&self, spec: &FilterSpec, energy: f64) -> Vec<f64> {
        let s = spec.exponent_scale();
        let m = spec.order();
        self.eigenvalues
            .iter()
            .map(|&e| ln_cosine_power((e - energy) / s, m))
            .collect()
    }

    /// `⟨ψ|cos^M((H-E)/s)|ψ⟩`, the untruncated local density of states.
    pub fn exact_ldos(&self, state: &DenseState, energy: f64, spec: &FilterSpec) -> Result<f64> {
        let st = self.decompose(state)?;
        Ok(self.spectral_exact_ldos(&st, energy, spec))
    }

    pub fn spectral_exact_ldos(&self, st: &SpectralState, energy: f64, spec: &FilterSpec) -> f64 {
        let s = spec.exponent_scale();
        let m = spec.order();
        st.weights
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&w, &e)| w * cosine_power((e - energy) / s, m))
            .sum()
    }

    /// The truncated series applied in the eigenbasis: what a noiseless
    /// amplitude-based estimate must reproduce.
    pub fn spectral_truncated_ldos(
        &self,
        st: &SpectralState,
        energy: f64,
        expansion: &FilterExpansion,
    ) -> f64 {
        st.weights
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&w, &e)| w * expansion.scalar_filter(e - energy))
            .sum()
    }

    /// Scaled filtered state `P ψ / e^{L}` and `L`, with the largest filter
    /// factor on the support of `ψ` normalised to one.
    fn filtered(&self, st: &SpectralState, energy: f64, spec: &FilterSpec) -> (Vec<Complex64>, f64) {
        let ln_f = self.ln_filter(spec, energy);
        let top = ln_f
            .iter()
            .zip(&st.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let f = st
            .coefficients
            .iter()
            .zip(&ln_f)
            .map(|(&c, &l)| if l == f64::NEG_INFINITY { ZERO } else { c * (l - top).exp() })
            .collect();
        (f, top)
    }

    /// `⟨Pψ|A|Pψ⟩ / ⟨Pψ|Pψ⟩` with the exact operator `P = cos^M((H-E)/s)`.
    pub fn filtered_expectation_exact(
        &self,
        state: &DenseState,
        obs: &DenseObservable,
        energy: f64,
        spec: &FilterSpec,
    ) -> Result<f64> {
        self.check_range(spec, energy)?;
        let st = self.decompose(state)?;
        let (f, top) = self.filtered(&st, energy, spec);
        let norm: f64 = f.iter().map(|c| c.norm_sqr()).sum();
        if norm == 0.0 || 2.0 * top + norm.ln() < (1e-300f64).ln() {
            return Err(Error::UnresolvableEnergy {
                energy,
                reason: "filtered norm below 1e-300".into(),
            });
        }
        let phi = self.synthesize(&f);
        let a = self.sector_operator(obs)?;
        Ok(a.bracket(&phi, &phi).re / norm)
    }

    /// `Re⟨ψ|A P|ψ⟩ / ⟨ψ|P|ψ⟩` with the exact filter.
    pub fn single_filtered_exact(
        &self,
        state: &DenseState,
        obs: &DenseObservable,
        energy: f64,
        spec: &FilterSpec,
    ) -> Result<f64> {
        self.check_range(spec, energy)?;
        let st = self.decompose(state)?;
        let (f, top) = self.filtered(&st, energy, spec);
        let den: f64 = st
            .coefficients
            .iter()
            .zip(&f)
            .map(|(c, fi)| (c.conj() * fi).re)
            .sum();
        if den <= 0.0 || top + den.ln() < (1e-300f64).ln() {
            return Err(Error::UnresolvableEnergy {
                energy,
                reason: "filtered norm below 1e-300".into(),
            });
        }
        let phi = self.synthesize(&f);
        let a = self.sector_operator(obs)?;
        Ok(a.bracket(&st.sector_vector, &phi).re / den)
    }

    /// Single- and double-filtered values with the truncated series in place
    /// of `cos^M`; the exact counterpart of an amplitude-based estimate.
    pub fn truncated_filtered(
        &self,
        state: &DenseState,
        obs: &DenseObservable,
        energy: f64,
        expansion: &FilterExpansion,
    ) -> Result<(f64, f64)> {
        let st = self.decompose(state)?;
        let f: Vec<Complex64> = st
            .coefficients
            .iter()
            .zip(&self.eigenvalues)
            .map(|(&c, &e)| c * expansion.scalar_filter(e - energy))
            .collect();
        let phi = self.synthesize(&f);
        let a = self.sector_operator(obs)?;
        let den: f64 = st.coefficients.iter().zip(&f).map(|(c, fi)| (c.conj() * fi).re).sum();
        let norm: f64 = f.iter().map(|c| c.norm_sqr()).sum();
        let single = a.bracket(&st.sector_vector, &phi).re / den;
        let double = a.bracket(&phi, &phi).re / norm;
        Ok((single, double))
    }

    /// `tr(A P) / tr(P)` over the model's space.
    pub fn microcanonical_trace(
        &self,
        obs: &DenseObservable,
        energy: f64,
        spec: &FilterSpec,
    ) -> Result<f64> {
        let diag = self.eigen_expectations(obs)?;
        let ln_f = self.ln_filter(spec, energy);
        let top = ln_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (a, l) in diag.iter().zip(&ln_f) {
            let w = (l - top).exp();
            num += a * w;
            den += w;
        }
        Ok(num / den)
    }

    /// `tr(A e^{-βH}) / tr(e^{-βH})`.
    pub fn canonical_trace(&self, obs: &DenseObservable, beta: f64) -> Result<f64> {
        let diag = self.eigen_expectations(obs)?;
        let e0 = self.eigenvalues[0];
        let (mut num, mut den) = (0.0, 0.0);
        for (a, &e) in diag.iter().zip(&self.eigenvalues) {
            let w = (-beta * (e - e0)).exp();
            num += a * w;
            den += w;
        }
        Ok(num / den)
    }

    /// Unweighted mean of `⟨E_i|A|E_i⟩` over `|E_i - E| <= w`.
    pub fn eigenwindow_average(&self, obs: &DenseObservable, energy: f64, w: f64) -> Result<f64> {
        let (lo, hi) = (energy - w, energy + w);
        let start = self.eigenvalues.partition_point(|&e| e < lo);
        let end = self.eigenvalues.partition_point(|&e| e <= hi);
        if start >= end {
            let nearest = self
                .eigenvalues
                .iter()
                .cloned()
                .min_by(|a, b| (a - energy).abs().total_cmp(&(b - energy).abs()))
                .unwrap_or(f64::NAN);
            return Err(Error::EmptyWindow { lo, hi, nearest });
        }
        let a = self.sector_operator(obs)?;
        let total: f64 = (start..end).map(|i| a.bracket_real(self.eigenvector(i))).sum();
        Ok(total / (end - start) as f64)
    }

    /// Hamiltonian as an observable on the full basis (scaled by `factor`).
    pub fn hamiltonian_observable(&self, factor: f64) -> Result<DenseObservable> {
        let full = match &self.kind {
            DenseKind::TransverseIsing { g, h } => {
                let terms = fermion_ising_terms(*g, *h, self.n_sites);
                Csr::from_rows(1 << self.n_sites, |s, out| {
                    for (coef, ops) in &terms {
                        if let Some((sign, u)) = apply_fermion_string(ops, s) {
                            out.push((u, Complex64::new(coef * sign * factor, 0.0)));
                        }
                    }
                })
            }
            _ if self.basis.is_none() => Csr::from_rows(self.dim(), |r, out| {
                out.extend(self.hamiltonian.row(r).map(|(c, v)| (c, Complex64::new(v * factor, 0.0))));
            }),
            _ => {
                return Err(Error::Capability(
                    "Hamiltonian observables of sector-restricted models",
                ))
            }
        };
        DenseObservable::from_csr(self.n_sites, full)
    }
}

fn fermion_ising_terms(g: f64, h: f64, n_sites: usize) -> Vec<(f64, Vec<FermionOp>)> {
    use FermionOp::{Annihilate as A, Create as C};
    let mut terms = Vec::new();
    for n in 0..n_sites {
        let m = (n + 1) % n_sites;
        // (a_n + a†_n)(a_m - a†_m)
        terms.push((g / 2.0, vec![A(n), A(m)]));
        terms.push((-g / 2.0, vec![A(n), C(m)]));
        terms.push((g / 2.0, vec![C(n), A(m)]));
        terms.push((-g / 2.0, vec![C(n), C(m)]));
        terms.push((h, vec![C(n), A(n)]));
    }
    terms.push((-h * n_sites as f64 / 2.0, vec![]));
    terms
}

fn pauli_hamiltonian(n_sites: usize, terms: &[(f64, Vec<(usize, Pauli)>)]) -> Result<Csr<f64>> {
    let obs = DenseObservable::pauli_sum(n_sites, terms)?;
    if obs.matrix.values.iter().any(|v| v.im != 0.0) {
        return Err(invalid("Hamiltonian must be real"));
    }
    let m = obs.matrix;
    Ok(Csr {
        indptr: m.indptr,
        indices: m.indices,
        values: m.values.into_iter().map(|v| v.re).collect(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenvalues (ascending) and column-major eigenvectors of a symmetric matrix
/// given column-major.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n {
        return Err(invalid("matrix is not n x n"));
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let ni = n as i32;
    let mut w = vec![0.0; n];
    let mut work = vec![0.0; 1];
    let mut iwork = vec![0i32; 1];
    let mut info = 0;
    // SAFETY: workspace query with correctly sized buffers.
    unsafe {
        lapack::dsyevd(
            b'V', b'U', ni, &mut a, ni, &mut w, &mut work, -1, &mut iwork, -1, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevd",
            info,
        });
    }
    let lwork = work[0] as usize;
    let liwork = iwork[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    let mut iwork = vec![0i32; liwork.max(1)];
    // SAFETY: buffers sized per the workspace query.
    unsafe {
        lapack::dsyevd(
            b'V',
            b'U',
            ni,
            &mut a,
            ni,
            &mut w,
            &mut work,
            lwork as i32,
            &mut iwork,
            liwork as i32,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dsyevd",
            info,
        });
    }
    Ok((w, a))
}
