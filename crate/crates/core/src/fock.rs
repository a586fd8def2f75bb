//! Truncated Fock-space states, density operators and channels.
//!
//! Everything here is the numerical reference the closed-form modules are
//! checked against. One-mode spaces hold photon numbers `0..=n_max`; two-mode
//! spaces hold pairs `(n_a, n_b)` with the flat index `n_a * (n_max + 1) + n_b`
//! (row-major in mode a). Mode 0 is `a`, mode 1 is `b`.
//!
//! Density operators are stored sparsely. The states this crate deals with
//! occupy a tiny corner of the two-mode space (lossy path-symmetric probes live
//! on `|n,0⟩`/`|0,m⟩`, lossy TMSV is block-diagonal in `n_a - n_b`), and
//! [`hermitian_eig`] diagonalises each connected component of the support on
//! its own.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::binomial;

/// Largest photon number representable in one mode.
pub const MODE_CAP: usize = 200;
/// Poisson weight allowed beyond the truncation bound of a coherent state.
pub const TAIL_BOUND: f64 = 1e-14;
/// Eigenvalues below this are reported as numerically null.
pub const NULL_EIGENVALUE: f64 = 1e-12;
/// Largest `|M - M†|` entry accepted by [`hermitian_eig`].
pub const HERMITIAN_TOL: f64 = 1e-12;
const KRAUS_FLOOR: f64 = 1e-18;

/// Truncation bound for a state with mean photon number `mean_photons`:
/// `ceil(x + 10·sqrt(x + 1) + 20)`, not yet checked against [`MODE_CAP`].
pub fn truncation_rule(mean_photons: f64) -> usize {
    (mean_photons + 10.0 * (mean_photons + 1.0).sqrt() + 20.0).ceil() as usize
}

/// [`truncation_rule`] with the per-mode cap enforced.
pub fn n_max_for(mean_photons: f64) -> Result<usize> {
    let n = truncation_rule(mean_photons);
    if n > MODE_CAP {
        return Err(Error::Truncation(format!(
            "mean photon number {mean_photons} needs n_max = {n}, above the cap of {MODE_CAP}"
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    modes: usize,
    n_max: usize,
}

impl FockSpace {
    pub fn single(n_max: usize) -> Result<Self> {
        Self::new(1, n_max)
    }

    pub fn two_mode(n_max: usize) -> Result<Self> {
        Self::new(2, n_max)
    }

    fn new(modes: usize, n_max: usize) -> Result<Self> {
        if n_max > MODE_CAP {
            return Err(Error::Truncation(format!(
                "n_max = {n_max} exceeds the cap of {MODE_CAP}"
            )));
        }
        Ok(Self { modes, n_max })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Number of levels per mode.
    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.levels().pow(self.modes as u32)
    }

    /// Flat index of an occupation pair; the second entry is ignored for one mode.
    pub fn index(&self, occ: [usize; 2]) -> usize {
        match self.modes {
            1 => occ[0],
            _ => occ[0] * self.levels() + occ[1],
        }
    }

    /// Occupation pair of a flat index; `[n, 0]` for one mode.
    pub fn occupation(&self, idx: usize) -> [usize; 2] {
        match self.modes {
            1 => [idx, 0],
            _ => [idx / self.levels(), idx % self.levels()],
        }
    }

    fn contains(&self, occ: [usize; 2]) -> bool {
        occ[0] <= self.n_max && (occ[1] == 0 || (self.modes == 2 && occ[1] <= self.n_max))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes {
            return Err(Error::Shape(format!(
                "mode {mode} does not exist in a {}-mode space",
                self.modes
            )));
        }
        Ok(())
    }

    /// Flat-index step for one extra photon in `mode`.
    fn stride(&self, mode: usize) -> usize {
        if self.modes == 2 && mode == 0 {
            self.levels()
        } else {
            1
        }
    }

    fn check_same(&self, other: &FockSpace) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "space mismatch: {} modes / n_max {} vs {} modes / n_max {}",
                self.modes, self.n_max, other.modes, other.n_max
            )));
        }
        Ok(())
    }
}

/// Complex amplitudes over a truncated one- or two-mode Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    space: FockSpace,
    amps: Vec<Complex64>,
}

impl FockVector {
    pub fn zeros(space: FockSpace) -> Self {
        Self {
            space,
            amps: vec![Complex64::new(0.0, 0.0); space.dim()],
        }
    }

    pub fn basis(space: FockSpace, occ: [usize; 2]) -> Result<Self> {
        if !space.contains(occ) {
            return Err(Error::Shape(format!(
                "occupation {occ:?} outside the space"
            )));
        }
        let mut v = Self::zeros(space);
        v.amps[space.index(occ)] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn vacuum(space: FockSpace) -> Self {
        let mut v = Self::zeros(space);
        v.amps[0] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn from_amps(space: FockSpace, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::Shape(format!(
                "{} amplitudes for a space of dimension {}",
                amps.len(),
                space.dim()
            )));
        }
        Ok(Self { space, amps })
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amp(&self, occ: [usize; 2]) -> Complex64 {
        if self.space.contains(occ) {
            self.amps[self.space.index(occ)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(mut self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero vector".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= norm);
        Ok(self)
    }

    pub fn scale(mut self, c: Complex64) -> Self {
        self.amps.iter_mut().for_each(|a| *a *= c);
        self
    }

    pub fn add(&self, other: &FockVector) -> Result<FockVector> {
        self.space.check_same(&other.space)?;
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            space: self.space,
            amps,
        })
    }

    pub fn sub(&self, other: &FockVector) -> Result<FockVector> {
        self.add(&other.clone().scale(Complex64::new(-1.0, 0.0)))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &FockVector) -> Result<Complex64> {
        self.space.check_same(&other.space)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|a⟩ ⊗ |b⟩` of two one-mode vectors with equal truncation.
    pub fn tensor(a: &FockVector, b: &FockVector) -> Result<FockVector> {
        if a.space.modes != 1 || b.space.modes != 1 || a.space.n_max != b.space.n_max {
            return Err(Error::Shape(
                "tensor product needs two one-mode vectors with equal n_max".into(),
            ));
        }
        let space = FockSpace::two_mode(a.space.n_max)?;
        let mut amps = Vec::with_capacity(space.dim());
        for x in &a.amps {
            for y in &b.amps {
                amps.push(x * y);
            }
        }
        Ok(Self { space, amps })
    }

    /// Re-express in a space with a different truncation (same number of modes).
    /// Amplitudes beyond the new bound are dropped.
    pub fn with_n_max(&self, n_max: usize) -> Result<FockVector> {
        let space = FockSpace::new(self.space.modes, n_max)?;
        let mut out = Self::zeros(space);
        for (idx, a) in self.amps.iter().enumerate() {
            let occ = self.space.occupation(idx);
            if space.contains(occ) {
                out.amps[space.index(occ)] = *a;
            }
        }
        Ok(out)
    }

    /// Multiply each amplitude by `f(occupation)`.
    pub fn map_diag(&self, f: impl Fn([usize; 2]) -> Complex64) -> FockVector {
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| a * f(self.space.occupation(i)))
            .collect();
        Self {
            space: self.space,
            amps,
        }
    }

    /// `⟨f(n_a, n_b)⟩` for an operator diagonal in the number basis.
    pub fn expectation_diag(&self, f: impl Fn([usize; 2]) -> f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            num += p * f(self.space.occupation(i));
            den += p;
        }
        num / den
    }

    /// `e^{iφ n̂}` on one mode: the amplitude at photon number `n` gains `e^{inφ}`.
    pub fn apply_phase_shift(&self, phi: f64, mode: usize) -> Result<FockVector> {
        self.space.check_mode(mode)?;
        Ok(self.map_diag(|occ| Complex64::from_polar(1.0, phi * occ[mode] as f64)))
    }

    /// Exchange the two modes.
    pub fn swap_modes(&self) -> Result<FockVector> {
        if self.space.modes != 2 {
            return Err(Error::Shape("mode swap needs a two-mode vector".into()));
        }
        let mut out = Self::zeros(self.space);
        for (idx, a) in self.amps.iter().enumerate() {
            let [na, nb] = self.space.occupation(idx);
            out.amps[self.space.index([nb, na])] = *a;
        }
        Ok(out)
    }

    /// Cross-phase modulation `e^{2πi n̂_1 n̂_2 / d}`.
    pub fn cross_kerr(&self, d: usize) -> Result<FockVector> {
        if self.space.modes != 2 {
            return Err(Error::Shape("cross-Kerr needs a two-mode vector".into()));
        }
        if d < 2 {
            return Err(Error::Parameter(format!(
                "cross-Kerr period d = {d} must be ≥ 2"
            )));
        }
        Ok(self.map_diag(|[n1, n2]| {
            // reduce mod d before converting to keep the phase argument small
            let r = (n1 * n2) % d;
            Complex64::from_polar(1.0, 2.0 * PI * r as f64 / d as f64)
        }))
    }

    /// 50:50 beamsplitter mapping coherent inputs `(α₁, α₂)` to
    /// `((α₁+α₂)/√2, (α₁−α₂)/√2)`.
    ///
    /// Realised per total photon number `N` as `e^{θ(a†b − ab†)}` with θ = π/4
    /// followed by a π phase on mode b. The rotation is built from the spectrum
    /// of `a†b + ab†` on the `N`-photon block, which stays accurate at large `N`
    /// where the binomial expansion cancels catastrophically. Output components
    /// with a mode above `n_max` are dropped.
    pub fn beamsplitter_50_50(&self) -> Result<FockVector> {
        if self.space.modes != 2 {
            return Err(Error::Shape("beamsplitter needs a two-mode vector".into()));
        }
        let n_max = self.space.n_max;
        let mut out = Self::zeros(self.space);
        for total in 0..=2 * n_max {
            let lo = total.saturating_sub(n_max);
            let hi = total.min(n_max);
            let input: Vec<(usize, Complex64)> = (lo..=hi)
                .map(|n1| (n1, self.amps[self.space.index([n1, total - n1])]))
                .filter(|(_, a)| *a != Complex64::new(0.0, 0.0))
                .collect();
            if input.is_empty() {
                continue;
            }
            let block = beamsplitter_block(total)?;
            for m1 in lo..=hi {
                let acc: Complex64 = input.iter().map(|(n1, a)| block[(m1, *n1)] * a).sum();
                out.amps[self.space.index([m1, total - m1])] = acc;
            }
        }
        Ok(out)
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> FockMatrix {
        let nz: Vec<(usize, Complex64)> = self
            .amps
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != Complex64::new(0.0, 0.0))
            .map(|(i, a)| (i, *a))
            .collect();
        let mut entries = Vec::with_capacity(nz.len() * nz.len());
        for &(i, a) in &nz {
            for &(j, b) in &nz {
                entries.push((i, j, a * b.conj()));
            }
        }
        FockMatrix::from_sorted(self.space, entries)
    }
}

fn beamsplitter_block(total: usize) -> Result<DMatrix<Complex64>> {
    let size = total + 1;
    let mut h = DMatrix::<f64>::zeros(size, size);
    for n1 in 0..total {
        let v = (((n1 + 1) * (total - n1)) as f64).sqrt();
        h[(n1 + 1, n1)] = v;
        h[(n1, n1 + 1)] = v;
    }
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!("beamsplitter block N={total} did not converge"))
    })?;
    let theta = PI / 4.0;
    let phases: Vec<Complex64> = eig
        .eigenvalues
        .iter()
        .map(|w| Complex64::from_polar(1.0, -theta * w))
        .collect();
    // p_n = i^{n_b}, n_b = total - n1
    let p = |n1: usize| Complex64::i().powu((total - n1) as u32);
    let v = &eig.eigenvectors;
    let mut u = DMatrix::<Complex64>::zeros(size, size);
    for m in 0..size {
        let sign = if (total - m) % 2 == 0 { 1.0 } else { -1.0 };
        for n in 0..size {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..size {
                acc += phases[j] * (v[(m, j)] * v[(n, j)]);
            }
            u[(m, n)] = p(m).conj() * acc * p(n) * sign;
        }
    }
    Ok(u)
}

/// Coherent state `|α⟩` truncated at `n_max`.
///
/// Fails when more than [`TAIL_BOUND`] of the Poisson weight lies beyond
/// `n_max`, or when `|α|²` needs a bound above [`MODE_CAP`].
pub fn coherent_vector(alpha: Complex64, n_max: usize) -> Result<FockVector> {
    let space = FockSpace::single(n_max)?;
    let x = alpha.norm_sqr();
    n_max_for(x)?;
    let mut amps = Vec::with_capacity(n_max + 1);
    let mut c = Complex64::new((-x / 2.0).exp(), 0.0);
    amps.push(c);
    for n in 1..=n_max {
        c *= alpha / (n as f64).sqrt();
        amps.push(c);
    }
    let tail = poisson_tail(x, n_max);
    if tail >= TAIL_BOUND {
        return Err(Error::Truncation(format!(
            "coherent state |α|² = {x} leaves weight {tail:e} beyond n_max = {n_max}"
        )));
    }
    Ok(FockVector { space, amps })
}

/// Poisson weight `Σ_{n > n_max} e^{-x} xⁿ/n!`.
pub(crate) fn poisson_tail(x: f64, n_max: usize) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = (-x).exp();
    for n in 1..=n_max {
        term *= x / n as f64;
    }
    let mut tail = 0.0;
    let mut n = n_max + 1;
    loop {
        term *= x / n as f64;
        tail += term;
        if (n as f64 > x && term < 1e-30 * tail.max(1e-300)) || term == 0.0 {
            break;
        }
        n += 1;
    }
    tail
}

/// Density operator stored as sorted `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct FockMatrix {
    space: FockSpace,
    entries: Vec<(usize, usize, Complex64)>,
}

impl FockMatrix {
    pub fn zeros(space: FockSpace) -> Self {
        Self {
            space,
            entries: Vec::new(),
        }
    }

    /// Build from unordered triplets; repeated positions are summed in input order.
    pub fn from_triplets(
        space: FockSpace,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Result<Self> {
        let dim = space.dim();
        let mut acc: HashMap<(usize, usize), Complex64> = HashMap::new();
        for (i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(Error::Shape(format!(
                    "entry ({i}, {j}) outside dimension {dim}"
                )));
            }
            *acc.entry((i, j)).or_default() += v;
        }
        Ok(Self::from_map(space, acc))
    }

    fn from_map(space: FockSpace, acc: HashMap<(usize, usize), Complex64>) -> Self {
        let mut entries: Vec<_> = acc
            .into_iter()
            .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
            .map(|((i, j), v)| (i, j, v))
            .collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Self { space, entries }
    }

    /// Caller guarantees `entries` sorted with unique positions.
    fn from_sorted(space: FockSpace, entries: Vec<(usize, usize, Complex64)>) -> Self {
        debug_assert!(entries
            .windows(2)
            .all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
        Self { space, entries }
    }

    /// Checked version of `from_sorted` for callers that assemble entries in
    /// row-major order themselves.
    pub(crate) fn from_sorted_entries(
        space: FockSpace,
        entries: Vec<(usize, usize, Complex64)>,
    ) -> Result<Self> {
        let dim = space.dim();
        if entries.iter().any(|&(i, j, _)| i >= dim || j >= dim)
            || !entries
                .windows(2)
                .all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1))
        {
            return Err(Error::Shape(
                "entries out of range or not strictly row-major".into(),
            ));
        }
        Ok(Self::from_sorted(space, entries))
    }

    pub fn from_dense(space: FockSpace, m: &DMatrix<Complex64>) -> Result<Self> {
        let dim = space.dim();
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::Shape(format!(
                "{}×{} matrix for a space of dimension {dim}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut entries = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v != Complex64::new(0.0, 0.0) {
                    entries.push((i, j, v));
                }
            }
        }
        Ok(Self::from_sorted(space, entries))
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        match self
            .entries
            .binary_search_by_key(&(i, j), |&(a, b, _)| (a, b))
        {
            Ok(pos) => self.entries[pos].2,
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = self.space.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    pub fn trace(&self) -> Complex64 {
        self.entries
            .iter()
            .filter(|(i, j, _)| i == j)
            .map(|(_, _, v)| v)
            .sum()
    }

    pub fn scale(mut self, c: Complex64) -> Self {
        self.entries.iter_mut().for_each(|e| e.2 *= c);
        self.entries.retain(|e| e.2 != Complex64::new(0.0, 0.0));
        self
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, other: &FockMatrix, c: Complex64) -> Result<FockMatrix> {
        self.space.check_same(&other.space)?;
        let mut out = Vec::with_capacity(self.entries.len().max(other.entries.len()));
        let (mut p, mut q) = (0, 0);
        while p < self.entries.len() || q < other.entries.len() {
            let a = self.entries.get(p);
            let b = other.entries.get(q);
            match (a, b) {
                (Some(&(i, j, v)), Some(&(k, l, w))) if (i, j) == (k, l) => {
                    out.push((i, j, v + c * w));
                    p += 1;
                    q += 1;
                }
                (Some(&(i, j, v)), Some(&(k, l, _))) if (i, j) < (k, l) => {
                    out.push((i, j, v));
                    p += 1;
                }
                (Some(_), Some(&(k, l, w))) => {
                    out.push((k, l, c * w));
                    q += 1;
                }
                (Some(&(i, j, v)), None) => {
                    out.push((i, j, v));
                    p += 1;
                }
                (None, Some(&(k, l, w))) => {
                    out.push((k, l, c * w));
                    q += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        out.retain(|e| e.2 != Complex64::new(0.0, 0.0));
        Ok(Self::from_sorted(self.space, out))
    }

    pub fn sub(&self, other: &FockMatrix) -> Result<FockMatrix> {
        self.add_scaled(other, Complex64::new(-1.0, 0.0))
    }

    pub fn adjoint(&self) -> FockMatrix {
        let mut entries: Vec<_> = self
            .entries
            .iter()
            .map(|&(i, j, v)| (j, i, v.conj()))
            .collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Self::from_sorted(self.space, entries)
    }

    /// `max |M - M†|` over all entries.
    pub fn hermitian_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    /// Sorted flat indices that appear in any stored entry.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.entries.iter().flat_map(|&(i, j, _)| [i, j]).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Dense sub-matrix on the given flat indices.
    pub fn dense_block(&self, indices: &[usize]) -> DMatrix<Complex64> {
        let pos: HashMap<usize, usize> = indices.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let mut m = DMatrix::zeros(indices.len(), indices.len());
        for &(i, j, v) in &self.entries {
            if let (Some(&p), Some(&q)) = (pos.get(&i), pos.get(&j)) {
                m[(p, q)] = v;
            }
        }
        m
    }

    /// [`Self::dense_block`] for disjoint index sets, in one pass over the entries.
    pub fn dense_blocks(&self, blocks: &[Vec<usize>]) -> Vec<DMatrix<Complex64>> {
        let mut slot = vec![(usize::MAX, 0usize); self.space.dim()];
        for (b, indices) in blocks.iter().enumerate() {
            for (p, &i) in indices.iter().enumerate() {
                slot[i] = (b, p);
            }
        }
        let mut out: Vec<DMatrix<Complex64>> = blocks
            .iter()
            .map(|ix| DMatrix::zeros(ix.len(), ix.len()))
            .collect();
        for &(i, j, v) in &self.entries {
            let ((bi, p), (bj, q)) = (slot[i], slot[j]);
            if bi != usize::MAX && bi == bj {
                out[bi][(p, q)] = v;
            }
        }
        out
    }

    /// `⟨f(n_a, n_b)⟩ = Tr[ρ f]` for an operator diagonal in the number basis.
    pub fn expectation_diag(&self, f: impl Fn([usize; 2]) -> f64) -> f64 {
        self.entries
            .iter()
            .filter(|(i, j, _)| i == j)
            .map(|&(i, _, v)| v.re * f(self.space.occupation(i)))
            .sum()
    }

    /// `⟨v|ρ|v⟩`.
    pub fn expectation_vec(&self, v: &FockVector) -> Result<f64> {
        self.space.check_same(&v.space)?;
        let a = v.amps();
        let s: Complex64 = self
            .entries
            .iter()
            .map(|&(i, j, x)| a[i].conj() * x * a[j])
            .sum();
        Ok(s.re)
    }

    /// `U ρ U†` with `U = e^{iφ n̂}` on one mode.
    pub fn apply_phase_shift(&self, phi: f64, mode: usize) -> Result<FockMatrix> {
        self.space.check_mode(mode)?;
        let entries = self
            .entries
            .iter()
            .map(|&(i, j, v)| {
                let dn =
                    self.space.occupation(i)[mode] as f64 - self.space.occupation(j)[mode] as f64;
                (i, j, v * Complex64::from_polar(1.0, phi * dn))
            })
            .collect();
        Ok(Self::from_sorted(self.space, entries))
    }

    /// Pure-loss channel with transmission `eta` on one mode.
    ///
    /// Kraus operators `K_m = Σ_n √C(n,m) η^{(n−m)/2} (1−η)^{m/2} |n−m⟩⟨n|`,
    /// `m = 0..=n_max`; contributions with weight below 1e-18 are dropped.
    pub fn loss_channel(&self, eta: f64, mode: usize) -> Result<FockMatrix> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Parameter(format!(
                "transmission η = {eta} must lie in (0, 1]"
            )));
        }
        self.space.check_mode(mode)?;
        if eta == 1.0 {
            return Ok(self.clone());
        }
        let stride = self.space.stride(mode);
        let sqrt_eta = eta.sqrt();
        let lost = 1.0 - eta;
        let mut acc: HashMap<(usize, usize), Complex64> =
            HashMap::with_capacity(self.entries.len() * 4);
        for &(i, j, v) in &self.entries {
            let ni = self.space.occupation(i)[mode];
            let nj = self.space.occupation(j)[mode];
            for l in 0..=ni.min(nj) {
                let w = (binomial(ni, l) * binomial(nj, l)).sqrt()
                    * sqrt_eta.powi((ni + nj - 2 * l) as i32)
                    * lost.powi(l as i32);
                if w < KRAUS_FLOOR {
                    continue;
                }
                *acc.entry((i - l * stride, j - l * stride)).or_default() += v * w;
            }
        }
        Ok(Self::from_map(self.space, acc))
    }

    /// Reduced state of one mode of a two-mode operator.
    pub fn partial_trace(&self, keep: usize) -> Result<FockMatrix> {
        if self.space.modes != 2 {
            return Err(Error::Shape(
                "partial trace needs a two-mode operator".into(),
            ));
        }
        self.space.check_mode(keep)?;
        let other = 1 - keep;
        let space = FockSpace::single(self.space.n_max)?;
        let triplets = self.entries.iter().filter_map(|&(i, j, v)| {
            let oi = self.space.occupation(i);
            let oj = self.space.occupation(j);
            (oi[other] == oj[other]).then_some((oi[keep], oj[keep], v))
        });
        Self::from_triplets(space, triplets)
    }
}

/// Connected components of the union of the supports of `ms`. Two indices
/// share a component when some matrix has a non-zero entry linking them.
pub fn support_components(ms: &[&FockMatrix]) -> Vec<Vec<usize>> {
    let mut support: Vec<usize> = ms.iter().flat_map(|m| m.support()).collect();
    support.sort_unstable();
    support.dedup();
    let pos: HashMap<usize, usize> = support.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let mut parent: Vec<usize> = (0..support.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for m in ms {
        for &(i, j, _) in m.entries() {
            let (a, b) = (find(&mut parent, pos[&i]), find(&mut parent, pos[&j]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (p, &idx) in support.iter().enumerate() {
        let root = find(&mut parent, p);
        groups.entry(root).or_default().push(idx);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_unstable_by_key(|g| g[0]);
    out
}

/// Eigendecomposition of one dense Hermitian block.
pub(crate) fn eig_dense(m: DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    let mut defect = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    if defect > HERMITIAN_TOL {
        return Err(Error::Shape(format!(
            "matrix is not Hermitian (defect {defect:e})"
        )));
    }
    if n == 1 {
        return Ok((
            vec![m[(0, 0)].re],
            DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        ));
    }
    let fail = || Error::Numerical("Hermitian eigensolver did not converge".into());
    if m.iter().all(|z| z.im == 0.0) {
        // Real symmetric input: the real solver is several times faster.
        let eig =
            SymmetricEigen::try_new(m.map(|z| z.re), f64::EPSILON, 100_000).ok_or_else(fail)?;
        return Ok((
            eig.eigenvalues.iter().copied().collect(),
            eig.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        ));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 100_000).ok_or_else(fail)?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// Spectral data of one connected block of a [`FockMatrix`].
#[derive(Debug, Clone)]
pub struct EigenBlock {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Column `c` is the eigenvector of `values[c]` in the basis `indices`.
    pub vectors: DMatrix<Complex64>,
}

/// Eigendecomposition restricted to the support of the decomposed operator.
/// Directions outside the support carry eigenvalue zero and are not listed.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    space: FockSpace,
    blocks: Vec<EigenBlock>,
    /// `(block, column)` pairs in descending eigenvalue order.
    order: Vec<(usize, usize)>,
}

impl EigenSystem {
    pub fn blocks(&self) -> &[EigenBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        let (b, c) = self.order[i];
        self.blocks[b].values[c]
    }

    /// Eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Number of eigenvalues flagged as numerically null (`|λ| < 1e-12`).
    pub fn null_count(&self) -> usize {
        self.eigenvalues()
            .iter()
            .filter(|l| l.abs() < NULL_EIGENVALUE)
            .count()
    }

    pub fn eigenvector(&self, i: usize) -> FockVector {
        let (b, c) = self.order[i];
        let block = &self.blocks[b];
        let mut v = FockVector::zeros(self.space);
        for (p, &idx) in block.indices.iter().enumerate() {
            v.amps[idx] = block.vectors[(p, c)];
        }
        v
    }

    /// `Σ λᵢ |λᵢ⟩⟨λᵢ|`.
    pub fn reconstruct(&self) -> FockMatrix {
        let mut triplets = Vec::new();
        for block in &self.blocks {
            let n = block.indices.len();
            for p in 0..n {
                for q in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for c in 0..n {
                        acc +=
                            block.vectors[(p, c)] * block.values[c] * block.vectors[(q, c)].conj();
                    }
                    triplets.push((block.indices[p], block.indices[q], acc));
                }
            }
        }
        FockMatrix::from_triplets(self.space, triplets).expect("indices come from the same space")
    }
}

/// Hermitian eigendecomposition, one dense solve per connected support block.
pub fn hermitian_eig(m: &FockMatrix) -> Result<EigenSystem> {
    let comps = support_components(&[m]);
    let dense = m.dense_blocks(&comps);
    let mut blocks = Vec::new();
    for (indices, block) in comps.into_iter().zip(dense) {
        let (values, vectors) = eig_dense(block)?;
        blocks.push(EigenBlock {
            indices,
            values,
            vectors,
        });
    }
    let mut order: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, blk)| (0..blk.values.len()).map(move |c| (b, c)))
        .collect();
    order.sort_by(|&(b1, c1), &(b2, c2)| {
        blocks[b2].values[c2]
            .total_cmp(&blocks[b1].values[c1])
            .then((b1, c1).cmp(&(b2, c2)))
    });
    Ok(EigenSystem {
        space: m.space,
        blocks,
        order,
    })
}

/// `|⟨a|b⟩|² / (‖a‖² ‖b‖²)`.
pub fn fidelity(a: &FockVector, b: &FockVector) -> Result<f64> {
    let ov = a.inner(b)?;
    Ok(ov.norm_sqr() / (a.norm_sqr() * b.norm_sqr()))
}

/// `⟨v|ρ|v⟩ / ‖v‖²`.
pub fn fidelity_mixed_pure(rho: &FockMatrix, v: &FockVector) -> Result<f64> {
    Ok(rho.expectation_vec(v)? / v.norm_sqr())
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity_mixed(rho: &FockMatrix, sigma: &FockMatrix) -> Result<f64> {
    rho.space.check_same(&sigma.space)?;
    let mut total = 0.0;
    let comps = support_components(&[rho, sigma]);
    for (r, s) in rho
        .dense_blocks(&comps)
        .into_iter()
        .zip(sigma.dense_blocks(&comps))
    {
        let (vals, vecs) = eig_dense(r)?;
        let sqrt_d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            vals.len(),
            vals.iter()
                .map(|&v| Complex64::new(clip_null(v).sqrt(), 0.0)),
        ));
        let sqrt_r = &vecs * sqrt_d * vecs.adjoint();
        let mut inner = &sqrt_r * s * &sqrt_r;
        // symmetrise away rounding before the Hermitian solve
        inner = (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
        let (w, _) = eig_dense(inner)?;
        total += w.iter().map(|&x| clip_null(x).sqrt()).sum::<f64>();
    }
    Ok((total * total).min(1.0))
}

fn clip_null(x: f64) -> f64 {
    if x < NULL_EIGENVALUE {
        0.0
    } else {
        x
    }
}

/// `½ Tr |ρ − σ|`.
pub fn trace_distance(rho: &FockMatrix, sigma: &FockMatrix) -> Result<f64> {
    let diff = rho.sub(sigma)?;
    let mut total = 0.0;
    let comps = support_components(&[&diff]);
    for block in diff.dense_blocks(&comps) {
        let block = (&block + block.adjoint()) * Complex64::new(0.5, 0.0);
        let (w, _) = eig_dense(block)?;
        total += w.iter().map(|x| x.abs()).sum::<f64>();
    }
    Ok(0.5 * total)
}
