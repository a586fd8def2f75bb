//! Quantum Fisher information for a phase `φ` imprinted by `e^{iφ n̂_b}`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::cat::{cat_moments, CatSpec};
use crate::error::{Error, Result};
use crate::fock::{eig_dense, support_components, FockMatrix, FockVector, NULL_EIGENVALUE};
use crate::loss::{paper_spectrum, LossyProbe};
use crate::probe::{build_probe, probe_moments};

/// Finite-difference step for the numeric oracle, in radians.
pub const FD_STEP: f64 = 1e-5;
/// Relative change under `h → h/2` above which the oracle gives up.
pub const FD_MISMATCH_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QfiMethod {
    /// `4 Var(n̂_b)` of the pure probe.
    PureVariance,
    /// The `g²(0)` form of the pure-state QFI.
    PureG2,
    /// Mixed-state formula on the closed-form four-term spectrum.
    MixedPaper,
    /// Mixed-state formula on the exact spectrum of a numerically built state.
    MixedNumeric,
}

impl QfiMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            QfiMethod::PureVariance => "pure_eq5",
            QfiMethod::PureG2 => "pure_eq10",
            QfiMethod::MixedPaper => "mixed_eq15_paper",
            QfiMethod::MixedNumeric => "mixed_numeric_oracle",
        }
    }
}

impl fmt::Display for QfiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QfiResult {
    pub f_q: f64,
    pub delta_phi: f64,
    pub method: QfiMethod,
    pub diagnostics: BTreeMap<String, f64>,
}

impl QfiResult {
    pub fn new(f_q: f64, method: QfiMethod) -> Self {
        Self {
            f_q,
            delta_phi: f_q.sqrt().recip(),
            method,
            diagnostics: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// `4(⟨n̂_b²⟩ − ⟨n̂_b⟩²)` of the probe.
pub fn qfi_pure(spec: &CatSpec) -> Result<QfiResult> {
    let m = probe_moments(spec)?;
    let var = m.mean_nb2 - m.mean_nb * m.mean_nb;
    Ok(QfiResult::new(4.0 * var.max(0.0), QfiMethod::PureVariance))
}

/// `4𝒩²⟨n̂⟩{(g² − 𝒩²)⟨n̂⟩ + 1}` with cat moments `⟨n̂⟩`, `g²`.
pub fn g2_form(norm_n_sq: f64, mean_n: f64, g2: f64) -> f64 {
    4.0 * norm_n_sq * mean_n * ((g2 - norm_n_sq) * mean_n + 1.0)
}

pub fn qfi_pure_g2(spec: &CatSpec) -> Result<QfiResult> {
    let m = cat_moments(spec)?;
    if !(m.mean_n > 0.0) {
        return Err(Error::Domain("g² form needs ⟨n̂⟩ > 0".into()));
    }
    let nn = build_probe(spec)?.norm_n().powi(2);
    Ok(QfiResult::new(
        g2_form(nn, m.mean_n, m.g2),
        QfiMethod::PureG2,
    ))
}

/// Mixed-state QFI from a spectral decomposition and the φ-derivatives of
/// the eigenvectors:
/// `4 Σ λᵢ(⟨λᵢ'|λᵢ'⟩ − |⟨λᵢ'|λᵢ⟩|²) − Σ_{i≠j} 8λᵢλⱼ/(λᵢ+λⱼ) |⟨λᵢ'|λⱼ⟩|²`.
///
/// Pairs with `λᵢ + λⱼ < 1e-12` are skipped; the returned diagnostics count them.
pub fn qfi_from_spectrum(
    lambda: &[f64],
    vectors: &[FockVector],
    derivatives: &[FockVector],
) -> Result<(f64, BTreeMap<String, f64>)> {
    let n = lambda.len();
    if vectors.len() != n || derivatives.len() != n {
        return Err(Error::Shape(
            "spectrum, vectors and derivatives differ in length".into(),
        ));
    }
    let mut f = 0.0;
    let mut skipped = 0usize;
    let mut skipped_mass = 0.0;
    for i in 0..n {
        let li = lambda[i];
        if 2.0 * li >= NULL_EIGENVALUE {
            let dd = derivatives[i].norm_sqr();
            let dv = derivatives[i].inner(&vectors[i])?.norm_sqr();
            f += 4.0 * li * (dd - dv);
        } else {
            skipped += 1;
            skipped_mass += li.abs();
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let s = li + lambda[j];
            if s < NULL_EIGENVALUE {
                skipped += 1;
                continue;
            }
            let ov = derivatives[i].inner(&vectors[j])?.norm_sqr();
            f -= 8.0 * li * lambda[j] / s * ov;
        }
    }
    let mut diag = BTreeMap::new();
    diag.insert("skipped_terms".to_string(), skipped as f64);
    diag.insert("skipped_mass".to_string(), skipped_mass);
    Ok((f, diag))
}

/// Mixed-state formula on the closed-form four-term spectrum, with
/// `|λᵢ'⟩ = i n̂_b |λᵢ⟩`.
pub fn qfi_mixed_paper(lp: &LossyProbe) -> Result<QfiResult> {
    let sp = paper_spectrum(lp)?;
    let derivatives: Vec<FockVector> = sp
        .vectors
        .iter()
        .map(|v| v.map_diag(|o| Complex64::new(0.0, o[1] as f64)))
        .collect();
    let (f, diag) = qfi_from_spectrum(&sp.lambda, &sp.vectors, &derivatives)?;
    let mut res = QfiResult::new(f.max(0.0), QfiMethod::MixedPaper)
        .with("orthogonality_residue", sp.orthogonality_residue()?)
        .with(
            "min_lambda",
            sp.lambda.iter().copied().fold(f64::INFINITY, f64::min),
        )
        .with("raw_f_q", f);
    res.diagnostics.extend(diag);
    Ok(res)
}

/// SLD form `Σ_{λᵢ+λⱼ>ε} 2|⟨λᵢ|∂ρ|λⱼ⟩|²/(λᵢ+λⱼ)` on each connected block of
/// the union support of `rho` and the derivatives, one value per derivative.
/// `rho` is diagonalised once for all of them.
fn sld_qfi(rho: &FockMatrix, drhos: &[&FockMatrix]) -> Result<(Vec<f64>, usize)> {
    let mut all: Vec<&FockMatrix> = vec![rho];
    all.extend_from_slice(drhos);
    let mut f = vec![0.0; drhos.len()];
    let mut floor_hits = 0;
    let comps = support_components(&all);
    let rho_blocks = rho.dense_blocks(&comps);
    let d_blocks: Vec<Vec<DMatrix<Complex64>>> =
        drhos.iter().map(|d| d.dense_blocks(&comps)).collect();
    for (b, r) in rho_blocks.into_iter().enumerate() {
        let (vals, vecs) = eig_dense(symmetrise(r))?;
        let n = vals.len();
        for (fi, db) in f.iter_mut().zip(&d_blocks) {
            let rotated = vecs.adjoint() * &db[b] * &vecs;
            for i in 0..n {
                for j in 0..n {
                    let s = vals[i] + vals[j];
                    if s > NULL_EIGENVALUE {
                        *fi += 2.0 * rotated[(i, j)].norm_sqr() / s;
                    } else {
                        floor_hits += 1;
                    }
                }
            }
        }
    }
    Ok((f, floor_hits / drhos.len().max(1)))
}

fn symmetrise(m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn central_difference(
    family: &(dyn Fn(f64) -> Result<FockMatrix> + Sync),
    phi0: f64,
    h: f64,
) -> Result<FockMatrix> {
    let plus = family(phi0 + h)?;
    let minus = family(phi0 - h)?;
    Ok(plus.sub(&minus)?.scale(Complex64::new(0.5 / h, 0.0)))
}

fn richardson(coarse: &FockMatrix, fine: &FockMatrix) -> Result<FockMatrix> {
    Ok(fine
        .clone()
        .scale(Complex64::new(4.0 / 3.0, 0.0))
        .add_scaled(coarse, Complex64::new(-1.0 / 3.0, 0.0))?)
}

/// Exact mixed-state QFI of a state family `ρ(φ)` at `φ₀`.
///
/// `∂ρ/∂φ` is a central difference with step [`FD_STEP`] refined by one
/// Richardson step (`h/2`). The estimate is repeated with the steps halved;
/// a relative change above [`FD_MISMATCH_LIMIT`] is a numerical failure.
pub fn qfi_mixed_numeric(
    family: &(dyn Fn(f64) -> Result<FockMatrix> + Sync),
    phi0: f64,
) -> Result<QfiResult> {
    let rho = family(phi0)?;
    let h = FD_STEP;
    let d1 = central_difference(family, phi0, h)?;
    let d2 = central_difference(family, phi0, h / 2.0)?;
    let d4 = central_difference(family, phi0, h / 4.0)?;
    let (fs, hits) = sld_qfi(&rho, &[&richardson(&d1, &d2)?, &richardson(&d2, &d4)?])?;
    let (f1, f2) = (fs[0], fs[1]);
    let mismatch = if f1 > 0.0 {
        (f1 - f2).abs() / f1
    } else {
        (f1 - f2).abs()
    };
    if !(mismatch <= FD_MISMATCH_LIMIT) {
        return Err(Error::Numerical(format!(
            "finite-difference QFI unstable: {f1} vs {f2} (relative change {mismatch:e})"
        )));
    }
    Ok(QfiResult::new(f1, QfiMethod::MixedNumeric)
        .with("fd_relative_change", mismatch)
        .with("eigenvalue_floor_hits", hits as f64))
}

/// Numeric QFI of `ρ` under `e^{iφ n̂_b}` (mode 1).
pub fn qfi_numeric_phase_on_b(rho: &FockMatrix) -> Result<QfiResult> {
    let family = |phi: f64| rho.apply_phase_shift(phi, 1);
    qfi_mixed_numeric(&family, 0.0)
}

/// Numeric QFI of `ρ` under `e^{-iφ(n̂_a − n̂_b)/2}`.
pub fn qfi_numeric_symmetric(rho: &FockMatrix) -> Result<QfiResult> {
    let family = |phi: f64| {
        rho.apply_phase_shift(-phi / 2.0, 0)?
            .apply_phase_shift(phi / 2.0, 1)
    };
    qfi_mixed_numeric(&family, 0.0)
}
