//! Photon loss on cats and on the two-mode probe.
//!
//! Loss with transmission `η` maps `|β⟩⟨γ|` to `⟨γ√(1-η)|β√(1-η)⟩ |β√η⟩⟨γ√η|`,
//! so a superposition of coherent states stays a superposition of (shrunken)
//! coherent states with damped coherences. The closed forms here are built
//! from that rule; [`LossyProbe::oracle_form`] is the Kraus-channel reference.

use num_complex::Complex64;

use crate::cat::{cat_to_fock, norm_m, vacuum_overlap_sq, CatSpec};
use crate::error::{Error, Result};
use crate::fock::{coherent_vector, n_max_for, FockMatrix, FockSpace, FockVector};
use crate::probe::build_probe;

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Parameter(format!(
            "transmission η = {eta} must lie in (0, 1]"
        )));
    }
    Ok(())
}

/// `|α|²(1-η)`, the mean number of photons lost from one cat.
pub fn lost_photons(spec: &CatSpec, eta: f64) -> f64 {
    spec.alpha_sq() * (1.0 - eta)
}

/// Dense `Σ_{q,q'} coef[q][q'] |u_q⟩⟨v_{q'}|` over one mode.
fn coherent_sum(
    us: &[FockVector],
    vs: &[FockVector],
    coef: &[Vec<Complex64>],
) -> Vec<Vec<Complex64>> {
    let dim = us[0].amps().len();
    let d = us.len();
    // t[m][q'] = Σ_q coef[q][q'] u_q[m]
    let mut t = vec![vec![Complex64::new(0.0, 0.0); d]; dim];
    for (q, u) in us.iter().enumerate() {
        for (m, um) in u.amps().iter().enumerate() {
            if *um == Complex64::new(0.0, 0.0) {
                continue;
            }
            for qp in 0..d {
                t[m][qp] += coef[q][qp] * um;
            }
        }
    }
    let mut out = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for m in 0..dim {
        for (qp, v) in vs.iter().enumerate() {
            let c = t[m][qp];
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (n, vn) in v.amps().iter().enumerate() {
                out[m][n] += c * vn.conj();
            }
        }
    }
    out
}

/// Coherent vectors `|β ω^q e^{iφ}⟩` for `q = 0..d`.
fn ring(spec: &CatSpec, scale: f64, phi: f64, n_max: usize) -> Result<Vec<FockVector>> {
    let w = spec.omega();
    let rot = Complex64::from_polar(scale, phi);
    (0..spec.d())
        .map(|q| coherent_vector(spec.alpha() * w.powu(q as u32) * rot, n_max))
        .collect()
}

/// `ω^{k(q'-q)}` with an optional extra factor depending on `ω^{q-q'}`.
fn sector_coefficients(
    spec: &CatSpec,
    k: usize,
    f: impl Fn(Complex64) -> Complex64,
) -> Vec<Vec<Complex64>> {
    let d = spec.d();
    let w = spec.omega();
    (0..d)
        .map(|q| {
            (0..d)
                .map(|qp| {
                    w.powu(((k * (d + qp - q)) % d) as u32) * f(w.powu(((d + q - qp) % d) as u32))
                })
                .collect()
        })
        .collect()
}

fn single_mode_matrix(space: FockSpace, m: &[Vec<Complex64>]) -> Result<FockMatrix> {
    let triplets = m
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, v)| (i, j, *v)));
    FockMatrix::from_triplets(space, triplets)
}

/// Lossy cat from the coherent double sum
/// `(1/M) Σ_{q,q'} ω^{k(q'-q)} e^{(ω^{q-q'}-1)|α|²(1-η)} |α√η ω^q⟩⟨α√η ω^{q'}|`.
pub fn lossy_cat_exact(spec: &CatSpec, eta: f64) -> Result<FockMatrix> {
    check_eta(eta)?;
    let n_max = n_max_for(spec.alpha_sq())?;
    let space = FockSpace::single(n_max)?;
    let eps = lost_photons(spec, eta);
    let vs = ring(spec, eta.sqrt(), 0.0, n_max)?;
    let coef = sector_coefficients(spec, spec.k(), |w| ((w - 1.0) * eps).exp() / norm_m(spec));
    single_mode_matrix(space, &coherent_sum(&vs, &vs, &coef))
}

/// Normalised weights of `|C_{d,k}(α√η)⟩` and `|C_{d,k-1}(α√η)⟩` in the
/// weak-loss mixture: `(1-ε) M_k(α√η)` and `ε M_{k-1}(α√η)`, `ε = |α|²(1-η)`.
pub fn weak_loss_weights(spec: &CatSpec, eta: f64) -> Result<(f64, f64)> {
    check_eta(eta)?;
    let eps = lost_photons(spec, eta);
    if 1.0 - eps <= 0.0 {
        return Err(Error::Domain(format!(
            "weak-loss form needs |α|²(1-η) < 1, got {eps}"
        )));
    }
    let shrunk = spec.scaled(eta.sqrt())?;
    let a = (1.0 - eps) * norm_m(&shrunk);
    let b = if eps > 0.0 {
        eps * norm_m(&shrunk.with_k(spec.k() + spec.d() - 1)?)
    } else {
        0.0
    };
    Ok((a / (a + b), b / (a + b)))
}

/// Two-term weak-loss mixture of `|C_{d,k}(α√η)⟩` and `|C_{d,k-1}(α√η)⟩`
/// (`k-1` wraps mod d).
pub fn lossy_cat_weak(spec: &CatSpec, eta: f64) -> Result<FockMatrix> {
    let (wa, wb) = weak_loss_weights(spec, eta)?;
    let n_max = n_max_for(spec.alpha_sq())?;
    let shrunk = spec.scaled(eta.sqrt())?;
    let mut rho = cat_to_fock(&shrunk, n_max)?
        .projector()
        .scale(Complex64::new(wa, 0.0));
    if wb > 0.0 {
        let lower = shrunk.with_k(spec.k() + spec.d() - 1)?;
        let extra = cat_to_fock(&lower, n_max)?.projector();
        rho = rho.add_scaled(&extra, Complex64::new(wb, 0.0))?;
    }
    Ok(rho)
}

/// `|C_{d,k,φ}(α)⟩ = M^{-1/2} Σ_q ω^{-kq} |αω^q e^{iφ}⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedCat {
    pub spec: CatSpec,
    pub phi: f64,
}

impl ShiftedCat {
    pub fn new(spec: CatSpec, phi: f64) -> Self {
        Self { spec, phi }
    }

    pub fn to_fock(&self, n_max: usize) -> Result<FockVector> {
        cat_to_fock(&self.spec, n_max)?.apply_phase_shift(self.phi, 0)
    }
}

/// Lift single-mode blocks onto the L-shaped support `|n,0⟩`, `|0,m⟩` of a
/// two-mode space: `a ⊗ |0⟩⟨0| + |0⟩⟨0| ⊗ b + x + x†`, with `x` read as
/// `Σ x[m][n] |m,0⟩⟨0,n|`.
fn l_shape(
    space: FockSpace,
    a: &[Vec<Complex64>],
    b: &[Vec<Complex64>],
    x: &[Vec<Complex64>],
) -> Result<FockMatrix> {
    let mut triplets = Vec::new();
    for (m, row) in a.iter().enumerate() {
        for (n, v) in row.iter().enumerate() {
            triplets.push((space.index([m, 0]), space.index([n, 0]), *v));
        }
    }
    for (m, row) in b.iter().enumerate() {
        for (n, v) in row.iter().enumerate() {
            triplets.push((space.index([0, m]), space.index([0, n]), *v));
        }
    }
    for (m, row) in x.iter().enumerate() {
        for (n, v) in row.iter().enumerate() {
            triplets.push((space.index([m, 0]), space.index([0, n]), *v));
            triplets.push((space.index([0, n]), space.index([m, 0]), v.conj()));
        }
    }
    FockMatrix::from_triplets(space, triplets)
}

fn scale_rows(m: Vec<Vec<Complex64>>, s: f64) -> Vec<Vec<Complex64>> {
    m.into_iter()
        .map(|r| r.into_iter().map(|v| v * s).collect())
        .collect()
}

/// Probe after a phase `φ` on mode b and loss `η` on both modes.
#[derive(Debug, Clone)]
pub struct LossyProbe {
    spec: CatSpec,
    eta: f64,
    phi: f64,
    n_max: usize,
    paper_form: FockMatrix,
    oracle_form: FockMatrix,
}

/// The Kraus-channel state alone, without the closed-form companions.
pub fn lossy_probe_oracle(spec: &CatSpec, eta: f64, phi: f64) -> Result<FockMatrix> {
    check_eta(eta)?;
    let psi = build_probe(spec)?.to_fock()?.apply_phase_shift(phi, 1)?;
    psi.projector().loss_channel(eta, 0)?.loss_channel(eta, 1)
}

pub fn lossy_probe(spec: &CatSpec, eta: f64, phi: f64) -> Result<LossyProbe> {
    check_eta(eta)?;
    let n_max = n_max_for(spec.alpha_sq())?;
    let space = FockSpace::two_mode(n_max)?;
    let probe = build_probe(spec)?;
    let eps = lost_photons(spec, eta);
    let pref = probe.norm_n() * probe.norm_n() / norm_m(spec);

    let plain = ring(spec, eta.sqrt(), 0.0, n_max)?;
    let shifted = ring(spec, eta.sqrt(), phi, n_max)?;
    let coh = sector_coefficients(spec, spec.k(), |w| ((w - 1.0) * eps).exp());
    let cross = sector_coefficients(spec, spec.k(), |_| Complex64::new((-eps).exp(), 0.0));
    let paper_form = l_shape(
        space,
        &scale_rows(coherent_sum(&plain, &plain, &coh), pref),
        &scale_rows(coherent_sum(&shifted, &shifted, &coh), pref),
        &scale_rows(coherent_sum(&plain, &shifted, &cross), pref),
    )?;
    let oracle_form = lossy_probe_oracle(spec, eta, phi)?;
    Ok(LossyProbe {
        spec: *spec,
        eta,
        phi,
        n_max,
        paper_form,
        oracle_form,
    })
}

impl LossyProbe {
    pub fn spec(&self) -> &CatSpec {
        &self.spec
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Closed form built term by term from shrunken coherent states.
    pub fn paper_form(&self) -> &FockMatrix {
        &self.paper_form
    }

    /// Kraus evolution of the phase-shifted probe.
    pub fn oracle_form(&self) -> &FockMatrix {
        &self.oracle_form
    }

    /// First-order expansion in `ε = |α|²(1-η)` of the coherence factors,
    /// normalised to unit trace. Requires `ε < 1`.
    pub fn weak_form(&self) -> Result<FockMatrix> {
        let spec = &self.spec;
        let eps = lost_photons(spec, self.eta);
        if 1.0 - eps <= 0.0 {
            return Err(Error::Domain(format!(
                "weak-loss form needs |α|²(1-η) < 1, got {eps}"
            )));
        }
        let n_max = self.n_max;
        let space = FockSpace::two_mode(n_max)?;
        let plain = ring(spec, self.eta.sqrt(), 0.0, n_max)?;
        let shifted = ring(spec, self.eta.sqrt(), self.phi, n_max)?;
        let d = spec.d();
        let upper = sector_coefficients(spec, spec.k(), |_| Complex64::new(1.0 - eps, 0.0));
        let lower = sector_coefficients(spec, (spec.k() + d - 1) % d, |_| Complex64::new(eps, 0.0));
        let both: Vec<Vec<Complex64>> = upper
            .iter()
            .zip(&lower)
            .map(|(u, l)| u.iter().zip(l).map(|(a, b)| a + b).collect())
            .collect();
        let cross = sector_coefficients(spec, spec.k(), |_| Complex64::new((-eps).exp(), 0.0));
        let rho = l_shape(
            space,
            &coherent_sum(&plain, &plain, &both),
            &coherent_sum(&shifted, &shifted, &both),
            &coherent_sum(&plain, &shifted, &cross),
        )?;
        let tr = rho.trace().re;
        Ok(rho.scale(Complex64::new(1.0 / tr, 0.0)))
    }
}

/// Closed-form four-term spectral data of the lossy probe.
#[derive(Debug, Clone)]
pub struct PaperSpectrum {
    /// Unnormalised weights `E₁..E₄`.
    pub e: [f64; 4],
    /// `λᵢ = Eᵢ / ΣE`.
    pub lambda: [f64; 4],
    /// `|C_k⟩|0⟩ ± |0⟩|C_{k,φ}⟩`, then the same for `k-1`, each normalised;
    /// a zero vector stands in for a combination that vanishes identically.
    pub vectors: Vec<FockVector>,
}

impl PaperSpectrum {
    /// `Σ λᵢ |λᵢ⟩⟨λᵢ|`.
    pub fn reconstruct(&self) -> Result<FockMatrix> {
        let mut rho = FockMatrix::zeros(self.vectors[0].space());
        for (l, v) in self.lambda.iter().zip(&self.vectors) {
            rho = rho.add_scaled(&v.projector(), Complex64::new(*l, 0.0))?;
        }
        Ok(rho)
    }

    /// Largest `|⟨λᵢ|λⱼ⟩|` over distinct non-zero vectors.
    pub fn orthogonality_residue(&self) -> Result<f64> {
        let mut worst = 0.0_f64;
        for i in 0..4 {
            for j in i + 1..4 {
                worst = worst.max(self.vectors[i].inner(&self.vectors[j])?.norm());
            }
        }
        Ok(worst)
    }
}

fn pair_vectors(cat: &CatSpec, phi: f64, n_max: usize) -> Result<[FockVector; 2]> {
    let plain = cat_to_fock(cat, n_max)?;
    let shifted = ShiftedCat::new(*cat, phi).to_fock(n_max)?;
    let vac = FockVector::vacuum(plain.space());
    let left = FockVector::tensor(&plain, &vac)?;
    let right = FockVector::tensor(&vac, &shifted)?;
    let plus = left.add(&right)?;
    let minus = left.sub(&right)?;
    let norm_or_zero = |v: FockVector| {
        if v.norm_sqr() > 1e-24 {
            v.normalize()
        } else {
            Ok(FockVector::zeros(v.space()))
        }
    };
    Ok([norm_or_zero(plus)?, norm_or_zero(minus)?])
}

pub fn paper_spectrum(lp: &LossyProbe) -> Result<PaperSpectrum> {
    let spec = lp.spec;
    let eta = lp.eta;
    let d = spec.d();
    let eps = lost_photons(&spec, eta);
    let shrunk = spec.scaled(eta.sqrt())?;
    let m_in = norm_m(&spec);
    let v_in = vacuum_overlap_sq(&spec);

    let mut e = [0.0; 4];
    let mut vectors = Vec::with_capacity(4);
    let ek = norm_m(&shrunk) / m_in;
    let vk = vacuum_overlap_sq(&shrunk);
    e[0] = ek * (1.0 + vk) / (1.0 + v_in) * (1.0 - eps + (-eps).exp()) / 2.0;
    e[1] = ek * (1.0 - vk) / (1.0 + v_in) * (1.0 - eps - (-eps).exp()) / 2.0;
    vectors.extend(pair_vectors(&shrunk, lp.phi, lp.n_max)?);

    let k_lower = (spec.k() + d - 1) % d;
    match shrunk.with_k(k_lower) {
        Ok(lower) => {
            let el = norm_m(&lower) / m_in;
            let vl = vacuum_overlap_sq(&lower);
            e[2] = el * (1.0 + vl) / (1.0 + v_in) * eps / 2.0;
            e[3] = el * (1.0 - vl) / (1.0 + v_in) * eps / 2.0;
            vectors.extend(pair_vectors(&lower, lp.phi, lp.n_max)?);
        }
        Err(Error::Degenerate { .. }) => {
            let space = FockSpace::two_mode(lp.n_max)?;
            vectors.extend([FockVector::zeros(space), FockVector::zeros(space)]);
        }
        Err(other) => return Err(other),
    }
    let total: f64 = e.iter().sum();
    let lambda = e.map(|x| x / total);
    Ok(PaperSpectrum { e, lambda, vectors })
}
