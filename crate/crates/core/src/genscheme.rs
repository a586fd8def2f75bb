//! Simulation of the cat-state generation protocol: a beamsplitter turns a
//! two-component cat into `|α⟩|0⟩ + |0⟩|α⟩`, a cross-phase modulator entangles
//! each arm with a coherent ancilla, and heterodyne detection of the ancilla
//! heralds the cat sector.
//!
//! The heterodyne measurement is an ideal coherent-state projection binned by
//! phase sector: outcome `k` collects `γ` with `arg γ` within `π/d` of `2πk/d`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cat::{cat_to_fock, norm_m, CatSpec};
use crate::error::{Error, Result};
use crate::fock::{coherent_vector, n_max_for, FockSpace, FockVector};
use crate::special::{ln_factorial, ln_gamma_half_plus_one};

/// Leakage bound above which an outcome is flagged.
pub const LEAKAGE_FLAG: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub d: usize,
    pub alpha: Complex64,
    pub beta: f64,
    pub shots: u64,
    pub seed: u64,
}

impl GenConfig {
    /// `beta = None` selects `1.5 d`.
    pub fn new(
        d: usize,
        alpha: Complex64,
        beta: Option<f64>,
        shots: u64,
        seed: u64,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::Parameter(format!("d = {d} must be at least 2")));
        }
        let beta = beta.unwrap_or(1.5 * d as f64);
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Parameter(format!(
                "ancilla amplitude β = {beta} must be positive"
            )));
        }
        if shots == 0 {
            return Err(Error::Parameter("shots must be at least 1".into()));
        }
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(Error::Parameter("α must be finite".into()));
        }
        if beta < d as f64 {
            log::warn!("β = {beta} is below d = {d}; sector discrimination will leak");
        }
        Ok(Self {
            d,
            alpha,
            beta,
            shots,
            seed,
        })
    }
}

/// One heterodyne outcome: a sector per measured ancilla.
#[derive(Debug, Clone, PartialEq)]
pub struct GenOutcome {
    pub k_observed: Vec<usize>,
    pub probability: f64,
    /// Closed-form probability where one exists (`M_{d,k}/d²` for a single arm).
    pub predicted: Option<f64>,
    /// Fidelity of the conditional signal state to its target; `None` when the
    /// outcome has zero probability.
    pub conditional_fidelity: Option<f64>,
    /// `Σ_{j≠k} e^{-|β(ωʲ − ωᵏ)|²/2}` summed over measured arms.
    pub leakage: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenReport {
    pub outcomes: Vec<GenOutcome>,
    /// Sampled counts, aligned with `outcomes`.
    pub counts: Vec<u64>,
    pub shots: u64,
    pub seed: u64,
    pub total_probability: f64,
}

impl GenReport {
    pub fn max_leakage(&self) -> f64 {
        self.outcomes.iter().map(|o| o.leakage).fold(0.0, f64::max)
    }
}

/// `(|α/√2⟩ + |−α/√2⟩) ⊗ |α/√2⟩`, normalised, through the 50:50 beamsplitter
/// and a π phase on mode b. The result is `|α⟩|0⟩ + |0⟩|α⟩` up to
/// normalisation.
pub fn bs_stage(alpha: Complex64) -> Result<FockVector> {
    let n_max = n_max_for(alpha.norm_sqr())?;
    let half = alpha / 2f64.sqrt();
    let cat = coherent_vector(half, n_max)?.add(&coherent_vector(-half, n_max)?)?;
    let input = FockVector::tensor(&cat, &coherent_vector(half, n_max)?)?;
    if input.norm_sqr() == 0.0 {
        return Err(Error::Numerical("beamsplitter input vanishes".into()));
    }
    input
        .normalize()?
        .beamsplitter_50_50()?
        .apply_phase_shift(PI, 1)
}

/// `|α⟩|0⟩ + |0⟩|α⟩`, normalised, on the same truncation as [`bs_stage`].
pub fn bs_target(alpha: Complex64) -> Result<FockVector> {
    let n_max = n_max_for(alpha.norm_sqr())?;
    let coh = coherent_vector(alpha, n_max)?;
    let vac = FockVector::vacuum(FockSpace::single(n_max)?);
    FockVector::tensor(&coh, &vac)?
        .add(&FockVector::tensor(&vac, &coh)?)?
        .normalize()
}

fn pair_n_max(alpha: Complex64, beta: f64) -> Result<usize> {
    Ok(n_max_for(alpha.norm_sqr())?.max(n_max_for(beta * beta)?))
}

/// `e^{2πi n̂₁n̂₂/d} |α⟩₁|β⟩₂`, which equals `Σ_k (√M_{d,k}/d) |C_{d,k}(α)⟩|βωᵏ⟩`.
pub fn cpm_stage(alpha: Complex64, beta: f64, d: usize) -> Result<FockVector> {
    if d < 2 {
        return Err(Error::Parameter(format!("d = {d} must be at least 2")));
    }
    if beta < d as f64 {
        log::warn!("β = {beta} is below d = {d}; sector discrimination will leak");
    }
    let n_max = pair_n_max(alpha, beta)?;
    let input = FockVector::tensor(
        &coherent_vector(alpha, n_max)?,
        &coherent_vector(Complex64::new(beta, 0.0), n_max)?,
    )?;
    input.cross_kerr(d)
}

/// `|⟨C_{d,k}(α)|⟨βωᵏ| ψ⟩|` for every `k`, for comparison with `√M_{d,k}/d`.
pub fn branch_overlaps(
    state: &FockVector,
    alpha: Complex64,
    beta: f64,
    d: usize,
) -> Result<Vec<Complex64>> {
    let n_max = state.space().n_max();
    (0..d)
        .map(|k| {
            let omega = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64);
            let branch = FockVector::tensor(
                &cat_to_fock(&CatSpec::new(d, k, alpha)?, n_max)?,
                &coherent_vector(omega * beta, n_max)?,
            )?;
            branch.inner(state)
        })
        .collect()
}

/// `⟨m|Π_k|n⟩` of the sector-binned heterodyne POVM on `0..=n_max`:
/// `Γ((m+n)/2+1)/(2π√(m!n!)) · ∫_sector e^{i(m−n)θ} dθ`.
pub fn heterodyne_povm(d: usize, k: usize, n_max: usize) -> DMatrix<Complex64> {
    let centre = 2.0 * PI * k as f64 / d as f64;
    let half = PI / d as f64;
    DMatrix::from_fn(n_max + 1, n_max + 1, |m, n| {
        let radial = (ln_gamma_half_plus_one(m + n) - 0.5 * (ln_factorial(m) + ln_factorial(n)))
            .exp()
            / (2.0 * PI);
        if m == n {
            return Complex64::new(radial * 2.0 * half, 0.0);
        }
        let dm = m as f64 - n as f64;
        let angular = 2.0 * (dm * half).sin() / dm;
        Complex64::from_polar(radial * angular, dm * centre)
    })
}

fn leakage_bound(d: usize, k: usize, beta: f64) -> f64 {
    let w = |j: usize| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / d as f64);
    (0..d)
        .filter(|&j| j != k)
        .map(|j| (-(beta * beta) * (w(j) - w(k)).norm_sqr() / 2.0).exp())
        .sum()
}

/// Counts from `shots` draws over `probs`. Shot `i` uses stream `i` of a
/// ChaCha8 generator seeded with `seed`, so counts do not depend on the order
/// in which shots are drawn.
pub fn sample_counts(probs: &[f64], shots: u64, seed: u64) -> Result<Vec<u64>> {
    let weights: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::Numerical(format!("cannot sample outcomes: {e}")))?;
    let mut counts = vec![0u64; probs.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for shot in 0..shots {
        rng.set_stream(shot);
        rng.set_word_pos(0);
        counts[dist.sample(&mut rng)] += 1;
    }
    Ok(counts)
}

/// Heterodyne the ancilla (mode b) of a [`cpm_stage`] output.
///
/// For each sector `k` reports `P(k)` next to `M_{d,k}(α)/d²` and the fidelity
/// of the conditional signal state to `|C_{d,k}(α)⟩`, then samples `shots`
/// outcomes.
pub fn heterodyne_condition(
    state: &FockVector,
    alpha: Complex64,
    d: usize,
    beta: f64,
    shots: u64,
    seed: u64,
) -> Result<GenReport> {
    if state.space().modes() != 2 {
        return Err(Error::Shape(
            "heterodyne conditioning needs a two-mode state".into(),
        ));
    }
    if shots == 0 {
        return Err(Error::Parameter("shots must be at least 1".into()));
    }
    let n_max = state.space().n_max();
    let levels = n_max + 1;
    // psi[(i, n)]: signal i, ancilla n
    let psi = DMatrix::from_row_slice(levels, levels, state.amps());
    let mut outcomes = Vec::with_capacity(d);
    for k in 0..d {
        let pi_k = heterodyne_povm(d, k, n_max);
        // P = Σ_i ψ_i† Π ψ_i, with ψ_i the ancilla row of signal level i
        let applied = &psi * pi_k.transpose();
        let p: f64 = psi
            .iter()
            .zip(applied.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let spec = CatSpec::new(d, k, alpha);
        let (predicted, fidelity) = match spec {
            Ok(spec) => {
                let cat = cat_to_fock(&spec, n_max)?;
                let c =
                    nalgebra::DVector::from_iterator(levels, cat.amps().iter().map(|a| a.conj()));
                let u = psi.transpose() * c;
                let num = (u.adjoint() * &pi_k * &u)[(0, 0)].re;
                let fid = (p > 0.0).then(|| (num / p).clamp(0.0, 1.0));
                (Some(norm_m(&spec) / (d * d) as f64), fid)
            }
            Err(_) => (Some(0.0), None),
        };
        let leakage = leakage_bound(d, k, beta);
        outcomes.push(GenOutcome {
            k_observed: vec![k],
            probability: p,
            predicted,
            conditional_fidelity: fidelity,
            leakage,
            flagged: leakage > LEAKAGE_FLAG,
        });
    }
    finish(outcomes, shots, seed)
}

fn finish(outcomes: Vec<GenOutcome>, shots: u64, seed: u64) -> Result<GenReport> {
    let probs: Vec<f64> = outcomes.iter().map(|o| o.probability).collect();
    let total_probability = probs.iter().sum();
    let counts = sample_counts(&probs, shots, seed)?;
    for o in outcomes.iter().filter(|o| o.flagged) {
        log::warn!(
            "outcome {:?} has leakage bound {:e}",
            o.k_observed,
            o.leakage
        );
    }
    Ok(GenReport {
        outcomes,
        counts,
        shots,
        seed,
        total_probability,
    })
}

/// Both arms of the [`bs_stage`] output pass through their own CPM with an
/// ancilla `|β⟩`, and both ancillas are heterodyned.
///
/// The CPM sends `|n⟩|β⟩` to `|n⟩|βωⁿ⟩`, so the joint state is a sum of `2d`
/// product terms `|signal⟩|β ω^{r_A}⟩|β ω^{r_B}⟩` and every outcome pair
/// `(k_A, k_B)` is resolved exactly through the `d×d` matrices
/// `⟨βω^{r'}|Π_k|βωʳ⟩`. The conditional state is compared with
/// `𝒩(|C_{d,k}⟩|0⟩ + |0⟩|C_{d,k}⟩)`, `k = (k_A + k_B) mod d`.
pub fn end_to_end(cfg: &GenConfig) -> Result<GenReport> {
    let d = cfg.d;
    let alpha = cfg.alpha;
    let x = alpha.norm_sqr();
    if cfg.beta < d as f64 {
        log::warn!(
            "β = {} is below d = {d}; sector discrimination will leak",
            cfg.beta
        );
    }
    let n_max = n_max_for(cfg.beta * cfg.beta)?;
    n_max_for(x)?;
    let omega = |r: usize| Complex64::from_polar(1.0, 2.0 * PI * r as f64 / d as f64);
    let ancillas: Vec<FockVector> = (0..d)
        .map(|r| coherent_vector(omega(r) * cfg.beta, n_max))
        .collect::<Result<_>>()?;
    let anc = DMatrix::from_fn(n_max + 1, d, |n, r| ancillas[r].amps()[n]);
    // overlaps[k][(r', r)] = ⟨βω^{r'}|Π_k|βωʳ⟩
    let overlaps: Vec<DMatrix<Complex64>> = (0..d)
        .map(|k| anc.adjoint() * heterodyne_povm(d, k, n_max) * &anc)
        .collect();

    // |α⟩ = Σ_r c_r |C_r⟩ with c_r = √M_r / d; only |C_0⟩ overlaps the vacuum.
    let c: Vec<f64> = (0..d)
        .map(|r| {
            if x == 0.0 {
                if r == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                norm_m(&CatSpec::new(d, r, alpha).expect("α ≠ 0")).sqrt() / d as f64
            }
        })
        .collect();
    let z0 = if c[0] > 0.0 {
        (-x / 2.0).exp() / c[0]
    } else {
        0.0
    };
    let z = |r: usize| if r == 0 { z0 } else { 0.0 };
    let pref = 1.0 / (2.0 + 2.0 * (-x).exp());

    // term t < d: arm A holds |C_t⟩; t ≥ d: arm B holds |C_{t-d}⟩
    let terms: Vec<(bool, usize)> = (0..d)
        .map(|r| (true, r))
        .chain((0..d).map(|r| (false, r)))
        .collect();
    let signal_gram = |(a1, r1): (bool, usize), (a2, r2): (bool, usize)| -> f64 {
        if a1 == a2 {
            if r1 == r2 {
                c[r1] * c[r1]
            } else {
                0.0
            }
        } else {
            c[r1] * c[r2] * z(r1) * z(r2)
        }
    };
    let ancilla_phase = |(arm_a, r): (bool, usize)| if arm_a { (r, 0) } else { (0, r) };

    let mut outcomes = Vec::with_capacity(d * d);
    for ka in 0..d {
        for kb in 0..d {
            let g = |t1: (bool, usize), t2: (bool, usize)| {
                let (a1, b1) = ancilla_phase(t1);
                let (a2, b2) = ancilla_phase(t2);
                overlaps[ka][(a1, a2)] * overlaps[kb][(b1, b2)]
            };
            let k = (ka + kb) % d;
            let zk = z(k);
            let nk = (2.0 * (1.0 + zk * zk)).sqrt().recip();
            let target_amp =
                |(_, r): (bool, usize)| nk * c[r] * ((r == k) as u8 as f64 + zk * z(r));
            let mut p = Complex64::new(0.0, 0.0);
            let mut t_rho_t = Complex64::new(0.0, 0.0);
            for &t1 in &terms {
                for &t2 in &terms {
                    let w = g(t1, t2);
                    p += w * signal_gram(t1, t2);
                    t_rho_t += w * target_amp(t2) * target_amp(t1);
                }
            }
            let p = pref * p.re;
            let fid = pref * t_rho_t.re;
            let leakage = leakage_bound(d, ka, cfg.beta) + leakage_bound(d, kb, cfg.beta);
            outcomes.push(GenOutcome {
                k_observed: vec![ka, kb],
                probability: p,
                predicted: None,
                conditional_fidelity: (p > 0.0).then(|| (fid / p).clamp(0.0, 1.0)),
                leakage,
                flagged: leakage > LEAKAGE_FLAG,
            });
        }
    }
    finish(outcomes, cfg.shots, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fidelity;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn beamsplitter_stage_reaches_target() {
        for a in [1.0, 2.0, 0.3] {
            let out = bs_stage(re(a)).unwrap();
            assert!(
                fidelity(&out, &bs_target(re(a)).unwrap()).unwrap() > 1.0 - 1e-10,
                "α={a}"
            );
        }
        let out = bs_stage(Complex64::new(0.6, 0.8)).unwrap();
        assert!(
            fidelity(&out, &bs_target(Complex64::new(0.6, 0.8)).unwrap()).unwrap() > 1.0 - 1e-10
        );
        assert!(
            bs_stage(re(2.0)).unwrap().space().n_max() > bs_stage(re(1.0)).unwrap().space().n_max()
        );
    }

    #[test]
    fn beamsplitter_stage_vacuum() {
        let out = bs_stage(re(0.0)).unwrap();
        assert!((out.amp([0, 0]).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cpm_branch_coefficients() {
        for (d, a, b) in [(4usize, 1.0, 6.0), (2, 1.0, 4.0), (3, 0.7, 5.0)] {
            let state = cpm_stage(re(a), b, d).unwrap();
            let ov = branch_overlaps(&state, re(a), b, d).unwrap();
            let mut total = 0.0;
            for (k, o) in ov.iter().enumerate() {
                let m = norm_m(&CatSpec::real(d, k, a).unwrap());
                assert!(
                    (o.norm() - m.sqrt() / d as f64).abs() < 1e-10,
                    "d={d} k={k}"
                );
                total += m / (d * d) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_arm_keeps_ancilla() {
        let state = cpm_stage(re(0.0), 4.0, 3).unwrap();
        let n_max = state.space().n_max();
        let want = FockVector::tensor(
            &FockVector::vacuum(FockSpace::single(n_max).unwrap()),
            &coherent_vector(re(4.0), n_max).unwrap(),
        )
        .unwrap();
        assert!(state.sub(&want).unwrap().norm_sqr() < 1e-28);
    }

    #[test]
    fn povm_resolves_identity() {
        let n_max = 30;
        let mut sum = DMatrix::zeros(n_max + 1, n_max + 1);
        for k in 0..5 {
            sum += heterodyne_povm(5, k, n_max);
        }
        assert!((sum - DMatrix::identity(n_max + 1, n_max + 1))
            .iter()
            .all(|z| z.norm() < 1e-12));
        // vacuum: the heterodyne distribution is rotation invariant
        let p = heterodyne_povm(4, 1, 10)[(0, 0)].re;
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn heterodyne_matches_sector_weights() {
        let (d, a, b) = (4, 1.0, 6.0);
        let state = cpm_stage(re(a), b, d).unwrap();
        let rep = heterodyne_condition(&state, re(a), d, b, 10_000, 7).unwrap();
        assert!((rep.total_probability - 1.0).abs() < 1e-9);
        for o in &rep.outcomes {
            assert!((o.probability - o.predicted.unwrap()).abs() < 1e-6);
            assert!(o.conditional_fidelity.unwrap() > 0.999);
            assert!(!o.flagged);
        }
        assert_eq!(rep.counts.iter().sum::<u64>(), 10_000);
        for (o, &n) in rep.outcomes.iter().zip(&rep.counts) {
            let mean = o.probability * 1e4;
            let sd = (1e4 * o.probability * (1.0 - o.probability)).sqrt();
            assert!(
                (n as f64 - mean).abs() <= 3.0 * sd.max(1.0),
                "{n} vs {mean}"
            );
        }
    }

    #[test]
    fn leakage_decreases_with_beta() {
        for d in [2usize, 4, 8] {
            let l: Vec<f64> = [1.0, 1.5, 2.0]
                .iter()
                .map(|s| leakage_bound(d, 0, s * d as f64))
                .collect();
            assert!(l[0] > l[1] && l[1] > l[2], "{l:?}");
        }
        assert!(leakage_bound(2, 0, 4.0) < 1.3e-14);
        assert!(leakage_bound(2, 0, 1.0) > LEAKAGE_FLAG);
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let a = sample_counts(&p, 10_000, 42).unwrap();
        assert_eq!(a, sample_counts(&p, 10_000, 42).unwrap());
        assert_ne!(a, sample_counts(&p, 10_000, 43).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::new(1, re(1.0), None, 10, 0).is_err());
        assert!(GenConfig::new(4, re(1.0), None, 0, 0).is_err());
        assert!(GenConfig::new(4, re(1.0), Some(-1.0), 10, 0).is_err());
        assert_eq!(GenConfig::new(4, re(1.0), None, 10, 0).unwrap().beta, 6.0);
    }

    /// `(I ⊗ Π) ψ` on the ancilla mode.
    fn apply_ancilla(state: &FockVector, pi: &DMatrix<Complex64>) -> FockVector {
        let l = state.space().levels();
        let m = DMatrix::from_row_slice(l, l, state.amps()) * pi.transpose();
        let mut amps = Vec::with_capacity(l * l);
        for i in 0..l {
            for n in 0..l {
                amps.push(m[(i, n)]);
            }
        }
        FockVector::from_amps(state.space(), amps).unwrap()
    }

    #[test]
    fn joint_probabilities_match_fock_contraction() {
        // Brute force: Ψ = N'(|ψ_A⟩|0,β⟩_B + |0,β⟩_A|ψ_B⟩) with ψ = cpm_stage(α).
        let (d, a, b) = (2usize, 1.0, 4.0);
        let cfg = GenConfig::new(d, re(a), Some(b), 1000, 3).unwrap();
        let rep = end_to_end(&cfg).unwrap();
        let psi = cpm_stage(re(a), b, d).unwrap();
        let vac = cpm_stage(re(0.0), b, d)
            .unwrap()
            .with_n_max(psi.space().n_max())
            .unwrap();
        let pref = 1.0 / (2.0 + 2.0 * (-a * a).exp());
        for o in &rep.outcomes {
            let (pa, pb) = (
                heterodyne_povm(d, o.k_observed[0], psi.space().n_max()),
                heterodyne_povm(d, o.k_observed[1], psi.space().n_max()),
            );
            let ev =
                |v: &FockVector, p: &DMatrix<Complex64>| v.inner(&apply_ancilla(v, p)).unwrap();
            let cross = psi.inner(&apply_ancilla(&vac, &pa)).unwrap()
                * vac.inner(&apply_ancilla(&psi, &pb)).unwrap();
            let p = pref
                * (ev(&psi, &pa) * ev(&vac, &pb) + ev(&vac, &pa) * ev(&psi, &pb) + 2.0 * cross.re)
                    .re;
            assert!(
                (p - o.probability).abs() < 1e-10,
                "{:?}: {p} vs {}",
                o.k_observed,
                o.probability
            );
        }
        assert!((rep.total_probability - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vacuum_sector_heralds_entangled_cat() {
        let cfg = GenConfig::new(2, re(1.0), Some(4.0), 10_000, 11).unwrap();
        let rep = end_to_end(&cfg).unwrap();
        let o00 = rep
            .outcomes
            .iter()
            .find(|o| o.k_observed == [0, 0])
            .unwrap();
        assert!(o00.conditional_fidelity.unwrap() > 0.99);
        // a single arm in sector 1 heralds the product |C_1⟩|0⟩
        let o10 = rep
            .outcomes
            .iter()
            .find(|o| o.k_observed == [1, 0])
            .unwrap();
        assert!((o10.conditional_fidelity.unwrap() - 0.5).abs() < 1e-6);
        assert_eq!(rep, end_to_end(&cfg).unwrap());
    }
}
