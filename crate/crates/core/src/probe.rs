//! Path-symmetric probes `𝒩(|C⟩|0⟩ + |0⟩|C⟩)` and their phase average.

use num_complex::Complex64;

use crate::cat::{cat_moments, cat_to_fock, norm_m, sector_weights, vacuum_overlap_sq, CatSpec};
use crate::error::{Error, Result};
use crate::fock::{n_max_for, FockMatrix, FockSpace, FockVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeState {
    spec: CatSpec,
    norm_n: f64,
    n_av: f64,
}

impl ProbeState {
    pub fn spec(&self) -> &CatSpec {
        &self.spec
    }

    /// `𝒩 = [2(1 + |⟨0|C⟩|²)]^{-1/2}`.
    pub fn norm_n(&self) -> f64 {
        self.norm_n
    }

    /// `⟨n̂_b⟩`, the mean photon number per arm.
    pub fn n_av(&self) -> f64 {
        self.n_av
    }

    /// Two-mode realisation with `n_max` from the truncation rule.
    pub fn to_fock(&self) -> Result<FockVector> {
        self.to_fock_with(n_max_for(self.spec.alpha_sq())?)
    }

    pub fn to_fock_with(&self, n_max: usize) -> Result<FockVector> {
        let cat = cat_to_fock(&self.spec, n_max)?;
        let vac = FockVector::vacuum(cat.space());
        let a = FockVector::tensor(&cat, &vac)?;
        let b = FockVector::tensor(&vac, &cat)?;
        Ok(a.add(&b)?.scale(Complex64::new(self.norm_n, 0.0)))
    }
}

pub fn build_probe(spec: &CatSpec) -> Result<ProbeState> {
    let moments = cat_moments(spec)?;
    let norm_n = if spec.k() == 0 {
        (2.0 * (1.0 + vacuum_overlap_sq(spec))).sqrt().recip()
    } else {
        std::f64::consts::FRAC_1_SQRT_2
    };
    Ok(ProbeState {
        spec: *spec,
        norm_n,
        n_av: norm_n * norm_n * moments.mean_n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeMoments {
    pub mean_nb: f64,
    pub mean_nb2: f64,
    /// Largest imaginary part left over by a complex-valued evaluation.
    pub imag_residue: f64,
}

/// `⟨n̂_b⟩` and `⟨n̂_b²⟩` of the probe through the photon-number sector sums.
///
/// Algebraically the same as [`probe_moments_double_sum`], but each term is
/// non-negative, so the result keeps full relative precision when
/// `M_{d,k}(α)` is tiny.
pub fn probe_moments(spec: &CatSpec) -> Result<ProbeMoments> {
    let probe = build_probe(spec)?;
    let m = cat_moments(spec)?;
    let n2 = probe.norm_n * probe.norm_n;
    Ok(ProbeMoments {
        mean_nb: n2 * m.mean_n,
        mean_nb2: n2 * m.mean_n2,
        imag_residue: 0.0,
    })
}

/// `⟨n̂_b⟩`, `⟨n̂_b²⟩` as the coherent-overlap double sums
/// `𝒩²/M Σ_{q,q'} ω^{k(q'-q)} (|α|²w + |α|⁴w²) e^{(w-1)|α|²}`, `w = ω^{q-q'}`.
pub fn probe_moments_double_sum(spec: &CatSpec) -> Result<ProbeMoments> {
    let probe = build_probe(spec)?;
    let (d, k) = (spec.d(), spec.k());
    let x = spec.alpha_sq();
    let omega = spec.omega();
    let mut s1 = Complex64::new(0.0, 0.0);
    let mut s2 = Complex64::new(0.0, 0.0);
    for q in 0..d {
        for qp in 0..d {
            let phase = omega.powu(((k * (d + qp - q)) % d) as u32);
            let w = omega.powu(((d + q - qp) % d) as u32);
            let e = ((w - 1.0) * x).exp();
            s1 += phase * x * w * e;
            s2 += phase * (x * w + x * x * w * w) * e;
        }
    }
    let scale = probe.norm_n * probe.norm_n / norm_m(spec);
    Ok(ProbeMoments {
        mean_nb: scale * s1.re,
        mean_nb2: scale * s2.re,
        imag_residue: (scale * s1.im).abs().max((scale * s2.im).abs()),
    })
}

/// Common-phase average of the probe: a mixture of NOON components
/// `(|n,0⟩ + |0,n⟩)/√2` (and `|0,0⟩` for `n = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAveragedProbe {
    spec: CatSpec,
    /// `(n, weight)` over the sector, weights summing to one.
    weights: Vec<(usize, f64)>,
    /// The printed `4𝒩²` prefactor, kept for reference only.
    paper_prefactor: f64,
}

impl PhaseAveragedProbe {
    pub fn spec(&self) -> &CatSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[(usize, f64)] {
        &self.weights
    }

    pub fn paper_prefactor(&self) -> f64 {
        self.paper_prefactor
    }

    /// Largest photon number carrying weight.
    pub fn n_max(&self) -> usize {
        self.weights.last().map(|(n, _)| *n).unwrap_or(0)
    }

    /// Two-mode density matrix on a space with truncation `n_max`.
    pub fn density(&self, n_max: usize) -> Result<FockMatrix> {
        let space = FockSpace::two_mode(n_max)?;
        if n_max < self.n_max() {
            return Err(Error::Truncation(format!(
                "phase-averaged state needs n_max ≥ {}, got {n_max}",
                self.n_max()
            )));
        }
        let mut triplets = Vec::with_capacity(4 * self.weights.len());
        for &(n, w) in &self.weights {
            if n == 0 {
                triplets.push((0, 0, Complex64::new(w, 0.0)));
                continue;
            }
            let a = space.index([n, 0]);
            let b = space.index([0, n]);
            let half = Complex64::new(0.5 * w, 0.0);
            triplets.extend([(a, a, half), (a, b, half), (b, a, half), (b, b, half)]);
        }
        FockMatrix::from_triplets(space, triplets)
    }
}

/// Phase-averaged probe. Weights are `2𝒩²P_n` for `n > 0` and `4𝒩²P_0` for
/// `n = 0`, with `P_n = d² e^{-|α|²}|α|^{2n}/(n! M)`, truncated at the Fock
/// truncation rule and renormalised.
pub fn phase_averaged(spec: &CatSpec) -> Result<PhaseAveragedProbe> {
    let probe = build_probe(spec)?;
    let n_max = n_max_for(spec.alpha_sq())?;
    let sector = sector_weights(spec.d(), spec.k(), spec.alpha_sq());
    let total: f64 = sector.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate {
            d: spec.d(),
            k: spec.k(),
        });
    }
    let n2 = probe.norm_n * probe.norm_n;
    let mut weights: Vec<(usize, f64)> = sector
        .iter()
        .filter(|(n, _)| *n <= n_max)
        .map(|&(n, w)| {
            let p = w / total;
            (n, if n == 0 { 4.0 * n2 * p } else { 2.0 * n2 * p })
        })
        .collect();
    let kept: f64 = weights.iter().map(|(_, w)| w).sum();
    if (kept - 1.0).abs() > 1e-12 {
        log::debug!("phase-averaged weights renormalised by {kept}");
    }
    weights.iter_mut().for_each(|(_, w)| *w /= kept);
    Ok(PhaseAveragedProbe {
        spec: *spec,
        weights,
        paper_prefactor: 4.0 * n2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_vector, fidelity};
    use proptest::prelude::*;

    fn spec(d: usize, k: usize, a: f64) -> CatSpec {
        CatSpec::real(d, k, a).unwrap()
    }

    #[test]
    fn normalisation() {
        assert_eq!(
            build_probe(&spec(2, 1, 1.0)).unwrap().norm_n(),
            0.5f64.sqrt()
        );
        let p = build_probe(&spec(2, 0, 1.0)).unwrap();
        let v = p.to_fock().unwrap();
        assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swap_symmetry() {
        for (d, k, a) in [(2, 0, 1.0), (4, 3, 1.7), (8, 1, 0.4)] {
            let v = build_probe(&spec(d, k, a)).unwrap().to_fock().unwrap();
            assert!((1.0 - fidelity(&v, &v.swap_modes().unwrap()).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn noon_limit() {
        for k in 1..4 {
            let v = build_probe(&spec(8, k, 1e-3)).unwrap().to_fock().unwrap();
            let space = v.space();
            let noon = FockVector::basis(space, [k, 0])
                .unwrap()
                .add(&FockVector::basis(space, [0, k]).unwrap())
                .unwrap()
                .normalize()
                .unwrap();
            assert!(fidelity(&v, &noon).unwrap() > 1.0 - 1e-5);
        }
    }

    #[test]
    fn entangled_coherent_state() {
        let p = build_probe(&spec(1, 0, 1.0)).unwrap();
        let n = 36;
        let a = coherent_vector(Complex64::new(1.0, 0.0), n).unwrap();
        let vac = FockVector::vacuum(a.space());
        let ecs = FockVector::tensor(&a, &vac)
            .unwrap()
            .add(&FockVector::tensor(&vac, &a).unwrap())
            .unwrap()
            .normalize()
            .unwrap();
        assert!(1.0 - fidelity(&ecs, &p.to_fock_with(n).unwrap()).unwrap() < 1e-12);
        let oracle = ecs.expectation_diag(|o| o[1] as f64);
        assert!((p.n_av() - oracle).abs() < 1e-12);
        let m = probe_moments(&spec(1, 0, 1.0)).unwrap();
        let n2 = p.norm_n() * p.norm_n();
        assert!((m.mean_nb - n2).abs() < 1e-14);
    }

    #[test]
    fn moments_match_oracle_on_grid() {
        for d in [1, 2, 4, 8, 16] {
            for x in [0.25, 1.0, 4.0, 9.0] {
                for k in 0..d.min(5) {
                    let s = spec(d, k, f64::sqrt(x));
                    let v = build_probe(&s).unwrap().to_fock().unwrap();
                    let n1 = v.expectation_diag(|o| o[1] as f64);
                    let n2 = v.expectation_diag(|o| (o[1] * o[1]) as f64);
                    let m = probe_moments(&s).unwrap();
                    assert!(
                        (m.mean_nb - n1).abs() <= 1e-10 * n1.max(1e-300),
                        "d={d} k={k} x={x}"
                    );
                    assert!((m.mean_nb2 - n2).abs() <= 1e-10 * n2.max(1e-300));
                    assert_eq!(m.mean_nb, build_probe(&s).unwrap().n_av());
                }
            }
        }
    }

    #[test]
    fn double_sum_form_where_well_conditioned() {
        let s = spec(2, 0, 1.0);
        let a = probe_moments(&s).unwrap();
        let b = probe_moments_double_sum(&s).unwrap();
        assert!((a.mean_nb - b.mean_nb).abs() < 1e-12 && (a.mean_nb2 - b.mean_nb2).abs() < 1e-12);
        assert!(b.imag_residue < 1e-12);
        for d in [2, 4, 8] {
            for x in [1.0, 4.0, 9.0] {
                for k in 0..d.min(3) {
                    let s = spec(d, k, f64::sqrt(x));
                    let a = probe_moments(&s).unwrap();
                    let b = probe_moments_double_sum(&s).unwrap();
                    let tol = 1e-10 * (d * d) as f64 / norm_m(&s);
                    assert!(
                        (a.mean_nb - b.mean_nb).abs() <= tol * a.mean_nb.max(1.0),
                        "d={d} k={k} x={x}"
                    );
                    assert!(b.imag_residue <= tol);
                }
            }
        }
    }

    #[test]
    fn noon_limit_of_moments() {
        for k in [1, 2, 4] {
            let m = probe_moments(&spec(8, k, 1e-3)).unwrap();
            assert!((m.mean_nb - k as f64 / 2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn phase_average_weights() {
        let p = phase_averaged(&spec(1, 0, 1.0)).unwrap();
        // 4𝒩²P_0 and 2𝒩²P_n over a Poisson law with 𝒩² = 1/(2(1+e^{-1}))
        let n2 = 1.0 / (2.0 * (1.0 + (-1f64).exp()));
        assert!((p.weights()[0].1 - 4.0 * n2 * (-1f64).exp()).abs() < 1e-12);
        assert!((p.weights()[2].1 - 2.0 * n2 * (-1f64).exp() / 2.0).abs() < 1e-12);

        let p = phase_averaged(&spec(2, 0, 1.0)).unwrap();
        let (w0, w2) = (p.weights()[0], p.weights()[1]);
        assert_eq!((w0.0, w2.0), (0, 2));
        // P_0 / P_2 = 2, and the vacuum term carries the doubled prefactor
        assert!((w0.1 / w2.1 - 2.0 * 2.0).abs() < 1e-12);

        let p = phase_averaged(&spec(8, 3, 2.0)).unwrap();
        let total: f64 = p.weights().iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(p.weights().iter().all(|(n, _)| n % 8 == 3));
        let rho = p.density(p.n_max()).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_average_equals_explicit_average() {
        // Average e^{iθ(n_a+n_b)} |Ψ⟩⟨Ψ| e^{-iθ(n_a+n_b)} over θ on a fine grid.
        let s = spec(2, 0, 0.8);
        let psi = build_probe(&s).unwrap().to_fock().unwrap();
        let rho = psi.projector();
        let steps = 128;
        let mut acc = FockMatrix::zeros(rho.space());
        for i in 0..steps {
            let th = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
            let rotated = rho
                .apply_phase_shift(th, 0)
                .unwrap()
                .apply_phase_shift(th, 1)
                .unwrap();
            acc = acc
                .add_scaled(&rotated, Complex64::new(1.0 / steps as f64, 0.0))
                .unwrap();
        }
        let avg = phase_averaged(&s)
            .unwrap()
            .density(rho.space().n_max())
            .unwrap();
        assert!(crate::fock::trace_distance(&acc, &avg).unwrap() < 1e-10);
    }

    proptest! {
        #[test]
        fn variance_is_non_negative(d in 1usize..=16, a in 0.05f64..3.0) {
            for k in 0..d.min(5) {
                let m = probe_moments(&spec(d, k, a)).unwrap();
                prop_assert!(m.mean_nb2 - m.mean_nb * m.mean_nb >= 0.0);
            }
        }

        #[test]
        fn probes_are_swap_symmetric(d in 1usize..=8, a in 0.1f64..2.0) {
            let v = build_probe(&spec(d, d - 1, a)).unwrap().to_fock().unwrap();
            let ov = v.inner(&v.swap_modes().unwrap()).unwrap();
            prop_assert!((ov.re - 1.0).abs() < 1e-12);
        }
    }
}
