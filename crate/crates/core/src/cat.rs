//! Generalized multi-component cat states `|C_{d,k}(α)⟩ ∝ Σ_q ω^{-kq} |αω^q⟩`.
//!
//! The state lives on photon numbers `n ≡ k (mod d)`, so every closed form here
//! is a sum over that sector of the Poisson law with mean `|α|²`. Only `|α|`
//! enters these sums.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{n_max_for, FockSpace, FockVector, TAIL_BOUND};
use crate::special::ln_factorial;

/// Amplitude used in place of `|α|` when a `k = 0` correlation function would
/// otherwise be `0/0`.
pub const ALPHA_FLOOR: f64 = 1e-8;
/// Highest photon number reached by the sector sums.
const SECTOR_SUM_LIMIT: usize = 1023;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatSpec {
    d: usize,
    k: usize,
    alpha: Complex64,
}

impl CatSpec {
    pub fn new(d: usize, k: usize, alpha: Complex64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("d must be at least 1".into()));
        }
        if k >= d {
            return Err(Error::Parameter(format!("k = {k} must be below d = {d}")));
        }
        if !(alpha.re.is_finite() && alpha.im.is_finite()) {
            return Err(Error::Parameter("alpha must be finite".into()));
        }
        if alpha.norm() == 0.0 && k != 0 {
            return Err(Error::Degenerate { d, k });
        }
        Ok(Self { d, k, alpha })
    }

    /// Real, non-negative amplitude.
    pub fn real(d: usize, k: usize, alpha: f64) -> Result<Self> {
        Self::new(d, k, Complex64::new(alpha, 0.0))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }

    /// `|α|²`.
    pub fn alpha_sq(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    /// `e^{2πi/d}`.
    pub fn omega(&self) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI / self.d as f64)
    }

    /// Same `d`, `k` with the amplitude scaled by `s` (e.g. `√η` after loss).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.d, self.k, self.alpha * s)
    }

    /// Same `d`, `α` in sector `k'` (taken mod d).
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(self.d, k % self.d, self.alpha)
    }
}

/// Poisson weights `e^{-x} xⁿ/n!` for `n ≡ k (mod d)`, as `(n, weight)`.
///
/// Terms are summed until they stop contributing; the list is empty only when
/// `x = 0` and `k ≠ 0`.
pub fn sector_weights(d: usize, k: usize, x: f64) -> Vec<(usize, f64)> {
    if x == 0.0 {
        return if k == 0 { vec![(0, 1.0)] } else { Vec::new() };
    }
    let ln_x = x.ln();
    let mut out = Vec::new();
    let mut total = 0.0;
    let mut n = k;
    while n <= SECTOR_SUM_LIMIT {
        let w = (-x + n as f64 * ln_x - ln_factorial(n)).exp();
        out.push((n, w));
        total += w;
        if n as f64 > x && w <= 1e-20 * total {
            break;
        }
        n += d;
    }
    out
}

/// `M_{d,k}(α) = d² e^{-|α|²} Σ_{n∈S_k} |α|^{2n}/n!`.
pub fn norm_m(spec: &CatSpec) -> f64 {
    let d2 = (spec.d * spec.d) as f64;
    d2 * sector_weights(spec.d, spec.k, spec.alpha_sq())
        .iter()
        .map(|(_, w)| w)
        .sum::<f64>()
}

/// `M_{d,k}(α)` through the coherent-overlap double sum
/// `Σ_{q,q'} ω^{k(q'-q)} ⟨αω^{q'}|αω^q⟩`. Loses relative precision when the
/// result is small; kept as an independent path.
pub fn norm_m_double_sum(spec: &CatSpec) -> f64 {
    let x = spec.alpha_sq();
    let w = spec.omega();
    let mut acc = Complex64::new(0.0, 0.0);
    for q in 0..spec.d {
        for qp in 0..spec.d {
            let phase = w.powi((spec.k * (spec.d + qp - q)) as i32 % spec.d as i32);
            let overlap = ((w.powi((q + spec.d - qp) as i32 % spec.d as i32) - 1.0) * x).exp();
            acc += phase * overlap;
        }
    }
    acc.re
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatMoments {
    pub norm_m: f64,
    pub mean_n: f64,
    pub mean_n2: f64,
    /// `⟨a†a†aa⟩ / ⟨n̂⟩²`.
    pub g2: f64,
    pub mandel_q: f64,
    /// Set when `g2` was taken at `|α| = ALPHA_FLOOR` because `⟨n̂⟩` vanishes.
    pub g2_clamped: bool,
}

fn sector_moments(d: usize, k: usize, x: f64) -> (f64, f64, f64, f64) {
    let terms = sector_weights(d, k, x);
    let (mut s0, mut s1, mut s2, mut f2) = (0.0, 0.0, 0.0, 0.0);
    for (n, w) in terms {
        let n = n as f64;
        s0 += w;
        s1 += n * w;
        s2 += n * n * w;
        // summed separately: s2 - s1 cancels when n = 1 dominates
        f2 += n * (n - 1.0) * w;
    }
    (s0, s1 / s0, s2 / s0, f2 / s0)
}

pub fn cat_moments(spec: &CatSpec) -> Result<CatMoments> {
    let x = spec.alpha_sq();
    let (s0, mean_n, mean_n2, falling2) = sector_moments(spec.d, spec.k, x);
    if !(s0 > 0.0) {
        return Err(Error::Degenerate {
            d: spec.d,
            k: spec.k,
        });
    }
    let norm_m = (spec.d * spec.d) as f64 * s0;
    let (g2, clamped) = if mean_n > 0.0 && x >= ALPHA_FLOOR * ALPHA_FLOOR {
        (falling2 / (mean_n * mean_n), false)
    } else {
        let (_, m, _, f) = sector_moments(spec.d, spec.k, ALPHA_FLOOR * ALPHA_FLOOR);
        (f / (m * m), true)
    };
    Ok(CatMoments {
        norm_m,
        mean_n,
        mean_n2,
        g2,
        mandel_q: mean_n * (g2 - 1.0),
        g2_clamped: clamped,
    })
}

/// `|⟨k|C_{d,k}(α)⟩|² = d² e^{-|α|²} |α|^{2k} / (k! M_{d,k}(α))`.
pub fn fidelity_to_number_state(spec: &CatSpec) -> f64 {
    let weights = sector_weights(spec.d, spec.k, spec.alpha_sq());
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    (weights[0].1 / total).min(1.0)
}

/// `|⟨0|C_{d,k}(α)⟩|²`, zero unless `k = 0`.
pub fn vacuum_overlap_sq(spec: &CatSpec) -> f64 {
    if spec.k != 0 {
        return 0.0;
    }
    let weights = sector_weights(spec.d, 0, spec.alpha_sq());
    weights[0].1 / weights.iter().map(|(_, w)| w).sum::<f64>()
}

/// Number-basis realisation `d e^{-|α|²/2} / √M Σ_{n∈S_k} αⁿ/√n! |n⟩`.
///
/// Fails when more than [`TAIL_BOUND`] of the sector weight lies above `n_max`.
pub fn cat_to_fock(spec: &CatSpec, n_max: usize) -> Result<FockVector> {
    let space = FockSpace::single(n_max)?;
    let x = spec.alpha_sq();
    n_max_for(x)?;
    let weights = sector_weights(spec.d, spec.k, x);
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let tail: f64 = weights
        .iter()
        .filter(|(n, _)| *n > n_max)
        .map(|(_, w)| w)
        .sum();
    if tail / total >= TAIL_BOUND {
        return Err(Error::Truncation(format!(
            "cat state d={}, k={}, |α|²={x} leaves weight {:e} above n_max = {n_max}",
            spec.d,
            spec.k,
            tail / total
        )));
    }
    let phase = spec.alpha.arg();
    let mut amps = vec![Complex64::new(0.0, 0.0); n_max + 1];
    for &(n, w) in weights.iter().filter(|(n, _)| *n <= n_max) {
        amps[n] = Complex64::from_polar((w / total).sqrt(), phase * n as f64);
    }
    FockVector::from_amps(space, amps)
}

/// [`cat_to_fock`] with `n_max` from the truncation rule.
pub fn cat_to_fock_auto(spec: &CatSpec) -> Result<FockVector> {
    cat_to_fock(spec, n_max_for(spec.alpha_sq())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_vector, fidelity};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Independent oracle: the normalised superposition of d coherent vectors.
    fn oracle(spec: &CatSpec, n_max: usize) -> FockVector {
        let w = spec.omega();
        let mut v = FockVector::zeros(FockSpace::single(n_max).unwrap());
        for q in 0..spec.d {
            let coh = coherent_vector(spec.alpha() * w.powu(q as u32), n_max).unwrap();
            let phase = w.powu(((spec.d - q % spec.d) * spec.k % spec.d) as u32);
            v = v.add(&coh.scale(phase)).unwrap();
        }
        v.normalize().unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(CatSpec::real(0, 0, 1.0).is_err());
        assert!(CatSpec::real(4, 4, 1.0).is_err());
        assert_eq!(
            CatSpec::real(4, 1, 0.0),
            Err(Error::Degenerate { d: 4, k: 1 })
        );
        assert!(CatSpec::real(4, 0, 0.0).is_ok());
    }

    #[test]
    fn norm_m_examples() {
        for a in [0.3, 1.0, 2.5] {
            assert!((norm_m(&CatSpec::real(1, 0, a).unwrap()) - 1.0).abs() < 1e-13);
        }
        assert_eq!(norm_m(&CatSpec::real(6, 0, 0.0).unwrap()), 36.0);
        let direct = 2.0 * (1.0 + (-2.0f64).exp());
        let spec = CatSpec::real(2, 0, 1.0).unwrap();
        assert!((norm_m(&spec) - direct).abs() < 1e-13);
        assert!((norm_m_double_sum(&spec) - direct).abs() < 1e-13);
        assert!((direct - 2.270671).abs() < 1e-6);
    }

    #[test]
    fn moments_of_even_and_odd_cats() {
        let even = cat_moments(&CatSpec::real(2, 0, 1.0).unwrap()).unwrap();
        let t = 1f64.tanh();
        assert!((even.mean_n - t).abs() < 1e-13);
        assert!((even.g2 - 1.0 / (t * t)).abs() < 1e-12);
        let odd = cat_moments(&CatSpec::real(2, 1, 1.0).unwrap()).unwrap();
        assert!((odd.mean_n - 1.0 / t).abs() < 1e-13);
        assert!((odd.g2 - t * t).abs() < 1e-12);
        assert!(odd.mandel_q < 0.0);
        let coh = cat_moments(&CatSpec::real(1, 0, 1.0).unwrap()).unwrap();
        assert!((coh.g2 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn moments_match_fock_oracle() {
        for d in [2, 4, 8, 16] {
            for x in [0.25, 1.0, 4.0, 9.0] {
                for k in 0..d.min(5) {
                    let spec = CatSpec::real(d, k, f64::sqrt(x)).unwrap();
                    let m = cat_moments(&spec).unwrap();
                    let v = oracle(&spec, n_max_for(x).unwrap());
                    let n1 = v.expectation_diag(|o| o[0] as f64);
                    let n2 = v.expectation_diag(|o| (o[0] * o[0]) as f64);
                    let f2 = v.expectation_diag(|o| (o[0] * o[0].saturating_sub(1)) as f64);
                    assert!((m.mean_n - n1).abs() <= 1e-10 * n1, "d={d} k={k} x={x}");
                    assert!((m.mean_n2 - n2).abs() <= 1e-10 * n2);
                    assert!(
                        (m.g2 * m.mean_n * m.mean_n - f2).abs() <= 1e-10 * f2.max(1e-300),
                        "d={d} k={k} x={x} {} {f2} {}",
                        m.g2 * m.mean_n * m.mean_n,
                        m.mean_n
                    );
                }
            }
        }
    }

    #[test]
    fn vacuum_limit_clamps_g2() {
        let m = cat_moments(&CatSpec::real(4, 0, 0.0).unwrap()).unwrap();
        assert_eq!(m.mean_n, 0.0);
        assert!(m.g2_clamped && m.g2.is_finite() && m.g2 > 1.0);
        let m = cat_moments(&CatSpec::real(1, 0, 0.0).unwrap()).unwrap();
        assert!((m.g2 - 1.0).abs() < 1e-12, "{}", m.g2);
    }

    #[test]
    fn number_state_fidelity() {
        let spec = CatSpec::real(1, 0, 1.3).unwrap();
        assert!((fidelity_to_number_state(&spec) - (-1.69f64).exp()).abs() < 1e-14);
        let spec = CatSpec::real(4, 0, 1e-4).unwrap();
        assert!((1.0 - fidelity_to_number_state(&spec)).abs() < 1e-8);
        let spec = CatSpec::real(16, 2, 1.0).unwrap();
        let v = oracle(&spec, 36);
        let basis = FockVector::basis(v.space(), [2, 0]).unwrap();
        assert!((fidelity(&basis, &v).unwrap() - fidelity_to_number_state(&spec)).abs() < 1e-12);
        // grows towards 1 with d at fixed α
        let f: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&d| fidelity_to_number_state(&CatSpec::real(d, 1, 1.5).unwrap()))
            .collect();
        assert!(f.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn cats_are_orthonormal_sectors() {
        let n_max = 36;
        let vs: Vec<FockVector> = (0..4)
            .map(|k| cat_to_fock(&CatSpec::new(4, k, c(0.7, 0.7)).unwrap(), n_max).unwrap())
            .collect();
        for (i, a) in vs.iter().enumerate() {
            for (j, b) in vs.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((a.inner(b).unwrap().norm() - expected).abs() < 1e-12);
            }
        }
        let even = cat_to_fock(&CatSpec::real(2, 0, 1.0).unwrap(), n_max).unwrap();
        for n in (1..=n_max).step_by(2) {
            assert_eq!(even.amps()[n].norm(), 0.0);
        }
    }

    #[test]
    fn fock_form_matches_superposition() {
        for (d, k) in [(2, 1), (4, 3), (8, 2)] {
            let spec = CatSpec::new(d, k, c(1.1, -0.4)).unwrap();
            let v = cat_to_fock(&spec, 40).unwrap();
            assert!(1.0 - fidelity(&v, &oracle(&spec, 40)).unwrap() < 1e-12);
            assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_state_from_cat_components() {
        // |αω^q⟩ = d^{-1/2} Σ_k ω^{kq} √(M_k/d) |C_k⟩
        let (d, q, a) = (4, 1, c(1.2, 0.0));
        let n_max = 40;
        let w = Complex64::from_polar(1.0, 2.0 * PI / d as f64);
        let mut v = FockVector::zeros(FockSpace::single(n_max).unwrap());
        for k in 0..d {
            let spec = CatSpec::new(d, k, a).unwrap();
            let coeff =
                w.powu((k * q) as u32) * (norm_m(&spec) / d as f64).sqrt() / (d as f64).sqrt();
            v = v
                .add(&cat_to_fock(&spec, n_max).unwrap().scale(coeff))
                .unwrap();
        }
        let target = coherent_vector(a * w.powu(q as u32), n_max).unwrap();
        assert!(1.0 - fidelity(&v, &target).unwrap() < 1e-12);
    }

    #[test]
    fn truncation_is_checked() {
        let spec = CatSpec::real(2, 0, 3.0).unwrap();
        assert!(matches!(cat_to_fock(&spec, 12), Err(Error::Truncation(_))));
    }

    #[test]
    fn g2_ordering_of_k0_over_k1_at_small_amplitude() {
        for d in [4, 8, 16] {
            for i in 1..=20 {
                let a = (0.1 * i as f64).sqrt();
                let g0 = cat_moments(&CatSpec::real(d, 0, a).unwrap()).unwrap().g2;
                let g1 = cat_moments(&CatSpec::real(d, 1, a).unwrap()).unwrap().g2;
                assert!(g0 > g1, "d={d} |α|²={}", a * a);
            }
        }
    }

    #[test]
    fn g2_ordering_reverses_at_large_amplitude() {
        // The k=0 cat is not more bunched than k=1 everywhere: around the
        // point where the two sector means cross, the ordering flips.
        for (d, x) in [(4, 3.0), (8, 5.0), (16, 8.0)] {
            let a = f64::sqrt(x);
            let g0 = cat_moments(&CatSpec::real(d, 0, a).unwrap()).unwrap().g2;
            let g1 = cat_moments(&CatSpec::real(d, 1, a).unwrap()).unwrap().g2;
            assert!(g0 < g1, "d={d} |α|²={x}");
        }
    }

    proptest! {
        #[test]
        fn norms_over_sectors_sum_to_d_squared(d in 1usize..=16, a in 0.0f64..3.0) {
            let total: f64 = (0..d).map(|k| {
                CatSpec::real(d, k, a).map(|s| norm_m(&s)).unwrap_or(0.0)
            }).sum();
            prop_assert!((total - (d * d) as f64).abs() <= 1e-12 * (d * d) as f64);
        }

        #[test]
        fn moments_ignore_the_phase_of_alpha(d in 1usize..=8, r in 0.1f64..2.5, theta in 0.0f64..6.283) {
            let k = d / 2;
            let a = cat_moments(&CatSpec::real(d, k, r).unwrap()).unwrap();
            let b = cat_moments(&CatSpec::new(d, k, Complex64::from_polar(r, theta)).unwrap()).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-13 * x.abs().max(1.0);
            prop_assert!(close(a.norm_m, b.norm_m) && close(a.mean_n, b.mean_n));
            prop_assert!(close(a.mean_n2, b.mean_n2) && close(a.g2, b.g2));
        }

        #[test]
        fn double_sum_agrees_when_well_conditioned(d in 1usize..=16, a in 0.5f64..3.0) {
            for k in 0..d {
                let s = CatSpec::real(d, k, a).unwrap();
                let m = norm_m(&s);
                if m > 1e-2 {
                    prop_assert!((norm_m_double_sum(&s) - m).abs() <= 1e-12 * (d * d) as f64);
                }
            }
        }

        #[test]
        fn second_moment_dominates(d in 1usize..=16, a in 0.05f64..3.0) {
            let m = cat_moments(&CatSpec::real(d, d - 1, a).unwrap()).unwrap();
            prop_assert!(m.mean_n2 >= m.mean_n * m.mean_n * (1.0 - 1e-14));
        }
    }
}
