//! Reference probes: NOON states, two-mode squeezed vacuum and the SQL.
//!
//! Photon numbers are per arm (`⟨n̂_b⟩`) throughout, as for the cat probes.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{FockMatrix, FockSpace, FockVector, MODE_CAP};
use crate::qfi::{qfi_numeric_phase_on_b, QfiMethod, QfiResult};
use crate::special::binomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineKind {
    Noon,
    Tmsv,
    Sql,
}

impl BaselineKind {
    pub fn tag(&self) -> &'static str {
        match self {
            BaselineKind::Noon => "noon",
            BaselineKind::Tmsv => "tmsv",
            BaselineKind::Sql => "sql",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "noon" => Ok(BaselineKind::Noon),
            "tmsv" => Ok(BaselineKind::Tmsv),
            "sql" => Ok(BaselineKind::Sql),
            other => Err(Error::Parameter(format!("unknown baseline '{other}'"))),
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Parameter(format!(
            "transmission η = {eta} must lie in (0, 1]"
        )));
    }
    Ok(())
}

/// `(|k,0⟩ + |0,k⟩)/√2`.
pub fn noon_vector(k: usize) -> Result<FockVector> {
    if k == 0 {
        return Err(Error::Parameter(
            "NOON photon number must be at least 1".into(),
        ));
    }
    let space = FockSpace::two_mode(k)?;
    FockVector::basis(space, [k, 0])?
        .add(&FockVector::basis(space, [0, k])?)?
        .normalize()
}

/// QFI of the NOON state: `k²` without loss, numeric oracle on the
/// Kraus-evolved state otherwise.
pub fn noon_qfi(k: usize, eta: f64) -> Result<QfiResult> {
    check_eta(eta)?;
    let v = noon_vector(k)?;
    if eta == 1.0 {
        return Ok(QfiResult::new((k * k) as f64, QfiMethod::PureVariance));
    }
    let rho = v.projector().loss_channel(eta, 0)?.loss_channel(eta, 1)?;
    qfi_numeric_phase_on_b(&rho)
}

/// NOON curve at non-integer `N_av`: `(2N_av)² η^{2N_av}`, the lossy NOON
/// value `k²η^k` continued to `k = 2N_av`.
pub fn noon_continuous(n_av: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if !(n_av > 0.0) {
        return Err(Error::Parameter(format!("N_av = {n_av} must be positive")));
    }
    let k = 2.0 * n_av;
    Ok(k * k * eta.powf(k))
}

/// `δφ = 1/√N_av`.
pub fn sql_bound(n_av: f64) -> Result<f64> {
    if !(n_av > 0.0) || !n_av.is_finite() {
        return Err(Error::Parameter(format!("N_av = {n_av} must be positive")));
    }
    Ok(n_av.sqrt().recip())
}

/// Squeezing `r` with `sinh² r = n_av`.
pub fn tmsv_squeezing_for(n_av: f64) -> f64 {
    n_av.sqrt().asinh()
}

/// Per-mode truncation for a TMSV with mean `n_av` per mode: `⌈20 n_av + 20⌉`.
pub fn tmsv_n_max(n_av: f64) -> Result<usize> {
    let n = (20.0 * n_av + 20.0).ceil() as usize;
    if n > MODE_CAP {
        return Err(Error::Truncation(format!(
            "TMSV with N_av = {n_av} needs n_max = {n}, above the cap of {MODE_CAP}"
        )));
    }
    Ok(n)
}

/// Amplitudes `tanhⁿ r / cosh r` for `n = 0..=n_max`, renormalised.
fn tmsv_amplitudes(r: f64, n_max: usize) -> Vec<f64> {
    let t = r.tanh();
    let mut c: Vec<f64> = (0..=n_max).map(|n| t.powi(n as i32) / r.cosh()).collect();
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    c.iter_mut().for_each(|x| *x /= norm);
    c
}

pub fn tmsv_vector(r: f64) -> Result<FockVector> {
    let n_max = tmsv_n_max(r.sinh().powi(2))?;
    let space = FockSpace::two_mode(n_max)?;
    let mut amps = vec![Complex64::new(0.0, 0.0); space.dim()];
    for (n, c) in tmsv_amplitudes(r, n_max).into_iter().enumerate() {
        amps[space.index([n, n])] = Complex64::new(c, 0.0);
    }
    FockVector::from_amps(space, amps)
}

/// TMSV after loss `η` on both modes.
///
/// Built directly: the Kraus pair `(l, l')` sends `|n,n⟩⟨m,m|` to
/// `|n-l, n-l'⟩⟨m-l, m-l'|`, so each output entry is a single sum over `n`.
/// This avoids hashing the `O(n_max⁴)` contributions the generic channel
/// would produce.
pub fn lossy_tmsv(r: f64, eta: f64) -> Result<FockMatrix> {
    check_eta(eta)?;
    let n_max = tmsv_n_max(r.sinh().powi(2))?;
    let space = FockSpace::two_mode(n_max)?;
    let c = tmsv_amplitudes(r, n_max);
    let levels = n_max + 1;
    // kraus[n][l] = √C(n,l) η^{(n-l)/2} (1-η)^{l/2}
    let kraus: Vec<Vec<f64>> = (0..levels)
        .map(|n| {
            (0..=n)
                .map(|l| {
                    binomial(n, l).sqrt()
                        * eta.sqrt().powi((n - l) as i32)
                        * (1.0 - eta).sqrt().powi(l as i32)
                })
                .collect()
        })
        .collect();
    let nn = n_max as isize;
    let mut entries = Vec::new();
    for a in 0..=nn {
        for b in 0..=nn {
            let delta = a - b;
            let ap_lo = delta.max(0);
            let ap_hi = nn.min(nn + delta);
            for ap in ap_lo..=ap_hi {
                let s = ap - a;
                let n_lo = a.max(b).max(-s);
                let n_hi = nn.min(nn - s);
                let mut acc = 0.0;
                for n in n_lo..=n_hi {
                    let m = n + s;
                    let (nu, mu) = (n as usize, m as usize);
                    let (l, lp) = ((n - a) as usize, (n - b) as usize);
                    acc +=
                        c[nu] * c[mu] * kraus[nu][l] * kraus[mu][l] * kraus[nu][lp] * kraus[mu][lp];
                }
                if acc != 0.0 {
                    let bp = ap - delta;
                    let i = space.index([a as usize, b as usize]);
                    let j = space.index([ap as usize, bp as usize]);
                    entries.push((i, j, Complex64::new(acc, 0.0)));
                }
            }
        }
    }
    FockMatrix::from_sorted_entries(space, entries)
}

/// TMSV QFI together with its per-mode `N_av = sinh² r`.
///
/// Without loss this is `4 Var(n̂_b)` of the truncated state, which must equal
/// `4 N_av (N_av + 1)`; with loss the numeric oracle is used.
pub fn tmsv_qfi(r: f64, eta: f64) -> Result<(QfiResult, f64)> {
    check_eta(eta)?;
    if !(r > 0.0) {
        return Err(Error::Parameter(format!(
            "squeezing r = {r} must be positive"
        )));
    }
    let n_av = r.sinh().powi(2);
    if eta == 1.0 {
        let c = tmsv_amplitudes(r, tmsv_n_max(n_av)?);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (n, a) in c.iter().enumerate() {
            let p = a * a;
            m1 += n as f64 * p;
            m2 += (n * n) as f64 * p;
        }
        return Ok((
            QfiResult::new(4.0 * (m2 - m1 * m1), QfiMethod::PureVariance),
            n_av,
        ));
    }
    Ok((qfi_numeric_phase_on_b(&lossy_tmsv(r, eta)?)?, n_av))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::trace_distance;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn noon_lossless() {
        for k in 1..=6 {
            assert_eq!(noon_qfi(k, 1.0).unwrap().f_q, (k * k) as f64);
        }
        assert!(matches!(noon_qfi(0, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn noon_under_loss() {
        let f = noon_qfi(4, 0.9).unwrap().f_q;
        assert!(f < 16.0);
        assert!(rel(f, 16.0 * 0.9f64.powi(4)) < 1e-6);
        for k in [1usize, 2, 4] {
            let a = noon_qfi(k, 1.0).unwrap().f_q;
            let b = noon_qfi(k, 0.95).unwrap().f_q;
            let c = noon_qfi(k, 0.9).unwrap().f_q;
            assert!(a > b && b > c);
            assert!(rel(noon_continuous(k as f64 / 2.0, 0.9).unwrap(), c) < 1e-6);
        }
    }

    #[test]
    fn sql_values() {
        assert_eq!(sql_bound(1.0).unwrap(), 1.0);
        assert_eq!(sql_bound(4.0).unwrap(), 0.5);
        assert!((sql_bound(2.0).unwrap() - 0.70711).abs() < 1e-5);
        assert!(sql_bound(0.0).is_err());
    }

    #[test]
    fn tmsv_lossless_identity() {
        for n_av in [0.05, 0.3, 1.0, 1.5, 2.0] {
            let (res, n) = tmsv_qfi(tmsv_squeezing_for(n_av), 1.0).unwrap();
            assert!(rel(n, n_av) < 1e-12);
            assert!(
                rel(res.f_q, 4.0 * n_av * (n_av + 1.0)) < 1e-8,
                "n_av={n_av}"
            );
        }
        let (res, _) = tmsv_qfi(1e-4, 1.0).unwrap();
        assert!(res.f_q < 1e-6);
    }

    #[test]
    fn tmsv_under_loss() {
        let r = tmsv_squeezing_for(1.0);
        let (res, _) = tmsv_qfi(r, 0.9).unwrap();
        assert!(res.f_q < 8.0 && res.f_q > 4.0);
    }

    #[test]
    fn direct_lossy_tmsv_matches_kraus() {
        let r = tmsv_squeezing_for(0.3);
        let direct = lossy_tmsv(r, 0.8).unwrap();
        let kraus = tmsv_vector(r)
            .unwrap()
            .projector()
            .loss_channel(0.8, 0)
            .unwrap()
            .loss_channel(0.8, 1)
            .unwrap();
        assert!(trace_distance(&direct, &kraus).unwrap() < 1e-12);
        assert!((direct.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tmsv_vector_is_normalised() {
        let v = tmsv_vector(tmsv_squeezing_for(1.0)).unwrap();
        assert!((v.norm_sqr() - 1.0).abs() < 1e-14);
        assert!((v.expectation_diag(|o| o[1] as f64) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn baseline_tags_round_trip() {
        for b in [BaselineKind::Noon, BaselineKind::Tmsv, BaselineKind::Sql] {
            assert_eq!(b.tag().parse::<BaselineKind>().unwrap(), b);
        }
        assert!("coherent".parse::<BaselineKind>().is_err());
    }
}
