//! Invariant suite and golden regression behind `catqfi verify`.
//!
//! The report is a pure function of the build and `--tol-scale`: no timings,
//! no paths, fixed check order.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use catqfi::baselines::{noon_continuous, noon_qfi, sql_bound, tmsv_qfi, BaselineKind};
use catqfi::cat::{cat_moments, cat_to_fock_auto, norm_m, norm_m_double_sum, CatSpec};
use catqfi::fock::{coherent_vector, fidelity, hermitian_eig, trace_distance};
use catqfi::genscheme::{
    branch_overlaps, bs_stage, bs_target, cpm_stage, end_to_end, heterodyne_condition, GenConfig,
};
use catqfi::loss::{lossy_probe, paper_spectrum, weak_loss_weights};
use catqfi::probe::{build_probe, phase_averaged, probe_moments, probe_moments_double_sum};
use catqfi::qfi::{
    qfi_mixed_paper, qfi_numeric_phase_on_b, qfi_numeric_symmetric, qfi_pure, qfi_pure_g2,
};
use catqfi::sweep::{
    alpha_for_nav, find_crossover, linspace, nav_of, optimal_probe, trace_curve, CurveRequest,
    SweepRow,
};

use crate::commands::{curve_request, curve_table, g2_table};
use crate::emit::{parse_csv, to_csv, Cell, Meta, Table};
use crate::{Failure, Range};

pub struct Report {
    pub text: String,
    pub failed: usize,
    pub total: usize,
}

/// Relative golden tolerance per value.
pub const GOLDEN_TOL: f64 = 1e-9;
/// Largest allowed |closed-form − numeric| / numeric mixed QFI at the
/// calibration point; observed 2.3e-3.
pub const CALIBRATION_TOL: f64 = 0.02;
/// Upper end of the low-N_av region where k=0 must beat TMSV.
pub const LOW_NAV: f64 = 1.0;
/// Largest |α|² at which g²(0) of k=0 must exceed that of k=1.
pub const G2_ORDERED_UP_TO: f64 = 2.0;

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

struct Suite {
    scale: f64,
    lines: Vec<String>,
    failed: usize,
    total: usize,
}

impl Suite {
    fn new(scale: f64) -> Self {
        Suite {
            scale,
            lines: Vec::new(),
            failed: 0,
            total: 0,
        }
    }

    fn record(&mut self, ok: bool, name: &str, detail: String) {
        self.total += 1;
        if !ok {
            self.failed += 1;
        }
        self.lines.push(format!(
            "{} {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        ));
    }

    /// Passes when `value <= limit * tol_scale`.
    fn within(&mut self, name: &str, value: f64, limit: f64) {
        let lim = limit * self.scale;
        self.record(value <= lim, name, format!("{value:.3e} <= {lim:.3e}"));
    }

    fn holds(&mut self, name: &str, ok: bool, detail: String) {
        self.record(ok, name, detail);
    }

    fn error(&mut self, name: &str, e: impl std::fmt::Display) {
        self.record(false, name, format!("error: {e}"));
    }

    fn note(&mut self, text: String) {
        self.lines.push(format!("NOTE {text}"));
    }

    /// Run a check body; an `Err` becomes a failed check.
    fn run(&mut self, name: &str, body: impl FnOnce(&mut Suite) -> catqfi::Result<()>) {
        if let Err(e) = body(self) {
            self.error(name, e);
        }
    }
}

fn fock_checks(s: &mut Suite) {
    s.run("fock/coherent-norm", |s| {
        let mut worst: f64 = 0.0;
        for a in [0.5, 1.0, 2.0, 3.0] {
            let n = catqfi::fock::n_max_for(a * a)?;
            worst = worst.max((coherent_vector(Complex64::new(a, 0.3), n)?.norm_sqr() - 1.0).abs());
        }
        s.within("fock/coherent-norm", worst, 1e-12);
        Ok(())
    });
    s.run("fock/beamsplitter-unitary", |s| {
        let v = build_probe(&CatSpec::real(4, 1, 1.2)?)?.to_fock()?;
        let out = v.beamsplitter_50_50()?;
        s.within(
            "fock/beamsplitter-unitary",
            (out.norm_sqr() - v.norm_sqr()).abs(),
            1e-12,
        );
        Ok(())
    });
    s.run("fock/loss-trace", |s| {
        let rho = build_probe(&CatSpec::real(4, 1, 1.2)?)?
            .to_fock()?
            .projector();
        let out = rho.loss_channel(0.8, 0)?.loss_channel(0.8, 1)?;
        s.within("fock/loss-trace", (out.trace().re - 1.0).abs(), 1e-12);
        s.within("fock/loss-hermitian", out.hermitian_defect(), 1e-12);
        let low = hermitian_eig(&out)?
            .eigenvalues()
            .into_iter()
            .fold(0.0, f64::min);
        s.within("fock/loss-positive", -low, 1e-10);
        Ok(())
    });
}

fn identity_grid() -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for d in [1usize, 2, 4, 8, 16] {
        for k in 0..d.min(5) {
            for x in [0.25f64, 1.0, 4.0, 9.0] {
                out.push((d, k, x));
            }
        }
    }
    out
}

fn cat_checks(s: &mut Suite) {
    s.run("cat/sector-closure", |s| {
        let mut worst: f64 = 0.0;
        for d in [2usize, 4, 8, 16] {
            for x in [0.25f64, 1.0, 4.0, 9.0] {
                let sum: f64 = (0..d)
                    .map(|k| norm_m(&CatSpec::real(d, k, x.sqrt()).unwrap()))
                    .sum();
                worst = worst.max(rel(sum, (d * d) as f64));
            }
        }
        s.within("cat/sector-closure", worst, 1e-12);
        Ok(())
    });
    s.run("cat/moments-vs-fock", |s| {
        let (mut wm, mut wn) = (0.0_f64, 0.0_f64);
        for (d, k, x) in identity_grid() {
            let spec = CatSpec::real(d, k, x.sqrt())?;
            wm = wm.max(rel(norm_m(&spec), norm_m_double_sum(&spec)));
            let m = cat_moments(&spec)?;
            let v = cat_to_fock_auto(&spec)?;
            let n1 = v.expectation_diag(|o| o[0] as f64);
            let n2 = v.expectation_diag(|o| (o[0] * o[0]) as f64);
            let f2 = v.expectation_diag(|o| (o[0] * o[0].saturating_sub(1)) as f64);
            wn = wn
                .max(rel(m.mean_n, n1))
                .max(rel(m.mean_n2, n2))
                .max(rel(m.g2, f2 / (n1 * n1)));
        }
        s.within("cat/norm-double-sum", wm, 1e-10);
        s.within("cat/moments-vs-fock", wn, 1e-10);
        Ok(())
    });
    s.run("cat/g2-k0-above-k1", |s| {
        let mut bad = 0;
        let mut onset = Vec::new();
        let xs = linspace(0.1, 14.0, 140);
        for d in [4usize, 8, 16] {
            let mut first = None;
            for &x in &xs {
                let g0 = cat_moments(&CatSpec::real(d, 0, x.sqrt())?)?.g2;
                let g1 = cat_moments(&CatSpec::real(d, 1, x.sqrt())?)?.g2;
                if !(g0 > g1) {
                    first.get_or_insert(x);
                    if x <= G2_ORDERED_UP_TO {
                        bad += 1;
                    }
                }
            }
            onset.push(format!("d={d}: {}", first.map(|x| format!("{x:.2}")).unwrap_or("none".into())));
        }
        s.holds(
            "cat/g2-k0-above-k1",
            bad == 0,
            format!("{bad} violations with alpha_sq <= {G2_ORDERED_UP_TO}"),
        );
        s.note(format!(
            "g2 ordering k=0 over k=1 first fails at alpha_sq {}; both curves approach 1 beyond; recorded as a known conflict",
            onset.join(", ")
        ));
        Ok(())
    });
    s.run("cat/coherent-g2", |s| {
        let mut worst: f64 = 0.0;
        for x in [0.25f64, 1.0, 4.0, 9.0] {
            worst = worst.max((cat_moments(&CatSpec::real(1, 0, f64::sqrt(x))?)?.g2 - 1.0).abs());
        }
        s.within("cat/coherent-g2", worst, 1e-12);
        Ok(())
    });
}

/// Relative rounding amplification of the coherent-overlap double sum for
/// `⟨n̂_b⟩`: every term is bounded by `|α|²`, so `κ = d²|α|² / |sum|`.
fn double_sum_conditioning(spec: &CatSpec, mean_nb: f64) -> catqfi::Result<f64> {
    let scale = build_probe(spec)?.norm_n().powi(2) / norm_m(spec);
    let x = spec.alpha_sq();
    let d = spec.d() as f64;
    Ok(d * d * x * (1.0 + x) * scale / mean_nb)
}

fn probe_checks(s: &mut Suite) {
    s.run("probe/moments", |s| {
        let (mut wd, mut wf, mut wn) = (0.0_f64, 0.0_f64, 0.0_f64);
        let (mut ill, mut ill_ratio, mut total) = (0usize, 0.0_f64, 0usize);
        for (d, k, x) in identity_grid() {
            let spec = CatSpec::real(d, k, x.sqrt())?;
            let a = probe_moments(&spec)?;
            let b = probe_moments_double_sum(&spec)?;
            let err = rel(a.mean_nb, b.mean_nb).max(rel(a.mean_nb2, b.mean_nb2));
            let kappa = double_sum_conditioning(&spec, a.mean_nb)?;
            total += 1;
            if kappa * f64::EPSILON <= 1e-12 {
                wd = wd.max(err);
            } else {
                ill += 1;
                ill_ratio = ill_ratio.max(err / (kappa * f64::EPSILON));
            }
            let p = build_probe(&spec)?;
            let v = p.to_fock()?;
            wf = wf
                .max(rel(a.mean_nb, v.expectation_diag(|o| o[1] as f64)))
                .max(rel(
                    a.mean_nb2,
                    v.expectation_diag(|o| (o[1] * o[1]) as f64),
                ));
            wn = wn
                .max((v.norm_sqr() - 1.0).abs())
                .max(rel(p.n_av(), a.mean_nb));
        }
        s.within(
            &format!(
                "probe/double-sum ({} of {total} well-conditioned points)",
                total - ill
            ),
            wd,
            1e-10,
        );
        s.within(
            "probe/double-sum rounding (error / kappa eps, ill-conditioned points)",
            ill_ratio,
            16.0,
        );
        s.within("probe/moments-vs-fock", wf, 1e-10);
        s.within("probe/normalisation", wn, 1e-10);
        Ok(())
    });
}

fn qfi_checks(s: &mut Suite) {
    s.run("qfi/variance-vs-g2-form", |s| {
        let mut worst: f64 = 0.0;
        for (d, k, x) in identity_grid() {
            let spec = CatSpec::real(d, k, x.sqrt())?;
            worst = worst.max(rel(qfi_pure(&spec)?.f_q, qfi_pure_g2(&spec)?.f_q));
        }
        s.within("qfi/variance-vs-g2-form", worst, 1e-10);
        Ok(())
    });
    s.run("qfi/noon-limit", |s| {
        let (mut wf, mut wn) = (0.0_f64, 0.0_f64);
        for k in [1usize, 2, 4] {
            let spec = CatSpec::real(8, k, 1e-3)?;
            let kk = (k * k) as f64;
            wf = wf.max((qfi_pure(&spec)?.f_q - kk).abs() / kk);
            wn = wn.max((build_probe(&spec)?.n_av() - k as f64 / 2.0).abs());
        }
        s.within("qfi/noon-limit-f_q", wf, 1e-4);
        s.within("qfi/noon-limit-n_av", wn, 1e-4);
        Ok(())
    });
    s.run("qfi/beats-noon-above-k-half", |s| {
        let mut bad = 0;
        let mut total = 0;
        for k in [1usize, 2, 4] {
            for t in linspace(k as f64 / 2.0 + 0.05, 4.0, 40) {
                let a = alpha_for_nav(8, k, t)?;
                total += 1;
                if qfi_pure(&CatSpec::real(8, k, a)?)?.f_q < (k * k) as f64 {
                    bad += 1;
                }
            }
        }
        s.holds(
            "qfi/beats-noon-above-k-half",
            bad == 0,
            format!("{bad} of {total} points below k^2"),
        );
        Ok(())
    });
    s.run("qfi/loss-reduces-qfi", |s| {
        let mut bad = 0;
        for (d, k, a) in [(4usize, 1usize, 1.0), (8, 0, 1.0), (8, 1, 1.2), (2, 0, 1.5)] {
            let spec = CatSpec::real(d, k, a)?;
            let pure = qfi_pure(&spec)?.f_q;
            for eta in [0.8, 0.95] {
                let lp = lossy_probe(&spec, eta, 0.0)?;
                if qfi_numeric_phase_on_b(lp.oracle_form())?.f_q > pure * (1.0 + 1e-9) {
                    bad += 1;
                }
            }
        }
        s.holds(
            "qfi/loss-reduces-qfi",
            bad == 0,
            format!("{bad} of 8 lossy states exceed the pure value"),
        );
        Ok(())
    });
    s.run("qfi/generator-invariance", |s| {
        let mut worst: f64 = 0.0;
        let mut vs_g2 = Vec::new();
        for (d, k, a) in [(2usize, 1usize, 1.0), (4, 0, 1.0), (8, 1, 1.2)] {
            let spec = CatSpec::real(d, k, a)?;
            let pa = phase_averaged(&spec)?;
            let rho = pa.density(pa.n_max())?;
            let fb = qfi_numeric_phase_on_b(&rho)?.f_q;
            let fs = qfi_numeric_symmetric(&rho)?.f_q;
            worst = worst.max(rel(fb, fs));
            vs_g2.push(format!("d={d} k={k} alpha={a}: {fb:.6} vs {:.6}", qfi_pure_g2(&spec)?.f_q));
        }
        s.within("qfi/generator-invariance", worst, 1e-6);
        s.note(format!(
            "phase-averaged QFI is generator independent but differs from the pure-state g2 form ({}); \
             recorded as a known conflict",
            vs_g2.join("; ")
        ));
        Ok(())
    });
}

fn loss_checks(s: &mut Suite) {
    s.run("loss/closed-form-vs-kraus", |s| {
        let mut worst: f64 = 0.0;
        for d in [2usize, 4, 8] {
            for k in (0..3).filter(|&k| k < d) {
                for a in [0.5, 1.0, 2.0] {
                    for eta in [0.8, 0.9, 0.99] {
                        for phi in [0.0, 0.3] {
                            let lp = lossy_probe(&CatSpec::real(d, k, a)?, eta, phi)?;
                            worst = worst.max(trace_distance(lp.paper_form(), lp.oracle_form())?);
                        }
                    }
                }
            }
        }
        s.within("loss/closed-form-vs-kraus", worst, 1e-9);
        Ok(())
    });
    s.run("loss/weak-form", |s| {
        let (mut k0, mut any, mut bound) = (0.0_f64, 0.0_f64, 0.0_f64);
        let mut worst_at = String::new();
        for (d, k, a, eta) in weak_grid() {
            let spec = CatSpec::real(d, k, a)?;
            let lp = lossy_probe(&spec, eta, 0.3)?;
            let err = trace_distance(&lp.weak_form()?, lp.oracle_form())?;
            let eps = a * a * (1.0 - eta);
            let eps_n = cat_moments(&spec)?.mean_n * (1.0 - eta);
            if k == 0 {
                k0 = k0.max(err);
            }
            if err > any {
                any = err;
                worst_at = format!("d={d} k={k} alpha={a} eta={eta}");
            }
            bound = bound.max(err / eps.max(eps_n).powi(2));
        }
        s.within("loss/weak-form-error k=0, alpha_sq(1-eta) <= 0.1", k0, 5e-3);
        s.within("loss/weak-form-error / max(alpha_sq, <n>)^2 (1-eta)^2", bound, 1.5);
        s.note(format!(
            "weak-loss trace-distance error reaches {any:.3e} at {worst_at} with alpha_sq(1-eta) <= 0.1; \
             the expansion parameter for k > 0 is <n>(1-eta); recorded as a known conflict"
        ));
        let spec = CatSpec::real(4, 1, 1.0)?;
        let err = |loss: f64| -> catqfi::Result<f64> {
            let lp = lossy_probe(&spec, 1.0 - loss, 0.0)?;
            trace_distance(&lp.weak_form()?, lp.oracle_form())
        };
        let mut dev: f64 = 0.0;
        for loss in [0.0125, 0.025, 0.05] {
            let ratio = err(2.0 * loss)? / err(loss)?;
            dev = dev.max((ratio / 4.0).ln().abs());
        }
        s.within("loss/weak-form-quadratic (|ln(ratio/4)|)", dev, 1.5f64.ln());
        Ok(())
    });
    s.run("loss/mixture-weight-monotone", |s| {
        let mut last = 0.0;
        let mut ok = true;
        for i in 1..=10 {
            let (_, w) = weak_loss_weights(&CatSpec::real(8, 1, 0.3 * i as f64)?, 0.9)?;
            ok &= w > last;
            last = w;
        }
        s.holds(
            "loss/mixture-weight-monotone",
            ok,
            "alpha = 0.3..3.0, d=8, eta=0.9".into(),
        );
        Ok(())
    });
}

/// Loss grid points with `|α|²(1-η) <= 0.1`.
pub fn weak_grid() -> Vec<(usize, usize, f64, f64)> {
    let mut out = Vec::new();
    for d in [2usize, 4, 8] {
        for k in (0..3).filter(|&k| k < d) {
            for a in [0.5, 1.0, 2.0] {
                for eta in [0.8, 0.9, 0.99] {
                    if a * a * (1.0 - eta) <= 0.1 + 1e-12 {
                        out.push((d, k, a, eta));
                    }
                }
            }
        }
    }
    out
}

fn spectral_checks(s: &mut Suite) {
    s.run("spectrum/closure", |s| {
        let mut sum_err: f64 = 0.0;
        let mut min_lambda = f64::INFINITY;
        let mut where_min = String::new();
        for d in [2usize, 4, 8] {
            for k in (0..3).filter(|&k| k < d) {
                for a in [0.5, 1.0, 2.0] {
                    for eta in [0.8, 0.9, 0.99] {
                        if a * a * (1.0 - eta) >= 1.0 {
                            continue;
                        }
                        let sp = paper_spectrum(&lossy_probe(&CatSpec::real(d, k, a)?, eta, 0.3)?)?;
                        sum_err = sum_err.max((sp.lambda.iter().sum::<f64>() - 1.0).abs());
                        for l in sp.lambda {
                            if l < min_lambda {
                                min_lambda = l;
                                where_min = format!("d={d} k={k} alpha={a} eta={eta}");
                            }
                        }
                    }
                }
            }
        }
        s.within("spectrum/sum", sum_err, 1e-10);
        s.note(format!(
            "closed-form second eigenvalue is negative for every eta < 1 (smallest {min_lambda:.3e} at {where_min}); \
             recorded as a known conflict"
        ));
        let sp = paper_spectrum(&lossy_probe(&CatSpec::real(8, 0, 1.0)?, 1.0, 0.3)?)?;
        let dev = (sp.lambda[0] - 1.0).abs().max(sp.lambda[1..].iter().fold(0.0, |m, l| m.max(l.abs())));
        s.within("spectrum/unit-transmission-collapse", dev, 1e-10);
        Ok(())
    });
    s.run("spectrum/calibration", |s| {
        let lp = lossy_probe(&CatSpec::real(8, 1, 1.0)?, 0.9, 0.0)?;
        let paper = qfi_mixed_paper(&lp)?.f_q;
        let numeric = qfi_numeric_phase_on_b(lp.oracle_form())?.f_q;
        s.within(
            "spectrum/calibration d=8 k=1 alpha=1 eta=0.9",
            rel(paper, numeric),
            CALIBRATION_TOL,
        );
        Ok(())
    });
}

fn baseline_checks(s: &mut Suite) {
    s.run("baselines/noon-exact", |s| {
        let mut worst: f64 = 0.0;
        for k in 1..=6usize {
            worst = worst.max(rel(noon_qfi(k, 1.0)?.f_q, (k * k) as f64));
        }
        s.within("baselines/noon-exact", worst, 1e-14);
        Ok(())
    });
    s.run("baselines/noon-lossy", |s| {
        let f = noon_qfi(4, 0.9)?.f_q;
        s.within(
            "baselines/noon-lossy vs k^2 eta^k",
            rel(f, 16.0 * 0.9f64.powi(4)),
            1e-6,
        );
        s.within(
            "baselines/noon-continuous",
            rel(noon_continuous(2.0, 0.9)?, 16.0 * 0.9f64.powi(4)),
            1e-14,
        );
        Ok(())
    });
    s.run("baselines/tmsv-lossless", |s| {
        let mut worst: f64 = 0.0;
        for sh2 in [0.25f64, 1.0, 2.0] {
            let r = sh2.sqrt().asinh();
            let (q, n) = tmsv_qfi(r, 1.0)?;
            worst = worst.max(rel(q.f_q, 4.0 * n * (n + 1.0))).max(rel(n, sh2));
        }
        s.within("baselines/tmsv-lossless", worst, 1e-8);
        let (q, _) = tmsv_qfi(1f64.asinh(), 0.9)?;
        s.holds(
            "baselines/tmsv-lossy-below-8",
            q.f_q < 8.0,
            format!("{:.6}", q.f_q),
        );
        s.within(
            "baselines/sql",
            rel(sql_bound(2.0)?, 2.0f64.sqrt().recip()),
            1e-15,
        );
        Ok(())
    });
}

fn rows_of<'a>(rows: &'a [SweepRow], d: usize, k: usize, method: &str) -> Vec<&'a SweepRow> {
    rows.iter()
        .filter(|r| r.d == d && r.k == k && r.method.starts_with(method))
        .collect()
}

fn sweep_checks(s: &mut Suite) {
    s.run("sweep/inversion-round-trip", |s| {
        let mut worst: f64 = 0.0;
        for k in 0..4usize {
            for t in linspace(0.05, 4.0, 120) {
                if t <= k as f64 / 2.0 {
                    continue;
                }
                worst = worst.max((nav_of(8, k, alpha_for_nav(8, k, t)?)? - t).abs());
            }
        }
        s.within("sweep/inversion-round-trip", worst, 1e-9);
        Ok(())
    });
    s.run("sweep/lossless-grid", |s| {
        let out = trace_curve(&CurveRequest::default())?;
        let f = |d: usize, k: usize, n: f64| {
            out.rows
                .iter()
                .find(|r| r.d == d && r.k == k && r.n_av == n)
                .map(|r| r.f_q)
        };
        let grid = CurveRequest::default().grid();
        let ds = [2usize, 4, 8, 16];
        let (mut up, mut pairs) = (0usize, 0usize);
        let (mut viol, mut cmp) = (0usize, 0usize);
        let mut first = None;
        for &n in &grid {
            for k in 0..4 {
                for w in ds.windows(2) {
                    if let (Some(a), Some(b)) = (f(w[0], k, n), f(w[1], k, n)) {
                        pairs += 1;
                        up += (b > a) as usize;
                    }
                }
            }
            for &d in &ds {
                let Some(f0) = f(d, 0, n) else { continue };
                for k in 1..4 {
                    if let Some(fk) = f(d, k, n) {
                        cmp += 1;
                        if fk > f0 {
                            viol += 1;
                            first.get_or_insert((d, k, n));
                        }
                    }
                }
            }
        }
        let frac = up as f64 / pairs as f64;
        s.holds("sweep/d-trend", frac >= 0.8, format!("F_Q rises with d on {up} of {pairs} comparisons ({:.1}%)", 100.0 * frac));
        let first = first.map(|(d, k, n)| format!("first at d={d} k={k} n_av={n}")).unwrap_or_default();
        s.note(format!(
            "lossless k=0 dominance fails at {viol} of {cmp} comparisons {first}; recorded as a known conflict"
        ));
        Ok(())
    });
    s.run("sweep/lossy-orderings", |s| {
        let mut req = CurveRequest {
            d_list: vec![8],
            k_list: vec![0, 1],
            eta: 0.9,
            points: 40,
            ..CurveRequest::default()
        };
        req.baselines = [BaselineKind::Noon, BaselineKind::Tmsv, BaselineKind::Sql]
            .into_iter()
            .collect();
        let out = trace_curve(&req)?;
        let rows = &out.rows;
        let noon = rows_of(rows, 0, 0, "noon");
        let tmsv = rows_of(rows, 0, 0, "tmsv");
        let sql = rows_of(rows, 0, 0, "sql");
        let at = |v: &[&SweepRow], n: f64| v.iter().find(|r| r.n_av == n).map(|r| r.f_q);
        let (mut bad_noon, mut bad_sql, mut bad_tmsv, mut seen) = (0, 0, 0, 0);
        for k in [0usize, 1] {
            for r in rows_of(rows, 8, k, "mixed_numeric") {
                seen += 1;
                bad_noon += (at(&noon, r.n_av).is_some_and(|f| r.f_q <= f)) as usize;
                bad_sql += (at(&sql, r.n_av).is_some_and(|f| r.f_q <= f)) as usize;
                if k == 0 && r.n_av <= LOW_NAV {
                    bad_tmsv += (at(&tmsv, r.n_av).is_some_and(|f| r.f_q <= f)) as usize;
                }
            }
        }
        s.holds(
            "sweep/cat-beats-noon",
            bad_noon == 0,
            format!("{bad_noon} of {seen} cat rows at or below NOON"),
        );
        s.holds(
            "sweep/cat-beats-sql",
            bad_sql == 0,
            format!("{bad_sql} of {seen} cat rows at or below SQL"),
        );
        s.holds(
            "sweep/k0-beats-tmsv-low-nav",
            bad_tmsv == 0,
            format!("{bad_tmsv} k=0 rows with n_av <= {LOW_NAV} at or below TMSV"),
        );
        let tmsv_sql = tmsv
            .iter()
            .filter(|r| at(&sql, r.n_av).is_some_and(|f| r.f_q <= f))
            .count();
        s.holds(
            "sweep/tmsv-beats-sql",
            tmsv_sql == 0,
            format!("{tmsv_sql} TMSV rows at or below SQL"),
        );
        Ok(())
    });
    s.run("sweep/crossover", |s| {
        let coarse = crossover_at(0.9, 40)?;
        let fine = crossover_at(0.9, 80)?;
        match (coarse, fine) {
            (Some(a), Some(b)) => {
                s.holds("sweep/crossover-exists", true, format!("n_av = {b:.6}"));
                s.within("sweep/crossover-stable", (a - b).abs(), 1e-4);
            }
            _ => s.holds(
                "sweep/crossover-exists",
                false,
                "no k=0/k=1 crossover at eta=0.9, d=8".into(),
            ),
        }
        Ok(())
    });
    s.run("sweep/optimal-low-nav", |s| {
        let best = optimal_probe(0.3, 0.9, 8, 3)?;
        s.holds(
            "sweep/optimal-low-nav",
            best.k == 0,
            format!("selected d={} k={}", best.d, best.k),
        );
        Ok(())
    });
}

fn crossover_at(eta: f64, points: usize) -> catqfi::Result<Option<f64>> {
    let req = CurveRequest {
        d_list: vec![8],
        k_list: vec![0, 1],
        eta,
        points,
        ..CurveRequest::default()
    };
    let out = trace_curve(&req)?;
    find_crossover(&out.rows, 0, 1)
}

fn genscheme_checks(s: &mut Suite) {
    s.run("genscheme/beamsplitter", |s| {
        let mut worst: f64 = 0.0;
        for a in [1.0, 2.0] {
            let alpha = Complex64::new(a, 0.0);
            worst = worst.max(1.0 - fidelity(&bs_stage(alpha)?, &bs_target(alpha)?)?);
        }
        s.within("genscheme/beamsplitter-infidelity", worst, 1e-10);
        Ok(())
    });
    s.run("genscheme/heralding", |s| {
        let (d, beta) = (4usize, 6.0);
        let alpha = Complex64::new(1.0, 0.0);
        let state = cpm_stage(alpha, beta, d)?;
        let mut coef: f64 = 0.0;
        for (k, ov) in branch_overlaps(&state, alpha, beta, d)?.iter().enumerate() {
            coef =
                coef.max((ov.norm() - norm_m(&CatSpec::new(d, k, alpha)?).sqrt() / d as f64).abs());
        }
        s.within("genscheme/branch-coefficients", coef, 1e-10);
        let rep = heterodyne_condition(&state, alpha, d, beta, 10_000, 7)?;
        s.within(
            "genscheme/probability-closure",
            (rep.total_probability - 1.0).abs(),
            1e-9,
        );
        let (mut dp, mut inf, mut z) = (0.0_f64, 0.0_f64, 0.0_f64);
        for (o, &c) in rep.outcomes.iter().zip(&rep.counts) {
            dp = dp.max((o.probability - o.predicted.unwrap_or(f64::NAN)).abs());
            inf = inf.max(1.0 - o.conditional_fidelity.unwrap_or(0.0));
            z = z.max(z_score(c, rep.shots, o.probability));
        }
        s.within("genscheme/probabilities-vs-sector-weights", dp, 1e-6);
        s.within("genscheme/conditional-infidelity", inf, 1e-3);
        s.within("genscheme/sampled-frequencies (sigma)", z, 3.0);
        let mut last = f64::INFINITY;
        let mut ok = true;
        for b in [4.0, 6.0, 8.0] {
            let l =
                heterodyne_condition(&cpm_stage(alpha, b, d)?, alpha, d, b, 1, 0)?.max_leakage();
            ok &= l < last;
            last = l;
        }
        s.holds(
            "genscheme/leakage-falls-with-beta",
            ok,
            "beta in {d, 1.5d, 2d}, d=4".into(),
        );
        Ok(())
    });
    s.run("genscheme/end-to-end", |s| {
        let cfg = GenConfig::new(2, Complex64::new(1.0, 0.0), Some(4.0), 10_000, 7)?;
        let rep = end_to_end(&cfg)?;
        s.within("genscheme/end-to-end-closure", (rep.total_probability - 1.0).abs(), 1e-9);
        let mut z: f64 = 0.0;
        for (o, &c) in rep.outcomes.iter().zip(&rep.counts) {
            z = z.max(z_score(c, rep.shots, o.probability));
        }
        s.within("genscheme/end-to-end-frequencies (sigma)", z, 3.0);
        let vac = rep.outcomes.iter().find(|o| o.k_observed == [0, 0]);
        let f00 = vac.and_then(|o| o.conditional_fidelity).unwrap_or(0.0);
        s.within("genscheme/end-to-end-vacuum-herald-infidelity", 1.0 - f00, 1e-2);
        let matched: Vec<String> = rep
            .outcomes
            .iter()
            .filter(|o| o.k_observed.len() == 2 && o.k_observed[0] == o.k_observed[1] && o.k_observed[0] != 0)
            .map(|o| {
                format!(
                    "({0},{0}) P={1:.3e} F={2:.3e}",
                    o.k_observed[0],
                    o.probability,
                    o.conditional_fidelity.unwrap_or(0.0)
                )
            })
            .collect();
        s.note(format!(
            "matched nonzero heralds are rare and do not reach the entangled target ({}); recorded as a known conflict",
            matched.join("; ")
        ));
        Ok(())
    });
}

fn z_score(count: u64, shots: u64, p: f64) -> f64 {
    let n = shots as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    let dev = (count as f64 - n * p).abs();
    if sd == 0.0 {
        if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        dev / sd
    }
}

/// One golden file: name, command tag, config echo and freshly computed rows.
pub struct Golden {
    pub name: &'static str,
    pub meta: Meta,
    pub table: Table,
}

fn cfg(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    v.sort();
    v
}

fn range(min: f64, max: f64, points: usize) -> Range {
    Range { min, max, points }
}

fn curve_golden(
    name: &'static str,
    k: &[usize],
    eta: f64,
    nav: Range,
    bl: &[BaselineKind],
) -> Result<Golden, Failure> {
    let req = curve_request(&[8], k, eta, nav, bl, false);
    let (table, notes, _) = curve_table(&req)?;
    let tags: Vec<&str> = bl.iter().map(|b| b.tag()).collect();
    let ks: Vec<String> = k.iter().map(|k| k.to_string()).collect();
    Ok(Golden {
        name,
        meta: Meta {
            command: "curve".into(),
            config: cfg(&[
                ("baselines", tags.join(",")),
                ("d", "8".into()),
                ("eta", eta.to_string()),
                ("format", "csv".into()),
                ("k", ks.join(",")),
                ("nav", nav.to_string()),
                ("closed-form-spectrum", "false".into()),
            ]),
            notes,
        },
        table,
    })
}

fn crossover_golden() -> Result<Golden, Failure> {
    let mut rows = Vec::new();
    for (eta, points) in [(1.0, 40usize), (1.0, 80), (0.9, 40), (0.9, 80)] {
        let c = crossover_at(eta, points)?;
        rows.push(vec![
            Cell::Int(8),
            Cell::Float(eta),
            Cell::Int(0),
            Cell::Int(1),
            Cell::Int(points as u64),
            c.map(Cell::Float)
                .unwrap_or_else(|| Cell::Text("none".into())),
        ]);
    }
    Ok(Golden {
        name: "crossover.csv",
        meta: Meta {
            command: "crossover".into(),
            config: cfg(&[
                ("d", "8".into()),
                ("k", "0,1".into()),
                ("nav", "0.05:4:<points>".into()),
            ]),
            notes: vec![],
        },
        table: Table {
            header: vec!["d", "eta", "k_a", "k_b", "points", "n_av_cross"],
            rows,
        },
    })
}

fn genscheme_golden() -> Result<Golden, Failure> {
    let mut rows = Vec::new();
    let opt = |x: Option<f64>| x.map(Cell::Float).unwrap_or_else(|| Cell::Text("-".into()));
    let alpha = Complex64::new(1.0, 0.0);
    let single = heterodyne_condition(&cpm_stage(alpha, 6.0, 4)?, alpha, 4, 6.0, 10_000, 7)?;
    let joint = end_to_end(&GenConfig::new(2, alpha, Some(4.0), 10_000, 7)?)?;
    for (tag, d, beta, rep) in [("single", 4u64, 6.0, &single), ("joint", 2, 4.0, &joint)] {
        for (o, &c) in rep.outcomes.iter().zip(&rep.counts) {
            let kb = o
                .k_observed
                .get(1)
                .map(|&k| Cell::Int(k as u64))
                .unwrap_or_else(|| Cell::Text("-".into()));
            rows.push(vec![
                Cell::Text(tag.into()),
                Cell::Int(d),
                Cell::Float(beta),
                Cell::Int(o.k_observed[0] as u64),
                kb,
                Cell::Float(o.probability),
                opt(o.predicted),
                opt(o.conditional_fidelity),
                Cell::Float(o.leakage),
                Cell::Int(c),
            ]);
        }
    }
    Ok(Golden {
        name: "genscheme.csv",
        meta: Meta {
            command: "genscheme".into(),
            config: cfg(&[
                ("alpha", "1".into()),
                ("seed", "7".into()),
                ("shots", "10000".into()),
            ]),
            notes: vec![],
        },
        table: Table {
            header: vec![
                "arms",
                "d",
                "beta",
                "k_a",
                "k_b",
                "probability",
                "predicted",
                "conditional_fidelity",
                "leakage",
                "count",
            ],
            rows,
        },
    })
}

pub fn goldens() -> Result<Vec<Golden>, Failure> {
    let (g2, g2_notes) = g2_table(&[4, 8, 16], &[0, 1], range(0.1, 14.0, 140))?;
    Ok(vec![
        curve_golden(
            "curve_lossless.csv",
            &[0, 1, 2, 3],
            1.0,
            range(0.05, 4.0, 120),
            &[BaselineKind::Noon],
        )?,
        curve_golden(
            "curve_lossy.csv",
            &[0, 1],
            0.9,
            range(0.05, 4.0, 40),
            &[BaselineKind::Noon, BaselineKind::Tmsv, BaselineKind::Sql],
        )?,
        Golden {
            name: "g2.csv",
            meta: Meta {
                command: "g2".into(),
                config: cfg(&[
                    ("alpha-sq", "0.1:14:140".into()),
                    ("d", "4,8,16".into()),
                    ("format", "csv".into()),
                    ("k", "0,1".into()),
                ]),
                notes: g2_notes,
            },
            table: g2,
        },
        crossover_golden()?,
        genscheme_golden()?,
    ])
}

fn embedded(name: &str) -> Option<&'static str> {
    match name {
        "curve_lossless.csv" => Some(include_str!("../golden/curve_lossless.csv")),
        "curve_lossy.csv" => Some(include_str!("../golden/curve_lossy.csv")),
        "g2.csv" => Some(include_str!("../golden/g2.csv")),
        "crossover.csv" => Some(include_str!("../golden/crossover.csv")),
        "genscheme.csv" => Some(include_str!("../golden/genscheme.csv")),
        _ => None,
    }
}

fn cells_match(got: &str, want: &str, tol: f64) -> bool {
    match (got.parse::<f64>(), want.parse::<f64>()) {
        (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => rel(a, b) <= tol,
        _ => got == want,
    }
}

/// First disagreement between computed and golden rows, if any.
fn compare(g: &Golden, text: &str, tol: f64) -> Option<String> {
    let Some((header, want)) = parse_csv(text) else {
        return Some("golden file has no header".into());
    };
    if header != g.table.header {
        return Some(format!(
            "header {} differs from {}",
            header.join(","),
            g.table.header.join(",")
        ));
    }
    let (_, got) = parse_csv(&to_csv(&g.meta, &g.table)).expect("own output parses");
    for (i, (a, b)) in got.iter().zip(&want).enumerate() {
        if a.len() != b.len() {
            return Some(format!(
                "row {} has {} cells, expected {}",
                i + 1,
                b.len(),
                a.len()
            ));
        }
        for (j, (x, y)) in a.iter().zip(b).enumerate() {
            if !cells_match(x, y, tol) {
                return Some(format!(
                    "row {} [{}] column {}: computed {x}, golden {y}",
                    i + 1,
                    b.join(","),
                    header[j]
                ));
            }
        }
    }
    if got.len() != want.len() {
        return Some(format!(
            "{} rows computed, {} in golden file",
            got.len(),
            want.len()
        ));
    }
    None
}

fn golden_checks(s: &mut Suite, dir: Option<&Path>) {
    let sets = match goldens() {
        Ok(g) => g,
        Err(e) => {
            s.error("golden/compute", format!("{e:?}"));
            return;
        }
    };
    let tol = GOLDEN_TOL * s.scale;
    for g in &sets {
        let name = format!("golden/{}", g.name);
        let text = match dir {
            Some(d) => match fs::read_to_string(d.join(g.name)) {
                Ok(t) => t,
                Err(e) => {
                    s.error(&name, format!("cannot read {}: {e}", g.name));
                    continue;
                }
            },
            None => embedded(g.name).unwrap_or_default().to_string(),
        };
        match compare(g, &text, tol) {
            None => s.holds(
                &name,
                true,
                format!("{} rows within {tol:.1e} relative", g.table.rows.len()),
            ),
            Some(why) => s.holds(&name, false, why),
        }
    }
}

pub fn run(tol_scale: f64, golden_dir: Option<&Path>) -> Result<Report, Failure> {
    let mut s = Suite::new(tol_scale);
    fock_checks(&mut s);
    cat_checks(&mut s);
    probe_checks(&mut s);
    qfi_checks(&mut s);
    loss_checks(&mut s);
    spectral_checks(&mut s);
    baseline_checks(&mut s);
    sweep_checks(&mut s);
    genscheme_checks(&mut s);
    golden_checks(&mut s, golden_dir);
    let mut text = format!("{}\ntol-scale: {tol_scale}\n", crate::emit::TOOL);
    for l in &s.lines {
        text.push_str(l);
        text.push('\n');
    }
    text.push_str(&format!(
        "summary: {} passed, {} failed\n",
        s.total - s.failed,
        s.failed
    ));
    Ok(Report {
        text,
        failed: s.failed,
        total: s.total,
    })
}

pub fn regenerate(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Numerical(format!("cannot create {}: {e}", dir.display())))?;
    for g in goldens()? {
        let path = dir.join(g.name);
        fs::write(&path, to_csv(&g.meta, &g.table))
            .map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
