use num_complex::Complex64;

use catqfi::baselines::{noon_continuous, sql_bound, tmsv_qfi, tmsv_squeezing_for};
use catqfi::cat::CatSpec;
use catqfi::fock::trace_distance;
use catqfi::genscheme::{end_to_end, GenConfig};
use catqfi::loss::{lossy_probe, lossy_probe_oracle};
use catqfi::probe::build_probe;
use catqfi::qfi::{qfi_mixed_numeric, qfi_mixed_paper, qfi_numeric_phase_on_b, qfi_pure};
use catqfi::sweep::{alpha_for_nav, evaluate_cat, optimal_probe, trace_curve, CurveRequest};

#[test]
fn lossless_numeric_oracle_matches_variance() {
    for (d, k, a) in [(4usize, 0usize, 1.0), (8, 1, 1.3), (2, 1, 0.7)] {
        let spec = CatSpec::real(d, k, a).unwrap();
        let rho = build_probe(&spec).unwrap().to_fock().unwrap().projector();
        let numeric = qfi_numeric_phase_on_b(&rho).unwrap().f_q;
        let exact = qfi_pure(&spec).unwrap().f_q;
        assert!(
            (numeric - exact).abs() / exact < 1e-7,
            "d={d} k={k}: {numeric} vs {exact}"
        );
    }
}

#[test]
fn state_family_and_shifted_closed_form_agree() {
    let spec = CatSpec::real(8, 1, 1.0).unwrap();
    let family = |phi: f64| lossy_probe_oracle(&spec, 0.9, phi);
    let a = qfi_mixed_numeric(&family, 0.0).unwrap().f_q;
    let b = qfi_numeric_phase_on_b(lossy_probe(&spec, 0.9, 0.0).unwrap().oracle_form())
        .unwrap()
        .f_q;
    assert!((a - b).abs() / a < 1e-8);
    let lp = lossy_probe(&spec, 0.9, 0.4).unwrap();
    assert!(trace_distance(lp.paper_form(), &family(0.4).unwrap()).unwrap() < 1e-9);
    let paper = qfi_mixed_paper(&lossy_probe(&spec, 0.9, 0.0).unwrap())
        .unwrap()
        .f_q;
    assert!((paper - a).abs() / a < 0.02);
}

#[test]
fn sweep_rows_use_the_requested_energy() {
    let req = CurveRequest {
        d_list: vec![4],
        k_list: vec![0, 1],
        eta: 0.9,
        n_av_min: 0.6,
        n_av_max: 1.2,
        points: 3,
        ..CurveRequest::default()
    };
    let out = trace_curve(&req).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.rows.len(), 6);
    for r in &out.rows {
        let spec = CatSpec::real(r.d, r.k, r.alpha).unwrap();
        assert!((build_probe(&spec).unwrap().n_av() - r.n_av).abs() < 1e-9);
        let (alpha, q) = evaluate_cat(r.d, r.k, r.eta, r.n_av).unwrap();
        assert_eq!(alpha, r.alpha);
        assert_eq!(q.f_q, r.f_q);
    }
}

#[test]
fn cat_probe_beats_baselines_at_moderate_energy() {
    let n = 1.0;
    let (alpha, cat) = evaluate_cat(8, 0, 1.0, n).unwrap();
    assert!((alpha - alpha_for_nav(8, 0, n).unwrap()).abs() < 1e-12);
    let (tmsv, tn) = tmsv_qfi(tmsv_squeezing_for(n), 1.0).unwrap();
    assert!((tn - n).abs() < 1e-9);
    assert!(cat.f_q > noon_continuous(n, 1.0).unwrap());
    assert!(cat.f_q > 1.0 / sql_bound(n).unwrap().powi(2));
    assert!(tmsv.f_q > 0.0);
}

#[test]
fn optimum_is_one_of_the_candidates() {
    let best = optimal_probe(1.0, 1.0, 4, 2).unwrap();
    let top = best
        .candidates
        .iter()
        .map(|r| r.f_q)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best.f_q, top);
    assert!(best.candidates.iter().all(|r| r.k < r.d.max(1)));
}

#[test]
fn two_arm_protocol_heralds_the_even_cat_probe() {
    let cfg = GenConfig::new(2, Complex64::new(1.0, 0.0), Some(4.0), 1000, 3).unwrap();
    let rep = end_to_end(&cfg).unwrap();
    assert_eq!(rep.counts.iter().sum::<u64>(), 1000);
    let best = rep
        .outcomes
        .iter()
        .max_by(|a, b| a.probability.total_cmp(&b.probability))
        .unwrap();
    assert_eq!(best.k_observed, [0, 0]);
    assert!(best.conditional_fidelity.unwrap() > 0.999);
}
