use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde_json::{Map, Value};

use catqfi::cat::{cat_moments, norm_m, CatSpec};
use catqfi::fock::fidelity;
use catqfi::genscheme::{
    branch_overlaps, bs_stage, bs_target, cpm_stage, end_to_end, heterodyne_condition, GenConfig,
    GenReport,
};
use catqfi::sweep::{optimal_probe, trace_curve, CurveOutput, CurveRequest, SweepRow};
use catqfi::Error;

use crate::emit::{meta_json, pretty, to_csv, to_json, Cell, Meta, Table};
use crate::{CurveArgs, Failure, Format, G2Args, GenArgs, OptimalArgs, Range, VerifyArgs};

pub const SWEEP_HEADER: [&str; 8] = [
    "d",
    "k",
    "alpha",
    "eta",
    "n_av",
    "f_q",
    "delta_phi",
    "method",
];

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Numerical(format!("cannot write to stdout: {e}")))
        }
    }
}

fn render(meta: &Meta, table: &Table, format: Format) -> String {
    match format {
        Format::Csv => to_csv(meta, table),
        Format::Json => to_json(meta, table),
    }
}

pub fn sweep_cells(r: &SweepRow) -> Vec<Cell> {
    vec![
        Cell::Int(r.d as u64),
        Cell::Int(r.k as u64),
        Cell::Float(r.alpha),
        Cell::Float(r.eta),
        Cell::Float(r.n_av),
        Cell::Float(r.f_q),
        Cell::Float(r.delta_phi),
        Cell::Text(r.method.clone()),
    ]
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Truncation(_) => "truncation",
        Error::Parameter(_) => "parameter",
        Error::Shape(_) => "shape",
        Error::Degenerate { .. } => "degenerate",
        Error::Domain(_) => "domain",
        Error::Numerical(_) => "numerical",
    }
}

/// One note per `(d, k, series, error kind)` group of skipped rows.
fn skipped_notes(out: &CurveOutput) -> Vec<String> {
    let mut groups: BTreeMap<(usize, usize, String, &'static str), (usize, f64, f64, String)> =
        BTreeMap::new();
    for f in &out.failures {
        let e = groups
            .entry((f.d, f.k, f.what.clone(), error_kind(&f.error)))
            .or_insert((0, f64::INFINITY, f64::NEG_INFINITY, f.error.to_string()));
        e.0 += 1;
        e.1 = e.1.min(f.n_av);
        e.2 = e.2.max(f.n_av);
    }
    groups
        .into_iter()
        .map(|((d, k, what, kind), (n, lo, hi, msg))| {
            format!("skipped: d={d} k={k} {what}: {n} points, n_av in [{lo}, {hi}], {kind}: {msg}")
        })
        .collect()
}

/// Rows, notes and whether any row hit a numerical failure.
pub fn curve_table(req: &CurveRequest) -> Result<(Table, Vec<String>, bool), Failure> {
    let out = trace_curve(req)?;
    let numerical = out
        .failures
        .iter()
        .any(|f| matches!(f.error, Error::Numerical(_)));
    let table = Table {
        header: SWEEP_HEADER.to_vec(),
        rows: out.rows.iter().map(sweep_cells).collect(),
    };
    Ok((table, skipped_notes(&out), numerical))
}

pub fn curve_request(
    d: &[usize],
    k: &[usize],
    eta: f64,
    nav: Range,
    baselines: &[catqfi::baselines::BaselineKind],
    paper: bool,
) -> CurveRequest {
    CurveRequest {
        d_list: d.to_vec(),
        k_list: k.to_vec(),
        eta,
        n_av_min: nav.min,
        n_av_max: nav.max,
        points: nav.points,
        baselines: baselines.iter().copied().collect(),
        paper_spectrum: paper,
    }
}

pub fn curve(a: &CurveArgs, config: Vec<(String, String)>) -> Result<(), Failure> {
    if a.d.is_empty() || a.k.is_empty() {
        return Err(Failure::Usage("--d and --k need at least one value".into()));
    }
    let req = curve_request(
        &a.d,
        &a.k,
        a.eta,
        a.nav,
        &a.baselines,
        a.closed_form_spectrum,
    );
    req.validate()?;
    let (table, notes, numerical) = curve_table(&req)?;
    let meta = Meta {
        command: "curve".into(),
        config,
        notes,
    };
    write_output(
        a.out.output.as_deref(),
        &render(&meta, &table, a.out.format),
    )?;
    if numerical {
        return Err(Failure::Numerical(
            "some rows failed numerically; see the skipped notes".into(),
        ));
    }
    Ok(())
}

pub fn g2_table(
    d_list: &[usize],
    k_list: &[usize],
    grid: Range,
) -> Result<(Table, Vec<String>), Failure> {
    let xs = catqfi::sweep::linspace(grid.min, grid.max, grid.points);
    if grid.min <= 0.0 {
        return Err(Failure::Usage("|α|² grid must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &d in d_list {
        for &k in k_list {
            if d == 0 || k >= d {
                notes.push(format!("skipped: d={d} k={k}: k must be below d"));
                continue;
            }
            for &x in &xs {
                let m = cat_moments(&CatSpec::real(d, k, x.sqrt())?)?;
                rows.push(vec![
                    Cell::Int(d as u64),
                    Cell::Int(k as u64),
                    Cell::Float(x),
                    Cell::Float(m.g2),
                    Cell::Float(m.mandel_q),
                ]);
            }
        }
    }
    Ok((
        Table {
            header: vec!["d", "k", "alpha_sq", "g2", "mandel_q"],
            rows,
        },
        notes,
    ))
}

pub fn g2(a: &G2Args, config: Vec<(String, String)>) -> Result<(), Failure> {
    if a.d.is_empty() || a.k.is_empty() {
        return Err(Failure::Usage("--d and --k need at least one value".into()));
    }
    let (table, notes) = g2_table(&a.d, &a.k, a.alpha_sq)?;
    let meta = Meta {
        command: "g2".into(),
        config,
        notes,
    };
    write_output(
        a.out.output.as_deref(),
        &render(&meta, &table, a.out.format),
    )
}

fn report_json(rep: &GenReport) -> Value {
    let outcomes: Vec<Value> = rep
        .outcomes
        .iter()
        .zip(&rep.counts)
        .map(|(o, &n)| {
            let mut m = Map::new();
            m.insert(
                "k_observed".into(),
                o.k_observed.iter().map(|&k| Value::from(k)).collect(),
            );
            m.insert("probability".into(), o.probability.into());
            m.insert(
                "predicted".into(),
                o.predicted.map(Value::from).unwrap_or(Value::Null),
            );
            m.insert(
                "conditional_fidelity".into(),
                o.conditional_fidelity
                    .map(Value::from)
                    .unwrap_or(Value::Null),
            );
            m.insert("leakage".into(), o.leakage.into());
            m.insert("flagged".into(), o.flagged.into());
            m.insert("count".into(), n.into());
            Value::Object(m)
        })
        .collect();
    let mut m = Map::new();
    m.insert("outcomes".into(), Value::Array(outcomes));
    m.insert("shots".into(), rep.shots.into());
    m.insert("seed".into(), rep.seed.into());
    m.insert("total_probability".into(), rep.total_probability.into());
    m.insert("max_leakage".into(), rep.max_leakage().into());
    Value::Object(m)
}

/// Full generation-scheme report: both stages, single-arm heralding and the
/// two-arm protocol.
pub fn genscheme_report(cfg: &GenConfig, meta: &Meta) -> Result<Value, Failure> {
    let alpha = cfg.alpha;
    let bs = fidelity(&bs_stage(alpha)?, &bs_target(alpha)?)?;
    let cpm = cpm_stage(alpha, cfg.beta, cfg.d)?;
    let mut branches = Vec::new();
    let mut worst: f64 = 0.0;
    if alpha.norm() > 0.0 {
        for (k, ov) in branch_overlaps(&cpm, alpha, cfg.beta, cfg.d)?
            .iter()
            .enumerate()
        {
            let want = norm_m(&CatSpec::new(cfg.d, k, alpha)?).sqrt() / cfg.d as f64;
            worst = worst.max((ov.norm() - want).abs());
            let mut b = Map::new();
            b.insert("k".into(), k.into());
            b.insert("overlap".into(), ov.norm().into());
            b.insert("predicted".into(), want.into());
            branches.push(Value::Object(b));
        }
    }
    let single = heterodyne_condition(&cpm, alpha, cfg.d, cfg.beta, cfg.shots, cfg.seed)?;
    let joint = end_to_end(cfg)?;

    let mut bs_obj = Map::new();
    bs_obj.insert("fidelity".into(), bs.into());
    let mut cpm_obj = Map::new();
    cpm_obj.insert("branches".into(), Value::Array(branches));
    cpm_obj.insert("max_coefficient_error".into(), worst.into());
    let mut top = Map::new();
    top.insert("metadata".into(), meta_json(meta));
    top.insert("bs_stage".into(), Value::Object(bs_obj));
    top.insert("cpm_stage".into(), Value::Object(cpm_obj));
    top.insert("single_arm".into(), report_json(&single));
    top.insert("end_to_end".into(), report_json(&joint));
    Ok(Value::Object(top))
}

pub fn genscheme(a: &GenArgs, config: Vec<(String, String)>) -> Result<(), Failure> {
    let alpha = Complex64::from_polar(a.alpha, a.alpha_phase);
    if a.alpha < 0.0 {
        return Err(Failure::Usage(
            "--alpha is a modulus and must be non-negative".into(),
        ));
    }
    let cfg = GenConfig::new(a.d, alpha, a.beta, a.shots, a.seed)?;
    let mut config = config;
    if a.beta.is_none() {
        config.push(("beta".into(), cfg.beta.to_string()));
        config.sort();
    }
    let meta = Meta {
        command: "genscheme".into(),
        config,
        notes: vec![
            "heterodyne: ideal coherent-state projection binned to the nearest sector 2 pi k/d".into(),
            "end_to_end target for outcome (k_a, k_b): N(|C_k>|0> + |0>|C_k>), k = (k_a + k_b) mod d".into(),
        ],
    };
    let report = genscheme_report(&cfg, &meta)?;
    write_output(a.output.as_deref(), &pretty(&report))
}

pub fn optimal(a: &OptimalArgs, config: Vec<(String, String)>) -> Result<(), Failure> {
    let best = optimal_probe(a.nav, a.eta, a.d_max, a.k_max)?;
    let mut header = SWEEP_HEADER.to_vec();
    header.push("selected");
    let rows = best
        .candidates
        .iter()
        .map(|r| {
            let mut c = sweep_cells(r);
            c.push(Cell::Int(((r.d, r.k) == (best.d, best.k)) as u64));
            c
        })
        .collect();
    let meta = Meta {
        command: "optimal".into(),
        config,
        notes: vec![
            format!(
                "optimal: d={} k={} alpha={} f_q={}",
                best.d, best.k, best.alpha, best.f_q
            ),
            "ties within 1e-12 relative go to the smaller d, then the smaller k".into(),
        ],
    };
    write_output(
        a.out.output.as_deref(),
        &render(&meta, &Table { header, rows }, a.out.format),
    )
}

pub fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    if !(a.tol_scale > 0.0) || !a.tol_scale.is_finite() {
        return Err(Failure::Usage("--tol-scale must be positive".into()));
    }
    if let Some(dir) = &a.regenerate_golden {
        return crate::verify::regenerate(dir);
    }
    let report = crate::verify::run(a.tol_scale, a.golden_dir.as_deref())?;
    write_output(a.output.as_deref(), &report.text)?;
    if report.failed > 0 {
        return Err(Failure::Verify(format!(
            "{} of {} checks failed",
            report.failed, report.total
        )));
    }
    Ok(())
}
