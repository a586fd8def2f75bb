use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_catqfi");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

const SMALL_CURVE: &[&str] = &[
    "curve",
    "--d",
    "8",
    "--k",
    "0,1",
    "--eta",
    "0.9",
    "--nav",
    "0.6:1:3",
    "--baselines",
    "noon,sql",
];

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["curve", "--k="]).status.code(), Some(1));
    assert_eq!(run(&["genscheme", "--shots", "0"]).status.code(), Some(1));
    assert_eq!(run(&["curve", "--nav", "1:0:3"]).status.code(), Some(1));
    assert_eq!(run(&["curve", "--eta", "1.5"]).status.code(), Some(1));
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn curve_csv_layout() {
    let o = run(SMALL_CURVE);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("# tool: catqfi "));
    assert!(text.contains("# config: eta = 0.9\n"));
    assert!(text.contains("# convention: n_av is the mean photon number"));
    let rows = data(&text);
    assert_eq!(rows[0], "d,k,alpha,eta,n_av,f_q,delta_phi,method");
    // 3 points for k=0 and k=1, the k=1 series starts above N_av = 1/2; plus two baselines
    assert_eq!(rows.len(), 1 + 6 + 6);
    assert!(rows[1].starts_with("0,0,"));
    for r in &rows[1..] {
        for cell in r.split(',').take(7) {
            let digits = cell
                .trim_start_matches('-')
                .split('e')
                .next()
                .unwrap()
                .replace('.', "");
            assert!(digits.trim_start_matches('0').len() <= 12, "{cell}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    assert_eq!(run(SMALL_CURVE).stdout, run(SMALL_CURVE).stdout);
    let gen = [
        "genscheme",
        "--d",
        "2",
        "--alpha",
        "1",
        "--beta",
        "4",
        "--shots",
        "2000",
        "--seed",
        "7",
    ];
    let a = run(&gen);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, run(&gen).stdout);
}

#[test]
fn json_mirrors_csv() {
    let mut args = SMALL_CURVE.to_vec();
    args.extend(["--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&run(&args))).unwrap();
    assert_eq!(v["metadata"]["command"], "curve");
    assert_eq!(v["metadata"]["config"]["d"], "8");
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);
    assert!(v["rows"][0]["f_q"].is_number());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        "# lossy run\nd = 8\nk = 0\neta = 0.9\nnav = 0.6:1:2\n",
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let o = run(&[
        "curve",
        "--config",
        cfg.to_str().unwrap(),
        "--k",
        "1",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# config: k = 1\n"));
    assert!(text.contains("# config: eta = 0.9\n"));
    assert!(data(&text)[1..].iter().all(|r| r.starts_with("8,1,")));

    fs::write(&cfg, "d = 8\nshots = 5\n").unwrap();
    let o = run(&["curve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shots"));
}

#[test]
fn g2_table() {
    let text = stdout(&run(&[
        "g2",
        "--d",
        "1,4",
        "--k",
        "0,1",
        "--alpha-sq",
        "0.5:2:4",
    ]));
    assert!(text.contains("skipped: d=1 k=1"));
    let rows = data(&text);
    assert_eq!(rows[0], "d,k,alpha_sq,g2,mandel_q");
    for r in rows[1..].iter().filter(|r| r.starts_with("1,")) {
        let g2: f64 = r.split(',').nth(3).unwrap().parse().unwrap();
        assert!((g2 - 1.0).abs() < 1e-12);
    }
    assert_eq!(rows.len(), 1 + 3 * 4);
}

#[test]
fn genscheme_report() {
    let o = run(&[
        "genscheme",
        "--d",
        "4",
        "--alpha",
        "1",
        "--beta",
        "6",
        "--shots",
        "10000",
        "--seed",
        "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["metadata"]["config"]["seed"], "7");
    let single = v["single_arm"]["outcomes"].as_array().unwrap();
    assert_eq!(single.len(), 4);
    let total: u64 = single.iter().map(|o| o["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 10_000);
    for o in single {
        assert!(
            (o["probability"].as_f64().unwrap() - o["predicted"].as_f64().unwrap()).abs() < 1e-6
        );
        assert!(o["conditional_fidelity"].as_f64().unwrap() > 0.999);
    }
    assert!(v["bs_stage"]["fidelity"].as_f64().unwrap() > 1.0 - 1e-10);
    assert_eq!(v["end_to_end"]["outcomes"].as_array().unwrap().len(), 16);
}

#[test]
fn optimal_marks_one_row() {
    let text = stdout(&run(&[
        "optimal", "--nav", "0.3", "--eta", "0.9", "--d-max", "4", "--k-max", "1",
    ]));
    let rows = data(&text);
    assert!(rows[0].ends_with(",selected"));
    let chosen: Vec<&&str> = rows[1..].iter().filter(|r| r.ends_with(",1")).collect();
    assert_eq!(chosen.len(), 1);
    assert!(chosen[0].split(',').nth(1) == Some("0"), "{}", chosen[0]);
}

#[test]
fn corrupted_golden_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let src = concat!(env!("CARGO_MANIFEST_DIR"), "/golden");
    for entry in fs::read_dir(src).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    let g2 = dir.path().join("g2.csv");
    let text = fs::read_to_string(&g2).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let idx = lines.iter().position(|l| l.starts_with("8,1,")).unwrap();
    let mut cells: Vec<String> = lines[idx].split(',').map(str::to_string).collect();
    let g: f64 = cells[3].parse().unwrap();
    cells[3] = format!("{}", g * (1.0 + 1e-6));
    lines[idx] = cells.join(",");
    fs::write(&g2, lines.join("\n") + "\n").unwrap();

    let o = run(&["verify", "--golden-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let report = stdout(&o);
    let line = report
        .lines()
        .find(|l| l.starts_with("FAIL golden/g2.csv"))
        .expect("golden failure reported");
    assert!(
        line.contains("row ") && line.contains("column g2"),
        "{line}"
    );
}
