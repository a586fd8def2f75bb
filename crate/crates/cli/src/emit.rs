//! CSV and JSON emission.

use serde_json::{Map, Value};

pub const TOOL: &str = concat!("catqfi ", env!("CARGO_PKG_VERSION"));

/// Conventions stamped on every output file.
pub const CONVENTIONS: &[&str] = &[
    "n_av is the mean photon number <n_b> of one arm (per mode)",
    "phase generator exp(i phi n_b) on mode b; delta_phi = 1/sqrt(f_q)",
    "sql: delta_phi = 1/sqrt(n_av)",
    "beamsplitter: (a1, a2) -> ((a1 + a2)/sqrt2, (a1 - a2)/sqrt2)",
    "two-mode index n_a*(n_max+1) + n_b, row-major in mode a",
    "baseline rows use d=0 k=0; alpha holds the size parameter (noon: photon number 2 n_av, tmsv: squeezing r, sql: n_av)",
    "lossy rows: n_av is the input-probe energy before loss",
];

#[derive(Debug, Clone)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt_sig(*x),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Float(x) => Value::from(*x),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Meta {
    pub command: String,
    /// Resolved parameters, sorted by key.
    pub config: Vec<(String, String)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// `x` with 12 significant digits, `%g` style.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mant))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn meta_lines(meta: &Meta) -> Vec<String> {
    let mut out = vec![
        format!("tool: {TOOL}"),
        format!("command: {}", meta.command),
    ];
    out.extend(
        meta.config
            .iter()
            .map(|(k, v)| format!("config: {k} = {v}")),
    );
    out.extend(CONVENTIONS.iter().map(|c| format!("convention: {c}")));
    out.extend(meta.notes.iter().cloned());
    out
}

pub fn to_csv(meta: &Meta, table: &Table) -> String {
    let mut s = String::new();
    for line in meta_lines(meta) {
        s.push_str("# ");
        s.push_str(&line);
        s.push('\n');
    }
    s.push_str(&table.header.join(","));
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::csv).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn meta_json(meta: &Meta) -> Value {
    let mut m = Map::new();
    m.insert("tool".into(), TOOL.into());
    m.insert("command".into(), meta.command.clone().into());
    let config: Map<String, Value> = meta
        .config
        .iter()
        .map(|(k, v)| (k.clone(), Value::from(v.clone())))
        .collect();
    m.insert("config".into(), Value::Object(config));
    m.insert(
        "conventions".into(),
        CONVENTIONS.iter().map(|c| Value::from(*c)).collect(),
    );
    m.insert(
        "notes".into(),
        meta.notes.iter().map(|c| Value::from(c.clone())).collect(),
    );
    Value::Object(m)
}

pub fn to_json(meta: &Meta, table: &Table) -> String {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            let obj: Map<String, Value> = table
                .header
                .iter()
                .zip(r)
                .map(|(h, c)| (h.to_string(), c.json()))
                .collect();
            Value::Object(obj)
        })
        .collect();
    let mut top = Map::new();
    top.insert("metadata".into(), meta_json(meta));
    top.insert("rows".into(), Value::Array(rows));
    pretty(&Value::Object(top))
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialise");
    s.push('\n');
    s
}

/// Header-checked parse of the data part of a CSV written by [`to_csv`].
pub fn parse_csv(text: &str) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = lines.next()?.split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Some((header, rows))
}
