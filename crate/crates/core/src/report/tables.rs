use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest dB value printed in tables; `−∞` renders as this floor.
pub const DB_FLOOR: f64 = -120.0;

/// Compared feedback strategies, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "NQ")]
    Nq,
    #[serde(rename = "mu-law")]
    MuLaw,
    OffsetNet,
    L1Adaptor,
    BottleFC,
    ParaBottleFC,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Nq,
        Method::MuLaw,
        Method::OffsetNet,
        Method::L1Adaptor,
        Method::BottleFC,
        Method::ParaBottleFC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nq => "NQ",
            Method::MuLaw => "mu-law",
            Method::OffsetNet => "OffsetNet",
            Method::L1Adaptor => "L1Adaptor",
            Method::BottleFC => "BottleFC",
            Method::ParaBottleFC => "ParaBottleFC",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Serialises non-finite dB values as the strings `"+inf"` / `"-inf"`.
mod db_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            None => s.serialize_none(),
            Some(v) if v.is_finite() => s.serialize_f64(*v),
            Some(v) if *v > 0.0 => s.serialize_str("+inf"),
            Some(_) => s.serialize_str("-inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(v)) => Ok(Some(v)),
            Some(Repr::Text(t)) => match t.as_str() {
                "+inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("bad dB value `{other}`"))),
            },
        }
    }
}

/// One evaluated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub method: Method,
    pub cr: usize,
    /// `None` for the unquantized row.
    pub bits: Option<u32>,
    pub seed: u64,
    #[serde(with = "db_serde")]
    pub nmse_db: Option<f64>,
    #[serde(with = "db_serde")]
    pub qsnr_db: Option<f64>,
    pub params: usize,
    pub flops: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset_fingerprint: String,
    pub seeds: Vec<u64>,
    pub records: Vec<Record>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("report", e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format("report", e.to_string()))
    }
}

/// Rendered comparison tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub text: String,
    /// Long format: `table,method,cr,bits,metric,value`.
    pub csv: String,
}

const DEFAULT_CRS: [usize; 3] = [4, 8, 16];
const DEFAULT_BITS: [u32; 2] = [6, 4];

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

fn fmt_db(x: Option<f64>) -> String {
    match x {
        None => "n/a".into(),
        Some(v) if v == f64::INFINITY => "inf".into(),
        Some(v) => format!("{:.2}", v.max(DB_FLOOR)),
    }
}

fn fmt_count(x: Option<f64>) -> String {
    match x {
        None => "n/a".into(),
        Some(v) => format!("{}", v.round() as u64),
    }
}

fn csv_value(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) if v == f64::INFINITY => "inf".into(),
        Some(v) => v.max(DB_FLOOR).to_string(),
    }
}

type Key = (Method, usize, Option<u32>);

/// Right-aligned text table.
fn render(title: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate().take(cols) {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = format!("{title}\n");
    out += &line(header);
    out += &"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1));
    out.push('\n');
    for row in rows {
        out += &line(row);
    }
    out
}

/// Median over seeds of each cell, rendered as the QSNR table, the NMSE
/// table (with the unquantized row shared across bit widths) and the
/// complexity table. Missing cells print `n/a`; an empty report prints only
/// headers.
pub fn make_tables(report: &RunReport) -> Tables {
    let mut crs: Vec<usize> = DEFAULT_CRS.to_vec();
    let mut bits: Vec<u32> = DEFAULT_BITS.to_vec();
    for r in &report.records {
        if !crs.contains(&r.cr) {
            crs.push(r.cr);
        }
        if let Some(b) = r.bits {
            if !bits.contains(&b) {
                bits.push(b);
            }
        }
    }
    crs.sort_unstable();
    bits.sort_unstable_by(|a, b| b.cmp(a));

    let mut groups: BTreeMap<Key, Vec<&Record>> = BTreeMap::new();
    for r in &report.records {
        groups.entry((r.method, r.cr, r.bits)).or_default().push(r);
    }
    let stat = |key: Key, f: &dyn Fn(&Record) -> Option<f64>| -> Option<f64> {
        groups
            .get(&key)
            .and_then(|rs| median(rs.iter().filter_map(|r| f(r)).collect()))
    };
    let present: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| report.records.iter().any(|r| r.method == *m))
        .collect();
    let quantized: Vec<Method> = present.iter().copied().filter(|m| *m != Method::Nq).collect();

    let mut csv = String::from("table,method,cr,bits,metric,value\n");
    let mut text = String::new();

    // QSNR: bit width outer, CR inner.
    let mut header = vec!["Method".to_owned()];
    for b in &bits {
        for cr in &crs {
            header.push(format!("B{b}/CR{cr}"));
        }
    }
    let mut rows = Vec::new();
    for &m in &quantized {
        let mut row = vec![m.to_string()];
        for &b in &bits {
            for &cr in &crs {
                let v = stat((m, cr, Some(b)), &|r| r.qsnr_db);
                let _ = writeln!(csv, "qsnr,{m},{cr},{b},qsnr_db,{}", csv_value(v));
                row.push(fmt_db(v));
            }
        }
        rows.push(row);
    }
    text += &render("QSNR (dB)", &header, &rows);
    text.push('\n');

    // NMSE: CR outer, bit width inner.
    let mut header = vec!["Method".to_owned()];
    for cr in &crs {
        for b in &bits {
            header.push(format!("CR{cr}/B{b}"));
        }
    }
    let mut rows = Vec::new();
    for &m in &present {
        let mut row = vec![m.to_string()];
        for &cr in &crs {
            if m == Method::Nq {
                let v = stat((m, cr, None), &|r| r.nmse_db);
                let _ = writeln!(csv, "nmse,{m},{cr},,nmse_db,{}", csv_value(v));
                row.push(fmt_db(v));
                row.extend(std::iter::repeat_n(String::new(), bits.len() - 1));
                continue;
            }
            for &b in &bits {
                let v = stat((m, cr, Some(b)), &|r| r.nmse_db);
                let _ = writeln!(csv, "nmse,{m},{cr},{b},nmse_db,{}", csv_value(v));
                row.push(fmt_db(v));
            }
        }
        rows.push(row);
    }
    text += &render("NMSE (dB)", &header, &rows);
    text.push('\n');

    // Complexity: metric and CR as rows, methods as columns.
    let mut header = vec!["Complexity".to_owned(), "CR".to_owned()];
    header.extend(quantized.iter().map(Method::to_string));
    let mut rows = Vec::new();
    for (metric, f) in [
        ("FLOPs", &(|r: &Record| Some(r.flops as f64)) as &dyn Fn(&Record) -> Option<f64>),
        ("Params", &|r: &Record| Some(r.params as f64)),
    ] {
        for &cr in &crs {
            let mut row = vec![metric.to_owned(), cr.to_string()];
            for &m in &quantized {
                let v = bits
                    .iter()
                    .find_map(|&b| stat((m, cr, Some(b)), f));
                let _ = writeln!(
                    csv,
                    "complexity,{m},{cr},,{},{}",
                    metric.to_lowercase(),
                    v.map_or(String::new(), |x| (x.round() as u64).to_string())
                );
                row.push(fmt_count(v));
            }
            rows.push(row);
        }
    }
    text += &render("Complexity", &header, &rows);

    Tables { text, csv }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: Method, cr: usize, bits: Option<u32>, seed: u64, nmse: f64) -> Record {
        Record {
            method,
            cr,
            bits,
            seed,
            nmse_db: Some(nmse),
            qsnr_db: bits.map(|b| 5.0 * b as f64),
            params: 1000 * cr,
            flops: 900 * cr,
        }
    }

    #[test]
    fn empty_report_has_headers_only() {
        let t = make_tables(&RunReport::default());
        assert!(t.text.contains("QSNR (dB)"));
        assert!(t.text.contains("NMSE (dB)"));
        assert!(t.text.contains("Complexity"));
        assert!(!t.text.contains("mu-law"));
        assert_eq!(t.csv, "table,method,cr,bits,metric,value\n");
    }

    #[test]
    fn median_over_seeds_and_shared_nq() {
        let report = RunReport {
            dataset_fingerprint: "x".into(),
            seeds: vec![1, 2, 3],
            records: vec![
                rec(Method::MuLaw, 16, Some(4), 1, -5.0),
                rec(Method::MuLaw, 16, Some(4), 2, -7.0),
                rec(Method::MuLaw, 16, Some(4), 3, -6.0),
                rec(Method::Nq, 16, None, 1, -8.0),
            ],
        };
        let t = make_tables(&report);
        assert!(t.csv.contains("nmse,mu-law,16,4,nmse_db,-6\n"));
        assert!(t.csv.contains("nmse,NQ,16,,nmse_db,-8\n"));
        assert_eq!(t.csv.matches("nmse,NQ,").count(), 3);
        assert!(t.csv.contains("nmse,mu-law,4,6,nmse_db,\n"));
        assert!(t.text.contains("n/a"));
        assert!(t.csv.contains("complexity,mu-law,16,,params,16000\n"));
        assert_eq!(make_tables(&report), t);
    }

    #[test]
    fn infinite_values_survive_json_and_floor_in_tables() {
        let mut r = rec(Method::BottleFC, 4, Some(6), 1, -200.0);
        r.qsnr_db = Some(f64::INFINITY);
        r.nmse_db = Some(f64::NEG_INFINITY);
        let report = RunReport {
            records: vec![r],
            ..RunReport::default()
        };
        let back = RunReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
        let t = make_tables(&report);
        assert!(t.text.contains("-120.00"));
        assert!(t.text.contains("inf"));
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }
}
