use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::args::Format;

pub const SCHEMA_VERSION: u64 = 1;

/// A command's output in both encodings: a JSON payload and a CSV table.
pub struct Output {
    pub command: &'static str,
    pub json: Map<String, Value>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Output {
    pub fn new(command: &'static str, header: &[&str]) -> Self {
        Output {
            command,
            json: Map::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl serde::Serialize) {
        let v = serde_json::to_value(value).expect("serializable output");
        self.json.insert(key.to_string(), v);
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("schema".into(), Value::from(SCHEMA_VERSION));
        m.insert("command".into(), Value::from(self.command));
        for (k, v) in &self.json {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn real(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

pub fn write_csv<W: Write>(header: &[String], rows: &[Vec<String>], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

fn sink(dest: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match dest {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

pub fn emit(output: &Output, format: Format, dest: Option<&Path>) -> io::Result<()> {
    let mut out = sink(dest)?;
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &output.to_json())?;
            writeln!(out)?;
        }
        Format::Csv => write_csv(&output.header, &output.rows, &mut out)?,
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [1.0 / 3.0, 0.8985273947044760, -1e-300, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(real(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(real(0.0), "0");
        assert_eq!(real(f64::NAN), "nan");
    }

    #[test]
    fn empty_csv_has_header() {
        let mut buf = Vec::new();
        write_csv(&["a".into(), "b".into()], &[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n");
    }

    #[test]
    fn json_round_trip() {
        let mut o = Output::new("test", &["x"]);
        o.set("value", 0.1 + 0.2);
        let text = serde_json::to_string(&o.to_json()).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["value"].as_f64().unwrap(), 0.1 + 0.2);
        assert_eq!(back["schema"], 1);
    }
}
