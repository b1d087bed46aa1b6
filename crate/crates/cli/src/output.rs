//! Number formatting, config hashing and file headers.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "cpwlat";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 12 significant digits, `%g` style (trailing zeros dropped).
pub fn sig(x: f64) -> String {
    sig_n(x, 12)
}

pub fn sig_n(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = e.split_once('e').unwrap_or((&e, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mant.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// JSON number rounded to 12 significant digits; non-finite → null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let v: f64 = sig(x).parse().unwrap_or(x);
    json!(v)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a canonical JSON rendering of the configuration.
pub fn config_hash(config: &Value) -> String {
    sha256_hex(serde_json::to_string(config).unwrap_or_default().as_bytes())
}

#[derive(Debug, Clone)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub units: String,
}

impl Meta {
    pub fn csv_header(&self, notes: &[String]) -> String {
        let mut s = format!(
            "# {TOOL} {VERSION}\n# command: {}\n# config_sha256: {}\n# units: {}\n",
            self.command, self.config_hash, self.units
        );
        for n in notes {
            s.push_str("# ");
            s.push_str(n);
            s.push('\n');
        }
        s
    }

    pub fn json(&self) -> Value {
        json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "config_sha256": self.config_hash,
            "units": self.units,
        })
    }
}

/// A CSV grid: column names, rows of preformatted cells, comment notes.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn render(&self, meta: &Meta) -> String {
        let mut s = meta.csv_header(&self.notes);
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

pub fn render_json(meta: &Meta, mut body: Value) -> String {
    if let Value::Object(m) = &mut body {
        m.insert("meta".into(), meta.json());
    }
    let mut s = serde_json::to_string_pretty(&body).unwrap_or_default();
    s.push('\n');
    s
}

pub fn write_text(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(9.211), "9.211");
        assert_eq!(sig(9.2110000000004), "9.211");
        assert_eq!(sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig(-2.5e-9), "-2.5e-9");
        assert_eq!(sig(1.234e15), "1.234e15");
        assert_eq!(sig(100.0), "100");
        assert_eq!(sig(0.0), "0");
        assert_eq!(sig(-0.0), "0");
        assert_eq!(sig(f64::NAN), "nan");
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_cell("a,b"), "\"a,b\"");
        assert_eq!(csv_cell("plain"), "plain");
    }
}
