//! The machine-readable report every command emits, plus CSV helpers.

use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub resolved_config: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves: Option<Value>,
    pub diagnostics: Vec<String>,
    pub version: String,
}

impl Report {
    pub fn new(command: &str, resolved_config: Value) -> Self {
        Self {
            command: command.into(),
            resolved_config,
            verdict: None,
            estimates: None,
            curves: None,
            diagnostics: Vec::new(),
            version: VERSION.into(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report parts serialize")
}

/// Shortest round-trip formatting; non-finite values keep their names.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Builds CSV text from a header and rows of already formatted cells.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Fixed-width text table for terminal summaries.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_table_layout() {
        let rows = vec![vec!["1".to_string(), "0.5".to_string()], vec!["10".to_string(), "1".to_string()]];
        assert_eq!(csv(&["a", "b"], rows.clone()), "a,b\n1,0.5\n10,1\n");
        assert_eq!(table(&["a", "b"], &rows), " a    b\n 1  0.5\n10    1\n");
    }

    #[test]
    fn optional_sections_are_omitted() {
        let r = Report::new("catalog", Value::Null);
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v.get("verdict").is_none());
        assert_eq!(v["diagnostics"], serde_json::json!([]));
    }
}
