//! CSV rendering. Reals are written with 17 significant digits in
//! scientific notation; nothing depends on the locale.

use std::fmt::Write as _;

use jumpeuler_core::{ConvergenceTable, TerminalValue};

pub const TABLE_HEADER: &str = "M,n,cost,error,std_error";

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), real)
}

/// Rows followed by `# slope`, `# intercept` and `# predicted_slope`
/// footer lines; absent values are written as `undefined`.
pub fn table_csv(table: &ConvergenceTable) -> String {
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.m,
            r.n,
            real(r.cost),
            real(r.error),
            real(r.std_error)
        );
    }
    let _ = writeln!(out, "# slope,{}", optional(table.slope));
    let _ = writeln!(out, "# intercept,{}", optional(table.intercept));
    let _ = writeln!(out, "# predicted_slope,{}", optional(table.predicted_slope));
    out
}

/// One line per trajectory: index, state components, jump count.
pub fn terminals_csv(values: &[TerminalValue]) -> String {
    let dim = values.first().map_or(1, |v| v.value.len());
    let mut out = String::from("trajectory,");
    if dim == 1 {
        out.push_str("value");
    } else {
        let names: Vec<String> = (0..dim).map(|i| format!("value_{i}")).collect();
        out.push_str(&names.join(","));
    }
    out.push_str(",jump_count\n");
    for (l, tv) in values.iter().enumerate() {
        let cells: Vec<String> = tv.value.iter().map(|&v| real(v)).collect();
        let _ = writeln!(out, "{l},{},{}", cells.join(","), tv.jump_count);
    }
    out
}

/// Parsed rows and footer of a table written by [`table_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTable {
    pub rows: Vec<[f64; 5]>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub predicted_slope: Option<f64>,
}

pub fn parse_table_csv(text: &str) -> Option<ParsedTable> {
    let mut lines = text.lines();
    if lines.next()? != TABLE_HEADER {
        return None;
    }
    let mut table = ParsedTable {
        rows: Vec::new(),
        slope: None,
        intercept: None,
        predicted_slope: None,
    };
    for line in lines {
        if let Some(footer) = line.strip_prefix("# ") {
            let (key, value) = footer.split_once(',')?;
            let value = if value == "undefined" { None } else { Some(value.parse().ok()?) };
            match key {
                "slope" => table.slope = value,
                "intercept" => table.intercept = value,
                "predicted_slope" => table.predicted_slope = value,
                _ => return None,
            }
        } else {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().ok()).collect::<Option<_>>()?;
            table.rows.push(cells.try_into().ok()?);
        }
    }
    Some(table)
}
