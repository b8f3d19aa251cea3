//! Deterministic text rendering: CSV tables with `#`-prefixed metadata above
//! the header row, fixed column order, `{:.12e}` floats, and LF endings.
//! Identical inputs must produce byte-identical files.

use std::fmt::Write as _;

pub const SCHEMA_VERSION: &str = "1";

/// Scientific notation with 12 fractional digits; the one float format used
/// in every output file.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.12e}")
}

/// Metadata block: schema version, subcommand, units note, and the resolved
/// config echo. Every output starts with this, so each file is
/// self-describing and reproducible from its own header.
pub fn metadata_header(subcommand: &str, echo: &[(String, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# ionkerr schema_version = {SCHEMA_VERSION}");
    let _ = writeln!(s, "# subcommand = {subcommand}");
    let _ = writeln!(
        s,
        "# units: time in s, angles in rad, frequencies as *_hz (ordinary) and *_rad_s (angular)"
    );
    for (k, v) in echo {
        let _ = writeln!(s, "# config.{k} = {v}");
    }
    s
}

/// One CSV table: header row then data rows, appended below a metadata block.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// `key = value` report block (used for gate and regime text reports).
pub fn kv_block(entries: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}
