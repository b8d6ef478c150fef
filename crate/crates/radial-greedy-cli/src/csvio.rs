//! Bit-exact records CSV: fixed column order, 17 significant digits per
//! value, empty fields for absent optionals. Parsing an emitted file
//! reproduces the in-memory records exactly.

use std::path::Path;

use radial_greedy::IterateRecord;

use crate::CliError;

pub const HEADER: &str = "m,energy,decrease,step_norm,stationarity,grad_dual_norm,gap,atom_summary";

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

pub fn records_to_string(records: &[IterateRecord]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        assert!(
            !r.atom_summary.contains(','),
            "atom summaries never contain commas"
        );
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.m,
            fmt(r.energy),
            fmt(r.decrease),
            fmt(r.step_norm),
            fmt(r.stationarity),
            fmt_opt(r.grad_dual_norm),
            fmt_opt(r.gap),
            r.atom_summary
        ));
    }
    out
}

pub fn write_records(path: &Path, records: &[IterateRecord]) -> Result<(), CliError> {
    std::fs::write(path, records_to_string(records))
        .map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

fn parse_f64(field: &str, what: &str, line: usize) -> Result<f64, CliError> {
    field
        .parse()
        .map_err(|_| CliError::failure(format!("records line {line}: bad {what} '{field}'")))
}

fn parse_opt(field: &str, what: &str, line: usize) -> Result<Option<f64>, CliError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, what, line).map(Some)
    }
}

pub fn parse_records(text: &str) -> Result<Vec<IterateRecord>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        other => {
            return Err(CliError::failure(format!(
                "records header mismatch: {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let n = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(CliError::failure(format!(
                "records line {n}: expected 8 fields, found {}",
                fields.len()
            )));
        }
        out.push(IterateRecord {
            m: fields[0]
                .parse()
                .map_err(|_| CliError::failure(format!("records line {n}: bad m '{}'", fields[0])))?,
            energy: parse_f64(fields[1], "energy", n)?,
            decrease: parse_f64(fields[2], "decrease", n)?,
            step_norm: parse_f64(fields[3], "step_norm", n)?,
            stationarity: parse_f64(fields[4], "stationarity", n)?,
            grad_dual_norm: parse_opt(fields[5], "grad_dual_norm", n)?,
            gap: parse_opt(fields[6], "gap", n)?,
            atom_summary: fields[7].to_string(),
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<IterateRecord>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::failure(format!("cannot read {}: {e}", path.display())))?;
    parse_records(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_lossless() {
        let records = vec![
            IterateRecord {
                m: 1,
                energy: -1.0,
                decrease: 1.0,
                step_norm: 1.0,
                stationarity: 0.0,
                grad_dual_norm: Some(1.0),
                gap: Some(0.5),
                atom_summary: "basis[0];lambda=1.000000000e0".into(),
            },
            IterateRecord {
                m: 2,
                energy: -1.5 + 3e-17,
                decrease: 0.4999999999999999,
                step_norm: 1e-300,
                stationarity: -2.220446049250313e-16,
                grad_dual_norm: None,
                gap: None,
                atom_summary: "zero".into(),
            },
        ];
        let text = records_to_string(&records);
        let back = parse_records(&text).unwrap();
        assert_eq!(records, back);
        // and the serialization itself is deterministic
        assert_eq!(text, records_to_string(&back));
    }
}
