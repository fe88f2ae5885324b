//! Per-iteration trace CSV.

use std::path::Path;

use sam_core::solver::TraceRecord;

use crate::error::{CliError, Result};

pub const COLUMNS: [&str; 9] = [
    "iteration",
    "f_gap",
    "effective_data_passes",
    "batch_size_I",
    "batch_size_J",
    "delta",
    "rho",
    "accepted",
    "evaluated",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub f_gap: f64,
    pub effective_data_passes: f64,
    pub batch_size_i: usize,
    pub batch_size_j: usize,
    pub delta: f64,
    pub rho: f64,
    pub accepted: bool,
    /// Hexadecimal mask, bit `i` set when component `i` was evaluated.
    pub evaluated: String,
}

impl TraceRow {
    pub fn from_record(r: &TraceRecord, p: usize) -> Self {
        Self {
            iteration: r.iteration,
            f_gap: r.f_gap,
            effective_data_passes: r.effective_data_passes,
            batch_size_i: r.batch_size_i,
            batch_size_j: r.batch_size_j,
            delta: r.delta,
            rho: r.rho,
            accepted: r.accepted,
            evaluated: index_mask(&r.evaluated, p),
        }
    }

    fn fields(&self) -> [String; 9] {
        [
            self.iteration.to_string(),
            format_real(self.f_gap),
            format_real(self.effective_data_passes),
            self.batch_size_i.to_string(),
            self.batch_size_j.to_string(),
            format_real(self.delta),
            format_real(self.rho),
            u8::from(self.accepted).to_string(),
            self.evaluated.clone(),
        ]
    }
}

/// 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Mask of `indices` over `p` components as `⌈p/4⌉` hex digits, most
/// significant first.
pub fn index_mask(indices: &[usize], p: usize) -> String {
    let digits = p.div_ceil(4).max(1);
    let mut nibbles = vec![0u8; digits];
    for &i in indices {
        nibbles[i / 4] |= 1 << (i % 4);
    }
    nibbles
        .iter()
        .rev()
        .map(|&b| char::from_digit(u32::from(b), 16).expect("nibble"))
        .collect()
}

pub fn parse_mask(mask: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for (k, c) in mask.chars().rev().enumerate() {
        let b = c.to_digit(16)?;
        out.extend((0..4).filter(|bit| b & (1 << bit) != 0).map(|bit| 4 * k + bit));
    }
    Some(out)
}

pub fn to_csv_bytes(rows: &[TraceRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let wrap = |e| CliError::Csv {
        path: "<memory>".into(),
        source: e,
    };
    w.write_record(COLUMNS).map_err(wrap)?;
    for row in rows {
        w.write_record(row.fields()).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| CliError::io("<memory>", e.into_error()))
}

pub fn read_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Csv {
        path: path.into(),
        source: e,
    })?;
    let bad = |reason: String| CliError::Trace {
        path: path.into(),
        reason,
    };
    let header = r
        .headers()
        .map_err(|e| CliError::Csv {
            path: path.into(),
            source: e,
        })?
        .clone();
    if header.iter().ne(COLUMNS) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Csv {
            path: path.into(),
            source: e,
        })?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let real = |k: usize| {
            field(k)
                .parse::<f64>()
                .map_err(|_| bad(format!("row {line}: bad {} `{}`", COLUMNS[k], field(k))))
        };
        let int = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|_| bad(format!("row {line}: bad {} `{}`", COLUMNS[k], field(k))))
        };
        let accepted = match field(7) {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("row {line}: bad accepted `{other}`"))),
        };
        let evaluated = field(8).to_owned();
        if parse_mask(&evaluated).is_none() {
            return Err(bad(format!("row {line}: bad evaluated mask `{evaluated}`")));
        }
        rows.push(TraceRow {
            iteration: int(0)?,
            f_gap: real(1)?,
            effective_data_passes: real(2)?,
            batch_size_i: int(3)?,
            batch_size_j: int(4)?,
            delta: real(5)?,
            rho: real(6)?,
            accepted,
            evaluated,
        });
    }
    Ok(rows)
}
