use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

/// Which recursion produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoopKind {
    Aqgd,
    Naqgd,
    /// Unquantized gradient descent.
    Gd,
    /// Quantizes the raw gradient with a fixed range.
    StaticGd,
}

/// One row per iterate. `innov_norm` and `e_norm` belong to the step taken at
/// `t`, so the final row of a run has neither.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub f_gap: f64,
    pub grad_norm: f64,
    pub range: f64,
    pub innov_norm: Option<f64>,
    pub e_norm: Option<f64>,
    pub potential: f64,
    pub bits_cum: u64,
}

/// Everything a checker needs to re-derive the per-step guarantees.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub kind: LoopKind,
    pub alpha: f64,
    pub gamma: f64,
    pub smoothness: f64,
    pub pl_constant: Option<f64>,
    pub frame_bits: usize,
    pub eps: Option<Vec<f64>>,
    pub records: Vec<TraceRecord>,
    /// Innovations clipped back into range under the clipping policy.
    pub clipped: usize,
}

pub const CSV_HEADER: &str = "t,f_gap,grad_norm,R_t,innov_norm,e_norm,V_t,bits_cum";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn fmt_real(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

impl TraceRecord {
    pub fn to_csv_line(&self) -> String {
        let mut s = String::with_capacity(160);
        write!(s, "{},", self.t).unwrap();
        for v in [self.f_gap, self.grad_norm, self.range] {
            fmt_real(&mut s, v);
            s.push(',');
        }
        for v in [self.innov_norm, self.e_norm] {
            if let Some(v) = v {
                fmt_real(&mut s, v);
            }
            s.push(',');
        }
        fmt_real(&mut s, self.potential);
        write!(s, ",{}", self.bits_cum).unwrap();
        s
    }

    pub fn parse_csv_line(line: &str) -> Result<Self, String> {
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 8 {
            return Err(format!("expected 8 columns, found {}", cols.len()));
        }
        let real = |i: usize| cols[i].parse::<f64>().map_err(|e| format!("column {i}: {e}"));
        let opt = |i: usize| {
            if cols[i].is_empty() {
                Ok(None)
            } else {
                real(i).map(Some)
            }
        };
        Ok(Self {
            t: cols[0].parse().map_err(|e| format!("column 0: {e}"))?,
            f_gap: real(1)?,
            grad_norm: real(2)?,
            range: real(3)?,
            innov_norm: opt(4)?,
            e_norm: opt(5)?,
            potential: real(6)?,
            bits_cum: cols[7].parse().map_err(|e| format!("column 7: {e}"))?,
        })
    }
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f_gap).collect()
    }

    pub fn total_bits(&self) -> u64 {
        self.last().bits_cum
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{}", r.to_csv_line())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<TraceRecord>, CsvError> {
    let mut rows = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != CSV_HEADER {
                return Err(CsvError::Parse {
                    line: 1,
                    msg: "unexpected header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(TraceRecord::parse_csv_line(&line).map_err(|msg| CsvError::Parse { line: n + 1, msg })?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            Just(0.0),
            Just(f64::MIN_POSITIVE)
        ]
    }

    proptest! {
        #[test]
        fn csv_line_round_trips_exactly(
            t in 0usize..100_000, a in finite(), b in finite(), c in finite(),
            d in proptest::option::of(finite()), e in proptest::option::of(finite()),
            v in finite(), bits in any::<u64>(),
        ) {
            let r = TraceRecord { t, f_gap: a, grad_norm: b, range: c, innov_norm: d, e_norm: e, potential: v, bits_cum: bits };
            let back = TraceRecord::parse_csv_line(&r.to_csv_line()).unwrap();
            prop_assert_eq!(back.f_gap.to_bits(), a.to_bits());
            prop_assert_eq!(back.grad_norm.to_bits(), b.to_bits());
            prop_assert_eq!(back, r);
        }
    }

    #[test]
    fn empty_optional_columns() {
        let r = TraceRecord {
            t: 3,
            f_gap: 0.5,
            grad_norm: 1.0,
            range: 2.0,
            innov_norm: None,
            e_norm: None,
            potential: 0.75,
            bits_cum: 12,
        };
        let line = r.to_csv_line();
        assert!(line.contains(",,,") || line.matches(',').count() == 7);
        assert_eq!(TraceRecord::parse_csv_line(&line).unwrap(), r);
        assert!(read_csv("bogus\n".as_bytes()).is_err());
    }
}
