//! CSV bound traces.
//!
//! Columns: `t,step_estimate,running_estimate,lower_bound,upper_bound_source,eta_t,v_t,alarm`.
//! Reals use the shortest decimal form that parses back to the same `f64`;
//! `alarm` is `0` or `1`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::monitors::BoundTrace;

pub const HEADER: &str =
    "t,step_estimate,running_estimate,lower_bound,upper_bound_source,eta_t,v_t,alarm";

pub fn write_header(mut w: impl Write) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    Ok(())
}

pub fn write_row(mut w: impl Write, r: &BoundTrace) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        r.t,
        r.step_estimate,
        r.running_estimate,
        r.lower_bound,
        r.upper_bound_source,
        r.eta_t,
        r.v_t,
        u8::from(r.alarm)
    )?;
    Ok(())
}

pub fn write_trace(mut w: impl Write, rows: &[BoundTrace]) -> Result<()> {
    write_header(&mut w)?;
    for r in rows {
        write_row(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(reader: impl BufRead) -> Result<Vec<BoundTrace>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if n == 1 {
            if line != HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header '{HEADER}'"),
                });
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: n,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let real = |k: usize| -> Result<f64> {
            fields[k].parse().map_err(|_| Error::Parse {
                line: n,
                message: format!("'{}' is not a number", fields[k]),
            })
        };
        rows.push(BoundTrace {
            t: fields[0].parse().map_err(|_| Error::Parse {
                line: n,
                message: format!("'{}' is not a time index", fields[0]),
            })?,
            step_estimate: real(1)?,
            running_estimate: real(2)?,
            lower_bound: real(3)?,
            upper_bound_source: real(4)?,
            eta_t: real(5)?,
            v_t: real(6)?,
            alarm: match fields[7] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line: n,
                        message: format!("alarm must be 0 or 1, found '{other}'"),
                    })
                }
            },
        });
    }
    Ok(rows)
}
