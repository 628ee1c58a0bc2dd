//! CSV output of a closed-loop run.
//!
//! Header `k,t,x_0..x_{n-1},u_0..u_{q-1},sqp_iters,phase2,best_shot,wall_time,converged`,
//! one row per sample, reals printed with 12 significant digits, flags as
//! `0`/`1`.

use std::path::Path;

use crate::error::{BenchError, Result};
use crate::sim::StepRecord;

/// Formats a real with 12 significant digits, trailing zeros trimmed, in
/// the style of C's `%.12g`.
pub fn fmt_real(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.11e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn header(nx: usize, nu: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "t".to_string()];
    h.extend((0..nx).map(|i| format!("x_{i}")));
    h.extend((0..nu).map(|i| format!("u_{i}")));
    h.extend(["sqp_iters", "phase2", "best_shot", "wall_time", "converged"].map(String::from));
    h
}

/// Renders records as CSV text. An empty run needs explicit dimensions for
/// the header.
pub fn to_csv(records: &[StepRecord], nx: usize, nu: usize) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header(nx, nu)).expect("in-memory write");
    for r in records {
        let mut row = vec![r.k.to_string(), fmt_real(r.t)];
        row.extend(r.state.iter().map(|v| fmt_real(*v)));
        row.extend(r.input.iter().map(|v| fmt_real(*v)));
        row.push(r.sqp_iters.to_string());
        row.push(u8::from(r.phase2).to_string());
        row.push(r.best_shot.to_string());
        row.push(fmt_real(r.wall_time));
        row.push(u8::from(r.converged).to_string());
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("ascii output")
}

pub fn write_results(records: &[StepRecord], nx: usize, nu: usize, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(records, nx, nu)).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_results(path: &Path) -> Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text).map_err(|msg| BenchError::Format {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn parse_csv(text: &str) -> std::result::Result<Vec<StepRecord>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let head = reader.headers().map_err(|e| e.to_string())?.clone();
    let nx = head.iter().filter(|h| h.starts_with("x_")).count();
    let nu = head.iter().filter(|h| h.starts_with("u_")).count();
    if head.iter().collect::<Vec<_>>() != header(nx, nu).iter().map(String::as_str).collect::<Vec<_>>() {
        return Err("unexpected header".into());
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let line = i + 2;
        let real = |j: usize| {
            row.get(j)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| format!("line {line}: bad value in column {}", head.get(j).unwrap_or("?")))
        };
        let int = |j: usize| real(j).map(|v| v as usize);
        let base = 2 + nx + nu;
        out.push(StepRecord {
            k: int(0)?,
            t: real(1)?,
            state: (2..2 + nx).map(real).collect::<std::result::Result<_, _>>()?,
            input: (2 + nx..base).map(real).collect::<std::result::Result<_, _>>()?,
            sqp_iters: int(base)?,
            phase2: real(base + 1)? != 0.0,
            best_shot: int(base + 2)?,
            wall_time: real(base + 3)?,
            converged: real(base + 4)? != 0.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(k: usize) -> StepRecord {
        StepRecord {
            k,
            t: k as f64 * 0.02,
            state: vec![std::f64::consts::PI, -1.0 / 3.0, 1e-7, 123456.789],
            input: vec![-2.5e-13],
            sqp_iters: 3,
            phase2: k % 2 == 1,
            best_shot: 2,
            wall_time: 0.0,
            converged: true,
        }
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_real(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_real(0.02), "0.02");
        assert_eq!(fmt_real(-1.0 / 3.0), "-0.333333333333");
        assert_eq!(fmt_real(1e-7), "1e-07");
        assert_eq!(fmt_real(2.5e20), "2.5e+20");
        assert_eq!(fmt_real(100.0), "100");
        assert_eq!(fmt_real(0.0), "0");
    }

    #[test]
    fn empty_and_single_runs() {
        let text = to_csv(&[], 4, 1);
        assert_eq!(text, "k,t,x_0,x_1,x_2,x_3,u_0,sqp_iters,phase2,best_shot,wall_time,converged\n");
        let text = to_csv(&[sample(0)], 4, 1);
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn round_trip() {
        let records: Vec<StepRecord> = (0..5).map(sample).collect();
        let back = parse_csv(&to_csv(&records, 4, 1)).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!((a.k, a.sqp_iters, a.phase2, a.best_shot, a.converged), (b.k, b.sqp_iters, b.phase2, b.best_shot, b.converged));
            for (x, y) in a.state.iter().chain(&a.input).chain([&a.t]).zip(b.state.iter().chain(&b.input).chain([&b.t])) {
                assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
            }
        }
    }
}
