//! CSV import and export for every artifact the lab produces.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! density read back from disk is bit-identical to the one written.

use std::io::{Read, Write};

use crate::bmo::BmoReport;
use crate::error::{invalid, Error, Result};
use crate::fields::{Domain, Grid, GriddedDensity};
use crate::flow::FlowMap;
use crate::gronwall::Certificate;

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(out)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn parse<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Config(format!("bad or missing {what} in density CSV")))
}

/// Header line `d,n,L,t`, its values, then `i1..id,value` per cell.
pub fn write_density<W: Write>(u: &GriddedDensity, out: W) -> Result<()> {
    let grid = u.grid();
    let d = grid.dim();
    let mut w = writer(out);
    w.write_record(["d", "n", "L", "t"])?;
    w.write_record([d.to_string(), grid.n().to_string(), num(grid.domain().half_width()), num(u.time())])?;
    let mut head: Vec<String> = (1..=d).map(|k| format!("i{k}")).collect();
    head.push("value".into());
    w.write_record(&head)?;
    for (i, v) in u.values().iter().enumerate() {
        let idx = grid.multi_index(i);
        let mut row: Vec<String> = idx[..d].iter().map(|k| k.to_string()).collect();
        row.push(num(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a density written by [`write_density`]. The time horizon and step
/// are not part of the format, so the grid gets horizon `max(t, 1)` and a
/// single step.
pub fn read_density<R: Read>(input: R) -> Result<GriddedDensity> {
    let mut r = csv::ReaderBuilder::new().flexible(true).has_headers(false).from_reader(input);
    let mut records = r.records();
    let mut next = || -> Result<csv::StringRecord> {
        records.next().ok_or_else(|| Error::Config("truncated density CSV".into()))?.map_err(Error::from)
    };
    next()?;
    let meta = next()?;
    let d: usize = parse(meta.get(0), "d")?;
    let n: usize = parse(meta.get(1), "n")?;
    let l: f64 = parse(meta.get(2), "L")?;
    let t: f64 = parse(meta.get(3), "t")?;
    let horizon = t.max(1.0);
    let grid = Grid::new(Domain::new(d, l, horizon)?, n, horizon)?;
    next()?;
    let mut values = vec![f64::NAN; grid.cells()];
    for rec in records {
        let rec = rec?;
        if rec.len() != d + 1 {
            return invalid(format!("density row has {} fields, expected {}", rec.len(), d + 1));
        }
        let mut idx = [0usize; crate::fields::MAX_DIM];
        for k in 0..d {
            idx[k] = parse(rec.get(k), "cell index")?;
            if idx[k] >= n {
                return invalid(format!("cell index {} out of range", idx[k]));
            }
        }
        values[grid.flat_index(&idx[..d])] = parse(rec.get(d), "value")?;
    }
    if values.iter().any(|v| v.is_nan()) {
        return invalid("density CSV does not cover every cell");
    }
    GriddedDensity::new(grid, t, values)
}

/// `seed_index,t,x_1..x_d,logJ,dampInt`.
pub fn write_flow_map<W: Write>(flow: &FlowMap, out: W) -> Result<()> {
    let d = flow.dim;
    let mut w = writer(out);
    let mut head = vec!["seed_index".to_string(), "t".into()];
    head.extend((1..=d).map(|k| format!("x_{k}")));
    head.extend(["logJ".to_string(), "dampInt".into()]);
    w.write_record(&head)?;
    for (i, tr) in flow.trajectories.iter().enumerate() {
        for (k, &t) in flow.times.iter().enumerate() {
            let mut row = vec![i.to_string(), num(t)];
            row.extend(tr.position(k).iter().map(|v| num(*v)));
            row.push(num(tr.log_j[k]));
            row.push(num(tr.damp_int[k]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row of a residual or mismatch study.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub delta: f64,
    pub radius: f64,
    pub h: f64,
    pub dt: f64,
    pub value: f64,
}

pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["scenario", "delta", "R", "h", "dt", "value"])?;
    for r in rows {
        w.write_record([r.scenario.clone(), num(r.delta), num(r.radius), num(r.h), num(r.dt), num(r.value)])?;
    }
    w.flush()?;
    Ok(())
}

/// `n,h,dt,error` per level and a final `order` row.
pub fn write_convergence<W: Write>(levels: &[(usize, f64, f64, f64)], order: f64, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["n", "h", "dt", "error"])?;
    for (n, h, dt, e) in levels {
        w.write_record([n.to_string(), num(*h), num(*dt), num(*e)])?;
    }
    w.write_record(["order".to_string(), num(order)])?;
    w.flush()?;
    Ok(())
}

/// `cube_id,depth,shifted,oscillation` per cube and a summary row.
pub fn write_bmo_cubes<W: Write>(report: &BmoReport, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["cube_id", "depth", "shifted", "oscillation"])?;
    for (i, s) in report.cubes.iter().enumerate() {
        w.write_record([i.to_string(), s.cube.depth.to_string(), (s.cube.shifted as u8).to_string(), num(s.oscillation)])?;
    }
    let jn = &report.jn;
    w.write_record(["summary", "seminorm", "l1_norm", "a_fit", "b_fit", "c_fit", "C_fit", "log_rms"])?;
    w.write_record([
        "summary".to_string(),
        num(report.seminorm_lb),
        num(report.l1_norm),
        num(report.a_fit()),
        num(jn.b_fit),
        num(report.decay.c_fit),
        num(report.decay.big_c_fit),
        num(jn.log_rms),
    ])?;
    w.flush()?;
    Ok(())
}

/// Two-column scan, e.g. `(r, tail)` or `(λ, deficit)`.
pub fn write_scan<W: Write>(names: [&str; 2], rows: &[(f64, f64)], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(names)?;
    for (a, b) in rows {
        w.write_record([num(*a), num(*b)])?;
    }
    w.flush()?;
    Ok(())
}

/// The sweep `lambda,R,delta,t,Gamma,bound` and a closing verdict line.
pub fn write_certificate<W: Write>(cert: &Certificate, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["lambda", "R", "delta", "t", "Gamma", "bound"])?;
    for r in &cert.sweep {
        w.write_record([num(r.lambda), num(r.radius), num(r.delta), num(r.t), num(r.gamma), num(r.bound)])?;
    }
    w.write_record(["window_start", "window_end", "lambda", "R", "gamma_slope", "bound_slope", "tolerance", "exceeded"])?;
    for win in &cert.windows {
        let opt = |v: Option<f64>| v.map_or_else(String::new, num);
        w.write_record([
            num(win.start),
            num(win.end),
            opt(win.lambda),
            opt(win.radius),
            num(win.gamma_slope),
            num(win.bound_slope),
            num(win.tolerance),
            win.exceeded.to_string(),
        ])?;
    }
    let wit = &cert.witness;
    w.write_record(["verdict", "scenario", "m", "gamma", "R0", "t", "noise"])?;
    w.write_record([
        cert.verdict.as_str().to_string(),
        cert.scenario.clone(),
        num(wit.m),
        num(wit.gamma),
        num(wit.r0),
        num(wit.t),
        num(cert.noise),
    ])?;
    w.flush()?;
    Ok(())
}
