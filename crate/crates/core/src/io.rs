//! Plain-text field files and float formatting for tabular output.
//!
//! A field file is a `#`-prefixed header followed by one CSV row per node:
//!
//! ```text
//! # qdgf-field v1
//! # dims: 2
//! # extents: 3.0000000000000000e0,3.0000000000000000e0
//! # points: 5,5
//! # components: 1
//! # kind: complex
//! # columns: i0,i1,x0,x1,c0_re,c0_im
//! 0,0,-3.0000000000000000e0,-3.0000000000000000e0,1.2…e-1,0.0000000000000000e0
//! ```
//!
//! `extents` are the half-widths `L_k` of the box `[-L_k, L_k]`. Rows follow
//! the grid's node order. Floats carry 17 significant digits, so a write/read
//! round trip is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::concentration::ConcentrationCurve;
use crate::grid::{Field, FieldKind, FieldValues, Grid};
use crate::spectral::SignedSpectrum;
use crate::{Error, Result, Sign};

pub const FIELD_MAGIC: &str = "# qdgf-field v1";

/// Float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Spectrum table: `index,branch,eigenvalue,cluster_id`, positive branch first.
pub fn spectrum_csv(spectrum: &SignedSpectrum) -> String {
    let mut out = String::from("index,branch,eigenvalue,cluster_id\n");
    for (n, (&l, &c)) in spectrum.eigenvalues().iter().zip(spectrum.cluster_ids()).enumerate() {
        let branch = if spectrum.branch_range(Sign::Plus).contains(&n) { Sign::Plus } else { Sign::Minus };
        out.push_str(&format!("{n},{branch},{},{c}\n", fmt_f64(l)));
    }
    out
}

/// Concentration table: `u,method,epsilon,p_exceed,p_err,ess,median_D,frac_below_eps`.
pub fn curve_csv(curve: &ConcentrationCurve) -> String {
    let mut out = String::from("u,method,epsilon,p_exceed,p_err,ess,median_D,frac_below_eps\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(p.u),
            p.method,
            fmt_f64(curve.epsilon),
            fmt_f64(p.p_exceed),
            fmt_f64(p.p_err),
            fmt_f64(p.ess),
            fmt_f64(p.median_d),
            fmt_f64(p.frac_below_eps)
        ));
    }
    out
}

fn column_names(grid: &Grid) -> Vec<String> {
    let d = grid.dim();
    let mut cols: Vec<String> = (0..d).map(|k| format!("i{k}")).collect();
    cols.extend((0..d).map(|k| format!("x{k}")));
    for m in 0..grid.components() {
        match grid.kind() {
            FieldKind::Real => cols.push(format!("c{m}")),
            FieldKind::Complex => {
                cols.push(format!("c{m}_re"));
                cols.push(format!("c{m}_im"));
            }
        }
    }
    cols
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_field<W: Write>(mut w: W, field: &Field) -> Result<()> {
    let g = field.grid();
    writeln!(w, "{FIELD_MAGIC}")?;
    writeln!(w, "# dims: {}", g.dim())?;
    writeln!(w, "# extents: {}", join(g.half_widths().iter().map(|&l| fmt_f64(l))))?;
    writeln!(w, "# points: {}", join(g.points_per_axis()))?;
    writeln!(w, "# components: {}", g.components())?;
    writeln!(w, "# kind: {}", g.kind())?;
    writeln!(w, "# columns: {}", column_names(g).join(","))?;
    let nc = g.components();
    for node in 0..g.node_count() {
        let mut row: Vec<String> = g.multi_index(node).iter().map(|i| i.to_string()).collect();
        row.extend(g.coords(node).into_iter().map(fmt_f64));
        for m in 0..nc {
            let v = field.values().get(node * nc + m);
            row.push(fmt_f64(v.re));
            if g.kind() == FieldKind::Complex {
                row.push(fmt_f64(v.im));
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn header_value<R: BufRead>(lines: &mut std::io::Lines<R>, key: &str) -> Result<String> {
    let line = lines.next().ok_or_else(|| format_err(format!("missing header line `{key}`")))??;
    let rest = line
        .strip_prefix("# ")
        .and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix(':'))
        .ok_or_else(|| format_err(format!("expected header `# {key}: …`, found {line:?}")))?;
    Ok(rest.trim().to_string())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| format_err(format!("bad {what} entry {x:?}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse::<T>().map_err(|_| format_err(format!("bad {what} {s:?}")))
}

pub fn read_field<R: BufRead>(r: R) -> Result<Field> {
    let mut lines = r.lines();
    let magic = lines.next().ok_or_else(|| format_err("empty file"))??;
    if magic.trim_end() != FIELD_MAGIC {
        return Err(format_err(format!("not a field file (first line {magic:?})")));
    }
    let dims: usize = parse_one(&header_value(&mut lines, "dims")?, "dims")?;
    let extents: Vec<f64> = parse_list(&header_value(&mut lines, "extents")?, "extent")?;
    let points: Vec<usize> = parse_list(&header_value(&mut lines, "points")?, "point count")?;
    let components: usize = parse_one(&header_value(&mut lines, "components")?, "component count")?;
    let kind: FieldKind = header_value(&mut lines, "kind")?.parse().map_err(|_| format_err("bad kind"))?;
    if extents.len() != dims || points.len() != dims {
        return Err(format_err(format!(
            "dims is {dims} but {} extents and {} point counts given",
            extents.len(),
            points.len()
        )));
    }
    let grid = Arc::new(Grid::new(&extents, &points, components, kind)?);
    let columns = header_value(&mut lines, "columns")?;
    let expected = column_names(&grid);
    if columns != expected.join(",") {
        return Err(format_err(format!("column header {columns:?} does not match {:?}", expected.join(","))));
    }
    let width = expected.len();
    let mut re = Vec::with_capacity(grid.len());
    let mut im = Vec::with_capacity(if kind == FieldKind::Complex { grid.len() } else { 0 });
    for node in 0..grid.node_count() {
        let line = lines
            .next()
            .ok_or_else(|| format_err(format!("truncated: {node} of {} rows present", grid.node_count())))??;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(format_err(format!("row {node}: {} columns, expected {width}", cells.len())));
        }
        let idx: Vec<usize> = cells[..dims]
            .iter()
            .map(|c| parse_one(c.trim(), "node index"))
            .collect::<Result<_>>()?;
        if idx != grid.multi_index(node) {
            return Err(format_err(format!("row {node}: node index {idx:?} out of order")));
        }
        let vals: Vec<f64> = cells[2 * dims..].iter().map(|c| parse_one(c.trim(), "value")).collect::<Result<_>>()?;
        match kind {
            FieldKind::Real => re.extend(vals),
            FieldKind::Complex => {
                for pair in vals.chunks(2) {
                    re.push(pair[0]);
                    im.push(pair[1]);
                }
            }
        }
    }
    if let Some(extra) = lines.find(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty())) {
        extra?;
        return Err(format_err("trailing rows after the last node"));
    }
    let values = match kind {
        FieldKind::Real => FieldValues::Real(re),
        FieldKind::Complex => FieldValues::Complex(re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()),
    };
    Field::new(grid, values)
}

pub fn save_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    write_field(BufWriter::new(File::create(path)?), field)
}

/// Reads a field file, rejecting it when its kind differs from `expected`.
pub fn load_field(path: impl AsRef<Path>, expected: Option<FieldKind>) -> Result<Field> {
    let f = read_field(BufReader::new(File::open(path)?))?;
    match expected {
        Some(k) if k != f.kind() => Err(Error::KindMismatch(format!("file holds a {} field, expected {k}", f.kind()))),
        _ => Ok(f),
    }
}
