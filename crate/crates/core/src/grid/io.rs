//! Field files.
//!
//! CSV: the first line holds `n,nx,nt,extent,t_min,t_max`, then one line
//! `t_index,flat_space_index,re,im` per sample. Floats are written with 17
//! significant digits so a write/read cycle is lossless.
//!
//! Binary (little endian): `nx: u32`, `nt: u32`, `n: u8`, `extent: f64`,
//! `t_min: f64`, `t_max: f64`, then `nt * nx^n` pairs `(re: f64, im: f64)`
//! in time-major, row-major order.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use super::{make_grid, GridSpec, SpaceTimeField};
use crate::error::{Error, Result};

pub const CSV_HEADER_LABELS: &str = "n,nx,nt,extent,t_min,t_max";
const BINARY_HEADER_LEN: usize = 4 + 4 + 1 + 3 * 8;

/// Header and samples as stored, before any grid validation.
#[derive(Debug, Clone)]
pub struct RawField {
    pub spec: GridSpec,
    pub values: Vec<Complex64>,
}

impl RawField {
    pub fn into_field(self) -> Result<SpaceTimeField> {
        let grid = make_grid(self.spec)?;
        SpaceTimeField::from_values(grid, self.values)
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(field: &SpaceTimeField, out: W) -> Result<()> {
    write_csv_raw(field.grid().spec(), field.values(), out)
}

fn write_csv_raw<W: Write>(spec: &GridSpec, values: &[Complex64], out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(
        w,
        "{},{},{},{},{},{}",
        spec.n,
        spec.nx,
        spec.nt,
        fmt_f64(spec.extent),
        fmt_f64(spec.t_min),
        fmt_f64(spec.t_max)
    )?;
    let npts = spec.npts();
    for (idx, v) in values.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            idx / npts,
            idx % npts,
            fmt_f64(v.re),
            fmt_f64(v.im)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse {what} from '{s}'")))
}

pub fn read_csv_raw<R: Read>(input: R) -> Result<RawField> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) if l.trim().is_empty() || l.starts_with('#') => None,
        other => Some((i + 1, other)),
    });

    let (mut lineno, mut header) = match lines.next() {
        Some((i, l)) => (i, l?),
        None => return Err(Error::Format("empty file".into())),
    };
    if header.trim() == CSV_HEADER_LABELS {
        match lines.next() {
            Some((i, l)) => {
                lineno = i;
                header = l?;
            }
            None => return Err(Error::Format("missing header values".into())),
        }
    }
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() != 6 {
        return Err(Error::Format(format!(
            "line {lineno}: header needs 6 fields ({CSV_HEADER_LABELS}), found {}",
            cols.len()
        )));
    }
    let spec = GridSpec {
        n: parse(cols[0], "n", lineno)?,
        nx: parse(cols[1], "nx", lineno)?,
        nt: parse(cols[2], "nt", lineno)?,
        extent: parse(cols[3], "extent", lineno)?,
        t_min: parse(cols[4], "t_min", lineno)?,
        t_max: parse(cols[5], "t_max", lineno)?,
    };
    if spec.n == 0 || spec.n > 2 || spec.nx == 0 || spec.nt == 0 {
        return Err(Error::Format(format!(
            "line {lineno}: invalid header {header}"
        )));
    }
    let npts = spec.npts();
    let total = spec.nt * npts;
    let mut values = vec![Complex64::new(0.0, 0.0); total];
    let mut seen = vec![false; total];
    for (lineno, line) in lines {
        let line = line?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Format(format!(
                "line {lineno}: expected 4 fields, found {}",
                cols.len()
            )));
        }
        let ti: usize = parse(cols[0], "t_index", lineno)?;
        let si: usize = parse(cols[1], "flat_space_index", lineno)?;
        if ti >= spec.nt || si >= npts {
            return Err(Error::Format(format!(
                "line {lineno}: index ({ti}, {si}) out of range"
            )));
        }
        let idx = ti * npts + si;
        if seen[idx] {
            return Err(Error::Format(format!(
                "line {lineno}: duplicate sample ({ti}, {si})"
            )));
        }
        seen[idx] = true;
        values[idx] = Complex64::new(parse(cols[2], "re", lineno)?, parse(cols[3], "im", lineno)?);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!(
            "missing sample ({}, {}); expected {total} lines",
            missing / npts,
            missing % npts
        )));
    }
    Ok(RawField { spec, values })
}

pub fn read_csv<R: Read>(input: R) -> Result<SpaceTimeField> {
    read_csv_raw(input)?.into_field()
}

pub fn write_binary<W: Write>(field: &SpaceTimeField, out: W) -> Result<()> {
    let spec = field.grid().spec();
    let mut w = BufWriter::new(out);
    w.write_all(&(spec.nx as u32).to_le_bytes())?;
    w.write_all(&(spec.nt as u32).to_le_bytes())?;
    w.write_all(&[spec.n as u8])?;
    for x in [spec.extent, spec.t_min, spec.t_max] {
        w.write_all(&x.to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary_raw<R: Read>(mut input: R) -> Result<RawField> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(Error::Format(format!(
            "binary field shorter than the {BINARY_HEADER_LEN}-byte header"
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let spec = GridSpec {
        nx: u32_at(0) as usize,
        nt: u32_at(4) as usize,
        n: bytes[8] as usize,
        extent: f64_at(9),
        t_min: f64_at(17),
        t_max: f64_at(25),
    };
    if spec.n == 0 || spec.n > 2 {
        return Err(Error::Format(format!("invalid dimension n = {}", spec.n)));
    }
    let total = spec.nt * spec.npts();
    let body = &bytes[BINARY_HEADER_LEN..];
    if body.len() != total * 16 {
        return Err(Error::Format(format!(
            "binary body has {} bytes, header implies {}",
            body.len(),
            total * 16
        )));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(RawField { spec, values })
}

pub fn read_binary<R: Read>(input: R) -> Result<SpaceTimeField> {
    read_binary_raw(input)?.into_field()
}

fn is_binary_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("bin") | Some("fld")
    )
}

/// Reads a field, choosing the binary format for `.bin`/`.fld` files.
pub fn load_field(path: &Path) -> Result<SpaceTimeField> {
    let file = fs::File::open(path)?;
    if is_binary_path(path) {
        read_binary(file)
    } else {
        read_csv(file)
    }
}

pub fn save_field(field: &SpaceTimeField, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    if is_binary_path(path) {
        write_binary(field, file)
    } else {
        write_csv(field, file)
    }
}

/// A coefficient field `a(x)`: a CSV field file with a single time slice.
pub fn load_coefficients(path: &Path) -> Result<(GridSpec, Vec<Complex64>)> {
    let raw = read_csv_raw(fs::File::open(path)?)?;
    if raw.spec.nt != 1 {
        return Err(Error::Format(format!(
            "coefficient file must hold one time slice, found nt = {}",
            raw.spec.nt
        )));
    }
    Ok((raw.spec, raw.values))
}

pub fn save_coefficients(spec: &GridSpec, coefficients: &[Complex64], path: &Path) -> Result<()> {
    let spec = GridSpec { nt: 1, ..*spec };
    if coefficients.len() != spec.npts() {
        return Err(Error::GridMismatch(format!(
            "{} coefficients for {} grid points",
            coefficients.len(),
            spec.npts()
        )));
    }
    write_csv_raw(&spec, coefficients, fs::File::create(path)?)
}

/// Convenience for tests and tools holding an `Arc<Grid>` already.
pub fn field_from_raw(raw: RawField) -> Result<SpaceTimeField> {
    let grid = make_grid(raw.spec)?;
    SpaceTimeField::from_values(Arc::clone(&grid), raw.values)
}
