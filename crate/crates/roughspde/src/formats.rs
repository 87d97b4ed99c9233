//! Binary field dumps and CSV tables.
//!
//! Binary layout, little-endian: a 48-byte header
//!
//! | offset | type     | field                         |
//! |--------|----------|-------------------------------|
//! | 0      | [u8; 4]  | magic, `RSNS` or `RSUF`       |
//! | 4      | u32      | version                       |
//! | 8      | u32      | rows                          |
//! | 12     | u32      | nx                            |
//! | 16     | f64      | H                             |
//! | 24     | f64      | Δt                            |
//! | 32     | f64      | Δx                            |
//! | 40     | u64      | seed                          |
//!
//! followed by `rows × nx` f64 values, row-major. Noise slabs have `nt` rows
//! (one per time cell), solution fields `nt + 1` (one per time node).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use roughspde_core::kernels::HomogeneousField;
use roughspde_core::noise::{NoiseSlab, SpaceTimeGrid};
use roughspde_core::regularity::{Direction, ExponentFit, MomentRow, MomentTable};
use roughspde_core::solver::SolutionField;

use crate::error::{CliError, Result};

pub const NOISE_MAGIC: [u8; 4] = *b"RSNS";
pub const FIELD_MAGIC: [u8; 4] = *b"RSUF";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldHeader {
    pub magic: [u8; 4],
    pub version: u32,
    pub rows: u32,
    pub nx: u32,
    pub hurst: f64,
    pub dt: f64,
    pub dx: f64,
    pub seed: u64,
}

impl FieldHeader {
    pub fn new(magic: [u8; 4], rows: usize, grid: &SpaceTimeGrid, hurst: f64, seed: u64) -> Self {
        Self {
            magic,
            version: FORMAT_VERSION,
            rows: rows as u32,
            nx: grid.nx as u32,
            hurst,
            dt: grid.dt(),
            dx: grid.dx(),
            seed,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.magic);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8..12].copy_from_slice(&self.rows.to_le_bytes());
        b[12..16].copy_from_slice(&self.nx.to_le_bytes());
        b[16..24].copy_from_slice(&self.hurst.to_le_bytes());
        b[24..32].copy_from_slice(&self.dt.to_le_bytes());
        b[32..40].copy_from_slice(&self.dx.to_le_bytes());
        b[40..48].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Self {
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let f64_at = |i: usize| f64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        Self {
            magic: b[0..4].try_into().unwrap(),
            version: u32_at(4),
            rows: u32_at(8),
            nx: u32_at(12),
            hurst: f64_at(16),
            dt: f64_at(24),
            dx: f64_at(32),
            seed: u64::from_le_bytes(b[40..48].try_into().unwrap()),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

pub fn write_binary(path: &Path, header: &FieldHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.rows as usize * header.nx as usize {
        return Err(CliError::Format { path: path.into(), message: "value count does not match header".into() });
    }
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    w.write_all(&header.to_bytes()).map_err(io)?;
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_binary(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| CliError::io(path, e))?;
    let bad = |m: &str| CliError::Format { path: path.into(), message: m.into() };
    if bytes.len() < HEADER_LEN {
        return Err(bad("file shorter than the header"));
    }
    let header = FieldHeader::from_bytes(bytes[..HEADER_LEN].try_into().unwrap());
    if header.magic != NOISE_MAGIC && header.magic != FIELD_MAGIC {
        return Err(bad("unknown magic"));
    }
    if header.version != FORMAT_VERSION {
        return Err(bad("unsupported version"));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * header.rows as usize * header.nx as usize {
        return Err(bad("body length does not match header"));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((header, values))
}

pub fn write_noise_slab(path: &Path, slab: &NoiseSlab) -> Result<()> {
    let h = FieldHeader::new(NOISE_MAGIC, slab.grid.nt, &slab.grid, slab.hurst.value(), slab.seed);
    write_binary(path, &h, &slab.increments)
}

pub fn write_solution_field(path: &Path, field: &SolutionField, hurst: f64) -> Result<()> {
    let h = FieldHeader::new(FIELD_MAGIC, field.grid.nt + 1, &field.grid, hurst, field.seed);
    write_binary(path, &h, &field.u)
}

pub fn write_homogeneous(path: &Path, w: &HomogeneousField, hurst: f64, seed: u64) -> Result<()> {
    let h = FieldHeader::new(FIELD_MAGIC, w.grid.nt + 1, &w.grid, hurst, seed);
    write_binary(path, &h, &w.w)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Format { path: path.into(), message: e.to_string() }
}

/// `(t, x, value)` rows of a row-major field with `nt + 1` rows, for the
/// given rows and columns.
pub fn write_field_csv(
    path: &Path,
    grid: &SpaceTimeGrid,
    values: &[f64],
    rows: impl IntoIterator<Item = usize>,
    cols: std::ops::Range<usize>,
    name: &str,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(["t", "x", name]).map_err(err)?;
    for n in rows {
        for j in cols.clone() {
            let v = values[n * grid.nx + j];
            w.write_record([grid.t(n).to_string(), grid.x(j).to_string(), v.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub const MOMENT_COLUMNS: [&str; 6] = ["direction", "p", "h", "moment", "stderr", "n_paths"];
pub const FIT_COLUMNS: [&str; 10] =
    ["direction", "p", "slope", "intercept", "slope_stderr", "r_squared", "exponent", "ci95_lo", "ci95_hi", "n_points"];

pub fn write_moment_tables(path: &Path, tables: &[MomentTable]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(MOMENT_COLUMNS).map_err(err)?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                t.direction.name().to_string(),
                t.p.to_string(),
                r.h.to_string(),
                r.moment.to_string(),
                r.stderr.to_string(),
                r.n_paths.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "space" => Some(Direction::Space),
        "time" => Some(Direction::Time),
        _ => None,
    }
}

/// Read tables back; consecutive rows with the same direction and `p` form
/// one table. Per-path data is not stored, so refits use standard errors only.
pub fn read_moment_tables(path: &Path) -> Result<Vec<MomentTable>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(MOMENT_COLUMNS) {
        return Err(CliError::Format { path: path.into(), message: format!("expected columns {MOMENT_COLUMNS:?}") });
    }
    let mut tables: Vec<MomentTable> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| CliError::Format { path: path.into(), message: format!("row {}: bad {what}", line + 2) };
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        let direction = parse_direction(&rec[0]).ok_or_else(|| bad("direction"))?;
        let p = num(1, "p")?;
        let row = MomentRow {
            h: num(2, "h")?,
            moment: num(3, "moment")?,
            stderr: num(4, "stderr")?,
            n_paths: rec[5].parse().map_err(|_| bad("n_paths"))?,
            n_grid_points: 0,
        };
        match tables.last_mut() {
            Some(t) if t.direction == direction && t.p == p => t.rows.push(row),
            _ => tables.push(MomentTable {
                direction,
                p,
                kind: None,
                hurst: f64::NAN,
                rows: vec![row],
                per_path: Vec::new(),
            }),
        }
    }
    Ok(tables)
}

pub fn write_fits(path: &Path, fits: &[ExponentFit]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(FIT_COLUMNS).map_err(err)?;
    for f in fits {
        w.write_record([
            f.direction.name().to_string(),
            f.p.to_string(),
            f.slope.to_string(),
            f.intercept.to_string(),
            f.slope_stderr.to_string(),
            f.r_squared.to_string(),
            f.exponent.to_string(),
            f.ci95.0.to_string(),
            f.ci95.1.to_string(),
            f.n_points.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_distances(path: &Path, distances: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(["iteration", "distance"]).map_err(err)?;
    for (k, d) in distances.iter().enumerate() {
        w.write_record([(k + 1).to_string(), d.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_48_bytes_and_round_trips() {
        let grid = SpaceTimeGrid::new(8.0, 64, 1.0, 16).unwrap();
        let h = FieldHeader::new(FIELD_MAGIC, 17, &grid, 0.3, 99);
        let b = h.to_bytes();
        assert_eq!(&b[..4], b"RSUF");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 17);
        assert_eq!(FieldHeader::from_bytes(&b), h);
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let grid = SpaceTimeGrid::new(1.0, 4, 1.0, 2).unwrap();
        let h = FieldHeader::new(NOISE_MAGIC, 2, &grid, 0.3, 1);
        let vals: Vec<f64> = (0..8).map(|i| i as f64 * 0.5 - 1.0).collect();
        write_binary(&path, &h, &vals).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 48 + 64);
        let (h2, v2) = read_binary(&path).unwrap();
        assert_eq!(h2, h);
        assert_eq!(v2, vals);
        assert!(write_binary(&path, &h, &vals[..7]).is_err());
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_binary(&path).is_err());
    }

    #[test]
    fn moment_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = |h: f64| MomentRow { h, moment: h.powf(0.6), stderr: 1e-3 * h, n_paths: 32, n_grid_points: 0 };
        let tables = vec![
            MomentTable {
                direction: Direction::Space,
                p: 2.0,
                kind: None,
                hurst: f64::NAN,
                rows: vec![row(0.125), row(0.25)],
                per_path: vec![],
            },
            MomentTable {
                direction: Direction::Time,
                p: 2.0,
                kind: None,
                hurst: f64::NAN,
                rows: vec![row(1.0 / 3.0)],
                per_path: vec![],
            },
        ];
        write_moment_tables(&path, &tables).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("direction,p,h,moment,stderr,n_paths\nspace,2,0.125,"));
        let back = read_moment_tables(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in tables.iter().zip(&back) {
            assert_eq!(a.direction, b.direction);
            assert_eq!(a.rows, b.rows);
        }
    }
}
