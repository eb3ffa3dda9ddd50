//! On-disk formats: Matrix Market for sparse matrices, headerless CSV for
//! vectors and dense matrices, JSON sidecars for metadata.

use crate::constraints::ConstraintBasis;
use crate::error::{Error, Result};
use crate::gmrf::{Gmrf, Parametrization};
use crate::nullspace::NullSpaceBasis;
use crate::sparse::{SparseMat, TripletBuilder};
use crate::spde::Mesh;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn write_matrix_market<W: Write>(m: &SparseMat, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for j in 0..m.ncols() {
        for (i, v) in m.col(j) {
            writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `coordinate real|integer general|symmetric` files; duplicates are summed.
pub fn read_matrix_market<R: Read>(r: R) -> Result<SparseMat> {
    let mut lines = BufReader::new(r).lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty Matrix Market file".into()))??;
    let h: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(Error::Parse(format!("unsupported Matrix Market header: {header}")));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field type {}", h[3])));
    }
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut data = lines.filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.starts_with('%')));
    let size = data.next().ok_or_else(|| Error::Parse("missing size line".into()))??;
    let dims = parse_fields::<usize>(&size, 3)?;
    let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
    let mut tb = TripletBuilder::with_capacity(nrows, ncols, if symmetric { 2 * nnz } else { nnz });
    let mut count = 0;
    for line in data {
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("bad entry line: {line}")));
        }
        let i: usize = f[0].parse().map_err(|_| Error::Parse(format!("bad row index in: {line}")))?;
        let j: usize = f[1].parse().map_err(|_| Error::Parse(format!("bad column index in: {line}")))?;
        let v: f64 = f[2].parse().map_err(|_| Error::Parse(format!("bad value in: {line}")))?;
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(Error::Parse(format!("index ({i}, {j}) out of bounds for {nrows}x{ncols}")));
        }
        tb.push(i - 1, j - 1, v);
        if symmetric && i != j {
            tb.push(j - 1, i - 1, v);
        }
        count += 1;
    }
    if count != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {count}")));
    }
    Ok(tb.build())
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize) -> Result<Vec<T>> {
    let v: Vec<T> = line
        .split_whitespace()
        .map(|s| s.parse::<T>().map_err(|_| Error::Parse(format!("cannot parse {s:?}"))))
        .collect::<Result<_>>()?;
    if v.len() != n {
        return Err(Error::Parse(format!("expected {n} fields in {line:?}")));
    }
    Ok(v)
}

pub fn save_mtx(m: &SparseMat, path: &Path) -> Result<()> {
    write_matrix_market(m, File::create(path)?)
}

pub fn load_mtx(path: &Path) -> Result<SparseMat> {
    read_matrix_market(File::open(path)?)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Dense matrix as headerless CSV, one row per line.
pub fn write_dense_csv<W: Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        wr.write_record(m.row(i).iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_dense_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(
            rec.iter()
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("cannot parse {s:?} as a number"))))
                .collect::<Result<_>>()?,
        );
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged CSV matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Vector as a single CSV column.
pub fn write_vector_csv<W: Write>(v: &[f64], w: W) -> Result<()> {
    write_dense_csv(&DMatrix::from_column_slice(v.len(), 1, v), w)
}

pub fn read_vector_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let m = read_dense_csv(r)?;
    if m.ncols() > 1 {
        return Err(Error::Parse(format!("expected one column, found {}", m.ncols())));
    }
    Ok(m.as_slice().to_vec())
}

#[derive(Debug, Serialize, Deserialize)]
struct GmrfMeta {
    n: usize,
    parametrization: Parametrization,
    has_mean: bool,
    has_canonical_mean: bool,
    nullspace_dim: usize,
}

/// Writes `Q.mtx`, `mu.csv` and/or `mu_c.csv`, `E.csv` (intrinsic only) and `meta.json`.
pub fn save_gmrf(g: &Gmrf, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_mtx(g.q(), &dir.join("Q.mtx"))?;
    if let Some(mu) = g.stored_mean() {
        write_vector_csv(mu, File::create(dir.join("mu.csv"))?)?;
    }
    if let Some(mu_c) = g.stored_canonical_mean() {
        write_vector_csv(mu_c, File::create(dir.join("mu_c.csv"))?)?;
    }
    if g.is_intrinsic() {
        write_dense_csv(g.nullspace().matrix(), File::create(dir.join("E.csv"))?)?;
    }
    let meta = GmrfMeta {
        n: g.n(),
        parametrization: g.parametrization(),
        has_mean: g.stored_mean().is_some(),
        has_canonical_mean: g.stored_canonical_mean().is_some(),
        nullspace_dim: g.nullspace().s(),
    };
    serde_json::to_writer_pretty(File::create(dir.join("meta.json"))?, &meta)?;
    Ok(())
}

pub fn load_gmrf(dir: &Path) -> Result<Gmrf> {
    let meta: GmrfMeta = serde_json::from_reader(File::open(dir.join("meta.json"))?)?;
    let q = load_mtx(&dir.join("Q.mtx"))?;
    if q.nrows() != meta.n {
        return Err(Error::Parse(format!("meta.json says n = {}, Q.mtx is {}x{}", meta.n, q.nrows(), q.ncols())));
    }
    let mu = meta.has_mean.then(|| read_vector_csv(File::open(dir.join("mu.csv"))?)).transpose()?;
    let mu_c = meta.has_canonical_mean.then(|| read_vector_csv(File::open(dir.join("mu_c.csv"))?)).transpose()?;
    let mut g = match (meta.parametrization, mu, mu_c) {
        (Parametrization::Natural, Some(mu), mu_c) => {
            let g = Gmrf::natural(q, mu.clone())?;
            match mu_c {
                Some(c) => g.with_both_means(mu, c)?,
                None => g,
            }
        }
        (Parametrization::Canonical, mu, Some(mu_c)) => {
            let g = Gmrf::canonical(q, mu_c.clone())?;
            match mu {
                Some(m) => g.with_both_means(m, mu_c)?,
                None => g,
            }
        }
        _ => return Err(Error::Parse("meta.json parametrization has no matching mean file".into())),
    };
    if meta.nullspace_dim > 0 {
        let e = read_dense_csv(File::open(dir.join("E.csv"))?)?;
        g = g.with_nullspace(NullSpaceBasis::new(e)?)?;
    }
    Ok(g)
}

#[derive(Debug, Serialize, Deserialize)]
struct BasisMeta {
    n: usize,
    k: usize,
    blocks: Vec<BlockMeta>,
    free_columns: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockMeta {
    rows: Vec<usize>,
    cols: Vec<usize>,
    r_diagonal: Vec<f64>,
}

/// Writes `T.mtx`, the `k × k` factor `H.csv` and `basis.json`.
pub fn save_basis(cb: &ConstraintBasis, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_mtx(cb.t(), &dir.join("T.mtx"))?;
    write_dense_csv(&cb.h_dense(), File::create(dir.join("H.csv"))?)?;
    let meta = BasisMeta {
        n: cb.n(),
        k: cb.k(),
        blocks: cb
            .blocks()
            .iter()
            .map(|b| BlockMeta {
                rows: b.rows.clone(),
                cols: b.cols.clone(),
                r_diagonal: b.r.diagonal().iter().copied().collect(),
            })
            .collect(),
        free_columns: cb.free_columns().iter().map(|&(_, c)| c).collect(),
    };
    serde_json::to_writer_pretty(File::create(dir.join("basis.json"))?, &meta)?;
    Ok(())
}

/// Writes `nodes.csv` (`x,y`) and `triangles.csv` (`a,b,c`, zero based).
pub fn save_mesh(mesh: &Mesh, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("nodes.csv")).map_err(csv_err)?;
    w.write_record(["x", "y"]).map_err(csv_err)?;
    for p in mesh.nodes() {
        w.write_record([p[0].to_string(), p[1].to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("triangles.csv")).map_err(csv_err)?;
    w.write_record(["a", "b", "c"]).map_err(csv_err)?;
    for t in mesh.triangles() {
        w.write_record(t.map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Locations with optional observed values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Locations {
    pub points: Vec<[f64; 2]>,
    pub values: Option<Vec<f64>>,
}

/// Reads a CSV with header `x,y` or `x,y,value`.
pub fn read_locations<R: Read>(r: R) -> Result<Locations> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_values = match names.as_slice() {
        ["x", "y"] => false,
        ["x", "y", "value"] => true,
        _ => return Err(Error::Parse(format!("expected header x,y[,value], found {}", names.join(",")))),
    };
    let mut out = Locations {
        points: Vec::new(),
        values: with_values.then(Vec::new),
    };
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).ok_or_else(|| Error::Parse("short record".into()))?;
            s.parse().map_err(|_| Error::Parse(format!("cannot parse {s:?} as a number")))
        };
        out.points.push([num(0)?, num(1)?]);
        if let Some(v) = out.values.as_mut() {
            v.push(num(2)?);
        }
    }
    Ok(out)
}

pub fn write_locations<W: Write>(loc: &Locations, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    match &loc.values {
        Some(_) => wr.write_record(["x", "y", "value"]),
        None => wr.write_record(["x", "y"]),
    }
    .map_err(csv_err)?;
    for (i, p) in loc.points.iter().enumerate() {
        let mut rec = vec![p[0].to_string(), p[1].to_string()];
        if let Some(v) = &loc.values {
            rec.push(v[i].to_string());
        }
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}
