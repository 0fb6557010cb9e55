//! Rating matrices to feature vectors: binarize, truncated SVD, and the
//! features CSV format read by the simulator.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, io_err, Error, Result};
use crate::numkit::{dot, norm2, sym_eigen, Mat};
use crate::seeds::{stream_rng, Stream};

const NORM_TOL: f64 = 1e-9;

/// Binary user-by-item feedback, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMatrix {
    data: Mat,
}

impl FeedbackMatrix {
    pub fn n_users(&self) -> usize {
        self.data.rows()
    }

    pub fn n_items(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.data
    }

    pub fn get(&self, user: usize, item: usize) -> bool {
        self.data.get(user, item) == 1.0
    }
}

/// 1 where the rating is strictly above `threshold`, else 0.
pub fn binarize(ratings: &Mat, threshold: f64) -> Result<FeedbackMatrix> {
    if ratings.rows() == 0 || ratings.cols() == 0 {
        return Err(invalid("ratings matrix must be non-empty"));
    }
    if ratings.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(invalid("ratings must be finite"));
    }
    let data = ratings
        .as_slice()
        .iter()
        .map(|&r| if r > threshold { 1.0 } else { 0.0 })
        .collect();
    Ok(FeedbackMatrix {
        data: Mat::from_vec(ratings.rows(), ratings.cols(), data)?,
    })
}

pub const DEFAULT_RATING_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub max_iters: usize,
    /// Convergence when every kept Ritz pair has residual
    /// `‖RᵀR·v − σ²·v‖ ≤ tol·σ₁²`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-10,
            seed: 0,
        }
    }
}

/// Rank-`d` factors of `R ≈ U·diag(σ)·Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// `n_users × d`, orthonormal columns.
    pub u: Mat,
    /// `n_items × d`, orthonormal columns.
    pub v: Mat,
    pub iterations: usize,
}

impl TruncatedSvd {
    /// `U·diag(σ)`, one row per user.
    pub fn user_factors(&self) -> Mat {
        let mut m = self.u.clone();
        for i in 0..m.rows() {
            for (x, s) in m.row_mut(i).iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        m
    }

    /// `V`, one row per item.
    pub fn item_factors(&self) -> Mat {
        self.v.clone()
    }

    pub fn reconstruct(&self) -> Mat {
        self.user_factors().matmul(&self.v.transpose())
    }
}

/// Columns as separate vectors.
fn columns(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|j| m.col(j)).collect()
}

fn from_columns(rows: usize, cols: &[Vec<f64>]) -> Mat {
    let mut m = Mat::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            m.set(i, j, v);
        }
    }
    m
}

/// Modified Gram–Schmidt with a second pass. A column that vanishes after
/// projection is replaced by the standard basis vector with the largest
/// component outside the span so far, so the result always has
/// orthonormal columns.
fn orthonormalize(cols: &mut [Vec<f64>]) {
    fn project_out(c: &mut [f64], done: &[Vec<f64>]) {
        for _ in 0..2 {
            for q in done {
                let p = dot(q, c);
                for (ci, qi) in c.iter_mut().zip(q) {
                    *ci -= p * qi;
                }
            }
        }
    }
    let n = cols.first().map_or(0, |c| c.len());
    for j in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(j);
        let c = &mut rest[0];
        let before = norm2(c);
        project_out(c, done);
        let mut nrm = norm2(c);
        if !(nrm > 1e-10 * before) {
            let mut best = (0.0, vec![0.0; n]);
            for k in 0..n {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                project_out(&mut e, done);
                let en = norm2(&e);
                if en > best.0 {
                    best = (en, e);
                }
            }
            *c = best.1;
            nrm = best.0;
        }
        c.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// Top-`rank` singular triplets by block subspace iteration on `RᵀR`.
pub fn truncated_svd(r: &Mat, rank: usize, opts: &SvdOptions) -> Result<TruncatedSvd> {
    let (n, p) = (r.rows(), r.cols());
    if rank == 0 || rank > n.min(p) {
        return Err(invalid(format!(
            "rank must lie in 1..={} for a {n}x{p} matrix, got {rank}",
            n.min(p)
        )));
    }
    let block = rank + 10.min(p - rank);
    let rt = r.transpose();
    let mut rng = stream_rng(opts.seed, Stream::Sketch, 0);
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..p).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    orthonormalize(&mut q);

    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iters {
        // Z = RᵀR·Q, then Rayleigh–Ritz on span(Q).
        let qm = from_columns(p, &q);
        let b = r.matmul(&qm);
        let z = rt.matmul(&b);
        let small = qm.transpose().matmul(&z);
        let mut small_sym = small.clone();
        small_sym.symmetrize();
        let (vals, vecs) = sym_eigen(&small_sym)?;
        // descending order
        let order: Vec<usize> = (0..block).rev().collect();
        let ritz_vals: Vec<f64> = order.iter().map(|&k| vals[k].max(0.0)).collect();
        let w = from_columns(
            block,
            &order.iter().map(|&k| vecs.col(k)).collect::<Vec<_>>(),
        );
        let ritz = qm.matmul(&w);
        let zw = z.matmul(&w);

        let scale = ritz_vals[0].max(f64::MIN_POSITIVE);
        residual = (0..rank)
            .map(|k| {
                let mut d = 0.0;
                for i in 0..p {
                    let e = zw.get(i, k) - ritz_vals[k] * ritz.get(i, k);
                    d += e * e;
                }
                d.sqrt() / scale
            })
            .fold(0.0, f64::max);

        if residual <= opts.tol || ritz_vals[0] == 0.0 {
            return Ok(finish(r, &ritz, &ritz_vals, rank, iter));
        }
        q = columns(&zw);
        orthonormalize(&mut q);
    }
    Err(Error::Convergence {
        iters: opts.max_iters,
        residual,
    })
}

fn finish(r: &Mat, ritz: &Mat, ritz_vals: &[f64], rank: usize, iterations: usize) -> TruncatedSvd {
    let mut v_cols: Vec<Vec<f64>> = (0..rank).map(|k| ritz.col(k)).collect();
    orthonormalize(&mut v_cols);
    let v = from_columns(ritz.rows(), &v_cols);
    let rv = r.matmul(&v);
    let sigma_max = ritz_vals[0].sqrt();
    let mut singular_values = Vec::with_capacity(rank);
    let mut u_cols = Vec::with_capacity(rank);
    for k in 0..rank {
        let col = rv.col(k);
        let s = norm2(&col);
        singular_values.push(s);
        if s > 1e-12 * sigma_max.max(1.0) {
            u_cols.push(col.iter().map(|x| x / s).collect());
        } else {
            u_cols.push(vec![0.0; r.rows()]);
        }
    }
    orthonormalize(&mut u_cols);
    // Ritz order can differ from ‖R·v‖ order by rounding at ties.
    for k in 1..rank {
        if singular_values[k] > singular_values[k - 1] {
            singular_values[k] = singular_values[k - 1];
        }
    }
    TruncatedSvd {
        singular_values,
        u: from_columns(r.rows(), &u_cols),
        v,
        iterations,
    }
}

/// Scales all rows by the largest row norm so every row fits the unit ball.
pub fn scale_rows_to_unit_ball(m: &Mat) -> Mat {
    let max = (0..m.rows()).map(|i| norm2(m.row(i))).fold(0.0, f64::max);
    let mut out = m.clone();
    if max > 0.0 {
        for i in 0..out.rows() {
            out.row_mut(i).iter_mut().for_each(|x| *x /= max);
        }
    }
    out
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, e.to_string())
}

fn is_dim_header(record: &csv::StringRecord) -> bool {
    record
        .iter()
        .enumerate()
        .all(|(j, f)| f == format!("dim{j}"))
}

/// Feature rows read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub rows: Vec<Vec<f64>>,
    /// Rows that had norm above 1 and were rescaled to unit norm.
    pub normalized: Vec<usize>,
}

/// Reads a features CSV: one row per entity, optional `dim0,…` header.
pub fn load_features(path: &Path) -> Result<Features> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut normalized = Vec::new();
    for (idx, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if idx == 0 && is_dim_header(&rec) {
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, line, format!("not a finite number: '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    for (i, row) in rows.iter_mut().enumerate() {
        let n = norm2(row);
        if n > 1.0 + NORM_TOL {
            row.iter_mut().for_each(|x| *x /= n);
            normalized.push(i);
        }
    }
    if !normalized.is_empty() {
        log::warn!(
            "{}: {} row(s) had norm above 1 and were rescaled to unit norm",
            path.display(),
            normalized.len()
        );
    }
    Ok(Features { rows, normalized })
}

/// Writes rows with a `dim0,…` header, readable by [`load_features`].
pub fn write_features(path: &Path, m: &Mat) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = (0..m.cols()).map(|j| format!("dim{j}")).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// A dense ratings matrix with the original ids of its rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Ratings {
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Missing pairs are 0.
    pub matrix: Mat,
}

/// Reads `user_id,item_id,rating` triplets. A non-numeric rating on the
/// first line marks a header. Ids are ordered numerically when all are
/// integers, lexicographically otherwise; a repeated pair keeps the last
/// rating.
pub fn read_ratings_csv(path: &Path) -> Result<Ratings> {
    let mut triplets: Vec<(String, String, f64)> = Vec::new();
    for (idx, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(parse_err(
                path,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let rating = match rec[2].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ if idx == 0 => continue,
            _ => return Err(parse_err(path, line, format!("bad rating '{}'", &rec[2]))),
        };
        triplets.push((rec[0].to_string(), rec[1].to_string(), rating));
    }
    if triplets.is_empty() {
        return Err(parse_err(path, 0, "no ratings found"));
    }
    let user_ids = sorted_ids(triplets.iter().map(|t| t.0.as_str()));
    let item_ids = sorted_ids(triplets.iter().map(|t| t.1.as_str()));
    let user_pos: BTreeMap<&str, usize> = user_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let item_pos: BTreeMap<&str, usize> = item_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut matrix = Mat::zeros(user_ids.len(), item_ids.len());
    for (u, it, r) in &triplets {
        matrix.set(user_pos[u.as_str()], item_pos[it.as_str()], *r);
    }
    Ok(Ratings {
        user_ids,
        item_ids,
        matrix,
    })
}

fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = ids.map(str::to_string).collect();
    v.sort_unstable();
    v.dedup();
    if v.iter().all(|s| s.parse::<u64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<u64>().unwrap_or(0));
    }
    v
}

/// Reads a dense numeric CSV (no header) as a ratings matrix.
pub fn read_dense_csv(path: &Path) -> Result<Mat> {
    let rows = load_rows(path)?;
    if rows.is_empty() {
        return Err(parse_err(path, 0, "no rows found"));
    }
    Mat::from_rows(&rows)
}

fn load_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, line, format!("not a finite number: '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows.first().is_some_and(|f| f.len() != row.len()) {
            return Err(parse_err(path, line, "ragged row"));
        }
        rows.push(row);
    }
    Ok(rows)
}
