//! Uniform grids over `[-1, 1]^n` (n = 1, 2) and sampled scalar fields.
//!
//! Node `i` along an axis sits at `-1 + i*h` with `h = 2/(m-1)`. For `n = 2`
//! the flat index is `i * m + j`, where `i` runs along `x1` and `j` along
//! `x2` (row-major with the first coordinate as the row).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the plane. One-dimensional grids keep the second
/// coordinate at zero.
pub type Point = [f64; 2];

/// Shape of a grid: dimension, points per axis and spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub n: usize,
    pub m: usize,
    pub h: f64,
}

impl Geometry {
    #[inline]
    pub fn axes(&self, k: usize) -> (usize, usize) {
        if self.n == 1 {
            (k, 0)
        } else {
            (k / self.m, k % self.m)
        }
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        if self.n == 1 {
            i
        } else {
            i * self.m + j
        }
    }
}

/// Sampled function on a uniform grid over `[-1, 1]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    n: usize,
    m: usize,
    h: f64,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(n, m)?;
        let expected = m.pow(n as u32);
        if values.len() != expected {
            return Err(Error::InvalidParams(format!(
                "expected {expected} values for n={n}, m={m}, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("value at index {k} is not finite")));
        }
        Ok(Self { n, m, h: spacing(m), values })
    }

    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        check_shape(n, m)?;
        Ok(Self { n, m, h: spacing(m), values: vec![0.0; m.pow(n as u32)] })
    }

    /// Samples `f` at every node.
    pub fn from_fn(n: usize, m: usize, f: impl Fn(Point) -> f64) -> Result<Self> {
        let mut field = Self::zeros(n, m)?;
        for k in 0..field.len() {
            field.values[k] = f(field.point(k));
        }
        Self::new(n, m, field.values)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn geometry(&self) -> Geometry {
        Geometry { n: self.n, m: self.m, h: self.h }
    }

    /// Axis indices `(i, j)` of a flat index (`j = 0` when `n = 1`).
    #[inline]
    pub fn axes(&self, k: usize) -> (usize, usize) {
        self.geometry().axes(k)
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        self.geometry().flat(i, j)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.h
    }

    #[inline]
    pub fn point(&self, k: usize) -> Point {
        let (i, j) = self.axes(k);
        if self.n == 1 {
            [self.coord(i), 0.0]
        } else {
            [self.coord(i), self.coord(j)]
        }
    }

    /// Flat index of the node nearest to `x`, if `x` lies in the grid box.
    pub fn nearest(&self, x: Point) -> Option<usize> {
        let snap = |c: f64| -> Option<usize> {
            let r = ((c + 1.0) / self.h).round();
            (r >= 0.0 && r <= (self.m - 1) as f64).then_some(r as usize)
        };
        let i = snap(x[0])?;
        let j = if self.n == 1 { 0 } else { snap(x[1])? };
        Some(self.flat(i, j))
    }

    /// True when every stencil neighbor (axis and diagonal) exists.
    pub fn has_full_stencil(&self, k: usize) -> bool {
        let (i, j) = self.axes(k);
        let inner = |a: usize| a >= 1 && a + 1 < self.m;
        if self.n == 1 {
            inner(i)
        } else {
            inner(i) && inner(j)
        }
    }

    /// Flat indices of nodes within the closed ball of `radius` about `center`.
    pub fn indices_in_ball(&self, center: Point, radius: f64) -> Vec<usize> {
        let slack = 1e-12 * (1.0 + radius);
        (0..self.len())
            .filter(|&k| dist(self.point(k), center) <= radius + slack)
            .collect()
    }

    /// Checks that the closed ball lies inside the grid box.
    pub fn covers_ball(&self, center: Point, radius: f64) -> Result<()> {
        let slack = 1e-12;
        let lim = 1.0 + slack;
        let fits = |c: f64| c - radius >= -lim && c + radius <= lim;
        let ok = fits(center[0]) && (self.n == 1 || fits(center[1]));
        if ok && (self.n == 2 || center[1] == 0.0) {
            Ok(())
        } else {
            Err(Error::GridCoverage(format!(
                "ball of radius {radius} about ({}, {}) leaves [-1,1]^{}",
                center[0], center[1], self.n
            )))
        }
    }

    /// Sup-norm over nodes in the closed ball of `radius` about the origin.
    pub fn sup_norm_in_ball(&self, radius: f64) -> f64 {
        self.indices_in_ball([0.0, 0.0], radius)
            .into_iter()
            .map(|k| self.values[k].abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Linear (1D) or bilinear (2D) interpolation; `None` outside the box.
    pub fn interpolate(&self, x: Point) -> Option<f64> {
        let locate = |c: f64| -> Option<(usize, f64)> {
            let s = (c + 1.0) / self.h;
            let top = (self.m - 1) as f64;
            if !(-1e-12..=top + 1e-12).contains(&s) {
                return None;
            }
            let s = s.clamp(0.0, top);
            let i = (s.floor() as usize).min(self.m - 2);
            Some((i, s - i as f64))
        };
        let (i, a) = locate(x[0])?;
        if self.n == 1 {
            return Some((1.0 - a) * self.values[i] + a * self.values[i + 1]);
        }
        let (j, b) = locate(x[1])?;
        let v = |p: usize, q: usize| self.values[self.flat(p, q)];
        Some(
            (1.0 - a) * (1.0 - b) * v(i, j)
                + a * (1.0 - b) * v(i + 1, j)
                + (1.0 - a) * b * v(i, j + 1)
                + a * b * v(i + 1, j + 1),
        )
    }

    /// Central-difference gradient at a node with a full stencil.
    pub fn central_gradient(&self, k: usize) -> Point {
        let (i, j) = self.axes(k);
        let inv = 0.5 / self.h;
        let g1 = (self.values[self.flat(i + 1, j)] - self.values[self.flat(i - 1, j)]) * inv;
        let g2 = if self.n == 1 {
            0.0
        } else {
            (self.values[self.flat(i, j + 1)] - self.values[self.flat(i, j - 1)]) * inv
        };
        [g1, g2]
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        self.n == other.n && self.m == other.m
    }

    /// Writes the grid CSV: a header record `m,h,n`, then one record per
    /// grid row (`m` values each; a single record when `n = 1`), every
    /// number printed with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        w.write_record([self.m.to_string(), fmt17(self.h), self.n.to_string()])?;
        for row in self.values.chunks(self.m) {
            w.write_record(row.iter().map(|&v| fmt17(v)))?;
        }
        w.flush().map_err(|source| Error::Io { path: "<csv writer>".into(), source })?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = r.records();
        let head = records
            .next()
            .ok_or_else(|| Error::GridFormat("empty file".into()))??;
        if head.len() != 3 {
            return Err(Error::GridFormat(format!("header has {} fields, want m,h,n", head.len())));
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::GridFormat(format!("bad {what} in header: {s:?}")))
        };
        let m = parse_usize(&head[0], "m")?;
        let h: f64 = head[1]
            .parse()
            .map_err(|_| Error::GridFormat(format!("bad h in header: {:?}", &head[1])))?;
        let n = parse_usize(&head[2], "n")?;
        check_shape(n, m)?;
        if (h - spacing(m)).abs() > 1e-12 {
            return Err(Error::GridFormat(format!("h = {h} does not match m = {m}")));
        }
        let mut values = Vec::with_capacity(m.pow(n as u32));
        for rec in records {
            for field in rec?.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::GridFormat(format!("bad value {field:?}")))?;
                values.push(v);
            }
        }
        Self::new(n, m, values)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|source| Error::Io { path: path.to_owned(), source })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|source| Error::Io { path: path.to_owned(), source })?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

pub fn spacing(m: usize) -> f64 {
    2.0 / (m - 1) as f64
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n != 1 && n != 2 {
        return Err(Error::InvalidParams(format!("dimension must be 1 or 2, got {n}")));
    }
    if m < 5 || m.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!("points per axis must be odd and >= 5, got {m}")));
    }
    Ok(())
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[inline]
pub fn dist2(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Decimal text with 17 significant digits (round-trips every `f64`).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
