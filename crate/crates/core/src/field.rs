//! Uniform grids on the box [−L, L]^N and node-sampled fields.
//!
//! Every node of the box is an unknown and the field is extended by zero
//! outside the box. With that convention the discrete Dirichlet form
//! `½ Σ_edges (Δ_e u / h)² h^N`, taken over all grid edges including the
//! edges that leave the box, is exactly `½ Σ_nodes u (−Δ_h u) h^N` for the
//! five-point (seven-point in 3-D) Laplacian `Δ_h`. Energies use that form
//! together with the node-sum quadrature `Σ_nodes f h^N`, which is the
//! trapezoidal rule for the zero-extended field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{self, Point};

/// Smallest number of nodes per axis accepted by [`Grid::new`].
pub const MIN_POINTS: usize = 16;

/// `M^N` nodes on `[−L, L]^N` with spacing `h = 2L/(M−1)`, row-major with the
/// last axis fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half-width {half_width} must be positive")));
        }
        if points < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "{points} points per axis, need at least {MIN_POINTS}"
            )));
        }
        Ok(Self { dim, half_width, points })
    }

    /// Grid with the given spacing (rounded so that the origin is a node).
    pub fn with_spacing(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing {spacing} must be positive")));
        }
        let half_cells = (half_width / spacing).round().max(1.0) as usize;
        Self::new(dim, half_cells as f64 * spacing, 2 * half_cells + 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Total node count `M^N`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node volume `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Flat-index stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Per-axis node indices of a flat index.
    pub fn multi_index(&self, mut index: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = index % self.points;
            index /= self.points;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize; 3]) -> usize {
        (0..self.dim).fold(0, |acc, axis| acc * self.points + multi[axis])
    }

    pub fn coord(&self, index: usize) -> Point {
        let m = self.multi_index(index);
        let mut p = point::ORIGIN;
        for axis in 0..self.dim {
            p[axis] = self.axis_coord(m[axis]);
        }
        p
    }

    /// Coordinates of every node, in flat order.
    pub fn coords(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.coord(i)).collect()
    }

    /// Nearest node to `x`, clamped into the box.
    pub fn nearest_node(&self, x: &Point) -> usize {
        let h = self.spacing();
        let mut m = [0usize; 3];
        for axis in 0..self.dim {
            let t = ((x[axis] + self.half_width) / h).round();
            m[axis] = t.clamp(0.0, (self.points - 1) as f64) as usize;
        }
        self.flat_index(&m)
    }

    /// Whether the node lies on a face of the box.
    pub fn on_boundary(&self, index: usize) -> bool {
        let m = self.multi_index(index);
        (0..self.dim).any(|a| m[a] == 0 || m[a] == self.points - 1)
    }

    /// Distance from `x` to the box boundary (negative outside).
    pub fn margin(&self, x: &Point) -> f64 {
        (0..self.dim)
            .map(|a| self.half_width - x[a].abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Flat indices of the nodes whose axis index lies in the (clamped) ranges.
    pub fn nodes_in_box(&self, lo: &Point, hi: &Point) -> Vec<usize> {
        let h = self.spacing();
        let mut ranges = [(0usize, 0usize); 3];
        for axis in 0..self.dim {
            let a = ((lo[axis] + self.half_width) / h).floor().max(0.0) as usize;
            let b = (((hi[axis] + self.half_width) / h).ceil() as isize)
                .clamp(-1, self.points as isize - 1);
            if b < 0 || a > b as usize {
                return Vec::new();
            }
            ranges[axis] = (a, b as usize);
        }
        let mut out = Vec::new();
        let mut m = [0usize; 3];
        fn rec(
            grid: &Grid,
            axis: usize,
            ranges: &[(usize, usize); 3],
            m: &mut [usize; 3],
            out: &mut Vec<usize>,
        ) {
            if axis == grid.dim {
                out.push(grid.flat_index(m));
                return;
            }
            for i in ranges[axis].0..=ranges[axis].1 {
                m[axis] = i;
                rec(grid, axis + 1, ranges, m, out);
            }
        }
        rec(self, 0, &ranges, &mut m, &mut out);
        out
    }

    /// Flat indices of nodes within distance `radius` of `center`.
    pub fn nodes_in_ball(&self, center: &Point, radius: f64) -> Vec<usize> {
        let lo = point::sub(center, &[radius; 3]);
        let hi = point::add(center, &[radius; 3]);
        self.nodes_in_box(&lo, &hi)
            .into_iter()
            .filter(|&i| point::dist(&self.coord(i), center) <= radius)
            .collect()
    }

    /// Calls `f(start, stride)` for every grid line along `axis`.
    pub(crate) fn for_each_line(&self, axis: usize, mut f: impl FnMut(usize)) {
        let stride = self.stride(axis);
        let block = stride * self.points;
        for b in (0..self.len()).step_by(block) {
            for offset in 0..stride {
                f(b + offset);
            }
        }
    }
}

/// A scalar value at every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coord(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
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

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| v * s)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + s * b)
    }

    /// Node-sum quadrature `Σ u v h^N` (trapezoidal rule of the zero extension).
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Node-sum quadrature `Σ u h^N`.
    pub fn sum_integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Sample at an arbitrary point by tensor-product cubic (Catmull–Rom)
    /// interpolation, with the zero extension outside the box.
    pub fn sample(&self, x: &Point) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let m = g.points as isize;
        let mut base = [0isize; 3];
        let mut weights = [[0.0f64; 4]; 3];
        for axis in 0..g.dim {
            let t = (x[axis] + g.half_width) / h;
            let i = t.floor();
            let f = t - i;
            base[axis] = i as isize - 1;
            weights[axis] = catmull_rom(f);
        }
        let mut total = 0.0;
        let span = 4usize.pow(g.dim as u32);
        'outer: for s in 0..span {
            let mut w = 1.0;
            let mut multi = [0usize; 3];
            let mut rem = s;
            for axis in 0..g.dim {
                let o = rem % 4;
                rem /= 4;
                let idx = base[axis] + o as isize;
                if idx < 0 || idx >= m {
                    continue 'outer;
                }
                multi[axis] = idx as usize;
                w *= weights[axis][o];
            }
            total += w * self.values[g.flat_index(&multi)];
        }
        total
    }
}

fn catmull_rom(f: f64) -> [f64; 4] {
    let f2 = f * f;
    let f3 = f2 * f;
    [
        0.5 * (-f3 + 2.0 * f2 - f),
        0.5 * (3.0 * f3 - 5.0 * f2 + 2.0),
        0.5 * (-3.0 * f3 + 4.0 * f2 + f),
        0.5 * (f3 - f2),
    ]
}

/// Five-point (seven-point in 3-D) Laplacian with zero values outside the box.
pub fn laplacian(u: &Field) -> Field {
    let g = u.grid;
    let h2 = g.spacing() * g.spacing();
    let m = g.points;
    let v = &u.values;
    let mut out: Vec<f64> = v.iter().map(|&x| -2.0 * g.dim as f64 * x).collect();
    for axis in 0..g.dim {
        let s = g.stride(axis);
        g.for_each_line(axis, |start| {
            for j in 0..m {
                let i = start + j * s;
                let mut acc = 0.0;
                if j > 0 {
                    acc += v[i - s];
                }
                if j + 1 < m {
                    acc += v[i + s];
                }
                out[i] += acc;
            }
        });
    }
    for x in &mut out {
        *x /= h2;
    }
    Field { grid: g, values: out }
}

/// `(Δ_h u)` at a single node.
pub fn laplacian_at(u: &Field, index: usize) -> f64 {
    let g = u.grid;
    let m = g.multi_index(index);
    let v = &u.values;
    let mut acc = -2.0 * g.dim as f64 * v[index];
    for axis in 0..g.dim {
        let s = g.stride(axis);
        if m[axis] > 0 {
            acc += v[index - s];
        }
        if m[axis] + 1 < g.points {
            acc += v[index + s];
        }
    }
    let h = g.spacing();
    acc / (h * h)
}

/// Translates `u` by whole grid cells, filling with zeros.
pub fn shift_nodes(u: &Field, offset: [isize; 3]) -> Field {
    let g = u.grid;
    let m = g.points as isize;
    let mut out = vec![0.0; g.len()];
    for (i, &val) in u.values.iter().enumerate() {
        if val == 0.0 {
            continue;
        }
        let mi = g.multi_index(i);
        let mut dst = [0usize; 3];
        let mut inside = true;
        for axis in 0..g.dim {
            let t = mi[axis] as isize + offset[axis];
            if t < 0 || t >= m {
                inside = false;
                break;
            }
            dst[axis] = t as usize;
        }
        if inside {
            out[g.flat_index(&dst)] = val;
        }
    }
    Field { grid: g, values: out }
}

/// Trapezoidal-rule integral over the closed box `[−L, L]^N`.
pub fn integrate(u: &Field) -> f64 {
    let g = u.grid;
    let last = g.points - 1;
    let total: f64 = u
        .values
        .iter()
        .enumerate()
        .map(|(i, &val)| {
            let m = g.multi_index(i);
            let boundary_axes = (0..g.dim).filter(|&a| m[a] == 0 || m[a] == last).count();
            val * 0.5f64.powi(boundary_axes as i32)
        })
        .sum();
    total * g.cell_volume()
}

/// Discrete Dirichlet integral `Σ_edges (Δ_e u / h)² h^N`, over every grid
/// edge including the edges to the zero extension. Differences taken at the
/// edge midpoints are centred, second-order approximations of `Du`.
pub fn dirichlet_integral(u: &Field) -> f64 {
    let g = u.grid;
    let m = g.points;
    let v = &u.values;
    let mut acc = 0.0;
    for axis in 0..g.dim {
        let s = g.stride(axis);
        g.for_each_line(axis, |start| {
            let mut prev = 0.0;
            for j in 0..m {
                let cur = v[start + j * s];
                let d = cur - prev;
                acc += d * d;
                prev = cur;
            }
            acc += prev * prev;
        });
    }
    let h = g.spacing();
    acc * g.cell_volume() / (h * h)
}

/// `∫(|Du|² + a_∞ u²)`, the squared norm of the limit-problem scalar product.
pub fn h1_norm_sq(u: &Field, a_inf: f64) -> Result<f64> {
    if !(a_inf > 0.0) {
        return Err(Error::Domain(format!("a_inf = {a_inf} must be positive")));
    }
    Ok(dirichlet_integral(u) + a_inf * u.dot(u)?)
}

/// Zero `u` outside the closed ball `B(center, radius)`.
pub fn restrict_to_ball(u: &Field, center: &Point, radius: f64) -> Field {
    let g = u.grid;
    let values = u
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| if point::dist(&g.coord(i), center) <= radius { v } else { 0.0 })
        .collect();
    Field { grid: g, values }
}
