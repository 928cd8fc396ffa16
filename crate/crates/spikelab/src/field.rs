//! Uniform square grids and scalar fields on them.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Uniform square lattice with nodes `x_i = (i - offset) * step`, `i = 0..n`, on both axes.
///
/// Centered grids carry `2N+1` nodes on `[-R, R]` with zero Dirichlet data outside;
/// periodic grids carry `2N` nodes on `[-R, R)` and wrap around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub n: usize,
    pub step: f64,
    pub offset: usize,
    pub periodic: bool,
}

/// Dirichlet lattice `(2N+1)^2` centered at the origin.
pub type CartesianGrid2D = Grid2D;

impl Grid2D {
    /// Centered Dirichlet grid with half width `radius` and spacing `step`.
    pub fn centered(radius: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && radius > step) {
            return Err(Error::InvalidInput(format!(
                "centered grid needs 0 < step < radius, got step={step}, radius={radius}"
            )));
        }
        let half = (radius / step).round() as usize;
        Ok(Self { n: 2 * half + 1, step, offset: half, periodic: false })
    }

    /// Centered grid whose half-node count `N` is moved to the nearest value with `N+1` free of
    /// prime factors above 5, so sine transforms of the `2N+1` nodes are fast.
    pub fn centered_smooth(radius: f64, step: f64) -> Result<Self> {
        let g = Self::centered(radius, step)?;
        let smooth = |k: usize| {
            let mut k = k;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        };
        let n0 = g.offset;
        let half = (0..n0)
            .flat_map(|d| [n0 - d, n0 + d + 1])
            .find(|&h| h >= 2 && smooth(h + 1))
            .unwrap_or(n0);
        Ok(Self { n: 2 * half + 1, step, offset: half, periodic: false })
    }

    /// Periodic grid with `nodes` (even) points per axis covering `[-radius, radius)`.
    pub fn periodic(nodes: usize, radius: f64) -> Result<Self> {
        if nodes < 4 || nodes % 2 != 0 || radius <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "periodic grid needs an even node count >= 4 and radius > 0, got {nodes}, {radius}"
            )));
        }
        Ok(Self { n: nodes, step: 2.0 * radius / nodes as f64, offset: nodes / 2, periodic: true })
    }

    pub fn half_width(&self) -> f64 {
        self.offset as f64 * self.step
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.offset as f64) * self.step
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.step * self.step
    }
}

/// Scalar field stored row-major: `values[i * n + j]` sits at `(x_i, y_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n {
            let x = grid.coord(i);
            for j in 0..grid.n {
                values.push(f(x, grid.coord(j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field2D, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid, values }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field2D) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Grid quadrature of the product, `sum a b dx^2`.
    pub fn dot(&self, other: &Field2D) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s * self.grid.cell_area()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Index of the largest value; ties resolve to the smallest flat index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best / self.grid.n, best % self.grid.n)
    }

    fn shifted(&self, i: isize, j: isize) -> f64 {
        let n = self.grid.n as isize;
        if self.grid.periodic {
            let ii = i.rem_euclid(n) as usize;
            let jj = j.rem_euclid(n) as usize;
            self.at(ii, jj)
        } else if i < 0 || j < 0 || i >= n || j >= n {
            0.0
        } else {
            self.at(i as usize, j as usize)
        }
    }

    /// Fourth-order central-difference gradient (zero extension or wraparound).
    pub fn gradient(&self) -> (Field2D, Field2D) {
        let n = self.grid.n;
        let c = 1.0 / (12.0 * self.grid.step);
        let mut gx = Field2D::zeros(self.grid);
        let mut gy = Field2D::zeros(self.grid);
        for i in 0..n {
            for j in 0..n {
                let (ii, jj) = (i as isize, j as isize);
                gx.values[i * n + j] = c
                    * (-self.shifted(ii + 2, jj) + 8.0 * self.shifted(ii + 1, jj)
                        - 8.0 * self.shifted(ii - 1, jj)
                        + self.shifted(ii - 2, jj));
                gy.values[i * n + j] = c
                    * (-self.shifted(ii, jj + 2) + 8.0 * self.shifted(ii, jj + 1)
                        - 8.0 * self.shifted(ii, jj - 1)
                        + self.shifted(ii, jj - 2));
            }
        }
        (gx, gy)
    }

    /// Fourth-order gradient at a single node.
    pub fn gradient_at(&self, i: usize, j: usize) -> [f64; 2] {
        let c = 1.0 / (12.0 * self.grid.step);
        let (ii, jj) = (i as isize, j as isize);
        [
            c * (-self.shifted(ii + 2, jj) + 8.0 * self.shifted(ii + 1, jj)
                - 8.0 * self.shifted(ii - 1, jj)
                + self.shifted(ii - 2, jj)),
            c * (-self.shifted(ii, jj + 2) + 8.0 * self.shifted(ii, jj + 1)
                - 8.0 * self.shifted(ii, jj - 1)
                + self.shifted(ii, jj - 2)),
        ]
    }

    /// Bilinear interpolation; zero outside a Dirichlet grid.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let fx = x / g.step + g.offset as f64;
        let fy = y / g.step + g.offset as f64;
        let i0 = fx.floor();
        let j0 = fy.floor();
        let tx = fx - i0;
        let ty = fy - j0;
        let (i0, j0) = (i0 as isize, j0 as isize);
        (1.0 - tx) * (1.0 - ty) * self.shifted(i0, j0)
            + tx * (1.0 - ty) * self.shifted(i0 + 1, j0)
            + (1.0 - tx) * ty * self.shifted(i0, j0 + 1)
            + tx * ty * self.shifted(i0 + 1, j0 + 1)
    }

    /// Tensor-product cubic Lagrange interpolation on the 4x4 stencil around `(x, y)`.
    pub fn cubic(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let fx = x / g.step + g.offset as f64;
        let fy = y / g.step + g.offset as f64;
        let i1 = fx.floor();
        let j1 = fy.floor();
        let wx = lagrange4(fx - i1);
        let wy = lagrange4(fy - j1);
        let (i1, j1) = (i1 as isize, j1 as isize);
        let mut s = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            for (b, wb) in wy.iter().enumerate() {
                s += wa * wb * self.shifted(i1 - 1 + a as isize, j1 - 1 + b as isize);
            }
        }
        s
    }

    /// Writes `x y value` rows under the header `# field=<name> p=<p> dx=<dx> R=<R>`.
    pub fn write_csv(&self, path: &Path, name: &str, p: f64) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# field={} p={} dx={} R={}", name, p, self.grid.step, self.grid.half_width())?;
        for i in 0..self.grid.n {
            let x = self.grid.coord(i);
            for j in 0..self.grid.n {
                writeln!(out, "{:.10e} {:.10e} {:.16e}", x, self.grid.coord(j), self.at(i, j))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn lagrange4(t: f64) -> [f64; 4] {
    // nodes at -1, 0, 1, 2
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}
