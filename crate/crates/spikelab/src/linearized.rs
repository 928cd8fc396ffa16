//! The linearized operator `L = -Δ + 1 - 3w^2` on a centered Dirichlet grid, solves modulo its
//! translation kernel, and the correction profiles built from it.

use crate::error::{Error, Result};
use crate::field::{Field2D, Grid2D};
use crate::krylov::minres;
use crate::potential::{PotentialAnalysis, PotentialSpec};
use crate::radial::TownesProfile;
use crate::spectral::{smooth_size, SineTransform};
use std::f64::consts::PI;

/// Relative tolerance of the discrete operator identities, measured against `‖w‖∞`.
pub const LIN_TOL: f64 = 1e-3;
/// Cells excluded from residual checks at the box edge.
pub const EDGE_RING: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    pub step: f64,
    pub radius: f64,
    pub solve_tol: f64,
    pub max_iter: usize,
    pub orth_tol: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self { step: 0.05, radius: 20.0, solve_tol: 1e-10, max_iter: 4000, orth_tol: 1e-4 }
    }
}

/// Discrete `L` with the Townes profile sampled on the grid.
#[derive(Debug)]
pub struct LinearOperator {
    pub grid: Grid2D,
    pub opts: LinearOptions,
    /// `w` on the grid
    pub w: Field2D,
    /// `∂_1 w`, `∂_2 w` sampled from the radial derivative
    pub kernel: [Field2D; 2],
    potential: Vec<f64>,
    sine: SineTransform,
    /// padded transform size
    m: usize,
    symbol: Vec<f64>,
    kernel_precond: [Vec<f64>; 2],
    kernel_weight: [f64; 2],
    /// `G[i][j] = ∂_i (∂_j w)(0)` by the same difference formula used for `∇ψ(0)`
    kernel_gradient: [[f64; 2]; 2],
}

/// Output of one solve modulo the kernel.
#[derive(Debug, Clone)]
pub struct KernelSolve {
    pub field: Field2D,
    /// Coefficients `(c_1, c_2)` subtracted as `c_1 ∂_1 w + c_2 ∂_2 w` to make `∇ψ(0) = 0`.
    pub shift: [f64; 2],
    pub multipliers: [f64; 2],
    pub iterations: usize,
    /// `max |Lψ - f|` away from the edge ring.
    pub residual: f64,
}

fn laplacian4(v: &[f64], n: usize, h: f64, out: &mut [f64]) {
    let c = 1.0 / (12.0 * h * h);
    let get = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
            0.0
        } else {
            v[i as usize * n + j as usize]
        }
    };
    for i in 0..n {
        let interior_row = i >= 2 && i + 2 < n;
        for j in 0..n {
            let k = i * n + j;
            let s = if interior_row && j >= 2 && j + 2 < n {
                -v[k - 2 * n] + 16.0 * v[k - n] + 16.0 * v[k + n] - v[k + 2 * n] - v[k - 2] + 16.0 * v[k - 1]
                    + 16.0 * v[k + 1]
                    - v[k + 2]
                    - 60.0 * v[k]
            } else {
                let (ii, jj) = (i as isize, j as isize);
                -get(ii - 2, jj) + 16.0 * get(ii - 1, jj) + 16.0 * get(ii + 1, jj) - get(ii + 2, jj) - get(ii, jj - 2)
                    + 16.0 * get(ii, jj - 1)
                    + 16.0 * get(ii, jj + 1)
                    - get(ii, jj + 2)
                    - 60.0 * v[k]
            };
            out[k] = c * s;
        }
    }
}

/// Samples `w` and its Cartesian derivatives on the grid and prepares the preconditioner.
pub fn assemble_l(townes: &TownesProfile, grid: Grid2D) -> Result<LinearOperator> {
    assemble_l_with(townes, grid, LinearOptions { step: grid.step, radius: grid.half_width(), ..Default::default() })
}

pub fn assemble_l_with(townes: &TownesProfile, grid: Grid2D, opts: LinearOptions) -> Result<LinearOperator> {
    if grid.periodic {
        return Err(Error::InvalidInput("linearized operator needs a centered Dirichlet grid".into()));
    }
    if grid.step > 0.1 {
        return Err(Error::InvalidInput(format!("grid step {} does not resolve w (need <= 0.1)", grid.step)));
    }
    let w = Field2D::from_fn(grid, |x, y| townes.w_at(x.hypot(y)));
    let k1 = Field2D::from_fn(grid, |x, y| {
        let r = x.hypot(y);
        if r == 0.0 { 0.0 } else { townes.dw_at(r) * x / r }
    });
    let k2 = Field2D::from_fn(grid, |x, y| {
        let r = x.hypot(y);
        if r == 0.0 { 0.0 } else { townes.dw_at(r) * y / r }
    });
    let potential = w.values.iter().map(|v| 1.0 - 3.0 * v * v).collect();
    let n = grid.n;
    let h = grid.step;
    // the preconditioner lives on a slightly larger box with an FFT-friendly size
    let m = smooth_size(n);
    let eig: Vec<f64> = (1..=m)
        .map(|k| {
            let t = PI * k as f64 / (m + 1) as f64;
            (30.0 - 32.0 * t.cos() + 2.0 * (2.0 * t).cos()) / (12.0 * h * h)
        })
        .collect();
    let scale = (2.0 / (m + 1) as f64).powi(2);
    let mut symbol = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            symbol[i * m + j] = scale / (eig[i] + eig[j] + 1.0);
        }
    }
    let c = grid.offset;
    let g1 = k1.gradient_at(c, c);
    let g2 = k2.gradient_at(c, c);
    let mut op = LinearOperator {
        grid,
        opts,
        w,
        kernel: [k1, k2],
        potential,
        sine: SineTransform::new(m),
        m,
        symbol,
        kernel_precond: [Vec::new(), Vec::new()],
        kernel_weight: [1.0, 1.0],
        kernel_gradient: [[g1[0], g2[0]], [g1[1], g2[1]]],
    };
    for j in 0..2 {
        let mut pk = vec![0.0; n * n];
        op.precondition_field(&op.kernel[j].values, &mut pk);
        let s: f64 = pk.iter().zip(&op.kernel[j].values).map(|(a, b)| a * b).sum();
        op.kernel_weight[j] = 1.0 / s;
        op.kernel_precond[j] = pk;
    }
    Ok(op)
}

impl LinearOperator {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn apply_raw(&self, v: &[f64], out: &mut [f64]) {
        laplacian4(v, self.grid.n, self.grid.step, out);
        for ((o, q), x) in out.iter_mut().zip(&self.potential).zip(v) {
            *o = -*o + q * x;
        }
    }

    /// `Lψ` with zero extension outside the box.
    pub fn apply(&self, psi: &Field2D) -> Field2D {
        let mut out = vec![0.0; self.len()];
        self.apply_raw(&psi.values, &mut out);
        Field2D { grid: self.grid, values: out }
    }

    /// `max |a|` over nodes at least `EDGE_RING` cells from the box edge.
    pub fn interior_max(&self, a: &Field2D) -> f64 {
        let n = self.grid.n;
        let mut m = 0.0f64;
        for i in EDGE_RING..n - EDGE_RING {
            for j in EDGE_RING..n - EDGE_RING {
                m = m.max(a.at(i, j).abs());
            }
        }
        m
    }

    /// Interior max-norm of `Lψ - f`.
    pub fn residual(&self, psi: &Field2D, f: &Field2D) -> f64 {
        let lpsi = self.apply(psi);
        self.interior_max(&lpsi.axpy(-1.0, f))
    }

    /// `(-Δ₄ + 1)^{-1}` on the padded box, restricted back to the grid.
    fn precondition_field(&self, r: &[f64], out: &mut [f64]) {
        let (n, m) = (self.grid.n, self.m);
        let off = (m - n) / 2;
        let mut buf = vec![0.0; m * m];
        for i in 0..n {
            buf[(i + off) * m + off..(i + off) * m + off + n].copy_from_slice(&r[i * n..(i + 1) * n]);
        }
        self.sine.forward_2d(&mut buf);
        for (o, s) in buf.iter_mut().zip(&self.symbol) {
            *o *= s;
        }
        self.sine.forward_2d(&mut buf);
        for i in 0..n {
            out[i * n..(i + 1) * n].copy_from_slice(&buf[(i + off) * m + off..(i + off) * m + off + n]);
        }
    }

    /// `‖L ∂_j w‖₂ / ‖∂_j w‖₂`, the Rayleigh defect of the sampled kernel.
    pub fn kernel_defect(&self) -> [f64; 2] {
        let mut out = [0.0; 2];
        for j in 0..2 {
            let lk = self.apply(&self.kernel[j]);
            out[j] = lk.norm_l2() / self.kernel[j].norm_l2();
        }
        out
    }

    /// Matrix of the gradient-normalization system; its determinant is `≈ w''(0)^2`.
    pub fn kernel_gradient_matrix(&self) -> [[f64; 2]; 2] {
        self.kernel_gradient
    }

    /// `(⟨f, ∂_1 w⟩, ⟨f, ∂_2 w⟩)` by grid quadrature.
    pub fn kernel_pairing(&self, f: &Field2D) -> [f64; 2] {
        [f.dot(&self.kernel[0]), f.dot(&self.kernel[1])]
    }

    /// Checks solvability, solves the bordered system, then normalizes `∇ψ(0) = 0`.
    pub fn solve(&self, f: &Field2D, name: &str) -> Result<KernelSolve> {
        let fnorm = f.norm_l2();
        let pair = self.kernel_pairing(f);
        let rel = [
            pair[0] / (fnorm * self.kernel[0].norm_l2()).max(1e-300),
            pair[1] / (fnorm * self.kernel[1].norm_l2()).max(1e-300),
        ];
        if rel[0].abs() >= self.opts.orth_tol || rel[1].abs() >= self.opts.orth_tol {
            return Err(Error::NotSolvable { name: name.to_string(), r1: rel[0], r2: rel[1] });
        }
        let n2 = self.len();
        if fnorm == 0.0 {
            return Ok(KernelSolve {
                field: Field2D::zeros(self.grid),
                shift: [0.0; 2],
                multipliers: [0.0; 2],
                iterations: 0,
                residual: 0.0,
            });
        }
        let apply = |v: &[f64], out: &mut [f64]| {
            self.apply_raw(&v[..n2], &mut out[..n2]);
            let (c1, c2) = (v[n2], v[n2 + 1]);
            let (k1, k2) = (&self.kernel[0].values, &self.kernel[1].values);
            let (mut s1, mut s2) = (0.0, 0.0);
            for k in 0..n2 {
                out[k] += c1 * k1[k] + c2 * k2[k];
                s1 += k1[k] * v[k];
                s2 += k2[k] * v[k];
            }
            out[n2] = s1;
            out[n2 + 1] = s2;
        };
        let precond = |r: &[f64], out: &mut [f64]| {
            self.precondition_field(&r[..n2], &mut out[..n2]);
            out[n2] = self.kernel_weight[0] * r[n2];
            out[n2 + 1] = self.kernel_weight[1] * r[n2 + 1];
        };
        let mut b = f.values.clone();
        b.extend_from_slice(&[0.0, 0.0]);
        let (sol, report) = minres(&apply, &precond, &b, self.opts.solve_tol, self.opts.max_iter)?;
        let multipliers = [sol[n2], sol[n2 + 1]];
        let mut field = Field2D { grid: self.grid, values: sol[..n2].to_vec() };
        let shift = self.normalization_shift(&field)?;
        field = field.axpy(-shift[0], &self.kernel[0]).axpy(-shift[1], &self.kernel[1]);
        let residual = self.residual(&field, f);
        Ok(KernelSolve { field, shift, multipliers, iterations: report.iterations, residual })
    }

    /// Coefficients `c` with `∇(ψ - c_1 ∂_1 w - c_2 ∂_2 w)(0) = 0`.
    pub fn normalization_shift(&self, psi: &Field2D) -> Result<[f64; 2]> {
        let c = self.grid.offset;
        let g = psi.gradient_at(c, c);
        let m = self.kernel_gradient;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let scale = m[0][0].abs().max(m[1][1].abs());
        if det.abs() <= 1e-12 * scale * scale {
            return Err(Error::SingularSystem("gradient normalization".into()));
        }
        Ok([(m[1][1] * g[0] - m[0][1] * g[1]) / det, (-m[1][0] * g[0] + m[0][0] * g[1]) / det])
    }

    /// `∇ψ(0)` by fourth-order differences.
    pub fn gradient_at_origin(&self, psi: &Field2D) -> [f64; 2] {
        psi.gradient_at(self.grid.offset, self.grid.offset)
    }

    /// Largest deviation of `ψ` from the radial profile read off its positive `x_1` axis.
    pub fn radial_symmetry_residual(&self, psi: &Field2D) -> f64 {
        let n = self.grid.n;
        let c = self.grid.offset;
        let h = self.grid.step;
        let axis: Vec<f64> = (c..n).map(|i| psi.at(i, c)).collect();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let r = self.grid.coord(i).hypot(self.grid.coord(j)) / h;
                if r > (axis.len() - 3) as f64 {
                    continue;
                }
                worst = worst.max((psi.at(i, j) - interp_even(&axis, r)).abs());
            }
        }
        worst
    }
}

/// Cubic Lagrange interpolation of samples `a[k]` at `t = k`, using even reflection at 0.
fn interp_even(a: &[f64], t: f64) -> f64 {
    let k = t.floor() as isize;
    let s = t - k as f64;
    let at = |m: isize| a[m.unsigned_abs()];
    let l = [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ];
    l[0] * at(k - 1) + l[1] * at(k) + l[2] * at(k + 1) + l[3] * at(k + 2)
}

/// Solves `Lψ = f` for solvable `f`, with `∇ψ(0) = 0`.
pub fn solve_mod_kernel(op: &LinearOperator, f: &Field2D) -> Result<Field2D> {
    op.solve(f, "f").map(|s| s.field)
}

/// Radial version of `Lψ = f`: `-ψ'' - ψ'/r + (1 - 3w^2)ψ = f`, `ψ'(0) = 0`, `ψ(R) = 0`,
/// second-order differences on the profile grid.
pub fn solve_radial(townes: &TownesProfile, f: &[f64]) -> Vec<f64> {
    let n = townes.grid.count + 1;
    let h = townes.grid.step;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = f.to_vec();
    rhs.resize(n, 0.0);
    for i in 0..n {
        let q = 1.0 - 3.0 * townes.w[i] * townes.w[i];
        if i == 0 {
            diag[0] = 4.0 / (h * h) + q;
            upper[0] = -4.0 / (h * h);
        } else if i == n - 1 {
            diag[i] = 1.0;
            rhs[i] = 0.0;
        } else {
            let r = townes.grid.r(i);
            lower[i] = -1.0 / (h * h) + 1.0 / (2.0 * h * r);
            diag[i] = 2.0 / (h * h) + q;
            upper[i] = -1.0 / (h * h) - 1.0 / (2.0 * h * r);
        }
    }
    // Thomas algorithm
    for i in 1..n {
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}

/// Lifts radial samples on the profile grid to the 2D grid (cubic interpolation in `r`).
pub fn lift_radial(townes: &TownesProfile, values: &[f64], grid: Grid2D) -> Field2D {
    let h = townes.grid.step;
    let last = values.len() - 3;
    Field2D::from_fn(grid, |x, y| {
        let t = x.hypot(y) / h;
        if t >= last as f64 { 0.0 } else { interp_even(values, t) }
    })
}

/// `ψ₂ = -(w + x·∇w)/2`.
pub fn build_psi2(townes: &TownesProfile, grid: Grid2D) -> Field2D {
    Field2D::from_fn(grid, |x, y| {
        let r = x.hypot(y);
        -0.5 * (townes.w_at(r) + r * townes.dw_at(r))
    })
}

fn field_h(spec: &PotentialSpec, grid: Grid2D, y0: [f64; 2]) -> Field2D {
    Field2D::from_fn(grid, |x, y| spec.h(x + y0[0], y + y0[1]))
}

fn field_grad_h(spec: &PotentialSpec, grid: Grid2D, y0: [f64; 2]) -> [Field2D; 2] {
    [
        Field2D::from_fn(grid, |x, y| spec.grad_h(x + y0[0], y + y0[1])[0]),
        Field2D::from_fn(grid, |x, y| spec.grad_h(x + y0[0], y + y0[1])[1]),
    ]
}

/// `f₁ = -2w^3/∫w^4 - 2h(x+y₀)w / (p ∫h(x+y₀)w^2)`.
pub fn psi1_forcing(op: &LinearOperator, townes: &TownesProfile, spec: &PotentialSpec, analysis: &PotentialAnalysis) -> Field2D {
    let hf = field_h(spec, op.grid, analysis.y0);
    let quartic = townes.moments.quartic;
    let c = 2.0 / (spec.p * analysis.h0);
    op.w.zip_map(&hf, |w, h| -2.0 * w * w * w / quartic - c * h * w)
}

pub fn build_psi1(op: &LinearOperator, townes: &TownesProfile, spec: &PotentialSpec, analysis: &PotentialAnalysis) -> Result<KernelSolve> {
    op.solve(&psi1_forcing(op, townes, spec, analysis), "psi1")
}

/// `M[j][i] = ⟨∂_j w, w ∂_i h(x+y₀)⟩`, equal to `-½ ∂_i∂_j H(y₀)`.
fn solvability_matrix(op: &LinearOperator, spec: &PotentialSpec, y0: [f64; 2]) -> [[f64; 2]; 2] {
    let gh = field_grad_h(spec, op.grid, y0);
    let mut m = [[0.0; 2]; 2];
    for j in 0..2 {
        for i in 0..2 {
            let wg = op.w.zip_map(&gh[i], |w, g| w * g);
            m[j][i] = op.kernel[j].dot(&wg);
        }
    }
    m
}

fn solve2(m: [[f64; 2]; 2], b: [f64; 2], what: &str) -> Result<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(det.abs() > 1e-10 * scale * scale) {
        return Err(Error::SingularSystem(format!("{what}: determinant {det:e}")));
    }
    Ok([(m[1][1] * b[0] - m[0][1] * b[1]) / det, (-m[1][0] * b[0] + m[0][0] * b[1]) / det])
}

/// `3wψ₁² - (3w²/a* + g(0)h(x+y₀)/λ^{2+p})ψ₁`, the part of `f₃` without `y⁰`.
fn psi3_base(op: &LinearOperator, townes: &TownesProfile, spec: &PotentialSpec, analysis: &PotentialAnalysis, psi1: &Field2D) -> Field2D {
    let hf = field_h(spec, op.grid, analysis.y0);
    let a = townes.a_star;
    let c = spec.g0() / analysis.lambda_2p();
    let mut out = Field2D::zeros(op.grid);
    for k in 0..out.values.len() {
        let (w, p1, h) = (op.w.values[k], psi1.values[k], hf.values[k]);
        out.values[k] = 3.0 * w * p1 * p1 - (3.0 * w * w / a + c * h) * p1;
    }
    out
}

/// `y⁰` from the requirement that `f₃` be orthogonal to `∂_j w`, `j = 1, 2`.
pub fn solve_y_sup(op: &LinearOperator, townes: &TownesProfile, spec: &PotentialSpec, analysis: &PotentialAnalysis, psi1: &Field2D) -> Result<[f64; 2]> {
    let m = solvability_matrix(op, spec, analysis.y0);
    let b = op.kernel_pairing(&psi3_base(op, townes, spec, analysis, psi1));
    // ⟨∂_j w, w y⁰·∇h⟩ g(0) / λ^{1+p} = b_j
    let scale = analysis.lambda_1p() / spec.g0();
    let y = solve2(m, [b[0] * scale, b[1] * scale], "y_sup")?;
    if spec.is_even() {
        return Ok([0.0, 0.0]);
    }
    Ok(y)
}

/// `(f₃, f₄, f₅)`.
pub fn psi345_forcings(
    op: &LinearOperator,
    townes: &TownesProfile,
    spec: &PotentialSpec,
    analysis: &PotentialAnalysis,
    psi1: &Field2D,
    psi2: &Field2D,
    y_sup: [f64; 2],
) -> [Field2D; 3] {
    let y0 = analysis.y0;
    let gh = field_grad_h(spec, op.grid, y0);
    let hf = field_h(spec, op.grid, y0);
    let a = townes.a_star;
    let g0 = spec.g0();
    let l2p = analysis.lambda_2p();
    let l1p = analysis.lambda_1p();
    let base = psi3_base(op, townes, spec, analysis, psi1);
    let mut f3 = base;
    let mut f4 = Field2D::zeros(op.grid);
    let mut f5 = Field2D::zeros(op.grid);
    for k in 0..f3.values.len() {
        let w = op.w.values[k];
        let (p1, p2) = (psi1.values[k], psi2.values[k]);
        let (gx, gy) = (gh[0].values[k], gh[1].values[k]);
        f3.values[k] -= g0 * w / l1p * (y_sup[0] * gx + y_sup[1] * gy);
        f4.values[k] = 3.0 * w * p2 * p2 + p2;
        f5.values[k] = 6.0 * w * p1 * p2 + p1 - (3.0 * w * w / a + g0 * hf.values[k] / l2p) * p2
            - g0 * w / (2.0 * l2p) * (y0[0] * gx + y0[1] * gy);
    }
    [f3, f4, f5]
}

pub fn build_psi345(
    op: &LinearOperator,
    townes: &TownesProfile,
    spec: &PotentialSpec,
    analysis: &PotentialAnalysis,
    psi1: &Field2D,
    psi2: &Field2D,
    y_sup: [f64; 2],
) -> Result<[KernelSolve; 3]> {
    let [f3, f4, f5] = psi345_forcings(op, townes, spec, analysis, psi1, psi2, y_sup);
    Ok([op.solve(&f3, "psi3")?, op.solve(&f4, "psi4")?, op.solve(&f5, "psi5")?])
}

/// Radial solve of `Lψ₄ = 3wψ₂² + ψ₂` on the profile grid.
pub fn psi4_radial(townes: &TownesProfile) -> Vec<f64> {
    let f: Vec<f64> = (0..=townes.grid.count)
        .map(|i| {
            let r = townes.grid.r(i);
            let p2 = -0.5 * (townes.w[i] + r * townes.dw[i]);
            3.0 * townes.w[i] * p2 * p2 + p2
        })
        .collect();
    solve_radial(townes, &f)
}

/// `T(x) = λ^{-m} Σ_{|α|=m} x^α/α! D^α g(0)` on the grid, or `None` for a flat envelope.
fn envelope_term(spec: &PotentialSpec, analysis: &PotentialAnalysis, grid: Grid2D) -> Option<Field2D> {
    let taylor = spec.envelope.taylor();
    let m = taylor.m?;
    if taylor.is_zero() {
        return None;
    }
    let lm = analysis.lambda.powi(m as i32);
    Some(Field2D::from_fn(grid, |x, y| taylor.polynomial(x, y) / lm))
}

/// `x₀` and `φ` for the envelope case. Requires even `h`.
pub fn build_phi(op: &LinearOperator, spec: &PotentialSpec, analysis: &PotentialAnalysis) -> Result<(Option<KernelSolve>, [f64; 2])> {
    if !spec.is_even() {
        return Err(Error::InvalidInput("envelope corrections require h(-x) = h(x)".into()));
    }
    let Some(t) = envelope_term(spec, analysis, op.grid) else {
        return Ok((None, [0.0, 0.0]));
    };
    let m = spec.envelope.taylor().m.unwrap_or(0);
    let hf = field_h(spec, op.grid, [0.0, 0.0]);
    let thw = Field2D { grid: op.grid, values: (0..t.values.len()).map(|k| t.values[k] * hf.values[k] * op.w.values[k]).collect() };
    let x0 = if m % 2 == 1 {
        let mm = solvability_matrix(op, spec, [0.0, 0.0]);
        let b = op.kernel_pairing(&thw);
        let g0 = spec.g0();
        solve2(mm, [-b[0] / g0, -b[1] / g0], "x0")?
    } else {
        [0.0, 0.0]
    };
    let gh = field_grad_h(spec, op.grid, [0.0, 0.0]);
    let g0 = spec.g0();
    let l2p = analysis.lambda_2p();
    let mut f = Field2D::zeros(op.grid);
    for k in 0..f.values.len() {
        let shift = (x0[0] * gh[0].values[k] + x0[1] * gh[1].values[k]) * g0 * op.w.values[k];
        f.values[k] = -(shift + thw.values[k]) / l2p;
    }
    Ok((Some(op.solve(&f, "phi")?), x0))
}

/// All correction profiles with their solvability vectors.
#[derive(Debug, Clone)]
pub struct CorrectionSet {
    pub grid: Grid2D,
    pub p: f64,
    pub psi1: Field2D,
    pub psi2: Field2D,
    pub psi3: Field2D,
    pub psi4: Field2D,
    pub psi5: Field2D,
    /// Zero when the envelope is flat.
    pub phi: Field2D,
    pub y_sup: [f64; 2],
    pub x0: [f64; 2],
    /// `(name, [c_1, c_2])` applied to each solved field.
    pub normalization_shift: Vec<(String, [f64; 2])>,
    pub diagnostics: CorrectionDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionDiagnostics {
    /// `(name, max |Lψ - f|, iterations)`
    pub solves: Vec<(String, f64, usize)>,
    pub kernel_defect: [f64; 2],
    pub psi4_radial_agreement: f64,
    pub psi4_symmetry: f64,
    pub psi2_symmetry: f64,
}

impl CorrectionSet {
    pub fn field(&self, name: &str) -> Option<&Field2D> {
        Some(match name {
            "psi1" => &self.psi1,
            "psi2" => &self.psi2,
            "psi3" => &self.psi3,
            "psi4" => &self.psi4,
            "psi5" => &self.psi5,
            "phi" => &self.phi,
            _ => return None,
        })
    }
}

/// Builds ψ₁…ψ₅, y⁰, and (for a non-flat envelope) φ and x₀.
pub fn build_corrections(townes: &TownesProfile, spec: &PotentialSpec, analysis: &PotentialAnalysis, opts: LinearOptions) -> Result<CorrectionSet> {
    let grid = Grid2D::centered_smooth(opts.radius, opts.step)?;
    let op = assemble_l_with(townes, grid, opts)?;
    build_corrections_on(&op, townes, spec, analysis)
}

pub fn build_corrections_on(op: &LinearOperator, townes: &TownesProfile, spec: &PotentialSpec, analysis: &PotentialAnalysis) -> Result<CorrectionSet> {
    let s1 = build_psi1(op, townes, spec, analysis)?;
    let psi2 = build_psi2(townes, op.grid);
    let y_sup = solve_y_sup(op, townes, spec, analysis, &s1.field)?;
    let [s3, s4, s5] = build_psi345(op, townes, spec, analysis, &s1.field, &psi2, y_sup)?;
    let flat = spec.envelope.taylor().m.is_none() || spec.envelope.taylor().is_zero();
    let (phi, x0) = if flat { (None, [0.0, 0.0]) } else { build_phi(op, spec, analysis)? };
    let radial = lift_radial(townes, &psi4_radial(townes), op.grid);
    let agreement = op.interior_max(&s4.field.axpy(-1.0, &radial));
    let mut solves = Vec::new();
    let mut shifts = Vec::new();
    for (name, s) in [("psi1", &s1), ("psi3", &s3), ("psi4", &s4), ("psi5", &s5)] {
        solves.push((name.to_string(), s.residual, s.iterations));
        shifts.push((name.to_string(), s.shift));
    }
    if let Some(s) = &phi {
        solves.push(("phi".to_string(), s.residual, s.iterations));
        shifts.push(("phi".to_string(), s.shift));
    }
    let diagnostics = CorrectionDiagnostics {
        solves,
        kernel_defect: op.kernel_defect(),
        psi4_radial_agreement: agreement,
        psi4_symmetry: op.radial_symmetry_residual(&s4.field),
        psi2_symmetry: op.radial_symmetry_residual(&psi2),
    };
    Ok(CorrectionSet {
        grid: op.grid,
        p: spec.p,
        psi1: s1.field,
        psi2,
        psi3: s3.field,
        psi4: s4.field,
        psi5: s5.field,
        phi: phi.map(|s| s.field).unwrap_or_else(|| Field2D::zeros(op.grid)),
        y_sup,
        x0,
        normalization_shift: shifts,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{eval_h, find_critical_point, AngularProfile, Envelope};
    use crate::potential::tests::townes;
    use std::sync::OnceLock;

    fn op() -> &'static LinearOperator {
        static OP: OnceLock<LinearOperator> = OnceLock::new();
        OP.get_or_init(|| assemble_l(townes(), Grid2D::centered_smooth(12.0, 0.1).unwrap()).unwrap())
    }

    #[test]
    fn kernel_and_dilation_identities() {
        let (t, op) = (townes(), op());
        let wn = op.w.max_abs();
        for k in &op.kernel {
            assert!(op.interior_max(&op.apply(k)) < 1e-2 * wn);
        }
        let dil = Field2D::from_fn(op.grid, |x, y| {
            let r = x.hypot(y);
            t.w_at(r) + r * t.dw_at(r)
        });
        assert!(op.interior_max(&op.apply(&dil).axpy(2.0, &op.w)) < 1e-2 * wn);
        let w3 = op.w.map(|v| v * v * v);
        assert!(op.interior_max(&op.apply(&op.w).axpy(2.0, &w3)) < 1e-2 * wn);
    }

    #[test]
    fn solving_w_gives_the_dilation_profile() {
        let (t, op) = (townes(), op());
        let s = op.solve(&op.w, "w").unwrap();
        let psi2 = build_psi2(t, op.grid);
        assert!(s.field.axpy(-1.0, &psi2).max_abs() < 1e-3 * psi2.max_abs());
        let g = op.gradient_at_origin(&s.field);
        assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
        assert!((psi2.at(op.grid.offset, op.grid.offset) + 0.5 * t.w0).abs() < 1e-12);
    }

    #[test]
    fn kernel_forcing_is_not_solvable() {
        let op = op();
        match op.solve(&op.kernel[0], "k1") {
            Err(Error::NotSolvable { name, r1, .. }) => {
                assert_eq!(name, "k1");
                assert!(r1 > 0.9);
            }
            other => panic!("expected NotSolvable, got {other:?}"),
        }
    }

    #[test]
    fn normalization_is_unique() {
        let (t, op) = (townes(), op());
        let m = op.kernel_gradient_matrix();
        let d2 = t.d2w(0);
        assert!((m[0][0] - d2).abs() < 1e-3 * d2.abs() && (m[1][1] - d2).abs() < 1e-3 * d2.abs());
        assert!(m[0][1].abs() < 1e-12 && m[1][0].abs() < 1e-12);
        let s = op.solve(&op.w, "w").unwrap();
        let bumped = s.field.axpy(0.1, &op.kernel[0]).axpy(-0.2, &op.kernel[1]);
        let g = op.gradient_at_origin(&bumped);
        assert!((g[0] - 0.1 * d2).abs() < 1e-3 && (g[1] + 0.2 * d2).abs() < 1e-3);
    }

    #[test]
    fn radial_solver_reproduces_dilation_profile() {
        let t = townes();
        let psi = solve_radial(t, &t.w);
        for i in (0..t.grid.count).step_by(200) {
            let r = t.grid.r(i);
            let exact = -0.5 * (t.w[i] + r * t.dw[i]);
            assert!((psi[i] - exact).abs() < 1e-4, "r={r}: {} vs {exact}", psi[i]);
        }
    }

    #[test]
    fn psi1_for_harmonic_trap_is_even_and_normalized() {
        let (t, op) = (townes(), op());
        let spec = PotentialSpec::radial(2.0);
        let an = find_critical_point(&spec, t).unwrap();
        let s = build_psi1(op, t, &spec, &an).unwrap();
        let n = op.grid.n;
        let mut asym = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((s.field.at(i, j) - s.field.at(n - 1 - i, n - 1 - j)).abs());
            }
        }
        assert!(asym < 1e-8 * s.field.max_abs());
        assert!(op.w.dot(&s.field).abs() < 1e-2);
        assert!((op.w.map(|v| v * v * v).dot(&s.field) - 1.5).abs() < 1.5e-2);
        let y = solve_y_sup(op, t, &spec, &an, &s.field).unwrap();
        assert_eq!(y, [0.0, 0.0]);
    }

    #[test]
    fn wrong_center_breaks_solvability() {
        let (t, op) = (townes(), op());
        let spec = PotentialSpec::tilted(0.05).unwrap();
        let an = find_critical_point(&spec, t).unwrap();
        assert!(build_psi1(op, t, &spec, &an).is_ok());
        let mut wrong = an.clone();
        wrong.y0[0] += 0.1;
        wrong.h0 = eval_h(&spec, t, wrong.y0);
        let f = psi1_forcing(op, t, &spec, &wrong);
        let pair = op.kernel_pairing(&f);
        // ⟨f₁, ∂₁w⟩ = ∂₁H(y) / (p H(y))
        let d = 1e-4;
        let fd = (eval_h(&spec, t, [wrong.y0[0] + d, wrong.y0[1]]) - eval_h(&spec, t, [wrong.y0[0] - d, wrong.y0[1]])) / (2.0 * d);
        let expected = fd / (spec.p * wrong.h0);
        assert!((pair[0] - expected).abs() < 1e-2 * expected.abs(), "{} vs {expected}", pair[0]);
        assert!(matches!(op.solve(&f, "psi1"), Err(Error::NotSolvable { .. })));
    }

    #[test]
    fn tilted_trap_second_order_solvability() {
        let (t, op) = (townes(), op());
        let spec = PotentialSpec::tilted(0.05).unwrap();
        let an = find_critical_point(&spec, t).unwrap();
        let s1 = build_psi1(op, t, &spec, &an).unwrap();
        let psi2 = build_psi2(t, op.grid);
        let y = solve_y_sup(op, t, &spec, &an, &s1.field).unwrap();
        assert!(y[0].is_finite() && y[1].abs() < 1e-6);
        let [f3, _, f5] = psi345_forcings(op, t, &spec, &an, &s1.field, &psi2, y);
        let pair = op.kernel_pairing(&f3);
        assert!(pair[0].abs() < 1e-10 * f3.norm_l2() && pair[1].abs() < 1e-10 * f3.norm_l2());
        assert!(op.solve(&f3, "psi3").is_ok());
        assert!(op.solve(&f5, "psi5").is_ok());
    }

    #[test]
    fn flat_envelope_has_no_phi() {
        let (t, op) = (townes(), op());
        let spec = PotentialSpec::radial(2.0);
        let an = find_critical_point(&spec, t).unwrap();
        let (phi, x0) = build_phi(op, &spec, &an).unwrap();
        assert!(phi.is_none());
        assert_eq!(x0, [0.0, 0.0]);
        let odd_h = PotentialSpec::tilted(0.05).unwrap();
        assert!(build_phi(op, &odd_h, &an).is_err());
    }

    #[test]
    fn odd_envelope_order_fixes_x0() {
        let (t, op) = (townes(), op());
        for env in ["taylor:m=1,coeffs=[1,0]", "taylor:m=3,coeffs=[1,0,0,0]"] {
            let spec = PotentialSpec::new(2.0, 0.0, AngularProfile::preset("one").unwrap(), Envelope::parse(env).unwrap()).unwrap();
            let an = find_critical_point(&spec, t).unwrap();
            let (phi, x0) = build_phi(op, &spec, &an).unwrap();
            let phi = phi.unwrap();
            assert!(x0[0].is_finite() && x0[0] != 0.0 && x0[1].abs() < 1e-12, "{env}: {x0:?}");
            assert!(phi.residual < LIN_TOL * op.w.max_abs());
        }
    }

    #[test]
    fn even_envelope_order_keeps_x0_at_origin() {
        let (t, op) = (townes(), op());
        let spec = PotentialSpec::new(
            2.0,
            0.0,
            AngularProfile::preset("one").unwrap(),
            Envelope::parse("taylor:m=2,coeffs=[1,0,1]").unwrap(),
        )
        .unwrap();
        let an = find_critical_point(&spec, t).unwrap();
        let (phi, x0) = build_phi(op, &spec, &an).unwrap();
        assert_eq!(x0, [0.0, 0.0]);
        let g = op.gradient_at_origin(&phi.unwrap().field);
        assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
    }
}
