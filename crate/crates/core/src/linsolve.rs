//! Poisson solvers, Krylov iteration, dense assembly and Schur-complement
//! reduction of block saddle-point systems.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::grid::{CellField, Field, GridSpec};
use crate::ops;
use crate::{Error, Result};

/// Matrix-free linear map `R^cols -> R^rows`.
pub struct LinearOperator<'a> {
    pub rows: usize,
    pub cols: usize,
    f: Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>,
}

impl<'a> LinearOperator<'a> {
    pub fn new(rows: usize, cols: usize, f: impl Fn(&[f64]) -> Vec<f64> + 'a) -> Self {
        LinearOperator { rows, cols, f: Box::new(f) }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let y = (self.f)(x);
        debug_assert_eq!(y.len(), self.rows);
        y
    }

    pub fn identity(n: usize) -> Self {
        LinearOperator::new(n, n, |x| x.to_vec())
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        LinearOperator::new(rows, cols, move |_| vec![0.0; rows])
    }

    pub fn from_matrix(m: DMatrix<f64>) -> LinearOperator<'static> {
        let (r, c) = m.shape();
        LinearOperator::new(r, c, move |x| (&m * DVector::from_column_slice(x)).as_slice().to_vec())
    }
}

/// Dense matrix by probing unit vectors.
pub fn assemble_dense(op: &LinearOperator) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(op.rows, op.cols);
    let mut e = vec![0.0; op.cols];
    for j in 0..op.cols {
        e[j] = 1.0;
        let col = op.apply(&e);
        m.set_column(j, &DVector::from_vec(col));
        e[j] = 0.0;
    }
    m
}

/// `sigma_max / sigma_min`; infinite for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix has non-finite entries".into()));
    }
    if m.is_empty() {
        return Ok(1.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Default relative tolerance for Krylov solves.
pub const KRYLOV_TOL: f64 = 1e-10;

/// Unpreconditioned BiCGSTAB. Returns the solution and iteration count.
pub fn bicgstab(op: &LinearOperator, rhs: &[f64], tol: f64, maxiter: usize) -> Result<(Vec<f64>, usize)> {
    let n = rhs.len();
    if op.rows != op.cols || op.cols != n {
        return Err(Error::SpaceMismatch("bicgstab needs a square operator matching rhs".into()));
    }
    let bnorm = norm2(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = rhs.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=maxiter {
        let rho_new = dotp(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::Breakdown("rho vanished".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        v = op.apply(&p);
        let den = dotp(&r0, &v);
        if den.abs() < 1e-300 {
            return Err(Error::Breakdown("r0.v vanished".into()));
        }
        alpha = rho / den;
        let s: Vec<f64> = (0..n).map(|k| r[k] - alpha * v[k]).collect();
        if norm2(&s) <= tol * bnorm {
            for k in 0..n {
                x[k] += alpha * p[k];
            }
            return Ok((x, it));
        }
        let t = op.apply(&s);
        let tt = dotp(&t, &t);
        if tt == 0.0 {
            return Err(Error::Breakdown("t vanished".into()));
        }
        omega = dotp(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * p[k] + omega * s[k];
            r[k] = s[k] - omega * t[k];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("bicgstab iterate".into()));
        }
        if norm2(&r) <= tol * bnorm {
            return Ok((x, it));
        }
        if omega == 0.0 {
            return Err(Error::Breakdown("omega vanished".into()));
        }
    }
    Err(Error::NonConvergence(format!("bicgstab: no convergence in {maxiter} iterations")))
}

/// Which Poisson solver backs the `L^{-1}` applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PoissonKind {
    /// Homogeneous Dirichlet box via sine transforms.
    Dst,
    /// Unbounded domain via the lattice Green's function.
    Lgf,
    /// Doubly periodic window via FFT, zero mode removed.
    Fft,
}

/// A Poisson solver together with the discrete Laplacian it inverts.
pub trait PoissonSolver: Send + Sync {
    fn grid(&self) -> &GridSpec;
    /// Solve `L u = f`.
    fn solve(&self, f: &CellField) -> Result<CellField>;
    /// The Laplacian consistent with [`PoissonSolver::solve`].
    fn apply(&self, u: &CellField) -> CellField;
    /// Cells on which [`PoissonSolver::apply`] is meaningful (`None` = all).
    fn residual_mask(&self) -> Option<Vec<bool>> {
        None
    }
    fn kind(&self) -> PoissonKind;
}

/// Build the requested solver for `grid`.
pub fn make_poisson(kind: PoissonKind, grid: &GridSpec) -> Result<Box<dyn PoissonSolver>> {
    Ok(match kind {
        PoissonKind::Dst => Box::new(DirichletDst::new(grid)?),
        PoissonKind::Lgf => Box::new(Lgf::new(grid)?),
        PoissonKind::Fft => Box::new(PeriodicFft::new(grid)?),
    })
}

struct Fft2 {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(nx: usize, ny: usize) -> Self {
        let mut p = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            fx: p.plan_fft_forward(nx),
            fy: p.plan_fft_forward(ny),
            ix: p.plan_fft_inverse(nx),
            iy: p.plan_fft_inverse(ny),
        }
    }

    /// In-place 2D transform of row-major data (x fastest). Unnormalized.
    fn run(&self, data: &mut [Complex<f64>], inverse: bool) {
        let (nx, ny) = (self.nx, self.ny);
        let (fx, fy) = if inverse { (&self.ix, &self.iy) } else { (&self.fx, &self.fy) };
        fx.process(data);
        let mut col = vec![Complex::new(0.0, 0.0); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = data[i + nx * j];
            }
            fy.process(&mut col);
            for j in 0..ny {
                data[i + nx * j] = col[j];
            }
        }
    }
}

/// Doubly periodic Poisson solver. The mean of the right-hand side is
/// discarded and the solution has zero mean.
pub struct PeriodicFft {
    grid: GridSpec,
    fft: Fft2,
    inv_lambda: Vec<f64>,
}

impl PeriodicFft {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut inv_lambda = vec![0.0; nx * ny];
        for l in 0..ny {
            let ly = (2.0 * (2.0 * std::f64::consts::PI * l as f64 / ny as f64).cos() - 2.0) / (grid.dy * grid.dy);
            for k in 0..nx {
                let lx = (2.0 * (2.0 * std::f64::consts::PI * k as f64 / nx as f64).cos() - 2.0) / (grid.dx * grid.dx);
                let lam = lx + ly;
                inv_lambda[k + nx * l] = if k == 0 && l == 0 { 0.0 } else { 1.0 / lam };
            }
        }
        Ok(PeriodicFft { grid: *grid, fft: Fft2::new(nx, ny), inv_lambda })
    }
}

impl PoissonSolver for PeriodicFft {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn solve(&self, f: &CellField) -> Result<CellField> {
        let n = self.grid.len();
        let mut d: Vec<Complex<f64>> = f.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.run(&mut d, false);
        for (z, s) in d.iter_mut().zip(&self.inv_lambda) {
            *z *= *s;
        }
        self.fft.run(&mut d, true);
        let scale = 1.0 / n as f64;
        Ok(CellField { grid: self.grid, data: d.iter().map(|z| z.re * scale).collect() })
    }
    fn apply(&self, u: &CellField) -> CellField {
        ops::laplacian_center(u)
    }
    fn kind(&self) -> PoissonKind {
        PoissonKind::Fft
    }
}

/// DST-I of each length-`n` line through a complex FFT of length `2(n + 1)`.
struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    fn new(n: usize) -> Self {
        Dst1 { n, fft: FftPlanner::new().plan_fft_forward(2 * (n + 1)) }
    }

    /// `X_k = sum_i x_i sin(pi (i+1)(k+1) / (n+1))`.
    fn run(&self, x: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let n = self.n;
        let m = 2 * (n + 1);
        buf.clear();
        buf.resize(m, Complex::new(0.0, 0.0));
        for i in 0..n {
            buf[i + 1] = Complex::new(x[i], 0.0);
            buf[m - i - 1] = Complex::new(-x[i], 0.0);
        }
        self.fft.process(buf);
        for k in 0..n {
            x[k] = -0.5 * buf[k + 1].im;
        }
    }
}

/// Dirichlet box solver. Boundary values live at the ghost cell centers just
/// outside the window; [`PoissonSolver::apply`] uses zero ghost values and
/// [`dirichlet_boundary_term`] supplies the inhomogeneous part.
pub struct DirichletDst {
    grid: GridSpec,
    sx: Dst1,
    sy: Dst1,
    inv_lambda: Vec<f64>,
}

impl DirichletDst {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut inv_lambda = vec![0.0; nx * ny];
        for l in 0..ny {
            let ly = (2.0 * (std::f64::consts::PI * (l + 1) as f64 / (ny + 1) as f64).cos() - 2.0)
                / (grid.dy * grid.dy);
            for k in 0..nx {
                let lx = (2.0 * (std::f64::consts::PI * (k + 1) as f64 / (nx + 1) as f64).cos() - 2.0)
                    / (grid.dx * grid.dx);
                inv_lambda[k + nx * l] = 1.0 / (lx + ly);
            }
        }
        Ok(DirichletDst { grid: *grid, sx: Dst1::new(nx), sy: Dst1::new(ny), inv_lambda })
    }

    fn dst2(&self, d: &mut [f64]) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut buf = Vec::new();
        for j in 0..ny {
            self.sx.run(&mut d[j * nx..(j + 1) * nx], &mut buf);
        }
        let mut col = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = d[i + nx * j];
            }
            self.sy.run(&mut col, &mut buf);
            for j in 0..ny {
                d[i + nx * j] = col[j];
            }
        }
    }
}

/// Five-point Laplacian with zero values outside the window.
pub fn laplacian_zero_ghost(u: &CellField) -> CellField {
    let g = &u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (ax, ay) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            u.data[i as usize + nx * j as usize]
        }
    };
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let c = at(i, j);
            out[i as usize + nx * j as usize] =
                (at(i + 1, j) - 2.0 * c + at(i - 1, j)) * ax + (at(i, j + 1) - 2.0 * c + at(i, j - 1)) * ay;
        }
    }
    CellField { grid: *g, data: out }
}

/// `b` such that the full Dirichlet problem `L u = f` reads `L_0 u = f + b`,
/// with `g` evaluated at the ghost cell centers.
pub fn dirichlet_boundary_term(grid: &GridSpec, g: impl Fn(f64, f64) -> f64) -> CellField {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (ax, ay) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let mut b = CellField::zeros(*grid);
    let xc = |i: isize| grid.x_of(crate::grid::Space::C, i);
    let yc = |j: isize| grid.y_of(crate::grid::Space::C, j);
    for j in 0..ny {
        b.data[grid.idx(0, j as usize)] -= g(xc(-1), yc(j)) * ax;
        b.data[grid.idx((nx - 1) as usize, j as usize)] -= g(xc(nx), yc(j)) * ax;
    }
    for i in 0..nx {
        b.data[grid.idx(i as usize, 0)] -= g(xc(i), yc(-1)) * ay;
        b.data[grid.idx(i as usize, (ny - 1) as usize)] -= g(xc(i), yc(ny)) * ay;
    }
    b
}

/// Solve the Dirichlet problem with boundary data `g`: `L_0 u = rhs + b(g)`.
pub fn poisson_dirichlet(rhs: &CellField, g: impl Fn(f64, f64) -> f64) -> Result<CellField> {
    let s = DirichletDst::new(&rhs.grid)?;
    let b = dirichlet_boundary_term(&rhs.grid, g);
    s.solve(&rhs.add(&b)?)
}

impl PoissonSolver for DirichletDst {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn solve(&self, f: &CellField) -> Result<CellField> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut d = f.data.clone();
        self.dst2(&mut d);
        for (v, s) in d.iter_mut().zip(&self.inv_lambda) {
            *v *= s;
        }
        self.dst2(&mut d);
        let scale = 4.0 / ((nx + 1) * (ny + 1)) as f64;
        d.iter_mut().for_each(|v| *v *= scale);
        Ok(CellField { grid: self.grid, data: d })
    }
    fn apply(&self, u: &CellField) -> CellField {
        laplacian_zero_ghost(u)
    }
    fn kind(&self) -> PoissonKind {
        PoissonKind::Dst
    }
}

/// 16-point Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre_16() -> ([f64; 16], [f64; 16]) {
    let n = 16;
    let mut x = [0.0; 16];
    let mut w = [0.0; 16];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

/// Lattice Green's function of the unscaled five-point Laplacian,
/// normalized so that `G(0, 0) = 0` and `Delta G = delta`.
///
/// Evaluated from the one-dimensional integral representation
/// `G(m, n) = 1/(2 pi) int_0^pi (1 - exp(-s m) cos(n t)) / sinh(s) dt` with
/// `cosh s = 2 - cos t`, using composite Gauss-Legendre panels refined
/// geometrically towards `t = 0`.
pub fn lattice_green(m: i64, n: i64) -> f64 {
    let (m, n) = {
        let (a, b) = (m.unsigned_abs(), n.unsigned_abs());
        (a.max(b) as f64, a.min(b) as f64)
    };
    if m == 0.0 {
        return 0.0;
    }
    thread_local! {
        static GL: ([f64; 16], [f64; 16]) = gauss_legendre_16();
    }
    let integrand = |t: f64| -> f64 {
        let h = 2.0 * (0.5 * t).sin().powi(2);
        let sh = (h * (2.0 + h)).sqrt();
        let sigma = (h + sh).ln_1p();
        let s = (0.5 * n * t).sin();
        let num = -(-sigma * m).exp_m1() * (n * t).cos() + 2.0 * s * s;
        num / sh
    };
    GL.with(|(gx, gw)| {
        let panel = |a: f64, b: f64| -> f64 {
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            let mut s = 0.0;
            for k in 0..16 {
                s += gw[k] * integrand(c + r * gx[k]);
            }
            s * r
        };
        let p = 8 + (n as usize) + (m as usize) / 2;
        let w = std::f64::consts::PI / p as f64;
        let mut total = 0.0;
        for k in 1..p {
            total += panel(k as f64 * w, (k + 1) as f64 * w);
        }
        // first panel split geometrically towards the origin
        let mut b = w;
        for _ in 0..40 {
            let a = 0.5 * b;
            total += panel(a, b);
            b = a;
        }
        total += panel(0.0, b);
        total / (2.0 * std::f64::consts::PI)
    })
}

/// Unbounded-domain solver: convolution with the lattice Green's function on
/// a zero-padded `2nx x 2ny` periodic window. Requires `dx == dy`.
pub struct Lgf {
    grid: GridSpec,
    fft: Fft2,
    kernel_hat: Vec<Complex<f64>>,
}

impl Lgf {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        if (grid.dx - grid.dy).abs() > 1e-12 * grid.dx {
            return Err(Error::InvalidGrid("lattice Green's function needs dx == dy".into()));
        }
        let (nx, ny) = (grid.nx, grid.ny);
        let (px, py) = (2 * nx, 2 * ny);
        let mut table = vec![0.0; nx.max(ny) * nx.max(ny)];
        let w = nx.max(ny);
        for a in 0..w {
            for b in 0..=a {
                let v = lattice_green(a as i64, b as i64);
                table[a + w * b] = v;
                table[b + w * a] = v;
            }
        }
        let h2 = grid.dx * grid.dx;
        let mut k = vec![Complex::new(0.0, 0.0); px * py];
        for j in 0..py {
            let dj = if j <= ny { j } else { py - j };
            if dj >= ny {
                continue;
            }
            for i in 0..px {
                let di = if i <= nx { i } else { px - i };
                if di >= nx {
                    continue;
                }
                k[i + px * j] = Complex::new(h2 * table[di + w * dj], 0.0);
            }
        }
        let fft = Fft2::new(px, py);
        fft.run(&mut k, false);
        Ok(Lgf { grid: *grid, fft, kernel_hat: k })
    }
}

/// Cells not on the outermost ring of the window.
pub fn interior_mask(grid: &GridSpec) -> Vec<bool> {
    let mut m = vec![false; grid.len()];
    for j in 1..grid.ny - 1 {
        for i in 1..grid.nx - 1 {
            m[grid.idx(i, j)] = true;
        }
    }
    m
}

impl PoissonSolver for Lgf {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn solve(&self, f: &CellField) -> Result<CellField> {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mask = interior_mask(g);
        if f.data.iter().zip(&mask).any(|(v, m)| !m && *v != 0.0) {
            return Err(Error::InvalidArgument("source touches the window boundary".into()));
        }
        let (px, py) = (2 * nx, 2 * ny);
        let mut d = vec![Complex::new(0.0, 0.0); px * py];
        for j in 0..ny {
            for i in 0..nx {
                d[i + px * j] = Complex::new(f.data[i + nx * j], 0.0);
            }
        }
        self.fft.run(&mut d, false);
        for (z, k) in d.iter_mut().zip(&self.kernel_hat) {
            *z *= *k;
        }
        self.fft.run(&mut d, true);
        let scale = 1.0 / (px * py) as f64;
        let mut out = CellField::zeros(*g);
        for j in 0..ny {
            for i in 0..nx {
                out.data[i + nx * j] = d[i + px * j].re * scale;
            }
        }
        Ok(out)
    }
    fn apply(&self, u: &CellField) -> CellField {
        laplacian_zero_ghost(u)
    }
    fn residual_mask(&self) -> Option<Vec<bool>> {
        Some(interior_mask(&self.grid))
    }
    fn kind(&self) -> PoissonKind {
        PoissonKind::Lgf
    }
}

/// Unbounded solve of `L u = rhs` (fresh solver per call).
pub fn poisson_unbounded(rhs: &CellField) -> Result<CellField> {
    Lgf::new(&rhs.grid)?.solve(rhs)
}

/// Saddle-point system `[A B1^T; B2 -C] (x, y) = (r1, r2)`.
pub struct BlockSystem<'a> {
    pub a: LinearOperator<'a>,
    pub a_inv: LinearOperator<'a>,
    pub b1t: LinearOperator<'a>,
    pub b2: LinearOperator<'a>,
    pub c: LinearOperator<'a>,
    /// Rows of the first block row that enter residual checks.
    pub row_mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchurSolver {
    Lu,
    Bicgstab,
}

/// Result of [`schur_solve`].
#[derive(Debug, Clone)]
pub struct SchurSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    /// Dense Schur complement when the direct path assembled it.
    pub schur: Option<DMatrix<f64>>,
}

impl<'a> BlockSystem<'a> {
    pub fn n(&self) -> usize {
        self.a.rows
    }

    pub fn m(&self) -> usize {
        self.c.rows
    }

    fn check(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let ok = self.a.cols == n
            && self.a_inv.rows == n
            && self.a_inv.cols == n
            && self.b1t.rows == n
            && self.b1t.cols == m
            && self.b2.rows == m
            && self.b2.cols == n
            && self.c.cols == m;
        if ok {
            Ok(())
        } else {
            Err(Error::SpaceMismatch("block shapes are inconsistent".into()))
        }
    }

    /// `S y = -C y - B2 A^{-1} B1^T y`.
    pub fn schur_apply(&self, y: &[f64]) -> Vec<f64> {
        let cy = self.c.apply(y);
        let t = self.b2.apply(&self.a_inv.apply(&self.b1t.apply(y)));
        cy.iter().zip(&t).map(|(a, b)| -a - b).collect()
    }

    pub fn schur_operator(&self) -> LinearOperator<'_> {
        LinearOperator::new(self.m(), self.m(), move |y| self.schur_apply(y))
    }

    /// Monolithic product.
    pub fn apply(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ax = self.a.apply(x);
        let by = self.b1t.apply(y);
        let bx = self.b2.apply(x);
        let cy = self.c.apply(y);
        (
            ax.iter().zip(&by).map(|(a, b)| a + b).collect(),
            bx.iter().zip(&cy).map(|(a, b)| a - b).collect(),
        )
    }

    /// `||M (x, y) - r|| / ||r||` over the checked rows.
    pub fn relative_residual(&self, x: &[f64], y: &[f64], r1: &[f64], r2: &[f64]) -> f64 {
        let (p, q) = self.apply(x, y);
        let keep = |k: usize| self.row_mask.as_ref().is_none_or(|m| m[k]);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..p.len() {
            if keep(k) {
                num += (p[k] - r1[k]).powi(2);
                den += r1[k].powi(2);
            }
        }
        for k in 0..q.len() {
            num += (q[k] - r2[k]).powi(2);
            den += r2[k].powi(2);
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// Dense monolithic matrix (for oracles on small instances).
    pub fn assemble_monolithic(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let op = LinearOperator::new(n + m, n + m, |z| {
            let (p, q) = self.apply(&z[..n], &z[n..]);
            [p, q].concat()
        });
        assemble_dense(&op)
    }
}

/// Schur-complement reduction: `A x* = r1`, `S y = r2 - B2 x*`,
/// `x = x* - A^{-1} B1^T y`.
pub fn schur_solve(sys: &BlockSystem, solver: SchurSolver, r1: &[f64], r2: &[f64]) -> Result<SchurSolution> {
    sys.check()?;
    let xs = sys.a_inv.apply(r1);
    let b2x = sys.b2.apply(&xs);
    let rhs: Vec<f64> = r2.iter().zip(&b2x).map(|(a, b)| a - b).collect();
    let m = sys.m();
    let (y, iterations, schur) = match solver {
        SchurSolver::Lu => {
            let s = assemble_dense(&sys.schur_operator());
            let (y, steps) = lu_refined(&s, &rhs)?;
            (y, steps, Some(s))
        }
        SchurSolver::Bicgstab => {
            let op = sys.schur_operator();
            let (y, it) = bicgstab(&op, &rhs, KRYLOV_TOL * 1e-2, 10 * m.max(10))?;
            (y, it, None)
        }
    };
    let corr = sys.a_inv.apply(&sys.b1t.apply(&y));
    let x = xs.iter().zip(&corr).map(|(a, b)| a - b).collect();
    Ok(SchurSolution { x, y, iterations, schur })
}

/// Dense LU solve followed by up to two steps of iterative refinement.
/// Returns the refinement steps taken.
pub fn lu_refined(a: &DMatrix<f64>, b: &[f64]) -> Result<(Vec<f64>, usize)> {
    let lu = a.clone().lu();
    let bv = DVector::from_column_slice(b);
    let mut x = lu.solve(&bv).ok_or_else(|| Error::Singular("LU factorization failed".into()))?;
    let mut res = &bv - a * &x;
    let mut steps = 0;
    while steps < 2 && res.norm() > 1e-14 * bv.norm() {
        let Some(dx) = lu.solve(&res) else { break };
        let cand = &x + dx;
        let r2 = &bv - a * &cand;
        if !(r2.norm() < res.norm()) {
            break;
        }
        x = cand;
        res = r2;
        steps += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LU solution".into()));
    }
    Ok((x.as_slice().to_vec(), steps))
}

/// Dense LU solve with a singularity check.
pub fn lu_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Singular("LU factorization failed".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LU solution".into()));
    }
    Ok(x.as_slice().to_vec())
}

/// Dense inverse of the block matrix assembled from the Schur complement:
/// `[A^-1 + A^-1 B1^T S^-1 B2 A^-1, -A^-1 B1^T S^-1; -S^-1 B2 A^-1, S^-1]`.
pub fn block_inverse(
    a: &DMatrix<f64>,
    b1t: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let ai = a.clone().try_inverse().ok_or_else(|| Error::Singular("A".into()))?;
    let s = -c - b2 * &ai * b1t;
    let si = s.try_inverse().ok_or_else(|| Error::Singular("S".into()))?;
    let (n, m) = (a.nrows(), c.nrows());
    let mut out = DMatrix::zeros(n + m, n + m);
    let aib = &ai * b1t;
    let bai = b2 * &ai;
    out.view_mut((0, 0), (n, n)).copy_from(&(&ai + &aib * &si * &bai));
    out.view_mut((0, n), (n, m)).copy_from(&(-&aib * &si));
    out.view_mut((n, 0), (m, n)).copy_from(&(-&si * &bai));
    out.view_mut((n, n), (m, m)).copy_from(&si);
    Ok(out)
}
