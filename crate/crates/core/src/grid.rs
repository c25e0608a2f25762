//! Staggered 2D grid description and typed field containers.
//!
//! Every space stores `nx * ny` values with row-major (i fastest) indexing.
//! Index `(i, j)` of each space refers to the location sharing that index
//! with cell center `(i, j)`:
//!
//! | space | position                         |
//! |-------|----------------------------------|
//! | C     | `(x_i, y_j)`                     |
//! | Fx    | `(x_i + dx/2, y_j)`              |
//! | Fy    | `(x_i, y_j + dy/2)`              |
//! | N     | `(x_i + dx/2, y_j + dy/2)`       |
//!
//! Difference and averaging stencils wrap around the window edges, so the
//! discrete operators act on a doubly periodic lattice. Problems posed on a
//! free or Dirichlet domain keep their sources away from the edges and pick
//! a Poisson solver with the matching boundary treatment.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Coordinates of cell center `(0, 0)`.
    pub origin: [f64; 2],
}

/// Location tag of a scalar grid space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    C,
    Fx,
    Fy,
    N,
}

impl Space {
    /// Half-cell offsets `(sx, sy)` in units of one half spacing.
    pub fn stagger(self) -> (bool, bool) {
        match self {
            Space::C => (false, false),
            Space::Fx => (true, false),
            Space::Fy => (false, true),
            Space::N => (true, true),
        }
    }

    pub fn from_stagger(sx: bool, sy: bool) -> Space {
        match (sx, sy) {
            (false, false) => Space::C,
            (true, false) => Space::Fx,
            (false, true) => Space::Fy,
            (true, true) => Space::N,
        }
    }

    /// Space reached by moving half a cell along x.
    pub fn flip_x(self) -> Space {
        let (sx, sy) = self.stagger();
        Space::from_stagger(!sx, sy)
    }

    pub fn flip_y(self) -> Space {
        let (sx, sy) = self.stagger();
        Space::from_stagger(sx, !sy)
    }
}

/// Build and validate a grid.
pub fn make_grid(nx: usize, ny: usize, dx: f64, dy: f64, origin: [f64; 2]) -> Result<GridSpec> {
    GridSpec::new(nx, ny, dx, dy, origin)
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 cells per direction, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacings must be positive, got {dx}, {dy}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(GridSpec { nx, ny, dx, dy, origin })
    }

    /// Square grid of `n x n` cells whose cell faces span `[-half, half]^2`.
    pub fn centered_square(n: usize, half: f64) -> Result<Self> {
        let h = 2.0 * half / n as f64;
        Self::new(n, n, h, h, [-half + 0.5 * h, -half + 0.5 * h])
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// x-coordinate of index `i` in the given space.
    #[inline]
    pub fn x_of(&self, space: Space, i: isize) -> f64 {
        let off = if space.stagger().0 { 0.5 } else { 0.0 };
        self.origin[0] + (i as f64 + off) * self.dx
    }

    #[inline]
    pub fn y_of(&self, space: Space, j: isize) -> f64 {
        let off = if space.stagger().1 { 0.5 } else { 0.0 };
        self.origin[1] + (j as f64 + off) * self.dy
    }

    /// Physical coordinates of every point of `space`, row-major.
    pub fn coords(&self, space: Space) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push([self.x_of(space, i as isize), self.y_of(space, j as isize)]);
            }
        }
        out
    }

    pub fn x_c(&self) -> Vec<[f64; 2]> {
        self.coords(Space::C)
    }
    pub fn x_fx(&self) -> Vec<[f64; 2]> {
        self.coords(Space::Fx)
    }
    pub fn x_fy(&self) -> Vec<[f64; 2]> {
        self.coords(Space::Fy)
    }
    pub fn x_n(&self) -> Vec<[f64; 2]> {
        self.coords(Space::N)
    }

    /// Extent covered by the cell faces: `([xmin, xmax], [ymin, ymax])`.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        let x0 = self.origin[0] - 0.5 * self.dx;
        let y0 = self.origin[1] - 0.5 * self.dy;
        (
            [x0, x0 + self.nx as f64 * self.dx],
            [y0, y0 + self.ny as f64 * self.dy],
        )
    }

    /// Sample a function at every point of `space`.
    pub fn sample(&self, space: Space, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            let y = self.y_of(space, j as isize);
            for i in 0..self.nx {
                out.push(f(self.x_of(space, i as isize), y));
            }
        }
        out
    }

    pub fn check(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::SpaceMismatch("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Scalar data on cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

/// Vector data on cell faces: `x` on x-faces, `y` on y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: GridSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Scalar data on cell corners (the z-edge space in 2D).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

/// Second-order tensor: `t11`, `t22` on cell centers, `t12`, `t21` on nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: GridSpec,
    pub t11: Vec<f64>,
    pub t12: Vec<f64>,
    pub t21: Vec<f64>,
    pub t22: Vec<f64>,
}

/// Elementwise operation selector for [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
    Scale,
}

/// Right operand of [`elementwise`].
pub enum Operand<'a, F> {
    Field(&'a F),
    Scalar(f64),
}

/// Common arithmetic over the component arrays of a field type.
pub trait Field: Clone + Sized {
    fn grid(&self) -> &GridSpec;
    fn parts(&self) -> Vec<&[f64]>;
    fn parts_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros(grid: GridSpec) -> Self;

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid().check(other.grid())?;
        let mut out = self.clone();
        for (o, b) in out.parts_mut().into_iter().zip(other.parts()) {
            for (a, &bv) in o.iter_mut().zip(b) {
                *a = f(*a, bv);
            }
        }
        Ok(out)
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for o in out.parts_mut() {
            for a in o.iter_mut() {
                *a = f(*a);
            }
        }
        out
    }

    fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }
    fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }
    /// Elementwise (Hadamard) product.
    fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }
    fn scale(&self, c: f64) -> Self {
        self.map(|a| a * c)
    }

    fn max_abs(&self) -> f64 {
        self.parts()
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    fn is_finite(&self) -> bool {
        self.parts().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Components concatenated into one vector.
    fn flatten(&self) -> Vec<f64> {
        self.parts().concat()
    }

    fn from_flat(grid: GridSpec, v: &[f64]) -> Self {
        let mut out = Self::zeros(grid);
        let mut k = 0;
        for p in out.parts_mut() {
            let n = p.len();
            p.copy_from_slice(&v[k..k + n]);
            k += n;
        }
        out
    }

    fn dof(&self) -> usize {
        self.parts().iter().map(|p| p.len()).sum()
    }
}

/// Apply `op` to `a` and a field or scalar operand.
pub fn elementwise<F: Field>(op: ElemOp, a: &F, b: Operand<'_, F>) -> Result<F> {
    match (op, b) {
        (ElemOp::Add, Operand::Field(b)) => a.add(b),
        (ElemOp::Sub, Operand::Field(b)) => a.sub(b),
        (ElemOp::Mul, Operand::Field(b)) => a.mul(b),
        (ElemOp::Add, Operand::Scalar(c)) => Ok(a.map(|v| v + c)),
        (ElemOp::Sub, Operand::Scalar(c)) => Ok(a.map(|v| v - c)),
        (ElemOp::Mul | ElemOp::Scale, Operand::Scalar(c)) => Ok(a.scale(c)),
        (ElemOp::Scale, Operand::Field(_)) => {
            Err(Error::SpaceMismatch("scale takes a scalar operand".into()))
        }
    }
}

impl Field for CellField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn parts(&self) -> Vec<&[f64]> {
        vec![&self.data]
    }
    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.data]
    }
    fn zeros(grid: GridSpec) -> Self {
        CellField { grid, data: vec![0.0; grid.len()] }
    }
}

impl Field for NodeField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn parts(&self) -> Vec<&[f64]> {
        vec![&self.data]
    }
    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.data]
    }
    fn zeros(grid: GridSpec) -> Self {
        NodeField { grid, data: vec![0.0; grid.len()] }
    }
}

impl Field for FaceField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn parts(&self) -> Vec<&[f64]> {
        vec![&self.x, &self.y]
    }
    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.x, &mut self.y]
    }
    fn zeros(grid: GridSpec) -> Self {
        FaceField { grid, x: vec![0.0; grid.len()], y: vec![0.0; grid.len()] }
    }
}

impl Field for TensorField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn parts(&self) -> Vec<&[f64]> {
        vec![&self.t11, &self.t12, &self.t21, &self.t22]
    }
    fn parts_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.t11, &mut self.t12, &mut self.t21, &mut self.t22]
    }
    fn zeros(grid: GridSpec) -> Self {
        let z = vec![0.0; grid.len()];
        TensorField { grid, t11: z.clone(), t12: z.clone(), t21: z.clone(), t22: z }
    }
}

impl CellField {
    pub fn new(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::SpaceMismatch(format!(
                "cell field needs {} values, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(CellField { grid, data })
    }
    pub fn constant(grid: GridSpec, c: f64) -> Self {
        CellField { grid, data: vec![c; grid.len()] }
    }
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        CellField { data: grid.sample(Space::C, f), grid }
    }
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

impl NodeField {
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        NodeField { data: grid.sample(Space::N, f), grid }
    }
}

impl FaceField {
    pub fn new(grid: GridSpec, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.len() || y.len() != grid.len() {
            return Err(Error::SpaceMismatch("face component length mismatch".into()));
        }
        Ok(FaceField { grid, x, y })
    }
    pub fn constant(grid: GridSpec, cx: f64, cy: f64) -> Self {
        FaceField { grid, x: vec![cx; grid.len()], y: vec![cy; grid.len()] }
    }
    /// Sample a vector function: x-component at x-faces, y-component at y-faces.
    pub fn from_fn(grid: GridSpec, fx: impl Fn(f64, f64) -> f64, fy: impl Fn(f64, f64) -> f64) -> Self {
        FaceField { x: grid.sample(Space::Fx, fx), y: grid.sample(Space::Fy, fy), grid }
    }
}

impl TensorField {
    /// Swap the off-diagonal components.
    pub fn transpose(&self) -> Self {
        TensorField {
            grid: self.grid,
            t11: self.t11.clone(),
            t12: self.t21.clone(),
            t21: self.t12.clone(),
            t22: self.t22.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate() {
        assert!(make_grid(2, 2, 0.1, 0.1, [0.0, 0.0]).is_err());
        assert!(make_grid(8, 8, 0.0, 0.1, [0.0, 0.0]).is_err());
        assert!(make_grid(8, 8, 0.1, -1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn staggering_offsets() {
        let g = make_grid(24, 24, 0.167, 0.167, [-2.0, -2.0]).unwrap();
        for (i, j) in [(0, 0), (3, 7), (23, 23)] {
            let (i, j) = (i as isize, j as isize);
            let xc = g.x_of(Space::C, i);
            let yc = g.y_of(Space::C, j);
            assert!((g.x_of(Space::Fx, i) - xc - 0.0835).abs() < 1e-14);
            assert_eq!(g.y_of(Space::Fx, j), yc);
            assert!((g.y_of(Space::Fy, j) - yc - 0.0835).abs() < 1e-14);
            assert!((g.x_of(Space::N, i) - xc - 0.0835).abs() < 1e-14);
            assert!((g.y_of(Space::N, j) - yc - 0.0835).abs() < 1e-14);
        }
        assert!((g.x_of(Space::C, 5) - (-2.0 + 5.0 * 0.167)).abs() < 1e-14);
    }

    #[test]
    fn couette_extent() {
        let g = GridSpec::centered_square(32, 2.67).unwrap();
        let (ex, ey) = g.extent();
        assert!((ex[0] + 2.67).abs() < 1e-12 && (ex[1] - 2.67).abs() < 1e-12);
        assert!((ey[0] + 2.67).abs() < 1e-12 && (ey[1] - 2.67).abs() < 1e-12);
    }

    #[test]
    fn arithmetic() {
        let g = make_grid(6, 5, 0.1, 0.1, [0.0, 0.0]).unwrap();
        let f = CellField::from_fn(g, |x, y| x * x - y);
        let ones = CellField::constant(g, 1.0);
        assert_eq!(f.mul(&ones).unwrap(), f);
        let z = elementwise(ElemOp::Add, &f.scale(2.0), Operand::Field(&f.scale(-2.0))).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let hp = CellField::from_fn(g, |x, _| if x > 0.25 { 1.0 } else { 0.0 });
        let hm = hp.map(|v| 1.0 - v);
        assert_eq!(hp.mul(&hm).unwrap().max_abs(), 0.0);
        let other = make_grid(6, 6, 0.1, 0.1, [0.0, 0.0]).unwrap();
        assert!(f.add(&CellField::zeros(other)).is_err());
    }
}
