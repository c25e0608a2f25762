//! Immersed boundary markers and the regularization / interpolation family.
//!
//! Regularization spreads marker data onto a grid space through the sampled
//! delta (a Riemann sum weighted by the marker arc length). Interpolation is
//! its adjoint, weighted by the cell area. The `1n` variants multiply the delta
//! by the signed normal distance `n_l . (x - X_l)` evaluated at the target
//! location. Tensor variants use face-sampled deltas averaged onto the tensor
//! locations: component `(a, b)` uses `I_a d_{F_b}`.

use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ddf::{sample_ddf_for, DdfSample, Kernel};
use crate::grid::{CellField, FaceField, Field, GridSpec, Space, TensorField};
use crate::{Error, Result};

/// Scalar value per marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceScalar(pub Vec<f64>);

/// Two-component vector per marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceVector {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// 2x2 tensor per marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTensor {
    pub t11: Vec<f64>,
    pub t12: Vec<f64>,
    pub t21: Vec<f64>,
    pub t22: Vec<f64>,
}

/// Exterior-minus-interior value of a quantity at each marker.
#[derive(Debug, Clone, PartialEq)]
pub enum Jump {
    Scalar(SurfaceScalar),
    Vector(SurfaceVector),
}

impl SurfaceScalar {
    pub fn zeros(n: usize) -> Self {
        SurfaceScalar(vec![0.0; n])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl SurfaceVector {
    pub fn zeros(n: usize) -> Self {
        SurfaceVector { x: vec![0.0; n], y: vec![0.0; n] }
    }
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
    pub fn get(&self, l: usize) -> [f64; 2] {
        [self.x[l], self.y[l]]
    }
    /// Componentwise product with a per-marker scalar.
    pub fn scaled_by(&self, s: &[f64]) -> Self {
        SurfaceVector {
            x: self.x.iter().zip(s).map(|(a, b)| a * b).collect(),
            y: self.y.iter().zip(s).map(|(a, b)| a * b).collect(),
        }
    }
    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, o: &SurfaceVector) -> Self {
        SurfaceVector {
            x: self.x.iter().zip(&o.x).map(|(a, b)| a * b).collect(),
            y: self.y.iter().zip(&o.y).map(|(a, b)| a * b).collect(),
        }
    }
    pub fn flatten(&self) -> Vec<f64> {
        [self.x.as_slice(), self.y.as_slice()].concat()
    }
    pub fn from_flat(v: &[f64]) -> Self {
        let n = v.len() / 2;
        SurfaceVector { x: v[..n].to_vec(), y: v[n..2 * n].to_vec() }
    }
    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.y).fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl SurfaceTensor {
    pub fn zeros(n: usize) -> Self {
        let z = vec![0.0; n];
        SurfaceTensor { t11: z.clone(), t12: z.clone(), t21: z.clone(), t22: z }
    }
    /// Swap the off-diagonal components.
    pub fn transpose(&self) -> Self {
        SurfaceTensor {
            t11: self.t11.clone(),
            t12: self.t21.clone(),
            t21: self.t12.clone(),
            t22: self.t22.clone(),
        }
    }
}

/// Per-marker outer product `w_l u_l^T`.
pub fn surface_outer(w: &SurfaceVector, u: &SurfaceVector) -> Result<SurfaceTensor> {
    if w.len() != u.len() {
        return Err(Error::SpaceMismatch("surface vectors differ in length".into()));
    }
    let m = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    Ok(SurfaceTensor { t11: m(&w.x, &u.x), t12: m(&w.x, &u.y), t21: m(&w.y, &u.x), t22: m(&w.y, &u.y) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Outward,
    Inward,
}

/// Immersed surface discretized by markers.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub x: Vec<[f64; 2]>,
    pub n: Vec<[f64; 2]>,
    pub t: Vec<[f64; 2]>,
    pub ds: Vec<f64>,
    pub xdot: Vec<[f64; 2]>,
    /// Marker ranges of the closed curves making up the body.
    pub curves: Vec<Range<usize>>,
}

impl Body {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn empty() -> Self {
        Body { x: vec![], n: vec![], t: vec![], ds: vec![], xdot: vec![], curves: vec![] }
    }

    pub fn normals(&self) -> SurfaceVector {
        SurfaceVector { x: self.n.iter().map(|v| v[0]).collect(), y: self.n.iter().map(|v| v[1]).collect() }
    }

    pub fn positions(&self) -> SurfaceVector {
        SurfaceVector { x: self.x.iter().map(|v| v[0]).collect(), y: self.x.iter().map(|v| v[1]).collect() }
    }

    /// Append the markers of another body as additional curves.
    pub fn concat(&self, other: &Body) -> Body {
        let off = self.len();
        let mut b = self.clone();
        b.x.extend(&other.x);
        b.n.extend(&other.n);
        b.t.extend(&other.t);
        b.ds.extend(&other.ds);
        b.xdot.extend(&other.xdot);
        b.curves.extend(other.curves.iter().map(|r| r.start + off..r.end + off));
        b
    }

    /// Check unit normals and tangents, orthogonality and positive lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.n.len() != n || self.t.len() != n || self.ds.len() != n || self.xdot.len() != n {
            return Err(Error::InvalidBody("per-marker arrays differ in length".into()));
        }
        for l in 0..n {
            let (nv, tv) = (self.n[l], self.t[l]);
            let nn = (nv[0] * nv[0] + nv[1] * nv[1]).sqrt();
            let tt = (tv[0] * tv[0] + tv[1] * tv[1]).sqrt();
            if (nn - 1.0).abs() > 1e-10 || (tt - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidBody(format!("marker {l}: normal or tangent not unit")));
            }
            if (nv[0] * tv[0] + nv[1] * tv[1]).abs() > 1e-10 {
                return Err(Error::InvalidBody(format!("marker {l}: tangent not orthogonal to normal")));
            }
            if self.ds[l] <= 0.0 || !self.ds[l].is_finite() {
                return Err(Error::InvalidBody(format!("marker {l}: nonpositive arc length")));
            }
        }
        Ok(())
    }

    /// Normal marker speed `n . Xdot`.
    pub fn normal_speed(&self) -> SurfaceScalar {
        SurfaceScalar(
            self.n.iter().zip(&self.xdot).map(|(n, v)| n[0] * v[0] + n[1] * v[1]).collect(),
        )
    }

    /// Write one marker per line: `X Y nx ny tx ty dS Xdot_x Xdot_y curve`.
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "# X Y nx ny tx ty dS Xdot_x Xdot_y curve")?;
        for (c, r) in self.curves.iter().enumerate() {
            for l in r.clone() {
                let (x, n, t, v) = (self.x[l], self.n[l], self.t[l], self.xdot[l]);
                writeln!(
                    w,
                    "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {}",
                    x[0], x[1], n[0], n[1], t[0], t[1], self.ds[l], v[0], v[1], c
                )?;
            }
        }
        Ok(())
    }

    /// Read the format of [`Body::write_text`]; the curve column is optional
    /// (a single curve is assumed when absent).
    pub fn read_text(r: impl BufRead) -> Result<Body> {
        let mut b = Body::empty();
        let mut ids: Vec<usize> = vec![];
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            let s = line.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = s.split_whitespace().collect();
            if cols.len() != 9 && cols.len() != 10 {
                return Err(Error::Format(format!("line {}: expected 9 or 10 columns", ln + 1)));
            }
            let v: Vec<f64> = cols[..9]
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", ln + 1)))?;
            b.x.push([v[0], v[1]]);
            b.n.push([v[2], v[3]]);
            b.t.push([v[4], v[5]]);
            b.ds.push(v[6]);
            b.xdot.push([v[7], v[8]]);
            let id = match cols.get(9) {
                Some(c) => c.parse::<usize>().map_err(|e| Error::Format(format!("line {}: {e}", ln + 1)))?,
                None => 0,
            };
            ids.push(id);
        }
        let mut start = 0;
        for l in 1..=ids.len() {
            if l == ids.len() || ids[l] != ids[start] {
                b.curves.push(start..l);
                start = l;
            }
        }
        b.validate()?;
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut f)
    }

    pub fn load(path: &Path) -> Result<Body> {
        Body::read_text(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Equispaced markers on a circle. Marker 0 sits at angle 0; markers advance
/// counter-clockwise. Tangents are the normals rotated by +90 degrees.
pub fn circle_body(center: [f64; 2], r: f64, n: usize, orientation: Orientation) -> Result<Body> {
    if n < 8 {
        return Err(Error::InvalidBody(format!("need at least 8 markers, got {n}")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidBody("radius must be positive".into()));
    }
    let sign = match orientation {
        Orientation::Outward => 1.0,
        Orientation::Inward => -1.0,
    };
    let ds = 2.0 * std::f64::consts::PI * r / n as f64;
    let mut b = Body::empty();
    for l in 0..n {
        let th = 2.0 * std::f64::consts::PI * l as f64 / n as f64;
        let (c, s) = (th.cos(), th.sin());
        b.x.push([center[0] + r * c, center[1] + r * s]);
        let nv = [sign * c, sign * s];
        b.n.push(nv);
        b.t.push([-nv[1], nv[0]]);
        b.ds.push(ds);
        b.xdot.push([0.0, 0.0]);
    }
    b.curves.push(0..n);
    Ok(b)
}

/// Marker count giving a spacing ratio `ds/dx` closest to `target`.
pub fn markers_for_ratio(r: f64, target: f64, dx: f64) -> usize {
    (2.0 * std::f64::consts::PI * r / (target * dx)).round().max(1.0) as usize
}

/// Regularization kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegKind {
    C,
    F,
    F1n,
    Ift,
    Ift1n,
}

/// Interpolation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpKind {
    C,
    F,
    C1n,
    F1n,
    C1nZeroMean,
}

/// Body sampled on a grid: the delta stencils of every marker on every space.
#[derive(Debug, Clone)]
pub struct Markers {
    pub grid: GridSpec,
    pub kernel: Kernel,
    pub body: Body,
    pub c: Vec<DdfSample>,
    /// Face samples, x then y.
    pub f: [Vec<DdfSample>; 2],
    /// Tensor samples: `d[a][b] = I_a d_{F_b}`.
    pub d: [[Vec<DdfSample>; 2]; 2],
}

type Weight = Option<([f64; 2], [f64; 2])>;

impl Markers {
    /// Sample every marker. Each stencil must stay one cell clear of the grid
    /// edge so that the averaged tensor stencils never wrap.
    pub fn new(grid: GridSpec, kernel: Kernel, body: Body) -> Result<Self> {
        body.validate()?;
        let mut c = Vec::with_capacity(body.len());
        let mut fx = Vec::with_capacity(body.len());
        let mut fy = Vec::with_capacity(body.len());
        let mut d = [[vec![], vec![]], [vec![], vec![]]];
        for (l, &p) in body.x.iter().enumerate() {
            c.push(sample_ddf_for(&kernel, &grid, Space::C, p, 1, l)?);
            let sx = sample_ddf_for(&kernel, &grid, Space::Fx, p, 1, l)?;
            let sy = sample_ddf_for(&kernel, &grid, Space::Fy, p, 1, l)?;
            d[0][0].push(DdfSample { space: Space::C, wx: sx.wx.averaged(true), wy: sx.wy.clone() });
            d[0][1].push(DdfSample { space: Space::N, wx: sy.wx.averaged(false), wy: sy.wy.clone() });
            d[1][0].push(DdfSample { space: Space::N, wx: sx.wx.clone(), wy: sx.wy.averaged(false) });
            d[1][1].push(DdfSample { space: Space::C, wx: sy.wx.clone(), wy: sy.wy.averaged(true) });
            fx.push(sx);
            fy.push(sy);
        }
        Ok(Markers { grid, kernel, body, c, f: [fx, fy], d })
    }

    pub fn len(&self) -> usize {
        self.body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }

    fn weight(&self, l: usize, on: bool) -> Weight {
        on.then(|| (self.body.n[l], self.body.x[l]))
    }

    fn spread(&self, s: &DdfSample, val: f64, w: Weight, out: &mut [f64]) {
        let g = &self.grid;
        for (b, &wy) in s.wy.w.iter().enumerate() {
            let j = (s.wy.i0 + b as isize) as usize;
            let yw = w.map(|(n, x)| n[1] * (g.y_of(s.space, j as isize) - x[1]));
            for (a, &wx) in s.wx.w.iter().enumerate() {
                let i = (s.wx.i0 + a as isize) as usize;
                let mut v = wx * wy * val;
                if let (Some((n, x)), Some(yw)) = (w, yw) {
                    v *= n[0] * (g.x_of(s.space, i as isize) - x[0]) + yw;
                }
                out[g.idx(i, j)] += v;
            }
        }
    }

    fn gather(&self, s: &DdfSample, field: &[f64], w: Weight) -> f64 {
        let g = &self.grid;
        let mut acc = 0.0;
        for (b, &wy) in s.wy.w.iter().enumerate() {
            let j = (s.wy.i0 + b as isize) as usize;
            let yw = w.map(|(n, x)| n[1] * (g.y_of(s.space, j as isize) - x[1]));
            for (a, &wx) in s.wx.w.iter().enumerate() {
                let i = (s.wx.i0 + a as isize) as usize;
                let mut v = wx * wy * field[g.idx(i, j)];
                if let (Some((n, x)), Some(yw)) = (w, yw) {
                    v *= n[0] * (g.x_of(s.space, i as isize) - x[0]) + yw;
                }
                acc += v;
            }
        }
        acc * g.cell_area()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::SpaceMismatch(format!(
                "surface data has {n} entries, body has {}",
                self.len()
            )));
        }
        Ok(())
    }

    /// `R_C`.
    pub fn reg_c(&self, s: &SurfaceScalar) -> CellField {
        self.reg_c_w(s, false)
    }

    /// `R_C` with normal-distance weights.
    pub fn reg_c1n(&self, s: &SurfaceScalar) -> CellField {
        self.reg_c_w(s, true)
    }

    fn reg_c_w(&self, s: &SurfaceScalar, w: bool) -> CellField {
        let mut out = CellField::zeros(self.grid);
        for l in 0..self.len() {
            self.spread(&self.c[l], s.0[l] * self.body.ds[l], self.weight(l, w), &mut out.data);
        }
        out
    }

    fn reg_f_w(&self, v: &SurfaceVector, w: bool) -> FaceField {
        let mut out = FaceField::zeros(self.grid);
        for l in 0..self.len() {
            let ds = self.body.ds[l];
            self.spread(&self.f[0][l], v.x[l] * ds, self.weight(l, w), &mut out.x);
            self.spread(&self.f[1][l], v.y[l] * ds, self.weight(l, w), &mut out.y);
        }
        out
    }

    /// `R_F`.
    pub fn reg_f(&self, v: &SurfaceVector) -> FaceField {
        self.reg_f_w(v, false)
    }

    /// `R_{F,1n}`.
    pub fn reg_f1n(&self, v: &SurfaceVector) -> FaceField {
        self.reg_f_w(v, true)
    }

    fn reg_ift_w(&self, t: &SurfaceTensor, w: bool) -> TensorField {
        let mut out = TensorField::zeros(self.grid);
        for l in 0..self.len() {
            let ds = self.body.ds[l];
            let wt = self.weight(l, w);
            self.spread(&self.d[0][0][l], t.t11[l] * ds, wt, &mut out.t11);
            self.spread(&self.d[0][1][l], t.t12[l] * ds, wt, &mut out.t12);
            self.spread(&self.d[1][0][l], t.t21[l] * ds, wt, &mut out.t21);
            self.spread(&self.d[1][1][l], t.t22[l] * ds, wt, &mut out.t22);
        }
        out
    }

    /// `R_{(IF)^T}`: tensor component `(a, b)` spread with `I_a d_{F_b}`.
    pub fn reg_ift(&self, t: &SurfaceTensor) -> TensorField {
        self.reg_ift_w(t, false)
    }

    /// `R_{(IF)^T,1n}`: as [`Markers::reg_ift`] with distance weights at the
    /// tensor locations (centers for diagonal, nodes for off-diagonal).
    pub fn reg_ift1n(&self, t: &SurfaceTensor) -> TensorField {
        self.reg_ift_w(t, true)
    }

    fn interp_c_w(&self, f: &CellField, w: bool) -> SurfaceScalar {
        SurfaceScalar((0..self.len()).map(|l| self.gather(&self.c[l], &f.data, self.weight(l, w))).collect())
    }

    /// `E_C`.
    pub fn interp_c(&self, f: &CellField) -> SurfaceScalar {
        self.interp_c_w(f, false)
    }

    /// `E_{C,1n}`.
    pub fn interp_c1n(&self, f: &CellField) -> SurfaceScalar {
        self.interp_c_w(f, true)
    }

    /// `E_{C,1n}` with the marker mean removed.
    pub fn interp_c1n_zero_mean(&self, f: &CellField) -> SurfaceScalar {
        let mut s = self.interp_c1n(f);
        let n = s.len().max(1) as f64;
        let mean = s.0.iter().sum::<f64>() / n;
        s.0.iter_mut().for_each(|v| *v -= mean);
        s
    }

    fn interp_f_w(&self, f: &FaceField, w: bool) -> SurfaceVector {
        let n = self.len();
        SurfaceVector {
            x: (0..n).map(|l| self.gather(&self.f[0][l], &f.x, self.weight(l, w))).collect(),
            y: (0..n).map(|l| self.gather(&self.f[1][l], &f.y, self.weight(l, w))).collect(),
        }
    }

    /// `E_F`.
    pub fn interp_f(&self, f: &FaceField) -> SurfaceVector {
        self.interp_f_w(f, false)
    }

    /// `E_{F,1n}`.
    pub fn interp_f1n(&self, f: &FaceField) -> SurfaceVector {
        self.interp_f_w(f, true)
    }

    /// Dispatch on [`RegKind`]; data must be a surface scalar for `C`, a
    /// surface vector for `F`/`F1n` and a surface tensor for the tensor kinds.
    pub fn regularize(&self, kind: RegKind, data: &SurfaceData) -> Result<GridData> {
        match (kind, data) {
            (RegKind::C, SurfaceData::Scalar(s)) => {
                self.check_len(s.len())?;
                Ok(GridData::Cell(self.reg_c(s)))
            }
            (RegKind::F, SurfaceData::Vector(v)) => {
                self.check_len(v.len())?;
                Ok(GridData::Face(self.reg_f(v)))
            }
            (RegKind::F1n, SurfaceData::Vector(v)) => {
                self.check_len(v.len())?;
                Ok(GridData::Face(self.reg_f1n(v)))
            }
            (RegKind::Ift, SurfaceData::Tensor(t)) => {
                self.check_len(t.t11.len())?;
                Ok(GridData::Tensor(self.reg_ift(t)))
            }
            (RegKind::Ift1n, SurfaceData::Tensor(t)) => {
                self.check_len(t.t11.len())?;
                Ok(GridData::Tensor(self.reg_ift1n(t)))
            }
            _ => Err(Error::SpaceMismatch(format!("{kind:?} cannot regularize this data"))),
        }
    }

    /// Dispatch on [`InterpKind`].
    pub fn interpolate(&self, kind: InterpKind, field: &GridData) -> Result<SurfaceData> {
        match (kind, field) {
            (InterpKind::C, GridData::Cell(f)) => Ok(SurfaceData::Scalar(self.interp_c(f))),
            (InterpKind::C1n, GridData::Cell(f)) => Ok(SurfaceData::Scalar(self.interp_c1n(f))),
            (InterpKind::C1nZeroMean, GridData::Cell(f)) => {
                Ok(SurfaceData::Scalar(self.interp_c1n_zero_mean(f)))
            }
            (InterpKind::F, GridData::Face(f)) => Ok(SurfaceData::Vector(self.interp_f(f))),
            (InterpKind::F1n, GridData::Face(f)) => Ok(SurfaceData::Vector(self.interp_f1n(f))),
            _ => Err(Error::SpaceMismatch(format!("{kind:?} cannot interpolate this field"))),
        }
    }

    /// Largest mismatch between `dxdy <R a, f>` and `<a, E f>_dS` over random
    /// inputs, scaled by the magnitude of the inner products.
    pub fn adjoint_check(&self, pair: (RegKind, InterpKind), trials: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.len();
        let g = self.grid;
        let mut worst = 0.0_f64;
        for _ in 0..trials {
            let (lhs, rhs) = match pair {
                (RegKind::C, InterpKind::C) | (RegKind::C, InterpKind::C1n) => {
                    let a = SurfaceScalar((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
                    let f = CellField { grid: g, data: (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
                    let w = pair.1 == InterpKind::C1n;
                    let r = self.reg_c_w(&a, w);
                    let e = self.interp_c_w(&f, w);
                    (
                        g.cell_area() * dot(&r.data, &f.data),
                        (0..n).map(|l| a.0[l] * e.0[l] * self.body.ds[l]).sum::<f64>(),
                    )
                }
                (RegKind::F, InterpKind::F) | (RegKind::F1n, InterpKind::F1n) => {
                    let a = SurfaceVector {
                        x: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        y: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    };
                    let f = FaceField {
                        grid: g,
                        x: (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        y: (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    };
                    let w = pair.0 == RegKind::F1n;
                    let r = self.reg_f_w(&a, w);
                    let e = self.interp_f_w(&f, w);
                    (
                        g.cell_area() * (dot(&r.x, &f.x) + dot(&r.y, &f.y)),
                        (0..n).map(|l| (a.x[l] * e.x[l] + a.y[l] * e.y[l]) * self.body.ds[l]).sum::<f64>(),
                    )
                }
                _ => return Err(Error::InvalidArgument(format!("{pair:?} is not an adjoint pair"))),
            };
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        Ok(worst)
    }

    /// Grid cells where any marker's cell-centered delta is nonzero.
    pub fn cell_support(&self) -> Vec<bool> {
        let mut m = vec![false; self.grid.len()];
        for s in &self.c {
            for (i, j, d) in s.entries() {
                if d != 0.0 {
                    m[self.grid.idx(i, j)] = true;
                }
            }
        }
        m
    }
}

/// Surface data of any rank.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceData {
    Scalar(SurfaceScalar),
    Vector(SurfaceVector),
    Tensor(SurfaceTensor),
}

/// Grid data produced by regularization.
#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Cell(CellField),
    Face(FaceField),
    Tensor(TensorField),
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn setup(n: usize) -> Markers {
        let g = GridSpec::centered_square(32, 2.0).unwrap();
        let b = circle_body([0.03, -0.02], 1.0, n, Orientation::Outward).unwrap();
        Markers::new(g, Kernel::default(), b).unwrap()
    }

    #[test]
    fn circle_geometry() {
        assert!(circle_body([0.0, 0.0], 1.0, 4, Orientation::Outward).is_err());
        let b = circle_body([0.0, 0.0], 1.0, 8, Orientation::Outward).unwrap();
        assert_eq!(b.x[0], [1.0, 0.0]);
        assert_eq!(b.n[0], [1.0, 0.0]);
        assert_abs_diff_eq!(b.ds[0], std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        let inw = circle_body([0.0, 0.0], 1.0, 8, Orientation::Inward).unwrap();
        assert_eq!(inw.n[0], [-1.0, 0.0]);
        let n = markers_for_ratio(1.0, 0.7, 0.1);
        let ratio = 2.0 * std::f64::consts::PI / n as f64 / 0.1;
        assert!((ratio - 0.7).abs() < 0.7 / n as f64 * 1.01);
    }

    #[test]
    fn zero_data_and_mass() {
        let m = setup(40);
        assert_eq!(m.reg_c(&SurfaceScalar::zeros(40)).max_abs(), 0.0);
        let mut e = SurfaceScalar::zeros(40);
        e.0[3] = 1.0;
        let r = m.reg_c(&e);
        assert_abs_diff_eq!(r.sum() * m.grid.cell_area(), m.body.ds[3], epsilon = 1e-12);
    }

    #[test]
    fn interpolation_exact_for_linear() {
        let m = setup(40);
        let c = m.interp_c(&CellField::constant(m.grid, 2.0));
        assert!(c.0.iter().all(|&v| (v - 2.0).abs() < 1e-12));
        let z = m.interp_c1n(&CellField::constant(m.grid, 2.0));
        assert!(z.max_abs() < 1e-12);
        let lin = m.interp_c(&CellField::from_fn(m.grid, |x, y| 3.0 * x - y));
        for l in 0..40 {
            let p = m.body.x[l];
            assert_abs_diff_eq!(lin.0[l], 3.0 * p[0] - p[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn adjoint_pairs() {
        let m = setup(30);
        for pair in [
            (RegKind::C, InterpKind::C),
            (RegKind::C, InterpKind::C1n),
            (RegKind::F, InterpKind::F),
            (RegKind::F1n, InterpKind::F1n),
        ] {
            assert!(m.adjoint_check(pair, 5, 7).unwrap() < 1e-12);
        }
    }

    #[test]
    fn outer_product() {
        let b = circle_body([0.0, 0.0], 1.0, 12, Orientation::Outward).unwrap();
        let n = b.normals();
        let o = surface_outer(&n, &n).unwrap();
        for l in 0..12 {
            assert_abs_diff_eq!(o.t11[l] + o.t22[l], 1.0, epsilon = 1e-14);
        }
        let nn = n.hadamard(&n);
        let u = SurfaceVector { x: vec![2.0; 12], y: vec![-1.0; 12] };
        let o = surface_outer(&nn, &u).unwrap();
        for l in 0..12 {
            assert_eq!(o.t12[l], nn.x[l] * -1.0);
            assert_eq!(o.t21[l], nn.y[l] * 2.0);
        }
    }

    #[test]
    fn text_round_trip() {
        let a = circle_body([0.0, 0.0], 1.0, 16, Orientation::Inward).unwrap();
        let b = circle_body([0.0, 0.0], 2.0, 24, Orientation::Outward).unwrap();
        let body = a.concat(&b);
        let mut buf = vec![];
        body.write_text(&mut buf).unwrap();
        let back = Body::read_text(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, body);
    }

    #[test]
    fn clipped_marker_rejected() {
        let g = GridSpec::centered_square(16, 2.0).unwrap();
        let b = circle_body([0.0, 0.0], 1.8, 40, Orientation::Outward).unwrap();
        assert!(matches!(Markers::new(g, Kernel::default(), b), Err(Error::ClippedSupport { .. })));
    }
}
