//! Regularized delta kernels and their tensor-product samples on grid spaces.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::grid::{GridSpec, Space};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    C0,
    C1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// Three-point kernel of Roma, Peskin and Berger convolved with a unit box
    /// (Yang, Zhang, Li and Zhang 2009). Support radius 2.
    SmoothedThreePoint,
    /// Roma, Peskin and Berger three-point kernel. Support radius 1.5.
    ThreePoint,
    /// Peskin four-point kernel. Support radius 2.
    FourPoint,
}

/// One-dimensional regularized delta kernel `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    /// Half-width of the support in grid spacings.
    pub support_radius: f64,
    pub smoothness: Smoothness,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::new(KernelKind::SmoothedThreePoint)
    }
}

impl Kernel {
    pub fn new(kind: KernelKind) -> Self {
        let (support_radius, smoothness) = match kind {
            KernelKind::SmoothedThreePoint => (2.0, Smoothness::C1),
            KernelKind::ThreePoint => (1.5, Smoothness::C0),
            KernelKind::FourPoint => (2.0, Smoothness::C1),
        };
        Kernel { kind, support_radius, smoothness }
    }

    /// `phi(r)` with `r` in grid spacings.
    pub fn phi(&self, r: f64) -> f64 {
        let a = r.abs();
        if a >= self.support_radius {
            return 0.0;
        }
        match self.kind {
            KernelKind::SmoothedThreePoint => smoothed_three_point(a),
            KernelKind::ThreePoint => {
                if a <= 0.5 {
                    (1.0 + (1.0 - 3.0 * a * a).sqrt()) / 3.0
                } else {
                    let b = 1.0 - a;
                    (5.0 - 3.0 * a - (1.0 - 3.0 * b * b).max(0.0).sqrt()) / 6.0
                }
            }
            KernelKind::FourPoint => {
                if a <= 1.0 {
                    (3.0 - 2.0 * a + (1.0 + 4.0 * a - 4.0 * a * a).sqrt()) / 8.0
                } else {
                    (5.0 - 2.0 * a - (-7.0 + 12.0 * a - 4.0 * a * a).max(0.0).sqrt()) / 8.0
                }
            }
        }
    }
}

fn smoothed_three_point(a: f64) -> f64 {
    let s3 = 3.0_f64.sqrt();
    if a <= 1.0 {
        17.0 / 48.0 + s3 * PI / 108.0 + a / 4.0 - a * a / 4.0
            + (1.0 - 2.0 * a) / 16.0 * (-12.0 * a * a + 12.0 * a + 1.0).max(0.0).sqrt()
            - s3 / 12.0 * (s3 / 2.0 * (2.0 * a - 1.0)).asin()
    } else {
        55.0 / 48.0 - s3 * PI / 108.0 - 13.0 * a / 12.0
            + a * a / 4.0
            + (2.0 * a - 3.0) / 48.0 * (-12.0 * a * a + 36.0 * a - 23.0).max(0.0).sqrt()
            + s3 / 36.0 * (s3 / 2.0 * (2.0 * a - 3.0)).asin()
    }
}

/// `phi(r)`; zero outside the support.
pub fn eval_kernel(k: &Kernel, r: f64) -> f64 {
    k.phi(r)
}

/// `|sum_i (r + i)^m phi(r + i) - [m == 0]|`.
pub fn moment_residual(k: &Kernel, m: u32, r: f64) -> Result<f64> {
    if m > 2 {
        return Err(Error::InvalidArgument(format!("moment order {m} not supported")));
    }
    let reach = k.support_radius.ceil() as i64 + 1;
    let mut s = 0.0;
    for i in -reach..=reach {
        let x = r + i as f64;
        s += x.powi(m as i32) * k.phi(x);
    }
    Ok((s - if m == 0 { 1.0 } else { 0.0 }).abs())
}

/// Weights of a 1D delta sample: entry `k` belongs to index `i0 + k` and
/// already carries the `1/h` factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil1d {
    pub i0: isize,
    pub w: Vec<f64>,
}

impl Stencil1d {
    pub fn get(&self, i: isize) -> f64 {
        let k = i - self.i0;
        if k < 0 || k as usize >= self.w.len() {
            0.0
        } else {
            self.w[k as usize]
        }
    }

    pub fn end(&self) -> isize {
        self.i0 + self.w.len() as isize
    }

    /// Two-point average onto the staggered neighbour positions. The result
    /// sits on the opposite stagger: integer inputs average forward
    /// (`i`, `i + 1`), half inputs average backward (`i - 1`, `i`).
    pub fn averaged(&self, from_half: bool) -> Stencil1d {
        let n = self.w.len();
        let mut w = vec![0.0; n + 1];
        if from_half {
            // out(i) = (a(i) + a(i-1)) / 2, nonzero for i in i0..=i0+n
            for (k, o) in w.iter_mut().enumerate() {
                let i = self.i0 + k as isize;
                *o = 0.5 * (self.get(i) + self.get(i - 1));
            }
            Stencil1d { i0: self.i0, w }
        } else {
            // out(i) = (a(i+1) + a(i)) / 2, nonzero for i in i0-1..=i0+n-1
            let i0 = self.i0 - 1;
            for (k, o) in w.iter_mut().enumerate() {
                let i = i0 + k as isize;
                *o = 0.5 * (self.get(i + 1) + self.get(i));
            }
            Stencil1d { i0, w }
        }
    }
}

/// Tensor-product delta `d(i, j) = wx(i) * wy(j)` sampled on one space.
#[derive(Debug, Clone, PartialEq)]
pub struct DdfSample {
    pub space: Space,
    pub wx: Stencil1d,
    pub wy: Stencil1d,
}

impl DdfSample {
    pub fn value(&self, i: isize, j: isize) -> f64 {
        self.wx.get(i) * self.wy.get(j)
    }

    /// Nonzero-candidate entries as `(i, j, d)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.wy.w.iter().enumerate().flat_map(move |(b, &wy)| {
            self.wx.w.iter().enumerate().map(move |(a, &wx)| {
                ((self.wx.i0 + a as isize) as usize, (self.wy.i0 + b as isize) as usize, wx * wy)
            })
        })
    }

    /// True when every stencil index, widened by `margin`, lies inside the grid.
    pub fn fits(&self, g: &GridSpec, margin: isize) -> bool {
        self.wx.i0 - margin >= 0
            && self.wx.end() + margin <= g.nx as isize
            && self.wy.i0 - margin >= 0
            && self.wy.end() + margin <= g.ny as isize
    }
}

fn stencil_1d(k: &Kernel, x0: f64, h: f64, xm: f64) -> Stencil1d {
    let rad = k.support_radius;
    let lo = ((xm - x0) / h - rad).floor() as isize;
    let hi = ((xm - x0) / h + rad).ceil() as isize;
    let mut i0 = lo;
    let mut w: Vec<f64> = (lo..=hi).map(|i| k.phi((x0 + i as f64 * h - xm) / h) / h).collect();
    while w.first() == Some(&0.0) {
        w.remove(0);
        i0 += 1;
    }
    while w.last() == Some(&0.0) {
        w.pop();
    }
    Stencil1d { i0, w }
}

/// Sample the 2D delta centred at `point` on the locations of `space`.
pub fn sample_ddf(k: &Kernel, g: &GridSpec, space: Space, point: [f64; 2]) -> Result<DdfSample> {
    sample_ddf_for(k, g, space, point, 0, 0)
}

/// As [`sample_ddf`], requiring `margin` spare cells around the stencil and
/// tagging a clipping error with the marker index.
pub fn sample_ddf_for(
    k: &Kernel,
    g: &GridSpec,
    space: Space,
    point: [f64; 2],
    margin: isize,
    marker: usize,
) -> Result<DdfSample> {
    let wx = stencil_1d(k, g.x_of(space, 0), g.dx, point[0]);
    let wy = stencil_1d(k, g.y_of(space, 0), g.dy, point[1]);
    let s = DdfSample { space, wx, wy };
    if !s.fits(g, margin) {
        return Err(Error::ClippedSupport { marker });
    }
    Ok(s)
}
