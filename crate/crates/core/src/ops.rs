//! Mimetic second-order difference operators and space transforms.
//!
//! All stencils are two-point differences or averages placed midway between
//! their inputs. A value at an integer location `i` combines with `i + 1`; a
//! value at a half location `i + 1/2` combines with `i - 1/2`, so every
//! operator maps between the spaces sharing index `(i, j)` (see [`crate::grid`]).
//! Indices wrap around the window, which makes every identity between these
//! operators hold exactly for arbitrary fields.

use crate::grid::{CellField, FaceField, Field, GridSpec, NodeField, Space, TensorField};
use crate::immersed::{SurfaceScalar, SurfaceVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    X,
    Y,
}

#[inline]
fn two_point(
    g: &GridSpec,
    a: &[f64],
    sp: Space,
    dir: Dir,
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let (nx, ny) = (g.nx, g.ny);
    let (sx, sy) = sp.stagger();
    let mut out = vec![0.0; nx * ny];
    match dir {
        Dir::X => {
            for j in 0..ny {
                let row = &a[j * nx..(j + 1) * nx];
                let o = &mut out[j * nx..(j + 1) * nx];
                for i in 0..nx {
                    let (hi, lo) = if !sx {
                        (row[if i + 1 == nx { 0 } else { i + 1 }], row[i])
                    } else {
                        (row[i], row[if i == 0 { nx - 1 } else { i - 1 }])
                    };
                    o[i] = f(hi, lo);
                }
            }
        }
        Dir::Y => {
            for j in 0..ny {
                let (jh, jl) = if !sy {
                    (if j + 1 == ny { 0 } else { j + 1 }, j)
                } else {
                    (j, if j == 0 { ny - 1 } else { j - 1 })
                };
                for i in 0..nx {
                    out[i + nx * j] = f(a[i + nx * jh], a[i + nx * jl]);
                }
            }
        }
    }
    out
}

/// One-dimensional difference of a scalar array living on `sp`. The result
/// lives on `sp` flipped along `dir`.
pub fn diff(g: &GridSpec, a: &[f64], sp: Space, dir: Dir) -> Vec<f64> {
    let h = match dir {
        Dir::X => g.dx,
        Dir::Y => g.dy,
    };
    two_point(g, a, sp, dir, |hi, lo| (hi - lo) / h)
}

/// One-dimensional two-point average (`I_x` or `I_y`).
pub fn avg(g: &GridSpec, a: &[f64], sp: Space, dir: Dir) -> Vec<f64> {
    two_point(g, a, sp, dir, |hi, lo| 0.5 * (hi + lo))
}

/// Three-point second difference along `dir`; output on the same space.
pub fn second_diff(g: &GridSpec, a: &[f64], sp: Space, dir: Dir) -> Vec<f64> {
    let d = diff(g, a, sp, dir);
    let flipped = match dir {
        Dir::X => sp.flip_x(),
        Dir::Y => sp.flip_y(),
    };
    diff(g, &d, flipped, dir)
}

fn add(a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    let mut a = a;
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

fn lap(g: &GridSpec, a: &[f64], sp: Space) -> Vec<f64> {
    add(second_diff(g, a, sp, Dir::X), &second_diff(g, a, sp, Dir::Y))
}

/// `G`: cell centers to faces.
pub fn gradient(s: &CellField) -> FaceField {
    let g = &s.grid;
    FaceField {
        grid: *g,
        x: diff(g, &s.data, Space::C, Dir::X),
        y: diff(g, &s.data, Space::C, Dir::Y),
    }
}

/// `D`: faces to cell centers.
pub fn divergence(v: &FaceField) -> CellField {
    let g = &v.grid;
    CellField {
        grid: *g,
        data: add(diff(g, &v.x, Space::Fx, Dir::X), &diff(g, &v.y, Space::Fy, Dir::Y)),
    }
}

/// `G_F`: faces to the tensor space.
pub fn face_gradient(v: &FaceField) -> TensorField {
    let g = &v.grid;
    TensorField {
        grid: *g,
        t11: diff(g, &v.x, Space::Fx, Dir::X),
        t12: diff(g, &v.x, Space::Fx, Dir::Y),
        t21: diff(g, &v.y, Space::Fy, Dir::X),
        t22: diff(g, &v.y, Space::Fy, Dir::Y),
    }
}

/// `D_D`: row-wise divergence of a tensor, back to faces.
pub fn tensor_divergence(t: &TensorField) -> FaceField {
    let g = &t.grid;
    FaceField {
        grid: *g,
        x: add(diff(g, &t.t11, Space::C, Dir::X), &diff(g, &t.t12, Space::N, Dir::Y)),
        y: add(diff(g, &t.t21, Space::N, Dir::X), &diff(g, &t.t22, Space::C, Dir::Y)),
    }
}

/// `C`: curl of the out-of-plane node field, `(dw/dy, -dw/dx)` on faces.
pub fn curl(w: &NodeField) -> FaceField {
    let g = &w.grid;
    FaceField {
        grid: *g,
        x: diff(g, &w.data, Space::N, Dir::Y),
        y: diff(g, &w.data, Space::N, Dir::X).into_iter().map(|v| -v).collect(),
    }
}

/// `C^T`: scalar curl `dvy/dx - dvx/dy` on nodes.
pub fn cocurl(v: &FaceField) -> NodeField {
    let g = &v.grid;
    let a = diff(g, &v.y, Space::Fy, Dir::X);
    let b = diff(g, &v.x, Space::Fx, Dir::Y);
    NodeField { grid: *g, data: a.iter().zip(&b).map(|(p, q)| p - q).collect() }
}

/// `L` on cell centers.
pub fn laplacian_center(s: &CellField) -> CellField {
    CellField { grid: s.grid, data: lap(&s.grid, &s.data, Space::C) }
}

/// `L_F` on faces, componentwise.
pub fn laplacian_face(v: &FaceField) -> FaceField {
    let g = &v.grid;
    FaceField { grid: *g, x: lap(g, &v.x, Space::Fx), y: lap(g, &v.y, Space::Fy) }
}

/// `L_E` on nodes.
pub fn laplacian_node(w: &NodeField) -> NodeField {
    NodeField { grid: w.grid, data: lap(&w.grid, &w.data, Space::N) }
}

/// `I_{C->F}`.
pub fn interp_c_to_f(s: &CellField) -> FaceField {
    let g = &s.grid;
    FaceField {
        grid: *g,
        x: avg(g, &s.data, Space::C, Dir::X),
        y: avg(g, &s.data, Space::C, Dir::Y),
    }
}

/// `I_{F->C}`: interpolate and contract.
pub fn interp_f_to_c(v: &FaceField) -> CellField {
    let g = &v.grid;
    CellField {
        grid: *g,
        data: add(avg(g, &v.x, Space::Fx, Dir::X), &avg(g, &v.y, Space::Fy, Dir::Y)),
    }
}

/// `I_{F->D}`: component `(a, b)` is `I_b v_a`.
pub fn interp_f_to_d(v: &FaceField) -> TensorField {
    let g = &v.grid;
    TensorField {
        grid: *g,
        t11: avg(g, &v.x, Space::Fx, Dir::X),
        t12: avg(g, &v.x, Space::Fx, Dir::Y),
        t21: avg(g, &v.y, Space::Fy, Dir::X),
        t22: avg(g, &v.y, Space::Fy, Dir::Y),
    }
}

/// `I_{D->F}`: interpolate and contract row-wise.
pub fn interp_d_to_f(t: &TensorField) -> FaceField {
    let g = &t.grid;
    FaceField {
        grid: *g,
        x: add(avg(g, &t.t11, Space::C, Dir::X), &avg(g, &t.t12, Space::N, Dir::Y)),
        y: add(avg(g, &t.t21, Space::N, Dir::X), &avg(g, &t.t22, Space::C, Dir::Y)),
    }
}

/// `I_{S->V}`: copy a surface scalar into every vector component.
pub fn interp_s_to_v(s: &SurfaceScalar) -> SurfaceVector {
    SurfaceVector { x: s.0.clone(), y: s.0.clone() }
}

/// Face vector with `dx^2 / 4` in the x slot and `dy^2 / 4` in the y slot.
pub fn quarter_spacing_sq_face(g: &GridSpec) -> FaceField {
    FaceField::constant(*g, 0.25 * g.dx * g.dx, 0.25 * g.dy * g.dy)
}

/// Tensor whose `(a, b)` entry is `dx_b^2 / 4` (the column direction is the
/// one being averaged by `I_{F->D}`).
pub fn quarter_spacing_sq_tensor(g: &GridSpec) -> TensorField {
    let (qx, qy) = (0.25 * g.dx * g.dx, 0.25 * g.dy * g.dy);
    let n = g.len();
    TensorField {
        grid: *g,
        t11: vec![qx; n],
        t12: vec![qy; n],
        t21: vec![qx; n],
        t22: vec![qy; n],
    }
}

/// Discrete convective term `N(v) = D_D((I v)^T o I v)`, the divergence form
/// of `div(v v)`.
pub fn convective(v: &FaceField) -> FaceField {
    let iv = interp_f_to_d(v);
    let w = iv.transpose().mul(&iv).expect("same grid");
    tensor_divergence(&w)
}

/// Transform selector for [`transform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    CellToFace,
    FaceToCell,
    FaceToTensor,
    TensorToFace,
    ScalarToVector,
}

/// Any field a transform can act on.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyField {
    Cell(CellField),
    Face(FaceField),
    Node(NodeField),
    Tensor(TensorField),
    SurfScalar(SurfaceScalar),
    SurfVector(SurfaceVector),
}

/// Apply a space transform, checking that the operand lives where the
/// transform expects it.
pub fn transform(kind: TransformKind, f: &AnyField) -> Result<AnyField> {
    use AnyField as A;
    use TransformKind as K;
    Ok(match (kind, f) {
        (K::CellToFace, A::Cell(s)) => A::Face(interp_c_to_f(s)),
        (K::FaceToCell, A::Face(v)) => A::Cell(interp_f_to_c(v)),
        (K::FaceToTensor, A::Face(v)) => A::Tensor(interp_f_to_d(v)),
        (K::TensorToFace, A::Tensor(t)) => A::Face(interp_d_to_f(t)),
        (K::ScalarToVector, A::SurfScalar(s)) => A::SurfVector(interp_s_to_v(s)),
        (k, _) => {
            return Err(Error::InvalidTransform(format!("{k:?} does not accept this operand")))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> GridSpec {
        GridSpec::new(8, 6, 0.5, 0.25, [0.1, -0.3]).unwrap()
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = grid();
        assert_eq!(gradient(&CellField::constant(g, 3.0)).max_abs(), 0.0);
        // Linear fields are only exact away from the wrap seam.
        let s = CellField::from_fn(g, |x, _| x);
        let gs = gradient(&s);
        for j in 0..g.ny {
            for i in 0..g.nx - 1 {
                assert_abs_diff_eq!(gs.x[g.idx(i, j)], 1.0, epsilon = 1e-12);
            }
        }
        assert_eq!(gs.y.iter().fold(0.0_f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn divergence_free_linear_field() {
        let g = grid();
        let v = FaceField::from_fn(g, |x, _| x, |_, y| -y);
        let d = divergence(&v);
        for j in 1..g.ny {
            for i in 1..g.nx {
                assert_abs_diff_eq!(d.data[g.idx(i, j)], 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_laplacian() {
        let g = grid();
        let s = CellField::from_fn(g, |x, _| x * x);
        let l = laplacian_center(&s);
        for j in 0..g.ny {
            for i in 1..g.nx - 1 {
                assert_abs_diff_eq!(l.data[g.idx(i, j)], 2.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn interpolate_constant_and_stack() {
        let g = grid();
        let f = interp_c_to_f(&CellField::constant(g, 2.5));
        assert!(f.x.iter().chain(&f.y).all(|&v| v == 2.5));
        let v = interp_s_to_v(&SurfaceScalar(vec![1.0, -2.0]));
        assert_eq!(v.x, vec![1.0, -2.0]);
        assert_eq!(v.y, vec![1.0, -2.0]);
        let bad = transform(TransformKind::FaceToCell, &AnyField::Cell(CellField::zeros(g)));
        assert!(bad.is_err());
    }

    #[test]
    fn convective_constant_vanishes() {
        let g = grid();
        let v = FaceField::constant(g, 0.7, -1.3);
        assert!(convective(&v).max_abs() < 1e-12);
    }

    #[test]
    fn convective_linear_manufactured() {
        // v = (x, -y): div(v v) = (2x - x, 2y - y)... i.e. (x, y)
        let g = GridSpec::new(16, 16, 0.1, 0.1, [0.0, 0.0]).unwrap();
        let v = FaceField::from_fn(g, |x, _| x, |_, y| -y);
        let n = convective(&v);
        for j in 2..g.ny - 2 {
            for i in 2..g.nx - 2 {
                let k = g.idx(i, j);
                assert_abs_diff_eq!(n.x[k], g.x_of(Space::Fx, i as isize), epsilon = 1e-10);
                assert_abs_diff_eq!(n.y[k], g.y_of(Space::Fy, j as isize), epsilon = 1e-10);
            }
        }
    }
}
