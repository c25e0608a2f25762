//! Immersed boundary formulations of the Dirichlet Poisson problem.
//!
//! The composite formulation solves for the masked solution `u` together
//! with the normal-derivative jump `[u^n]` at the markers:
//!
//! ```text
//! [ L    B1^T ] ( u      )   ( q + b )
//! [ E_C  diag ] ( -[u^n] ) = ( u_G   )
//! ```
//!
//! with `B1^T j = I_FC R_F(n o n o j) + D R_F1n(n o j)` and
//! `diag = E_C1n H+`. The prototypical formulation replaces `B1^T` by
//! `-R_C`, drops the diagonal block and solves for the force `f` directly.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ddf::Kernel;
use crate::grid::{CellField, Field, GridSpec};
use crate::immersed::{circle_body, markers_for_ratio, Markers, Orientation, SurfaceScalar};
use crate::indicator::{build_indicator, signed_area, IndicatorSet};
use crate::linsolve::{
    assemble_dense, condition_number, make_poisson, schur_solve, BlockSystem, LinearOperator, PoissonKind,
    PoissonSolver, SchurSolver,
};
use crate::ops;
use crate::{Error, Result};

/// Which immersed boundary scheme to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Composite solution with the corrected constraint.
    Composite,
    /// Single-layer forcing with the plain interpolation constraint.
    Prototypical,
    /// Single-layer forcing with a given force and no constraint.
    Prescribed,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Composite => "composite",
            Formulation::Prototypical => "prototypical",
            Formulation::Prescribed => "prescribed",
        }
    }
}

/// How the single-layer part of the composite forcing reaches the cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Spreading {
    /// `I_FC R_F(n o n o j)`.
    #[default]
    Face,
    /// `R_C j`.
    Cell,
}

/// A Dirichlet Poisson problem with an immersed interface.
pub struct PoissonProblem {
    pub markers: Markers,
    pub indicator: IndicatorSet,
    pub q: CellField,
    /// Outer boundary contribution (zero for the unbounded solver).
    pub b: CellField,
    pub u_gamma: SurfaceScalar,
    pub solver: Box<dyn PoissonSolver>,
    pub schur: SchurSolver,
    pub spreading: Spreading,
    /// Compute the Schur condition number (assembles the dense Schur matrix).
    pub want_cond: bool,
}

impl PoissonProblem {
    /// Problem with source `q`, interface data `u_gamma` and homogeneous outer
    /// data. The indicator takes the exterior value implied by the normals.
    pub fn new(markers: Markers, q: CellField, u_gamma: SurfaceScalar, kind: PoissonKind) -> Result<Self> {
        let g = markers.grid;
        g.check(&q.grid)?;
        if u_gamma.len() != markers.len() {
            return Err(Error::SpaceMismatch("interface data length differs from marker count".into()));
        }
        if u_gamma.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interface data".into()));
        }
        let solver = make_poisson(kind, &g)?;
        let exterior = if signed_area(&markers) > 0.0 { 1.0 } else { 0.0 };
        let indicator = build_indicator(&markers, solver.as_ref(), exterior)?;
        Ok(PoissonProblem {
            markers,
            indicator,
            q,
            b: CellField::zeros(g),
            u_gamma,
            solver,
            schur: SchurSolver::Lu,
            spreading: Spreading::Face,
            want_cond: false,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.markers.grid
    }

    fn rhs(&self) -> Result<CellField> {
        self.q.add(&self.b)
    }
}

/// Output of one immersed boundary Poisson solve.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub u: CellField,
    /// Normal-derivative jump `[u^n]` (the forcing strength).
    pub forcing: SurfaceScalar,
    pub formulation: Formulation,
    /// Largest violation of the formulation's own interface constraint.
    pub constraint_residual: f64,
    /// Relative residual of the full block system.
    pub block_residual: f64,
    pub cond_s: Option<f64>,
    pub iterations: usize,
    pub runtime_s: f64,
}

/// `I_FC R_F(n o n o I_SV j) + D R_F1n(n o I_SV j)`.
pub fn forcing_apply_composite(markers: &Markers, jump: &SurfaceScalar) -> CellField {
    forcing_apply(markers, jump, Spreading::Face)
}

/// Composite forcing with a selectable single-layer route.
pub fn forcing_apply(markers: &Markers, jump: &SurfaceScalar, spreading: Spreading) -> CellField {
    let n = markers.body.normals();
    let jv = ops::interp_s_to_v(jump);
    let nj = jv.hadamard(&n);
    let single = match spreading {
        Spreading::Face => ops::interp_f_to_c(&markers.reg_f(&nj.hadamard(&n))),
        Spreading::Cell => markers.reg_c(jump),
    };
    let double = ops::divergence(&markers.reg_f1n(&nj));
    single.add(&double).expect("fields share the marker grid")
}

/// Rows of the composite constraint: the interpolation `E_C` and the
/// diagonal `E_C1n H+`.
pub fn constraint_matrix_composite<'a>(
    markers: &'a Markers,
    indicator: &IndicatorSet,
) -> (LinearOperator<'a>, Vec<f64>) {
    let g = markers.grid;
    let e = LinearOperator::new(markers.len(), g.len(), move |x| {
        markers.interp_c(&CellField::from_flat(g, x)).0
    });
    (e, markers.interp_c1n(&indicator.hp_c).0)
}

fn solver_ops(solver: &dyn PoissonSolver) -> (LinearOperator<'_>, LinearOperator<'_>) {
    let g = *solver.grid();
    let n = g.len();
    let a = LinearOperator::new(n, n, move |x| solver.apply(&CellField::from_flat(g, x)).data);
    let a_inv = LinearOperator::new(n, n, move |x| {
        solver.solve(&CellField::from_flat(g, x)).map(|c| c.data).unwrap_or_else(|_| vec![f64::NAN; n])
    });
    (a, a_inv)
}

fn finish(sys: &BlockSystem, solver: SchurSolver, r1: &[f64], r2: &[f64], want_cond: bool) -> Result<(Vec<f64>, Vec<f64>, f64, Option<f64>, usize)> {
    let sol = schur_solve(sys, solver, r1, r2)?;
    if sol.x.iter().chain(&sol.y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("immersed boundary solve".into()));
    }
    let res = sys.relative_residual(&sol.x, &sol.y, r1, r2);
    let cond = if want_cond {
        let s = match sol.schur {
            Some(s) => s,
            None => assemble_dense(&sys.schur_operator()),
        };
        Some(condition_number(&s)?)
    } else {
        None
    };
    Ok((sol.x, sol.y, res, cond, sol.iterations))
}

/// Composite solve via Schur-complement reduction.
pub fn solve_poisson_composite(p: &PoissonProblem) -> Result<PoissonSolution> {
    let t0 = Instant::now();
    let g = p.grid();
    let m = &p.markers;
    let (a, a_inv) = solver_ops(p.solver.as_ref());
    let (b2, diag) = constraint_matrix_composite(m, &p.indicator);
    let spreading = p.spreading;
    let b1t = LinearOperator::new(g.len(), m.len(), move |y| {
        forcing_apply(m, &SurfaceScalar(y.to_vec()), spreading).data
    });
    let dc = diag.clone();
    let c = LinearOperator::new(m.len(), m.len(), move |y| y.iter().zip(&dc).map(|(v, d)| -v * d).collect());
    let sys = BlockSystem { a, a_inv, b1t, b2, c, row_mask: p.solver.residual_mask() };
    let r1 = p.rhs()?.data;
    let (x, y, res, cond, it) = finish(&sys, p.schur, &r1, &p.u_gamma.0, p.want_cond)?;
    let u = CellField::from_flat(g, &x);
    let forcing = SurfaceScalar(y.iter().map(|v| -v).collect());
    let eu = m.interp_c(&u);
    let cres = (0..m.len())
        .map(|l| (eu.0[l] - forcing.0[l] * diag[l] - p.u_gamma.0[l]).abs())
        .fold(0.0, f64::max);
    Ok(PoissonSolution {
        u,
        forcing,
        formulation: Formulation::Composite,
        constraint_residual: cres,
        block_residual: res,
        cond_s: cond,
        iterations: it,
        runtime_s: t0.elapsed().as_secs_f64(),
    })
}

/// Prototypical solve: `L u = q + b + R_C f`, `E_C u = u_G`.
pub fn solve_poisson_prototypical(p: &PoissonProblem) -> Result<PoissonSolution> {
    let t0 = Instant::now();
    let g = p.grid();
    let m = &p.markers;
    let (a, a_inv) = solver_ops(p.solver.as_ref());
    let b1t = LinearOperator::new(g.len(), m.len(), move |y| m.reg_c(&SurfaceScalar(y.to_vec())).scale(-1.0).data);
    let b2 = LinearOperator::new(m.len(), g.len(), move |x| m.interp_c(&CellField::from_flat(g, x)).0);
    let c = LinearOperator::zero(m.len(), m.len());
    let sys = BlockSystem { a, a_inv, b1t, b2, c, row_mask: p.solver.residual_mask() };
    let r1 = p.rhs()?.data;
    let (x, y, res, cond, it) = finish(&sys, p.schur, &r1, &p.u_gamma.0, p.want_cond)?;
    let u = CellField::from_flat(g, &x);
    let eu = m.interp_c(&u);
    let cres = (0..m.len()).map(|l| (eu.0[l] - p.u_gamma.0[l]).abs()).fold(0.0, f64::max);
    Ok(PoissonSolution {
        u,
        forcing: SurfaceScalar(y),
        formulation: Formulation::Prototypical,
        constraint_residual: cres,
        block_residual: res,
        cond_s: cond,
        iterations: it,
        runtime_s: t0.elapsed().as_secs_f64(),
    })
}

/// Plain Poisson solve with the force `R_C f` given. The reported constraint
/// residual is the interface-value error `E_C u - u_G`.
pub fn solve_poisson_prescribed_force(p: &PoissonProblem, jump_exact: &SurfaceScalar) -> Result<PoissonSolution> {
    let t0 = Instant::now();
    let m = &p.markers;
    if jump_exact.len() != m.len() {
        return Err(Error::SpaceMismatch("force length differs from marker count".into()));
    }
    let rhs = p.rhs()?.add(&m.reg_c(jump_exact))?;
    let u = p.solver.solve(&rhs)?;
    if !u.is_finite() {
        return Err(Error::NonFinite("prescribed-force solve".into()));
    }
    let lu = p.solver.apply(&u);
    let mask = p.solver.residual_mask();
    let keep = |k: usize| mask.as_ref().is_none_or(|mm| mm[k]);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..rhs.data.len() {
        if keep(k) {
            num += (lu.data[k] - rhs.data[k]).powi(2);
            den += rhs.data[k].powi(2);
        }
    }
    let eu = m.interp_c(&u);
    let cres = (0..m.len()).map(|l| (eu.0[l] - p.u_gamma.0[l]).abs()).fold(0.0, f64::max);
    Ok(PoissonSolution {
        u,
        forcing: jump_exact.clone(),
        formulation: Formulation::Prescribed,
        constraint_residual: cres,
        block_residual: if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
        cond_s: None,
        iterations: 0,
        runtime_s: t0.elapsed().as_secs_f64(),
    })
}

/// Dispatch on `formulation`; the prescribed variant needs `jump_exact`.
pub fn solve(p: &PoissonProblem, formulation: Formulation, jump_exact: Option<&SurfaceScalar>) -> Result<PoissonSolution> {
    match formulation {
        Formulation::Composite => solve_poisson_composite(p),
        Formulation::Prototypical => solve_poisson_prototypical(p),
        Formulation::Prescribed => {
            let j = jump_exact.ok_or_else(|| Error::InvalidArgument("prescribed force missing".into()))?;
            solve_poisson_prescribed_force(p, j)
        }
    }
}

/// Source used by the one-dimensional test problem.
pub const Q_1D: f64 = -4.0;
/// Exact derivative jump of the one-dimensional test problem.
pub const JUMP_1D: f64 = 4.0;

/// Exact solution of `u'' = -4` on `[0, 2]` with `u = 0` at both ends and
/// at `x_gamma`.
pub fn exact_1d(x: f64, x_gamma: f64) -> f64 {
    if x <= x_gamma {
        x * (x - x_gamma) * Q_1D / 2.0
    } else {
        (x - x_gamma) * (x - 2.0) * Q_1D / 2.0
    }
}

/// Exact solution for interface data `X` on a circle of radius `r` at the
/// origin: `x` inside, `r^2 x / |x|^2` outside.
pub fn exact_2d_circle(p: [f64; 2], r: f64) -> f64 {
    let rr = p[0] * p[0] + p[1] * p[1];
    if rr <= r * r {
        p[0]
    } else {
        r * r * p[0] / rr
    }
}

/// Exact jump `-2 cos(theta)` at a point on the circle.
pub fn exact_2d_jump(p: [f64; 2]) -> f64 {
    -2.0 * p[1].atan2(p[0]).cos()
}

/// The unit-circle test case on `[-2, 2]^2` with `n` cells per side and a
/// marker spacing close to `ds_dx` grid cells.
pub fn circle_problem(n: usize, ds_dx: f64, kind: PoissonKind) -> Result<PoissonProblem> {
    let g = GridSpec::centered_square(n, 2.0)?;
    let nm = markers_for_ratio(1.0, ds_dx, g.dx).max(8);
    let body = circle_body([0.0, 0.0], 1.0, nm, Orientation::Outward)?;
    let m = Markers::new(g, Kernel::default(), body)?;
    let ug = SurfaceScalar(m.body.x.iter().map(|p| p[0]).collect());
    let mut p = PoissonProblem::new(m, CellField::zeros(g), ug, kind)?;
    if kind == PoissonKind::Dst {
        p.b = crate::linsolve::dirichlet_boundary_term(&g, |x, y| exact_2d_circle([x, y], 1.0));
    }
    Ok(p)
}

/// Exact jump sampled at the markers of a circle problem.
pub fn circle_exact_jump(m: &Markers) -> SurfaceScalar {
    SurfaceScalar(m.body.x.iter().map(|&p| exact_2d_jump(p)).collect())
}

/// One-dimensional path: a single marker with normal `+x` on `[0, 2]`, zero
/// Dirichlet data at both ends, `N` cells.
pub mod one_d {
    use super::*;

    /// Setup of the one-dimensional problem.
    #[derive(Debug, Clone, Copy)]
    pub struct Problem1d {
        pub n: usize,
        pub x_gamma: f64,
        pub kernel: Kernel,
        pub schur: SchurSolver,
    }

    impl Problem1d {
        pub fn new(n: usize, x_gamma: f64) -> Result<Self> {
            if n < 8 {
                return Err(Error::InvalidGrid(format!("1D grid needs at least 8 cells, got {n}")));
            }
            let p = Problem1d { n, x_gamma, kernel: Kernel::default(), schur: SchurSolver::Lu };
            let reach = p.kernel.support_radius + 1.0;
            if x_gamma - reach * p.h() <= 0.0 || x_gamma + reach * p.h() >= 2.0 {
                return Err(Error::ClippedSupport { marker: 0 });
            }
            Ok(p)
        }

        pub fn h(&self) -> f64 {
            2.0 / self.n as f64
        }

        pub fn x_cell(&self, i: usize) -> f64 {
            (i as f64 + 0.5) * self.h()
        }

        fn x_face(&self, f: usize) -> f64 {
            f as f64 * self.h()
        }

        fn delta(&self, x: f64) -> f64 {
            self.kernel.phi((x - self.x_gamma) / self.h()) / self.h()
        }

        /// Cell delta weights.
        pub fn d_cell(&self) -> Vec<f64> {
            (0..self.n).map(|i| self.delta(self.x_cell(i))).collect()
        }

        /// Face delta weights, faces `0..=n`.
        pub fn d_face(&self) -> Vec<f64> {
            (0..=self.n).map(|f| self.delta(self.x_face(f))).collect()
        }

        /// `L u` with ghost values `2 g - u` at both ends.
        pub fn laplacian(&self, u: &[f64], gl: f64, gr: f64) -> Vec<f64> {
            let n = self.n;
            let h2 = self.h() * self.h();
            (0..n)
                .map(|i| {
                    let l = if i == 0 { 2.0 * gl - u[0] } else { u[i - 1] };
                    let r = if i == n - 1 { 2.0 * gr - u[n - 1] } else { u[i + 1] };
                    (l - 2.0 * u[i] + r) / h2
                })
                .collect()
        }

        /// Solve `L u = f` with homogeneous ghost data (Thomas algorithm).
        pub fn solve_laplacian(&self, f: &[f64]) -> Vec<f64> {
            let n = self.n;
            let h2 = self.h() * self.h();
            let diag = |i: usize| if i == 0 || i == n - 1 { -3.0 } else { -2.0 };
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            let mut beta = diag(0);
            c[0] = 1.0 / beta;
            d[0] = f[0] * h2 / beta;
            for i in 1..n {
                beta = diag(i) - c[i - 1];
                c[i] = 1.0 / beta;
                d[i] = (f[i] * h2 - d[i - 1]) / beta;
            }
            let mut u = vec![0.0; n];
            u[n - 1] = d[n - 1];
            for i in (0..n - 1).rev() {
                u[i] = d[i] - c[i] * u[i + 1];
            }
            u
        }

        /// `H+` from `L H+ = D R_F n`, 0 at the left end and 1 at the right.
        pub fn indicator(&self) -> Vec<f64> {
            let h = self.h();
            let df = self.d_face();
            let mut rhs: Vec<f64> = (0..self.n).map(|i| (df[i + 1] - df[i]) / h).collect();
            rhs[self.n - 1] -= 2.0 / (h * h);
            self.solve_laplacian(&rhs)
        }

        /// Composite forcing field for a jump `j`.
        pub fn forcing_composite(&self, j: f64) -> Vec<f64> {
            let h = self.h();
            let df = self.d_face();
            let w: Vec<f64> = (0..=self.n).map(|f| df[f] * (self.x_face(f) - self.x_gamma) * j).collect();
            (0..self.n).map(|i| 0.5 * (df[i] + df[i + 1]) * j + (w[i + 1] - w[i]) / h).collect()
        }

        /// `E_C u`.
        pub fn interp(&self, u: &[f64]) -> f64 {
            self.d_cell().iter().zip(u).map(|(d, v)| d * v).sum::<f64>() * self.h()
        }

        /// `E_C1n u`.
        pub fn interp_1n(&self, u: &[f64]) -> f64 {
            let dc = self.d_cell();
            (0..self.n).map(|i| dc[i] * (self.x_cell(i) - self.x_gamma) * u[i]).sum::<f64>() * self.h()
        }

        /// Cells where the cell delta is nonzero.
        pub fn support(&self) -> Vec<bool> {
            self.d_cell().iter().map(|&d| d != 0.0).collect()
        }

        pub fn exact(&self) -> Vec<f64> {
            (0..self.n).map(|i| exact_1d(self.x_cell(i), self.x_gamma)).collect()
        }
    }

    /// Result of a one-dimensional solve.
    #[derive(Debug, Clone)]
    pub struct Solution1d {
        pub x: Vec<f64>,
        pub u: Vec<f64>,
        /// Computed (or prescribed) derivative jump.
        pub forcing: f64,
        /// `E_C u`.
        pub interface_value: f64,
        pub block_residual: f64,
        pub support: Vec<bool>,
        pub formulation: Formulation,
    }

    /// Solve the one-dimensional problem with the chosen formulation.
    pub fn solve_1d(p: &Problem1d, formulation: Formulation) -> Result<Solution1d> {
        let n = p.n;
        let q = vec![Q_1D; n];
        let a = LinearOperator::new(n, n, |x| p.laplacian(x, 0.0, 0.0));
        let a_inv = LinearOperator::new(n, n, |x| p.solve_laplacian(x));
        let b2 = LinearOperator::new(1, n, |x| vec![p.interp(x)]);
        let dc = p.d_cell();
        let (u, forcing, res) = match formulation {
            Formulation::Composite => {
                let diag = p.interp_1n(&p.indicator());
                let b1t = LinearOperator::new(n, 1, |y| p.forcing_composite(y[0]));
                let c = LinearOperator::new(1, 1, move |y| vec![-diag * y[0]]);
                let sys = BlockSystem { a, a_inv, b1t, b2, c, row_mask: None };
                let s = schur_solve(&sys, p.schur, &q, &[0.0])?;
                let res = sys.relative_residual(&s.x, &s.y, &q, &[0.0]);
                (s.x, -s.y[0], res)
            }
            Formulation::Prototypical => {
                let dc2 = dc.clone();
                let b1t = LinearOperator::new(n, 1, move |y| dc2.iter().map(|d| -d * y[0]).collect());
                let c = LinearOperator::zero(1, 1);
                let sys = BlockSystem { a, a_inv, b1t, b2, c, row_mask: None };
                let s = schur_solve(&sys, p.schur, &q, &[0.0])?;
                let res = sys.relative_residual(&s.x, &s.y, &q, &[0.0]);
                (s.x, s.y[0], res)
            }
            Formulation::Prescribed => {
                let rhs: Vec<f64> = (0..n).map(|i| q[i] + dc[i] * JUMP_1D).collect();
                let u = p.solve_laplacian(&rhs);
                let lu = p.laplacian(&u, 0.0, 0.0);
                let num: f64 = lu.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum();
                let den: f64 = rhs.iter().map(|b| b * b).sum();
                (u, JUMP_1D, (num / den).sqrt())
            }
        };
        if u.iter().any(|v| !v.is_finite()) || !forcing.is_finite() {
            return Err(Error::NonFinite("1D solve".into()));
        }
        Ok(Solution1d {
            x: (0..n).map(|i| p.x_cell(i)).collect(),
            interface_value: p.interp(&u),
            u,
            forcing,
            block_residual: res,
            support: p.support(),
            formulation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::one_d::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_jump_gives_zero_forcing() {
        let p = circle_problem(20, 1.0, PoissonKind::Lgf).unwrap();
        let f = forcing_apply_composite(&p.markers, &SurfaceScalar::zeros(p.markers.len()));
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn single_marker_forcing_mass() {
        let g = GridSpec::centered_square(16, 2.0).unwrap();
        let mut body = crate::immersed::Body::empty();
        body.x.push([0.13, -0.21]);
        let a = 0.7_f64;
        body.n.push([a.cos(), a.sin()]);
        body.t.push([-a.sin(), a.cos()]);
        body.ds.push(0.25);
        body.xdot.push([0.0, 0.0]);
        body.curves.push(0..1);
        let m = Markers::new(g, Kernel::default(), body).unwrap();
        let f = forcing_apply_composite(&m, &SurfaceScalar(vec![1.0]));
        assert_abs_diff_eq!(f.sum() * g.cell_area(), 0.25, epsilon = 1e-13);
    }

    #[test]
    fn constant_indicator_has_zero_diagonal() {
        let p = circle_problem(20, 1.0, PoissonKind::Lgf).unwrap();
        let mut ind = p.indicator.clone();
        ind.hp_c = CellField::constant(p.grid(), 1.0);
        let (_, d) = constraint_matrix_composite(&p.markers, &ind);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
        let (_, d) = constraint_matrix_composite(&p.markers, &p.indicator);
        assert!(d.iter().all(|&v| v > 0.0), "{d:?}");
    }

    #[test]
    fn zero_problem_gives_zero() {
        let mut p = circle_problem(20, 1.0, PoissonKind::Lgf).unwrap();
        p.u_gamma = SurfaceScalar::zeros(p.markers.len());
        for f in [Formulation::Composite, Formulation::Prototypical] {
            let s = solve(&p, f, None).unwrap();
            assert!(s.u.max_abs() < 1e-14 && s.forcing.max_abs() < 1e-12);
        }
    }

    #[test]
    fn circle_block_residuals() {
        let p = circle_problem(20, 1.0, PoissonKind::Lgf).unwrap();
        for f in [Formulation::Composite, Formulation::Prototypical] {
            let s = solve(&p, f, None).unwrap();
            assert!(s.block_residual < 1e-9, "{f:?} {}", s.block_residual);
            assert!(s.constraint_residual < 1e-9, "{f:?} {}", s.constraint_residual);
        }
    }

    #[test]
    fn one_d_exact_values() {
        assert_eq!(exact_1d(0.9, 0.9), 0.0);
        assert_eq!(exact_1d(0.0, 0.9), 0.0);
        assert_eq!(exact_1d(2.0, 0.9), 0.0);
        let e = 1e-6;
        let jump = (exact_1d(0.9 + e, 0.9) - exact_1d(0.9, 0.9)) / e - (exact_1d(0.9, 0.9) - exact_1d(0.9 - e, 0.9)) / e;
        assert_abs_diff_eq!(jump, JUMP_1D, epsilon = 1e-4);
        assert_abs_diff_eq!(exact_2d_circle([1.0, 0.0], 1.0), 1.0);
        assert_abs_diff_eq!(exact_2d_circle([0.6, 0.8], 1.0), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn one_d_indicator_is_a_step() {
        let p = Problem1d::new(32, 0.9).unwrap();
        let h = p.indicator();
        let s = p.support();
        for i in 0..32 {
            if !s[i] {
                let want = if p.x_cell(i) > 0.9 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(h[i], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn one_d_solves() {
        let p = Problem1d::new(32, 0.9).unwrap();
        for f in [Formulation::Composite, Formulation::Prototypical, Formulation::Prescribed] {
            let s = solve_1d(&p, f).unwrap();
            assert!(s.block_residual < 1e-12, "{f:?}");
        }
        let s = solve_1d(&p, Formulation::Composite).unwrap();
        assert!((s.forcing - JUMP_1D).abs() < 0.2, "{}", s.forcing);
        let s = solve_1d(&p, Formulation::Prescribed).unwrap();
        assert!(s.interface_value > 1e-4, "{}", s.interface_value);
    }
}
