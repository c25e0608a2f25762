//! Incompressible Navier-Stokes flow with immersed boundaries on a doubly
//! periodic staggered grid.
//!
//! Every explicit step solves the saddle system
//!
//! ```text
//! [ I    dt G   B11 ] ( v )   ( r    )
//! [ D    0      B12 ] ( p ) = ( b2   )
//! [ E_F  0     -Hf  ] ( J )   ( v_G  )
//! [ 0    E~    -Hc  ] ( P )   ( 0    )
//! ```
//!
//! by Schur-complement reduction onto the interface unknowns `y = (J, P)`,
//! the normal-derivative velocity jump and the pressure jump. The
//! prototypical variant instead solves for a single-layer force `f` with the
//! constraint `E_F v = v_G`.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::ddf::Kernel;
use crate::grid::{CellField, FaceField, Field, GridSpec, Space, TensorField};
use crate::immersed::{circle_body, markers_for_ratio, surface_outer, Markers, Orientation, SurfaceScalar, SurfaceVector};
use crate::indicator::{build_indicator, signed_area, IndicatorSet};
use crate::linsolve::{assemble_dense, bicgstab, LinearOperator, PeriodicFft, PoissonSolver, SchurSolver, KRYLOV_TOL};
use crate::ops;
use crate::poisson_ib::Formulation;
use crate::{Error, Result};

pub use crate::ops::convective;

/// Time-stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsConfig {
    pub re: f64,
    pub dt: f64,
    /// Weight of the explicit right-hand side (1 for forward Euler).
    pub k: f64,
    pub steady_tol: f64,
    pub formulation: Formulation,
    pub schur: SchurSolver,
    pub max_steps: usize,
}

impl NsConfig {
    /// Forward Euler with the default step for velocity scale `vmax`.
    pub fn new(grid: &GridSpec, re: f64, vmax: f64, formulation: Formulation) -> Self {
        NsConfig {
            re,
            dt: default_dt(grid, re, vmax),
            k: 1.0,
            steady_tol: 1e-8,
            formulation,
            schur: SchurSolver::Lu,
            max_steps: 200_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.re > 0.0 && self.re.is_finite()) {
            return Err(Error::InvalidArgument(format!("Reynolds number must be positive, got {}", self.re)));
        }
        if self.formulation == Formulation::Prescribed {
            return Err(Error::InvalidArgument("prescribed forcing is a Poisson-only variant".into()));
        }
        Ok(())
    }

    /// Convective CFL number `vmax dt / dx`.
    pub fn cfl(&self, grid: &GridSpec, vmax: f64) -> f64 {
        vmax * self.dt / grid.dx.min(grid.dy)
    }

    /// Stable hash of the serialized configuration.
    pub fn hash(&self) -> u64 {
        let s = serde_json::to_string(self).unwrap_or_default();
        let mut h = DefaultHasher::new();
        h.write(s.as_bytes());
        h.finish()
    }
}

/// `0.2 h^2 Re`, capped so that the convective CFL number stays at 0.5. At
/// `0.25 h^2 Re` the checkerboard mode of forward Euler diffusion is neutral
/// and never decays.
pub fn default_dt(grid: &GridSpec, re: f64, vmax: f64) -> f64 {
    let h = grid.dx.min(grid.dy);
    let diffusive = 0.2 * h * h * re;
    if vmax > 0.0 {
        diffusive.min(0.5 * h / vmax)
    } else {
        diffusive
    }
}

/// Flow state after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct NsState {
    pub v: FaceField,
    pub p: CellField,
    pub t: f64,
    /// Composite: `[v^n]`. Prototypical: the force `f`.
    pub jump_v: SurfaceVector,
    /// Composite: `[p]`. Prototypical: empty.
    pub jump_p: SurfaceScalar,
}

impl NsState {
    pub fn rest(grid: GridSpec, n_markers: usize) -> Self {
        NsState {
            v: FaceField::zeros(grid),
            p: CellField::zeros(grid),
            t: 0.0,
            jump_v: SurfaceVector::zeros(n_markers),
            jump_p: SurfaceScalar::zeros(n_markers),
        }
    }
}

/// Body, indicator and boundary data of a flow problem.
pub struct NsProblem {
    pub markers: Markers,
    pub indicator: IndicatorSet,
    /// Prescribed velocity at the markers.
    pub v_gamma: SurfaceVector,
    pub b1: FaceField,
    pub b2: CellField,
    solver: PeriodicFft,
}

impl NsProblem {
    /// Periodic problem with zero boundary terms. The indicator exterior value
    /// follows from the orientation of the normals.
    pub fn new(markers: Markers, v_gamma: SurfaceVector) -> Result<Self> {
        if v_gamma.len() != markers.len() {
            return Err(Error::SpaceMismatch(format!(
                "{} marker velocities for {} markers",
                v_gamma.len(),
                markers.len()
            )));
        }
        let g = markers.grid;
        let solver = PeriodicFft::new(&g)?;
        let exterior = if markers.is_empty() || signed_area(&markers) > 0.0 { 1.0 } else { 0.0 };
        let indicator = build_indicator(&markers, &solver, exterior)?;
        Ok(NsProblem { markers, indicator, v_gamma, b1: FaceField::zeros(g), b2: CellField::zeros(g), solver })
    }

    pub fn grid(&self) -> GridSpec {
        self.markers.grid
    }

    pub fn solver(&self) -> &dyn PoissonSolver {
        &self.solver
    }
}

/// Per-step checks, each relative to the natural scale of its equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Discrete continuity with the interface source, scaled by `|v| / dx`.
    pub continuity: f64,
    /// Velocity constraint at the markers, scaled by `|v|`.
    pub no_slip: f64,
    /// Pressure-jump relation outside the gauge rows, scaled by `|p|`.
    pub pressure_jump: f64,
    pub cfl: f64,
    pub iterations: usize,
}

/// `r = v + K dt (-N(v) + L_F v / Re + b1)`.
pub fn momentum_rhs(state: &NsState, config: &NsConfig, b1: &FaceField) -> FaceField {
    let mut r = state.v.clone();
    if config.k == 0.0 {
        return r;
    }
    let nv = ops::convective(&state.v);
    let lv = ops::laplacian_face(&state.v);
    let c = config.k * config.dt;
    for (o, (a, (b, f))) in r.x.iter_mut().zip(nv.x.iter().zip(lv.x.iter().zip(&b1.x))) {
        *o += c * (-a + b / config.re + f);
    }
    for (o, (a, (b, f))) in r.y.iter_mut().zip(nv.y.iter().zip(lv.y.iter().zip(&b1.y))) {
        *o += c * (-a + b / config.re + f);
    }
    r
}

fn axpy(y: &mut FaceField, a: f64, x: &FaceField) {
    y.x.iter_mut().zip(&x.x).for_each(|(o, v)| *o += a * v);
    y.y.iter_mut().zip(&x.y).for_each(|(o, v)| *o += a * v);
}

fn rel(res: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        res / scale
    } else {
        res
    }
}

/// Normal-distance weighted pressure interpolation with the mean over each
/// closed curve removed.
pub fn interp_pressure_zero_mean(markers: &Markers, p: &CellField) -> SurfaceScalar {
    let mut s = markers.interp_c1n(p);
    for c in &markers.body.curves {
        let mean = s.0[c.clone()].iter().sum::<f64>() / c.len().max(1) as f64;
        s.0[c.clone()].iter_mut().for_each(|v| *v -= mean);
    }
    s
}

/// Time stepper with the Schur complement prefactored for one body and step.
pub struct Stepper<'a> {
    problem: &'a NsProblem,
    config: NsConfig,
    /// `E_F1n H_F+`.
    h_f: SurfaceVector,
    /// `E_C1n H_C+`.
    h_c: SurfaceScalar,
    xn: SurfaceScalar,
    /// First marker of each curve; its pressure row carries the gauge.
    gauge: Vec<usize>,
    schur: Option<DMatrix<f64>>,
    lu: Option<LU<f64, Dyn, Dyn>>,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a NsProblem, config: NsConfig) -> Result<Self> {
        config.validate()?;
        let m = &problem.markers;
        let h_f = m.interp_f1n(&problem.indicator.hp_f);
        let h_c = m.interp_c1n(&problem.indicator.hp_c);
        let xn = m.body.normal_speed();
        let gauge = m.body.curves.iter().filter(|c| !c.is_empty()).map(|c| c.start).collect();
        let mut s = Stepper { problem, config, h_f, h_c, xn, gauge, schur: None, lu: None };
        if config.schur == SchurSolver::Lu && !m.is_empty() {
            let mat = assemble_dense(&s.schur_operator());
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Schur complement assembly".into()));
            }
            s.lu = Some(mat.clone().lu());
            s.schur = Some(mat);
        }
        Ok(s)
    }

    pub fn config(&self) -> &NsConfig {
        &self.config
    }

    pub fn problem(&self) -> &NsProblem {
        self.problem
    }

    fn n(&self) -> usize {
        self.problem.markers.len()
    }

    /// Number of interface unknowns.
    pub fn schur_dim(&self) -> usize {
        match self.config.formulation {
            Formulation::Composite => 3 * self.n(),
            _ => 2 * self.n(),
        }
    }

    /// Dense Schur complement, when the direct solver is in use.
    pub fn schur_matrix(&self) -> Option<&DMatrix<f64>> {
        self.schur.as_ref()
    }

    /// Normal speed `n . Xdot` of the markers.
    pub fn normal_speed(&self) -> &SurfaceScalar {
        &self.xn
    }

    fn split(&self, y: &[f64]) -> (SurfaceVector, SurfaceScalar) {
        let n = self.n();
        (SurfaceVector::from_flat(&y[..2 * n]), SurfaceScalar(y[2 * n..3 * n].to_vec()))
    }

    /// `B11 y`: marker motion, viscous jump and pressure jump forcing.
    pub fn forcing_momentum(&self, j: &SurfaceVector, pj: &SurfaceScalar) -> FaceField {
        let m = &self.problem.markers;
        let (dt, re) = (self.config.dt, self.config.re);
        let n = m.body.normals();
        let mut f = m.reg_f1n(&j.scaled_by(&self.xn.0)).scale(dt);
        let nn = n.hadamard(&n);
        let t1 = surface_outer(j, &nn).expect("same length");
        let t2 = surface_outer(j, &n).expect("same length");
        axpy(&mut f, dt / re, &ops::interp_d_to_f(&m.reg_ift(&t1)));
        axpy(&mut f, dt / re, &ops::tensor_divergence(&m.reg_ift1n(&t2)));
        axpy(&mut f, -dt, &m.reg_f(&n.scaled_by(&pj.0)));
        f
    }

    /// `B12 y = -I_FC R_F1n(n o J)`.
    pub fn forcing_continuity(&self, j: &SurfaceVector) -> CellField {
        let m = &self.problem.markers;
        ops::interp_f_to_c(&m.reg_f1n(&m.body.normals().hadamard(j))).scale(-1.0)
    }

    fn solve_l(&self, f: &CellField) -> CellField {
        self.problem
            .solver
            .solve(f)
            .unwrap_or_else(|_| CellField { grid: f.grid, data: vec![f64::NAN; f.data.len()] })
    }

    /// `L^{-1}(D B11 y - B12 y)` together with `B11 y`.
    fn pressure_correction(&self, j: &SurfaceVector, pj: &SurfaceScalar) -> (FaceField, CellField) {
        let f = self.forcing_momentum(j, pj);
        let mut c = ops::divergence(&f);
        let b12 = self.forcing_continuity(j);
        c.data.iter_mut().zip(&b12.data).for_each(|(a, b)| *a -= b);
        (f, self.solve_l(&c))
    }

    /// Apply the Schur complement to the interface unknowns.
    pub fn schur_apply(&self, y: &[f64]) -> Vec<f64> {
        let m = &self.problem.markers;
        let dt = self.config.dt;
        match self.config.formulation {
            Formulation::Composite => {
                let (j, pj) = self.split(y);
                let (f, q) = self.pressure_correction(&j, &pj);
                let ef = m.interp_f(&f);
                let egq = m.interp_f(&ops::gradient(&q));
                let eq = interp_pressure_zero_mean(m, &q);
                let n = self.n();
                let mut out = vec![0.0; 3 * n];
                for l in 0..n {
                    out[l] = -ef.x[l] + egq.x[l] - self.h_f.x[l] * j.x[l];
                    out[n + l] = -ef.y[l] + egq.y[l] - self.h_f.y[l] * j.y[l];
                    out[2 * n + l] = -eq.0[l] / dt - self.h_c.0[l] * pj.0[l];
                }
                for (c, &l0) in m.body.curves.iter().zip(&self.gauge) {
                    let nc = c.len() as f64;
                    out[2 * n + l0] = c.clone().map(|l| pj.0[l]).sum::<f64>() / nc;
                }
                out
            }
            _ => {
                let f = SurfaceVector::from_flat(y);
                let rf = m.reg_f(&f);
                let q = self.solve_l(&ops::divergence(&rf));
                let a = m.interp_f(&rf);
                let b = m.interp_f(&ops::gradient(&q));
                a.flatten().iter().zip(b.flatten()).map(|(a, b)| dt * (b - a)).collect()
            }
        }
    }

    pub fn schur_operator(&self) -> LinearOperator<'_> {
        let k = self.schur_dim();
        LinearOperator::new(k, k, move |y| self.schur_apply(y))
    }

    fn solve_schur(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        match (&self.lu, &self.schur) {
            (Some(lu), Some(s)) => {
                let b = DVector::from_column_slice(rhs);
                let mut x = lu.solve(&b).ok_or_else(|| Error::Singular("Schur complement".into()))?;
                let r = &b - s * &x;
                if let Some(dx) = lu.solve(&r) {
                    let cand = &x + dx;
                    if (&b - s * &cand).norm() < r.norm() {
                        x = cand;
                    }
                }
                Ok((x.as_slice().to_vec(), 1))
            }
            _ => {
                let op = self.schur_operator();
                bicgstab(&op, rhs, KRYLOV_TOL * 1e-2, 10 * self.schur_dim().max(10))
            }
        }
    }

    /// Advance one step.
    pub fn step(&self, state: &NsState) -> Result<(NsState, StepDiagnostics)> {
        let pr = self.problem;
        let m = &pr.markers;
        let g = pr.grid();
        let dt = self.config.dt;
        let r = momentum_rhs(state, &self.config, &pr.b1);
        let mut dr = ops::divergence(&r);
        dr.data.iter_mut().zip(&pr.b2.data).for_each(|(a, b)| *a = (*a - b) / dt);
        let p_star = self.solve_l(&dr);
        let mut v = r.clone();
        axpy(&mut v, -dt, &ops::gradient(&p_star));
        let n = self.n();
        let mut iterations = 0;
        let (mut p, jump_v, jump_p) = if n == 0 {
            (p_star, SurfaceVector::zeros(0), SurfaceScalar::zeros(0))
        } else {
            match self.config.formulation {
                Formulation::Composite => {
                    let ev = m.interp_f(&v);
                    let ep = interp_pressure_zero_mean(m, &p_star);
                    let mut rhs = vec![0.0; 3 * n];
                    for l in 0..n {
                        rhs[l] = pr.v_gamma.x[l] - ev.x[l];
                        rhs[n + l] = pr.v_gamma.y[l] - ev.y[l];
                        rhs[2 * n + l] = -ep.0[l];
                    }
                    for &l0 in &self.gauge {
                        rhs[2 * n + l0] = 0.0;
                    }
                    let (y, it) = self.solve_schur(&rhs)?;
                    iterations = it;
                    let (j, pj) = self.split(&y);
                    let (f, q) = self.pressure_correction(&j, &pj);
                    let p: Vec<f64> = p_star.data.iter().zip(&q.data).map(|(a, b)| a - b / dt).collect();
                    let p = CellField { grid: g, data: p };
                    v = r.clone();
                    axpy(&mut v, -1.0, &f);
                    axpy(&mut v, -dt, &ops::gradient(&p));
                    (p, j, pj)
                }
                _ => {
                    let ev = m.interp_f(&v);
                    let rhs: Vec<f64> = pr.v_gamma.flatten().iter().zip(ev.flatten()).map(|(a, b)| a - b).collect();
                    let (y, it) = self.solve_schur(&rhs)?;
                    iterations = it;
                    let f = SurfaceVector::from_flat(&y);
                    let rf = m.reg_f(&f);
                    let q = self.solve_l(&ops::divergence(&rf));
                    let p = CellField { grid: g, data: p_star.data.iter().zip(&q.data).map(|(a, b)| a - b).collect() };
                    v = r.clone();
                    axpy(&mut v, -dt, &rf);
                    axpy(&mut v, -dt, &ops::gradient(&p));
                    (p, f, SurfaceScalar::zeros(0))
                }
            }
        };
        let mean = p.sum() / g.len() as f64;
        p.data.iter_mut().for_each(|x| *x -= mean);
        if !v.is_finite() || !p.is_finite() {
            return Err(Error::NonFinite(format!("flow state at t = {}", state.t + dt)));
        }
        let next = NsState { v, p, t: state.t + dt, jump_v, jump_p };
        let mut d = self.diagnostics(&next);
        d.iterations = iterations;
        Ok((next, d))
    }

    /// Residuals of continuity, the velocity constraint and the pressure-jump
    /// relation for a state produced by this stepper.
    pub fn diagnostics(&self, s: &NsState) -> StepDiagnostics {
        let pr = self.problem;
        let m = &pr.markers;
        let g = pr.grid();
        let composite = self.config.formulation == Formulation::Composite && !m.is_empty();
        let vmax = s.v.max_abs().max(pr.v_gamma.max_abs());
        let mut div = ops::divergence(&s.v);
        if composite {
            let b12 = self.forcing_continuity(&s.jump_v);
            div.data.iter_mut().zip(&b12.data).for_each(|(a, b)| *a += b);
        }
        div.data.iter_mut().zip(&pr.b2.data).for_each(|(a, b)| *a -= b);
        let continuity = rel(div.max_abs(), vmax / g.dx.min(g.dy));
        let (mut no_slip, mut pressure_jump) = (0.0, 0.0);
        if !m.is_empty() {
            let ev = m.interp_f(&s.v);
            let mut worst = 0.0_f64;
            for l in 0..m.len() {
                let (mut ax, mut ay) = (ev.x[l] - pr.v_gamma.x[l], ev.y[l] - pr.v_gamma.y[l]);
                if composite {
                    ax -= self.h_f.x[l] * s.jump_v.x[l];
                    ay -= self.h_f.y[l] * s.jump_v.y[l];
                }
                worst = worst.max(ax.abs()).max(ay.abs());
            }
            no_slip = rel(worst, vmax);
            if composite {
                let ep = interp_pressure_zero_mean(m, &s.p);
                let worst = (0..m.len())
                    .filter(|l| !self.gauge.contains(l))
                    .map(|l| (ep.0[l] - self.h_c.0[l] * s.jump_p.0[l]).abs())
                    .fold(0.0, f64::max);
                pressure_jump = rel(worst, s.p.max_abs());
            }
        }
        StepDiagnostics { continuity, no_slip, pressure_jump, cfl: self.config.cfl(&g, s.v.max_abs()), iterations: 0 }
    }

    /// Full saddle operator acting on `(v, p, y)`, for dense verification.
    /// The gauge rows replace the pressure-jump rows of the first marker of
    /// each curve, and a mean-pressure row is appended.
    pub fn saddle_operator(&self) -> LinearOperator<'_> {
        let g = self.problem.grid();
        let (nf, nc, k) = (2 * g.len(), g.len(), self.schur_dim());
        let dt = self.config.dt;
        let m = &self.problem.markers;
        LinearOperator::new(nf + nc + k + 1, nf + nc + k, move |z| {
            let v = FaceField::from_flat(g, &z[..nf]);
            let p = CellField::from_flat(g, &z[nf..nf + nc]);
            let y = &z[nf + nc..];
            let mut mom = v.clone();
            axpy(&mut mom, dt, &ops::gradient(&p));
            let mut cont = ops::divergence(&v);
            let mut c1 = m.interp_f(&v);
            let mut c2 = vec![];
            match self.config.formulation {
                Formulation::Composite => {
                    let (j, pj) = self.split(y);
                    axpy(&mut mom, 1.0, &self.forcing_momentum(&j, &pj));
                    let b12 = self.forcing_continuity(&j);
                    cont.data.iter_mut().zip(&b12.data).for_each(|(a, b)| *a += b);
                    c1 = SurfaceVector {
                        x: (0..m.len()).map(|l| c1.x[l] - self.h_f.x[l] * j.x[l]).collect(),
                        y: (0..m.len()).map(|l| c1.y[l] - self.h_f.y[l] * j.y[l]).collect(),
                    };
                    let ep = interp_pressure_zero_mean(m, &p);
                    c2 = (0..m.len()).map(|l| ep.0[l] - self.h_c.0[l] * pj.0[l]).collect();
                    for (c, &l0) in m.body.curves.iter().zip(&self.gauge) {
                        c2[l0] = c.clone().map(|l| pj.0[l]).sum::<f64>() / c.len() as f64;
                    }
                }
                _ => {
                    axpy(&mut mom, dt, &m.reg_f(&SurfaceVector::from_flat(y)));
                }
            }
            let mut out = mom.flatten();
            out.extend(cont.data);
            out.extend(c1.flatten());
            out.extend(c2);
            out.push(p.sum() / nc as f64);
            out
        })
    }

    /// Right-hand side matching [`Stepper::saddle_operator`] for the step
    /// from `state`.
    pub fn saddle_rhs(&self, state: &NsState) -> Vec<f64> {
        let pr = self.problem;
        let mut out = momentum_rhs(state, &self.config, &pr.b1).flatten();
        out.extend(&pr.b2.data);
        out.extend(pr.v_gamma.flatten());
        if self.config.formulation == Formulation::Composite {
            out.extend(vec![0.0; self.n()]);
        }
        out.push(0.0);
        out
    }

    /// Stack a state into the unknown ordering of [`Stepper::saddle_operator`].
    pub fn saddle_unknowns(&self, s: &NsState) -> Vec<f64> {
        let mut z = s.v.flatten();
        z.extend(&s.p.data);
        z.extend(s.jump_v.flatten());
        if self.config.formulation == Formulation::Composite {
            z.extend(&s.jump_p.0);
        }
        z
    }
}

/// One composite step.
pub fn step_composite(state: &NsState, config: &NsConfig, problem: &NsProblem) -> Result<NsState> {
    let c = NsConfig { formulation: Formulation::Composite, ..*config };
    Ok(Stepper::new(problem, c)?.step(state)?.0)
}

/// One prototypical step.
pub fn step_prototypical(state: &NsState, config: &NsConfig, problem: &NsProblem) -> Result<NsState> {
    let c = NsConfig { formulation: Formulation::Prototypical, ..*config };
    Ok(Stepper::new(problem, c)?.step(state)?.0)
}

/// Record of a run towards steady state.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct History {
    pub steps: usize,
    /// `|v^{n+1} - v^n|_inf / (dt |v^n|_inf + eps)` per step.
    pub changes: Vec<f64>,
    pub max_continuity: f64,
    pub max_no_slip: f64,
    pub max_pressure_jump: f64,
    pub max_cfl: f64,
    pub warnings: Vec<String>,
}

/// Step until the relative state change drops below the steady tolerance.
pub fn run_to_steady(stepper: &Stepper, initial: NsState) -> Result<(NsState, History)> {
    let cfg = *stepper.config();
    let g = stepper.problem().grid();
    let mut h = History::default();
    let mut s = initial;
    for step in 1..=cfg.max_steps {
        let (next, d) = stepper.step(&s)?;
        let mut dv = 0.0_f64;
        for (a, b) in next.v.x.iter().zip(&s.v.x).chain(next.v.y.iter().zip(&s.v.y)) {
            dv = dv.max((a - b).abs());
        }
        let change = dv / (cfg.dt * s.v.max_abs() + 1e-300);
        h.steps = step;
        h.changes.push(change);
        h.max_continuity = h.max_continuity.max(d.continuity);
        h.max_no_slip = h.max_no_slip.max(d.no_slip);
        h.max_pressure_jump = h.max_pressure_jump.max(d.pressure_jump);
        if d.cfl > 0.5 && h.max_cfl <= 0.5 {
            h.warnings.push(format!("CFL {:.3} exceeds 0.5 at step {step} (dx = {})", d.cfl, g.dx));
        }
        h.max_cfl = h.max_cfl.max(d.cfl);
        s = next;
        if change < cfg.steady_tol {
            return Ok((s, h));
        }
    }
    Err(Error::MaxSteps(cfg.max_steps))
}

/// Dropped convective interface term for a composite of `v_plus` and
/// `v_minus`:
/// `I_DF(G_F H_F+ o (W+ - W-)) - D_D(H_D+ o H_D- o (I dv)^T o I dv)` with
/// `W = (I v)^T o I v` and `dv = v_plus - v_minus`.
pub fn convective_interface_term(ind: &IndicatorSet, v_plus: &FaceField, v_minus: &FaceField) -> Result<FaceField> {
    let w = |v: &FaceField| -> Result<TensorField> {
        let iv = ops::interp_f_to_d(v);
        iv.transpose().mul(&iv)
    };
    let dw = w(v_plus)?.sub(&w(v_minus)?)?;
    let a = ops::interp_d_to_f(&ops::face_gradient(&ind.hp_f).mul(&dw)?);
    let dv = v_plus.sub(v_minus)?;
    let b = ops::tensor_divergence(&ind.hp_d.mul(&ind.hm_d)?.mul(&w(&dv)?)?);
    a.sub(&b)
}

/// `(dx, |F_N|_inf)` for a unit circle on an `n x n` periodic window of
/// half width 2, with `v- = w(r) (1 - r^2)(-y, x)` inside and `v+ = -v- / 2`
/// outside, where `w = exp(-4 (r - 1)^2)` keeps the fields away from the
/// periodic seam. Both sides vanish on the circle.
pub fn convective_interface_sample(n: usize) -> Result<(f64, f64)> {
    let g = GridSpec::centered_square(n, 2.0)?;
    let b = circle_body([0.0, 0.0], 1.0, markers_for_ratio(1.0, 1.0, g.dx), Orientation::Outward)?;
    let m = Markers::new(g, Kernel::default(), b)?;
    let ind = build_indicator(&m, &PeriodicFft::new(&g)?, 1.0)?;
    let amp = |x: f64, y: f64| {
        let r2 = x * x + y * y;
        (1.0 - r2) * (-4.0 * (r2.sqrt() - 1.0).powi(2)).exp()
    };
    let vm = FaceField::from_fn(g, |x, y| -amp(x, y) * y, |x, y| amp(x, y) * x);
    let vp = vm.scale(-0.5);
    Ok((g.dx, convective_interface_term(&ind, &vp, &vm)?.max_abs()))
}

/// Inner cylinder radius of the Couette problem; the outer one is `1 / kappa`.
pub const COUETTE_KAPPA: f64 = 0.5;
/// Half width of the periodic Couette window.
pub const COUETTE_HALF_WIDTH: f64 = 2.67;

/// Azimuthal velocity of circular Couette flow between a cylinder of radius 1
/// rotating with unit rim speed and a fixed cylinder of radius `1 / kappa`,
/// with the inside in rigid rotation and the outside at rest.
pub fn couette_exact(r: f64, kappa: f64) -> f64 {
    let k2 = kappa * kappa;
    if r <= 1.0 {
        r
    } else if r <= 1.0 / kappa {
        k2 / (1.0 - k2) * (1.0 / (k2 * r) - r)
    } else {
        0.0
    }
}

/// Azimuthal normal-derivative jumps `(inner, outer)`, exterior minus
/// interior along the normals pointing out of the annulus.
pub fn couette_jumps(kappa: f64) -> (f64, f64) {
    let k2 = kappa * kappa;
    (-2.0 / (1.0 - k2), 2.0 * k2 / (1.0 - k2))
}

/// Exact Couette velocity sampled on the faces.
pub fn couette_velocity(grid: &GridSpec, kappa: f64) -> FaceField {
    let vel = move |x: f64, y: f64| {
        let r = (x * x + y * y).sqrt();
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let vt = couette_exact(r, kappa);
        [-vt * y / r, vt * x / r]
    };
    FaceField {
        grid: *grid,
        x: grid.sample(Space::Fx, |x, y| vel(x, y)[0]),
        y: grid.sample(Space::Fy, |x, y| vel(x, y)[1]),
    }
}

/// Couette problem on an `n x n` periodic window: curve 0 is the rotating
/// inner cylinder (normals inward), curve 1 the fixed outer one.
pub fn couette_problem(n: usize, ds_dx: f64) -> Result<NsProblem> {
    let g = GridSpec::centered_square(n, COUETTE_HALF_WIDTH)?;
    let ro = 1.0 / COUETTE_KAPPA;
    let mut inner = circle_body([0.0, 0.0], 1.0, markers_for_ratio(1.0, ds_dx, g.dx), Orientation::Inward)?;
    for (v, x) in inner.xdot.iter_mut().zip(&inner.x) {
        *v = [-x[1], x[0]];
    }
    let outer = circle_body([0.0, 0.0], ro, markers_for_ratio(ro, ds_dx, g.dx), Orientation::Outward)?;
    let body = inner.concat(&outer);
    let v_gamma = SurfaceVector {
        x: body.xdot.iter().map(|v| v[0]).collect(),
        y: body.xdot.iter().map(|v| v[1]).collect(),
    };
    let markers = Markers::new(g, Kernel::default(), body)?;
    NsProblem::new(markers, v_gamma)
}

/// Exact `[v^n]` at the Couette markers.
pub fn couette_exact_jump(markers: &Markers) -> SurfaceVector {
    let (ji, jo) = couette_jumps(COUETTE_KAPPA);
    let b = &markers.body;
    let mut out = SurfaceVector::zeros(b.len());
    for (ci, c) in b.curves.iter().enumerate() {
        let jv = if ci == 0 { ji } else { jo };
        for l in c.clone() {
            let [x, y] = b.x[l];
            let r = (x * x + y * y).sqrt();
            out.x[l] = -jv * y / r;
            out.y[l] = jv * x / r;
        }
    }
    out
}

/// Faces reached by the interface forcing: `I_CF I_FC R_F(1) != 0`.
pub fn velocity_support(markers: &Markers) -> (Vec<bool>, Vec<bool>) {
    let n = markers.len();
    let ones = SurfaceVector { x: vec![1.0; n], y: vec![1.0; n] };
    let f = ops::interp_c_to_f(&ops::interp_f_to_c(&markers.reg_f(&ones)));
    (f.x.iter().map(|&v| v != 0.0).collect(), f.y.iter().map(|&v| v != 0.0).collect())
}

/// Metadata stored with a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub grid: GridSpec,
    pub t: f64,
    pub config_hash: u64,
}

/// Write `v` and `p` as CSV rows `i,j,vx,vy,p` below a `#` metadata header.
pub fn write_checkpoint(state: &NsState, config: &NsConfig, w: &mut impl Write) -> Result<()> {
    let g = state.v.grid;
    writeln!(w, "# grid {} {} {} {} {} {}", g.nx, g.ny, g.dx, g.dy, g.origin[0], g.origin[1])?;
    writeln!(w, "# t {}", state.t)?;
    writeln!(w, "# config {:016x}", config.hash())?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(["i", "j", "vx", "vy", "p"]).map_err(|e| Error::Format(e.to_string()))?;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            cw.serialize((i, j, state.v.x[k], state.v.y[k], state.p.data[k]))
                .map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    cw.flush()?;
    Ok(())
}

/// Read a checkpoint written by [`write_checkpoint`]. Interface jumps are
/// not stored and come back empty.
pub fn read_checkpoint(mut r: impl BufRead) -> Result<(NsState, CheckpointMeta)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    let mut header = vec![];
    for _ in 0..3 {
        let mut line = String::new();
        r.read_line(&mut line)?;
        header.push(line.trim().to_string());
    }
    let field = |i: usize, key: &str| -> Result<Vec<String>> {
        let mut it = header[i].split_whitespace();
        if it.next() != Some("#") || it.next() != Some(key) {
            return Err(bad(&format!("missing {key} line")));
        }
        Ok(it.map(str::to_string).collect())
    };
    let gv = field(0, "grid")?;
    if gv.len() != 6 {
        return Err(bad("grid line needs 6 values"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s}")));
    let grid = GridSpec::new(
        gv[0].parse().map_err(|_| bad("nx"))?,
        gv[1].parse().map_err(|_| bad("ny"))?,
        num(&gv[2])?,
        num(&gv[3])?,
        [num(&gv[4])?, num(&gv[5])?],
    )?;
    let t = num(field(1, "t")?.first().ok_or_else(|| bad("t"))?)?;
    let hash = field(2, "config")?;
    let config_hash =
        u64::from_str_radix(hash.first().ok_or_else(|| bad("config"))?, 16).map_err(|_| bad("config hash"))?;
    let mut v = FaceField::zeros(grid);
    let mut p = CellField::zeros(grid);
    let mut seen = vec![false; grid.len()];
    let mut rd = csv::Reader::from_reader(r);
    for rec in rd.deserialize::<(usize, usize, f64, f64, f64)>() {
        let (i, j, vx, vy, pv) = rec.map_err(|e| Error::Format(e.to_string()))?;
        if i >= grid.nx || j >= grid.ny {
            return Err(bad(&format!("index ({i}, {j}) outside the grid")));
        }
        let k = grid.idx(i, j);
        v.x[k] = vx;
        v.y[k] = vy;
        p.data[k] = pv;
        seen[k] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(bad("missing rows"));
    }
    let state = NsState { v, p, t, jump_v: SurfaceVector::zeros(0), jump_p: SurfaceScalar::zeros(0) };
    Ok((state, CheckpointMeta { grid, t, config_hash }))
}
