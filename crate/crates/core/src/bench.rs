//! Convergence and conditioning studies, the operator identity suite and
//! report emission.

use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{CellField, FaceField, Field, GridSpec, NodeField, TensorField};
use crate::linsolve::{condition_number, PoissonKind, SchurSolver};
use crate::ns_ib::{
    couette_exact_jump, couette_problem, couette_velocity, run_to_steady, velocity_support, History, NsConfig,
    NsState, Stepper, COUETTE_KAPPA,
};
use crate::ops;
use crate::poisson_ib::one_d::{solve_1d, Problem1d};
use crate::poisson_ib::{circle_exact_jump, circle_problem, exact_2d_circle, solve, Formulation, JUMP_1D};
use crate::{Error, Result};

/// Interface location of the one-dimensional problem.
pub const X_GAMMA_1D: f64 = 0.9;

/// CSV column order of [`RunRecord`].
pub const CSV_COLUMNS: [&str; 13] = [
    "problem",
    "formulation",
    "dx",
    "ds_dx",
    "n_markers",
    "err_inf_all",
    "err_inf_masked",
    "err_l2_all",
    "err_l2_masked",
    "forcing_err_inf",
    "cond_S",
    "steps",
    "runtime_s",
];

/// One solve of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub formulation: Formulation,
    pub dx: f64,
    pub ds_dx: Option<f64>,
    pub n_markers: usize,
    pub err_inf_all: f64,
    pub err_inf_masked: f64,
    pub err_l2_all: f64,
    pub err_l2_masked: f64,
    pub forcing_err_inf: Option<f64>,
    #[serde(rename = "cond_S")]
    pub cond_s: Option<f64>,
    pub steps: Option<usize>,
    pub runtime_s: f64,
}

/// A run that returned an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub problem: String,
    pub formulation: Formulation,
    pub n: usize,
    pub ds_dx: Option<f64>,
    pub error: String,
}

/// Least-squares log-log slope of one error metric along a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub problem: String,
    pub formulation: Formulation,
    pub ds_dx: Option<f64>,
    pub metric: String,
    pub slope: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    /// Poisson solver the study ran with.
    #[serde(default)]
    pub poisson: Option<PoissonKind>,
    pub records: Vec<RunRecord>,
    pub slopes: Vec<SlopeFit>,
    pub failures: Vec<FailedRun>,
}

impl StudyReport {
    pub fn slope(&self, formulation: Formulation, ds_dx: Option<f64>, metric: &str) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.formulation == formulation && s.ds_dx == ds_dx && s.metric == metric)
            .map(|s| s.slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Poisson1d,
    Poisson2d,
    Couette,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Poisson1d => "poisson1d",
            StudyKind::Poisson2d => "poisson2d",
            StudyKind::Couette => "couette",
        }
    }
}

/// Study descriptor. Runs are the product formulation x ratio x grid, in
/// that nesting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub kind: StudyKind,
    /// Cells per direction (points for the 1D problem).
    pub grids: Vec<usize>,
    /// Marker spacing ratios (ignored in 1D).
    pub ds_dx: Vec<f64>,
    pub formulations: Vec<Formulation>,
    pub poisson: PoissonKind,
    pub schur: SchurSolver,
    pub re: f64,
    /// Time step override for the flow problem.
    pub dt: Option<f64>,
    /// Compute Schur condition numbers.
    pub want_cond: bool,
    pub jobs: usize,
}

impl StudySpec {
    pub fn new(kind: StudyKind) -> Self {
        let (grids, ds_dx) = match kind {
            StudyKind::Poisson1d => (vec![16, 32, 64, 128, 256], vec![]),
            StudyKind::Poisson2d => (vec![20, 40, 80], vec![1.3, 0.7, 0.1]),
            StudyKind::Couette => (vec![32, 64, 128], vec![1.0]),
        };
        let formulations = match kind {
            StudyKind::Poisson1d => vec![Formulation::Composite, Formulation::Prototypical, Formulation::Prescribed],
            _ => vec![Formulation::Composite, Formulation::Prototypical],
        };
        StudySpec {
            kind,
            grids,
            ds_dx,
            formulations,
            poisson: PoissonKind::Lgf,
            schur: SchurSolver::Lu,
            re: 10.0,
            dt: None,
            want_cond: false,
            jobs: 1,
        }
    }
}

/// Relative errors `(u - u_exact) / |u_exact|_inf` over the points where
/// `mask` is true (all points when `None`): `(max norm, root mean square)`.
pub fn relative_error(u: &[f64], exact: &[f64], mask: Option<&[bool]>) -> Result<(f64, f64)> {
    if u.len() != exact.len() || mask.is_some_and(|m| m.len() != u.len()) {
        return Err(Error::SpaceMismatch("error fields differ in length".into()));
    }
    let norm = exact.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if norm == 0.0 {
        return Err(Error::InvalidArgument("exact solution is identically zero".into()));
    }
    let (mut inf, mut sq, mut cnt) = (0.0_f64, 0.0, 0usize);
    for i in 0..u.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let e = (u[i] - exact[i]) / norm;
        inf = inf.max(e.abs());
        sq += e * e;
        cnt += 1;
    }
    Ok((inf, if cnt > 0 { (sq / cnt as f64).sqrt() } else { 0.0 }))
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn fit_slope(h: &[f64], e: &[f64]) -> Result<f64> {
    if h.len() != e.len() || h.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points of equal count".into()));
    }
    if h.iter().chain(e).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("slopes need positive spacings and errors".into()));
    }
    let n = h.len() as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Number of local extrema of a closed-curve profile.
pub fn profile_extrema(f: &[f64]) -> usize {
    let n = f.len();
    (0..n)
        .filter(|&l| {
            let a = f[l] - f[(l + n - 1) % n];
            let b = f[(l + 1) % n] - f[l];
            a * b < 0.0
        })
        .count()
}

/// 1D Poisson run together with its solution.
pub fn poisson1d_run(n: usize, formulation: Formulation) -> Result<(RunRecord, crate::poisson_ib::one_d::Solution1d)> {
    let t0 = Instant::now();
    let p = Problem1d::new(n, X_GAMMA_1D)?;
    let s = solve_1d(&p, formulation)?;
    let ex = p.exact();
    let mask: Vec<bool> = s.support.iter().map(|b| !b).collect();
    let (ia, la) = relative_error(&s.u, &ex, None)?;
    let (im, lm) = relative_error(&s.u, &ex, Some(&mask))?;
    let rec = RunRecord {
        problem: "poisson1d".into(),
        formulation,
        dx: p.h(),
        ds_dx: None,
        n_markers: 1,
        err_inf_all: ia,
        err_inf_masked: im,
        err_l2_all: la,
        err_l2_masked: lm,
        forcing_err_inf: Some((s.forcing - JUMP_1D).abs()),
        cond_s: None,
        steps: None,
        runtime_s: t0.elapsed().as_secs_f64(),
    };
    Ok((rec, s))
}

/// Extra outputs of a 2D Poisson run.
#[derive(Debug, Clone)]
pub struct Poisson2dDetail {
    pub forcing: Vec<f64>,
    pub exact_forcing: Vec<f64>,
    pub block_residual: f64,
}

/// 2D circle Poisson run.
pub fn poisson2d_run(
    n: usize,
    ds_dx: f64,
    formulation: Formulation,
    kind: PoissonKind,
    schur: SchurSolver,
    want_cond: bool,
) -> Result<(RunRecord, Poisson2dDetail)> {
    let t0 = Instant::now();
    let mut p = circle_problem(n, ds_dx, kind)?;
    p.schur = schur;
    p.want_cond = want_cond;
    let je = circle_exact_jump(&p.markers);
    let s = solve(&p, formulation, Some(&je))?;
    let g = p.grid();
    let ex: Vec<f64> = g.x_c().iter().map(|&x| exact_2d_circle(x, 1.0)).collect();
    let mask: Vec<bool> = p.markers.cell_support().iter().map(|b| !b).collect();
    let (ia, la) = relative_error(&s.u.data, &ex, None)?;
    let (im, lm) = relative_error(&s.u.data, &ex, Some(&mask))?;
    let ferr = s.forcing.0.iter().zip(&je.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ds = p.markers.body.ds.first().copied().unwrap_or(0.0);
    let rec = RunRecord {
        problem: "poisson2d".into(),
        formulation,
        dx: g.dx,
        ds_dx: Some(ds / g.dx),
        n_markers: p.markers.len(),
        err_inf_all: ia,
        err_inf_masked: im,
        err_l2_all: la,
        err_l2_masked: lm,
        forcing_err_inf: Some(ferr),
        cond_s: s.cond_s,
        steps: None,
        runtime_s: t0.elapsed().as_secs_f64(),
    };
    Ok((rec, Poisson2dDetail { forcing: s.forcing.0, exact_forcing: je.0, block_residual: s.block_residual }))
}

/// Couette run to steady state. The forcing error is measured on the inner
/// cylinder; the prototypical force is scaled by `Re` to compare with the
/// velocity-gradient jump.
pub fn couette_run(
    n: usize,
    ds_dx: f64,
    formulation: Formulation,
    re: f64,
    dt: Option<f64>,
    schur: SchurSolver,
    want_cond: bool,
) -> Result<(RunRecord, History)> {
    let t0 = Instant::now();
    let pr = couette_problem(n, ds_dx)?;
    let g = pr.grid();
    let mut cfg = NsConfig::new(&g, re, 1.0, formulation);
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    cfg.schur = schur;
    let st = Stepper::new(&pr, cfg)?;
    let cond = match (want_cond, st.schur_matrix()) {
        (true, Some(s)) => Some(condition_number(s)?),
        _ => None,
    };
    let (s, hist) = run_to_steady(&st, NsState::rest(g, pr.markers.len()))?;
    let ex = couette_velocity(&g, COUETTE_KAPPA);
    let (mx, my) = velocity_support(&pr.markers);
    let mask: Vec<bool> = mx.iter().chain(&my).map(|b| !b).collect();
    let (u, e) = (s.v.flatten(), ex.flatten());
    let (ia, la) = relative_error(&u, &e, None)?;
    let (im, lm) = relative_error(&u, &e, Some(&mask))?;
    let je = couette_exact_jump(&pr.markers);
    let scale = if formulation == Formulation::Composite { 1.0 } else { re };
    let ferr = pr.markers.body.curves[0]
        .clone()
        .map(|l| (scale * s.jump_v.x[l] - je.x[l]).abs().max((scale * s.jump_v.y[l] - je.y[l]).abs()))
        .fold(0.0, f64::max);
    let ds = pr.markers.body.ds.first().copied().unwrap_or(0.0);
    let rec = RunRecord {
        problem: "couette".into(),
        formulation,
        dx: g.dx,
        ds_dx: Some(ds / g.dx),
        n_markers: pr.markers.len(),
        err_inf_all: ia,
        err_inf_masked: im,
        err_l2_all: la,
        err_l2_masked: lm,
        forcing_err_inf: Some(ferr),
        cond_s: cond,
        steps: Some(hist.steps),
        runtime_s: t0.elapsed().as_secs_f64(),
    };
    Ok((rec, hist))
}

/// Schur condition number of the Couette system without time stepping.
pub fn couette_conditioning(n: usize, ds_dx: f64, formulation: Formulation, re: f64) -> Result<f64> {
    let pr = couette_problem(n, ds_dx)?;
    let cfg = NsConfig::new(&pr.grid(), re, 1.0, formulation);
    let st = Stepper::new(&pr, cfg)?;
    condition_number(st.schur_matrix().ok_or_else(|| Error::Singular("no Schur matrix".into()))?)
}

struct Task {
    formulation: Formulation,
    ds_dx: Option<f64>,
    n: usize,
}

fn run_task(spec: &StudySpec, t: &Task) -> Result<RunRecord> {
    match spec.kind {
        StudyKind::Poisson1d => poisson1d_run(t.n, t.formulation).map(|r| r.0),
        StudyKind::Poisson2d => poisson2d_run(
            t.n,
            t.ds_dx.unwrap_or(1.0),
            t.formulation,
            spec.poisson,
            spec.schur,
            spec.want_cond,
        )
        .map(|r| r.0),
        StudyKind::Couette => {
            couette_run(t.n, t.ds_dx.unwrap_or(1.0), t.formulation, spec.re, spec.dt, spec.schur, spec.want_cond)
                .map(|r| r.0)
        }
    }
}

/// Run every solve of a study on up to `jobs` threads. Failed runs are
/// recorded and the sweep continues; records keep descriptor order.
pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    if spec.grids.is_empty() {
        return Err(Error::InvalidArgument("study needs at least one grid".into()));
    }
    if spec.formulations.is_empty() {
        return Err(Error::InvalidArgument("study needs at least one formulation".into()));
    }
    let ratios: Vec<Option<f64>> = match spec.kind {
        StudyKind::Poisson1d => vec![None],
        _ if spec.ds_dx.is_empty() => return Err(Error::InvalidArgument("study needs at least one ds/dx".into())),
        _ => spec.ds_dx.iter().map(|&r| Some(r)).collect(),
    };
    let mut tasks = vec![];
    for &formulation in &spec.formulations {
        for &ds_dx in &ratios {
            for &n in &spec.grids {
                tasks.push(Task { formulation, ds_dx, n });
            }
        }
    }
    let results: Mutex<Vec<Option<Result<RunRecord>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|sc| {
        for _ in 0..spec.jobs.clamp(1, tasks.len()) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                let r = run_task(spec, &tasks[i]);
                results.lock().expect("poisoned")[i] = Some(r);
            });
        }
    });
    let mut report = StudyReport { poisson: Some(spec.poisson), ..StudyReport::default() };
    let mut done: Vec<(usize, usize)> = vec![];
    for (i, (t, r)) in tasks.iter().zip(results.into_inner().expect("poisoned")).enumerate() {
        match r.expect("every task ran") {
            Ok(rec) => {
                done.push((i, report.records.len()));
                report.records.push(rec);
            }
            Err(e) => report.failures.push(FailedRun {
                problem: spec.kind.name().into(),
                formulation: t.formulation,
                n: t.n,
                ds_dx: t.ds_dx,
                error: e.to_string(),
            }),
        }
    }
    for &formulation in &spec.formulations {
        for &ds_dx in &ratios {
            let series: Vec<&RunRecord> = done
                .iter()
                .filter(|(i, _)| tasks[*i].formulation == formulation && tasks[*i].ds_dx == ds_dx)
                .map(|(_, k)| &report.records[*k])
                .collect();
            if series.len() < 3 {
                continue;
            }
            let h: Vec<f64> = series.iter().map(|r| r.dx).collect();
            let metrics: [(&str, fn(&RunRecord) -> Option<f64>); 5] = [
                ("err_inf_all", |r| Some(r.err_inf_all)),
                ("err_inf_masked", |r| Some(r.err_inf_masked)),
                ("err_l2_all", |r| Some(r.err_l2_all)),
                ("err_l2_masked", |r| Some(r.err_l2_masked)),
                ("forcing_err_inf", |r| r.forcing_err_inf),
            ];
            let mut fits = vec![];
            for (name, get) in metrics {
                let e: Option<Vec<f64>> = series.iter().map(|r| get(r)).collect();
                if let Some(Ok(slope)) = e.map(|e| fit_slope(&h, &e)) {
                    fits.push(SlopeFit {
                        problem: spec.kind.name().into(),
                        formulation,
                        ds_dx,
                        metric: name.into(),
                        slope,
                    });
                }
            }
            report.slopes.extend(fits);
        }
    }
    Ok(report)
}

/// Output formats of [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::InvalidArgument(format!("unknown output format '{s}'"))),
        }
    }
}

/// Write the records as CSV (header always present) or the whole report as
/// JSON.
pub fn emit_to(report: &StudyReport, format: OutputFormat, w: impl std::io::Write) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(w);
            let fe = |e: csv::Error| Error::Format(e.to_string());
            cw.write_record(CSV_COLUMNS).map_err(fe)?;
            for r in &report.records {
                cw.serialize(r).map_err(fe)?;
            }
            cw.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(w, report).map_err(|e| Error::Format(e.to_string()))?;
        }
    }
    Ok(())
}

pub fn emit(report: &StudyReport, format: OutputFormat, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    emit_to(report, format, std::io::BufWriter::new(f))
}

/// Read records written by [`emit`] in CSV form.
pub fn read_csv(r: impl std::io::Read) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let hdr = rd.headers().map_err(|e| Error::Format(e.to_string()))?;
    if hdr.iter().ne(CSV_COLUMNS) {
        return Err(Error::Format("unexpected CSV header".into()));
    }
    rd.deserialize().map(|r| r.map_err(|e| Error::Format(e.to_string()))).collect()
}

pub fn read_json(r: impl std::io::Read) -> Result<StudyReport> {
    serde_json::from_reader(r).map_err(|e| Error::Format(e.to_string()))
}

/// Random fields for the operator identity suite.
#[derive(Debug, Clone)]
pub struct IdentityFields {
    pub s1: CellField,
    pub s2: CellField,
    /// Indicator-like cell field; its complement is `1 - h`.
    pub h: CellField,
    pub v1: FaceField,
    pub v2: FaceField,
    pub t1: TensorField,
    pub t2: TensorField,
    pub w: NodeField,
}

impl IdentityFields {
    pub fn random(grid: GridSpec, rng: &mut impl Rng) -> Self {
        let mut f = |k: usize| -> Vec<f64> { (0..k * grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        IdentityFields {
            s1: CellField::from_flat(grid, &f(1)),
            s2: CellField::from_flat(grid, &f(1)),
            h: CellField::from_flat(grid, &f(1)).map(|v| 0.5 * (v + 1.0)),
            v1: FaceField::from_flat(grid, &f(2)),
            v2: FaceField::from_flat(grid, &f(2)),
            t1: TensorField::from_flat(grid, &f(4)),
            t2: TensorField::from_flat(grid, &f(4)),
            w: NodeField::from_flat(grid, &f(1)),
        }
    }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn sum<F: Field>(fs: &[F]) -> F {
    let mut out = fs[0].clone();
    for f in &fs[1..] {
        out = out.add(f).expect("same grid");
    }
    out
}

fn m<F: Field>(a: &F, b: &F) -> F {
    a.mul(b).expect("same grid")
}

fn d<F: Field>(a: &F, b: &F) -> F {
    a.sub(b).expect("same grid")
}

/// Residuals of the discrete vector-calculus identities, each relative to
/// the larger side (at least 1).
pub fn identity_residuals(f: &IdentityFields) -> Vec<(&'static str, f64)> {
    use ops::*;
    let g = f.s1.grid;
    let mut out = vec![];
    let mut chk = |name: &'static str, a: Vec<f64>, b: Vec<f64>| out.push((name, rel_diff(&a, &b)));
    let (s1, s2, v1, v2, t1, t2) = (&f.s1, &f.s2, &f.v1, &f.v2, &f.t1, &f.t2);
    let qf = quarter_spacing_sq_face(&g);
    let qd = quarter_spacing_sq_tensor(&g);

    chk("D G = L", divergence(&gradient(s1)).data, laplacian_center(s1).data);
    chk("D_D G_F = L_F", tensor_divergence(&face_gradient(v1)).flatten(), laplacian_face(v1).flatten());
    chk("D C = 0", divergence(&curl(&f.w)).data, vec![0.0; g.len()]);
    chk("C^T G = 0", cocurl(&gradient(s1)).data, vec![0.0; g.len()]);
    chk("L_E = -C^T C", laplacian_node(&f.w).data, cocurl(&curl(&f.w)).scale(-1.0).data);
    chk(
        "I_CF(s1 s2)",
        interp_c_to_f(&m(s1, s2)).flatten(),
        sum(&[m(&interp_c_to_f(s1), &interp_c_to_f(s2)), m(&qf, &m(&gradient(s1), &gradient(s2)))]).flatten(),
    );
    chk(
        "I_FD(v1 v2)",
        interp_f_to_d(&m(v1, v2)).flatten(),
        sum(&[m(&interp_f_to_d(v1), &interp_f_to_d(v2)), m(&qd, &m(&face_gradient(v1), &face_gradient(v2)))])
            .flatten(),
    );
    chk(
        "G(s1 s2)",
        gradient(&m(s1, s2)).flatten(),
        sum(&[m(&interp_c_to_f(s1), &gradient(s2)), m(&interp_c_to_f(s2), &gradient(s1))]).flatten(),
    );
    let s1f = interp_c_to_f(s1);
    chk(
        "G_F(s v)",
        face_gradient(&m(&s1f, v1)).flatten(),
        sum(&[m(&interp_f_to_d(&s1f), &face_gradient(v1)), m(&interp_f_to_d(v1), &face_gradient(&s1f))]).flatten(),
    );
    chk(
        "D(s v)",
        divergence(&m(&s1f, v1)).data,
        sum(&[interp_f_to_c(&m(v1, &gradient(s1))), m(s1, &divergence(v1))]).data,
    );
    chk(
        "D_D(s T)",
        tensor_divergence(&m(&interp_f_to_d(&s1f), t1)).flatten(),
        sum(&[interp_d_to_f(&m(t1, &face_gradient(&s1f))), m(&s1f, &tensor_divergence(t1))]).flatten(),
    );
    chk("I_FC G = D I_CF", interp_f_to_c(&gradient(s1)).data, divergence(&s1f).data);
    chk("G_F I_CF = (I_FD G)^T", face_gradient(&s1f).flatten(), interp_f_to_d(&gradient(s1)).transpose().flatten());

    // composite fields
    let hp = &f.h;
    let hm = hp.map(|v| 1.0 - v);
    let (hpf, hmf) = (interp_c_to_f(hp), interp_c_to_f(&hm));
    let (hpd, hmd) = (interp_f_to_d(&hpf), interp_f_to_d(&hmf));
    chk("H_D symmetric", hpd.flatten(), hpd.transpose().flatten());
    let sc = sum(&[m(hp, s1), m(&hm, s2)]);
    let vc = sum(&[m(&hpf, v1), m(&hmf, v2)]);
    let tc = sum(&[m(&hpd, t1), m(&hmd, t2)]);
    let gh = gradient(hp);
    let gfh = face_gradient(&hpf);
    chk(
        "G composite",
        gradient(&sc).flatten(),
        sum(&[m(&hpf, &gradient(s1)), m(&hmf, &gradient(s2)), m(&gh, &interp_c_to_f(&d(s1, s2)))]).flatten(),
    );
    chk(
        "G_F composite",
        face_gradient(&vc).flatten(),
        sum(&[m(&hpd, &face_gradient(v1)), m(&hmd, &face_gradient(v2)), m(&gfh, &interp_f_to_d(&d(v1, v2)))])
            .flatten(),
    );
    chk(
        "D composite",
        divergence(&vc).data,
        sum(&[m(hp, &divergence(v1)), m(&hm, &divergence(v2)), interp_f_to_c(&m(&gh, &d(v1, v2)))]).data,
    );
    chk(
        "D_D composite",
        tensor_divergence(&tc).flatten(),
        sum(&[
            m(&hpf, &tensor_divergence(t1)),
            m(&hmf, &tensor_divergence(t2)),
            interp_d_to_f(&m(&gfh, &d(t1, t2))),
        ])
        .flatten(),
    );
    chk(
        "L composite",
        laplacian_center(&sc).data,
        sum(&[
            m(hp, &laplacian_center(s1)),
            m(&hm, &laplacian_center(s2)),
            interp_f_to_c(&m(&gh, &d(&gradient(s1), &gradient(s2)))),
            divergence(&m(&gh, &interp_c_to_f(&d(s1, s2)))),
        ])
        .data,
    );
    let ght = interp_f_to_d(&gh).transpose();
    chk(
        "L_F composite",
        laplacian_face(&vc).flatten(),
        sum(&[
            m(&hpf, &laplacian_face(v1)),
            m(&hmf, &laplacian_face(v2)),
            interp_d_to_f(&m(&ght, &d(&face_gradient(v1), &face_gradient(v2)))),
            tensor_divergence(&m(&ght, &interp_f_to_d(&d(v1, v2)))),
        ])
        .flatten(),
    );
    let outer = |v: &FaceField| {
        let iv = interp_f_to_d(v);
        m(&iv.transpose(), &iv)
    };
    let x = m(&qd, &m(&gfh, &d(&face_gradient(v1), &face_gradient(v2))));
    let ivc = interp_f_to_d(&vc);
    chk(
        "N composite",
        convective(&vc).flatten(),
        sum(&[
            m(&hpf, &convective(v1)),
            m(&hmf, &convective(v2)),
            interp_d_to_f(&m(&gfh, &d(&outer(v1), &outer(v2)))),
            tensor_divergence(&m(&m(&hpd, &hmd), &outer(&d(v1, v2)))).scale(-1.0),
            tensor_divergence(&m(&ivc.transpose(), &x)),
            tensor_divergence(&m(&ivc, &x.transpose())),
            tensor_divergence(&m(&x.transpose(), &x)).scale(-1.0),
        ])
        .flatten(),
    );
    out
}

/// Worst residual of each identity over `count` random field sets.
pub fn identity_suite(grid: GridSpec, count: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Vec<(&'static str, f64)> = vec![];
    for _ in 0..count {
        let r = identity_residuals(&IdentityFields::random(grid, &mut rng));
        if worst.is_empty() {
            worst = r;
        } else {
            for (w, (_, v)) in worst.iter_mut().zip(r) {
                w.1 = w.1.max(v);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        let ex = [1.0, -2.0, 0.5];
        assert_eq!(relative_error(&ex, &ex, None).unwrap(), (0.0, 0.0));
        let shifted: Vec<f64> = ex.iter().map(|v| v + 0.3).collect();
        let (inf, l2) = relative_error(&shifted, &ex, None).unwrap();
        assert!((inf - 0.15).abs() < 1e-15 && (l2 - 0.15).abs() < 1e-15);
        let (inf, _) = relative_error(&[1.0, 0.0, 0.5], &ex, Some(&[true, false, true])).unwrap();
        assert_eq!(inf, 0.0);
        assert!(relative_error(&ex, &[0.0; 3], None).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((fit_slope(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_slope(&h, &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn extrema_of_cosine() {
        let f: Vec<f64> = (0..100).map(|l| (l as f64 * 0.0628318).cos()).collect();
        assert_eq!(profile_extrema(&f), 2);
        let saw: Vec<f64> = (0..10).map(|l| if l % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(profile_extrema(&saw), 10);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert!("xml".parse::<OutputFormat>().is_err());
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = vec![];
        emit_to(&StudyReport::default(), OutputFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn empty_grid_list_is_an_error() {
        let mut s = StudySpec::new(StudyKind::Poisson1d);
        s.grids.clear();
        assert!(run_study(&s).is_err());
    }

    #[test]
    fn identities_hold_on_small_grid() {
        let g = GridSpec::new(8, 6, 0.7, 0.45, [0.0, 0.0]).unwrap();
        for (name, r) in identity_suite(g, 3, 5) {
            assert!(r <= 1e-12, "{name}: {r}");
        }
    }
}
