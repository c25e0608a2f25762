use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ibcomposite::bench::{
    couette_conditioning, emit, emit_to, identity_suite, poisson2d_run, run_study, OutputFormat, StudyKind,
    StudyReport, StudySpec,
};
use ibcomposite::grid::GridSpec;
use ibcomposite::linsolve::{PoissonKind, SchurSolver};
use ibcomposite::poisson_ib::Formulation;

#[derive(Parser)]
#[command(name = "ibcomposite", version, about = "Composite-solution immersed boundary studies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// 1D Poisson convergence study.
    Poisson1d(Common),
    /// 2D Poisson convergence study for a circular interface.
    Poisson2d(Common),
    /// Circular Couette flow convergence study.
    Couette(Common),
    /// Discrete operator identity suite on random fields.
    Identities(Common),
    /// Schur complement condition numbers across marker spacings.
    Conditioning(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Grid sizes (cells per direction), comma separated.
    #[arg(long, value_delimiter = ',')]
    nx: Vec<usize>,
    /// Marker-to-grid spacing ratios, comma separated.
    #[arg(long = "ds-dx", value_delimiter = ',')]
    ds_dx: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    formulation: Vec<Formulation>,
    #[arg(long, value_enum, default_value = "lu")]
    schur: SchurSolver,
    #[arg(long, value_enum, default_value = "lgf")]
    poisson: PoissonKind,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    #[arg(long, default_value_t = 10.0)]
    re: f64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also compute Schur condition numbers.
    #[arg(long)]
    cond: bool,
    /// Exit nonzero when a convergence check fails.
    #[arg(long)]
    check: bool,
}

fn spec(kind: StudyKind, c: &Common) -> StudySpec {
    let mut s = StudySpec::new(kind);
    if !c.nx.is_empty() {
        s.grids = c.nx.clone();
    }
    if !c.ds_dx.is_empty() {
        s.ds_dx = c.ds_dx.clone();
    }
    if !c.formulation.is_empty() {
        s.formulations = c.formulation.clone();
    }
    s.schur = c.schur;
    s.poisson = c.poisson;
    s.re = c.re;
    s.dt = c.dt;
    s.jobs = c.jobs;
    s.want_cond = c.cond;
    s
}

fn write(report: &StudyReport, c: &Common) -> ibcomposite::Result<()> {
    match &c.out {
        Some(p) => emit(report, c.format, p),
        None => emit_to(report, c.format, std::io::stdout().lock()),
    }
}

/// Convergence checks that apply to a study's default configuration.
fn checks(kind: StudyKind, r: &StudyReport) -> Vec<(String, bool)> {
    let mut out = vec![];
    let mut want = |name: &str, v: Option<f64>, ok: &dyn Fn(f64) -> bool| {
        if let Some(v) = v {
            out.push((format!("{name} = {v:.3}"), ok(v)));
        }
    };
    use Formulation::*;
    match kind {
        StudyKind::Poisson1d => {
            want("composite masked slope", r.slope(Composite, None, "err_inf_masked"), &|s| s >= 1.9);
            want("prototypical global slope", r.slope(Prototypical, None, "err_inf_all"), &|s| (0.8..=1.2).contains(&s));
            want("prescribed masked slope", r.slope(Prescribed, None, "err_inf_masked"), &|s| s >= 1.9);
        }
        StudyKind::Poisson2d => {
            for d in [1.3, 0.7] {
                want(&format!("composite masked slope at {d}"), r.slope(Composite, Some(d), "err_inf_masked"), &|s| {
                    s >= 1.8
                });
                want(&format!("composite global slope at {d}"), r.slope(Composite, Some(d), "err_inf_all"), &|s| {
                    s >= 0.9
                });
            }
            want("prototypical global slope at 1.3", r.slope(Prototypical, Some(1.3), "err_inf_all"), &|s| {
                (0.8..=1.2).contains(&s)
            });
        }
        StudyKind::Couette => {
            for d in [0.7, 1.0, 1.3] {
                want(&format!("composite masked slope at {d}"), r.slope(Composite, Some(d), "err_inf_masked"), &|s| {
                    s >= 1.5
                });
                want(&format!("prototypical global slope at {d}"), r.slope(Prototypical, Some(d), "err_inf_all"), &|s| {
                    (0.8..=1.2).contains(&s)
                });
            }
        }
    }
    out
}

fn study(kind: StudyKind, c: &Common) -> ibcomposite::Result<bool> {
    let report = run_study(&spec(kind, c))?;
    write(&report, c)?;
    for f in &report.failures {
        eprintln!("run failed: {} {} n={} ds/dx={:?}: {}", f.problem, f.formulation.name(), f.n, f.ds_dx, f.error);
    }
    for s in &report.slopes {
        eprintln!("slope {} {} ds/dx={:?} {}: {:.3}", s.problem, s.formulation.name(), s.ds_dx, s.metric, s.slope);
    }
    let mut ok = report.failures.is_empty();
    if c.check {
        for (name, pass) in checks(kind, &report) {
            eprintln!("{} {name}", if pass { "PASS" } else { "FAIL" });
            ok &= pass;
        }
    }
    Ok(ok)
}

fn identities(c: &Common) -> ibcomposite::Result<bool> {
    let n = c.nx.first().copied().unwrap_or(32);
    let g = GridSpec::new(n, n, 1.0 / n as f64, 1.0 / n as f64, [0.0, 0.0])?;
    let mut ok = true;
    for (name, r) in identity_suite(g, 50, 1) {
        let pass = r <= 1e-12;
        ok &= pass;
        println!("{:<24} {r:.3e} {}", name, if pass { "ok" } else { "FAIL" });
    }
    Ok(ok || !c.check)
}

fn conditioning(c: &Common) -> ibcomposite::Result<bool> {
    let ratios = if c.ds_dx.is_empty() { vec![1.3, 0.7, 0.1] } else { c.ds_dx.clone() };
    let forms = if c.formulation.is_empty() {
        vec![Formulation::Composite, Formulation::Prototypical]
    } else {
        c.formulation.clone()
    };
    println!("problem,formulation,n,ds_dx,cond_S");
    for &f in &forms {
        for &d in &ratios {
            let n = c.nx.first().copied().unwrap_or(40);
            let (rec, _) = poisson2d_run(n, d, f, c.poisson, SchurSolver::Lu, true)?;
            println!("poisson2d,{},{n},{d},{:e}", f.name(), rec.cond_s.unwrap_or(f64::NAN));
        }
        for &d in ratios.iter().filter(|&&d| d >= 0.5) {
            let n = c.nx.get(1).copied().unwrap_or(32);
            println!("couette,{},{n},{d},{:e}", f.name(), couette_conditioning(n, d, f, c.re)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Poisson1d(c) => study(StudyKind::Poisson1d, c),
        Cmd::Poisson2d(c) => study(StudyKind::Poisson2d, c),
        Cmd::Couette(c) => study(StudyKind::Couette, c),
        Cmd::Identities(c) => identities(c),
        Cmd::Conditioning(c) => conditioning(c),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
