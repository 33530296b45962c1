//! Command-line front end: parses arguments, loads the model and spec
//! files, dispatches to the library, and writes one tabular report per run.
//!
//! Exit codes: 0 when every verdict passes, 1 when a verdict fails, 2 on
//! malformed input or usage errors.

use crate::config::{self, MomentKind, SpecFile};
use crate::error::{Error, Result};
use crate::model::checks::{
    check_04, check_excessive, check_fin1, check_m_excessive, check_resolvent, CheckReport,
    CompactSet,
};
use crate::model::io::load_model;
use crate::model::{Model, Point};
use crate::moments::{self, MomentSpec, TestFunction};
use crate::report::{Format, Report};
use crate::simulate::invariance::invariance_test;
use crate::simulate::sampler::{estimate_mu_product, estimate_nu_product};
use crate::subordination::{check_domination, convergence_table};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Format {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "loopkit",
    about = "Loop-measure computations for transient Markov models",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Model file (JSON).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// Run-spec file (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,

    /// Master random seed.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Monte Carlo sample count.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: usize,

    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Suppress the timestamp header line.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the kernel-identity and assumption suite on a model.
    Check,
    /// Evaluate analytic moment formulas.
    Moments,
    /// Compare Monte Carlo loop estimates against analytic moments.
    Simulate,
    /// Sweep the subordination parameter and report convergence.
    Subordination,
    /// Statistical test of loop-rotation invariance.
    Invariance,
}

/// Runs a parsed invocation; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(report_pass) => {
            if report_pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(k) = threads {
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

fn execute(cli: &Cli) -> Result<bool> {
    configure_threads(cli.threads);
    let model_path = cli
        .model
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--model is required".into()))?;
    let bundle = load_model(model_path)?;
    let spec = match &cli.spec {
        Some(p) => config::load_spec(p)?,
        None => SpecFile::default(),
    };
    let (mut report, pass) = match cli.command {
        Command::Check => cmd_check(cli, &bundle.model, &spec)?,
        Command::Moments => cmd_moments(cli, &bundle.model, &spec)?,
        Command::Simulate => cmd_simulate(cli, &bundle.model, &spec)?,
        Command::Subordination => cmd_subordination(cli, &bundle.model, &spec)?,
        Command::Invariance => cmd_invariance(cli, &bundle.model, &spec)?,
    };
    report.add_header("model", &model_path.display().to_string());
    if let Some(p) = &cli.spec {
        report.add_header("spec", &p.display().to_string());
    }
    report.write(cli.out.as_deref(), cli.format.into())?;
    Ok(pass)
}

const CHECK_COLUMNS: [&str; 5] = ["name", "value", "tolerance", "pass", "detail"];

fn push_check(report: &mut Report, c: &CheckReport, pass: &mut bool) {
    *pass &= c.pass;
    report.push_row(vec![
        c.name.as_str().into(),
        c.value.into(),
        c.tolerance.into(),
        c.pass.into(),
        c.detail.as_str().into(),
    ]);
}

fn cmd_check(cli: &Cli, model: &Model, spec: &SpecFile) -> Result<(Report, bool)> {
    let tol_chain = spec.check.clone().unwrap_or_default().tolerance_or_default();
    let mut report = Report::new("check", cli.seed, !cli.no_timestamp, &CHECK_COLUMNS);
    let mut pass = true;
    match model {
        Model::FiniteChain(chain) => {
            let n = chain.len();
            let pairs: Vec<(Point, Point)> = (0..n)
                .flat_map(|x| (0..n).filter(move |&y| y != x).map(move |y| (Point::Id(x), Point::Id(y))))
                .collect();
            for &(a, b) in &[(0.0, 0.5), (0.5, 1.0), (1.0, 2.0), (0.3, 1.7), (2.0, 4.0)] {
                let c = check_resolvent(model, a, b, &pairs, tol_chain)?;
                push_check(&mut report, &c, &mut pass);
            }
            let times = [0.1, 0.5, 1.0, 3.0];
            push_check(&mut report, &check_excessive(chain, &times)?, &mut pass);
            push_check(&mut report, &check_m_excessive(chain, &times)?, &mut pass);
            let compact = CompactSet::States((0..n).collect());
            let fin1 = check_fin1(model, &compact)?;
            pass &= fin1.finite;
            report.push_row(vec![
                fin1.name.as_str().into(),
                fin1.value.into(),
                f64::INFINITY.into(),
                fin1.finite.into(),
                fin1.detail.as_str().into(),
            ]);
            let c04 = check_04(model, 0.5, &compact)?;
            pass &= c04.finite;
            report.push_row(vec![
                c04.name.as_str().into(),
                c04.value.into(),
                f64::INFINITY.into(),
                c04.finite.into(),
                c04.detail.as_str().into(),
            ]);
            let dom = check_domination(model, 4.0, &[0.0, 0.5, 1.0, 2.0], &pairs, tol_chain)?;
            push_check(&mut report, &dom, &mut pass);
        }
        _ => {
            let bm = match model {
                Model::KilledBm(bm) => bm,
                _ => {
                    return Err(Error::InvalidInput(
                        "check supports finite chains and killed Brownian models".into(),
                    ))
                }
            };
            let b = bm.quad_box().clone();
            let c = b.center();
            let step = 0.2 * (b.0[0].1 - b.0[0].0);
            let mut shifted = c.clone();
            shifted[0] += step;
            let pairs = vec![(Point::coord(&c), Point::coord(&shifted))];
            for &(a, bb) in &[(0.0, 1.0), (0.5, 2.0)] {
                let cres = check_resolvent(model, a, bb, &pairs, 1e-6)?;
                push_check(&mut report, &cres, &mut pass);
            }
            let fin1 = check_fin1(model, &CompactSet::Box(b.clone()))?;
            pass &= fin1.finite;
            report.push_row(vec![
                fin1.name.as_str().into(),
                fin1.value.into(),
                f64::INFINITY.into(),
                fin1.finite.into(),
                fin1.detail.as_str().into(),
            ]);
            let c04 = check_04(model, 0.5, &CompactSet::Box(b))?;
            pass &= c04.finite;
            report.push_row(vec![
                c04.name.as_str().into(),
                c04.value.into(),
                f64::INFINITY.into(),
                c04.finite.into(),
                c04.detail.as_str().into(),
            ]);
        }
    }
    Ok((report, pass))
}

fn kind_name(kind: MomentKind) -> &'static str {
    match kind {
        MomentKind::Mu => "mu",
        MomentKind::OrderedMu => "ordered_mu",
        MomentKind::Nu => "nu",
        MomentKind::QzzOrdered => "qzz_ordered",
        MomentKind::QzzFull => "qzz_full",
    }
}

fn cmd_moments(cli: &Cli, model: &Model, spec: &SpecFile) -> Result<(Report, bool)> {
    let section = spec
        .moments
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spec file has no moments section".into()))?;
    let functions: Vec<TestFunction> = section
        .functions
        .iter()
        .map(|f| f.resolve(model))
        .collect::<Result<_>>()?;
    let root = section.root.as_ref().map(|r| r.resolve(model)).transpose()?;
    let mspec = MomentSpec {
        functions: functions.clone(),
        regime: section.regime,
        alpha: section.alpha,
        root: root.clone(),
    };
    let mut report = Report::new(
        "moments",
        cli.seed,
        !cli.no_timestamp,
        &["kind", "k", "alpha", "value", "error_estimate", "truncated"],
    );
    for &kind in &section.kinds {
        let value = match kind {
            MomentKind::Mu => moments::mu_moment(model, &mspec)?,
            MomentKind::OrderedMu => moments::ordered_mu_moment(model, &functions)?,
            MomentKind::Nu => moments::nu_moment(model, &mspec)?,
            MomentKind::QzzOrdered | MomentKind::QzzFull => {
                let z = root.clone().ok_or_else(|| {
                    Error::InvalidInput("rooted moments need a root in the spec".into())
                })?;
                moments::qzz_moment(
                    model,
                    &z,
                    &functions,
                    section.alpha,
                    kind == MomentKind::QzzOrdered,
                )?
            }
        };
        report.push_row(vec![
            kind_name(kind).into(),
            (functions.len() as i64).into(),
            section.alpha.into(),
            value.value.into(),
            value.error_estimate.into(),
            value.truncated.into(),
        ]);
    }
    Ok((report, true))
}

fn cmd_simulate(cli: &Cli, model: &Model, spec: &SpecFile) -> Result<(Report, bool)> {
    let section = spec
        .simulate
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spec file has no simulate section".into()))?;
    let chain = model.as_finite_chain()?;
    let fs = config::resolve_finite_functions(chain, &section.functions)?;
    let tfs: Vec<TestFunction> = fs.iter().map(|f| TestFunction::Finite(f.clone())).collect();
    let mut report = Report::new(
        "simulate",
        cli.seed,
        !cli.no_timestamp,
        &["name", "analytic", "estimate", "std_error", "zscore", "verdict"],
    );
    let mut pass = true;
    let mut push = |report: &mut Report, name: &str, analytic: f64, est: crate::simulate::Estimate| {
        let z = if est.std_error > 0.0 {
            (est.mean - analytic) / est.std_error
        } else if est.mean == analytic {
            0.0
        } else {
            f64::INFINITY
        };
        let ok = z.abs() < 3.0;
        pass &= ok;
        report.push_row(vec![
            name.into(),
            analytic.into(),
            est.mean.into(),
            est.std_error.into(),
            z.into(),
            ok.into(),
        ]);
    };
    if fs.len() >= 2 {
        let analytic = moments::mu_moment(
            model,
            &MomentSpec {
                functions: tfs.clone(),
                regime: crate::moments::RegimeKind::CyclicClasses,
                alpha: 0.0,
                root: None,
            },
        )?
        .value;
        let est = estimate_mu_product(chain, &fs, cli.seed, cli.samples)?;
        push(&mut report, "mu_product", analytic, est);
    }
    let analytic_nu = moments::nu_moment(
        model,
        &MomentSpec {
            functions: tfs,
            regime: crate::moments::RegimeKind::Full,
            alpha: section.alpha,
            root: None,
        },
    )?
    .value;
    let est = estimate_nu_product(chain, &fs, section.alpha, cli.seed, cli.samples)?;
    push(&mut report, "nu_product", analytic_nu, est);
    Ok((report, pass))
}

fn cmd_subordination(cli: &Cli, model: &Model, spec: &SpecFile) -> Result<(Report, bool)> {
    let section = spec
        .subordination
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spec file has no subordination section".into()))?;
    let chain = model.as_finite_chain()?;
    let functions: Vec<TestFunction> = section
        .functions
        .iter()
        .map(|f| f.resolve(model))
        .collect::<Result<_>>()?;
    let rows = convergence_table(
        chain,
        &section.n_list,
        section.alpha,
        &section.alpha_js,
        &functions,
    )?;
    let mut report = Report::new(
        "subordination",
        cli.seed,
        !cli.no_timestamp,
        &["row", "n", "value", "limit", "abs_diff", "pass"],
    );
    let mut pass = true;
    for r in &rows {
        report.push_row(vec![
            "convergence".into(),
            r.n.into(),
            r.value.into(),
            r.limit.into(),
            r.abs_diff.into(),
            true.into(),
        ]);
    }
    let n_states = chain.len();
    let pairs: Vec<(Point, Point)> = (0..n_states)
        .flat_map(|x| (0..n_states).map(move |y| (Point::Id(x), Point::Id(y))))
        .collect();
    for &n in &section.n_list {
        let dom = check_domination(model, n, &[0.0, 0.5, 1.0, 2.0], &pairs, 1e-12)?;
        pass &= dom.pass;
        report.push_row(vec![
            "domination".into(),
            n.into(),
            dom.value.into(),
            0.0.into(),
            dom.value.max(0.0).into(),
            dom.pass.into(),
        ]);
    }
    Ok((report, pass))
}

fn cmd_invariance(cli: &Cli, model: &Model, spec: &SpecFile) -> Result<(Report, bool)> {
    let section = spec
        .invariance
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spec file has no invariance section".into()))?;
    let chain = model.as_finite_chain()?;
    let fs = config::resolve_finite_functions(chain, &section.functions)?;
    let rep = invariance_test(
        chain,
        &fs,
        &section.times,
        section.r,
        cli.seed,
        cli.samples,
        section.broken_factor,
    )?;
    let mut report = Report::new(
        "invariance",
        cli.seed,
        !cli.no_timestamp,
        &[
            "r",
            "shifted",
            "base",
            "analytic_base",
            "mean_difference",
            "std_error",
            "zscore",
            "verdict",
        ],
    );
    let ok = rep.z_score.abs() < 3.0;
    report.push_row(vec![
        section.r.into(),
        rep.shifted.into(),
        rep.base.into(),
        rep.analytic_base.into(),
        rep.mean_difference.into(),
        rep.std_error.into(),
        rep.z_score.into(),
        ok.into(),
    ]);
    Ok((report, ok))
}
