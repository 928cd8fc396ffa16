use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use spikelab::verify::{run_verification, Pipeline, Study};
use spikelab::{radial_identity_report, Error, GpProblem, RunConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "spikelab", version, about = "Spike asymptotics of 2D Gross-Pitaevskii ground states")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides `output.dir`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// seed for randomized starts (overrides `output.seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the Townes profile and print a* and the radial identities
    Townes,
    /// Locate the critical point y0 of H and report λ
    AnalyzePotential,
    /// Solve for the correction profiles and dump them as CSV
    Corrections,
    /// Compute the expansion constants and write constants.csv
    Constants,
    /// Minimize the GP energy at one interaction strength
    Minimize {
        /// interaction strength a
        #[arg(long, conflicts_with = "fraction", required_unless_present = "fraction")]
        a: Option<f64>,
        /// interaction strength as a fraction of a*
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Run verification studies and write the report files
    Verify {
        #[arg(value_enum, default_value_t = StudyArg::All)]
        study: StudyArg,
    },
    /// Print the effective configuration as TOML
    ShowConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Scaling,
    Mu,
    Profile,
    Uniqueness,
    All,
}

impl From<StudyArg> for Study {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::Scaling => Study::Scaling,
            StudyArg::Mu => Study::Mu,
            StudyArg::Profile => Study::Profile,
            StudyArg::Uniqueness => Study::Uniqueness,
            StudyArg::All => Study::All,
        }
    }
}

const EXIT_THRESHOLD: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Config { .. } | Error::Collapse { .. } | Error::Io(_) | Error::Cache(_) => EXIT_INPUT,
        Error::InsufficientPoints { .. } | Error::GridTooCoarse { .. } | Error::BallOutsideGrid { .. } => EXIT_INPUT,
        _ => EXIT_SOLVER,
    }
}

fn load_config(cli: &Cli) -> spikelab::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.output.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
}

fn run(cli: &Cli, stage: &mut &'static str) -> spikelab::Result<bool> {
    *stage = "config";
    let cfg = load_config(cli)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_text());
        return Ok(true);
    }
    let out = cfg.output.dir.clone();
    let seed = cfg.output.seed;
    *stage = "townes";
    let pipe = Pipeline::prepare(cfg)?;
    let t = &pipe.townes;
    match &cli.command {
        Command::Townes => {
            let id = radial_identity_report(t);
            print(json!({
                "a_star": t.a_star,
                "w0": t.w0,
                "mass": t.moments.mass,
                "kinetic": t.moments.kinetic,
                "quartic": t.moments.quartic,
                "second": t.moments.second,
                "virial_kinetic": id.virial_kinetic,
                "virial_quartic": id.virial_quartic,
                "rho": [id.rho1, id.rho2, id.rho3],
                "splice_radius": t.diagnostics.splice_radius,
                "el_residual": t.diagnostics.el_residual,
            }));
        }
        Command::AnalyzePotential => {
            let a = &pipe.analysis;
            print(json!({
                "y0": a.y0,
                "H(y0)": a.h0,
                "hessian": a.hess,
                "lambda": a.lambda,
                "nondegenerate": a.nondegenerate,
                "grad_norm": a.grad_norm,
                "iterations": a.iterations,
            }));
        }
        Command::Corrections => {
            *stage = "corrections";
            let c = pipe.corrections()?;
            std::fs::create_dir_all(&out)?;
            for (name, f) in [("psi1", &c.psi1), ("psi2", &c.psi2), ("psi3", &c.psi3), ("psi4", &c.psi4), ("psi5", &c.psi5), ("phi", &c.phi)] {
                f.write_csv(&out.join(format!("{name}.csv")), name, pipe.spec.p)?;
            }
            print(json!({
                "y_sup": c.y_sup,
                "x0": c.x0,
                "grid": { "n": c.grid.n, "step": c.grid.step },
                "normalization_shift": c.normalization_shift,
                "out": out,
            }));
        }
        Command::Constants => {
            *stage = "constants";
            let c = pipe.corrections()?;
            let k = pipe.constants(&c);
            std::fs::create_dir_all(&out)?;
            spikelab::verify::write_constants(&out, &k)?;
            print(serde_json::to_value(&k).expect("json"));
        }
        Command::Minimize { a, fraction } => {
            *stage = "minimize";
            let a = a.unwrap_or_else(|| fraction.expect("clap enforces one of --a/--fraction") * t.a_star);
            let problem = GpProblem::with_lambda(&pipe.spec, t.a_star, pipe.analysis.lambda, a, pipe.gp_options()?)?;
            let s = problem.minimize(t)?;
            if pipe.config.output.dump_fields {
                std::fs::create_dir_all(&out)?;
                s.write_csv(&out.join(format!("u_{:.6}.csv", a / t.a_star)), pipe.spec.p)?;
            }
            print(serde_json::to_value(s.record()).expect("json"));
        }
        Command::Verify { study } => {
            *stage = "verify";
            let report = run_verification(&pipe, (*study).into(), seed, &out)?;
            for c in report.checks() {
                println!(
                    "{} {}/{}: {:.6e} (expected {:.6e}, tol {:.3e})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.study,
                    c.metric,
                    c.value,
                    c.expected,
                    c.tolerance
                );
            }
            for (s, r) in &report.skipped {
                println!("SKIP {s}: {r}");
            }
            println!("report: {}", out.join("report.csv").display());
            return Ok(report.passed());
        }
        Command::ShowConfig => unreachable!(),
    }
    Ok(true)
}

fn write_failure(dir: &Path, record: &serde_json::Value) {
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = std::fs::write(dir.join("failure.json"), record.to_string());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stage = "config";
    match run(&cli, &mut stage) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_THRESHOLD),
        Err(e) => {
            let code = exit_code(&e);
            let record = json!({ "stage": stage, "error": e.to_string(), "kind": format!("{e:?}").split([' ', '(', '{']).next(), "exit_code": code });
            eprintln!("{record}");
            if stage != "config" {
                let dir = cli.out.clone().or_else(|| cli.config.as_ref().and_then(|p| RunConfig::load(p).ok()).map(|c| c.output.dir));
                write_failure(&dir.unwrap_or_else(|| PathBuf::from("spikelab-out")), &record);
            }
            ExitCode::from(code)
        }
    }
}
