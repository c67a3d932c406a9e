use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use curvhom::exec::Exec;
use curvhom::scenario::{
    emit_report, execute, parse_expression, parse_expression_for, parse_point, parse_scenario,
    parse_vector, render_value, run_in, Context, Family, Report, Status, Task, TaskResult,
};
use curvhom::stabilizer::OrbitVariant;

#[derive(Parser)]
#[command(
    name = "curvhom",
    version,
    about = "Curvature, model and isometry-dimension computations for g_{6+4p,F}"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Seed for sampled inputs.
    #[arg(long, global = true, env = "CURVHOM_SEED", default_value_t = 0)]
    seed: u64,
    /// Residual tolerance for float comparisons.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tolerance: f64,
    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Table,
    Json,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    #[arg(long)]
    p: usize,
    /// M_{6+4p,k}.
    #[arg(long)]
    k: Option<usize>,
    /// Arbitrary F in y, z_1..z_p.
    #[arg(long = "F", conflicts_with_all = ["k", "psi"])]
    f: Option<String>,
    /// ψ(y) for the 𝒩 family.
    #[arg(long, conflicts_with = "k")]
    psi: Option<String>,
    /// Evaluation point, coord=value (repeatable).
    #[arg(long = "at")]
    at: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// ∇^order R of a metric at a point.
    Curvature {
        #[command(flatten)]
        fam: FamilyArgs,
        #[arg(long, default_value_t = 0)]
        order: usize,
        /// Compare every order up to --order with the closed form.
        #[arg(long)]
        check_closed_form: bool,
    },
    /// Extract the model at a point and normalize it to the standard one.
    Model {
        #[command(flatten)]
        fam: FamilyArgs,
        /// Model order (defaults to k, or p+2 for --psi/--F).
        #[arg(long)]
        order: Option<usize>,
    },
    /// Stabilizer dimension of the standard model.
    Stabdim {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        k: usize,
        /// Use the affine model.
        #[arg(long)]
        affine: bool,
    },
    /// Isometry dimensions of every family member against the closed formulas.
    #[command(name = "verify-thm15")]
    VerifyIsometryDims {
        #[arg(long)]
        p: usize,
    },
    /// α_ν(ψ) and its reading from the normalized curvature jet.
    Alpha {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        psi: String,
        #[arg(long)]
        nu: usize,
        #[arg(long = "at")]
        at: Vec<String>,
    },
    /// Admissibility and homogeneity verdict for ψ.
    #[command(name = "classify-psi")]
    ClassifyPsi {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        psi: String,
    },
    /// Explicit affine isometry moving X (or Y) to ξ.
    #[command(name = "orbit-map")]
    OrbitMap {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        k: usize,
        /// ξ as coord=value pairs, e.g. "x=2,zt1=3"; sampled from --seed if absent.
        #[arg(long)]
        xi: Option<String>,
        #[arg(long, value_enum, default_value_t = Variant::X)]
        variant: Variant,
    },
    /// dim 𝒪(p,k) and the orbit dimension of β̃_1.
    Okp {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        k: usize,
    },
    /// Run a scenario file.
    Run { file: std::path::PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    X,
    Y,
}

struct Usage(String);

fn usage<T>(msg: impl Into<String>) -> Result<T, Usage> {
    Err(Usage(msg.into()))
}

fn check_p(p: usize) -> Result<(), Usage> {
    if p == 0 {
        return usage("--p must be at least 1");
    }
    Ok(())
}

fn check_k(p: usize, k: usize) -> Result<(), Usage> {
    if k > p + 2 {
        return usage(format!("--k {k} out of range: k ≤ p+2 = {}", p + 2));
    }
    Ok(())
}

fn family(fam: &FamilyArgs) -> Result<Family, Usage> {
    check_p(fam.p)?;
    if let Some(f) = &fam.f {
        parse_expression_for(f, fam.p).map_err(|e| Usage(format!("--F: {e}")))?;
        return Ok(Family::F(f.clone()));
    }
    if let Some(psi) = &fam.psi {
        let e = parse_expression(psi).map_err(|e| Usage(format!("--psi: {e}")))?;
        curvhom::invariants::PsiProfile::new(fam.p, e).map_err(|e| Usage(format!("--psi: {e}")))?;
        return Ok(Family::Npsi(psi.clone()));
    }
    match fam.k {
        Some(k) => {
            check_k(fam.p, k)?;
            Ok(Family::Mk(k))
        }
        None => usage("one of --k, --F or --psi is required"),
    }
}

fn context(cli: &Cli, p: usize, family: Family, at: &[String]) -> Result<Context, Usage> {
    let point = parse_point(at, p).map_err(|e| Usage(format!("--at: {e}")))?;
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    Ok(Context {
        p,
        family,
        point,
        tolerance: cli.tolerance,
        exec,
    })
}

fn plan(cli: &Cli) -> Result<Option<(Context, Task)>, Usage> {
    Ok(Some(match &cli.command {
        Command::Curvature {
            fam,
            order,
            check_closed_form,
        } => (
            context(cli, fam.p, family(fam)?, &fam.at)?,
            Task::Curvature {
                order: *order,
                check_closed_form: *check_closed_form,
            },
        ),
        Command::Model { fam, order } => {
            if let Some(k) = order {
                check_k(fam.p, *k)?;
            }
            (
                context(cli, fam.p, family(fam)?, &fam.at)?,
                Task::Model { k: *order },
            )
        }
        Command::Stabdim { p, k, affine } => {
            check_p(*p)?;
            check_k(*p, *k)?;
            (
                context(cli, *p, Family::Mk(*k), &[])?,
                Task::StabDim {
                    k: Some(*k),
                    affine: *affine,
                },
            )
        }
        Command::VerifyIsometryDims { p } => {
            check_p(*p)?;
            (
                context(cli, *p, Family::Mk(0), &[])?,
                Task::VerifyIsometryDims,
            )
        }
        Command::Alpha { p, psi, nu, at } => {
            let fam = family(&FamilyArgs {
                p: *p,
                k: None,
                f: None,
                psi: Some(psi.clone()),
                at: at.clone(),
            })?;
            if *nu < 2 {
                return usage("--nu must be at least 2");
            }
            (context(cli, *p, fam, at)?, Task::Alpha { nu: *nu })
        }
        Command::ClassifyPsi { p, psi } => {
            let fam = family(&FamilyArgs {
                p: *p,
                k: None,
                f: None,
                psi: Some(psi.clone()),
                at: vec![],
            })?;
            (context(cli, *p, fam, &[])?, Task::ClassifyPsi)
        }
        Command::OrbitMap { p, k, xi, variant } => {
            check_p(*p)?;
            check_k(*p, *k)?;
            let xi = xi
                .as_deref()
                .map(|s| parse_vector(s, *p))
                .transpose()
                .map_err(|e| Usage(format!("--xi: {e}")))?;
            let variant = match variant {
                Variant::X => OrbitVariant::X,
                Variant::Y => OrbitVariant::Y,
            };
            (
                context(cli, *p, Family::Mk(*k), &[])?,
                Task::OrbitMap {
                    k: Some(*k),
                    variant,
                    xi,
                    seed: cli.seed,
                },
            )
        }
        Command::Okp { p, k } => {
            check_p(*p)?;
            if k > p {
                return usage(format!("--k {k} out of range: k ≤ p = {p}"));
            }
            (context(cli, *p, Family::Mk(0), &[])?, Task::Okp { k: *k })
        }
        Command::Run { .. } => return Ok(None),
    }))
}

fn print_table(report: &Report) {
    for r in &report.results {
        print_result(r);
    }
}

fn status_word(s: &Status) -> &'static str {
    match s {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Error => "ERROR",
    }
}

fn print_result(r: &TaskResult) {
    if r.task == "verify-thm15" {
        if let Some(rows) = r.value["rows"].as_array() {
            println!(
                "verify-thm15 p={}: {}",
                r.value["p"],
                status_word(&r.status)
            );
            println!("{:>4} {:>9} {:>8}  result", "k", "computed", "formula");
            for row in rows {
                let pass = row["pass"].as_bool().unwrap_or(false);
                println!(
                    "{:>4} {:>9} {:>8}  {}",
                    render_value(&row["k"]),
                    row["computed"],
                    row["formula"],
                    if pass { "pass" } else { "FAIL" }
                );
            }
            return;
        }
    }
    println!(
        "{}: {} {}",
        r.task,
        status_word(&r.status),
        render_value(&r.value)
    );
    for (k, v) in &r.values {
        match v {
            Value::Object(m) if !m.is_empty() && k == "components" => {
                for (name, val) in m {
                    println!("  ({name}) = {}", render_value(val));
                }
            }
            _ => println!("  {k}: {}", render_value(v)),
        }
    }
    for (k, v) in &r.residuals {
        println!("  residual {k}: {}", render_value(v));
    }
}

fn exit_for(report: &Report) -> ExitCode {
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match plan(&cli) {
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run 'curvhom --help' for usage");
            return ExitCode::from(2);
        }
        Ok(Some((ctx, task))) => Report {
            scenario: ctx.scenario_json(),
            results: vec![execute(&task, &ctx)],
        },
        Ok(None) => {
            let Command::Run { file } = &cli.command else {
                unreachable!()
            };
            let text = match std::fs::read_to_string(file) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", file.display());
                    return ExitCode::from(2);
                }
            };
            let cfg = match parse_scenario(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", file.display());
                    return ExitCode::from(2);
                }
            };
            let exec = if cli.sequential {
                Exec::Sequential
            } else {
                Exec::Parallel
            };
            let ctx = Context {
                tolerance: cli.tolerance,
                ..Context::from_config(&cfg, exec)
            };
            run_in(&cfg, &ctx)
        }
    };
    match cli.format {
        Format::Json => println!("{}", emit_report(&report)),
        Format::Table => print_table(&report),
    }
    exit_for(&report)
}
