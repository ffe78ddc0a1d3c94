use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rapm::catalog::{self, sample, SamplingPlan};
use rapm::classify::{self, ClassLabel, PointClassResiduals};
use rapm::spec_file;
use rapm::verify::{run_suite, Suite, Verdict, VerifyConfig, DEFAULT_TOL};
use rapm::ManifoldChart;

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_UNDECIDED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "rapm", version, about = "Classify and verify Riemannian almost product structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the most specific class of the chart.
    Classify {
        /// Spec file path or `catalog:<name>`.
        target: String,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a verification suite and report residuals per check.
    Verify {
        target: String,
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, env = "RAPM_DEFAULT_TOL", default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Decompose the symmetrized curvature K at a point of a 4-dimensional chart.
    Decompose {
        target: String,
        /// Comma-separated coordinates; defaults to the domain center.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        #[arg(long, env = "RAPM_DEFAULT_TOL", default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// List catalog entries.
    List,
}

#[derive(clap::Args)]
struct SamplingArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Number of random sample points.
    #[arg(long)]
    samples: Option<usize>,
    /// Grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Algebra,
    W3,
    W6,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Algebra => Suite::Algebra,
            SuiteArg::W3 => Suite::W3,
            SuiteArg::W6 => Suite::W6,
            SuiteArg::All => Suite::All,
        }
    }
}

struct Target {
    chart: ManifoldChart,
    plan: SamplingPlan,
}

fn load_target(target: &str, args: Option<&SamplingArgs>) -> Result<Target, String> {
    let (chart, mut plan) = if let Some(name) = target.strip_prefix("catalog:") {
        let entry = catalog::lookup(name).map_err(|e| e.to_string())?;
        (entry.build().map_err(|e| e.to_string())?, SamplingPlan::default())
    } else {
        let loaded = spec_file::load_path(Path::new(target)).map_err(|e| e.to_string())?;
        for w in &loaded.warnings {
            eprintln!("warning: {w}");
        }
        let plan = loaded.sampling.apply(SamplingPlan::default());
        (loaded.chart, plan)
    };
    if let Some(a) = args {
        plan.seed = a.seed.unwrap_or(plan.seed);
        plan.random = a.samples.unwrap_or(plan.random);
        plan.grid = a.grid.unwrap_or(plan.grid);
    }
    Ok(Target { chart, plan })
}

#[derive(Serialize)]
struct ClassifyReport {
    schema_version: u32,
    chart: String,
    seed: u64,
    points: usize,
    skipped: Vec<usize>,
    verdict: ClassLabel,
    max: PointClassResiduals,
    mean: PointClassResiduals,
}

fn cmd_classify(target: &str, sampling: &SamplingArgs, format: Format) -> Result<u8, String> {
    let Target { chart, plan } = load_target(target, Some(sampling))?;
    let points = sample(&chart, plan.grid, plan.random, plan.seed);
    chart
        .validate(&points, rapm::geometry::STRUCTURE_THRESHOLD)
        .map_err(|e| format!("structural validation failed: {e}"))?;
    let record = classify::classify(&chart, &points).map_err(|e| e.to_string())?;
    match format {
        Format::Json => {
            let report = ClassifyReport {
                schema_version: rapm::verify::SCHEMA_VERSION,
                chart: chart.name().to_string(),
                seed: plan.seed,
                points: points.len(),
                skipped: record.skipped.clone(),
                verdict: record.verdict,
                max: record.max,
                mean: record.mean,
            };
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        }
        Format::Text => {
            println!("{}", record.verdict);
            println!("{:<8} {:>12} {:>12}", "class", "max", "mean");
            for (label, max, mean) in [
                ("W0", record.max.w0, record.mean.w0),
                ("W3bar", record.max.w3bar, record.mean.w3bar),
                ("W6bar", record.max.w6bar, record.mean.w6bar),
                ("W1", record.max.w1, record.mean.w1),
            ] {
                println!("{label:<8} {max:>12.3e} {mean:>12.3e}");
            }
            println!("points {} (skipped {})", points.len(), record.skipped.len());
        }
    }
    Ok(match record.verdict {
        ClassLabel::Inconclusive => EXIT_UNDECIDED,
        _ => EXIT_OK,
    })
}

fn cmd_verify(
    target: &str,
    suite: Suite,
    sampling: &SamplingArgs,
    tol: f64,
    out: Option<&Path>,
    format: Format,
) -> Result<u8, String> {
    let Target { chart, plan } = load_target(target, Some(sampling))?;
    let cfg = VerifyConfig {
        tol,
        sampling: plan,
        ..VerifyConfig::default()
    };
    let report = run_suite(&chart, suite, &cfg);
    let json = report.to_json();
    if let Some(path) = out {
        std::fs::write(path, format!("{json}\n")).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    match format {
        Format::Json => println!("{json}"),
        Format::Text => print!("{}", report.to_text()),
    }
    if report.structural_failure.is_some() {
        return Ok(EXIT_INVALID);
    }
    let verdicts: Vec<Verdict> = report.checks.iter().map(|c| c.verdict).collect();
    Ok(if verdicts.contains(&Verdict::Fail) {
        EXIT_CHECK_FAILED
    } else if verdicts
        .iter()
        .any(|v| matches!(v, Verdict::PreconditionFailed | Verdict::Inconclusive))
    {
        EXIT_UNDECIDED
    } else {
        EXIT_OK
    })
}

fn cmd_decompose(target: &str, point: Option<Vec<f64>>, tol: f64) -> Result<u8, String> {
    let Target { chart, .. } = load_target(target, None)?;
    if chart.dim() != 4 {
        eprintln!("usage error: decompose needs a 4-dimensional chart, `{}` has dimension {}", chart.name(), chart.dim());
        return Ok(EXIT_UNDECIDED);
    }
    let point = point.unwrap_or_else(|| chart.center());
    if point.len() != 4 {
        eprintln!("usage error: --point needs 4 coordinates, got {}", point.len());
        return Ok(EXIT_UNDECIDED);
    }
    let geo = chart.geometry_at(&point).map_err(|e| e.to_string())?;
    let d = geo.structure.decompose_dim4(&geo.k).map_err(|e| e.to_string())?;
    let residual = d.residual / (1.0 + geo.k.max_abs());
    println!("tau      {:.12e}", d.tau);
    println!("tau*     {:.12e}", d.tau_star);
    println!("residual {residual:.3e}");
    Ok(if residual < tol { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_list() -> u8 {
    for e in catalog::entries() {
        println!("{:<34} {:<12} {}", e.name, e.expected.to_string(), e.note);
    }
    EXIT_OK
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Classify {
            target,
            sampling,
            format,
        } => cmd_classify(&target, &sampling, format),
        Command::Verify {
            target,
            suite,
            sampling,
            tol,
            out,
            format,
        } => cmd_verify(&target, suite.into(), &sampling, tol, out.as_deref(), format),
        Command::Decompose { target, point, tol } => cmd_decompose(&target, point, tol),
        Command::List => Ok(cmd_list()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
