mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cphm::solver::{
    converge, neumann_reference, pairwise_orders, verify_neumann_poisson, NeumannResult, NEUMANN_REFERENCE,
    NEUMANN_REFERENCE_ORDERS,
};
use cphm::{cphm_run, CphmConfig};
use log::info;
use serde::Serialize;
use toml::{Table, Value};

use config::{apply_assignment, load_table, parse_dx_list, parse_reals, set_dotted, surface_shorthand, Format, RunConfig};
use error::CliError;
use output::{output_paths, ReportRecord, RunRecord};

/// Geodesic distance on surfaces with the closest point heat method.
#[derive(Debug, Parser)]
#[command(name = "cphm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the distance field for one configuration.
    Solve(RunArgs),
    /// Run at several spacings and fit the convergence order.
    Converge(ConvergeArgs),
    /// Check the Neumann boundary treatment on a manufactured problem.
    VerifyNeumann(NeumannArgs),
    /// Convert a stored run record to another format.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sphere[:r], hemisphere[:r], disk[:r], torus[:R,r] or mesh:<file.obj>.
    #[arg(long)]
    surface: Option<String>,
    /// Grid spacing, or `auto`.
    #[arg(long)]
    dx: Option<String>,
    /// Source point `x,y,z`; repeat for several sources.
    #[arg(long = "source", allow_hyphen_values = true)]
    sources: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats (csv, vtk, summary); repeat or separate by commas.
    #[arg(long = "format", value_delimiter = ',')]
    formats: Vec<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Source support radius.
    #[arg(long = "H")]
    h: Option<f64>,
    /// auto, direct or krylov.
    #[arg(long)]
    solver: Option<String>,
    /// Also write the assembled operators as triplet files.
    #[arg(long)]
    dump_operators: bool,
    /// Override any configuration key: `--set numerics.dt=0.0025`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated spacings.
    #[arg(long, default_value = "0.1,0.05,0.025")]
    dx_list: String,
    /// Fail with exit code 4 unless the fitted order lies in `lo,hi`.
    #[arg(long)]
    expect_order: Option<String>,
    /// Fail with exit code 4 unless errors decrease strictly.
    #[arg(long)]
    expect_decreasing: bool,
}

#[derive(Debug, Args)]
struct NeumannArgs {
    #[arg(long, default_value = "0.1,0.05,0.025,0.0125")]
    dx_list: String,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// auto, direct or krylov.
    #[arg(long)]
    solver: Option<String>,
    /// Directory for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Run record written by `solve`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

fn format_name(s: &str) -> Result<Format, CliError> {
    match s.trim() {
        "csv" => Ok(Format::Csv),
        "vtk" => Ok(Format::Vtk),
        "summary" => Ok(Format::Summary),
        other => Err(CliError::Config(format!("unknown format `{other}`"))),
    }
}

fn method_value(s: &str) -> Result<Value, CliError> {
    match s {
        "auto" | "direct" | "krylov" => Ok(Value::String(s.into())),
        other => Err(CliError::Config(format!("unknown solver `{other}`"))),
    }
}

/// Merge the configuration file, the flags and the `--set` overrides.
fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut t: Table = load_table(args.config.as_deref())?;
    if let Some(s) = &args.surface {
        t.insert("surface".into(), Value::Table(surface_shorthand(s)?));
    }
    if let Some(dx) = &args.dx {
        let v = if dx == "auto" {
            Value::String(dx.clone())
        } else {
            Value::Float(dx.parse().map_err(|e| CliError::Config(format!("--dx `{dx}`: {e}")))?)
        };
        set_dotted(&mut t, "numerics.dx", v)?;
    }
    if !args.sources.is_empty() {
        let pts = args
            .sources
            .iter()
            .map(|s| {
                parse_reals(s, 3).map(|v| Value::Array(v.into_iter().map(Value::Float).collect()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        t.insert("sources".into(), Value::Array(pts));
    }
    if let Some(out) = &args.out {
        set_dotted(&mut t, "outputs.dir", Value::String(out.display().to_string()))?;
    }
    if !args.formats.is_empty() {
        let f = args
            .formats
            .iter()
            .map(|s| format_name(s).map(|_| Value::String(s.trim().into())))
            .collect::<Result<Vec<_>, _>>()?;
        set_dotted(&mut t, "outputs.formats", Value::Array(f))?;
    }
    if let Some(k) = args.kappa {
        set_dotted(&mut t, "numerics.kappa", Value::Float(k))?;
    }
    if let Some(q) = args.q {
        set_dotted(&mut t, "numerics.q", Value::Integer(q as i64))?;
    }
    if let Some(p) = args.p {
        set_dotted(&mut t, "numerics.p", Value::Integer(p as i64))?;
    }
    if let Some(h) = args.h {
        set_dotted(&mut t, "numerics.H", Value::Float(h))?;
    }
    if let Some(s) = &args.solver {
        set_dotted(&mut t, "numerics.solver.method", method_value(s)?)?;
    }
    if args.dump_operators {
        set_dotted(&mut t, "outputs.dump_operators", Value::Boolean(true))?;
    }
    for a in &args.overrides {
        apply_assignment(&mut t, a)?;
    }
    if !t.contains_key("surface") {
        return Err(CliError::Config("no surface given (use --surface or a [surface] table)".into()));
    }
    RunConfig::from_table(t)
}

fn dump_operators(dir: &Path, surface: &cphm::Surface, cfg: &CphmConfig) -> Result<(), CliError> {
    let (_, ops) = cfg.discretize(surface)?;
    let dir = dir.join("operators");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
    let mut named = vec![
        ("L", &ops.laplacian),
        ("Ep", &ops.ext_p),
        ("Eq", &ops.ext_q),
        ("Eg", &ops.neumann_heat),
    ];
    let d_names = ["Dx", "Dy", "Dz"];
    for (k, d) in ops.derivatives.iter().enumerate() {
        named.push((d_names[k], d));
    }
    for (name, op) in named {
        let path = dir.join(format!("{name}.txt"));
        let f = std::fs::File::create(&path).map_err(|e| CliError::Io(path.clone(), e))?;
        op.write_triplets(std::io::BufWriter::new(f))
            .map_err(|e| CliError::Io(path.clone(), e))?;
    }
    Ok(())
}

fn cmd_solve(args: &RunArgs) -> Result<(), CliError> {
    let rc = resolve(args)?;
    let surface = rc.build_surface()?;
    let sources = rc.sources()?;
    let dx = rc.spacing(&surface);
    let cfg = rc.cphm_config(dx)?;
    info!("solving on {} with dx = {dx}", surface.name());
    let run = cphm_run(&surface, &sources, &cfg)?;
    let report = ReportRecord::from(&run.report);
    print!("{}", output::summary_text(std::slice::from_ref(&report)));

    if let Some(dir) = &rc.outputs.dir {
        let samples: Vec<[f64; 4]> = run
            .field
            .surface_samples
            .as_ref()
            .map(|s| s.iter().map(|(y, v)| [y.x, y.y, y.z, *v]).collect())
            .unwrap_or_default();
        let record = RunRecord {
            config: rc.clone(),
            report,
            samples,
        };
        for (format, path) in output_paths(dir, &rc.outputs.formats) {
            output::export(&record, format, &path)?;
            println!("wrote {}", path.display());
        }
        let path = dir.join("run.json");
        output::write_json(&path, &record)?;
        println!("wrote {}", path.display());
        if rc.outputs.dump_operators {
            dump_operators(dir, &surface, &cfg)?;
            println!("wrote {}", dir.join("operators").display());
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ConvergeRecord {
    surface: &'static str,
    reports: Vec<ReportRecord>,
    order: Option<f64>,
}

fn cmd_converge(args: &ConvergeArgs) -> Result<(), CliError> {
    let rc = resolve(&args.run)?;
    let surface = rc.build_surface()?;
    let sources = rc.sources()?;
    let dxs = parse_dx_list(&args.dx_list)?;
    let base = rc.cphm_config(dxs[0])?;
    let conv = converge(&surface, &sources, &base, &dxs)?;
    let reports: Vec<ReportRecord> = conv.reports.iter().map(ReportRecord::from).collect();
    print!("{}", output::summary_text(&reports));
    match conv.order {
        Some(o) => println!("least-squares order: {o:.4}"),
        None => println!("least-squares order: -"),
    }
    if let Some(dir) = &rc.outputs.dir {
        let record = ConvergeRecord {
            surface: surface.name(),
            reports: reports.clone(),
            order: conv.order,
        };
        output::write_json(&dir.join("converge.json"), &record)?;
        output::write_summary(&dir.join("summary.txt"), &reports)?;
    }

    let errors: Vec<f64> = reports.iter().map(|r| r.rel_error.unwrap_or(f64::NAN)).collect();
    if let Some(range) = &args.expect_order {
        let r = parse_reals(range, 2)?;
        match conv.order {
            Some(o) if o >= r[0] && o <= r[1] => {}
            Some(o) => return Err(CliError::Tolerance(format!("order {o:.4} outside [{}, {}]", r[0], r[1]))),
            None => return Err(CliError::Tolerance("order needs at least two spacings".into())),
        }
    }
    if args.expect_decreasing {
        if let Some(w) = errors.windows(2).find(|w| !(w[1] < w[0])) {
            return Err(CliError::Tolerance(format!(
                "errors do not decrease strictly: {:.4e} then {:.4e}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct NeumannRow {
    dx: f64,
    n: usize,
    rel_error: f64,
    reference: Option<f64>,
    order: Option<f64>,
    reference_order: Option<f64>,
}

/// Reference order between `a` and `b` when they are consecutive
/// tabulated spacings.
fn reference_order(a: f64, b: f64) -> Option<f64> {
    let idx = |dx: f64| NEUMANN_REFERENCE.iter().position(|(d, _)| (d - dx).abs() <= 1e-12 * dx);
    match (idx(a), idx(b)) {
        (Some(i), Some(j)) if j == i + 1 => Some(NEUMANN_REFERENCE_ORDERS[i]),
        _ => None,
    }
}

/// Relative tolerance on tabulated errors.
const ERROR_TOL: f64 = 0.10;
/// Absolute tolerance on tabulated orders.
const ORDER_TOL: f64 = 0.1;

fn neumann_rows(results: &[NeumannResult]) -> Vec<NeumannRow> {
    let orders = pairwise_orders(results);
    results
        .iter()
        .enumerate()
        .map(|(i, r)| NeumannRow {
            dx: r.dx,
            n: r.n,
            rel_error: r.rel_error,
            reference: neumann_reference(r.dx),
            order: i.checked_sub(1).map(|k| orders[k]),
            reference_order: i.checked_sub(1).and_then(|k| reference_order(results[k].dx, r.dx)),
        })
        .collect()
}

fn neumann_violation(row: &NeumannRow) -> Option<String> {
    if let Some(reference) = row.reference {
        if (row.rel_error - reference).abs() > ERROR_TOL * reference {
            return Some(format!(
                "dx = {}: error {:.4e} is not within {:.0}% of {:.4e}",
                row.dx,
                row.rel_error,
                100.0 * ERROR_TOL,
                reference
            ));
        }
    }
    if let (Some(o), Some(reference)) = (row.order, row.reference_order) {
        if (o - reference).abs() > ORDER_TOL {
            return Some(format!(
                "dx = {}: order {o:.4} is not within {ORDER_TOL} of {reference:.4}",
                row.dx
            ));
        }
    }
    None
}

fn cmd_verify_neumann(args: &NeumannArgs) -> Result<(), CliError> {
    let dxs = parse_dx_list(&args.dx_list)?;
    let mut results = Vec::with_capacity(dxs.len());
    for &dx in &dxs {
        let mut cfg = CphmConfig::new(dx);
        if let Some(k) = args.kappa {
            cfg.kappa = k;
        }
        if let Some(q) = args.q {
            cfg.q = q;
        }
        if let Some(p) = args.p {
            cfg.p = p;
        }
        if let Some(s) = &args.solver {
            cfg.solver.method = match s.as_str() {
                "auto" => cphm::linalg::SolverMethod::Auto,
                "direct" => cphm::linalg::SolverMethod::SparseDirect,
                "krylov" => cphm::linalg::SolverMethod::IterativeKrylov,
                other => return Err(CliError::Config(format!("unknown solver `{other}`"))),
            };
        }
        results.push(verify_neumann_poisson(&cfg)?);
    }
    let rows = neumann_rows(&results);
    println!(
        "{:>10} {:>10} {:>12} {:>12} {:>8} {:>10}",
        "dx", "N", "rel_error", "reference", "order", "ref_order"
    );
    let opt = |v: Option<f64>, p: usize, e: bool| match v {
        Some(x) if e => format!("{x:.p$e}"),
        Some(x) => format!("{x:.p$}"),
        None => "—".to_string(),
    };
    for r in &rows {
        println!(
            "{:>10} {:>10} {:>12.4e} {:>12} {:>8} {:>10}",
            r.dx,
            r.n,
            r.rel_error,
            opt(r.reference, 4, true),
            opt(r.order, 4, false),
            opt(r.reference_order, 4, false)
        );
    }
    if let Some(dir) = &args.out {
        output::write_json(&dir.join("neumann.json"), &rows)?;
    }
    if let Some(msg) = rows.iter().find_map(neumann_violation) {
        return Err(CliError::Tolerance(msg));
    }
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    let record = output::read_record(&args.input)?;
    let format = format_name(&args.format)?;
    output::export(&record, format, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Converge(a) => cmd_converge(a),
        Command::VerifyNeumann(a) => cmd_verify_neumann(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut shown = e.to_string();
            eprintln!("error: {shown}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let text = s.to_string();
                if !shown.contains(&text) {
                    eprintln!("  caused by: {text}");
                    shown = text;
                }
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
