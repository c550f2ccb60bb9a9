mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fdx::distributions::{CdfFamily, NullCdf};
use fdx::fisher::{FisherSupport, Sided};
use fdx::simharness::{run_scenario, study_sweep, SimConfig, SimProcedure};
use fdx::stepdown::{adjusted_pvalues, off_support};
use fdx::transforms::{make_transform, Alpha, ProcedureKind, ProcedureSpec};
use fdx::FdxError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<FdxError> for CliError {
    fn from(e: FdxError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fdx", version, about = "FDX-controlling step-down procedures")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adjusted p-values and the rejection set of one procedure.
    Adjust(AdjustArgs),
    /// Fisher p-values and their null CDFs from a count file.
    FisherCdf(FisherCdfArgs),
    /// Rejection counts over a grid of confidence levels.
    Curve(CurveArgs),
    /// Monte-Carlo two-sample study.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SidedArg {
    One,
    Two,
}

impl From<SidedArg> for Sided {
    fn from(s: SidedArg) -> Self {
        match s {
            SidedArg::One => Sided::One,
            SidedArg::Two => Sided::Two,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// p-value file (`id,pvalue`).
    #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
    pvalues: Option<PathBuf>,
    /// Count file (`id,x1,n1,x2,n2`); Fisher p-values and CDFs are derived.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Null CDF file (`id,support,cum`) for use with --pvalues.
    #[arg(long, conflicts_with = "counts")]
    cdfs: Option<PathBuf>,
    /// Weight file (`id,weight`) for the weighted procedures.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct AdjustArgs {
    #[arg(long)]
    procedure: ProcedureKind,
    #[arg(long, default_value_t = 0.5)]
    zeta: f64,
    #[command(flatten)]
    input: InputArgs,
    /// Result file (`id,pvalue,adjusted_pvalue,rejected`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FisherCdfArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    /// CDF file (`id,support,cum`).
    #[arg(long)]
    out: PathBuf,
    /// Also write the p-values (`id,pvalue`).
    #[arg(long)]
    pvalues_out: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    /// One or more procedures, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    procedure: Vec<ProcedureKind>,
    /// `start:stop:step`, both ends inside (0, 1).
    #[arg(long)]
    zeta_grid: String,
    #[command(flatten)]
    input: InputArgs,
    /// Curve file (`procedure,zeta,rejections`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file with the scenario; not needed with --sweep.
    #[arg(long, required_unless_present = "sweep")]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Procedures (bh or a procedure name), comma separated.
    #[arg(long, value_delimiter = ',')]
    procedure: Vec<String>,
    /// Run the 54-design sweep instead of one config.
    #[arg(long)]
    sweep: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Adjust(a) => cmd_adjust(a),
        Command::FisherCdf(a) => cmd_fisher_cdf(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

struct Loaded {
    ids: Vec<String>,
    raw: Vec<f64>,
    family: Option<CdfFamily>,
    weights: Option<Vec<f64>>,
}

fn check_ids(what: &str, ids: &[String], other: &[String]) -> Result<(), CliError> {
    if ids.len() != other.len() {
        return Err(CliError::Data(format!(
            "{what}: {} rows but {} hypotheses",
            other.len(),
            ids.len()
        )));
    }
    if let Some((a, b)) = ids.iter().zip(other).find(|(a, b)| a != b) {
        return Err(CliError::Data(format!("{what}: id `{b}` where `{a}` was expected")));
    }
    Ok(())
}

fn fisher_supports(rows: &[io::CountRow], sided: Sided) -> Vec<FisherSupport> {
    rows.par_iter()
        .map(|r| FisherSupport::new(r.table.margins, sided))
        .collect()
}

fn load(input: &InputArgs, kinds: &[ProcedureKind]) -> Result<Loaded, CliError> {
    let wants_family = kinds.iter().any(|k| k.needs_family());
    let wants_weights = kinds.iter().any(|k| k.weighting().is_some());
    let (ids, raw, mut family) = if let Some(path) = &input.counts {
        let rows = io::read_counts(path)?;
        let supports = fisher_supports(&rows, input.sided.into());
        let raw = rows.iter().zip(&supports).map(|(r, s)| s.pvalue(r.table.x)).collect();
        let family = if wants_family && !rows.is_empty() {
            Some(CdfFamily::new(
                supports.iter().map(|s| NullCdf::Step(s.cdf().clone())).collect(),
            )?)
        } else {
            None
        };
        (rows.into_iter().map(|r| r.id).collect(), raw, family)
    } else {
        let path = input.pvalues.as_ref().expect("clap requires one source");
        let (ids, raw) = io::read_values(path, "pvalue")?;
        (ids, raw, None)
    };
    if let Some(p) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Data(format!("p-value {p} outside [0, 1]")));
    }
    if let Some(path) = &input.cdfs {
        let (cdf_ids, cdfs) = io::read_cdfs(path)?;
        check_ids("cdf file", &ids, &cdf_ids)?;
        if !cdfs.is_empty() {
            family = Some(CdfFamily::new(cdfs.into_iter().map(NullCdf::Step).collect())?);
        }
    }
    if wants_family && family.is_none() && !ids.is_empty() {
        return Err(CliError::Usage(
            "this procedure needs null CDFs: pass --cdfs or --counts".into(),
        ));
    }
    let weights = match &input.weights {
        Some(path) => {
            let (w_ids, w) = io::read_values(path, "weight")?;
            check_ids("weight file", &ids, &w_ids)?;
            Some(w)
        }
        None if wants_weights => {
            return Err(CliError::Usage("weighted procedures need --weights".into()));
        }
        None => None,
    };
    if ids.is_empty() {
        return Err(CliError::Data("no hypotheses in the input".into()));
    }
    Ok(Loaded {
        ids,
        raw,
        family,
        weights,
    })
}

fn parse_alpha(alpha: f64) -> Result<Alpha, CliError> {
    Alpha::new(alpha).map_err(|e| CliError::Usage(e.to_string()))
}

// Adjusted p-values of one procedure, plus the p-values it ran on.
fn adjust_one(
    data: &Loaded,
    kind: ProcedureKind,
    alpha: Alpha,
    zeta: f64,
) -> Result<Vec<f64>, CliError> {
    let mut spec = ProcedureSpec::new(kind, alpha, zeta).map_err(|e| CliError::Usage(e.to_string()))?;
    if kind.needs_family() {
        spec = spec.with_family(data.family.clone().expect("checked in load"));
    }
    if kind.weighting().is_some() {
        spec = spec.with_weights(data.weights.clone().expect("checked in load"));
    }
    let pvals = spec.prepare_pvalues(&data.raw)?;
    let xi = make_transform(&spec, pvals.len())?;
    let off = off_support(&pvals, &xi);
    if !off.is_empty() {
        eprintln!(
            "warning: {kind}: {} of {} p-values are not attainable under the null CDFs; using adjusted p-values",
            off.len(),
            pvals.len()
        );
    }
    Ok(adjusted_pvalues(&pvals, &xi)?)
}

fn check_zeta(zeta: f64) -> Result<(), CliError> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(CliError::Usage(format!("zeta = {zeta} outside (0, 1)")));
    }
    Ok(())
}

fn cmd_adjust(args: AdjustArgs) -> Result<(), CliError> {
    check_zeta(args.zeta)?;
    let alpha = parse_alpha(args.input.alpha)?;
    let data = load(&args.input, &[args.procedure])?;
    let adjusted = adjust_one(&data, args.procedure, alpha, args.zeta)?;
    let mut w = io::writer(&args.out)?;
    io::write_row(&mut w, &["id", "pvalue", "adjusted_pvalue", "rejected"].map(String::from))?;
    let mut rejected = 0;
    for ((id, p), adj) in data.ids.iter().zip(&data.raw).zip(&adjusted) {
        let rej = *adj <= args.zeta;
        rejected += rej as usize;
        io::write_row(&mut w, &[id.clone(), p.to_string(), adj.to_string(), rej.to_string()])?;
    }
    io::finish(w)?;
    println!(
        "rejected {rejected} of {} at alpha={}, zeta={}",
        data.ids.len(),
        args.input.alpha,
        args.zeta
    );
    Ok(())
}

fn cmd_fisher_cdf(args: FisherCdfArgs) -> Result<(), CliError> {
    let rows = io::read_counts(&args.counts)?;
    let supports = fisher_supports(&rows, args.sided.into());
    let mut w = io::writer(&args.out)?;
    io::write_row(&mut w, &["id", "support", "cum"].map(String::from))?;
    for (r, s) in rows.iter().zip(&supports) {
        io::write_row(&mut w, &[r.id.clone(), io::join(s.cdf().support()), io::join(s.cdf().cum())])?;
    }
    io::finish(w)?;
    if let Some(path) = &args.pvalues_out {
        let mut w = io::writer(path)?;
        io::write_row(&mut w, &["id", "pvalue"].map(String::from))?;
        for (r, s) in rows.iter().zip(&supports) {
            io::write_row(&mut w, &[r.id.clone(), s.pvalue(r.table.x).to_string()])?;
        }
        io::finish(w)?;
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("invalid --zeta-grid `{spec}`, expected start:stop:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    if start > stop {
        return Ok(Vec::new());
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // snap away representation noise such as 0.30000000000000004
    let grid: Vec<f64> = (0..n)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect();
    if grid.iter().any(|&z| !(z > 0.0 && z < 1.0)) {
        return Err(CliError::Usage(format!("--zeta-grid `{spec}` leaves (0, 1)")));
    }
    Ok(grid)
}

fn cmd_curve(args: CurveArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.zeta_grid)?;
    let alpha = parse_alpha(args.input.alpha)?;
    let data = load(&args.input, &args.procedure)?;
    let mut w = io::writer(&args.out)?;
    io::write_row(&mut w, &["procedure", "zeta", "rejections"].map(String::from))?;
    if !grid.is_empty() {
        for &kind in &args.procedure {
            // the adjusted p-values do not depend on zeta
            let mut adjusted = adjust_one(&data, kind, alpha, 0.5)?;
            adjusted.sort_by(|a, b| a.total_cmp(b));
            for &z in &grid {
                let count = adjusted.partition_point(|&a| a <= z);
                io::write_row(&mut w, &[kind.to_string(), z.to_string(), count.to_string()])?;
            }
        }
    }
    io::finish(w)
}

fn parse_sim_procedures(names: &[String]) -> Result<Vec<SimProcedure>, CliError> {
    if names.is_empty() {
        return Ok(SimProcedure::study_set());
    }
    names
        .iter()
        .map(|n| {
            if n.eq_ignore_ascii_case("bh") {
                Ok(SimProcedure::Bh)
            } else {
                n.parse::<ProcedureKind>()
                    .map(SimProcedure::Stepdown)
                    .map_err(|e| CliError::Usage(e.to_string()))
            }
        })
        .collect()
}

fn read_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let procedures = parse_sim_procedures(&args.procedure)?;
    let mut configs = if args.sweep {
        study_sweep(args.replicates.unwrap_or(10_000), args.seed.unwrap_or(0))
    } else {
        vec![read_config(args.config.as_deref().expect("clap requires a config"))?]
    };
    for c in &mut configs {
        if let Some(r) = args.replicates {
            c.replicates = r;
        }
        if let Some(s) = args.seed {
            c.seed = s;
        }
        c.validate()?;
    }
    let mut w = io::writer(&args.out)?;
    io::write_row(
        &mut w,
        &[
            "m", "m1", "m2", "m3", "q3", "n", "alpha", "zeta", "replicates", "seed", "procedure", "mean_tdp",
            "tdp_se", "fdx", "fdx_se", "mean_rejections",
        ]
        .map(String::from),
    )?;
    let total = configs.len();
    for (i, c) in configs.iter().enumerate() {
        let summary = run_scenario(c, &procedures)?;
        for p in &summary.procedures {
            io::write_row(
                &mut w,
                &[
                    c.m.to_string(),
                    c.m1.to_string(),
                    c.m2().to_string(),
                    c.m3.to_string(),
                    c.q3.to_string(),
                    c.n.to_string(),
                    c.alpha.to_string(),
                    c.zeta.to_string(),
                    c.replicates.to_string(),
                    c.seed.to_string(),
                    p.label.clone(),
                    p.mean_tdp.to_string(),
                    p.tdp_se.to_string(),
                    p.fdx.to_string(),
                    p.fdx_se.to_string(),
                    p.mean_rejections.to_string(),
                ],
            )?;
        }
        eprintln!(
            "scenario {}/{total} done (m={}, m3={}, m1={}, q3={})",
            i + 1,
            c.m,
            c.m3,
            c.m1,
            c.q3
        );
    }
    io::finish(w)
}
