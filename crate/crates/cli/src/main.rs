mod config;
mod error;
mod input;
mod output;
mod presets;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mvfdr::procedures::{nested_region_test, OracleLr};
use mvfdr::regions::{h_mc, v_eps, Ellipsoid, EllipsoidSpec, RegionFamily, VolumeMode};
use mvfdr::simulation::{run_comparison, run_experiment, tune_scan, RunStats, TuneRow};
use mvfdr::special::SeriesControl;
use mvfdr::theory::{alpha_star, f_eps_gamma, t_eps_gamma, AltSpec};

use config::{parse_baselines, parse_list, parse_volume_mode, RawConfig, RunConfig, ORACLE_SAMPLES};
use error::{CliError, CliResult};
use output::{write_curve, ResultsDocument};

#[derive(Parser)]
#[command(name = "mvfdr", version, about = "Nested-region BH testing and simulation for vector-valued p-values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a nested-region BH procedure to a CSV of p-value vectors.
    Test(TestArgs),
    /// Tail parameters and the pFDR floor of a t or F alternative.
    Params(ParamsArgs),
    /// Volume of {x : sum nu_k x_k^eps <= u}, or V_eps without --u.
    Volume(VolumeArgs),
    /// Monte Carlo FDR, pFDR and power; runs the tuning scan when s_grid is set.
    Simulate(SimArgs),
    /// Matched-power comparison against direct-combination baselines.
    Compare(CompareArgs),
    /// List the bundled configs.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodName {
    Min,
    Product,
    Stouffer,
    Rectangle,
    Ellipsoid,
    Oracle,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Family {
    T,
    F,
}

#[derive(Args)]
struct TestArgs {
    /// CSV with one row per null and one column per coordinate.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodName,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Ellipsoid weights, comma-separated.
    #[arg(long)]
    nu: Option<String>,
    /// Ellipsoid exponent.
    #[arg(long)]
    eps: Option<f64>,
    /// Rectangle scales (product 1); defaults to all ones.
    #[arg(long)]
    c: Option<String>,
    /// Stouffer weights; defaults to all ones.
    #[arg(long)]
    weights: Option<String>,
    /// Ellipsoid volume mode: auto, exact2d, irwinhall, powerlaw, montecarlo.
    #[arg(long, default_value = "auto")]
    mode: String,
    /// Oracle alternative family.
    #[arg(long, value_enum, default_value = "t")]
    family: Family,
    /// Oracle degrees of freedom (numerator for F).
    #[arg(long)]
    df: Option<f64>,
    /// Oracle denominator degrees of freedom (F only).
    #[arg(long)]
    df2: Option<f64>,
    /// Oracle noncentralities, one per coordinate.
    #[arg(long)]
    delta: Option<String>,
    /// Monte Carlo sample size for the oracle table or montecarlo volumes.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Path for the JSON results document.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Degrees of freedom (numerator for F).
    #[arg(long)]
    df: f64,
    /// Denominator degrees of freedom (F only).
    #[arg(long)]
    df2: Option<f64>,
    #[arg(long)]
    delta: f64,
    /// False-null proportion; adds alpha_* and the pFDR floor.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VolumeArgs {
    #[arg(long)]
    eps: f64,
    /// Weights, comma-separated.
    #[arg(long)]
    nu: Option<String>,
    /// Dimension, when only V_eps is wanted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long, default_value = "auto")]
    mode: String,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Config file of `key = value` lines.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled config name (see `mvfdr presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Override a config key, e.g. `--set r=0.2`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Use the large run counts (2000 x 5000 for scans, 3000 x 6000 otherwise).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory for two-column plot CSVs of the tuning scan.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated subset of by-product, by-sum, by-max.
    #[arg(long)]
    baselines: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(a) => cmd_test(&a),
        Command::Params(a) => cmd_params(&a),
        Command::Volume(a) => cmd_volume(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Presets => {
            for p in presets::PRESETS {
                println!("{:<18} {}", p.name, p.summary());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mvfdr: {e}");
            e.exit_code()
        }
    }
}

fn param_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    parse_list(text, what).map_err(|e| match e {
        CliError::Input(m) => CliError::Param(m),
        other => other,
    })
}

fn alternative(family: Family, df: f64, df2: Option<f64>, delta: f64) -> CliResult<AltSpec> {
    match (family, df2) {
        (Family::T, None) => AltSpec::t(df, delta).map_err(CliError::param),
        (Family::T, Some(_)) => Err(CliError::Param("--df2 applies to the F family only".into())),
        (Family::F, Some(q)) => AltSpec::f(df, q, delta).map_err(CliError::param),
        (Family::F, None) => Err(CliError::Param("the F family needs --df2".into())),
    }
}

fn test_region(args: &TestArgs, k: usize) -> CliResult<RegionFamily> {
    let ones = vec![1.0; k];
    let region = match args.method {
        MethodName::Min => RegionFamily::min(k),
        MethodName::Product => RegionFamily::product(k),
        MethodName::Stouffer => {
            let w = args.weights.as_deref().map(|w| param_list(w, "--weights")).transpose()?;
            RegionFamily::stouffer(w.unwrap_or(ones))
        }
        MethodName::Rectangle => {
            let c = args.c.as_deref().map(|c| param_list(c, "--c")).transpose()?;
            RegionFamily::rectangle(c.unwrap_or(ones))
        }
        MethodName::Ellipsoid => {
            let nu = args.nu.as_deref().ok_or_else(|| CliError::Param("ellipsoid needs --nu".into()))?;
            let eps = args.eps.ok_or_else(|| CliError::Param("ellipsoid needs --eps".into()))?;
            let mode = parse_volume_mode(&args.mode, args.samples.unwrap_or(1_000_000), args.seed)
                .map_err(|e| CliError::Param(e.to_string()))?;
            let spec = EllipsoidSpec::new(param_list(nu, "--nu")?, eps).map_err(CliError::param)?;
            RegionFamily::ellipsoid(spec, mode)
        }
        MethodName::Oracle => {
            let df = args.df.ok_or_else(|| CliError::Param("oracle needs --df".into()))?;
            let deltas = args.delta.as_deref().ok_or_else(|| CliError::Param("oracle needs --delta".into()))?;
            let alts = param_list(deltas, "--delta")?
                .into_iter()
                .map(|d| alternative(args.family, df, args.df2, d))
                .collect::<CliResult<Vec<_>>>()?;
            let oracle =
                OracleLr::new(alts, args.samples.unwrap_or(ORACLE_SAMPLES), args.seed).map_err(CliError::param)?;
            Ok(RegionFamily::oracle_lr(Arc::new(oracle)))
        }
    }
    .map_err(CliError::param)?;
    if region.dim() != k {
        return Err(CliError::Param(format!("method parameters have {} entries, data has K = {k}", region.dim())));
    }
    Ok(region)
}

#[derive(Serialize)]
struct TestResults {
    n: usize,
    k: usize,
    cutoff: f64,
    l: usize,
    rejected: Vec<usize>,
    scores: Vec<f64>,
    rejected_flags: Vec<bool>,
}

fn cmd_test(args: &TestArgs) -> CliResult<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Param(format!("alpha = {} not in (0, 1)", args.alpha)));
    }
    let pvals = input::read_pvalues(&args.input)?;
    let region = test_region(args, pvals.k())?;
    let res = nested_region_test(&pvals, &region, args.alpha).map_err(CliError::param)?;
    let mut flags = vec![false; pvals.n()];
    for i in &res.rejected {
        flags[*i] = true;
    }
    println!("n = {}, K = {}, method = {:?}, alpha = {}", pvals.n(), pvals.k(), region.kind(), args.alpha);
    println!("cutoff = {:e}", res.cutoff);
    let shown: Vec<String> = res.rejected.iter().take(50).map(usize::to_string).collect();
    let more = if res.rejected.len() > 50 { ", ..." } else { "" };
    println!("rejected {}: [{}{more}]", res.rejected.len(), shown.join(", "));
    let inputs = json!({
        "input": args.input.display().to_string(),
        "method": format!("{:?}", region.kind()),
        "alpha": args.alpha,
        "nu": args.nu, "eps": args.eps, "c": args.c, "weights": args.weights,
        "mode": args.mode, "df": args.df, "df2": args.df2, "delta": args.delta, "samples": args.samples,
    });
    let results = TestResults {
        n: pvals.n(),
        k: pvals.k(),
        cutoff: res.cutoff,
        l: res.l,
        rejected: res.rejected,
        scores: res.scores,
        rejected_flags: flags,
    };
    ResultsDocument::new("test", Some(args.seed), inputs, results).write(args.output.as_deref())
}

fn cmd_params(args: &ParamsArgs) -> CliResult<()> {
    let ctl = SeriesControl::default();
    let (eps, gamma, r) = match (args.family, args.df2) {
        (Family::T, None) => t_eps_gamma(args.df, args.delta, &ctl),
        (Family::F, Some(q)) => f_eps_gamma(args.df, q, args.delta, &ctl),
        (Family::T, Some(_)) => return Err(CliError::Param("--df2 applies to the F family only".into())),
        (Family::F, None) => return Err(CliError::Param("the F family needs --df2".into())),
    }
    .map_err(CliError::param)?;
    println!("eps      = {eps}");
    println!("gamma    = {gamma}");
    println!("g(0) = r = {r}");
    let floor = args.a.map(|a| alpha_star(a, r).map_err(CliError::param)).transpose()?;
    if let Some((star, min_pfdr)) = floor {
        println!("alpha_*  = {star}");
        println!("min pFDR = {min_pfdr}");
    }
    let inputs = json!({
        "family": if args.family == Family::T { "t" } else { "f" },
        "df": args.df, "df2": args.df2, "delta": args.delta, "a": args.a,
    });
    let results = json!({
        "eps": eps, "gamma": gamma, "r": r,
        "alpha_star": floor.map(|f| f.0), "min_pfdr": floor.map(|f| f.1),
    });
    ResultsDocument::new("params", None, inputs, results).write(args.output.as_deref())
}

fn cmd_volume(args: &VolumeArgs) -> CliResult<()> {
    let nu = args.nu.as_deref().map(|v| param_list(v, "--nu")).transpose()?;
    let k = match (&nu, args.k) {
        (Some(v), Some(k)) if v.len() != k => {
            return Err(CliError::Param(format!("--k = {k} but --nu has {} entries", v.len())))
        }
        (Some(v), _) => v.len(),
        (None, Some(k)) => k,
        (None, None) => return Err(CliError::Param("give --nu or --k".into())),
    };
    let inputs = json!({ "eps": args.eps, "nu": nu, "k": k, "u": args.u, "mode": args.mode });
    let Some(u) = args.u else {
        let v = v_eps(args.eps, k).map_err(CliError::param)?;
        println!("V_eps(eps = {}, K = {k}) = {v}", args.eps);
        let results = json!({ "v_eps": v });
        return ResultsDocument::new("volume", None, inputs, results).write(args.output.as_deref());
    };
    let nu = nu.ok_or_else(|| CliError::Param("--u needs --nu".into()))?;
    let spec = EllipsoidSpec::new(nu, args.eps).map_err(CliError::param)?;
    let mode = parse_volume_mode(&args.mode, args.samples, args.seed)
        .map_err(|e| CliError::Param(e.to_string()))?
        .unwrap_or_else(|| VolumeMode::auto(&spec));
    let (volume, se) = match mode {
        VolumeMode::MonteCarlo { samples, seed } => {
            let (v, se) = h_mc(u, &spec, samples, seed).map_err(CliError::param)?;
            (v, Some(se))
        }
        other => (Ellipsoid::new(spec, Some(other)).map_err(CliError::param)?.volume(u), None),
    };
    match se {
        Some(se) => println!("h(u = {u}) = {volume} (se {se:e}, {})", mode.name()),
        None => println!("h(u = {u}) = {volume} ({})", mode.name()),
    }
    let results = json!({ "mode": mode.name(), "volume": volume, "se": se });
    ResultsDocument::new("volume", None, inputs, results).write(args.output.as_deref())
}

fn load_config(args: &SimArgs) -> CliResult<(RawConfig, RunConfig)> {
    let mut raw = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            RawConfig::parse(&text, &path.display().to_string())?
        }
        (None, Some(name)) => {
            let p = presets::find(name)
                .ok_or_else(|| CliError::Input(format!("unknown preset `{name}`; run `mvfdr presets` for the list")))?;
            RawConfig::parse(p.text, p.name)?
        }
        (None, None) => return Err(CliError::Input("give --config or --preset".into())),
    };
    for s in &args.set {
        raw.set(s)?;
    }
    let mut cfg = RunConfig::from_raw(&raw)?;
    if args.full_scale {
        let (runs, nulls) = if cfg.s_grid.is_some() { (2000, 5000) } else { (3000, 6000) };
        cfg.experiment.n_runs = runs;
        cfg.experiment.n_nulls = nulls;
    }
    cfg.experiment.validate().map_err(CliError::from_config)?;
    Ok((raw, cfg))
}

fn config_echo(raw: &RawConfig, cfg: &RunConfig) -> serde_json::Value {
    json!({
        "keys": raw.entries(),
        "experiment": cfg.experiment,
        "s_grid": cfg.s_grid,
    })
}

fn fmt_est(e: &mvfdr::simulation::Estimate) -> String {
    if e.count == 0 {
        "     n/a        ".to_string()
    } else {
        format!("{:.4} ({:.4})", e.mean, e.se)
    }
}

fn print_floor(cfg: &RunConfig) {
    let e = &cfg.experiment;
    println!("target FDR (1 - a) alpha = {:.4}", (1.0 - e.a) * e.alpha);
    if e.r == 0.0 && e.a > 0.0 {
        if let Ok((star, floor)) = e.alpha_star() {
            println!("alpha_* = {star:.4e}, pFDR floor (1 - a) alpha_* = {floor:.4e}");
        }
    }
}

fn print_stats(label: &str, s: &RunStats) {
    println!(
        "{label:<10} FDR {}  pFDR {}  power {}  min power {:.4}",
        fmt_est(&s.fdr),
        fmt_est(&s.pfdr),
        fmt_est(&s.power),
        s.min_power
    );
}

fn write_scan_plots(dir: &Path, rows: &[TuneRow]) -> CliResult<()> {
    type Pick = fn(&RunStats) -> f64;
    let metrics: [(&str, Pick); 3] = [("power", |s| s.power.mean), ("fdr", |s| s.fdr.mean), ("pfdr", |s| s.pfdr.mean)];
    for (metric, pick) in metrics {
        for (tag, side) in [("e", 0), ("r", 1)] {
            let pts: Vec<(f64, f64)> =
                rows.iter().map(|r| (r.log2_s, pick(if side == 0 { &r.ellipsoid } else { &r.rectangle }))).collect();
            write_curve(dir, &format!("{metric}_{tag}"), ("log2_s", metric), &pts)?;
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimArgs) -> CliResult<()> {
    let (raw, cfg) = load_config(args)?;
    let e = &cfg.experiment;
    println!(
        "K = {}, df = {}, mu = {:?}, a = {}, alpha = {}, r = {}, {} runs x {} nulls, seed {}",
        e.k(),
        e.df,
        e.mu,
        e.a,
        e.alpha,
        e.r,
        e.n_runs,
        e.n_nulls,
        e.seed
    );
    print_floor(&cfg);
    let inputs = config_echo(&raw, &cfg);
    match &cfg.s_grid {
        Some(grid) => {
            let rows = tune_scan(e, grid).map_err(CliError::from_config)?;
            println!(
                "{:>7}  {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}",
                "log2 s", "e power", "e FDR", "e pFDR", "r power", "r FDR", "r pFDR"
            );
            for r in &rows {
                println!(
                    "{:>7.3}  {:>8.4} {:>8.4} {:>8.4}  {:>8.4} {:>8.4} {:>8.4}",
                    r.log2_s,
                    r.ellipsoid.power.mean,
                    r.ellipsoid.fdr.mean,
                    r.ellipsoid.pfdr.mean,
                    r.rectangle.power.mean,
                    r.rectangle.fdr.mean,
                    r.rectangle.pfdr.mean
                );
            }
            if let Some(dir) = &args.plot_dir {
                write_scan_plots(dir, &rows)?;
            }
            ResultsDocument::new("simulate", Some(e.seed), inputs, json!({ "scan": rows }))
                .write(args.output.as_deref())
        }
        None => {
            if args.plot_dir.is_some() {
                eprintln!("mvfdr: --plot-dir is only used with s_grid; nothing written");
            }
            let stats = run_experiment(e).map_err(CliError::from_config)?;
            print_stats(e.method.name(), &stats);
            ResultsDocument::new("simulate", Some(e.seed), inputs, json!({ "stats": stats }))
                .write(args.output.as_deref())
        }
    }
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    let (raw, mut cfg) = load_config(&args.sim)?;
    if let Some(b) = &args.baselines {
        cfg.baselines = parse_baselines(b)?;
    }
    let e = &cfg.experiment;
    println!(
        "K = {}, df = {}, mu = {:?}, a = {}, alpha = {}, r = {}, {} runs x {} nulls, seed {}",
        e.k(),
        e.df,
        e.mu,
        e.a,
        e.alpha,
        e.r,
        e.n_runs,
        e.n_nulls,
        e.seed
    );
    print_floor(&cfg);
    let cmp = run_comparison(e, &cfg.baselines).map_err(CliError::from_config)?;
    print_stats(e.method.name(), &cmp.reference);
    println!("{:<11} {:<16} {:<16} matched runs", "baseline", "FDR", "pFDR");
    for row in &cmp.rows {
        println!("{:<11} {:<16} {:<16} {}", row.baseline.name(), fmt_est(&row.fdr), fmt_est(&row.pfdr), row.pfdr.count);
    }
    let mut inputs = config_echo(&raw, &cfg);
    inputs["baselines"] = json!(cfg.baselines);
    ResultsDocument::new("compare", Some(e.seed), inputs, json!({ "comparison": cmp }))
        .write(args.sim.output.as_deref())
}
