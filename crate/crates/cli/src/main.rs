use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tvvar::io::{self, LagPolicy, Provenance, ResultBundle, RunConfig};
use tvvar::mc::{self, Table1Config, Table2Config, Table3Config};
use tvvar::select::{cv_bandwidth, BandwidthPolicy};
use tvvar::workflow;
use tvvar::{KernelSpec, ObservedPanel, TvVarError};

#[derive(Parser)]
#[command(name = "tvvar", version, about = "Time-varying VAR estimation, impulse responses and constancy tests")]
struct Cli {
    /// Worker threads for replications and bootstrap draws.
    #[arg(long, global = true, env = "TVVAR_THREADS")]
    threads: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Choose the lag order by the penalized local residual criterion.
    SelectLag(ModelArgs),
    /// Fit the model and write per-grid estimates.
    Fit(ModelArgs),
    /// Structural impulse responses with pointwise standard errors.
    Irf(IrfArgs),
    /// Bootstrap constancy tests for coefficient blocks.
    TestStability(TestArgs),
    /// Cross-validated bandwidth for a fixed lag order.
    Bandwidth(ModelArgs),
    /// Run one of the Monte Carlo experiments.
    Simulate(SimArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fixed lag order.
    #[arg(long, conflicts_with = "p_max")]
    p: Option<usize>,
    /// Select the lag order over 1..=P_MAX.
    #[arg(long)]
    p_max: Option<usize>,
    /// Bandwidth: a number, `cv` for the default grid, or `cv:h1,h2,...`.
    #[arg(long)]
    h: Option<String>,
    /// Reporting grid size.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IrfArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `short-run` or `long-run`.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    horizons: Option<usize>,
    /// Also report running sums of the responses.
    #[arg(long)]
    cumulative: bool,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Restriction block (`all`, `intercept`, `lags`, `A1`..`Ap`); repeatable.
    #[arg(long = "block")]
    blocks: Vec<String>,
    /// Bootstrap replications.
    #[arg(long = "B")]
    bootstrap: Option<usize>,
    /// Average the statistic over interior points only.
    #[arg(long)]
    trim: bool,
}

#[derive(Args)]
struct SimArgs {
    /// 1: lag selection, 2: estimation accuracy, 3: size and power.
    #[arg(long, required_unless_present = "dgp")]
    table: Option<u8>,
    /// Write one sample path (`eq42`, `eq43`, `macro3`) to `data.csv` instead.
    #[arg(long, conflicts_with = "table")]
    dgp: Option<String>,
    /// Local-alternative scale for `eq43`.
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<usize>>,
    /// Bootstrap replications (table 3).
    #[arg(long = "B", default_value_t = 199)]
    bootstrap: usize,
    /// Fresh bootstrap null per replication (table 3).
    #[arg(long)]
    per_replication_bootstrap: bool,
    #[arg(long, default_value = "tvvar-out")]
    output: PathBuf,
}

fn parse_bandwidth(s: &str) -> anyhow::Result<BandwidthPolicy> {
    if s == "cv" {
        return Ok(BandwidthPolicy::CvDefault);
    }
    if let Some(list) = s.strip_prefix("cv:") {
        let grid = list
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("bad bandwidth grid '{list}'"))?;
        return Ok(BandwidthPolicy::Cv(grid));
    }
    let h: f64 = s.parse().with_context(|| format!("bad bandwidth '{s}'"))?;
    Ok(BandwidthPolicy::Fixed(h))
}

impl ModelArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(i) = &self.input {
            cfg.input = Some(i.display().to_string());
        }
        if let Some(o) = &self.output {
            cfg.output = o.display().to_string();
        }
        if let Some(p) = self.p {
            cfg.lag = LagPolicy::Fixed { p };
        }
        if let Some(p_max) = self.p_max {
            cfg.lag = LagPolicy::Select { p_max };
        }
        if let Some(h) = &self.h {
            cfg.bandwidth = parse_bandwidth(h).map_err(|e| TvVarError::Config(e.to_string()))?;
        }
        if let Some(g) = self.grid {
            cfg.grid = g;
        }
        if let Some(l) = self.level {
            cfg.level = l;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Ctx {
    quiet: bool,
    kernel: KernelSpec,
}

impl Ctx {
    fn progress(&self, msg: &str) {
        if !self.quiet {
            eprintln!("tvvar: {msg}");
        }
    }

    fn emit<T: Serialize>(&self, dir: &Path, name: &str, prov: &Provenance, result: T) -> anyhow::Result<()> {
        let path = dir.join(name);
        ResultBundle {
            provenance: prov.clone(),
            result,
        }
        .write(&path)?;
        self.progress(&format!("wrote {}", path.display()));
        Ok(())
    }

    fn emit_csv<R: Serialize>(&self, dir: &Path, name: &str, prov: &Provenance, rows: &[R]) -> anyhow::Result<()> {
        let path = dir.join(name);
        io::write_csv(&path, prov, rows)?;
        self.progress(&format!("wrote {}", path.display()));
        Ok(())
    }
}

fn load_input(cfg: &RunConfig) -> anyhow::Result<ObservedPanel> {
    let Some(input) = &cfg.input else {
        return Err(TvVarError::Config("no input file given (--input or `input` in the config)".into()).into());
    };
    Ok(io::load_csv(input)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx {
        quiet: cli.quiet,
        kernel: KernelSpec::epanechnikov(),
    };
    match cli.command {
        Command::SelectLag(args) => {
            let mut cfg = args.config()?;
            if matches!(cfg.lag, LagPolicy::Fixed { .. }) {
                bail!(TvVarError::Config("select-lag needs --p-max, not --p".into()));
            }
            let panel = load_input(&cfg)?;
            ctx.progress("selecting lag order");
            let (_, sel) = workflow::resolve_lag(&panel, &cfg.lag, &cfg.bandwidth, &ctx.kernel)?;
            let sel = sel.expect("selection policy");
            cfg.tests.clear();
            let prov = Provenance::new("select-lag", cfg.hash(), cfg.seed);
            println!("selected p = {} (h = {:.4})", sel.chosen, sel.chosen_h());
            ctx.emit(Path::new(&cfg.output), "lag_selection.json", &prov, &sel)
        }
        Command::Fit(args) => {
            let cfg = args.config()?;
            let panel = load_input(&cfg)?;
            ctx.progress("fitting");
            let model = workflow::fit_model(&panel, &cfg, &ctx.kernel)?;
            let prov = Provenance::new("fit", cfg.hash(), cfg.seed);
            let r = &model.report;
            println!("p = {}, h = {:.4}, T = {}, RSS = {:.6}", r.p, r.h, r.sample_len, r.rss);
            if let Some(bg) = &r.bg_lm {
                println!("BG-LM({}) = {:.3}, df = {}, p-value = {:.4}", bg.order, bg.statistic, bg.df, bg.p_value);
            }
            let dir = PathBuf::from(&cfg.output);
            ctx.emit_csv(&dir, "estimates.csv", &prov, &workflow::estimate_rows(r))?;
            ctx.emit(&dir, "fit.json", &prov, r)
        }
        Command::Irf(args) => {
            let mut cfg = args.model.config()?;
            if let Some(s) = &args.scheme {
                cfg.scheme = s.parse()?;
            }
            if let Some(j) = args.horizons {
                cfg.horizons = j;
            }
            cfg.cumulative |= args.cumulative;
            let panel = load_input(&cfg)?;
            ctx.progress("fitting");
            let model = workflow::fit_model(&panel, &cfg, &ctx.kernel)?;
            ctx.progress("computing impulse responses");
            let surface = workflow::irf_surface(&model, cfg.scheme, cfg.horizons, cfg.cumulative, &ctx.kernel);
            if !surface.skipped.is_empty() {
                ctx.progress(&format!("{} grid points skipped", surface.skipped.len()));
            }
            if surface.points.is_empty() {
                bail!(TvVarError::Domain("identification failed at every grid point".into()));
            }
            let prov = Provenance::new("irf", cfg.hash(), cfg.seed);
            let dir = PathBuf::from(&cfg.output);
            ctx.emit_csv(&dir, "irf.csv", &prov, &workflow::irf_rows(&surface))?;
            ctx.emit(&dir, "irf.json", &prov, &surface)
        }
        Command::TestStability(args) => {
            let mut cfg = args.model.config()?;
            if !args.blocks.is_empty() {
                cfg.tests = args.blocks.clone();
            }
            if let Some(b) = args.bootstrap {
                cfg.bootstrap = b;
            }
            cfg.trim_interior |= args.trim;
            cfg.validate()?;
            let panel = load_input(&cfg)?;
            let (p, _) = workflow::resolve_lag(&panel, &cfg.lag, &cfg.bandwidth, &ctx.kernel)?;
            let aligned = panel.aligned_for_lag(p)?;
            let (h, _) = tvvar::select::resolve_bandwidth(&aligned, p, &cfg.bandwidth, &ctx.kernel)?;
            ctx.progress(&format!("bootstrap with B = {} at p = {p}, h = {h:.4}", cfg.bootstrap));
            let reports = workflow::stability_tests(&aligned, p, h, &cfg, &ctx.kernel)?;
            for r in &reports {
                println!(
                    "{:<10} q_hat = {:.6}  q_star = {:8.3}  p-value = {:.3}",
                    r.restriction.label, r.q_hat, r.q_star, r.p_value
                );
            }
            let prov = Provenance::new("test-stability", cfg.hash(), cfg.seed);
            ctx.emit(Path::new(&cfg.output), "stability.json", &prov, &reports)
        }
        Command::Bandwidth(args) => {
            let cfg = args.config()?;
            let LagPolicy::Fixed { p } = cfg.lag else {
                bail!(TvVarError::Config("bandwidth needs a fixed --p".into()));
            };
            let panel = load_input(&cfg)?.aligned_for_lag(p)?;
            let grid = match &cfg.bandwidth {
                BandwidthPolicy::Fixed(_) => BandwidthPolicy::CvDefault.grid(panel.len()),
                other => other.grid(panel.len()),
            };
            let search = cv_bandwidth(&panel, p, &grid, &ctx.kernel)?;
            println!("h_cv = {:.4}", search.chosen);
            let prov = Provenance::new("bandwidth", cfg.hash(), cfg.seed);
            ctx.emit(Path::new(&cfg.output), "bandwidth.json", &prov, &search)
        }
        Command::Simulate(args) => simulate(&ctx, args),
    }
}

fn simulate(ctx: &Ctx, args: SimArgs) -> anyhow::Result<()> {
    let dir = args.output.clone();
    let Some(table) = args.table else {
        return simulate_path(ctx, &args);
    };
    ctx.progress(&format!("table {table} with {} replications", args.reps));
    match table {
        1 => {
            let mut cfg = Table1Config {
                reps: args.reps,
                seed: args.seed,
                ..Table1Config::default()
            };
            if let Some(t) = args.t {
                cfg.t_list = t;
            }
            let res = mc::run_table1(&cfg, &ctx.kernel)?;
            let prov = Provenance::new("simulate-table1", io::json_hash(&cfg), cfg.seed);
            for r in &res.aggregates {
                println!("T = {:4}  p<2 {:.3}  p=2 {:.3}  p>2 {:.3}", r.t, r.below, r.equal, r.above);
            }
            ctx.emit_csv(&dir, "table1.csv", &prov, &res.aggregates)?;
            ctx.emit(&dir, "table1.json", &prov, &res)
        }
        2 => {
            let mut cfg = Table2Config {
                reps: args.reps,
                seed: args.seed,
                ..Table2Config::default()
            };
            if let Some(t) = args.t {
                cfg.t_list = t;
            }
            let res = mc::run_table2(&cfg, &ctx.kernel)?;
            let prov = Provenance::new("simulate-table2", io::json_hash(&cfg), cfg.seed);
            for c in &res.aggregates {
                let cov = c.coverage.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!("T = {:4}  {:<6} RMSE {:.3}  coverage {cov}", c.t, c.quantity, c.rmse);
            }
            ctx.emit_csv(&dir, "table2.csv", &prov, &res.aggregates)?;
            ctx.emit(&dir, "table2.json", &prov, &res)
        }
        3 => {
            let mut cfg = Table3Config {
                reps: args.reps,
                seed: args.seed,
                bootstrap: args.bootstrap,
                per_replication_bootstrap: args.per_replication_bootstrap,
                ..Table3Config::default()
            };
            if let Some(t) = args.t {
                cfg.t_list = t;
            }
            let res = mc::run_table3(&cfg, &ctx.kernel)?;
            let prov = Provenance::new("simulate-table3", io::json_hash(&cfg), cfg.seed);
            for c in &res.aggregates {
                println!(
                    "T = {:4}  h = {:.1}T^-1/5  b = {}  5% {:.3}  10% {:.3}",
                    c.t, c.alpha, c.b, c.reject_05, c.reject_10
                );
            }
            ctx.emit_csv(&dir, "table3.csv", &prov, &res.aggregates)?;
            ctx.emit(&dir, "table3.json", &prov, &res)
        }
        n => bail!(TvVarError::Config(format!("unknown table {n}, expected 1, 2 or 3"))),
    }
}

fn simulate_path(ctx: &Ctx, args: &SimArgs) -> anyhow::Result<()> {
    use tvvar::sim::{simulate_panel, DgpSpec, StabilityPolicy};
    let t = args.t.as_ref().and_then(|v| v.first().copied()).unwrap_or(246);
    let name = args.dgp.as_deref().unwrap_or_default();
    let (dgp, policy) = match name {
        "eq42" => (DgpSpec::eq42(), StabilityPolicy::Allow),
        "eq43" => {
            let h = (t as f64).powf(-0.2);
            (DgpSpec::eq43(args.b, DgpSpec::local_rate(t, h)), StabilityPolicy::Enforce)
        }
        "macro3" => (DgpSpec::macro3(), StabilityPolicy::Enforce),
        other => bail!(TvVarError::Config(format!("unknown process '{other}'"))),
    };
    let mut rng = tvvar::rng::stream(args.seed, &[tvvar::rng::tag::PANEL, t as u64]);
    let panel = simulate_panel(&dgp, t, 0, &mut rng, policy)?;
    let path = args.output.join("data.csv");
    io::write_file(&path, io::panel_csv(&panel, None).as_bytes())?;
    ctx.progress(&format!("wrote {}", path.display()));
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<TvVarError>() {
        Some(e) if e.is_data_error() => 2,
        Some(_) => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("tvvar: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tvvar: error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
