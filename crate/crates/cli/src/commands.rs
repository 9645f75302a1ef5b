//! Subcommand arguments and drivers.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gtot_core::finetune::{gradcheck_instance, gradient_check, run_demo, DemoConfig};
use gtot_core::gtot::gtot_cost;
use gtot_core::{
    build_mask, combined_objective, cosine_cost, exact_mwd, mgwd_regularizer, normalize_cost, solve_mwd, CostMatrix,
    Error, GraphTopology, MaskMatrix, MaskSpec, ProbVec, SolverConfig, TransportPlan,
};

use crate::io::{parse_weights, read_graph, read_matrix};
use crate::report::{ConfigEcho, ResultReport};
use crate::CliError;

/// Largest gradient-check relative error accepted by `demo --gradcheck`.
pub const GRADCHECK_LIMIT: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "gtot", version, about = "Masked optimal transport and graph-topology regularizers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Masked Wasserstein distance between two marginals.
    #[command(version)]
    Mwd(MwdArgs),
    /// Graph regularizers between two embedding matrices on one graph.
    #[command(version)]
    Gtot(GtotArgs),
    /// Fine-tune a toy message-passing network on synthetic data.
    #[command(version)]
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskKind {
    Ones,
    Identity,
    Graph,
    File,
}

impl MaskKind {
    fn name(self) -> &'static str {
        match self {
            MaskKind::Ones => "ones",
            MaskKind::Identity => "identity",
            MaskKind::Graph => "graph",
            MaskKind::File => "file",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tau: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Max-normalize the cost before solving.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Include the transport plan in the report.
    #[arg(long)]
    pub emit_plan: bool,
    /// Report destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip one header line in every CSV input.
    #[arg(long)]
    pub header: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig { epsilon: self.epsilon, tau: self.tau, max_iter: self.max_iter, ..SolverConfig::default() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MaskArgs {
    #[arg(long, value_enum, default_value_t = MaskKind::Ones)]
    pub mask: MaskKind,
    /// 0/1 CSV used with `--mask file`.
    #[arg(long)]
    pub mask_file: Option<PathBuf>,
    /// Neighbourhood radius used with `--mask graph`.
    #[arg(long, default_value_t = 1)]
    pub hops: u32,
}

#[derive(Debug, Args)]
pub struct MwdArgs {
    /// Cost matrix CSV.
    #[arg(long, conflicts_with_all = ["source", "target"])]
    pub cost: Option<PathBuf>,
    /// Source embeddings CSV.
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    /// Target embeddings CSV.
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
    /// Use the cosine dissimilarity of the embeddings as cost.
    #[arg(long)]
    pub cosine: bool,
    /// Graph JSON used with `--mask graph`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Source marginal as comma-separated weights; uniform when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub marginal_a: Option<String>,
    /// Target marginal as comma-separated weights; uniform when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub marginal_b: Option<String>,
    /// Also solve exactly and report the gap.
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct GtotArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub mask: MaskArgs,
    /// Also compute the edge-level regularizer.
    #[arg(long)]
    pub mgwd: bool,
    #[arg(long, default_value_t = gtot_core::gromov::DEFAULT_OUTER_ITERS)]
    pub outer_iters: usize,
    /// Weight of the node-level term in the combined penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the edge-level term in the combined penalty.
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// History CSV destination; standard output when absent.
    #[arg(long)]
    pub out_history: Option<PathBuf>,
    /// Check the training gradient by finite differences before training.
    #[arg(long)]
    pub gradcheck: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mwd(args) => cmd_mwd(&args),
        Command::Gtot(args) => cmd_gtot(&args),
        Command::Demo(args) => cmd_demo(&args),
    }
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::Input(format!("stdout: {e}")))
        }
    }
}

fn marginal(text: &Option<String>, n: usize, which: &str) -> Result<ProbVec, CliError> {
    match text {
        None => Ok(ProbVec::uniform(n)),
        Some(t) => {
            let w = parse_weights(t)?;
            if w.len() != n {
                return Err(CliError::Input(format!("{which} has {} entries, expected {n}", w.len())));
            }
            Ok(ProbVec::new(w)?)
        }
    }
}

fn graph_spec(hops: u32) -> Result<MaskSpec, CliError> {
    match hops {
        0 => Err(CliError::Input("--hops must be at least 1".into())),
        1 => Ok(MaskSpec::Adjacency),
        k => Ok(MaskSpec::AdjacencyPower(k)),
    }
}

fn read_mask_file(args: &MaskArgs, header: bool) -> Result<MaskMatrix, CliError> {
    let path = args.mask_file.as_ref().ok_or_else(|| CliError::Input("--mask file requires --mask-file".into()))?;
    let values = read_matrix(path, header)?;
    if let Some(((i, j), x)) = values.indexed_iter().find(|(_, &x)| x != 0.0 && x != 1.0) {
        return Err(CliError::Input(format!("{}: entry ({i}, {j}) is {x}, expected 0 or 1", path.display())));
    }
    Ok(MaskMatrix::new(values.mapv(|x| x == 1.0))?)
}

fn check_dim(mask: &MaskMatrix, n: usize, m: usize) -> Result<(), CliError> {
    if mask.dim() != (n, m) {
        let (r, c) = mask.dim();
        return Err(CliError::Input(format!("mask is {r}x{c} but the cost is {n}x{m}")));
    }
    Ok(())
}

fn plan_rows(plan: &TransportPlan) -> Vec<Vec<f64>> {
    plan.values().rows().into_iter().map(|r| r.to_vec()).collect()
}

fn echo(command: &str, solver: &SolverArgs, normalize: bool, mask: &MaskArgs) -> ConfigEcho {
    ConfigEcho {
        command: command.into(),
        epsilon: solver.epsilon,
        tau: solver.tau,
        max_iter: solver.max_iter,
        normalize,
        mask: mask.mask.name().into(),
        hops: mask.hops,
        graph: None,
        mask_file: path_string(&mask.mask_file),
        cost: None,
        source: None,
        target: None,
        header: solver.header,
        marginal_a: None,
        marginal_b: None,
        outer_iters: None,
        lambda: None,
        beta: None,
    }
}

pub fn cmd_mwd(args: &MwdArgs) -> Result<(), CliError> {
    let header = args.solver.header;
    let normalize = args.solver.normalize.unwrap_or(false);
    let mut cost = match (&args.cost, &args.source, &args.target) {
        (Some(path), _, _) => {
            if args.cosine {
                return Err(CliError::Input("--cosine applies to --source/--target only".into()));
            }
            CostMatrix::new(read_matrix(path, header)?)?
        }
        (None, Some(s), Some(t)) => {
            let xs = read_matrix(s, header)?;
            let xt = read_matrix(t, header)?;
            if !args.cosine {
                return Err(CliError::Input("embedding inputs need --cosine to define a cost".into()));
            }
            cosine_cost(xs.view(), xt.view())?
        }
        _ => return Err(CliError::Input("provide --cost or --source and --target".into())),
    };
    if normalize {
        cost = normalize_cost(&cost)?;
    }
    let (n, m) = cost.dim();
    let mask = match args.mask.mask {
        MaskKind::Ones => MaskMatrix::ones(n, m),
        MaskKind::Identity => {
            if n != m {
                return Err(CliError::Input(format!("identity mask needs a square cost, got {n}x{m}")));
            }
            MaskMatrix::identity(n)
        }
        MaskKind::Graph => {
            let path = args.graph.as_ref().ok_or_else(|| CliError::Input("--mask graph requires --graph".into()))?;
            let g = read_graph(path)?;
            if g.n != n || g.n != m {
                return Err(CliError::Input(format!("graph has {} vertices but the cost is {n}x{m}", g.n)));
            }
            build_mask(&g, &graph_spec(args.mask.hops)?)?
        }
        MaskKind::File => read_mask_file(&args.mask, header)?,
    };
    check_dim(&mask, n, m)?;
    let a = marginal(&args.marginal_a, n, "--marginal-a")?;
    let b = marginal(&args.marginal_b, m, "--marginal-b")?;
    let cfg = args.solver.config();

    let sol = solve_mwd(&cost, &mask, &a, &b, &cfg)?;
    let (oracle_value, oracle_gap) = if args.oracle {
        match exact_mwd(&cost, &mask, &a, &b) {
            Ok(ex) => (Some(ex.value), Some((sol.distance - ex.value).abs())),
            Err(Error::TooLarge(msg)) => {
                eprintln!("gtot: oracle skipped: {msg}");
                (None, None)
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        (None, None)
    };

    let mut config = echo("mwd", &args.solver, normalize, &args.mask);
    config.graph = path_string(&args.graph);
    config.cost = path_string(&args.cost);
    config.source = path_string(&args.source);
    config.target = path_string(&args.target);
    config.marginal_a = Some(a.as_slice().to_vec());
    config.marginal_b = Some(b.as_slice().to_vec());
    let report = ResultReport {
        distance: sol.distance,
        iterations: sol.report.iterations,
        converged: sol.report.converged,
        marginal_residual: sol.report.marginal_residual(),
        plan: args.solver.emit_plan.then(|| plan_rows(&sol.plan)),
        oracle_value,
        oracle_gap,
        mwd: None,
        mgwd: None,
        combined_penalty: None,
        config,
    };
    write_output(&args.solver.out, &report.to_json())
}

fn gtot_spec(args: &MaskArgs, topology: &GraphTopology, header: bool) -> Result<(MaskSpec, Option<MaskMatrix>), CliError> {
    match args.mask {
        MaskKind::Ones => Ok((MaskSpec::Ones, None)),
        MaskKind::Identity => Ok((MaskSpec::Identity, None)),
        MaskKind::Graph => Ok((graph_spec(args.hops)?, None)),
        MaskKind::File => {
            let mask = read_mask_file(args, header)?;
            check_dim(&mask, topology.n, topology.n)?;
            Ok((MaskSpec::Ones, Some(mask)))
        }
    }
}

pub fn cmd_gtot(args: &GtotArgs) -> Result<(), CliError> {
    let header = args.solver.header;
    let normalize = args.solver.normalize.unwrap_or(true);
    let topology = read_graph(&args.graph)?;
    let xs = read_matrix(&args.source, header)?;
    let xt = read_matrix(&args.target, header)?;
    for (name, x) in [("source", &xs), ("target", &xt)] {
        if x.nrows() != topology.n {
            return Err(CliError::Input(format!("{name} has {} rows, graph has {} vertices", x.nrows(), topology.n)));
        }
    }
    if xs.ncols() != xt.ncols() {
        return Err(CliError::Input(format!("source has {} columns, target has {}", xs.ncols(), xt.ncols())));
    }
    let cfg = args.solver.config();
    let (spec, file_mask) = gtot_spec(&args.mask, &topology, header)?;

    let q = ProbVec::uniform(topology.n);
    let (mwd, plan, report) = match &file_mask {
        Some(mask) => {
            let cost = gtot_cost(&topology, xs.view(), xt.view(), mask, normalize)?;
            let sol = solve_mwd(&cost, mask, &q, &q, &cfg)?;
            (sol.distance, sol.plan, sol.report)
        }
        None => {
            let r = gtot_core::gtot_regularizer(&topology, xs.view(), xt.view(), &spec, &cfg, normalize)?;
            (r.value, r.plan, r.report)
        }
    };

    let mgwd = if args.mgwd || args.beta.is_some() {
        let value = match &file_mask {
            Some(mask) => {
                let (cx, cy) = gtot_core::gtot::intra_costs(xs.view(), xt.view(), normalize)?;
                gtot_core::solve_mgwd(
                    &cx,
                    &cy,
                    mask,
                    &q,
                    &q,
                    &cfg,
                    args.outer_iters,
                    gtot_core::GwLossDecomposition::SquaredLoss,
                )?
                .distance
            }
            None => mgwd_regularizer(&topology, xs.view(), xt.view(), &spec, &cfg, args.outer_iters, normalize)?.value,
        };
        Some(value)
    } else {
        None
    };
    let combined_penalty = match (args.lambda, args.beta) {
        (None, None) => None,
        (lambda, beta) => Some(combined_objective(0.0, mwd, mgwd.unwrap_or(0.0), lambda.unwrap_or(0.0), beta.unwrap_or(0.0))),
    };

    let mut config = echo("gtot", &args.solver, normalize, &args.mask);
    config.graph = Some(args.graph.display().to_string());
    config.source = Some(args.source.display().to_string());
    config.target = Some(args.target.display().to_string());
    config.outer_iters = mgwd.map(|_| args.outer_iters);
    config.lambda = args.lambda;
    config.beta = args.beta;
    let report = ResultReport {
        distance: mwd,
        iterations: report.iterations,
        converged: report.converged,
        marginal_residual: report.marginal_residual(),
        plan: args.solver.emit_plan.then(|| plan_rows(&plan)),
        oracle_value: None,
        oracle_gap: None,
        mwd: Some(mwd),
        mgwd,
        combined_penalty,
        config,
    };
    write_output(&args.solver.out, &report.to_json())
}

pub fn demo_config(args: &DemoArgs) -> DemoConfig {
    let mut cfg = DemoConfig { seed: args.seed, ..DemoConfig::default() };
    cfg.train.lambda = args.lambda;
    cfg.train.beta = args.beta;
    cfg.train.epochs = args.epochs;
    cfg.train.learning_rate = args.lr;
    cfg.train.seed = args.seed;
    cfg
}

pub fn cmd_demo(args: &DemoArgs) -> Result<(), CliError> {
    let cfg = demo_config(args);
    cfg.train.validate()?;
    if args.gradcheck {
        let (model, source, sample) = gradcheck_instance(&cfg, args.seed)?;
        let err = gradient_check(&model, &source, &sample, &cfg.train)?;
        if err.is_nan() || err > GRADCHECK_LIMIT {
            return Err(CliError::GradientCheck(format!("relative error {err:e} exceeds {GRADCHECK_LIMIT:e}")));
        }
        eprintln!("gradient check passed: max relative error {err:e}");
    }
    let outcome = run_demo(&cfg)?;
    let csv = outcome.history.to_csv();
    let last = outcome.history.last().ok_or_else(|| CliError::Input("empty training history".into()))?;
    let summary = format!("final objective {:.12e}\nweight distance {:.12e}\n", last.objective, last.weight_distance);
    match &args.out_history {
        Some(path) => {
            fs::write(path, csv).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            write_output(&None, &summary)
        }
        None => {
            write_output(&None, &csv)?;
            eprint!("{summary}");
            Ok(())
        }
    }
}
