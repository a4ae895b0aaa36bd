//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and input errors, 2 when a
//! computation fails or a check does not pass. Failures print one JSON
//! object on stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fscap_core::analytic::{
    nising_markov_certificate, nising_q4_certificate, nising_ub_markov, nost_capacity, nost_certificate,
    BellmanCertificate,
};
use fscap_core::channel::{ChannelClass, ChannelKernel};
use fscap_core::dualbound::{quantized_upper_bound, DualModel, OptimizeOptions};
use fscap_core::lowerbound::{
    build_sq_chain, check_bcjr_invariance, conditional_rate, search_encoder, EncoderSearchOptions, GraphEncoder,
    BCJR_TOL,
};
use fscap_core::mdp::verify_bellman;
use fscap_core::qgraph::{EnumerateOptions, DEFAULT_BUDGET};
use fscap_core::testdist::GraphTestDist;
use fscap_core::{channel, Error};
use serde::Serialize;

use crate::format::{self, ChannelFile, FormatError};
use crate::parallel;
use crate::registry;
use crate::report::{
    AnalyticReport, CertificateOut, EnumerateReport, GraphOut, LbReport, Q4Out, TransformReport, UbReport,
    VerifyReport,
};
use crate::sweep::{self, SweepChannel, SweepConfig};

#[derive(Debug, Parser)]
#[command(name = "fscap", version, about = "Feedback capacity bounds for finite-state channels")]
struct Cli {
    /// Print reports as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Upper bound from the dual MDP.
    Ub(UbArgs),
    /// Achievable rate of a graph-based encoder.
    Lb(LbArgs),
    /// Upper and lower bounds over a range of epsilon, as CSV.
    Sweep(SweepArgs),
    /// Count valid Q-graphs.
    Enumerate(EnumerateArgs),
    /// Q-graph utilities.
    Qgraph {
        #[command(subcommand)]
        command: QgraphCommand,
    },
    /// Check a claimed solution of the Bellman equation.
    VerifyBellman(VerifyArgs),
    /// Rewrite a finite-memory channel as a unifilar one.
    Transform(ChannelArgs),
    /// Closed forms and certificates for the NOST and noisy Ising channels.
    Analytic(AnalyticArgs),
}

#[derive(Debug, Subcommand)]
enum QgraphCommand {
    /// Same as the top-level `enumerate`.
    Enumerate(EnumerateArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "source")]
struct ChannelSource {
    /// Channel file (JSON).
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Built-in channel: nost, nising, ising, post, bsc.
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Debug, Args)]
struct ChannelArgs {
    #[command(flatten)]
    source: ChannelSource,
    /// Parameter of the built-in channel.
    #[arg(long, requires = "builtin")]
    epsilon: Option<f64>,
    /// Print the channel file being used.
    #[arg(long)]
    dump: bool,
}

#[derive(Debug, Args)]
struct UbArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Registry name (markov-K, appendix-d4) or Q-graph file.
    #[arg(long, default_value = "markov-1")]
    qgraph: String,
    /// Test distribution file; uniform if neither this nor --optimize is given.
    #[arg(long, conflicts_with = "optimize")]
    testdist: Option<PathBuf>,
    /// Minimize the bound over test distributions on the graph.
    #[arg(long)]
    optimize: bool,
    /// Random optimizer starts besides the uniform one.
    #[arg(long, default_value_t = 7)]
    starts: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Skip the occupation ascent and use only the pattern search.
    #[arg(long)]
    no_ascent: bool,
    /// Build the MDP on quantized beliefs with this many points per axis
    /// (approximate; for channels with no finite dual MDP).
    #[arg(long, conflicts_with = "optimize")]
    quantize: Option<usize>,
    #[arg(long, default_value_t = 200_000, requires = "quantize")]
    state_budget: usize,
    /// Write the solved MDP as JSON.
    #[arg(long)]
    mdp_dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LbArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    #[arg(long, default_value = "markov-1")]
    qgraph: String,
    /// Encoder file: one row of input probabilities per (s, q), s major.
    #[arg(long, required_unless_present = "search", conflicts_with = "search")]
    encoder: Option<PathBuf>,
    /// Search for a BCJR-invariant encoder instead.
    #[arg(long)]
    search: bool,
    /// 1-based starting pair `s,q`; the first pair in a closed class if omitted.
    #[arg(long)]
    start: Option<String>,
    #[arg(long, default_value_t = BCJR_TOL)]
    tol: f64,
    /// Write the encoder found by --search.
    #[arg(long)]
    encoder_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    builtin: SweepChannel,
    #[arg(long)]
    eps_from: f64,
    #[arg(long)]
    eps_to: f64,
    #[arg(long)]
    steps: usize,
    /// Defaults to markov-1 for nost and appendix-d4 for nising.
    #[arg(long)]
    qgraph: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Upper bounds only.
    #[arg(long)]
    no_lb: bool,
    /// Leave runtime_ms empty so the output is byte-for-byte reproducible.
    #[arg(long)]
    omit_runtime: bool,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    ny: usize,
    /// One graph per isomorphism class.
    #[arg(long)]
    canonical: bool,
    /// Print every table as well.
    #[arg(long)]
    list: bool,
    /// Refuse scans over more candidate tables than this.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// MDP file written by `ub --mdp-dump`.
    #[arg(long)]
    mdp_dump: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    /// Relative values: a file or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    h: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Variant {
    #[value(name = "markov-1")]
    Markov1,
    #[value(name = "appendix-d4", alias = "q4")]
    Q4,
    All,
}

#[derive(Debug, Args)]
struct AnalyticArgs {
    #[arg(long, value_enum)]
    builtin: SweepChannel,
    #[arg(long)]
    epsilon: f64,
    /// Noisy Ising bound to compute.
    #[arg(long, value_enum, default_value = "all")]
    variant: Variant,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

#[derive(Serialize)]
struct FailureOut<'a> {
    error: &'a str,
    kind: &'a str,
    exit: i32,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, kind: "usage".into(), message: message.into() }
    }

    fn numeric(kind: &str, message: impl Into<String>) -> Self {
        Self { code: 2, kind: kind.into(), message: message.into() }
    }

    pub fn json(&self) -> String {
        serde_json::to_string(&FailureOut { error: &self.message, kind: &self.kind, exit: self.code })
            .expect("failure serializes")
    }
}

fn error_kind(e: &Error) -> (&'static str, i32) {
    match e {
        Error::DimensionMismatch { .. } => ("dimension_mismatch", 1),
        Error::NotStochastic { .. } => ("not_stochastic", 1),
        Error::InvalidEntry { .. } => ("invalid_entry", 1),
        Error::UnknownName(_) => ("unknown_name", 1),
        Error::EpsilonOutOfRange(_) => ("epsilon_out_of_range", 1),
        Error::IndexOutOfRange { .. } => ("index_out_of_range", 1),
        Error::NonFinite { .. } => ("non_finite", 1),
        Error::BelowFloor { .. } => ("below_floor", 1),
        Error::InvalidArgument(_) => ("invalid_argument", 1),
        Error::NotFiniteMemory => ("not_finite_memory", 2),
        Error::NotUnifilar => ("not_unifilar", 2),
        Error::NotFiniteClass => ("not_finite_class", 2),
        Error::CapExceeded { .. } => ("cap_exceeded", 2),
        Error::BudgetExceeded { .. } => ("budget_exceeded", 2),
        Error::NotConverged { .. } => ("not_converged", 2),
        Error::MultichainDetected { .. } => ("multichain", 2),
        Error::UnreachableOutput { .. } => ("unreachable_output", 2),
        Error::StateBudgetExceeded { .. } => ("state_budget_exceeded", 2),
        Error::BcjrViolated { .. } => ("bcjr_violated", 2),
        Error::PeriodicClass { .. } => ("periodic_class", 2),
        Error::NotRecurrent => ("not_recurrent", 2),
        Error::EmptyFeasibleSet => ("empty_feasible_set", 2),
        Error::Singular => ("singular", 2),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (kind, code) = error_kind(&e);
        Self { code, kind: kind.into(), message: e.to_string() }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Core(e) => e.into(),
            FormatError::Io { .. } => Self { code: 1, kind: "io".into(), message: e.to_string() },
            other => Self { code: 1, kind: "format".into(), message: other.to_string() },
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// What a command produced: text for stdout and a failure to report after
/// printing it, if any.
struct Output {
    stdout: String,
    failure: Option<Failure>,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Self { stdout, failure: None }
    }
}

fn render<T: Serialize>(json: bool, report: &T, text: impl FnOnce(&T) -> String) -> String {
    if json {
        let mut s = serde_json::to_string_pretty(report).expect("report serializes");
        s.push('\n');
        s
    } else {
        text(report)
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure { code: 1, kind: "io".into(), message: format!("{}: {e}", path.display()) })
}

fn load_channel(args: &ChannelArgs) -> CliResult<ChannelKernel> {
    let ch = match (&args.source.channel, &args.source.builtin) {
        (Some(path), _) => format::parse_channel(&format::read_file(path)?)?,
        (None, Some(name)) => format::builtin_channel(name, args.epsilon)?,
        (None, None) => return Err(Failure::usage("give --channel or --builtin")),
    };
    Ok(ch)
}

fn dump_prefix(args: &ChannelArgs, ch: &ChannelKernel) -> String {
    if args.dump {
        format!("{}\n", format::write_channel(ch))
    } else {
        String::new()
    }
}

fn class_name(ch: &ChannelKernel) -> &'static str {
    ch.classify().name()
}

fn ub(args: &UbArgs, json: bool) -> CliResult<Output> {
    let ch = load_channel(&args.channel)?;
    let graph = registry::resolve(&args.qgraph, ch.ny())?;
    let class = class_name(&ch);
    let (result, optimized, transformed) = if let Some(res) = args.quantize {
        let t = match &args.testdist {
            Some(p) => format::parse_testdist(&format::read_file(p)?, &graph)?,
            None => GraphTestDist::uniform(graph.clone()),
        };
        (quantized_upper_bound(&ch, &graph, &t, res, args.state_budget)?, None, false)
    } else {
        let model = DualModel::new(&ch)?;
        if args.optimize {
            let opts = OptimizeOptions {
                starts: args.starts + 1,
                seed: args.seed,
                ascent: if args.no_ascent { None } else { OptimizeOptions::default().ascent },
                ..Default::default()
            };
            let o = parallel::optimize(&ch, &graph, &opts)?;
            (o.best.clone(), Some(o), model.is_transformed())
        } else {
            let t = match &args.testdist {
                Some(p) => format::parse_testdist(&format::read_file(p)?, &graph)?,
                None => GraphTestDist::uniform(graph.clone()),
            };
            (model.upper_bound(&graph, &t)?, None, model.is_transformed())
        }
    };
    if let Some(path) = &args.mdp_dump {
        write_file(path, &format::write_mdp(&result.mdp))?;
    }
    let report = UbReport::new(class, transformed, &graph, &result, optimized.as_ref());
    let mut out = dump_prefix(&args.channel, &ch);
    out.push_str(&render(json, &report, UbReport::text));
    Ok(Output::ok(out))
}

fn parse_start(s: &str) -> CliResult<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let parsed: Vec<usize> = parts.iter().filter_map(|p| p.parse().ok()).collect();
    match parsed[..] {
        [s, q] if parts.len() == 2 && s > 0 && q > 0 => Ok((s - 1, q - 1)),
        _ => Err(Failure::usage(format!("--start expects 1-based `s,q`, got `{s}`"))),
    }
}

fn lb(args: &LbArgs, json: bool) -> CliResult<Output> {
    let ch = load_channel(&args.channel)?;
    let graph = registry::resolve(&args.qgraph, ch.ny())?;
    // the rate formula needs a unifilar channel; finite-memory ones are rewritten
    let model = DualModel::new(&ch)?;
    let unifilar = model.channel();
    let (ns, nx, nq) = (unifilar.ns(), unifilar.nx(), graph.nq());
    let pick_start = |enc: &GraphEncoder| -> CliResult<(usize, usize)> {
        match &args.start {
            Some(s) => parse_start(s),
            None => (0..ns)
                .flat_map(|s| (0..nq).map(move |q| (s, q)))
                .find(|&st| build_sq_chain(unifilar, enc, st).is_ok())
                .ok_or_else(|| Error::NotRecurrent.into()),
        }
    };
    let (enc, start) = if args.search {
        let start = pick_start(&GraphEncoder::uniform(graph.clone(), ns, nx))?;
        let opts = EncoderSearchOptions { tol: args.tol, ..Default::default() };
        match search_encoder(unifilar, &graph, start, &opts)? {
            Some(found) => (found.encoder, start),
            None => return Err(Failure::numeric("no_encoder", "search found no BCJR-invariant encoder")),
        }
    } else {
        let path = args.encoder.as_ref().ok_or_else(|| Failure::usage("give --encoder or --search"))?;
        let enc = format::parse_encoder(&format::read_file(path)?, &graph, ns, nx)?;
        let start = pick_start(&enc)?;
        (enc, start)
    };
    if let Some(path) = &args.encoder_out {
        write_file(path, &format::write_encoder(&enc))?;
    }
    let chain = build_sq_chain(unifilar, &enc, start)?;
    let bcjr = check_bcjr_invariance(unifilar, &enc, &chain, args.tol)?;
    let rate = conditional_rate(unifilar, &enc, &chain);
    let report = LbReport::new(rate, model.is_transformed(), start, &enc, &chain, &bcjr);
    let mut out = dump_prefix(&args.channel, &ch);
    out.push_str(&render(json, &report, LbReport::text));
    let failure = if !report.bcjr.passed {
        Some(Failure::numeric(
            "bcjr_violated",
            format!("encoder is not BCJR-invariant (max violation {:e})", report.bcjr.max_violation),
        ))
    } else if !report.aperiodic {
        Some(Failure::numeric("periodic_class", format!("initial (s, q) lies in a class with period {}", report.period)))
    } else {
        None
    };
    Ok(Output { stdout: out, failure })
}

fn run_sweep(args: &SweepArgs, json: bool) -> CliResult<Output> {
    if args.steps == 0 {
        return Err(Failure::usage("--steps must be positive"));
    }
    let graph_id = args.qgraph.clone().unwrap_or_else(|| args.builtin.default_graph().to_string());
    let graph = registry::resolve(&graph_id, 2)?;
    let cfg = SweepConfig {
        channel: args.builtin,
        from: args.eps_from,
        to: args.eps_to,
        steps: args.steps,
        graph,
        graph_id,
        lower: !args.no_lb,
        runtime: !args.omit_runtime,
        optimize: OptimizeOptions { seed: args.seed, ..Default::default() },
    };
    let rows = sweep::run(&cfg);
    let csv = sweep::to_csv(&rows);
    let stdout = match &args.csv {
        Some(path) => {
            write_file(path, &csv)?;
            if json {
                render(true, &rows, |_| String::new())
            } else {
                String::new()
            }
        }
        None if json => render(true, &rows, |_| String::new()),
        None => csv,
    };
    Ok(Output::ok(stdout))
}

fn enumerate(args: &EnumerateArgs, json: bool) -> CliResult<Output> {
    let opts = EnumerateOptions { canonical: args.canonical, budget: args.budget };
    let (count, tables) = if args.list {
        let graphs = parallel::enumerate(args.nodes, args.ny, &opts)?;
        (graphs.len() as u64, Some(graphs.iter().map(GraphOut::new).collect()))
    } else {
        (parallel::count(args.nodes, args.ny, &opts)?, None)
    };
    let report = EnumerateReport { nodes: args.nodes, ny: args.ny, canonical: args.canonical, count, tables };
    Ok(Output::ok(render(json, &report, EnumerateReport::text)))
}

fn verify(args: &VerifyArgs, json: bool) -> CliResult<Output> {
    let mdp = format::parse_mdp(&format::read_file(&args.mdp_dump)?)?;
    let h_text = if Path::new(&args.h).is_file() { format::read_file(Path::new(&args.h))? } else { args.h.clone() };
    let h = format::parse_numbers(&h_text)?;
    let report = VerifyReport::new(args.rho, &verify_bellman(&mdp, args.rho, &h, args.tol)?);
    let failure = (!report.passed).then(|| {
        Failure::numeric("bellman_residual", format!("max residual {:e} exceeds tol {:e}", report.max_residual, args.tol))
    });
    Ok(Output { stdout: render(json, &report, VerifyReport::text), failure })
}

fn transform(args: &ChannelArgs, json: bool) -> CliResult<Output> {
    let ch = load_channel(args)?;
    let report = match ch.classify() {
        ChannelClass::Unifilar(_) => TransformReport {
            class: "unifilar".into(),
            inputs: None,
            outputs: None,
            beliefs: (0..ch.ns()).map(|s| (0..ch.ns()).map(|k| f64::from(u8::from(k == s))).collect()).collect(),
            channel: ChannelFile::from_kernel(&ch),
        },
        ChannelClass::FiniteMemory(fm) => {
            let t = channel::transform_to_unifilar(&ch, &fm)?;
            TransformReport {
                class: "finite-memory".into(),
                inputs: Some(fm.inputs),
                outputs: Some(fm.outputs),
                beliefs: (0..t.channel.ns()).map(|s| t.belief(s).to_vec()).collect(),
                channel: ChannelFile::from_kernel(&t.channel),
            }
        }
        ChannelClass::General => return Err(Error::NotFiniteMemory.into()),
    };
    let mut out = dump_prefix(args, &ch);
    out.push_str(&render(json, &report, TransformReport::text));
    Ok(Output::ok(out))
}

fn certificate(c: &BellmanCertificate) -> CliResult<CertificateOut> {
    let r = c.verify(0.0)?;
    Ok(CertificateOut { rho: c.rho, h: c.h.clone(), max_residual: r.max_residual })
}

fn analytic(args: &AnalyticArgs, json: bool) -> CliResult<Output> {
    let eps = args.epsilon;
    let report = match args.builtin {
        SweepChannel::Nost => {
            let c = nost_capacity(eps)?;
            AnalyticReport {
                channel: "nost".into(),
                epsilon: eps,
                capacity: Some(c.capacity),
                a: Some(c.a),
                markov1: Some(c.capacity),
                markov1_certificate: Some(certificate(&nost_certificate(eps)?)?),
                q4: None,
            }
        }
        SweepChannel::Nising => {
            let want_m1 = matches!(args.variant, Variant::Markov1 | Variant::All);
            let want_q4 = matches!(args.variant, Variant::Q4 | Variant::All);
            let m1 = if want_m1 { Some(nising_ub_markov(eps)?) } else { None };
            let m1_cert = if want_m1 { Some(certificate(&nising_markov_certificate(eps)?)?) } else { None };
            let q4 = if want_q4 {
                let r = parallel::nising_ub_q4(eps)?;
                let (ga, gb) = r.grid_point;
                Some(Q4Out {
                    value: r.bound.value,
                    a: r.bound.a,
                    b: r.bound.b.unwrap_or(f64::NAN),
                    grid_value: r.grid_value,
                    grid_point: r.grid_point,
                    lipschitz: r.lipschitz,
                    on_boundary: r.on_boundary,
                    closed_form: r.closed_form,
                    residual: r.residual,
                    grid_certificate: certificate(&nising_q4_certificate(eps, ga, gb)?)?,
                })
            } else {
                None
            };
            AnalyticReport {
                channel: "nising".into(),
                epsilon: eps,
                capacity: None,
                a: m1.as_ref().map(|b| b.a),
                markov1: m1.as_ref().map(|b| b.value),
                markov1_certificate: m1_cert,
                q4,
            }
        }
    };
    Ok(Output::ok(render(json, &report, AnalyticReport::text)))
}

fn dispatch(cli: &Cli) -> CliResult<Output> {
    match &cli.command {
        Command::Ub(a) => ub(a, cli.json),
        Command::Lb(a) => lb(a, cli.json),
        Command::Sweep(a) => run_sweep(a, cli.json),
        Command::Enumerate(a) | Command::Qgraph { command: QgraphCommand::Enumerate(a) } => enumerate(a, cli.json),
        Command::VerifyBellman(a) => verify(a, cli.json),
        Command::Transform(a) => transform(a, cli.json),
        Command::Analytic(a) => analytic(a, cli.json),
    }
}

/// Runs the CLI on `argv` (program name first), writing to stdout/stderr.
/// Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (stdout, failure) = match dispatch(&cli) {
        Ok(o) => (o.stdout, o.failure),
        Err(f) => (String::new(), Some(f)),
    };
    print!("{stdout}");
    match failure {
        None => 0,
        Some(f) => {
            eprintln!("{}", f.json());
            f.code
        }
    }
}
