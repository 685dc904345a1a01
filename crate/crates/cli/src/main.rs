use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crn_core::detbal::{self, classify_state, solve_complex_balanced, DetError, StateBalanceReport};
use crn_core::model::{DiscreteState, MassActionSystem, Measure, Verdict};
use crn_core::parser::{format_network, parse_det_state, parse_discrete_state, parse_network};
use crn_core::report::{analyze, AnalyzeError, AnalyzeOptions, ImplicationStatus, SystemReport};
use crn_core::ssa::{occupancy_measure, tv_distance, SsaConfig, SsaError};
use crn_core::stoch::{
    classify_measure, communicating_class, is_stationary_measure, poisson_product, propensity,
    stationary_distribution, MeasureBalanceReport, SolveMethod, StateBox, StochError,
};

mod pretty;

#[derive(Parser)]
#[command(name = "crn", version, about = "Balance analysis of mass-action reaction networks")]
struct Cli {
    /// Human-readable summary instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graph, deterministic and stochastic analysis plus the implication check.
    Analyze {
        file: PathBuf,
        /// Seed state of a component to analyze, e.g. `A=3,B=0`. Repeatable.
        #[arg(long = "seed-state")]
        seed_state: Vec<String>,
        #[command(flatten)]
        domain: BoxArg,
        #[arg(long, default_value_t = detbal::DEFAULT_TOL)]
        tol: f64,
    },
    /// Balance conditions at one concentration vector.
    ClassifyState {
        file: PathBuf,
        #[arg(long)]
        state: String,
        #[arg(long, default_value_t = detbal::DEFAULT_TOL)]
        tol: f64,
    },
    /// Stationary distribution of one component and its balance conditions.
    Stationary {
        file: PathBuf,
        #[arg(long = "seed-state")]
        seed_state: String,
        #[command(flatten)]
        domain: BoxArg,
        /// Accept a component that leaves the box (reflecting truncation).
        #[arg(long)]
        allow_truncated: bool,
        /// Report the distance to the product form of a complex balanced equilibrium.
        #[arg(long)]
        compare_poisson: bool,
        #[arg(long, default_value_t = detbal::DEFAULT_TOL)]
        tol: f64,
    },
    /// Time-averaged occupancy of one simulated path.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        init: String,
        #[arg(long = "t-end")]
        t_end: f64,
        #[arg(long)]
        seed: u64,
        /// Defaults to 1% of the horizon.
        #[arg(long = "burn-in")]
        burn_in: Option<f64>,
        /// Total-variation distance to the solved stationary distribution.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        domain: BoxArg,
    },
    /// Validate a network file and echo it in canonical form.
    Parse { file: PathBuf },
}

#[derive(Args)]
struct BoxArg {
    /// Box upper bound: one number for every species or a comma list.
    #[arg(long = "box", default_value = "20")]
    upper: String,
    /// Box lower bound, same format.
    #[arg(long = "box-lower")]
    lower: Option<String>,
}

impl BoxArg {
    fn resolve(&self, n: usize) -> Result<StateBox, Failure> {
        let parse = |text: &str| -> Result<Vec<i64>, Failure> {
            let parts: Vec<i64> = text
                .split(',')
                .map(|p| p.trim().parse::<i64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Failure::input(format!("invalid box bound `{text}`")))?;
            match parts.len() {
                1 => Ok(vec![parts[0]; n]),
                k if k == n => Ok(parts),
                k => Err(Failure::input(format!("box has {k} bounds for {n} species"))),
            }
        };
        let upper = parse(&self.upper)?;
        let lower = match &self.lower {
            Some(l) => parse(l)?,
            None => vec![0; n],
        };
        StateBox::new(lower, upper).map_err(|e| Failure::input(e.to_string()))
    }
}

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VIOLATED: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, kind: "input", message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, kind: "numerical", message: message.into() }
    }
}

impl From<StochError> for Failure {
    fn from(e: StochError) -> Self {
        match e {
            StochError::SolveFailure(_) | StochError::StateLimit(_) | StochError::Graph(_) => {
                Failure::numerical(e.to_string())
            }
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<DetError> for Failure {
    fn from(e: DetError) -> Self {
        match e {
            DetError::DimensionMismatch { .. } | DetError::InvalidStep => Failure::input(e.to_string()),
            _ => Failure::numerical(e.to_string()),
        }
    }
}

impl From<SsaError> for Failure {
    fn from(e: SsaError) -> Self {
        match e {
            SsaError::PathExplosionGuard(_) => Failure::numerical(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<AnalyzeError> for Failure {
    fn from(e: AnalyzeError) -> Self {
        match e {
            AnalyzeError::Stoch(s) => s.into(),
            AnalyzeError::Det(d) => d.into(),
            AnalyzeError::Graph(g) => Failure::numerical(g.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<MassActionSystem, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    parse_network(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn discrete(sys: &MassActionSystem, text: &str) -> Result<DiscreteState, Failure> {
    parse_discrete_state(text, sys.network().species()).map_err(|e| Failure::input(e.to_string()))
}

#[derive(Serialize)]
pub struct WeightedState {
    pub state: Vec<i64>,
    pub p: f64,
}

fn listing(mu: &Measure) -> Vec<WeightedState> {
    mu.iter().map(|(x, p)| WeightedState { state: x.0.clone(), p }).collect()
}

#[derive(Serialize)]
pub struct ClassifyOutput {
    pub species: Vec<String>,
    pub state: Vec<f64>,
    #[serde(flatten)]
    pub report: StateBalanceReport,
}

#[derive(Serialize)]
pub struct ComponentSummary {
    pub seed: Vec<i64>,
    pub states: usize,
    pub closed: bool,
    pub truncated: bool,
}

#[derive(Serialize)]
pub struct StationaryOutput {
    pub species: Vec<String>,
    pub component: ComponentSummary,
    pub method: SolveMethod,
    pub residual: f64,
    pub stationary: Verdict,
    pub measure: MeasureBalanceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poisson: Option<PoissonComparison>,
    pub distribution: Vec<WeightedState>,
}

#[derive(Serialize)]
pub struct PoissonComparison {
    /// Complex balanced equilibrium used for the product form; absent when
    /// the system has none.
    pub c: Option<Vec<f64>>,
    pub tv: Option<f64>,
}

#[derive(Serialize)]
pub struct SimulateOutput {
    pub species: Vec<String>,
    pub init: Vec<i64>,
    pub seed: u64,
    pub t_end: f64,
    pub burn_in: f64,
    /// The initial state has no active reaction.
    pub absorbed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv: Option<f64>,
    pub occupancy: Vec<WeightedState>,
}

#[derive(Serialize)]
pub struct ReactionEntry {
    pub source: String,
    pub target: String,
    pub rate: f64,
}

#[derive(Serialize)]
pub struct ParseOutput {
    pub species: Vec<String>,
    pub complexes: Vec<String>,
    pub reactions: Vec<ReactionEntry>,
    pub canonical: String,
}

#[allow(clippy::large_enum_variant)]
enum Output {
    Analyze(SystemReport),
    Classify(ClassifyOutput),
    Stationary(StationaryOutput),
    Simulate(SimulateOutput),
    Parse(ParseOutput),
}

fn run(command: Command) -> Result<Output, Failure> {
    match command {
        Command::Analyze { file, seed_state, domain, tol } => {
            let sys = load(&file)?;
            let seeds = seed_state.iter().map(|s| discrete(&sys, s)).collect::<Result<_, _>>()?;
            let opts = AnalyzeOptions {
                seeds,
                domain: Some(domain.resolve(sys.n_species())?),
                tol,
                ..Default::default()
            };
            Ok(Output::Analyze(analyze(&sys, &opts)?))
        }
        Command::ClassifyState { file, state, tol } => {
            let sys = load(&file)?;
            let c = parse_det_state(&state, sys.network().species()).map_err(|e| Failure::input(e.to_string()))?;
            let report = classify_state(&sys, &c, tol)?;
            Ok(Output::Classify(ClassifyOutput {
                species: sys.network().species().names().to_vec(),
                state: c.0,
                report,
            }))
        }
        Command::Stationary { file, seed_state, domain, allow_truncated, compare_poisson, tol } => {
            let sys = load(&file)?;
            let seed = discrete(&sys, &seed_state)?;
            let domain = domain.resolve(sys.n_species())?;
            let comp = communicating_class(&sys, &seed, &domain)?;
            let sol = stationary_distribution(&sys, &comp, allow_truncated)?;
            let measure = classify_measure(&sys, &sol.measure, &domain, tol)?;
            let stationary = is_stationary_measure(&sys, &sol.measure, &domain, tol)?;
            let poisson = if compare_poisson {
                let c = match solve_complex_balanced(&sys) {
                    Ok(c) => c,
                    Err(DetError::NotWeaklyReversible) => None,
                    Err(e) => return Err(e.into()),
                };
                let tv = match &c {
                    Some(c) => {
                        let p = poisson_product(c, &comp.states)?;
                        Some(tv_distance(&sol.measure, &p)?)
                    }
                    None => None,
                };
                Some(PoissonComparison { c: c.map(|c| c.0), tv })
            } else {
                None
            };
            Ok(Output::Stationary(StationaryOutput {
                species: sys.network().species().names().to_vec(),
                component: ComponentSummary {
                    seed: seed.0.clone(),
                    states: comp.len(),
                    closed: comp.closed,
                    truncated: comp.truncated,
                },
                method: sol.method,
                residual: sol.residual,
                stationary,
                measure,
                poisson,
                distribution: listing(&sol.measure),
            }))
        }
        Command::Simulate { file, init, t_end, seed, burn_in, compare, domain } => {
            let sys = load(&file)?;
            let x0 = discrete(&sys, &init)?;
            let mut cfg = SsaConfig::new(seed, t_end);
            if let Some(b) = burn_in {
                cfg = cfg.with_burn_in(b);
            }
            let occ = occupancy_measure(&sys, &x0, &cfg)?;
            let tv = if compare {
                let domain = domain.resolve(sys.n_species())?;
                let comp = communicating_class(&sys, &x0, &domain)?;
                let pi = stationary_distribution(&sys, &comp, true)?.measure;
                Some(tv_distance(&occ, &pi)?)
            } else {
                None
            };
            Ok(Output::Simulate(SimulateOutput {
                species: sys.network().species().names().to_vec(),
                absorbed: propensity(&sys, &x0).iter().all(|&r| r == 0.0),
                init: x0.0,
                seed,
                t_end,
                burn_in: cfg.burn_in,
                tv,
                occupancy: listing(&occ),
            }))
        }
        Command::Parse { file } => {
            let sys = load(&file)?;
            let net = sys.network();
            Ok(Output::Parse(ParseOutput {
                species: net.species().names().to_vec(),
                complexes: (0..net.n_complexes()).map(|i| net.complex_label(i)).collect(),
                reactions: net
                    .reactions()
                    .iter()
                    .zip(sys.kappa())
                    .map(|(r, &k)| ReactionEntry {
                        source: net.complex_label(r.source),
                        target: net.complex_label(r.target),
                        rate: k,
                    })
                    .collect(),
                canonical: format_network(&sys),
            }))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable output")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            let (text, violated) = match &out {
                Output::Analyze(r) => {
                    let violated = r.implications.iter().any(|i| i.status == ImplicationStatus::Violated);
                    (if cli.pretty { pretty::analyze(r) } else { to_json(r) }, violated)
                }
                Output::Classify(c) => (if cli.pretty { pretty::classify(c) } else { to_json(c) }, false),
                Output::Stationary(s) => (if cli.pretty { pretty::stationary(s) } else { to_json(s) }, false),
                Output::Simulate(s) => (if cli.pretty { pretty::simulate(s) } else { to_json(s) }, false),
                Output::Parse(p) => (if cli.pretty { p.canonical.clone() } else { to_json(p) }, false),
            };
            println!("{text}");
            if violated {
                eprintln!("error: an implication was violated; this indicates a bug");
                ExitCode::from(EXIT_VIOLATED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(f) => {
            eprintln!("{}", to_json(&serde_json::json!({ "error": f.kind, "message": f.message })));
            ExitCode::from(f.code)
        }
    }
}
