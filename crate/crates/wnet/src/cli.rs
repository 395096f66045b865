//! Command-line front end: flag and JSON configuration, deterministic
//! experiment execution, CSV/JSON emission.
//!
//! Flags override config-file values; anything still unset falls back to the
//! defaults (g = 0.5, κ = 1, η_d = η_l = 1, permissive acceptance, exact
//! conversion weights, no-recycling policy, 10^5 trials, seed 0). Output goes
//! to stdout unless `--out` names a file. All randomness flows from the
//! single master seed through per-trial ChaCha8 counter streams, so a re-run
//! with the same seed writes byte-identical files regardless of thread count.
//!
//! Exit codes: 0 on success, 2 on configuration or validation errors, 3 when
//! a numerical invariant breaks (including self-test failures).
//!
//! Floats in CSV cells are printed with 12 significant digits in the shortest
//! decimal form, except efficiency columns, which keep the exact shortest
//! representation of the stored double (so `1.0` stays `1.0`). Both
//! conventions are idempotent: parsing a cell and re-printing it reproduces
//! the byte sequence, which is what makes emitted CSVs round-trip safe.

pub mod selftest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::breeding::{
    breed_sequence_mc, breed_step_distribution, effective_oracle_delta, BreedingError,
    OutcomeDistribution, ProbabilityMode, RecyclingPolicy, SequenceConfig, SequenceStats,
};
use crate::resources::{
    breeding_schedule, fig3_table, OverheadPoint, ResourceError, MAX_CONCAT_N,
};
use crate::seeding::{
    estimate_success, AcceptanceMode, CavityParams, ProtocolConfig, SeedRunStats, SeedingError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

pub const DEFAULT_G: f64 = 0.5;
pub const DEFAULT_KAPPA: f64 = 1.0;
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SCHEDULE_K: usize = 6;
pub const DEFAULT_ETAS: [f64; 3] = [1.0, 0.7, 0.5];

/// Failures split by exit code: bad input versus broken numerics.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Invariant(_) => EXIT_INVARIANT,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Invariant(m) => m,
        }
    }
}

impl From<SeedingError> for CliError {
    fn from(e: SeedingError) -> Self {
        match e {
            SeedingError::InvariantViolation(_)
            | SeedingError::ProtocolSequence { .. }
            | SeedingError::CannotCorrect
            | SeedingError::Hilbert(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<BreedingError> for CliError {
    fn from(e: BreedingError) -> Self {
        match e {
            BreedingError::InvariantViolation(_)
            | BreedingError::DeliveryStalled { .. }
            | BreedingError::BranchHasNoSupport { .. }
            | BreedingError::NotAConversion { .. }
            | BreedingError::Hilbert(_)
            | BreedingError::Target(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ResourceError> for CliError {
    fn from(e: ResourceError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Flat JSON configuration; every key has a flag of the same name and flags
/// win. Unknown keys are rejected by name.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, alias = "N")]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub eta_d: Option<f64>,
    #[serde(default)]
    pub eta_l_transmission: Option<f64>,
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub acceptance: Option<AcceptanceMode>,
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub target: Option<u64>,
    #[serde(default)]
    pub mode: Option<ProbabilityMode>,
    #[serde(default)]
    pub policy: Option<RecyclingPolicy>,
    #[serde(default)]
    pub schedule_k: Option<usize>,
    #[serde(default)]
    pub etas: Option<Vec<f64>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
    #[serde(default)]
    pub oracle_check: Option<bool>,
}

pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

fn parse_acceptance(s: &str) -> Result<AcceptanceMode, String> {
    match s {
        "permissive" => Ok(AcceptanceMode::Permissive),
        "strict-distinct" => Ok(AcceptanceMode::StrictDistinct),
        other => Err(format!(
            "unknown acceptance mode '{other}' (expected permissive or strict-distinct)"
        )),
    }
}

fn parse_mode(s: &str) -> Result<ProbabilityMode, String> {
    match s {
        "exact" => Ok(ProbabilityMode::Exact),
        "paper" => Ok(ProbabilityMode::Paper),
        other => Err(format!("unknown conversion mode '{other}' (expected exact or paper)")),
    }
}

fn parse_policy(s: &str) -> Result<RecyclingPolicy, String> {
    match s {
        "no-recycling" => Ok(RecyclingPolicy::NoRecycling),
        "greedy-recycling" => Ok(RecyclingPolicy::GreedyRecycling),
        other => Err(format!(
            "unknown recycling policy '{other}' (expected no-recycling or greedy-recycling)"
        )),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "wnet",
    version,
    about = "Heralded W-state generation: seeding trajectories, breeding conversions, overhead tables"
)]
struct Cli {
    /// JSON config file with flat keys; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Master RNG seed; trial k draws from stream k.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trial count.
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct ProtocolFlags {
    /// Node count N (power of two, 2..=8).
    #[arg(long)]
    n: Option<usize>,
    /// Detector efficiency in [0, 1].
    #[arg(long)]
    eta_d: Option<f64>,
    /// Transmission probability in [0, 1] (one minus the photon loss rate).
    #[arg(long)]
    eta_l_transmission: Option<f64>,
    /// Atom-cavity coupling g (needs g < kappa).
    #[arg(long)]
    g: Option<f64>,
    /// Cavity decay rate kappa.
    #[arg(long)]
    kappa: Option<f64>,
    /// Click acceptance rule: permissive or strict-distinct.
    #[arg(long, value_parser = parse_acceptance)]
    acceptance: Option<AcceptanceMode>,
    /// Detection window per round (same time units as 1/kappa); unlimited
    /// when absent.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seeding Monte Carlo toward the N-node W state.
    Seed {
        #[command(flatten)]
        protocol: ProtocolFlags,
    },
    /// Seeding Monte Carlo toward an m-excitation Dicke state.
    Dicke {
        #[command(flatten)]
        protocol: ProtocolFlags,
        /// Excitation count m of the target (default N/2).
        #[arg(long)]
        m: Option<usize>,
    },
    /// Conversion branch weights, optional oracle check, and the sequence
    /// Monte Carlo.
    Breed {
        /// Delivered register size (a schedule size 2^(k+1)+2: 4, 6, 10, ...).
        #[arg(long)]
        target: Option<u64>,
        /// Conversion branch weights: exact or paper.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ProbabilityMode>,
        /// Recycling policy: no-recycling or greedy-recycling.
        #[arg(long, value_parser = parse_policy)]
        policy: Option<RecyclingPolicy>,
        /// Detector efficiency in [0, 1].
        #[arg(long)]
        eta_d: Option<f64>,
        /// Transmission probability in [0, 1].
        #[arg(long)]
        eta_l_transmission: Option<f64>,
        /// Compare the conversion algebra against the brute-force
        /// statevector oracle and report the worst deviation.
        #[arg(long)]
        oracle_check: bool,
    },
    /// Overhead table for breeding versus concatenated growth; the CSV is
    /// gnuplot-ready and a plot script is written next to it.
    Overhead {
        /// Deepest schedule index K; breeding sizes run up to 2^(K+1)+2.
        #[arg(long)]
        schedule_k: Option<usize>,
        /// Efficiencies, comma separated (e.g. 1.0,0.7,0.5).
        #[arg(long = "eta", value_delimiter = ',')]
        etas: Option<Vec<f64>>,
    },
    /// Run the acceptance-criteria verification suite (fixed internal seeds
    /// and budgets; one pass/fail line per criterion).
    Selftest,
}

/// Protocol parameters after merging flags, config file, and defaults.
#[derive(Debug, Clone)]
struct ResolvedProtocol {
    n: usize,
    eta_d: f64,
    eta_l: f64,
    g: f64,
    kappa: f64,
    acceptance: AcceptanceMode,
    window: Option<f64>,
}

impl ResolvedProtocol {
    fn combined_eta(&self) -> f64 {
        self.eta_d * self.eta_l
    }

    fn build(&self, m: Option<usize>) -> Result<ProtocolConfig, CliError> {
        let mut config = ProtocolConfig::new(self.n)?
            .with_cavity(CavityParams::new(self.g, self.kappa)?)
            .with_detector_efficiency(self.eta_d)?
            .with_transmission(self.eta_l)?
            .with_acceptance(self.acceptance);
        if let Some(m) = m {
            config = config.with_target_m(m)?;
        }
        if self.window.is_some() {
            config = config.with_round_window(self.window)?;
        }
        Ok(config)
    }
}

fn resolve_protocol(flags: &ProtocolFlags, file: &ConfigFile) -> Result<ResolvedProtocol, CliError> {
    let n = flags
        .n
        .or(file.n)
        .ok_or_else(|| CliError::Validation("missing node count: pass --n or set n".into()))?;
    Ok(ResolvedProtocol {
        n,
        eta_d: flags.eta_d.or(file.eta_d).unwrap_or(1.0),
        eta_l: flags.eta_l_transmission.or(file.eta_l_transmission).unwrap_or(1.0),
        g: flags.g.or(file.g).unwrap_or(DEFAULT_G),
        kappa: flags.kappa.or(file.kappa).unwrap_or(DEFAULT_KAPPA),
        acceptance: flags.acceptance.or(file.acceptance).unwrap_or(AcceptanceMode::Permissive),
        window: flags.window.or(file.window),
    })
}

/// 12-significant-digit shortest decimal. Idempotent under parse-and-reprint,
/// which CSV round-trip tests rely on.
pub fn fmt12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float reparses");
    format!("{rounded}")
}

/// Efficiency columns print the exact stored double (`1.0`, `0.7`, ...).
pub fn fmt_eta(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

pub fn render_seed_csv(n: usize, eta: f64, mode: AcceptanceMode, stats: &SeedRunStats) -> String {
    let mut out = String::from("n,eta,mode,trials,accepted,rate,stderr,mean_fidelity\n");
    out.push_str(&format!(
        "{n},{},{mode},{},{},{},{},{}\n",
        fmt_eta(eta),
        stats.trials,
        stats.accepted,
        fmt12(stats.acceptance_rate),
        fmt12(stats.acceptance_stderr),
        fmt_opt(stats.mean_fidelity),
    ));
    out
}

pub fn render_dicke_csv(
    n: usize,
    m: usize,
    eta: f64,
    mode: AcceptanceMode,
    stats: &SeedRunStats,
) -> String {
    let mut out =
        String::from("n,m,eta,mode,trials,accepted,rate,stderr,mean_fidelity,factorable_fraction\n");
    out.push_str(&format!(
        "{n},{m},{},{mode},{},{},{},{},{},{}\n",
        fmt_eta(eta),
        stats.trials,
        stats.accepted,
        fmt12(stats.acceptance_rate),
        fmt12(stats.acceptance_stderr),
        fmt_opt(stats.mean_fidelity),
        fmt_opt(stats.factorable_fraction()),
    ));
    out
}

#[derive(Serialize)]
struct SeedSummaryJson {
    n: usize,
    eta: f64,
    mode: String,
    trials: u64,
    accepted: u64,
    rate: f64,
    stderr: f64,
    mean_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factorable_fraction: Option<f64>,
    min_fidelity: Option<f64>,
    leftover_rejected: u64,
    mask_from_clicks: u64,
    pattern_counts: BTreeMap<String, u64>,
    round1_clicks: BTreeMap<usize, u64>,
}

pub fn render_seed_json(
    n: usize,
    m: Option<usize>,
    eta: f64,
    mode: AcceptanceMode,
    stats: &SeedRunStats,
) -> String {
    let summary = SeedSummaryJson {
        n,
        eta,
        mode: mode.to_string(),
        trials: stats.trials,
        accepted: stats.accepted,
        rate: stats.acceptance_rate,
        stderr: stats.acceptance_stderr,
        mean_fidelity: stats.mean_fidelity,
        m,
        factorable_fraction: m.and_then(|_| stats.factorable_fraction()),
        min_fidelity: stats.min_fidelity,
        leftover_rejected: stats.leftover_rejected,
        mask_from_clicks: stats.mask_from_clicks,
        pattern_counts: stats
            .pattern_counts
            .iter()
            .map(|(k, &v)| (k.as_str().to_string(), v))
            .collect(),
        round1_clicks: stats.round1_clicks.clone(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

pub const BREED_CSV_HEADER: &str = "target,M,mode,policy,eta,trials,p_converted,p_recycled,\
p_lost,oracle_delta,mean_qubits,stderr_qubits,mean_clicks,stderr_clicks,mean_seed_attempts,\
mean_conversion_attempts,mean_recycles";

pub fn render_breed_csv(
    stats: &SequenceStats,
    last_step: &OutcomeDistribution,
    oracle_delta: Option<f64>,
) -> String {
    let mut out = String::from(BREED_CSV_HEADER);
    out.push('\n');
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        stats.target,
        stats.target / 2 + 1,
        stats.mode,
        stats.policy,
        fmt_eta(stats.eta),
        stats.trials,
        fmt12(last_step.converted),
        fmt12(last_step.recycled),
        fmt12(last_step.lost),
        fmt_opt(oracle_delta),
        fmt12(stats.mean_qubits),
        fmt12(stats.stderr_qubits),
        fmt12(stats.mean_clicks),
        fmt12(stats.stderr_clicks),
        fmt12(stats.mean_seed_attempts),
        fmt12(stats.mean_conversion_attempts),
        fmt12(stats.mean_recycles),
    ));
    out
}

#[derive(Serialize)]
struct BreedSummaryJson {
    target: u64,
    last_conversion_size: u64,
    mode: String,
    policy: String,
    eta: f64,
    trials: u64,
    p_converted: f64,
    p_recycled: f64,
    p_lost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_delta: Option<f64>,
    mean_qubits: f64,
    stderr_qubits: f64,
    mean_clicks: f64,
    stderr_clicks: f64,
    mean_seed_attempts: f64,
    mean_seeds: f64,
    mean_conversion_attempts: f64,
    mean_conversions_succeeded: f64,
    mean_recycles: f64,
    byproduct_means: BTreeMap<u64, f64>,
}

pub fn render_breed_json(
    stats: &SequenceStats,
    last_step: &OutcomeDistribution,
    oracle_delta: Option<f64>,
) -> String {
    let summary = BreedSummaryJson {
        target: stats.target,
        last_conversion_size: stats.target / 2 + 1,
        mode: stats.mode.to_string(),
        policy: stats.policy.to_string(),
        eta: stats.eta,
        trials: stats.trials,
        p_converted: last_step.converted,
        p_recycled: last_step.recycled,
        p_lost: last_step.lost,
        oracle_delta,
        mean_qubits: stats.mean_qubits,
        stderr_qubits: stats.stderr_qubits,
        mean_clicks: stats.mean_clicks,
        stderr_clicks: stats.stderr_clicks,
        mean_seed_attempts: stats.mean_seed_attempts,
        mean_seeds: stats.mean_seeds,
        mean_conversion_attempts: stats.mean_conversion_attempts,
        mean_conversions_succeeded: stats.mean_conversions_succeeded,
        mean_recycles: stats.mean_recycles,
        byproduct_means: stats.byproduct_means.clone(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

pub const OVERHEAD_CSV_HEADER: &str = "scheme,N,K,eta,mode,p_N,R_N,total_clicks";

pub fn render_overhead_csv(rows: &[OverheadPoint]) -> String {
    let mut out = String::from(OVERHEAD_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let mode = row.mode.map_or("-".to_string(), |m| m.to_string());
        out.push_str(&format!(
            "{},{},{},{},{mode},{},{},{}\n",
            row.scheme,
            row.n,
            row.k,
            fmt_eta(row.eta),
            fmt12(row.p),
            fmt12(row.r),
            row.clicks,
        ));
    }
    out
}

#[derive(Serialize)]
struct OverheadRowJson {
    scheme: String,
    n: u64,
    k: u64,
    eta: f64,
    mode: Option<String>,
    p: f64,
    r: f64,
    total_clicks: u64,
}

pub fn render_overhead_json(rows: &[OverheadPoint]) -> String {
    let rows: Vec<OverheadRowJson> = rows
        .iter()
        .map(|row| OverheadRowJson {
            scheme: row.scheme.to_string(),
            n: row.n,
            k: row.k,
            eta: row.eta,
            mode: row.mode.map(|m| m.to_string()),
            p: row.p,
            r: row.r,
            total_clicks: row.clicks,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&rows).expect("rows serialize");
    text.push('\n');
    text
}

/// Gnuplot commands plotting every (scheme, η, mode) series of the table
/// against the CSV written next to the script.
pub fn gnuplot_script(csv_name: &str, rows: &[OverheadPoint]) -> String {
    let mut series: Vec<(String, f64, String)> = Vec::new();
    for row in rows {
        let mode = row.mode.map_or("-".to_string(), |m| m.to_string());
        let key = (row.scheme.to_string(), row.eta, mode);
        if !series.contains(&key) {
            series.push(key);
        }
    }
    let mut s = String::new();
    s.push_str("# Expected qubit overhead per delivered W register.\n");
    s.push_str(&format!("csv = '{csv_name}'\n"));
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale y\n");
    s.push_str("set xlabel 'register size N'\n");
    s.push_str("set ylabel 'expected qubits R_N'\n");
    s.push_str("set key top left\n");
    s.push_str("plot \\\n");
    for (i, (scheme, eta, mode)) in series.iter().enumerate() {
        let title = if mode == "-" {
            format!("{scheme} eta={}", fmt_eta(*eta))
        } else {
            format!("{scheme} eta={} ({mode})", fmt_eta(*eta))
        };
        let tail = if i + 1 == series.len() { "" } else { ", \\" };
        s.push_str(&format!(
            "  csv using (strcol(1) eq '{scheme}' && strcol(5) eq '{mode}' && \
strcol(4) eq '{}' ? $2 : NaN):7 with linespoints title '{title}'{tail}\n",
            fmt_eta(*eta),
        ));
    }
    s
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_seed(
    resolved: &ResolvedProtocol,
    m: Option<usize>,
    trials: u64,
    seed: u64,
    format: OutputFormat,
) -> Result<String, CliError> {
    let config = resolved.build(m)?;
    let stats = estimate_success(&config, trials, seed)?;
    let eta = resolved.combined_eta();
    Ok(match (format, m) {
        (OutputFormat::Csv, None) => render_seed_csv(resolved.n, eta, resolved.acceptance, &stats),
        (OutputFormat::Csv, Some(m)) => {
            render_dicke_csv(resolved.n, m, eta, resolved.acceptance, &stats)
        }
        (OutputFormat::Json, m) => render_seed_json(resolved.n, m, eta, resolved.acceptance, &stats),
    })
}

/// Worst oracle-vs-algebra deviation over every size the brute force covers.
pub fn worst_oracle_delta() -> Result<f64, CliError> {
    let mut worst = 0.0f64;
    for n in 2..=crate::breeding::oracle::MAX_ORACLE_N {
        worst = worst.max(effective_oracle_delta(n)?);
    }
    Ok(worst)
}

fn run_breed(
    config: &SequenceConfig,
    oracle_check: bool,
    trials: u64,
    seed: u64,
    format: OutputFormat,
) -> Result<String, CliError> {
    let stats = breed_sequence_mc(config, trials, seed)?;
    let last_size = (config.target / 2 + 1) as usize;
    let last_step = breed_step_distribution(last_size, config.mode)?;
    let oracle_delta = if oracle_check { Some(worst_oracle_delta()?) } else { None };
    Ok(match format {
        OutputFormat::Csv => render_breed_csv(&stats, &last_step, oracle_delta),
        OutputFormat::Json => render_breed_json(&stats, &last_step, oracle_delta),
    })
}

/// Concatenated-scheme sizes shown next to a depth-`k` breeding schedule:
/// powers of two spanning the same axis, capped at the largest supported
/// register.
fn concat_sizes(k: usize) -> Vec<u64> {
    (1..=k + 1)
        .map(|j| 1u64 << j)
        .filter(|&n| n <= MAX_CONCAT_N)
        .collect()
}

fn run_overhead(
    schedule_k: usize,
    etas: &[f64],
    format: OutputFormat,
) -> Result<(String, Vec<OverheadPoint>), CliError> {
    let breeding_sizes = breeding_schedule(schedule_k)?;
    let rows = fig3_table(
        &breeding_sizes,
        &concat_sizes(schedule_k),
        etas,
        &[ProbabilityMode::Paper, ProbabilityMode::Exact],
    )?;
    let text = match format {
        OutputFormat::Csv => render_overhead_csv(&rows),
        OutputFormat::Json => render_overhead_json(&rows),
    };
    Ok((text, rows))
}

pub fn render_selftest_report(outcomes: &[selftest::CriterionOutcome]) -> String {
    let mut text = String::new();
    for outcome in outcomes {
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        text.push_str(&format!(
            "criterion {} ({}): {verdict} - {}\n",
            outcome.number, outcome.name, outcome.details
        ));
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    text.push_str(&format!("{passed}/{} criteria passed\n", outcomes.len()));
    text
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let file = match &cli.config {
        Some(path) => load_config(path)?,
        None => ConfigFile::default(),
    };
    let out = cli.out.clone().or_else(|| file.out.clone());
    let format = cli.format.or(file.format).unwrap_or(OutputFormat::Csv);
    let trials = cli.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    let seed = cli.seed.or(file.seed).unwrap_or(0);

    match cli.command {
        Command::Seed { protocol } => {
            let resolved = resolve_protocol(&protocol, &file)?;
            let text = run_seed(&resolved, None, trials, seed, format)?;
            write_output(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Dicke { protocol, m } => {
            let resolved = resolve_protocol(&protocol, &file)?;
            let m = m.or(file.m).unwrap_or(resolved.n / 2);
            let text = run_seed(&resolved, Some(m), trials, seed, format)?;
            write_output(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Breed { target, mode, policy, eta_d, eta_l_transmission, oracle_check } => {
            let target = target.or(file.target).ok_or_else(|| {
                CliError::Validation(
                    "missing breeding target: pass --target (a schedule size 4, 6, 10, 18, ...)"
                        .into(),
                )
            })?;
            let config = SequenceConfig {
                target,
                mode: mode.or(file.mode).unwrap_or(ProbabilityMode::Exact),
                policy: policy.or(file.policy).unwrap_or(RecyclingPolicy::NoRecycling),
                eta: eta_d.or(file.eta_d).unwrap_or(1.0)
                    * eta_l_transmission.or(file.eta_l_transmission).unwrap_or(1.0),
            };
            let oracle_check = oracle_check || file.oracle_check.unwrap_or(false);
            let text = run_breed(&config, oracle_check, trials, seed, format)?;
            write_output(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Overhead { schedule_k, etas } => {
            let k = schedule_k.or(file.schedule_k).unwrap_or(DEFAULT_SCHEDULE_K);
            let etas = etas.or_else(|| file.etas.clone()).unwrap_or_else(|| DEFAULT_ETAS.to_vec());
            let (text, rows) = run_overhead(k, &etas, format)?;
            write_output(out.as_deref(), &text)?;
            if format == OutputFormat::Csv {
                if let Some(csv_path) = out.as_deref() {
                    let script_path = csv_path.with_extension("gnuplot");
                    let csv_name = csv_path
                        .file_name()
                        .map(|f| f.to_string_lossy().into_owned())
                        .unwrap_or_else(|| csv_path.display().to_string());
                    write_output(Some(&script_path), &gnuplot_script(&csv_name, &rows))?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Selftest => {
            let outcomes = selftest::run_all();
            let text = render_selftest_report(&outcomes);
            write_output(out.as_deref(), &text)?;
            if outcomes.iter().all(|o| o.passed) {
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_INVARIANT)
            }
        }
    }
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version surface as Err; clap routes them to stdout
            // and they exit cleanly.
            let code = if err.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digit_formatting_is_short_and_idempotent() {
        assert_eq!(fmt12(0.5), "0.5");
        assert_eq!(fmt12(8.0), "8");
        assert_eq!(fmt12(256.0 / 3.0), "85.3333333333");
        assert_eq!(fmt12(1228.8), "1228.8");
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(5.0 / 384.0), "0.0130208333333");
        for x in [0.5, 1.0 / 3.0, 2f64.powi(40) / 7.0, 1e-9, 123456.789, 0.1 + 0.2] {
            let once = fmt12(x);
            let re: f64 = once.parse().unwrap();
            assert_eq!(fmt12(re), once, "not idempotent for {x}");
        }
    }

    #[test]
    fn eta_formatting_keeps_a_decimal_point() {
        assert_eq!(fmt_eta(1.0), "1.0");
        assert_eq!(fmt_eta(0.7), "0.7");
        assert_eq!(fmt_eta(0.5), "0.5");
        let combined = 0.9f64 * 0.8;
        assert_eq!(fmt_eta(combined), format!("{combined:?}"));
    }

    #[test]
    fn config_files_reject_unknown_keys_by_name() {
        let err = serde_json::from_str::<ConfigFile>("{\"etaa\": 1}").unwrap_err();
        assert!(err.to_string().contains("etaa"), "{err}");
        let parsed: ConfigFile = serde_json::from_str("{\"N\": 4, \"eta_d\": 0.9}").unwrap();
        assert_eq!(parsed.n, Some(4));
        assert_eq!(parsed.eta_d, Some(0.9));
    }

    #[test]
    fn config_enums_use_their_wire_names() {
        let parsed: ConfigFile = serde_json::from_str(
            "{\"acceptance\": \"strict-distinct\", \"mode\": \"paper\", \
\"policy\": \"greedy-recycling\", \"format\": \"json\"}",
        )
        .unwrap();
        assert_eq!(parsed.acceptance, Some(AcceptanceMode::StrictDistinct));
        assert_eq!(parsed.mode, Some(ProbabilityMode::Paper));
        assert_eq!(parsed.policy, Some(RecyclingPolicy::GreedyRecycling));
        assert_eq!(parsed.format, Some(OutputFormat::Json));
    }

    #[test]
    fn overhead_render_contains_the_anchor_row() {
        let (text, rows) = run_overhead(6, &[1.0, 0.7, 0.5], OutputFormat::Csv).unwrap();
        assert!(text.starts_with("scheme,N,K,eta,mode,p_N,R_N,total_clicks\n"));
        assert!(text.contains("\nbreeding,4,0,1.0,paper,0.5,8,4\n"), "{text}");
        // Concatenated rows carry no conversion mode.
        assert!(text.contains("\nconcatenated,8,0,1.0,-,"));
        let script = gnuplot_script("overhead.csv", &rows);
        assert!(script.contains("csv = 'overhead.csv'"));
        // One plotted series per (scheme, eta, mode) combination.
        assert_eq!(script.matches("with linespoints").count(), 3 * 2 + 3);
    }

    #[test]
    fn seed_rows_follow_the_schema() {
        let config = ProtocolConfig::new(2).unwrap();
        let stats = estimate_success(&config, 200, 1).unwrap();
        let text = render_seed_csv(2, 1.0, AcceptanceMode::Permissive, &stats);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n,eta,mode,trials,accepted,rate,stderr,mean_fidelity");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "2");
        assert_eq!(row[1], "1.0");
        assert_eq!(row[2], "permissive");
        assert_eq!(row[3], "200");
        assert_eq!(row[4], stats.accepted.to_string());
    }

    #[test]
    fn breed_rows_follow_the_schema() {
        let config = SequenceConfig {
            target: 6,
            mode: ProbabilityMode::Paper,
            policy: RecyclingPolicy::NoRecycling,
            eta: 1.0,
        };
        let text = run_breed(&config, true, 500, 9, OutputFormat::Csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), BREED_CSV_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 17);
        assert_eq!(row[0], "6");
        assert_eq!(row[1], "4");
        assert_eq!(row[2], "paper");
        assert_eq!(row[3], "no-recycling");
        assert_eq!(row[4], "1.0");
        assert_eq!(row[6], "0.1875");
        assert_eq!(row[7], "0.5625");
        assert_eq!(row[8], "0.25");
        let delta: f64 = row[9].parse().unwrap();
        assert!(delta < 1e-12);
    }

    #[test]
    fn json_outputs_mirror_the_csv_fields() {
        let config = SequenceConfig {
            target: 4,
            mode: ProbabilityMode::Exact,
            policy: RecyclingPolicy::NoRecycling,
            eta: 1.0,
        };
        let text = run_breed(&config, false, 200, 5, OutputFormat::Json).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["target"], 4);
        assert_eq!(value["mode"], "exact");
        assert_eq!(value["policy"], "no-recycling");
        assert!(value.get("oracle_delta").is_none());
        assert!(value["mean_qubits"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn missing_required_settings_are_validation_errors() {
        let flags = ProtocolFlags {
            n: None,
            eta_d: None,
            eta_l_transmission: None,
            g: None,
            kappa: None,
            acceptance: None,
            window: None,
        };
        let err = resolve_protocol(&flags, &ConfigFile::default()).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_VALIDATION);
        assert!(err.message().contains("--n"));
    }

    #[test]
    fn error_classification_matches_exit_codes() {
        let validation: CliError = SeedingError::BadNodeCount { n: 5, max: 8 }.into();
        assert_eq!(validation.exit_code(), EXIT_VALIDATION);
        let invariant: CliError = SeedingError::InvariantViolation("x".into()).into();
        assert_eq!(invariant.exit_code(), EXIT_INVARIANT);
        let stalled: CliError = BreedingError::DeliveryStalled { cap: 1 }.into();
        assert_eq!(stalled.exit_code(), EXIT_INVARIANT);
        let schedule: CliError = BreedingError::Schedule(ResourceError::NotPowerOfTwo { n: 6 }).into();
        assert_eq!(schedule.exit_code(), EXIT_VALIDATION);
    }
}
