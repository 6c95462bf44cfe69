//! Scenario runner for the memory-assisted QKD simulation library.
//!
//! Three modes, chosen by flags:
//!   * distance sweep (default): optimizes intensities per distance for the
//!     selected system(s) and writes a CSV curve;
//!   * `--oracle <scenario>`: runs a Monte-Carlo cross-check suite and
//!     reports closed-form vs simulation agreement;
//!   * `--counts <csv>`: runs the finite-key estimator on externally
//!     supplied counts.
//!
//! Exit codes: 0 success, 2 invalid specification, 3 numerical failure at
//! one or more points (partial output is still written).

use anyhow::{anyhow, Context};
use clap::Parser;
use maqkd::finite_key;
use maqkd::optimizer::OptimizationConfig;
use maqkd::oracle::{self, Scenario};
use maqkd::sweep::{self, BlockSpec, RateMode, RunSpec, SystemChoice};
use maqkd::system::{Decoherence, IntensitySet, MemoryKind, MemoryParams, SystemParams};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "maqkd", version, about = "Decoy-state memory-assisted QKD key-rate simulator")]
struct Cli {
    /// System(s) to sweep: ma, mdi or both.
    #[arg(long)]
    system: Option<String>,
    /// Memory platform: wv, ca, sv or custom (parameters from --config).
    #[arg(long)]
    memory: Option<String>,
    /// Memory decoherence model: dephasing or depolarising.
    #[arg(long)]
    decoherence: Option<String>,
    /// Rate regime: asymptotic or finite.
    #[arg(long)]
    mode: Option<String>,
    /// Finite-key block size in rounds.
    #[arg(long)]
    block_size: Option<f64>,
    /// Finite-key collection time in seconds (block = clock x time).
    #[arg(long)]
    collection_time: Option<f64>,
    /// Frequency-conversion efficiency at the middle node.
    #[arg(long)]
    eta_c: Option<f64>,
    /// Per-bound failure probability of the finite-key estimation.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Distance grid start:stop:step in km.
    #[arg(long)]
    distance: Option<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for optimizer restarts and Monte-Carlo streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Key/value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a Monte-Carlo oracle suite instead of a sweep
    /// (loading_z, loading_x, nl_and_eta, dephasing_avg, mdi_gain,
    /// estimator_coverage, all).
    #[arg(long)]
    oracle: Option<String>,
    /// Monte-Carlo trials per oracle comparison.
    #[arg(long)]
    trials: Option<u64>,
    /// Estimator-only mode: path to an observed-counts CSV.
    #[arg(long)]
    counts: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn load(cli: &Cli) -> anyhow::Result<Settings> {
        let mut values = BTreeMap::new();
        if let Some(path) = &cli.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {:?}", path))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| anyhow!("config line {} is not key = value", lineno + 1))?;
                values.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Settings { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow!("config key `{key}`: {e}")),
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = Settings::load(&cli)?;

    let system_params = system_params(&cli, &cfg)?;
    let memory = memory_params(&cli, &cfg)?;
    let epsilon = cli
        .epsilon
        .or(cfg.get("epsilon")?)
        .unwrap_or(finite_key::DEFAULT_EPSILON);
    let seed = cli.seed.or(cfg.get("seed")?).unwrap_or(1);

    if let Some(scenario) = &cli.oracle {
        let trials = cli.trials.or(cfg.get("trials")?).unwrap_or(1_000_000);
        return run_oracle(scenario, trials, seed, epsilon);
    }
    if let Some(path) = &cli.counts {
        return run_estimator(path, &cfg, epsilon);
    }
    run_sweep_mode(&cli, &cfg, system_params, memory, epsilon, seed)
}

fn system_params(cli: &Cli, cfg: &Settings) -> anyhow::Result<SystemParams> {
    let mut sys = SystemParams::default();
    if let Some(v) = cfg.get("L_att")? {
        sys.l_att_km = v;
    }
    if let Some(v) = cfg.get("eta_d")? {
        sys.eta_d = v;
    }
    if let Some(v) = cfg.get("gamma_dc")? {
        sys.gamma_dc = v;
    }
    if let Some(v) = cfg.get("e_mis")? {
        sys.e_mis = v;
    }
    if let Some(v) = cfg.get("f_ec")? {
        sys.f_ec = v;
    }
    if let Some(v) = cfg.get("R_s")? {
        sys.r_s = v;
    }
    if let Some(v) = cli.eta_c.or(cfg.get("eta_c")?) {
        sys.eta_c = v;
    }
    Ok(sys)
}

fn memory_params(cli: &Cli, cfg: &Settings) -> anyhow::Result<(String, MemoryParams)> {
    let label = cli
        .memory
        .clone()
        .or(cfg.get("memory")?)
        .unwrap_or_else(|| "wv".to_string());
    let mut mem = if label.eq_ignore_ascii_case("custom") {
        let mut m = MemoryKind::WarmVapour.params();
        let require = |key: &str, slot: &mut f64| -> anyhow::Result<()> {
            *slot = cfg
                .get(key)?
                .ok_or_else(|| anyhow!("custom memory needs config key `{key}`"))?;
            Ok(())
        };
        require("eta_w_eta_r0", &mut m.eta_w_eta_r0)?;
        require("T1", &mut m.t1)?;
        m.t2 = cfg.get("T2")?.unwrap_or(m.t1);
        require("tau_int", &mut m.tau_int)?;
        m.tau_init = cfg.get("tau_init")?.unwrap_or(0.0);
        m.n_r = cfg.get("N_r")?.unwrap_or(1);
        require("memory_R_s", &mut m.r_s)?;
        m
    } else {
        MemoryKind::from_label(&label)?.params()
    };
    let deco = cli
        .decoherence
        .clone()
        .or(cfg.get("decoherence")?)
        .unwrap_or_else(|| "dephasing".to_string());
    mem.decoherence = match deco.to_ascii_lowercase().as_str() {
        "dephasing" => Decoherence::Dephasing,
        "depolarising" | "depolarizing" => Decoherence::Depolarising,
        other => return Err(anyhow!("unknown decoherence model `{other}`")),
    };
    Ok((label, mem))
}

fn intensity_set(cfg: &Settings) -> anyhow::Result<IntensitySet> {
    let mut set = IntensitySet::default();
    if let Some(v) = cfg.get("z")? {
        set.z = v;
    }
    if let Some(v) = cfg.get("w1")? {
        set.w1 = v;
    }
    if let Some(v) = cfg.get("w2")? {
        set.w2 = v;
    }
    if let Some(v) = cfg.get("v")? {
        set.v = v;
    }
    if let Some(v) = cfg.get("p_z")? {
        set.p_z = v;
    }
    if let Some(v) = cfg.get("p_w1")? {
        set.p_w1 = v;
    }
    if let Some(v) = cfg.get("p_w2")? {
        set.p_w2 = v;
    }
    if let Some(v) = cfg.get("p_v")? {
        set.p_v = v;
    }
    set.validate()?;
    Ok(set)
}

fn run_oracle(scenario: &str, trials: u64, seed: u64, epsilon: f64) -> anyhow::Result<ExitCode> {
    let scenarios: Vec<Scenario> = if scenario == "all" {
        Scenario::ALL.to_vec()
    } else {
        vec![Scenario::from_label(scenario)?]
    };
    let mut worst = 0.0f64;
    for sc in scenarios {
        println!("# oracle scenario: {} ({} trials)", sc.label(), trials);
        match sc {
            Scenario::EstimatorCoverage => {
                let set = IntensitySet::default();
                let reps = 100;
                let coverage = oracle::simulate_estimator_coverage(
                    &set, 1e8, epsilon.max(1e-3), 4, reps, seed, true,
                )?;
                println!("coverage over {reps} sampled planted instances: {coverage:.3}");
                if coverage < 0.99 {
                    worst = f64::INFINITY;
                }
            }
            _ => {
                let comparisons = match sc {
                    Scenario::LoadingZ => {
                        oracle::loading_comparisons(maqkd::loading::Basis::Z, trials, seed)
                    }
                    Scenario::LoadingX => {
                        oracle::loading_comparisons(maqkd::loading::Basis::X, trials, seed)
                    }
                    Scenario::NlAndEta => oracle::clock_comparisons(trials, seed),
                    Scenario::DephasingAvg => oracle::decoherence_comparisons(trials, seed),
                    Scenario::MdiGain => oracle::mdi_gain_comparisons(trials, seed),
                    Scenario::EstimatorCoverage => unreachable!(),
                };
                for c in &comparisons {
                    let sigmas = c.sigmas();
                    worst = worst.max(sigmas);
                    println!(
                        "{:<44} analytic {: >12.6e}  mc {: >12.6e} +- {:.2e}  ({:.2} sigma)",
                        c.label, c.analytic, c.estimate.value, c.estimate.std_err, sigmas
                    );
                }
            }
        }
    }
    if worst.is_finite() && worst <= 3.0 {
        println!("# all comparisons within 3 sigma");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("# disagreement beyond 3 sigma");
        Ok(ExitCode::from(3))
    }
}

fn run_estimator(path: &PathBuf, cfg: &Settings, epsilon: f64) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {:?}", path))?;
    let counts = maqkd::counts::ObservedCounts::from_csv(&text)?;
    let set = intensity_set(cfg)?;
    let n_cut = cfg.get("n_cut")?.unwrap_or(finite_key::DEFAULT_N_CUT);
    let f_ec = cfg.get("f_ec")?.unwrap_or(1.0);
    let result = finite_key::key_length(&counts, &set, epsilon, n_cut, f_ec)?;
    println!("n_block           = {}", counts.n_block);
    println!("m11_lower         = {}", result.m11_l);
    println!("e11_upper         = {}", result.e11_u);
    println!("m11z_lower        = {}", result.m11z_l);
    println!("e11z_upper        = {}", result.e11z_u);
    println!(
        "e_ph_upper        = {}",
        result
            .e_ph_u
            .map_or("undefined".to_string(), |v| v.to_string())
    );
    println!("sifted_key_bits   = {}", result.m_z);
    println!("sifted_error_rate = {}", result.e_z);
    println!("secret_key_bits   = {}", result.key_bits);
    println!("total_epsilon     = {}", result.total_epsilon);
    if let Some(r_s) = cfg.get::<f64>("R_s")? {
        println!("rate_bps          = {}", result.key_bits * r_s / counts.n_block);
    }
    if let Some(note) = &result.note {
        println!("note              = {note}");
    }
    Ok(ExitCode::SUCCESS)
}

fn run_sweep_mode(
    cli: &Cli,
    cfg: &Settings,
    base: SystemParams,
    memory: (String, MemoryParams),
    epsilon: f64,
    seed: u64,
) -> anyhow::Result<ExitCode> {
    let system = match cli
        .system
        .clone()
        .or(cfg.get("system")?)
        .unwrap_or_else(|| "both".into())
        .to_ascii_lowercase()
        .as_str()
    {
        "ma" => SystemChoice::MemoryAssisted,
        "mdi" => SystemChoice::Mdi,
        "both" => SystemChoice::Both,
        other => return Err(anyhow!("unknown system `{other}`")),
    };
    let mode = match cli
        .mode
        .clone()
        .or(cfg.get("mode")?)
        .unwrap_or_else(|| "asymptotic".into())
        .to_ascii_lowercase()
        .as_str()
    {
        "asymptotic" => RateMode::Asymptotic,
        "finite" => RateMode::Finite,
        other => return Err(anyhow!("unknown mode `{other}`")),
    };
    let block = match (
        cli.block_size.or(cfg.get("block_size")?),
        cli.collection_time.or(cfg.get("collection_time")?),
    ) {
        (Some(_), Some(_)) => {
            return Err(anyhow!("give either --block-size or --collection-time, not both"))
        }
        (Some(n), None) => Some(BlockSpec::Rounds(n)),
        (None, Some(t)) => Some(BlockSpec::CollectionTime(t)),
        (None, None) => None,
    };
    let distance = cli
        .distance
        .clone()
        .or(cfg.get("distance")?)
        .ok_or_else(|| anyhow!("a sweep needs --distance start:stop:step"))?;
    let parts: Vec<&str> = distance.split(':').collect();
    if parts.len() != 3 {
        return Err(anyhow!("--distance must be start:stop:step, got `{distance}`"));
    }
    let parse = |s: &str| -> anyhow::Result<f64> {
        s.trim()
            .parse()
            .map_err(|e| anyhow!("bad distance component `{s}`: {e}"))
    };
    let (l_start_km, l_stop_km, l_step_km) =
        (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);

    let opt = OptimizationConfig {
        max_evals: cfg.get("max_evals")?.unwrap_or(350),
        restarts: cfg.get("restarts")?.unwrap_or(5),
        seed,
        epsilon,
        n_cut: cfg.get("n_cut")?.unwrap_or(finite_key::DEFAULT_N_CUT),
        ..Default::default()
    };
    let spec = RunSpec {
        system,
        mode,
        block,
        memory: memory.1,
        memory_label: memory.0,
        base,
        l_start_km,
        l_stop_km,
        l_step_km,
        seed,
        opt,
        refine: true,
    };
    spec.validate()?;

    let out = sweep::run_sweep(&spec)?;
    let csv = sweep::render_csv(&spec, &out);
    match &cli.output {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {:?}", path))?;
            eprintln!("wrote {} rows to {:?}", out.rows.len(), path);
        }
        None => print!("{csv}"),
    }
    if system == SystemChoice::Both {
        match out.crossover_km {
            Some(km) => eprintln!("crossover (memory-assisted above reference): {km:.2} km"),
            None => eprintln!("no crossover in the swept range"),
        }
    }
    if out.failures > 0 {
        eprintln!("{} point(s) failed; partial results written", out.failures);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}
