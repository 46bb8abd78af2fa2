//! Experiment pipelines behind the `mfteams` command.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use mfteams::approx_metrics::{
    approximation_bound, estimate_lipschitz, expected_deviation, fit_rate, MetricReport, RateFit,
};
use mfteams::count_dynamics::{kernel_csv, Lattice, MeanField, Prescription};
use mfteams::game_model::{lipschitz_bounds, load_spec, GameSpec, LipschitzBounds};
use mfteams::mf_limit::{
    default_resolutions, project_limit_policy, rollout_inf, simplex_grid, solve_mpe_inf,
};
use mfteams::mpe_finite::{
    evaluate_total_cost_with, solve_mpe_with, verify_mpe_with, KernelCache, PolicyTable,
};
use mfteams::simulator::{estimate_cost, lift_policy};
use mfteams::stage_nash::{
    build_prescription_set, stage_game_from_kernels, PrescriptionMode, PrescriptionSet,
    SolverConfig,
};
use mfteams::static_teamnash::{
    load_static_game, pure_nash_static, team_nash_static, BUNDLED_TEAM_GAME,
};

pub const DEFAULT_EPISODES: usize = 10_000;
pub const DEFAULT_SWEEP: [u32; 3] = [4, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Validate,
    SolveFinite,
    SolveInfinite,
    Simulate,
    Compare,
    Bound,
    StaticTne,
}

impl Mode {
    pub fn dir_name(self) -> &'static str {
        match self {
            Mode::Validate => "validate",
            Mode::SolveFinite => "solve-finite",
            Mode::SolveInfinite => "solve-infinite",
            Mode::Simulate => "simulate",
            Mode::Compare => "compare",
            Mode::Bound => "bound",
            Mode::StaticTne => "static-tne",
        }
    }
}

/// Everything a run depends on. Its JSON form is hashed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Game spec (or static game for `static-tne`; the bundled game when absent).
    pub spec: Option<PathBuf>,
    pub out: PathBuf,
    /// Overrides the spec's seed.
    pub seed: Option<u64>,
    pub episodes: usize,
    /// Gridded prescriptions with this resolution; pure prescriptions when absent.
    pub grid_g: Option<u32>,
    /// Simplex grid resolution for the limit game.
    pub simplex_n: Option<u32>,
    pub n_sweep: Vec<u32>,
    pub pure_only: bool,
    pub workers: Option<usize>,
    pub per_episode: bool,
    pub audit: bool,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, spec: Option<PathBuf>, out: PathBuf) -> Self {
        ExperimentConfig {
            mode,
            spec,
            out,
            seed: None,
            episodes: DEFAULT_EPISODES,
            grid_g: None,
            simplex_n: None,
            n_sweep: DEFAULT_SWEEP.to_vec(),
            pure_only: false,
            workers: None,
            per_episode: false,
            audit: false,
        }
    }

    fn check(&self) -> Result<(), CliError> {
        if self.mode != Mode::StaticTne && self.spec.is_none() {
            return Err(CliError::Config(format!(
                "{} needs --spec",
                self.mode.dir_name()
            )));
        }
        if self.episodes == 0 {
            return Err(CliError::Config("--episodes must be positive".into()));
        }
        if self.grid_g == Some(0) || self.simplex_n == Some(0) {
            return Err(CliError::Config(
                "--grid-g and --simplex-n must be positive".into(),
            ));
        }
        if self.mode == Mode::Bound && (self.n_sweep.is_empty() || self.n_sweep.contains(&0)) {
            return Err(CliError::Config(
                "--n-sweep needs positive populations".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] mfteams::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(mfteams::Error::Validation { .. })
            | CliError::Model(mfteams::Error::Parse(_)) => 2,
            CliError::Model(mfteams::Error::Capacity { .. }) => 3,
            CliError::Model(mfteams::Error::NoPureEquilibrium { .. }) => 4,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Model(mfteams::Error::Validation { .. }) => "validation",
            CliError::Model(mfteams::Error::Parse(_)) => "parse",
            CliError::Model(mfteams::Error::Capacity { .. }) => "capacity",
            CliError::Model(mfteams::Error::NoPureEquilibrium { .. }) => "no-pure-equilibrium",
            CliError::Model(_) => "model",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    exit_code: i32,
    message: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    mode: &'a str,
    config_hash: String,
    spec_hash: &'a str,
    seed: Option<u64>,
    version: &'a str,
    workers: usize,
    wall_time_seconds: f64,
    artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Artifact<'a, T: Serialize> {
    spec_hash: &'a str,
    #[serde(flatten)]
    body: T,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes artifacts into one mode directory and remembers their names.
struct Writer {
    dir: PathBuf,
    spec_hash: String,
    written: Vec<String>,
}

impl Writer {
    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), CliError> {
        let artifact = Artifact {
            spec_hash: &self.spec_hash,
            body,
        };
        let mut text =
            serde_json::to_string_pretty(&artifact).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        self.raw(name, &text)
    }

    /// CSV with a leading `# spec_hash=...` line.
    fn csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let text = format!("# spec_hash={}\n{body}", self.spec_hash);
        self.raw(name, &text)
    }

    fn raw(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Outcome of a run: exit status and the directory holding its artifacts.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub dir: PathBuf,
    pub error: Option<String>,
}

/// Runs one experiment, writing artifacts under `<out>/<mode>/`. Errors are written
/// as `error.json` and mapped to exit codes (2 validation, 3 capacity, 4 no pure
/// equilibrium, 1 otherwise).
pub fn run(config: &ExperimentConfig) -> RunOutcome {
    let dir = config.out.join(config.mode.dir_name());
    let started = Instant::now();
    let result = fs::create_dir_all(&dir)
        .map_err(CliError::from)
        .and_then(|_| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers.unwrap_or(0))
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let workers = pool.current_num_threads();
            pool.install(|| execute(config, &dir)).map(|w| (w, workers))
        });
    match result {
        Ok((writer, workers)) => {
            let config_json = serde_json::to_string(config).expect("config serializes");
            let manifest = Manifest {
                mode: config.mode.dir_name(),
                config_hash: sha256_hex(config_json.as_bytes()),
                spec_hash: &writer.spec_hash,
                seed: writer_seed(config),
                version: env!("CARGO_PKG_VERSION"),
                workers,
                wall_time_seconds: started.elapsed().as_secs_f64(),
                artifacts: writer.written.clone(),
            };
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            if let Err(e) = fs::write(dir.join("manifest.json"), text + "\n") {
                return fail(&dir, CliError::Io(e));
            }
            RunOutcome {
                exit_code: 0,
                dir,
                error: None,
            }
        }
        Err(e) => fail(&dir, e),
    }
}

fn writer_seed(config: &ExperimentConfig) -> Option<u64> {
    config.seed.or_else(|| {
        let path = config.spec.as_ref()?;
        let text = fs::read_to_string(path).ok()?;
        load_spec(&text).ok().map(|s| s.seed)
    })
}

fn fail(dir: &Path, e: CliError) -> RunOutcome {
    let record = ErrorRecord {
        kind: e.kind(),
        exit_code: e.exit_code(),
        message: e.to_string(),
    };
    if let Ok(text) = serde_json::to_string_pretty(&record) {
        let _ = fs::write(dir.join("error.json"), text + "\n");
    }
    RunOutcome {
        exit_code: e.exit_code(),
        dir: dir.to_path_buf(),
        error: Some(e.to_string()),
    }
}

fn execute(config: &ExperimentConfig, dir: &Path) -> Result<Writer, CliError> {
    config.check()?;
    if config.mode == Mode::StaticTne {
        let text = match &config.spec {
            Some(p) => fs::read_to_string(p)?,
            None => BUNDLED_TEAM_GAME.to_string(),
        };
        let mut w = Writer {
            dir: dir.to_path_buf(),
            spec_hash: sha256_hex(text.as_bytes()),
            written: Vec::new(),
        };
        static_tne(&text, &mut w)?;
        return Ok(w);
    }
    let path = config.spec.as_ref().expect("checked above");
    let text = fs::read_to_string(path)?;
    let mut w = Writer {
        dir: dir.to_path_buf(),
        spec_hash: sha256_hex(text.as_bytes()),
        written: Vec::new(),
    };
    let mut spec = load_spec(&text)?;
    if let Some(seed) = config.seed {
        spec.seed = seed;
    }
    match config.mode {
        Mode::Validate => validate(&spec, &mut w)?,
        Mode::SolveFinite => solve_finite(&spec, config, &mut w)?,
        Mode::SolveInfinite => solve_infinite(&spec, config, &mut w)?,
        Mode::Simulate => simulate(&spec, config, &mut w, false)?,
        Mode::Compare => simulate(&spec, config, &mut w, true)?,
        Mode::Bound => bound(&spec, config, &mut w)?,
        Mode::StaticTne => unreachable!(),
    }
    Ok(w)
}

fn prescription_sets(
    spec: &GameSpec,
    config: &ExperimentConfig,
) -> Result<Vec<PrescriptionSet>, CliError> {
    let mode = config
        .grid_g
        .map_or(PrescriptionMode::Pure, PrescriptionMode::Gridded);
    Ok((0..spec.num_teams())
        .map(|k| build_prescription_set(spec, k, mode))
        .collect::<mfteams::Result<Vec<_>>>()?)
}

fn solver_config(config: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        pure_only: config.pure_only,
        ..SolverConfig::default()
    }
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    valid: bool,
    teams: usize,
    horizon: usize,
    seed: u64,
    populations: Vec<u32>,
    count_lattice_size: String,
    model_lipschitz: LipschitzBounds,
}

fn validate(spec: &GameSpec, w: &mut Writer) -> Result<(), CliError> {
    let size = spec
        .teams
        .iter()
        .map(|t| mfteams::count_dynamics::lattice_size(t.population, t.num_states()))
        .fold(1u128, |a, b| a.saturating_mul(b));
    let report = ValidationReport {
        valid: true,
        teams: spec.num_teams(),
        horizon: spec.horizon,
        seed: spec.seed,
        populations: spec.populations(),
        count_lattice_size: size.to_string(),
        model_lipschitz: lipschitz_bounds(spec),
    };
    w.json("validation.json", &report)?;
    println!(
        "valid: {} teams, horizon {}, count lattice size {size}",
        report.teams, report.horizon
    );
    Ok(())
}

struct FiniteSolution {
    sets: Vec<PrescriptionSet>,
    policy: PolicyTable,
    cache: KernelCache,
    values: mfteams::ValueTable,
}

fn solve_finite_tables(
    spec: &GameSpec,
    config: &ExperimentConfig,
) -> Result<FiniteSolution, CliError> {
    let sets = prescription_sets(spec, config)?;
    let lattice = Lattice::counts(spec)?;
    let cache = KernelCache::new(spec, &lattice, &sets)?;
    let (policy, values) = solve_mpe_with(spec, &lattice, &sets, &solver_config(config), &cache)?;
    Ok(FiniteSolution {
        sets,
        policy,
        cache,
        values,
    })
}

#[derive(Debug, Serialize)]
struct PolicyFile<'a> {
    lattice: &'a str,
    mixed_points: usize,
    records: Vec<mfteams::mpe_finite::PolicyRecord>,
}

#[derive(Debug, Serialize)]
struct FiniteSummary {
    total_cost: Vec<f64>,
    max_gain: f64,
    mean_gain: f64,
    mixed_points: usize,
    teams: Vec<mfteams::mpe_finite::TeamGain>,
}

fn solve_finite(
    spec: &GameSpec,
    config: &ExperimentConfig,
    w: &mut Writer,
) -> Result<(), CliError> {
    let sol = solve_finite_tables(spec, config)?;
    let cert = verify_mpe_with(spec, &sol.policy, &sol.cache)?;
    let total = evaluate_total_cost_with(spec, &sol.policy, &sol.cache)?;
    w.json(
        "policy.json",
        &PolicyFile {
            lattice: "count",
            mixed_points: sol.policy.mixed_count(),
            records: sol.policy.records(&sol.values),
        },
    )?;
    w.csv("certificate.csv", &cert.csv())?;
    w.json(
        "summary.json",
        &FiniteSummary {
            total_cost: total.clone(),
            max_gain: cert.max_gain,
            mean_gain: cert.mean_gain,
            mixed_points: cert.mixed_points,
            teams: cert.teams.clone(),
        },
    )?;
    if config.audit {
        let items: Vec<&[Prescription]> = sol.sets.iter().map(|s| s.items.as_slice()).collect();
        w.csv(
            "kernels.csv",
            &kernel_csv(spec, &sol.policy.lattice, &items)?,
        )?;
        let mut games = String::new();
        for t in 0..spec.horizon {
            for idx in 0..sol.policy.lattice.len() {
                let next = sol.values.values.get(t + 1).map(|v| v.as_slice());
                let game = stage_game_from_kernels(
                    spec,
                    &sol.policy.lattice,
                    idx,
                    t,
                    &sol.cache.points[idx],
                    next,
                    &sol.sets,
                );
                if games.is_empty() {
                    games.push_str(&format!("stage,{}", game.csv_header()));
                }
                for line in game.csv_rows(&sol.policy.lattice.count_label(idx)).lines() {
                    games.push_str(&format!("{},{line}\n", t + 1));
                }
            }
        }
        w.csv("stage_games.csv", &games)?;
    }
    println!(
        "solved {} points x {} stages; total cost {:?}; max deviation gain {:e}; mixed points {}",
        sol.policy.lattice.len(),
        spec.horizon,
        total,
        cert.max_gain,
        cert.mixed_points
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct LimitSummary {
    resolution: Vec<u32>,
    grid_points: usize,
    projection_error: Vec<f64>,
    mixed_points: usize,
    total_cost: Vec<f64>,
    trajectory: mfteams::mf_limit::Trajectory,
}

fn solve_infinite(
    spec: &GameSpec,
    config: &ExperimentConfig,
    w: &mut Writer,
) -> Result<(), CliError> {
    let sets = prescription_sets(spec, config)?;
    let resolution = config
        .simplex_n
        .map_or_else(|| default_resolutions(spec), |n| vec![n; spec.num_teams()]);
    let grid = simplex_grid(spec, &resolution)?;
    let sol = solve_mpe_inf(spec, &sets, &grid, &solver_config(config))?;
    let trajectory = rollout_inf(spec, &sol.policy);
    w.json(
        "limit_policy.json",
        &PolicyFile {
            lattice: "simplex-grid",
            mixed_points: sol.policy.mixed_count(),
            records: sol.policy.records(&sol.values),
        },
    )?;
    w.csv("trajectory.csv", &trajectory.csv())?;
    println!(
        "limit game on {} grid points; rollout cost {:?}",
        grid.len(),
        trajectory.total_cost
    );
    w.json(
        "summary.json",
        &LimitSummary {
            resolution,
            grid_points: grid.len(),
            projection_error: sol.projection_error,
            mixed_points: sol.policy.mixed_count(),
            total_cost: trajectory.total_cost.clone(),
            trajectory,
        },
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct TeamComparison {
    team: usize,
    exact: f64,
    estimate: f64,
    stderr: f64,
    abs_diff: f64,
    within_three_stderr: bool,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    episodes: usize,
    seed: u64,
    public_randomization: bool,
    all_within: bool,
    teams: Vec<TeamComparison>,
}

fn simulate(
    spec: &GameSpec,
    config: &ExperimentConfig,
    w: &mut Writer,
    compare: bool,
) -> Result<(), CliError> {
    let sol = solve_finite_tables(spec, config)?;
    let agent = lift_policy(&sol.policy);
    let sim = estimate_cost(spec, &agent, config.episodes, spec.seed)?;
    if compare {
        let exact = evaluate_total_cost_with(spec, &sol.policy, &sol.cache)?;
        let teams: Vec<TeamComparison> = exact
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let diff = (sim.mean[k] - l).abs();
                TeamComparison {
                    team: k,
                    exact: l,
                    estimate: sim.mean[k],
                    stderr: sim.stderr[k],
                    abs_diff: diff,
                    within_three_stderr: diff <= 3.0 * sim.stderr[k],
                }
            })
            .collect();
        for t in &teams {
            println!(
                "team {}: exact {:.6} simulated {:.6} +/- {:.6} ({})",
                t.team,
                t.exact,
                t.estimate,
                t.stderr,
                if t.within_three_stderr {
                    "within 3 se"
                } else {
                    "OUTSIDE 3 se"
                }
            );
        }
        let report = CompareReport {
            episodes: sim.episodes,
            seed: spec.seed,
            public_randomization: agent.uses_public_randomization(),
            all_within: teams.iter().all(|t| t.within_three_stderr),
            teams,
        };
        w.json("compare.json", &report)?;
    } else {
        #[derive(Serialize)]
        struct SimFile<'a> {
            seed: u64,
            public_randomization: bool,
            result: &'a mfteams::simulator::SimResult,
        }
        w.json(
            "sim_result.json",
            &SimFile {
                seed: spec.seed,
                public_randomization: agent.uses_public_randomization(),
                result: &sim,
            },
        )?;
        println!(
            "simulated {} episodes; mean cost {:?}; stderr {:?}",
            sim.episodes, sim.mean, sim.stderr
        );
    }
    if config.per_episode {
        w.csv("per_episode.csv", &sim.per_episode_csv())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub population: u32,
    /// `L^(k)(ψ̄) - L^(k)(best response)` in the finite game, per team.
    pub total_gain: Vec<f64>,
    /// Largest gain from any `(t, z)`, per team.
    pub max_pointwise_gain: Vec<f64>,
    pub epsilon_bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Serialize)]
pub struct BoundReport {
    pub resolution: Vec<u32>,
    pub projection_error: Vec<f64>,
    pub kappa_by_population: Vec<Vec<f64>>,
    pub metrics: MetricReport,
    pub sweep: Vec<SweepEntry>,
    /// Steps along the sweep where the largest team gain went up.
    pub gain_inversions: usize,
}

/// The approximation chain: solve the limit game once, read its policy on the count
/// lattice of every population in the sweep, and measure each team's best-response
/// gain next to the bound built from `κ̂` and the limit value table's `L̂`.
pub fn bound_report(
    spec: &GameSpec,
    sets: &[PrescriptionSet],
    sweep: &[u32],
    simplex_n: Option<u32>,
    solver: &SolverConfig,
) -> Result<BoundReport, CliError> {
    let k_teams = spec.num_teams();
    let top = *sweep
        .iter()
        .max()
        .ok_or_else(|| CliError::Config("empty sweep".into()))?;
    let resolution = vec![simplex_n.unwrap_or(2 * top); k_teams];
    let grid = simplex_grid(spec, &resolution)?;
    let limit = solve_mpe_inf(spec, sets, &grid, solver)?;
    let lipschitz = estimate_lipschitz(&limit.values, spec)?;

    let mut kappa = vec![0.0f64; k_teams];
    let mut kappa_by_population = Vec::new();
    for &n in sweep {
        let scaled = spec.with_populations(&vec![n; k_teams])?;
        let lattice = Lattice::counts(&scaled)?;
        let mut env = vec![0.0f64; k_teams];
        let profiles: usize = sets.iter().map(PrescriptionSet::len).product();
        for idx in 0..lattice.len() {
            let z = lattice.mean_field(idx);
            for j in 0..profiles {
                let mut rest = j;
                let mut gammas: Vec<&Prescription> = vec![&sets[0].items[0]; k_teams];
                for k in (0..k_teams).rev() {
                    gammas[k] = &sets[k].items[rest % sets[k].len()];
                    rest /= sets[k].len();
                }
                let d = expected_deviation(&z, &gammas, &scaled)?;
                for k in 0..k_teams {
                    env[k] = env[k].max(f64::from(n).sqrt() * d.per_team[k]);
                }
            }
        }
        for k in 0..k_teams {
            kappa[k] = kappa[k].max(env[k]);
        }
        kappa_by_population.push(env);
    }

    let rate_fit: Option<RateFit> = {
        let mut distinct = sweep.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let z = MeanField::initial(spec);
        let scalable = sweep.iter().all(|&n| {
            z.per_team.iter().flatten().all(|p| {
                let c = p * f64::from(n);
                (c - c.round()).abs() <= 1e-9
            })
        });
        if distinct.len() >= 4 && scalable {
            let first: Vec<Prescription> = sets.iter().map(|s| s.items[0].clone()).collect();
            Some(fit_rate(spec, &z, &first, sweep)?)
        } else {
            None
        }
    };

    let mut entries = Vec::new();
    for &n in sweep {
        let scaled = spec.with_populations(&vec![n; k_teams])?;
        let projected = project_limit_policy(&limit.policy, &scaled)?;
        let cache = KernelCache::new(&scaled, &projected.lattice, sets)?;
        let cert = verify_mpe_with(&scaled, &projected, &cache)?;
        let populations = vec![n; k_teams];
        let epsilon_bound = approximation_bound(&kappa, &lipschitz, &populations);
        let total_gain: Vec<f64> = cert.teams.iter().map(|t| t.total_gain).collect();
        entries.push(SweepEntry {
            population: n,
            within_bound: total_gain.iter().all(|&g| g <= epsilon_bound),
            total_gain,
            max_pointwise_gain: cert.teams.iter().map(|t| t.max_gain).collect(),
            epsilon_bound,
        });
    }
    let headline: Vec<f64> = entries
        .iter()
        .map(|e| e.total_gain.iter().copied().fold(0.0, f64::max))
        .collect();
    let gain_inversions = headline.windows(2).filter(|p| p[1] > p[0] + 1e-12).count();
    let metrics = MetricReport::new(kappa, lipschitz, vec![top; k_teams], rate_fit);
    Ok(BoundReport {
        resolution,
        projection_error: limit.projection_error,
        kappa_by_population,
        metrics,
        sweep: entries,
        gain_inversions,
    })
}

fn bound(spec: &GameSpec, config: &ExperimentConfig, w: &mut Writer) -> Result<(), CliError> {
    let sets = prescription_sets(spec, config)?;
    let report = bound_report(
        spec,
        &sets,
        &config.n_sweep,
        config.simplex_n,
        &solver_config(config),
    )?;
    for e in &report.sweep {
        println!(
            "N={}: deviation gain {:?} vs bound {:.6} ({})",
            e.population,
            e.total_gain,
            e.epsilon_bound,
            if e.within_bound { "within" } else { "EXCEEDS" }
        );
    }
    if let Some(fit) = &report.metrics.rate_fit {
        w.csv("rate_fit.csv", &fit.csv())?;
    }
    w.json("bound.json", &report)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProfileRow {
    profile: Vec<String>,
    payoffs: Vec<f64>,
    nash: bool,
    team_nash: bool,
}

#[derive(Debug, Serialize)]
struct StaticFile {
    nash: Vec<Vec<String>>,
    team_nash: Vec<Vec<String>>,
    profiles: Vec<ProfileRow>,
}

fn static_tne(text: &str, w: &mut Writer) -> Result<(), CliError> {
    let game = load_static_game(text)?;
    let nash = pure_nash_static(&game);
    let team = team_nash_static(&game);
    let profiles = (0..game.num_profiles())
        .map(|j| {
            let p = game.decompose(j);
            ProfileRow {
                profile: game.labels(&p),
                payoffs: (0..game.players.len())
                    .map(|i| game.payoff(i, &p))
                    .collect(),
                nash: nash.contains(&p),
                team_nash: team.contains(&p),
            }
        })
        .collect();
    let fmt = |set: &[Vec<usize>]| {
        set.iter()
            .map(|p| format!("({})", game.labels(p).join(",")))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("pure Nash equilibria: {}", fmt(&nash));
    println!("pure Team-Nash equilibria: {}", fmt(&team));
    w.json(
        "static_tne.json",
        &StaticFile {
            nash: nash.iter().map(|p| game.labels(p)).collect(),
            team_nash: team.iter().map(|p| game.labels(p)).collect(),
            profiles,
        },
    )
}
