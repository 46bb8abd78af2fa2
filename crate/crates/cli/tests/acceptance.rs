//! End-to-end acceptance checks. Each test prints one PASS/FAIL line with the
//! measured quantity before asserting.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use common::{
    agent_level_cost, agent_level_kernel, brute_force_team_values, joint_points, load_data,
};
use mfteams::approx_metrics::fit_rate;
use mfteams::count_dynamics::{joint_transition_kernel, stage_cost, stage_cost_from_counts};
use mfteams::mf_limit::flow;
use mfteams::mpe_finite::{evaluate_total_cost, solve_mpe, verify_mpe};
use mfteams::simulator::{empirical_kernel_check, estimate_cost, lift_policy};
use mfteams::stage_nash::build_prescription_set;
use mfteams::static_teamnash::{
    load_static_game, pure_nash_static, team_nash_static, BUNDLED_TEAM_GAME,
};
use mfteams::{
    load_spec, GameSpec, MeanField, Prescription, PrescriptionMode, PrescriptionSet, SolverConfig,
};
use mfteams_cli::{bound_report, run, ExperimentConfig, Mode};

fn verdict(id: u32, name: &str, pass: bool, detail: String, started: Instant, limit: Duration) {
    let elapsed = started.elapsed();
    let ok = pass && elapsed <= limit;
    println!(
        "[{}] criterion {id:>2} {name}: {detail} ({:.2}s, limit {}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(pass, "criterion {id} {name}: {detail}");
    assert!(elapsed <= limit, "criterion {id} {name} took {elapsed:?}");
}

fn pure_sets(spec: &GameSpec) -> Vec<PrescriptionSet> {
    (0..spec.num_teams())
        .map(|k| build_prescription_set(spec, k, PrescriptionMode::Pure).unwrap())
        .collect()
}

/// Every pair of pure prescriptions of a two-team game.
fn pure_profiles(spec: &GameSpec) -> Vec<Vec<Prescription>> {
    let sets = pure_sets(spec);
    let mut out = Vec::new();
    for a in &sets[0].items {
        for b in &sets[1].items {
            out.push(vec![a.clone(), b.clone()]);
        }
    }
    out
}

#[test]
fn criterion_01_static_team_game() {
    let started = Instant::now();
    let game = load_static_game(BUNDLED_TEAM_GAME).unwrap();
    let labels = |ps: &[Vec<usize>]| {
        let mut v: Vec<String> = ps.iter().map(|p| game.labels(p).join(",")).collect();
        v.sort();
        v
    };
    // every unilateral move of the row-column pair and of the matrix player
    let mut oracle = Vec::new();
    for j in 0..game.num_profiles() {
        let here = game.decompose(j);
        let pair = |p: &[usize]| game.payoff(0, p) + game.payoff(1, p);
        let pair_ok = (0..4).all(|d| pair(&[d / 2, d % 2, here[2]]) <= pair(&here));
        let solo_ok =
            (0..2).all(|m| game.payoff(2, &[here[0], here[1], m]) <= game.payoff(2, &here));
        if pair_ok && solo_ok {
            oracle.push(here);
        }
    }
    let nash = labels(&pure_nash_static(&game));
    let tne = labels(&team_nash_static(&game));
    let pass = nash == ["B,L,II", "B,R,I", "T,L,I", "T,R,II"]
        && tne == labels(&oracle)
        && tne == ["B,L,II", "T,L,I"];
    verdict(
        1,
        "static NE and team-Nash sets",
        pass,
        format!("NE {nash:?}, TNE {tne:?}"),
        started,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_02_kernel_exactness() {
    let started = Instant::now();
    let g = load_data("reference_two_teams.json");
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut cases = 0;
    for point in joint_points(&g) {
        for gammas in pure_profiles(&g) {
            let law = joint_transition_kernel(&point, &gammas, &g).unwrap();
            let oracle = agent_level_kernel(&g, &point, &gammas);
            for (next, p) in &oracle {
                worst = worst.max((law.prob(next) - p).abs());
            }
            for (next, p) in &law.atoms {
                worst = worst.max((oracle.get(next).copied().unwrap_or(0.0) - p).abs());
            }
            worst_sum = worst_sum.max((law.total() - 1.0).abs());
            cases += 1;
        }
    }
    let pass = cases == 9 * 16 && worst <= 1e-10 && worst_sum <= 1e-10;
    verdict(
        2,
        "joint kernel vs agent enumeration",
        pass,
        format!("{cases} cases, max entry error {worst:.2e}, max mass error {worst_sum:.2e}"),
        started,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_03_sampling_fidelity() {
    let started = Instant::now();
    let g = load_data("reference_two_teams.json");
    let gammas = vec![
        Prescription::new(vec![vec![0.35, 0.65], vec![0.8, 0.2]]).unwrap(),
        Prescription::new(vec![vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap(),
    ];
    let report =
        empirical_kernel_check(&g, &[vec![1, 1], vec![2, 0]], &gammas, 100_000, g.seed).unwrap();
    verdict(
        3,
        "sampled kernel total variation",
        report.total_variation <= 0.01,
        format!(
            "TV {:.4} over {} outcomes",
            report.total_variation, report.support
        ),
        started,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_04_stage_cost_identity() {
    let started = Instant::now();
    let base = load_data("reference_two_teams.json");
    let mut worst: f64 = 0.0;
    let mut oracle_gap: f64 = 0.0;
    let mut cases = 0;
    let mixed = Prescription::new(vec![vec![0.3, 0.7], vec![0.55, 0.45]]).unwrap();
    for pops in [[2, 2], [3, 1], [4, 5]] {
        let g = base.with_populations(&pops).unwrap();
        let mut gammas: Vec<Prescription> = pure_sets(&g)[0].items.clone();
        gammas.push(mixed.clone());
        for point in joint_points(&g) {
            let z = MeanField::from_counts(&point);
            for gamma in &gammas {
                for k in 0..2 {
                    for t in 0..g.horizon {
                        let direct = stage_cost(&z, gamma, &g, k, t);
                        let counted = stage_cost_from_counts(&point, gamma, &g, k, t).unwrap();
                        worst = worst.max((direct - counted).abs());
                        if pops == [2, 2] {
                            oracle_gap = oracle_gap
                                .max((direct - agent_level_cost(&g, &point, gamma, k, t)).abs());
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    verdict(
        4,
        "stage cost closed forms agree",
        worst <= 1e-12 && oracle_gap <= 1e-12,
        format!("{cases} cases, max gap {worst:.2e}, agent oracle gap {oracle_gap:.2e}"),
        started,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_05_flow_consistency() {
    let started = Instant::now();
    let base = load_data("reference_two_teams.json");
    let mut worst: f64 = 0.0;
    let mixed = Prescription::new(vec![vec![0.9, 0.1], vec![0.25, 0.75]]).unwrap();
    for pops in [[2, 2], [3, 4], [6, 5]] {
        let g = base.with_populations(&pops).unwrap();
        let mut profiles = pure_profiles(&g);
        profiles.push(vec![mixed.clone(), mixed.clone()]);
        for point in joint_points(&g) {
            let z = MeanField::from_counts(&point);
            for gammas in &profiles {
                let law = joint_transition_kernel(&point, gammas, &g).unwrap();
                let refs: Vec<&Prescription> = gammas.iter().collect();
                let target = flow(&z, &refs, &g);
                for (k, &n) in pops.iter().enumerate() {
                    for s in 0..2 {
                        let mean: f64 = law
                            .atoms
                            .iter()
                            .map(|(m, p)| p * f64::from(m[k][s]) / f64::from(n))
                            .sum();
                        worst = worst.max((mean - target.team(k)[s]).abs());
                    }
                }
            }
        }
    }
    verdict(
        5,
        "kernel mean matches deterministic flow",
        worst <= 1e-10,
        format!("max gap {worst:.2e}"),
        started,
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_06_concentration_rate() {
    let started = Instant::now();
    let g = load_data("iid_probe.json");
    let z = MeanField::new(vec![vec![0.5, 0.5]]);
    let gamma = vec![Prescription::deterministic(&[0, 0], 1)];
    let fit = fit_rate(&g, &z, &gamma, &[2, 4, 8, 16, 32, 64]).unwrap();
    let slope = fit.slope.unwrap_or(f64::NAN);
    let r2 = fit.r_squared.unwrap_or(f64::NAN);
    verdict(
        6,
        "expected deviation decays like N^-1/2",
        !fit.degenerate && (-0.65..=-0.35).contains(&slope) && r2 >= 0.95,
        format!("slope {slope:.4}, R^2 {r2:.4}, kappa {:.4}", fit.kappa[0]),
        started,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_07_equilibrium_certificate() {
    let started = Instant::now();
    let g = load_data("reference_two_teams.json");
    let config = SolverConfig {
        pure_only: true,
        ..SolverConfig::default()
    };
    let (policy, _) = solve_mpe(&g, &pure_sets(&g), &config).unwrap();
    let cert = verify_mpe(&g, &policy).unwrap();
    verdict(
        7,
        "pure equilibrium passes the deviation audit",
        cert.max_gain <= 1e-9 && cert.mixed_points == 0 && !policy.has_mixed(),
        format!(
            "max gain {:.2e} over {} entries",
            cert.max_gain,
            cert.entries.len()
        ),
        started,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_08_exact_vs_simulated_cost() {
    let started = Instant::now();
    let g = load_data("reference_two_teams.json");
    let (policy, _) = solve_mpe(&g, &pure_sets(&g), &SolverConfig::default()).unwrap();
    let exact = evaluate_total_cost(&g, &policy).unwrap();
    let sim = estimate_cost(&g, &lift_policy(&policy), 10_000, g.seed).unwrap();
    let z: Vec<f64> = (0..2)
        .map(|k| (sim.mean[k] - exact[k]).abs() / sim.stderr[k])
        .collect();
    verdict(
        8,
        "exact cost inside simulated confidence band",
        z.iter().all(|&v| v <= 3.0),
        format!(
            "exact {exact:.4?}, simulated {:.4?}, |diff|/stderr {z:.2?}",
            sim.mean
        ),
        started,
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_09_single_team_reduction() {
    let started = Instant::now();
    let g = load_spec(
        r#"{"horizon": 2, "teams": [{
            "states": ["a","b"], "actions": ["x","y"], "population": 2,
            "initial_law": [0.6, 0.4],
            "transition": {"base": [[[0.9,0.1],[0.2,0.8]],[[0.6,0.4],[0.1,0.9]]],
                "coupling": [{"s":1,"a":0,"s'":0,"team":0,"sigma":0,"value":0.2},
                             {"s":1,"a":0,"s'":1,"team":0,"sigma":0,"value":-0.2}]},
            "cost": {"base": [[[0.5,0.2],[0.1,0.9]],[[0.4,0.6],[1.0,0.3]]],
                "coupling": [{"s":0,"a":1,"team":0,"sigma":1,"value":0.8},
                             {"t":1,"s":1,"a":0,"team":0,"sigma":0,"value":-0.5}]}
        }]}"#,
    )
    .unwrap();
    let sets = pure_sets(&g);
    let (policy, values) = solve_mpe(&g, &sets, &SolverConfig::default()).unwrap();
    let oracle =
        brute_force_team_values(
            &g,
            0,
            &sets[0].items,
            &|_, _| vec![sets[0].items[0].clone()],
        );
    let mut worst: f64 = 0.0;
    for (i, point) in joint_points(&g).iter().enumerate() {
        let idx = policy.lattice.index_of(point).unwrap();
        worst = worst.max((values.values[0][0][idx] - oracle[i]).abs());
    }
    verdict(
        9,
        "one-team value equals exhaustive strategy search",
        worst <= 1e-10,
        format!("max gap {worst:.2e} over {} start points", oracle.len()),
        started,
        Duration::from_secs(30),
    );
}

#[test]
fn criterion_10_limit_policy_bound() {
    let started = Instant::now();
    let g = load_data("reference_two_teams.json");
    let report = bound_report(
        &g,
        &pure_sets(&g),
        &[4, 8, 16],
        None,
        &SolverConfig::default(),
    )
    .unwrap();
    let within = report
        .sweep
        .iter()
        .all(|e| e.total_gain.iter().all(|&gain| gain <= e.epsilon_bound));
    let rows: Vec<String> = report
        .sweep
        .iter()
        .map(|e| {
            format!(
                "N={} gain {:.3?} bound {:.3}",
                e.population, e.total_gain, e.epsilon_bound
            )
        })
        .collect();
    verdict(
        10,
        "projected limit policy gains under the bound",
        report.sweep.len() == 3 && within && report.gain_inversions <= 1,
        format!("{}; inversions {}", rows.join(", "), report.gain_inversions),
        started,
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_11_reproducible_compare() {
    let started = Instant::now();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let spec = common::data_path("reference_two_teams.json");
    let mut cfg = ExperimentConfig::new(Mode::Compare, Some(spec), first.path().into());
    cfg.per_episode = true;
    let a = run(&cfg);
    cfg.out = second.path().into();
    let b = run(&cfg);
    assert_eq!(
        (a.exit_code, b.exit_code),
        (0, 0),
        "{:?} {:?}",
        a.error,
        b.error
    );
    // manifest.json carries wall-clock timing and is excluded by design
    let mut names: Vec<String> = std::fs::read_dir(&a.dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.dir.join(n)).ok() != std::fs::read(b.dir.join(n)).ok())
        .collect();
    verdict(
        11,
        "repeated compare runs are byte-identical",
        names.iter().any(|n| n == "compare.json") && differing.is_empty(),
        format!("{} files compared, differing {differing:?}", names.len()),
        started,
        Duration::from_secs(120),
    );
}
