//! Agent-level Monte Carlo simulation of the team game, and the translation between
//! coordinator policies and agent policies.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::count_dynamics::{
    joint_transition_kernel, JointCount, Lattice, MeanField, Prescription,
};
use crate::error::{Error, Result};
use crate::game_model::GameSpec;
use crate::mpe_finite::PolicyTable;
use crate::rng;
use crate::stage_nash::{PrescriptionSet, StageEquilibrium, TeamStrategy};

/// What a team's agents do at one `(t, z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRule {
    /// Every agent in state `s` draws its action from `rows[s]`.
    Fixed(Prescription),
    /// One prescription is drawn publicly for the whole team, then used as `Fixed`.
    Public(Vec<(f64, Prescription)>),
}

/// Markov agent policy `π^(k)_t(s, z)`, stored as `rules[t][idx][k]` over the count lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPolicy {
    pub lattice: Lattice,
    pub rules: Vec<Vec<Vec<AgentRule>>>,
}

impl AgentPolicy {
    /// Action distribution of an agent of team `k` in state `s`, for a fixed rule.
    pub fn row(&self, t: usize, idx: usize, k: usize, s: usize) -> Option<&[f64]> {
        match &self.rules[t][idx][k] {
            AgentRule::Fixed(g) => Some(&g.rows[s]),
            AgentRule::Public(_) => None,
        }
    }

    pub fn uses_public_randomization(&self) -> bool {
        self.rules
            .iter()
            .flatten()
            .flatten()
            .any(|r| matches!(r, AgentRule::Public(_)))
    }
}

/// `π^(k)_t(s, z) = ψ^(k)_t(z)(s)`.
pub fn lift_policy(policy: &PolicyTable) -> AgentPolicy {
    let rules = policy
        .stages
        .iter()
        .map(|row| {
            row.iter()
                .map(|eq| {
                    eq.per_team
                        .iter()
                        .zip(&policy.sets)
                        .map(|(s, set)| match s {
                            TeamStrategy::Pure(i) => AgentRule::Fixed(set.items[*i].clone()),
                            TeamStrategy::Mixed(_) => AgentRule::Public(
                                s.support()
                                    .into_iter()
                                    .map(|(i, w)| (w, set.items[i].clone()))
                                    .collect(),
                            ),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    AgentPolicy {
        lattice: policy.lattice.clone(),
        rules,
    }
}

/// `ψ^(k)_t(z) = π^(k)_t(·, z)`, expressed in the given prescription sets.
pub fn project_policy(agent: &AgentPolicy, sets: &[PrescriptionSet]) -> Result<PolicyTable> {
    let locate = |k: usize, g: &Prescription| {
        sets[k].position(g).ok_or_else(|| {
            Error::InvalidInput(format!("prescription of team {k} is not in its set"))
        })
    };
    let stages = agent
        .rules
        .iter()
        .map(|row| {
            row.iter()
                .map(|rules| {
                    let per_team = rules
                        .iter()
                        .enumerate()
                        .map(|(k, r)| match r {
                            AgentRule::Fixed(g) => Ok(TeamStrategy::Pure(locate(k, g)?)),
                            AgentRule::Public(parts) => {
                                let mut w = vec![0.0; sets[k].len()];
                                for (p, g) in parts {
                                    w[locate(k, g)?] += p;
                                }
                                Ok(TeamStrategy::Mixed(w))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(StageEquilibrium::from_profile(per_team))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyTable {
        lattice: agent.lattice.clone(),
        sets: sets.to_vec(),
        stages,
    })
}

fn draw_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// One simulated episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Episode {
    /// Joint counts `M_1, ..., M_{T+1}`.
    pub counts: Vec<JointCount>,
    pub costs: Vec<f64>,
}

/// Runs episode `episode` of the agent-level game. Agent `i` of team `k` uses the
/// streams keyed by `labels[k][i]`; the identity labelling is the default.
pub fn simulate_episode(
    spec: &GameSpec,
    policy: &AgentPolicy,
    master: u64,
    episode: u64,
) -> Result<Episode> {
    simulate_episode_labelled(spec, policy, master, episode, None)
}

pub fn simulate_episode_labelled(
    spec: &GameSpec,
    policy: &AgentPolicy,
    master: u64,
    episode: u64,
    labels: Option<&[Vec<u64>]>,
) -> Result<Episode> {
    let k_teams = spec.num_teams();
    if policy.rules.len() != spec.horizon
        || policy.lattice.resolutions() != spec.populations().as_slice()
    {
        return Err(Error::InvalidInput(
            "agent policy does not match the game".into(),
        ));
    }
    let label = |k: usize, i: usize| labels.map_or(i as u64, |l| l[k][i]);
    let mut states: Vec<Vec<usize>> = (0..k_teams)
        .map(|k| {
            let team = spec.team(k);
            (0..team.population as usize)
                .map(|i| {
                    let mut r = rng::stream(master, "initial", &[episode, k as u64, label(k, i)]);
                    draw_index(&mut r, &team.initial_law)
                })
                .collect()
        })
        .collect();
    let count = |states: &[Vec<usize>]| -> JointCount {
        states
            .iter()
            .enumerate()
            .map(|(k, st)| {
                let mut m = vec![0u32; spec.team(k).num_states()];
                for &s in st {
                    m[s] += 1;
                }
                m
            })
            .collect()
    };
    let mut trajectory = vec![count(&states)];
    let mut costs = vec![0.0; k_teams];
    let mut row = Vec::new();
    for t in 0..spec.horizon {
        let counts = trajectory.last().unwrap();
        let idx = policy
            .lattice
            .index_of(counts)
            .ok_or_else(|| Error::InvalidInput("counts left the lattice".into()))?;
        let zflat = MeanField::from_counts(counts).flatten();
        let mut next_states = states.clone();
        for k in 0..k_teams {
            let team = spec.team(k);
            let public;
            let gamma = match &policy.rules[t][idx][k] {
                AgentRule::Fixed(g) => g,
                AgentRule::Public(parts) => {
                    let mut r = rng::stream(master, "public", &[episode, t as u64, k as u64]);
                    let weights: Vec<f64> = parts.iter().map(|p| p.0).collect();
                    public = &parts[draw_index(&mut r, &weights)].1;
                    public
                }
            };
            let mut team_cost = 0.0;
            for (i, &s) in states[k].iter().enumerate() {
                let key = [episode, t as u64, k as u64, label(k, i)];
                let a = draw_index(&mut rng::stream(master, "action", &key), &gamma.rows[s]);
                team_cost += team.cost_flat(t, s, a, &zflat);
                row.resize(team.num_states(), 0.0);
                team.transition_row_into(s, a, &zflat, &mut row);
                next_states[k][i] = draw_index(&mut rng::stream(master, "transition", &key), &row);
            }
            costs[k] += team_cost / f64::from(team.population);
        }
        states = next_states;
        trajectory.push(count(&states));
    }
    Ok(Episode {
        counts: trajectory,
        costs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub episodes: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    #[serde(skip)]
    pub per_episode: Vec<Vec<f64>>,
}

impl SimResult {
    /// CSV rows `episode,team,cost`.
    pub fn per_episode_csv(&self) -> String {
        let mut out = String::from("episode,team,cost\n");
        for (e, costs) in self.per_episode.iter().enumerate() {
            for (k, c) in costs.iter().enumerate() {
                out.push_str(&format!("{e},{k},{c:e}\n"));
            }
        }
        out
    }
}

/// Mean and standard error of each team's cumulative cost over `episodes` episodes.
pub fn estimate_cost(
    spec: &GameSpec,
    policy: &AgentPolicy,
    episodes: usize,
    master: u64,
) -> Result<SimResult> {
    if episodes == 0 {
        return Err(Error::InvalidInput("at least one episode required".into()));
    }
    let per_episode: Vec<Vec<f64>> = (0..episodes as u64)
        .into_par_iter()
        .map(|e| simulate_episode(spec, policy, master, e).map(|ep| ep.costs))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let n = episodes as f64;
    let k_teams = spec.num_teams();
    let mut mean = vec![0.0; k_teams];
    for costs in &per_episode {
        for (m, c) in mean.iter_mut().zip(costs) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let stderr = (0..k_teams)
        .map(|k| {
            if episodes < 2 {
                return 0.0;
            }
            let ss: f64 = per_episode.iter().map(|c| (c[k] - mean[k]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        })
        .collect();
    Ok(SimResult {
        episodes,
        mean,
        stderr,
        per_episode,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheck {
    pub samples: usize,
    pub total_variation: f64,
    /// `½ Σ_x 3 √(p_x (1 - p_x) / samples)`, a three-sigma scale for sampling noise.
    pub confidence_radius: f64,
    pub support: usize,
}

/// Total variation between agent-level next-count frequencies from `counts` under `Γ`
/// and the exact joint kernel.
pub fn empirical_kernel_check(
    spec: &GameSpec,
    counts: &[Vec<u32>],
    gammas: &[Prescription],
    samples: usize,
    master: u64,
) -> Result<KernelCheck> {
    let exact = joint_transition_kernel(counts, gammas, spec)?;
    let zflat = MeanField::from_counts(counts).flatten();
    let draws: Vec<JointCount> = (0..samples as u64)
        .into_par_iter()
        .map(|r| {
            let mut row = Vec::new();
            counts
                .iter()
                .enumerate()
                .map(|(k, m)| {
                    let team = spec.team(k);
                    let mut next = vec![0u32; team.num_states()];
                    let mut agent = 0u64;
                    for (s, &ms) in m.iter().enumerate() {
                        for _ in 0..ms {
                            let key = [r, k as u64, agent];
                            let a = draw_index(
                                &mut rng::stream(master, "kernel-action", &key),
                                &gammas[k].rows[s],
                            );
                            row.resize(team.num_states(), 0.0);
                            team.transition_row_into(s, a, &zflat, &mut row);
                            next[draw_index(
                                &mut rng::stream(master, "kernel-transition", &key),
                                &row,
                            )] += 1;
                            agent += 1;
                        }
                    }
                    next
                })
                .collect()
        })
        .collect();
    let mut freq: BTreeMap<JointCount, f64> = BTreeMap::new();
    for d in draws {
        *freq.entry(d).or_insert(0.0) += 1.0;
    }
    let n = samples as f64;
    let mut tv = 0.0;
    for (x, p) in &exact.atoms {
        tv += (freq.remove(x).unwrap_or(0.0) / n - p).abs();
    }
    tv += freq.values().map(|c| c / n).sum::<f64>();
    let radius = 0.5
        * exact
            .atoms
            .iter()
            .map(|(_, p)| 3.0 * (p * (1.0 - p) / n).sqrt())
            .sum::<f64>();
    Ok(KernelCheck {
        samples,
        total_variation: 0.5 * tv,
        confidence_radius: radius,
        support: exact.len(),
    })
}
