//! Markov perfect equilibria of the finite-population coordinator game over the exact
//! count lattice, with best responses, certificates and exact total costs.

use rayon::prelude::*;
use serde::Serialize;

use crate::count_dynamics::{
    multinomial_pmf, stage_cost_flat, Lattice, PointKernels, Prescription,
};
use crate::error::{Error, Result};
use crate::game_model::GameSpec;
use crate::stage_nash::{
    argmin_first, solve_stage_game, stage_game_from_kernels, EquilibriumKind, PrescriptionSet,
    SolverConfig, StageEquilibrium, StageGame, TeamStrategy,
};

/// Gains below this are treated as numerical noise.
pub const GAIN_FLOOR: f64 = 1e-9;

/// `ψ_t(z)` at every point of a lattice (count lattice or simplex grid) and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub lattice: Lattice,
    pub sets: Vec<PrescriptionSet>,
    /// `stages[t][idx]`, `t` zero-based.
    pub stages: Vec<Vec<StageEquilibrium>>,
}

/// `V^(k)_t(z)` stored as `values[t][k][idx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub lattice: Lattice,
    pub values: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub rows: Vec<Vec<f64>>,
}

/// One serialized table entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRecord {
    pub stage: usize,
    pub z: Vec<Vec<u32>>,
    pub resolution: Vec<u32>,
    pub team: usize,
    pub kind: EquilibriumKind,
    pub prescription: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<MixtureComponent>>,
    pub value: f64,
}

impl PolicyTable {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn at(&self, t: usize, idx: usize) -> &StageEquilibrium {
        &self.stages[t][idx]
    }

    pub fn team_mixture(&self, t: usize, idx: usize, k: usize) -> Vec<(usize, f64)> {
        self.stages[t][idx].per_team[k].support()
    }

    /// The prescription team `k` plays, averaged over its mixture.
    pub fn averaged_prescription(&self, t: usize, idx: usize, k: usize) -> Prescription {
        let parts: Vec<(f64, &Prescription)> = self
            .team_mixture(t, idx, k)
            .into_iter()
            .map(|(i, w)| (w, &self.sets[k].items[i]))
            .collect();
        Prescription::mixture(&parts)
    }

    pub fn has_mixed(&self) -> bool {
        self.stages
            .iter()
            .flatten()
            .any(|e| e.kind == EquilibriumKind::Mixed)
    }

    pub fn mixed_count(&self) -> usize {
        self.stages
            .iter()
            .flatten()
            .filter(|e| e.kind == EquilibriumKind::Mixed)
            .count()
    }

    /// Records `{stage, z, team, prescription, value}` in stage, point, team order.
    pub fn records(&self, values: &ValueTable) -> Vec<PolicyRecord> {
        let mut out = Vec::new();
        for (t, row) in self.stages.iter().enumerate() {
            for (idx, eq) in row.iter().enumerate() {
                let z = self.lattice.point(idx);
                for k in 0..self.sets.len() {
                    let mixture = match &eq.per_team[k] {
                        TeamStrategy::Pure(_) => None,
                        TeamStrategy::Mixed(_) => Some(
                            eq.per_team[k]
                                .support()
                                .into_iter()
                                .map(|(i, w)| MixtureComponent {
                                    weight: w,
                                    rows: self.sets[k].items[i].rows.clone(),
                                })
                                .collect(),
                        ),
                    };
                    out.push(PolicyRecord {
                        stage: t + 1,
                        z: z.clone(),
                        resolution: self.lattice.resolutions().to_vec(),
                        team: k,
                        kind: eq.kind,
                        prescription: self.averaged_prescription(t, idx, k).rows,
                        mixture,
                        value: values.values[t][k][idx],
                    });
                }
            }
        }
        out
    }
}

/// Per-point team kernels for every prescription, over the whole count lattice.
#[derive(Debug, Clone)]
pub struct KernelCache {
    pub points: Vec<PointKernels>,
}

impl KernelCache {
    pub fn new(spec: &GameSpec, lattice: &Lattice, sets: &[PrescriptionSet]) -> Result<Self> {
        let items: Vec<&[Prescription]> = sets.iter().map(|s| s.items.as_slice()).collect();
        let points = (0..lattice.len())
            .into_par_iter()
            .map(|idx| PointKernels::new(spec, lattice, idx, &items))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelCache { points })
    }
}

/// A per-stage solved point: equilibrium, per-team values and projection error.
type Solved = (StageEquilibrium, Vec<f64>, f64);

/// Backward induction over `lattice`: `build(t, idx, next)` returns the stage game at
/// point `idx`, where `next` holds `V_{t+1}` (absent at the last stage).
pub(crate) fn backward_induction<F>(
    spec: &GameSpec,
    lattice: &Lattice,
    sets: &[PrescriptionSet],
    config: &SolverConfig,
    label: impl Fn(usize) -> String + Sync,
    build: F,
) -> Result<(PolicyTable, ValueTable, Vec<f64>)>
where
    F: Fn(usize, usize, Option<&[Vec<f64>]>) -> Result<StageGame> + Sync,
{
    check_sets(spec, sets)?;
    let horizon = spec.horizon;
    let k_teams = spec.num_teams();
    let mut stages: Vec<Vec<StageEquilibrium>> = vec![Vec::new(); horizon];
    let mut values: Vec<Vec<Vec<f64>>> = vec![Vec::new(); horizon];
    let mut projection = vec![0.0; horizon];
    for t in (0..horizon).rev() {
        let next = values
            .get(t + 1)
            .map(|v| v.as_slice())
            .filter(|v| !v.is_empty());
        let solved: Vec<Result<Solved>> = (0..lattice.len())
            .into_par_iter()
            .map(|idx| {
                let game = build(t, idx, next)?;
                let eq =
                    solve_stage_game(&game, config).ok_or_else(|| Error::NoPureEquilibrium {
                        stage: t + 1,
                        z: label(idx),
                    })?;
                let v = game.expected_costs(&eq.profile());
                Ok((eq, v, game.projection_error))
            })
            .collect();
        let mut row = Vec::with_capacity(lattice.len());
        let mut vals = vec![Vec::with_capacity(lattice.len()); k_teams];
        for r in solved {
            let (eq, v, err) = r?;
            for (k, x) in v.into_iter().enumerate() {
                vals[k].push(x);
            }
            projection[t] = f64::max(projection[t], err);
            row.push(eq);
        }
        stages[t] = row;
        values[t] = vals;
    }
    Ok((
        PolicyTable {
            lattice: lattice.clone(),
            sets: sets.to_vec(),
            stages,
        },
        ValueTable {
            lattice: lattice.clone(),
            values,
        },
        projection,
    ))
}

fn check_sets(spec: &GameSpec, sets: &[PrescriptionSet]) -> Result<()> {
    if sets.len() != spec.num_teams() {
        return Err(Error::InvalidInput(
            "one prescription set per team required".into(),
        ));
    }
    for (k, set) in sets.iter().enumerate() {
        let team = spec.team(k);
        if set.is_empty()
            || set.items.iter().any(|g| {
                g.num_states() != team.num_states()
                    || g.rows.iter().any(|r| r.len() != team.num_actions())
            })
        {
            return Err(Error::InvalidInput(format!(
                "prescription set {k} does not fit team {k}"
            )));
        }
    }
    Ok(())
}

/// Solves the finite-population dynamic program at every lattice point and stage.
pub fn solve_mpe(
    spec: &GameSpec,
    sets: &[PrescriptionSet],
    config: &SolverConfig,
) -> Result<(PolicyTable, ValueTable)> {
    let lattice = Lattice::counts(spec)?;
    check_sets(spec, sets)?;
    let cache = KernelCache::new(spec, &lattice, sets)?;
    solve_mpe_with(spec, &lattice, sets, config, &cache)
}

pub fn solve_mpe_with(
    spec: &GameSpec,
    lattice: &Lattice,
    sets: &[PrescriptionSet],
    config: &SolverConfig,
    cache: &KernelCache,
) -> Result<(PolicyTable, ValueTable)> {
    let (policy, values, _) = backward_induction(
        spec,
        lattice,
        sets,
        config,
        |idx| lattice.count_label(idx),
        |t, idx, next| {
            Ok(stage_game_from_kernels(
                spec,
                lattice,
                idx,
                t,
                &cache.points[idx],
                next,
                sets,
            ))
        },
    )?;
    Ok((policy, values))
}

fn own_costs_team(
    spec: &GameSpec,
    lattice: &Lattice,
    set: &PrescriptionSet,
    k: usize,
    t: usize,
    idx: usize,
) -> Vec<f64> {
    let z = lattice.mean_field(idx);
    let zflat = z.flatten();
    set.items
        .iter()
        .map(|g| stage_cost_flat(&zflat, z.team(k), g, spec, k, t))
        .collect()
}

/// Team `k`'s cost of each of its prescriptions at `(t, idx)` when the others follow
/// `policy` and the continuation is `next` (indexed by lattice point).
fn deviation_costs_at(
    spec: &GameSpec,
    k: usize,
    policy: &PolicyTable,
    cache: &KernelCache,
    t: usize,
    idx: usize,
    next: Option<&[f64]>,
) -> Vec<f64> {
    let lattice = &policy.lattice;
    let own = own_costs_team(spec, lattice, &policy.sets[k], k, t, idx);
    let Some(next) = next else {
        return own;
    };
    let point = &cache.points[idx];
    let mut kernels: Vec<Vec<(usize, f64)>> = (0..spec.num_teams())
        .map(|j| {
            if j == k {
                Vec::new()
            } else {
                point.mixed(j, &policy.team_mixture(t, idx, j))
            }
        })
        .collect();
    own.iter()
        .enumerate()
        .map(|(i, c)| {
            kernels[k] = point.per_team[k][i].clone();
            let law = PointKernels::joint(lattice, &kernels);
            c + law.iter().map(|&(n, p)| p * next[n]).sum::<f64>()
        })
        .collect()
}

/// Optimal single-team response to the others' fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestResponse {
    pub team: usize,
    /// `choices[t][idx]`: index into the team's prescription set.
    pub choices: Vec<Vec<usize>>,
    /// `values[t][idx]`.
    pub values: Vec<Vec<f64>>,
}

pub fn best_response(spec: &GameSpec, k: usize, policy: &PolicyTable) -> Result<BestResponse> {
    let cache = KernelCache::new(spec, &policy.lattice, &policy.sets)?;
    best_response_with(spec, k, policy, &cache)
}

pub fn best_response_with(
    spec: &GameSpec,
    k: usize,
    policy: &PolicyTable,
    cache: &KernelCache,
) -> Result<BestResponse> {
    check_policy(spec, policy)?;
    if k >= spec.num_teams() {
        return Err(Error::IndexOutOfRange(format!("team {k}")));
    }
    let horizon = spec.horizon;
    let mut choices = vec![Vec::new(); horizon];
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let next = values.get(t + 1).map(Vec::as_slice);
        let row: Vec<(usize, f64)> = (0..policy.lattice.len())
            .into_par_iter()
            .map(|idx| {
                let costs = deviation_costs_at(spec, k, policy, cache, t, idx, next);
                let i = argmin_first(&costs);
                (i, costs[i])
            })
            .collect();
        choices[t] = row.iter().map(|r| r.0).collect();
        values[t] = row.iter().map(|r| r.1).collect();
    }
    Ok(BestResponse {
        team: k,
        choices,
        values,
    })
}

fn check_policy(spec: &GameSpec, policy: &PolicyTable) -> Result<()> {
    check_sets(spec, &policy.sets)?;
    if policy.horizon() != spec.horizon
        || policy
            .stages
            .iter()
            .any(|s| s.len() != policy.lattice.len())
    {
        return Err(Error::InvalidInput(
            "policy table must cover every stage and lattice point".into(),
        ));
    }
    if policy.lattice.resolutions() != spec.populations().as_slice() {
        return Err(Error::InvalidInput(
            "policy table is not on this game's count lattice".into(),
        ));
    }
    Ok(())
}

/// Values `[t][k][idx]` of following `policy` from `(t, z)`.
pub fn policy_values(
    spec: &GameSpec,
    policy: &PolicyTable,
    cache: &KernelCache,
) -> Result<Vec<Vec<Vec<f64>>>> {
    check_policy(spec, policy)?;
    let lattice = &policy.lattice;
    let k_teams = spec.num_teams();
    let mut values: Vec<Vec<Vec<f64>>> = vec![Vec::new(); spec.horizon];
    for t in (0..spec.horizon).rev() {
        let next = values.get(t + 1).filter(|v| !v.is_empty());
        let per_point: Vec<Vec<f64>> = (0..lattice.len())
            .into_par_iter()
            .map(|idx| {
                let mixtures: Vec<Vec<(usize, f64)>> = (0..k_teams)
                    .map(|k| policy.team_mixture(t, idx, k))
                    .collect();
                let law = next.map(|_| {
                    let kernels: Vec<Vec<(usize, f64)>> = (0..k_teams)
                        .map(|k| cache.points[idx].mixed(k, &mixtures[k]))
                        .collect();
                    PointKernels::joint(lattice, &kernels)
                });
                (0..k_teams)
                    .map(|k| {
                        let own = own_costs_team(spec, lattice, &policy.sets[k], k, t, idx);
                        let stage: f64 = mixtures[k].iter().map(|&(i, w)| w * own[i]).sum();
                        let cont = match (&law, next) {
                            (Some(law), Some(v)) => law.iter().map(|&(n, p)| p * v[k][n]).sum(),
                            _ => 0.0,
                        };
                        stage + cont
                    })
                    .collect()
            })
            .collect();
        values[t] = (0..k_teams)
            .map(|k| per_point.iter().map(|v| v[k]).collect())
            .collect();
    }
    Ok(values)
}

/// Product over teams of `Multinomial(N^(k), P^(k)_0)` on the joint count lattice.
pub fn initial_distribution(spec: &GameSpec, lattice: &Lattice) -> Vec<f64> {
    let per_team: Vec<Vec<f64>> = (0..spec.num_teams())
        .map(|k| {
            lattice
                .team_points(k)
                .iter()
                .map(|m| multinomial_pmf(m, &spec.team(k).initial_law))
                .collect()
        })
        .collect();
    (0..lattice.len())
        .map(|idx| {
            lattice
                .team_indices(idx)
                .iter()
                .enumerate()
                .map(|(k, &i)| per_team[k][i])
                .product()
        })
        .collect()
}

/// Exact laws of `Z_1, ..., Z_T` on the count lattice under `policy`.
pub fn forward_distributions(
    spec: &GameSpec,
    policy: &PolicyTable,
    cache: &KernelCache,
) -> Result<Vec<Vec<f64>>> {
    check_policy(spec, policy)?;
    let lattice = &policy.lattice;
    let mut dist = initial_distribution(spec, lattice);
    let mut out = Vec::with_capacity(spec.horizon);
    for t in 0..spec.horizon {
        let mass: f64 = dist.iter().sum();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::validation(
                "mass conservation",
                format!("stage {} total {mass}", t + 1),
            ));
        }
        let mut next = vec![0.0; lattice.len()];
        if t + 1 < spec.horizon {
            for (idx, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let kernels: Vec<Vec<(usize, f64)>> = (0..spec.num_teams())
                    .map(|k| cache.points[idx].mixed(k, &policy.team_mixture(t, idx, k)))
                    .collect();
                for (n, q) in PointKernels::joint(lattice, &kernels) {
                    next[n] += p * q;
                }
            }
        }
        out.push(std::mem::replace(&mut dist, next));
    }
    Ok(out)
}

/// `L^(k)(ψ) = E[Σ_t ℓ^(k)_t(Z_t, Γ^(k)_t)]` from the initial count law.
pub fn evaluate_total_cost(spec: &GameSpec, policy: &PolicyTable) -> Result<Vec<f64>> {
    let cache = KernelCache::new(spec, &policy.lattice, &policy.sets)?;
    evaluate_total_cost_with(spec, policy, &cache)
}

pub fn evaluate_total_cost_with(
    spec: &GameSpec,
    policy: &PolicyTable,
    cache: &KernelCache,
) -> Result<Vec<f64>> {
    let laws = forward_distributions(spec, policy, cache)?;
    let lattice = &policy.lattice;
    let mut total = vec![0.0; spec.num_teams()];
    for (t, law) in laws.iter().enumerate() {
        for (idx, &p) in law.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (k, acc) in total.iter_mut().enumerate() {
                let own = own_costs_team(spec, lattice, &policy.sets[k], k, t, idx);
                let stage: f64 = policy
                    .team_mixture(t, idx, k)
                    .iter()
                    .map(|&(i, w)| w * own[i])
                    .sum();
                *acc += p * stage;
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateEntry {
    pub stage: usize,
    pub z_id: String,
    pub team: usize,
    /// Value under the policy minus the best-response value from this point.
    pub gain: f64,
    /// Gain of the best one-stage deviation with the policy as continuation.
    pub pointwise_gain: f64,
    pub mixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeamGain {
    pub team: usize,
    pub max_gain: f64,
    pub mean_gain: f64,
    /// `L^(k)(ψ) - L^(k)(best response, ψ^{-k})` from the initial count law.
    pub total_gain: f64,
    pub policy_cost: f64,
    pub best_response_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCertificate {
    pub max_gain: f64,
    pub mean_gain: f64,
    pub mixed_points: usize,
    pub teams: Vec<TeamGain>,
    pub entries: Vec<CertificateEntry>,
}

impl EquilibriumCertificate {
    pub fn csv(&self) -> String {
        let mut out = String::from("stage,z_id,team,gain\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{:e}\n", e.stage, e.z_id, e.team, e.gain));
        }
        out
    }

    pub fn max_total_gain(&self) -> f64 {
        self.teams.iter().map(|t| t.total_gain).fold(0.0, f64::max)
    }
}

/// Deviation gains of every team from every `(t, z)`.
pub fn verify_mpe(spec: &GameSpec, policy: &PolicyTable) -> Result<EquilibriumCertificate> {
    let cache = KernelCache::new(spec, &policy.lattice, &policy.sets)?;
    verify_mpe_with(spec, policy, &cache)
}

pub fn verify_mpe_with(
    spec: &GameSpec,
    policy: &PolicyTable,
    cache: &KernelCache,
) -> Result<EquilibriumCertificate> {
    let lattice = &policy.lattice;
    let values = policy_values(spec, policy, cache)?;
    let init = initial_distribution(spec, lattice);
    let mut entries = Vec::new();
    let mut teams = Vec::new();
    let mut per_team_gains: Vec<Vec<(f64, f64)>> = Vec::new();
    for k in 0..spec.num_teams() {
        let br = best_response_with(spec, k, policy, cache)?;
        let gains: Vec<(f64, f64)> = (0..spec.horizon)
            .flat_map(|t| (0..lattice.len()).map(move |idx| (t, idx)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(t, idx)| {
                let next = values.get(t + 1).map(|v| v[k].as_slice());
                let one_shot = deviation_costs_at(spec, k, policy, cache, t, idx, next);
                let best = one_shot.iter().copied().fold(f64::INFINITY, f64::min);
                let v = values[t][k][idx];
                (v - br.values[t][idx], v - best)
            })
            .collect();
        let policy_cost: f64 = init.iter().zip(&values[0][k]).map(|(p, v)| p * v).sum();
        let br_cost: f64 = init.iter().zip(&br.values[0]).map(|(p, v)| p * v).sum();
        let max_gain = gains.iter().map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
        let mean_gain = gains.iter().map(|g| g.0).sum::<f64>() / gains.len() as f64;
        teams.push(TeamGain {
            team: k,
            max_gain,
            mean_gain,
            total_gain: policy_cost - br_cost,
            policy_cost,
            best_response_cost: br_cost,
        });
        per_team_gains.push(gains);
    }
    for t in 0..spec.horizon {
        for idx in 0..lattice.len() {
            let mixed = policy.stages[t][idx].kind == EquilibriumKind::Mixed;
            for (k, gains) in per_team_gains.iter().enumerate() {
                let (gain, pointwise_gain) = gains[t * lattice.len() + idx];
                entries.push(CertificateEntry {
                    stage: t + 1,
                    z_id: lattice.count_label(idx),
                    team: k,
                    gain,
                    pointwise_gain,
                    mixed,
                });
            }
        }
    }
    let max_gain = entries
        .iter()
        .map(|e| e.gain)
        .fold(f64::NEG_INFINITY, f64::max);
    let mean_gain = entries.iter().map(|e| e.gain).sum::<f64>() / entries.len() as f64;
    Ok(EquilibriumCertificate {
        max_gain,
        mean_gain,
        mixed_points: policy.mixed_count(),
        teams,
        entries,
    })
}
