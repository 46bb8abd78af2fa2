//! The infinite-population limit: deterministic mean-field flow, the dynamic program
//! on a uniform simplex grid, and deterministic rollouts.

use serde::Serialize;

use crate::approx_metrics::team_distance;
use crate::count_dynamics::{mixed_rows, stage_cost_flat, Lattice, MeanField, Prescription};
use crate::error::{Error, Result};
use crate::game_model::GameSpec;
use crate::mpe_finite::{backward_induction, PolicyTable, ValueTable};
use crate::stage_nash::{
    build_stage_game, Continuation, EquilibriumKind, PrescriptionSet, SolverConfig,
};

/// Distances within this of the best are ties, resolved towards the earlier point.
pub const PROJECTION_TIE_TOL: f64 = 1e-12;

/// Product of uniform grids `{v / n^(k)}` on the team simplices.
pub type SimplexGrid = Lattice;

pub fn simplex_grid(spec: &GameSpec, resolutions: &[u32]) -> Result<SimplexGrid> {
    if resolutions.contains(&0) {
        return Err(Error::InvalidInput(
            "grid resolutions must be positive".into(),
        ));
    }
    let sizes: Vec<usize> = spec.teams.iter().map(|t| t.num_states()).collect();
    Lattice::new(&sizes, resolutions)
}

/// `n^(k) = 2 N^(k)`, so every count mean field is a grid point.
pub fn default_resolutions(spec: &GameSpec) -> Vec<u32> {
    spec.populations().iter().map(|n| 2 * n).collect()
}

/// `q̄^(k)(z, γ^(k))(s') = Σ_s z^(k)(s) Σ_a γ^(k)(a|s) P^(k)(s'|s,a,z)` for every team.
pub fn flow(z: &MeanField, gammas: &[&Prescription], spec: &GameSpec) -> MeanField {
    let zflat = z.flatten();
    let per_team = gammas
        .iter()
        .enumerate()
        .map(|(k, gamma)| {
            let rows = mixed_rows(spec, k, &zflat, gamma);
            let mut out = vec![0.0; rows.len()];
            for (mass, row) in z.team(k).iter().zip(&rows) {
                if *mass == 0.0 {
                    continue;
                }
                for (o, r) in out.iter_mut().zip(row) {
                    *o += mass * r;
                }
            }
            out
        })
        .collect();
    MeanField::new(per_team)
}

/// Nearest grid point in the joint metric and its distance. The joint metric is a sum
/// over teams, so each team is projected separately; ties go to the earlier point.
pub fn project_to_grid(z: &MeanField, grid: &SimplexGrid, spec: &GameSpec) -> (usize, f64) {
    let mut per_team = Vec::with_capacity(grid.num_teams());
    let mut error = 0.0;
    for k in 0..grid.num_teams() {
        let n = f64::from(grid.resolutions()[k]);
        let mut best = (0usize, f64::INFINITY);
        let mut point = vec![0.0; z.team(k).len()];
        for (i, m) in grid.team_points(k).iter().enumerate() {
            for (p, &c) in point.iter_mut().zip(m) {
                *p = f64::from(c) / n;
            }
            let d = team_distance(spec, k, z.team(k), &point);
            if d < best.1 - PROJECTION_TIE_TOL {
                best = (i, d);
            }
        }
        per_team.push(best.0);
        error += best.1;
    }
    (grid.joint_index(&per_team), error)
}

/// Limit-game tables on a simplex grid.
#[derive(Debug, Clone)]
pub struct LimitSolution {
    pub policy: PolicyTable,
    pub values: ValueTable,
    /// Largest projection error met while building each stage.
    pub projection_error: Vec<f64>,
}

/// Backward induction of the limit game on `grid`: the continuation at a grid point
/// is `V̄_{t+1}` at the projected flow image of each joint profile.
pub fn solve_mpe_inf(
    spec: &GameSpec,
    sets: &[PrescriptionSet],
    grid: &SimplexGrid,
    config: &SolverConfig,
) -> Result<LimitSolution> {
    if grid.num_teams() != spec.num_teams()
        || (0..spec.num_teams()).any(|k| grid.team_points(k)[0].len() != spec.team(k).num_states())
    {
        return Err(Error::InvalidInput(
            "grid does not match the game's state spaces".into(),
        ));
    }
    let (policy, values, projection_error) = backward_induction(
        spec,
        grid,
        sets,
        config,
        |idx| grid.rational_label(idx),
        |t, idx, next| {
            let z = grid.mean_field(idx);
            let continuation = match next {
                None => Continuation::Zero,
                Some(values) => Continuation::Grid { grid, values },
            };
            build_stage_game(&z, t, continuation, sets, spec)
        },
    )?;
    Ok(LimitSolution {
        policy,
        values,
        projection_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub stage: usize,
    pub z: MeanField,
    pub grid_point: String,
    pub projection_error: f64,
    pub kind: EquilibriumKind,
    pub stage_cost: Vec<f64>,
    pub cost_so_far: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub total_cost: Vec<f64>,
}

impl Trajectory {
    /// CSV rows `stage,team,state,mass,cost_so_far`.
    pub fn csv(&self) -> String {
        let mut out = String::from("stage,team,state,mass,cost_so_far\n");
        for step in &self.steps {
            for (k, zk) in step.z.per_team.iter().enumerate() {
                for (s, m) in zk.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{k},{s},{m:e},{:e}\n",
                        step.stage, step.cost_so_far[k]
                    ));
                }
            }
        }
        out
    }
}

/// Deterministic run of a grid policy from `(P^(k)_0)_k`. A mixed profile enters the
/// flow through each team's averaged prescription, which is exact since the flow of
/// team `k` is linear in its own prescription.
pub fn rollout_inf(spec: &GameSpec, policy: &PolicyTable) -> Trajectory {
    let grid = &policy.lattice;
    let k_teams = spec.num_teams();
    let mut z = MeanField::initial(spec);
    let mut so_far = vec![0.0; k_teams];
    let mut steps = Vec::with_capacity(spec.horizon);
    for t in 0..spec.horizon {
        let (idx, err) = project_to_grid(&z, grid, spec);
        let gammas: Vec<Prescription> = (0..k_teams)
            .map(|k| policy.averaged_prescription(t, idx, k))
            .collect();
        let zflat = z.flatten();
        let stage: Vec<f64> = (0..k_teams)
            .map(|k| stage_cost_flat(&zflat, z.team(k), &gammas[k], spec, k, t))
            .collect();
        for (a, c) in so_far.iter_mut().zip(&stage) {
            *a += c;
        }
        let refs: Vec<&Prescription> = gammas.iter().collect();
        let next = flow(&z, &refs, spec);
        steps.push(TrajectoryStep {
            stage: t + 1,
            z,
            grid_point: grid.rational_label(idx),
            projection_error: err,
            kind: policy.stages[t][idx].kind,
            stage_cost: stage,
            cost_so_far: so_far.clone(),
        });
        z = next;
    }
    Trajectory {
        steps,
        total_cost: so_far,
    }
}

/// The limit policy read at each count mean field of `spec` (via grid projection).
pub fn project_limit_policy(policy: &PolicyTable, spec: &GameSpec) -> Result<PolicyTable> {
    let lattice = Lattice::counts(spec)?;
    let targets: Vec<usize> = (0..lattice.len())
        .map(|idx| project_to_grid(&lattice.mean_field(idx), &policy.lattice, spec).0)
        .collect();
    let stages = policy
        .stages
        .iter()
        .map(|row| targets.iter().map(|&g| row[g].clone()).collect())
        .collect();
    Ok(PolicyTable {
        lattice,
        sets: policy.sets.clone(),
        stages,
    })
}
