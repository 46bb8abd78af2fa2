//! One-shot games over prescriptions, as faced at a single mean-field state inside
//! the backward induction.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use subsets::Combinations;

use crate::count_dynamics::{
    enumerate_counts, lattice_size, stage_cost_flat, Lattice, MeanField, PointKernels, Prescription,
};
use crate::error::{Error, Result};
use crate::game_model::GameSpec;
use crate::mf_limit::{flow, project_to_grid};

/// Default cap on the size of a prescription set.
pub const DEFAULT_PRESCRIPTION_CAP: usize = 100_000;

/// Strict tolerance for comparing unilateral deviations.
pub const DEVIATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PrescriptionMode {
    Pure,
    /// Rows drawn from `{v/g : v ∈ ℕ^|A|, Σv = g}`.
    Gridded(u32),
}

/// The finite action set of a team's virtual player.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrescriptionSet {
    pub team_id: usize,
    pub mode: PrescriptionMode,
    pub items: Vec<Prescription>,
}

impl PrescriptionSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn position(&self, gamma: &Prescription) -> Option<usize> {
        self.items.iter().position(|g| g == gamma)
    }
}

pub fn build_prescription_set(
    spec: &GameSpec,
    k: usize,
    mode: PrescriptionMode,
) -> Result<PrescriptionSet> {
    build_prescription_set_capped(spec, k, mode, DEFAULT_PRESCRIPTION_CAP)
}

pub fn build_prescription_set_capped(
    spec: &GameSpec,
    k: usize,
    mode: PrescriptionMode,
    cap: usize,
) -> Result<PrescriptionSet> {
    if k >= spec.num_teams() {
        return Err(Error::IndexOutOfRange(format!("team {k}")));
    }
    let team = spec.team(k);
    let (ns, na) = (team.num_states(), team.num_actions());
    let g = match mode {
        PrescriptionMode::Pure => 1,
        PrescriptionMode::Gridded(0) => {
            return Err(Error::InvalidInput(
                "prescription grid resolution must be positive".into(),
            ))
        }
        PrescriptionMode::Gridded(g) => g,
    };
    let per_row = lattice_size(g, na);
    let total = (0..ns).fold(1u128, |acc, _| acc.saturating_mul(per_row));
    if total > cap as u128 {
        return Err(Error::capacity("prescription set", total, cap as u128));
    }
    // With g = 1 the rows are the Dirac vectors in action order, so both modes share
    // one lexicographic enumeration.
    let rows: Vec<Vec<f64>> = enumerate_counts(g, na)?
        .into_iter()
        .map(|v| v.into_iter().map(|c| f64::from(c) / f64::from(g)).collect())
        .collect();
    let mut items = Vec::with_capacity(total as usize);
    let mut choice = vec![0usize; ns];
    loop {
        items.push(Prescription {
            rows: choice.iter().map(|&i| rows[i].clone()).collect(),
        });
        let mut pos = ns;
        loop {
            if pos == 0 {
                return Ok(PrescriptionSet {
                    team_id: k,
                    mode,
                    items,
                });
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < rows.len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Cost tensors of a `K`-player finite game; every team minimizes its own tensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageGame {
    pub shape: Vec<usize>,
    /// `costs[k][j]` for joint (row-major) profile index `j`.
    pub costs: Vec<Vec<f64>>,
    /// Largest grid-projection error met while building the continuation (limit mode).
    pub projection_error: f64,
}

/// A team's play: a single prescription index or a distribution over its set.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TeamStrategy {
    Pure(usize),
    Mixed(Vec<f64>),
}

impl TeamStrategy {
    /// Support with weights, in index order.
    pub fn support(&self) -> Vec<(usize, f64)> {
        match self {
            TeamStrategy::Pure(i) => vec![(*i, 1.0)],
            TeamStrategy::Mixed(p) => p
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(i, &w)| (i, w))
                .collect(),
        }
    }

    fn normalized(self) -> Self {
        match self {
            TeamStrategy::Mixed(p) => {
                let nz: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
                if nz.len() == 1 {
                    TeamStrategy::Pure(nz[0])
                } else {
                    TeamStrategy::Mixed(p)
                }
            }
            pure => pure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumKind {
    Pure,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageEquilibrium {
    pub kind: EquilibriumKind,
    pub per_team: Vec<TeamStrategy>,
    /// Certified largest unilateral gain.
    pub epsilon: f64,
}

impl StageEquilibrium {
    fn from_strategies(game: &StageGame, per_team: Vec<TeamStrategy>) -> Self {
        let per_team: Vec<TeamStrategy> =
            per_team.into_iter().map(TeamStrategy::normalized).collect();
        let kind = if per_team.iter().all(|s| matches!(s, TeamStrategy::Pure(_))) {
            EquilibriumKind::Pure
        } else {
            EquilibriumKind::Mixed
        };
        let profile: Vec<Vec<(usize, f64)>> = per_team.iter().map(TeamStrategy::support).collect();
        let epsilon = game.epsilon(&profile);
        StageEquilibrium {
            kind,
            per_team,
            epsilon,
        }
    }

    /// A profile read back from elsewhere; its epsilon is not recomputed and is set to zero.
    pub fn from_profile(per_team: Vec<TeamStrategy>) -> Self {
        let per_team: Vec<TeamStrategy> =
            per_team.into_iter().map(TeamStrategy::normalized).collect();
        let kind = if per_team.iter().all(|s| matches!(s, TeamStrategy::Pure(_))) {
            EquilibriumKind::Pure
        } else {
            EquilibriumKind::Mixed
        };
        StageEquilibrium {
            kind,
            per_team,
            epsilon: 0.0,
        }
    }

    pub fn pure(game: &StageGame, index: &[usize]) -> Self {
        Self::from_strategies(game, index.iter().map(|&i| TeamStrategy::Pure(i)).collect())
    }

    pub fn profile(&self) -> Vec<Vec<(usize, f64)>> {
        self.per_team.iter().map(TeamStrategy::support).collect()
    }

    pub fn pure_index(&self) -> Option<Vec<usize>> {
        self.per_team
            .iter()
            .map(|s| match s {
                TeamStrategy::Pure(i) => Some(*i),
                TeamStrategy::Mixed(_) => None,
            })
            .collect()
    }

    fn support_size(&self) -> usize {
        self.profile().iter().map(Vec::len).sum()
    }

    fn support_key(&self) -> Vec<Vec<usize>> {
        self.profile()
            .iter()
            .map(|p| p.iter().map(|(i, _)| *i).collect())
            .collect()
    }
}

impl StageGame {
    pub fn new(shape: Vec<usize>, costs: Vec<Vec<f64>>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if costs.len() != shape.len() || costs.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput(
                "cost tensors must match the game shape".into(),
            ));
        }
        if costs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("cost tensors must be finite".into()));
        }
        Ok(StageGame {
            shape,
            costs,
            projection_error: 0.0,
        })
    }

    pub fn num_teams(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.costs[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn joint_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn decompose(&self, mut j: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for (k, &n) in self.shape.iter().enumerate().rev() {
            out[k] = j % n;
            j /= n;
        }
        out
    }

    /// Expected tensor entries under a product of per-team mixtures.
    pub fn expected_costs(&self, profile: &[Vec<(usize, f64)>]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_teams()];
        self.for_each_weighted(profile, None, |j, w, _| {
            for (k, o) in out.iter_mut().enumerate() {
                *o += w * self.costs[k][j];
            }
        });
        out
    }

    /// Team `k`'s expected cost of each of its pure indices against the others' mixtures.
    pub fn deviation_costs(&self, k: usize, profile: &[Vec<(usize, f64)>]) -> Vec<f64> {
        let mut out = vec![0.0; self.shape[k]];
        self.for_each_weighted(profile, Some(k), |j, w, own| {
            out[own] += w * self.costs[k][j];
        });
        out
    }

    /// `max_k (expected cost - best unilateral cost)`, floored at zero.
    pub fn epsilon(&self, profile: &[Vec<(usize, f64)>]) -> f64 {
        let expected = self.expected_costs(profile);
        (0..self.num_teams())
            .map(|k| {
                let best = self
                    .deviation_costs(k, profile)
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                expected[k] - best
            })
            .fold(0.0, f64::max)
    }

    /// Visits every joint index reachable under the profile; when `free` is set, that
    /// team ranges over all its indices with weight 1.
    fn for_each_weighted(
        &self,
        profile: &[Vec<(usize, f64)>],
        free: Option<usize>,
        mut f: impl FnMut(usize, f64, usize),
    ) {
        let supports: Vec<Vec<(usize, f64)>> = (0..self.num_teams())
            .map(|k| {
                if Some(k) == free {
                    (0..self.shape[k]).map(|i| (i, 1.0)).collect()
                } else {
                    profile[k].clone()
                }
            })
            .collect();
        let mut cursor = vec![0usize; supports.len()];
        loop {
            let mut j = 0;
            let mut w = 1.0;
            for (k, s) in supports.iter().enumerate() {
                let (i, p) = s[cursor[k]];
                j = j * self.shape[k] + i;
                w *= p;
            }
            let own = free.map(|k| supports[k][cursor[k]].0).unwrap_or(0);
            f(j, w, own);
            let mut pos = supports.len();
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                cursor[pos] += 1;
                if cursor[pos] < supports[pos].len() {
                    break;
                }
                cursor[pos] = 0;
            }
        }
    }

    /// CSV rows `z_id,team,j_1,...,j_K,cost`.
    pub fn csv_rows(&self, z_id: &str) -> String {
        let mut out = String::new();
        for j in 0..self.len() {
            let idx = self.decompose(j);
            let idx = idx
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",");
            for k in 0..self.num_teams() {
                out.push_str(&format!("{z_id},{k},{idx},{:e}\n", self.costs[k][j]));
            }
        }
        out
    }

    pub fn csv_header(&self) -> String {
        let cols: Vec<String> = (0..self.num_teams()).map(|k| format!("j{k}")).collect();
        format!("z_id,team,{},cost\n", cols.join(","))
    }
}

/// Continuation values used when building a stage game.
#[derive(Debug, Clone, Copy)]
pub enum Continuation<'a> {
    /// Terminal stage.
    Zero,
    /// Exact expectation over the joint count kernel; `values[k]` is indexed by the
    /// joint count lattice.
    Lattice {
        lattice: &'a Lattice,
        values: &'a [Vec<f64>],
    },
    /// Deterministic flow projected onto a simplex grid; `values[k]` is indexed by the grid.
    Grid {
        grid: &'a Lattice,
        values: &'a [Vec<f64>],
    },
}

/// `cost_k[Γ] = ℓ^(k)_t(z, γ^(k)) + E[V^(k)_{t+1}(Z') | z, Γ]` for every joint
/// prescription profile `Γ`; `t` is the zero-based stage.
pub fn build_stage_game(
    z: &MeanField,
    t: usize,
    continuation: Continuation<'_>,
    sets: &[PrescriptionSet],
    spec: &GameSpec,
) -> Result<StageGame> {
    z.check_shape(spec)?;
    if sets.len() != spec.num_teams() {
        return Err(Error::InvalidInput(
            "one prescription set per team required".into(),
        ));
    }
    if t >= spec.horizon {
        return Err(Error::IndexOutOfRange(format!("stage {t}")));
    }
    match continuation {
        Continuation::Zero => {
            let shape: Vec<usize> = sets.iter().map(PrescriptionSet::len).collect();
            let own = own_costs(z, t, sets, spec);
            let len: usize = shape.iter().product();
            let mut game = StageGame {
                shape,
                costs: vec![vec![0.0; len]; sets.len()],
                projection_error: 0.0,
            };
            for j in 0..len {
                let idx = game.decompose(j);
                for k in 0..sets.len() {
                    game.costs[k][j] = own[k][idx[k]];
                }
            }
            Ok(game)
        }
        Continuation::Lattice { lattice, values } => {
            let counts: Vec<Vec<u32>> = z
                .per_team
                .iter()
                .zip(lattice.resolutions())
                .map(|(zk, &n)| {
                    zk.iter()
                        .map(|p| (p * f64::from(n)).round() as u32)
                        .collect()
                })
                .collect();
            let idx = lattice
                .index_of(&counts)
                .filter(|&i| {
                    let back = lattice.mean_field(i);
                    back.flatten()
                        .iter()
                        .zip(z.flatten())
                        .all(|(a, b)| (a - b).abs() <= 1e-9)
                })
                .ok_or_else(|| {
                    Error::InvalidInput("mean field is not a point of the count lattice".into())
                })?;
            let items: Vec<&[Prescription]> = sets.iter().map(|s| s.items.as_slice()).collect();
            let kernels = PointKernels::new(spec, lattice, idx, &items)?;
            Ok(stage_game_from_kernels(
                spec,
                lattice,
                idx,
                t,
                &kernels,
                Some(values),
                sets,
            ))
        }
        Continuation::Grid { grid, values } => {
            let shape: Vec<usize> = sets.iter().map(PrescriptionSet::len).collect();
            let own = own_costs(z, t, sets, spec);
            let len: usize = shape.iter().product();
            let mut game = StageGame {
                shape,
                costs: vec![vec![0.0; len]; sets.len()],
                projection_error: 0.0,
            };
            for j in 0..len {
                let idx = game.decompose(j);
                let gammas: Vec<&Prescription> =
                    idx.iter().zip(sets).map(|(&i, s)| &s.items[i]).collect();
                let next = flow(z, &gammas, spec);
                let (target, err) = project_to_grid(&next, grid, spec);
                game.projection_error = game.projection_error.max(err);
                for k in 0..sets.len() {
                    game.costs[k][j] = own[k][idx[k]] + values[k][target];
                }
            }
            Ok(game)
        }
    }
}

/// `own[k][i] = ℓ^(k)_t(z, γ_i)`.
pub(crate) fn own_costs(
    z: &MeanField,
    t: usize,
    sets: &[PrescriptionSet],
    spec: &GameSpec,
) -> Vec<Vec<f64>> {
    let zflat = z.flatten();
    sets.iter()
        .enumerate()
        .map(|(k, set)| {
            set.items
                .iter()
                .map(|g| stage_cost_flat(&zflat, z.team(k), g, spec, k, t))
                .collect()
        })
        .collect()
}

/// Finite-population stage game at lattice point `idx` from precomputed kernels;
/// `values` is `V_{t+1}` indexed `[k][idx]`, absent at the last stage.
pub fn stage_game_from_kernels(
    spec: &GameSpec,
    lattice: &Lattice,
    idx: usize,
    t: usize,
    kernels: &PointKernels,
    values: Option<&[Vec<f64>]>,
    sets: &[PrescriptionSet],
) -> StageGame {
    let z = lattice.mean_field(idx);
    let own = own_costs(&z, t, sets, spec);
    let shape: Vec<usize> = sets.iter().map(PrescriptionSet::len).collect();
    let len: usize = shape.iter().product();
    let mut game = StageGame {
        shape,
        costs: vec![vec![0.0; len]; sets.len()],
        projection_error: 0.0,
    };
    for j in 0..len {
        let pick = game.decompose(j);
        let per_team: Vec<Vec<(usize, f64)>> = pick
            .iter()
            .enumerate()
            .map(|(k, &i)| kernels.per_team[k][i].clone())
            .collect();
        match values {
            None => {
                for k in 0..sets.len() {
                    game.costs[k][j] = own[k][pick[k]];
                }
            }
            Some(values) => {
                let next = PointKernels::joint(lattice, &per_team);
                for k in 0..sets.len() {
                    let cont: f64 = next.iter().map(|&(n, p)| p * values[k][n]).sum();
                    game.costs[k][j] = own[k][pick[k]] + cont;
                }
            }
        }
    }
    game
}

/// All joint indices at which no team can strictly lower its own cost unilaterally.
pub fn pure_nash(game: &StageGame) -> Vec<Vec<usize>> {
    let k_teams = game.num_teams();
    let mut out = Vec::new();
    let strides: Vec<usize> = (0..k_teams)
        .map(|k| game.shape[k + 1..].iter().product())
        .collect();
    'profiles: for j in 0..game.len() {
        let idx = game.decompose(j);
        for k in 0..k_teams {
            let base = j - idx[k] * strides[k];
            let mine = game.costs[k][j];
            for alt in 0..game.shape[k] {
                if game.costs[k][base + alt * strides[k]] < mine - DEVIATION_TOL {
                    continue 'profiles;
                }
            }
        }
        out.push(idx);
    }
    out
}

/// Default bound on support sizes in [`mixed_nash_2team`].
pub const DEFAULT_SUPPORT_BOUND: usize = 4;

/// Certification threshold for support-enumeration equilibria.
pub const MIXED_CERT_TOL: f64 = 1e-9;

/// Support enumeration for a two-team game, smallest supports first.
pub fn mixed_nash_2team(game: &StageGame, support_bound: usize) -> Result<StageEquilibrium> {
    if game.num_teams() != 2 {
        return Err(Error::InvalidInput(
            "support enumeration needs exactly two teams".into(),
        ));
    }
    let (n1, n2) = (game.shape[0], game.shape[1]);
    let bound = support_bound.max(1);
    for total in 2..=(2 * bound) {
        for k1 in 1..total {
            let k2 = total - k1;
            if k1 > bound.min(n1) || k2 > bound.min(n2) {
                continue;
            }
            for rows in Combinations::new(n1, k1) {
                for cols in Combinations::new(n2, k2) {
                    if let Some(eq) = try_supports(game, &rows, &cols) {
                        return Ok(eq);
                    }
                }
            }
        }
    }
    Err(Error::EquilibriumNotFound(bound))
}

/// Solves the indifference system of one team: find weights on `support` of the
/// opponent making all of `own` rows equally costly.
fn indifference(
    cost: impl Fn(usize, usize) -> f64,
    own: &[usize],
    support: &[usize],
) -> Option<Vec<f64>> {
    let rows = own.len() + 1;
    let cols = support.len() + 1;
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, &i) in own.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[(r, c)] = cost(i, j);
        }
        a[(r, support.len())] = -1.0;
    }
    for c in 0..support.len() {
        a[(own.len(), c)] = 1.0;
    }
    b[own.len()] = 1.0;
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-12).ok()?;
    if (&a * &x - &b).amax() > 1e-9 {
        return None;
    }
    let mut w: Vec<f64> = x.iter().take(support.len()).copied().collect();
    if w.iter().any(|&v| v < -1e-10 || !v.is_finite()) {
        return None;
    }
    for v in w.iter_mut() {
        *v = v.max(0.0);
    }
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return None;
    }
    w.iter_mut().for_each(|v| *v /= sum);
    Some(w)
}

fn try_supports(game: &StageGame, rows: &[usize], cols: &[usize]) -> Option<StageEquilibrium> {
    support_profile(game, rows, cols).filter(|eq| eq.epsilon <= MIXED_CERT_TOL)
}

/// The profile equalizing both teams' costs on the given supports, if one exists.
fn support_profile(game: &StageGame, rows: &[usize], cols: &[usize]) -> Option<StageEquilibrium> {
    let (n1, n2) = (game.shape[0], game.shape[1]);
    let a = |i: usize, j: usize| game.costs[0][i * n2 + j];
    let b = |j: usize, i: usize| game.costs[1][i * n2 + j];
    let y = indifference(a, rows, cols)?;
    let x = indifference(b, cols, rows)?;
    let mut px = vec![0.0; n1];
    for (&i, &w) in rows.iter().zip(&x) {
        px[i] = w;
    }
    let mut py = vec![0.0; n2];
    for (&j, &w) in cols.iter().zip(&y) {
        py[j] = w;
    }
    Some(StageEquilibrium::from_strategies(
        game,
        vec![TeamStrategy::Mixed(px), TeamStrategy::Mixed(py)],
    ))
}

/// Fictitious play over prescription indices; returns the visited profile with the
/// smallest certified epsilon, whether or not it reaches `tol`. With two teams the
/// indifference system on the final beliefs' support is also tried.
pub fn br_iteration(game: &StageGame, max_iters: usize, tol: f64) -> StageEquilibrium {
    let k_teams = game.num_teams();
    let start = vec![0usize; k_teams];
    let mut best = StageEquilibrium::pure(game, &start);
    if best.epsilon <= tol {
        return best;
    }
    let mut beliefs: Vec<Vec<f64>> = game
        .shape
        .iter()
        .map(|&n| {
            let mut v = vec![0.0; n];
            v[0] = 1.0;
            v
        })
        .collect();
    for it in 1..=max_iters.max(1) {
        let profile: Vec<Vec<(usize, f64)>> = beliefs.iter().map(|b| support_of(b)).collect();
        let responses: Vec<usize> = (0..k_teams)
            .map(|k| argmin_first(&game.deviation_costs(k, &profile)))
            .collect();
        let candidate = StageEquilibrium::pure(game, &responses);
        if candidate.epsilon < best.epsilon {
            best = candidate;
        }
        let step = 1.0 / (it as f64 + 1.0);
        for (b, &r) in beliefs.iter_mut().zip(&responses) {
            for (i, v) in b.iter_mut().enumerate() {
                *v = (1.0 - step) * *v + if i == r { step } else { 0.0 };
            }
        }
        let averaged = StageEquilibrium::from_strategies(
            game,
            beliefs
                .iter()
                .map(|b| TeamStrategy::Mixed(b.clone()))
                .collect(),
        );
        if averaged.epsilon < best.epsilon {
            best = averaged;
        }
        if best.epsilon <= tol {
            break;
        }
    }
    if k_teams == 2 && best.epsilon > tol {
        // fictitious play approaches mixed equilibria slowly; re-solve on its support
        let support = |b: &[f64]| -> Vec<usize> {
            let top = b.iter().copied().fold(0.0, f64::max);
            (0..b.len()).filter(|&i| b[i] >= 1e-3 * top).collect()
        };
        if let Some(eq) = support_profile(game, &support(&beliefs[0]), &support(&beliefs[1])) {
            if eq.epsilon < best.epsilon {
                best = eq;
            }
        }
    }
    best
}

fn support_of(p: &[f64]) -> Vec<(usize, f64)> {
    p.iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (i, w))
        .collect()
}

/// First index whose value is within [`DEVIATION_TOL`] of the minimum.
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .position(|&v| v <= min + DEVIATION_TOL)
        .unwrap_or(0)
}

/// Deterministic choice: pure before mixed, then the lexicographically smallest pure
/// index, or for mixed the smallest total support then lexicographic support order.
pub fn select_equilibrium(candidates: &[StageEquilibrium]) -> Result<StageEquilibrium> {
    let pure = candidates
        .iter()
        .filter_map(|c| c.pure_index().map(|i| (i, c)))
        .min_by(|a, b| a.0.cmp(&b.0));
    if let Some((_, c)) = pure {
        return Ok(c.clone());
    }
    candidates
        .iter()
        .min_by(|a, b| {
            a.support_size()
                .cmp(&b.support_size())
                .then_with(|| a.support_key().cmp(&b.support_key()))
        })
        .cloned()
        .ok_or(Error::Empty)
}

/// How stage games are solved when no pure equilibrium exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub pure_only: bool,
    pub support_bound: usize,
    pub br_max_iters: usize,
    pub br_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            pure_only: false,
            support_bound: DEFAULT_SUPPORT_BOUND,
            br_max_iters: 2_000,
            br_tol: 1e-9,
        }
    }
}

/// Pure equilibria first; otherwise support enumeration (two teams) and then
/// fictitious play. `None` only in pure-only mode with no pure equilibrium.
pub fn solve_stage_game(game: &StageGame, config: &SolverConfig) -> Option<StageEquilibrium> {
    let pure = pure_nash(game);
    if let Some(first) = pure.first() {
        // pure_nash enumerates in lexicographic order, so the first one is the selection
        return Some(StageEquilibrium::pure(game, first));
    }
    if config.pure_only {
        return None;
    }
    if game.num_teams() == 2 {
        if let Ok(eq) = mixed_nash_2team(game, config.support_bound) {
            return Some(eq);
        }
    }
    Some(br_iteration(game, config.br_max_iters, config.br_tol))
}

mod subsets {
    /// Lexicographic `k`-subsets of `0..n`.
    pub struct Combinations {
        n: usize,
        current: Option<Vec<usize>>,
    }

    impl Combinations {
        pub fn new(n: usize, k: usize) -> Self {
            Combinations {
                n,
                current: (k <= n).then(|| (0..k).collect()),
            }
        }
    }

    impl Iterator for Combinations {
        type Item = Vec<usize>;

        fn next(&mut self) -> Option<Vec<usize>> {
            let out = self.current.clone()?;
            let k = out.len();
            let mut next = out.clone();
            let mut i = k;
            loop {
                if i == 0 {
                    self.current = None;
                    break;
                }
                i -= 1;
                if next[i] < self.n - k + i {
                    next[i] += 1;
                    for j in i + 1..k {
                        next[j] = next[j - 1] + 1;
                    }
                    self.current = Some(next);
                    break;
                }
            }
            Some(out)
        }
    }
}
