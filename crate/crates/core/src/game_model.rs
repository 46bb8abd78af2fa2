//! Declarative game specification.
//!
//! Every team carries an affine mean-field coupling: the transition kernel and the
//! per-agent cost are a base tensor plus a term linear in the joint mean field,
//!
//! ```text
//! P(s' | s, a, z) = θ0[s][a][s'] + Σ_{k',σ} θ1[s][a][s'][k'][σ] · z^(k')(σ)
//! c_t(s, a, z)    = c0[t][s][a]  + Σ_{k',σ} c1[t][s][a][k'][σ]  · z^(k')(σ)
//! ```
//!
//! Coupling tensors are stored densely against a flattened joint mean field whose
//! layout is the concatenation of the teams' state vectors.

use serde::{Deserialize, Serialize};

use crate::count_dynamics::MeanField;
use crate::error::{Error, Result};

pub const STOCHASTIC_TOL: f64 = 1e-12;
pub const SIMPLEX_TOL: f64 = 1e-9;

/// JSON document for a game specification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpecDocument {
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub teams: Vec<TeamDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TeamDocument {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub population: u32,
    pub initial_law: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
    pub transition: TransitionDocument,
    pub cost: CostDocument,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TransitionDocument {
    /// `base[s][a][s']`
    pub base: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub coupling: Vec<TransitionCoupling>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TransitionCoupling {
    pub s: usize,
    pub a: usize,
    #[serde(rename = "s'")]
    pub next: usize,
    pub team: usize,
    pub sigma: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CostDocument {
    pub base: CostBase,
    #[serde(default)]
    pub coupling: Vec<CostCoupling>,
}

/// Either `base[t][s][a]` or a stationary `base[s][a]` broadcast to every stage.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CostBase {
    Staged(Vec<Vec<Vec<f64>>>),
    Stationary(Vec<Vec<f64>>),
}

/// A cost coupling record; a missing `t` applies the coefficient at every stage.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CostCoupling {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    pub s: usize,
    pub a: usize,
    pub team: usize,
    pub sigma: usize,
    pub value: f64,
}

/// One validated team.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamModel {
    pub team_id: usize,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub population: u32,
    pub initial_law: Vec<f64>,
    pub metric: Vec<Vec<f64>>,
    horizon: usize,
    joint_dim: usize,
    transition_base: Vec<f64>,
    transition_coupling: Vec<f64>,
    cost_base: Vec<f64>,
    cost_coupling: Vec<f64>,
}

impl TeamModel {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn theta0(&self, s: usize, a: usize, next: usize) -> f64 {
        let (ns, na) = (self.num_states(), self.num_actions());
        debug_assert!(s < ns && a < na && next < ns);
        self.transition_base[(s * na + a) * ns + next]
    }

    /// Coupling coefficient against flattened joint coordinate `j`.
    pub fn theta1(&self, s: usize, a: usize, next: usize, j: usize) -> f64 {
        let (ns, na) = (self.num_states(), self.num_actions());
        self.transition_coupling[((s * na + a) * ns + next) * self.joint_dim + j]
    }

    pub fn c0(&self, t: usize, s: usize, a: usize) -> f64 {
        let (ns, na) = (self.num_states(), self.num_actions());
        debug_assert!(t < self.horizon);
        self.cost_base[(t * ns + s) * na + a]
    }

    pub fn c1(&self, t: usize, s: usize, a: usize, j: usize) -> f64 {
        let (ns, na) = (self.num_states(), self.num_actions());
        self.cost_coupling[((t * ns + s) * na + a) * self.joint_dim + j]
    }

    /// `P(·|s,a,z)` for a flattened joint mean field, written into `out`.
    ///
    /// Entries are clamped into `[0, 1]`; validation guarantees the raw affine value is
    /// at least `-1e-12` anywhere on the simplex product.
    pub(crate) fn transition_row_into(&self, s: usize, a: usize, zflat: &[f64], out: &mut [f64]) {
        let ns = self.num_states();
        let na = self.num_actions();
        let base = (s * na + a) * ns;
        for (next, o) in out.iter_mut().enumerate().take(ns) {
            let row = &self.transition_coupling
                [(base + next) * self.joint_dim..(base + next + 1) * self.joint_dim];
            let v = self.transition_base[base + next] + dot(row, zflat);
            *o = v.clamp(0.0, 1.0);
        }
    }

    pub(crate) fn cost_flat(&self, t: usize, s: usize, a: usize, zflat: &[f64]) -> f64 {
        let ns = self.num_states();
        let na = self.num_actions();
        let idx = (t * ns + s) * na + a;
        let row = &self.cost_coupling[idx * self.joint_dim..(idx + 1) * self.joint_dim];
        self.cost_base[idx] + dot(row, zflat)
    }

    fn is_discrete_metric(&self) -> bool {
        self.metric.iter().enumerate().all(|(i, row)| {
            row.iter()
                .enumerate()
                .all(|(j, &d)| if i == j { d == 0.0 } else { d == 1.0 })
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A validated game: `K ≥ 1` teams, horizon `T ≥ 1` and a master seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub teams: Vec<TeamModel>,
    pub horizon: usize,
    pub seed: u64,
    offsets: Vec<usize>,
    document: SpecDocument,
}

impl GameSpec {
    pub fn num_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn team(&self, k: usize) -> &TeamModel {
        &self.teams[k]
    }

    /// Offset of team `k`'s block inside a flattened joint mean field.
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn joint_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn populations(&self) -> Vec<u32> {
        self.teams.iter().map(|t| t.population).collect()
    }

    pub fn document(&self) -> &SpecDocument {
        &self.document
    }

    /// The same game with different team populations.
    pub fn with_populations(&self, populations: &[u32]) -> Result<GameSpec> {
        if populations.len() != self.num_teams() {
            return Err(Error::InvalidInput(format!(
                "expected {} populations, got {}",
                self.num_teams(),
                populations.len()
            )));
        }
        let mut doc = self.document.clone();
        for (team, &n) in doc.teams.iter_mut().zip(populations) {
            team.population = n;
        }
        GameSpec::from_document(doc)
    }

    /// The same game with every team metric multiplied by `factor > 0`.
    pub fn with_scaled_metrics(&self, factor: f64) -> Result<GameSpec> {
        let mut doc = self.document.clone();
        for (team, model) in doc.teams.iter_mut().zip(&self.teams) {
            team.metric = Some(
                model
                    .metric
                    .iter()
                    .map(|row| row.iter().map(|d| d * factor).collect())
                    .collect(),
            );
        }
        GameSpec::from_document(doc)
    }

    pub fn uses_discrete_metrics(&self) -> bool {
        self.teams.iter().all(TeamModel::is_discrete_metric)
    }

    pub fn from_document(doc: SpecDocument) -> Result<GameSpec> {
        validate(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document).expect("spec document serializes")
    }
}

/// Parses and validates a JSON game specification.
pub fn load_spec(document: &str) -> Result<GameSpec> {
    let doc: SpecDocument = serde_json::from_str(document)?;
    GameSpec::from_document(doc)
}

pub fn load_spec_file(path: impl AsRef<std::path::Path>) -> Result<GameSpec> {
    let text = std::fs::read_to_string(path)?;
    load_spec(&text)
}

fn validate(doc: SpecDocument) -> Result<GameSpec> {
    if doc.horizon == 0 {
        return Err(Error::validation("horizon positive", "horizon"));
    }
    if doc.teams.is_empty() {
        return Err(Error::validation("teams nonempty", "teams"));
    }
    let horizon = doc.horizon;
    let mut offsets = vec![0];
    for (k, team) in doc.teams.iter().enumerate() {
        if team.states.is_empty() {
            return Err(Error::validation("states nonempty", format!("team {k}")));
        }
        if team.actions.is_empty() {
            return Err(Error::validation("actions nonempty", format!("team {k}")));
        }
        offsets.push(offsets[k] + team.states.len());
    }
    let joint_dim = offsets[doc.teams.len()];
    let sizes: Vec<usize> = doc.teams.iter().map(|t| t.states.len()).collect();

    let mut teams = Vec::with_capacity(doc.teams.len());
    for (k, team) in doc.teams.iter().enumerate() {
        let ns = team.states.len();
        let na = team.actions.len();
        let loc = |what: String| format!("team {k}, {what}");

        if team.population == 0 {
            return Err(Error::validation(
                "population positive",
                loc("population".into()),
            ));
        }

        if team.initial_law.len() != ns {
            return Err(Error::validation(
                "initial_law length",
                loc("initial_law".into()),
            ));
        }
        for (s, &p) in team.initial_law.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::validation(
                    "initial_law nonnegative",
                    loc(format!("s={s}")),
                ));
            }
        }
        let total: f64 = team.initial_law.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::validation(
                "initial_law sum",
                loc(format!("sum={total}")),
            ));
        }

        let metric = match &team.metric {
            Some(m) => m.clone(),
            None => (0..ns)
                .map(|i| (0..ns).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
                .collect(),
        };
        validate_metric(&metric, ns).map_err(|(inv, at)| Error::validation(inv, loc(at)))?;

        // transition base [s][a][s']
        if team.transition.base.len() != ns
            || team.transition.base.iter().any(|r| r.len() != na)
            || team.transition.base.iter().flatten().any(|r| r.len() != ns)
        {
            return Err(Error::validation(
                "transition_base shape",
                loc(format!("expected [{ns}][{na}][{ns}]")),
            ));
        }
        let mut transition_base = Vec::with_capacity(ns * na * ns);
        for s in 0..ns {
            for a in 0..na {
                let row = &team.transition.base[s][a];
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(
                        "finite value",
                        loc(format!("transition_base (s={s}, a={a})")),
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::validation(
                        "transition_base row sum",
                        loc(format!("(s={s}, a={a}) sums to {sum}")),
                    ));
                }
                transition_base.extend_from_slice(row);
            }
        }

        let mut transition_coupling = vec![0.0; ns * na * ns * joint_dim];
        for (i, c) in team.transition.coupling.iter().enumerate() {
            if c.s >= ns
                || c.a >= na
                || c.next >= ns
                || c.team >= sizes.len()
                || c.sigma >= sizes[c.team]
                || !c.value.is_finite()
            {
                return Err(Error::validation(
                    "transition_coupling index",
                    loc(format!("coupling record {i}")),
                ));
            }
            let j = offsets[c.team] + c.sigma;
            transition_coupling[((c.s * na + c.a) * ns + c.next) * joint_dim + j] += c.value;
        }
        for s in 0..ns {
            for a in 0..na {
                for j in 0..joint_dim {
                    let sum: f64 = (0..ns)
                        .map(|n| transition_coupling[((s * na + a) * ns + n) * joint_dim + j])
                        .sum();
                    if sum.abs() > STOCHASTIC_TOL {
                        let (kk, sigma) = split_joint(&offsets, j);
                        return Err(Error::validation(
                            "transition_coupling row sum",
                            loc(format!(
                                "(s={s}, a={a}, team={kk}, sigma={sigma}) sums to {sum}"
                            )),
                        ));
                    }
                }
            }
        }

        // Affine in z and separable across teams: the minimum over the simplex product
        // is attained at a vertex, namely the per-team argmin of the coefficients.
        for s in 0..ns {
            for a in 0..na {
                for n in 0..ns {
                    let cell = ((s * na + a) * ns + n) * joint_dim;
                    let mut worst = transition_base[(s * na + a) * ns + n];
                    let mut vertex = Vec::with_capacity(sizes.len());
                    for (kk, w) in offsets.windows(2).enumerate() {
                        let (sigma, m) = transition_coupling[cell + w[0]..cell + w[1]]
                            .iter()
                            .enumerate()
                            .fold(
                                (0, f64::INFINITY),
                                |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc },
                            );
                        worst += m;
                        vertex.push(format!("team{kk}:{sigma}"));
                    }
                    if worst < -STOCHASTIC_TOL {
                        return Err(Error::validation(
                            "nonnegativity at vertex",
                            loc(format!(
                                "P(s'={n} | s={s}, a={a}) = {worst} at vertex [{}]",
                                vertex.join(", ")
                            )),
                        ));
                    }
                }
            }
        }

        let cost_base = match &team.cost.base {
            CostBase::Staged(b) => {
                if b.len() != horizon
                    || b.iter().any(|r| r.len() != ns)
                    || b.iter().flatten().any(|r| r.len() != na)
                {
                    return Err(Error::validation(
                        "cost_base shape",
                        loc(format!("expected [{horizon}][{ns}][{na}] or [{ns}][{na}]")),
                    ));
                }
                b.iter().flatten().flatten().copied().collect::<Vec<_>>()
            }
            CostBase::Stationary(b) => {
                if b.len() != ns || b.iter().any(|r| r.len() != na) {
                    return Err(Error::validation(
                        "cost_base shape",
                        loc(format!("expected [{horizon}][{ns}][{na}] or [{ns}][{na}]")),
                    ));
                }
                let one: Vec<f64> = b.iter().flatten().copied().collect();
                one.iter()
                    .copied()
                    .cycle()
                    .take(one.len() * horizon)
                    .collect()
            }
        };
        if cost_base.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("finite value", loc("cost_base".into())));
        }

        let mut cost_coupling = vec![0.0; horizon * ns * na * joint_dim];
        for (i, c) in team.cost.coupling.iter().enumerate() {
            let bad_t = matches!(c.t, Some(t) if t >= horizon);
            if bad_t
                || c.s >= ns
                || c.a >= na
                || c.team >= sizes.len()
                || c.sigma >= sizes[c.team]
                || !c.value.is_finite()
            {
                return Err(Error::validation(
                    "cost_coupling index",
                    loc(format!("coupling record {i}")),
                ));
            }
            let j = offsets[c.team] + c.sigma;
            let stages: Vec<usize> = match c.t {
                Some(t) => vec![t],
                None => (0..horizon).collect(),
            };
            for t in stages {
                cost_coupling[((t * ns + c.s) * na + c.a) * joint_dim + j] += c.value;
            }
        }

        teams.push(TeamModel {
            team_id: k,
            states: team.states.clone(),
            actions: team.actions.clone(),
            population: team.population,
            initial_law: team.initial_law.clone(),
            metric,
            horizon,
            joint_dim,
            transition_base,
            transition_coupling,
            cost_base,
            cost_coupling,
        });
    }

    Ok(GameSpec {
        teams,
        horizon,
        seed: doc.seed,
        offsets,
        document: doc,
    })
}

fn split_joint(offsets: &[usize], j: usize) -> (usize, usize) {
    let k = offsets
        .windows(2)
        .position(|w| j >= w[0] && j < w[1])
        .unwrap();
    (k, j - offsets[k])
}

fn validate_metric(d: &[Vec<f64>], n: usize) -> std::result::Result<(), (&'static str, String)> {
    if d.len() != n || d.iter().any(|r| r.len() != n) {
        return Err(("metric shape", format!("expected {n}x{n}")));
    }
    for i in 0..n {
        if d[i][i] != 0.0 {
            return Err(("metric zero diagonal", format!("metric[{i}][{i}]")));
        }
        for j in 0..n {
            if !d[i][j].is_finite() {
                return Err(("finite value", format!("metric[{i}][{j}]")));
            }
            if (d[i][j] - d[j][i]).abs() > STOCHASTIC_TOL {
                return Err(("metric symmetry", format!("metric[{i}][{j}]")));
            }
            if i != j && d[i][j] <= 0.0 {
                return Err(("metric positivity", format!("metric[{i}][{j}]")));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for m in 0..n {
                if d[i][j] > d[i][m] + d[m][j] + STOCHASTIC_TOL {
                    return Err(("metric triangle inequality", format!("({i}, {j}) via {m}")));
                }
            }
        }
    }
    Ok(())
}

fn check_point(spec: &GameSpec, k: usize, s: usize, a: usize, z: &MeanField) -> Result<()> {
    if k >= spec.num_teams() {
        return Err(Error::IndexOutOfRange(format!("team {k}")));
    }
    let team = spec.team(k);
    if s >= team.num_states() {
        return Err(Error::IndexOutOfRange(format!("state {s} of team {k}")));
    }
    if a >= team.num_actions() {
        return Err(Error::IndexOutOfRange(format!("action {a} of team {k}")));
    }
    z.check_shape(spec)?;
    z.check_simplex(SIMPLEX_TOL)
}

/// `P^(k)(·|s,a,z)`.
pub fn eval_transition(
    spec: &GameSpec,
    k: usize,
    s: usize,
    a: usize,
    z: &MeanField,
) -> Result<Vec<f64>> {
    check_point(spec, k, s, a, z)?;
    let team = spec.team(k);
    let mut row = vec![0.0; team.num_states()];
    team.transition_row_into(s, a, &z.flatten(), &mut row);
    Ok(row)
}

/// `c^(k)_t(s,a,z)`, with `t` the zero-based stage index.
pub fn eval_cost(
    spec: &GameSpec,
    k: usize,
    t: usize,
    s: usize,
    a: usize,
    z: &MeanField,
) -> Result<f64> {
    check_point(spec, k, s, a, z)?;
    if t >= spec.horizon {
        return Err(Error::IndexOutOfRange(format!(
            "stage {t} (horizon {})",
            spec.horizon
        )));
    }
    Ok(spec.team(k).cost_flat(t, s, a, &z.flatten()))
}

/// Closed-form Lipschitz constants of the model in the joint Kantorovich metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzBounds {
    /// `cost[k][t]`: bound on `|c_t(s,a,z) - c_t(s,a,ẑ)| / W(z, ẑ)` over all `(s,a)`.
    pub cost: Vec<Vec<f64>>,
    /// `transition[k]`: bound on `TV(P(·|s,a,z), P(·|s,a,ẑ)) / W(z, ẑ)` over all `(s,a)`.
    pub transition: Vec<f64>,
}

/// Lipschitz constant of `σ ↦ f(σ)` w.r.t. the metric `d`, which by duality bounds
/// `|⟨f, p - q⟩| / W_d(p, q)`.
fn functional_lipschitz(f: &[f64], d: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..f.len() {
        for j in 0..f.len() {
            if i != j {
                best = best.max((f[i] - f[j]).abs() / d[i][j]);
            }
        }
    }
    best
}

pub fn lipschitz_bounds(spec: &GameSpec) -> LipschitzBounds {
    let blocks: Vec<(usize, usize)> = (0..spec.num_teams())
        .map(|k| (spec.offset(k), spec.offset(k + 1)))
        .collect();
    let mut cost = Vec::new();
    let mut transition = Vec::new();
    for team in &spec.teams {
        let (ns, na) = (team.num_states(), team.num_actions());
        let mut per_t = Vec::with_capacity(spec.horizon);
        for t in 0..spec.horizon {
            let mut worst: f64 = 0.0;
            for s in 0..ns {
                for a in 0..na {
                    for (kk, &(lo, hi)) in blocks.iter().enumerate() {
                        let f: Vec<f64> = (lo..hi).map(|j| team.c1(t, s, a, j)).collect();
                        worst = worst.max(functional_lipschitz(&f, &spec.team(kk).metric));
                    }
                }
            }
            per_t.push(worst);
        }
        cost.push(per_t);

        let mut worst: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                for (kk, &(lo, hi)) in blocks.iter().enumerate() {
                    let total: f64 = (0..ns)
                        .map(|n| {
                            let f: Vec<f64> = (lo..hi).map(|j| team.theta1(s, a, n, j)).collect();
                            functional_lipschitz(&f, &spec.team(kk).metric)
                        })
                        .sum();
                    worst = worst.max(0.5 * total);
                }
            }
        }
        transition.push(worst);
    }
    LipschitzBounds { cost, transition }
}
