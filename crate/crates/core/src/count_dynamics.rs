//! Exact count-based representation of a team population.
//!
//! The state counts of a team evolve through three multinomial-product stages:
//! state counts → state-action counts (prescription draws), state-action counts →
//! state-action-next-state counts (transition draws), and a marginalization back to
//! next-state counts. Since every agent acts and moves independently given the
//! current mean field, the composite kernel from `m` to `m'` is also the convolution
//! over occupied states `s` of `Multinomial(m(s), r_s)` with
//! `r_s(s') = Σ_a γ(a|s) P(s'|s,a,z)`, which is how [`team_transition_kernel`]
//! builds it.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game_model::{GameSpec, STOCHASTIC_TOL};

/// Default cap on lattice sizes and distribution supports.
pub const DEFAULT_SUPPORT_CAP: usize = 10_000_000;

/// Atoms below this probability are dropped and the remaining mass renormalized.
pub const PRUNE_BELOW: f64 = 1e-15;

pub type CountVector = Vec<u32>;
pub type JointCount = Vec<CountVector>;

/// Per-team probability vectors over states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanField {
    pub per_team: Vec<Vec<f64>>,
}

impl MeanField {
    pub fn new(per_team: Vec<Vec<f64>>) -> Self {
        MeanField { per_team }
    }

    /// `z^(k) = m^(k) / N^(k)` with `N^(k) = Σ_s m^(k)(s)`.
    pub fn from_counts(counts: &[CountVector]) -> Self {
        MeanField {
            per_team: counts
                .iter()
                .map(|m| {
                    let n: u32 = m.iter().sum();
                    m.iter()
                        .map(|&c| f64::from(c) / f64::from(n.max(1)))
                        .collect()
                })
                .collect(),
        }
    }

    /// Mean field of a simplex-grid point with per-team resolutions.
    pub fn from_grid(counts: &[CountVector], resolutions: &[u32]) -> Self {
        MeanField {
            per_team: counts
                .iter()
                .zip(resolutions)
                .map(|(m, &n)| m.iter().map(|&c| f64::from(c) / f64::from(n)).collect())
                .collect(),
        }
    }

    /// The vector of initial laws, one per team.
    pub fn initial(spec: &GameSpec) -> Self {
        MeanField {
            per_team: spec.teams.iter().map(|t| t.initial_law.clone()).collect(),
        }
    }

    pub fn team(&self, k: usize) -> &[f64] {
        &self.per_team[k]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.per_team.iter().flatten().copied().collect()
    }

    pub fn check_shape(&self, spec: &GameSpec) -> Result<()> {
        if self.per_team.len() != spec.num_teams() {
            return Err(Error::IndexOutOfRange(format!(
                "mean field has {} teams, spec has {}",
                self.per_team.len(),
                spec.num_teams()
            )));
        }
        for (k, z) in self.per_team.iter().enumerate() {
            if z.len() != spec.team(k).num_states() {
                return Err(Error::IndexOutOfRange(format!(
                    "mean field of team {k} has wrong length"
                )));
            }
        }
        Ok(())
    }

    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for (k, z) in self.per_team.iter().enumerate() {
            let sum: f64 = z.iter().sum();
            if z.iter().any(|&p| !p.is_finite() || p < -tol) || (sum - 1.0).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "mean field of team {k} is off the simplex"
                )));
            }
        }
        Ok(())
    }
}

/// A map from local state to a distribution over actions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prescription {
    pub rows: Vec<Vec<f64>>,
}

impl Prescription {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL
            {
                return Err(Error::InvalidInput(format!(
                    "prescription row {s} is not a distribution"
                )));
            }
        }
        Ok(Prescription { rows })
    }

    /// Deterministic prescription choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        Prescription {
            rows: actions
                .iter()
                .map(|&a| {
                    (0..num_actions)
                        .map(|b| if a == b { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.iter().all(|&p| p == 0.0 || p == 1.0))
    }

    /// Convex combination `Σ w_i γ_i`.
    pub fn mixture(parts: &[(f64, &Prescription)]) -> Prescription {
        let first = parts[0].1;
        let mut rows = vec![vec![0.0; first.rows[0].len()]; first.rows.len()];
        for &(w, p) in parts {
            for (r, pr) in rows.iter_mut().zip(&p.rows) {
                for (x, y) in r.iter_mut().zip(pr) {
                    *x += w * y;
                }
            }
        }
        Prescription { rows }
    }
}

/// A finite distribution with pairwise-distinct, sorted atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDistribution<T: Ord> {
    pub atoms: Vec<(T, f64)>,
}

impl<T: Ord + Clone> CountDistribution<T> {
    fn from_map(map: BTreeMap<T, f64>) -> Self {
        let mut atoms: Vec<(T, f64)> = map.into_iter().filter(|(_, p)| *p >= PRUNE_BELOW).collect();
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if total > 0.0 && total != 1.0 {
            for (_, p) in atoms.iter_mut() {
                *p /= total;
            }
        }
        CountDistribution { atoms }
    }

    pub fn dirac(x: T) -> Self {
        CountDistribution {
            atoms: vec![(x, 1.0)],
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|(_, p)| p).sum()
    }

    pub fn prob(&self, x: &T) -> f64 {
        self.atoms
            .binary_search_by(|(y, _)| y.cmp(x))
            .map(|i| self.atoms[i].1)
            .unwrap_or(0.0)
    }

    pub fn map<U: Ord + Clone>(&self, f: impl Fn(&T) -> U) -> CountDistribution<U> {
        let mut map = BTreeMap::new();
        for (x, p) in &self.atoms {
            *map.entry(f(x)).or_insert(0.0) += p;
        }
        CountDistribution::from_map(map)
    }
}

/// `C(n + d - 1, d - 1)`, the number of length-`d` nonnegative vectors summing to `n`.
pub fn lattice_size(n: u32, d: usize) -> u128 {
    if d == 0 {
        return 0;
    }
    let k = (d - 1) as u128;
    let top = u128::from(n) + k;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(top - i) / (i + 1);
    }
    acc
}

/// All length-`d` nonnegative integer vectors summing to `n`, in lexicographic order
/// (first coordinate descending).
pub fn enumerate_counts(n: u32, d: usize) -> Result<Vec<CountVector>> {
    enumerate_counts_capped(n, d, DEFAULT_SUPPORT_CAP)
}

pub fn enumerate_counts_capped(n: u32, d: usize, cap: usize) -> Result<Vec<CountVector>> {
    if d == 0 {
        return Err(Error::InvalidInput(
            "count vectors need at least one coordinate".into(),
        ));
    }
    let size = lattice_size(n, d);
    if size > cap as u128 {
        return Err(Error::capacity("count lattice", size, cap as u128));
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut cur = vec![0u32; d];
    fill_counts(n, 0, &mut cur, &mut out);
    Ok(out)
}

fn fill_counts(remaining: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<CountVector>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for v in (0..=remaining).rev() {
        cur[pos] = v;
        fill_counts(remaining - v, pos + 1, cur, out);
    }
}

pub(crate) fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

/// Multinomial pmf of `counts` under `probs`, computed in log space.
pub fn multinomial_pmf(counts: &[u32], probs: &[f64]) -> f64 {
    let n: u32 = counts.iter().sum();
    let mut log = ln_factorial(n);
    for (&c, &p) in counts.iter().zip(probs) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return 0.0;
        }
        log += f64::from(c) * p.ln() - ln_factorial(c);
    }
    log.exp()
}

/// Distribution of a `Multinomial(n, probs)` count vector (zero-probability outcomes omitted).
fn multinomial_split(n: u32, probs: &[f64]) -> Result<Vec<(CountVector, f64)>> {
    Ok(enumerate_counts(n, probs.len())?
        .into_iter()
        .filter_map(|c| {
            let p = multinomial_pmf(&c, probs);
            (p > 0.0).then_some((c, p))
        })
        .collect())
}

fn check_prescription(m: &[u32], gamma: &Prescription) -> Result<()> {
    if m.len() != gamma.num_states() {
        return Err(Error::InvalidInput(format!(
            "count vector has {} states but the prescription has {}",
            m.len(),
            gamma.num_states()
        )));
    }
    Ok(())
}

/// Law of the state-action counts `m̄` (flattened `[s][a]`) given state counts `m`
/// and prescription `γ`: independent multinomial splits per state.
pub fn action_count_dist(
    m: &[u32],
    gamma: &Prescription,
) -> Result<CountDistribution<CountVector>> {
    check_prescription(m, gamma)?;
    let na = gamma.rows[0].len();
    let mut partial: BTreeMap<CountVector, f64> = BTreeMap::new();
    partial.insert(Vec::with_capacity(m.len() * na), 1.0);
    for (s, &ms) in m.iter().enumerate() {
        let split = multinomial_split(ms, &gamma.rows[s])?;
        let mut next = BTreeMap::new();
        for (prefix, p) in &partial {
            for (cell, q) in &split {
                let mut key = prefix.clone();
                key.extend_from_slice(cell);
                *next.entry(key).or_insert(0.0) += p * q;
            }
        }
        partial = next;
    }
    Ok(CountDistribution::from_map(partial))
}

/// Law of the state-action-next-state counts `m̂` (flattened `[s][a][s']`) given
/// state-action counts `m̄` (flattened `[s][a]`) and the joint mean field `z`.
pub fn nextstate_count_dist(
    mbar: &[u32],
    z: &MeanField,
    spec: &GameSpec,
    k: usize,
) -> Result<CountDistribution<CountVector>> {
    let team = spec.team(k);
    let (ns, na) = (team.num_states(), team.num_actions());
    if mbar.len() != ns * na {
        return Err(Error::InvalidInput(
            "state-action count has the wrong shape".into(),
        ));
    }
    let zflat = z.flatten();
    let mut row = vec![0.0; ns];
    let mut partial: BTreeMap<CountVector, f64> = BTreeMap::new();
    partial.insert(Vec::with_capacity(ns * na * ns), 1.0);
    for s in 0..ns {
        for a in 0..na {
            team.transition_row_into(s, a, &zflat, &mut row);
            let split = multinomial_split(mbar[s * na + a], &row)?;
            let mut next = BTreeMap::new();
            for (prefix, p) in &partial {
                for (cell, q) in &split {
                    let mut key = prefix.clone();
                    key.extend_from_slice(cell);
                    *next.entry(key).or_insert(0.0) += p * q;
                }
            }
            partial = next;
        }
    }
    Ok(CountDistribution::from_map(partial))
}

/// `m'(s') = Σ_{s,a} m̂(s,a,s')` for a flattened `[s][a][s']` tensor.
pub fn marginalize_counts(mhat: &[u32], num_states: usize, num_actions: usize) -> CountVector {
    let mut out = vec![0u32; num_states];
    for (i, &c) in mhat.iter().enumerate() {
        out[i % num_states] += c;
    }
    debug_assert_eq!(mhat.len(), num_states * num_actions * num_states);
    out
}

/// Per-agent next-state law from state `s` under `γ`: `Σ_a γ(a|s) P(·|s,a,z)`.
pub(crate) fn mixed_rows(
    spec: &GameSpec,
    k: usize,
    zflat: &[f64],
    gamma: &Prescription,
) -> Vec<Vec<f64>> {
    let team = spec.team(k);
    let ns = team.num_states();
    let mut row = vec![0.0; ns];
    (0..ns)
        .map(|s| {
            let mut r = vec![0.0; ns];
            for (a, &w) in gamma.rows[s].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                team.transition_row_into(s, a, zflat, &mut row);
                for (x, y) in r.iter_mut().zip(&row) {
                    *x += w * y;
                }
            }
            r
        })
        .collect()
}

/// Exact law `Q^(k)(m' | z, γ)` of team `k`'s next state counts.
pub fn team_transition_kernel(
    m: &[u32],
    z: &MeanField,
    gamma: &Prescription,
    spec: &GameSpec,
    k: usize,
) -> Result<CountDistribution<CountVector>> {
    team_transition_kernel_capped(m, z, gamma, spec, k, DEFAULT_SUPPORT_CAP)
}

pub fn team_transition_kernel_capped(
    m: &[u32],
    z: &MeanField,
    gamma: &Prescription,
    spec: &GameSpec,
    k: usize,
    cap: usize,
) -> Result<CountDistribution<CountVector>> {
    check_prescription(m, gamma)?;
    let ns = spec.team(k).num_states();
    let rows = mixed_rows(spec, k, &z.flatten(), gamma);
    let mut partial: BTreeMap<CountVector, f64> = BTreeMap::new();
    partial.insert(vec![0; ns], 1.0);
    for (s, &ms) in m.iter().enumerate() {
        if ms == 0 {
            continue;
        }
        let split = multinomial_split(ms, &rows[s])?;
        let needed = (partial.len() as u128) * (split.len() as u128);
        if needed > cap as u128 {
            return Err(Error::capacity("team kernel support", needed, cap as u128));
        }
        let mut next = BTreeMap::new();
        for (acc, p) in &partial {
            for (moved, q) in &split {
                let key: CountVector = acc.iter().zip(moved).map(|(x, y)| x + y).collect();
                *next.entry(key).or_insert(0.0) += p * q;
            }
        }
        partial = next;
    }
    Ok(CountDistribution::from_map(partial))
}

/// Exact joint law `Q(M' | z, Γ)`: the product of the per-team kernels.
pub fn joint_transition_kernel(
    counts: &[CountVector],
    gammas: &[Prescription],
    spec: &GameSpec,
) -> Result<CountDistribution<JointCount>> {
    if counts.len() != spec.num_teams() || gammas.len() != spec.num_teams() {
        return Err(Error::InvalidInput(
            "one count vector and one prescription per team required".into(),
        ));
    }
    let z = MeanField::from_counts(counts);
    let mut partial: Vec<(JointCount, f64)> = vec![(Vec::new(), 1.0)];
    for k in 0..spec.num_teams() {
        let q = team_transition_kernel(&counts[k], &z, &gammas[k], spec, k)?;
        let needed = (partial.len() as u128) * (q.len() as u128);
        if needed > DEFAULT_SUPPORT_CAP as u128 {
            return Err(Error::capacity(
                "joint kernel support",
                needed,
                DEFAULT_SUPPORT_CAP as u128,
            ));
        }
        let mut next = Vec::with_capacity(partial.len() * q.len());
        for (prefix, p) in &partial {
            for (m, w) in &q.atoms {
                let mut key = prefix.clone();
                key.push(m.clone());
                next.push((key, p * w));
            }
        }
        partial = next;
    }
    Ok(CountDistribution::from_map(partial.into_iter().collect()))
}

/// `Multinomial(n, probs)` via sequential conditional binomials.
pub fn sample_multinomial<R: Rng + ?Sized>(rng: &mut R, n: u32, probs: &[f64]) -> CountVector {
    let mut out = vec![0u32; probs.len()];
    let mut left = u64::from(n);
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = left as u32;
            break;
        }
        let frac = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = if frac >= 1.0 {
            left
        } else if frac <= 0.0 {
            0
        } else {
            Binomial::new(left, frac)
                .expect("valid binomial")
                .sample(rng)
        };
        out[i] = draw as u32;
        left -= draw;
        mass -= p;
    }
    out
}

/// One draw of the next joint counts, by sampling the state-action split, then the
/// transition split, then marginalizing.
pub fn sample_next_counts<R: Rng + ?Sized>(
    counts: &[CountVector],
    gammas: &[Prescription],
    spec: &GameSpec,
    rng: &mut R,
) -> JointCount {
    let zflat = MeanField::from_counts(counts).flatten();
    let mut out = Vec::with_capacity(counts.len());
    for (k, m) in counts.iter().enumerate() {
        let team = spec.team(k);
        let (ns, na) = (team.num_states(), team.num_actions());
        let mut row = vec![0.0; ns];
        let mut next = vec![0u32; ns];
        for (s, &ms) in m.iter().enumerate() {
            if ms == 0 {
                continue;
            }
            let per_action = sample_multinomial(rng, ms, &gammas[k].rows[s]);
            for (a, &c) in per_action.iter().enumerate().take(na) {
                if c == 0 {
                    continue;
                }
                team.transition_row_into(s, a, &zflat, &mut row);
                let moved = sample_multinomial(rng, c, &row);
                for (x, y) in next.iter_mut().zip(&moved) {
                    *x += y;
                }
            }
        }
        out.push(next);
    }
    out
}

/// Expected per-step team cost `ℓ^(k)_t(z, γ) = Σ_s z(s) Σ_a γ(a|s) c_t(s,a,z)`;
/// `t` is the zero-based stage index.
pub fn stage_cost(z: &MeanField, gamma: &Prescription, spec: &GameSpec, k: usize, t: usize) -> f64 {
    stage_cost_flat(&z.flatten(), z.team(k), gamma, spec, k, t)
}

pub(crate) fn stage_cost_flat(
    zflat: &[f64],
    zk: &[f64],
    gamma: &Prescription,
    spec: &GameSpec,
    k: usize,
    t: usize,
) -> f64 {
    let team = spec.team(k);
    let mut total = 0.0;
    for (s, &mass) in zk.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let inner: f64 = gamma.rows[s]
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(a, &w)| w * team.cost_flat(t, s, a, zflat))
            .sum();
        total += mass * inner;
    }
    total
}

/// The same per-step cost computed as the expectation of the count form
/// `Σ_{s,a} c_t(s,a,z) m̄(s,a) / N` over the state-action count law.
pub fn stage_cost_from_counts(
    counts: &[CountVector],
    gamma: &Prescription,
    spec: &GameSpec,
    k: usize,
    t: usize,
) -> Result<f64> {
    let z = MeanField::from_counts(counts);
    let zflat = z.flatten();
    let team = spec.team(k);
    let na = team.num_actions();
    let n = f64::from(team.population);
    let law = action_count_dist(&counts[k], gamma)?;
    Ok(law
        .atoms
        .iter()
        .map(|(mbar, p)| {
            let cost: f64 = mbar
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| f64::from(c) * team.cost_flat(t, i / na, i % na, &zflat))
                .sum();
            p * cost / n
        })
        .sum())
}

/// Product of per-team simplex lattices `{m ∈ ℕ^{|S^(k)|} : Σ m = n^(k)}`.
///
/// With `n^(k) = N^(k)` this is the joint count lattice; with other resolutions it is
/// a uniform simplex grid. Joint indices are row-major with team 0 most significant,
/// so they follow the lexicographic order of the per-team point lists.
#[derive(Debug, Clone)]
pub struct Lattice {
    resolutions: Vec<u32>,
    points: Vec<Vec<CountVector>>,
    lookup: Vec<HashMap<CountVector, usize>>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    pub fn new(num_states: &[usize], resolutions: &[u32]) -> Result<Self> {
        Self::with_cap(num_states, resolutions, DEFAULT_SUPPORT_CAP)
    }

    pub fn with_cap(num_states: &[usize], resolutions: &[u32], cap: usize) -> Result<Self> {
        if num_states.len() != resolutions.len() || num_states.is_empty() {
            return Err(Error::InvalidInput(
                "one resolution per team required".into(),
            ));
        }
        let total = num_states
            .iter()
            .zip(resolutions)
            .map(|(&d, &n)| lattice_size(n, d))
            .fold(1u128, |a, b| a.saturating_mul(b));
        if total > cap as u128 {
            return Err(Error::capacity("joint lattice", total, cap as u128));
        }
        let points: Vec<Vec<CountVector>> = num_states
            .iter()
            .zip(resolutions)
            .map(|(&d, &n)| enumerate_counts_capped(n, d, cap))
            .collect::<Result<_>>()?;
        let lookup = points
            .iter()
            .map(|pts| {
                pts.iter()
                    .enumerate()
                    .map(|(i, p)| (p.clone(), i))
                    .collect()
            })
            .collect();
        let mut strides = vec![1usize; points.len()];
        for k in (0..points.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * points[k + 1].len();
        }
        Ok(Lattice {
            resolutions: resolutions.to_vec(),
            len: total as usize,
            points,
            lookup,
            strides,
        })
    }

    /// The joint count lattice of `spec`.
    pub fn counts(spec: &GameSpec) -> Result<Self> {
        let sizes: Vec<usize> = spec.teams.iter().map(|t| t.num_states()).collect();
        Lattice::new(&sizes, &spec.populations())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_teams(&self) -> usize {
        self.points.len()
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn team_len(&self, k: usize) -> usize {
        self.points[k].len()
    }

    pub fn team_points(&self, k: usize) -> &[CountVector] {
        &self.points[k]
    }

    pub fn team_index_of(&self, k: usize, counts: &[u32]) -> Option<usize> {
        self.lookup[k].get(counts).copied()
    }

    pub fn joint_index(&self, per_team: &[usize]) -> usize {
        per_team.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn team_indices(&self, idx: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.points)
            .map(|(s, pts)| (idx / s) % pts.len())
            .collect()
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn index_of(&self, counts: &[CountVector]) -> Option<usize> {
        if counts.len() != self.points.len() {
            return None;
        }
        let per_team: Option<Vec<usize>> = counts
            .iter()
            .enumerate()
            .map(|(k, m)| self.team_index_of(k, m))
            .collect();
        per_team.map(|p| self.joint_index(&p))
    }

    pub fn point(&self, idx: usize) -> JointCount {
        self.team_indices(idx)
            .into_iter()
            .enumerate()
            .map(|(k, i)| self.points[k][i].clone())
            .collect()
    }

    pub fn mean_field(&self, idx: usize) -> MeanField {
        MeanField::from_grid(&self.point(idx), &self.resolutions)
    }

    /// Hyphen-joined counts per team, teams separated by `;`.
    pub fn count_label(&self, idx: usize) -> String {
        self.point(idx)
            .iter()
            .map(|m| count_label(m))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Slash-form rationals per team (`1/4,3/4`), teams separated by `;`.
    pub fn rational_label(&self, idx: usize) -> String {
        self.point(idx)
            .iter()
            .zip(&self.resolutions)
            .map(|(m, n)| {
                m.iter()
                    .map(|c| format!("{c}/{n}"))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.resolutions == other.resolutions && self.points == other.points
    }
}

pub fn count_label(m: &[u32]) -> String {
    m.iter().map(u32::to_string).collect::<Vec<_>>().join("-")
}

/// Per-team next-count kernels at one lattice point, for every candidate prescription.
///
/// `per_team[k][i]` is the sparse law of team `k`'s next lattice index when it plays
/// its `i`-th prescription.
#[derive(Debug, Clone)]
pub struct PointKernels {
    pub per_team: Vec<Vec<Vec<(usize, f64)>>>,
}

impl PointKernels {
    pub fn new(
        spec: &GameSpec,
        lattice: &Lattice,
        idx: usize,
        items: &[&[Prescription]],
    ) -> Result<Self> {
        let counts = lattice.point(idx);
        let z = MeanField::from_counts(&counts);
        let per_team = items
            .iter()
            .enumerate()
            .map(|(k, list)| {
                list.iter()
                    .map(|gamma| {
                        let q = team_transition_kernel(&counts[k], &z, gamma, spec, k)?;
                        q.atoms
                            .iter()
                            .map(|(m, p)| {
                                lattice.team_index_of(k, m).map(|i| (i, *p)).ok_or_else(|| {
                                    Error::InvalidInput("kernel left the lattice".into())
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PointKernels { per_team })
    }

    /// Team `k`'s kernel under a mixture over its prescriptions.
    pub fn mixed(&self, k: usize, mixture: &[(usize, f64)]) -> Vec<(usize, f64)> {
        if let [(i, _)] = mixture {
            return self.per_team[k][*i].clone();
        }
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, w) in mixture {
            for &(j, p) in &self.per_team[k][i] {
                *acc.entry(j).or_insert(0.0) += w * p;
            }
        }
        acc.into_iter().collect()
    }

    /// Joint next-index law for the given per-team kernels.
    pub fn joint(lattice: &Lattice, kernels: &[Vec<(usize, f64)>]) -> Vec<(usize, f64)> {
        let mut partial: Vec<(usize, f64)> = vec![(0, 1.0)];
        for (k, kern) in kernels.iter().enumerate() {
            let stride = lattice.stride(k);
            let mut next = Vec::with_capacity(partial.len() * kern.len());
            for &(base, p) in &partial {
                for &(i, q) in kern {
                    next.push((base + i * stride, p * q));
                }
            }
            partial = next;
        }
        partial
    }
}

/// CSV rows `team,m_in,gamma_id,m_out,prob` of every team kernel on the lattice.
pub fn kernel_csv(spec: &GameSpec, lattice: &Lattice, items: &[&[Prescription]]) -> Result<String> {
    let mut out = String::from("team,m_in,gamma_id,m_out,prob\n");
    for idx in 0..lattice.len() {
        let counts = lattice.point(idx);
        let z = MeanField::from_counts(&counts);
        for (k, list) in items.iter().enumerate() {
            for (g, gamma) in list.iter().enumerate() {
                let q = team_transition_kernel(&counts[k], &z, gamma, spec, k)?;
                for (m, p) in &q.atoms {
                    out.push_str(&format!(
                        "{k},{},{g},{},{p:e}\n",
                        lattice.count_label(idx),
                        count_label(m)
                    ));
                }
            }
        }
    }
    Ok(out)
}
