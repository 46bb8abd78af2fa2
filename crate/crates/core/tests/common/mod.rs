//! Reference computations for tests. Everything here works from the raw spec document
//! and enumerates agents or strategies one by one, so it shares no code paths with the
//! count-based library routines it checks.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use mfteams::game_model::{CostBase, SpecDocument};
use mfteams::{GameSpec, Prescription};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
}

pub fn load_data(name: &str) -> GameSpec {
    mfteams::load_spec_file(data_path(name)).expect("bundled spec loads")
}

/// Concatenated team vectors of a joint mean field.
pub fn flat(z: &[Vec<f64>]) -> Vec<f64> {
    z.iter().flatten().copied().collect()
}

fn offset(doc: &SpecDocument, team: usize) -> usize {
    doc.teams[..team].iter().map(|t| t.states.len()).sum()
}

/// `P(s'|s,a,z)` read straight off the base tensor and coupling records.
pub fn transition(doc: &SpecDocument, k: usize, s: usize, a: usize, next: usize, z: &[f64]) -> f64 {
    let team = &doc.teams[k];
    let mut p = team.transition.base[s][a][next];
    for c in &team.transition.coupling {
        if c.s == s && c.a == a && c.next == next {
            p += c.value * z[offset(doc, c.team) + c.sigma];
        }
    }
    p
}

pub fn cost(doc: &SpecDocument, k: usize, t: usize, s: usize, a: usize, z: &[f64]) -> f64 {
    let team = &doc.teams[k];
    let mut c = match &team.cost.base {
        CostBase::Staged(b) => b[t][s][a],
        CostBase::Stationary(b) => b[s][a],
    };
    for r in &team.cost.coupling {
        if r.s == s && r.a == a && r.t.is_none_or(|rt| rt == t) {
            c += r.value * z[offset(doc, r.team) + r.sigma];
        }
    }
    c
}

/// Lists agents as `(team, state)` in team-then-state order.
pub fn agents(counts: &[Vec<u32>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (k, m) in counts.iter().enumerate() {
        for (s, &c) in m.iter().enumerate() {
            out.extend(std::iter::repeat_n((k, s), c as usize));
        }
    }
    out
}

fn mean_field(counts: &[Vec<u32>]) -> Vec<f64> {
    counts
        .iter()
        .flat_map(|m| {
            let n: u32 = m.iter().sum();
            m.iter().map(move |&c| f64::from(c) / f64::from(n))
        })
        .collect()
}

/// Next joint counts by enumerating every agent's (action, next state) outcome.
pub fn agent_level_kernel(
    spec: &GameSpec,
    counts: &[Vec<u32>],
    gammas: &[Prescription],
) -> BTreeMap<Vec<Vec<u32>>, f64> {
    let doc = spec.document();
    let z = mean_field(counts);
    let list = agents(counts);
    let mut out = BTreeMap::new();
    let mut stack: Vec<(usize, Vec<Vec<u32>>, f64)> =
        vec![(0, counts.iter().map(|m| vec![0; m.len()]).collect(), 1.0)];
    while let Some((i, acc, p)) = stack.pop() {
        if i == list.len() {
            *out.entry(acc).or_insert(0.0) += p;
            continue;
        }
        let (k, s) = list[i];
        let team = &doc.teams[k];
        for a in 0..team.actions.len() {
            let pa = gammas[k].rows[s][a];
            if pa == 0.0 {
                continue;
            }
            for next in 0..team.states.len() {
                let pn = transition(doc, k, s, a, next, &z);
                if pn == 0.0 {
                    continue;
                }
                let mut acc = acc.clone();
                acc[k][next] += 1;
                stack.push((i + 1, acc, p * pa * pn));
            }
        }
    }
    out
}

/// Team `k`'s per-agent average cost, averaged over every agent's action draw.
pub fn agent_level_cost(
    spec: &GameSpec,
    counts: &[Vec<u32>],
    gamma: &Prescription,
    k: usize,
    t: usize,
) -> f64 {
    let doc = spec.document();
    let z = mean_field(counts);
    let own: Vec<usize> = agents(counts)
        .into_iter()
        .filter(|(j, _)| *j == k)
        .map(|(_, s)| s)
        .collect();
    let n = own.len() as f64;
    let na = doc.teams[k].actions.len();
    let mut total = 0.0;
    for j in 0..na.pow(own.len() as u32) {
        let mut code = j;
        let mut p = 1.0;
        let mut c = 0.0;
        for &s in &own {
            let a = code % na;
            code /= na;
            p *= gamma.rows[s][a];
            c += cost(doc, k, t, s, a, &z);
        }
        total += p * c / n;
    }
    total
}

/// Row-major enumeration of count vectors of total `n` in `d` cells, first cell largest first.
pub fn count_vectors(n: u32, d: usize) -> Vec<Vec<u32>> {
    if d == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in (0..=n).rev() {
        for rest in count_vectors(n - first, d - 1) {
            let mut v = vec![first];
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

/// Joint count points, team 0 most significant.
pub fn joint_points(spec: &GameSpec) -> Vec<Vec<Vec<u32>>> {
    let mut out: Vec<Vec<Vec<u32>>> = vec![Vec::new()];
    for team in &spec.document().teams {
        let pts = count_vectors(team.population, team.states.len());
        out = out
            .into_iter()
            .flat_map(|prefix| {
                pts.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(p.clone());
                    v
                })
            })
            .collect();
    }
    out
}

/// Initial law over joint count points: independent draws from each team's initial law.
pub fn initial_law(spec: &GameSpec) -> BTreeMap<Vec<Vec<u32>>, f64> {
    let doc = spec.document();
    let mut out = BTreeMap::new();
    let single: Vec<Vec<u32>> = doc.teams.iter().map(|t| vec![0; t.states.len()]).collect();
    let mut stack = vec![(0usize, single, 1.0)];
    let list: Vec<usize> = doc
        .teams
        .iter()
        .enumerate()
        .flat_map(|(k, t)| std::iter::repeat_n(k, t.population as usize))
        .collect();
    while let Some((i, acc, p)) = stack.pop() {
        if i == list.len() {
            *out.entry(acc).or_insert(0.0) += p;
            continue;
        }
        let k = list[i];
        for (s, &w) in doc.teams[k].initial_law.iter().enumerate() {
            if w > 0.0 {
                let mut acc = acc.clone();
                acc[k][s] += 1;
                stack.push((i + 1, acc, p * w));
            }
        }
    }
    out
}

/// Team `k`'s expected total cost from `start` at stage `t0` when every team plays
/// `choice(t, point)[team]`, by recursion over agent-level kernels.
pub fn rollout_value(
    spec: &GameSpec,
    k: usize,
    t0: usize,
    start: &[Vec<u32>],
    choice: &dyn Fn(usize, &[Vec<u32>]) -> Vec<Prescription>,
) -> f64 {
    if t0 == spec.horizon {
        return 0.0;
    }
    let gammas = choice(t0, start);
    let mut v = agent_level_cost(spec, start, &gammas[k], k, t0);
    for (next, p) in agent_level_kernel(spec, start, &gammas) {
        v += p * rollout_value(spec, k, t0 + 1, &next, choice);
    }
    v
}

/// Minimum over every Markov coordinator strategy of team `k` (others fixed by
/// `others`) of the expected total cost from each point at stage 0, by exhaustive
/// enumeration of the strategy table.
pub fn brute_force_team_values(
    spec: &GameSpec,
    k: usize,
    items: &[Prescription],
    others: &dyn Fn(usize, &[Vec<u32>]) -> Vec<Prescription>,
) -> Vec<f64> {
    let points = joint_points(spec);
    let cells = points.len() * spec.horizon;
    let total = items.len().pow(cells as u32);
    let mut best = vec![f64::INFINITY; points.len()];
    for code in 0..total {
        let mut table = vec![0usize; cells];
        let mut c = code;
        for slot in table.iter_mut() {
            *slot = c % items.len();
            c /= items.len();
        }
        let choice = |t: usize, z: &[Vec<u32>]| {
            let i = points
                .iter()
                .position(|p| p == z)
                .expect("point on lattice");
            let mut g = others(t, z);
            g[k] = items[table[t * points.len() + i]].clone();
            g
        };
        for (i, p) in points.iter().enumerate() {
            let v = rollout_value(spec, k, 0, p, &choice);
            if v < best[i] {
                best[i] = v;
            }
        }
    }
    best
}

/// `W_1` between laws on points `x_0 < x_1 < ...` of a line: `Σ |F_p - F_q| Δx`.
pub fn line_transport(p: &[f64], q: &[f64], x: &[f64]) -> f64 {
    let (mut fp, mut fq, mut total) = (0.0, 0.0, 0.0);
    for i in 0..p.len() - 1 {
        fp += p[i];
        fq += q[i];
        total += (fp - fq).abs() * (x[i + 1] - x[i]);
    }
    total
}

/// Smallest transition probability over every `K`-tuple of simplex vertices.
pub fn min_vertex_probability(doc: &SpecDocument) -> f64 {
    let sizes: Vec<usize> = doc.teams.iter().map(|t| t.states.len()).collect();
    let dim: usize = sizes.iter().sum();
    let total: usize = sizes.iter().product();
    let mut lowest = f64::INFINITY;
    for code in 0..total {
        let mut z = vec![0.0; dim];
        let mut c = code;
        let mut base = 0;
        for &n in &sizes {
            z[base + c % n] = 1.0;
            c /= n;
            base += n;
        }
        for (k, team) in doc.teams.iter().enumerate() {
            for s in 0..team.states.len() {
                for a in 0..team.actions.len() {
                    for next in 0..team.states.len() {
                        lowest = lowest.min(transition(doc, k, s, a, next, &z));
                    }
                }
            }
        }
    }
    lowest
}
