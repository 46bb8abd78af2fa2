//! Kantorovich distances, concentration and Lipschitz estimates, and the
//! approximation bound for limit-game policies used in finite populations.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::count_dynamics::{
    sample_next_counts, stage_cost, stage_cost_from_counts, team_transition_kernel_capped,
    CountVector, MeanField, Prescription,
};
use crate::error::{Error, Result};
use crate::game_model::GameSpec;
use crate::mf_limit::flow;
use crate::mpe_finite::ValueTable;
use crate::rng;
use crate::transport::transport_cost;

/// Per-team kernel supports above this size switch [`expected_deviation`] to sampling.
pub const DEFAULT_EXACT_SUPPORT: usize = 100_000;

/// Samples used by the Monte Carlo fallback of [`expected_deviation`].
pub const DEVIATION_SAMPLES: usize = 20_000;

/// Default cap on the number of point pairs scanned by [`estimate_lipschitz`].
pub const DEFAULT_PAIR_CAP: usize = 1_000_000;

/// Largest state space solved exactly by [`wasserstein`].
pub const MAX_EXACT_STATES: usize = 32;

/// Optimal transport cost between `p` and `q` under the metric `d`.
pub fn wasserstein(p: &[f64], q: &[f64], d: &[Vec<f64>]) -> Result<f64> {
    if p.len() != q.len() || d.len() != p.len() || d.iter().any(|r| r.len() != p.len()) {
        return Err(Error::InvalidInput(
            "distributions and metric must share one state space".into(),
        ));
    }
    if p.len() > MAX_EXACT_STATES {
        return Err(Error::capacity(
            "transport states",
            p.len() as u128,
            MAX_EXACT_STATES as u128,
        ));
    }
    Ok(transport_cost(p, q, d))
}

fn is_discrete(d: &[Vec<f64>]) -> bool {
    d.iter().enumerate().all(|(i, r)| {
        r.iter()
            .enumerate()
            .all(|(j, &x)| if i == j { x == 0.0 } else { x == 1.0 })
    })
}

/// Distance between two laws over team `k`'s states. Under the discrete metric this
/// is total variation, which is what the transport problem evaluates to anyway.
pub fn team_distance(spec: &GameSpec, k: usize, p: &[f64], q: &[f64]) -> f64 {
    let d = &spec.team(k).metric;
    if is_discrete(d) {
        0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    } else {
        transport_cost(p, q, d)
    }
}

/// `Σ_k W^(k)(z^(k), ẑ^(k))`.
pub fn joint_distance(z: &MeanField, zhat: &MeanField, spec: &GameSpec) -> Result<f64> {
    if z.per_team.len() != zhat.per_team.len() || z.per_team.len() != spec.num_teams() {
        return Err(Error::InvalidInput(format!(
            "team count mismatch: {} vs {}",
            z.per_team.len(),
            zhat.per_team.len()
        )));
    }
    let mut total = 0.0;
    for k in 0..spec.num_teams() {
        let ns = spec.team(k).num_states();
        if z.team(k).len() != ns || zhat.team(k).len() != ns {
            return Err(Error::InvalidInput(format!(
                "mean field of team {k} has the wrong length"
            )));
        }
        total += team_distance(spec, k, z.team(k), zhat.team(k));
    }
    Ok(total)
}

/// `E[W(q̄(z, Γ), Z')]` with `Z' ~ Q(·|z, Γ)`, split by team.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub total: f64,
    pub per_team: Vec<f64>,
    /// Present when some team's expectation was sampled rather than summed.
    pub stderr: Option<f64>,
}

/// Count vectors of a count mean field under the spec's populations.
pub fn counts_of(z: &MeanField, spec: &GameSpec) -> Result<Vec<CountVector>> {
    z.check_shape(spec)?;
    z.per_team
        .iter()
        .zip(spec.populations())
        .enumerate()
        .map(|(k, (zk, n))| {
            zk.iter()
                .map(|&p| {
                    let c = p * f64::from(n);
                    let r = c.round();
                    if (c - r).abs() > 1e-9 || r < 0.0 {
                        Err(Error::InvalidInput(format!(
                            "mean field of team {k} is not a multiple of 1/{n}"
                        )))
                    } else {
                        Ok(r as u32)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn expected_deviation(
    z: &MeanField,
    gammas: &[&Prescription],
    spec: &GameSpec,
) -> Result<Deviation> {
    expected_deviation_capped(z, gammas, spec, DEFAULT_EXACT_SUPPORT)
}

pub fn expected_deviation_capped(
    z: &MeanField,
    gammas: &[&Prescription],
    spec: &GameSpec,
    exact_support: usize,
) -> Result<Deviation> {
    let counts = counts_of(z, spec)?;
    if gammas.len() != spec.num_teams() {
        return Err(Error::InvalidInput(
            "one prescription per team required".into(),
        ));
    }
    let target = flow(z, gammas, spec);
    let mut per_team = Vec::with_capacity(spec.num_teams());
    let mut variance = None::<f64>;
    for k in 0..spec.num_teams() {
        let n = f64::from(spec.team(k).population);
        match team_transition_kernel_capped(&counts[k], z, gammas[k], spec, k, exact_support) {
            Ok(law) => {
                let e = law
                    .atoms
                    .iter()
                    .map(|(m, p)| {
                        let zk: Vec<f64> = m.iter().map(|&c| f64::from(c) / n).collect();
                        p * team_distance(spec, k, target.team(k), &zk)
                    })
                    .sum();
                per_team.push(e);
            }
            Err(Error::Capacity { .. }) => {
                let owned: Vec<Prescription> = gammas.iter().map(|g| (*g).clone()).collect();
                let mut stream = rng::stream(spec.seed, "deviation", &[k as u64]);
                let draws: Vec<f64> = (0..DEVIATION_SAMPLES)
                    .map(|_| {
                        let next = sample_next_counts(&counts, &owned, spec, &mut stream);
                        let zk: Vec<f64> = next[k].iter().map(|&c| f64::from(c) / n).collect();
                        team_distance(spec, k, target.team(k), &zk)
                    })
                    .collect();
                let m = draws.len() as f64;
                let mean = draws.iter().sum::<f64>() / m;
                let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m - 1.0) / m;
                *variance.get_or_insert(0.0) += var;
                per_team.push(mean);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Deviation {
        total: per_team.iter().sum(),
        per_team,
        stderr: variance.map(f64::sqrt),
    })
}

/// Log-log fit of expected deviation against population size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// `None` when the fit is degenerate.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    /// Root mean square of the fit residuals.
    pub residual: Option<f64>,
    pub degenerate: bool,
    /// `κ̂^(k) = max_N √N · E[W^(k)]`.
    pub kappa: Vec<f64>,
    pub points: Vec<RatePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub population: u32,
    pub deviation: f64,
    pub per_team: Vec<f64>,
    pub stderr: f64,
}

impl RateFit {
    pub fn csv(&self) -> String {
        let mut out = String::from("N,deviation,stderr\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{:e},{:e}\n",
                p.population, p.deviation, p.stderr
            ));
        }
        out
    }
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r², rms residual)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (slope, intercept, r2, (sse / n).sqrt())
}

/// Expected deviation at `z` for every population in `populations` (the same for
/// all teams), with a log-log rate fit and the per-team envelope `κ̂`.
pub fn fit_rate(
    spec: &GameSpec,
    z: &MeanField,
    gammas: &[Prescription],
    populations: &[u32],
) -> Result<RateFit> {
    let mut distinct = populations.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::InvalidInput(
            "rate fit needs at least four distinct populations".into(),
        ));
    }
    let refs: Vec<&Prescription> = gammas.iter().collect();
    let points = populations
        .par_iter()
        .map(|&n| {
            let scaled = spec.with_populations(&vec![n; spec.num_teams()])?;
            let d = expected_deviation(z, &refs, &scaled)?;
            Ok(RatePoint {
                population: n,
                deviation: d.total,
                per_team: d.per_team,
                stderr: d.stderr.unwrap_or(0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut kappa = vec![0.0f64; spec.num_teams()];
    for p in &points {
        for (k, &d) in p.per_team.iter().enumerate() {
            kappa[k] = kappa[k].max(f64::from(p.population).sqrt() * d);
        }
    }
    let degenerate = points.iter().any(|p| p.deviation <= 0.0);
    let (slope, intercept, r_squared, residual) = if degenerate {
        (None, None, None, None)
    } else {
        let x: Vec<f64> = points
            .iter()
            .map(|p| f64::from(p.population).ln())
            .collect();
        let y: Vec<f64> = points.iter().map(|p| p.deviation.ln()).collect();
        let (b, a, r2, res) = least_squares(&x, &y);
        (Some(b), Some(a), Some(r2), Some(res))
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        residual,
        degenerate,
        kappa,
        points,
    })
}

/// `L̂^(k)_t = max |V^(k)_t(z) - V^(k)_t(z')| / W(z, z')` over pairs of table points,
/// indexed `[k][t]`.
pub fn estimate_lipschitz(table: &ValueTable, spec: &GameSpec) -> Result<Vec<Vec<f64>>> {
    estimate_lipschitz_capped(table, spec, DEFAULT_PAIR_CAP)
}

pub fn estimate_lipschitz_capped(
    table: &ValueTable,
    spec: &GameSpec,
    pair_cap: usize,
) -> Result<Vec<Vec<f64>>> {
    let lattice = &table.lattice;
    let len = lattice.len();
    if len < 2 {
        return Err(Error::InvalidInput(
            "a Lipschitz estimate needs at least two points".into(),
        ));
    }
    let k_teams = spec.num_teams();
    // per-team distance tables between team points
    let team_d: Vec<Vec<Vec<f64>>> = (0..k_teams)
        .map(|k| {
            let n = f64::from(lattice.resolutions()[k]);
            let pts: Vec<Vec<f64>> = lattice
                .team_points(k)
                .iter()
                .map(|m| m.iter().map(|&c| f64::from(c) / n).collect())
                .collect();
            pts.iter()
                .map(|p| pts.iter().map(|q| team_distance(spec, k, p, q)).collect())
                .collect()
        })
        .collect();
    let coords: Vec<Vec<usize>> = (0..len).map(|i| lattice.team_indices(i)).collect();
    let distance = |i: usize, j: usize| -> f64 {
        (0..k_teams)
            .map(|k| team_d[k][coords[i][k]][coords[j][k]])
            .sum()
    };
    let stages = table.values.len();
    let ratio_max = |i: usize, j: usize, acc: &mut Vec<Vec<f64>>| {
        let d = distance(i, j);
        if d <= 1e-15 {
            return;
        }
        for t in 0..stages {
            for k in 0..k_teams {
                let v = &table.values[t][k];
                let r = (v[i] - v[j]).abs() / d;
                if r > acc[k][t] {
                    acc[k][t] = r;
                }
            }
        }
    };
    let zero = || vec![vec![0.0f64; stages]; k_teams];
    let merge = |mut a: Vec<Vec<f64>>, b: Vec<Vec<f64>>| {
        for (ra, rb) in a.iter_mut().zip(b) {
            for (x, y) in ra.iter_mut().zip(rb) {
                *x = x.max(y);
            }
        }
        a
    };
    let pairs = len * (len - 1) / 2;
    let out = if pairs <= pair_cap {
        (0..len)
            .into_par_iter()
            .fold(zero, |mut acc, i| {
                for j in (i + 1)..len {
                    ratio_max(i, j, &mut acc);
                }
                acc
            })
            .reduce(zero, merge)
    } else {
        let mut acc = zero();
        let mut stream = rng::stream(spec.seed, "lipschitz", &[len as u64]);
        for _ in 0..pair_cap {
            let i = stream.random_range(0..len);
            let j = stream.random_range(0..len);
            if i != j {
                ratio_max(i, j, &mut acc);
            }
        }
        acc
    };
    Ok(out)
}

/// `2 Σ_t Σ_k κ^(k) L^(k)_t / √N^(k)` with `lipschitz` indexed `[k][t]`.
pub fn approximation_bound(kappa: &[f64], lipschitz: &[Vec<f64>], populations: &[u32]) -> f64 {
    let mut total = 0.0;
    for (k, lk) in lipschitz.iter().enumerate() {
        let scale = kappa[k] / f64::from(populations[k]).sqrt();
        total += lk.iter().map(|l| scale * l).sum::<f64>();
    }
    2.0 * total
}

/// One probe of the finite/limit comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub z: String,
    pub cost_gap: f64,
    pub deviation: f64,
    pub envelope: f64,
    pub deviation_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub max_cost_gap: f64,
    pub max_deviation_excess: f64,
    pub rows: Vec<ConsistencyRow>,
}

/// At each probe `(counts, Γ)`: the gap between the finite expected stage cost and the
/// limit closed form (over all teams and stages), and how far the expected deviation
/// exceeds `Σ_k κ̂^(k) / √N^(k)`.
pub fn limit_consistency_check(
    spec: &GameSpec,
    probes: &[(Vec<CountVector>, Vec<Prescription>)],
    kappa: &[f64],
) -> Result<ConsistencyReport> {
    let envelope: f64 = spec
        .populations()
        .iter()
        .zip(kappa)
        .map(|(&n, k)| k / f64::from(n).sqrt())
        .sum();
    let rows = probes
        .iter()
        .map(|(counts, gammas)| {
            let z = MeanField::from_counts(counts);
            let mut gap: f64 = 0.0;
            for t in 0..spec.horizon {
                for (k, g) in gammas.iter().enumerate() {
                    let finite = stage_cost_from_counts(counts, g, spec, k, t)?;
                    let limit = stage_cost(&z, g, spec, k, t);
                    gap = gap.max((finite - limit).abs());
                }
            }
            let refs: Vec<&Prescription> = gammas.iter().collect();
            let dev = expected_deviation(&z, &refs, spec)?.total;
            let label = counts
                .iter()
                .map(|m| crate::count_dynamics::count_label(m))
                .collect::<Vec<_>>()
                .join(";");
            Ok(ConsistencyRow {
                z: label,
                cost_gap: gap,
                deviation: dev,
                envelope,
                deviation_excess: dev - envelope,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConsistencyReport {
        max_cost_gap: rows.iter().map(|r| r.cost_gap).fold(0.0, f64::max),
        max_deviation_excess: rows
            .iter()
            .map(|r| r.deviation_excess)
            .fold(f64::NEG_INFINITY, f64::max),
        rows,
    })
}

/// Bound components for one population profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub kappa_kind: &'static str,
    pub kappa: Vec<f64>,
    /// `[k][t]`, stages numbered from one in reports.
    pub lipschitz: Vec<Vec<f64>>,
    pub populations: Vec<u32>,
    pub epsilon_bound: f64,
    pub rate_fit: Option<RateFit>,
}

impl MetricReport {
    pub fn new(
        kappa: Vec<f64>,
        lipschitz: Vec<Vec<f64>>,
        populations: Vec<u32>,
        rate_fit: Option<RateFit>,
    ) -> Self {
        let epsilon_bound = approximation_bound(&kappa, &lipschitz, &populations);
        MetricReport {
            kappa_kind: "empirical-kappa",
            kappa,
            lipschitz,
            populations,
            epsilon_bound,
            rate_fit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discrete(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect()
    }

    #[test]
    fn wasserstein_basic_cases() {
        let d = discrete(3);
        assert_eq!(
            wasserstein(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], &d).unwrap(),
            0.0
        );
        assert!((wasserstein(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &d).unwrap() - 1.0).abs() < 1e-15);
        let p = [0.1, 0.6, 0.3];
        let q = [0.5, 0.1, 0.4];
        let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| f64::abs(a - b)).sum::<f64>();
        assert!((wasserstein(&p, &q, &d).unwrap() - tv).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_rejects_shape_mismatch() {
        assert!(wasserstein(&[1.0], &[0.5, 0.5], &discrete(2)).is_err());
    }

    #[test]
    fn bound_formula() {
        assert_eq!(approximation_bound(&[1.0], &[vec![0.0, 0.0]], &[4]), 0.0);
        assert!((approximation_bound(&[1.0], &[vec![1.0]], &[4]) - 1.0).abs() < 1e-15);
        let a = approximation_bound(&[0.7, 0.3], &[vec![1.0, 2.0], vec![0.5, 0.1]], &[4, 9]);
        let b = approximation_bound(&[0.7, 0.3], &[vec![1.0, 2.0], vec![0.5, 0.1]], &[16, 36]);
        assert!((a - 2.0 * b).abs() < 1e-12);
    }

    #[test]
    fn least_squares_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, -0.5, -2.0, -3.5];
        let (b, a, r2, res) = least_squares(&x, &y);
        assert!((b + 1.5).abs() < 1e-12 && (a - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12 && res < 1e-12);
    }
}
