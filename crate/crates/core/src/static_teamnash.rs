//! Pure Nash and pure Team-Nash equilibria of small static games by enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDocument {
    pub name: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffRecord {
    pub profile: Vec<String>,
    pub payoffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticGameDocument {
    pub players: Vec<PlayerDocument>,
    /// Player indices per team.
    pub teams: Vec<Vec<usize>>,
    pub payoffs: Vec<PayoffRecord>,
}

/// A finite game in which every player maximizes its own payoff.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGame {
    pub players: Vec<PlayerDocument>,
    pub teams: Vec<Vec<usize>>,
    shape: Vec<usize>,
    /// `payoff[i][j]` for player `i` at row-major profile `j`.
    payoff: Vec<Vec<f64>>,
}

impl StaticGame {
    pub fn new(
        players: Vec<PlayerDocument>,
        teams: Vec<Vec<usize>>,
        payoff: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if players.is_empty() || players.iter().any(|p| p.actions.is_empty()) {
            return Err(Error::validation("players nonempty", "players"));
        }
        let mut seen = vec![false; players.len()];
        for (t, team) in teams.iter().enumerate() {
            for &i in team {
                if i >= players.len() || seen[i] {
                    return Err(Error::validation("team partition", format!("teams[{t}]")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::validation("team partition", "teams"));
        }
        let shape: Vec<usize> = players.iter().map(|p| p.actions.len()).collect();
        let len: usize = shape.iter().product();
        if payoff.len() != players.len() || payoff.iter().any(|p| p.len() != len) {
            return Err(Error::validation("payoff shape", "payoffs"));
        }
        Ok(StaticGame {
            players,
            teams,
            shape,
            payoff,
        })
    }

    pub fn from_document(doc: StaticGameDocument) -> Result<Self> {
        let shape: Vec<usize> = doc.players.iter().map(|p| p.actions.len()).collect();
        let len: usize = shape.iter().product();
        let mut payoff = vec![vec![f64::NAN; len]; doc.players.len()];
        for (r, rec) in doc.payoffs.iter().enumerate() {
            if rec.profile.len() != doc.players.len() || rec.payoffs.len() != doc.players.len() {
                return Err(Error::validation("payoff shape", format!("payoffs[{r}]")));
            }
            let mut j = 0;
            for (p, label) in doc.players.iter().zip(&rec.profile) {
                let a =
                    p.actions.iter().position(|x| x == label).ok_or_else(|| {
                        Error::validation("action label", format!("payoffs[{r}]"))
                    })?;
                j = j * p.actions.len() + a;
            }
            for (i, &v) in rec.payoffs.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::validation("finite value", format!("payoffs[{r}]")));
                }
                payoff[i][j] = v;
            }
        }
        if payoff.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::validation("payoff coverage", "payoffs"));
        }
        StaticGame::new(doc.players, doc.teams, payoff)
    }

    pub fn num_profiles(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn decompose(&self, mut j: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        for (i, &n) in self.shape.iter().enumerate().rev() {
            out[i] = j % n;
            j /= n;
        }
        out
    }

    pub fn index(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&a, &n)| acc * n + a)
    }

    pub fn payoff(&self, player: usize, profile: &[usize]) -> f64 {
        self.payoff[player][self.index(profile)]
    }

    pub fn labels(&self, profile: &[usize]) -> Vec<String> {
        profile
            .iter()
            .zip(&self.players)
            .map(|(&a, p)| p.actions[a].clone())
            .collect()
    }

    /// Every profile obtained by reassigning the actions of `members`.
    fn reassignments(&self, base: &[usize], members: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![base.to_vec()];
        for &i in members {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..self.shape[i]).map(move |a| {
                        let mut q = p.clone();
                        q[i] = a;
                        q
                    })
                })
                .collect();
        }
        out
    }
}

/// Three players, row and column forming one team against the matrix player.
pub const BUNDLED_TEAM_GAME: &str = include_str!("../data/three_player_team_game.json");

pub fn load_static_game(document: &str) -> Result<StaticGame> {
    let doc: StaticGameDocument = serde_json::from_str(document)?;
    StaticGame::from_document(doc)
}

/// Profiles where no single player can strictly raise its own payoff.
pub fn pure_nash_static(game: &StaticGame) -> Vec<Vec<usize>> {
    (0..game.num_profiles())
        .map(|j| game.decompose(j))
        .filter(|p| {
            (0..game.players.len()).all(|i| {
                let own = game.payoff(i, p);
                game.reassignments(p, &[i])
                    .iter()
                    .all(|q| game.payoff(i, q) <= own)
            })
        })
        .collect()
}

/// Profiles where no team has a joint reassignment of its members' actions that
/// strictly raises the sum of its members' payoffs.
pub fn team_nash_static(game: &StaticGame) -> Vec<Vec<usize>> {
    let team_payoff =
        |team: &[usize], p: &[usize]| team.iter().map(|&i| game.payoff(i, p)).sum::<f64>();
    (0..game.num_profiles())
        .map(|j| game.decompose(j))
        .filter(|p| {
            game.teams.iter().all(|team| {
                let own = team_payoff(team, p);
                game.reassignments(p, team)
                    .iter()
                    .all(|q| team_payoff(team, q) <= own)
            })
        })
        .collect()
}

/// Labelled equilibrium sets of a static game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticReport {
    pub nash: Vec<Vec<String>>,
    pub team_nash: Vec<Vec<String>>,
}

pub fn static_report(game: &StaticGame) -> StaticReport {
    StaticReport {
        nash: pure_nash_static(game)
            .iter()
            .map(|p| game.labels(p))
            .collect(),
        team_nash: team_nash_static(game)
            .iter()
            .map(|p| game.labels(p))
            .collect(),
    }
}
