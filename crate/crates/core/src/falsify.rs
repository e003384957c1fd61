//! Numerical certificates: the conditional-independence condition that an
//! earlier separation argument relies on fails, while the corrected
//! posterior passes strategy independence, conditional Markovianity, the
//! single-agent reduction and the payoff identity.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::dp::cost_via_beliefs;
use crate::error::{Error, Result};
use crate::filter::{beliefs_from_atoms, belief_update, classical_filter_update, initial_belief, Belief};
use crate::info::{view_parts, window_start, CommonInfo, InfoRealization};
use crate::model::ModelSpec;
use crate::oracle::{conditional_from_atoms, enumerate_atoms, enumerate_cost, follow, Var};
use crate::strategy::StrategyProfile;
use crate::TOL_COMPARE;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapEntry {
    pub realization: String,
    pub gap: f64,
}

/// Per-realization max-abs differences between two compared quantities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub quantity: String,
    pub gaps: Vec<GapEntry>,
    pub max_gap: f64,
    pub witness: Option<String>,
}

impl GapReport {
    pub fn new(quantity: &str) -> Self {
        GapReport { quantity: quantity.to_string(), gaps: Vec::new(), max_gap: 0.0, witness: None }
    }

    pub fn push(&mut self, realization: String, gap: f64) {
        if self.witness.is_none() || gap > self.max_gap {
            self.max_gap = gap;
            self.witness = Some(realization.clone());
        }
        self.gaps.push(GapEntry { realization, gap });
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_gap <= tol
    }
}

fn pmf_gap(a: &BTreeMap<Vec<usize>, f64>, b: &BTreeMap<Vec<usize>, f64>) -> f64 {
    let keys: BTreeSet<&Vec<usize>> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|key| (a.get(key).unwrap_or(&0.0) - b.get(key).unwrap_or(&0.0)).abs())
        .fold(0.0, f64::max)
}

/// Compares `p(Y_s^{-k}, U_s^{-k} | x_t, δ_t, λ_t^k)` with
/// `p(Y_s^{-k}, U_s^{-k} | δ_t, λ_t^k)`, `s = t - n + 1`, over every
/// positive-probability `(x_t, δ_t, λ_t^k)`.
pub fn check_conditional_independence(spec: &ModelSpec, profile: &StrategyProfile, agent: usize, t: usize) -> Result<GapReport> {
    let n = spec.delay;
    if t + 1 < n || t + 1 - n >= spec.horizon || t > spec.horizon {
        return Err(Error::Precondition(format!("need n-1 <= t and t-n+1 < T (t={t}, n={n})")));
    }
    let s = t + 1 - n;
    let target: Vec<Var> = (0..spec.agents)
        .filter(|&j| j != agent)
        .flat_map(|j| [Var::Obs(j, s), Var::Act(j, s)])
        .collect();
    let horizon = t.max(s + 1);
    let atoms = enumerate_atoms(spec, horizon, follow(spec, profile))?;
    let mut views: BTreeMap<InfoRealization, BTreeSet<usize>> = BTreeMap::new();
    for atom in &atoms {
        views.entry(atom.view(t, agent, n)).or_default().insert(atom.states[t]);
    }
    let mut report = GapReport::new("conditional independence of other agents' recent data from the state");
    for (info, states) in views {
        let given = crate::oracle::info_events(&info, n);
        let without = conditional_from_atoms(&atoms, &target, &given)?;
        for x in states {
            let mut with_x = given.clone();
            with_x.push((Var::State(t), x));
            let cond = match conditional_from_atoms(&atoms, &target, &with_x) {
                Ok(c) => c,
                Err(Error::UnreachableEvent) => continue,
                Err(e) => return Err(e),
            };
            report.push(format!("{};x={x}", info.key()), pmf_gap(&cond, &without));
        }
    }
    Ok(report)
}

/// Beliefs conditioned on atom masses with every agent following `profile`.
fn profile_beliefs(spec: &ModelSpec, profile: &StrategyProfile, agent: usize, t: usize) -> Result<BTreeMap<InfoRealization, Belief>> {
    let atoms = enumerate_atoms(spec, t, follow(spec, profile))?;
    Ok(beliefs_from_atoms(spec, agent, t, &atoms))
}

/// Posteriors under two profiles that differ only in agent `k`'s table,
/// compared on every realization reachable under both, `t = 0..=T`.
pub fn check_policy_independence(spec: &ModelSpec, a: &StrategyProfile, b: &StrategyProfile, agent: usize) -> Result<GapReport> {
    if (0..spec.agents).any(|j| j != agent && a.agents[j] != b.agents[j]) {
        return Err(Error::Precondition("profiles differ outside the checked agent".into()));
    }
    let mut report = GapReport::new("posterior independence of the agent's own strategy");
    for t in 0..=spec.horizon {
        let under_a = profile_beliefs(spec, a, agent, t)?;
        let under_b = profile_beliefs(spec, b, agent, t)?;
        for (info, xa) in &under_a {
            if let Some(xb) = under_b.get(info) {
                report.push(info.key(), xa.max_abs_diff(xb));
            }
        }
    }
    Ok(report)
}

/// Greedy clustering of beliefs within `tol`; returns a cluster id per input.
fn cluster(beliefs: &[&Belief], tol: f64) -> Vec<usize> {
    let mut reps: Vec<&Belief> = Vec::new();
    beliefs
        .iter()
        .map(|b| match reps.iter().position(|r| r.max_abs_diff(b) <= tol) {
            Some(i) => i,
            None => {
                reps.push(b);
                reps.len() - 1
            }
        })
        .collect()
}

/// Checks that the law of `Ξ_{t+1}^k` given the full past depends on the
/// past only through `(Ξ_t^k, Δ_t, U_t^k)`, for `t = 0..T-1`.
pub fn check_conditional_markov(spec: &ModelSpec, profile: &StrategyProfile, agent: usize) -> Result<GapReport> {
    let n = spec.delay;
    let mut report = GapReport::new("conditional Markov property of the private posterior");
    for t in 0..spec.horizon {
        let atoms = enumerate_atoms(spec, t + 1, follow(spec, profile))?;
        let now = beliefs_from_atoms(spec, agent, t, &atoms);
        let next = beliefs_from_atoms(spec, agent, t + 1, &atoms);
        // past I_t^k -> (next realization -> mass)
        let mut law: BTreeMap<InfoRealization, BTreeMap<InfoRealization, f64>> = BTreeMap::new();
        for atom in &atoms {
            *law.entry(atom.view(t, agent, n))
                .or_default()
                .entry(atom.view(t + 1, agent, n))
                .or_insert(0.0) += atom.mass;
        }
        let mut by_key: BTreeMap<(CommonInfo, usize), Vec<&InfoRealization>> = BTreeMap::new();
        for info in now.keys() {
            let u = profile.action(agent, info)?;
            by_key.entry((info.common.clone(), u)).or_default().push(info);
        }
        for ((_, u), members) in by_key {
            let beliefs: Vec<&Belief> = members.iter().map(|i| &now[*i]).collect();
            let groups = cluster(&beliefs, TOL_COMPARE);
            for g in 0..=groups.iter().copied().max().unwrap_or(0) {
                let pasts: Vec<&InfoRealization> =
                    members.iter().zip(&groups).filter(|(_, &c)| c == g).map(|(m, _)| *m).collect();
                if pasts.is_empty() {
                    continue;
                }
                // distributions over clustered next beliefs, one per past
                let mut flat: Vec<(usize, &Belief, f64)> = Vec::new();
                for (p, past) in pasts.iter().enumerate() {
                    let total: f64 = law[*past].values().sum();
                    for (info, mass) in &law[*past] {
                        flat.push((p, &next[info], mass / total));
                    }
                }
                let ids = cluster(&flat.iter().map(|f| f.1).collect::<Vec<_>>(), TOL_COMPARE);
                let width = ids.iter().copied().max().map_or(0, |m| m + 1);
                let mut dists = vec![vec![0.0; width]; pasts.len()];
                for ((p, _, prob), id) in flat.iter().zip(&ids) {
                    dists[*p][*id] += prob;
                }
                let mut gap: f64 = 0.0;
                for a in &dists {
                    for b in &dists {
                        for (x, y) in a.iter().zip(b) {
                            gap = gap.max((x - y).abs());
                        }
                    }
                }
                let label = format!(
                    "t={t};u={u};pasts={}",
                    pasts.iter().map(|p| p.key()).collect::<Vec<_>>().join("|")
                );
                report.push(label, gap);
            }
        }
    }
    Ok(report)
}

/// Single-agent reduction: along every history, the chained posterior's
/// state marginal against the classical nonlinear filter.
pub fn check_k1_reduction(spec: &ModelSpec) -> Result<GapReport> {
    if spec.agents != 1 {
        return Err(Error::Precondition("reduction check needs K = 1".into()));
    }
    let mut report = GapReport::new("single-agent reduction to the classical filter");
    let profile = StrategyProfile::constant(spec, 0);
    for y0 in 0..spec.obs_sizes[0] {
        if spec.initial_obs_marginal(0, y0) <= 0.0 {
            continue;
        }
        let xi = initial_belief(spec, 0, y0)?;
        let pi: Vec<f64> = (0..spec.state_size)
            .map(|x| spec.init_dist[x] * spec.obs_prob(0, 0, x, y0))
            .collect();
        let z: f64 = pi.iter().sum();
        let pi: Vec<f64> = pi.iter().map(|p| p / z).collect();
        let info = InfoRealization::initial(1, 0, y0);
        walk_k1(spec, &profile, info, xi, pi, &mut report)?;
    }
    Ok(report)
}

fn walk_k1(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    info: InfoRealization,
    xi: Belief,
    pi: Vec<f64>,
    report: &mut GapReport,
) -> Result<()> {
    let gap = xi
        .x_marginal()
        .iter()
        .zip(&pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.push(info.key(), gap);
    let t = info.t();
    if t == spec.horizon {
        return Ok(());
    }
    let n = spec.delay;
    for u in 0..spec.act_sizes[0] {
        for y in 0..spec.obs_sizes[0] {
            let Ok(next_pi) = classical_filter_update(spec, t, &pi, u, y) else { continue };
            let (private, promoted) = info.private.shift(u, y, n);
            let mut common = info.common.clone();
            common.t = t + 1;
            if let Some(p) = promoted {
                common.obs[0].push(p.obs);
                common.acts[0].push(p.act);
            }
            debug_assert_eq!(common.obs[0].len(), window_start(t + 1, n));
            let next_xi = belief_update(spec, &xi, &common, profile, u, y)?;
            walk_k1(spec, profile, InfoRealization { common, private }, next_xi, next_pi, report)?;
        }
    }
    Ok(())
}

/// `|J_T` via agent `k`'s beliefs `- J_T` by enumeration`|` for each `k`.
pub fn check_payoff_identity(spec: &ModelSpec, profile: &StrategyProfile) -> Result<GapReport> {
    let direct = enumerate_cost(spec, profile)?;
    let mut report = GapReport::new("payoff identity through private posteriors");
    for k in 0..spec.agents {
        let via = cost_via_beliefs(spec, profile, k)?;
        report.push(format!("agent={k}"), (via - direct).abs());
    }
    Ok(report)
}

/// Views of `agent` reachable when every agent follows `profile`.
pub fn reachable_under(spec: &ModelSpec, profile: &StrategyProfile, agent: usize, t: usize) -> Result<Vec<InfoRealization>> {
    let atoms = enumerate_atoms(spec, t, follow(spec, profile))?;
    let set: BTreeSet<InfoRealization> =
        atoms.iter().map(|a| view_parts(&a.obs, &a.acts, t, agent, spec.delay)).collect();
    Ok(set.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_instance;

    #[test]
    fn report_tracks_maximum() {
        let mut r = GapReport::new("q");
        r.push("a".into(), 0.0);
        r.push("b".into(), 0.5);
        r.push("c".into(), 0.2);
        assert_eq!(r.max_gap, 0.5);
        assert_eq!(r.witness.as_deref(), Some("b"));
    }

    #[test]
    fn singleton_state_has_no_dependence() {
        let mut spec = crate::model::random_model(
            8,
            crate::model::RandomShape { agents: 2, delay: 1, horizon: 2, state_size: 1, obs_size: 2, act_size: 2 },
        );
        spec.init_dist = vec![1.0];
        let g = StrategyProfile::random(&spec, 1).unwrap();
        let r = check_conditional_independence(&spec, &g, 0, 1).unwrap();
        assert_eq!(r.max_gap, 0.0);
    }

    #[test]
    fn single_stage_markov_check_is_tiny() {
        let mut spec = canonical_instance("CANON-2A").unwrap();
        spec.horizon = 1;
        spec.transition.truncate(1);
        spec.stage_cost.truncate(1);
        spec.observation.truncate(2);
        let r = check_conditional_markov(&spec, &StrategyProfile::constant(&spec, 0), 0).unwrap();
        assert!(r.max_gap <= 1e-10);
    }

    #[test]
    fn perfect_observation_k1() {
        let mut spec = canonical_instance("CANON-1").unwrap();
        for per_t in &mut spec.observation {
            per_t[0] = vec![1.0, 0.0, 0.0, 1.0];
        }
        let r = check_k1_reduction(&spec).unwrap();
        assert!(r.max_gap <= 1e-12);
    }
}
