//! Ground truth by exhaustive trajectory enumeration.
//!
//! Nothing here touches beliefs or dynamic programming: every quantity is a
//! sum of path masses `P(x_0) ∏ Q(y|x) ∏ S(x'|x,u)` over the atoms that a
//! strategy profile makes reachable.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::{view_parts, InfoRealization, JointHistory};
use crate::model::ModelSpec;
use crate::strategy::{AgentStrategy, StrategyProfile};
use crate::TOL_COMPARE;

/// How an agent acts at a node of the enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Fixed(usize),
    /// Branch over every action with weight one.
    All,
}

/// One sample path up to a horizon `H`: states and observations `0..=H`,
/// actions `0..H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub states: Vec<usize>,
    pub obs: Vec<Vec<usize>>,
    pub acts: Vec<Vec<usize>>,
    pub mass: f64,
}

impl Atom {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn view(&self, t: usize, agent: usize, delay: usize) -> InfoRealization {
        view_parts(&self.obs, &self.acts, t, agent, delay)
    }

    pub fn value(&self, var: Var) -> usize {
        match var {
            Var::State(t) => self.states[t],
            Var::Obs(j, t) => self.obs[j][t],
            Var::Act(j, t) => self.acts[j][t],
        }
    }

    /// Realized cost from time `from` on: stage costs `from..T` plus terminal.
    pub fn cost_from(&self, spec: &ModelSpec, from: usize) -> f64 {
        debug_assert_eq!(self.horizon(), spec.horizon);
        let mut joint = vec![0; spec.agents];
        let mut total = 0.0;
        for t in from..spec.horizon {
            for (j, u) in joint.iter_mut().enumerate() {
                *u = self.acts[j][t];
            }
            total += spec.cost(t, self.states[t], spec.joint_index(&joint));
        }
        total + spec.terminal(self.states[spec.horizon])
    }
}

/// Depth-first expansion of all positive-mass paths up to `horizon`.
///
/// `rule(agent, t, history)` is consulted once per agent per node, with the
/// joint history at `t` (observations through `t`, actions through `t - 1`).
pub fn enumerate_atoms<F>(spec: &ModelSpec, horizon: usize, mut rule: F) -> Result<Vec<Atom>>
where
    F: FnMut(usize, usize, &JointHistory) -> Result<Choice>,
{
    if horizon > spec.horizon {
        return Err(Error::Precondition(format!(
            "enumeration horizon {horizon} exceeds model horizon {}",
            spec.horizon
        )));
    }
    let mut out = Vec::new();
    let mut hist = JointHistory {
        t: 0,
        obs: vec![Vec::new(); spec.agents],
        acts: vec![Vec::new(); spec.agents],
    };
    let mut states = Vec::with_capacity(horizon + 1);
    for x0 in 0..spec.state_size {
        let p = spec.init_dist[x0];
        if p > 0.0 {
            states.push(x0);
            observe(spec, horizon, &mut rule, &mut states, &mut hist, p, 0, &mut out)?;
            states.pop();
        }
    }
    Ok(out)
}

/// Branches over the joint observation at the current time.
#[allow(clippy::too_many_arguments)]
fn observe<F>(
    spec: &ModelSpec,
    horizon: usize,
    rule: &mut F,
    states: &mut Vec<usize>,
    hist: &mut JointHistory,
    mass: f64,
    agent: usize,
    out: &mut Vec<Atom>,
) -> Result<()>
where
    F: FnMut(usize, usize, &JointHistory) -> Result<Choice>,
{
    let t = states.len() - 1;
    if agent == spec.agents {
        hist.t = t;
        return if t == horizon {
            out.push(Atom {
                states: states.clone(),
                obs: hist.obs.clone(),
                acts: hist.acts.clone(),
                mass,
            });
            Ok(())
        } else {
            act(spec, horizon, rule, states, hist, mass, out)
        };
    }
    let x = states[t];
    for y in 0..spec.obs_sizes[agent] {
        let q = spec.obs_prob(t, agent, x, y);
        if q > 0.0 {
            hist.obs[agent].push(y);
            observe(spec, horizon, rule, states, hist, mass * q, agent + 1, out)?;
            hist.obs[agent].pop();
        }
    }
    Ok(())
}

/// Branches over the joint action and the next state.
fn act<F>(
    spec: &ModelSpec,
    horizon: usize,
    rule: &mut F,
    states: &mut Vec<usize>,
    hist: &mut JointHistory,
    mass: f64,
    out: &mut Vec<Atom>,
) -> Result<()>
where
    F: FnMut(usize, usize, &JointHistory) -> Result<Choice>,
{
    let t = states.len() - 1;
    let choices = (0..spec.agents)
        .map(|j| {
            Ok(match rule(j, t, hist)? {
                Choice::Fixed(u) => vec![u],
                Choice::All => (0..spec.act_sizes[j]).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut joint = vec![0; spec.agents];
    let mut counters = vec![0; spec.agents];
    loop {
        for j in 0..spec.agents {
            joint[j] = choices[j][counters[j]];
            hist.acts[j].push(joint[j]);
        }
        let ju = spec.joint_index(&joint);
        let x = states[t];
        for x_next in 0..spec.state_size {
            let p = spec.trans(t, x, ju, x_next);
            if p > 0.0 {
                states.push(x_next);
                observe(spec, horizon, rule, states, hist, mass * p, 0, out)?;
                states.pop();
            }
        }
        for a in hist.acts.iter_mut() {
            a.pop();
        }
        hist.t = t;
        // odometer over the per-agent choice lists
        let mut j = spec.agents;
        loop {
            if j == 0 {
                return Ok(());
            }
            j -= 1;
            counters[j] += 1;
            if counters[j] < choices[j].len() {
                break;
            }
            counters[j] = 0;
        }
    }
}

/// Rule in which every agent follows `profile`.
pub fn follow<'a>(
    spec: &'a ModelSpec,
    profile: &'a StrategyProfile,
) -> impl FnMut(usize, usize, &JointHistory) -> Result<Choice> + 'a {
    move |j, t, h| {
        let view = view_parts(&h.obs, &h.acts, t, j, spec.delay);
        profile.action(j, &view).map(Choice::Fixed)
    }
}

/// A random variable of the path measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Var {
    State(usize),
    /// `(agent, t)`
    Obs(usize, usize),
    /// `(agent, t)`
    Act(usize, usize),
}

impl Var {
    /// Smallest atom horizon at which the variable exists.
    fn horizon(self) -> usize {
        match self {
            Var::State(t) | Var::Obs(_, t) => t,
            Var::Act(_, t) => t + 1,
        }
    }
}

/// The events `{Δ_t = δ, Λ_t^k = λ}` as variable assignments.
pub fn info_events(info: &InfoRealization, delay: usize) -> Vec<(Var, usize)> {
    let t = info.t();
    let start = crate::info::window_start(t, delay);
    let mut out = Vec::new();
    for (j, (o, a)) in info.common.obs.iter().zip(&info.common.acts).enumerate() {
        out.extend(o.iter().enumerate().map(|(s, &y)| (Var::Obs(j, s), y)));
        out.extend(a.iter().enumerate().map(|(s, &u)| (Var::Act(j, s), u)));
    }
    let k = info.agent();
    out.extend(info.private.obs.iter().enumerate().map(|(i, &y)| (Var::Obs(k, start + i), y)));
    out.extend(info.private.acts.iter().enumerate().map(|(i, &u)| (Var::Act(k, start + i), u)));
    out
}

/// Conditional probability table keyed by the target values, in target order.
pub type PmfTable = BTreeMap<Vec<usize>, f64>;

/// Exact `P(target | given)` under `profile`.
pub fn conditional_pmf(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    target: &[Var],
    given: &[(Var, usize)],
) -> Result<PmfTable> {
    let horizon = target
        .iter()
        .chain(given.iter().map(|(v, _)| v))
        .map(|v| v.horizon())
        .max()
        .unwrap_or(0);
    if horizon > spec.horizon {
        return Err(Error::Precondition("variable beyond the horizon".into()));
    }
    let atoms = enumerate_atoms(spec, horizon, follow(spec, profile))?;
    conditional_from_atoms(&atoms, target, given)
}

/// [`conditional_pmf`] over an already enumerated atom set.
pub fn conditional_from_atoms(atoms: &[Atom], target: &[Var], given: &[(Var, usize)]) -> Result<PmfTable> {
    let mut table = PmfTable::new();
    let mut total = 0.0;
    for atom in atoms {
        if given.iter().all(|&(v, val)| atom.value(v) == val) {
            total += atom.mass;
            let key = target.iter().map(|&v| atom.value(v)).collect();
            *table.entry(key).or_insert(0.0) += atom.mass;
        }
    }
    if total <= 0.0 {
        return Err(Error::UnreachableEvent);
    }
    table.values_mut().for_each(|p| *p /= total);
    Ok(table)
}

/// `J_T(g)` by definition: the path-mass-weighted realized cost.
pub fn enumerate_cost(spec: &ModelSpec, profile: &StrategyProfile) -> Result<f64> {
    let atoms = enumerate_atoms(spec, spec.horizon, follow(spec, profile))?;
    Ok(atoms.iter().map(|a| a.mass * a.cost_from(spec, 0)).sum())
}

/// Upper bound on the number of candidate strategies brute force may visit.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

/// Best response of `agent` to the other agents' strategies in `profile`,
/// without dynamic programming.
///
/// Stages `0..T-1` are enumerated exhaustively (each stage's domain is what
/// the earlier choices make reachable). The last stage is optimized
/// pointwise, which rests on one lemma:
///
/// *Additivity.* Fix every entry of agent `k`'s strategy except the
/// last-stage table. Each path passes through exactly one last-stage
/// realization `r`, and entry `r` only affects the cost of paths through
/// `r`, so `J = A + Σ_r C_r(u_r)` with `A` independent of the table. Hence
/// minimizing each `C_r` separately minimizes `J`, and `C_r(u) - C_r(u')`
/// equals the difference of `J` between two tables that differ only at `r`.
pub fn brute_force_best_response(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    agent: usize,
) -> Result<(f64, AgentStrategy)> {
    if spec.horizon == 0 {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    let mut budget = 1u128;
    search_stage(spec, profile, agent, AgentStrategy::empty(spec.horizon), 0, &mut budget)
}

fn search_stage(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    agent: usize,
    partial: AgentStrategy,
    stage: usize,
    budget: &mut u128,
) -> Result<(f64, AgentStrategy)> {
    let domain = stage_domain(spec, profile, agent, &partial, stage)?;
    let na = spec.act_sizes[agent];
    if stage + 1 == spec.horizon {
        return optimize_last_stage(spec, profile, agent, partial, &domain);
    }
    let count = (na as u128).checked_pow(domain.len() as u32).unwrap_or(u128::MAX);
    *budget = budget.saturating_mul(count);
    if *budget > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!(
            "{} candidate strategies at stage {stage} for agent {agent}",
            *budget
        )));
    }
    let mut best: Option<(f64, AgentStrategy)> = None;
    let mut digits = vec![0usize; domain.len()];
    loop {
        let mut candidate = partial.clone();
        for (info, &a) in domain.iter().zip(&digits) {
            candidate.set(info.clone(), a);
        }
        let (value, strategy) = search_stage(spec, profile, agent, candidate, stage + 1, budget)?;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, strategy));
        }
        // next map, last realization fastest
        let mut i = digits.len();
        loop {
            if i == 0 {
                return Ok(best.expect("at least one candidate"));
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < na {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Realizations of `agent` at `stage` reachable when it plays `partial`
/// before `stage`.
fn stage_domain(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    agent: usize,
    partial: &AgentStrategy,
    stage: usize,
) -> Result<Vec<InfoRealization>> {
    let trial = profile.with_agent(agent, partial.clone());
    let atoms = enumerate_atoms(spec, stage, follow(spec, &trial))?;
    let set: BTreeSet<InfoRealization> = atoms
        .iter()
        .filter(|a| a.mass > 0.0)
        .map(|a| a.view(stage, agent, spec.delay))
        .collect();
    Ok(set.into_iter().collect())
}

fn optimize_last_stage(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    agent: usize,
    partial: AgentStrategy,
    domain: &[InfoRealization],
) -> Result<(f64, AgentStrategy)> {
    // C_r(u) from one enumeration: agent k branches over every last-stage
    // action with weight one, so each (r, u) slice is the cost of that entry.
    let last = spec.horizon - 1;
    let trial = profile.with_agent(agent, partial.clone());
    let na = spec.act_sizes[agent];
    let atoms = enumerate_atoms(spec, spec.horizon, |j, s, h| {
        if j == agent && s == last {
            return Ok(Choice::All);
        }
        let view = view_parts(&h.obs, &h.acts, s, j, spec.delay);
        trial.action(j, &view).map(Choice::Fixed)
    })?;
    let mut slices: BTreeMap<InfoRealization, Vec<f64>> =
        domain.iter().map(|info| (info.clone(), vec![0.0; na])).collect();
    for atom in &atoms {
        if let Some(c) = slices.get_mut(&atom.view(last, agent, spec.delay)) {
            c[atom.acts[agent][last]] += atom.mass * atom.cost_from(spec, 0);
        }
    }
    let mut chosen = partial;
    for (info, costs) in slices {
        let mut best = (f64::INFINITY, 0);
        for (u, &c) in costs.iter().enumerate() {
            if c < best.0 - TOL_COMPARE * 1e-2 {
                best = (c, u);
            }
        }
        chosen.set(info, best.1);
    }
    let value = enumerate_cost(spec, &profile.with_agent(agent, chosen.clone()))?;
    Ok((value, chosen))
}

#[derive(Clone, Debug, Serialize)]
pub struct AgentStationarity {
    pub agent: usize,
    pub cost: f64,
    pub best_response_value: f64,
    pub gap: f64,
    pub stationary: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PbpCertificate {
    pub agents: Vec<AgentStationarity>,
    pub certified: bool,
}

/// Checks that no agent can lower `J_T` by a unilateral deviation.
pub fn verify_pbp(spec: &ModelSpec, profile: &StrategyProfile) -> Result<PbpCertificate> {
    verify_pbp_with_tolerance(spec, profile, TOL_COMPARE)
}

pub fn verify_pbp_with_tolerance(spec: &ModelSpec, profile: &StrategyProfile, tol: f64) -> Result<PbpCertificate> {
    let cost = enumerate_cost(spec, profile)?;
    let mut agents = Vec::with_capacity(spec.agents);
    for k in 0..spec.agents {
        let (value, _) = brute_force_best_response(spec, profile, k)?;
        let gap = cost - value;
        agents.push(AgentStationarity { agent: k, cost, best_response_value: value, gap, stationary: gap <= tol });
    }
    let certified = agents.iter().all(|a| a.stationary);
    Ok(PbpCertificate { agents, certified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_instance;

    fn zero_costs(mut spec: ModelSpec) -> ModelSpec {
        spec.stage_cost.iter_mut().flatten().for_each(|c| *c = 0.0);
        spec.terminal_cost.iter_mut().for_each(|c| *c = 0.0);
        spec
    }

    #[test]
    fn atom_masses_sum_to_one() {
        for name in crate::model::CANONICAL_NAMES {
            let spec = canonical_instance(name).unwrap();
            let g = StrategyProfile::random(&spec, 1).unwrap();
            let atoms = enumerate_atoms(&spec, spec.horizon, follow(&spec, &g)).unwrap();
            let total: f64 = atoms.iter().map(|a| a.mass).sum();
            assert!((total - 1.0).abs() < 1e-10, "{name}: {total}");
        }
    }

    #[test]
    fn kernel_readback() {
        let spec = canonical_instance("CANON-2A").unwrap();
        let g = StrategyProfile::constant(&spec, 0);
        let prior = conditional_pmf(&spec, &g, &[Var::State(0)], &[]).unwrap();
        assert!((prior[&vec![0]] - 0.6).abs() < 1e-15);
        let q = conditional_pmf(&spec, &g, &[Var::Obs(1, 0)], &[(Var::State(0), 1)]).unwrap();
        assert!((q[&vec![1]] - 0.8).abs() < 1e-12);
        assert!(matches!(
            conditional_pmf(&spec, &g, &[Var::State(0)], &[(Var::Act(0, 0), 1)]),
            Err(Error::UnreachableEvent)
        ));
    }

    #[test]
    fn marginal_consistency() {
        let spec = canonical_instance("CANON-2B").unwrap();
        let g = StrategyProfile::random(&spec, 5).unwrap();
        let given = [(Var::Obs(0, 0), 1), (Var::Obs(0, 1), 0)];
        let joint = conditional_pmf(&spec, &g, &[Var::State(1), Var::Obs(1, 1)], &given).unwrap();
        let single = conditional_pmf(&spec, &g, &[Var::State(1)], &given).unwrap();
        for x in 0..2 {
            let summed: f64 = joint.iter().filter(|(k, _)| k[0] == x).map(|(_, p)| p).sum();
            assert!((summed - single[&vec![x]]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_model_cost() {
        let mut spec = canonical_instance("CANON-1").unwrap();
        spec.init_dist = vec![1.0, 0.0];
        for t in 0..spec.horizon {
            // x' = u regardless of x
            spec.transition[t] = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        }
        for per_t in &mut spec.observation {
            per_t[0] = vec![1.0, 0.0, 0.0, 1.0];
        }
        let g = StrategyProfile::constant(&spec, 1);
        // path 0 -> 1 -> 1 -> 1: c(0,1) + c(1,1) + c(1,1) + c_T(1)
        let expected = 0.5 + 0.6 + 0.6 + 1.0;
        assert!((enumerate_cost(&spec, &g).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_cost_brute_force() {
        let spec = zero_costs(canonical_instance("CANON-2A").unwrap());
        let g = StrategyProfile::constant(&spec, 1);
        let (v, s) = brute_force_best_response(&spec, &g, 0).unwrap();
        assert_eq!(v, 0.0);
        assert!(s.stages.iter().flat_map(|m| m.values()).all(|&a| a == 0));
        assert!(verify_pbp(&spec, &g).unwrap().certified);
    }

    #[test]
    fn brute_force_is_a_lower_bound() {
        let spec = canonical_instance("CANON-2A").unwrap();
        for seed in 0..4 {
            let g = StrategyProfile::random(&spec, seed).unwrap();
            for k in 0..2 {
                let (v, s) = brute_force_best_response(&spec, &g, k).unwrap();
                assert!(v <= enumerate_cost(&spec, &g).unwrap() + 1e-12);
                let achieved = enumerate_cost(&spec, &g.with_agent(k, s)).unwrap();
                assert!((achieved - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_stage_matches_plain_enumeration() {
        let mut spec = canonical_instance("CANON-2A").unwrap();
        spec.horizon = 1;
        spec.transition.truncate(1);
        spec.stage_cost.truncate(1);
        spec.observation.truncate(2);
        let g = StrategyProfile::constant(&spec, 0);
        let (v, _) = brute_force_best_response(&spec, &g, 1).unwrap();
        let mut best = f64::INFINITY;
        for a0 in 0..2 {
            for a1 in 0..2 {
                let mut s = AgentStrategy::empty(1);
                s.set(InfoRealization::initial(2, 1, 0), a0);
                s.set(InfoRealization::initial(2, 1, 1), a1);
                best = best.min(enumerate_cost(&spec, &g.with_agent(1, s)).unwrap());
            }
        }
        assert!((v - best).abs() < 1e-15);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let spec = crate::model::random_model(
            2,
            crate::model::RandomShape { agents: 1, delay: 1, horizon: 4, state_size: 2, obs_size: 3, act_size: 3 },
        );
        let g = StrategyProfile::constant(&spec, 0);
        assert!(matches!(brute_force_best_response(&spec, &g, 0), Err(Error::TooLarge(_))));
    }
}
