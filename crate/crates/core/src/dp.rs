//! Person-by-person dynamic programming over agent `k`'s realizations.
//!
//! Under fixed `g^{-k}` the private posterior is a function of the
//! realization `(δ_t, λ_t^k)`, so values are tabulated over realizations
//! with the belief stored next to each entry.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::filter::{children, initial_realizations, other_actions, Belief, Child};
use crate::info::{view_parts, InfoRealization};
use crate::model::ModelSpec;
use crate::oracle::{enumerate_atoms, enumerate_cost, Choice};
use crate::strategy::{AgentStrategy, StrategyProfile};
use crate::{TOL_COMPARE, TOL_IMPROVE};

#[derive(Clone, Debug, Serialize)]
pub struct ValueRecord {
    pub value: f64,
    pub belief: Belief,
    /// Absent at `t = T`.
    pub best_action: Option<usize>,
}

/// `V_t(ξ_t^k, δ_t, λ_t^k)` for every reachable realization, `t = 0..=T`.
#[derive(Clone, Debug)]
pub struct ValueTable {
    pub agent: usize,
    pub stages: Vec<BTreeMap<InfoRealization, ValueRecord>>,
    /// `P(y_0^k)` for each initial realization.
    pub initial_probs: BTreeMap<InfoRealization, f64>,
}

impl ValueTable {
    /// Value at `t = 0` averaged over the initial realizations.
    pub fn initial_value(&self) -> f64 {
        self.initial_probs.iter().map(|(info, p)| p * self.stages[0][info].value).sum()
    }

    pub fn len(&self) -> usize {
        self.stages.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The extracted best response as a strategy table.
    pub fn strategy(&self) -> AgentStrategy {
        let horizon = self.stages.len() - 1;
        let mut out = AgentStrategy::empty(horizon);
        for stage in &self.stages[..horizon] {
            for (info, rec) in stage {
                out.set(info.clone(), rec.best_action.expect("decision stage"));
            }
        }
        out
    }
}

/// `Σ_{x,λ} c_t(x, u^k, g_t^{-k}(δ_t, λ)) ξ(x, λ)`.
fn expected_stage_cost(
    spec: &ModelSpec,
    info: &InfoRealization,
    xi: &Belief,
    profile: &StrategyProfile,
    u_k: usize,
) -> Result<f64> {
    let k = info.agent();
    let mut total = 0.0;
    for (x, lam, p) in xi.support() {
        let mut joint = other_actions(profile, &info.common, &lam)?;
        joint.insert(k, u_k);
        total += p * spec.cost(info.t(), x, spec.joint_index(&joint));
    }
    Ok(total)
}

struct Node {
    belief: Belief,
    /// Per action, the successors.
    branches: Vec<Vec<Child>>,
}

/// Best response of `agent` to the other agents in `profile`.
///
/// Builds the reachable realization tree forward with [`children`], then
/// minimizes backward; ties go to the smallest action index.
pub fn solve_best_response(spec: &ModelSpec, agent: usize, profile: &StrategyProfile) -> Result<(ValueTable, AgentStrategy)> {
    let horizon = spec.horizon;
    let mut levels: Vec<BTreeMap<InfoRealization, Node>> = Vec::with_capacity(horizon + 1);
    let mut initial_probs = BTreeMap::new();
    let mut first = BTreeMap::new();
    for (info, belief, p) in initial_realizations(spec, agent)? {
        initial_probs.insert(info.clone(), p);
        first.insert(info, Node { belief, branches: Vec::new() });
    }
    levels.push(first);
    for t in 0..horizon {
        let mut next = BTreeMap::new();
        for (info, node) in levels[t].iter_mut() {
            for u in 0..spec.act_sizes[agent] {
                let kids = children(spec, info, &node.belief, profile, u)?;
                for c in &kids {
                    next.insert(c.info.clone(), Node { belief: c.belief.clone(), branches: Vec::new() });
                }
                node.branches.push(kids);
            }
        }
        levels.push(next);
    }

    let mut stages: Vec<BTreeMap<InfoRealization, ValueRecord>> = vec![BTreeMap::new(); horizon + 1];
    for (t, level) in levels.into_iter().enumerate().rev() {
        for (info, node) in level {
            let record = if t == horizon {
                ValueRecord { value: node.belief.terminal_value(spec), belief: node.belief, best_action: None }
            } else {
                let mut best = (f64::INFINITY, 0);
                for (u, kids) in node.branches.iter().enumerate() {
                    let cont: f64 = kids.iter().map(|c| c.prob * stages[t + 1][&c.info].value).sum();
                    let q = expected_stage_cost(spec, &info, &node.belief, profile, u)? + cont;
                    if q < best.0 {
                        best = (q, u);
                    }
                }
                ValueRecord { value: best.0, belief: node.belief, best_action: Some(best.1) }
            };
            stages[t].insert(info, record);
        }
    }
    let table = ValueTable { agent, stages, initial_probs };
    let strategy = table.strategy();
    Ok((table, strategy))
}

/// `J_T(g)` through agent `k`'s beliefs: the probability-weighted sum of
/// belief expectations of stage and terminal costs along the realizations
/// `g` actually reaches.
pub fn cost_via_beliefs(spec: &ModelSpec, profile: &StrategyProfile, agent: usize) -> Result<f64> {
    let mut frontier: Vec<(InfoRealization, Belief, f64)> = initial_realizations(spec, agent)?;
    let mut total = 0.0;
    for _ in 0..spec.horizon {
        let mut next = Vec::new();
        for (info, xi, p) in frontier {
            let u = profile.action(agent, &info)?;
            total += p * expected_stage_cost(spec, &info, &xi, profile, u)?;
            for c in children(spec, &info, &xi, profile, u)? {
                next.push((c.info, c.belief, p * c.prob));
            }
        }
        frontier = next;
    }
    total += frontier.iter().map(|(_, xi, p)| p * xi.terminal_value(spec)).sum::<f64>();
    Ok(total)
}

/// Outcome of a best-response sweep.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub profile: StrategyProfile,
    /// `J_T` of the initial profile, then after each agent's turn.
    pub trace: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
}

/// Repeated best responses `k = 0..K-1` until a full round yields no
/// decrease larger than the default improvement threshold.
pub fn pbp_sweep(spec: &ModelSpec, init: &StrategyProfile, max_rounds: usize) -> Result<SweepResult> {
    pbp_sweep_with_tolerance(spec, init, max_rounds, TOL_IMPROVE)
}

/// [`pbp_sweep`] with an explicit improvement threshold.
///
/// An agent's table is replaced only on strict improvement, so a round
/// without replacements leaves every agent at a best response.
pub fn pbp_sweep_with_tolerance(
    spec: &ModelSpec,
    init: &StrategyProfile,
    max_rounds: usize,
    tol_improve: f64,
) -> Result<SweepResult> {
    let mut profile = init.clone();
    let mut current = enumerate_cost(spec, &profile)?;
    let mut trace = vec![current];
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        let mut improved = false;
        for k in 0..spec.agents {
            let (table, best) = solve_best_response(spec, k, &profile)?;
            if table.initial_value() < current - tol_improve {
                profile.agents[k] = profile.agents[k].merged(&best);
                current = enumerate_cost(spec, &profile)?;
                improved = true;
            }
            trace.push(current);
        }
        if !improved {
            converged = true;
            break;
        }
    }
    Ok(SweepResult { profile, trace, rounds, converged })
}

#[derive(Clone, Debug, Serialize)]
pub struct DominanceViolation {
    pub t: usize,
    pub realization: String,
    pub value: f64,
    pub alternative_cost: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DominanceReport {
    pub agent: usize,
    pub checked: usize,
    pub violations: Vec<DominanceViolation>,
    /// `max (V_t - J_{t,T}^{alt})`; non-positive when dominance holds.
    pub max_excess: f64,
    /// `max |V_t - J_{t,T}^{alt}|`.
    pub max_abs_gap: f64,
}

/// Compares every table value with the conditional cost-to-go of `alt`
/// from the same realization onward, computed by trajectory enumeration.
pub fn verify_value_dominance(
    spec: &ModelSpec,
    agent: usize,
    profile: &StrategyProfile,
    table: &ValueTable,
    alt: &AgentStrategy,
) -> Result<DominanceReport> {
    verify_value_dominance_with_tolerance(spec, agent, profile, table, alt, TOL_COMPARE)
}

pub fn verify_value_dominance_with_tolerance(
    spec: &ModelSpec,
    agent: usize,
    profile: &StrategyProfile,
    table: &ValueTable,
    alt: &AgentStrategy,
    tol: f64,
) -> Result<DominanceReport> {
    let delay = spec.delay;
    let mut report = DominanceReport {
        agent,
        checked: 0,
        violations: Vec::new(),
        max_excess: f64::NEG_INFINITY,
        max_abs_gap: 0.0,
    };
    let alt_profile = profile.with_agent(agent, alt.clone());
    for (t, stage) in table.stages.iter().enumerate() {
        // agent k is free before t, so every tabulated realization is reached
        let atoms = enumerate_atoms(spec, spec.horizon, |j, s, h| {
            if j == agent && s < t {
                return Ok(Choice::All);
            }
            let view = view_parts(&h.obs, &h.acts, s, j, delay);
            alt_profile.action(j, &view).map(Choice::Fixed)
        })?;
        let mut acc: BTreeMap<InfoRealization, (f64, f64)> = BTreeMap::new();
        for atom in &atoms {
            let e = acc.entry(atom.view(t, agent, delay)).or_insert((0.0, 0.0));
            e.0 += atom.mass * atom.cost_from(spec, t);
            e.1 += atom.mass;
        }
        for (info, rec) in stage {
            let Some(&(num, den)) = acc.get(info) else { continue };
            let j = num / den;
            let excess = rec.value - j;
            report.checked += 1;
            report.max_excess = report.max_excess.max(excess);
            report.max_abs_gap = report.max_abs_gap.max(excess.abs());
            if excess > tol {
                report.violations.push(DominanceViolation {
                    t,
                    realization: info.key(),
                    value: rec.value,
                    alternative_cost: j,
                });
            }
        }
    }
    if report.checked == 0 {
        report.max_excess = 0.0;
    }
    Ok(report)
}
