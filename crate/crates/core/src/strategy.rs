//! Deterministic strategy tables `u_t^k = g_t^k(Δ_t, Λ_t^k)`.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::info::{view_parts, InfoRealization};
use crate::model::ModelSpec;
use crate::oracle::{enumerate_atoms, Choice};

/// One agent's strategy: per-stage tables plus an optional action used for
/// every realization missing from the table.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AgentStrategy {
    pub stages: Vec<BTreeMap<InfoRealization, usize>>,
    pub fallback: Option<usize>,
}

impl AgentStrategy {
    pub fn constant(horizon: usize, action: usize) -> Self {
        AgentStrategy { stages: vec![BTreeMap::new(); horizon], fallback: Some(action) }
    }

    pub fn empty(horizon: usize) -> Self {
        AgentStrategy { stages: vec![BTreeMap::new(); horizon], fallback: None }
    }

    pub fn get(&self, info: &InfoRealization) -> Option<usize> {
        self.stages
            .get(info.t())
            .and_then(|m| m.get(info).copied())
            .or(self.fallback)
    }

    pub fn set(&mut self, info: InfoRealization, action: usize) {
        let t = info.t();
        if self.stages.len() <= t {
            self.stages.resize(t + 1, BTreeMap::new());
        }
        self.stages[t].insert(info, action);
    }

    /// `self` with every entry of `newer` overriding.
    pub fn merged(&self, newer: &AgentStrategy) -> AgentStrategy {
        let mut out = self.clone();
        for stage in &newer.stages {
            for (info, &a) in stage {
                out.set(info.clone(), a);
            }
        }
        out
    }

    /// Replays the actions recorded in `info` at every earlier prefix, and
    /// plays `fallback` elsewhere.
    pub fn replaying(info: &InfoRealization, horizon: usize, delay: usize, fallback: usize) -> Self {
        let mut out = AgentStrategy::constant(horizon, fallback);
        let (_, acts) = info.own_stream();
        for (s, &a) in acts.iter().enumerate() {
            out.set(info.prefix(s, delay), a);
        }
        out
    }
}

/// `g^{(K)}`: one [`AgentStrategy`] per agent.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StrategyProfile {
    pub agents: Vec<AgentStrategy>,
}

impl StrategyProfile {
    /// Every agent plays `action` everywhere.
    pub fn constant(spec: &ModelSpec, action: usize) -> Self {
        StrategyProfile {
            agents: (0..spec.agents)
                .map(|_| AgentStrategy::constant(spec.horizon, action))
                .collect(),
        }
    }

    pub fn action(&self, agent: usize, info: &InfoRealization) -> Result<usize> {
        self.agents[agent]
            .get(info)
            .ok_or_else(|| Error::IncompleteStrategy { agent, t: info.t(), key: info.key() })
    }

    pub fn with_agent(&self, agent: usize, strategy: AgentStrategy) -> Self {
        let mut out = self.clone();
        out.agents[agent] = strategy;
        out
    }

    /// A profile with independently uniform actions on every realization an
    /// agent can reach when all agents are unconstrained.
    pub fn random(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domains = full_domains(spec)?;
        let agents = domains
            .into_iter()
            .enumerate()
            .map(|(j, stages)| {
                let mut s = AgentStrategy::empty(spec.horizon);
                for (t, infos) in stages.into_iter().enumerate() {
                    for info in infos {
                        let a = rng.random_range(0..spec.act_sizes[j]);
                        s.stages[t].insert(info, a);
                    }
                }
                s
            })
            .collect();
        Ok(StrategyProfile { agents })
    }

    pub fn to_json_value(&self) -> Value {
        Value::Array(
            self.agents
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    json!({
                        "agent": j,
                        "fallback": s.fallback,
                        "stages": s.stages.iter().map(|m| {
                            m.iter().map(|(info, a)| json!([info.key(), a])).collect::<Vec<_>>()
                        }).collect::<Vec<_>>(),
                    })
                })
                .collect(),
        )
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&json!({ "agents": self.to_json_value() })).expect("serializes")
    }

    pub fn from_json_str(spec: &ModelSpec, text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)?;
        let bad = |m: &str| Error::MalformedStrategy(m.to_string());
        let agents = doc
            .get("agents")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `agents` array"))?;
        if agents.len() != spec.agents {
            return Err(bad("one entry per agent required"));
        }
        let mut out = Vec::with_capacity(agents.len());
        for (j, entry) in agents.iter().enumerate() {
            let fallback = match entry.get("fallback") {
                None | Some(Value::Null) => None,
                Some(v) => Some(v.as_u64().ok_or_else(|| bad("fallback must be an action"))? as usize),
            };
            let mut s = AgentStrategy { stages: vec![BTreeMap::new(); spec.horizon], fallback };
            let stages = entry
                .get("stages")
                .and_then(Value::as_array)
                .ok_or_else(|| bad("missing `stages`"))?;
            if stages.len() > spec.horizon {
                return Err(bad("more stages than decision times"));
            }
            for (t, pairs) in stages.iter().enumerate() {
                for pair in pairs.as_array().ok_or_else(|| bad("stage must be a list"))? {
                    let key = pair.get(0).and_then(Value::as_str).ok_or_else(|| bad("pair key"))?;
                    let a = pair.get(1).and_then(Value::as_u64).ok_or_else(|| bad("pair action"))? as usize;
                    let info = InfoRealization::parse_key(key, j, spec.delay)?;
                    if info.t() != t || a >= spec.act_sizes[j] {
                        return Err(bad(&format!("entry `{key}` out of range")));
                    }
                    s.stages[t].insert(info, a);
                }
            }
            if fallback.is_some_and(|a| a >= spec.act_sizes[j]) {
                return Err(bad("fallback out of range"));
            }
            out.push(s);
        }
        Ok(StrategyProfile { agents: out })
    }
}

/// Per agent, per decision time: realizations reachable with every agent free.
fn full_domains(spec: &ModelSpec) -> Result<Vec<Vec<BTreeSet<InfoRealization>>>> {
    let mut out = vec![vec![BTreeSet::new(); spec.horizon]; spec.agents];
    if spec.horizon == 0 {
        return Ok(out);
    }
    let atoms = enumerate_atoms(spec, spec.horizon - 1, |_, _, _| Ok(Choice::All))?;
    for atom in atoms.iter().filter(|a| a.mass > 0.0) {
        for (j, stages) in out.iter_mut().enumerate() {
            for (t, domain) in stages.iter_mut().enumerate() {
                domain.insert(view_parts(&atom.obs, &atom.acts, t, j, spec.delay));
            }
        }
    }
    Ok(out)
}
