//! The n-step delayed-sharing information pattern.
//!
//! At time `t` every agent shares its observations and actions up to time
//! `t - n`; the common part `Δ_t` is the union of those prefixes, and agent
//! `k` additionally holds its own recent window `Λ_t^k` (observations
//! `t-n+1..=t`, actions `t-n+1..t`). Empty index ranges are empty sequences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::oracle::{enumerate_atoms, Choice};
use crate::strategy::StrategyProfile;

/// First time index inside the private window at time `t`; also the length
/// of each shared prefix.
#[inline]
pub fn window_start(t: usize, delay: usize) -> usize {
    (t + 1).saturating_sub(delay)
}

/// Full joint history at time `t`: observations `0..=t`, actions `0..t`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JointHistory {
    pub t: usize,
    pub obs: Vec<Vec<usize>>,
    pub acts: Vec<Vec<usize>>,
}

impl JointHistory {
    pub fn initial(obs0: &[usize]) -> Self {
        JointHistory {
            t: 0,
            obs: obs0.iter().map(|&y| vec![y]).collect(),
            acts: vec![Vec::new(); obs0.len()],
        }
    }

    pub fn agents(&self) -> usize {
        self.obs.len()
    }

    pub fn is_well_formed(&self) -> bool {
        self.obs.len() == self.acts.len()
            && self.obs.iter().all(|o| o.len() == self.t + 1)
            && self.acts.iter().all(|a| a.len() == self.t)
    }

    /// Appends the joint action at `t` and the joint observation at `t + 1`.
    pub fn extend(&mut self, acts: &[usize], obs: &[usize]) {
        for (j, (&u, &y)) in acts.iter().zip(obs).enumerate() {
            self.acts[j].push(u);
            self.obs[j].push(y);
        }
        self.t += 1;
    }
}

/// `Δ_t`: per agent, the shared observation and action prefixes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommonInfo {
    pub t: usize,
    pub obs: Vec<Vec<usize>>,
    pub acts: Vec<Vec<usize>>,
}

impl CommonInfo {
    /// The common information one step earlier.
    pub fn previous(&self, delay: usize) -> CommonInfo {
        debug_assert!(self.t > 0);
        let len = window_start(self.t - 1, delay);
        CommonInfo {
            t: self.t - 1,
            obs: self.obs.iter().map(|o| o[..len].to_vec()).collect(),
            acts: self.acts.iter().map(|a| a[..len].to_vec()).collect(),
        }
    }

    fn write_key(&self, out: &mut String) {
        for (o, a) in self.obs.iter().zip(&self.acts) {
            write_block(out, o, a);
        }
    }
}

/// `Λ_t^k`: an agent's recent, not yet shared, observations and actions.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrivateInfo {
    pub t: usize,
    pub agent: usize,
    pub obs: Vec<usize>,
    pub acts: Vec<usize>,
}

/// Elements leaving a private window when it advances; they become common.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Promoted {
    pub obs: usize,
    pub act: usize,
}

impl PrivateInfo {
    pub fn initial(agent: usize, y0: usize) -> Self {
        PrivateInfo { t: 0, agent, obs: vec![y0], acts: Vec::new() }
    }

    /// Advances the window by one step with the action taken at `t` and the
    /// observation at `t + 1`. Returns the element promoted into `Δ_{t+1}`
    /// (the time `t-n+1` observation and action), if that time exists.
    pub fn shift(&self, act: usize, next_obs: usize, delay: usize) -> (PrivateInfo, Option<Promoted>) {
        let t = self.t;
        let mut obs = self.obs.clone();
        let mut acts = self.acts.clone();
        obs.push(next_obs);
        acts.push(act);
        let dropped = window_start(t + 1, delay) - window_start(t, delay);
        let promoted = if dropped == 1 {
            Some(Promoted { obs: obs.remove(0), act: acts.remove(0) })
        } else {
            None
        };
        (PrivateInfo { t: t + 1, agent: self.agent, obs, acts }, promoted)
    }

    fn write_key(&self, out: &mut String) {
        write_block(out, &self.obs, &self.acts);
    }
}

/// `Λ_t^{-k}`: the private windows of every agent other than `agent`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OtherPrivate {
    pub t: usize,
    /// The excluded agent `k`.
    pub agent: usize,
    /// Windows of agents `j != k`, in increasing agent order.
    pub others: Vec<PrivateInfo>,
}

impl OtherPrivate {
    pub fn key(&self) -> String {
        let mut out = String::new();
        for p in &self.others {
            p.write_key(&mut out);
        }
        out
    }

    pub fn get(&self, agent: usize) -> &PrivateInfo {
        let idx = if agent < self.agent { agent } else { agent - 1 };
        &self.others[idx]
    }
}

/// `I_t^k = (Δ_t, Λ_t^k)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InfoRealization {
    pub common: CommonInfo,
    pub private: PrivateInfo,
}

impl InfoRealization {
    pub fn initial(agents: usize, agent: usize, y0: usize) -> Self {
        InfoRealization {
            common: CommonInfo { t: 0, obs: vec![Vec::new(); agents], acts: vec![Vec::new(); agents] },
            private: PrivateInfo::initial(agent, y0),
        }
    }

    pub fn t(&self) -> usize {
        self.private.t
    }

    pub fn agent(&self) -> usize {
        self.private.agent
    }

    /// Agent's complete own stream `(y_{0..=t}, u_{0..t})`.
    pub fn own_stream(&self) -> (Vec<usize>, Vec<usize>) {
        let k = self.agent();
        let mut obs = self.common.obs[k].clone();
        obs.extend(&self.private.obs);
        let mut acts = self.common.acts[k].clone();
        acts.extend(&self.private.acts);
        (obs, acts)
    }

    /// The same agent's realization at an earlier time `s <= t`.
    pub fn prefix(&self, s: usize, delay: usize) -> InfoRealization {
        debug_assert!(s <= self.t());
        let len = window_start(s, delay);
        let (obs, acts) = self.own_stream();
        InfoRealization {
            common: CommonInfo {
                t: s,
                obs: self.common.obs.iter().map(|o| o[..len].to_vec()).collect(),
                acts: self.common.acts.iter().map(|a| a[..len].to_vec()).collect(),
            },
            private: PrivateInfo {
                t: s,
                agent: self.agent(),
                obs: obs[len..=s].to_vec(),
                acts: acts[len..s].to_vec(),
            },
        }
    }

    /// Canonical textual key, e.g. `t=1;d=[y:0,u:1][y:1,u:0];l=[y:1,u:]`.
    pub fn key(&self) -> String {
        let mut out = format!("t={};d=", self.t());
        self.common.write_key(&mut out);
        out.push_str(";l=");
        self.private.write_key(&mut out);
        out
    }

    /// Inverse of [`InfoRealization::key`].
    pub fn parse_key(key: &str, agent: usize, delay: usize) -> Result<InfoRealization> {
        let bad = || Error::MalformedStrategy(format!("bad realization key `{key}`"));
        let rest = key.strip_prefix("t=").ok_or_else(bad)?;
        let (t, rest) = rest.split_once(";d=").ok_or_else(bad)?;
        let t: usize = t.parse().map_err(|_| bad())?;
        let (common, private) = rest.split_once(";l=").ok_or_else(bad)?;
        let blocks = parse_blocks(common).ok_or_else(bad)?;
        let mut own = parse_blocks(private).ok_or_else(bad)?;
        if own.len() != 1 || agent >= blocks.len() {
            return Err(bad());
        }
        let (obs, acts) = own.pop().unwrap();
        let len = window_start(t, delay);
        let common_ok = blocks.iter().all(|(o, a)| o.len() == len && a.len() == len);
        if !common_ok || obs.len() != t + 1 - len || acts.len() != t - len {
            return Err(bad());
        }
        let (cobs, cacts) = blocks.into_iter().unzip();
        Ok(InfoRealization {
            common: CommonInfo { t, obs: cobs, acts: cacts },
            private: PrivateInfo { t, agent, obs, acts },
        })
    }
}

fn write_block(out: &mut String, obs: &[usize], acts: &[usize]) {
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(".");
    let _ = write!(out, "[y:{},u:{}]", join(obs), join(acts));
}

fn parse_blocks(text: &str) -> Option<Vec<(Vec<usize>, Vec<usize>)>> {
    let seq = |s: &str| -> Option<Vec<usize>> {
        if s.is_empty() {
            Some(Vec::new())
        } else {
            s.split('.').map(|x| x.parse().ok()).collect()
        }
    };
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let body = rest.strip_prefix('[')?;
        let end = body.find(']')?;
        let (o, a) = body[..end].split_once(",u:")?;
        out.push((seq(o.strip_prefix("y:")?)?, seq(a)?));
        rest = &body[end + 1..];
    }
    Some(out)
}

/// Views of a joint history at time `t` (which may be earlier than the
/// history's last time), without requiring a [`JointHistory`] value.
pub(crate) fn view_parts(
    obs: &[Vec<usize>],
    acts: &[Vec<usize>],
    t: usize,
    agent: usize,
    delay: usize,
) -> InfoRealization {
    let len = window_start(t, delay);
    InfoRealization {
        common: CommonInfo {
            t,
            obs: obs.iter().map(|o| o[..len].to_vec()).collect(),
            acts: acts.iter().map(|a| a[..len].to_vec()).collect(),
        },
        private: private_part(obs, acts, t, agent, delay),
    }
}

pub(crate) fn private_part(
    obs: &[Vec<usize>],
    acts: &[Vec<usize>],
    t: usize,
    agent: usize,
    delay: usize,
) -> PrivateInfo {
    let len = window_start(t, delay);
    PrivateInfo {
        t,
        agent,
        obs: obs[agent][len..=t].to_vec(),
        acts: acts[agent][len..t].to_vec(),
    }
}

pub(crate) fn other_part(
    obs: &[Vec<usize>],
    acts: &[Vec<usize>],
    t: usize,
    agent: usize,
    delay: usize,
) -> OtherPrivate {
    OtherPrivate {
        t,
        agent,
        others: (0..obs.len())
            .filter(|&j| j != agent)
            .map(|j| private_part(obs, acts, t, j, delay))
            .collect(),
    }
}

/// Splits a joint history into `(Δ_t, Λ_t^k, Λ_t^{-k})`.
pub fn split_history(h: &JointHistory, agent: usize, delay: usize) -> (CommonInfo, PrivateInfo, OtherPrivate) {
    debug_assert!(delay >= 1 && h.is_well_formed());
    let view = view_parts(&h.obs, &h.acts, h.t, agent, delay);
    let other = other_part(&h.obs, &h.acts, h.t, agent, delay);
    (view.common, view.private, other)
}

/// Advances `(Δ_t, Λ_t^k, Λ_t^{-k})` by one step.
///
/// `new_act_k`/`new_acts_others` are the actions taken at `t`;
/// `new_obs_k`/`new_obs_others` the observations at `t + 1`. The slices for
/// other agents are in increasing agent order, skipping `k`.
#[allow(clippy::too_many_arguments)]
pub fn advance_info(
    common: &CommonInfo,
    private: &PrivateInfo,
    other: &OtherPrivate,
    delay: usize,
    new_obs_k: usize,
    new_act_k: usize,
    new_acts_others: &[usize],
    new_obs_others: &[usize],
) -> Result<(CommonInfo, PrivateInfo, OtherPrivate)> {
    let t = common.t;
    if private.t != t || other.t != t || other.others.iter().any(|p| p.t != t) {
        return Err(Error::InconsistentTime(format!(
            "common at t={t}, private at t={}, other at t={}",
            private.t, other.t
        )));
    }
    let k = private.agent;
    let agents = common.obs.len();
    if other.agent != k
        || other.others.len() + 1 != agents
        || new_acts_others.len() + 1 != agents
        || new_obs_others.len() + 1 != agents
    {
        return Err(Error::MissingPromoted(format!(
            "expected data for {} other agents",
            agents.saturating_sub(1)
        )));
    }
    let start = window_start(t, delay);
    let check = |p: &PrivateInfo| -> Result<()> {
        if p.obs.len() != t + 1 - start || p.acts.len() != t - start {
            return Err(Error::MissingPromoted(format!(
                "private window of agent {} has wrong length at t={t}",
                p.agent
            )));
        }
        Ok(())
    };
    check(private)?;
    let mut next_common = common.clone();
    next_common.t = t + 1;
    let (next_private, promoted) = private.shift(new_act_k, new_obs_k, delay);
    if let Some(p) = promoted {
        next_common.obs[k].push(p.obs);
        next_common.acts[k].push(p.act);
    }
    let mut next_others = Vec::with_capacity(other.others.len());
    for (i, p) in other.others.iter().enumerate() {
        check(p)?;
        let (np, promoted) = p.shift(new_acts_others[i], new_obs_others[i], delay);
        if let Some(pr) = promoted {
            next_common.obs[p.agent].push(pr.obs);
            next_common.acts[p.agent].push(pr.act);
        }
        next_others.push(np);
    }
    Ok((
        next_common,
        next_private,
        OtherPrivate { t: t + 1, agent: k, others: next_others },
    ))
}

/// One reachable realization together with the support of `Λ_t^{-k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reachable {
    pub info: InfoRealization,
    pub others: Vec<OtherPrivate>,
}

/// All `(Δ_t, Λ_t^k)` with positive probability when agents `j != k` follow
/// `profile` and agent `k` may take any action, sorted canonically.
pub fn enumerate_reachable(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    agent: usize,
    t: usize,
) -> Result<Vec<Reachable>> {
    let delay = spec.delay;
    let atoms = enumerate_atoms(spec, t, |j, s, h| {
        if j == agent {
            Ok(Choice::All)
        } else {
            let view = view_parts(&h.obs, &h.acts, s, j, delay);
            profile.action(j, &view).map(Choice::Fixed)
        }
    })?;
    let mut grouped: BTreeMap<InfoRealization, BTreeSet<OtherPrivate>> = BTreeMap::new();
    for atom in atoms.iter().filter(|a| a.mass > 0.0) {
        let info = view_parts(&atom.obs, &atom.acts, t, agent, delay);
        let other = other_part(&atom.obs, &atom.acts, t, agent, delay);
        grouped.entry(info).or_default().insert(other);
    }
    Ok(grouped
        .into_iter()
        .map(|(info, others)| Reachable { info, others: others.into_iter().collect() })
        .collect())
}
