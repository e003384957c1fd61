//! The private posterior `Ξ_t^k` over the extended state `(x_t, λ_t^{-k})`.
//!
//! Beliefs are dense vectors over `𝕏 × 𝕃_t^{-k}`, indexed
//! `x * |𝕃_t^{-k}| + λ` with `λ` encoded by [`OtherSpace`].

use std::collections::BTreeMap;

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::{other_part, view_parts, window_start, CommonInfo, InfoRealization, OtherPrivate, PrivateInfo};
use crate::model::ModelSpec;
use crate::oracle::{enumerate_atoms, follow, Atom, Choice};
use crate::strategy::{AgentStrategy, StrategyProfile};

/// The alphabet `𝕃_t^{-k}` of the other agents' private windows at `t`.
///
/// Encoding is mixed radix, most significant first: for each agent `j != k`
/// in increasing order, its observation digits then its action digits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OtherSpace {
    pub t: usize,
    pub agent: usize,
    pub delay: usize,
    pub obs_sizes: Vec<usize>,
    pub act_sizes: Vec<usize>,
    pub obs_len: usize,
    pub act_len: usize,
}

impl OtherSpace {
    pub fn new(spec: &ModelSpec, agent: usize, t: usize) -> Self {
        let start = window_start(t, spec.delay);
        OtherSpace {
            t,
            agent,
            delay: spec.delay,
            obs_sizes: spec.obs_sizes.clone(),
            act_sizes: spec.act_sizes.clone(),
            obs_len: t + 1 - start,
            act_len: t - start,
        }
    }

    fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.obs_sizes.len()).filter(move |&j| j != self.agent)
    }

    pub fn len(&self) -> usize {
        self.others()
            .map(|j| self.obs_sizes[j].pow(self.obs_len as u32) * self.act_sizes[j].pow(self.act_len as u32))
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, lam: &OtherPrivate) -> usize {
        let mut idx = 0;
        for (p, j) in lam.others.iter().zip(self.others()) {
            for &y in &p.obs {
                idx = idx * self.obs_sizes[j] + y;
            }
            for &u in &p.acts {
                idx = idx * self.act_sizes[j] + u;
            }
        }
        idx
    }

    pub fn decode(&self, mut idx: usize) -> OtherPrivate {
        let others: Vec<usize> = self.others().collect();
        let mut windows: Vec<PrivateInfo> = Vec::with_capacity(others.len());
        for &j in others.iter().rev() {
            let mut acts = vec![0; self.act_len];
            for a in acts.iter_mut().rev() {
                *a = idx % self.act_sizes[j];
                idx /= self.act_sizes[j];
            }
            let mut obs = vec![0; self.obs_len];
            for y in obs.iter_mut().rev() {
                *y = idx % self.obs_sizes[j];
                idx /= self.obs_sizes[j];
            }
            windows.push(PrivateInfo { t: self.t, agent: j, obs, acts });
        }
        windows.reverse();
        OtherPrivate { t: self.t, agent: self.agent, others: windows }
    }
}

/// `Ξ_t^k[δ_t, λ_t^k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub t: usize,
    pub agent: usize,
    pub space: OtherSpace,
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn get(&self, x: usize, lam: &OtherPrivate) -> f64 {
        self.probs[x * self.space.len() + self.space.encode(lam)]
    }

    /// Positive-mass entries `(x, λ^{-k}, p)` in canonical order.
    pub fn support(&self) -> Vec<(usize, OtherPrivate, f64)> {
        let l = self.space.len();
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i / l, self.space.decode(i % l), p))
            .collect()
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        self.probs.chunks(self.space.len()).map(|c| c.iter().sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Belief) -> f64 {
        assert_eq!(self.probs.len(), other.probs.len(), "beliefs over different spaces");
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ c_T(x) ξ(x, λ)`.
    pub fn terminal_value(&self, spec: &ModelSpec) -> f64 {
        self.x_marginal().iter().enumerate().map(|(x, p)| p * spec.terminal(x)).sum()
    }

    fn from_masses(t: usize, agent: usize, space: OtherSpace, mut probs: Vec<f64>, total: f64) -> Belief {
        probs.iter_mut().for_each(|p| *p /= total);
        Belief { t, agent, space, probs }
    }
}

impl Serialize for Belief {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let support: Vec<_> = self
            .support()
            .into_iter()
            .map(|(x, lam, p)| (x, lam.key(), p))
            .collect();
        let mut s = serializer.serialize_struct("Belief", 3)?;
        s.serialize_field("t", &self.t)?;
        s.serialize_field("agent", &self.agent)?;
        s.serialize_field("support", &support)?;
        s.end()
    }
}

/// `Ξ_0^k[y_0^k] ∝ P_0(x_0) Q_0^k(y_0^k|x_0) ∏_{j≠k} Q_0^j(y_0^j|x_0)`.
pub fn initial_belief(spec: &ModelSpec, agent: usize, y0: usize) -> Result<Belief> {
    let space = OtherSpace::new(spec, agent, 0);
    let l = space.len();
    let mut probs = vec![0.0; spec.state_size * l];
    let mut total = 0.0;
    for x in 0..spec.state_size {
        let base = spec.init_dist[x] * spec.obs_prob(0, agent, x, y0);
        if base == 0.0 {
            continue;
        }
        for (i, p) in probs[x * l..(x + 1) * l].iter_mut().enumerate() {
            let lam = space.decode(i);
            let q: f64 = lam.others.iter().map(|w| spec.obs_prob(0, w.agent, x, w.obs[0])).product();
            *p = base * q;
            total += *p;
        }
    }
    if total <= 0.0 {
        return Err(Error::UnreachableObservation { agent, t: 0, obs: y0 });
    }
    Ok(Belief::from_masses(0, agent, space, probs, total))
}

/// Actions `g_t^j(δ_t, λ_t^j)` of every agent `j != k`, in agent order.
pub fn other_actions(
    profile: &StrategyProfile,
    common: &CommonInfo,
    lam: &OtherPrivate,
) -> Result<Vec<usize>> {
    lam.others
        .iter()
        .map(|w| {
            let info = InfoRealization { common: common.clone(), private: w.clone() };
            profile.action(w.agent, &info)
        })
        .collect()
}

fn joint_with(k: usize, u_k: usize, others: &[usize]) -> Vec<usize> {
    let mut joint = Vec::with_capacity(others.len() + 1);
    joint.extend_from_slice(&others[..k]);
    joint.push(u_k);
    joint.extend_from_slice(&others[k..]);
    joint
}

/// Unnormalized one-step update; the returned total is
/// `P(y_{t+1}^k, revealed elements of δ_{t+1} | δ_t, λ_t^k, u_t^k)`.
fn propagate(
    spec: &ModelSpec,
    xi: &Belief,
    delta_next: &CommonInfo,
    profile: &StrategyProfile,
    u_k: usize,
    y_next: usize,
) -> Result<(Belief, f64)> {
    let (k, t, n) = (xi.agent, xi.t, spec.delay);
    if delta_next.t != t + 1 || t >= spec.horizon {
        return Err(Error::InconsistentTime(format!(
            "belief at t={t}, next common information at t={}",
            delta_next.t
        )));
    }
    let delta = delta_next.previous(n);
    let promoting = window_start(t + 1, n) > window_start(t, n);
    let next_space = OtherSpace::new(spec, k, t + 1);
    let nl = next_space.len();
    let mut probs = vec![0.0; spec.state_size * nl];
    let mut total = 0.0;
    let l = xi.space.len();

    for (i, &w) in xi.probs.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (x, lam) = (i / l, xi.space.decode(i % l));
        let u_others = other_actions(profile, &delta, &lam)?;
        // Elements leaving λ_t^{-k} are revealed in δ_{t+1}: fix, don't sum.
        let mut shifted = Vec::with_capacity(lam.others.len());
        let mut consistent = true;
        for (win, &u) in lam.others.iter().zip(&u_others) {
            let j = win.agent;
            let (next, promoted) = win.shift(u, 0, n);
            if promoting {
                let p = promoted.expect("window promotes once t+1 >= n");
                let pos = window_start(t + 1, n) - 1;
                if delta_next.obs[j].get(pos) != Some(&p.obs) || delta_next.acts[j].get(pos) != Some(&p.act) {
                    consistent = false;
                    break;
                }
            }
            shifted.push(next);
        }
        if !consistent {
            continue;
        }
        let ju = spec.joint_index(&joint_with(k, u_k, &u_others));
        for x_next in 0..spec.state_size {
            let s = spec.trans(t, x, ju, x_next);
            if s == 0.0 {
                continue;
            }
            let qk = spec.obs_prob(t + 1, k, x_next, y_next);
            if qk == 0.0 {
                continue;
            }
            let base = w * s * qk;
            // enumerate y_{t+1}^{-k}
            let sizes: Vec<usize> = shifted.iter().map(|p| spec.obs_sizes[p.agent]).collect();
            let mut ys = vec![0usize; sizes.len()];
            loop {
                let mut mass = base;
                let mut next_lam = OtherPrivate { t: t + 1, agent: k, others: shifted.clone() };
                for (p, &y) in next_lam.others.iter_mut().zip(&ys) {
                    *p.obs.last_mut().expect("window holds t+1") = y;
                    mass *= spec.obs_prob(t + 1, p.agent, x_next, y);
                }
                if mass > 0.0 {
                    probs[x_next * nl + next_space.encode(&next_lam)] += mass;
                    total += mass;
                }
                let mut d = ys.len();
                loop {
                    if d == 0 {
                        break;
                    }
                    d -= 1;
                    ys[d] += 1;
                    if ys[d] < sizes[d] {
                        break;
                    }
                    ys[d] = 0;
                }
                if ys.iter().all(|&y| y == 0) {
                    break;
                }
            }
        }
    }
    Ok((Belief { t: t + 1, agent: k, space: next_space, probs }, total))
}

/// One step of the private-posterior recursion.
///
/// Conditions on `δ_{t+1}` (not just `δ_t`): the other agents' time
/// `t-n+1` data promoted into `δ_{t+1}` is fixed to its revealed value, and
/// only `x_t` is summed out. `profile` is read only for agents `j != k`.
pub fn belief_update(
    spec: &ModelSpec,
    xi: &Belief,
    delta_next: &CommonInfo,
    profile: &StrategyProfile,
    u_k: usize,
    y_next: usize,
) -> Result<Belief> {
    let (mut next, total) = propagate(spec, xi, delta_next, profile, u_k, y_next)?;
    if total <= 0.0 {
        return Err(Error::UnreachableContinuation { agent: xi.agent, t: xi.t, action: u_k, obs: y_next });
    }
    next.probs.iter_mut().for_each(|p| *p /= total);
    Ok(next)
}

/// A positive-probability successor of a realization under one action.
#[derive(Clone, Debug)]
pub struct Child {
    pub info: InfoRealization,
    pub belief: Belief,
    /// Probability of reaching `info` given the parent and the action.
    pub prob: f64,
}

/// All successors of `(info, xi)` when agent `k` plays `u_k`, in canonical order.
pub fn children(
    spec: &ModelSpec,
    info: &InfoRealization,
    xi: &Belief,
    profile: &StrategyProfile,
    u_k: usize,
) -> Result<Vec<Child>> {
    let (k, t, n) = (info.agent(), info.t(), spec.delay);
    let (private_next, own_promoted) = info.private.shift(u_k, 0, n);
    let mut base = info.common.clone();
    base.t = t + 1;
    if let Some(p) = own_promoted {
        base.obs[k].push(p.obs);
        base.acts[k].push(p.act);
    }
    // candidate δ_{t+1}: one per distinct revealed tuple in the support
    let mut candidates: Vec<CommonInfo> = Vec::new();
    if window_start(t + 1, n) > window_start(t, n) {
        let mut seen = std::collections::BTreeSet::new();
        for (_, lam, _) in xi.support() {
            let u_others = other_actions(profile, &info.common, &lam)?;
            let mut c = base.clone();
            for (w, &u) in lam.others.iter().zip(&u_others) {
                let promoted = w.shift(u, 0, n).1.expect("promotion");
                c.obs[w.agent].push(promoted.obs);
                c.acts[w.agent].push(promoted.act);
            }
            if seen.insert(c.clone()) {
                candidates.push(c);
            }
        }
    } else {
        candidates.push(base);
    }
    let mut out = Vec::new();
    for delta_next in candidates {
        for y in 0..spec.obs_sizes[k] {
            let (mut belief, total) = propagate(spec, xi, &delta_next, profile, u_k, y)?;
            if total <= 0.0 {
                continue;
            }
            belief.probs.iter_mut().for_each(|p| *p /= total);
            let mut private = private_next.clone();
            *private.obs.last_mut().expect("window holds t+1") = y;
            out.push(Child {
                info: InfoRealization { common: delta_next.clone(), private },
                belief,
                prob: total,
            });
        }
    }
    out.sort_by(|a, b| a.info.cmp(&b.info));
    Ok(out)
}

/// Positive-probability initial realizations with their beliefs and masses.
pub fn initial_realizations(spec: &ModelSpec, agent: usize) -> Result<Vec<(InfoRealization, Belief, f64)>> {
    let mut out = Vec::new();
    for y in 0..spec.obs_sizes[agent] {
        let p = spec.initial_obs_marginal(agent, y);
        if p > 0.0 {
            out.push((InfoRealization::initial(spec.agents, agent, y), initial_belief(spec, agent, y)?, p));
        }
    }
    Ok(out)
}

/// Chained [`belief_update`] at every realization of agent `k` reachable at
/// times `0..=horizon` when the other agents follow `profile` and agent `k`
/// acts freely.
pub fn chained_beliefs(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    agent: usize,
    horizon: usize,
) -> Result<Vec<BTreeMap<InfoRealization, Belief>>> {
    let mut levels = vec![BTreeMap::new()];
    for (info, xi, _) in initial_realizations(spec, agent)? {
        levels[0].insert(info, xi);
    }
    for t in 0..horizon.min(spec.horizon) {
        let mut next = BTreeMap::new();
        for (info, xi) in &levels[t] {
            for u in 0..spec.act_sizes[agent] {
                for c in children(spec, info, xi, profile, u)? {
                    next.insert(c.info, c.belief);
                }
            }
        }
        levels.push(next);
    }
    Ok(levels)
}

/// Beliefs at time `t` conditioned directly on atom masses, grouped by the
/// view of `agent`. Atoms must have horizon `t`.
pub fn beliefs_from_atoms(spec: &ModelSpec, agent: usize, t: usize, atoms: &[Atom]) -> BTreeMap<InfoRealization, Belief> {
    let space = OtherSpace::new(spec, agent, t);
    let l = space.len();
    let mut acc: BTreeMap<InfoRealization, (Vec<f64>, f64)> = BTreeMap::new();
    for atom in atoms {
        if atom.mass == 0.0 {
            continue;
        }
        let info = view_parts(&atom.obs, &atom.acts, t, agent, spec.delay);
        let lam = other_part(&atom.obs, &atom.acts, t, agent, spec.delay);
        let entry = acc.entry(info).or_insert_with(|| (vec![0.0; spec.state_size * l], 0.0));
        entry.0[atom.states[t] * l + space.encode(&lam)] += atom.mass;
        entry.1 += atom.mass;
    }
    acc.into_iter()
        .map(|(info, (probs, total))| (info, Belief::from_masses(t, agent, space.clone(), probs, total)))
        .collect()
}

/// `P(x_t, λ_t^{-k} | δ_t, λ_t^k)` by definition: enumerate every trajectory
/// to `t` with agent `k` replaying the actions recorded in `info` and the
/// others following `profile`, then condition.
pub fn bayes_oracle_belief(spec: &ModelSpec, profile: &StrategyProfile, agent: usize, info: &InfoRealization) -> Result<Belief> {
    let t = info.t();
    if info.agent() != agent || t > spec.horizon {
        return Err(Error::Precondition("realization does not belong to this agent and model".into()));
    }
    let replay = AgentStrategy::replaying(info, spec.horizon.max(t + 1), spec.delay, 0);
    let g = profile.with_agent(agent, replay);
    let atoms = enumerate_atoms(spec, t, follow(spec, &g))?;
    beliefs_from_atoms(spec, agent, t, &atoms)
        .remove(info)
        .ok_or_else(|| Error::UnreachableRealization(info.key()))
}

/// [`bayes_oracle_belief`] at every realization reachable at `t` with agent
/// `k` free, from a single enumeration.
pub fn oracle_beliefs(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    agent: usize,
    t: usize,
) -> Result<BTreeMap<InfoRealization, Belief>> {
    let atoms = enumerate_atoms(spec, t, |j, s, h| {
        if j == agent {
            Ok(Choice::All)
        } else {
            let view = view_parts(&h.obs, &h.acts, s, j, spec.delay);
            profile.action(j, &view).map(Choice::Fixed)
        }
    })?;
    Ok(beliefs_from_atoms(spec, agent, t, &atoms))
}

/// Classical nonlinear filter for `K = 1`:
/// `π'(x') ∝ Q_{t+1}(y'|x') Σ_x S_t(x'|x,u) π(x)`.
pub fn classical_filter_update(spec: &ModelSpec, t: usize, pi: &[f64], u: usize, y_next: usize) -> Result<Vec<f64>> {
    if spec.agents != 1 {
        return Err(Error::Precondition("classical filter needs a single agent".into()));
    }
    let mut out: Vec<f64> = (0..spec.state_size)
        .map(|x_next| {
            let pred: f64 = pi.iter().enumerate().map(|(x, p)| spec.trans(t, x, u, x_next) * p).sum();
            spec.obs_prob(t + 1, 0, x_next, y_next) * pred
        })
        .collect();
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return Err(Error::UnreachableObservation { agent: 0, t: t + 1, obs: y_next });
    }
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_instance;

    #[test]
    fn space_round_trip() {
        let spec = crate::model::random_model(
            4,
            crate::model::RandomShape { agents: 3, delay: 2, horizon: 3, state_size: 2, obs_size: 2, act_size: 3 },
        );
        for t in 0..=3 {
            let space = OtherSpace::new(&spec, 1, t);
            for i in 0..space.len() {
                assert_eq!(space.encode(&space.decode(i)), i);
            }
        }
        // two others, each with 2 obs (radix 2) and 1 act (radix 3)
        assert_eq!(OtherSpace::new(&spec, 1, 2).len(), 144);
    }

    #[test]
    fn perfect_observation_collapses() {
        let mut spec = canonical_instance("CANON-2A").unwrap();
        for per_t in &mut spec.observation {
            per_t[1] = vec![1.0, 0.0, 0.0, 1.0];
        }
        let xi = initial_belief(&spec, 1, 1).unwrap();
        assert_eq!(xi.x_marginal(), vec![0.0, 1.0]);
    }

    #[test]
    fn uninformative_initial_belief_is_prior() {
        let spec = canonical_instance("CANON-2A").unwrap().with_uninformative_observations();
        let xi = initial_belief(&spec, 0, 1).unwrap();
        assert!((xi.x_marginal()[0] - 0.6).abs() < 1e-15);
        assert!((xi.probs[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn children_probabilities_sum_to_one() {
        let spec = canonical_instance("CANON-2B").unwrap();
        let g = StrategyProfile::random(&spec, 11).unwrap();
        for (info, xi, _) in initial_realizations(&spec, 0).unwrap() {
            for u in 0..2 {
                let total: f64 = children(&spec, &info, &xi, &g, u).unwrap().iter().map(|c| c.prob).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unreachable_update_is_an_error() {
        let mut spec = canonical_instance("CANON-2A").unwrap();
        spec.observation[1][0] = vec![1.0, 0.0, 1.0, 0.0];
        let g = StrategyProfile::constant(&spec, 0);
        let xi = initial_belief(&spec, 0, 0).unwrap();
        let mut delta = CommonInfo { t: 1, obs: vec![vec![0], vec![0]], acts: vec![vec![0], vec![0]] };
        assert!(matches!(
            belief_update(&spec, &xi, &delta, &g, 0, 1),
            Err(Error::UnreachableContinuation { .. })
        ));
        delta.t = 2;
        assert!(matches!(belief_update(&spec, &xi, &delta, &g, 0, 0), Err(Error::InconsistentTime(_))));
    }
}
