//! Finite delayed-sharing decentralized POMDP: alphabets, kernels and costs.
//!
//! Kernels are stored flat and row-major. A joint action `(u_0, .., u_{K-1})`
//! is encoded with agent 0 as the most significant digit, matching the
//! `[t][x][u_0]..[u_{K-1}][x']` nesting of the JSON model file.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Names accepted by [`canonical_instance`].
pub const CANONICAL_NAMES: [&str; 3] = ["CANON-2A", "CANON-2B", "CANON-1"];

const ROW_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    /// Number of agents `K`.
    pub agents: usize,
    /// Sharing delay `n`.
    pub delay: usize,
    /// Horizon `T`: decisions at `0..T`, terminal cost at `T`.
    pub horizon: usize,
    pub state_size: usize,
    pub obs_sizes: Vec<usize>,
    pub act_sizes: Vec<usize>,
    pub init_dist: Vec<f64>,
    /// `[t]` -> flat `[x][joint action][x']`, `t = 0..T`.
    pub transition: Vec<Vec<f64>>,
    /// `[t][k]` -> flat `[x][y]`, `t = 0..=T`.
    pub observation: Vec<Vec<Vec<f64>>>,
    /// `[t]` -> flat `[x][joint action]`, `t = 0..T`.
    pub stage_cost: Vec<Vec<f64>>,
    pub terminal_cost: Vec<f64>,
}

impl ModelSpec {
    pub fn joint_actions(&self) -> usize {
        self.act_sizes.iter().product()
    }

    /// Mixed-radix index of a joint action, agent 0 most significant.
    pub fn joint_index(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.agents);
        actions
            .iter()
            .zip(&self.act_sizes)
            .fold(0, |acc, (&u, &size)| acc * size + u)
    }

    /// Inverse of [`ModelSpec::joint_index`].
    pub fn joint_actions_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.agents];
        for j in (0..self.agents).rev() {
            out[j] = index % self.act_sizes[j];
            index /= self.act_sizes[j];
        }
        out
    }

    /// `S_{t+1}(x' | x, u)` for the transition applied after decisions at `t`.
    #[inline]
    pub fn trans(&self, t: usize, x: usize, joint: usize, x_next: usize) -> f64 {
        let ns = self.state_size;
        self.transition[t][(x * self.joint_actions() + joint) * ns + x_next]
    }

    /// `Q_t^k(y | x)`.
    #[inline]
    pub fn obs_prob(&self, t: usize, agent: usize, x: usize, y: usize) -> f64 {
        self.observation[t][agent][x * self.obs_sizes[agent] + y]
    }

    #[inline]
    pub fn cost(&self, t: usize, x: usize, joint: usize) -> f64 {
        self.stage_cost[t][x * self.joint_actions() + joint]
    }

    #[inline]
    pub fn terminal(&self, x: usize) -> f64 {
        self.terminal_cost[x]
    }

    /// Marginal probability of agent `k`'s first observation.
    pub fn initial_obs_marginal(&self, agent: usize, y: usize) -> f64 {
        (0..self.state_size)
            .map(|x| self.init_dist[x] * self.obs_prob(0, agent, x, y))
            .sum()
    }

    /// Copy of the model whose observation kernels carry no state information.
    pub fn with_uninformative_observations(&self) -> ModelSpec {
        let mut out = self.clone();
        for per_t in &mut out.observation {
            for (k, table) in per_t.iter_mut().enumerate() {
                let ny = self.obs_sizes[k];
                table.iter_mut().for_each(|p| *p = 1.0 / ny as f64);
            }
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<ModelSpec> {
        let raw: RawModel = serde_json::from_str(text)?;
        raw.into_spec()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<ModelSpec> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_value(&self) -> Value {
        let k = self.agents;
        let ns = self.state_size;
        let mut action_shape: Vec<usize> = self.act_sizes.clone();
        let mut trans_shape = vec![ns];
        trans_shape.append(&mut action_shape.clone());
        trans_shape.push(ns);
        let mut cost_shape = vec![ns];
        cost_shape.append(&mut action_shape);
        serde_json::json!({
            "K": k,
            "n": self.delay,
            "T": self.horizon,
            "state_size": ns,
            "obs_sizes": self.obs_sizes,
            "act_sizes": self.act_sizes,
            "init_dist": self.init_dist,
            "transition": self.transition.iter().map(|f| nest(f, &trans_shape)).collect::<Vec<_>>(),
            "observation": self.observation.iter().map(|per_t| {
                per_t.iter().enumerate()
                    .map(|(j, f)| nest(f, &[ns, self.obs_sizes[j]]))
                    .collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
            "stage_cost": self.stage_cost.iter().map(|f| nest(f, &cost_shape)).collect::<Vec<_>>(),
            "terminal_cost": self.terminal_cost,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("model serializes")
    }
}

#[derive(Deserialize)]
struct RawModel {
    #[serde(rename = "K")]
    agents: usize,
    #[serde(rename = "n")]
    delay: usize,
    #[serde(rename = "T")]
    horizon: usize,
    state_size: usize,
    obs_sizes: Vec<usize>,
    act_sizes: Vec<usize>,
    init_dist: Vec<f64>,
    transition: Vec<Value>,
    observation: Vec<Vec<Value>>,
    stage_cost: Vec<Value>,
    terminal_cost: Vec<f64>,
}

impl RawModel {
    fn into_spec(self) -> Result<ModelSpec> {
        let ns = self.state_size;
        if self.obs_sizes.len() != self.agents || self.act_sizes.len() != self.agents {
            return Err(Error::MalformedModel(format!(
                "obs_sizes/act_sizes must have K = {} entries",
                self.agents
            )));
        }
        let mut trans_shape = vec![ns];
        trans_shape.extend(&self.act_sizes);
        trans_shape.push(ns);
        let mut cost_shape = vec![ns];
        cost_shape.extend(&self.act_sizes);

        let transition = self
            .transition
            .iter()
            .enumerate()
            .map(|(t, v)| flatten(v, &trans_shape, &format!("transition[{t}]")))
            .collect::<Result<Vec<_>>>()?;
        let observation = self
            .observation
            .iter()
            .enumerate()
            .map(|(t, per_t)| {
                if per_t.len() != self.agents {
                    return Err(Error::MalformedModel(format!(
                        "observation[{t}] must have K = {} kernels",
                        self.agents
                    )));
                }
                per_t
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        flatten(v, &[ns, self.obs_sizes[j]], &format!("observation[{t}][{j}]"))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let stage_cost = self
            .stage_cost
            .iter()
            .enumerate()
            .map(|(t, v)| flatten(v, &cost_shape, &format!("stage_cost[{t}]")))
            .collect::<Result<Vec<_>>>()?;

        let negative = self
            .init_dist
            .iter()
            .chain(transition.iter().flatten())
            .chain(observation.iter().flatten().flatten())
            .any(|&p| p < 0.0);
        if negative {
            return Err(Error::MalformedModel("negative probability".into()));
        }
        if !self.init_dist.iter().chain(&self.terminal_cost).all(|v| v.is_finite()) {
            return Err(Error::MalformedModel("non-finite number".into()));
        }

        Ok(ModelSpec {
            agents: self.agents,
            delay: self.delay,
            horizon: self.horizon,
            state_size: ns,
            obs_sizes: self.obs_sizes,
            act_sizes: self.act_sizes,
            init_dist: self.init_dist,
            transition,
            observation,
            stage_cost,
            terminal_cost: self.terminal_cost,
        })
    }
}

fn flatten(value: &Value, shape: &[usize], path: &str) -> Result<Vec<f64>> {
    fn go(value: &Value, shape: &[usize], path: &str, out: &mut Vec<f64>) -> Result<()> {
        match shape.split_first() {
            None => {
                let v = value
                    .as_f64()
                    .ok_or_else(|| Error::MalformedModel(format!("{path}: expected a number")))?;
                if !v.is_finite() {
                    return Err(Error::MalformedModel(format!("{path}: non-finite number")));
                }
                out.push(v);
                Ok(())
            }
            Some((&len, rest)) => {
                let items = value
                    .as_array()
                    .ok_or_else(|| Error::MalformedModel(format!("{path}: expected an array")))?;
                if items.len() != len {
                    return Err(Error::MalformedModel(format!(
                        "{path}: expected {len} entries, found {}",
                        items.len()
                    )));
                }
                for (i, item) in items.iter().enumerate() {
                    go(item, rest, &format!("{path}[{i}]"), out)?;
                }
                Ok(())
            }
        }
    }
    let mut out = Vec::with_capacity(shape.iter().product());
    go(value, shape, path, &mut out)?;
    Ok(out)
}

fn nest(flat: &[f64], shape: &[usize]) -> Value {
    match shape.split_first() {
        None => Value::from(flat[0]),
        Some((&len, rest)) => {
            let stride: usize = rest.iter().product();
            Value::Array(
                (0..len)
                    .map(|i| nest(&flat[i * stride..(i + 1) * stride], rest))
                    .collect(),
            )
        }
    }
}

/// One failed model invariant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub index: Vec<usize>,
    pub defect: f64,
    pub message: String,
}

impl Violation {
    fn new(field: &str, index: Vec<usize>, defect: f64, message: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            index,
            defect,
            message: message.into(),
        }
    }
}

/// Checks every structural and stochastic invariant; an empty list means valid.
pub fn validate_model(spec: &ModelSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = spec.agents;
    if k == 0 {
        out.push(Violation::new("K", vec![], 1.0, "K must be at least 1"));
    }
    if spec.horizon == 0 {
        out.push(Violation::new("T", vec![], 1.0, "horizon must be at least 1"));
    }
    if spec.delay == 0 {
        out.push(Violation::new("n", vec![], 1.0, "delay must be at least 1"));
    } else if spec.delay > spec.horizon {
        out.push(Violation::new(
            "n",
            vec![],
            (spec.delay - spec.horizon) as f64,
            "delay exceeds horizon",
        ));
    }
    if spec.state_size == 0 {
        out.push(Violation::new("state_size", vec![], 1.0, "empty state alphabet"));
    }
    let mut dims_ok = spec.state_size > 0 && k > 0;
    for (field, sizes) in [("obs_sizes", &spec.obs_sizes), ("act_sizes", &spec.act_sizes)] {
        if sizes.len() != k {
            out.push(Violation::new(
                field,
                vec![],
                sizes.len().abs_diff(k) as f64,
                format!("expected {k} entries"),
            ));
            dims_ok = false;
        }
        for (j, &s) in sizes.iter().enumerate() {
            if s == 0 {
                out.push(Violation::new(field, vec![j], 1.0, "empty alphabet"));
                dims_ok = false;
            }
        }
    }

    let ns = spec.state_size;
    check_distribution(&mut out, "init_dist", vec![], &spec.init_dist, ns);

    if !dims_ok {
        return out;
    }
    let ju = spec.joint_actions();

    if spec.transition.len() != spec.horizon {
        out.push(Violation::new(
            "transition",
            vec![],
            spec.transition.len().abs_diff(spec.horizon) as f64,
            format!("expected {} time slices", spec.horizon),
        ));
    }
    for (t, table) in spec.transition.iter().enumerate() {
        if table.len() != ns * ju * ns {
            out.push(Violation::new(
                "transition",
                vec![t],
                table.len().abs_diff(ns * ju * ns) as f64,
                "table size inconsistent with alphabets",
            ));
            continue;
        }
        for x in 0..ns {
            for a in 0..ju {
                let start = (x * ju + a) * ns;
                let mut index = vec![t, x];
                index.extend(spec.joint_actions_of(a));
                check_distribution(&mut out, "transition", index, &table[start..start + ns], ns);
            }
        }
    }

    if spec.observation.len() != spec.horizon + 1 {
        out.push(Violation::new(
            "observation",
            vec![],
            spec.observation.len().abs_diff(spec.horizon + 1) as f64,
            format!("expected {} time slices", spec.horizon + 1),
        ));
    }
    for (t, per_t) in spec.observation.iter().enumerate() {
        if per_t.len() != k {
            out.push(Violation::new(
                "observation",
                vec![t],
                per_t.len().abs_diff(k) as f64,
                format!("expected {k} kernels"),
            ));
            continue;
        }
        for (j, table) in per_t.iter().enumerate() {
            let ny = spec.obs_sizes[j];
            if table.len() != ns * ny {
                out.push(Violation::new(
                    "observation",
                    vec![t, j],
                    table.len().abs_diff(ns * ny) as f64,
                    "table size inconsistent with alphabets",
                ));
                continue;
            }
            for x in 0..ns {
                check_distribution(
                    &mut out,
                    "observation",
                    vec![t, j, x],
                    &table[x * ny..(x + 1) * ny],
                    ny,
                );
            }
        }
    }

    if spec.stage_cost.len() != spec.horizon {
        out.push(Violation::new(
            "stage_cost",
            vec![],
            spec.stage_cost.len().abs_diff(spec.horizon) as f64,
            format!("expected {} time slices", spec.horizon),
        ));
    }
    for (t, table) in spec.stage_cost.iter().enumerate() {
        if table.len() != ns * ju {
            out.push(Violation::new(
                "stage_cost",
                vec![t],
                table.len().abs_diff(ns * ju) as f64,
                "table size inconsistent with alphabets",
            ));
        } else if let Some(i) = table.iter().position(|c| !c.is_finite()) {
            out.push(Violation::new("stage_cost", vec![t, i], f64::INFINITY, "non-finite cost"));
        }
    }
    if spec.terminal_cost.len() != ns {
        out.push(Violation::new(
            "terminal_cost",
            vec![],
            spec.terminal_cost.len().abs_diff(ns) as f64,
            "table size inconsistent with state alphabet",
        ));
    } else if let Some(i) = spec.terminal_cost.iter().position(|c| !c.is_finite()) {
        out.push(Violation::new("terminal_cost", vec![i], f64::INFINITY, "non-finite cost"));
    }
    out
}

fn check_distribution(out: &mut Vec<Violation>, field: &str, index: Vec<usize>, row: &[f64], len: usize) {
    if row.len() != len {
        out.push(Violation::new(
            field,
            index,
            row.len().abs_diff(len) as f64,
            format!("expected {len} entries"),
        ));
        return;
    }
    if let Some(bad) = row.iter().copied().find(|p| !p.is_finite() || *p < 0.0) {
        out.push(Violation::new(field, index, bad.abs(), "negative or non-finite probability"));
        return;
    }
    let sum: f64 = row.iter().sum();
    let defect = (sum - 1.0).abs();
    if defect > ROW_TOL {
        out.push(Violation::new(
            field,
            index,
            defect,
            format!("row sums to {sum} instead of 1"),
        ));
    }
}

/// Built-in instances shared by the test suites and the `all` command.
///
/// - `CANON-2A`: two agents, delay 1, horizon 2, binary alphabets, both
///   observation channels correct with probability 0.8.
/// - `CANON-2B`: same dynamics, channels of accuracy 0.7 (agent 0) and 0.95 (agent 1).
/// - `CANON-1`: one agent, delay 1, horizon 3.
pub fn canonical_instance(name: &str) -> Result<ModelSpec> {
    match name {
        "CANON-2A" => Ok(two_agent_instance(0.8, 0.8)),
        "CANON-2B" => Ok(two_agent_instance(0.7, 0.95)),
        "CANON-1" => Ok(single_agent_instance()),
        other => Err(Error::UnknownInstance(other.to_string())),
    }
}

fn symmetric_channel(accuracy: f64) -> Vec<f64> {
    vec![accuracy, 1.0 - accuracy, 1.0 - accuracy, accuracy]
}

/// Expands `P(x' = 1 | x, joint)` tables into a flat binary-state transition.
fn binary_transition(p_one: &[[f64; 4]; 2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(16);
    for row in p_one {
        for &p in row {
            out.push(1.0 - p);
            out.push(p);
        }
    }
    out
}

fn two_agent_instance(acc0: f64, acc1: f64) -> ModelSpec {
    // joint action order (u0, u1): 00, 01, 10, 11
    let transition = vec![
        binary_transition(&[[0.10, 0.50, 0.60, 0.85], [0.70, 0.40, 0.30, 0.95]]),
        binary_transition(&[[0.20, 0.45, 0.55, 0.80], [0.75, 0.35, 0.25, 0.90]]),
    ];
    let stage_cost = vec![
        vec![0.0, 0.7, 0.4, 1.3, 2.0, 1.1, 1.2, 0.2],
        vec![0.1, 0.6, 0.5, 1.0, 1.8, 1.0, 0.9, 0.3],
    ];
    ModelSpec {
        agents: 2,
        delay: 1,
        horizon: 2,
        state_size: 2,
        obs_sizes: vec![2, 2],
        act_sizes: vec![2, 2],
        init_dist: vec![0.6, 0.4],
        transition,
        observation: (0..3)
            .map(|_| vec![symmetric_channel(acc0), symmetric_channel(acc1)])
            .collect(),
        stage_cost,
        terminal_cost: vec![0.0, 1.5],
    }
}

fn single_agent_instance() -> ModelSpec {
    let step = vec![0.8, 0.2, 0.4, 0.6, 0.1, 0.9, 0.7, 0.3];
    ModelSpec {
        agents: 1,
        delay: 1,
        horizon: 3,
        state_size: 2,
        obs_sizes: vec![2],
        act_sizes: vec![2],
        init_dist: vec![0.5, 0.5],
        transition: vec![step.clone(), step.clone(), step],
        observation: [0.75, 0.8, 0.7, 0.85]
            .iter()
            .map(|&a| vec![symmetric_channel(a)])
            .collect(),
        stage_cost: vec![vec![0.0, 0.5, 1.0, 0.6]; 3],
        terminal_cost: vec![0.0, 1.0],
    }
}

/// Alphabet sizes for [`random_model`].
#[derive(Clone, Copy, Debug)]
pub struct RandomShape {
    pub agents: usize,
    pub delay: usize,
    pub horizon: usize,
    pub state_size: usize,
    pub obs_size: usize,
    pub act_size: usize,
}

/// A valid model with strictly positive kernels drawn from a seeded generator.
pub fn random_model(seed: u64, shape: RandomShape) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = shape.state_size;
    let ju = shape.act_size.pow(shape.agents as u32);
    let row = |len: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    };
    let init_dist = row(ns, &mut rng);
    let transition = (0..shape.horizon)
        .map(|_| (0..ns * ju).flat_map(|_| row(ns, &mut rng)).collect())
        .collect();
    let observation = (0..=shape.horizon)
        .map(|_| {
            (0..shape.agents)
                .map(|_| (0..ns).flat_map(|_| row(shape.obs_size, &mut rng)).collect())
                .collect()
        })
        .collect();
    let stage_cost = (0..shape.horizon)
        .map(|_| (0..ns * ju).map(|_| rng.random_range(0.0..2.0)).collect())
        .collect();
    let terminal_cost = (0..ns).map(|_| rng.random_range(0.0..2.0)).collect();
    ModelSpec {
        agents: shape.agents,
        delay: shape.delay,
        horizon: shape.horizon,
        state_size: ns,
        obs_sizes: vec![shape.obs_size; shape.agents],
        act_sizes: vec![shape.act_size; shape.agents],
        init_dist,
        transition,
        observation,
        stage_cost,
        terminal_cost,
    }
}
