//! Batch front end: loads a model, runs one command, renders aligned text
//! tables and a JSON report `{command, model, results, gaps, tolerances, pass}`.
//!
//! Exit status: 0 when every asserted tolerance holds, 1 on a tolerance
//! failure, 2 on malformed input or an invalid model.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dp::{pbp_sweep_with_tolerance, solve_best_response, verify_value_dominance_with_tolerance};
use crate::error::{Error, Result};
use crate::falsify::{
    check_conditional_independence, check_conditional_markov, check_k1_reduction, check_payoff_identity,
    check_policy_independence, GapReport,
};
use crate::filter::{chained_beliefs, oracle_beliefs};
use crate::model::{canonical_instance, validate_model, ModelSpec, CANONICAL_NAMES};
use crate::oracle::{brute_force_best_response, enumerate_cost, verify_pbp_with_tolerance};
use crate::strategy::{AgentStrategy, StrategyProfile};
use crate::{TOL_COMPARE, TOL_IMPROVE};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Tolerance for the single-agent filter reduction and for the
/// uninformative-observation sanity check, where both sides share arithmetic.
pub const TOL_EXACT: f64 = 1e-12;
/// Minimum conditional-independence gap expected on the tuned instance.
pub const FALSIFY_THRESHOLD: f64 = 0.01;
/// Seeds of the randomly sampled strategies used by `verify` and `falsify`.
pub const SEEDS: [u64; 3] = [7, 19, 23];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Validate,
    Filter,
    Solve,
    Pbp,
    Verify,
    Falsify,
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Filter => "filter",
            Command::Solve => "solve",
            Command::Pbp => "pbp",
            Command::Verify => "verify",
            Command::Falsify => "falsify",
            Command::All => "all",
        }
    }
}

#[derive(Clone, Debug, Parser)]
#[command(name = "delayshare", version, about = "Exact analysis of delayed-sharing decentralized POMDPs")]
pub struct RunConfig {
    #[arg(long, value_enum)]
    pub command: Command,
    /// Model JSON file or canonical instance name (CANON-2A, CANON-2B, CANON-1).
    #[arg(long, default_value = "CANON-2A")]
    pub model: String,
    /// Agent index, from 0; commands that take one default to every agent.
    #[arg(long)]
    pub agent: Option<usize>,
    /// Strategy profile JSON; defaults to every agent playing action 0.
    #[arg(long)]
    pub strategy: Option<PathBuf>,
    /// Report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = TOL_COMPARE)]
    pub tol_compare: f64,
    #[arg(long, default_value_t = TOL_IMPROVE)]
    pub tol_improve: f64,
    #[arg(long, default_value_t = 32)]
    pub max_rounds: usize,
}

impl RunConfig {
    pub fn new(command: Command, model: &str) -> Self {
        RunConfig {
            command,
            model: model.to_string(),
            agent: None,
            strategy: None,
            out: None,
            tol_compare: TOL_COMPARE,
            tol_improve: TOL_IMPROVE,
            max_rounds: 32,
        }
    }

    fn check(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.tol_compare) || !ok(self.tol_improve) || self.max_rounds == 0 {
            return Err(Error::Precondition("tolerances and max rounds must be positive".into()));
        }
        if let Some(p) = &self.strategy {
            if !p.exists() {
                return Err(Error::Precondition(format!("strategy file {} not found", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Tolerances {
    pub compare: f64,
    pub improve: f64,
    pub exact: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub model: String,
    pub results: Vec<Value>,
    pub gaps: Vec<GapReport>,
    pub tolerances: Tolerances,
    pub pass: bool,
}

impl Report {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub text: String,
    pub exit_code: i32,
}

/// Accumulates results, gap reports and rendered text for one run.
struct Run<'a> {
    cfg: &'a RunConfig,
    results: Vec<Value>,
    gaps: Vec<GapReport>,
    text: String,
    pass: bool,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Run { cfg, results: Vec::new(), gaps: Vec::new(), text: String::new(), pass: true }
    }

    fn assert(&mut self, label: &str, ok: bool) {
        let _ = writeln!(self.text, "[{}] {label}", if ok { "PASS" } else { "FAIL" });
        self.pass &= ok;
    }

    fn gap(&mut self, model: &str, report: GapReport, tol: Option<f64>) {
        let rows: Vec<Vec<String>> = report
            .gaps
            .iter()
            .map(|g| vec![g.realization.clone(), format!("{:.3e}", g.gap)])
            .collect();
        let _ = writeln!(self.text, "{model}: {}", report.quantity);
        self.text.push_str(&table(&["realization", "gap"], &rows));
        let witness = report.witness.clone().unwrap_or_else(|| "-".into());
        let _ = writeln!(self.text, "max gap {:.6e} at {witness}", report.max_gap);
        if let Some(tol) = tol {
            self.assert(&format!("{model}: {} <= {tol:e}", report.quantity), report.max_gap <= tol);
        }
        self.gaps.push(report);
    }
}

/// Renders rows as left-aligned columns.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(headers.to_vec(), &mut out);
    for row in rows {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub fn load_model(name_or_path: &str) -> Result<ModelSpec> {
    if CANONICAL_NAMES.contains(&name_or_path) {
        return canonical_instance(name_or_path);
    }
    let path = std::path::Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::UnknownInstance(name_or_path.to_string()));
    }
    ModelSpec::from_json_file(path)
}

fn load_profile(cfg: &RunConfig, spec: &ModelSpec) -> Result<StrategyProfile> {
    match &cfg.strategy {
        Some(path) => StrategyProfile::from_json_str(spec, &std::fs::read_to_string(path)?),
        None => Ok(StrategyProfile::constant(spec, 0)),
    }
}

fn agents(cfg: &RunConfig, spec: &ModelSpec) -> Result<Vec<usize>> {
    match cfg.agent {
        Some(k) if k >= spec.agents => Err(Error::Precondition(format!("agent {k} out of range"))),
        Some(k) => Ok(vec![k]),
        None => Ok((0..spec.agents).collect()),
    }
}

/// Runs one configuration. Errors are malformed input; tolerance failures
/// are reported through [`Outcome::exit_code`].
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    cfg.check()?;
    let mut r = Run::new(cfg);
    let model_label = if cfg.command == Command::All { CANONICAL_NAMES.join(",") } else { cfg.model.clone() };
    let mut exit_override = None;
    match cfg.command {
        Command::Validate => {
            let spec = load_model(&cfg.model)?;
            let violations = validate_model(&spec);
            let rows: Vec<Vec<String>> = violations
                .iter()
                .map(|v| vec![v.field.clone(), format!("{:?}", v.index), format!("{:e}", v.defect), v.message.clone()])
                .collect();
            r.text.push_str(&table(&["field", "index", "defect", "message"], &rows));
            r.results.push(json!({ "model": cfg.model, "violations": violations }));
            r.assert(&format!("{}: model valid", cfg.model), violations.is_empty());
            if !violations.is_empty() {
                exit_override = Some(EXIT_INPUT);
            }
        }
        Command::All => {
            for name in CANONICAL_NAMES {
                let spec = canonical_instance(name)?;
                let g = StrategyProfile::constant(&spec, 0);
                let every: Vec<usize> = (0..spec.agents).collect();
                run_filter(&mut r, name, &spec, &g, &every)?;
                run_solve(&mut r, name, &spec, &g, &every)?;
                run_pbp(&mut r, name, &spec, &g)?;
                run_verify(&mut r, name, &spec, &g, &every)?;
                run_falsify(&mut r, name, &spec, &g, 0)?;
            }
        }
        cmd => {
            let spec = load_model(&cfg.model)?;
            let violations = validate_model(&spec);
            if !violations.is_empty() {
                return Err(Error::MalformedModel(violations[0].message.clone()));
            }
            let g = load_profile(cfg, &spec)?;
            let ks = agents(cfg, &spec)?;
            let name = cfg.model.as_str();
            match cmd {
                Command::Filter => run_filter(&mut r, name, &spec, &g, &ks)?,
                Command::Solve => run_solve(&mut r, name, &spec, &g, &ks)?,
                Command::Pbp => run_pbp(&mut r, name, &spec, &g)?,
                Command::Verify => run_verify(&mut r, name, &spec, &g, &ks)?,
                Command::Falsify => run_falsify(&mut r, name, &spec, &g, ks[0])?,
                Command::Validate | Command::All => unreachable!(),
            }
        }
    }
    let report = Report {
        command: cfg.command.name().to_string(),
        model: model_label,
        results: r.results,
        gaps: r.gaps,
        tolerances: Tolerances { compare: cfg.tol_compare, improve: cfg.tol_improve, exact: TOL_EXACT },
        pass: r.pass,
    };
    let exit_code = exit_override.unwrap_or(if report.pass { EXIT_PASS } else { EXIT_TOLERANCE });
    if let Some(path) = &cfg.out {
        std::fs::write(path, report.to_json_string())?;
    }
    Ok(Outcome { report, text: r.text, exit_code })
}

fn run_filter(r: &mut Run, name: &str, spec: &ModelSpec, g: &StrategyProfile, ks: &[usize]) -> Result<()> {
    let mut gaps = GapReport::new("private posterior recursion against the Bayes oracle");
    let mut rows = Vec::new();
    for &k in ks {
        let chained = chained_beliefs(spec, g, k, spec.horizon)?;
        for (t, level) in chained.iter().enumerate() {
            let oracle = oracle_beliefs(spec, g, k, t)?;
            if oracle.len() != level.len() {
                return Err(Error::Precondition(format!("reachable sets differ at t={t} for agent {k}")));
            }
            for (info, xi) in level {
                let reference = &oracle[info];
                let gap = xi.max_abs_diff(reference);
                gaps.push(format!("agent={k};{}", info.key()), gap);
                rows.push(json!({
                    "agent": k,
                    "t": t,
                    "realization": info.key(),
                    "recursion": xi,
                    "oracle": reference,
                    "gap": gap,
                }));
            }
        }
    }
    r.results.push(json!({ "model": name, "check": "filter", "beliefs": rows }));
    let tol = r.cfg.tol_compare;
    r.gap(name, gaps, Some(tol));
    Ok(())
}

fn run_solve(r: &mut Run, name: &str, spec: &ModelSpec, g: &StrategyProfile, ks: &[usize]) -> Result<()> {
    let tol = r.cfg.tol_compare;
    for &k in ks {
        let (table_k, best) = solve_best_response(spec, k, g)?;
        let value = table_k.initial_value();
        let achieved = enumerate_cost(spec, &g.with_agent(k, best.clone()))?;
        let mut entries = Vec::new();
        let mut rows = Vec::new();
        for (t, stage) in table_k.stages.iter().enumerate() {
            for (info, rec) in stage {
                rows.push(vec![
                    t.to_string(),
                    info.key(),
                    format!("{:.10}", rec.value),
                    rec.best_action.map_or("-".into(), |a| a.to_string()),
                ]);
                entries.push(json!({
                    "t": t,
                    "realization": info.key(),
                    "value": rec.value,
                    "best_action": rec.best_action,
                    "belief": rec.belief,
                }));
            }
        }
        let _ = writeln!(r.text, "{name}: value table for agent {k}");
        r.text.push_str(&table(&["t", "realization", "value", "action"], &rows));
        let brute = match brute_force_best_response(spec, g, k) {
            Ok((v, s)) => {
                let bs = enumerate_cost(spec, &g.with_agent(k, s))?;
                Some((v, bs))
            }
            Err(Error::TooLarge(_)) => None,
            Err(e) => return Err(e),
        };
        let mut gaps = GapReport::new(&format!("best response of agent {k}: dynamic program against brute force"));
        gaps.push("value vs realized cost of extracted strategy".into(), (value - achieved).abs());
        if let Some((v, bs)) = brute {
            gaps.push("value vs brute-force minimum".into(), (value - v).abs());
            gaps.push("realized costs of the two minimizers".into(), (achieved - bs).abs());
        }
        r.results.push(json!({
            "model": name,
            "check": "solve",
            "agent": k,
            "initial_value": value,
            "achieved_cost": achieved,
            "brute_force_value": brute.map(|b| b.0),
            "table": entries,
            "best_response": StrategyProfile { agents: vec![best] }.to_json_value(),
        }));
        r.gap(name, gaps, Some(tol));
    }
    Ok(())
}

fn run_pbp(r: &mut Run, name: &str, spec: &ModelSpec, g: &StrategyProfile) -> Result<()> {
    let sweep = pbp_sweep_with_tolerance(spec, g, r.cfg.max_rounds, r.cfg.tol_improve)?;
    let monotone = sweep.trace.windows(2).all(|w| w[1] <= w[0]);
    let cert = match verify_pbp_with_tolerance(spec, &sweep.profile, r.cfg.tol_compare) {
        Ok(c) => Some(c),
        Err(Error::TooLarge(_)) => None,
        Err(e) => return Err(e),
    };
    let rows: Vec<Vec<String>> = sweep
        .trace
        .iter()
        .enumerate()
        .map(|(i, c)| vec![i.to_string(), format!("{c:.12}")])
        .collect();
    let _ = writeln!(r.text, "{name}: best-response sweep ({} rounds)", sweep.rounds);
    r.text.push_str(&table(&["step", "cost"], &rows));
    r.results.push(json!({
        "model": name,
        "check": "pbp",
        "trace": sweep.trace,
        "rounds": sweep.rounds,
        "converged": sweep.converged,
        "profile": sweep.profile.to_json_value(),
        "certificate": cert,
    }));
    r.assert(&format!("{name}: sweep converged in {} rounds", sweep.rounds), sweep.converged);
    r.assert(&format!("{name}: cost trace non-increasing"), monotone);
    if let Some(c) = cert {
        let mut gaps = GapReport::new("unilateral improvement available to each agent");
        for a in &c.agents {
            gaps.push(format!("agent={}", a.agent), a.gap.max(0.0));
        }
        let tol = r.cfg.tol_compare;
        r.gap(name, gaps, Some(tol));
        r.assert(&format!("{name}: oracle certifies person-by-person optimality"), c.certified);
    } else {
        let _ = writeln!(r.text, "{name}: instance too large for brute-force certification");
    }
    Ok(())
}

/// The alternatives used by `verify`: constant actions and seeded random tables.
pub fn alternative_strategies(spec: &ModelSpec, agent: usize) -> Result<Vec<(String, AgentStrategy)>> {
    let mut out: Vec<(String, AgentStrategy)> = (0..spec.act_sizes[agent])
        .map(|a| (format!("constant {a}"), AgentStrategy::constant(spec.horizon, a)))
        .collect();
    for seed in SEEDS {
        let mut s = StrategyProfile::random(spec, seed)?.agents.swap_remove(agent);
        s.fallback = Some(0);
        out.push((format!("random seed {seed}"), s));
    }
    Ok(out)
}

fn run_verify(r: &mut Run, name: &str, spec: &ModelSpec, g: &StrategyProfile, ks: &[usize]) -> Result<()> {
    let tol = r.cfg.tol_compare;
    for &k in ks {
        let (table_k, best) = solve_best_response(spec, k, g)?;
        let mut alts = alternative_strategies(spec, k)?;
        alts.insert(0, ("extracted best response".into(), best));
        let mut excess = GapReport::new(&format!("agent {k}: value above alternative cost-to-go (dominance)"));
        let mut entries = Vec::new();
        let mut tight = 0.0;
        let mut violations = 0;
        for (i, (label, alt)) in alts.iter().enumerate() {
            let rep = verify_value_dominance_with_tolerance(spec, k, g, &table_k, alt, tol)?;
            if i == 0 {
                tight = rep.max_abs_gap;
            }
            violations += rep.violations.len();
            excess.push(label.clone(), rep.max_excess.max(0.0));
            entries.push(json!({ "alternative": label, "report": rep }));
        }
        r.results.push(json!({ "model": name, "check": "verify", "agent": k, "alternatives": entries }));
        r.gap(name, excess, Some(tol));
        r.assert(&format!("{name}: agent {k} dominance violations = {violations}"), violations == 0);
        r.assert(&format!("{name}: agent {k} equality at the best response ({tight:.3e})"), tight <= tol);
    }
    Ok(())
}

/// Time at which the conditional-independence check is evaluated.
pub fn independence_time(spec: &ModelSpec) -> usize {
    let n = spec.delay;
    if n < spec.horizon { n } else { n - 1 }
}

fn run_falsify(r: &mut Run, name: &str, spec: &ModelSpec, g: &StrategyProfile, k: usize) -> Result<()> {
    let tol = r.cfg.tol_compare;
    let t = independence_time(spec);
    if spec.agents > 1 {
        let ci = check_conditional_independence(spec, g, k, t)?;
        let max_gap = ci.max_gap;
        let witness = ci.witness.clone();
        r.gap(name, ci, None);
        let _ = writeln!(
            r.text,
            "{name}: conditional independence gap {max_gap:.6} at agent {k}, t={t}, witness {}",
            witness.as_deref().unwrap_or("-")
        );
        if name == "CANON-2B" {
            r.assert(&format!("{name}: conditional independence fails (gap > {FALSIFY_THRESHOLD})"), max_gap > FALSIFY_THRESHOLD);
        }
        let flat = spec.with_uninformative_observations();
        let sanity = check_conditional_independence(&flat, g, k, t)?;
        let mut sanity = sanity;
        sanity.quantity = format!("{} (state-independent observations)", sanity.quantity);
        r.gap(name, sanity, Some(TOL_EXACT));

        for (i, seed) in SEEDS.iter().enumerate() {
            let mut other = StrategyProfile::random(spec, *seed)?.agents.swap_remove(k);
            other.fallback = Some(i % spec.act_sizes[k]);
            let b = g.with_agent(k, other);
            let mut pi = check_policy_independence(spec, g, &b, k)?;
            pi.quantity = format!("{} (seed {seed})", pi.quantity);
            r.gap(name, pi, Some(0.0));
        }
    }
    r.gap(name, check_conditional_markov(spec, g, k)?, Some(tol));
    if spec.agents == 1 {
        r.gap(name, check_k1_reduction(spec)?, Some(TOL_EXACT));
    }
    r.gap(name, check_payoff_identity(spec, g)?, Some(tol));
    r.results.push(json!({ "model": name, "check": "falsify", "agent": k, "independence_time": t }));
    Ok(())
}

/// Parses arguments, runs, prints the tables and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
