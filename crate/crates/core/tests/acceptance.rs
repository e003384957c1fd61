//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;

use delayshare::cli::{alternative_strategies, run, Command, RunConfig};
use delayshare::falsify::{
    check_conditional_independence, check_conditional_markov, check_k1_reduction, check_payoff_identity,
    check_policy_independence,
};
use delayshare::filter::{bayes_oracle_belief, chained_beliefs};
use delayshare::model::CANONICAL_NAMES;
use delayshare::oracle::{brute_force_best_response, enumerate_cost, verify_pbp};
use delayshare::{
    canonical_instance, pbp_sweep, solve_best_response, verify_value_dominance, AgentStrategy,
    ModelSpec, Result, StrategyProfile,
};

const RANDOM_SEED: u64 = 20240917;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Partner profiles used wherever the criteria ask for several `g^{-k}`.
fn partner_profiles(spec: &ModelSpec) -> Result<Vec<(String, StrategyProfile)>> {
    Ok(vec![
        ("constant 0".into(), StrategyProfile::constant(spec, 0)),
        ("constant 1".into(), StrategyProfile::constant(spec, 1)),
        (format!("random {RANDOM_SEED}"), StrategyProfile::random(spec, RANDOM_SEED)?),
        ("random 5".into(), StrategyProfile::random(spec, 5)?),
    ])
}

fn filter_correctness() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for name in ["CANON-2A", "CANON-2B"] {
        let spec = canonical_instance(name)?;
        for (_, g) in partner_profiles(&spec)? {
            for k in 0..spec.agents {
                for level in chained_beliefs(&spec, &g, k, spec.horizon)? {
                    for (info, xi) in level {
                        let reference = bayes_oracle_belief(&spec, &g, k, &info)?;
                        worst = worst.max(xi.max_abs_diff(&reference));
                        count += 1;
                    }
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("{count} realizations, max gap {worst:.3e}"))
}

/// Flips the first table entry of the latest stage.
fn flip_one(s: &AgentStrategy) -> AgentStrategy {
    let mut out = AgentStrategy::empty(s.stages.len());
    if let Some((info, &a)) = s.stages.last().and_then(|m| m.iter().next()) {
        out.set(info.clone(), 1 - a);
    }
    out
}

fn strategy_independence() -> Result<Outcome> {
    let mut pass = true;
    let mut details = Vec::new();
    for name in CANONICAL_NAMES {
        let spec = canonical_instance(name)?;
        let k = 0;
        let base = StrategyProfile::random(&spec, RANDOM_SEED)?;
        let pairs = [
            (base.clone(), base.with_agent(k, base.agents[k].merged(&flip_one(&base.agents[k])))),
            (base.clone(), base.with_agent(k, AgentStrategy::constant(spec.horizon, 1))),
            (base.clone(), base.with_agent(k, StrategyProfile::random(&spec, 3)?.agents[k].clone())),
        ];
        let mut shared = 0;
        for (a, b) in &pairs {
            let report = check_policy_independence(&spec, a, b, k)?;
            pass &= report.max_gap == 0.0 && !report.gaps.is_empty();
            shared += report.gaps.len();
        }
        details.push(format!("{name}: 3 pairs, {shared} shared realizations"));
    }
    outcome(pass, format!("{}; all gaps exactly 0", details.join("; ")))
}

fn conditional_markov() -> Result<Outcome> {
    let spec = canonical_instance("CANON-2A")?;
    let mut worst: f64 = 0.0;
    let mut groups = 0;
    for (_, g) in partner_profiles(&spec)? {
        for k in 0..spec.agents {
            let report = check_conditional_markov(&spec, &g, k)?;
            worst = worst.max(report.max_gap);
            groups += report.gaps.len();
        }
    }
    outcome(worst <= 1e-10, format!("{groups} groups, max gap {worst:.3e}"))
}

fn k1_reduction() -> Result<Outcome> {
    let spec = canonical_instance("CANON-1")?;
    let report = check_k1_reduction(&spec)?;
    outcome(
        report.max_gap <= 1e-12,
        format!("{} histories, max gap {:.3e}", report.gaps.len(), report.max_gap),
    )
}

fn payoff_identity() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut profiles = 0;
    for name in CANONICAL_NAMES {
        let spec = canonical_instance(name)?;
        let mut gs: Vec<StrategyProfile> = partner_profiles(&spec)?.into_iter().map(|p| p.1).collect();
        gs.push(pbp_sweep(&spec, &gs[0], 32)?.profile);
        for g in &gs {
            worst = worst.max(check_payoff_identity(&spec, g)?.max_gap);
        }
        profiles += gs.len();
    }
    outcome(worst <= 1e-10, format!("{profiles} profiles (seed {RANDOM_SEED}), max gap {worst:.3e}"))
}

fn dp_vs_brute_force() -> Result<Outcome> {
    let spec = canonical_instance("CANON-2A")?;
    let mut worst_value: f64 = 0.0;
    let mut worst_cost: f64 = 0.0;
    let mut cases = 0;
    for (_, g) in partner_profiles(&spec)? {
        for k in 0..spec.agents {
            let (table, dp_strategy) = solve_best_response(&spec, k, &g)?;
            let (brute, brute_strategy) = brute_force_best_response(&spec, &g, k)?;
            worst_value = worst_value.max((table.initial_value() - brute).abs());
            let a = enumerate_cost(&spec, &g.with_agent(k, dp_strategy))?;
            let b = enumerate_cost(&spec, &g.with_agent(k, brute_strategy))?;
            worst_cost = worst_cost.max((a - b).abs());
            cases += 1;
        }
    }
    outcome(
        worst_value <= 1e-10 && worst_cost <= 1e-10,
        format!("{cases} cases, value gap {worst_value:.3e}, realized cost gap {worst_cost:.3e}"),
    )
}

fn dominance() -> Result<Outcome> {
    let mut violations = 0;
    let mut tight: f64 = 0.0;
    let mut alternatives = 0;
    for name in CANONICAL_NAMES {
        let spec = canonical_instance(name)?;
        let g = StrategyProfile::random(&spec, RANDOM_SEED)?;
        for k in 0..spec.agents {
            let (table, best) = solve_best_response(&spec, k, &g)?;
            let alts = alternative_strategies(&spec, k)?;
            alternatives = alternatives.max(alts.len());
            for (_, alt) in &alts {
                violations += verify_value_dominance(&spec, k, &g, &table, alt)?.violations.len();
            }
            let own = verify_value_dominance(&spec, k, &g, &table, &best)?;
            violations += own.violations.len();
            tight = tight.max(own.max_abs_gap);
        }
    }
    outcome(
        violations == 0 && tight <= 1e-10 && alternatives >= 5,
        format!("{alternatives} alternatives per agent, {violations} violations, gap at best response {tight:.3e}"),
    )
}

fn pbp_certification() -> Result<Outcome> {
    let spec = canonical_instance("CANON-2A")?;
    let sweep = pbp_sweep(&spec, &StrategyProfile::constant(&spec, 0), 32)?;
    let monotone = sweep.trace.windows(2).all(|w| w[1] <= w[0]);
    let cert = verify_pbp(&spec, &sweep.profile)?;
    let max_gap = cert.agents.iter().map(|a| a.gap).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        sweep.converged && monotone && cert.certified,
        format!(
            "converged in {} rounds, final cost {:.12}, max stationarity gap {max_gap:.3e}",
            sweep.rounds,
            sweep.trace.last().unwrap()
        ),
    )
}

fn falsification() -> Result<Outcome> {
    let spec = canonical_instance("CANON-2B")?;
    let g = StrategyProfile::constant(&spec, 0);
    let report = check_conditional_independence(&spec, &g, 0, 1)?;
    let flat = check_conditional_independence(&spec.with_uninformative_observations(), &g, 0, 1)?;
    outcome(
        report.max_gap > 0.01 && flat.max_gap <= 1e-12,
        format!(
            "max gap {:.6} at witness {}; state-independent observations {:.3e}",
            report.max_gap,
            report.witness.as_deref().unwrap_or("-"),
            flat.max_gap
        ),
    )
}

fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let mut bodies = Vec::new();
    for i in 0..2 {
        let mut cfg = RunConfig::new(Command::All, "CANON-2A");
        cfg.out = Some(dir.path().join(format!("run{i}.json")));
        let result = run(&cfg)?;
        if result.exit_code != 0 {
            return outcome(false, format!("run {i} exited with {}", result.exit_code));
        }
        bodies.push(std::fs::read(cfg.out.unwrap())?);
    }
    outcome(bodies[0] == bodies[1], format!("two reports of {} bytes", bodies[0].len()))
}

fn main() -> ExitCode {
    type Check = fn() -> Result<Outcome>;
    let criteria: [(&str, Check); 10] = [
        ("filter correctness", filter_correctness),
        ("strategy independence", strategy_independence),
        ("conditional Markov property", conditional_markov),
        ("single-agent reduction", k1_reduction),
        ("payoff identity", payoff_identity),
        ("dynamic program vs brute force", dp_vs_brute_force),
        ("value dominance", dominance),
        ("person-by-person certification", pbp_certification),
        ("conditional independence falsified", falsification),
        ("deterministic reports", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!pass);
        println!("criterion {:>2} {:<36} {}  {detail}", i + 1, name, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
