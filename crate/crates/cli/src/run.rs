use std::time::Instant;

use adn_core::bounds::{admn_rate_check, largest_scale_at_target, pdcf_rate, BoundEvaluator, BoundMethod};
use adn_core::expproc::{verify_eprl, verify_pml, VerifyReport};
use adn_core::scenarios::{pdcf_joint, preset, PresetArgs, ScenarioBundle, ScenarioKind, ScenarioParams};

use crate::config::{ExperimentConfig, Method, ScenarioConfig, Task};
use crate::{ConfigError, ResultRow};

const DEFAULT_MC_SAMPLES: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    /// One line per detected property violation.
    pub violations: Vec<String>,
}

impl RunOutput {
    /// 0 when clean, 2 when any property violation was detected.
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Runs every sweep point in order. Usage and config problems come back as
/// errors (exit code 1) before any rows are produced.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, ConfigError> {
    let cap = cfg.effective_atom_cap()?;
    let points = cfg.plan()?;
    for p in &points {
        if p.task == Task::Simulate && p.trials.unwrap_or(0) == 0 {
            return Err(ConfigError::Usage("simulate needs trials > 0".into()));
        }
        if matches!(p.task, Task::VerifyPml | Task::VerifyEprl) && p.trials == Some(0) {
            return Err(ConfigError::Usage("verify needs trials > 0".into()));
        }
    }
    let mut out = RunOutput { rows: vec![], violations: vec![] };
    for p in &points {
        let start = Instant::now();
        let rows = match p.task {
            Task::Bound => bound_rows(p, cap)?,
            Task::Simulate => simulate_rows(p, cap, &mut out.violations)?,
            Task::VerifyPml | Task::VerifyEprl => verify_rows(p, &mut out.violations)?,
            Task::Rate => rate_rows(p, cap)?,
        };
        let ms = start.elapsed().as_millis() as u64;
        out.rows.extend(rows.into_iter().map(|mut r| {
            r.walltime_ms = ms;
            r.finish()
        }));
    }
    Ok(out)
}

fn scenario(p: &ExperimentConfig) -> &ScenarioConfig {
    p.scenario.as_ref().expect("validated config has a scenario")
}

fn params_of(s: &ScenarioConfig) -> String {
    s.params.describe()
}

fn method_of(p: &ExperimentConfig) -> BoundMethod {
    match p.method {
        Method::Exact => BoundMethod::Exact,
        Method::Mc => BoundMethod::MonteCarlo { samples: p.samples.unwrap_or(DEFAULT_MC_SAMPLES), seed: p.seed },
    }
}

fn method_name(m: BoundMethod) -> String {
    match m {
        BoundMethod::Exact => "exact".into(),
        BoundMethod::MonteCarlo { samples, .. } => format!("mc:{samples}"),
    }
}

fn bound_rows(p: &ExperimentConfig, cap: usize) -> Result<Vec<ResultRow>, ConfigError> {
    let s = scenario(p);
    let b = s.bundle()?;
    let ij = b.ideal_joint(cap)?;
    let m = method_of(p);
    let rep = b.theorem_bound(&ij, m)?;
    let mut row = ResultRow::new(s.id(), params_of(s), method_name(m), p.seed);
    row.ideal_error = Some(adn_core::network::error_probability_ideal(&ij, &b.error_set));
    row.bound = Some(rep.value);
    Ok(vec![row])
}

fn simulate_rows(p: &ExperimentConfig, cap: usize, violations: &mut Vec<String>) -> Result<Vec<ResultRow>, ConfigError> {
    let s = scenario(p);
    let b = s.bundle()?;
    let ij = b.ideal_joint(cap)?;
    let m = method_of(p);
    let rep = b.theorem_bound(&ij, m)?;
    let trials = p.trials.expect("checked in run");
    let mc = b.plan(&ij, cap)?.run_monte_carlo(p.seed, trials)?;
    let mut row = ResultRow::new(s.id(), params_of(s), method_name(m), p.seed);
    row.trials = Some(trials);
    row.empirical_error = Some(mc.actual.point);
    row.ci_low = Some(mc.actual.ci_low);
    row.ci_high = Some(mc.actual.ci_high);
    row.ideal_error = Some(mc.ideal_error);
    row.bound = Some(rep.value);
    let where_ = format!("{} [{}] seed {}", s.id(), params_of(s), p.seed);
    if mc.actual.ci_low > rep.value {
        violations.push(format!("{where_}: empirical lower limit {} exceeds bound {}", mc.actual.ci_low, rep.value));
    } else if rep.value - mc.actual.point < -3.0 * mc.actual.half_width() {
        violations.push(format!("{where_}: margin {} below -3 half-widths", rep.value - mc.actual.point));
    }
    if mc.dominance_violations > 0 {
        violations.push(format!("{where_}: {} trials broke the coupling inequality", mc.dominance_violations));
    }
    Ok(vec![row])
}

fn verify_rows(p: &ExperimentConfig, violations: &mut Vec<String>) -> Result<Vec<ResultRow>, ConfigError> {
    let v = p.verify.as_ref().expect("validated config has a verify section");
    let trials = p.trials.unwrap_or(100_000);
    let (name, rep): (&str, VerifyReport) = match p.task {
        Task::VerifyPml => ("verify-pml", verify_pml(&v.p_dist()?, &v.q_dist()?, trials, p.seed)?),
        _ => ("verify-eprl", verify_eprl(&v.p_dist()?, &v.q_joint_dist()?, v.v.expect("validated"), trials, p.seed)?),
    };
    let prefix = match p.task {
        Task::VerifyEprl => format!("v={};", v.v.unwrap_or(0)),
        _ => String::new(),
    };
    Ok(rep
        .rows
        .iter()
        .map(|r| {
            if r.violated {
                violations.push(format!("{name}: element {} mean {} ci_low {} above bound {}", r.element, r.mean, r.ci_low, r.bound));
            }
            let mut row = ResultRow::new(name, format!("{prefix}element={};selections={}", r.element, r.selections), "mc", p.seed);
            row.trials = Some(trials);
            row.empirical_error = Some(r.mean);
            row.ci_low = Some(r.ci_low);
            row.ci_high = Some(r.ci_high);
            row.bound = Some(r.bound);
            row
        })
        .collect())
}

/// Rate rows put the available side in `bound` and the required side in
/// `empirical_error`, so `margin` is their difference in bits.
fn rate_rows(p: &ExperimentConfig, cap: usize) -> Result<Vec<ResultRow>, ConfigError> {
    let s = scenario(p);
    let b = s.bundle()?;
    let base = params_of(s);
    let join = |extra: String| if base.is_empty() { extra } else { format!("{base};{extra}") };
    let ij = b.ideal_joint(cap)?;
    let mut rows = Vec::new();
    for m in admn_rate_check(&ij, &b.aux)? {
        let mut row = ResultRow::new(s.id(), join(format!("node={};position={}", m.node + 1, m.position + 1)), "admn", p.seed);
        row.bound = Some(m.lhs);
        row.empirical_error = Some(m.rhs);
        rows.push(row);
    }
    if b.kind == Some(ScenarioKind::Pdcf) {
        let ScenarioParams::Pdcf(pp) = b.params.as_ref().expect("presets carry parameters") else {
            unreachable!("pdcf bundles carry pdcf parameters")
        };
        let r = pdcf_rate(&pdcf_joint(pp)?)?;
        let mut row = ResultRow::new(s.id(), base.clone(), "pdcf-rate", p.seed);
        row.bound = Some(r.rate);
        rows.push(row);
        let mut row = ResultRow::new(s.id(), join("constraint".into()), "pdcf-constraint", p.seed);
        row.bound = Some(r.constraint_rhs);
        row.empirical_error = Some(r.constraint_lhs);
        rows.push(row);
    }
    if let Some(target) = p.target {
        rows.push(rate_at_target(s, &b, target, cap, p.seed)?);
    }
    Ok(rows)
}

/// `log2(L*)/n` where `L*` is the largest real message size whose bound
/// meets `target`; the decoding terms scale linearly in `L` for channel
/// coding, so one evaluation at `L = 1` suffices.
fn rate_at_target(s: &ScenarioConfig, b: &ScenarioBundle, target: f64, cap: usize, seed: u64) -> Result<ResultRow, ConfigError> {
    if b.kind != Some(ScenarioKind::ChannelCoding) {
        return Err(ConfigError::Usage("`target` applies to the channel preset only".into()));
    }
    let name = s.preset.as_deref().expect("channel coding comes from a preset");
    let unit = PresetArgs { l: Some(1), ..s.params.clone() };
    let (kind, params) = preset(name, &unit)?;
    let b1 = adn_core::scenarios::build(kind, &params)?;
    let ij = b1.ideal_joint(cap)?;
    let pts = BoundEvaluator::new(&ij, &b1.aux)?.integrands(Some(&b1.error_set))?;
    let n = s.params.n.unwrap_or(1) as f64;
    let mut row = ResultRow::new(s.id(), format!("n={};target={target}", n), "rate-at-target", seed);
    row.bound = largest_scale_at_target(&pts, target).map(|l| l.log2() / n);
    Ok(row)
}
