//! Experiment configuration: JSON schema, parsing and validation.
//!
//! Nodes and decode indices are 1-based in the file and 0-based once
//! converted.

use std::path::PathBuf;

use adn_core::network::{AuxStructure, Channel, ErrorSet, Field, NetworkSpec, NodeAux, Role, VarRef};
use adn_core::prob::{Alphabet, FiniteDist, JointDist, Kernel, DEFAULT_ATOM_CAP, INPUT_TOLERANCE};
use adn_core::scenarios::{preset_bundle, PresetArgs, ScenarioBundle, PRESETS};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ConfigError;

/// Environment override for the atom cap; the only variable read.
pub const ATOM_CAP_ENV: &str = "ADN_ATOM_CAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    #[default]
    Bound,
    VerifyPml,
    VerifyEprl,
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: Method,
    /// Sample count for `method = mc`.
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub atom_cap: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    /// Target error for the `rate` task's message-size search.
    #[serde(default)]
    pub target: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: PresetArgs,
    #[serde(default)]
    pub inline: Option<InlineNetwork>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub p: Vec<f64>,
    /// `Q` for the rank lemma.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    /// `Q_{V,U}` rows indexed by `v` for the refinement lemma.
    #[serde(default)]
    pub q_joint: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub v: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineNetwork {
    #[serde(default)]
    pub name: Option<String>,
    pub nodes: Vec<InlineNode>,
    pub error_set: InlineErrorSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineNode {
    pub y: usize,
    #[serde(default)]
    pub inputs: Vec<String>,
    pub channel: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub u: usize,
    #[serde(default)]
    pub decode: Vec<usize>,
    #[serde(default)]
    pub unique: Option<usize>,
    #[serde(default)]
    pub aux: Option<Vec<Vec<f64>>>,
    pub x: usize,
    pub output: Vec<Vec<f64>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InlineErrorSet {
    Empty,
    Everything,
    MessageMismatch {
        pairs: Vec<(InlineField, InlineField)>,
    },
    Distortion {
        source: InlineField,
        recon: InlineField,
        table: Vec<Vec<f64>>,
        threshold: f64,
    },
    Function {
        args: Vec<InlineField>,
        f: Vec<usize>,
        recon: InlineField,
        table: Vec<Vec<f64>>,
        threshold: f64,
    },
    Custom {
        members: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineField {
    pub node: usize,
    pub var: String,
    #[serde(default = "one")]
    pub divisor: usize,
    #[serde(default)]
    pub modulus: Option<usize>,
}

/// Parses and validates a config. Syntax errors carry line and column;
/// schema errors carry the field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ConfigError::Parse { line: inner.line(), column: inner.column(), message: inner.to_string() }
        } else {
            ConfigError::Schema { path, message: inner.to_string() }
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema { path: path.into(), message: message.into() }
}

fn check_rows(path: &str, rows: &[Vec<f64>], count: usize, width: usize) -> Result<(), ConfigError> {
    if rows.len() != count {
        return Err(schema(path, format!("expected {count} rows, found {}", rows.len())));
    }
    for (r, row) in rows.iter().enumerate() {
        let at = format!("{path}[{r}]");
        if row.len() != width {
            return Err(schema(at, format!("expected {width} entries, found {}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(schema(at, format!("entry {v} is not a probability")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > INPUT_TOLERANCE {
            return Err(schema(at, format!("row sums to {}, not 1", crate::sig12(sum))));
        }
    }
    Ok(())
}

fn check_probs(path: &str, p: &[f64]) -> Result<(), ConfigError> {
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(schema(path, format!("entry {v} is not a probability")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > INPUT_TOLERANCE {
        return Err(schema(path, format!("entries sum to {}, not 1", crate::sig12(sum))));
    }
    Ok(())
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        match self.task {
            Task::VerifyPml | Task::VerifyEprl => {
                let v = self.verify.as_ref().ok_or_else(|| schema("verify", "verify tasks need a `verify` section"))?;
                if v.p.is_empty() {
                    return Err(schema("verify.p", "P is empty"));
                }
                check_probs("verify.p", &v.p)?;
                if self.task == Task::VerifyPml {
                    let q = v.q.as_ref().ok_or_else(|| schema("verify.q", "missing Q"))?;
                    if q.len() != v.p.len() {
                        return Err(schema("verify.q", format!("Q has {} entries, P has {}", q.len(), v.p.len())));
                    }
                    check_probs("verify.q", q)?;
                } else {
                    let q = v.q_joint.as_ref().ok_or_else(|| schema("verify.q_joint", "missing Q_{V,U}"))?;
                    if q.is_empty() || q.iter().any(|r| r.len() != v.p.len()) {
                        return Err(schema("verify.q_joint", "every row must have one entry per element of P"));
                    }
                    let flat: Vec<f64> = q.iter().flatten().copied().collect();
                    check_probs("verify.q_joint", &flat)?;
                    match v.v {
                        Some(x) if x < q.len() => {}
                        _ => return Err(schema("verify.v", format!("v must index a row of q_joint (0..{})", q.len()))),
                    }
                }
            }
            _ => {
                let s = self.scenario.as_ref().ok_or_else(|| schema("scenario", "this task needs a scenario"))?;
                s.validate()?;
            }
        }
        if self.method == Method::Mc && self.samples == Some(0) {
            return Err(schema("samples", "sample count must be positive"));
        }
        if let Some(t) = self.target {
            if !(t > 0.0 && t < 1.0) {
                return Err(schema("target", "target error must lie in (0, 1)"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(schema("sweep.values", "sweep needs at least one value"));
            }
            let inline = self.scenario.as_ref().is_some_and(|s| s.inline.is_some());
            match sw.param.as_str() {
                "trials" | "seed" => {}
                "L" | "L2" | "J" | "n" | "crossover" | "threshold" | "swap" if !inline => {}
                other => return Err(schema("sweep.param", format!("cannot sweep `{other}` here"))),
            }
        }
        Ok(())
    }

    /// Atom cap after the environment override.
    pub fn effective_atom_cap(&self) -> Result<usize, ConfigError> {
        match std::env::var(ATOM_CAP_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| ConfigError::Usage(format!("{ATOM_CAP_ENV}={v} is not a positive integer"))),
            Err(_) => Ok(self.atom_cap.unwrap_or(DEFAULT_ATOM_CAP)),
        }
    }

    /// One config per sweep point, in the order the values were listed.
    pub fn plan(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        let Some(sw) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        sw.values
            .iter()
            .enumerate()
            .map(|(k, value)| {
                let mut point = self.clone();
                point.sweep = None;
                let at = format!("sweep.values[{k}]");
                match sw.param.as_str() {
                    "trials" => point.trials = Some(serde_json::from_value(value.clone()).map_err(|e| schema(at, e.to_string()))?),
                    "seed" => point.seed = serde_json::from_value(value.clone()).map_err(|e| schema(at, e.to_string()))?,
                    name => {
                        let s = point.scenario.as_mut().expect("validated");
                        let mut obj = serde_json::to_value(&s.params).expect("preset args serialize");
                        obj.as_object_mut().expect("object")[name] = value.clone();
                        s.params = serde_json::from_value(obj).map_err(|e| schema(at, e.to_string()))?;
                    }
                }
                Ok(point)
            })
            .collect()
    }
}

impl ScenarioConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        match (&self.preset, &self.inline) {
            (Some(name), None) => {
                if !PRESETS.contains(&name.as_str()) {
                    return Err(schema("scenario.preset", format!("unknown preset `{name}`; known: {}", PRESETS.join(", "))));
                }
                Ok(())
            }
            (None, Some(net)) => {
                if self.params != PresetArgs::default() {
                    return Err(schema("scenario.params", "parameters apply to presets only"));
                }
                net.to_bundle().map(|_| ())
            }
            _ => Err(schema("scenario", "give exactly one of `preset` and `inline`")),
        }
    }

    /// Short id for result rows.
    pub fn id(&self) -> String {
        match (&self.preset, &self.inline) {
            (Some(name), _) => name.clone(),
            (_, Some(net)) => net.name.clone().unwrap_or_else(|| "inline".into()),
            _ => String::new(),
        }
    }

    pub fn bundle(&self) -> Result<ScenarioBundle, ConfigError> {
        match (&self.preset, &self.inline) {
            (Some(name), _) => Ok(preset_bundle(name, &self.params)?),
            (_, Some(net)) => net.to_bundle(),
            _ => Err(schema("scenario", "give exactly one of `preset` and `inline`")),
        }
    }
}

impl VerifyConfig {
    pub fn p_dist(&self) -> Result<FiniteDist, ConfigError> {
        Ok(FiniteDist::from_probs("P", self.p.clone())?)
    }

    pub fn q_dist(&self) -> Result<FiniteDist, ConfigError> {
        Ok(FiniteDist::from_probs("Q", self.q.clone().unwrap_or_default())?)
    }

    pub fn q_joint_dist(&self) -> Result<JointDist, ConfigError> {
        let rows = self.q_joint.clone().unwrap_or_default();
        let axes = vec![Alphabet::new("V", rows.len()), Alphabet::new("U", self.p.len())];
        Ok(JointDist::new(axes, rows.concat())?)
    }
}

fn parse_var(path: &str, s: &str, node: usize) -> Result<VarRef, ConfigError> {
    let bad = || schema(path, format!("`{s}` is not of the form x<k> or y<k> with k < {}", node + 1));
    let (role, k) = s.split_at(1.min(s.len()));
    let k: usize = k.parse().map_err(|_| bad())?;
    if k == 0 || k > node {
        return Err(bad());
    }
    match role {
        "x" | "X" => Ok(VarRef::X(k - 1)),
        "y" | "Y" => Ok(VarRef::Y(k - 1)),
        _ => Err(bad()),
    }
}

fn kernel(path: &str, from: Vec<Alphabet>, to: Alphabet, rows: &[Vec<f64>]) -> Result<Kernel, ConfigError> {
    let count = from.iter().map(|a| a.size).product();
    check_rows(path, rows, count, to.size)?;
    Kernel::from_rows(from, to, rows).map_err(|e| schema(path, e.to_string()))
}

impl InlineField {
    fn convert(&self, path: &str, spec: &NetworkSpec) -> Result<Field, ConfigError> {
        if self.node == 0 || self.node > spec.nodes() {
            return Err(schema(format!("{path}.node"), format!("node must be in 1..={}", spec.nodes())));
        }
        let node = self.node - 1;
        let (role, size) = match self.var.as_str() {
            "x" | "X" => (Role::X, spec.x[node].size),
            "y" | "Y" => (Role::Y, spec.y[node].size),
            other => return Err(schema(format!("{path}.var"), format!("`{other}` is not `x` or `y`"))),
        };
        if self.divisor == 0 {
            return Err(schema(format!("{path}.divisor"), "divisor must be positive"));
        }
        let modulus = self.modulus.unwrap_or(size.div_ceil(self.divisor));
        Ok(Field::part(node, role, self.divisor, modulus))
    }
}

impl InlineNetwork {
    pub fn to_bundle(&self) -> Result<ScenarioBundle, ConfigError> {
        let mut spec = NetworkSpec { x: vec![], y: vec![], channels: vec![] };
        let mut aux = AuxStructure { nodes: vec![] };
        if self.nodes.is_empty() {
            return Err(schema("scenario.inline.nodes", "network has no nodes"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let path = format!("scenario.inline.nodes[{i}]");
            let label = i + 1;
            if n.y == 0 || n.x == 0 || n.u == 0 {
                return Err(schema(&path, "alphabet sizes must be positive"));
            }
            let y = Alphabet::new(format!("Y{label}"), n.y);
            let x = Alphabet::new(format!("X{label}"), n.x);
            let u = Alphabet::new(format!("U{label}"), n.u);
            let inputs = n
                .inputs
                .iter()
                .enumerate()
                .map(|(k, s)| parse_var(&format!("{path}.inputs[{k}]"), s, i))
                .collect::<Result<Vec<_>, _>>()?;
            let from: Vec<Alphabet> = inputs.iter().map(|&v| spec.alphabet(v).clone()).collect();
            let ch = kernel(&format!("{path}.channel"), from, y.clone(), &n.channel)?;

            let unique = n.unique.unwrap_or(n.decode.len());
            if unique > n.decode.len() {
                return Err(schema(format!("{path}.unique"), "unique count exceeds the decode list"));
            }
            let mut decode = Vec::with_capacity(n.decode.len());
            for (k, &a) in n.decode.iter().enumerate() {
                if a == 0 || a >= label || decode.contains(&(a - 1)) {
                    return Err(schema(format!("{path}.decode[{k}]"), format!("{a} is not a distinct earlier node")));
                }
                decode.push(a - 1);
            }
            let mut from = vec![y.clone()];
            from.extend(decode[..unique].iter().map(|&k: &usize| aux.nodes[k].u.clone()));
            let aux_kernel = match &n.aux {
                Some(rows) => kernel(&format!("{path}.aux"), from.clone(), u.clone(), rows)?,
                None if n.u == 1 => Kernel::deterministic(from.clone(), u.clone(), |_| 0)?,
                None => return Err(schema(format!("{path}.aux"), "nodes with |U| > 1 need an aux kernel")),
            };
            from.insert(1, u.clone());
            let output_kernel = kernel(&format!("{path}.output"), from, x.clone(), &n.output)?;

            spec.x.push(x);
            spec.y.push(y);
            spec.channels.push(Channel { inputs, kernel: ch });
            aux.nodes.push(NodeAux { decode, unique, u, aux_kernel, output_kernel });
        }
        let problems = adn_core::network::validate(&spec, &aux);
        if !problems.is_empty() {
            return Err(schema("scenario.inline", problems.join("; ")));
        }
        let error_set = self.error_set(&spec)?;
        let problems = error_set.validate(&spec);
        if !problems.is_empty() {
            return Err(schema("scenario.inline.error_set", problems.join("; ")));
        }
        Ok(ScenarioBundle {
            name: self.name.clone().unwrap_or_else(|| "inline".into()),
            kind: None,
            params: None,
            spec,
            aux,
            error_set,
        })
    }

    fn error_set(&self, spec: &NetworkSpec) -> Result<ErrorSet, ConfigError> {
        let p = "scenario.inline.error_set";
        Ok(match &self.error_set {
            InlineErrorSet::Empty => ErrorSet::Empty,
            InlineErrorSet::Everything => ErrorSet::Everything,
            InlineErrorSet::MessageMismatch { pairs } => ErrorSet::MessageMismatch(
                pairs
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        Ok((a.convert(&format!("{p}.pairs[{k}][0]"), spec)?, b.convert(&format!("{p}.pairs[{k}][1]"), spec)?))
                    })
                    .collect::<Result<_, ConfigError>>()?,
            ),
            InlineErrorSet::Distortion { source, recon, table, threshold } => ErrorSet::Distortion {
                source: source.convert(&format!("{p}.source"), spec)?,
                recon: recon.convert(&format!("{p}.recon"), spec)?,
                table: table.clone(),
                threshold: *threshold,
            },
            InlineErrorSet::Function { args, f, recon, table, threshold } => ErrorSet::FunctionMismatch {
                args: args
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a.convert(&format!("{p}.args[{k}]"), spec))
                    .collect::<Result<_, _>>()?,
                f: f.clone(),
                recon: recon.convert(&format!("{p}.recon"), spec)?,
                table: table.clone(),
                threshold: *threshold,
            },
            InlineErrorSet::Custom { members } => ErrorSet::Custom(members.clone()),
        })
    }
}
