//! The coding scheme: refinement-chain decoding, PFR encoding, and coupled
//! simulation of the actual network against its genie-aided ideal twin.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expproc::ExpProcess;
use crate::network::{axis, ensure_valid, error_probability_ideal, AuxStructure, ErrorSet, IdealJoint, NetworkSpec, Role, VarRef};
use crate::prob::{checked_size, DEFAULT_ATOM_CAP};
use crate::rng::{derive_seed, random_uniform, tag};
use crate::stats::Proportion;

/// Ideal-joint slices a node needs to decode: `P(Y_i = y, Ū_{i,1..d})` for
/// every observed `y`, dense over `Ū` with `Ū_1` least significant.
#[derive(Debug, Clone)]
struct NodeDecoder {
    dims: Vec<usize>,
    strides: Vec<usize>,
    slices: HashMap<u32, Vec<f64>>,
}

impl NodeDecoder {
    fn new(ij: &IdealJoint, node: usize, decode: &[usize], cap: usize) -> Result<Self> {
        let dims: Vec<usize> = decode.iter().map(|&k| ij.sizes()[axis(k, Role::U)]).collect();
        let total = checked_size(dims.iter().copied(), cap)?;
        let mut strides = Vec::with_capacity(dims.len());
        let mut s = 1;
        for &d in &dims {
            strides.push(s);
            s *= d;
        }
        let ya = axis(node, Role::Y);
        let uaxes: Vec<usize> = decode.iter().map(|&k| axis(k, Role::U)).collect();
        let mut slices: HashMap<u32, Vec<f64>> = HashMap::new();
        let mut used = 0usize;
        for (atom, p) in ij.atoms() {
            let slice = match slices.get_mut(&atom[ya]) {
                Some(s) => s,
                None => {
                    used += total;
                    if used > cap {
                        return Err(Error::CapacityExceeded { atoms: used as u128, cap });
                    }
                    slices.entry(atom[ya]).or_insert_with(|| vec![0.0; total])
                }
            };
            let idx: usize = uaxes.iter().zip(&strides).map(|(&a, &st)| atom[a] as usize * st).sum();
            slice[idx] += p;
        }
        Ok(Self { dims, strides, slices })
    }
}

/// A decode that hit a zero-probability context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeFailure {
    /// 0-based position in the decoding order.
    pub position: usize,
    /// Values decoded before the failure.
    pub partial: Vec<usize>,
}

/// Precomputed tables for running the scheme on one network.
#[derive(Debug, Clone)]
pub struct CodecPlan {
    spec: NetworkSpec,
    aux: AuxStructure,
    error_set: ErrorSet,
    decoders: Vec<Option<NodeDecoder>>,
    ideal_error: f64,
}

/// Collapses trailing components onto a flat source index.
fn fold(head: usize, parts: impl IntoIterator<Item = (usize, usize)>) -> usize {
    parts.into_iter().fold(head, |acc, (v, s)| acc * s + v)
}

impl CodecPlan {
    pub fn new(spec: &NetworkSpec, aux: &AuxStructure, e: &ErrorSet) -> Result<Self> {
        let ij = IdealJoint::build(spec, aux)?;
        Self::with_joint(spec, aux, e, &ij, DEFAULT_ATOM_CAP)
    }

    pub fn with_joint(spec: &NetworkSpec, aux: &AuxStructure, e: &ErrorSet, ij: &IdealJoint, cap: usize) -> Result<Self> {
        ensure_valid(spec, aux)?;
        let problems = e.validate(spec);
        if !problems.is_empty() {
            return Err(Error::InvalidNetwork(problems));
        }
        let decoders = aux
            .nodes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if a.unique == 0 {
                    Ok(None)
                } else {
                    NodeDecoder::new(ij, i, &a.decode, cap).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            aux: aux.clone(),
            error_set: e.clone(),
            decoders,
            ideal_error: error_probability_ideal(ij, e),
        })
    }

    pub fn nodes(&self) -> usize {
        self.spec.nodes()
    }

    pub fn ideal_error(&self) -> f64 {
        self.ideal_error
    }

    /// Codebook family for one realization of the public randomness.
    pub fn codebooks(&self, codebook_seed: u64) -> Vec<ExpProcess> {
        self.aux.nodes.iter().enumerate().map(|(i, a)| ExpProcess::new(a.u.size, i as u64, codebook_seed)).collect()
    }

    /// Decoding step at `node` after observing `y`: returns `(û_{a_1}, …,
    /// û_{a_d'})`.
    pub fn decode_step(&self, node: usize, y: usize, cb: &[ExpProcess]) -> std::result::Result<Vec<usize>, DecodeFailure> {
        let a = &self.aux.nodes[node];
        let Some(dec) = &self.decoders[node] else {
            return Ok(vec![]);
        };
        let Some(slice) = dec.slices.get(&(y as u32)) else {
            return Err(DecodeFailure { position: 0, partial: vec![] });
        };
        let d = dec.dims.len();
        let mut decoded: Vec<usize> = Vec::with_capacity(a.unique);
        for j in 0..a.unique {
            let block = dec.strides[j];
            let offset: usize = decoded.iter().zip(&dec.strides).map(|(&v, &s)| v * s).sum();
            // marg[k - j] is the unnormalized law of Ū_{k..d} given the context
            let mut marg: Vec<Vec<f64>> = Vec::with_capacity(d - j + 1);
            marg.push((0..slice.len() / block).map(|idx| slice[idx * block + offset]).collect());
            for k in j..d {
                let prev = &marg[k - j];
                let m = dec.dims[k];
                marg.push(prev.chunks_exact(m).map(|c| c.iter().sum()).collect());
            }
            if marg[d - j][0] <= 0.0 {
                return Err(DecodeFailure { position: j, partial: decoded });
            }
            let mut q = vec![1.0];
            for k in (j + 1..d).rev() {
                let m = dec.dims[k];
                let (tk, tk1) = (&marg[k - j], &marg[k + 1 - j]);
                let mut meas = vec![0.0; tk.len()];
                for (v, &qv) in q.iter().enumerate() {
                    if qv > 0.0 && tk1[v] > 0.0 {
                        let scale = qv / tk1[v];
                        for uk in 0..m {
                            meas[v * m + uk] = scale * tk[v * m + uk];
                        }
                    }
                }
                q = cb[a.decode[k]].refine_rows(&meas);
            }
            let m = dec.dims[j];
            let (tj, tj1) = (&marg[0], &marg[1]);
            let mut w = vec![0.0; m];
            for (v, &qv) in q.iter().enumerate() {
                if qv > 0.0 && tj1[v] > 0.0 {
                    let scale = qv / tj1[v];
                    for (uj, wj) in w.iter_mut().enumerate() {
                        *wj += scale * tj[v * m + uj];
                    }
                }
            }
            match cb[a.decode[j]].pfr_select_sparse(w.iter().copied().enumerate()) {
                Ok(u) => decoded.push(u),
                Err(_) => return Err(DecodeFailure { position: j, partial: decoded }),
            }
        }
        Ok(decoded)
    }

    fn channel_source(&self, node: usize, x: &[usize], y: &[usize]) -> usize {
        self.spec.channels[node].inputs.iter().fold(0, |acc, &v| match v {
            VarRef::X(k) => acc * self.spec.x[k].size + x[k],
            VarRef::Y(k) => acc * self.spec.y[k].size + y[k],
        })
    }

    /// Encoding step: `U_i` by PFR on the aux-kernel row, `X_i` drawn from the
    /// output-kernel row with the supplied uniform.
    pub fn encode_step(&self, node: usize, y: usize, decoded: &[usize], cb: &[ExpProcess], uniform: f64) -> (usize, usize) {
        let a = &self.aux.nodes[node];
        let dsizes = a.unique_list().iter().map(|&k| self.aux.nodes[k].u.size);
        let src = fold(y, decoded.iter().copied().zip(dsizes.clone()));
        let (cols, vals) = a.aux_kernel.row(src);
        let u = cb[node]
            .pfr_select_sparse(cols.iter().map(|&c| c as usize).zip(vals.iter().copied()))
            .expect("kernel rows carry positive mass");
        let src_x = fold(y * a.u.size + u, decoded.iter().copied().zip(dsizes));
        (u, a.output_kernel.sample(src_x, uniform))
    }

    /// One coupled run of the ideal and actual networks.
    pub fn simulate_trial(&self, trial: u64, trial_seed: u64) -> TrialTrace {
        let n = self.nodes();
        let cb = self.codebooks(derive_seed(trial_seed, tag::CODEBOOK, 0));
        let mut t = TrialTrace::empty(trial, trial_seed, n);
        for i in 0..n {
            let u_ch = random_uniform(trial_seed, i as u64, tag::CHANNEL);
            let u_out = random_uniform(trial_seed, i as u64, tag::OUTPUT);
            let kernel = &self.spec.channels[i].kernel;
            let a = &self.aux.nodes[i];

            t.ideal_y[i] = kernel.sample(self.channel_source(i, &t.ideal_x, &t.ideal_y), u_ch);
            let genie: Vec<usize> = a.unique_list().iter().map(|&k| t.ideal_u[k]).collect();
            let (u, x) = self.encode_step(i, t.ideal_y[i], &genie, &cb, u_out);
            t.ideal_u[i] = u;
            t.ideal_x[i] = x;

            t.actual_y[i] = kernel.sample(self.channel_source(i, &t.actual_x, &t.actual_y), u_ch);
            let decoded = match self.decode_step(i, t.actual_y[i], &cb) {
                Ok(d) => d,
                Err(f) => {
                    t.degenerate = true;
                    t.first_error.get_or_insert((i, f.position));
                    let mut d = f.partial;
                    d.resize(a.unique, 0);
                    d
                }
            };
            if t.first_error.is_none() {
                if let Some(j) = decoded.iter().zip(&genie).position(|(a, b)| a != b) {
                    t.first_error = Some((i, j));
                }
            }
            let (u, x) = if t.actual_y[i] == t.ideal_y[i] && decoded == genie {
                (t.ideal_u[i], t.ideal_x[i])
            } else {
                self.encode_step(i, t.actual_y[i], &decoded, &cb, u_out)
            };
            t.actual_u[i] = u;
            t.actual_x[i] = x;
            t.decoded[i] = decoded;
        }
        t.ideal_in_error = self.error_set.contains(&t.ideal_x, &t.ideal_y);
        t.actual_in_error = t.degenerate || self.error_set.contains(&t.actual_x, &t.actual_y);
        t
    }

    /// Runs `trials` coupled trials; trial `t` uses seed
    /// `derive_seed(master_seed, TRIAL, t)`. Output is independent of the
    /// thread count because only per-trial counts are aggregated.
    pub fn run_monte_carlo(&self, master_seed: u64, trials: u64) -> Result<MonteCarloResult> {
        if trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        const CHUNK: u64 = 1024;
        let chunks: Vec<u64> = (0..trials.div_ceil(CHUNK)).collect();
        let parts: Vec<Tally> = chunks
            .par_iter()
            .map(|&c| {
                let mut tally = Tally::default();
                for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                    let trace = self.simulate_trial(t, derive_seed(master_seed, tag::TRIAL, t));
                    tally.record(&trace);
                }
                tally
            })
            .collect();
        let mut total = Tally::default();
        parts.iter().for_each(|p| total.merge(p));
        let actual = Proportion::wilson(total.actual, trials);
        // an error-free trial fixes a codebook at least as good as the average
        let witness = total.first_clean.or(if actual.point >= 1.0 { Some(0) } else { None });
        Ok(MonteCarloResult {
            seed: master_seed,
            trials,
            actual,
            coupling_failure: Proportion::wilson(total.decode, trials),
            ideal_empirical: Proportion::wilson(total.ideal, trials),
            ideal_error: self.ideal_error,
            dominance_violations: total.violations,
            degenerate: total.degenerate,
            derandomization_witness: witness,
        })
    }

    /// The first `count` traces of a Monte Carlo run, for inspection.
    pub fn traces(&self, master_seed: u64, count: u64) -> Vec<TrialTrace> {
        (0..count)
            .into_par_iter()
            .map(|t| self.simulate_trial(t, derive_seed(master_seed, tag::TRIAL, t)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    actual: u64,
    ideal: u64,
    decode: u64,
    violations: u64,
    degenerate: u64,
    first_clean: Option<u64>,
}

impl Tally {
    fn record(&mut self, t: &TrialTrace) {
        self.actual += t.actual_in_error as u64;
        self.ideal += t.ideal_in_error as u64;
        self.decode += t.decoding_error() as u64;
        self.violations += !t.coupling_dominance_holds() as u64;
        self.degenerate += t.degenerate as u64;
        if !t.actual_in_error && self.first_clean.is_none() {
            self.first_clean = Some(t.trial);
        }
    }

    fn merge(&mut self, o: &Tally) {
        self.actual += o.actual;
        self.ideal += o.ideal;
        self.decode += o.decode;
        self.violations += o.violations;
        self.degenerate += o.degenerate;
        self.first_clean = match (self.first_clean, o.first_clean) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
    }
}

/// One coupled trial. Node and position indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub trial: u64,
    pub seed: u64,
    pub ideal_x: Vec<usize>,
    pub ideal_y: Vec<usize>,
    pub ideal_u: Vec<usize>,
    pub actual_x: Vec<usize>,
    pub actual_y: Vec<usize>,
    pub actual_u: Vec<usize>,
    /// Values decoded by each actual node, in decoding order.
    pub decoded: Vec<Vec<usize>>,
    /// First `(node, position)` whose decoded value differs from the genie's.
    pub first_error: Option<(usize, usize)>,
    pub ideal_in_error: bool,
    pub actual_in_error: bool,
    /// Some decode hit a zero-probability context.
    pub degenerate: bool,
}

impl TrialTrace {
    fn empty(trial: u64, seed: u64, n: usize) -> Self {
        Self {
            trial,
            seed,
            ideal_x: vec![0; n],
            ideal_y: vec![0; n],
            ideal_u: vec![0; n],
            actual_x: vec![0; n],
            actual_y: vec![0; n],
            actual_u: vec![0; n],
            decoded: vec![vec![]; n],
            first_error: None,
            ideal_in_error: false,
            actual_in_error: false,
            degenerate: false,
        }
    }

    pub fn decoding_error(&self) -> bool {
        self.first_error.is_some() || self.degenerate
    }

    /// `1{actual ∈ E} ≤ 1{ideal ∈ E} + 1{decoding error}`.
    pub fn coupling_dominance_holds(&self) -> bool {
        !self.actual_in_error || self.ideal_in_error || self.decoding_error()
    }

    pub fn networks_coincide(&self) -> bool {
        self.ideal_x == self.actual_x && self.ideal_y == self.actual_y && self.ideal_u == self.actual_u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub seed: u64,
    pub trials: u64,
    /// `P((X̃^N, Ỹ^N) ∈ E)`.
    pub actual: Proportion,
    /// Trials where some node decoded wrongly.
    pub coupling_failure: Proportion,
    /// Empirical ideal-network error, for comparison with `ideal_error`.
    pub ideal_empirical: Proportion,
    /// Exact `P((X^N, Y^N) ∈ E)`.
    pub ideal_error: f64,
    /// Trials breaking the per-trial union inequality; zero by construction.
    pub dominance_violations: u64,
    pub degenerate: u64,
    /// Index of a trial whose error indicator is at most the batch mean.
    pub derandomization_witness: Option<u64>,
}
