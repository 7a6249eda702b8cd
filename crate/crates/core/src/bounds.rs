//! Exact and Monte Carlo evaluation of the achievability bounds.
//!
//! Information densities are in bits; the `γ` factors use natural logs.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{axis, AuxStructure, ErrorSet, IdealJoint, MarginalMap, Role};
use crate::prob::JointDist;
use crate::rng::{derive_seed, random_uniform, tag};
use crate::stats::{Moments, NeumaierSum};

/// `γ_{i,j} = ∏_{k=j+1}^{d_i} (ln|U_{a_{i,k}}| + 1)`, with `j` a 0-based
/// position in node `i`'s decoding order.
pub fn gamma(aux: &AuxStructure, node: usize, j: usize) -> f64 {
    aux.nodes[node].decode.iter().skip(j + 1).map(|&k| (aux.u_size(k) as f64).ln() + 1.0).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundMethod {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub node: usize,
    pub position: usize,
    pub gamma: f64,
    /// `E[B_{i,j}]` before clamping.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub method: BoundMethod,
    /// 99% interval; equal to `(value, value)` for exact evaluation.
    pub ci: (f64, f64),
    /// `E[1{E} + Σ B_{i,j}]` without the clamp at one.
    pub raw: f64,
    pub terms: Vec<TermReport>,
}

/// Cached `ι(A; B)` evaluator over an ideal joint.
#[derive(Debug, Clone)]
struct Density {
    ab: usize,
    a: usize,
    b: Option<usize>,
}

#[derive(Debug, Clone)]
struct Factor {
    /// `ι(Ū_k; Ū_{[d]∖[j..k]}, Y_i)`
    observed: Density,
    /// `ι(Ū_k; Ū'_{a_k}, Y_{a_k})`
    reference: Density,
    plus_one: bool,
}

#[derive(Debug, Clone)]
struct Term {
    node: usize,
    position: usize,
    gamma: f64,
    factors: Vec<Factor>,
}

/// Evaluates `B_{i,j}` terms and bound integrands atom by atom.
pub struct BoundEvaluator<'a> {
    ij: &'a IdealJoint,
    maps: Vec<MarginalMap>,
    terms: Vec<Term>,
}

impl<'a> BoundEvaluator<'a> {
    pub fn new(ij: &'a IdealJoint, aux: &AuxStructure) -> Result<Self> {
        if aux.nodes.len() != ij.nodes() {
            return Err(Error::ShapeMismatch("aux structure and ideal joint disagree on node count".into()));
        }
        let mut maps = Vec::new();
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut map_of = |axes: Vec<usize>| -> Result<usize> {
            if let Some(&k) = index.get(&axes) {
                return Ok(k);
            }
            maps.push(ij.marginal_map(&axes)?);
            index.insert(axes, maps.len() - 1);
            Ok(maps.len() - 1)
        };
        let mut density = |a: Vec<usize>, b: Vec<usize>| -> Result<Density> {
            let mut ab = a.clone();
            ab.extend(&b);
            Ok(Density { ab: map_of(ab)?, a: map_of(a)?, b: if b.is_empty() { None } else { Some(map_of(b)?) } })
        };
        let mut terms = Vec::new();
        for (i, na) in aux.nodes.iter().enumerate() {
            let d = na.decode.len();
            for j in 0..na.unique {
                let mut factors = Vec::with_capacity(d - j);
                for k in j..d {
                    let target = na.decode[k];
                    let a = vec![axis(target, Role::U)];
                    let mut b: Vec<usize> = (0..d).filter(|&l| l < j || l > k).map(|l| axis(na.decode[l], Role::U)).collect();
                    b.push(axis(i, Role::Y));
                    let observed = density(a.clone(), b)?;
                    let ta = &aux.nodes[target];
                    let mut b: Vec<usize> = ta.unique_list().iter().map(|&l| axis(l, Role::U)).collect();
                    b.push(axis(target, Role::Y));
                    let reference = density(a, b)?;
                    factors.push(Factor { observed, reference, plus_one: k > j });
                }
                terms.push(Term { node: i, position: j, gamma: gamma(aux, i, j), factors });
            }
        }
        Ok(Self { ij, maps, terms })
    }

    fn iota(&self, d: &Density, atom: &[u32]) -> Result<f64> {
        let pab = self.maps[d.ab].at(atom);
        if pab <= 0.0 {
            return Err(Error::ZeroProbabilityPoint);
        }
        let pa = self.maps[d.a].at(atom);
        let pb = d.b.map_or(1.0, |b| self.maps[b].at(atom));
        Ok(pab.log2() - pa.log2() - pb.log2())
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// `(node, position)` of each term, in evaluation order.
    pub fn term_ids(&self) -> Vec<(usize, usize)> {
        self.terms.iter().map(|t| (t.node, t.position)).collect()
    }

    fn eval(&self, t: &Term, atom: &[u32]) -> Result<f64> {
        let mut acc = t.gamma;
        for f in &t.factors {
            let e = -self.iota(&f.observed, atom)? + self.iota(&f.reference, atom)?;
            acc *= e.exp2() + if f.plus_one { 1.0 } else { 0.0 };
        }
        Ok(acc)
    }

    /// `B_{i,j}` at an ideal-joint atom (full `3N` value tuple).
    pub fn b_term(&self, atom: &[u32], node: usize, position: usize) -> Result<f64> {
        let t = self
            .terms
            .iter()
            .find(|t| t.node == node && t.position == position)
            .ok_or_else(|| Error::InvalidParameter(format!("no term for node {} position {}", node + 1, position + 1)))?;
        self.eval(t, atom)
    }

    /// All `B_{i,j}` at one atom, in [`BoundEvaluator::term_ids`] order.
    pub fn terms_at(&self, atom: &[u32]) -> Result<Vec<f64>> {
        self.terms.iter().map(|t| self.eval(t, atom)).collect()
    }

    fn indicator(&self, k: usize, e: Option<&ErrorSet>) -> f64 {
        match e {
            Some(e) => {
                let (x, y) = self.ij.xy(k);
                if e.contains(&x, &y) {
                    1.0
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    /// Per atom: probability, error indicator and unclamped `Σ B_{i,j}`.
    pub fn integrands(&self, e: Option<&ErrorSet>) -> Result<Vec<(f64, f64, f64)>> {
        (0..self.ij.len())
            .into_par_iter()
            .map(|k| {
                let s: f64 = self.terms_at(self.ij.atom(k))?.iter().sum();
                Ok((self.ij.prob(k), self.indicator(k, e), s))
            })
            .collect()
    }

    /// `E[min{1{E} + Σ_{i,j} B_{i,j}, 1}]` by enumerating every atom.
    pub fn exact(&self, e: Option<&ErrorSet>) -> Result<BoundReport> {
        const CHUNK: usize = 8192;
        let n = self.ij.len();
        let nt = self.terms.len();
        let parts: Vec<(NeumaierSum, NeumaierSum, Vec<NeumaierSum>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut total = NeumaierSum::default();
                let mut raw = NeumaierSum::default();
                let mut per = vec![NeumaierSum::default(); nt];
                for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let p = self.ij.prob(k);
                    let b = self.terms_at(self.ij.atom(k))?;
                    for (acc, v) in per.iter_mut().zip(&b) {
                        acc.add(p * v);
                    }
                    let s = self.indicator(k, e) + b.iter().sum::<f64>();
                    total.add(p * s.min(1.0));
                    raw.add(p * s);
                }
                Ok((total, raw, per))
            })
            .collect::<Result<_>>()?;
        let mut total = NeumaierSum::default();
        let mut raw = NeumaierSum::default();
        let mut per = vec![NeumaierSum::default(); nt];
        for (t, r, p) in &parts {
            total.merge(t);
            raw.merge(r);
            for (a, b) in per.iter_mut().zip(p) {
                a.merge(b);
            }
        }
        let value = total.total().clamp(0.0, 1.0);
        Ok(BoundReport {
            value,
            method: BoundMethod::Exact,
            ci: (value, value),
            raw: raw.total(),
            terms: self.report_terms(per.iter().map(|s| s.total())),
        })
    }

    /// The same expectation estimated from `samples` atoms drawn from the
    /// ideal joint by inverse transform.
    pub fn monte_carlo(&self, e: Option<&ErrorSet>, samples: u64, seed: u64) -> Result<BoundReport> {
        if samples == 0 {
            return Err(Error::InvalidParameter("samples must be positive".into()));
        }
        const CHUNK: u64 = 8192;
        let cum = self.ij.cumulative();
        let stream = derive_seed(seed, tag::BOUND_SAMPLE, 0);
        let nt = self.terms.len();
        let parts: Vec<(Moments, Moments, Vec<Moments>)> = (0..samples.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut total = Moments::default();
                let mut raw = Moments::default();
                let mut per = vec![Moments::default(); nt];
                for s in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                    let k = self.ij.sample_index(&cum, random_uniform(stream, s, 0));
                    let b = self.terms_at(self.ij.atom(k))?;
                    for (acc, &v) in per.iter_mut().zip(&b) {
                        acc.push(v);
                    }
                    let v = self.indicator(k, e) + b.iter().sum::<f64>();
                    total.push(v.min(1.0));
                    raw.push(v);
                }
                Ok((total, raw, per))
            })
            .collect::<Result<_>>()?;
        let mut total = Moments::default();
        let mut raw = Moments::default();
        let mut per = vec![Moments::default(); nt];
        for (t, r, p) in &parts {
            total.merge(t);
            raw.merge(r);
            for (a, b) in per.iter_mut().zip(p) {
                a.merge(b);
            }
        }
        Ok(BoundReport {
            value: total.mean(),
            method: BoundMethod::MonteCarlo { samples, seed },
            ci: total.bernstein_interval(0.0, 1.0),
            raw: raw.mean(),
            terms: self.report_terms(per.iter().map(|m| m.mean())),
        })
    }

    fn report_terms(&self, means: impl Iterator<Item = f64>) -> Vec<TermReport> {
        self.terms
            .iter()
            .zip(means)
            .map(|(t, mean)| TermReport { node: t.node, position: t.position, gamma: t.gamma, mean })
            .collect()
    }
}

/// Achievability bound on `P((X̃^N, Ỹ^N) ∈ E)`, or on the total variation distance
/// when `e` is `None`.
pub fn theorem_bound(ij: &IdealJoint, aux: &AuxStructure, e: Option<&ErrorSet>, method: BoundMethod) -> Result<BoundReport> {
    let ev = BoundEvaluator::new(ij, aux)?;
    match method {
        BoundMethod::Exact => ev.exact(e),
        BoundMethod::MonteCarlo { samples, seed } => ev.monte_carlo(e, samples, seed),
    }
}

/// Largest `λ ≥ 0` with `Σ p · min{ind + λ s, 1} ≤ target`, for integrands
/// whose decoding terms scale linearly in a message size. `None` if even
/// `λ = 0` exceeds the target.
pub fn largest_scale_at_target(points: &[(f64, f64, f64)], target: f64) -> Option<f64> {
    let at = |lambda: f64| -> f64 {
        let mut acc = NeumaierSum::default();
        for &(p, ind, s) in points {
            acc.add(p * (ind + lambda * s).min(1.0));
        }
        acc.total()
    };
    if at(0.0) > target {
        return None;
    }
    let mut hi = 1.0;
    while at(hi) <= target {
        hi *= 2.0;
        if hi > 1e300 {
            return Some(f64::INFINITY);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Largest integer `L` in `1..=max` whose bound is at most `target`, for a
/// bound non-decreasing in `L`.
pub fn largest_integer_at_target(max: u64, target: f64, mut bound: impl FnMut(u64) -> Result<f64>) -> Result<Option<u64>> {
    if bound(1)? > target {
        return Ok(None);
    }
    let mut lo = 1;
    let mut hi = 2;
    while hi <= max && bound(hi)? <= target {
        lo = hi;
        hi *= 2;
    }
    let mut hi = hi.min(max + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if bound(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Expected `I(A;B)` in bits under an ideal joint.
fn mutual_info_sparse(ij: &IdealJoint, a: &[usize], b: &[usize]) -> Result<f64> {
    let mut ab = a.to_vec();
    ab.extend(b);
    let mab = ij.marginal_map(&ab)?;
    let ma = ij.marginal_map(a)?;
    let mb = ij.marginal_map(b)?;
    let mut acc = NeumaierSum::default();
    for (atom, p) in ij.atoms() {
        let pb = if b.is_empty() { 1.0 } else { mb.at(atom) };
        acc.add(p * (mab.at(atom) / (ma.at(atom) * pb)).log2());
    }
    Ok(acc.total().max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmnMargin {
    pub node: usize,
    pub position: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub strict: bool,
}

/// Tolerance below which a margin is reported as non-strict.
pub const MARGIN_TOLERANCE: f64 = 1e-12;

/// Single-letter rate condition for every `(i, j ≤ d'_i)`:
/// `I(Ū_j; Ū_{[d]∖{j}}, Y_i) − I(Ū_j; Ū'_{a_j}, Y_{a_j})` against
/// `Σ_{k>j} max{I(Ū_k; Ū'_{a_k}, Y_{a_k}) − I(Ū_k; Ū_{[d]∖[j..k]}, Y_i), 0}`.
pub fn admn_rate_check(ij: &IdealJoint, aux: &AuxStructure) -> Result<Vec<AdmnMargin>> {
    let reference = |target: usize| -> Vec<usize> {
        let mut b: Vec<usize> = aux.nodes[target].unique_list().iter().map(|&l| axis(l, Role::U)).collect();
        b.push(axis(target, Role::Y));
        b
    };
    let mut out = Vec::new();
    for (i, na) in aux.nodes.iter().enumerate() {
        let d = na.decode.len();
        let observed = |j: usize, k: usize| -> Vec<usize> {
            let mut b: Vec<usize> = (0..d).filter(|&l| l < j || l > k).map(|l| axis(na.decode[l], Role::U)).collect();
            b.push(axis(i, Role::Y));
            b
        };
        for j in 0..na.unique {
            let uj = [axis(na.decode[j], Role::U)];
            let lhs = mutual_info_sparse(ij, &uj, &observed(j, j))? - mutual_info_sparse(ij, &uj, &reference(na.decode[j]))?;
            let mut rhs = 0.0;
            for k in j + 1..d {
                let uk = [axis(na.decode[k], Role::U)];
                let gap = mutual_info_sparse(ij, &uk, &reference(na.decode[k]))? - mutual_info_sparse(ij, &uk, &observed(j, k))?;
                rhs += gap.max(0.0);
            }
            let margin = lhs - rhs;
            out.push(AdmnMargin { node: i, position: j, lhs, rhs, margin, strict: margin > MARGIN_TOLERANCE });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdcfRate {
    pub rate: f64,
    pub feasible: bool,
    pub terms: [f64; 4],
    /// `I(U; Y_r | V)`
    pub constraint_lhs: f64,
    /// `I(U; Y | V) + I(U, Y; X | V)`
    pub constraint_rhs: f64,
}

/// The four-term partial decode-forward rate, from a joint over the axes
/// `(X, V, Y_r, U, X_r, Y)` in that order.
pub fn pdcf_rate(joint: &JointDist) -> Result<PdcfRate> {
    if joint.num_axes() != 6 {
        return Err(Error::KindMismatch(format!(
            "rate expression needs axes (X, V, Yr, U, Xr, Y), got {} axes",
            joint.num_axes()
        )));
    }
    const X: usize = 0;
    const V: usize = 1;
    const YR: usize = 2;
    const U: usize = 3;
    const Y: usize = 5;
    let mi = |a: &[usize], b: &[usize], c: &[usize]| joint.mutual_info(a, b, c);
    let i_v_y = mi(&[V], &[Y], &[])?;
    let i_v_yr = mi(&[V], &[YR], &[])?;
    let i_uy_x_v = mi(&[U, Y], &[X], &[V])?;
    let i_vu_y = mi(&[V, U], &[Y], &[])?;
    let i_u_yr_v = mi(&[U], &[YR], &[V])?;
    let i_u_y_v = mi(&[U], &[Y], &[V])?;
    let terms = [
        i_v_y + i_uy_x_v,
        i_v_yr + i_uy_x_v,
        i_vu_y + i_uy_x_v - i_u_yr_v,
        i_v_yr + i_u_y_v + i_uy_x_v - i_u_yr_v,
    ];
    let rate = terms.iter().copied().fold(f64::INFINITY, f64::min);
    let constraint_rhs = i_u_y_v + i_uy_x_v;
    Ok(PdcfRate {
        rate,
        feasible: i_u_yr_v <= constraint_rhs + MARGIN_TOLERANCE,
        terms,
        constraint_lhs: i_u_yr_v,
        constraint_rhs,
    })
}

/// `E[min{f(point), 1}]` over a dense joint, for closed-form bound checks.
pub fn expect_clamped(joint: &JointDist, mut f: impl FnMut(&[usize]) -> Result<f64>) -> Result<f64> {
    let mut acc = NeumaierSum::default();
    for (point, p) in joint.atoms() {
        acc.add(p * f(&point)?.min(1.0));
    }
    Ok(acc.total())
}
