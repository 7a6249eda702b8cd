//! Preset networks: point-to-point, Gelfand-Pinsker, Wyner-Ziv and its
//! source-coding special cases, coding for computing, multiple access,
//! broadcast, relay, primitive relay and partial decode-forward relaying.
//!
//! Tuples are flattened first-component-most-significant and every message
//! sits in the trailing component, so `value % L` reads the message and
//! `value / L` the rest.

use serde::{Deserialize, Serialize};

use crate::bounds::{theorem_bound, BoundMethod, BoundReport};
use crate::codec::CodecPlan;
use crate::error::{Error, Result};
use crate::network::{
    ensure_valid, AuxStructure, Channel, ErrorSet, Field, IdealJoint, NetworkSpec, NodeAux, Role, VarRef,
};
use crate::prob::{unflatten, Alphabet, DensityTable, FiniteDist, JointDist, Kernel, DEFAULT_ATOM_CAP};
use crate::stats::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ChannelCoding,
    GelfandPinsker,
    WynerZiv,
    LosslessSource,
    LossySource,
    Computing,
    Mac,
    Broadcast,
    Relay,
    PrimitiveRelay,
    Pdcf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub px: FiniteDist,
    /// `X → Y`
    pub channel: Kernel,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub ps: FiniteDist,
    /// `S → U`
    pub pu_s: Kernel,
    /// deterministic `(U, S) → X`
    pub x_fn: Kernel,
    /// `(X, S) → Y`
    pub channel: Kernel,
    pub l: usize,
}

/// Wyner-Ziv coding; lossless and lossy source coding use a one-letter `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WzParams {
    pub px: FiniteDist,
    /// `X → T`
    pub pt_x: Kernel,
    /// `X → U`
    pub pu_x: Kernel,
    /// deterministic `(U, T) → Z`
    pub z_fn: Kernel,
    /// `d(x, z)`
    pub distortion: Vec<Vec<f64>>,
    pub threshold: f64,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputingParams {
    pub px: FiniteDist,
    pub pt_x: Kernel,
    pub pu_x: Kernel,
    pub z_fn: Kernel,
    /// deterministic `(X, T) → F`
    pub f: Kernel,
    /// `d(f, z)`
    pub distortion: Vec<Vec<f64>>,
    pub threshold: f64,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    pub px1: FiniteDist,
    pub px2: FiniteDist,
    /// `(X1, X2) → Y`
    pub channel: Kernel,
    pub l1: usize,
    pub l2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastParams {
    pub pu1: FiniteDist,
    /// `U1 → U2`
    pub pu2_u1: Kernel,
    /// deterministic `(U1, U2) → X`
    pub x_fn: Kernel,
    /// `X → Y1`
    pub ch1: Kernel,
    /// `(X, Y1) → Y2`
    pub ch2: Kernel,
    pub l1: usize,
    pub l2: usize,
    /// Exchange the roles of the two receivers (the other corner point).
    pub swap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayParams {
    pub px: FiniteDist,
    /// `X → Yr`
    pub ch_r: Kernel,
    /// `Yr → U`
    pub pu_yr: Kernel,
    /// deterministic `(Yr, U) → Xr`
    pub xr_fn: Kernel,
    /// `(X, Yr, Xr) → Y`
    pub ch_y: Kernel,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveRelayParams {
    pub px: FiniteDist,
    /// `X → Yr`
    pub ch_r: Kernel,
    /// `Yr → U'`
    pub pu_yr: Kernel,
    pub pxr: FiniteDist,
    /// `(X, Yr) → Y'`
    pub ch_y1: Kernel,
    /// `Xr → Y''`
    pub ch_y2: Kernel,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdcfParams {
    pub pv: FiniteDist,
    /// `V → X`
    pub px_v: Kernel,
    /// `X → Yr`
    pub ch_r: Kernel,
    /// `(Yr, V) → U`
    pub pu: Kernel,
    /// deterministic `(Yr, U, V) → Xr`
    pub xr_fn: Kernel,
    /// `(X, Yr, Xr) → Y`
    pub ch_y: Kernel,
    pub l: usize,
    /// Size of the part of the message the relay decodes; divides `l`.
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScenarioParams {
    Channel(ChannelParams),
    GelfandPinsker(GpParams),
    WynerZiv(WzParams),
    Computing(ComputingParams),
    Mac(MacParams),
    Broadcast(BroadcastParams),
    Relay(RelayParams),
    PrimitiveRelay(PrimitiveRelayParams),
    Pdcf(PdcfParams),
}

/// A network together with its coding structure and error set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub name: String,
    pub kind: Option<ScenarioKind>,
    pub params: Option<ScenarioParams>,
    pub spec: NetworkSpec,
    pub aux: AuxStructure,
    pub error_set: ErrorSet,
}

impl ScenarioBundle {
    pub fn ideal_joint(&self, cap: usize) -> Result<IdealJoint> {
        IdealJoint::build_with_cap(&self.spec, &self.aux, cap)
    }

    pub fn plan(&self, ij: &IdealJoint, cap: usize) -> Result<CodecPlan> {
        CodecPlan::with_joint(&self.spec, &self.aux, &self.error_set, ij, cap)
    }

    pub fn theorem_bound(&self, ij: &IdealJoint, method: BoundMethod) -> Result<BoundReport> {
        theorem_bound(ij, &self.aux, Some(&self.error_set), method)
    }

    /// Closed-form bound of the preset family, evaluated independently of
    /// the network machinery.
    pub fn corollary_bound(&self) -> Result<BoundReport> {
        match (self.kind, &self.params) {
            (Some(kind), Some(params)) => corollary_bound(kind, params),
            _ => Err(Error::KindMismatch(format!("scenario `{}` has no closed-form bound", self.name))),
        }
    }
}

// ---------------------------------------------------------------------------
// helpers

fn row_of(k: &Kernel, src: &[usize]) -> Vec<(usize, f64)> {
    let (c, v) = k.row(k.source_index(src));
    c.iter().zip(v).map(|(&c, &p)| (c as usize, p)).collect()
}

fn apply(k: &Kernel, src: &[usize]) -> usize {
    k.row(k.source_index(src)).0[0] as usize
}

fn dist_row(d: &FiniteDist) -> Vec<(usize, f64)> {
    d.support().into_iter().map(|u| (u, d.prob(u))).collect()
}

fn check_kernel(name: &str, k: &Kernel, from: &[usize], to: Option<usize>) -> Result<()> {
    if k.from_sizes() != from {
        return Err(Error::ShapeMismatch(format!(
            "{name} reads sizes {:?}, expected {from:?}",
            k.from_sizes()
        )));
    }
    if let Some(to) = to {
        if k.to_axis().size != to {
            return Err(Error::ShapeMismatch(format!("{name} outputs {} values, expected {to}", k.to_axis().size)));
        }
    }
    Ok(())
}

fn check_function(name: &str, k: &Kernel, from: &[usize], to: Option<usize>) -> Result<()> {
    check_kernel(name, k, from, to)?;
    if (0..k.num_rows()).any(|r| k.row(r).0.len() != 1) {
        return Err(Error::InvalidParameter(format!("{name} must be deterministic")));
    }
    Ok(())
}

fn check_table(name: &str, t: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if t.len() != rows || t.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch(format!("{name} must be {rows} x {cols}")));
    }
    if t.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} has a non-finite entry")));
    }
    Ok(())
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn alpha(label: &str, size: usize) -> Result<Alphabet> {
    Alphabet::try_new(label, size)
}

/// Kernel with no inputs.
fn source(to: Alphabet, row: Vec<(usize, f64)>) -> Result<Kernel> {
    Kernel::from_fn(vec![], to, |_| row.clone())
}

/// A node's coding rule from closures over `(y, ū')` and `(y, u, ū')`.
fn node_aux(
    decode: Vec<usize>,
    unique: usize,
    y: &Alphabet,
    decoded: &[&Alphabet],
    u: Alphabet,
    aux: impl FnMut(&[usize]) -> Vec<(usize, f64)>,
    x: &Alphabet,
    mut out: impl FnMut(&[usize]) -> usize,
) -> Result<NodeAux> {
    let mut from = vec![y.clone()];
    from.extend(decoded.iter().map(|&a| a.clone()));
    let aux_kernel = Kernel::from_tuple_fn(from, u.clone(), aux)?;
    let mut from = vec![y.clone(), u.clone()];
    from.extend(decoded.iter().map(|&a| a.clone()));
    let output_kernel = Kernel::deterministic(from, x.clone(), |t| out(t))?;
    Ok(NodeAux { decode, unique, u, aux_kernel, output_kernel })
}

fn trivial_u() -> Alphabet {
    Alphabet::new("U", 1)
}

#[derive(Default)]
struct Builder {
    x: Vec<Alphabet>,
    y: Vec<Alphabet>,
    channels: Vec<Channel>,
    nodes: Vec<NodeAux>,
}

impl Builder {
    fn push(&mut self, y: Alphabet, inputs: Vec<VarRef>, kernel: Kernel, aux: NodeAux, x: Alphabet) {
        self.y.push(y);
        self.channels.push(Channel { inputs, kernel });
        self.nodes.push(aux);
        self.x.push(x);
    }

    fn finish(self, name: &str, kind: ScenarioKind, params: ScenarioParams, error_set: ErrorSet) -> Result<ScenarioBundle> {
        let spec = NetworkSpec { x: self.x, y: self.y, channels: self.channels };
        let aux = AuxStructure { nodes: self.nodes };
        ensure_valid(&spec, &aux)?;
        let problems = error_set.validate(&spec);
        if !problems.is_empty() {
            return Err(Error::InvalidNetwork(problems));
        }
        Ok(ScenarioBundle { name: name.to_string(), kind: Some(kind), params: Some(params), spec, aux, error_set })
    }
}

/// Lifts `k` so it reads `inputs` out of every axis of `j`, then appends it.
fn extend(j: &JointDist, inputs: &[usize], k: &Kernel) -> Result<JointDist> {
    let lifted = Kernel::from_tuple_fn(j.axes().to_vec(), k.to_axis().clone(), |t| {
        let src: Vec<usize> = inputs.iter().map(|&a| t[a]).collect();
        row_of(k, &src)
    })?;
    j.semidirect(&lifted)
}

pub fn bsc(p: f64) -> Result<Kernel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("crossover {p} outside [0, 1]")));
    }
    Kernel::from_rows(vec![Alphabet::new("X", 2)], Alphabet::new("Y", 2), &[vec![1.0 - p, p], vec![p, 1.0 - p]])
}

pub fn hamming(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|a| (0..n).map(|b| if a == b { 0.0 } else { 1.0 }).collect()).collect()
}

/// `2^{ι}` factors are built from these tables at each point of a dense joint.
fn density(j: &JointDist, x: &[usize], y: &[usize], z: &[usize]) -> Result<DensityTable> {
    DensityTable::new(j, x, y, z)
}

fn clamped_expectation(j: &JointDist, mut f: impl FnMut(&[usize]) -> Result<f64>) -> Result<BoundReport> {
    let mut acc = NeumaierSum::default();
    let mut raw = NeumaierSum::default();
    for (point, p) in j.atoms() {
        if p > 0.0 {
            let v = f(&point)?;
            acc.add(p * v.min(1.0));
            raw.add(p * v);
        }
    }
    let value = acc.total().clamp(0.0, 1.0);
    Ok(BoundReport { value, method: BoundMethod::Exact, ci: (value, value), raw: raw.total(), terms: vec![] })
}

// ---------------------------------------------------------------------------
// builders

pub fn channel_coding(p: &ChannelParams) -> Result<ScenarioBundle> {
    let l = p.l;
    positive("L", l)?;
    let xs = p.px.len();
    check_kernel("channel", &p.channel, &[xs], None)?;
    let m = alpha("M", l)?;
    let u0 = alpha("(X,M)", xs * l)?;
    let x0 = alpha("X", xs)?;
    let px = dist_row(&p.px);
    let mut b = Builder::default();
    let n0 = node_aux(vec![], 0, &m, &[], u0.clone(), |t| px.iter().map(|&(x, q)| (x * l + t[0], q)).collect(), &x0, |t| t[1] / l)?;
    b.push(m.clone(), vec![], Kernel::constant(vec![], &FiniteDist::uniform(m.clone()))?, n0, x0);
    let y1 = p.channel.to_axis().clone();
    let x1 = alpha("M^", l)?;
    let n1 = node_aux(vec![0], 1, &y1, &[&u0], trivial_u(), |_| vec![(0, 1.0)], &x1, |t| t[2] % l)?;
    b.push(y1, vec![VarRef::X(0)], p.channel.clone(), n1, x1);
    let e = ErrorSet::MessageMismatch(vec![(Field::whole(0, Role::Y, l), Field::whole(1, Role::X, l))]);
    b.finish("channel", ScenarioKind::ChannelCoding, ScenarioParams::Channel(p.clone()), e)
}

pub fn gelfand_pinsker(p: &GpParams) -> Result<ScenarioBundle> {
    let l = p.l;
    positive("L", l)?;
    let ss = p.ps.len();
    check_kernel("P(u|s)", &p.pu_s, &[ss], None)?;
    let us = p.pu_s.to_axis().size;
    check_function("x(u,s)", &p.x_fn, &[us, ss], None)?;
    let xs = p.x_fn.to_axis().size;
    check_kernel("channel", &p.channel, &[xs, ss], None)?;
    let y0 = alpha("(S,M)", ss * l)?;
    let u0 = alpha("(U,M)", us * l)?;
    let x0 = alpha("X", xs)?;
    let mut b = Builder::default();
    let prior: Vec<(usize, f64)> =
        dist_row(&p.ps).into_iter().flat_map(|(s, q)| (0..l).map(move |m| (s * l + m, q / l as f64))).collect();
    let n0 = node_aux(
        vec![],
        0,
        &y0,
        &[],
        u0.clone(),
        |t| row_of(&p.pu_s, &[t[0] / l]).into_iter().map(|(u, q)| (u * l + t[0] % l, q)).collect(),
        &x0,
        |t| apply(&p.x_fn, &[t[1] / l, t[0] / l]),
    )?;
    b.push(y0.clone(), vec![], source(y0, prior)?, n0, x0.clone());
    let y1 = p.channel.to_axis().clone();
    let ch = Kernel::from_tuple_fn(vec![x0, alpha("(S,M)", ss * l)?], y1.clone(), |t| row_of(&p.channel, &[t[0], t[1] / l]))?;
    let x1 = alpha("M^", l)?;
    let n1 = node_aux(vec![0], 1, &y1, &[&u0], trivial_u(), |_| vec![(0, 1.0)], &x1, |t| t[2] % l)?;
    b.push(y1, vec![VarRef::X(0), VarRef::Y(0)], ch, n1, x1);
    let e = ErrorSet::MessageMismatch(vec![(Field::part(0, Role::Y, 1, l), Field::whole(1, Role::X, l))]);
    b.finish("gelfand-pinsker", ScenarioKind::GelfandPinsker, ScenarioParams::GelfandPinsker(p.clone()), e)
}

fn check_wz(px: &FiniteDist, pt_x: &Kernel, pu_x: &Kernel, z_fn: &Kernel, l: usize) -> Result<(usize, usize, usize, usize)> {
    positive("L", l)?;
    let xs = px.len();
    check_kernel("P(t|x)", pt_x, &[xs], None)?;
    check_kernel("P(u|x)", pu_x, &[xs], None)?;
    let ts = pt_x.to_axis().size;
    let us = pu_x.to_axis().size;
    check_function("z(u,t)", z_fn, &[us, ts], None)?;
    Ok((xs, ts, us, z_fn.to_axis().size))
}

/// Shared two-node layout for Wyner-Ziv and computing: node 1 sees `X` and
/// sends `M`, node 2 sees `(T, M)` and outputs `Z`.
fn wz_network(px: &FiniteDist, pt_x: &Kernel, pu_x: &Kernel, z_fn: &Kernel, l: usize) -> Result<Builder> {
    let (xs, ts, us, zs) = check_wz(px, pt_x, pu_x, z_fn, l)?;
    let y0 = alpha("X", xs)?;
    let u0 = alpha("(U,M)", us * l)?;
    let x0 = alpha("M", l)?;
    let mut b = Builder::default();
    let n0 = node_aux(
        vec![],
        0,
        &y0,
        &[],
        u0.clone(),
        |t| {
            row_of(pu_x, &[t[0]])
                .into_iter()
                .flat_map(|(u, q)| (0..l).map(move |m| (u * l + m, q / l as f64)))
                .collect()
        },
        &x0,
        |t| t[1] % l,
    )?;
    b.push(y0.clone(), vec![], source(y0.clone(), dist_row(px))?, n0, x0.clone());
    let y1 = alpha("(T,M)", ts * l)?;
    let ch = Kernel::from_tuple_fn(vec![y0, x0], y1.clone(), |t| {
        row_of(pt_x, &[t[0]]).into_iter().map(|(tt, q)| (tt * l + t[1], q)).collect()
    })?;
    let x1 = alpha("Z", zs)?;
    let n1 = node_aux(vec![0], 1, &y1, &[&u0], trivial_u(), |_| vec![(0, 1.0)], &x1, |t| apply(z_fn, &[t[2] / l, t[0] / l]))?;
    b.push(y1, vec![VarRef::Y(0), VarRef::X(0)], ch, n1, x1);
    Ok(b)
}

pub fn wyner_ziv(p: &WzParams) -> Result<ScenarioBundle> {
    wz_with_kind(p, ScenarioKind::WynerZiv)
}

fn wz_with_kind(p: &WzParams, kind: ScenarioKind) -> Result<ScenarioBundle> {
    let (xs, ts, _, zs) = check_wz(&p.px, &p.pt_x, &p.pu_x, &p.z_fn, p.l)?;
    check_table("distortion", &p.distortion, xs, zs)?;
    if kind != ScenarioKind::WynerZiv && ts != 1 {
        return Err(Error::KindMismatch("source coding without side information needs |T| = 1".into()));
    }
    let b = wz_network(&p.px, &p.pt_x, &p.pu_x, &p.z_fn, p.l)?;
    let e = ErrorSet::Distortion {
        source: Field::whole(0, Role::Y, xs),
        recon: Field::whole(1, Role::X, zs),
        table: p.distortion.clone(),
        threshold: p.threshold,
    };
    let name = match kind {
        ScenarioKind::LosslessSource => "lossless",
        ScenarioKind::LossySource => "lossy",
        _ => "wyner-ziv",
    };
    b.finish(name, kind, ScenarioParams::WynerZiv(p.clone()), e)
}

/// Lossy source coding: Wyner-Ziv without side information.
pub fn lossy_source(px: &FiniteDist, pu_x: &Kernel, z_fn: &Kernel, distortion: Vec<Vec<f64>>, threshold: f64, l: usize) -> Result<ScenarioBundle> {
    let xs = px.len();
    let one = Alphabet::new("T", 1);
    let pt_x = Kernel::deterministic(vec![alpha("X", xs)?], one.clone(), |_| 0)?;
    let us = pu_x.to_axis().size;
    let z_fn = lift_to_trivial_t(z_fn, us)?;
    let p = WzParams { px: px.clone(), pt_x, pu_x: pu_x.clone(), z_fn, distortion, threshold, l };
    wz_with_kind(&p, ScenarioKind::LossySource)
}

fn lift_to_trivial_t(z_fn: &Kernel, us: usize) -> Result<Kernel> {
    if z_fn.from_sizes() == vec![us, 1] {
        return Ok(z_fn.clone());
    }
    check_function("z(u)", z_fn, &[us], None)?;
    Kernel::deterministic(vec![alpha("U", us)?, Alphabet::new("T", 1)], z_fn.to_axis().clone(), |t| apply(z_fn, &[t[0]]))
}

/// Lossless source coding: `U = Z = X`, Hamming distortion, threshold 0.
pub fn lossless_source(px: &FiniteDist, l: usize) -> Result<ScenarioBundle> {
    wz_with_kind(&lossless_params(px, l)?, ScenarioKind::LosslessSource)
}

fn lossless_params(px: &FiniteDist, l: usize) -> Result<WzParams> {
    let xs = px.len();
    let x = alpha("X", xs)?;
    Ok(WzParams {
        px: px.clone(),
        pt_x: Kernel::deterministic(vec![x.clone()], Alphabet::new("T", 1), |_| 0)?,
        pu_x: Kernel::deterministic(vec![x.clone()], x.clone(), |t| t[0])?,
        z_fn: Kernel::deterministic(vec![x.clone(), Alphabet::new("T", 1)], x, |t| t[0])?,
        distortion: hamming(xs),
        threshold: 0.0,
        l,
    })
}

pub fn coding_for_computing(p: &ComputingParams) -> Result<ScenarioBundle> {
    let (xs, ts, _, zs) = check_wz(&p.px, &p.pt_x, &p.pu_x, &p.z_fn, p.l)?;
    check_function("f(x,t)", &p.f, &[xs, ts], None)?;
    let fs = p.f.to_axis().size;
    check_table("distortion", &p.distortion, fs, zs)?;
    let b = wz_network(&p.px, &p.pt_x, &p.pu_x, &p.z_fn, p.l)?;
    let f: Vec<usize> = (0..xs * ts).map(|i| p.f.row(i).0[0] as usize).collect();
    let e = ErrorSet::FunctionMismatch {
        args: vec![Field::whole(0, Role::Y, xs), Field::part(1, Role::Y, p.l, ts)],
        f,
        recon: Field::whole(1, Role::X, zs),
        table: p.distortion.clone(),
        threshold: p.threshold,
    };
    b.finish("computing", ScenarioKind::Computing, ScenarioParams::Computing(p.clone()), e)
}

/// Encoder nodes of the form `Y = M`, `U = (X, M)`, `X` emitted.
fn message_encoder(b: &mut Builder, px: &FiniteDist, l: usize, label: &str) -> Result<Alphabet> {
    let xs = px.len();
    let m = alpha(&format!("M{label}"), l)?;
    let u = alpha(&format!("(X{label},M{label})"), xs * l)?;
    let x = alpha(&format!("X{label}"), xs)?;
    let row = dist_row(px);
    let aux = node_aux(vec![], 0, &m, &[], u.clone(), |t| row.iter().map(|&(x, q)| (x * l + t[0], q)).collect(), &x, |t| t[1] / l)?;
    b.push(m.clone(), vec![], Kernel::constant(vec![], &FiniteDist::uniform(m))?, aux, x);
    Ok(u)
}

pub fn mac(p: &MacParams) -> Result<ScenarioBundle> {
    let (l1, l2) = (p.l1, p.l2);
    positive("L1", l1)?;
    positive("L2", l2)?;
    check_kernel("channel", &p.channel, &[p.px1.len(), p.px2.len()], None)?;
    let mut b = Builder::default();
    let u0 = message_encoder(&mut b, &p.px1, l1, "1")?;
    let u1 = message_encoder(&mut b, &p.px2, l2, "2")?;
    let y = p.channel.to_axis().clone();
    let x2 = alpha("(M1,M2)^", l1 * l2)?;
    // decoding order U2 then U1; output tuple is (y, u, ū_2, ū_1)
    let n2 = node_aux(vec![1, 0], 2, &y, &[&u1, &u0], trivial_u(), |_| vec![(0, 1.0)], &x2, |t| (t[3] % l1) * l2 + t[2] % l2)?;
    b.push(y, vec![VarRef::X(0), VarRef::X(1)], p.channel.clone(), n2, x2);
    let e = ErrorSet::MessageMismatch(vec![
        (Field::whole(0, Role::Y, l1), Field::part(2, Role::X, l2, l1)),
        (Field::whole(1, Role::Y, l2), Field::part(2, Role::X, 1, l2)),
    ]);
    b.finish("mac", ScenarioKind::Mac, ScenarioParams::Mac(p.clone()), e)
}

impl BroadcastParams {
    fn check(&self) -> Result<(usize, usize, usize, usize, usize)> {
        positive("L1", self.l1)?;
        positive("L2", self.l2)?;
        let u1 = self.pu1.len();
        check_kernel("P(u2|u1)", &self.pu2_u1, &[u1], None)?;
        let u2 = self.pu2_u1.to_axis().size;
        check_function("x(u1,u2)", &self.x_fn, &[u1, u2], None)?;
        let xs = self.x_fn.to_axis().size;
        check_kernel("P(y1|x)", &self.ch1, &[xs], None)?;
        let y1 = self.ch1.to_axis().size;
        check_kernel("P(y2|x,y1)", &self.ch2, &[xs, y1], None)?;
        Ok((u1, u2, xs, y1, self.ch2.to_axis().size))
    }

    /// The same joint law with the receivers' roles exchanged.
    pub fn swapped(&self) -> Result<BroadcastParams> {
        let (u1s, u2s, xs, y1s, y2s) = self.check()?;
        let mut pu2 = vec![0.0; u2s];
        let mut joint = vec![vec![0.0; u1s]; u2s];
        for u1 in 0..u1s {
            for (u2, q) in row_of(&self.pu2_u1, &[u1]) {
                joint[u2][u1] += self.pu1.prob(u1) * q;
                pu2[u2] += self.pu1.prob(u1) * q;
            }
        }
        let pu2_dist = FiniteDist::new(alpha("U2", u2s)?, pu2.clone())?;
        let pu1_u2 = Kernel::from_fn(vec![alpha("U2", u2s)?], alpha("U1", u1s)?, |u2| {
            if pu2[u2] > 0.0 {
                (0..u1s).map(|u1| (u1, joint[u2][u1] / pu2[u2])).collect()
            } else {
                dist_row(&self.pu1)
            }
        })?;
        let x_fn = Kernel::deterministic(vec![alpha("U2", u2s)?, alpha("U1", u1s)?], self.x_fn.to_axis().clone(), |t| {
            apply(&self.x_fn, &[t[1], t[0]])
        })?;
        let cond = |x: usize| -> Vec<Vec<f64>> {
            // cond[y1][y2] = P(y1, y2 | x)
            let mut c = vec![vec![0.0; y2s]; y1s];
            for (y1, q1) in row_of(&self.ch1, &[x]) {
                for (y2, q2) in row_of(&self.ch2, &[x, y1]) {
                    c[y1][y2] += q1 * q2;
                }
            }
            c
        };
        let ch1 = Kernel::from_fn(vec![alpha("X", xs)?], alpha("Y2", y2s)?, |x| {
            let c = cond(x);
            (0..y2s).map(|y2| (y2, (0..y1s).map(|y1| c[y1][y2]).sum())).collect()
        })?;
        let ch2 = Kernel::from_tuple_fn(vec![alpha("X", xs)?, alpha("Y2", y2s)?], alpha("Y1", y1s)?, |t| {
            let c = cond(t[0]);
            let tot: f64 = (0..y1s).map(|y1| c[y1][t[1]]).sum();
            if tot > 0.0 {
                (0..y1s).map(|y1| (y1, c[y1][t[1]] / tot)).collect()
            } else {
                row_of(&self.ch1, &[t[0]])
            }
        })?;
        Ok(BroadcastParams { pu1: pu2_dist, pu2_u1: pu1_u2, x_fn, ch1, ch2, l1: self.l2, l2: self.l1, swap: !self.swap })
    }

    /// Parameters with `swap` resolved, as the network sees them.
    pub fn effective(&self) -> Result<BroadcastParams> {
        if self.swap {
            let mut s = self.swapped()?;
            s.swap = false;
            Ok(s)
        } else {
            Ok(self.clone())
        }
    }
}

/// Four nodes: the encoder is split into one node per auxiliary so that
/// `U2` is generated given `U1`, then one node per receiver.
pub fn broadcast(p: &BroadcastParams) -> Result<ScenarioBundle> {
    let q = p.effective()?;
    let (u1s, u2s, xs, y1s, _) = q.check()?;
    let (l1, l2) = (q.l1, q.l2);
    let mut b = Builder::default();
    let m1 = alpha("M1", l1)?;
    let u0 = alpha("(U1,M1)", u1s * l1)?;
    let x0 = alpha("U1", u1s)?;
    let pu1 = dist_row(&q.pu1);
    let n0 = node_aux(vec![], 0, &m1, &[], u0.clone(), |t| pu1.iter().map(|&(u, w)| (u * l1 + t[0], w)).collect(), &x0, |t| t[1] / l1)?;
    b.push(m1.clone(), vec![], Kernel::constant(vec![], &FiniteDist::uniform(m1))?, n0, x0.clone());
    let y1 = alpha("(U1,M2)", u1s * l2)?;
    let ch = Kernel::from_tuple_fn(vec![x0], y1.clone(), |t| (0..l2).map(|m| (t[0] * l2 + m, 1.0 / l2 as f64)).collect())?;
    let u1 = alpha("(U2,M2)", u2s * l2)?;
    let x1 = alpha("X", xs)?;
    let n1 = node_aux(
        vec![],
        0,
        &y1,
        &[],
        u1.clone(),
        |t| row_of(&q.pu2_u1, &[t[0] / l2]).into_iter().map(|(u, w)| (u * l2 + t[0] % l2, w)).collect(),
        &x1,
        |t| apply(&q.x_fn, &[t[0] / l2, t[1] / l2]),
    )?;
    b.push(y1, vec![VarRef::X(0)], ch, n1, x1);
    let r1 = q.ch1.to_axis().clone();
    let x2 = alpha("M1^", l1)?;
    let n2 = node_aux(vec![0], 1, &r1, &[&u0], trivial_u(), |_| vec![(0, 1.0)], &x2, |t| t[2] % l1)?;
    b.push(r1, vec![VarRef::X(1)], q.ch1.clone(), n2, x2);
    let r2 = q.ch2.to_axis().clone();
    let x3 = alpha("M2^", l2)?;
    let n3 = node_aux(vec![1], 1, &r2, &[&u1], trivial_u(), |_| vec![(0, 1.0)], &x3, |t| t[2] % l2)?;
    debug_assert_eq!(q.ch2.from_sizes(), vec![xs, y1s]);
    b.push(r2, vec![VarRef::X(1), VarRef::Y(2)], q.ch2.clone(), n3, x3);
    let e = ErrorSet::MessageMismatch(vec![
        (Field::whole(0, Role::Y, l1), Field::whole(2, Role::X, l1)),
        (Field::part(1, Role::Y, 1, l2), Field::whole(3, Role::X, l2)),
    ]);
    b.finish("broadcast", ScenarioKind::Broadcast, ScenarioParams::Broadcast(p.clone()), e)
}

/// Sender, relay and receiver. The relay forms `U` from `Y_r` and forwards
/// `x_r(Y_r, U)`; the receiver uniquely decodes the sender's `(X, M)` with
/// the relay's `U` decoded softly.
fn relay_network(
    px: &FiniteDist,
    ch_r: &Kernel,
    u: Alphabet,
    aux: impl FnMut(&[usize]) -> Vec<(usize, f64)>,
    xr: Alphabet,
    xr_of: impl FnMut(&[usize]) -> usize,
    ch_y: Kernel,
    l: usize,
) -> Result<(Builder, ErrorSet)> {
    let mut b = Builder::default();
    let u0 = message_encoder(&mut b, px, l, "")?;
    let yr = ch_r.to_axis().clone();
    let n1 = node_aux(vec![], 0, &yr, &[], u, aux, &xr, xr_of)?;
    b.push(yr, vec![VarRef::X(0)], ch_r.clone(), n1, xr);
    let y = ch_y.to_axis().clone();
    let x2 = alpha("M^", l)?;
    let n2 = node_aux(vec![0, 1], 1, &y, &[&u0], trivial_u(), |_| vec![(0, 1.0)], &x2, |t| t[2] % l)?;
    b.push(y, vec![VarRef::X(0), VarRef::Y(1), VarRef::X(1)], ch_y, n2, x2);
    let e = ErrorSet::MessageMismatch(vec![(Field::whole(0, Role::Y, l), Field::whole(2, Role::X, l))]);
    Ok((b, e))
}

impl RelayParams {
    fn check(&self) -> Result<(usize, usize, usize, usize)> {
        positive("L", self.l)?;
        let xs = self.px.len();
        check_kernel("P(yr|x)", &self.ch_r, &[xs], None)?;
        let yrs = self.ch_r.to_axis().size;
        check_kernel("P(u|yr)", &self.pu_yr, &[yrs], None)?;
        let us = self.pu_yr.to_axis().size;
        check_function("xr(yr,u)", &self.xr_fn, &[yrs, us], None)?;
        let xrs = self.xr_fn.to_axis().size;
        check_kernel("P(y|x,yr,xr)", &self.ch_y, &[xs, yrs, xrs], None)?;
        Ok((xs, yrs, us, xrs))
    }
}

pub fn relay(p: &RelayParams) -> Result<ScenarioBundle> {
    let (_, _, us, xrs) = p.check()?;
    let (b, e) = relay_network(
        &p.px,
        &p.ch_r,
        alpha("U", us)?,
        |t| row_of(&p.pu_yr, &[t[0]]),
        alpha("Xr", xrs)?,
        |t| apply(&p.xr_fn, &[t[0], t[1]]),
        p.ch_y.clone(),
        p.l,
    )?;
    b.finish("relay", ScenarioKind::Relay, ScenarioParams::Relay(p.clone()), e)
}

impl PrimitiveRelayParams {
    fn check(&self) -> Result<(usize, usize, usize, usize, usize, usize)> {
        positive("L", self.l)?;
        let xs = self.px.len();
        check_kernel("P(yr|x)", &self.ch_r, &[xs], None)?;
        let yrs = self.ch_r.to_axis().size;
        check_kernel("P(u'|yr)", &self.pu_yr, &[yrs], None)?;
        let xrs = self.pxr.len();
        check_kernel("P(y'|x,yr)", &self.ch_y1, &[xs, yrs], None)?;
        check_kernel("P(y''|xr)", &self.ch_y2, &[xrs], None)?;
        Ok((xs, yrs, self.pu_yr.to_axis().size, xrs, self.ch_y1.to_axis().size, self.ch_y2.to_axis().size))
    }

    /// `P_{Y|X,Y_r,X_r} = P_{Y'|X,Y_r} P_{Y''|X_r}` with `Y = (Y', Y'')`.
    fn combined_channel(&self) -> Result<Kernel> {
        let (xs, yrs, _, xrs, _, y2s) = self.check()?;
        let y = alpha("(Y',Y'')", self.ch_y1.to_axis().size * y2s)?;
        Kernel::from_tuple_fn(vec![alpha("X", xs)?, alpha("Yr", yrs)?, alpha("Xr", xrs)?], y, |t| {
            let a = row_of(&self.ch_y1, &[t[0], t[1]]);
            let b = row_of(&self.ch_y2, &[t[2]]);
            a.iter().flat_map(|&(y1, p)| b.iter().map(move |&(y2, q)| (y1 * y2s + y2, p * q))).collect()
        })
    }
}

/// Relay whose `U = (U', X_r)` draws `X_r` independently and forwards it
/// over an orthogonal link.
pub fn primitive_relay(p: &PrimitiveRelayParams) -> Result<ScenarioBundle> {
    let (_, _, us, xrs, _, _) = p.check()?;
    let pxr = dist_row(&p.pxr);
    let (b, e) = relay_network(
        &p.px,
        &p.ch_r,
        alpha("(U',Xr)", us * xrs)?,
        |t| {
            row_of(&p.pu_yr, &[t[0]])
                .into_iter()
                .flat_map(|(u, w)| pxr.iter().map(move |&(xr, q)| (u * xrs + xr, w * q)))
                .collect()
        },
        alpha("Xr", xrs)?,
        |t| t[1] % xrs,
        p.combined_channel()?,
        p.l,
    )?;
    b.finish("primitive-relay", ScenarioKind::PrimitiveRelay, ScenarioParams::PrimitiveRelay(p.clone()), e)
}

impl PdcfParams {
    fn check(&self) -> Result<(usize, usize, usize, usize, usize)> {
        positive("L", self.l)?;
        positive("J", self.j)?;
        if self.l % self.j != 0 {
            return Err(Error::InvalidParameter(format!("J = {} must divide L = {}", self.j, self.l)));
        }
        let vs = self.pv.len();
        check_kernel("P(x|v)", &self.px_v, &[vs], None)?;
        let xs = self.px_v.to_axis().size;
        check_kernel("P(yr|x)", &self.ch_r, &[xs], None)?;
        let yrs = self.ch_r.to_axis().size;
        check_kernel("P(u|yr,v)", &self.pu, &[yrs, vs], None)?;
        let us = self.pu.to_axis().size;
        check_function("xr(yr,u,v)", &self.xr_fn, &[yrs, us, vs], None)?;
        let xrs = self.xr_fn.to_axis().size;
        check_kernel("P(y|x,yr,xr)", &self.ch_y, &[xs, yrs, xrs], None)?;
        Ok((vs, xs, yrs, us, xrs))
    }
}

/// Four nodes. The sender is split into a node producing `(V, M1)` and a
/// node producing `(X, M1, M2)` given `V`; the relay uniquely decodes
/// `(V, M1)` and forms `(U, M1)`; the receiver uniquely decodes the sender's
/// full auxiliary with the relay's and `V`'s decoded softly.
pub fn pdcf_relay(p: &PdcfParams) -> Result<ScenarioBundle> {
    let (vs, xs, _, us, xrs) = p.check()?;
    let (l, j) = (p.l, p.j);
    let k = l / j;
    let mut b = Builder::default();
    let m1 = alpha("M1", j)?;
    let u0 = alpha("(V,M1)", vs * j)?;
    let x0 = alpha("V", vs)?;
    let pv = dist_row(&p.pv);
    let n0 = node_aux(vec![], 0, &m1, &[], u0.clone(), |t| pv.iter().map(|&(v, q)| (v * j + t[0], q)).collect(), &x0, |t| t[1] / j)?;
    b.push(m1.clone(), vec![], Kernel::constant(vec![], &FiniteDist::uniform(m1.clone()))?, n0, x0.clone());
    let y1 = alpha("(V,M1,M2)", vs * l)?;
    let ch = Kernel::from_tuple_fn(vec![m1, x0], y1.clone(), |t| {
        (0..k).map(|m2| ((t[1] * j + t[0]) * k + m2, 1.0 / k as f64)).collect()
    })?;
    let u1 = alpha("(X,M1,M2)", xs * l)?;
    let x1 = alpha("X", xs)?;
    let n1 = node_aux(
        vec![],
        0,
        &y1,
        &[],
        u1.clone(),
        |t| row_of(&p.px_v, &[t[0] / l]).into_iter().map(|(x, q)| (x * l + t[0] % l, q)).collect(),
        &x1,
        |t| t[1] / l,
    )?;
    b.push(y1, vec![VarRef::Y(0), VarRef::X(0)], ch, n1, x1);
    let yr = p.ch_r.to_axis().clone();
    let u2 = alpha("(U,M1)", us * j)?;
    let x2 = alpha("Xr", xrs)?;
    let n2 = node_aux(
        vec![0],
        1,
        &yr,
        &[&u0],
        u2.clone(),
        |t| row_of(&p.pu, &[t[0], t[1] / j]).into_iter().map(|(u, q)| (u * j + t[1] % j, q)).collect(),
        &x2,
        |t| apply(&p.xr_fn, &[t[0], t[1] / j, t[2] / j]),
    )?;
    b.push(yr, vec![VarRef::X(1)], p.ch_r.clone(), n2, x2);
    let y = p.ch_y.to_axis().clone();
    let x3 = alpha("M^", l)?;
    let n3 = node_aux(vec![1, 2, 0], 1, &y, &[&u1], trivial_u(), |_| vec![(0, 1.0)], &x3, |t| t[2] % l)?;
    b.push(y, vec![VarRef::X(1), VarRef::Y(2), VarRef::X(2)], p.ch_y.clone(), n3, x3);
    let e = ErrorSet::MessageMismatch(vec![(Field::part(1, Role::Y, 1, l), Field::whole(3, Role::X, l))]);
    b.finish("pdcf", ScenarioKind::Pdcf, ScenarioParams::Pdcf(p.clone()), e)
}

/// Builds the bundle for `kind` from matching parameters.
pub fn build(kind: ScenarioKind, params: &ScenarioParams) -> Result<ScenarioBundle> {
    use ScenarioKind as K;
    use ScenarioParams as P;
    match (kind, params) {
        (K::ChannelCoding, P::Channel(p)) => channel_coding(p),
        (K::GelfandPinsker, P::GelfandPinsker(p)) => gelfand_pinsker(p),
        (K::WynerZiv | K::LosslessSource | K::LossySource, P::WynerZiv(p)) => wz_with_kind(p, kind),
        (K::Computing, P::Computing(p)) => coding_for_computing(p),
        (K::Mac, P::Mac(p)) => mac(p),
        (K::Broadcast, P::Broadcast(p)) => broadcast(p),
        (K::Relay, P::Relay(p)) => relay(p),
        (K::PrimitiveRelay, P::PrimitiveRelay(p)) => primitive_relay(p),
        (K::Pdcf, P::Pdcf(p)) => pdcf_relay(p),
        _ => Err(Error::KindMismatch(format!("{kind:?} cannot be built from these parameters"))),
    }
}

// ---------------------------------------------------------------------------
// closed-form bounds

/// Exact closed-form bound for the scenario family, from a dense joint
/// assembled directly from `params`.
pub fn corollary_bound(kind: ScenarioKind, params: &ScenarioParams) -> Result<BoundReport> {
    use ScenarioKind as K;
    use ScenarioParams as P;
    match (kind, params) {
        (K::ChannelCoding, P::Channel(p)) => {
            let j = JointDist::from_dist(&p.px).semidirect(&p.channel)?;
            let i = density(&j, &[0], &[1], &[])?;
            let l = p.l as f64;
            clamped_expectation(&j, |pt| Ok(l * (-i.at(pt)?).exp2()))
        }
        (K::GelfandPinsker, P::GelfandPinsker(p)) => {
            // axes S, U, X, Y
            let j = JointDist::from_dist(&p.ps).semidirect(&p.pu_s)?;
            let j = extend(&j, &[1, 0], &p.x_fn)?;
            let j = extend(&j, &[2, 0], &p.channel)?;
            let iy = density(&j, &[1], &[3], &[])?;
            let is = density(&j, &[1], &[0], &[])?;
            let l = p.l as f64;
            clamped_expectation(&j, |pt| Ok(l * (-iy.at(pt)? + is.at(pt)?).exp2()))
        }
        (K::WynerZiv | K::LossySource, P::WynerZiv(p)) => {
            if kind == K::LossySource && p.pt_x.to_axis().size != 1 {
                return Err(Error::KindMismatch("lossy source coding needs |T| = 1".into()));
            }
            let (j, it, ix) = wz_joint(&p.px, &p.pt_x, &p.pu_x, &p.z_fn)?;
            let l = p.l as f64;
            clamped_expectation(&j, |pt| {
                let bad = p.distortion[pt[0]][pt[3]] > p.threshold;
                Ok(f64::from(u8::from(bad)) + (-it.at(pt)? + ix.at(pt)?).exp2() / l)
            })
        }
        (K::LosslessSource, P::WynerZiv(p)) => {
            if !is_lossless(p) {
                return Err(Error::KindMismatch("lossless coding needs U = Z = X, |T| = 1, Hamming, threshold 0".into()));
            }
            let j = JointDist::from_dist(&p.px);
            let l = p.l as f64;
            clamped_expectation(&j, |pt| Ok(1.0 / (l * p.px.prob(pt[0]))))
        }
        (K::Computing, P::Computing(p)) => {
            let (j, it, ix) = wz_joint(&p.px, &p.pt_x, &p.pu_x, &p.z_fn)?;
            let l = p.l as f64;
            clamped_expectation(&j, |pt| {
                let f = apply(&p.f, &[pt[0], pt[1]]);
                let bad = p.distortion[f][pt[3]] > p.threshold;
                Ok(f64::from(u8::from(bad)) + (-it.at(pt)? + ix.at(pt)?).exp2() / l)
            })
        }
        (K::Mac, P::Mac(p)) => {
            let j = JointDist::product(&[&p.px1, &p.px2])?.semidirect(&p.channel)?;
            let i12 = density(&j, &[0, 1], &[2], &[])?;
            let i2 = density(&j, &[1], &[2], &[0])?;
            let i1 = density(&j, &[0], &[2], &[1])?;
            let (l1, l2) = (p.l1 as f64, p.l2 as f64);
            let gamma = (l1 * p.px1.len() as f64).ln() + 1.0;
            clamped_expectation(&j, |pt| {
                Ok(gamma * l1 * l2 * (-i12.at(pt)?).exp2() + gamma * l2 * (-i2.at(pt)?).exp2() + l1 * (-i1.at(pt)?).exp2())
            })
        }
        (K::Broadcast, P::Broadcast(p)) => {
            let q = p.effective()?;
            // axes U1, U2, X, Y1, Y2
            let j = JointDist::from_dist(&q.pu1).semidirect(&q.pu2_u1)?;
            let j = extend(&j, &[0, 1], &q.x_fn)?;
            let j = extend(&j, &[2], &q.ch1)?;
            let j = extend(&j, &[2, 3], &q.ch2)?;
            let i1 = density(&j, &[0], &[3], &[])?;
            let i2 = density(&j, &[1], &[4], &[])?;
            let i12 = density(&j, &[0], &[1], &[])?;
            let (l1, l2) = (q.l1 as f64, q.l2 as f64);
            clamped_expectation(&j, |pt| Ok(l1 * (-i1.at(pt)?).exp2() + l2 * (-i2.at(pt)? + i12.at(pt)?).exp2()))
        }
        (K::Relay, P::Relay(p)) => {
            p.check()?;
            // axes X, Yr, U, Xr, Y
            let j = JointDist::from_dist(&p.px).semidirect(&p.ch_r)?;
            let j = extend(&j, &[1], &p.pu_yr)?;
            let j = extend(&j, &[1, 2], &p.xr_fn)?;
            let j = extend(&j, &[0, 1, 3], &p.ch_y)?;
            let ixuy = density(&j, &[0], &[2, 4], &[])?;
            let iuy = density(&j, &[2], &[4], &[])?;
            let iur = density(&j, &[2], &[1], &[])?;
            let gamma = (p.pu_yr.to_axis().size as f64).ln() + 1.0;
            let l = p.l as f64;
            clamped_expectation(&j, |pt| {
                Ok(gamma * l * (-ixuy.at(pt)?).exp2() * ((-iuy.at(pt)? + iur.at(pt)?).exp2() + 1.0))
            })
        }
        (K::PrimitiveRelay, P::PrimitiveRelay(p)) => {
            let (_, _, us, xrs, _, _) = p.check()?;
            // axes X, Yr, U', Xr, Y', Y''
            let j = JointDist::from_dist(&p.px).semidirect(&p.ch_r)?;
            let j = extend(&j, &[1], &p.pu_yr)?;
            let j = extend(&j, &[], &Kernel::constant(vec![], &p.pxr)?)?;
            let j = extend(&j, &[0, 1], &p.ch_y1)?;
            let j = extend(&j, &[3], &p.ch_y2)?;
            let ix = density(&j, &[0], &[2, 4], &[])?;
            let ir = density(&j, &[3], &[5], &[])?;
            let iu = density(&j, &[2], &[1], &[4])?;
            let gamma = ((us * xrs) as f64).ln() + 1.0;
            let l = p.l as f64;
            clamped_expectation(&j, |pt| {
                Ok(gamma * l * (-ix.at(pt)?).exp2() * ((-ir.at(pt)? + iu.at(pt)?).exp2() + 1.0))
            })
        }
        (K::Pdcf, P::Pdcf(p)) => {
            let (vs, _, _, us, _) = p.check()?;
            // axes V, X, Yr, U, Xr, Y
            let j = pdcf_dense(p)?;
            let ivr = density(&j, &[0], &[2], &[])?;
            let ix = density(&j, &[1], &[3, 5], &[0])?;
            let iuy = density(&j, &[3], &[0, 5], &[])?;
            let iur = density(&j, &[3], &[0, 2], &[])?;
            let ivy = density(&j, &[0], &[5], &[])?;
            let (l, jj) = (p.l as f64, p.j as f64);
            let gamma = ((jj * us as f64).ln() + 1.0) * ((jj * vs as f64).ln() + 1.0);
            clamped_expectation(&j, |pt| {
                Ok(jj * (-ivr.at(pt)?).exp2()
                    + gamma * l / jj
                        * (-ix.at(pt)?).exp2()
                        * ((-iuy.at(pt)? + iur.at(pt)?).exp2() + 1.0)
                        * (jj * (-ivy.at(pt)?).exp2() + 1.0))
            })
        }
        _ => Err(Error::KindMismatch(format!("no closed-form bound for {kind:?} with these parameters"))),
    }
}

/// `U = Z = X`, no side information, and errors exactly on `Z ≠ X`.
fn is_lossless(p: &WzParams) -> bool {
    let xs = p.px.len();
    let ident = |k: &Kernel, from: &[usize]| {
        k.from_sizes() == from && k.to_axis().size == xs && (0..k.num_rows()).all(|r| k.row(r).0 == [(r / from[1..].iter().product::<usize>()) as u32])
    };
    p.pt_x.to_axis().size == 1
        && ident(&p.pu_x, &[xs])
        && ident(&p.z_fn, &[xs, 1])
        && (0..xs).all(|a| (0..xs).all(|b| (p.distortion[a][b] > p.threshold) == (a != b)))
}

/// Dense `(X, T, U, Z)` joint with density tables for `ι(U;T)` and `ι(U;X)`.
fn wz_joint(px: &FiniteDist, pt_x: &Kernel, pu_x: &Kernel, z_fn: &Kernel) -> Result<(JointDist, DensityTable, DensityTable)> {
    let j = JointDist::from_dist(px).semidirect(pt_x)?;
    let j = extend(&j, &[0], pu_x)?;
    let j = extend(&j, &[2, 1], z_fn)?;
    let it = density(&j, &[2], &[1], &[])?;
    let ix = density(&j, &[2], &[0], &[])?;
    Ok((j, it, ix))
}

fn pdcf_dense(p: &PdcfParams) -> Result<JointDist> {
    let j = JointDist::from_dist(&p.pv).semidirect(&p.px_v)?;
    let j = extend(&j, &[1], &p.ch_r)?;
    let j = extend(&j, &[2, 0], &p.pu)?;
    let j = extend(&j, &[2, 3, 0], &p.xr_fn)?;
    extend(&j, &[1, 2, 4], &p.ch_y)
}

/// Joint over `(X, V, Y_r, U, X_r, Y)`, the layout the rate expression reads.
pub fn pdcf_joint(p: &PdcfParams) -> Result<JointDist> {
    p.check()?;
    pdcf_dense(p)?.permute(&[1, 0, 2, 3, 4, 5])
}

/// Partial decode-forward parameters reproducing a primitive relay with an
/// orthogonal link: `V = (V', X_r)` with `X_r` independent of `(V', X)`,
/// trivial `U`, and the relay sending the `X_r` it decoded.
pub fn pdcf_from_primitive(p: &PrimitiveRelayParams, pv_prime: &FiniteDist, px_v: &Kernel) -> Result<PdcfParams> {
    let (xs, yrs, _, xrs, _, _) = p.check()?;
    let vps = pv_prime.len();
    check_kernel("P(x|v')", px_v, &[vps], Some(xs))?;
    let pv = JointDist::product(&[pv_prime, &p.pxr])?;
    let v = alpha("(V',Xr)", vps * xrs)?;
    let pv = FiniteDist::new(v.clone(), pv.mass().to_vec())?;
    let px_of_v = Kernel::from_fn(vec![v.clone()], alpha("X", xs)?, |vv| row_of(px_v, &[vv / xrs]))?;
    let one = Alphabet::new("U", 1);
    let pu = Kernel::deterministic(vec![alpha("Yr", yrs)?, v.clone()], one.clone(), |_| 0)?;
    let xr_fn = Kernel::deterministic(vec![alpha("Yr", yrs)?, one, v], alpha("Xr", xrs)?, |t| t[2] % xrs)?;
    Ok(PdcfParams { pv, px_v: px_of_v, ch_r: p.ch_r.clone(), pu, xr_fn, ch_y: p.combined_channel()?, l: 1, j: 1 })
}

// ---------------------------------------------------------------------------
// n-fold lifting

fn power_table(t: &[Vec<f64>], n: u32, cap: usize) -> Result<Vec<Vec<f64>>> {
    let rows = t.len();
    let cols = t.first().map_or(0, Vec::len);
    let n = n as usize;
    let r = crate::prob::checked_size(vec![rows; n], cap)?;
    let c = crate::prob::checked_size(vec![cols; n], cap)?;
    crate::prob::checked_size([r, c], cap)?;
    let rs = vec![rows; n];
    let cs = vec![cols; n];
    Ok((0..r)
        .map(|a| {
            let da = unflatten(a, &rs);
            (0..c)
                .map(|b| {
                    let db = unflatten(b, &cs);
                    da.iter().zip(&db).map(|(&x, &z)| t[x][z]).sum::<f64>() / n as f64
                })
                .collect()
        })
        .collect())
}

impl ScenarioParams {
    /// Every distribution and kernel replaced by its `n`-fold product;
    /// distortions become per-letter averages and message sizes are kept.
    pub fn nfold(&self, n: u32, cap: usize) -> Result<ScenarioParams> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if n == 1 {
            return Ok(self.clone());
        }
        let d = |f: &FiniteDist| f.power(n);
        let k = |k: &Kernel| k.power(n, cap);
        Ok(match self {
            ScenarioParams::Channel(p) => ScenarioParams::Channel(ChannelParams { px: d(&p.px)?, channel: k(&p.channel)?, l: p.l }),
            ScenarioParams::GelfandPinsker(p) => ScenarioParams::GelfandPinsker(GpParams {
                ps: d(&p.ps)?,
                pu_s: k(&p.pu_s)?,
                x_fn: k(&p.x_fn)?,
                channel: k(&p.channel)?,
                l: p.l,
            }),
            ScenarioParams::WynerZiv(p) => ScenarioParams::WynerZiv(WzParams {
                px: d(&p.px)?,
                pt_x: k(&p.pt_x)?,
                pu_x: k(&p.pu_x)?,
                z_fn: k(&p.z_fn)?,
                distortion: power_table(&p.distortion, n, cap)?,
                threshold: p.threshold,
                l: p.l,
            }),
            ScenarioParams::Computing(p) => ScenarioParams::Computing(ComputingParams {
                px: d(&p.px)?,
                pt_x: k(&p.pt_x)?,
                pu_x: k(&p.pu_x)?,
                z_fn: k(&p.z_fn)?,
                f: k(&p.f)?,
                distortion: power_table(&p.distortion, n, cap)?,
                threshold: p.threshold,
                l: p.l,
            }),
            ScenarioParams::Mac(p) => ScenarioParams::Mac(MacParams {
                px1: d(&p.px1)?,
                px2: d(&p.px2)?,
                channel: k(&p.channel)?,
                l1: p.l1,
                l2: p.l2,
            }),
            ScenarioParams::Broadcast(p) => ScenarioParams::Broadcast(BroadcastParams {
                pu1: d(&p.pu1)?,
                pu2_u1: k(&p.pu2_u1)?,
                x_fn: k(&p.x_fn)?,
                ch1: k(&p.ch1)?,
                ch2: k(&p.ch2)?,
                l1: p.l1,
                l2: p.l2,
                swap: p.swap,
            }),
            ScenarioParams::Relay(p) => ScenarioParams::Relay(RelayParams {
                px: d(&p.px)?,
                ch_r: k(&p.ch_r)?,
                pu_yr: k(&p.pu_yr)?,
                xr_fn: k(&p.xr_fn)?,
                ch_y: k(&p.ch_y)?,
                l: p.l,
            }),
            ScenarioParams::PrimitiveRelay(p) => ScenarioParams::PrimitiveRelay(PrimitiveRelayParams {
                px: d(&p.px)?,
                ch_r: k(&p.ch_r)?,
                pu_yr: k(&p.pu_yr)?,
                pxr: d(&p.pxr)?,
                ch_y1: k(&p.ch_y1)?,
                ch_y2: k(&p.ch_y2)?,
                l: p.l,
            }),
            ScenarioParams::Pdcf(p) => ScenarioParams::Pdcf(PdcfParams {
                pv: d(&p.pv)?,
                px_v: k(&p.px_v)?,
                ch_r: k(&p.ch_r)?,
                pu: k(&p.pu)?,
                xr_fn: k(&p.xr_fn)?,
                ch_y: k(&p.ch_y)?,
                l: p.l,
                j: p.j,
            }),
        })
    }

    /// Replaces the message size(s); `second` applies to two-message families.
    pub fn with_messages(&self, first: Option<usize>, second: Option<usize>) -> ScenarioParams {
        let mut p = self.clone();
        match &mut p {
            ScenarioParams::Channel(q) => q.l = first.unwrap_or(q.l),
            ScenarioParams::GelfandPinsker(q) => q.l = first.unwrap_or(q.l),
            ScenarioParams::WynerZiv(q) => q.l = first.unwrap_or(q.l),
            ScenarioParams::Computing(q) => q.l = first.unwrap_or(q.l),
            ScenarioParams::Relay(q) => q.l = first.unwrap_or(q.l),
            ScenarioParams::PrimitiveRelay(q) => q.l = first.unwrap_or(q.l),
            ScenarioParams::Pdcf(q) => {
                q.l = first.unwrap_or(q.l);
                q.j = second.unwrap_or(q.j);
            }
            ScenarioParams::Mac(q) => {
                q.l1 = first.unwrap_or(q.l1);
                q.l2 = second.unwrap_or(q.l2);
            }
            ScenarioParams::Broadcast(q) => {
                q.l1 = first.unwrap_or(q.l1);
                q.l2 = second.unwrap_or(q.l2);
            }
        }
        p
    }
}

/// Rebuilds `bundle` over `n` independent uses of every source and channel.
pub fn nfold(bundle: &ScenarioBundle, n: u32) -> Result<ScenarioBundle> {
    nfold_with_cap(bundle, n, DEFAULT_ATOM_CAP)
}

pub fn nfold_with_cap(bundle: &ScenarioBundle, n: u32, cap: usize) -> Result<ScenarioBundle> {
    match (bundle.kind, &bundle.params) {
        (Some(kind), Some(params)) => build(kind, &params.nfold(n, cap)?),
        _ => Err(Error::InvalidParameter(format!("scenario `{}` has no parameters to lift", bundle.name))),
    }
}

// ---------------------------------------------------------------------------
// presets

/// Overrides accepted by [`preset`]; unset fields keep the preset default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetArgs {
    /// Message size (first message for two-message families).
    #[serde(default, rename = "L")]
    pub l: Option<usize>,
    /// Second message size for MAC and broadcast.
    #[serde(default, rename = "L2")]
    pub l2: Option<usize>,
    /// Relay-decoded message size for partial decode-forward.
    #[serde(default, rename = "J")]
    pub j: Option<usize>,
    /// Number of independent uses.
    #[serde(default)]
    pub n: Option<u32>,
    /// Crossover probability of the main binary symmetric channel.
    #[serde(default)]
    pub crossover: Option<f64>,
    /// Distortion threshold for source-coding families.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub swap: Option<bool>,
}

impl PresetArgs {
    /// `L=4;n=8` style summary of the set fields.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.l {
            parts.push(format!("L={v}"));
        }
        if let Some(v) = self.l2 {
            parts.push(format!("L2={v}"));
        }
        if let Some(v) = self.j {
            parts.push(format!("J={v}"));
        }
        if let Some(v) = self.n {
            parts.push(format!("n={v}"));
        }
        if let Some(v) = self.crossover {
            parts.push(format!("crossover={v}"));
        }
        if let Some(v) = self.threshold {
            parts.push(format!("threshold={v}"));
        }
        if let Some(v) = self.swap {
            parts.push(format!("swap={v}"));
        }
        parts.join(";")
    }
}

pub const PRESETS: &[&str] = &[
    "channel",
    "gelfand-pinsker",
    "wyner-ziv",
    "lossless",
    "lossy",
    "computing",
    "mac",
    "broadcast",
    "relay",
    "primitive-relay",
    "pdcf",
];

fn bin(label: &str) -> Alphabet {
    Alphabet::new(label, 2)
}

fn bern(p: f64) -> Result<FiniteDist> {
    FiniteDist::from_probs("B", vec![1.0 - p, p])
}

/// `out = a ⊕ noise` on bits.
fn noisy_copy(from: Vec<Alphabet>, which: usize, p: f64) -> Result<Kernel> {
    Kernel::from_tuple_fn(from, bin("out"), |t| vec![(t[which], 1.0 - p), (1 - t[which], p)])
}

fn xor_fn(from: Vec<Alphabet>) -> Result<Kernel> {
    Kernel::deterministic(from, bin("out"), |t| t.iter().fold(0, |a, &b| a ^ b))
}

/// Small binary instances of every family.
pub fn preset(name: &str, args: &PresetArgs) -> Result<(ScenarioKind, ScenarioParams)> {
    let q = args.crossover.unwrap_or(0.11);
    let uni = bern(0.5)?;
    let (kind, params) = match name {
        "channel" => (ScenarioKind::ChannelCoding, ScenarioParams::Channel(ChannelParams { px: uni, channel: bsc(q)?, l: 2 })),
        "gelfand-pinsker" => {
            // the encoder knows S and sends X = U ⊕ S over Y = X ⊕ S ⊕ noise
            let s = bin("S");
            let p = GpParams {
                ps: uni,
                pu_s: noisy_copy(vec![s.clone()], 0, 0.1)?,
                x_fn: xor_fn(vec![bin("U"), s.clone()])?,
                channel: Kernel::from_tuple_fn(vec![bin("X"), s], bin("Y"), |t| {
                    let c = t[0] ^ t[1];
                    vec![(c, 1.0 - q), (1 - c, q)]
                })?,
                l: 2,
            };
            (ScenarioKind::GelfandPinsker, ScenarioParams::GelfandPinsker(p))
        }
        "wyner-ziv" => {
            let p = WzParams {
                px: uni,
                pt_x: bsc(q)?,
                pu_x: bsc(0.05)?,
                z_fn: Kernel::deterministic(vec![bin("U"), bin("T")], bin("Z"), |t| t[0])?,
                distortion: hamming(2),
                threshold: args.threshold.unwrap_or(0.0),
                l: 4,
            };
            (ScenarioKind::WynerZiv, ScenarioParams::WynerZiv(p))
        }
        "lossless" => (ScenarioKind::LosslessSource, ScenarioParams::WynerZiv(lossless_params(&bern(0.3)?, 4)?)),
        "lossy" => {
            let t = Alphabet::new("T", 1);
            let p = WzParams {
                px: uni,
                pt_x: Kernel::deterministic(vec![bin("X")], t.clone(), |_| 0)?,
                pu_x: bsc(q)?,
                z_fn: Kernel::deterministic(vec![bin("U"), t], bin("Z"), |t| t[0])?,
                distortion: hamming(2),
                threshold: args.threshold.unwrap_or(0.0),
                l: 4,
            };
            (ScenarioKind::LossySource, ScenarioParams::WynerZiv(p))
        }
        "computing" => {
            // recover X ⊕ T with side information T
            let p = ComputingParams {
                px: uni,
                pt_x: bsc(0.3)?,
                pu_x: bsc(0.05)?,
                z_fn: xor_fn(vec![bin("U"), bin("T")])?,
                f: xor_fn(vec![bin("X"), bin("T")])?,
                distortion: hamming(2),
                threshold: args.threshold.unwrap_or(0.0),
                l: 4,
            };
            (ScenarioKind::Computing, ScenarioParams::Computing(p))
        }
        "mac" => {
            // binary adder with a noisy sum
            let p = MacParams {
                px1: uni.clone(),
                px2: uni,
                channel: Kernel::from_tuple_fn(vec![bin("X1"), bin("X2")], Alphabet::new("Y", 3), |t| {
                    let s = t[0] + t[1];
                    let mut row = vec![(s, 1.0 - q)];
                    let others: Vec<usize> = (0..3).filter(|&v| v != s).collect();
                    row.extend(others.iter().map(|&v| (v, q / 2.0)));
                    row
                })?,
                l1: 2,
                l2: 2,
            };
            (ScenarioKind::Mac, ScenarioParams::Mac(p))
        }
        "broadcast" => {
            let p = BroadcastParams {
                pu1: uni,
                pu2_u1: bsc(0.3)?,
                x_fn: xor_fn(vec![bin("U1"), bin("U2")])?,
                ch1: bsc(q)?,
                ch2: noisy_copy(vec![bin("X"), bin("Y1")], 0, 0.05)?,
                l1: 2,
                l2: 2,
                swap: args.swap.unwrap_or(false),
            };
            (ScenarioKind::Broadcast, ScenarioParams::Broadcast(p))
        }
        "relay" => {
            // the receiver hears X and the relay's forward over separate noisy bits
            let p = RelayParams {
                px: uni,
                ch_r: bsc(0.05)?,
                pu_yr: bsc(0.1)?,
                xr_fn: Kernel::deterministic(vec![bin("Yr"), bin("U")], bin("Xr"), |t| t[1])?,
                ch_y: Kernel::from_tuple_fn(vec![bin("X"), bin("Yr"), bin("Xr")], Alphabet::new("Y", 4), |t| {
                    let (a, b) = (t[0], t[2]);
                    vec![
                        (a * 2 + b, (1.0 - q) * 0.95),
                        (a * 2 + (1 - b), (1.0 - q) * 0.05),
                        ((1 - a) * 2 + b, q * 0.95),
                        ((1 - a) * 2 + (1 - b), q * 0.05),
                    ]
                })?,
                l: 2,
            };
            (ScenarioKind::Relay, ScenarioParams::Relay(p))
        }
        "primitive-relay" => (ScenarioKind::PrimitiveRelay, ScenarioParams::PrimitiveRelay(primitive_relay_micro(q)?)),
        "pdcf" => {
            let p = PdcfParams {
                pv: uni,
                px_v: bsc(0.2)?,
                ch_r: bsc(0.05)?,
                pu: noisy_copy(vec![bin("Yr"), bin("V")], 0, 0.1)?,
                xr_fn: Kernel::deterministic(vec![bin("Yr"), bin("U"), bin("V")], bin("Xr"), |t| t[1] ^ t[2])?,
                ch_y: Kernel::from_tuple_fn(vec![bin("X"), bin("Yr"), bin("Xr")], Alphabet::new("Y", 4), |t| {
                    let (a, b) = (t[0], t[2]);
                    vec![
                        (a * 2 + b, (1.0 - q) * 0.9),
                        (a * 2 + (1 - b), (1.0 - q) * 0.1),
                        ((1 - a) * 2 + b, q * 0.9),
                        ((1 - a) * 2 + (1 - b), q * 0.1),
                    ]
                })?,
                l: 4,
                j: 2,
            };
            (ScenarioKind::Pdcf, ScenarioParams::Pdcf(p))
        }
        other => {
            return Err(Error::InvalidParameter(format!("unknown preset `{other}`; known: {}", PRESETS.join(", "))));
        }
    };
    let mut params = params.with_messages(args.l, if kind == ScenarioKind::Pdcf { args.j } else { args.l2 });
    if let Some(n) = args.n {
        params = params.nfold(n, DEFAULT_ATOM_CAP)?;
    }
    Ok((kind, params))
}

/// Binary primitive relay: noisy direct link, relay observing a better copy,
/// and an orthogonal relay-to-receiver bit.
pub fn primitive_relay_micro(q: f64) -> Result<PrimitiveRelayParams> {
    Ok(PrimitiveRelayParams {
        px: bern(0.5)?,
        ch_r: bsc(0.05)?,
        pu_yr: bsc(0.1)?,
        pxr: bern(0.5)?,
        ch_y1: noisy_copy(vec![bin("X"), bin("Yr")], 0, q.max(0.2))?,
        ch_y2: bsc(0.05)?,
        l: 2,
    })
}

/// Builds a preset bundle.
pub fn preset_bundle(name: &str, args: &PresetArgs) -> Result<ScenarioBundle> {
    let (kind, params) = preset(name, args)?;
    let mut b = build(kind, &params)?;
    b.name = name.to_string();
    Ok(b)
}
