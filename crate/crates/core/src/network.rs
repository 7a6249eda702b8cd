//! Acyclic discrete networks, their auxiliary coding structure, and the
//! ideal joint distribution of all node variables.
//!
//! Nodes are 0-based. Node `i` observes `Y_i` through a channel that reads any
//! earlier `X`/`Y` variables, forms `U_i` from `(Y_i, Ū'_i)` and emits `X_i`
//! from `(Y_i, U_i, Ū'_i)`, where `Ū'_i` are the auxiliaries it decodes
//! uniquely.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{checked_size, Alphabet, JointDist, Kernel, DEFAULT_ATOM_CAP};
use crate::stats::{neumaier_sum, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarRef {
    X(usize),
    Y(usize),
}

impl VarRef {
    pub fn node(self) -> usize {
        match self {
            VarRef::X(i) | VarRef::Y(i) => i,
        }
    }
}

/// `P_{Y_i | inputs}` for the listed earlier variables, in listed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub inputs: Vec<VarRef>,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub x: Vec<Alphabet>,
    pub y: Vec<Alphabet>,
    pub channels: Vec<Channel>,
}

impl NetworkSpec {
    pub fn nodes(&self) -> usize {
        self.channels.len()
    }

    pub fn alphabet(&self, v: VarRef) -> &Alphabet {
        match v {
            VarRef::X(i) => &self.x[i],
            VarRef::Y(i) => &self.y[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAux {
    /// Decoding order `a_{i,1..d_i}` as node indices.
    pub decode: Vec<usize>,
    /// Number `d'_i` of leading entries of `decode` decoded uniquely.
    pub unique: usize,
    pub u: Alphabet,
    /// `P_{U_i | Y_i, Ū'_i}`.
    pub aux_kernel: Kernel,
    /// `P_{X_i | Y_i, U_i, Ū'_i}`.
    pub output_kernel: Kernel,
}

impl NodeAux {
    /// A node that decodes nothing, has a trivial auxiliary and emits `X`
    /// from `P_{X | Y}`.
    pub fn passive(y: &Alphabet, output: Kernel) -> Result<Self> {
        let u = Alphabet::new("U", 1);
        let aux_kernel = Kernel::deterministic(vec![y.clone()], u.clone(), |_| 0)?;
        let from = vec![y.clone(), u.clone()];
        let sizes = output.from_sizes();
        if sizes != vec![y.size] {
            return Err(Error::ShapeMismatch("passive output kernel must read Y only".into()));
        }
        let output_kernel = Kernel::from_tuple_fn(from, output.to_axis().clone(), |t| {
            let (c, v) = output.row(t[0]);
            c.iter().zip(v).map(|(&c, &p)| (c as usize, p)).collect()
        })?;
        Ok(Self { decode: vec![], unique: 0, u, aux_kernel, output_kernel })
    }

    pub fn soft(&self) -> &[usize] {
        &self.decode[self.unique.min(self.decode.len())..]
    }

    pub fn unique_list(&self) -> &[usize] {
        &self.decode[..self.unique.min(self.decode.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxStructure {
    pub nodes: Vec<NodeAux>,
}

impl AuxStructure {
    pub fn u_size(&self, node: usize) -> usize {
        self.nodes[node].u.size
    }
}

/// Checks acyclicity, index ranges and kernel shapes; returns every problem
/// found rather than stopping at the first.
pub fn validate(spec: &NetworkSpec, aux: &AuxStructure) -> Vec<String> {
    let mut out = Vec::new();
    let n = spec.channels.len();
    if n == 0 {
        out.push("network has no nodes".into());
    }
    if spec.x.len() != n || spec.y.len() != n || aux.nodes.len() != n {
        out.push(format!(
            "node count mismatch: {} channels, {} x alphabets, {} y alphabets, {} aux entries",
            n,
            spec.x.len(),
            spec.y.len(),
            aux.nodes.len()
        ));
        return out;
    }
    for (i, ch) in spec.channels.iter().enumerate() {
        let label = i + 1;
        for v in &ch.inputs {
            if v.node() >= i {
                out.push(format!("node {label}: channel input {v:?} is not an earlier variable"));
            }
        }
        if ch.inputs.iter().any(|v| v.node() >= i) {
            continue;
        }
        let want: Vec<usize> = ch.inputs.iter().map(|&v| spec.alphabet(v).size).collect();
        if ch.kernel.from_sizes() != want {
            out.push(format!(
                "node {label}: channel reads sizes {:?} but inputs have sizes {want:?}",
                ch.kernel.from_sizes()
            ));
        }
        if ch.kernel.to_axis().size != spec.y[i].size {
            out.push(format!("node {label}: channel output size differs from |Y_{label}|"));
        }
    }
    for (i, a) in aux.nodes.iter().enumerate() {
        let label = i + 1;
        let mut bad = false;
        for (pos, &k) in a.decode.iter().enumerate() {
            if k >= i {
                out.push(format!("node {label}: decode index {} not in [i-1]", k + 1));
                bad = true;
            }
            if a.decode[..pos].contains(&k) {
                out.push(format!("node {label}: decode index {} repeated", k + 1));
                bad = true;
            }
        }
        if a.unique > a.decode.len() {
            out.push(format!(
                "node {label}: unique count d' = {} exceeds d = {}",
                a.unique,
                a.decode.len()
            ));
            bad = true;
        }
        if bad {
            continue;
        }
        let mut want = vec![spec.y[i].size];
        want.extend(a.decode[..a.unique].iter().map(|&k| aux.nodes[k].u.size));
        if a.aux_kernel.from_sizes() != want {
            out.push(format!(
                "node {label}: aux kernel reads sizes {:?}, expected (Y_i, decoded U) sizes {want:?}",
                a.aux_kernel.from_sizes()
            ));
        }
        if a.aux_kernel.to_axis().size != a.u.size {
            out.push(format!("node {label}: aux kernel output size differs from |U_{label}|"));
        }
        want.insert(1, a.u.size);
        if a.output_kernel.from_sizes() != want {
            out.push(format!(
                "node {label}: output kernel reads sizes {:?}, expected (Y_i, U_i, decoded U) sizes {want:?}",
                a.output_kernel.from_sizes()
            ));
        }
        if a.output_kernel.to_axis().size != spec.x[i].size {
            out.push(format!("node {label}: output kernel size differs from |X_{label}|"));
        }
    }
    out
}

pub fn ensure_valid(spec: &NetworkSpec, aux: &AuxStructure) -> Result<()> {
    let problems = validate(spec, aux);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidNetwork(problems))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Y,
    U,
    X,
}

/// Axis of `role` at `node` in an ideal-joint atom.
pub fn axis(node: usize, role: Role) -> usize {
    3 * node
        + match role {
            Role::Y => 0,
            Role::U => 1,
            Role::X => 2,
        }
}

/// A component of a node variable: `(value / divisor) % modulus`. Tuples are
/// flattened first-component-most-significant, so the trailing component of
/// a pair `(a, b)` is `divisor = 1, modulus = |B|` and the leading one is
/// `divisor = |B|, modulus = |A|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Field {
    pub node: usize,
    pub role: Role,
    pub divisor: usize,
    pub modulus: usize,
}

impl Field {
    pub fn whole(node: usize, role: Role, size: usize) -> Self {
        Self { node, role, divisor: 1, modulus: size }
    }

    pub fn part(node: usize, role: Role, divisor: usize, modulus: usize) -> Self {
        Self { node, role, divisor, modulus }
    }

    #[inline]
    pub fn extract(&self, value: usize) -> usize {
        (value / self.divisor) % self.modulus
    }

    /// Reads this field from `x^N` and `y^N`; `U` fields are not allowed here.
    pub fn read_xy(&self, x: &[usize], y: &[usize]) -> usize {
        match self.role {
            Role::X => self.extract(x[self.node]),
            Role::Y => self.extract(y[self.node]),
            Role::U => panic!("error sets only observe X and Y"),
        }
    }
}

/// Subset of `(x^N, y^N)` outcomes counted as failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErrorSet {
    Empty,
    Everything,
    /// Failure when any listed pair of fields differs.
    MessageMismatch(Vec<(Field, Field)>),
    /// Failure when `table[source][recon] > threshold`.
    Distortion { source: Field, recon: Field, table: Vec<Vec<f64>>, threshold: f64 },
    /// Failure when `table[f(args)][recon] > threshold`; `f` is indexed by
    /// the args flattened with each field's modulus as its size.
    FunctionMismatch { args: Vec<Field>, f: Vec<usize>, recon: Field, table: Vec<Vec<f64>>, threshold: f64 },
    /// Explicit members, each `x_1..x_N` followed by `y_1..y_N`.
    Custom(Vec<Vec<usize>>),
}

impl ErrorSet {
    pub fn contains(&self, x: &[usize], y: &[usize]) -> bool {
        match self {
            ErrorSet::Empty => false,
            ErrorSet::Everything => true,
            ErrorSet::MessageMismatch(pairs) => pairs.iter().any(|(a, b)| a.read_xy(x, y) != b.read_xy(x, y)),
            ErrorSet::Distortion { source, recon, table, threshold } => {
                table[source.read_xy(x, y)][recon.read_xy(x, y)] > *threshold
            }
            ErrorSet::FunctionMismatch { args, f, recon, table, threshold } => {
                let idx = args.iter().fold(0, |acc, a| acc * a.modulus + a.read_xy(x, y));
                table[f[idx]][recon.read_xy(x, y)] > *threshold
            }
            ErrorSet::Custom(members) => members.iter().any(|m| {
                let n = x.len();
                m.len() == 2 * n && m[..n] == *x && m[n..] == *y
            }),
        }
    }

    fn fields(&self) -> Vec<Field> {
        match self {
            ErrorSet::MessageMismatch(pairs) => pairs.iter().flat_map(|(a, b)| [*a, *b]).collect(),
            ErrorSet::Distortion { source, recon, .. } => vec![*source, *recon],
            ErrorSet::FunctionMismatch { args, recon, .. } => {
                let mut v = args.clone();
                v.push(*recon);
                v
            }
            _ => vec![],
        }
    }

    /// Shape checks against a network.
    pub fn validate(&self, spec: &NetworkSpec) -> Vec<String> {
        let mut out = Vec::new();
        for f in self.fields() {
            if f.node >= spec.nodes() {
                out.push(format!("error set reads node {} of {}", f.node + 1, spec.nodes()));
            } else if f.role == Role::U {
                out.push("error set may only read X and Y variables".into());
            } else if f.divisor == 0 || f.modulus == 0 {
                out.push("error set field has a zero divisor or modulus".into());
            }
        }
        match self {
            ErrorSet::Distortion { source, recon, table, .. } => {
                if table.len() < source.modulus || table.iter().any(|r| r.len() < recon.modulus) {
                    out.push("distortion table is smaller than the fields it compares".into());
                }
            }
            ErrorSet::FunctionMismatch { args, f, recon, table, .. } => {
                let n: usize = args.iter().map(|a| a.modulus).product();
                if f.len() != n {
                    out.push(format!("function table has {} entries, arguments span {}", f.len(), n));
                }
                if f.iter().any(|&v| v >= table.len()) || table.iter().any(|r| r.len() < recon.modulus) {
                    out.push("distortion table is smaller than the fields it compares".into());
                }
            }
            ErrorSet::Custom(members) => {
                if members.iter().any(|m| m.len() != 2 * spec.nodes()) {
                    out.push("custom error-set members must list x_1..x_N then y_1..y_N".into());
                }
            }
            _ => {}
        }
        out
    }
}

/// The ideal joint law of `(Y_i, U_i, X_i)_{i}` stored as its support: each
/// atom holds `3N` values at axes given by [`axis`].
#[derive(Debug, Clone, PartialEq)]
pub struct IdealJoint {
    nodes: usize,
    sizes: Vec<usize>,
    atoms: Vec<u32>,
    probs: Vec<f64>,
}

impl IdealJoint {
    pub fn build(spec: &NetworkSpec, aux: &AuxStructure) -> Result<Self> {
        Self::build_with_cap(spec, aux, DEFAULT_ATOM_CAP)
    }

    /// Sequential semidirect products in node order, `Y_i` then `U_i` then
    /// `X_i`, keeping only positive-probability atoms.
    pub fn build_with_cap(spec: &NetworkSpec, aux: &AuxStructure, cap: usize) -> Result<Self> {
        ensure_valid(spec, aux)?;
        let n = spec.nodes();
        let w = 3 * n;
        let mut sizes = vec![0; w];
        for i in 0..n {
            sizes[axis(i, Role::Y)] = spec.y[i].size;
            sizes[axis(i, Role::U)] = aux.nodes[i].u.size;
            sizes[axis(i, Role::X)] = spec.x[i].size;
        }
        if let Some(&big) = sizes.iter().find(|&&s| s > u32::MAX as usize) {
            return Err(Error::CapacityExceeded { atoms: big as u128, cap: u32::MAX as usize });
        }
        let mut atoms: Vec<u32> = vec![0; w];
        let mut probs = vec![1.0];
        for i in 0..n {
            let ch = &spec.channels[i];
            let src = |a: &[u32]| -> usize {
                ch.inputs.iter().fold(0, |acc, &v| {
                    let (ax, s) = match v {
                        VarRef::X(k) => (axis(k, Role::X), spec.x[k].size),
                        VarRef::Y(k) => (axis(k, Role::Y), spec.y[k].size),
                    };
                    acc * s + a[ax] as usize
                })
            };
            (atoms, probs) = extend(&atoms, &probs, w, axis(i, Role::Y), &ch.kernel, src, cap)?;
            let a = &aux.nodes[i];
            let dec: Vec<usize> = a.unique_list().iter().map(|&k| axis(k, Role::U)).collect();
            let dec_sizes: Vec<usize> = a.unique_list().iter().map(|&k| aux.nodes[k].u.size).collect();
            let ya = axis(i, Role::Y);
            let src_u = |at: &[u32]| -> usize {
                dec.iter().zip(&dec_sizes).fold(at[ya] as usize, |acc, (&ax, &s)| acc * s + at[ax] as usize)
            };
            (atoms, probs) = extend(&atoms, &probs, w, axis(i, Role::U), &a.aux_kernel, src_u, cap)?;
            let ua = axis(i, Role::U);
            let usz = a.u.size;
            let src_x = |at: &[u32]| -> usize {
                let head = at[ya] as usize * usz + at[ua] as usize;
                dec.iter().zip(&dec_sizes).fold(head, |acc, (&ax, &s)| acc * s + at[ax] as usize)
            };
            (atoms, probs) = extend(&atoms, &probs, w, axis(i, Role::X), &a.output_kernel, src_x, cap)?;
        }
        Ok(Self { nodes: n, sizes, atoms, probs })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[u32] {
        &self.atoms[k * 3 * self.nodes..(k + 1) * 3 * self.nodes]
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs[k]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.atoms.chunks_exact(3 * self.nodes).zip(self.probs.iter().copied())
    }

    pub fn total(&self) -> f64 {
        neumaier_sum(self.probs.iter().copied())
    }

    /// `(x^N, y^N)` of atom `k`.
    pub fn xy(&self, k: usize) -> (Vec<usize>, Vec<usize>) {
        let a = self.atom(k);
        let x = (0..self.nodes).map(|i| a[axis(i, Role::X)] as usize).collect();
        let y = (0..self.nodes).map(|i| a[axis(i, Role::Y)] as usize).collect();
        (x, y)
    }

    /// Sparse marginal over `axes`, keyed by the flattened value tuple.
    pub fn marginal_map(&self, axes: &[usize]) -> Result<MarginalMap> {
        MarginalMap::new(self, axes)
    }

    /// Dense marginal over `axes` in the given order.
    pub fn marginal(&self, axes: &[usize], cap: usize) -> Result<JointDist> {
        for &a in axes {
            if a >= self.sizes.len() {
                return Err(Error::BadAxis { axis: a, count: self.sizes.len() });
            }
        }
        let sizes: Vec<usize> = axes.iter().map(|&a| self.sizes[a]).collect();
        let total = checked_size(sizes.iter().copied(), cap)?;
        let mut acc = vec![NeumaierSum::default(); total];
        for (atom, p) in self.atoms() {
            let idx = axes.iter().zip(&sizes).fold(0, |acc, (&a, &s)| acc * s + atom[a] as usize);
            acc[idx].add(p);
        }
        let labels: Vec<Alphabet> = axes
            .iter()
            .map(|&a| {
                let role = ["Y", "U", "X"][a % 3];
                Alphabet::new(format!("{}{}", role, a / 3 + 1), self.sizes[a])
            })
            .collect();
        let mass: Vec<f64> = acc.iter().map(NeumaierSum::total).collect();
        let t = neumaier_sum(mass.iter().copied());
        JointDist::with_cap(labels, mass.iter().map(|m| m / t).collect(), cap)
    }

    /// Index of the atom selected by `uniform` under inverse-transform
    /// sampling of the atom list.
    pub fn sample_index(&self, cumulative: &[f64], uniform: f64) -> usize {
        let target = uniform * cumulative.last().copied().unwrap_or(1.0);
        cumulative.partition_point(|&c| c <= target).min(self.probs.len() - 1)
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }
}

fn extend(
    atoms: &[u32],
    probs: &[f64],
    width: usize,
    target: usize,
    kernel: &Kernel,
    source: impl Fn(&[u32]) -> usize,
    cap: usize,
) -> Result<(Vec<u32>, Vec<f64>)> {
    let mut count: u128 = 0;
    for a in atoms.chunks_exact(width) {
        count += kernel.row(source(a)).0.len() as u128;
    }
    if count > cap as u128 {
        return Err(Error::CapacityExceeded { atoms: count, cap });
    }
    let mut out_atoms = Vec::with_capacity(count as usize * width);
    let mut out_probs = Vec::with_capacity(count as usize);
    for (a, &p) in atoms.chunks_exact(width).zip(probs) {
        let (cols, vals) = kernel.row(source(a));
        for (&c, &q) in cols.iter().zip(vals) {
            let start = out_atoms.len();
            out_atoms.extend_from_slice(a);
            out_atoms[start + target] = c;
            out_probs.push(p * q);
        }
    }
    Ok((out_atoms, out_probs))
}

/// Marginal of an [`IdealJoint`] over a list of axes, stored sparsely.
#[derive(Debug, Clone)]
pub struct MarginalMap {
    axes: Vec<usize>,
    radices: Vec<u128>,
    map: HashMap<u128, f64>,
}

impl MarginalMap {
    fn new(ij: &IdealJoint, axes: &[usize]) -> Result<Self> {
        let mut span: u128 = 1;
        for &a in axes {
            if a >= ij.sizes.len() {
                return Err(Error::BadAxis { axis: a, count: ij.sizes.len() });
            }
            span = span
                .checked_mul(ij.sizes[a] as u128)
                .ok_or_else(|| Error::CapacityExceeded { atoms: u128::MAX, cap: usize::MAX })?;
        }
        let radices: Vec<u128> = axes.iter().map(|&a| ij.sizes[a] as u128).collect();
        let mut sums: HashMap<u128, NeumaierSum> = HashMap::new();
        let mut mm = Self { axes: axes.to_vec(), radices, map: HashMap::new() };
        for (atom, p) in ij.atoms() {
            sums.entry(mm.key(atom)).or_default().add(p);
        }
        mm.map = sums.into_iter().map(|(k, s)| (k, s.total())).collect();
        Ok(mm)
    }

    #[inline]
    pub fn key(&self, atom: &[u32]) -> u128 {
        self.axes.iter().zip(&self.radices).fold(0, |acc, (&a, &r)| acc * r + atom[a] as u128)
    }

    /// Marginal probability of the values `atom` takes on this map's axes.
    #[inline]
    pub fn at(&self, atom: &[u32]) -> f64 {
        if self.axes.is_empty() {
            return 1.0;
        }
        self.map.get(&self.key(atom)).copied().unwrap_or(0.0)
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn iter(&self) -> impl Iterator<Item = (u128, f64)> + '_ {
        self.map.iter().map(|(&k, &v)| (k, v))
    }
}

/// Exact `P((X^N, Y^N) ∈ E)` under the ideal joint.
pub fn error_probability_ideal(ij: &IdealJoint, e: &ErrorSet) -> f64 {
    let mut acc = NeumaierSum::default();
    for k in 0..ij.len() {
        let (x, y) = ij.xy(k);
        if e.contains(&x, &y) {
            acc.add(ij.prob(k));
        }
    }
    acc.total().clamp(0.0, 1.0)
}
