//! Exact probability machinery over finite alphabets.
//!
//! Elements of an alphabet of size `n` are the indices `0..n`. Tuples over
//! several alphabets are flattened row-major with the first component most
//! significant, so `(a, b)` over sizes `(A, B)` is the index `a * B + b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::NeumaierSum;

/// Largest number of dense entries any single table may hold by default.
pub const DEFAULT_ATOM_CAP: usize = 10_000_000;

/// Tolerance accepted on the total mass of user-supplied distributions and
/// kernel rows before they are renormalized.
pub const INPUT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    pub size: usize,
    pub label: String,
}

impl Alphabet {
    pub fn try_new(label: impl Into<String>, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyAlphabet);
        }
        Ok(Self { size, label: label.into() })
    }

    /// Panics on an empty alphabet; use [`Alphabet::try_new`] for untrusted sizes.
    pub fn new(label: impl Into<String>, size: usize) -> Self {
        Self::try_new(label, size).expect("alphabet size must be positive")
    }

    /// The `n`-fold product alphabet, labelled `label^n`.
    pub fn power(&self, n: u32) -> Result<Self> {
        let size = checked_pow(self.size, n)?;
        let label = if n == 1 { self.label.clone() } else { format!("{}^{}", self.label, n) };
        Ok(Self { size, label })
    }
}

pub(crate) fn checked_pow(base: usize, n: u32) -> Result<usize> {
    base.checked_pow(n).ok_or(Error::CapacityExceeded { atoms: (base as u128).saturating_pow(n), cap: usize::MAX })
}

/// Product of sizes, failing once it passes `cap`.
pub fn checked_size(sizes: impl IntoIterator<Item = usize>, cap: usize) -> Result<usize> {
    let mut total: u128 = 1;
    for s in sizes {
        total = total.saturating_mul(s as u128);
        if total > cap as u128 {
            return Err(Error::CapacityExceeded { atoms: total, cap });
        }
    }
    Ok(total as usize)
}

/// Row-major index of `values` over `sizes`.
pub fn flat_index(values: &[usize], sizes: &[usize]) -> usize {
    debug_assert_eq!(values.len(), sizes.len());
    values.iter().zip(sizes).fold(0, |acc, (&v, &s)| {
        debug_assert!(v < s);
        acc * s + v
    })
}

/// Inverse of [`flat_index`].
pub fn unflatten(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, &s) in out.iter_mut().zip(sizes).rev() {
        *slot = index % s;
        index /= s;
    }
    out
}

fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut st = vec![1; sizes.len()];
    for k in (0..sizes.len().saturating_sub(1)).rev() {
        st[k] = st[k + 1] * sizes[k + 1];
    }
    st
}

/// Walks every multi-index of `sizes` in row-major order.
struct Odometer {
    sizes: Vec<usize>,
    cur: Vec<usize>,
    started: bool,
    done: bool,
}

impl Odometer {
    fn new(sizes: &[usize]) -> Self {
        Self { sizes: sizes.to_vec(), cur: vec![0; sizes.len()], started: false, done: false }
    }

    fn advance(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.cur);
        }
        for k in (0..self.sizes.len()).rev() {
            self.cur[k] += 1;
            if self.cur[k] < self.sizes[k] {
                return Some(&self.cur);
            }
            self.cur[k] = 0;
        }
        self.done = true;
        None
    }
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    let mut sum = NeumaierSum::default();
    for (index, &value) in weights.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeWeight { index, value });
        }
        sum.add(value);
    }
    Ok(sum.total())
}

/// Scales `weights` to sum to one.
pub fn normalize(weights: &[f64]) -> Result<FiniteDist> {
    let total = check_weights(weights)?;
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    Ok(FiniteDist {
        alphabet: Alphabet::try_new("", weights.len())?,
        mass: weights.iter().map(|w| w / total).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDist {
    alphabet: Alphabet,
    mass: Vec<f64>,
}

impl FiniteDist {
    /// Accepts probabilities summing to one within [`INPUT_TOLERANCE`] and
    /// renormalizes them exactly.
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.size {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for alphabet `{}` of size {}",
                probs.len(),
                alphabet.label,
                alphabet.size
            )));
        }
        let total = check_weights(&probs)?;
        if (total - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::NotNormalized { sum: total });
        }
        let mass = probs.iter().map(|p| p / total).collect();
        Ok(Self { alphabet, mass })
    }

    pub fn from_probs(label: &str, probs: Vec<f64>) -> Result<Self> {
        let alphabet = Alphabet::try_new(label, probs.len())?;
        Self::new(alphabet, probs)
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let n = alphabet.size;
        Self { alphabet, mass: vec![1.0 / n as f64; n] }
    }

    pub fn point(alphabet: Alphabet, at: usize) -> Self {
        assert!(at < alphabet.size, "point mass outside alphabet");
        let mut mass = vec![0.0; alphabet.size];
        mass[at] = 1.0;
        Self { alphabet, mass }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn prob(&self, u: usize) -> f64 {
        self.mass[u]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.mass.len()).filter(|&u| self.mass[u] > 0.0).collect()
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.alphabet.label = label.to_string();
        self
    }

    /// The i.i.d. product distribution over `n` copies.
    pub fn power(&self, n: u32) -> Result<Self> {
        let alphabet = self.alphabet.power(n)?;
        let sizes = vec![self.len(); n as usize];
        let mass = (0..alphabet.size)
            .map(|idx| unflatten(idx, &sizes).iter().map(|&u| self.mass[u]).product())
            .collect();
        Ok(Self { alphabet, mass })
    }
}

/// A probability mass function over a product of alphabets, stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDist {
    axes: Vec<Alphabet>,
    mass: Vec<f64>,
}

impl JointDist {
    pub fn new(axes: Vec<Alphabet>, mass: Vec<f64>) -> Result<Self> {
        Self::with_cap(axes, mass, DEFAULT_ATOM_CAP)
    }

    pub fn with_cap(axes: Vec<Alphabet>, mass: Vec<f64>, cap: usize) -> Result<Self> {
        let size = checked_size(axes.iter().map(|a| a.size), cap)?;
        if mass.len() != size {
            return Err(Error::ShapeMismatch(format!("{} masses for {} atoms", mass.len(), size)));
        }
        let total = check_weights(&mass)?;
        if (total - 1.0).abs() > INPUT_TOLERANCE {
            return Err(Error::NotNormalized { sum: total });
        }
        let mass = mass.iter().map(|p| p / total).collect();
        Ok(Self { axes, mass })
    }

    pub fn from_dist(d: &FiniteDist) -> Self {
        Self { axes: vec![d.alphabet.clone()], mass: d.mass.clone() }
    }

    /// Independent product of the given marginals, in order.
    pub fn product(parts: &[&FiniteDist]) -> Result<Self> {
        let axes: Vec<Alphabet> = parts.iter().map(|d| d.alphabet.clone()).collect();
        let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
        let n = checked_size(sizes.iter().copied(), DEFAULT_ATOM_CAP)?;
        let mass = (0..n)
            .map(|idx| unflatten(idx, &sizes).iter().zip(parts).map(|(&u, d)| d.mass[u]).product())
            .collect();
        Ok(Self { axes, mass })
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.size).collect()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn prob(&self, point: &[usize]) -> f64 {
        self.mass[flat_index(point, &self.sizes())]
    }

    /// Positive-probability atoms as `(point, mass)` pairs in row-major order.
    pub fn atoms(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let sizes = self.sizes();
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(move |(idx, &p)| (unflatten(idx, &sizes), p))
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.axes.len()];
        for &a in axes {
            if a >= self.axes.len() {
                return Err(Error::BadAxis { axis: a, count: self.axes.len() });
            }
            if seen[a] {
                return Err(Error::ShapeMismatch(format!("axis {a} listed twice")));
            }
            seen[a] = true;
        }
        Ok(())
    }

    /// Sums out every axis not in `keep`; the result's axes follow `keep`'s order.
    pub fn marginal(&self, keep: &[usize]) -> Result<JointDist> {
        if keep.is_empty() {
            return Err(Error::ShapeMismatch("marginal needs at least one axis".into()));
        }
        self.check_axes(keep)?;
        let sizes = self.sizes();
        let out_sizes: Vec<usize> = keep.iter().map(|&a| sizes[a]).collect();
        let out_strides = strides(&out_sizes);
        let mut acc = vec![NeumaierSum::default(); out_sizes.iter().product()];
        let mut odo = Odometer::new(&sizes);
        let mut flat = 0;
        while let Some(point) = odo.advance() {
            let p = self.mass[flat];
            flat += 1;
            if p == 0.0 {
                continue;
            }
            let idx: usize = keep.iter().zip(&out_strides).map(|(&a, &s)| point[a] * s).sum();
            acc[idx].add(p);
        }
        Ok(JointDist {
            axes: keep.iter().map(|&a| self.axes[a].clone()).collect(),
            mass: acc.iter().map(NeumaierSum::total).collect(),
        })
    }

    /// Normalized slice over the remaining axes (original order) given
    /// `given[k] = values[k]`.
    pub fn condition(&self, given: &[usize], values: &[usize]) -> Result<JointDist> {
        self.check_axes(given)?;
        if given.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} conditioning axes but {} values",
                given.len(),
                values.len()
            )));
        }
        let sizes = self.sizes();
        for (&a, &v) in given.iter().zip(values) {
            if v >= sizes[a] {
                return Err(Error::OutOfUniverse { element: v, size: sizes[a] });
            }
        }
        let rest: Vec<usize> = (0..self.axes.len()).filter(|a| !given.contains(a)).collect();
        if rest.is_empty() {
            return Err(Error::ShapeMismatch("conditioning on every axis leaves nothing".into()));
        }
        let rest_sizes: Vec<usize> = rest.iter().map(|&a| sizes[a]).collect();
        let n: usize = rest_sizes.iter().product();
        let mut slice = Vec::with_capacity(n);
        let mut full = vec![0; sizes.len()];
        for (&a, &v) in given.iter().zip(values) {
            full[a] = v;
        }
        let mut odo = Odometer::new(&rest_sizes);
        while let Some(r) = odo.advance() {
            for (&a, &v) in rest.iter().zip(r) {
                full[a] = v;
            }
            slice.push(self.mass[flat_index(&full, &sizes)]);
        }
        let total = slice.iter().fold(NeumaierSum::default(), |mut s, &p| {
            s.add(p);
            s
        });
        let total = total.total();
        if total <= 0.0 {
            return Err(Error::ZeroConditioning);
        }
        Ok(JointDist {
            axes: rest.iter().map(|&a| self.axes[a].clone()).collect(),
            mass: slice.iter().map(|p| p / total).collect(),
        })
    }

    /// `mass(a, b) = self(a) * k(b | a)`, appending the kernel's output axis.
    pub fn semidirect(&self, k: &Kernel) -> Result<JointDist> {
        let sizes = self.sizes();
        let from: Vec<usize> = k.from.iter().map(|a| a.size).collect();
        if sizes != from {
            return Err(Error::ShapeMismatch(format!(
                "kernel conditions on sizes {from:?} but base has {sizes:?}"
            )));
        }
        let m = k.to.size;
        checked_size([self.mass.len(), m], DEFAULT_ATOM_CAP)?;
        let mut mass = vec![0.0; self.mass.len() * m];
        for (src, &p) in self.mass.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (cols, vals) = k.row(src);
            for (&c, &q) in cols.iter().zip(vals) {
                mass[src * m + c as usize] = p * q;
            }
        }
        let mut axes = self.axes.clone();
        axes.push(k.to.clone());
        Ok(JointDist { axes, mass })
    }

    /// Reorders axes so that new axis `k` is old axis `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<JointDist> {
        if order.len() != self.axes.len() {
            return Err(Error::ShapeMismatch("permutation must list every axis".into()));
        }
        self.marginal(order)
    }

    /// Conditional information density `log2 P(x,y|z) / (P(x|z) P(y|z))` at
    /// `point`, a full assignment of every axis.
    pub fn info_density(&self, x: &[usize], y: &[usize], z: &[usize], point: &[usize]) -> Result<f64> {
        DensityTable::new(self, x, y, z)?.at(point)
    }

    /// `I(X; Y | Z)` in bits, the expectation of [`JointDist::info_density`].
    pub fn mutual_info(&self, x: &[usize], y: &[usize], z: &[usize]) -> Result<f64> {
        let table = DensityTable::new(self, x, y, z)?;
        let mut acc = NeumaierSum::default();
        for (point, p) in self.atoms() {
            acc.add(p * table.at(&point)?);
        }
        Ok(acc.total().max(0.0))
    }

    pub fn max_abs_diff(&self, other: &JointDist) -> Option<f64> {
        if self.sizes() != other.sizes() {
            return None;
        }
        Some(self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

/// Precomputed marginals for evaluating `ι(X;Y|Z)` at many points of one joint.
pub struct DensityTable {
    sizes: Vec<usize>,
    xyz: (Vec<usize>, Vec<f64>),
    xz: (Vec<usize>, Vec<f64>),
    yz: (Vec<usize>, Vec<f64>),
    z: (Vec<usize>, Vec<f64>),
}

impl DensityTable {
    pub fn new(j: &JointDist, x: &[usize], y: &[usize], z: &[usize]) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::ShapeMismatch("information density needs non-empty x and y".into()));
        }
        let all: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
        j.check_axes(&all)?;
        let cat = |a: &[usize], b: &[usize]| -> Vec<usize> { a.iter().chain(b).copied().collect() };
        let table = |axes: Vec<usize>| -> Result<(Vec<usize>, Vec<f64>)> {
            if axes.is_empty() {
                return Ok((axes, vec![1.0]));
            }
            let m = j.marginal(&axes)?;
            Ok((axes, m.mass))
        };
        Ok(Self {
            sizes: j.sizes(),
            xyz: table(all.clone())?,
            xz: table(cat(x, z))?,
            yz: table(cat(y, z))?,
            z: table(z.to_vec())?,
        })
    }

    fn lookup(&self, t: &(Vec<usize>, Vec<f64>), point: &[usize]) -> f64 {
        let idx = t.0.iter().fold(0, |acc, &a| acc * self.sizes[a] + point[a]);
        t.1[idx]
    }

    pub fn at(&self, point: &[usize]) -> Result<f64> {
        if point.len() != self.sizes.len() || point.iter().zip(&self.sizes).any(|(v, s)| v >= s) {
            return Err(Error::ShapeMismatch(format!("point {point:?} does not fit sizes {:?}", self.sizes)));
        }
        let pxyz = self.lookup(&self.xyz, point);
        if pxyz <= 0.0 {
            return Err(Error::ZeroProbabilityPoint);
        }
        let pz = self.lookup(&self.z, point);
        let pxz = self.lookup(&self.xz, point);
        let pyz = self.lookup(&self.yz, point);
        Ok(pxyz.log2() + pz.log2() - pxz.log2() - pyz.log2())
    }
}

/// Conditional distribution of one output axis given a tuple of input axes,
/// stored as sparse rows (one per flattened input tuple, zeros omitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    from: Vec<Alphabet>,
    to: Alphabet,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Kernel {
    fn num_sources(from: &[Alphabet]) -> Result<usize> {
        checked_size(from.iter().map(|a| a.size), DEFAULT_ATOM_CAP)
    }

    /// One dense row per flattened source tuple.
    pub fn from_rows(from: Vec<Alphabet>, to: Alphabet, rows: &[Vec<f64>]) -> Result<Self> {
        let n = Self::num_sources(&from)?;
        if rows.len() != n {
            return Err(Error::ShapeMismatch(format!("{} rows for {} source tuples", rows.len(), n)));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != to.size {
                return Err(Error::ShapeMismatch(format!(
                    "row {r} has {} entries, output alphabet has {}",
                    row.len(),
                    to.size
                )));
            }
        }
        Self::from_fn(from, to, |src| {
            let row = &rows[src];
            row.iter().enumerate().filter(|(_, &p)| p != 0.0).map(|(c, &p)| (c, p)).collect()
        })
    }

    /// Builds each row from `f(flattened source index)`; entries need not be sorted.
    pub fn from_fn(from: Vec<Alphabet>, to: Alphabet, mut f: impl FnMut(usize) -> Vec<(usize, f64)>) -> Result<Self> {
        let n = Self::num_sources(&from)?;
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for src in 0..n {
            let mut row = f(src);
            row.sort_by_key(|&(c, _)| c);
            let mut sum = NeumaierSum::default();
            for (i, &(c, p)) in row.iter().enumerate() {
                if c >= to.size {
                    return Err(Error::OutOfUniverse { element: c, size: to.size });
                }
                if i > 0 && row[i - 1].0 == c {
                    return Err(Error::ShapeMismatch(format!("row {src} lists output {c} twice")));
                }
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::NegativeWeight { index: c, value: p });
                }
                sum.add(p);
            }
            let total = sum.total();
            if (total - 1.0).abs() > INPUT_TOLERANCE {
                return Err(Error::RowNotNormalized { row: src, sum: total });
            }
            for (c, p) in row {
                if p > 0.0 {
                    cols.push(c as u32);
                    vals.push(p / total);
                }
            }
            offsets.push(cols.len());
        }
        Ok(Self { from, to, offsets, cols, vals })
    }

    /// Same as [`Kernel::from_fn`] but `f` receives the decoded source tuple.
    pub fn from_tuple_fn(from: Vec<Alphabet>, to: Alphabet, mut f: impl FnMut(&[usize]) -> Vec<(usize, f64)>) -> Result<Self> {
        let sizes: Vec<usize> = from.iter().map(|a| a.size).collect();
        Self::from_fn(from, to, |src| f(&unflatten(src, &sizes)))
    }

    pub fn deterministic(from: Vec<Alphabet>, to: Alphabet, mut f: impl FnMut(&[usize]) -> usize) -> Result<Self> {
        Self::from_tuple_fn(from, to, |t| vec![(f(t), 1.0)])
    }

    /// Every row equal to `d`.
    pub fn constant(from: Vec<Alphabet>, d: &FiniteDist) -> Result<Self> {
        let row: Vec<(usize, f64)> = d.support().into_iter().map(|u| (u, d.prob(u))).collect();
        Self::from_fn(from, d.alphabet().clone(), |_| row.clone())
    }

    pub fn from_axes(&self) -> &[Alphabet] {
        &self.from
    }

    pub fn from_sizes(&self) -> Vec<usize> {
        self.from.iter().map(|a| a.size).collect()
    }

    pub fn to_axis(&self) -> &Alphabet {
        &self.to
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn max_row_nnz(&self) -> usize {
        self.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn source_index(&self, tuple: &[usize]) -> usize {
        flat_index(tuple, &self.from_sizes())
    }

    /// Positive entries of row `src`, sorted by output element.
    pub fn row(&self, src: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[src], self.offsets[src + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn row_dense(&self, src: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.to.size];
        let (c, v) = self.row(src);
        for (&c, &p) in c.iter().zip(v) {
            out[c as usize] = p;
        }
        out
    }

    pub fn prob(&self, src: usize, to: usize) -> f64 {
        let (c, v) = self.row(src);
        match c.binary_search(&(to as u32)) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    /// Inverse-transform sample of row `src` from a uniform in `[0, 1)`.
    pub fn sample(&self, src: usize, uniform: f64) -> usize {
        let (c, v) = self.row(src);
        let mut acc = 0.0;
        for (&c, &p) in c.iter().zip(v) {
            acc += p;
            if uniform < acc {
                return c as usize;
            }
        }
        // rounding left the uniform above the accumulated total
        *c.last().expect("kernel rows are never empty") as usize
    }

    /// `n`-fold product kernel: each input axis and the output are raised to
    /// the `n`-th power and rows multiply coordinate-wise.
    pub fn power(&self, n: u32, cap: usize) -> Result<Kernel> {
        if n == 1 {
            return Ok(self.clone());
        }
        let from: Vec<Alphabet> = self.from.iter().map(|a| a.power(n)).collect::<Result<_>>()?;
        let to = self.to.power(n)?;
        let base_sizes = self.from_sizes();
        let pow_sizes: Vec<usize> = from.iter().map(|a| a.size).collect();
        let rows = checked_size(pow_sizes.iter().copied(), cap)?;
        let per_row: u128 = (self.max_row_nnz() as u128).saturating_pow(n);
        if (rows as u128).saturating_mul(per_row) > cap as u128 {
            return Err(Error::CapacityExceeded { atoms: (rows as u128).saturating_mul(per_row), cap });
        }
        let n = n as usize;
        let out_base = self.to.size;
        Self::from_fn(from, to, |src| {
            let comps = unflatten(src, &pow_sizes);
            let digits: Vec<Vec<usize>> = comps
                .iter()
                .zip(&base_sizes)
                .map(|(&c, &s)| unflatten(c, &vec![s; n]))
                .collect();
            let mut row: Vec<(usize, f64)> = vec![(0, 1.0)];
            for t in 0..n {
                let coord: Vec<usize> = digits.iter().map(|d| d[t]).collect();
                let (cols, vals) = self.row(flat_index(&coord, &base_sizes));
                let mut next = Vec::with_capacity(row.len() * cols.len());
                for &(idx, p) in &row {
                    for (&c, &q) in cols.iter().zip(vals) {
                        next.push((idx * out_base + c as usize, p * q));
                    }
                }
                row = next;
            }
            row
        })
    }
}
