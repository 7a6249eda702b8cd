//! Exponential processes, Poisson functional representation and refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{FiniteDist, JointDist};
use crate::rng::{self, bits_to_open_uniform, random_u64};
use crate::stats::Moments;

/// `Σ_{i=1}^n 1/i`, summed smallest term first.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).rev().map(|i| 1.0 / i as f64).sum()
}

/// A lazily evaluated i.i.d. Exp(1) family `(Z_u)` over `0..universe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpProcess {
    pub universe: usize,
    pub process_id: u64,
    pub seed: u64,
}

impl ExpProcess {
    pub fn new(universe: usize, process_id: u64, seed: u64) -> Self {
        debug_assert!(process_id < 1 << 63, "top bit of the process id is reserved");
        Self { universe, process_id, seed }
    }

    pub fn z_value(&self, u: usize) -> Result<f64> {
        if u >= self.universe {
            return Err(Error::OutOfUniverse { element: u, size: self.universe });
        }
        Ok(self.z(u))
    }

    #[inline]
    fn z(&self, u: usize) -> f64 {
        -bits_to_open_uniform(random_u64(self.seed, u as u64, self.process_id)).ln()
    }

    /// `ln Z_u - ln w`, the log of the race time of `u` under weight `w > 0`.
    #[inline]
    fn key(&self, u: usize, w: f64) -> f64 {
        self.z(u).ln() - w.ln()
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.universe {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for a universe of {}",
                weights.len(),
                self.universe
            )));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeWeight { index, value });
            }
        }
        Ok(())
    }

    /// `argmin_u Z_u / w(u)` over the positive weights, smallest index on ties.
    pub fn pfr_select(&self, weights: &[f64]) -> Result<usize> {
        self.check_weights(weights)?;
        self.pfr_select_sparse(weights.iter().copied().enumerate())
    }

    /// [`ExpProcess::pfr_select`] over `(element, weight)` pairs; elements
    /// not listed have weight zero. Weights are not validated.
    pub fn pfr_select_sparse(&self, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (u, w) in entries {
            if w <= 0.0 {
                continue;
            }
            let k = self.key(u, w);
            match best {
                Some((bk, bu)) if bk < k || (bk == k && bu < u) => {}
                _ => best = Some((k, u)),
            }
        }
        best.map(|(_, u)| u).ok_or(Error::AllZero)
    }

    /// 1-based position of `u` when the universe is sorted by `Z_u / w(u)`;
    /// zero-weight elements come last, by index.
    pub fn rank_of(&self, weights: &[f64], u: usize) -> Result<usize> {
        self.check_weights(weights)?;
        if u >= self.universe {
            return Err(Error::OutOfUniverse { element: u, size: self.universe });
        }
        if weights[u] <= 0.0 {
            let positive = weights.iter().filter(|&&w| w > 0.0).count();
            let earlier_zero = weights[..u].iter().filter(|&&w| w <= 0.0).count();
            return Ok(positive + earlier_zero + 1);
        }
        let ku = self.key(u, weights[u]);
        let ahead = weights
            .iter()
            .enumerate()
            .filter(|&(v, &w)| w > 0.0 && v != u)
            .filter(|&(v, &w)| {
                let kv = self.key(v, w);
                kv < ku || (kv == ku && v < u)
            })
            .count();
        Ok(ahead + 1)
    }

    /// Ranks of every positive-weight element of a row, as `(element, rank)`
    /// in element order. Unlisted elements are zero weight.
    pub fn ranks_sparse(&self, entries: &[(usize, f64)]) -> Vec<(usize, usize)> {
        let mut keyed: Vec<(f64, usize)> =
            entries.iter().filter(|e| e.1 > 0.0).map(|&(u, w)| (self.key(u, w), u)).collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<(usize, usize)> = keyed.iter().enumerate().map(|(r, &(_, u))| (u, r + 1)).collect();
        out.sort_unstable();
        out
    }

    /// Refines a (possibly unnormalized) measure laid out as `rows × universe`,
    /// each row being one value of the conditioning variable. Row `v` with
    /// total `m_v > 0` maps positive entries of rank `r` to `m_v / (r · H)`.
    pub fn refine_rows(&self, measure: &[f64]) -> Vec<f64> {
        let m = self.universe;
        debug_assert_eq!(measure.len() % m, 0);
        let h = harmonic(m);
        let mut out = vec![0.0; measure.len()];
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(m);
        for (v, chunk) in measure.chunks_exact(m).enumerate() {
            let mass: f64 = chunk.iter().sum();
            if mass <= 0.0 {
                continue;
            }
            row.clear();
            row.extend(chunk.iter().copied().enumerate().filter(|e| e.1 > 0.0));
            for (u, r) in self.ranks_sparse(&row) {
                out[v * m + u] = mass / (r as f64 * h);
            }
        }
        out
    }

    /// Refinement of `q`, whose last axis is `U` (this process's universe)
    /// and whose remaining axes, if any, form `V`.
    pub fn refine(&self, q: &JointDist) -> Result<RefinedMeasure> {
        let sizes = q.sizes();
        let u_size = *sizes.last().expect("joint has at least one axis");
        if u_size != self.universe {
            return Err(Error::ShapeMismatch(format!(
                "U axis has {} elements but the process universe has {}",
                u_size, self.universe
            )));
        }
        let mass = self.refine_rows(q.mass());
        let total = crate::stats::neumaier_sum(mass.iter().copied());
        Ok(RefinedMeasure { v_sizes: sizes[..sizes.len() - 1].to_vec(), u_size, mass, total })
    }
}

/// Output of [`ExpProcess::refine`]: a sub-probability measure over `V × U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedMeasure {
    pub v_sizes: Vec<usize>,
    pub u_size: usize,
    mass: Vec<f64>,
    total: f64,
}

impl RefinedMeasure {
    /// Dense masses, row-major over `V` then `U`.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn at(&self, v: usize, u: usize) -> f64 {
        self.mass[v * self.u_size + u]
    }

    /// Positive entries as `(flat index, mass)`.
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.mass.iter().copied().enumerate().filter(|e| e.1 > 0.0).collect()
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub element: usize,
    pub selections: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub trials: u64,
    pub seed: u64,
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }
}

const CHUNK: u64 = 4096;

/// Runs `trials` independent processes (process id = trial index) and
/// accumulates a per-element statistic. Chunks are merged in index order, so
/// the result does not depend on the thread count.
fn per_element_moments(
    universe: usize,
    trials: u64,
    seed: u64,
    stat: impl Fn(&ExpProcess) -> (usize, f64) + Sync,
) -> Vec<Moments> {
    let seed = rng::derive_seed(seed, rng::tag::VERIFY, 0);
    let chunks: Vec<u64> = (0..trials.div_ceil(CHUNK)).collect();
    let partial: Vec<Vec<Moments>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = vec![Moments::default(); universe];
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let (u, x) = stat(&ExpProcess::new(universe, t, seed));
                acc[u].push(x);
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); universe];
    for part in &partial {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    total
}

fn report(moments: Vec<Moments>, bounds: Vec<f64>, range: impl Fn(usize) -> (f64, f64), trials: u64, seed: u64) -> VerifyReport {
    let rows = moments
        .into_iter()
        .zip(bounds)
        .enumerate()
        .map(|(element, (m, bound))| {
            let (ci_low, ci_high) = if m.count == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let (lo, hi) = range(element);
                m.bernstein_interval(lo, hi)
            };
            VerifyRow {
                element,
                selections: m.count,
                mean: if m.count == 0 { f64::NAN } else { m.mean() },
                ci_low,
                ci_high,
                bound,
                violated: m.count > 0 && ci_low > bound,
            }
        })
        .collect();
    VerifyReport { trials, seed, rows }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    Ok(())
}

/// Monte Carlo check of `E[rank under Q of U_P | U_P = u] ≤ P(u)/Q(u) + 1`.
pub fn verify_pml(p: &FiniteDist, q: &FiniteDist, trials: u64, seed: u64) -> Result<VerifyReport> {
    check_trials(trials)?;
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("P has {} elements, Q has {}", p.len(), q.len())));
    }
    let m = p.len();
    let (pw, qw) = (p.mass(), q.mass());
    let moments = per_element_moments(m, trials, seed, |proc| {
        let u = proc.pfr_select(pw).expect("P is a distribution");
        let r = proc.rank_of(qw, u).expect("u is in the universe");
        (u, r as f64)
    });
    let bounds = (0..m).map(|u| if qw[u] > 0.0 { pw[u] / qw[u] + 1.0 } else { f64::INFINITY }).collect();
    Ok(report(moments, bounds, |_| (1.0, m as f64), trials, seed))
}

/// Monte Carlo check of the refinement lemma at a fixed `v`:
/// `E[1/Q^U(v, U_P) | U_P = u] ≤ (ln|U| + 1)/Q_V(v) · (P(u)/Q_{U|V}(u|v) + 1)`.
/// `q`'s last axis is `U`; `v` is the flat index over the other axes.
pub fn verify_eprl(p: &FiniteDist, q: &JointDist, v: usize, trials: u64, seed: u64) -> Result<VerifyReport> {
    check_trials(trials)?;
    let sizes = q.sizes();
    let m = *sizes.last().expect("joint has at least one axis");
    if p.len() != m {
        return Err(Error::ShapeMismatch(format!("P has {} elements, U axis has {}", p.len(), m)));
    }
    let n_v = q.mass().len() / m;
    if v >= n_v {
        return Err(Error::OutOfUniverse { element: v, size: n_v });
    }
    let row = &q.mass()[v * m..(v + 1) * m];
    let qv: f64 = row.iter().sum();
    if qv <= 0.0 {
        return Err(Error::ZeroConditioning);
    }
    let cond: Vec<f64> = row.iter().map(|x| x / qv).collect();
    let h = harmonic(m);
    let pw = p.mass();
    let moments = per_element_moments(m, trials, seed, |proc| {
        let u = proc.pfr_select(pw).expect("P is a distribution");
        if cond[u] <= 0.0 {
            return (u, f64::INFINITY);
        }
        let r = proc.rank_of(&cond, u).expect("u is in the universe");
        (u, r as f64 * h / qv)
    });
    let scale = ((m as f64).ln() + 1.0) / qv;
    let bounds = (0..m)
        .map(|u| if cond[u] > 0.0 { scale * (pw[u] / cond[u] + 1.0) } else { f64::INFINITY })
        .collect();
    let support = cond.iter().filter(|&&c| c > 0.0).count();
    Ok(report(moments, bounds, |_| (h / qv, support as f64 * h / qv), trials, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{Alphabet, JointDist};
    use proptest::prelude::*;

    #[test]
    fn z_values_are_deterministic_and_exponential() {
        let p = ExpProcess::new(1_000_000, 3, 99);
        assert_eq!(p.z_value(17).unwrap(), p.z_value(17).unwrap());
        assert_ne!(p.z_value(17).unwrap(), ExpProcess::new(1_000_000, 4, 99).z_value(17).unwrap());
        assert!(matches!(p.z_value(1_000_000), Err(Error::OutOfUniverse { .. })));
        let zs: Vec<f64> = (0..1_000_000).map(|u| p.z_value(u).unwrap()).collect();
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let tail = zs.iter().filter(|&&z| z > 1.0).count() as f64 / zs.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((tail - (-1.0f64).exp()).abs() < 0.005, "tail {tail}");
        assert!(zs.iter().all(|z| z.is_finite() && *z > 0.0));
    }

    #[test]
    fn pfr_select_basics() {
        let p = ExpProcess::new(4, 0, 5);
        assert_eq!(p.pfr_select(&[0.0, 0.0, 1.0, 0.0]).unwrap(), 2);
        assert_eq!(p.pfr_select(&[0.0; 4]), Err(Error::AllZero));
        assert!(matches!(p.pfr_select(&[1.0, -1.0, 0.0, 0.0]), Err(Error::NegativeWeight { .. })));
        assert!(matches!(p.pfr_select(&[1.0]), Err(Error::ShapeMismatch(_))));
        // tiny weights stay comparable in the log domain
        let w = [1e-300, 1e-300, 0.0, 0.0];
        let u = p.pfr_select(&w).unwrap();
        assert_eq!(p.rank_of(&w, u).unwrap(), 1);
    }

    #[test]
    fn pfr_race_two_thirds() {
        let w = [2.0 / 3.0, 1.0 / 3.0];
        let n = 200_000u64;
        let zeros = (0..n).filter(|&s| ExpProcess::new(2, 0, s).pfr_select(&w).unwrap() == 0).count();
        let frac = zeros as f64 / n as f64;
        assert!((frac - 2.0 / 3.0).abs() < 0.005, "{frac}");
    }

    #[test]
    fn rank_places_zero_weights_last() {
        let p = ExpProcess::new(5, 1, 1);
        let w = [0.0, 0.3, 0.0, 0.7, 0.0];
        let ranks: Vec<usize> = (0..5).map(|u| p.rank_of(&w, u).unwrap()).collect();
        assert_eq!(ranks[0], 3);
        assert_eq!(ranks[2], 4);
        assert_eq!(ranks[4], 5);
        let mut top: Vec<usize> = vec![ranks[1], ranks[3]];
        top.sort();
        assert_eq!(top, vec![1, 2]);
        assert_eq!(p.rank_of(&[0.0, 1.0, 0.0, 0.0, 0.0], 1).unwrap(), 1);
    }

    #[test]
    fn same_weights_same_argmin() {
        for s in 0..200 {
            let p = ExpProcess::new(4, 0, s);
            let w = [0.25; 4];
            let u = p.pfr_select(&w).unwrap();
            assert_eq!(p.rank_of(&w, u).unwrap(), 1);
        }
    }

    #[test]
    fn refine_examples() {
        let p = ExpProcess::new(1, 0, 0);
        let q = JointDist::new(vec![Alphabet::new("v", 2), Alphabet::new("u", 1)], vec![0.3, 0.7]).unwrap();
        let r = p.refine(&q).unwrap();
        assert_eq!(r.mass(), &[0.3, 0.7]);

        let p = ExpProcess::new(4, 2, 11);
        let w = vec![0.1, 0.2, 0.3, 0.4];
        let q = JointDist::new(vec![Alphabet::new("u", 4)], w.clone()).unwrap();
        let r = p.refine(&q).unwrap();
        let sel = p.pfr_select(&w).unwrap();
        assert!((r.at(0, sel) - 0.48).abs() < 1e-12);
        assert!((r.total() - 1.0).abs() < 1e-12);

        let q = JointDist::new(vec![Alphabet::new("u", 4)], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let r = p.refine(&q).unwrap();
        assert!((r.total() - 1.5 / harmonic(4)).abs() < 1e-12);
        assert_eq!(r.support().len(), 2);
    }

    #[test]
    fn harmonic_bound_small() {
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
        for n in 1..10_000 {
            assert!(harmonic(n) <= (n as f64).ln() + 1.0);
        }
    }

    #[test]
    fn verify_pml_oracle_cases() {
        let p = FiniteDist::from_probs("u", vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let rep = verify_pml(&p, &p, 20_000, 1).unwrap();
        assert_eq!(rep.violations(), 0);
        for row in &rep.rows {
            assert_eq!(row.mean, 1.0);
            assert_eq!(row.bound, 2.0);
        }
        let point = FiniteDist::from_probs("u", vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let rep = verify_pml(&p, &point, 20_000, 2).unwrap();
        assert_eq!(rep.rows[1].mean, 1.0);
        assert!(rep.rows[1].selections > 0);
    }

    #[test]
    fn verify_eprl_degenerate_cases() {
        let p = FiniteDist::from_probs("u", vec![1.0]).unwrap();
        let q = JointDist::new(vec![Alphabet::new("v", 2), Alphabet::new("u", 1)], vec![0.25, 0.75]).unwrap();
        let rep = verify_eprl(&p, &q, 0, 10_000, 3).unwrap();
        assert!((rep.rows[0].mean - 4.0).abs() < 1e-12);
        assert!(!rep.rows[0].violated);

        let m = 6;
        let p = FiniteDist::uniform(Alphabet::new("u", m));
        let q = JointDist::from_dist(&p);
        let rep = verify_eprl(&p, &q, 0, 10_000, 4).unwrap();
        for row in &rep.rows {
            assert!((row.mean - harmonic(m)).abs() < 1e-12);
            assert!(row.mean <= row.bound);
        }
        let zero = JointDist::new(vec![Alphabet::new("v", 2), Alphabet::new("u", 1)], vec![1.0, 0.0]).unwrap();
        assert_eq!(verify_eprl(&FiniteDist::from_probs("u", vec![1.0]).unwrap(), &zero, 1, 10, 0), Err(Error::ZeroConditioning));
    }

    fn weights() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 1e-6..1.0f64], 1..16)
            .prop_filter("needs a positive weight", |w| w.iter().any(|&x| x > 0.0))
    }

    proptest! {
        #[test]
        fn selection_is_scale_invariant(w in weights(), seed in any::<u64>(), scale in prop_oneof![Just(2.0), Just(0.5), Just(1024.0)]) {
            let p = ExpProcess::new(w.len(), 9, seed);
            let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
            prop_assert_eq!(p.pfr_select(&w).unwrap(), p.pfr_select(&scaled).unwrap());
            for u in 0..w.len() {
                prop_assert_eq!(p.rank_of(&w, u).unwrap(), p.rank_of(&scaled, u).unwrap());
            }
        }

        #[test]
        fn ranks_form_a_permutation(w in weights(), seed in any::<u64>()) {
            let p = ExpProcess::new(w.len(), 0, seed);
            let mut ranks: Vec<usize> = (0..w.len()).map(|u| p.rank_of(&w, u).unwrap()).collect();
            let sel = p.pfr_select(&w).unwrap();
            prop_assert_eq!(p.rank_of(&w, sel).unwrap(), 1);
            ranks.sort();
            prop_assert_eq!(ranks, (1..=w.len()).collect::<Vec<_>>());
        }

        #[test]
        fn refined_mass_decreases_with_rank(w in weights(), seed in any::<u64>()) {
            let p = ExpProcess::new(w.len(), 0, seed);
            let q = JointDist::from_dist(&crate::prob::normalize(&w).unwrap());
            let r = p.refine(&q).unwrap();
            let full = w.iter().all(|&x| x > 0.0);
            prop_assert!(r.total() > 0.0 && r.total() <= 1.0 + 1e-12);
            if full { prop_assert!((r.total() - 1.0).abs() < 1e-12); } else { prop_assert!(r.total() < 1.0); }
            let mut by_rank: Vec<(usize, f64)> = (0..w.len()).filter(|&u| w[u] > 0.0)
                .map(|u| (p.rank_of(&w, u).unwrap(), r.at(0, u))).collect();
            by_rank.sort_by_key(|e| e.0);
            for pair in by_rank.windows(2) {
                prop_assert!(pair[0].1 >= pair[1].1);
            }
        }
    }
}
