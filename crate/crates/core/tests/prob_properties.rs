use adn_core::prob::{Alphabet, FiniteDist, JointDist, Kernel};
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n)
}

fn dist(w: &[f64]) -> FiniteDist {
    adn_core::prob::normalize(w).unwrap()
}

fn kernel(from: usize, rows: &[Vec<f64>]) -> Kernel {
    let to = rows[0].len();
    let rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect();
    Kernel::from_rows(vec![Alphabet::new("A", from)], Alphabet::new("B", to), &rows).unwrap()
}

fn rows(from: usize, to: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(weights(to), from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semidirect_then_marginal_recovers_base(w in weights(4), r in rows(4, 3)) {
        let p = dist(&w);
        let j = JointDist::from_dist(&p).semidirect(&kernel(4, &r)).unwrap();
        let back = j.marginal(&[0]).unwrap();
        for (a, b) in back.mass().iter().zip(p.mass()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conditioning_a_semidirect_product_returns_the_kernel_row(w in weights(3), r in rows(3, 5), a in 0usize..3) {
        let k = kernel(3, &r);
        let j = JointDist::from_dist(&dist(&w)).semidirect(&k).unwrap();
        let c = j.condition(&[0], &[a]).unwrap();
        for (x, y) in c.mass().iter().zip(k.row_dense(a)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mutual_information_is_symmetric_and_bounded(w in weights(4), r in rows(4, 4)) {
        let j = JointDist::from_dist(&dist(&w)).semidirect(&kernel(4, &r)).unwrap();
        let a = j.mutual_info(&[0], &[1], &[]).unwrap();
        let b = j.mutual_info(&[1], &[0], &[]).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= 0.0 && a <= 2.0 + 1e-12);
    }

    #[test]
    fn chain_rule_for_mutual_information(w in weights(2), r1 in rows(2, 2), r2 in rows(2, 3)) {
        // X -> Y -> Z, then I(X; Y, Z) = I(X; Y) + I(X; Z | Y)
        let j = JointDist::from_dist(&dist(&w)).semidirect(&kernel(2, &r1)).unwrap();
        let k2 = kernel(2, &r2);
        let lifted = Kernel::from_tuple_fn(j.axes().to_vec(), k2.to_axis().clone(), |t| {
            let (c, v) = k2.row(t[1]);
            c.iter().zip(v).map(|(&c, &p)| (c as usize, p)).collect()
        }).unwrap();
        let j = j.semidirect(&lifted).unwrap();
        let lhs = j.mutual_info(&[0], &[1, 2], &[]).unwrap();
        let rhs = j.mutual_info(&[0], &[1], &[]).unwrap() + j.mutual_info(&[0], &[2], &[1]).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
        // Markov chain: Z carries nothing about X beyond Y
        prop_assert!(j.mutual_info(&[0], &[2], &[1]).unwrap() < 1e-10);
    }

    #[test]
    fn power_of_a_kernel_factorizes(r in rows(2, 2), a in 0usize..4, b in 0usize..4) {
        let k = kernel(2, &r);
        let k2 = k.power(2, 1 << 20).unwrap();
        let (a0, a1) = (a / 2, a % 2);
        let (b0, b1) = (b / 2, b % 2);
        let want = k.prob(a0, b0) * k.prob(a1, b1);
        prop_assert!((k2.prob(a, b) - want).abs() < 1e-12);
    }

    #[test]
    fn sampling_inverts_the_cdf(r in rows(1, 6), u in 0.0f64..1.0) {
        let k = kernel(1, &r);
        let s = k.sample(0, u);
        let row = k.row_dense(0);
        let below: f64 = row[..s].iter().sum();
        prop_assert!(below <= u + 1e-12);
        prop_assert!(u < below + row[s] + 1e-12);
    }
}

#[test]
fn product_of_marginals_has_zero_information() {
    let p = FiniteDist::from_probs("P", vec![0.2, 0.3, 0.5]).unwrap();
    let q = FiniteDist::from_probs("Q", vec![0.6, 0.4]).unwrap();
    let j = JointDist::product(&[&p, &q]).unwrap();
    assert!(j.mutual_info(&[0], &[1], &[]).unwrap().abs() < 1e-12);
    // a copy of X shares H(X) bits with it
    let copy = Kernel::deterministic(vec![p.alphabet().clone()], p.alphabet().clone(), |t| t[0]).unwrap();
    let c = JointDist::from_dist(&p).semidirect(&copy).unwrap();
    assert!((c.mutual_info(&[0], &[1], &[]).unwrap() - 1.4854752972273344).abs() < 1e-12);
}
