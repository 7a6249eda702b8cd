use adn_core::bounds::{admn_rate_check, largest_scale_at_target, pdcf_rate, theorem_bound, BoundEvaluator, BoundMethod};
use adn_core::network::{axis, AuxStructure, Channel, ErrorSet, IdealJoint, NetworkSpec, NodeAux, Role};
use adn_core::prob::{Alphabet, FiniteDist, JointDist, Kernel, DEFAULT_ATOM_CAP};
use adn_core::scenarios::{
    build, bsc, channel_coding, corollary_bound, gelfand_pinsker, hamming, nfold, pdcf_from_primitive, pdcf_joint, preset,
    preset_bundle, primitive_relay_micro, ChannelParams, ComputingParams, GpParams, PdcfParams, PresetArgs, ScenarioKind,
    ScenarioParams,
};

fn bsc_channel(p: f64, l: usize, n: u32) -> adn_core::scenarios::ScenarioBundle {
    let base = channel_coding(&ChannelParams { px: FiniteDist::uniform(Alphabet::new("X", 2)), channel: bsc(p).unwrap(), l }).unwrap();
    nfold(&base, n).unwrap()
}

fn exact(b: &adn_core::scenarios::ScenarioBundle) -> f64 {
    let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    b.theorem_bound(&ij, BoundMethod::Exact).unwrap().value
}

fn silent_network() -> (NetworkSpec, AuxStructure) {
    let y = Alphabet::new("Y", 2);
    let src = Kernel::constant(vec![], &FiniteDist::uniform(y.clone())).unwrap();
    let copy = Kernel::deterministic(vec![y.clone()], y.clone(), |t| t[0]).unwrap();
    let spec = NetworkSpec { x: vec![y.clone()], y: vec![y.clone()], channels: vec![Channel { inputs: vec![], kernel: src }] };
    let aux = AuxStructure { nodes: vec![NodeAux::passive(&y, copy).unwrap()] };
    (spec, aux)
}

#[test]
fn empty_sums_and_full_error_sets() {
    let (spec, aux) = silent_network();
    let ij = IdealJoint::build(&spec, &aux).unwrap();
    assert_eq!(theorem_bound(&ij, &aux, None, BoundMethod::Exact).unwrap().value, 0.0);
    assert_eq!(theorem_bound(&ij, &aux, Some(&ErrorSet::Empty), BoundMethod::Exact).unwrap().value, 0.0);
    assert_eq!(theorem_bound(&ij, &aux, Some(&ErrorSet::Everything), BoundMethod::Exact).unwrap().value, 1.0);
}

#[test]
fn noiseless_channel_values() {
    let id = Kernel::deterministic(vec![Alphabet::new("X", 2)], Alphabet::new("Y", 2), |t| t[0]).unwrap();
    let px = FiniteDist::uniform(Alphabet::new("X", 2));
    // ι(X;Y) = 1 bit at every atom, so the integrand is L/2
    let one = channel_coding(&ChannelParams { px: px.clone(), channel: id.clone(), l: 1 }).unwrap();
    assert!((exact(&one) - 0.5).abs() < 1e-15);
    let two = channel_coding(&ChannelParams { px, channel: id, l: 2 }).unwrap();
    assert!((exact(&two) - 1.0).abs() < 1e-15);
}

#[test]
fn channel_bounds_grow_and_source_bounds_shrink_with_l() {
    let mut last = 0.0;
    for l in 1..=6 {
        let v = exact(&bsc_channel(0.11, l, 3));
        assert!(v >= last - 1e-15, "L = {l}");
        last = v;
    }
    let mut last = 1.0;
    for l in 1..=8 {
        let b = preset_bundle("wyner-ziv", &PresetArgs { l: Some(l), ..Default::default() }).unwrap();
        let v = exact(&b);
        assert!(v <= last + 1e-15, "L = {l}");
        last = v;
    }
}

#[test]
fn product_terms_factor_over_coordinates() {
    for n in [2u32, 3] {
        let l = 3;
        let b = bsc_channel(0.11, l, n);
        let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
        let ev = BoundEvaluator::new(&ij, &b.aux).unwrap();
        for (atom, _) in ij.atoms() {
            let x = atom[axis(0, Role::U)] as usize / l;
            let y = atom[axis(1, Role::Y)] as usize;
            let mut want = l as f64;
            for t in 0..n {
                let shift = n - 1 - t;
                let (xt, yt) = ((x >> shift) & 1, (y >> shift) & 1);
                let pyx = if xt == yt { 0.89 } else { 0.11 };
                // 2^{-ι} = P(y) / P(y|x) with P(y) = 1/2
                want *= 0.5 / pyx;
            }
            let got = ev.b_term(atom, 1, 0).unwrap();
            assert!((got - want).abs() <= 1e-9 * want, "n = {n}: {got} vs {want}");
        }
    }
}

#[test]
fn lifting_once_is_the_identity_and_twice_is_the_tensor_square() {
    let base = bsc_channel(0.2, 2, 1);
    assert_eq!(nfold(&base, 1).unwrap().spec, base.spec);
    let sq = bsc_channel(0.2, 2, 2);
    let ij = sq.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    let m = ij.marginal(&[axis(0, Role::X), axis(1, Role::Y)], DEFAULT_ATOM_CAP).unwrap();
    for x in 0..4 {
        for y in 0..4 {
            let mut want = 0.25;
            for s in [1, 0] {
                want *= if (x >> s) & 1 == (y >> s) & 1 { 0.8 } else { 0.2 };
            }
            assert!((m.prob(&[x, y]) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn sampled_bound_agrees_with_enumeration() {
    for name in ["wyner-ziv", "gelfand-pinsker", "computing"] {
        let b = preset_bundle(name, &PresetArgs::default()).unwrap();
        let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
        let e = b.theorem_bound(&ij, BoundMethod::Exact).unwrap();
        let m = b.theorem_bound(&ij, BoundMethod::MonteCarlo { samples: 200_000, seed: 17 }).unwrap();
        assert!(m.ci.0 <= e.value && e.value <= m.ci.1, "{name}: {} not in {:?}", e.value, m.ci);
        assert_eq!(m.terms.len(), e.terms.len());
    }
}

#[test]
fn rate_margins_follow_the_mutual_information() {
    let i = 1.0 - h2(0.11);
    // log L = 2 < 8 I(X;Y)
    let ok = bsc_channel(0.11, 4, 8);
    let r = admn_rate_check(&ok.ideal_joint(DEFAULT_ATOM_CAP).unwrap(), &ok.aux).unwrap();
    assert_eq!(r.len(), 1);
    assert!((r[0].margin - (8.0 * i - 2.0)).abs() < 1e-9 && r[0].strict);
    let bad = bsc_channel(0.11, 32, 8);
    let r = admn_rate_check(&bad.ideal_joint(DEFAULT_ATOM_CAP).unwrap(), &bad.aux).unwrap();
    assert!(r[0].margin < 0.0 && !r[0].strict);
    // noiseless bit with two messages sits exactly on the boundary
    let id = Kernel::deterministic(vec![Alphabet::new("X", 2)], Alphabet::new("Y", 2), |t| t[0]).unwrap();
    let edge = channel_coding(&ChannelParams { px: FiniteDist::uniform(Alphabet::new("X", 2)), channel: id, l: 2 }).unwrap();
    let r = admn_rate_check(&edge.ideal_joint(DEFAULT_ATOM_CAP).unwrap(), &edge.aux).unwrap();
    assert!(r[0].margin.abs() < 1e-12 && !r[0].strict);
}

fn h2(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

#[test]
fn mac_inside_the_region_has_positive_margins() {
    let b = preset_bundle("mac", &PresetArgs { l: Some(1), l2: Some(1), crossover: Some(0.05), ..Default::default() }).unwrap();
    let r = admn_rate_check(&b.ideal_joint(DEFAULT_ATOM_CAP).unwrap(), &b.aux).unwrap();
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|m| m.strict), "{r:?}");
}

#[test]
fn direct_transmission_rate_when_relay_variables_are_trivial() {
    let one = |l: &str| Alphabet::new(l, 1);
    let q = 0.11;
    let p = PdcfParams {
        pv: FiniteDist::uniform(one("V")),
        px_v: Kernel::from_rows(vec![one("V")], Alphabet::new("X", 2), &[vec![0.5, 0.5]]).unwrap(),
        ch_r: bsc(0.3).unwrap(),
        pu: Kernel::deterministic(vec![Alphabet::new("Yr", 2), one("V")], one("U"), |_| 0).unwrap(),
        xr_fn: Kernel::deterministic(vec![Alphabet::new("Yr", 2), one("U"), one("V")], one("Xr"), |_| 0).unwrap(),
        ch_y: Kernel::from_tuple_fn(vec![Alphabet::new("X", 2), Alphabet::new("Yr", 2), one("Xr")], Alphabet::new("Y", 2), |t| {
            vec![(t[0], 1.0 - q), (1 - t[0], q)]
        })
        .unwrap(),
        l: 1,
        j: 1,
    };
    let r = pdcf_rate(&pdcf_joint(&p).unwrap()).unwrap();
    assert!((r.rate - (1.0 - h2(q))).abs() < 1e-12);
    assert!(r.feasible);
}

#[test]
fn partial_decode_forward_recovers_the_orthogonal_relay_rate() {
    let pr = primitive_relay_micro(0.11).unwrap();
    let vp = FiniteDist::from_probs("V'", vec![0.5, 0.5]).unwrap();
    let px_v = Kernel::from_rows(vec![Alphabet::new("V'", 2)], Alphabet::new("X", 2), &[vec![0.85, 0.15], vec![0.15, 0.85]]).unwrap();
    let p = pdcf_from_primitive(&pr, &vp, &px_v).unwrap();
    let r = pdcf_rate(&pdcf_joint(&p).unwrap()).unwrap();
    // independent evaluation over (V', X, Yr, Xr, Y', Y'')
    let j = JointDist::from_dist(&vp).semidirect(&px_v).unwrap();
    let j = lift(&j, &[1], &pr.ch_r);
    let j = lift(&j, &[], &Kernel::constant(vec![], &pr.pxr).unwrap());
    let j = lift(&j, &[1, 2], &pr.ch_y1);
    let j = lift(&j, &[3], &pr.ch_y2);
    let a = j.mutual_info(&[0], &[2], &[]).unwrap() + j.mutual_info(&[1], &[4], &[0]).unwrap();
    let b = j.mutual_info(&[1], &[4], &[]).unwrap() + j.mutual_info(&[3], &[5], &[]).unwrap();
    assert!((r.rate - a.min(b)).abs() < 1e-10, "{} vs {}", r.rate, a.min(b));
}

fn lift(j: &JointDist, inputs: &[usize], k: &Kernel) -> JointDist {
    let lifted = Kernel::from_tuple_fn(j.axes().to_vec(), k.to_axis().clone(), |t| {
        let src: Vec<usize> = inputs.iter().map(|&a| t[a]).collect();
        let (c, v) = k.row(k.source_index(&src));
        c.iter().zip(v).map(|(&c, &p)| (c as usize, p)).collect()
    })
    .unwrap();
    j.semidirect(&lifted).unwrap()
}

#[test]
fn gelfand_pinsker_without_state_dependence_is_channel_coding() {
    let px = FiniteDist::from_probs("X", vec![0.4, 0.6]).unwrap();
    let s = Alphabet::new("S", 2);
    let ch = bsc(0.1).unwrap();
    let gp = GpParams {
        ps: FiniteDist::from_probs("S", vec![0.3, 0.7]).unwrap(),
        pu_s: Kernel::constant(vec![s.clone()], &px).unwrap(),
        x_fn: Kernel::deterministic(vec![Alphabet::new("U", 2), s.clone()], Alphabet::new("X", 2), |t| t[0]).unwrap(),
        channel: Kernel::from_tuple_fn(vec![Alphabet::new("X", 2), s], Alphabet::new("Y", 2), |t| {
            let (c, v) = ch.row(t[0]);
            c.iter().zip(v).map(|(&c, &p)| (c as usize, p)).collect()
        })
        .unwrap(),
        l: 1,
    };
    let a = exact(&gelfand_pinsker(&gp).unwrap());
    let b = exact(&channel_coding(&ChannelParams { px, channel: ch, l: 1 }).unwrap());
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn computing_the_source_itself_is_wyner_ziv() {
    let (_, wz) = preset("wyner-ziv", &PresetArgs::default()).unwrap();
    let ScenarioParams::WynerZiv(w) = wz.clone() else { unreachable!() };
    let f = Kernel::deterministic(vec![Alphabet::new("X", 2), Alphabet::new("T", 2)], Alphabet::new("F", 2), |t| t[0]).unwrap();
    let c = ComputingParams {
        px: w.px.clone(),
        pt_x: w.pt_x.clone(),
        pu_x: w.pu_x.clone(),
        z_fn: w.z_fn.clone(),
        f,
        distortion: w.distortion.clone(),
        threshold: w.threshold,
        l: w.l,
    };
    let a = corollary_bound(ScenarioKind::Computing, &ScenarioParams::Computing(c.clone())).unwrap();
    let b = corollary_bound(ScenarioKind::WynerZiv, &wz).unwrap();
    assert!((a.value - b.value).abs() < 1e-12);
    assert!((exact(&build(ScenarioKind::Computing, &ScenarioParams::Computing(c)).unwrap()) - b.value).abs() < 1e-10);
}

#[test]
fn loose_distortion_threshold_leaves_only_the_binning_term() {
    let b = preset_bundle("wyner-ziv", &PresetArgs { threshold: Some(1.0), ..Default::default() }).unwrap();
    let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    let with_e = b.theorem_bound(&ij, BoundMethod::Exact).unwrap();
    let without = theorem_bound(&ij, &b.aux, None, BoundMethod::Exact).unwrap();
    assert!((with_e.value - without.value).abs() < 1e-15);
    assert_eq!(hamming(2)[0][1], 1.0);
}

#[test]
fn lossless_bound_is_the_inverse_probability_expectation() {
    for l in [1usize, 2, 4, 8] {
        let b = preset_bundle("lossless", &PresetArgs { l: Some(l), ..Default::default() }).unwrap();
        let want = 0.7 * (1.0 / (l as f64 * 0.7)).min(1.0) + 0.3 * (1.0 / (l as f64 * 0.3)).min(1.0);
        assert!((exact(&b) - want).abs() < 1e-12, "L = {l}");
    }
}

#[test]
fn swapping_receivers_twice_is_the_identity() {
    let (_, p) = preset("broadcast", &PresetArgs::default()).unwrap();
    let ScenarioParams::Broadcast(b) = p else { unreachable!() };
    let back = b.swapped().unwrap().swapped().unwrap();
    let a = corollary_bound(ScenarioKind::Broadcast, &ScenarioParams::Broadcast(b.clone())).unwrap();
    let c = corollary_bound(ScenarioKind::Broadcast, &ScenarioParams::Broadcast(back)).unwrap();
    assert!((a.raw - c.raw).abs() < 1e-12);
    let s = preset_bundle("broadcast", &PresetArgs { swap: Some(true), ..Default::default() }).unwrap();
    let ij = s.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    let t = s.theorem_bound(&ij, BoundMethod::Exact).unwrap();
    assert!((t.raw - s.corollary_bound().unwrap().raw).abs() < 1e-9);
}

#[test]
fn continuous_message_size_search_on_the_channel() {
    let b = bsc_channel(0.11, 1, 4);
    let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    let pts = BoundEvaluator::new(&ij, &b.aux).unwrap().integrands(Some(&b.error_set)).unwrap();
    let lam = largest_scale_at_target(&pts, 0.1).unwrap();
    let v: f64 = pts.iter().map(|&(p, i, s)| p * (i + lam * s).min(1.0)).sum();
    assert!((v - 0.1).abs() < 1e-9);
    assert!(lam < 1.0);
}
