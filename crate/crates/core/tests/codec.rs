use adn_core::codec::CodecPlan;
use adn_core::network::{axis, Role};
use adn_core::prob::{Alphabet, FiniteDist, Kernel, DEFAULT_ATOM_CAP};
use adn_core::scenarios::{bsc, channel_coding, nfold, preset_bundle, ChannelParams, PresetArgs, ScenarioBundle, PRESETS};

fn plan(b: &ScenarioBundle) -> CodecPlan {
    let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    b.plan(&ij, DEFAULT_ATOM_CAP).unwrap()
}

#[test]
fn single_message_over_a_clean_channel_never_fails() {
    let id = Kernel::deterministic(vec![Alphabet::new("X", 3)], Alphabet::new("Y", 3), |t| t[0]).unwrap();
    let b = channel_coding(&ChannelParams { px: FiniteDist::uniform(Alphabet::new("X", 3)), channel: id, l: 1 }).unwrap();
    let r = plan(&b).run_monte_carlo(1, 5_000).unwrap();
    assert_eq!(r.actual.successes, 0);
    assert_eq!(r.coupling_failure.successes, 0);
}

#[test]
fn runs_are_reproducible_from_the_master_seed() {
    let b = preset_bundle("mac", &PresetArgs::default()).unwrap();
    let p = plan(&b);
    let a = p.run_monte_carlo(42, 3_000).unwrap();
    assert_eq!(a, p.run_monte_carlo(42, 3_000).unwrap());
    assert_eq!(p.traces(42, 50), p.traces(42, 50));
    let c = p.run_monte_carlo(43, 3_000).unwrap();
    assert_ne!(a.actual.successes, c.actual.successes);
}

#[test]
fn traces_match_the_aggregate_counts() {
    let b = preset_bundle("relay", &PresetArgs::default()).unwrap();
    let p = plan(&b);
    let traces = p.traces(9, 2_000);
    let r = p.run_monte_carlo(9, 2_000).unwrap();
    assert_eq!(traces.iter().filter(|t| t.actual_in_error).count() as u64, r.actual.successes);
    assert_eq!(traces.iter().filter(|t| t.decoding_error()).count() as u64, r.coupling_failure.successes);
    assert_eq!(traces.iter().filter(|t| t.ideal_in_error).count() as u64, r.ideal_empirical.successes);
}

#[test]
fn coupling_holds_trial_by_trial_on_every_preset() {
    for name in PRESETS {
        let b = preset_bundle(name, &PresetArgs::default()).unwrap();
        let p = plan(&b);
        for t in p.traces(5, 3_000) {
            assert!(t.coupling_dominance_holds(), "{name}: trial {}", t.trial);
            if !t.decoding_error() {
                assert!(t.networks_coincide(), "{name}: trial {} decoded correctly but diverged", t.trial);
            }
            assert_eq!(t.decoded.iter().map(Vec::len).collect::<Vec<_>>(), b.aux.nodes.iter().map(|n| n.unique).collect::<Vec<_>>());
        }
        assert_eq!(p.run_monte_carlo(5, 3_000).unwrap().dominance_violations, 0);
    }
}

#[test]
fn ideal_twin_follows_the_ideal_joint() {
    let b = preset_bundle("pdcf", &PresetArgs::default()).unwrap();
    let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    let p = b.plan(&ij, DEFAULT_ATOM_CAP).unwrap();
    let trials = 40_000u64;
    let traces = p.traces(3, trials);
    // the relay's auxiliary and the receiver's observation, jointly
    let axes = [axis(2, Role::U), axis(3, Role::Y)];
    let m = ij.marginal(&axes, DEFAULT_ATOM_CAP).unwrap();
    let sizes = m.sizes();
    let mut counts = vec![0u64; sizes[0] * sizes[1]];
    for t in &traces {
        counts[t.ideal_u[2] * sizes[1] + t.ideal_y[3]] += 1;
    }
    let tv: f64 = counts.iter().zip(m.mass()).map(|(&c, &q)| (c as f64 / trials as f64 - q).abs()).sum::<f64>() / 2.0;
    assert!(tv < 3.0 * (counts.len() as f64 / trials as f64).sqrt(), "tv {tv}");
}

#[test]
fn empirical_error_stays_below_the_bound() {
    for (name, args) in [
        ("wyner-ziv", PresetArgs::default()),
        ("lossless", PresetArgs::default()),
        ("computing", PresetArgs::default()),
        ("gelfand-pinsker", PresetArgs::default()),
    ] {
        let b = preset_bundle(name, &args).unwrap();
        let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
        let bound = b.theorem_bound(&ij, adn_core::bounds::BoundMethod::Exact).unwrap().value;
        let r = b.plan(&ij, DEFAULT_ATOM_CAP).unwrap().run_monte_carlo(8, 20_000).unwrap();
        assert!(r.actual.ci_low <= bound, "{name}: {} > {bound}", r.actual.ci_low);
        assert!(r.ideal_empirical.ci_low <= r.ideal_error && r.ideal_error <= r.ideal_empirical.ci_high, "{name}");
    }
}

#[test]
fn product_channel_decodes_super_symbols() {
    let base = channel_coding(&ChannelParams { px: FiniteDist::uniform(Alphabet::new("X", 2)), channel: bsc(0.11).unwrap(), l: 4 }).unwrap();
    let b = nfold(&base, 6).unwrap();
    let ij = b.ideal_joint(DEFAULT_ATOM_CAP).unwrap();
    let bound = b.theorem_bound(&ij, adn_core::bounds::BoundMethod::Exact).unwrap().value;
    let r = b.plan(&ij, DEFAULT_ATOM_CAP).unwrap().run_monte_carlo(2, 10_000).unwrap();
    assert!(r.actual.ci_low <= bound);
    assert!(r.actual.point < 0.5);
    assert_eq!(r.ideal_error, 0.0);
}
