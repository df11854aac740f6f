use proptest::prelude::*;
use repeater_core::link::{run_link_only, LinkModelParams};
use repeater_core::model::{LinkSpec, Path};
use repeater_core::pair::{purify_map, BaseFidelityModel, Fidelity};
use repeater_core::plan::{PathPlan, SwapTree};
use repeater_core::protocol::{
    fit_throughput, link_throughput_effect, plan_for, run_path_simulation, simulate, DeliveryRecord,
    RunStatus, SimConfig, SimResult,
};

fn chain(loss: f64, hops: usize) -> Path {
    Path::new(
        (0..hops)
            .map(|i| LinkSpec::new(format!("v{i}"), format!("v{}", i + 1), loss, 20.0))
            .collect(),
    )
    .unwrap()
}

fn check_bookkeeping(r: &SimResult) {
    assert_eq!(
        r.measurements,
        r.link_measurements + 2 * (r.purification_attempts + r.swaps + r.teleports)
    );
    assert!(r.link_measurements <= r.pulses);
    assert_eq!(r.awaiting_ack_at_end, r.pending_acks_at_end);
    let per_link: u64 = r.per_link.iter().map(|c| c.pulses).sum();
    assert_eq!(per_link, r.pulses);
}

#[test]
fn perfect_single_hop_counts() {
    let mut cfg = SimConfig::default();
    cfg.link.p_ent = 1.0;
    let path = chain(2.0, 1);
    let plan = plan_for(&path, &cfg).unwrap();
    assert_eq!(plan.total_rounds(), 0);
    let r = run_path_simulation(&path, &plan, &cfg, 3).unwrap();
    assert_eq!(r.status, RunStatus::Completed);
    assert_eq!(r.link_pairs_consumed, vec![200]);
    assert_eq!(r.link_pairs_generated, vec![200]);
    assert_eq!(r.measurements, 600);
    assert_eq!(r.pulses, 200);
    assert_eq!(r.deliveries.len(), 200);
    check_bookkeeping(&r);
}

#[test]
fn same_seed_same_result() {
    let cfg = SimConfig::default();
    let path = chain(3.7, 3);
    let a = simulate(&path, &cfg, 17).unwrap();
    let b = simulate(&path, &cfg, 17).unwrap();
    assert_eq!(a, b);
    let c = simulate(&path, &cfg, 18).unwrap();
    assert_ne!(a.deliveries, c.deliveries);
}

#[test]
fn two_hop_link_pair_consumption() {
    // one round on each hop, none after the swap
    let f = Fidelity::new(0.95).unwrap();
    let model = BaseFidelityModel::linear(0.95, 0.0);
    let mut cfg = SimConfig::default();
    cfg.link.fidelity = model;
    let plan = PathPlan::evaluate(SwapTree::balanced(2), vec![0, 1, 1], &[f, f], cfg.link.p_ent).unwrap();
    cfg.target = plan.root_fidelity();
    let p = purify_map(f, f).success_prob;
    let expected = 4.0 / p;
    assert!((plan.expected_link_pairs.iter().sum::<f64>() - expected).abs() < 1e-12);

    let path = chain(3.0, 2);
    let per_delivery: Vec<f64> = (0..30)
        .map(|seed| {
            let r = run_path_simulation(&path, &plan, &cfg, seed).unwrap();
            assert!(r.is_complete());
            check_bookkeeping(&r);
            r.link_pairs_consumed.iter().sum::<u64>() as f64 / r.deliveries.len() as f64
        })
        .collect();
    let n = per_delivery.len() as f64;
    let m = per_delivery.iter().sum::<f64>() / n;
    let sd = (per_delivery.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    assert!((m - expected).abs() <= 3.0 * se, "mean {m} vs {expected} (se {se})");
}

#[test]
fn deliveries_meet_target_and_are_ordered() {
    let cfg = SimConfig::default();
    let r = simulate(&chain(3.4, 4), &cfg, 1).unwrap();
    assert!(r.is_complete());
    check_bookkeeping(&r);
    for (i, d) in r.deliveries.iter().enumerate() {
        assert_eq!(d.index as usize, i + 1);
        assert!(d.fidelity_at_delivery.value() >= 0.98);
    }
    assert!(r.deliveries.windows(2).all(|w| w[0].completed_at <= w[1].completed_at));
    assert!(r.throughput().unwrap() > 0.0);
}

#[test]
fn time_cap_gives_partial_results() {
    let cfg = SimConfig {
        time_cap: 0.01,
        ..SimConfig::default()
    };
    let r = simulate(&chain(4.0, 2), &cfg, 1).unwrap();
    assert_eq!(r.status, RunStatus::TimedOut);
    assert!(r.deliveries.len() < 200);
    assert!(r.end_time <= 0.01);
    assert_eq!(r.measurements, r.link_measurements + 2 * (r.purification_attempts + r.swaps + r.teleports));
}

#[test]
fn single_qubit_buffers_terminate() {
    let r = link_throughput_effect(1, 1, &SimConfig::default(), 1).unwrap();
    assert_ne!(r.status, RunStatus::TimedOut);
    assert_eq!(r.awaiting_ack_at_end, 0);
    assert_eq!(r.pending_acks_at_end, 0);
    check_bookkeeping(&r);

    let cfg = SimConfig {
        target: Fidelity::new(0.95).unwrap(),
        ..SimConfig::default()
    };
    let r = link_throughput_effect(1, 1, &cfg, 1).unwrap();
    assert_eq!(r.status, RunStatus::Completed);
    assert_eq!(r.deliveries.len(), 200);
}

#[test]
fn more_transmitter_qubits_never_hurt() {
    let cfg = SimConfig::default();
    for rx in [25, 50] {
        let t: Vec<f64> = [25, 50, 100]
            .iter()
            .map(|&tx| {
                let r = link_throughput_effect(tx, rx, &cfg, 4).unwrap();
                check_bookkeeping(&r);
                r.throughput().unwrap()
            })
            .collect();
        assert!(t[0] <= t[1] && t[1] <= t[2], "rx={rx}: {t:?}");
    }
}

#[test]
fn receiver_qubits_help_a_large_transmitter() {
    let cfg = SimConfig::default();
    let a = link_throughput_effect(100, 25, &cfg, 1).unwrap().throughput().unwrap();
    let b = link_throughput_effect(100, 50, &cfg, 1).unwrap().throughput().unwrap();
    assert!(b > a, "{a} vs {b}");
}

#[test]
fn longer_homogeneous_paths_are_not_faster() {
    let cfg = SimConfig::default();
    let mut last = f64::INFINITY;
    for hops in 1..=9 {
        let t = simulate(&chain(3.4, hops), &cfg, 2).unwrap().throughput().unwrap();
        assert!(t <= last * 1.05, "{hops} hops: {t} after {last}");
        last = last.min(t);
    }
}

#[test]
fn mismatched_plan_is_rejected() {
    let cfg = SimConfig::default();
    let plan = plan_for(&chain(3.4, 2), &cfg).unwrap();
    assert!(run_path_simulation(&chain(3.4, 3), &plan, &cfg, 1).is_err());
    let bad = SimConfig {
        link: LinkModelParams {
            p_ent: 0.0,
            ..LinkModelParams::default()
        },
        ..cfg
    };
    assert!(run_path_simulation(&chain(3.4, 2), &plan, &bad, 1).is_err());
}

#[test]
fn unusable_link_is_infeasible() {
    assert!(simulate(&chain(5.6, 1), &SimConfig::default(), 1).is_err());
}

#[test]
fn link_layer_binomial() {
    let link = LinkSpec::new("a", "b", 3.4, 20.0).with_qubits(100, 100);
    let s = run_link_only(&link, &LinkModelParams::default(), 10_000, true, 5).unwrap();
    let sd = (10_000.0f64 * 0.38 * 0.62).sqrt();
    assert!((s.successes as f64 - 3800.0).abs() <= 3.0 * sd, "{}", s.successes);
    assert_eq!(s.counters.pulses, 10_000);
    assert_eq!(s.counters.measurements, 10_000);
}

#[test]
fn jittered_line_recovers_slope() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let recs: Vec<DeliveryRecord> = (1..=200)
        .map(|i| DeliveryRecord {
            index: i,
            completed_at: i as f64 / 50.0 + rng.gen_range(-0.01..0.01),
            fidelity_at_delivery: Fidelity::PERFECT,
        })
        .collect();
    let f = fit_throughput(&recs).unwrap();
    assert!((f.throughput - 50.0).abs() <= 3.0 * f.stddev, "{f:?}");
    assert!(f.stddev > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn no_leaks_and_exact_bookkeeping(
        loss in 2.5f64..4.2,
        hops in 1usize..4,
        tx in 1u32..30,
        rx in 1u32..30,
        seed in 0u64..1000,
    ) {
        let cfg = SimConfig { teleports: 20, time_cap: 5.0, ..SimConfig::default() };
        let links = (0..hops)
            .map(|i| LinkSpec::new(format!("v{i}"), format!("v{}", i + 1), loss, 20.0).with_qubits(tx, rx))
            .collect();
        let path = Path::new(links).unwrap();
        let r = simulate(&path, &cfg, seed).unwrap();
        prop_assert_eq!(
            r.measurements,
            r.link_measurements + 2 * (r.purification_attempts + r.swaps + r.teleports)
        );
        prop_assert!(r.link_measurements <= r.pulses);
        prop_assert_eq!(r.awaiting_ack_at_end, r.pending_acks_at_end);
        if r.status == RunStatus::Stalled {
            prop_assert_eq!(r.awaiting_ack_at_end, 0);
        }
        for d in &r.deliveries {
            prop_assert!(d.fidelity_at_delivery.value() >= 0.98);
        }
    }
}
