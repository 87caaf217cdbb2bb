use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sce_ntt::phaseclk::{assign_phases, check_hold_safe, throughput_of, GateGraph, Method};

#[test]
fn edge_list_file_round_trip() {
    let text = "input a\ninput b\na c\nb c\nc d\na d\nd e\nb e\noutput e\n";
    let g = GateGraph::parse(text).unwrap();
    let one = assign_phases(&g, 1, Method::LpRelaxRound).unwrap();
    let exact = assign_phases(&g, 1, Method::ExactSmall).unwrap();
    assert_eq!(one.total, exact.total);
    assert!(one.total > 0);
    let csv = one.to_csv(&g);
    assert_eq!(csv.lines().filter(|l| l.split(',').count() == 3).count(), g.edges().len() + 1);
    let json = serde_json::to_value(&one).unwrap();
    assert_eq!(json["total"], one.total);
}

#[test]
fn greedy_never_beats_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let g = GateGraph::random(120, 6, &mut rng);
        for k in 1..=3 {
            let lp = assign_phases(&g, k, Method::LpRelaxRound).unwrap().total;
            let greedy = assign_phases(&g, k, Method::GreedyAsap).unwrap().total;
            assert!(lp <= greedy, "k {k}: lp {lp} greedy {greedy}");
        }
    }
}

#[test]
fn throughput_scales_inversely() {
    for k in 1..=12 {
        assert!((throughput_of(k, 34e9) * k as f64 - 34e9).abs() < 1e-3);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn assignments_are_hold_safe_and_monotone(seed in any::<u64>(), gates in 2usize..60) {
        let g = GateGraph::random(gates, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut last = u64::MAX;
        for k in 1..=5 {
            let a = assign_phases(&g, k, Method::LpRelaxRound).unwrap();
            prop_assert!(check_hold_safe(&g, &a).is_safe());
            prop_assert!(a.total <= last);
            last = a.total;
        }
        let sat = g.max_imbalance().max(1) as usize;
        prop_assert_eq!(assign_phases(&g, sat, Method::LpRelaxRound).unwrap().total, 0);
    }
}
