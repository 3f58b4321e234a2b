use ecoand::kinematics::Sample;
use ecoand::scenario::{green_window, Scenario};
use ecoand::traffic::{adjust_scenario, check_safety, LeadSample, LeadStatus, PrecedingInfo, SafetyParams};
use proptest::prelude::*;

fn status() -> impl Strategy<Value = LeadStatus> {
    prop_oneof![
        Just(LeadStatus::Clear),
        (0u32..4).prop_map(|k| LeadStatus::CrossesInWindow { k }),
        Just(LeadStatus::CrossesSameWindow),
        (0u32..4).prop_map(|k| LeadStatus::StoppedAtIntersection { k }),
    ]
}

fn params() -> impl Strategy<Value = SafetyParams> {
    (0.0..3.0f64, 0.0..10.0f64, 0.05..0.95f64, 0.0..19.0f64)
        .prop_map(|(alpha, beta, theta, sigma)| SafetyParams { alpha, beta, theta, sigma })
}

fn info(s: Vec<LeadStatus>) -> PrecedingInfo {
    PrecedingInfo {
        samples: vec![LeadSample { t: 0.0, x_h: 0.0 }],
        intersections: s,
    }
}

proptest! {
    #[test]
    fn adjusting_twice_equals_once(s in prop::collection::vec(status(), 2), sp in params()) {
        let sc = Scenario::reference_two_light_corridor();
        let i = info(s);
        let once = adjust_scenario(&sc, &i, &sp).unwrap();
        prop_assert_eq!(adjust_scenario(&once, &i, &sp).unwrap(), once);
    }

    #[test]
    fn queue_window_inside_green(k in 0u32..6, sp in params()) {
        let sc = Scenario::reference_two_light_corridor();
        let adj = adjust_scenario(&sc, &info(vec![LeadStatus::Clear, LeadStatus::StoppedAtIntersection { k }]), &sp).unwrap();
        let w = adj.crossing_window(1, k);
        let g = green_window(&sc.segments[1].light, k);
        prop_assert!(!w.is_empty());
        prop_assert!(w.start >= g.start && w.end <= g.end);
        // Every other green window of that light is closed off.
        prop_assert!(adj.crossing_window(1, k + 1).is_empty());
    }

    #[test]
    fn lead_just_beyond_the_gap_is_safe(eps in 1e-6..5.0f64, sp in params(), v in 0.0..20.0f64,
                                        x0 in 0.0..100.0f64) {
        let v_max = 20.0;
        let lead_offset = sp.alpha * v_max + sp.beta + eps;
        let ego: Vec<Sample> = (0..=100)
            .map(|i| {
                let t = i as f64 * 0.1;
                Sample { t, x: x0 + v * t, v, u: 0.0, energy: 0.0 }
            })
            .collect();
        let lead = PrecedingInfo {
            samples: ego.iter().map(|s| LeadSample { t: s.t, x_h: s.x + lead_offset }).collect(),
            intersections: vec![],
        };
        prop_assert!(check_safety(&ego, &lead, &sp, 0.05).is_empty());
    }
}
