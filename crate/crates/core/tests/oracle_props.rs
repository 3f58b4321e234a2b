use ecoand::oracle::{compare, dp_solve, GridSpec};
use ecoand::scenario::{RoadSegment, Scenario, TrafficLight, VehicleLimits, WeightSpec, Weights};
use ecoand::solver::{solve_best, SolverOptions};

fn short_corridor(v0: f64) -> Scenario {
    let limits = VehicleLimits {
        v_min: 2.78,
        v_max: 20.0,
        u_min: -2.9,
        u_max: 2.5,
    };
    Scenario::new(vec![RoadSegment::new(150.0, TrafficLight::new(30.0, 0.5))], limits, 0.0, v0)
}

#[test]
fn repeated_runs_agree() {
    let sc = Scenario::reference_two_light_corridor();
    let g = GridSpec::default();
    assert_eq!(dp_solve(&sc, &g).unwrap(), dp_solve(&sc, &g).unwrap());
}

#[test]
fn more_controls_never_cost_more() {
    let sc = short_corridor(5.0);
    let coarse = dp_solve(&sc, &GridSpec { levels: 3, ..GridSpec::default() }).unwrap();
    let fine = dp_solve(&sc, &GridSpec::default()).unwrap();
    assert!(fine.cost <= coarse.cost + 1e-12, "{} > {}", fine.cost, coarse.cost);
}

#[test]
fn refined_grid_never_costs_more() {
    for v0 in [0.0, 5.0, 12.0] {
        let sc = short_corridor(v0);
        let g = GridSpec::default();
        let a = dp_solve(&sc, &g).unwrap();
        let b = dp_solve(&sc, &g.refined()).unwrap();
        assert!(b.cost <= a.cost + 1e-12, "v0 = {v0}: {} > {}", b.cost, a.cost);
    }
}

#[test]
fn identical_cruise_compares_to_zero() {
    let mut sc = Scenario::new(
        vec![RoadSegment::new(100.0, TrafficLight::new(40.0, 0.9))],
        VehicleLimits {
            v_min: 2.78,
            v_max: 20.0,
            u_min: -2.9,
            u_max: 2.5,
        },
        0.0,
        20.0,
    );
    sc.weights = WeightSpec::explicit(Weights { rho_t: 0.01, rho_u: 0.0 });
    let sol = solve_best(&sc, &SolverOptions::default()).unwrap();
    let dp = dp_solve(&sc, &GridSpec::default()).unwrap();
    let c = compare(&sol, &dp);
    assert!(c.cost_difference.abs() < 1e-9, "{}", c.cost_difference);
    assert!(c.crossing_time_differences.iter().all(|d| d.abs() < 1e-6));
    assert_eq!((c.nlp_cost, c.dp_cost), (sol.costs.j, dp.cost));
    assert!(c.sandwich_holds);
}

#[test]
fn reference_corridor_sandwich() {
    let sc = Scenario::reference_two_light_corridor();
    let sol = solve_best(&sc, &SolverOptions::default()).unwrap();
    let dp = dp_solve(&sc, &GridSpec::default()).unwrap();
    let c = compare(&sol, &dp);
    assert!(c.sandwich_holds, "{c:?}");
    assert_eq!(c.allowance, 0.1 * dp.cost);
}
