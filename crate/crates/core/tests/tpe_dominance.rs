//! Paired comparison of TPE against pure prior sampling.

mod oracles;

use oracles::{bowl_objective, bowl_space, lr_objective, lr_space, tpe_vs_random};

const BUDGET: usize = 50;
const SEEDS: u64 = 20;

#[test]
fn tpe_beats_random_on_log_quadratic() {
    let p = tpe_vs_random(&lr_space(), lr_objective, SEEDS, BUDGET);
    eprintln!("1-D: {p:?}");
    assert_eq!(p.out_of_bounds, 0);
    assert!(p.median_tpe >= p.median_random);
    assert!(p.wins as f64 >= 0.7 * SEEDS as f64);
}

#[test]
fn tpe_beats_random_on_two_dimensional_bowl() {
    let p = tpe_vs_random(&bowl_space(), bowl_objective, SEEDS, BUDGET);
    eprintln!("2-D: {p:?}");
    assert_eq!(p.out_of_bounds, 0);
    assert!(p.median_tpe >= p.median_random);
    assert!(p.wins as f64 >= 0.7 * SEEDS as f64);
}
