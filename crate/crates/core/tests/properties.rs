#[allow(dead_code)]
mod suites;

#[test]
fn det_balanced_states_are_equilibria_and_related() {
    suites::det_balanced_states_are_equilibria_and_related();
}

#[test]
fn det_cycle_balance_is_state_independent() {
    suites::det_cycle_balance_is_state_independent();
}

#[test]
fn det_solvers_self_check() {
    suites::det_solvers_self_check();
}

#[test]
fn det_complex_balanced_trajectories_converge() {
    suites::det_complex_balanced_trajectories_converge();
}

#[test]
fn stoch_relations_on_stationary_distributions() {
    suites::stoch_relations_on_stationary_distributions();
}

#[test]
fn stoch_product_form_for_complex_balanced() {
    suites::stoch_product_form_for_complex_balanced();
}

#[test]
fn stoch_detailed_balance_bridge() {
    suites::stoch_detailed_balance_bridge();
}

#[test]
fn stoch_solve_is_scale_free() {
    suites::stoch_solve_is_scale_free();
}
