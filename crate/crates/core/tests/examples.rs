mod solve_equilibrium_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/solve_equilibrium.rs"));
}

#[test]
fn solve_equilibrium_example_runs() {
    solve_equilibrium_example::run_example().expect("solve equilibrium example should run");
}

mod riccati_oracle_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/riccati_oracle.rs"));
}

#[test]
fn riccati_oracle_example_runs() {
    riccati_oracle_example::run_example().expect("riccati oracle example should run");
}

mod measures_and_derivatives_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/measures_and_derivatives.rs"));
}

#[test]
fn measures_and_derivatives_example_runs() {
    measures_and_derivatives_example::run_example().expect("measures and derivatives example should run");
}

mod custom_model_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/custom_model.rs"));
}

#[test]
fn custom_model_example_runs() {
    custom_model_example::run_example().expect("custom model example should run");
}

mod optimize_major_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/optimize_major.rs"));
}

#[test]
fn optimize_major_example_runs() {
    optimize_major_example::run_example().expect("optimize major example should run");
}

mod adjoint_gradient_check_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/adjoint_gradient_check.rs"));
}

#[test]
fn adjoint_gradient_check_example_runs() {
    adjoint_gradient_check_example::run_example().expect("adjoint gradient check example should run");
}

mod particle_simulation_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/particle_simulation.rs"));
}

#[test]
fn particle_simulation_example_runs() {
    particle_simulation_example::run_example().expect("particle simulation example should run");
}

mod propagation_of_chaos_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/propagation_of_chaos.rs"));
}

#[test]
fn propagation_of_chaos_example_runs() {
    propagation_of_chaos_example::run_example().expect("propagation of chaos example should run");
}

mod config_driven_run_example {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/config_driven_run.rs"));
}

#[test]
fn config_driven_run_example_runs() {
    config_driven_run_example::run_example().expect("config driven run example should run");
}
