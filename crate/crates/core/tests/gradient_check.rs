mod common;

use common::{gradient_mismatches, GradProblem};

#[test]
fn two_unit_five_step_problem_matches_finite_differences() {
    let problem = GradProblem::random(11, 1, 2, 5, 1.0);
    let (bad, worst) = gradient_mismatches(&problem, 1e-4);
    assert_eq!(bad, 0, "worst relative error {worst:e}");
}

#[test]
fn stacked_and_masked_problems_match_finite_differences() {
    for (seed, layers, hidden, steps, keep) in [(1, 2, 3, 6, 1.0), (2, 3, 2, 4, 0.7), (3, 2, 4, 6, 0.5)] {
        let problem = GradProblem::random(seed, layers, hidden, steps, keep);
        let (bad, worst) = gradient_mismatches(&problem, 1e-4);
        assert_eq!(bad, 0, "seed {seed}: worst relative error {worst:e}");
    }
}

#[test]
fn single_step_sequence_has_no_recurrent_gradient() {
    use cddm::nn::{Gate, ParamGroup, ParamKind};
    let problem = GradProblem::random(4, 1, 3, 1, 1.0);
    let g = problem.analytic();
    let arch = problem.params.arch();
    for gate in Gate::ALL {
        let r = arch.range(ParamGroup::Gru { layer: 0, gate, kind: ParamKind::Recurrent });
        assert!(g[r].iter().all(|&v| v == 0.0));
    }
}
