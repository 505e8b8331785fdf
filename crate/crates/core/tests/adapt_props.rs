use std::sync::Arc;

use dg_resmin::adapt::{adaptive_solve_loop, dorfler_mark, error_indicators, AdaptOptions, ErrorIndicators};
use dg_resmin::app::{find_case, RunSettings};
use dg_resmin::fespace::{Continuity, DiscreteFunction, FunctionSpace};
use dg_resmin::forms::{Diffusion, FormContext, FormParams, ProblemSpec};
use dg_resmin::mesh::{Mesh, Rectangle};
use proptest::prelude::*;

#[test]
fn smooth_problem_estimate_decreases() {
    let case = RunSettings::default().resolve(find_case("manufactured").unwrap()).unwrap();
    let opts = AdaptOptions {
        penalty: None,
        max_levels: 6,
        exact: case.exact.clone(),
        ..AdaptOptions::default()
    };
    let out = adaptive_solve_loop(&case.problem, Arc::new(case.case.initial_mesh().unwrap()), &opts, |_| {}).unwrap();
    assert!(out.failure.is_none());
    for w in out.records.windows(2) {
        assert!(w[1].eps_norm <= w[0].eps_norm * (1.0 + 1e-12), "{} > {}", w[1].eps_norm, w[0].eps_norm);
        assert!(w[1].test_dofs > w[0].test_dofs);
        assert!(w[1].trial_dofs > w[0].trial_dofs);
    }
    assert!(out.records.iter().all(|r| r.recomputed));
    let last = out.records.last().unwrap();
    assert!(last.l2_error.unwrap() < out.records[0].l2_error.unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn localization_identity(
        p in 1usize..3,
        coeffs in prop::collection::vec(-1.0f64..1.0, 300),
        k in 0.0f64..0.1,
        marks in prop::collection::vec(0usize..32, 0..4),
    ) {
        let m = Mesh::structured(4, 4, Rectangle::new(0.0, 1.0, -1.0, 1.0)).unwrap();
        let marks: Vec<usize> = marks.iter().map(|x| x % m.num_elements()).collect();
        let m = Arc::new(m.bisect_marked(&marks).unwrap().mesh);
        let v = Arc::new(FunctionSpace::new(m, p, Continuity::Broken).unwrap());
        let problem = ProblemSpec::default().with_velocity(|x| [-x[1], x[0]]).with_diffusion(Diffusion::Scalar(k));
        let ctx = FormContext::new(&problem, &v, FormParams::default()).unwrap();
        let c: Vec<f64> = (0..v.ndofs()).map(|i| coeffs[i % coeffs.len()]).collect();
        let eps = DiscreteFunction::new(v.clone(), c).unwrap();
        let ind = error_indicators(&ctx, &eps).unwrap();
        prop_assert!(ind.values.iter().all(|&x| x >= 0.0));
        let q = ctx.assemble_gram().quadratic_form(eps.coefficients());
        prop_assert!((ind.total_squared() - q).abs() <= 1e-10 * q);
    }

    /// The marked set reaches the bulk fraction and is minimal: dropping the
    /// smallest marked indicator falls short.
    #[test]
    fn dorfler_is_minimal(values in prop::collection::vec(0.0f64..10.0, 1..60), theta in 0.05f64..1.0) {
        let ind = ErrorIndicators { values: values.clone() };
        let marked = dorfler_mark(&ind, theta).unwrap();
        let total = ind.total_squared();
        let sum: f64 = marked.iter().map(|&t| values[t] * values[t]).sum();
        if total > 0.0 {
            prop_assert!(sum >= theta * theta * total * (1.0 - 1e-12));
            let smallest = marked.iter().map(|&t| values[t]).fold(f64::INFINITY, f64::min);
            prop_assert!(sum - smallest * smallest < theta * theta * total);
            // greedy order: every unmarked value is at most the smallest marked one
            for (t, &v) in values.iter().enumerate() {
                if !marked.contains(&t) {
                    prop_assert!(v <= smallest);
                }
            }
        } else {
            prop_assert!(marked.is_empty());
        }
    }
}
