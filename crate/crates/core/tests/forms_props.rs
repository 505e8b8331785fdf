use std::sync::Arc;

use dg_resmin::fespace::{Continuity, FunctionSpace};
use dg_resmin::forms::{Diffusion, FormContext, FormParams, InflowSign, ProblemSpec};
use dg_resmin::mesh::{Mesh, Rectangle};
use proptest::prelude::*;

fn spaces(n: usize, p: usize, marks: &[usize]) -> (Arc<FunctionSpace>, Arc<FunctionSpace>) {
    let m = Mesh::structured(n, n, Rectangle::new(-1.0, 1.0, 0.0, 1.0)).unwrap();
    let marks: Vec<usize> = marks.iter().map(|k| k % m.num_elements()).collect();
    let m = Arc::new(m.bisect_marked(&marks).unwrap().mesh);
    (
        Arc::new(FunctionSpace::new(m.clone(), p, Continuity::Continuous).unwrap()),
        Arc::new(FunctionSpace::new(m, p, Continuity::Broken).unwrap()),
    )
}

fn sign(coercive: bool) -> InflowSign {
    if coercive {
        InflowSign::Coercive
    } else {
        InflowSign::Printed
    }
}

fn tensor() -> impl Strategy<Value = Diffusion> {
    prop_oneof![
        (0.0f64..1.0).prop_map(Diffusion::Scalar),
        (0.1f64..1.0, -0.05f64..0.05, 0.1f64..1.0).prop_map(|(a, b, d)| Diffusion::Tensor([[a, b], [b, d]])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// b_h(u*, v) = l_h(v) for every test basis function when u* is a
    /// global quadratic and f, g are derived from it.
    #[test]
    fn consistency(
        p in 1usize..4,
        c in prop::array::uniform6(-1.0f64..1.0),
        beta in prop::array::uniform2(-2.0f64..2.0),
        sigma in 0.0f64..2.0,
        k in tensor(),
        coercive in any::<bool>(),
        marks in prop::collection::vec(0usize..32, 0..4),
    ) {
        let c = if p == 1 { [c[0], c[1], c[2], 0.0, 0.0, 0.0] } else { c };
        let u = move |x: [f64; 2]| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[0] + c[4] * x[0] * x[1] + c[5] * x[1] * x[1];
        let km = k.matrix();
        let lap = km[0][0] * 2.0 * c[3] + (km[0][1] + km[1][0]) * c[4] + km[1][1] * 2.0 * c[5];
        let f = move |x: [f64; 2]| {
            let g = [c[1] + 2.0 * c[3] * x[0] + c[4] * x[1], c[2] + c[4] * x[0] + 2.0 * c[5] * x[1]];
            -lap + beta[0] * g[0] + beta[1] * g[1] + sigma * u(x)
        };
        let problem = ProblemSpec::default()
            .with_constant_velocity(beta)
            .with_diffusion(k)
            .with_reaction(move |_| sigma)
            .with_source(f)
            .with_dirichlet(u);
        let (trial, test) = spaces(3, p, &marks);
        let params = FormParams { inflow: sign(coercive), ..FormParams::default() };
        let ctx = FormContext::new(&problem, &test, params).unwrap();
        let b = ctx.assemble_bh(&trial).unwrap();
        let load = ctx.assemble_load();
        let bu = b.mul_vec(trial.interpolate(u).coefficients());
        let scale = load.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let worst = bu.iter().zip(&load).map(|(a, l)| (a - l).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-11 * scale, "{worst}");
    }

    #[test]
    fn gram_is_symmetric_and_dominates_mass(
        p in 1usize..4,
        beta in prop::array::uniform2(-2.0f64..2.0),
        k in tensor(),
        w in prop::collection::vec(-1.0f64..1.0, 1000),
    ) {
        let problem = ProblemSpec::default().with_constant_velocity(beta).with_diffusion(k);
        let (_, test) = spaces(2, p, &[0, 3]);
        let ctx = FormContext::new(&problem, &test, FormParams::default()).unwrap();
        let g = ctx.assemble_gram();
        prop_assert!(g.asymmetry() <= 1e-12);
        let v: Vec<f64> = (0..test.ndofs()).map(|i| w[i % w.len()]).collect();
        let vf = dg_resmin::fespace::DiscreteFunction::new(test.clone(), v.clone()).unwrap();
        let l2 = ctx.l2_norm(&vf);
        prop_assert!(g.quadratic_form(&v) >= l2 * l2 - 1e-12);
        // the element localization sums back to the norm
        let local: f64 = ctx.local_norms_squared(&v).iter().sum();
        prop_assert!((local - g.quadratic_form(&v)).abs() <= 1e-10 * local);
    }

    /// Without diffusion every interior face term of b_h carries a jump of
    /// the trial function, so continuous trial functions only see volume and
    /// boundary contributions.
    #[test]
    fn continuous_trial_functions_have_no_interior_face_terms(
        p in 1usize..3,
        beta in prop::array::uniform2(-2.0f64..2.0),
        coeffs in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        let problem = ProblemSpec::default().with_constant_velocity(beta).with_reaction(|x| 1.0 + x[0]);
        let (trial, test) = spaces(3, p, &[2]);
        let ctx = FormContext::new(&problem, &test, FormParams::default()).unwrap();
        let u: Vec<f64> = (0..trial.ndofs()).map(|i| coeffs[i % coeffs.len()]).collect();
        let full = ctx.assemble_bh(&trial).unwrap().mul_vec(&u);
        let mesh = test.mesh();
        let mut reference = vec![0.0; test.ndofs()];
        let mut scatter = |a: &dg_resmin::forms::LocalMatrix, elems: &[usize]| {
            let rows: Vec<usize> = elems.iter().flat_map(|&t| test.element_dofs(t).to_vec()).collect();
            let cols: Vec<usize> = elems.iter().flat_map(|&t| trial.element_dofs(t).to_vec()).collect();
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    reference[r] += a.get(i, j) * u[c];
                }
            }
        };
        for t in 0..mesh.num_elements() {
            scatter(&ctx.bh_volume(t), &[t]);
        }
        for &f in mesh.boundary_faces() {
            scatter(&ctx.bh_face(f), &[mesh.face(f).minus.element]);
        }
        let worst = full.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-12 * (1.0 + full.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }

    /// Symmetric part of the broken-broken operator is positive when the
    /// reaction dominates. With the printed inflow sign the diffusion
    /// penalty has to absorb the inflow term, so K is kept at 1 there.
    #[test]
    fn coercivity_smoke(
        p in 1usize..3,
        beta in prop::array::uniform2(-1.0f64..1.0),
        sigma in 0.1f64..2.0,
        k in 0.0f64..1.0,
        coercive in any::<bool>(),
        w in prop::collection::vec(-1.0f64..1.0, 600),
    ) {
        let k = if coercive { k } else { 1.0 };
        let problem = ProblemSpec::default()
            .with_constant_velocity(beta)
            .with_diffusion(Diffusion::Scalar(k))
            .with_reaction(move |_| sigma);
        let (_, test) = spaces(2, p, &[1]);
        let params = FormParams { inflow: sign(coercive), ..FormParams::default() };
        let ctx = FormContext::new(&problem, &test, params).unwrap();
        let b = ctx.assemble_bh(&test).unwrap();
        let v: Vec<f64> = (0..test.ndofs()).map(|i| w[i % w.len()]).collect();
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        prop_assert!(b.quadratic_form(&v) > 0.0);
    }
}
