use synres::gradcheck::{grad_check, grad_check_with, standard_suite, ModelLoss, OpCase, Stencil};
use synres::rng::Rng;

#[test]
fn every_op_with_plain_central_differences() {
    let mut rng = Rng::new(11);
    for case in OpCase::ALL {
        let x = case.inputs(&mut rng).unwrap();
        let r = grad_check::<f64, _>(&case, &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{}: {r:?}", case.name());
        let r = grad_check::<f32, _>(&case, &x, 1e-3).unwrap();
        assert!(r.max_rel_error < 1e-2, "{}: {r:?}", case.name());
    }
}

#[test]
fn suite_passes_across_seeds() {
    for seed in [0, 1, 2, 3, 2024] {
        for (name, r) in standard_suite::<f64>(seed, 1e-3, Stencil::Richardson).unwrap() {
            assert!(r.max_rel_error < 1e-5, "seed {seed} {name}: {r:?}");
        }
        for (name, r) in standard_suite::<f32>(seed, 1e-3, Stencil::Richardson).unwrap() {
            assert!(r.max_rel_error < 1e-2, "seed {seed} {name}: {r:?}");
        }
    }
}

#[test]
fn spec_examples() {
    let x = OpCase::FrobeniusSq.inputs(&mut Rng::new(5)).unwrap();
    let r = grad_check::<f64, _>(&OpCase::FrobeniusSq, &x, 1e-3).unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
    let x = OpCase::CrossEntropy.inputs(&mut Rng::new(6)).unwrap();
    assert_eq!((x[0].rows(), x[0].cols()), (4, 7));
    let r = grad_check::<f64, _>(&OpCase::CrossEntropy, &x, 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

#[test]
fn model_check_covers_every_parameter() {
    let m = ModelLoss::reference();
    let inputs = m.inputs(&mut Rng::new(3)).unwrap();
    let total: usize = inputs.iter().map(|t| t.len()).sum();
    let r = grad_check_with::<f64, _>(&m, &inputs, 1e-3, Stencil::Richardson).unwrap();
    assert_eq!(r.checked, total);
    assert!(r.max_rel_error < 1e-4);
}

#[test]
fn a_wrong_gradient_is_caught() {
    // Objective whose recorded backward is deliberately inconsistent with
    // its value: value uses x², graph differentiates as if it were 3x.
    struct Mismatch;
    impl synres::gradcheck::Objective for Mismatch {
        fn eval<'a, T: synres::Scalar>(
            &self,
            g: &mut synres::Graph<'a, T>,
            x: &[synres::Var],
        ) -> synres::Result<synres::Var> {
            if g.needs_grad(x[0]) {
                let s = g.sum(x[0])?;
                g.scale(s, T::from_f64_lossy(3.0))
            } else {
                g.frobenius_sq(x[0])
            }
        }
    }
    let x = OpCase::Sum.inputs(&mut Rng::new(1)).unwrap();
    assert!(
        grad_check::<f64, _>(&Mismatch, &x, 1e-5)
            .unwrap()
            .max_rel_error
            > 0.1
    );
}
