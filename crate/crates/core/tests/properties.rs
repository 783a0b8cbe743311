use ndarray::{Array3, Array4};
use proptest::prelude::*;
use reln::forms::{BilinearForm, FormKind};
use reln::layers::ops::act_on_features;
use reln::layers::{bracket_forward, init_params, relu_forward, LayerSpec, ModelSpec};
use reln::liealg::{sample_group, AlgebraKind, LieAlgebraBasis};
use reln::rng;

fn algebra() -> impl Strategy<Value = AlgebraKind> {
    prop_oneof![
        Just(AlgebraKind::So3),
        Just(AlgebraKind::Sl(2)),
        Just(AlgebraKind::Sl(3)),
        Just(AlgebraKind::Sp4),
        Just(AlgebraKind::So13),
        (2usize..5).prop_map(AlgebraKind::Gl),
    ]
}

fn normals(seed: u64, len: usize) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..len).map(|_| rng::normal(&mut r)).collect()
}

fn max_rel(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn form_is_ad_invariant(kind in algebra(), seed in any::<u64>()) {
        let basis = LieAlgebraBasis::new(kind).unwrap();
        let form = BilinearForm::of_kind(FormKind::ModifiedGl, &basis).unwrap();
        let k = basis.dim();
        let g = sample_group(&basis, 0.5, &mut rng::seeded(seed)).unwrap();
        let v = normals(seed ^ 1, 2 * k);
        let (x, y) = v.split_at(k);
        let gx = g.act(x);
        let gy = g.act(y);
        let before = form.apply(x, y);
        let after = form.apply(gx.as_slice().unwrap(), gy.as_slice().unwrap());
        prop_assert!((after - before).abs() <= 1e-9 * (1.0 + before.abs()));
    }

    #[test]
    fn bracket_is_antisymmetric_and_satisfies_jacobi(kind in algebra(), seed in any::<u64>()) {
        let basis = LieAlgebraBasis::new(kind).unwrap();
        let k = basis.dim();
        let v = normals(seed, 3 * k);
        let (x, rest) = v.split_at(k);
        let (y, z) = rest.split_at(k);
        let br = |a: &[f64], b: &[f64]| {
            let mut out = vec![0.0; k];
            basis.bracket_coords(a, b, &mut out);
            out
        };
        let xy = br(x, y);
        let yx = br(y, x);
        let jacobi: Vec<f64> = (0..k)
            .map(|i| br(x, &br(y, z))[i] + br(y, &br(z, x))[i] + br(z, &br(x, y))[i])
            .collect();
        for i in 0..k {
            prop_assert!((xy[i] + yx[i]).abs() <= 1e-12);
            prop_assert!(jacobi[i].abs() <= 1e-10);
        }
    }

    #[test]
    fn gated_and_bracket_layers_commute_with_conjugation(kind in algebra(), seed in any::<u64>(), c in 1usize..5) {
        let basis = LieAlgebraBasis::new(kind).unwrap();
        let form = BilinearForm::of_kind(FormKind::ModifiedGl, &basis).unwrap();
        let k = basis.dim();
        let x = Array3::from_shape_vec((2, k, c), normals(seed, 2 * k * c)).unwrap();
        let w = ndarray::Array2::from_shape_vec((c, c), normals(seed ^ 2, c * c)).unwrap();
        let w2 = ndarray::Array2::from_shape_vec((c, c), normals(seed ^ 3, c * c)).unwrap();
        let g = sample_group(&basis, 0.5, &mut rng::seeded(seed ^ 4)).unwrap();
        let gx = act_on_features(&g.adj, x.view());
        let relu = |x: &Array3<f64>| relu_forward(x.view(), &w, &form, 0.0).unwrap().0;
        let brk = |x: &Array3<f64>| bracket_forward(x.view(), &w, &w2, &basis).unwrap().0;
        prop_assert!(max_rel(&relu(&gx), &act_on_features(&g.adj, relu(&x).view())) <= 1e-9);
        prop_assert!(max_rel(&brk(&gx), &act_on_features(&g.adj, brk(&x).view())) <= 1e-9);
    }

    #[test]
    fn random_models_are_invariant(kind in algebra(), seed in any::<u64>()) {
        let spec = ModelSpec::new(
            kind,
            2,
            vec![LayerSpec::linear(2, 3), LayerSpec::relu(3), LayerSpec::bracket(3), LayerSpec::invariant(3)],
        )
        .with_head(vec![6], 1);
        let model = init_params(&spec, seed).unwrap();
        let k = kind.dim();
        let x = Array4::from_shape_vec((3, 1, k, 2), normals(seed, 6 * k)).unwrap();
        let g = sample_group(model.basis(), 0.5, &mut rng::seeded(seed ^ 5)).unwrap();
        let mut gx = x.clone();
        for mut sample in gx.outer_iter_mut() {
            let moved = act_on_features(&g.adj, sample.view());
            sample.assign(&moved);
        }
        let a = model.predict(&x).unwrap();
        let b = model.predict(&gx).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn hat_then_vee_recovers_coordinates(kind in algebra(), seed in any::<u64>()) {
        let basis = LieAlgebraBasis::new(kind).unwrap();
        let x = normals(seed, basis.dim());
        let back = basis.vee(&basis.hat(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(back.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
