mod common;

use common::*;
use geoshoot_core::spectral::{include, project};
use geoshoot_core::{BandLimitedField, CoeffGrid, SpatialVectorField};
use proptest::prelude::*;

#[test]
fn convolution_with_dc_scales() {
    let ops = ops(2, 7, 16, 1.0, 1);
    let a = field_with_support(ops.band(), 1, 3).component(0).clone();
    let mut delta = CoeffGrid::zeros(ops.band());
    delta.set(&[0, 0], num_complex::Complex64::new(2.5, 0.0)).unwrap();
    let mut expect = a.clone();
    expect.scale(2.5);
    let got = ops.truncated_convolution(&a, &delta).unwrap();
    let mut diff = got.clone();
    diff.axpy(-1.0, &expect);
    assert!(diff.l2_norm() <= 1e-14 * expect.l2_norm());
}

#[test]
fn convolution_matches_brute_force_5x5() {
    let ops = ops(2, 5, 9, 1.0, 1);
    for seed in 0..5 {
        let a = smooth_field(ops.band(), seed, 1.0).component(0).clone();
        let b = smooth_field(ops.band(), seed + 100, 1.0).component(1).clone();
        let fast = ops.truncated_convolution(&a, &b).unwrap();
        let mut slow = brute_convolution(&a, &b);
        slow.symmetrize();
        let mut diff = fast.clone();
        diff.axpy(-1.0, &slow);
        assert!(diff.l2_norm() <= 1e-12 * slow.l2_norm(), "seed {seed}");

        let ba = ops.truncated_convolution(&b, &a).unwrap();
        let mut diff = fast.clone();
        diff.axpy(-1.0, &ba);
        assert!(diff.l2_norm() <= 1e-13 * fast.l2_norm());
    }
}

#[test]
fn convolution_matches_brute_force_3d_even_band() {
    let ops = ops(3, 4, 6, 1.0, 1);
    let a = smooth_field(ops.band(), 5, 1.0).component(2).clone();
    let b = smooth_field(ops.band(), 6, 1.0).component(0).clone();
    let fast = ops.truncated_convolution(&a, &b).unwrap();
    let mut slow = brute_convolution(&a, &b);
    slow.symmetrize();
    let mut diff = fast.clone();
    diff.axpy(-1.0, &slow);
    assert!(diff.l2_norm() <= 1e-12 * slow.l2_norm());
}

#[test]
fn full_band_convolution_equals_pointwise_product() {
    // B = N = 16. The inputs are limited to |k| <= 4 so that their product is
    // resolved by the 16-point grid without wrap-around.
    let ops = ops(2, 16, 16, 1.0, 1);
    let band = ops.band().clone();
    for seed in 0..4 {
        let a = field_with_support(&band, seed, 4);
        let b = field_with_support(&band, seed + 7, 4);
        let sa = ops.include_scalar(a.component(0)).unwrap();
        let sb = ops.include_scalar(b.component(1)).unwrap();
        let prod: Vec<f64> = sa.values().iter().zip(sb.values()).map(|(x, y)| x * y).collect();
        let img = geoshoot_core::ScalarImage::new(&[16, 16], prod).unwrap();
        let spatial = ops.project_scalar(&img).unwrap();
        let conv = ops.truncated_convolution(a.component(0), b.component(1)).unwrap();
        let mut diff = conv.clone();
        diff.axpy(-1.0, &spatial);
        assert!(diff.l2_norm() <= 1e-10 * conv.l2_norm(), "seed {seed}");
    }
}

#[test]
fn inner_product_matches_spatial_quadrature() {
    // Full band: <L iota(a), iota(b)> by quadrature on the grid, with L applied
    // through the symbol evaluated independently of the operator tables.
    let (b, n, alpha, s) = (8usize, 8usize, 2.0, 2u32);
    let ops = ops(2, b, n, alpha, s);
    let band = ops.band().clone();
    let symbol = move |k: &[i64]| {
        let w2: f64 = k
            .iter()
            .map(|&kj| (2.0 * std::f64::consts::PI * kj as f64 / n as f64).powi(2))
            .sum();
        num_complex::Complex64::new((1.0 + alpha * w2).powi(s as i32), 0.0)
    };
    for seed in 0..3 {
        let a = smooth_field(&band, seed, 1.0);
        let bf = smooth_field(&band, seed + 50, 1.0);
        let mut quad = 0.0;
        for c in 0..2 {
            let la = direct_synthesis(a.component(c), &[n, n], symbol);
            let ib = direct_synthesis(bf.component(c), &[n, n], one);
            quad += la.iter().zip(&ib).map(|(x, y)| x * y).sum::<f64>() / (n * n) as f64;
        }
        let v = ops.inner_product_v(&a, &bf).unwrap();
        assert!(rel(v, quad) < 1e-9, "{v} vs {quad}");
        assert!(rel(v, ops.inner_product_v(&bf, &a).unwrap()) < 1e-15);
    }
    let zero = BandLimitedField::zeros(&band);
    assert_eq!(ops.inner_product_v(&zero, &zero).unwrap(), 0.0);
}

#[test]
fn include_and_project_are_adjoint() {
    let ops = ops(2, 7, 12, 1.0, 1);
    let band = ops.band().clone();
    let f = smooth_field(&band, 4, 1.0);
    let mut r = rng(11);
    use rand::Rng;
    let g = SpatialVectorField::new(
        &[12, 12],
        (0..2).map(|_| (0..144).map(|_| r.gen_range(-1.0..1.0)).collect()).collect(),
    )
    .unwrap();
    let lhs = project(&g, &band).unwrap().l2_inner(&f);
    let inc = include(&f, &[12, 12]).unwrap();
    let rhs: f64 = (0..2)
        .map(|c| g.component(c).iter().zip(inc.component(c)).map(|(x, y)| x * y).sum::<f64>())
        .sum::<f64>()
        / 144.0;
    assert!(rel(lhs, rhs) < 1e-9);
}

#[test]
fn projection_matches_direct_dft() {
    let ops = ops(2, 5, 8, 1.0, 1);
    let band = ops.band().clone();
    let img = geoshoot_core::ScalarImage::from_fn(&[8, 8], |x| (x[0] * 3.0).sin() + x[1] * x[0]).unwrap();
    let fast = ops.project_scalar(&img).unwrap();
    let slow = direct_analysis(img.values(), &[8, 8], &band);
    let mut diff = fast.clone();
    diff.axpy(-1.0, &slow);
    assert!(diff.l2_norm() < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operations_preserve_hermitian_symmetry(seed in 0u64..10_000, b in 3usize..9) {
        let ops = ops(2, b, 12, 1.5, 2);
        let band = ops.band().clone();
        let f = smooth_field(&band, seed, 1.0);
        let g = smooth_field(&band, seed ^ 0xabcd, 1.0);
        let scale = f.l2_norm().max(1e-300);
        prop_assert!(ops.apply_l(&f).unwrap().hermitian_defect() <= 1e-12 * ops.apply_l(&f).unwrap().l2_norm());
        prop_assert!(ops.apply_k(&f).unwrap().hermitian_defect() <= 1e-12 * scale);
        let jac = ops.spectral_jacobian(&f).unwrap();
        prop_assert!(jac.entry(0, 1).hermitian_defect() <= 1e-12 * jac.entry(0, 1).l2_norm().max(1e-300));
        let conv = ops.truncated_convolution(f.component(0), g.component(1)).unwrap();
        prop_assert!(conv.hermitian_defect() <= 1e-12 * conv.l2_norm().max(1e-300));
        let back = project(&include(&f, &[12, 12]).unwrap(), &band).unwrap();
        prop_assert!(back.hermitian_defect() <= 1e-12 * scale);
    }

    #[test]
    fn convolution_is_bilinear(seed in 0u64..10_000) {
        let ops = ops(2, 6, 10, 1.0, 1);
        let band = ops.band().clone();
        let a = smooth_field(&band, seed, 1.0).component(0).clone();
        let b = smooth_field(&band, seed + 1, 1.0).component(1).clone();
        let c = smooth_field(&band, seed + 2, 1.0).component(0).clone();
        let mut ab = a.clone();
        ab.axpy(1.0, &b);
        let lhs = ops.truncated_convolution(&ab, &c).unwrap();
        let mut rhs = ops.truncated_convolution(&a, &c).unwrap();
        rhs.axpy(1.0, &ops.truncated_convolution(&b, &c).unwrap());
        let mut diff = lhs.clone();
        diff.axpy(-1.0, &rhs);
        prop_assert!(diff.l2_norm() <= 1e-12 * lhs.l2_norm().max(1e-300));
    }

    #[test]
    fn apply_l_is_self_adjoint(seed in 0u64..10_000) {
        let ops = ops(2, 7, 14, 3.0, 2);
        let band = ops.band().clone();
        let a = smooth_field(&band, seed, 1.0);
        let b = smooth_field(&band, seed + 3, 1.0);
        let lhs = ops.apply_l(&a).unwrap().l2_inner(&b);
        let rhs = a.l2_inner(&ops.apply_l(&b).unwrap());
        prop_assert!(rel(lhs, rhs) < 1e-13);
    }
}
