use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use rfeval::disturbances::{color_jitter, gaussian_noise, class_contamination};
use rfeval::harness::{decode_features, encode_features};
use rfeval::metrics::{fid_features, kid, precision_recall};
use rfeval::tensor::Tensor;
use rfeval::{FeatureMatrix, FeatureMeta, ImageSet};

fn matrix(rows: usize, dim: usize, values: &[f32]) -> FeatureMatrix {
    FeatureMatrix::new(rows, dim, values[..rows * dim].to_vec(), FeatureMeta::default()).unwrap()
}

/// Random orthogonal map in 3-D from Euler angles, plus a shift, computed in f64.
fn rigid(m: &FeatureMatrix, angles: (f64, f64, f64), shift: [f64; 3]) -> FeatureMatrix {
    let (a, b, c) = angles;
    let rz = |t: f64| [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
    let rx = |t: f64| [[1.0, 0.0, 0.0], [0.0, t.cos(), -t.sin()], [0.0, t.sin(), t.cos()]];
    let mul = |p: [[f64; 3]; 3], q: [[f64; 3]; 3]| {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| p[i][k] * q[k][j]).sum();
            }
        }
        r
    };
    let rot = mul(mul(rz(a), rx(b)), rz(c));
    let rows: Vec<Vec<f32>> = m
        .iter_rows()
        .map(|r| {
            (0..3)
                .map(|i| ((0..3).map(|k| rot[i][k] * r[k] as f64).sum::<f64>() + shift[i]) as f32)
                .collect()
        })
        .collect();
    FeatureMatrix::from_rows(&rows, FeatureMeta::default()).unwrap()
}

fn values(n: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-5.0f32..5.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fid_is_symmetric_and_nonnegative(a in values(60), b in values(60)) {
        let (x, y) = (matrix(20, 3, &a), matrix(20, 3, &b));
        let xy = fid_features(&x, &y).unwrap();
        let yx = fid_features(&y, &x).unwrap();
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - yx).abs() <= 1e-6 * (1.0 + xy.abs()), "{xy} vs {yx}");
        prop_assert_eq!(fid_features(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn fid_invariant_under_rigid_motion(
        a in values(60), b in values(60),
        angles in (0.0..TAU, 0.0..PI, 0.0..TAU),
        shift in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let (x, y) = (matrix(20, 3, &a), matrix(20, 3, &b));
        let before = fid_features(&x, &y).unwrap();
        let after = fid_features(&rigid(&x, angles, shift), &rigid(&y, angles, shift)).unwrap();
        prop_assert!((before - after).abs() <= 1e-4 * (1.0 + before), "{before} vs {after}");
    }

    #[test]
    fn kid_is_symmetric(a in values(45), b in values(36)) {
        let (x, y) = (matrix(15, 3, &a), matrix(12, 3, &b));
        let xy = kid(&x, &y).unwrap();
        let yx = kid(&y, &x).unwrap();
        prop_assert!((xy - yx).abs() <= 1e-12 * (1.0 + xy.abs()));
    }

    #[test]
    fn precision_recall_invariant_under_rotation(
        a in values(60), b in values(60),
        angles in (0.0..TAU, 0.0..PI, 0.0..TAU),
    ) {
        // Quantize to a coarse grid so rounding from the rotation cannot move a
        // point across a ball boundary by accident, except at genuine ties.
        let q = |v: &[f32]| v.iter().map(|x| (x * 4.0).round() / 4.0 + 0.013).collect::<Vec<f32>>();
        let (x, y) = (matrix(20, 3, &q(&a)), matrix(20, 3, &q(&b)));
        let pr = precision_recall(&x, &y, 3).unwrap();
        let rx = rigid(&x, angles, [0.0; 3]);
        let ry = rigid(&y, angles, [0.0; 3]);
        let pr2 = precision_recall(&rx, &ry, 3).unwrap();
        // Each point can only flip when it sits within rounding of a ball boundary.
        prop_assert!((pr.precision - pr2.precision).abs() <= 0.1);
        prop_assert!((pr.recall - pr2.recall).abs() <= 0.1);
    }

    #[test]
    fn cache_round_trip_is_bitwise(
        rows in 1usize..20, dim in 1usize..20,
        seed in any::<u64>(),
        bits in prop::collection::vec(any::<u32>(), 400),
        extractor in "[a-z0-9@-]{0,12}",
    ) {
        let data: Vec<f32> = bits[..rows * dim]
            .iter()
            .map(|&b| {
                let v = f32::from_bits(b);
                if v.is_finite() { v } else { f32::from_bits(b & 0x3fff_ffff) }
            })
            .collect();
        let meta = FeatureMeta { extractor, seed: Some(seed), ..FeatureMeta::default() };
        let m = FeatureMatrix::new(rows, dim, data, meta).unwrap();
        let back = decode_features(&encode_features(&m).unwrap()).unwrap();
        prop_assert!(m.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(m.meta, back.meta);
    }

    #[test]
    fn identity_parameters_are_identity(pixels in prop::collection::vec(0.0f32..=1.0, 48), seed in any::<u64>()) {
        let img = Tensor::new(vec![3, 4, 4], pixels).unwrap();
        let set = ImageSet::new(vec![img.clone(), img]).unwrap();
        prop_assert_eq!(&gaussian_noise(&set, 0.0, seed).unwrap(), &set);
        prop_assert_eq!(&color_jitter(&set, 0.0, seed).unwrap(), &set);
        prop_assert_eq!(&class_contamination(&set, &set, 0.0, seed).unwrap(), &set);
    }
}

#[test]
fn fid_converges_to_closed_form() {
    // N(0, I) against N(m, diag(s)) in D = 2: closed form
    // |m|^2 + sum(s) + D - 2 sum(sqrt(s)).
    let mut rng = rfeval::tensor::Rng::new(17);
    let (m, s) = ([1.0, -0.5], [4.0, 0.25]);
    let expected: f64 = m.iter().map(|v: &f64| v * v).sum::<f64>() + s.iter().sum::<f64>() + 2.0
        - 2.0 * s.iter().map(|v: &f64| v.sqrt()).sum::<f64>();
    let mut errors = Vec::new();
    for n in [200usize, 2_000, 20_000] {
        let mut draw = |mean: [f64; 2], var: [f64; 2]| -> FeatureMatrix {
            let data = (0..n)
                .flat_map(|_| (0..2).map(|j| (mean[j] + var[j].sqrt() * rng.standard_normal()) as f32).collect::<Vec<_>>())
                .collect();
            FeatureMatrix::new(n, 2, data, FeatureMeta::default()).unwrap()
        };
        let a = draw([0.0, 0.0], [1.0, 1.0]);
        let b = draw(m, s);
        errors.push((fid_features(&b, &a).unwrap() - expected).abs() / expected);
    }
    assert!(errors[2] < 0.02, "{errors:?}");
    assert!(errors[2] < errors[0], "{errors:?}");
}
