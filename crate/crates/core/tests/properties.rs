//! Property tests over the contracts that hold for arbitrary inputs.

use bayescglm_core::ensemble::{equal_tailed_interval, hpd_interval};
use bayescglm_core::io::{read_tensor, write_tensor};
use bayescglm_core::nn::{conv2d_forward, conv_as_affine, Activation};
use bayescglm_core::simulate::{build_filters, true_features, FilterBank};
use bayescglm_core::tensor::Tensor;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// BCT1 files reproduce the tensor exactly, including non-finite-free
    /// arbitrary payloads of any small shape.
    #[test]
    fn tensor_file_round_trip(
        shape in prop::collection::vec(1usize..5, 1..4),
        seed in any::<u64>(),
    ) {
        let len: usize = shape.iter().product();
        let mut s = bayescglm_core::rng::SeededRng::new(seed).stream("prop-io", 0);
        let data: Vec<f64> = (0..len).map(|_| 1e3 * s.standard_normal()).collect();
        let t = Tensor::new(shape.clone(), data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bct");
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert_eq!(back.data(), t.data());
    }

    /// The shortest-window interval is never wider than the central interval
    /// at the same level, whatever the draws.
    #[test]
    fn hpd_no_wider_than_equal_tailed(
        mut draws in prop::collection::vec(-1e3f64..1e3, 10..400),
        level in 0.05f64..0.99,
    ) {
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let hpd = hpd_interval(&draws, level);
        let eq = equal_tailed_interval(&draws, level);
        prop_assert!(hpd.1 - hpd.0 <= eq.1 - eq.0 + 1e-12);
    }

    /// Direct convolution and the patch-matrix route agree for arbitrary
    /// extents and strides.
    #[test]
    fn conv_routes_agree(
        h in 2usize..8,
        w in 2usize..8,
        cin in 1usize..3,
        cout in 1usize..3,
        ks in 1usize..4,
        stride in 1usize..3,
        seed in any::<u64>(),
    ) {
        let kh = ks.min(h);
        let kw = ks.min(w);
        let mut s = bayescglm_core::rng::SeededRng::new(seed).stream("prop-conv", 0);
        let mut input = vec![0.0; h * w * cin];
        s.fill_standard_normal(&mut input);
        let mut kernels = vec![0.0; cout * kh * kw * cin];
        s.fill_standard_normal(&mut kernels);
        let mut bias = vec![0.0; cout];
        s.fill_standard_normal(&mut bias);
        let (direct, ..) = conv2d_forward(
            &input, h, w, cin, &kernels, cout, kh, kw, &bias, (stride, stride), Activation::Linear,
        ).unwrap();
        let (_, _, affine, ..) =
            conv_as_affine(&input, h, w, cin, &kernels, cout, kh, kw, &bias, (stride, stride)).unwrap();
        for (a, b) in direct.iter().zip(&affine) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    /// Feature extraction is linear in the image.
    #[test]
    fn feature_extraction_linearity(
        scale_a in -3.0f64..3.0,
        scale_b in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let rng = bayescglm_core::rng::SeededRng::new(seed);
        let a = bayescglm_core::rng::draw_normal(&mut rng.stream("a", 0), &[1, 5, 5]);
        let b = bayescglm_core::rng::draw_normal(&mut rng.stream("b", 0), &[1, 5, 5]);
        let bank: FilterBank = build_filters(5, 5, &[(0.0, 0.0), (2.0, 4.0)], 0.2).unwrap();
        let combo: Vec<f64> = a.data().iter().zip(b.data())
            .map(|(x, y)| scale_a * x + scale_b * y).collect();
        let combo = Tensor::new(vec![1, 5, 5], combo).unwrap();
        let pa = true_features(&a, &bank).unwrap();
        let pb = true_features(&b, &bank).unwrap();
        let pc = true_features(&combo, &bank).unwrap();
        for j in 0..2 {
            let expect = scale_a * pa.data()[j] + scale_b * pb.data()[j];
            prop_assert!((pc.data()[j] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        }
    }
}
