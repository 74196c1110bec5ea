use catchsim::nn::layers::Layer;
use catchsim::nn::{
    adam_step, decode_weights, encode_weights, gradient_check, gradient_check_with, load_weights,
    mse_loss, save_weights, AdamState, GradCheckOptions, Network, NetworkBuilder, Tensor,
};
use catchsim::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &data).unwrap()
}

fn check(net: &Network<f32>, seed: u64) {
    let x = random_tensor(net.input_shape().to_vec(), seed);
    let t = random_tensor(net.output_shape().to_vec(), seed + 1);
    let r = gradient_check(net, &x, &t, &GradCheckOptions::default()).unwrap();
    assert!(r.passed, "{r:?}");
    assert!(r.checked > 0);
}

#[test]
fn dense_identity() {
    let mut net: Network<f32> = NetworkBuilder::new(vec![3], 1).dense(3).unwrap().build();
    if let Layer::Dense(d) = &mut net.layers_mut()[0] {
        d.weight.value = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    }
    let x = Tensor::new(vec![3], vec![0.5, -2.0, 7.0]).unwrap();
    assert_eq!(net.infer(&x).unwrap(), x);
}

#[test]
fn prelu_definition() {
    let net: Network<f32> = NetworkBuilder::new(vec![1, 1, 2], 1).prelu().unwrap().build();
    let x = Tensor::new(vec![1, 1, 2], vec![-2.0, 3.0]).unwrap();
    assert_eq!(net.infer(&x).unwrap().data(), &[-0.5, 3.0]);
}

#[test]
fn conv2d_one_hot_plateau() {
    let mut net: Network<f32> = NetworkBuilder::new(vec![1, 7, 7], 1)
        .conv2d(1, 3, 0)
        .unwrap()
        .build();
    if let Layer::Conv2D(c) = &mut net.layers_mut()[0] {
        c.weight.value.fill(1.0);
    }
    let mut x = Tensor::<f32>::zeros(vec![1, 7, 7]);
    x.data_mut()[3 * 7 + 3] = 1.0;
    let y = net.infer(&x).unwrap();
    assert_eq!(y.shape(), &[1, 5, 5]);
    for r in 0..5 {
        for c in 0..5 {
            let expect = if (1..=3).contains(&r) && (1..=3).contains(&c) { 1.0 } else { 0.0 };
            assert_eq!(y.data()[r * 5 + c], expect, "({r},{c})");
        }
    }
}

#[test]
fn dense_backward_is_outer_product() {
    let mut net: Network<f64> = NetworkBuilder::new(vec![3], 4).dense(2).unwrap().build();
    let x = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
    net.forward(&x).unwrap();
    net.backward(&Tensor::new(vec![2], vec![1.0, 1.0]).unwrap()).unwrap();
    let g = &net.params()[0].grad;
    assert_eq!(g, &vec![1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
    assert_eq!(net.params()[1].grad, vec![1.0, 1.0]);
}

#[test]
fn prelu_slope_gradient_zero_for_positive_inputs() {
    let mut net: Network<f64> = NetworkBuilder::new(vec![4], 1).prelu().unwrap().build();
    let x = Tensor::new(vec![4], vec![0.1, 2.0, 3.0, 0.0]).unwrap();
    net.forward(&x).unwrap();
    net.backward(&Tensor::new(vec![4], vec![1.0; 4]).unwrap()).unwrap();
    assert!(net.params()[0].grad.iter().all(|&g| g == 0.0));
}

#[test]
fn backward_without_forward_errors() {
    let mut net: Network<f32> = NetworkBuilder::new(vec![2], 1).dense(1).unwrap().build();
    let r = net.backward(&Tensor::zeros(vec![1]));
    assert!(matches!(r, Err(Error::NoForwardCache(_))));
}

#[test]
fn forward_shape_mismatch() {
    let net: Network<f32> = NetworkBuilder::new(vec![2], 1).dense(1).unwrap().build();
    assert!(matches!(
        net.infer(&Tensor::zeros(vec![3])),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn gradcheck_every_layer_kind() {
    let dense = NetworkBuilder::new(vec![7], 10).dense(5).unwrap().build();
    check(&dense, 1);
    let conv1 = NetworkBuilder::new(vec![6, 3], 11).conv1d(4, 3).unwrap().build();
    check(&conv1, 2);
    let conv2 = NetworkBuilder::new(vec![2, 5, 4], 12)
        .conv2d(3, 3, 1)
        .unwrap()
        .build();
    check(&conv2, 3);
    let valid = NetworkBuilder::new(vec![2, 5, 4], 13)
        .conv2d(2, 3, 0)
        .unwrap()
        .build();
    check(&valid, 4);
    let pool = NetworkBuilder::new(vec![2, 5, 6], 14)
        .conv2d(2, 1, 0)
        .unwrap()
        .maxpool2d()
        .unwrap()
        .build();
    check(&pool, 5);
    let prelu = NetworkBuilder::new(vec![3, 4], 15)
        .conv1d(3, 1)
        .unwrap()
        .prelu()
        .unwrap()
        .build();
    check(&prelu, 6);
    let flat = NetworkBuilder::new(vec![2, 3, 3], 16)
        .flatten()
        .unwrap()
        .dense(4)
        .unwrap()
        .build();
    check(&flat, 7);
}

#[test]
fn gradcheck_catches_corrupted_dense_backward() {
    let net: Network<f32> = NetworkBuilder::new(vec![6], 3)
        .dense(4)
        .unwrap()
        .prelu()
        .unwrap()
        .dense(2)
        .unwrap()
        .build();
    let x = random_tensor(vec![6], 8);
    let t = random_tensor(vec![2], 9);
    let opts = GradCheckOptions::default();
    assert!(gradient_check(&net, &x, &t, &opts).unwrap().passed);
    let bad = gradient_check_with(&net, &x, &t, &opts, |n| {
        if let Layer::Dense(d) = &mut n.layers_mut()[0] {
            d.weight.grad[0] *= 1.01;
        }
    })
    .unwrap();
    assert!(!bad.passed);
}

#[test]
fn maxpool_matches_brute_force() {
    let net: Network<f32> = NetworkBuilder::new(vec![3, 6, 8], 0)
        .maxpool2d()
        .unwrap()
        .build();
    for seed in 0..5 {
        let x = random_tensor(vec![3, 6, 8], seed);
        let y = net.infer(&x).unwrap();
        for c in 0..3 {
            for i in 0..3 {
                for j in 0..4 {
                    let mut m = f32::NEG_INFINITY;
                    for di in 0..2 {
                        for dj in 0..2 {
                            m = m.max(x.data()[c * 48 + (2 * i + di) * 8 + 2 * j + dj]);
                        }
                    }
                    assert_eq!(y.data()[c * 12 + i * 4 + j], m);
                }
            }
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let net: Network<f32> = NetworkBuilder::new(vec![2, 8, 8], 5)
        .conv2d(4, 3, 1)
        .unwrap()
        .prelu()
        .unwrap()
        .maxpool2d()
        .unwrap()
        .flatten()
        .unwrap()
        .dense(3)
        .unwrap()
        .build();
    let x = random_tensor(vec![2, 8, 8], 1);
    let a = net.infer(&x).unwrap();
    let b = net.infer(&x).unwrap();
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn batched_forward_matches_single() {
    let net: Network<f32> = NetworkBuilder::new(vec![10, 5], 2)
        .conv1d(8, 3)
        .unwrap()
        .prelu()
        .unwrap()
        .flatten()
        .unwrap()
        .dense(2)
        .unwrap()
        .build();
    let a = random_tensor(vec![10, 5], 1);
    let b = random_tensor(vec![10, 5], 2);
    let batch = Tensor::stack(&[&a, &b]).unwrap();
    let yb = net.infer(&batch).unwrap();
    let ya = net.infer(&a).unwrap();
    let yb1 = net.infer(&b).unwrap();
    for (u, v) in yb.data().iter().zip(ya.data().iter().chain(yb1.data())) {
        assert!((u - v).abs() < 1e-6);
    }
}

#[test]
fn one_step_decreases_loss() {
    let mut net: Network<f32> = NetworkBuilder::new(vec![4], 3)
        .dense(8)
        .unwrap()
        .prelu()
        .unwrap()
        .dense(2)
        .unwrap()
        .build();
    let x = Tensor::stack(&[&random_tensor(vec![4], 1), &random_tensor(vec![4], 2)]).unwrap();
    let t = Tensor::stack(&[&random_tensor(vec![2], 3), &random_tensor(vec![2], 4)]).unwrap();
    let mut st = AdamState::new(&net, 1e-5);
    net.zero_grad();
    let (l0, g) = mse_loss(&net.forward(&x).unwrap(), &t).unwrap();
    net.backward(&g).unwrap();
    adam_step(&mut st, &mut net).unwrap();
    let (l1, _) = mse_loss(&net.infer(&x).unwrap(), &t).unwrap();
    assert!(l1 < l0, "{l1} !< {l0}");
}

fn small_net() -> Network<f32> {
    NetworkBuilder::new(vec![10, 5], 7)
        .conv1d(4, 3)
        .unwrap()
        .prelu()
        .unwrap()
        .flatten()
        .unwrap()
        .dense(2)
        .unwrap()
        .build()
}

#[test]
fn weights_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.pgnn");
    let net = small_net();
    save_weights(&net, &path).unwrap();
    let mut other: Network<f32> = NetworkBuilder::new(vec![10, 5], 99)
        .conv1d(4, 3)
        .unwrap()
        .prelu()
        .unwrap()
        .flatten()
        .unwrap()
        .dense(2)
        .unwrap()
        .build();
    assert_ne!(other, net);
    load_weights(&mut other, &path).unwrap();
    assert_eq!(other, net);
    assert_eq!(encode_weights(&other), std::fs::read(&path).unwrap());
}

#[test]
fn weights_errors() {
    let net = small_net();
    let bytes = encode_weights(&net);
    let mut target = small_net();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_weights(&mut target, &bad), Err(Error::BadMagic)));

    // Header (12) + conv1d header (2 + 3*4) + a few floats: cut inside layer 0.
    let cut = &bytes[..12 + 14 + 8];
    assert!(matches!(
        decode_weights(&mut target, cut),
        Err(Error::Truncated { layer: 0 })
    ));
    // Cut inside the final dense layer.
    let cut = &bytes[..bytes.len() - 3];
    let err = decode_weights(&mut target, cut).unwrap_err();
    assert!(matches!(err, Error::Truncated { layer: 3 }));
    assert!(err.to_string().contains("layer 3"));

    let mut wrong: Network<f32> = NetworkBuilder::new(vec![10, 5], 7)
        .conv1d(6, 3)
        .unwrap()
        .prelu()
        .unwrap()
        .flatten()
        .unwrap()
        .dense(2)
        .unwrap()
        .build();
    assert!(matches!(
        decode_weights(&mut wrong, &bytes),
        Err(Error::ArchitectureMismatch { layer: 0, .. })
    ));
    assert_eq!(target, net);
}
