use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::lit(rng.random_range(0.0..1.0))).collect()).unwrap()
}

fn random_batch<T: Scalar>(n: usize, size: usize, seed: u64) -> InputBatch<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    InputBatch {
        image: random_tensor(&[n, 3, size, size], &mut rng),
        background: random_tensor(&[n, 3, size, size], &mut rng),
        segmentation: random_tensor(&[n, 1, size, size], &mut rng),
        motion: random_tensor(&[n, 4, size, size], &mut rng),
    }
}

/// Parameter count derived by hand from the layer list.
fn generator_param_oracle(c: &NetConfig) -> usize {
    let (b, e, s) = (c.base_channels, c.enc_channels, c.selector_channels);
    let bn = |ch: usize| 2 * ch;
    let encoders: usize = [3, 3, 1, 4]
        .iter()
        .map(|&cin| 49 * cin * b + bn(b) + 9 * b * 2 * b + bn(2 * b) + 9 * 2 * b * e + bn(e))
        .sum();
    let selectors = 3 * (2 * e * s + bn(s));
    let combinator = (e + 3 * s) * e + bn(e);
    let resblocks = (c.shared_resblocks + 2 * c.branch_resblocks) * 2 * (9 * e * e + bn(e));
    let alpha_dec = 9 * e * 2 * b + bn(2 * b) + 9 * 2 * b * b + bn(b) + 49 * b + 1;
    let fg_dec = 9 * e * 2 * b + bn(2 * b) + 9 * 4 * b * b + bn(b) + 49 * b * 3 + 3;
    encoders + selectors + combinator + resblocks + alpha_dec + fg_dec
}

#[test]
fn paper_parameter_count_matches_closed_form() {
    let cfg = NetConfig::paper();
    let g: Generator<f32> = Generator::init(&cfg, 0).unwrap();
    assert_eq!(g.params().num_elements(), generator_param_oracle(&cfg));
    assert_eq!(g.params().num_elements(), 17_899_588);
    let toy = NetConfig::toy();
    let g: Generator<f32> = Generator::init(&toy, 0).unwrap();
    assert_eq!(g.params().num_elements(), generator_param_oracle(&toy));
}

#[test]
fn init_is_deterministic_and_shaped() {
    let cfg = NetConfig::toy();
    let a: Generator<f32> = Generator::init(&cfg, 9).unwrap();
    let b: Generator<f32> = Generator::init(&cfg, 9).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), Generator::<f32>::init(&cfg, 10).unwrap().params());
    let base8 = NetConfig { base_channels: 8, enc_channels: 32, ..cfg };
    let g: Generator<f32> = Generator::init(&base8, 0).unwrap();
    assert_eq!(g.params().by_name("enc_img.0.conv.weight").unwrap().shape(), &[8, 3, 7, 7]);
    for (name, t) in g.params().iter() {
        if name.ends_with("bn.weight") {
            assert!(t.data().iter().all(|&v| v == 1.0));
        }
        if name.ends_with("bn.bias") {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
        if name.starts_with("enc_") {
            assert!(!name.contains("conv.bias"));
        }
    }
    assert!(g.params().iter().all(|(n, _)| !n.ends_with("conv.bias")));
}

#[test]
fn encoder_shapes() {
    let toy = NetConfig { base_channels: 8, enc_channels: 32, ..NetConfig::toy() };
    let g: Generator<f32> = Generator::init(&toy, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Tensor<f32> = random_tensor(&[1, 3, 64, 64], &mut rng);
    assert_eq!(g.encode(Encoder::Image, &x).unwrap().shape(), &[1, 32, 16, 16]);
    let seg: Tensor<f32> = random_tensor(&[1, 1, 64, 64], &mut rng);
    assert_eq!(g.encode(Encoder::Segmentation, &seg).unwrap().shape(), &[1, 32, 16, 16]);
    assert!(g.encode(Encoder::Segmentation, &x).is_err());
    let odd: Tensor<f32> = random_tensor(&[1, 3, 30, 30], &mut rng);
    assert!(g.encode(Encoder::Image, &odd).is_err());

    let paper: Generator<f32> = Generator::init(&NetConfig::paper(), 1).unwrap();
    let x: Tensor<f32> = random_tensor(&[1, 3, 128, 128], &mut rng);
    assert_eq!(paper.encode(Encoder::Background, &x).unwrap().shape(), &[1, 256, 32, 32]);
}

#[test]
fn cs_block_shapes_and_zero_features() {
    let cfg = NetConfig::toy();
    let g: Generator<f32> = Generator::init(&cfg, 2).unwrap();
    let z = Tensor::zeros(&[1, cfg.enc_channels, 4, 4]);
    let out = g.cs_block(&z, &z, &z, &z).unwrap();
    assert_eq!(out.shape(), &[1, cfg.enc_channels, 4, 4]);
    assert!(out.all_finite());
    let wrong = Tensor::zeros(&[1, cfg.enc_channels, 4, 5]);
    assert!(g.cs_block(&z, &wrong, &z, &z).is_err());
}

#[test]
fn forward_ranges_and_determinism() {
    let cfg = NetConfig::toy();
    let mut g: Generator<f32> = Generator::init(&cfg, 3).unwrap();
    let x = random_batch::<f32>(2, 32, 1);
    let a = g.forward(&x).unwrap();
    assert_eq!(a.fg.shape(), &[2, 3, 32, 32]);
    assert_eq!(a.alpha.shape(), &[2, 1, 32, 32]);
    assert_eq!(a, g.forward(&x).unwrap());
    // Arbitrary weights cannot push the outputs out of range.
    let ids: Vec<_> = g.params().ids().collect();
    for id in ids {
        g.params_mut().get_mut(id).scale_assign(25.0);
    }
    let b = g.forward(&x).unwrap();
    assert!(b.alpha.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(b.fg.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn training_pass_updates_running_stats_only() {
    let cfg = NetConfig::toy();
    let mut g: Generator<f32> = Generator::init(&cfg, 4).unwrap();
    let before = g.params().clone();
    let buffers = g.buffers().clone();
    let x = random_batch::<f32>(2, 16, 2);
    let (_, tape) = g.train_pass(&x).unwrap();
    assert_eq!(g.buffers(), &buffers);
    drop(tape);
    g.forward_train(&x).unwrap();
    assert_eq!(g.params(), &before);
    assert_ne!(g.buffers(), &buffers);
    let m = g.buffers().by_name("enc_img.0.bn.running_mean").unwrap();
    assert!(m.data().iter().any(|&v| v != 0.0));
}

/// L = <r_f, F> + <r_a, α> for fixed random weights.
fn probe_loss(out: &GenOutput<f64>, rf: &Tensor<f64>, ra: &Tensor<f64>) -> f64 {
    out.fg.data().iter().zip(rf.data()).map(|(a, b)| a * b).sum::<f64>()
        + out.alpha.data().iter().zip(ra.data()).map(|(a, b)| a * b).sum::<f64>()
}

#[test]
fn generator_gradients_match_finite_differences() {
    let cfg = NetConfig { input_size: 16, ..NetConfig::toy() };
    let mut g: Generator<f64> = Generator::init(&cfg, 5).unwrap();
    let x = random_batch::<f64>(2, 16, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rf: Tensor<f64> = random_tensor(&[2, 3, 16, 16], &mut rng);
    let ra: Tensor<f64> = random_tensor(&[2, 1, 16, 16], &mut rng);
    let (out, tape) = g.train_pass(&x).unwrap();
    let mut grads = g.zero_grads();
    g.backward(tape, &rf, &ra, &mut grads);

    let total = g.params().num_elements();
    let h = 1e-4;
    let mut checked = 0;
    for _ in 0..40 {
        let k = rng.random_range(0..total);
        let v = g.params().flat_get(k);
        g.params_mut().flat_set(k, v + h);
        let up = probe_loss(&g.train_pass(&x).unwrap().0, &rf, &ra);
        g.params_mut().flat_set(k, v - h);
        let down = probe_loss(&g.train_pass(&x).unwrap().0, &rf, &ra);
        g.params_mut().flat_set(k, v);
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.flat_get(k);
        let scale = numeric.abs().max(analytic.abs()).max(1e-6);
        let rel = (numeric - analytic).abs() / scale;
        assert!(rel < 1e-3, "{:?}: analytic {analytic} numeric {numeric}", g.params().flat_name(k));
        checked += 1;
    }
    assert_eq!(checked, 40);
    assert!(probe_loss(&out, &rf, &ra).is_finite());
}

#[test]
fn discriminator_geometry() {
    assert_eq!(Discriminator::<f32>::output_size(512), 31);
    assert_eq!(Discriminator::<f32>::output_size(128), 7);
    // Four stride-2 blocks plus the 4x4 head see 94 input pixels per side.
    assert_eq!(Discriminator::<f32>::receptive_field(), 94);
    let d: Discriminator<f32> = Discriminator::init(2, 0).unwrap();
    let x = Tensor::zeros(&[1, 3, 512, 512]);
    assert_eq!(d.forward(&x).unwrap().shape(), &[1, 1, 31, 31]);
    assert!(d.forward(&Tensor::zeros(&[1, 3, 64, 64])).is_err());
}

#[test]
fn discriminator_parameter_count() {
    let d: Discriminator<f32> = Discriminator::init(64, 0).unwrap();
    let c = 64;
    let oracle = 3 * 16 * c + c + c * 2 * c * 16 + 2 * c * 4 * c * 16 + 4 * c * 8 * c * 16 + 8 * c * 16 + 1;
    assert_eq!(d.params().num_elements(), oracle);
}

#[test]
fn discriminator_zero_head_outputs_bias() {
    let mut d: Discriminator<f32> = Discriminator::init(4, 1).unwrap();
    let w = d.params().id("d.out.weight").unwrap();
    d.params_mut().get_mut(w).fill(0.0);
    let b = d.params().id("d.out.bias").unwrap();
    d.params_mut().get_mut(b).fill(0.3);
    let s = d.forward(&Tensor::zeros(&[1, 3, 96, 96])).unwrap();
    assert!(s.data().iter().all(|&v| v == 0.3));
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    let mut d: Discriminator<f64> = Discriminator::init(2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Tensor<f64> = random_tensor(&[2, 3, 72, 72], &mut rng);
    let (s, tape) = d.forward_train(&x).unwrap();
    let r: Tensor<f64> = random_tensor(s.shape(), &mut rng);
    let loss = |d: &Discriminator<f64>, x: &Tensor<f64>| -> f64 {
        d.forward(x).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let mut grads = d.zero_grads();
    let dx = d.backward(tape, &r, Some(&mut grads));
    // Instance norm over low-variance activations is strongly curved, so the
    // step must be small for central differences to be accurate.
    let h = 1e-7;
    for _ in 0..15 {
        let k = rng.random_range(0..d.params().num_elements());
        let v = d.params().flat_get(k);
        d.params_mut().flat_set(k, v + h);
        let up = loss(&d, &x);
        d.params_mut().flat_set(k, v - h);
        let down = loss(&d, &x);
        d.params_mut().flat_set(k, v);
        let num = (up - down) / (2.0 * h);
        let ana = grads.flat_get(k);
        assert!((num - ana).abs() <= 1e-4 * num.abs().max(ana.abs()).max(1e-4), "{:?} {num} vs {ana}", d.params().flat_name(k));
    }
    for _ in 0..10 {
        let k = rng.random_range(0..x.len());
        let mut xp = x.clone();
        xp.data_mut()[k] += h;
        let up = loss(&d, &xp);
        xp.data_mut()[k] -= 2.0 * h;
        let down = loss(&d, &xp);
        let num = (up - down) / (2.0 * h);
        let ana = dx.data()[k];
        assert!((num - ana).abs() <= 1e-4 * num.abs().max(ana.abs()).max(1e-4), "{num} vs {ana}");
    }
}
