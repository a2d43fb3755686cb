//! Whole-library flows: align a plate, matte, clean up and composite; a
//! short supervised run on one example.

use std::ops::ControlFlow;

use bgmatte_core::augment::{make_syn_example, AugRng};
use bgmatte_core::evalpost::{count_subjects, postprocess_alpha, render_composite, Backdrop};
use bgmatte_core::model::{Generator, MattingInput, NetConfig};
use bgmatte_core::preprocess::{estimate_homography, refine_segmentation, warp_background, warp_image, Homography};
use bgmatte_core::toy::{textured_background, toy_asset, toy_scene};
use bgmatte_core::train::{AdobeTrainer, StepRecord, TrainConfig, TrainObserver};
use bgmatte_core::Image;
use rand::SeedableRng;

fn mean_abs_diff(a: &Image, b: &Image, mask: impl Fn(usize) -> bool) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (i, (p, q)) in a.data().chunks(3).zip(b.data().chunks(3)).enumerate() {
        if mask(i) {
            s += p.iter().zip(q).map(|(x, y)| (x - y).abs() as f64).sum::<f64>();
            n += 3;
        }
    }
    s / n as f64
}

#[test]
fn shifted_plate_is_realigned_and_matted() {
    let size = 96;
    let scene = toy_scene(size, 3);
    let true_shift = Homography::translation(3.0, -2.0);
    // Plate captured from a slightly different position.
    let plate = warp_image(&scene.background, &true_shift.inverse().unwrap(), (size, size)).unwrap();

    let fit = estimate_homography(&plate, &scene.image, 0).unwrap();
    assert!(fit.warning.is_none());
    assert!(fit.homography.max_corner_error(&true_shift, size, size) < 1.0);
    let aligned = warp_background(&plate, &fit.homography, (size, size)).unwrap();

    // Compare away from the subject and the frame border.
    let clear = |i: usize| {
        let (y, x) = (i / size, i % size);
        scene.alpha.data()[i] == 0.0 && (8..size - 8).contains(&y) && (8..size - 8).contains(&x)
    };
    let before = mean_abs_diff(&plate, &scene.background, clear);
    let after = mean_abs_diff(&aligned, &scene.background, clear);
    assert!(after < 0.25 * before, "before {before:.4}, after {after:.4}");

    let net = NetConfig { input_size: size, ..NetConfig::toy() };
    let g = Generator::<f32>::init(&net, 0).unwrap();
    let x = MattingInput::still(scene.image.clone(), aligned, refine_segmentation(&scene.prob)).unwrap();
    let (fg, alpha) = g.predict(&x).unwrap();
    assert_eq!(alpha.size(), (size, size));
    assert!(fg.data().iter().all(|v| (0.0..=1.0).contains(v)));

    let clean = postprocess_alpha(&alpha, count_subjects(&scene.prob)).unwrap();
    let green = [0.0, 177.0 / 255.0, 64.0 / 255.0];
    let out = render_composite(&fg, &clean, &Backdrop::Solid(green)).unwrap();
    for (i, a) in clean.data().iter().enumerate() {
        let px = &out.data()[3 * i..3 * i + 3];
        if *a == 0.0 {
            assert_eq!(px, &green[..]);
        } else if *a == 1.0 {
            assert_eq!(px, &fg.data()[3 * i..3 * i + 3]);
        }
    }
}

struct Losses(Vec<f64>);

impl TrainObserver for Losses {
    fn on_step(&mut self, rec: &StepRecord) -> ControlFlow<()> {
        self.0.push(rec.loss);
        ControlFlow::Continue(())
    }
}

#[test]
fn one_example_is_overfit() {
    let size = 32;
    let mut rng = AugRng::seed_from_u64(1);
    let ex = make_syn_example(&toy_asset(size, 1), &textured_background(size, size, 2), size, &mut rng).unwrap();
    let net = NetConfig { input_size: size, ..NetConfig::toy() };
    let cfg = TrainConfig { batch_size: 1, lr_g: 1e-3, epochs: 1, steps_per_epoch: Some(500), ..Default::default() };
    let mut t = AdobeTrainer::new(&net, &cfg).unwrap();
    let mut log = Losses(Vec::new());
    t.run(&[ex], &[], &mut log).unwrap();
    assert_eq!(log.0.len(), 500);
    let first = log.0[0];
    let last = log.0[490..].iter().sum::<f64>() / 10.0;
    assert!(last * 10.0 <= first, "loss went from {first:.4} to {last:.4}");
}
