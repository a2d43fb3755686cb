//! Synthetic training composites.
//!
//! Foreground/alpha assets are cropped, rescaled and flipped, composited over
//! a background `B`, and paired with a perturbed background `B'`, a degraded
//! segmentation and a synthetic motion cue. Every random draw comes from an
//! explicit seeded generator so examples are reproducible from
//! `(asset id, background id, seed)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::compose::{composite, to_grayscale};
use crate::error::{check_same_size, MattingError, Result};
use crate::preprocess::{dilate, erode, gaussian_blur, warp_image, warp_plane, Homography, MotionStack};
use crate::raster::{AlphaMatte, Image, Plane, SoftSegmentation};

/// Seeded random stream used by every augmentation.
pub type AugRng = ChaCha8Rng;

/// Per-example seed derived from the global seed and the example's ids.
pub fn derive_seed(global_seed: u64, asset_id: &str, bg_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update((asset_id.len() as u64).to_le_bytes());
    h.update(asset_id.as_bytes());
    h.update(bg_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(global_seed: u64, asset_id: &str, bg_id: &str) -> AugRng {
    AugRng::seed_from_u64(derive_seed(global_seed, asset_id, bg_id))
}

/// Ground-truth foreground and alpha.
#[derive(Clone, Debug, PartialEq)]
pub struct MatteAsset {
    pub id: String,
    pub fg: Image,
    pub alpha: AlphaMatte,
}

impl MatteAsset {
    pub fn new(id: impl Into<String>, fg: Image, alpha: AlphaMatte) -> Result<Self> {
        let id = id.into();
        check_same_size("asset alpha", fg.size(), alpha.size())?;
        if alpha.data().iter().all(|&v| v == 0.0) {
            return Err(MattingError::AssetSkipped {
                id,
                reason: "alpha is identically zero".into(),
            });
        }
        Ok(MatteAsset { id, fg, alpha })
    }
}

/// One synthetic training example.
#[derive(Clone, Debug, PartialEq)]
pub struct SynExample {
    pub key: String,
    /// `I`, composited over the true background.
    pub img: Image,
    /// `B`.
    pub bg_true: Image,
    /// `B'`, the perturbed background given to the network.
    pub bg_input: Image,
    pub seg: SoftSegmentation,
    pub motion: MotionStack,
    pub fg_gt: Image,
    pub alpha_gt: AlphaMatte,
}

impl SynExample {
    pub fn size(&self) -> (usize, usize) {
        self.img.size()
    }

    /// Checks the shared-size and recomposition invariants.
    pub fn validate(&self) -> Result<()> {
        let s = self.img.size();
        check_same_size("example bg_true", s, self.bg_true.size())?;
        check_same_size("example bg_input", s, self.bg_input.size())?;
        check_same_size("example seg", s, self.seg.size())?;
        check_same_size("example motion", s, self.motion.size())?;
        check_same_size("example fg_gt", s, self.fg_gt.size())?;
        check_same_size("example alpha_gt", s, self.alpha_gt.size())?;
        let again = composite(&self.fg_gt, &self.alpha_gt, &self.bg_true)?;
        let worst = again
            .data()
            .iter()
            .zip(self.img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        if worst > 1e-6 {
            return Err(MattingError::contract(format!(
                "example {} violates I = aF + (1-a)B by {worst}",
                self.key
            )));
        }
        Ok(())
    }
}

fn normal(rng: &mut AugRng, mean: f64, std: f64) -> f64 {
    Normal::new(mean, std).expect("finite std").sample(rng)
}

fn gamma_image(img: &Image, gamma: f64) -> Image {
    let data = img.data().iter().map(|&v| (v as f64).powf(gamma) as f32).collect();
    Image::from_vec_clamped(img.height(), img.width(), data).expect("same size")
}

fn add_noise(img: &Image, mean: f64, std: f64, mask: Option<&Plane>, rng: &mut AugRng) -> Image {
    let noise = Normal::new(mean, std.max(0.0)).expect("finite std");
    let mut data = img.data().to_vec();
    for (k, v) in data.iter_mut().enumerate() {
        if mask.is_some_and(|m| m.data()[k / 3] <= 0.5) {
            continue;
        }
        *v = (*v as f64 + noise.sample(rng)) as f32;
    }
    Image::from_vec_clamped(img.height(), img.width(), data).expect("same size")
}

/// Training-time background perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrainBgPerturbation {
    /// `B' = B^γ`.
    Gamma(f64),
    /// Additive Gaussian noise around the foreground region (0–1 units).
    Noise { mean: f64, std: f64 },
}

impl TrainBgPerturbation {
    /// Gamma with probability 0.5 (γ ~ N(1, 0.12), clamped to [0.5, 2]),
    /// otherwise noise with mean ~ U[-7, 7]/255 and std ~ U[2, 6]/255.
    pub fn sample(rng: &mut AugRng) -> Self {
        if rng.random_bool(0.5) {
            TrainBgPerturbation::Gamma(normal(rng, 1.0, 0.12).clamp(0.5, 2.0))
        } else {
            TrainBgPerturbation::Noise {
                mean: rng.random_range(-7.0..=7.0) / 255.0,
                std: rng.random_range(2.0..=6.0) / 255.0,
            }
        }
    }

    /// Applies the perturbation; noise only touches pixels where
    /// `dilate(fg_region, 10)` is set.
    pub fn apply(&self, bg: &Image, fg_region: &SoftSegmentation, rng: &mut AugRng) -> Result<Image> {
        check_same_size("perturbation region", bg.size(), fg_region.size())?;
        Ok(match *self {
            TrainBgPerturbation::Gamma(g) => gamma_image(bg, g),
            TrainBgPerturbation::Noise { mean, std } => {
                let around = dilate(fg_region, 10);
                add_noise(bg, mean, std, Some(&around), rng)
            }
        })
    }
}

pub fn perturb_background_train(bg: &Image, fg_region: &SoftSegmentation, rng: &mut AugRng) -> Result<Image> {
    TrainBgPerturbation::sample(rng).apply(bg, fg_region, rng)
}

/// Similarity-plus-shear warp about the image centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineJitter {
    /// `(tx, ty)` in pixels.
    pub translate: (f64, f64),
    pub rotate_deg: f64,
    pub scale: f64,
    pub shear: f64,
}

impl AffineJitter {
    pub const IDENTITY: AffineJitter = AffineJitter {
        translate: (0.0, 0.0),
        rotate_deg: 0.0,
        scale: 1.0,
        shear: 0.0,
    };

    pub fn homography(&self, height: usize, width: usize) -> Homography {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (s, c) = self.rotate_deg.to_radians().sin_cos();
        // A = R · diag(scale) · [[1, shear], [0, 1]]
        let a = [
            [c * self.scale, c * self.scale * self.shear - s * self.scale],
            [s * self.scale, s * self.scale * self.shear + c * self.scale],
        ];
        let tx = cx + self.translate.0 - a[0][0] * cx - a[0][1] * cy;
        let ty = cy + self.translate.1 - a[1][0] * cx - a[1][1] * cy;
        Homography::from_matrix([[a[0][0], a[0][1], tx], [a[1][0], a[1][1], ty], [0.0, 0.0, 1.0]])
            .unwrap_or_else(|_| Homography::identity())
    }
}

/// Evaluation-time background perturbation: affine, then gamma, then noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalBgPerturbation {
    pub affine: AffineJitter,
    pub gamma: f64,
    pub noise_mean: f64,
    pub noise_std: f64,
}

impl EvalBgPerturbation {
    pub const IDENTITY: EvalBgPerturbation = EvalBgPerturbation {
        affine: AffineJitter::IDENTITY,
        gamma: 1.0,
        noise_mean: 0.0,
        noise_std: 0.0,
    };

    /// Translate ~ N(0, 3) px per axis, rotate ~ N(0, 1.3°), scale ~ N(1, 0.01),
    /// shear ~ N(0, 0.01), γ ~ N(1, 0.12), noise mean ~ U[-5, 5]/255 and
    /// std ~ U[2, 4]/255.
    pub fn sample(rng: &mut AugRng) -> Self {
        let affine = AffineJitter {
            translate: (normal(rng, 0.0, 3.0), normal(rng, 0.0, 3.0)),
            rotate_deg: normal(rng, 0.0, 1.3),
            scale: normal(rng, 1.0, 0.01),
            shear: normal(rng, 0.0, 0.01),
        };
        EvalBgPerturbation {
            affine,
            gamma: normal(rng, 1.0, 0.12).clamp(0.5, 2.0),
            noise_mean: rng.random_range(-5.0..=5.0) / 255.0,
            noise_std: rng.random_range(2.0..=4.0) / 255.0,
        }
    }

    pub fn apply(&self, bg: &Image, rng: &mut AugRng) -> Result<Image> {
        let warped = if self.affine == AffineJitter::IDENTITY {
            bg.clone()
        } else {
            warp_image(bg, &self.affine.homography(bg.height(), bg.width()), bg.size())?
        };
        let gamma = if self.gamma == 1.0 { warped } else { gamma_image(&warped, self.gamma) };
        if self.noise_mean == 0.0 && self.noise_std == 0.0 {
            return Ok(gamma);
        }
        Ok(add_noise(&gamma, self.noise_mean, self.noise_std, None, rng))
    }
}

pub fn perturb_background_eval(bg: &Image, rng: &mut AugRng) -> Result<Image> {
    EvalBgPerturbation::sample(rng).apply(bg, rng)
}

/// Erode/dilate/blur settings used to imitate an imperfect segmenter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegDegradation {
    pub erode_steps: usize,
    pub dilate_steps: usize,
    pub sigma: f64,
}

impl SegDegradation {
    /// Erode ~ U{10..20}, dilate ~ U{15..30}, σ from {3, 5, 7}.
    pub fn sample(rng: &mut AugRng) -> Self {
        SegDegradation {
            erode_steps: rng.random_range(10..=20),
            dilate_steps: rng.random_range(15..=30),
            sigma: [3.0, 5.0, 7.0][rng.random_range(0..3)],
        }
    }

    pub fn pre_blur(&self, alpha: &AlphaMatte) -> Plane {
        dilate(&erode(alpha, self.erode_steps), self.dilate_steps)
    }

    pub fn apply(&self, alpha: &AlphaMatte) -> SoftSegmentation {
        gaussian_blur(&self.pre_blur(alpha), self.sigma).expect("sigma is positive")
    }
}

pub fn degrade_segmentation(alpha_gt: &AlphaMatte, rng: &mut AugRng) -> SoftSegmentation {
    SegDegradation::sample(rng).apply(alpha_gt)
}

/// Small rigid motion of the subject for one motion-cue frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionJitter {
    pub translate: (f64, f64),
    pub rotate_deg: f64,
}

impl MotionJitter {
    pub const IDENTITY: MotionJitter = MotionJitter {
        translate: (0.0, 0.0),
        rotate_deg: 0.0,
    };

    /// Translate ~ N(0, 5) px per axis, rotate ~ N(0, 2°).
    pub fn sample(rng: &mut AugRng) -> Self {
        MotionJitter {
            translate: (normal(rng, 0.0, 5.0), normal(rng, 0.0, 5.0)),
            rotate_deg: normal(rng, 0.0, 2.0),
        }
    }

    fn affine(&self) -> AffineJitter {
        AffineJitter {
            translate: self.translate,
            rotate_deg: self.rotate_deg,
            ..AffineJitter::IDENTITY
        }
    }
}

/// Motion cue from explicit per-slot jitters.
pub fn motion_stack_with(asset: &MatteAsset, bg: &Image, jitters: &[MotionJitter; 4]) -> Result<MotionStack> {
    check_same_size("motion background", asset.fg.size(), bg.size())?;
    let (h, w) = bg.size();
    let slot = |j: &MotionJitter| -> Result<Plane> {
        if *j == MotionJitter::IDENTITY {
            return Ok(to_grayscale(&composite(&asset.fg, &asset.alpha, bg)?));
        }
        let hm = j.affine().homography(h, w);
        let fg = warp_image(&asset.fg, &hm, (h, w))?;
        let alpha = warp_plane(&asset.alpha, &hm, (h, w))?;
        Ok(to_grayscale(&composite(&fg, &alpha, bg)?))
    };
    Ok(MotionStack {
        frames: [slot(&jitters[0])?, slot(&jitters[1])?, slot(&jitters[2])?, slot(&jitters[3])?],
    })
}

/// Four independently jittered copies of the subject over `bg`, in grey.
pub fn synth_motion_stack(asset: &MatteAsset, bg: &Image, rng: &mut AugRng) -> Result<MotionStack> {
    let jitters = [
        MotionJitter::sample(rng),
        MotionJitter::sample(rng),
        MotionJitter::sample(rng),
        MotionJitter::sample(rng),
    ];
    motion_stack_with(asset, bg, &jitters)
}

const CROP_ATTEMPTS: usize = 10;

/// Random square crop with side in `[out, 2·out]` (limited by the source),
/// resized to `out × out`.
fn random_square(rng: &mut AugRng, size: (usize, usize), out: usize) -> (usize, usize, usize) {
    let limit = size.0.min(size.1);
    let side = rng.random_range(out..=2 * out).min(limit);
    let y0 = rng.random_range(0..=size.0 - side);
    let x0 = rng.random_range(0..=size.1 - side);
    (y0, x0, side)
}

/// Builds one synthetic example. `bg` supplies the true background `B`.
pub fn make_syn_example(asset: &MatteAsset, bg: &Image, out_size: usize, rng: &mut AugRng) -> Result<SynExample> {
    if out_size == 0 {
        return Err(MattingError::contract("output size must be positive"));
    }
    let mut picked = None;
    for _ in 0..CROP_ATTEMPTS {
        let (y0, x0, side) = random_square(rng, asset.fg.size(), out_size);
        let alpha = asset.alpha.crop(y0, x0, side, side)?.resize(out_size, out_size);
        let flip = rng.random_bool(0.5);
        if alpha.data().iter().any(|&v| v > 0.0) {
            let fg = asset.fg.crop(y0, x0, side, side)?.resize(out_size, out_size);
            picked = Some(if flip {
                (fg.flip_horizontal(), alpha.flip_horizontal())
            } else {
                (fg, alpha)
            });
            break;
        }
    }
    let Some((fg_gt, alpha_gt)) = picked else {
        return Err(MattingError::AssetSkipped {
            id: asset.id.clone(),
            reason: format!("alpha empty after {CROP_ATTEMPTS} crops"),
        });
    };
    let (by, bx, bside) = random_square(rng, bg.size(), out_size);
    let mut bg_true = bg.crop(by, bx, bside, bside)?.resize(out_size, out_size);
    if rng.random_bool(0.5) {
        bg_true = bg_true.flip_horizontal();
    }

    let bg_input = perturb_background_train(&bg_true, &alpha_gt, rng)?;
    let seg = degrade_segmentation(&alpha_gt, rng);
    let cropped = MatteAsset {
        id: asset.id.clone(),
        fg: fg_gt.clone(),
        alpha: alpha_gt.clone(),
    };
    let motion = synth_motion_stack(&cropped, &bg_true, rng)?;
    let img = composite(&fg_gt, &alpha_gt, &bg_true)?;
    Ok(SynExample {
        key: String::new(),
        img,
        bg_true,
        bg_input,
        seg,
        motion,
        fg_gt,
        alpha_gt,
    })
}

/// One planned `(asset, background)` pairing with its derived seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExamplePlan {
    pub key: String,
    pub asset_id: String,
    pub bg_id: String,
    pub seed: u64,
}

/// Every asset composited over every background.
pub fn plan_dataset(asset_ids: &[String], bg_ids: &[String], global_seed: u64) -> Vec<ExamplePlan> {
    let mut plans = Vec::with_capacity(asset_ids.len() * bg_ids.len());
    for a in asset_ids {
        for b in bg_ids {
            plans.push(ExamplePlan {
                key: example_key(a, b),
                asset_id: a.clone(),
                bg_id: b.clone(),
                seed: derive_seed(global_seed, a, b),
            });
        }
    }
    plans
}

pub fn example_key(asset_id: &str, bg_id: &str) -> String {
    format!("{asset_id}__{bg_id}")
}

/// Builds the example for a plan; the key is filled in from the plan.
pub fn realize(plan: &ExamplePlan, asset: &MatteAsset, bg: &Image, out_size: usize) -> Result<SynExample> {
    let mut rng = AugRng::seed_from_u64(plan.seed);
    let mut ex = make_syn_example(asset, bg, out_size, &mut rng)?;
    ex.key = plan.key.clone();
    Ok(ex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{textured_background, toy_asset};
    use std::collections::HashSet;

    fn rng(seed: u64) -> AugRng {
        AugRng::seed_from_u64(seed)
    }

    #[test]
    fn gamma_one_is_identity_and_gamma_two_squares() {
        let bg = textured_background(16, 16, 1);
        let region = Plane::zeros(16, 16);
        let out = TrainBgPerturbation::Gamma(1.0).apply(&bg, &region, &mut rng(0)).unwrap();
        assert_eq!(out, bg);
        let grey = Image::filled(4, 4, [0.5; 3]);
        let out = TrainBgPerturbation::Gamma(2.0).apply(&grey, &Plane::zeros(4, 4), &mut rng(0)).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn degenerate_noise_is_near_identity() {
        let bg = textured_background(16, 16, 2);
        let region = Plane::filled(16, 16, 1.0);
        let out = TrainBgPerturbation::Noise { mean: 0.0, std: 1e-6 }.apply(&bg, &region, &mut rng(1)).unwrap();
        for (a, b) in out.data().iter().zip(bg.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn noise_stays_near_foreground() {
        let bg = Image::filled(60, 60, [0.5; 3]);
        let region = Plane::from_fn(60, 60, |y, x| if (25..35).contains(&y) && (25..35).contains(&x) { 1.0 } else { 0.0 });
        let around = dilate(&region, 10);
        let out = TrainBgPerturbation::Noise { mean: 0.01, std: 0.02 }.apply(&bg, &region, &mut rng(2)).unwrap();
        let mut changed = 0;
        for y in 0..60 {
            for x in 0..60 {
                if around.get(y, x) == 0.0 {
                    assert_eq!(out.pixel(y, x), bg.pixel(y, x));
                } else if out.pixel(y, x) != bg.pixel(y, x) {
                    changed += 1;
                }
            }
        }
        assert!(changed > 100);
    }

    #[test]
    fn sampled_train_perturbation_in_range() {
        let mut r = rng(3);
        for _ in 0..200 {
            match TrainBgPerturbation::sample(&mut r) {
                TrainBgPerturbation::Gamma(g) => assert!((0.5..=2.0).contains(&g)),
                TrainBgPerturbation::Noise { mean, std } => {
                    assert!(mean.abs() <= 7.0 / 255.0 + 1e-12);
                    assert!((2.0 / 255.0..=6.0 / 255.0).contains(&std));
                }
            }
        }
    }

    #[test]
    fn eval_identity_and_pure_translation() {
        let bg = textured_background(32, 40, 3);
        assert_eq!(EvalBgPerturbation::IDENTITY.apply(&bg, &mut rng(0)).unwrap(), bg);
        let p = EvalBgPerturbation {
            affine: AffineJitter { translate: (3.0, 0.0), ..AffineJitter::IDENTITY },
            ..EvalBgPerturbation::IDENTITY
        };
        let out = p.apply(&bg, &mut rng(0)).unwrap();
        for y in 0..32 {
            for x in 3..40 {
                for c in 0..3 {
                    assert!((out.pixel(y, x)[c] - bg.pixel(y, x - 3)[c]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn eval_noise_stage_statistics() {
        // Monte Carlo over the stated distributions: draw mean ~ U[-5,5]/255,
        // std ~ U[2,4]/255 and measure mean |delta| on a mid-grey plate.
        let bg = Image::filled(8, 8, [0.5; 3]);
        let mut r = rng(4);
        let mut total = 0.0;
        let draws = 1000;
        for _ in 0..draws {
            let s = EvalBgPerturbation::sample(&mut r);
            let p = EvalBgPerturbation { affine: AffineJitter::IDENTITY, gamma: 1.0, ..s };
            let out = p.apply(&bg, &mut r).unwrap();
            total += out.data().iter().map(|&v| (v as f64 - 0.5).abs()).sum::<f64>() / out.data().len() as f64;
        }
        let mean = total / draws as f64;
        assert!(mean > 1.5 / 255.0 && mean < 5.5 / 255.0, "{}", mean * 255.0);
    }

    #[test]
    fn degrade_segmentation_cases() {
        assert_eq!(degrade_segmentation(&Plane::zeros(30, 30), &mut rng(5)), Plane::zeros(30, 30));
        let a = Plane::from_fn(160, 160, |y, x| if (30..130).contains(&y) && (30..130).contains(&x) { 1.0 } else { 0.0 });
        let d = SegDegradation { erode_steps: 10, dilate_steps: 15, sigma: 3.0 };
        let pre = d.pre_blur(&a);
        // Along the middle row the square spans 30..=129 and grows by 5.
        let on: Vec<usize> = (0..160).filter(|&x| pre.get(80, x) > 0.5).collect();
        assert_eq!((on[0], *on.last().unwrap()), (25, 134));
        let mut r = rng(6);
        for _ in 0..5 {
            assert!(degrade_segmentation(&a, &mut r).is_valid());
        }
    }

    #[test]
    fn motion_stack_cases() {
        let asset = toy_asset(48, 1);
        let bg = textured_background(48, 48, 9);
        let m = motion_stack_with(&asset, &bg, &[MotionJitter::IDENTITY; 4]).unwrap();
        let still = to_grayscale(&composite(&asset.fg, &asset.alpha, &bg).unwrap());
        assert!(m.frames.iter().all(|f| *f == still));

        let flat = Image::filled(48, 48, [0.3; 3]);
        let empty = MatteAsset { id: "e".into(), fg: asset.fg.clone(), alpha: Plane::zeros(48, 48) };
        let m = synth_motion_stack(&empty, &flat, &mut rng(7)).unwrap();
        assert!(m.frames.iter().all(|f| *f == m.frames[0]));

        let m = synth_motion_stack(&asset, &bg, &mut rng(8)).unwrap();
        for f in &m.frames {
            assert!(f.data().iter().zip(still.data()).any(|(a, b)| a != b));
        }
    }

    #[test]
    fn examples_are_deterministic_and_self_consistent() {
        let asset = toy_asset(64, 2);
        let bg = textured_background(100, 90, 10);
        let a = make_syn_example(&asset, &bg, 48, &mut rng(11)).unwrap();
        let b = make_syn_example(&asset, &bg, 48, &mut rng(11)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let r = crate::compose::composite_residual(&a.img, &a.fg_gt, &a.alpha_gt, &a.bg_true).unwrap();
        assert!(r.data().iter().all(|&v| v <= 1e-6));
        assert_eq!(a.size(), (48, 48));
    }

    #[test]
    fn empty_crops_skip_the_asset() {
        let mut alpha = Plane::zeros(200, 200);
        alpha.set(0, 0, 1.0);
        let asset = MatteAsset::new("corner", Image::zeros(200, 200), alpha).unwrap();
        let bg = textured_background(64, 64, 1);
        let err = make_syn_example(&asset, &bg, 32, &mut rng(12)).unwrap_err();
        assert!(matches!(err, MattingError::AssetSkipped { .. }));
        assert!(MatteAsset::new("z", Image::zeros(4, 4), Plane::zeros(4, 4)).is_err());
    }

    #[test]
    fn plan_has_distinct_keys_per_pair() {
        let assets: Vec<String> = (0..280).map(|i| format!("a{i}")).collect();
        let bgs: Vec<String> = (0..100).map(|i| format!("b{i}")).collect();
        let plans = plan_dataset(&assets, &bgs, 42);
        let keys: HashSet<_> = plans.iter().map(|p| p.key.clone()).collect();
        assert_eq!(keys.len(), 28_000);
        assert_eq!(plans, plan_dataset(&assets, &bgs, 42));
        assert_ne!(plans[0].seed, plan_dataset(&assets, &bgs, 43)[0].seed);
    }
}
