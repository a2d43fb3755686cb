//! Turning raw captures into network inputs.
//!
//! Segmentation refinement, background-plate alignment, motion cues,
//! subject-centred cropping and trimap generation for baseline matting
//! methods.

mod blur;
mod crop;
mod homography;
mod morphology;
mod motion;
mod trimap;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use crop::{crop_around_subject, subject_bbox, CropWindow};
pub use homography::{
    estimate_homography, estimate_homography_with, warp_background, warp_image, warp_plane,
    Homography, HomographyFit,
    RansacParams,
};
pub use morphology::{binarize, dilate, erode};
pub use motion::{build_motion_stack, MotionStack, DEFAULT_MOTION_INTERVAL};
pub use trimap::{auto_trimap, trimap_from_alpha, Trimap, TrimapLabel};

use crate::raster::{ProbMap, SoftSegmentation};

/// Erosion steps applied to the thresholded segmentation.
pub const REFINE_ERODE_STEPS: usize = 5;
/// Dilation steps applied after erosion.
pub const REFINE_DILATE_STEPS: usize = 10;
/// Gaussian blur applied last.
pub const REFINE_BLUR_SIGMA: f64 = 5.0;

/// Soft segmentation cue from a person-probability map: threshold at 0.5,
/// erode 5 steps, dilate 10 steps, blur with σ = 5.
pub fn refine_segmentation(prob: &ProbMap) -> SoftSegmentation {
    let eroded = erode(prob, REFINE_ERODE_STEPS);
    let dilated = dilate(&eroded, REFINE_DILATE_STEPS);
    gaussian_blur(&dilated, REFINE_BLUR_SIGMA).expect("blur sigma is positive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Plane;

    #[test]
    fn refine_zero_and_one() {
        assert_eq!(refine_segmentation(&Plane::zeros(40, 30)), Plane::zeros(40, 30));
        let s = refine_segmentation(&Plane::filled(40, 30, 1.0));
        assert!(s.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn refine_rectangle_grows_by_five_steps_before_blur() {
        let prob = Plane::from_fn(80, 80, |y, x| {
            if (30..50).contains(&y) && (25..55).contains(&x) { 0.9 } else { 0.1 }
        });
        // The primitive chain, each step checked elsewhere.
        let pre_blur = dilate(&erode(&prob, 5), 10);
        // Net +5 L1 growth of a 20x30 rectangle: the row through the middle
        // spans 5 extra pixels on each side.
        let row: Vec<f32> = (0..80).map(|x| pre_blur.get(40, x)).collect();
        let on: Vec<usize> = (0..80).filter(|&x| row[x] > 0.5).collect();
        assert_eq!((on[0], *on.last().unwrap()), (20, 59));
        let s = refine_segmentation(&prob);
        assert_eq!(s, gaussian_blur(&pre_blur, 5.0).unwrap());
        assert!(s.get(40, 40) > 0.99);
        assert!(s.get(40, 20) > 0.3 && s.get(40, 20) < 0.7);
        assert!(s.get(2, 2) < 1e-3);
    }
}
