mod composite;
mod evaluate;
mod matte;
mod synth;
mod toy;
mod train;

pub use composite::{cmd_composite, parse_color};
pub use evaluate::{cmd_evaluate, EvalReport, FrameScore, EVAL_SIZE};
pub use matte::cmd_matte;
pub use synth::{cmd_synth_dataset, SynthSummary};
pub use toy::{cmd_toy_data, ToyDataOptions};
pub use train::{cmd_train, TrainPhase};

use bgmatte_core::Image;

/// Centre-crops `img` to the target aspect ratio and resizes it to
/// `(height, width)`. Returns whether anything changed.
pub fn fit_background(img: &Image, height: usize, width: usize) -> (Image, bool) {
    if img.size() == (height, width) {
        return (img.clone(), false);
    }
    let (h, w) = img.size();
    // Largest centred window with the target aspect ratio.
    let (ch, cw) = if h * width > w * height {
        ((w * height / width).max(1), w)
    } else {
        (h, (h * width / height).max(1))
    };
    let cropped = img
        .crop((h - ch) / 2, (w - cw) / 2, ch, cw)
        .expect("window lies inside the image");
    (cropped.resize(height, width), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_keeps_matching_size_and_crops_to_aspect() {
        let img = Image::from_fn(4, 8, |_, x| [x as f32 / 7.0, 0.0, 0.0]);
        assert_eq!(fit_background(&img, 4, 8), (img.clone(), false));
        // Square target takes the centre 4x4 block: columns 2..6.
        let (sq, changed) = fit_background(&img, 4, 4);
        assert!(changed);
        assert_eq!(sq.pixel(0, 0)[0], 2.0 / 7.0);
        assert_eq!(sq.pixel(0, 3)[0], 5.0 / 7.0);
        let (big, _) = fit_background(&img, 8, 16);
        assert_eq!(big.size(), (8, 16));
    }
}
