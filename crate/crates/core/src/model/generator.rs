use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{apply_running_stats, Conv, ConvBn, Ctx, Entry, ResBlock};
use super::{tensor_to_image, tensor_to_plane, InputBatch, MattingInput, NetConfig};
use crate::error::{MattingError, Result};
use crate::nn::ops::{tanh, tanh_backward, upsample2x, upsample2x_backward, BatchNormStats, ConvGeom};
use crate::nn::{ParamId, ParamStore, Scalar, Tensor};
use crate::raster::{AlphaMatte, Image};

/// `(label, [c, h, w])` of every intermediate blob, in execution order.
pub type ShapeLog = Vec<(String, Vec<usize>)>;

/// The four input encoders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoder {
    Image,
    Background,
    Segmentation,
    Motion,
}

impl Encoder {
    pub const ALL: [Encoder; 4] = [Encoder::Image, Encoder::Background, Encoder::Segmentation, Encoder::Motion];

    pub fn in_channels(self) -> usize {
        match self {
            Encoder::Image | Encoder::Background => 3,
            Encoder::Segmentation => 1,
            Encoder::Motion => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Encoder::Image => "enc_img",
            Encoder::Background => "enc_bg",
            Encoder::Segmentation => "enc_seg",
            Encoder::Motion => "enc_motion",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

const SELECTOR_NAMES: [&str; 3] = ["sel_bg", "sel_seg", "sel_motion"];

#[derive(Clone, Debug)]
struct Layout {
    enc: [[ConvBn; 3]; 4],
    sel: [ConvBn; 3],
    comb: ConvBn,
    shared: Vec<ResBlock>,
    alpha_res: Vec<ResBlock>,
    fg_res: Vec<ResBlock>,
    alpha_dec: [ConvBn; 2],
    alpha_out: Conv,
    fg_dec: [ConvBn; 2],
    fg_out: Conv,
}

/// Generator outputs as `[n, 3, h, w]` and `[n, 1, h, w]` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct GenOutput<T> {
    pub fg: Tensor<T>,
    pub alpha: Tensor<T>,
}

impl<T: Scalar> GenOutput<T> {
    pub fn len(&self) -> usize {
        self.alpha.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fg_image(&self, n: usize) -> Image {
        tensor_to_image(&self.fg, n)
    }

    pub fn alpha_matte(&self, n: usize) -> AlphaMatte {
        tensor_to_plane(&self.alpha, n, 0)
    }
}

/// Intermediate values recorded by a training forward pass.
#[derive(Debug)]
pub struct GenTape<T> {
    entries: Vec<Entry<T>>,
    stats: Vec<(ParamId, ParamId, BatchNormStats<T>)>,
}

/// The matting network `G`.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    cfg: NetConfig,
    params: ParamStore<T>,
    buffers: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> Generator<T> {
    /// Deterministic random initialisation. Convolutions get He-normal
    /// weights; normalisation scales start at 1 and offsets at 0.
    pub fn init(cfg: &NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let mut b = ParamStore::new();
        let (base, enc, sel) = (cfg.base_channels, cfg.enc_channels, cfg.selector_channels);
        let s1 = |pad| ConvGeom::new(1, pad);
        let s2 = ConvGeom::new(2, 1);

        let mut encoder = |e: Encoder, p: &mut ParamStore<T>, b: &mut ParamStore<T>| {
            let n = e.name();
            [
                ConvBn::register(p, b, &format!("{n}.0"), e.in_channels(), base, 7, s1(3), true, &mut rng),
                ConvBn::register(p, b, &format!("{n}.1"), base, 2 * base, 3, s2, true, &mut rng),
                ConvBn::register(p, b, &format!("{n}.2"), 2 * base, enc, 3, s2, true, &mut rng),
            ]
        };
        let enc_layers = [
            encoder(Encoder::Image, &mut p, &mut b),
            encoder(Encoder::Background, &mut p, &mut b),
            encoder(Encoder::Segmentation, &mut p, &mut b),
            encoder(Encoder::Motion, &mut p, &mut b),
        ];
        let sel_layers = SELECTOR_NAMES.map(|n| ConvBn::register(&mut p, &mut b, n, 2 * enc, sel, 1, s1(0), true, &mut rng));
        let comb = ConvBn::register(&mut p, &mut b, "comb", enc + 3 * sel, enc, 1, s1(0), true, &mut rng);
        let shared = (0..cfg.shared_resblocks)
            .map(|i| ResBlock::register(&mut p, &mut b, &format!("res_shared.{i}"), enc, &mut rng))
            .collect();
        let alpha_res = (0..cfg.branch_resblocks)
            .map(|i| ResBlock::register(&mut p, &mut b, &format!("res_alpha.{i}"), enc, &mut rng))
            .collect();
        let fg_res = (0..cfg.branch_resblocks)
            .map(|i| ResBlock::register(&mut p, &mut b, &format!("res_fg.{i}"), enc, &mut rng))
            .collect();
        let alpha_dec = [
            ConvBn::register(&mut p, &mut b, "dec_alpha.0", enc, 2 * base, 3, s1(1), true, &mut rng),
            ConvBn::register(&mut p, &mut b, "dec_alpha.1", 2 * base, base, 3, s1(1), true, &mut rng),
        ];
        let alpha_out = Conv::register(&mut p, "dec_alpha.out", base, 1, 7, s1(3), 0.01, 0.0, &mut rng);
        let fg_dec = [
            ConvBn::register(&mut p, &mut b, "dec_fg.0", enc, 2 * base, 3, s1(1), true, &mut rng),
            ConvBn::register(&mut p, &mut b, "dec_fg.1", 4 * base, base, 3, s1(1), true, &mut rng),
        ];
        // Start the foreground near mid-grey so the output clamp is inactive.
        let fg_out = Conv::register(&mut p, "dec_fg.out", base, 3, 7, s1(3), 0.01, 0.5, &mut rng);
        Ok(Generator {
            cfg: cfg.clone(),
            params: p,
            buffers: b,
            layout: Layout {
                enc: enc_layers,
                sel: sel_layers,
                comb,
                shared,
                alpha_res,
                fg_res,
                alpha_dec,
                alpha_out,
                fg_dec,
                fg_out,
            },
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// Learnable tensors keyed by layer name.
    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Batch-norm running statistics keyed by layer name.
    pub fn buffers(&self) -> &ParamStore<T> {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.buffers
    }

    /// A zeroed gradient store matching [`Self::params`].
    pub fn zero_grads(&self) -> ParamStore<T> {
        self.params.zeros_like()
    }

    /// Digest over parameters and running statistics.
    pub fn checksum(&self) -> String {
        format!("{}:{}", self.params.checksum(), self.buffers.checksum())
    }

    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            buffers: self.buffers.cast(),
            layout: self.layout.clone(),
        }
    }

    fn check_input(&self, e: Encoder, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4();
        if c != e.in_channels() {
            return Err(MattingError::contract(format!(
                "{} expects {} channels, got {c}",
                e.name(),
                e.in_channels()
            )));
        }
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(MattingError::contract(format!(
                "input size {h}x{w} is not a positive multiple of 4"
            )));
        }
        Ok(())
    }

    /// Runs encoder `which` in inference mode. Output is `[n, enc, h/4, w/4]`.
    pub fn encode(&self, which: Encoder, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(which, x)?;
        Ok(self.run_encoder(which, x, &mut Ctx::eval(None)).1)
    }

    /// Selectors and combinator in inference mode.
    pub fn cs_block(&self, img: &Tensor<T>, bg: &Tensor<T>, seg: &Tensor<T>, motion: &Tensor<T>) -> Result<Tensor<T>> {
        for f in [bg, seg, motion] {
            if f.shape() != img.shape() {
                return Err(MattingError::contract(format!(
                    "feature shapes differ: {:?} vs {:?}",
                    f.shape(),
                    img.shape()
                )));
            }
        }
        if img.shape()[1] != self.cfg.enc_channels {
            return Err(MattingError::contract("feature channels differ from enc_channels"));
        }
        Ok(self.run_cs_block(img, [bg, seg, motion], &mut Ctx::eval(None)))
    }

    fn run_encoder(&self, which: Encoder, x: &Tensor<T>, ctx: &mut Ctx<'_, T>) -> (Tensor<T>, Tensor<T>) {
        let layers = &self.layout.enc[which.index()];
        let (p, b) = (&self.params, &self.buffers);
        let h0 = layers[0].forward(p, b, x, ctx);
        ctx.record(&format!("{}.0", which.name()), &h0);
        let h1 = layers[1].forward(p, b, &h0, ctx);
        ctx.record(&format!("{}.1", which.name()), &h1);
        let h2 = layers[2].forward(p, b, &h1, ctx);
        ctx.record(&format!("{}.2", which.name()), &h2);
        (h1, h2)
    }

    fn run_cs_block(&self, img: &Tensor<T>, priors: [&Tensor<T>; 3], ctx: &mut Ctx<'_, T>) -> Tensor<T> {
        let (p, b) = (&self.params, &self.buffers);
        let mut selected = Vec::with_capacity(3);
        for (i, prior) in priors.iter().enumerate() {
            let cat = Tensor::concat_channels(&[img, prior]);
            ctx.record(&format!("{}.in", SELECTOR_NAMES[i]), &cat);
            let s = self.layout.sel[i].forward(p, b, &cat, ctx);
            ctx.record(SELECTOR_NAMES[i], &s);
            selected.push(s);
        }
        let cat = Tensor::concat_channels(&[img, &selected[0], &selected[1], &selected[2]]);
        ctx.record("comb.in", &cat);
        let out = self.layout.comb.forward(p, b, &cat, ctx);
        ctx.record("comb", &out);
        out
    }

    fn run(&self, x: &InputBatch<T>, ctx: &mut Ctx<'_, T>) -> Result<GenOutput<T>> {
        let inputs = [&x.image, &x.background, &x.segmentation, &x.motion];
        for (e, t) in Encoder::ALL.iter().zip(inputs) {
            self.check_input(*e, t)?;
            if t.shape()[0] != x.image.shape()[0] || t.shape()[2..] != x.image.shape()[2..] {
                return Err(MattingError::contract("input tensors differ in batch or spatial size"));
            }
        }
        let (p, b) = (&self.params, &self.buffers);
        let (skip, f_img) = self.run_encoder(Encoder::Image, &x.image, ctx);
        let (_, f_bg) = self.run_encoder(Encoder::Background, &x.background, ctx);
        let (_, f_seg) = self.run_encoder(Encoder::Segmentation, &x.segmentation, ctx);
        let (_, f_mot) = self.run_encoder(Encoder::Motion, &x.motion, ctx);
        let mut h = self.run_cs_block(&f_img, [&f_bg, &f_seg, &f_mot], ctx);
        drop((f_bg, f_seg, f_mot, f_img));
        for (i, blk) in self.layout.shared.iter().enumerate() {
            h = blk.forward(p, b, &h, ctx);
            ctx.record(&format!("res_shared.{i}"), &h);
        }
        let mut ha = h.clone();
        for (i, blk) in self.layout.alpha_res.iter().enumerate() {
            ha = blk.forward(p, b, &ha, ctx);
            ctx.record(&format!("res_alpha.{i}"), &ha);
        }
        let mut hf = h;
        for (i, blk) in self.layout.fg_res.iter().enumerate() {
            hf = blk.forward(p, b, &hf, ctx);
            ctx.record(&format!("res_fg.{i}"), &hf);
        }

        let d = self.layout.alpha_dec[0].forward(p, b, &upsample2x(&ha), ctx);
        ctx.record("dec_alpha.0", &d);
        let d = self.layout.alpha_dec[1].forward(p, b, &upsample2x(&d), ctx);
        ctx.record("dec_alpha.1", &d);
        let t = tanh(&self.layout.alpha_out.forward(p, &d, ctx));
        let alpha = t.map(|v| (v + T::one()) * T::lit(0.5));
        ctx.record("alpha", &alpha);
        if ctx.train {
            ctx.tape.push(Entry::Tanh { y: t });
        }

        let d = self.layout.fg_dec[0].forward(p, b, &upsample2x(&hf), ctx);
        ctx.record("dec_fg.0", &d);
        let cat = Tensor::concat_channels(&[&d, &skip]);
        ctx.record("dec_fg.skip", &cat);
        let d = self.layout.fg_dec[1].forward(p, b, &upsample2x(&cat), ctx);
        ctx.record("dec_fg.1", &d);
        let z = self.layout.fg_out.forward(p, &d, ctx);
        let fg = z.map(|v| v.max(T::zero()).min(T::one()));
        ctx.record("fg", &fg);
        if ctx.train {
            ctx.tape.push(Entry::Clamp { z });
        }
        Ok(GenOutput { fg, alpha })
    }

    /// Inference with running normalisation statistics.
    pub fn forward(&self, x: &InputBatch<T>) -> Result<GenOutput<T>> {
        self.run(x, &mut Ctx::eval(None))
    }

    /// Inference that also records the shape of every intermediate blob.
    pub fn forward_logged(&self, x: &InputBatch<T>, log: &mut ShapeLog) -> Result<GenOutput<T>> {
        self.run(x, &mut Ctx::eval(Some(log)))
    }

    /// Inference on a single input; returns `(F, α)`.
    pub fn predict(&self, x: &MattingInput) -> Result<(Image, AlphaMatte)> {
        let out = self.forward(&InputBatch::from_inputs(&[x])?)?;
        Ok((out.fg_image(0), out.alpha_matte(0)))
    }

    /// Training-mode pass with batch statistics. Parameters and running
    /// statistics are left untouched.
    pub fn train_pass(&self, x: &InputBatch<T>) -> Result<(GenOutput<T>, GenTape<T>)> {
        let mut ctx = Ctx::train();
        let out = self.run(x, &mut ctx)?;
        Ok((
            out,
            GenTape {
                entries: ctx.tape,
                stats: ctx.stats,
            },
        ))
    }

    /// Folds the batch statistics of a training pass into the running
    /// averages (momentum 0.1).
    pub fn update_running_stats(&mut self, tape: &mut GenTape<T>) {
        apply_running_stats(&mut self.buffers, std::mem::take(&mut tape.stats));
    }

    /// Replaces the running statistics with the average batch statistics of
    /// training-mode passes over `batches` (weights stay fixed). One batch
    /// holding a whole dataset gives that dataset's exact statistics.
    pub fn recalibrate_bn(&mut self, batches: &[InputBatch<T>]) -> Result<()> {
        if batches.is_empty() {
            return Err(MattingError::contract("batch-norm recalibration needs at least one batch"));
        }
        let mut sums: Vec<(ParamId, ParamId, Vec<T>, Vec<T>)> = Vec::new();
        for b in batches {
            let (_, tape) = self.train_pass(b)?;
            if sums.is_empty() {
                sums = tape
                    .stats
                    .into_iter()
                    .map(|(m, v, s)| (m, v, s.mean, s.var_unbiased))
                    .collect();
            } else {
                for ((_, _, ms, vs), (_, _, s)) in sums.iter_mut().zip(tape.stats) {
                    ms.iter_mut().zip(&s.mean).for_each(|(a, &b)| *a = *a + b);
                    vs.iter_mut().zip(&s.var_unbiased).for_each(|(a, &b)| *a = *a + b);
                }
            }
        }
        let inv = T::one() / T::lit(batches.len() as f64);
        for (m, v, ms, vs) in sums {
            for (r, s) in self.buffers.get_mut(m).data_mut().iter_mut().zip(ms) {
                *r = s * inv;
            }
            for (r, s) in self.buffers.get_mut(v).data_mut().iter_mut().zip(vs) {
                *r = s * inv;
            }
        }
        Ok(())
    }

    /// [`Self::train_pass`] followed by [`Self::update_running_stats`].
    pub fn forward_train(&mut self, x: &InputBatch<T>) -> Result<(GenOutput<T>, GenTape<T>)> {
        let (out, mut tape) = self.train_pass(x)?;
        self.update_running_stats(&mut tape);
        Ok((out, tape))
    }

    /// Back-propagates `dL/dF` and `dL/dα` through a recorded pass,
    /// accumulating parameter gradients into `grads`.
    pub fn backward(&self, tape: GenTape<T>, dfg: &Tensor<T>, dalpha: &Tensor<T>, grads: &mut ParamStore<T>) {
        assert!(grads.same_layout(&self.params), "gradient store layout differs");
        let mut ctx = Ctx::train();
        ctx.tape = tape.entries;
        let p = &self.params;
        let l = &self.layout;

        let Entry::Clamp { z } = ctx.pop() else {
            panic!("tape mismatch: expected the foreground clamp");
        };
        let dz = z.zip_map(dfg, |v, g| if v >= T::zero() && v <= T::one() { g } else { T::zero() });
        let dd = l.fg_out.backward(p, ctx.pop(), &dz, grads);
        let du = l.fg_dec[1].backward(p, ctx.pop(), &dd, grads, true).expect("requested");
        let dcat = upsample2x_backward(&du);
        let two_base = 2 * self.cfg.base_channels;
        let mut parts = dcat.split_channels(&[two_base, two_base]).into_iter();
        let (dd0, dskip) = (parts.next().expect("two parts"), parts.next().expect("two parts"));
        let du = l.fg_dec[0].backward(p, ctx.pop(), &dd0, grads, true).expect("requested");
        let mut dhf = upsample2x_backward(&du);

        let Entry::Tanh { y: t } = ctx.pop() else {
            panic!("tape mismatch: expected the alpha tanh");
        };
        let dt = dalpha.map(|g| g * T::lit(0.5));
        let dz = tanh_backward(&t, &dt);
        let dd = l.alpha_out.backward(p, ctx.pop(), &dz, grads);
        let du = l.alpha_dec[1].backward(p, ctx.pop(), &dd, grads, true).expect("requested");
        let dd = upsample2x_backward(&du);
        let du = l.alpha_dec[0].backward(p, ctx.pop(), &dd, grads, true).expect("requested");
        let mut dha = upsample2x_backward(&du);

        for blk in l.fg_res.iter().rev() {
            dhf = blk.backward(p, &mut ctx, &dhf, grads);
        }
        for blk in l.alpha_res.iter().rev() {
            dha = blk.backward(p, &mut ctx, &dha, grads);
        }
        let mut dh = dha;
        dh.add_assign(&dhf);
        for blk in l.shared.iter().rev() {
            dh = blk.backward(p, &mut ctx, &dh, grads);
        }

        let (enc, sel) = (self.cfg.enc_channels, self.cfg.selector_channels);
        let dcomb = l.comb.backward(p, ctx.pop(), &dh, grads, true).expect("requested");
        let mut parts = dcomb.split_channels(&[enc, sel, sel, sel]).into_iter();
        let mut d_img = parts.next().expect("four parts");
        let d_sel: Vec<Tensor<T>> = parts.collect();
        let mut d_priors: Vec<Tensor<T>> = Vec::with_capacity(3);
        for i in (0..3).rev() {
            let dcat = l.sel[i].backward(p, ctx.pop(), &d_sel[i], grads, true).expect("requested");
            let mut parts = dcat.split_channels(&[enc, enc]).into_iter();
            d_img.add_assign(&parts.next().expect("two parts"));
            d_priors.push(parts.next().expect("two parts"));
        }
        // d_priors is ordered motion, segmentation, background.
        for (e, d) in [Encoder::Motion, Encoder::Segmentation, Encoder::Background].into_iter().zip(d_priors) {
            let layers = &l.enc[e.index()];
            let d = layers[2].backward(p, ctx.pop(), &d, grads, true).expect("requested");
            let d = layers[1].backward(p, ctx.pop(), &d, grads, true).expect("requested");
            layers[0].backward(p, ctx.pop(), &d, grads, false);
        }
        let layers = &l.enc[Encoder::Image.index()];
        let mut d = layers[2].backward(p, ctx.pop(), &d_img, grads, true).expect("requested");
        d.add_assign(&dskip);
        let d = layers[1].backward(p, ctx.pop(), &d, grads, true).expect("requested");
        layers[0].backward(p, ctx.pop(), &d, grads, false);
        assert!(ctx.tape.is_empty(), "tape not fully consumed");
    }
}
