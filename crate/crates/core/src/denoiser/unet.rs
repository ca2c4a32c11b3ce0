use alloc::vec::Vec;

use super::blocks::{ResBlock, ResTape, TimeEncoder, TimeTape};
use super::DenoiserConfig;
use crate::nn::{
    silu, silu_backward, silu_backward_slice, silu_in_place, silu_slice, upsample_nearest, upsample_nearest_backward, AttentionBlock,
    AttentionTape, Conv3d, GroupNorm, ParamLayout,
};
use crate::{Error, Real, Result, Tensor};

#[derive(Clone, Debug, PartialEq)]
struct EncoderLevel {
    res: ResBlock,
    att: Option<AttentionBlock>,
    down: Option<Conv3d>,
}

#[derive(Clone, Debug, PartialEq)]
struct DecoderLevel {
    res: ResBlock,
    att: Option<AttentionBlock>,
    up: Option<Conv3d>,
}

/// Network topology with parameter offsets; holds no weights.
#[derive(Clone, Debug, PartialEq)]
pub struct UNet {
    config: DenoiserConfig,
    layout: ParamLayout,
    time: TimeEncoder,
    in_conv: Conv3d,
    encoder: Vec<EncoderLevel>,
    mid: ResBlock,
    /// Deepest level first.
    decoder: Vec<DecoderLevel>,
    out_norm: GroupNorm,
    out_conv: Conv3d,
}

struct LevelTape<T> {
    res_in: Tensor<T>,
    res: ResTape<T>,
    att: Option<(Tensor<T>, AttentionTape<T>)>,
    /// Upsampled input of the decoder's up convolution.
    up_in: Option<Tensor<T>>,
}

/// Activations recorded by [`UNet::forward_tape`] for backpropagation.
pub struct Tape<T> {
    time: TimeTape<T>,
    temb_pre: Vec<T>,
    temb: Vec<T>,
    input: Tensor<T>,
    encoder: Vec<LevelTape<T>>,
    skips: Vec<Tensor<T>>,
    mid_in: Tensor<T>,
    mid: ResTape<T>,
    decoder: Vec<LevelTape<T>>,
    out_in: Tensor<T>,
    out_norm: Tensor<T>,
    out_act: Tensor<T>,
}

impl UNet {
    pub fn new(config: &DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let mut layout = ParamLayout::new();
        let widths = config.widths();
        let levels = widths.len();
        let g = config.groups;
        let ted = config.time_embed_dim;
        let time = TimeEncoder::new(&mut layout, "time", ted);
        let in_conv = Conv3d::new(&mut layout, "in_conv", config.in_channels, widths[0], 3, 1, false);
        let mut encoder = Vec::with_capacity(levels);
        let mut prev = widths[0];
        for (l, &c) in widths.iter().enumerate() {
            let name = alloc::format!("enc{l}");
            let res = ResBlock::new(&mut layout, &alloc::format!("{name}.res"), prev, c, ted, g);
            let att = config
                .attention_levels
                .contains(&l)
                .then(|| AttentionBlock::new(&mut layout, &alloc::format!("{name}.att"), c, g));
            let down = (l + 1 < levels).then(|| Conv3d::new(&mut layout, &alloc::format!("{name}.down"), c, c, 3, 2, false));
            encoder.push(EncoderLevel { res, att, down });
            prev = c;
        }
        let mid = ResBlock::new(&mut layout, "mid", prev, prev, ted, g);
        let mut decoder = Vec::with_capacity(levels);
        for l in (0..levels).rev() {
            let c = widths[l];
            let name = alloc::format!("dec{l}");
            let res = ResBlock::new(&mut layout, &alloc::format!("{name}.res"), 2 * c, c, ted, g);
            let att = config
                .attention_levels
                .contains(&l)
                .then(|| AttentionBlock::new(&mut layout, &alloc::format!("{name}.att"), c, g));
            let up = (l > 0).then(|| {
                let k = config.upsample_kernel;
                Conv3d::new(&mut layout, &alloc::format!("{name}.up"), c, widths[l - 1], k, 1, false)
            });
            decoder.push(DecoderLevel { res, att, up });
        }
        let out_norm = GroupNorm::new(&mut layout, "out_norm", widths[0], g);
        let out_conv = Conv3d::new(&mut layout, "out_conv", widths[0], 1, 3, 1, true);
        Ok(Self {
            config: config.clone(),
            layout,
            time,
            in_conv,
            encoder,
            mid,
            decoder,
            out_norm,
            out_conv,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// `(encoder skip shape, shape the decoder expects to concatenate)` per
    /// level, shallowest first, derived from the topology alone.
    pub fn skip_shapes(&self) -> Vec<([usize; 4], [usize; 4])> {
        let r = self.config.resolution;
        let mut enc = Vec::new();
        let mut side = r;
        for lvl in &self.encoder {
            enc.push([lvl.res.cout, side, side, side]);
            if let Some(down) = &lvl.down {
                side = down.out_dims([side; 3])[0];
            }
        }
        // Walk the decoder from the bottom, tracking the running feature shape.
        let mut h = [self.mid.cout, side, side, side];
        let mut dec = alloc::vec![[0; 4]; enc.len()];
        for (i, lvl) in self.decoder.iter().enumerate() {
            let l = enc.len() - 1 - i;
            dec[l] = [lvl.res.cin - h[0], h[1], h[2], h[3]];
            h[0] = lvl.res.cout;
            if let Some(up) = &lvl.up {
                h = [up.cout, 2 * h[1], 2 * h[2], 2 * h[3]];
            }
        }
        enc.into_iter().zip(dec).collect()
    }

    fn check_inputs<T: Real>(&self, p: &[T], input: &Tensor<T>) -> Result<()> {
        if p.len() != self.layout.len() {
            return Err(Error::shape("denoiser parameters", &[self.layout.len()], &[p.len()]));
        }
        let r = self.config.resolution;
        if input.channels() != self.config.in_channels || input.dims() != [r; 3] {
            return Err(Error::shape(
                "denoiser input",
                &[self.config.in_channels, r, r, r],
                &input.shape(),
            ));
        }
        Ok(())
    }

    /// Inference pass: equal to the output of [`UNet::forward_tape`], but
    /// intermediate activations are freed as soon as they are consumed.
    pub fn forward<T: Real>(&self, p: &[T], input: &Tensor<T>, t: usize) -> Result<Tensor<T>> {
        self.check_inputs(p, input)?;
        let (temb_pre, _) = self.time.forward(p, t)?;
        let temb = silu_slice(&temb_pre);
        let mut h = self.in_conv.forward(p, input);
        let mut skips = Vec::with_capacity(self.encoder.len());
        for lvl in &self.encoder {
            h = lvl.res.infer(p, &h, &temb)?;
            if let Some(a) = &lvl.att {
                h = a.forward(p, &h);
            }
            match &lvl.down {
                Some(down) => {
                    let y = down.forward(p, &h);
                    skips.push(core::mem::replace(&mut h, y));
                }
                None => skips.push(h.clone()),
            }
        }
        h = self.mid.infer(p, &h, &temb)?;
        for lvl in &self.decoder {
            let skip = skips.pop().expect("one skip per level");
            h = lvl.res.infer(p, &Tensor::concat(&[&h, &skip])?, &temb)?;
            if let Some(a) = &lvl.att {
                h = a.forward(p, &h);
            }
            if let Some(up) = &lvl.up {
                h = up.forward(p, &upsample_nearest(&h));
            }
        }
        let mut a = self.out_norm.forward(p, &h);
        silu_in_place(a.data_mut());
        Ok(self.out_conv.forward(p, &a))
    }

    pub fn forward_tape<T: Real>(&self, p: &[T], input: &Tensor<T>, t: usize) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_inputs(p, input)?;
        let (temb_pre, time) = self.time.forward(p, t)?;
        let temb = silu_slice(&temb_pre);

        let mut h = self.in_conv.forward(p, input);
        let mut enc_tape = Vec::with_capacity(self.encoder.len());
        let mut skips = Vec::with_capacity(self.encoder.len());
        for lvl in &self.encoder {
            let (y, res) = lvl.res.forward(p, &h, &temb)?;
            let res_in = core::mem::replace(&mut h, y);
            let att = lvl.att.as_ref().map(|a| {
                let (y, tape) = a.forward_tape(p, &h);
                (core::mem::replace(&mut h, y), tape)
            });
            if let Some(down) = &lvl.down {
                let y = down.forward(p, &h);
                skips.push(core::mem::replace(&mut h, y));
            } else {
                skips.push(h.clone());
            }
            enc_tape.push(LevelTape {
                res_in,
                res,
                att,
                up_in: None,
            });
        }
        let (y, mid) = self.mid.forward(p, &h, &temb)?;
        let mid_in = core::mem::replace(&mut h, y);
        let mut dec_tape = Vec::with_capacity(self.decoder.len());
        for (i, lvl) in self.decoder.iter().enumerate() {
            let skip = &skips[skips.len() - 1 - i];
            let res_in = Tensor::concat(&[&h, skip])?;
            let (y, res) = lvl.res.forward(p, &res_in, &temb)?;
            h = y;
            let att = lvl.att.as_ref().map(|a| {
                let (y, tape) = a.forward_tape(p, &h);
                (core::mem::replace(&mut h, y), tape)
            });
            let up_in = lvl.up.as_ref().map(|up| {
                let u = upsample_nearest(&h);
                h = up.forward(p, &u);
                u
            });
            dec_tape.push(LevelTape { res_in, res, att, up_in });
        }
        let out_norm = self.out_norm.forward(p, &h);
        let out_act = silu(&out_norm);
        let out = self.out_conv.forward(p, &out_act);
        Ok((
            out,
            Tape {
                time,
                temb_pre,
                temb,
                input: input.clone(),
                encoder: enc_tape,
                skips,
                mid_in,
                mid,
                decoder: dec_tape,
                out_in: h,
                out_norm,
                out_act,
            },
        ))
    }

    /// Accumulates `∂L/∂params` into `g` given `dy = ∂L/∂output`.
    pub fn backward<T: Real>(&self, p: &[T], tape: &Tape<T>, dy: &Tensor<T>, g: &mut [T]) -> Result<()> {
        if g.len() != self.layout.len() {
            return Err(Error::shape("gradient buffer", &[self.layout.len()], &[g.len()]));
        }
        let r = self.config.resolution;
        if dy.shape() != [1, r, r, r] {
            return Err(Error::shape("output gradient", &[1, r, r, r], &dy.shape()));
        }
        let mut dtemb = alloc::vec![T::zero(); self.config.time_embed_dim];
        let dact = self.out_conv.backward(p, &tape.out_act, dy, g, true).expect("dx requested");
        let dnorm = silu_backward(&tape.out_norm, &dact);
        let mut dh = self.out_norm.backward(p, &tape.out_in, &dnorm, g);

        let mut dskips: Vec<Tensor<T>> = Vec::with_capacity(self.decoder.len());
        for (lvl, lt) in self.decoder.iter().zip(&tape.decoder).rev() {
            if let (Some(up), Some(u)) = (&lvl.up, &lt.up_in) {
                let du = up.backward(p, u, &dh, g, true).expect("dx requested");
                dh = upsample_nearest_backward(&du);
            }
            if let (Some(att), Some((x, at))) = (&lvl.att, &lt.att) {
                dh = att.backward(p, x, at, &dh, g);
            }
            let dcat = lvl.res.backward(p, &lt.res_in, &tape.temb, &lt.res, &dh, g, &mut dtemb);
            let c = dcat.channels() - lvl.res.cout;
            let (dprev, dskip) = dcat.split_channels(c);
            dskips.push(dskip);
            dh = dprev;
        }
        dh = self.mid.backward(p, &tape.mid_in, &tape.temb, &tape.mid, &dh, g, &mut dtemb);
        // The decoder was unwound shallowest level first, so dskips[l] is level l.
        for (l, (lvl, lt)) in self.encoder.iter().zip(&tape.encoder).enumerate().rev() {
            let dskip = &dskips[l];
            if let Some(down) = &lvl.down {
                dh = down.backward(p, &tape.skips[l], &dh, g, true).expect("dx requested");
            }
            dh.add_assign(dskip);
            if let (Some(att), Some((x, at))) = (&lvl.att, &lt.att) {
                dh = att.backward(p, x, at, &dh, g);
            }
            dh = lvl.res.backward(p, &lt.res_in, &tape.temb, &lt.res, &dh, g, &mut dtemb);
        }
        self.in_conv.backward(p, &tape.input, &dh, g, false);
        let dpre = silu_backward_slice(&tape.temb_pre, &dtemb);
        self.time.backward(p, &tape.time, &dpre, g);
        Ok(())
    }
}
