use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::rng::{Purpose, SeedStream};

fn random_input<T: Real>(config: &DenoiserConfig, seed: u64) -> Tensor<T> {
    let r = config.resolution;
    let mut s = SeedStream::new(seed).substream(Purpose::Auxiliary, 0, 0);
    Tensor::from_vec(config.in_channels, [r; 3], s.normal_vec(config.in_channels * r * r * r)).unwrap()
}

/// Closed-form parameter count, written independently of the layer code.
fn expected_param_count(c: &DenoiserConfig) -> usize {
    let ted = c.time_embed_dim;
    let conv = |ci: usize, co: usize, k: usize| co * ci * k * k * k + co;
    let gn = |ch: usize| 2 * ch;
    let res = |ci: usize, co: usize| {
        gn(ci) + conv(ci, co, 3) + ted * co + co + gn(co) + conv(co, co, 3) + if ci != co { conv(ci, co, 1) } else { 0 }
    };
    let att = |ch: usize| gn(ch) + 4 * (ch * ch + ch);
    let w: Vec<usize> = c.channel_multipliers.iter().map(|m| m * c.base_width).collect();
    let levels = w.len();
    let mut n = 2 * (ted * ted + ted) + conv(c.in_channels, w[0], 3);
    let mut prev = w[0];
    for (l, &ch) in w.iter().enumerate() {
        n += res(prev, ch);
        if c.attention_levels.contains(&l) {
            n += att(ch);
        }
        if l + 1 < levels {
            n += conv(ch, ch, 3);
        }
        prev = ch;
    }
    n += res(prev, prev);
    for l in (0..levels).rev() {
        n += res(2 * w[l], w[l]);
        if c.attention_levels.contains(&l) {
            n += att(w[l]);
        }
        if l > 0 {
            n += conv(w[l], w[l - 1], c.upsample_kernel);
        }
    }
    n + gn(w[0]) + conv(w[0], 1, 3)
}

#[test]
fn golden_parameter_counts() {
    let tiny = UNet::new(&DenoiserConfig::tiny()).unwrap();
    assert_eq!(tiny.layout().len(), 4013);
    assert_eq!(expected_param_count(&DenoiserConfig::tiny()), 4013);
    let desk = UNet::new(&DenoiserConfig::desk()).unwrap();
    assert_eq!(desk.layout().len(), 992_769);
    let wide_up = DenoiserConfig { upsample_kernel: 3, ..DenoiserConfig::desk() };
    // Two upsampling convolutions, 64->32 and 32->16, grow from 1 to 27 taps.
    assert_eq!(UNet::new(&wide_up).unwrap().layout().len(), 992_769 + 26 * (64 * 32 + 32 * 16));
    for cfg in config_grid() {
        assert_eq!(UNet::new(&cfg).unwrap().layout().len(), expected_param_count(&cfg));
    }
}

fn config_grid() -> Vec<DenoiserConfig> {
    let mut out = Vec::new();
    for mults in [vec![1], vec![1, 2], vec![1, 1, 2], vec![2, 3, 4]] {
        for res in [4usize, 8] {
            if res % (1 << (mults.len() - 1)) != 0 {
                continue;
            }
            for att in [vec![], vec![0], vec![mults.len() - 1]] {
                for (in_channels, uk) in [(2, 3), (3, 1)] {
                    out.push(DenoiserConfig {
                        resolution: res,
                        in_channels,
                        base_width: 2,
                        channel_multipliers: mults.clone(),
                        attention_levels: att.clone(),
                        time_embed_dim: 4,
                        groups: 2,
                        upsample_kernel: uk,
                    });
                }
            }
        }
    }
    out
}

#[test]
fn skip_shapes_match_across_config_grid() {
    for cfg in config_grid() {
        let net = UNet::new(&cfg).unwrap();
        let shapes = net.skip_shapes();
        assert_eq!(shapes.len(), cfg.levels());
        for (l, (enc, dec)) in shapes.iter().enumerate() {
            assert_eq!(enc, dec, "level {l} of {cfg:?}");
            assert_eq!(enc[1], cfg.resolution >> l);
        }
        // The real forward pass concatenates exactly these tensors.
        let p: Vec<f64> = net.layout().randomize(1);
        let out = net.forward(&p, &random_input(&cfg, 2), 3).unwrap();
        assert_eq!(out.shape(), [1, cfg.resolution, cfg.resolution, cfg.resolution]);
    }
}

#[test]
fn inference_pass_matches_taped_pass() {
    for cfg in config_grid() {
        let net = UNet::new(&cfg).unwrap();
        let p: Vec<f32> = net.layout().randomize(5);
        let x = random_input(&cfg, 6);
        assert_eq!(net.forward(&p, &x, 9).unwrap(), net.forward_tape(&p, &x, 9).unwrap().0, "{cfg:?}");
    }
}

#[test]
fn desk_shape_contract_and_determinism() {
    let cfg = DenoiserConfig::desk();
    let net = Denoiser::<f32>::random(&cfg, 7).unwrap();
    let x = random_input::<f32>(&cfg, 1);
    let a = net.predict_noise(&x, 5).unwrap();
    assert_eq!(a.shape(), [1, 32, 32, 32]);
    let b = net.predict_noise(&x, 5).unwrap();
    assert_eq!(a, b);
    let c = net.predict_noise(&x, 6).unwrap();
    let diff = a.data().iter().zip(c.data()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
    assert!(diff > 0.0);
}

#[test]
fn fresh_network_predicts_zero() {
    let cfg = DenoiserConfig::tiny();
    let net = Denoiser::<f64>::new(&cfg, 3).unwrap();
    let out = net.forward(&random_input(&cfg, 1), 4).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn input_validation() {
    let cfg = DenoiserConfig::tiny();
    let net = Denoiser::<f32>::random(&cfg, 3).unwrap();
    let wrong = Tensor::<f32>::zeros(2, [8, 8, 8]);
    assert!(matches!(net.predict_noise(&wrong, 1), Err(Error::Shape { .. })));
    let wrong = Tensor::<f32>::zeros(3, [8, 8, 4]);
    assert!(matches!(net.predict_noise(&wrong, 1), Err(Error::Shape { .. })));
    let mut bad = net.clone();
    bad.params_mut()[0] = f32::NAN;
    let x = random_input::<f32>(&cfg, 1);
    assert!(matches!(bad.predict_noise(&x, 2), Err(Error::NumericHealth { step: Some(2), .. })));
}

#[test]
fn invalid_configs_name_the_field() {
    let field = |c: DenoiserConfig| match c.validate() {
        Err(Error::Config { field, .. }) => field,
        other => panic!("expected config error, got {other:?}"),
    };
    let base = DenoiserConfig::desk();
    assert_eq!(field(DenoiserConfig { resolution: 30, ..base.clone() }), "resolution");
    assert_eq!(field(DenoiserConfig { in_channels: 1, ..base.clone() }), "in_channels");
    assert_eq!(field(DenoiserConfig { attention_levels: vec![3], ..base.clone() }), "attention_levels");
    assert_eq!(field(DenoiserConfig { time_embed_dim: 63, ..base.clone() }), "time_embed_dim");
    assert_eq!(field(DenoiserConfig { groups: 5, ..base.clone() }), "groups");
    assert_eq!(field(DenoiserConfig { upsample_kernel: 2, ..base.clone() }), "upsample_kernel");
    assert_eq!(field(DenoiserConfig { channel_multipliers: vec![], ..base }), "channel_multipliers");
}

/// End-to-end finite-difference check on the tiny network.
#[test]
fn end_to_end_gradient() {
    let cfg = DenoiserConfig::tiny();
    let net = UNet::new(&cfg).unwrap();
    let p: Vec<f64> = net.layout().randomize(11);
    let x = random_input::<f64>(&cfg, 12);
    let mut s = SeedStream::new(13).substream(Purpose::Auxiliary, 0, 0);
    let r: Vec<f64> = s.normal_vec(512);
    let loss = |p: &[f64]| -> f64 { net.forward(p, &x, 9).unwrap().data().iter().zip(&r).map(|(a, b)| a * b).sum() };
    let (_, tape) = net.forward_tape(&p, &x, 9).unwrap();
    let mut g = vec![0.0; p.len()];
    net.backward(&p, &tape, &Tensor::from_vec(1, [8; 3], r.clone()).unwrap(), &mut g).unwrap();
    let mut checked = 0;
    for _ in 0..40 {
        let i = s.below(p.len() as u64) as usize;
        let h = 1e-5;
        let mut pp = p.clone();
        pp[i] += h;
        let mut pm = p.clone();
        pm[i] -= h;
        let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
        assert!(rel < 1e-3, "param {i} ({}): fd {fd} analytic {}", spec_name(&net, i), g[i]);
        checked += 1;
    }
    assert!(checked >= 20);
    // Every parameter group receives some gradient.
    for spec in net.layout().specs() {
        assert!(spec.range().of(&g).iter().any(|&v| v != 0.0), "{} has zero gradient", spec.name);
    }
}

/// Same check on a two-level network with attention on both levels, which
/// exercises down/up sampling and skip routing.
#[test]
fn two_level_gradient() {
    let cfg = DenoiserConfig {
        resolution: 4,
        in_channels: 2,
        base_width: 2,
        channel_multipliers: vec![1, 2],
        attention_levels: vec![0, 1],
        time_embed_dim: 4,
        groups: 2,
        upsample_kernel: 3,
    };
    let net = UNet::new(&cfg).unwrap();
    let p: Vec<f64> = net.layout().randomize(21);
    let x = random_input::<f64>(&cfg, 22);
    let mut s = SeedStream::new(23).substream(Purpose::Auxiliary, 0, 0);
    let r: Vec<f64> = s.normal_vec(64);
    let loss = |p: &[f64]| -> f64 { net.forward(p, &x, 2).unwrap().data().iter().zip(&r).map(|(a, b)| a * b).sum() };
    let (_, tape) = net.forward_tape(&p, &x, 2).unwrap();
    let mut g = vec![0.0; p.len()];
    net.backward(&p, &tape, &Tensor::from_vec(1, [4; 3], r.clone()).unwrap(), &mut g).unwrap();
    for spec in net.layout().specs() {
        for i in spec.range().offset..spec.range().offset + spec.len().min(3) {
            let h = 1e-5;
            let mut pp = p.clone();
            pp[i] += h;
            let mut pm = p.clone();
            pm[i] -= h;
            let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-3, "{}[{}]: fd {fd} analytic {}", spec.name, i - spec.offset, g[i]);
        }
    }
}

fn spec_name(net: &UNet, i: usize) -> &str {
    net.layout()
        .specs()
        .iter()
        .find(|s| i >= s.offset && i < s.offset + s.len())
        .map(|s| s.name.as_str())
        .unwrap_or("?")
}
