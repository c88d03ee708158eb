//! U-Net definition: configuration, parameter layout, initialization, and
//! the forward/backward passes.
//!
//! The encoder alternates a same-padded convolution (LeakyReLU) with
//! decimation by two; each pre-decimation activation is kept as a skip.
//! After a bottleneck convolution the decoder mirrors the path: linear
//! two-times upsampling, concatenation with the matching skip, and a
//! narrower convolution. A final width-1 linear convolution collapses the
//! channels to the single fused output. All parameters live in one flat
//! `Vec<f64>` addressed through a named [`Layout`], which keeps the
//! optimizer, checkpoints, and gradient checks trivially aligned.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Number of down/up levels.
    pub depth: usize,
    /// Channels after the first convolution; doubles per level.
    pub base_channels: usize,
    /// Kernel width on the encoder and bottleneck.
    pub down_kernel: usize,
    /// Kernel width on the decoder.
    pub up_kernel: usize,
    /// Samples per training window.
    pub window_len: usize,
    /// LeakyReLU negative-side slope.
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            depth: 4,
            base_channels: 32,
            down_kernel: 15,
            up_kernel: 5,
            window_len: 1024,
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.depth == 0 || self.base_channels == 0 {
            return Err(Error::InvalidConfig(
                "channels, depth and base width must be positive".into(),
            ));
        }
        if self.down_kernel % 2 == 0 || self.up_kernel % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "kernels must be odd for same padding, got {} and {}",
                self.down_kernel, self.up_kernel
            )));
        }
        let div = 1usize << self.depth;
        if self.window_len % div != 0 {
            return Err(Error::InvalidConfig(format!(
                "window {} not divisible by 2^depth = {div}",
                self.window_len
            )));
        }
        if self.window_len < 2 * div {
            return Err(Error::InvalidConfig(format!(
                "window {} leaves fewer than 2 samples at the bottleneck",
                self.window_len
            )));
        }
        if !self.leaky_slope.is_finite() || !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::InvalidConfig(format!(
                "leaky slope {} outside [0, 1)",
                self.leaky_slope
            )));
        }
        Ok(())
    }
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    /// Weights are `[c_out, c_in, k]`, biases `[c_out]`.
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tensor map for a configuration, in serialization order:
/// `down0..`, `bottleneck`, `up{depth-1}..up0`, `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub specs: Vec<TensorSpec>,
    pub total: usize,
}

impl Layout {
    pub fn for_config(cfg: &ModelConfig) -> Layout {
        let mut specs: Vec<TensorSpec> = Vec::new();
        let mut total = 0usize;
        let push = |specs: &mut Vec<TensorSpec>, total: &mut usize, name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            specs.push(TensorSpec { name, shape, offset: *total });
            *total += len;
        };
        for i in 0..cfg.depth {
            let c_in = if i == 0 { cfg.in_channels } else { cfg.base_channels << (i - 1) };
            let c_out = cfg.base_channels << i;
            push(&mut specs, &mut total, format!("down{i}.weight"), vec![c_out, c_in, cfg.down_kernel]);
            push(&mut specs, &mut total, format!("down{i}.bias"), vec![c_out]);
        }
        let cb = cfg.base_channels << (cfg.depth - 1);
        push(&mut specs, &mut total, "bottleneck.weight".into(), vec![cb, cb, cfg.down_kernel]);
        push(&mut specs, &mut total, "bottleneck.bias".into(), vec![cb]);
        for i in (0..cfg.depth).rev() {
            let below = if i == cfg.depth - 1 { cb } else { cfg.base_channels << (i + 1) };
            let c_in = below + (cfg.base_channels << i);
            let c_out = cfg.base_channels << i;
            push(&mut specs, &mut total, format!("up{i}.weight"), vec![c_out, c_in, cfg.up_kernel]);
            push(&mut specs, &mut total, format!("up{i}.bias"), vec![c_out]);
        }
        push(&mut specs, &mut total, "output.weight".into(), vec![1, cfg.base_channels, 1]);
        push(&mut specs, &mut total, "output.bias".into(), vec![1]);
        Layout { specs, total }
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

/// Provenance recorded by the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_l1: f64,
    pub final_lr: f64,
    pub seed: u64,
    pub train_subjects: Vec<String>,
}

/// Model weights: configuration plus the flat f64 parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModelParams {
    pub config: ModelConfig,
    pub values: Vec<f64>,
    pub meta: Option<TrainingMeta>,
}

impl FusionModelParams {
    pub fn layout(&self) -> Layout {
        Layout::for_config(&self.config)
    }
}

/// He-uniform initialization: each weight tensor drawn from
/// U(-limit, limit) with limit = sqrt(6 / fan_in), fan_in = c_in * k,
/// consumed from one ChaCha8 stream in layout order. Biases start at zero.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<FusionModelParams> {
    cfg.validate()?;
    let layout = Layout::for_config(cfg);
    let mut values = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for spec in &layout.specs {
        if spec.shape.len() == 3 {
            let fan_in = (spec.shape[1] * spec.shape[2]) as f64;
            let limit = (6.0 / fan_in).sqrt();
            for v in &mut values[spec.offset..spec.offset + spec.len()] {
                *v = rng.gen_range(-limit..limit);
            }
        }
    }
    Ok(FusionModelParams { config: cfg.clone(), values, meta: None })
}

/// Channel-major feature map: `data[c * len + t]`.
#[derive(Debug, Clone)]
pub(crate) struct Feat {
    pub ch: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Feat {
    fn zeros(ch: usize, len: usize) -> Feat {
        Feat { ch, len, data: vec![0.0; ch * len] }
    }

    fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }
}

/// Same-padded stride-1 convolution.
fn conv_forward(x: &Feat, w: &[f64], b: &[f64], c_out: usize, k: usize) -> Feat {
    let pad = (k - 1) / 2;
    let len = x.len;
    let mut y = Feat::zeros(c_out, len);
    for co in 0..c_out {
        let yrow = &mut y.data[co * len..(co + 1) * len];
        yrow.fill(b[co]);
        for ci in 0..x.ch {
            let xrow = x.row(ci);
            let wrow = &w[(co * x.ch + ci) * k..(co * x.ch + ci + 1) * k];
            for (j, &wj) in wrow.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                // y[t] += wj * x[t + j - pad]
                let shift = j as isize - pad as isize;
                let t_lo = (-shift).max(0) as usize;
                let t_hi = (len as isize - shift).min(len as isize) as usize;
                for t in t_lo..t_hi {
                    yrow[t] += wj * xrow[(t as isize + shift) as usize];
                }
            }
        }
    }
    y
}

/// Gradients of the same-padded convolution: returns (dw, db, dx).
fn conv_backward(
    x: &Feat,
    w: &[f64],
    c_out: usize,
    k: usize,
    dy: &Feat,
) -> (Vec<f64>, Vec<f64>, Feat) {
    let pad = (k - 1) / 2;
    let len = x.len;
    let mut dw = vec![0.0; c_out * x.ch * k];
    let mut db = vec![0.0; c_out];
    let mut dx = Feat::zeros(x.ch, len);
    for co in 0..c_out {
        let dyrow = dy.row(co);
        db[co] = dyrow.iter().sum();
        for ci in 0..x.ch {
            let xrow = x.row(ci);
            let dxrow = &mut dx.data[ci * len..(ci + 1) * len];
            let wbase = (co * x.ch + ci) * k;
            for j in 0..k {
                let shift = j as isize - pad as isize;
                let t_lo = (-shift).max(0) as usize;
                let t_hi = (len as isize - shift).min(len as isize) as usize;
                let mut acc = 0.0;
                let wj = w[wbase + j];
                for t in t_lo..t_hi {
                    let xi = (t as isize + shift) as usize;
                    acc += dyrow[t] * xrow[xi];
                    dxrow[xi] += wj * dyrow[t];
                }
                dw[wbase + j] += acc;
            }
        }
    }
    (dw, db, dx)
}

fn leaky(x: &Feat, slope: f64) -> Feat {
    let mut y = x.clone();
    for v in &mut y.data {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    y
}

/// Gradient through LeakyReLU given the cached pre-activation.
fn leaky_backward(z: &Feat, dy: &Feat, slope: f64) -> Feat {
    let mut dz = dy.clone();
    for (d, &pre) in dz.data.iter_mut().zip(&z.data) {
        if pre <= 0.0 {
            *d *= slope;
        }
    }
    dz
}

/// Keep even-indexed samples.
fn decimate(x: &Feat) -> Feat {
    let half = x.len / 2;
    let mut y = Feat::zeros(x.ch, half);
    for c in 0..x.ch {
        for t in 0..half {
            y.data[c * half + t] = x.data[c * x.len + 2 * t];
        }
    }
    y
}

fn decimate_backward(dy: &Feat, orig_len: usize) -> Feat {
    let mut dx = Feat::zeros(dy.ch, orig_len);
    for c in 0..dy.ch {
        for t in 0..dy.len {
            dx.data[c * orig_len + 2 * t] = dy.data[c * dy.len + t];
        }
    }
    dx
}

/// Linear 2x upsampling: out[2t] = in[t], out[2t+1] = mean of neighbors,
/// and the final odd sample repeats the last input.
fn upsample(x: &Feat) -> Feat {
    let out_len = x.len * 2;
    let mut y = Feat::zeros(x.ch, out_len);
    for c in 0..x.ch {
        let xrow = x.row(c);
        let yrow = &mut y.data[c * out_len..(c + 1) * out_len];
        for t in 0..x.len {
            yrow[2 * t] = xrow[t];
            yrow[2 * t + 1] = if t + 1 < x.len {
                0.5 * (xrow[t] + xrow[t + 1])
            } else {
                xrow[t]
            };
        }
    }
    y
}

fn upsample_backward(dy: &Feat) -> Feat {
    let in_len = dy.len / 2;
    let mut dx = Feat::zeros(dy.ch, in_len);
    for c in 0..dy.ch {
        let dyrow = dy.row(c);
        let dxrow = &mut dx.data[c * in_len..(c + 1) * in_len];
        for t in 0..in_len {
            let mut g = dyrow[2 * t];
            if t + 1 < in_len {
                g += 0.5 * dyrow[2 * t + 1];
            } else {
                g += dyrow[2 * t + 1];
            }
            if t > 0 {
                g += 0.5 * dyrow[2 * t - 1];
            }
            dxrow[t] = g;
        }
    }
    dx
}

fn concat(a: &Feat, b: &Feat) -> Feat {
    debug_assert_eq!(a.len, b.len);
    let mut data = Vec::with_capacity((a.ch + b.ch) * a.len);
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Feat { ch: a.ch + b.ch, len: a.len, data }
}

/// Split a concat gradient back into its two channel groups.
fn split(d: &Feat, c_a: usize) -> (Feat, Feat) {
    let cut = c_a * d.len;
    (
        Feat { ch: c_a, len: d.len, data: d.data[..cut].to_vec() },
        Feat { ch: d.ch - c_a, len: d.len, data: d.data[cut..].to_vec() },
    )
}

/// Everything backward needs: conv inputs and pre-activations per block.
pub struct ForwardCache {
    down_x: Vec<Feat>,
    down_z: Vec<Feat>,
    skips: Vec<Feat>,
    bott_x: Feat,
    bott_z: Feat,
    /// Decoder blocks in processing order (deepest first).
    up_cat: Vec<Feat>,
    up_z: Vec<Feat>,
    out_x: Feat,
}

struct ConvParams<'a> {
    w: &'a [f64],
    b: &'a [f64],
    c_out: usize,
    k: usize,
}

fn tensor_pair<'a>(layout: &Layout, values: &'a [f64], block: &str) -> ConvParams<'a> {
    let ws = layout.spec(&format!("{block}.weight")).expect("layout weight");
    let bs = layout.spec(&format!("{block}.bias")).expect("layout bias");
    ConvParams {
        w: &values[ws.offset..ws.offset + ws.len()],
        b: &values[bs.offset..bs.offset + bs.len()],
        c_out: ws.shape[0],
        k: ws.shape[2],
    }
}

/// Forward pass retaining intermediates. `input` is channel-major,
/// `in_channels * window_len` long.
pub fn forward_cached(params: &FusionModelParams, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    let cfg = &params.config;
    if input.len() != cfg.in_channels * cfg.window_len {
        return Err(Error::InvalidInput(format!(
            "input length {} != {} channels x {} samples",
            input.len(),
            cfg.in_channels,
            cfg.window_len
        )));
    }
    let layout = params.layout();
    if params.values.len() != layout.total {
        return Err(Error::InvalidInput(format!(
            "parameter vector length {} != layout total {}",
            params.values.len(),
            layout.total
        )));
    }
    let slope = cfg.leaky_slope;

    let mut cur = Feat { ch: cfg.in_channels, len: cfg.window_len, data: input.to_vec() };
    let mut down_x = Vec::with_capacity(cfg.depth);
    let mut down_z = Vec::with_capacity(cfg.depth);
    let mut skips = Vec::with_capacity(cfg.depth);
    for i in 0..cfg.depth {
        let p = tensor_pair(&layout, &params.values, &format!("down{i}"));
        let z = conv_forward(&cur, p.w, p.b, p.c_out, p.k);
        let a = leaky(&z, slope);
        down_x.push(cur);
        down_z.push(z);
        cur = decimate(&a);
        skips.push(a);
    }

    let p = tensor_pair(&layout, &params.values, "bottleneck");
    let bott_x = cur;
    let bott_z = conv_forward(&bott_x, p.w, p.b, p.c_out, p.k);
    let mut below = leaky(&bott_z, slope);

    let mut up_cat = Vec::with_capacity(cfg.depth);
    let mut up_z = Vec::with_capacity(cfg.depth);
    for i in (0..cfg.depth).rev() {
        let p = tensor_pair(&layout, &params.values, &format!("up{i}"));
        let u = upsample(&below);
        let cat = concat(&u, &skips[i]);
        let z = conv_forward(&cat, p.w, p.b, p.c_out, p.k);
        below = leaky(&z, slope);
        up_cat.push(cat);
        up_z.push(z);
    }

    let p = tensor_pair(&layout, &params.values, "output");
    let out_x = below;
    let y = conv_forward(&out_x, p.w, p.b, p.c_out, p.k);
    debug_assert_eq!(y.ch, 1);
    let output = y.data;

    Ok((
        output,
        ForwardCache { down_x, down_z, skips, bott_x, bott_z, up_cat, up_z, out_x },
    ))
}

/// Forward pass without the cache.
pub fn forward(params: &FusionModelParams, input: &[f64]) -> Result<Vec<f64>> {
    forward_cached(params, input).map(|(y, _)| y)
}

/// Backpropagate `d_output` (length `window_len`) through the cached pass.
/// Returns gradients for the flat parameter vector and for the input.
pub fn backward(
    params: &FusionModelParams,
    cache: &ForwardCache,
    d_output: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let cfg = &params.config;
    let layout = params.layout();
    let slope = cfg.leaky_slope;
    let mut grads = vec![0.0; layout.total];

    let write = |grads: &mut [f64], layout: &Layout, block: &str, dw: Vec<f64>, db: Vec<f64>| {
        let ws = layout.spec(&format!("{block}.weight")).unwrap();
        let bs = layout.spec(&format!("{block}.bias")).unwrap();
        grads[ws.offset..ws.offset + ws.len()].copy_from_slice(&dw);
        grads[bs.offset..bs.offset + bs.len()].copy_from_slice(&db);
    };

    // output conv (linear)
    let p = tensor_pair(&layout, &params.values, "output");
    let dy = Feat { ch: 1, len: cache.out_x.len, data: d_output.to_vec() };
    let (dw, db, mut d_below) = conv_backward(&cache.out_x, p.w, p.c_out, p.k, &dy);
    write(&mut grads, &layout, "output", dw, db);

    // decoder, shallowest block first
    let mut d_skips: Vec<Option<Feat>> = (0..cfg.depth).map(|_| None).collect();
    for i in 0..cfg.depth {
        let block = format!("up{i}");
        let p = tensor_pair(&layout, &params.values, &block);
        let slot = cfg.depth - 1 - i; // processing-order index of up{i}
        let dz = leaky_backward(&cache.up_z[slot], &d_below, slope);
        let (dw, db, dcat) = conv_backward(&cache.up_cat[slot], p.w, p.c_out, p.k, &dz);
        write(&mut grads, &layout, &block, dw, db);
        let c_below = cache.up_cat[slot].ch - cache.skips[i].ch;
        let (du, dskip) = split(&dcat, c_below);
        d_skips[i] = Some(dskip);
        d_below = upsample_backward(&du);
    }

    // bottleneck
    let p = tensor_pair(&layout, &params.values, "bottleneck");
    let dz = leaky_backward(&cache.bott_z, &d_below, slope);
    let (dw, db, d_pool) = conv_backward(&cache.bott_x, p.w, p.c_out, p.k, &dz);
    write(&mut grads, &layout, "bottleneck", dw, db);
    let mut d_cur = d_pool;

    // encoder, deepest block first
    for i in (0..cfg.depth).rev() {
        let block = format!("down{i}");
        let p = tensor_pair(&layout, &params.values, &block);
        let mut da = decimate_backward(&d_cur, cache.skips[i].len);
        let dskip = d_skips[i].take().expect("skip gradient");
        for (a, b) in da.data.iter_mut().zip(&dskip.data) {
            *a += b;
        }
        let dz = leaky_backward(&cache.down_z[i], &da, slope);
        let (dw, db, dx) = conv_backward(&cache.down_x[i], p.w, p.c_out, p.k, &dz);
        write(&mut grads, &layout, &block, dw, db);
        d_cur = dx;
    }

    (grads, d_cur.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            in_channels: 3,
            depth: 2,
            base_channels: 4,
            down_kernel: 15,
            up_kernel: 5,
            window_len: 64,
            leaky_slope: 0.2,
        }
    }

    fn wavy_input(cfg: &ModelConfig, seed: f64) -> Vec<f64> {
        (0..cfg.in_channels * cfg.window_len)
            .map(|i| ((i as f64 * 0.37 + seed) * 1.13).sin() + 0.1 * (i as f64 * 0.05).cos())
            .collect()
    }

    #[test]
    fn layout_shapes_and_total() {
        let cfg = ModelConfig::default();
        let layout = Layout::for_config(&cfg);
        let names: Vec<&str> = layout.specs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "down0.weight", "down0.bias", "down1.weight", "down1.bias",
                "down2.weight", "down2.bias", "down3.weight", "down3.bias",
                "bottleneck.weight", "bottleneck.bias",
                "up3.weight", "up3.bias", "up2.weight", "up2.bias",
                "up1.weight", "up1.bias", "up0.weight", "up0.bias",
                "output.weight", "output.bias",
            ]
        );
        assert_eq!(layout.spec("down0.weight").unwrap().shape, vec![32, 3, 15]);
        assert_eq!(layout.spec("down3.weight").unwrap().shape, vec![256, 128, 15]);
        assert_eq!(layout.spec("bottleneck.weight").unwrap().shape, vec![256, 256, 15]);
        assert_eq!(layout.spec("up3.weight").unwrap().shape, vec![256, 512, 5]);
        assert_eq!(layout.spec("up2.weight").unwrap().shape, vec![128, 384, 5]);
        assert_eq!(layout.spec("up0.weight").unwrap().shape, vec![32, 96, 5]);
        assert_eq!(layout.spec("output.weight").unwrap().shape, vec![1, 32, 1]);
        // offsets tile the vector exactly
        let mut expected = 0;
        for s in &layout.specs {
            assert_eq!(s.offset, expected);
            expected += s.len();
        }
        assert_eq!(layout.total, expected);
    }

    #[test]
    fn config_validation_rejects_bad_windows_and_kernels() {
        let mut cfg = ModelConfig::default();
        cfg.window_len = 1000;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = ModelConfig::default();
        cfg.down_kernel = 14;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = ModelConfig::default();
        cfg.window_len = 16;
        cfg.depth = 4;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = tiny_config();
        let a = init_model(&cfg, 9).unwrap();
        let b = init_model(&cfg, 9).unwrap();
        assert_eq!(a.values, b.values);
        let c = init_model(&cfg, 10).unwrap();
        assert_ne!(a.values, c.values);

        let layout = a.layout();
        for spec in &layout.specs {
            let vals = &a.values[spec.offset..spec.offset + spec.len()];
            if spec.shape.len() == 3 {
                let limit = (6.0 / (spec.shape[1] * spec.shape[2]) as f64).sqrt();
                assert!(vals.iter().all(|v| v.abs() < limit));
                assert!(vals.iter().any(|v| *v != 0.0));
            } else {
                assert!(vals.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn forward_output_length_matches_window() {
        let cfg = tiny_config();
        let params = init_model(&cfg, 1).unwrap();
        let y = forward(&params, &wavy_input(&cfg, 0.0)).unwrap();
        assert_eq!(y.len(), cfg.window_len);
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let cfg = tiny_config();
        let params = init_model(&cfg, 1).unwrap();
        assert!(forward(&params, &vec![0.0; 10]).is_err());
    }

    #[test]
    fn upsample_matches_linear_interpolation() {
        let x = Feat { ch: 1, len: 4, data: vec![1.0, 3.0, 5.0, 7.0] };
        let y = upsample(&x);
        assert_eq!(y.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 7.0]);
    }

    #[test]
    fn decimate_keeps_even_samples() {
        let x = Feat { ch: 2, len: 4, data: vec![0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0] };
        let y = decimate(&x);
        assert_eq!(y.data, vec![0.0, 2.0, 10.0, 12.0]);
    }

    #[test]
    fn conv_identity_kernel_passes_signal_through() {
        // k=1 weight 1 bias 0 is the identity
        let x = Feat { ch: 1, len: 8, data: (0..8).map(|i| i as f64).collect() };
        let y = conv_forward(&x, &[1.0], &[0.0], 1, 1);
        assert_eq!(y.data, x.data);
        // k=3 shift kernel [0,0,1] reads the next sample
        let y = conv_forward(&x, &[0.0, 0.0, 1.0], &[0.0], 1, 3);
        assert_eq!(y.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 0.0]);
    }

    #[test]
    fn gradient_check_against_finite_differences() {
        let cfg = tiny_config();
        let params = init_model(&cfg, 5).unwrap();
        let input = wavy_input(&cfg, 2.5);

        // residual kept away from zero so the L1 subgradient is smooth
        let base = forward(&params, &input).unwrap();
        let target: Vec<f64> = base.iter().map(|v| v - 0.37).collect();

        let loss = |p: &FusionModelParams| -> f64 {
            let y = forward(p, &input).unwrap();
            y.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>() / target.len() as f64
        };
        let (y, cache) = forward_cached(&params, &input).unwrap();
        let n = target.len() as f64;
        let dl: Vec<f64> = y.iter().zip(&target).map(|(a, b)| (a - b).signum() / n).collect();
        let (analytic, d_input) = backward(&params, &cache, &dl);

        // deterministic stride over the parameter vector samples every tensor
        let total = params.values.len();
        let stride = (total / 100).max(1);
        let h = 1e-5;
        let mut checked = 0;
        for idx in (0..total).step_by(stride) {
            let mut plus = params.clone();
            plus.values[idx] += h;
            let mut minus = params.clone();
            minus.values[idx] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = analytic[idx].abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic[idx] - numeric).abs() / denom < 1e-4,
                "param {idx}: analytic {} vs numeric {numeric}",
                analytic[idx]
            );
            checked += 1;
        }
        assert!(checked >= 100);

        // input gradient spot-check
        for &idx in &[0usize, 17, 63, 64, 100, 191] {
            let mut plus = input.clone();
            plus[idx] += h;
            let mut minus = input.clone();
            minus[idx] -= h;
            let yp = forward(&params, &plus).unwrap();
            let ym = forward(&params, &minus).unwrap();
            let lp = yp.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            let lm = ym.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = d_input[idx].abs().max(numeric.abs()).max(1e-6);
            assert!(
                (d_input[idx] - numeric).abs() / denom < 1e-4,
                "input {idx}: analytic {} vs numeric {numeric}",
                d_input[idx]
            );
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_config();
        let params = init_model(&cfg, 3).unwrap();
        let input = wavy_input(&cfg, 1.0);
        let a = forward(&params, &input).unwrap();
        let b = forward(&params, &input).unwrap();
        assert_eq!(a, b);
    }
}
