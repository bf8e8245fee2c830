use crate::error::{shape_err, Result};
use crate::params::Params;
use crate::seqcore::{FeatureSequence, Rng};

/// Width of the short causal convolution in front of each SSM.
pub const DEFAULT_CONV_WIDTH: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// `K-1` zeros on the left; output `t` sees inputs `t-K+1..=t`.
    Causal,
    /// Centered window, `(K-1)/2` inputs of look-back.
    Same,
}

/// Per-channel 1-D convolution. Weights are `channels × width`; the last tap
/// multiplies the newest input in causal mode.
#[derive(Clone, Debug)]
pub struct DepthwiseConv1d {
    channels: usize,
    width: usize,
    padding: Padding,
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl DepthwiseConv1d {
    pub fn new(channels: usize, width: usize, padding: Padding, weight: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        if channels == 0 || width == 0 {
            return Err(shape_err!("conv needs positive channels and width"));
        }
        if weight.len() != channels * width {
            return Err(shape_err!("conv weight has {} entries, expected {channels}x{width}", weight.len()));
        }
        if bias.as_ref().is_some_and(|b| b.len() != channels) {
            return Err(shape_err!("conv bias length mismatch"));
        }
        Ok(Self { channels, width, padding, weight, bias })
    }

    pub fn random(channels: usize, width: usize, padding: Padding, with_bias: bool, rng: &mut Rng) -> Self {
        let std = 1.0 / (width as f64).sqrt();
        let weight = (0..channels * width).map(|_| (rng.normal() * std) as f32).collect();
        Self::new(channels, width, padding, weight, with_bias.then(|| vec![0.0; channels]))
            .expect("valid conv shape")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn left_context(&self) -> usize {
        match self.padding {
            Padding::Causal => self.width - 1,
            Padding::Same => (self.width - 1) / 2,
        }
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        x.check_dim(self.channels)?;
        let (len, k) = (x.len(), self.width);
        let back = self.left_context() as isize;
        let mut out = FeatureSequence::zeros(len, self.channels);
        let mut acc = vec![0.0f64; self.channels];
        for t in 0..len {
            match &self.bias {
                Some(b) => acc.iter_mut().zip(b).for_each(|(a, &b)| *a = b as f64),
                None => acc.fill(0.0),
            }
            for tap in 0..k {
                let src = t as isize - back + tap as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let xr = x.row(src as usize);
                for (c, a) in acc.iter_mut().enumerate() {
                    *a += self.weight[c * k + tap] as f64 * xr[c] as f64;
                }
            }
            out.row_mut(t).iter_mut().zip(&acc).for_each(|(o, &a)| *o = a as f32);
        }
        Ok(out)
    }

    /// Causal single-step update. `window` holds the previous `K-1` inputs,
    /// oldest first, and is shifted to include `x_t` afterwards.
    pub fn step(&self, window: &mut [f32], x_t: &[f32], out: &mut [f32]) {
        debug_assert_eq!(self.padding, Padding::Causal);
        let (c_n, k) = (self.channels, self.width);
        debug_assert_eq!(window.len(), (k - 1) * c_n);
        for c in 0..c_n {
            let mut a = self.bias.as_ref().map_or(0.0, |b| b[c] as f64);
            for tap in 0..k - 1 {
                a += self.weight[c * k + tap] as f64 * window[tap * c_n + c] as f64;
            }
            a += self.weight[c * k + k - 1] as f64 * x_t[c] as f64;
            out[c] = a as f32;
        }
        if k > 1 {
            window.copy_within(c_n.., 0);
            window[(k - 2) * c_n..].copy_from_slice(x_t);
        }
    }
}

impl Params for DepthwiseConv1d {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Causal depthwise convolution with per-channel kernels of width `K`
/// (`kernel` is `channels × K`).
pub fn causal_conv1d(x: &FeatureSequence, kernel: &[f32], width: usize) -> Result<FeatureSequence> {
    DepthwiseConv1d::new(x.dim(), width, Padding::Causal, kernel.to_vec(), None)?.forward(x)
}

/// Dense strided 1-D convolution over the token axis, channels mixed.
/// Weight layout is `out × in × kernel`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv1d {
    pub fn random(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / ((in_ch * kernel) as f64).sqrt();
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            weight: (0..out_ch * in_ch * kernel).map(|_| (rng.normal() * std) as f32).collect(),
            bias: vec![0.0; out_ch],
        }
    }

    pub fn out_len(&self, len: usize) -> usize {
        if len + 2 * self.pad < self.kernel {
            return 0;
        }
        (len + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn forward(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        x.check_dim(self.in_ch)?;
        let out_len = self.out_len(x.len());
        let mut out = FeatureSequence::zeros(out_len, self.out_ch);
        let mut acc = vec![0.0f64; self.out_ch];
        for t in 0..out_len {
            acc.iter_mut().zip(&self.bias).for_each(|(a, &b)| *a = b as f64);
            for tap in 0..self.kernel {
                let src = (t * self.stride + tap) as isize - self.pad as isize;
                if src < 0 || src >= x.len() as isize {
                    continue;
                }
                let xr = x.row(src as usize);
                for (o, a) in acc.iter_mut().enumerate() {
                    let w = &self.weight[(o * self.in_ch) * self.kernel..];
                    let mut s = 0.0;
                    for (i, &xv) in xr.iter().enumerate() {
                        s += w[i * self.kernel + tap] as f64 * xv as f64;
                    }
                    *a += s;
                }
            }
            out.row_mut(t).iter_mut().zip(&acc).for_each(|(o, &a)| *o = a as f32);
        }
        Ok(out)
    }
}

impl Params for Conv1d {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
