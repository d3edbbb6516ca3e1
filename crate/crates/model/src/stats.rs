//! Analytic parameter, compute and receptive-field accounting.

use crate::config::GeneratorConfig;
use crate::generator::PRIOR_CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Convolution along the frequency axis only.
    FreqConv,
    /// Convolution along the frame axis only.
    TimeConv,
    Pointwise,
    Depthwise,
    LayerNorm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub params: usize,
    /// Multiply-accumulates to produce one output frame.
    pub macs_per_frame: usize,
    /// Output frames per input frame.
    pub frame_ratio: usize,
}

/// One learned layer of `c_in → c_out` channels with `k` taps per input
/// channel (group-adjusted) at `positions` output positions per frame.
fn conv(name: String, kind: LayerKind, c_in_per_group: usize, c_out: usize, k: usize, positions: usize) -> LayerInfo {
    LayerInfo {
        name,
        kind,
        params: c_out * c_in_per_group * k + c_out,
        macs_per_frame: c_out * c_in_per_group * k * positions,
        frame_ratio: 1,
    }
}

fn norm(name: String, c: usize) -> LayerInfo {
    LayerInfo {
        name,
        kind: LayerKind::LayerNorm,
        params: 2 * c,
        macs_per_frame: 0,
        frame_ratio: 1,
    }
}

/// Every learned layer in execution order.
pub fn layers(cfg: &GeneratorConfig) -> Vec<LayerInfo> {
    let (f, c, h, k1, kd) = (
        cfg.freq_bins(),
        cfg.channels,
        cfg.hidden,
        cfg.conv1d_kernel,
        cfg.depthwise_kernel,
    );
    let mut v = vec![
        conv("prior_conv".into(), LayerKind::FreqConv, 2, PRIOR_CHANNELS, k1, f),
        conv("mel_conv".into(), LayerKind::TimeConv, cfg.mel_bands, f, k1, 1),
        conv("in_proj".into(), LayerKind::Pointwise, PRIOR_CHANNELS + 1, c, 1, f),
        norm("in_norm".into(), c),
    ];
    for i in 0..cfg.n_blocks {
        v.push(conv(format!("blocks.{i}.pw1"), LayerKind::Pointwise, c, h, 1, f));
        v.push(conv(format!("blocks.{i}.dw"), LayerKind::Depthwise, 1, h, kd * kd, f));
        v.push(norm(format!("blocks.{i}.norm"), h));
        v.push(conv(format!("blocks.{i}.pw2"), LayerKind::Pointwise, h, c, 1, f));
    }
    v.push(norm("out_norm".into(), c));
    v.push(conv("head".into(), LayerKind::Pointwise, c, 2, 1, f));
    v
}

pub fn count_params(cfg: &GeneratorConfig) -> usize {
    layers(cfg).iter().map(|l| l.params).sum()
}

/// Convolution MACs per second of output audio. Normalization, activation
/// and the (parameter-free) STFT/iSTFT are not counted.
pub fn count_macs_per_second(cfg: &GeneratorConfig) -> u64 {
    let per_frame: u64 = layers(cfg).iter().map(|l| l.macs_per_frame as u64).sum();
    per_frame * cfg.sample_rate as u64 / cfg.hop as u64
}

/// Frames on each side of frame `n` whose features can influence the
/// spectrogram frame `n` (mel conv plus every depthwise conv).
pub fn receptive_field_frames(cfg: &GeneratorConfig) -> usize {
    cfg.conv1d_kernel / 2 + cfg.n_blocks * (cfg.depthwise_kernel / 2)
}

/// Output samples `[start, end)` that a change to mel frame `n` can reach,
/// clipped to an utterance of `frames` frames.
pub fn affected_samples(cfg: &GeneratorConfig, n: usize, frames: usize) -> (usize, usize) {
    let r = receptive_field_frames(cfg);
    let first = n.saturating_sub(r);
    let last = (n + r).min(frames - 1);
    let start = (first * cfg.hop).saturating_sub(cfg.fft_size / 2);
    let end = (last * cfg.hop + cfg.fft_size / 2).min(frames * cfg.hop);
    (start, end)
}
