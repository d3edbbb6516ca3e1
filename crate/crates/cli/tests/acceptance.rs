//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails when any criterion fails, except those listed in `KNOWN_FAILURES`,
//! which must still fail (an unexpected pass is reported as an error too).

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavehax_autodiff::{Graph, Tensor};
use wavehax_cli::checks::gradient_suite;
use wavehax_core::aliasing::{rectified_sine_oracle, relu_alias_report, sine_power_decompose, RectifiedSineSeries};
use wavehax_core::metrics::{mr_stft_distance, MrStftConfig};
use wavehax_core::prior::{generate_prior, F0Contour, PriorConfig};
use wavehax_core::signal::{MelSpectrogram, StftPlan, Waveform};
use wavehax_model::stats::{affected_samples, count_macs_per_second, count_params, layers, receptive_field_frames};
use wavehax_model::train::{synthetic_utterances, Dataset, TrainConfig, Trainer};
use wavehax_model::{Generator, GeneratorConfig};

/// Criteria that cannot pass as stated, with the reason.
const KNOWN_FAILURES: &[(&str, &str)] = &[(
    "A3",
    "2x oversampling folds relu harmonics above 1 kHz onto the same \
     frequencies as direct sampling; at 200 and 250 Hz too little of the \
     alias energy comes from the 500-1000 Hz band the filter removes",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn a1() -> Outcome {
    let mut worst = 0.0f64;
    // oversampled: 64 samples per period
    for &omega in &[2.0 * PI / 64.0, 2.0 * PI / 97.3] {
        let series = rectified_sine_oracle(omega, 500, 4096).unwrap();
        for (t, v) in series.iter().enumerate() {
            worst = worst.max((v - (omega * t as f64).sin().max(0.0)).abs());
        }
    }
    // coefficients against numerical Fourier integrals of relu(sin)
    let s = RectifiedSineSeries::new(20);
    let n = 200_000;
    let integral = |f: &dyn Fn(f64) -> f64| {
        let h = 2.0 * PI / n as f64;
        (0..n).map(|i| f((i as f64 + 0.5) * h)).sum::<f64>() * h
    };
    let rs = |t: f64| t.sin().max(0.0);
    let dc = integral(&|t| rs(t)) / (2.0 * PI);
    let fund = integral(&|t| rs(t) * t.sin()) / PI;
    let mut coeff_err = (s.dc - 1.0 / PI).abs().max((s.fundamental - 0.5).abs());
    let mut integral_err = (dc - s.dc).abs().max((fund - s.fundamental).abs());
    for (i, c) in s.even.iter().enumerate() {
        let k = (i + 1) as f64;
        coeff_err = coeff_err.max((c - 2.0 / (PI * (2.0 * k - 1.0) * (2.0 * k + 1.0))).abs());
        let numeric = -integral(&|t| rs(t) * (2.0 * k * t).cos()) / PI;
        integral_err = integral_err.max((numeric - c).abs());
    }
    outcome(
        worst < 1e-3 && coeff_err == 0.0 && integral_err < 1e-9,
        format!("max pointwise error {worst:.2e}, closed-form mismatch {coeff_err:.1e}, quadrature mismatch {integral_err:.1e}"),
    )
}

fn a2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let angles: Vec<f64> = (0..1000).map(|_| rng.random_range(-PI..PI)).collect();
    let mut worst = 0.0f64;
    let mut support_ok = true;
    for k in 0..=12i64 {
        let d = sine_power_decompose(k).unwrap();
        support_ok &= d.support() == k as usize && d.a.len() == k as usize + 1;
        for &t in &angles {
            worst = worst.max((d.evaluate(t) - t.sin().powi(k as i32)).abs());
        }
    }
    outcome(
        worst < 1e-10 && support_ok,
        format!("max reconstruction error {worst:.2e} over k = 0..12, support = k: {support_ok}"),
    )
}

fn a3() -> Outcome {
    let mut short = Vec::new();
    let mut floor_ok = true;
    let mut min_red = f64::INFINITY;
    for f0 in (50..=450).step_by(10) {
        let r = relu_alias_report(f0 as f64, 1000, 8192).unwrap();
        min_red = min_red.min(r.reduction_db());
        if r.reduction_db() < 10.0 {
            short.push(format!("{f0} Hz: {:.1} dB", r.reduction_db()));
        }
        floor_ok &= r.anti_aliased_db > -80.0;
    }
    outcome(
        short.is_empty() && floor_ok,
        format!(
            "min reduction {min_red:.2} dB; below 10 dB: [{}]; residual > -80 dB everywhere: {floor_ok}",
            short.join(", ")
        ),
    )
}

/// Hann-weighted frame mean squares, computed here independently.
fn frame_powers(x: &[f64], len: usize, hop: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect();
    let norm: f64 = w.iter().sum();
    (0..=(x.len() - len) / hop)
        .map(|i| x[i * hop..i * hop + len].iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>() / norm)
        .collect()
}

/// Energy off the harmonic grid of a one-second signal with integer F0,
/// relative to the energy on it. Every harmonic is an exact DFT bin.
fn off_harmonic_db(x: &[f64], f0: usize) -> f64 {
    let n = x.len();
    let total: f64 = x.iter().map(|v| v * v).sum();
    let mut on = 0.0;
    let mut k = 1;
    while k * f0 <= n / 2 {
        let step = 2.0 * PI * (k * f0) as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = step * i as f64;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        let weight = if 2 * k * f0 == n { 1.0 } else { 2.0 };
        on += weight * (re * re + im * im) / n as f64;
        k += 1;
    }
    10.0 * ((total - on).max(1e-300) / on).log10()
}

fn a4() -> Outcome {
    let sr = 24000u32;
    let cfg = PriorConfig {
        noise_sigma: 0.0,
        ..PriorConfig::default()
    };
    let mut worst_dev = 0.0f64;
    let mut worst_db = f64::NEG_INFINITY;
    for f in 71..=499usize {
        let f0 = F0Contour::constant(f as f64, 100, 240, sr).unwrap();
        let x = generate_prior(&f0, &cfg).unwrap();
        for p in frame_powers(x.samples(), 960, 240) {
            worst_dev = worst_dev.max((p - 0.01).abs() / 0.01);
        }
        if f % 4 == 3 || f == 499 {
            worst_db = worst_db.max(off_harmonic_db(x.samples(), f));
        }
    }
    let f0 = F0Contour::constant(180.0, 50, 240, sr).unwrap();
    let noisy = PriorConfig { seed: 9, ..PriorConfig::default() };
    let a = generate_prior(&f0, &noisy).unwrap();
    let b = generate_prior(&f0, &noisy).unwrap();
    let c = generate_prior(&f0, &PriorConfig { seed: 10, ..noisy.clone() }).unwrap();
    let deterministic = a.samples() == b.samples() && a.samples() != c.samples();
    outcome(
        worst_dev <= 0.10 && worst_db < -60.0 && deterministic,
        format!(
            "worst frame power deviation {:.2}% over 71..499 Hz, worst off-harmonic energy {worst_db:.1} dB, seeded: {deterministic}",
            100.0 * worst_dev
        ),
    )
}

fn moving_average(v: &[f64], end: usize) -> f64 {
    v[end - 10..end].iter().sum::<f64>() / 10.0
}

fn a5() -> Outcome {
    let cfg = GeneratorConfig::toy();
    let pairs = synthetic_utterances(8, 1.0, 24000, cfg.hop, 7).unwrap();
    let data = Dataset::new(pairs, &cfg, &PriorConfig::default(), 0).unwrap();
    let tc = TrainConfig {
        steps: 500,
        lr: 1e-2,
        batch_size: 2,
        mel_only: true,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(cfg, tc).unwrap();
    let mut mel = Vec::new();
    for _ in 0..500 {
        mel.push(t.step(&data).unwrap().loss_mel);
    }
    let (start, end) = (moving_average(&mel, 10), moving_average(&mel, 500));
    let reduction = 1.0 - end / start;

    t.set_mel_only(false);
    t.restart_schedule(2e-4, 500).unwrap();
    let (mut finite, mut worst_gap) = (true, 0.0f64);
    for _ in 0..500 {
        let l = t.step(&data).unwrap();
        finite &= [l.loss_mel, l.loss_adv, l.loss_fm, l.loss_d, l.loss_g].iter().all(|v| v.is_finite());
        let recomputed = 45.0 * l.loss_mel + 1.0 * l.loss_adv + 2.0 * l.loss_fm;
        worst_gap = worst_gap.max((l.loss_g - recomputed).abs() / l.loss_g.abs().max(1.0));
    }
    outcome(
        reduction >= 0.5 && finite && worst_gap <= 1e-12,
        format!(
            "mel loss {start:.3} -> {end:.3} ({:.1}% lower); adversarial phase finite: {finite}, decomposition gap {worst_gap:.1e}",
            100.0 * reduction
        ),
    )
}

fn a6() -> Outcome {
    let suite = gradient_suite(0).unwrap();
    let failed: Vec<&str> = suite.iter().filter(|c| !c.passes()).map(|c| c.name).collect();
    let worst = suite.iter().map(|c| c.report.relative_error).fold(0.0, f64::max);
    outcome(
        failed.is_empty(),
        format!("{} checks, worst relative error {worst:.2e}, failed: {failed:?}", suite.len()),
    )
}

fn a7() -> Outcome {
    let cfg = GeneratorConfig::default();
    let (params, macs) = (count_params(&cfg), count_macs_per_second(&cfg));
    let rate_ok = layers(&cfg).iter().all(|l| l.frame_ratio == 1);
    let gen = Generator::new(cfg.clone(), 0).unwrap();
    let n = 5;
    let mut g = Graph::new();
    let mel = g.constant(Tensor::zeros(&[1, cfg.mel_bands, n]));
    gen.spectrum_graph(&mut g, gen.params(), &Tensor::zeros(&[1, cfg.hop * n]), mel, false)
        .unwrap();
    let traced_ok = g
        .node_shapes()
        .filter(|s| s.len() == 4 && s[2] == cfg.freq_bins())
        .all(|s| s[3] == n);
    outcome(
        params < 1_500_000 && macs < 2_600_000_000 && rate_ok && traced_ok,
        format!(
            "params {:.3} M (published 0.623 M), MACs/s {:.3} G (published 1.298 G), no temporal upsampling: {}",
            params as f64 / 1e6,
            macs as f64 / 1e9,
            rate_ok && traced_ok
        ),
    )
}

fn a8() -> Outcome {
    let plan = StftPlan::new(480, 240).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let len = 240 * 50;
    let mut signals: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    for f in [50.0, 440.0, 3777.7, 11900.0] {
        signals.push((0..len).map(|t| (2.0 * PI * f * t as f64 / 24000.0 + 0.3).sin()).collect());
    }
    let mut worst = 0.0f64;
    for x in &signals {
        let y = plan.synthesize(&plan.analyze(x).unwrap(), len / 240).unwrap();
        worst = worst.max(x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let cfg = MrStftConfig::default();
    let wave = |rng: &mut ChaCha8Rng| {
        let gain = rng.random_range(0.05..1.0);
        Waveform::new((0..4096).map(|_| gain * rng.random_range(-1.0..1.0)).collect(), 24000).unwrap()
    };
    let (mut metric_ok, mut zero_ok) = (true, true);
    for _ in 0..100 {
        let (x, y, z) = (wave(&mut rng), wave(&mut rng), wave(&mut rng));
        let dxy = mr_stft_distance(&x, &y, &cfg).unwrap();
        let dyx = mr_stft_distance(&y, &x, &cfg).unwrap();
        let dxz = mr_stft_distance(&x, &z, &cfg).unwrap();
        let dyz = mr_stft_distance(&y, &z, &cfg).unwrap();
        zero_ok &= mr_stft_distance(&x, &x, &cfg).unwrap() == 0.0;
        metric_ok &= dxy >= 0.0 && dxy == dyx && dxz <= dxy + dyz + 1e-12;
    }
    outcome(
        worst < 1e-6 && metric_ok && zero_ok,
        format!("max round-trip error {worst:.2e}; d(x,x) = 0: {zero_ok}; non-negative, symmetric, triangle: {metric_ok}"),
    )
}

fn a9() -> Outcome {
    let cfg = GeneratorConfig::default();
    let gen = Generator::new(cfg.clone(), 3).unwrap();
    let frames = 80;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let prior = Waveform::new((0..frames * cfg.hop).map(|_| rng.random_range(-0.1..0.1)).collect(), 24000).unwrap();
    let mel = MelSpectrogram {
        data: (0..frames * cfg.mel_bands).map(|_| rng.random_range(-8.0..2.0)).collect(),
        frames,
        bands: cfg.mel_bands,
        fmin: 0.0,
        fmax: 8000.0,
        hop: cfg.hop,
    };
    let base = gen.forward(&prior, &mel).unwrap();
    let n = 40;
    let mut bumped = mel.clone();
    for k in 0..cfg.mel_bands {
        bumped.data[n * cfg.mel_bands + k] += 1.0;
    }
    let y = gen.forward(&prior, &bumped).unwrap();
    let (start, end) = affected_samples(&cfg, n, frames);
    let outside = base
        .samples()
        .iter()
        .zip(y.samples())
        .enumerate()
        .filter(|(i, (a, b))| (*i < start || *i >= end) && a.to_bits() != b.to_bits())
        .count();
    let changed = (start..end).filter(|&i| base.samples()[i] != y.samples()[i]).count();
    outcome(
        outside == 0 && changed > 0,
        format!(
            "receptive field ±{} frames, samples [{start}, {end}) may move: {changed} moved inside, {outside} outside",
            receptive_field_frames(&cfg)
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 9] = [
        ("A1", a1, Some(Duration::from_secs(1))),
        ("A2", a2, Some(Duration::from_secs(1))),
        ("A3", a3, Some(Duration::from_secs(10))),
        ("A4", a4, Some(Duration::from_secs(10))),
        ("A5", a5, Some(Duration::from_secs(15 * 60))),
        ("A6", a6, Some(Duration::from_secs(120))),
        ("A7", a7, None),
        ("A8", a8, Some(Duration::from_secs(10))),
        ("A9", a9, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (id, run, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let t0 = Instant::now();
        let o = run();
        let took = t0.elapsed();
        let in_time = budget.map_or(true, |b| took <= b);
        let pass = o.pass && in_time;
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id);
        let budget_note = match budget {
            Some(b) if !in_time => format!(", over the {:.0} s budget", b.as_secs_f64()),
            _ => String::new(),
        };
        println!(
            "{id} {} {} ({:.2} s{budget_note})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
        match (pass, known) {
            (false, Some((_, why))) => println!("   known failure: {why}"),
            (true, Some(_)) => unexpected.push(format!("{id} passed but is listed as a known failure")),
            (false, None) => unexpected.push(format!("{id} failed")),
            (true, None) => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("acceptance: {}", unexpected.join("; "));
        std::process::exit(1);
    }
}
