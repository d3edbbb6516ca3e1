use std::io::Write;
use std::path::{Path, PathBuf};

use wavehax_core::aliasing::{
    alias_energy, anti_aliased_trace, log_spectrum_db, relu_alias_report, sine_power_decompose, Nonlinearity,
};
use wavehax_core::io::{atomic_write, read_f0_csv, read_mel, read_wav, write_mel, write_wav, KeyValues, WavFormat};
use wavehax_core::metrics::{f0_binned_distance, mr_stft_distance, rms_normalize, MrStftConfig};
use wavehax_core::prior::{generate_prior, PriorConfig};
use wavehax_core::signal::{mel_spectrogram, Waveform};
use wavehax_core::{Error, Result};
use wavehax_model::stats::{count_macs_per_second, count_params, layers, receptive_field_frames};
use wavehax_model::train::{load_generator, mel_config, synthetic_utterances, Dataset, TrainConfig, Trainer, LOG_HEADER};
use wavehax_model::GeneratorConfig;

use crate::{checks, invalid, AliasArgs, Cli, CmdResult, Command, EvalArgs, PriorOptions, TrainArgs};

/// Level both signals are scaled to before evaluation.
const EVAL_RMS: f64 = 0.25;

pub(crate) fn dispatch(cli: &Cli, out: &mut dyn Write) -> CmdResult {
    let cfg_file = cli.config.as_deref();
    match &cli.command {
        Command::Prior(a) => {
            let hop = a.hop.unwrap_or(a.sr as usize / 100);
            let f0 = read_f0_csv(&a.f0, hop, a.sr)?;
            let x = generate_prior(&f0, &prior_config(&a.prior)?)?;
            write_wav(&a.out, &x, wav_format(a.pcm16))?;
            writeln!(out, "wrote {} samples at {} Hz to {}", x.len(), a.sr, a.out.display())?;
            Ok(())
        }
        Command::Synth(a) => {
            let cfg = match cfg_file {
                Some(p) => Some(load_generator_config(p)?),
                None => None,
            };
            let gen = load_generator(&a.ckpt, cfg)?;
            let cfg = gen.config().clone();
            let mel = read_mel(&a.mel, &mel_config(&cfg)?)?;
            let f0 = read_f0_csv(&a.f0, cfg.hop, cfg.sample_rate)?;
            if mel.frames != f0.frames() {
                return Err(invalid(format!(
                    "mel has {} frames but the F0 contour has {}",
                    mel.frames,
                    f0.frames()
                )));
            }
            let prior = generate_prior(&f0, &prior_config(&a.prior)?)?;
            let y = gen.forward(&prior, &mel)?;
            write_wav(&a.out, &y, wav_format(a.pcm16))?;
            writeln!(out, "wrote {} samples to {}", y.len(), a.out.display())?;
            Ok(())
        }
        Command::Mel(a) => {
            let cfg = match cfg_file {
                Some(p) => load_generator_config(p)?,
                None => GeneratorConfig::default(),
            };
            let x = read_wav(&a.wav, Some(cfg.sample_rate))?;
            let m = mel_spectrogram(&x, &mel_config(&cfg)?)?;
            write_mel(&a.out, &m)?;
            writeln!(out, "wrote {} frames × {} bands to {}", m.frames, m.bands, a.out.display())?;
            Ok(())
        }
        Command::AnalyzeAlias(a) => analyze_alias(a, out),
        Command::SinePowers(a) => {
            let d = sine_power_decompose(a.k)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["m", "a_m", "b_m"]).map_err(csv_err)?;
            for m in 0..d.a.len() {
                w.write_record([m.to_string(), d.a[m].to_string(), d.b[m].to_string()])
                    .map_err(csv_err)?;
            }
            emit(a.out.as_deref(), &finish(w)?, out)
        }
        Command::Gradcheck(a) => {
            let suite = checks::gradient_suite(a.seed)?;
            let mut failed = Vec::new();
            for c in &suite {
                writeln!(
                    out,
                    "{:<24} {} checked={:<5} rel={:.3e} abs={:.3e}",
                    c.name,
                    if c.passes() { "ok  " } else { "FAIL" },
                    c.report.checked,
                    c.report.relative_error,
                    c.report.max_abs_error
                )?;
                if !c.passes() {
                    failed.push(c.name);
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::internal(format!("gradient checks failed: {}", failed.join(", "))))
            }
        }
        Command::TrainToy(a) => train_toy(a, cfg_file, out),
        Command::Eval(a) => eval(a, out),
        Command::Info(a) => {
            let cfg = match cfg_file {
                Some(p) => load_generator_config(p)?,
                None => GeneratorConfig::default(),
            };
            writeln!(out, "params {}", count_params(&cfg))?;
            writeln!(out, "macs_per_second {}", count_macs_per_second(&cfg))?;
            writeln!(out, "receptive_field_frames {}", receptive_field_frames(&cfg))?;
            if a.layers {
                for l in layers(&cfg) {
                    writeln!(out, "layer {} params={} macs_per_frame={}", l.name, l.params, l.macs_per_frame)?;
                }
            }
            Ok(())
        }
    }
}

/// Generator configuration from a key = value file on top of the defaults.
pub fn load_generator_config(path: &Path) -> Result<GeneratorConfig> {
    GeneratorConfig::from_key_values(&KeyValues::parse(&std::fs::read_to_string(path)?)?)
}

fn prior_config(o: &PriorOptions) -> Result<PriorConfig> {
    Ok(PriorConfig {
        lc: o.lc,
        noise_sigma: o.noise_sigma,
        fmax: o.fmax,
        kind: o.kind.parse()?,
        seed: o.seed,
    })
}

fn wav_format(pcm16: bool) -> WavFormat {
    if pcm16 {
        WavFormat::Pcm16
    } else {
        WavFormat::Float32
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::internal(format!("CSV output: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::internal(format!("CSV output: {e}")))
}

/// Write to `path` atomically, or to `out` when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> CmdResult {
    match path {
        Some(p) => atomic_write(p, bytes),
        None => Ok(out.write_all(bytes)?),
    }
}

fn analyze_alias(a: &AliasArgs, out: &mut dyn Write) -> CmdResult {
    let f: Nonlinearity = a.nonlinearity.parse()?;
    if a.len < 16 {
        return Err(invalid("analysis length must be at least 16 samples"));
    }
    let x: Vec<f64> = (0..a.len)
        .map(|t| (2.0 * std::f64::consts::PI * a.f0 * t as f64 / a.sr as f64).sin())
        .collect();
    let x = Waveform::new(x, a.sr)?;
    let trace = anti_aliased_trace(&x, &f)?;
    let naive = Waveform::new(f.apply(x.samples()), a.sr)?;
    if let Some(path) = &a.out {
        let up = trace.upsampled.sample_rate();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["signal", "bin_hz", "log_amplitude_db"]).map_err(csv_err)?;
        let signals: [(&str, &[f64], u32); 5] = [
            ("upsampled", trace.upsampled.samples(), up),
            ("coefficient", &trace.coefficients, up),
            ("product", &trace.product, up),
            ("naive", naive.samples(), a.sr),
            ("anti_aliased", trace.output.samples(), a.sr),
        ];
        for (name, s, sr) in signals {
            for (hz, db) in log_spectrum_db(s, sr)? {
                w.write_record([name.to_string(), hz.to_string(), db.to_string()])
                    .map_err(csv_err)?;
            }
        }
        atomic_write(path, &finish(w)?)?;
    }
    let e_naive = alias_energy(&naive, a.f0, 4)?;
    let e_aa = alias_energy(&trace.output, a.f0, 4)?;
    writeln!(out, "alias_energy_db naive={e_naive:.2} anti_aliased={e_aa:.2}")?;
    if f == Nonlinearity::Relu {
        let r = relu_alias_report(a.f0, a.sr, a.len)?;
        writeln!(
            out,
            "reference_error_db naive={:.2} anti_aliased={:.2} reduction={:.2}",
            r.naive_db,
            r.anti_aliased_db,
            r.reduction_db()
        )?;
    }
    Ok(())
}

fn parse_weights(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("bad subdiscriminator weight `{v}`")))
        })
        .collect()
}

fn log_path(a: &TrainArgs) -> PathBuf {
    a.log.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".log.csv");
        PathBuf::from(s)
    })
}

fn train_toy(a: &TrainArgs, cfg_file: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let cfg = match cfg_file {
        Some(p) => load_generator_config(p)?,
        None => GeneratorConfig::toy(),
    };
    let prior = PriorConfig::default();
    let data = match (&a.data, a.synthetic) {
        (Some(dir), None) => Dataset::load_dir(dir, &cfg, &prior, a.seed)?,
        (None, Some(n)) => {
            let pairs = synthetic_utterances(n, a.synthetic_seconds, cfg.sample_rate, cfg.hop, a.seed)?;
            Dataset::new(pairs, &cfg, &prior, a.seed)?
        }
        _ => return Err(invalid("give exactly one of --data or --synthetic")),
    };
    if a.checkpoint_every == Some(0) {
        return Err(invalid("--checkpoint-every must be positive"));
    }
    let warm = a.warmup_steps > 0;
    let tc = TrainConfig {
        steps: a.steps,
        schedule_steps: Some(if warm { a.warmup_steps } else { a.steps }),
        seed: a.seed,
        batch_size: a.batch_size,
        segment_frames: a.segment_frames,
        lr: if warm { a.warmup_lr } else { a.lr },
        sub_weights: a.sub_weights.as_deref().map(parse_weights).transpose()?.unwrap_or_default(),
        mel_only: warm,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg, tc)?;
    let mut log = format!("{LOG_HEADER}\n");
    let total = a.warmup_steps + a.steps;
    for i in 0..total {
        if warm && i == a.warmup_steps {
            trainer.set_mel_only(false);
            trainer.restart_schedule(a.lr, a.steps)?;
        }
        let l = trainer.step(&data)?;
        if !l.loss_g.is_finite() {
            return Err(Error::internal(format!("non-finite loss at step {}", l.step)));
        }
        log.push_str(&l.csv_row());
        log.push('\n');
        if let Some(k) = a.checkpoint_every {
            if l.step % k == 0 {
                trainer.save(&a.out)?;
            }
        }
    }
    trainer.save(&a.out)?;
    let lp = log_path(a);
    atomic_write(&lp, log.as_bytes())?;
    writeln!(out, "trained {total} steps; checkpoint {} log {}", a.out.display(), lp.display())?;
    Ok(())
}

fn wav_names(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".wav"))
        .collect();
    names.sort();
    Ok(names)
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    let names = wav_names(&a.reference)?;
    if names.is_empty() {
        return Err(invalid(format!("no .wav files in {}", a.reference.display())));
    }
    let mr = MrStftConfig::default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["utterance", "mr_stft_distance"]).map_err(csv_err)?;
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for name in &names {
        let x = read_wav(&a.reference.join(name), None)?;
        let syn_path = a.syn.join(name);
        if !syn_path.exists() {
            return Err(invalid(format!("{} has no synthesized counterpart", name)));
        }
        let y = read_wav(&syn_path, Some(x.sample_rate()))?;
        let len = x.len().min(y.len());
        let x = rms_normalize(&Waveform::new(x.samples()[..len].to_vec(), x.sample_rate())?, EVAL_RMS);
        let y = rms_normalize(&Waveform::new(y.samples()[..len].to_vec(), y.sample_rate())?, EVAL_RMS);
        let d = mr_stft_distance(&x, &y, &mr)?;
        total += d;
        w.write_record([name.clone(), d.to_string()]).map_err(csv_err)?;
        if a.bins.is_some() {
            let stem = name.trim_end_matches(".wav");
            let f0_path = a.reference.join(format!("{stem}.f0.csv"));
            let sr = x.sample_rate();
            let f0 = read_f0_csv(&f0_path, sr as usize / 100, sr)?;
            pairs.push((x, y, f0));
        }
    }
    w.write_record(["mean".to_string(), (total / names.len() as f64).to_string()])
        .map_err(csv_err)?;
    emit(a.out.as_deref(), &finish(w)?, out)?;
    if let Some(path) = &a.bins {
        let bins = f0_binned_distance(&pairs, a.bin_hz)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["f0_bin_hz", "mean_distance", "frames"]).map_err(csv_err)?;
        for (k, s) in bins {
            w.write_record([k.to_string(), s.mean.to_string(), s.frames.to_string()])
                .map_err(csv_err)?;
        }
        atomic_write(path, &finish(w)?)?;
    }
    Ok(())
}
