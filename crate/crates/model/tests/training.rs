use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavehax_autodiff::gradcheck::check_inputs;
use wavehax_autodiff::{checkpoint, Conv2dSpec, Graph, Tensor};
use wavehax_core::prior::PriorConfig;
use wavehax_core::signal::{mel_spectrogram, MelConfig, Waveform};
use wavehax_model::loss::{
    adv_loss, disc_loss, feature_matching_loss, features, mel_loss, MelLoss,
};
use wavehax_model::train::{
    load_generator, synthetic_utterances, train, Dataset, TrainConfig, Trainer,
};
use wavehax_model::{DiscriminatorBank, Generator, GeneratorConfig};

fn sine(f: f64, len: usize, sr: u32) -> Waveform {
    let x = (0..len)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / sr as f64).sin())
        .collect();
    Waveform::new(x, sr).unwrap()
}

fn small_mel() -> MelConfig {
    MelConfig {
        sample_rate: 24000,
        fft_size: 256,
        hop: 120,
        bands: 10,
        fmin: 0.0,
        fmax: 8000.0,
        log_floor: 1e-5,
    }
}

fn toy_data(count: usize) -> Dataset {
    let cfg = GeneratorConfig::toy();
    let pairs = synthetic_utterances(count, 0.3, 24000, 240, 5).unwrap();
    Dataset::new(pairs, &cfg, &PriorConfig::default(), 0).unwrap()
}

fn quick(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        segment_frames: 8,
        ..Default::default()
    }
}

#[test]
fn mel_loss_of_identical_signals_is_zero() {
    let x = sine(440.0, 4800, 24000);
    assert_eq!(mel_loss(&x, &x, &MelConfig::for_rate(24000)).unwrap(), 0.0);
}

#[test]
fn mel_loss_against_silence_matches_direct_evaluation() {
    let cfg = MelConfig::for_rate(24000);
    let x = sine(300.0, 4800, 24000);
    let zero = Waveform::zeros(4800, 24000).unwrap();
    let m = mel_spectrogram(&x, &cfg).unwrap();
    let floor = 1e-5f64.ln();
    let expected = m.data.iter().map(|v| (v - floor).abs()).sum::<f64>() / m.data.len() as f64;
    let got = mel_loss(&x, &zero, &cfg).unwrap();
    assert!(got > 0.0);
    assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
}

#[test]
fn mel_loss_rejects_length_mismatch() {
    let cfg = MelConfig::for_rate(24000);
    assert!(mel_loss(&sine(1.0, 4800, 24000), &sine(1.0, 4320, 24000), &cfg).is_err());
}

#[test]
fn mel_loss_gradient_on_short_signal() {
    let loss = MelLoss::new(&small_mel(), 480).unwrap();
    let target = Tensor::new(vec![1, 480], sine(700.0, 480, 24000).samples().to_vec()).unwrap();
    let x_hat = Tensor::uniform(&[1, 480], 0.5, &mut ChaCha8Rng::seed_from_u64(3));
    let r = check_inputs(
        &[x_hat],
        |g, v| {
            let t = g.constant(target.clone());
            loss.loss(g, v[0], t)
        },
        1e-5,
    )
    .unwrap();
    assert!(r.passes(1e-4), "{r:?}");
}

#[test]
fn feature_matching_through_linear_layer_scales_with_offset() {
    // A linear first layer maps x + c to D(x) + c·Σw, so the term is
    // the mean over output channels of |c·Σw_o|.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = Tensor::uniform(&[3, 1, 3, 2], 1.0, &mut rng);
    let b = Tensor::uniform(&[3], 1.0, &mut rng);
    let x = Tensor::uniform(&[1, 1, 8, 4], 1.0, &mut rng);
    let c = 0.37;
    let shifted = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v + c).collect()).unwrap();
    let mut g = Graph::new();
    let spec = Conv2dSpec { stride: (1, 1), padding: (0, 0), groups: 1 };
    let (wv, bv) = (g.constant(w.clone()), g.constant(b));
    let xr = g.constant(x);
    let xf = g.constant(shifted);
    let fr = g.conv2d(xr, wv, Some(bv), spec).unwrap();
    let ff = g.conv2d(xf, wv, Some(bv), spec).unwrap();
    let l = feature_matching_loss(&mut g, &[vec![fr]], &[vec![ff]]).unwrap();
    let expected = w
        .data()
        .chunks(6)
        .map(|row| (c * row.iter().sum::<f64>()).abs())
        .sum::<f64>()
        / 3.0;
    assert!((g.value(l).item().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn feature_matching_of_identical_inputs_is_zero_and_flows_to_generator() {
    let gen = Generator::new(GeneratorConfig::toy(), 1).unwrap();
    let disc = DiscriminatorBank::toy(2).unwrap();
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let prior = Tensor::uniform(&[1, 240 * n], 0.1, &mut rng);
    let target = Tensor::uniform(&[1, 240 * n], 0.3, &mut rng);
    let mut g = Graph::new();
    let mel = g.constant(Tensor::uniform(&[1, 100, n], 2.0, &mut rng));
    let y = gen.forward_graph(&mut g, gen.params(), &prior, mel, true).unwrap();
    let real = g.constant(target);
    let out_r = disc.forward(&mut g, disc.params(), real, false).unwrap();
    let same = disc.forward(&mut g, disc.params(), real, false).unwrap();
    let zero = feature_matching_loss(&mut g, &features(&out_r), &features(&same)).unwrap();
    assert_eq!(g.value(zero).item().unwrap(), 0.0);
    let out_f = disc.forward(&mut g, disc.params(), y, false).unwrap();
    let fm = feature_matching_loss(&mut g, &features(&out_r), &features(&out_f)).unwrap();
    let grads = g.backward(fm).unwrap();
    let mut store = gen.params().clone();
    store.zero_grad();
    g.accumulate(&grads, &mut store);
    assert!(store.grad_norm() > 0.0);
    let mut dstore = disc.params().clone();
    dstore.zero_grad();
    g.accumulate(&grads, &mut dstore);
    assert_eq!(dstore.grad_norm(), 0.0);
}

#[test]
fn zero_steps_leave_initialization_untouched() {
    let data = toy_data(2);
    let t = train(&data, GeneratorConfig::toy(), quick(0), |_| {}).unwrap();
    let init = Generator::new(GeneratorConfig::toy(), 0).unwrap();
    assert_eq!(
        checkpoint::encode(t.gen.params().named()),
        checkpoint::encode(init.params().named())
    );
}

#[test]
fn training_is_bit_reproducible() {
    let data = toy_data(3);
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    let mut bytes = Vec::new();
    for run in 0..2 {
        let mut log = Vec::new();
        let t = train(&data, GeneratorConfig::toy(), quick(3), |l| log.push(l.csv_row())).unwrap();
        let path = dir.path().join(format!("run{run}.wvhx"));
        t.save(&path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
        logs.push(log);
    }
    assert_eq!(logs[0], logs[1]);
    assert_eq!(bytes[0], bytes[1]);
    let other = train(&data, GeneratorConfig::toy(), TrainConfig { seed: 1, ..quick(3) }, |_| {}).unwrap();
    assert_ne!(
        checkpoint::encode(other.gen.params().named()),
        checkpoint::encode(Trainer::new(GeneratorConfig::toy(), quick(3)).unwrap().gen.params().named())
    );
}

#[test]
fn generator_objective_decomposes_exactly() {
    let data = toy_data(2);
    train(&data, GeneratorConfig::toy(), quick(3), |l| {
        let recomputed = 45.0 * l.loss_mel + 1.0 * l.loss_adv + 2.0 * l.loss_fm;
        assert!((l.loss_g - recomputed).abs() <= 1e-12 * recomputed.abs().max(1.0), "{l:?}");
        assert!(l.loss_adv >= 0.0 && l.loss_d >= 0.0 && l.loss_fm >= 0.0);
    })
    .unwrap();
}

#[test]
fn updates_touch_only_their_own_network() {
    let data = toy_data(2);
    let mut full = Trainer::new(GeneratorConfig::toy(), quick(10)).unwrap();
    let mut split = Trainer::new(GeneratorConfig::toy(), quick(10)).unwrap();
    let gen_init = checkpoint::encode(split.gen.params().named());
    let disc_init = checkpoint::encode(split.disc.params().named());

    full.step(&data).unwrap();
    let batch = split.sample(&data).unwrap();
    let mut g = Graph::new();
    let mel = g.constant(batch.mel.clone());
    let y = split.gen.forward_graph(&mut g, split.gen.params(), &batch.prior, mel, false).unwrap();
    let fake = g.value(y).clone();
    let lr = split.lr();
    split.disc_step(&batch.target, &fake, lr).unwrap();

    // the discriminator update leaves the generator alone
    assert_eq!(checkpoint::encode(split.gen.params().named()), gen_init);
    assert_ne!(checkpoint::encode(split.disc.params().named()), disc_init);
    // the generator update leaves the discriminator where its own step put it
    assert_eq!(
        checkpoint::encode(full.disc.params().named()),
        checkpoint::encode(split.disc.params().named())
    );
    assert_ne!(checkpoint::encode(full.gen.params().named()), gen_init);
}

#[test]
fn mel_only_regression_overfits_one_sample() {
    let cfg = GeneratorConfig::toy();
    let pairs = synthetic_utterances(1, 8.0 * 240.0 / 24000.0, 24000, 240, 9).unwrap();
    let data = Dataset::new(pairs, &cfg, &PriorConfig::default(), 0).unwrap();
    let tc = TrainConfig {
        mel_only: true,
        lr: 2e-3,
        ..quick(200)
    };
    let mut losses = Vec::new();
    train(&data, cfg, tc, |l| losses.push(l.loss_mel)).unwrap();
    let smooth: Vec<f64> = losses.chunks(40).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    assert!(smooth.windows(2).all(|w| w[1] < w[0]), "{smooth:?}");
}

#[test]
fn checkpoint_restores_generator() {
    let data = toy_data(2);
    let t = train(&data, GeneratorConfig::toy(), quick(1), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.wvhx");
    t.save(&path).unwrap();
    let g = load_generator(&path, None).unwrap();
    assert_eq!(g.config(), t.gen.config());
    assert_eq!(
        checkpoint::encode(g.params().named()),
        checkpoint::encode(t.gen.params().named())
    );
}

#[test]
fn bad_inputs_are_rejected() {
    let cfg = GeneratorConfig::toy();
    assert!(Dataset::new(Vec::new(), &cfg, &PriorConfig::default(), 0).is_err());
    let short = synthetic_utterances(1, 0.05, 24000, 240, 1).unwrap();
    let data = Dataset::new(short, &cfg, &PriorConfig::default(), 0).unwrap();
    assert!(train(&data, cfg.clone(), quick(1), |_| {}).is_err());
    assert!(Trainer::new(cfg.clone(), TrainConfig { batch_size: 0, ..quick(1) }).is_err());
    assert!(Trainer::new(cfg, TrainConfig { sub_weights: vec![1.0], ..quick(1) }).is_err());
}

proptest! {
    #[test]
    fn hinge_losses_are_non_negative(real in prop::collection::vec(-5.0f64..5.0, 1..12), fake in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let mut g = Graph::new();
        let r = g.constant(Tensor::from_vec(real));
        let f = g.constant(Tensor::from_vec(fake));
        let d = disc_loss(&mut g, &[r], &[f]).unwrap();
        let a = adv_loss(&mut g, &[f]).unwrap();
        prop_assert!(g.value(d).item().unwrap() >= 0.0);
        prop_assert!(g.value(a).item().unwrap() >= 0.0);
    }
}
