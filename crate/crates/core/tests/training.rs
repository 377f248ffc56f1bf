mod common;

use std::sync::Arc;

use common::{tiny_config, tiny_dataset};
use diqp::checkpoint;
use diqp::clip::synthetic_clip;
use diqp::config::{LossConfig, LrSchedule, OptimizerConfig, Reduction};
use diqp::nn::{Graph, ParamStore};
use diqp::pipeline::dataset::ClipData;
use diqp::pipeline::{Dataset, SyntheticQuantizer};
use diqp::train::loss::{charbonnier, charbonnier_value};
use diqp::train::optim::AdamW;
use diqp::train::restore::{evaluate_clip, oracle_noise, restore_clip};
use diqp::train::schedule::{lr_at, warmup_steps};
use diqp::train::trainer::{loss_csv, train_loop};
use diqp::{DiqpError, RunConfig};
use diqp_tensor::gradcheck::relative_error;
use diqp_tensor::Tensor;
use proptest::prelude::*;

fn both_reductions() -> [LossConfig; 2] {
    [
        LossConfig::default(),
        LossConfig {
            reduction: Reduction::GlobalNorm,
            ..LossConfig::default()
        },
    ]
}

fn graph_loss(res: &Tensor, target: &Tensor, cfg: &LossConfig) -> (f64, Tensor) {
    let store = ParamStore::new();
    let mut g = Graph::new(&store, false);
    let r = g.tape.param(res.clone());
    let t = g.input(target.clone());
    let loss = charbonnier(&mut g, r, t, cfg).unwrap();
    let grads = g.tape.backward(loss).unwrap();
    (g.value(loss).item(), grads.tensor(&g.tape, r))
}

#[test]
fn charbonnier_examples() {
    let x = Tensor::from_fn(&[3, 4, 4, 3], |i| (i as f64 * 0.13).sin());
    for cfg in both_reductions() {
        assert_eq!(charbonnier_value(&x, &x, &cfg).unwrap(), 1e-3);
        assert_eq!(graph_loss(&x, &x, &cfg).0, 1e-3);
        let three = charbonnier_value(&Tensor::new(vec![1], vec![3.0]).unwrap(), &Tensor::zeros(&[1]), &cfg).unwrap();
        assert!((three - 3.000_000_166_666_662).abs() < 1e-12, "{three}");
        assert!(charbonnier_value(&x, &Tensor::zeros(&[3]), &cfg).is_err());
    }
}

#[test]
fn charbonnier_gradient_matches_differences_at_zero_and_random_residuals() {
    let target = Tensor::from_fn(&[24], |i| (i as f64 * 0.7).cos());
    let offsets = [Tensor::zeros(&[24]), Tensor::from_fn(&[24], |i| ((i * 37 % 11) as f64 - 5.0) * 0.01)];
    for cfg in both_reductions() {
        for off in &offsets {
            let res = target.zip_map(off, |a, b| a + b).unwrap();
            let (_, grad) = graph_loss(&res, &target, &cfg);
            let h = 1e-7;
            for i in 0..24 {
                let mut up = res.clone();
                up.data_mut()[i] += h;
                let mut down = res.clone();
                down.data_mut()[i] -= h;
                let numeric = (charbonnier_value(&up, &target, &cfg).unwrap()
                    - charbonnier_value(&down, &target, &cfg).unwrap())
                    / (2.0 * h);
                assert!(relative_error(grad.data()[i], numeric) < 1e-4, "{cfg:?} [{i}]");
            }
        }
    }
}

proptest! {
    #[test]
    fn charbonnier_grows_with_residual(seed in 0u64..1000, scale in 0.01f64..2.0) {
        let target = Tensor::from_fn(&[10], |i| ((i as u64 * 31 + seed) % 17) as f64 * 0.05);
        let res = target.map(|v| v + scale * 0.1);
        let doubled = target.map(|v| v + scale * 0.2);
        for cfg in both_reductions() {
            let a = charbonnier_value(&res, &target, &cfg).unwrap();
            let b = charbonnier_value(&doubled, &target, &cfg).unwrap();
            prop_assert!(a >= 1e-3);
            prop_assert!(b > a);
        }
    }

    #[test]
    fn lr_schedule_is_bounded_and_reaches_base(total in 10usize..5000, step in 0usize..5000) {
        let cfg = OptimizerConfig::default();
        let lr = lr_at(step.min(total - 1), total, &cfg);
        prop_assert!((0.0..=cfg.base_lr).contains(&lr));
        let warm = warmup_steps(&cfg, total);
        prop_assert_eq!(lr_at(warm, total, &cfg), cfg.base_lr);
    }
}

#[test]
fn lr_schedule_examples() {
    let cfg = OptimizerConfig::default();
    let total = 1000;
    let warm = warmup_steps(&cfg, total);
    assert_eq!(warm, 30);
    assert_eq!(lr_at(0, total, &cfg), 0.0);
    assert_eq!(lr_at(warm, total, &cfg), cfg.base_lr);
    assert!((lr_at(warm / 2, total, &cfg) - cfg.base_lr / 2.0).abs() < 1e-18);
    assert_eq!(lr_at(999, total, &cfg), cfg.base_lr);
    let cosine = OptimizerConfig {
        schedule: LrSchedule::Cosine,
        ..cfg.clone()
    };
    assert_eq!(lr_at(warm, total, &cosine), cfg.base_lr);
    assert!(lr_at(999, total, &cosine) < 1e-6);
}

#[test]
fn adamw_examples() {
    let base = OptimizerConfig {
        weight_decay: 0.0,
        ..OptimizerConfig::default()
    };
    // f(x) = x^2 at x = 1: the bias-corrected first step moves by lr.
    let mut p = vec![Tensor::scalar(1.0)];
    let mut opt = AdamW::new(&base, &p);
    opt.step(&mut p, &[Tensor::scalar(2.0)], 0.1, 0).unwrap();
    assert!((p[0].item() - 0.9).abs() < 1e-7);

    let mut p = vec![Tensor::from_fn(&[5], |i| i as f64 - 2.0)];
    let before = p.clone();
    let mut opt = AdamW::new(&base, &p);
    opt.step(&mut p, &[Tensor::zeros(&[5])], 0.1, 0).unwrap();
    assert_eq!(p, before);

    let decay = OptimizerConfig::default();
    let mut opt = AdamW::new(&decay, &p);
    opt.step(&mut p, &[Tensor::zeros(&[5])], 0.1, 0).unwrap();
    let factor = 1.0 - 0.1 * 0.02;
    for (a, b) in p[0].data().iter().zip(before[0].data()) {
        assert_eq!(*a, b * factor);
    }

    let err = opt.step(&mut p, &[Tensor::full(&[5], f64::NAN)], 0.1, 41).unwrap_err();
    assert!(matches!(err, DiqpError::Numerical { step: 41, .. }));
    assert_eq!(err.exit_code(), 3);
}

fn tiny_run(steps: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model = tiny_config();
    cfg.pipeline.synthetic_qp_max = 15;
    cfg.train.steps = steps;
    cfg.seed = 17;
    cfg
}

#[test]
fn training_rejects_an_empty_dataset() {
    let cfg = tiny_run(3);
    let empty = Dataset::from_clips(Vec::new()).unwrap();
    assert!(matches!(train_loop(&empty, &cfg, |_, _| Ok(())), Err(DiqpError::Invalid(_))));
}

#[test]
fn training_is_bit_reproducible() {
    let mut cfg = tiny_run(12);
    cfg.train.batch_size = 2;
    cfg.train.checkpoint_every = 5;
    let ds = tiny_dataset(&cfg.model);
    let run = || {
        let mut marks = Vec::new();
        let out = train_loop(&ds, &cfg, |step, m| {
            marks.push((step, checkpoint::to_bytes(m)));
            Ok(())
        })
        .unwrap();
        (out, marks)
    };
    let (a, marks_a) = run();
    let (b, marks_b) = run();
    assert_eq!(marks_a.iter().map(|m| m.0).collect::<Vec<_>>(), vec![5, 10]);
    assert_eq!(marks_a, marks_b);
    assert_eq!(loss_csv(&a.losses), loss_csv(&b.losses));
    assert_eq!(checkpoint::to_bytes(&a.model), checkpoint::to_bytes(&b.model));
    let (_, data) = common::tiny_data(&cfg.model, 7, 8);
    let ra = restore_clip(&a.model, &data.degraded, 9, &cfg.restore).unwrap();
    let rb = restore_clip(&b.model, &data.degraded, 9, &cfg.restore).unwrap();
    assert_eq!(ra, rb);
    assert_ne!(ra, data.degraded);
    let csv = loss_csv(&a.losses);
    assert!(csv.starts_with("step,lr,loss\n0,"));
    assert_eq!(csv.lines().count(), 13);
    let mut other = cfg.clone();
    other.seed = 18;
    let c = train_loop(&ds, &other, |_, _| Ok(())).unwrap();
    assert_ne!(loss_csv(&c.losses), csv);
}

#[test]
fn desk_model_loss_falls_over_200_steps() {
    let mut cfg = RunConfig::default();
    cfg.model.window_side = 16;
    cfg.model.lost.base_side = 2;
    cfg.model.look_ahead.offset = 3;
    cfg.train.steps = 200;
    cfg.optimizer.base_lr = 1e-3;
    let q = SyntheticQuantizer::new(4.0);
    let raw = Arc::new(synthetic_clip(9, 32, 32, 21));
    let clips = [3, 6, 9, 12]
        .iter()
        .map(|&qp| ClipData::new("smoke", qp, raw.clone(), q.degrade(&raw, qp).unwrap(), &cfg.model).unwrap())
        .collect();
    let ds = Dataset::from_clips(clips).unwrap();
    let out = train_loop(&ds, &cfg, |_, _| Ok(())).unwrap();
    let mean = |r: &[diqp::train::trainer::LossRow]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
    let (first, last) = (mean(&out.losses[..20]), mean(&out.losses[180..]));
    assert!(last < first, "first {first} last {last}");
}

#[test]
fn perfect_noise_recovers_the_raw_window() {
    let cfg = tiny_config();
    let ex = tiny_dataset(&cfg).example(0, [2, 6], &cfg).unwrap();
    let noise = oracle_noise(ex.target(), &ex.input.clip).unwrap();
    let res = ex.input.clip.zip_map(&noise, |a, b| a + b).unwrap();
    let target = ex.target();
    let ulps = res
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs())
        .max()
        .unwrap();
    assert!(ulps <= 1, "{ulps} ulps");
    let bytes = |t: &Tensor| t.data().iter().map(|&v| diqp::imageio::to_u8(v)).collect::<Vec<_>>();
    assert_eq!(bytes(&res), bytes(target));
    assert_eq!(diqp::metrics::psnr(&res, target, 1.0).unwrap(), 99.0);
    // The raw window is the masked raw clip restricted to the mask.
    let masked = ex.sample.mask.apply(&tiny_dataset(&cfg).clips[0].raw.select(&[0, 1, 2]).unwrap()).unwrap();
    assert_eq!(&masked.crop(2, 6, [8, 8]).unwrap().into_tensor(), target);
}

#[test]
fn evaluation_rows_cover_every_segment() {
    let cfg = tiny_config();
    let model = diqp::DiqpModel::new(&cfg, 0).unwrap();
    let (raw, data) = common::tiny_data(&cfg, 9, 2);
    let rows = evaluate_clip(&model, "c", &raw, &data.degraded, 9, &Default::default()).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        // A zero-initialized model returns its input.
        assert_eq!((r.psnr_in, r.ssim_in), (r.psnr_out, r.ssim_out));
        assert_eq!(r.qp, 9);
    }
}
