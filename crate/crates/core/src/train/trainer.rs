//! Seeded training loop.

use std::fmt::Write as _;
use std::path::Path;

use diqp_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{DiqpError, Result};
use crate::model::DiqpModel;
use crate::nn::Graph;
use crate::pipeline::{Dataset, TrainExample};
use crate::train::loss::charbonnier;
use crate::train::optim::AdamW;
use crate::train::schedule::lr_at;

/// Separates the data stream from the initialisation stream.
const DATA_STREAM: u64 = 0x6461_7461;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

pub struct TrainOutcome {
    pub model: DiqpModel,
    pub losses: Vec<LossRow>,
}

/// Loss and parameter gradients of one example.
pub fn example_loss(model: &DiqpModel, ex: &TrainExample, cfg: &RunConfig) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new(&model.store, true);
    let out = model.forward(&mut g, &ex.input)?;
    let iqp = g.input(ex.input.clip.clone());
    let res = g.tape.add(iqp, out.noise)?;
    let target = g.input(ex.target().clone());
    let loss = charbonnier(&mut g, res, target, &cfg.loss)?;
    let value = g.value(loss).item();
    let grads = g.param_grads(loss)?;
    Ok((value, grads))
}

/// Train from a fresh model seeded by `cfg.seed`. `on_checkpoint` runs
/// every `train.checkpoint_every` steps.
pub fn train_loop(
    dataset: &Dataset,
    cfg: &RunConfig,
    mut on_checkpoint: impl FnMut(usize, &DiqpModel) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(DiqpError::Invalid("training dataset is empty".into()));
    }
    let mut model = DiqpModel::new(&cfg.model, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(DATA_STREAM);
    let params: Vec<Tensor> = model.store.ids().map(|id| model.store.get(id).clone()).collect();
    let mut opt = AdamW::new(&cfg.optimizer, &params);
    drop(params);
    let steps = cfg.train.steps;
    let batch = cfg.train.batch_size;
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let lr = lr_at(step, steps, &cfg.optimizer);
        let mut total = 0.0;
        let mut acc: Option<Vec<Tensor>> = None;
        for _ in 0..batch {
            let ex = dataset.sample(&mut rng, &cfg.model)?;
            let (loss, grads) = example_loss(&model, &ex, cfg)?;
            total += loss;
            acc = Some(match acc {
                None => grads,
                Some(mut a) => {
                    for (a, g) in a.iter_mut().zip(&grads) {
                        a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                    }
                    a
                }
            });
        }
        let loss = total / batch as f64;
        if !loss.is_finite() {
            return Err(DiqpError::Numerical {
                step,
                what: format!("loss became {loss}"),
            });
        }
        let mut grads = acc.expect("batch is non-empty");
        if batch > 1 {
            let s = 1.0 / batch as f64;
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= s));
        }
        opt.step(model.store.values_mut(), &grads, lr, step)?;
        losses.push(LossRow { step, lr, loss });
        let every = cfg.train.checkpoint_every;
        if every > 0 && (step + 1) % every == 0 {
            on_checkpoint(step + 1, &model)?;
        }
    }
    Ok(TrainOutcome { model, losses })
}

pub fn loss_csv(rows: &[LossRow]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.step, r.lr, r.loss).expect("string write");
    }
    s
}

pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    std::fs::write(path, loss_csv(rows)).map_err(|e| DiqpError::io(path, e))
}
