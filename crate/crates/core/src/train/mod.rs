//! Loss, optimizer, learning-rate schedule, training loop and restoration.

pub mod loss;
pub mod optim;
pub mod restore;
pub mod schedule;
pub mod trainer;

pub use loss::{charbonnier, charbonnier_value};
pub use optim::AdamW;
pub use restore::{evaluate_clip, oracle_noise, restore_clip, restore_window, MetricsRow};
pub use schedule::{lr_at, warmup_steps};
pub use trainer::{train_loop, write_loss_csv, LossRow, TrainOutcome};
