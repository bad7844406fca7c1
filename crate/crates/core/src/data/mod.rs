//! Dataset files, synthetic generators and a logistic regression trainer.

mod generate;
mod io;
mod train;

pub use generate::{
    generate_landscape_data, generate_mixture, generate_mixture_per_cell, landscape_rotate, landscape_rotation, MixtureSpec,
};
pub use io::{load_csv, load_model, model_to_json, read_csv, save_csv, save_model, write_csv};
pub use train::{accuracy, regularized_gradient, regularized_loss, train_logistic, StepRule, TrainConfig, TrainOutcome};
