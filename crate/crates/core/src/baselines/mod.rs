//! Comparison forecasters: a multi-output perceptron and per-lead-time
//! Gaussian processes, both fed the same lagged feature windows.

pub mod gp;
pub mod linalg;
pub mod mlp;
pub mod standardize;
pub mod windows;

pub use gp::{gp_train_direct, gp_train_fixed, matern32, GpConfig, GpModel, MaternParams};
pub use mlp::{mlp_train, MlpConfig, MlpModel};
pub use standardize::Standardizer;
pub use windows::{
    build_windows, features_from_history, FeatureWindow, HISTORY_QUARTERS, N_FEATURES,
};
