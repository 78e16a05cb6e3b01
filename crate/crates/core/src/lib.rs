#![allow(clippy::needless_range_loop)] // index loops are the house style for numeric kernels

//! Discovery of multiple, diverse latent-space directions that steer an
//! image-property score by a requested amount.
//!
//! The crate is a self-contained desk-scale stack:
//!
//! * [`autodiff`] — a reverse-mode tape over dense `f64` tensors plus an
//!   Adam optimizer.
//! * [`generator`] — a frozen, seeded, differentiable toy generator that
//!   maps a latent code and class index to a rendered soft-disk image.
//! * [`scorers`] — differentiable image scorers (brightness, redness,
//!   colorfulness, object size) and evaluation-only image factors.
//! * [`directions`] — conditional direction networks trained with a
//!   score-targeting loss and a pairwise-cosine diversity regularizer,
//!   next to a single-vector linear baseline.
//! * [`evaluation`] — alpha sweeps, slope estimates, cosine-distance
//!   tables, pairwise interpolation heatmaps, image-factor trajectories,
//!   and a Fréchet distance proxy over pixel-moment features.
//!
//! Everything is deterministic: a seed fixes sampled batches, initial
//! weights, the test set, and therefore every reported number.

pub mod autodiff;
pub mod checkpoint;
pub mod directions;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod rng;
pub mod scorers;

pub use error::{Error, Result};
