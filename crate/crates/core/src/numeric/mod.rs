//! Dense linear algebra, projection heads, AdamW and the learning-rate
//! schedule. All training math is 64-bit.

mod head;
mod matrix;
mod optim;

pub use head::{random_unit, HeadGrads, ProjectionHead, UnitProjection};
pub use matrix::{cosine_sim, dot, l2_normalize, l2_normalize_backward, norm, EmbeddingMatrix, NORM_EPS};
pub use optim::{adamw_step, lr_at, AdamWConfig, OptimizerState, ScheduleConfig};
