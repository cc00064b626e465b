//! Quality metrics, the rate-distortion sweep, convex hulls across scales,
//! and BD-BR against the Lanczos reference hull.

pub mod bdrate;
pub mod hull;
pub mod metrics;
pub mod report;
pub mod sweep;

pub use bdrate::bd_br;
pub use hull::{convex_hull, convex_hull_oracle};
pub use metrics::{psnr, psnr_weighted, ssim, PlaneSel};
pub use report::{Metric, SweepRow};
pub use sweep::{evaluate_point, PointFilter, RDPoint};
