//! The chapters of the guide in `book/` and the README, compiled so that
//! every snippet is checked by `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/trajectories.md")]
pub mod trajectories {}

#[doc = include_str!("../../../book/src/linearization.md")]
pub mod linearization {}

#[doc = include_str!("../../../book/src/qp.md")]
pub mod qp {}

#[doc = include_str!("../../../book/src/parallel_shooting.md")]
pub mod parallel_shooting {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/closed_loop.md")]
pub mod closed_loop {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
