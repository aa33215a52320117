pub mod attacks;
pub mod constraints;
pub mod generator;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod mitigation;
pub mod optim;
pub mod planning;
pub mod predictors;
pub mod scene;

/// Compiles and runs the guide's snippets as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/predictors.md")]
    mod predictors {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/constraints.md")]
    mod constraints {}
    #[doc = include_str!("../../../book/src/attacks.md")]
    mod attacks {}
    #[doc = include_str!("../../../book/src/mitigation.md")]
    mod mitigation {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
