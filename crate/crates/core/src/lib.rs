//! Skeleton-based activity scene recognition.
//!
//! A scene is a sequence of 15-joint skeleton frames. It is cut into
//! primitive actions per body part by speed thresholding, each action is
//! summarized by sampled trajectory vectors, and the resulting fixed-size
//! feature matrix is classified by a row-convolution network.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod classifier;
pub mod descriptor;
mod error;
pub mod geometry;
pub mod ingest;
pub mod kinematics;
pub mod partition;
pub mod scalar;
pub mod skeleton;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Vector3 = geometry::Vec3<f64>;
pub type Frame = skeleton::SkeletonFrame<f64>;
pub type Sequence = skeleton::SkeletonSequence<f64>;
pub type Sequence32 = skeleton::SkeletonSequence<f32>;
pub type FeatureMatrix = descriptor::SceneFeatureMatrix<f64>;
pub type FeatureMatrix32 = descriptor::SceneFeatureMatrix<f32>;
pub type PrimitiveAction = partition::PrimitiveAction<f64>;
pub type Model = classifier::ClassifierModel<f64>;
pub type Model32 = classifier::ClassifierModel<f32>;
