//! Face detection from clusters of facial-segment detections.
//!
//! Segment detectors (Viola-Jones style MB-LBP cascades, or an
//! annotation-driven fixture backend) fire on parts of a face. Each segment
//! implies a full-face box; segments whose implied faces agree are clustered,
//! subsets of each cluster become proposals, and a linear scorer over
//! co-occurrence probability features picks at most one face per frame.
//!
//! Real-valued code is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below cover the common case.

pub mod classifier;
pub mod clustering;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod kindset;
pub mod num;
pub mod pipeline;
pub mod proposal;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{iou, BBox, CanonicalTable, FaceEstimate, SegmentKind};
pub use imaging::GrayImage;
pub use kindset::KindSet;
pub use num::Scalar;

pub type BBoxF64 = geometry::BBox<f64>;
pub type BBoxF32 = geometry::BBox<f32>;
pub type FaceEstimateF64 = geometry::FaceEstimate<f64>;
pub type SegmentDetectionF64 = detector::SegmentDetection<f64>;
pub type ClusterF64 = clustering::Cluster<f64>;
pub type ProposalF64 = proposal::Proposal<f64>;
pub type LinearModelF64 = classifier::LinearModel<f64>;
pub type TrainedModelF64 = pipeline::TrainedModel<f64>;
pub type DetectionF64 = pipeline::Detection<f64>;
pub type CascadeModelF64 = detector::CascadeModel<f64>;
