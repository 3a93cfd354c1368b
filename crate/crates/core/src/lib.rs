//! End-to-end gaze estimation from 36x60 grayscale eye images.
//!
//! The pipeline has three stages: a procedural synthetic eye renderer with
//! exact landmark annotations ([`synth`]), an anatomical-region isolation
//! network that predicts iris and visible-eyeball masks ([`aeri`]), and a
//! multistream gaze regressor that consumes the image together with the two
//! masks ([`gazenet`]). Supporting modules provide mask rasterization from
//! landmarks ([`maskgen`]), domain-randomization augmentations ([`augment`]),
//! evaluation metrics ([`metrics`]), and experiment orchestration
//! ([`harness`]). Everything runs on CPU and is deterministic given a seed.

pub mod augment;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod imgio;
pub mod maskgen;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod synth;

pub mod aeri;
pub mod gazenet;
pub mod harness;

pub use error::{Error, Result};
