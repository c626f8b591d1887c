//! Multi-template temporal tracking framework for Siamese-style trackers.
//!
//! The crate is `no_std` (it needs `alloc`) and free of IO. It contains:
//!
//! * [`geometry`]: pixel and normalized boxes, IoU, center distance.
//! * [`template_bag`]: the adaptive bag of target templates.
//! * [`score_fusion`]: weighted fusion of per-template score maps and top-k
//!   candidate extraction.
//! * [`combinet`]: the temporal position predictor and its SGD trainer.
//! * [`selector`]: reliability scoring and final candidate selection.
//! * [`pipeline`]: per-frame orchestration behind the [`pipeline::AppearanceScorer`]
//!   contract.
//! * [`world`]: a deterministic synthetic tracking world with a mock scorer.
//! * [`metrics`]: OTB-style success and precision curves.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod combinet;
pub mod geometry;
pub mod metrics;
pub mod pipeline;
pub mod score_fusion;
pub mod selector;
pub mod template_bag;
pub mod world;
