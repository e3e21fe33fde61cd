//! Object-to-scene registration and scene-level evaluation for cluttered
//! tabletop scans.
//!
//! The crate covers the full pipeline:
//!
//! - [`geometry`]: triangle meshes, BVH queries, sampling, voxelization, rendering
//! - [`pose`]: rigid/similarity transforms and quaternion metrics
//! - [`registration`]: two-stage robust object-to-scan registration
//! - [`alignment`]: Sim(3) ICP, object matching and pose-supervision extraction
//! - [`metrics`]: contact, penetration, depth-error, Chamfer and IoU metrics plus the training loss
//! - [`decoder`]: numeric forward pass of the multi-object attention decoder
//! - [`scenegen`]: procedural contact-rich scene generation
//! - [`manifest`]: the scene manifest file format
//!
//! Interchangeable algorithm variants (registration pipelines, scene
//! difficulty composers, correspondence targets) sit behind traits and are
//! looked up by name through [`registry::Registry`].

// `!(x > y)` style comparisons are kept so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod decoder;
pub mod geometry;
pub mod manifest;
pub mod metrics;
pub mod pose;
pub mod registration;
pub mod registry;
pub mod scenegen;
