//! Simulator and design calculator for cavity electro-optic
//! microwave-to-optical converters.
//!
//! The pipeline solves the electrode potential and the optical
//! whispering-gallery modes of an axisymmetric ring on a shared grid,
//! combines them through the Pockels tensor into the vacuum coupling rate
//! `g0`, and evaluates the converter figures of merit.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod constants;
pub mod converter;
pub mod coupling;
pub mod eigen;
pub mod electrostatics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod material;
pub mod optics;
pub mod pipeline;
pub mod report;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result, Stage};
