// `!(x > y)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod dynamics;
pub mod experiments;
pub mod innovation;
pub mod measures;
pub mod noise;
pub mod report;
pub mod rng;
pub mod stats;
