// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod mpc;
pub mod report;
pub mod sim;
pub mod sweep;
pub mod trajectory;
