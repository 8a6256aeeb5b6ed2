// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exponents;
pub mod measures;
pub mod spectra;
pub mod sphavg;
pub mod normlab;
pub mod counterex;
