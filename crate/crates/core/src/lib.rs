// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod game;
pub mod minigames;
pub mod session;
pub mod synth;
pub mod timeline;
