#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod ekf;
pub mod fif;
pub mod linalg;
pub mod marginalization;
pub mod math;
pub mod mhe;
pub mod pipeline;
pub mod qp;
pub mod sim;
pub mod window;
