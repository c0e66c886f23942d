#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod dynamics;
pub mod localization;
pub mod mapping;
pub mod math;
pub mod planning;
pub mod rng;
pub mod runtime;
pub mod sensors;
pub mod world;
