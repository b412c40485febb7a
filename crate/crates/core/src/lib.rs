#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod clock;
pub mod contingency;
pub mod model;
pub mod opf;
pub mod planner;
pub mod separation;
pub mod solver;
