//! Reference implementations shared by several test targets.

#![allow(dead_code)]

pub mod corpus;
pub mod dsp;
pub mod nets;
pub mod rhythm;
