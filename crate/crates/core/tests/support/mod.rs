#![allow(dead_code)]

pub mod abel_oracle;
pub mod fd_oracle;
