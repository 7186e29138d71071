pub mod harness;
pub mod linalg;
pub mod lqr;
pub mod optimize;
pub mod problems;
pub mod quantize;
