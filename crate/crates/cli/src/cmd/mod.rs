pub mod eval;
pub mod infer;
pub mod synth;
pub mod tools;
pub mod train;
