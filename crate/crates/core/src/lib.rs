pub mod accountant;
pub mod dataset;
pub mod preprocess;
pub mod synth;
