pub mod data;
pub mod longhorizon;
pub mod schedules;
pub mod scoring;
pub mod synth;
