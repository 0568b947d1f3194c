pub mod arith;
pub mod error;
pub mod forms;
pub mod gf;
pub mod linalg;
pub mod groups;
pub mod words;
pub mod par;
pub mod stats;
pub mod trajectories;
pub mod normalsets;
pub mod spectral;
pub mod snlab;
