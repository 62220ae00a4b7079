pub mod capacity;
pub mod channels;
pub mod error;
pub mod fidelity;
pub mod linalg;
pub mod procedures;
pub mod random;
pub mod report;
pub mod sources;
