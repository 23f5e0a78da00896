pub mod linalg;
pub mod oracle;
pub mod mesh;
pub mod par;
pub mod statistics;
pub mod device;
pub mod poisson;
pub mod recombination;
pub mod transport;
pub mod presets;
pub mod audit;
pub mod stepper;
pub mod io;
pub mod selftest;
