pub mod pareto;
pub mod problem;
pub mod program;
pub mod surrogate;
pub mod acquisition;
pub mod solver;
pub mod config;
pub mod optimizer;
pub mod store;
pub mod archive;
pub mod benchmark;
pub mod scheduler;
