pub mod bench;
pub mod cli;
pub mod gp;
pub mod optimizer;
pub mod param_space;
pub mod sim;
