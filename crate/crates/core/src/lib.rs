pub mod cli;
pub mod domain;
pub mod forecast;
pub mod lp;
pub mod policy;
pub mod risk;
pub mod sim;
pub mod tuning;
