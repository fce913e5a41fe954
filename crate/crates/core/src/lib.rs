pub mod data_io;
pub mod error;
pub mod numcore;
pub mod quantile;
pub mod simulation;
pub mod transformer;
pub mod trainer;
pub mod backtest;
pub mod sentiment;
pub mod pipeline;
pub mod experiment;
pub mod cli;
