//! Short-term ride-demand forecasting on a spatiotemporal grid.
//!
//! The pipeline turns raw ride requests into a `[timeslot x region]` demand
//! tensor, builds hourly feature windows, trains recurrent forecasters
//! (simple RNN, GRU, LSTM) with exact backpropagation through time, fits
//! DEMA and LASSO baselines on the same split, and reports RMSE/MAPE
//! city-wide, per hour of day and per region category.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
