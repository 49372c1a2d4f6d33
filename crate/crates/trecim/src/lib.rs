//! Behavioral simulator for a temperature-resilient multibit 2FeFET-1T
//! compute-in-memory array: device, cell, column, ADC, quantized inference
//! and energy accounting.

pub mod adc;
pub mod array;
pub mod cell;
pub mod device_models;
pub mod error;
pub mod nn_engine;
pub mod perf_model;

pub use error::{Error, Result};
