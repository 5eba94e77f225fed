//! Hybrid forecasting for univariate and OHLC price series.
//!
//! The crate chains delay embedding ([`phase_space`]), wavelet smoothing
//! ([`wavelet`]), least-squares SVM regression with a Mexican-hat wavelet
//! kernel ([`svm`]) tuned by a real-coded genetic algorithm ([`ga`]), and a
//! fuzzy/weighted Markov correction of the relative residuals ([`markov`]).
//! Competing forecasts are merged under eight weighting schemes
//! ([`combine`]) and scored with a battery of accuracy measures and three
//! TOPSIS variants ([`evaluate`]). [`pipeline`] wires everything into the
//! seven forecasting methods and the two-stage combination protocol.
//!
//! Data-parallel inner loops (GA fitness, simplex grid searches, Gram rows,
//! nearest-neighbour scans) go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Results are
//! bit-identical in both modes.

pub mod combine;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod ga;
pub mod linalg;
pub mod markov;
pub mod par;
pub mod phase_space;
pub mod pipeline;
pub mod series;
pub mod svm;
pub mod wavelet;

pub use error::{Error, ErrorCategory, Result};
