//! Classification of the social relationship of walking pedestrian pairs from their
//! trajectories: feature extraction, from-scratch feed-forward and LSTM networks,
//! training, confusion-matrix evaluation and a synthetic data generator.

pub mod data;
pub mod evaluation;
pub mod features;
pub mod models;
pub mod numerics;
pub mod synthgen;
pub mod training;
