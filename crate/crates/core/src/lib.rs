//! Self-descriptive visual coding: piecewise-regular image decomposition,
//! similarity-invariant shape descriptors, perceptual groupings, vector
//! quantization into visual alphabets and dictionaries, and Hilbert-ordered
//! sentence encoding with image synthesis.

pub mod alphabet;
pub mod codec;
pub mod error;
pub mod grouping;
pub mod hilbert;
pub mod image;
pub mod moments;
pub mod quant;
pub mod rendering;
pub mod segment;

pub use error::{Result, VisemeError};
pub use image::{MultiImage, SampleSet};
