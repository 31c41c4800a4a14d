//! Body-fitted structured meshing and multi-level reduced-order thermal
//! surrogates for a five-parameter family of quadrilateral domains.

pub mod binio;
pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod geometry;
pub mod gp;
pub mod mesh;
pub mod multilevel;
pub mod pod;
pub mod surrogate;
pub mod thermal;

pub use error::{Error, Result};
