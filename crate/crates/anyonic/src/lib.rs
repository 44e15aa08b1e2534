//! Galois-conjugated fusion categories, Ocneanu tube algebras and strange-correlator
//! transfer-matrix spectra on a cylinder.

pub mod braiding;
pub mod category;
pub mod cylinder;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod spectra;
pub mod tube;

pub use error::{Error, Result};

pub type Category64 = category::CategoryData<f64>;
pub type Category32 = category::CategoryData<f32>;
pub type RSymbols64 = braiding::RSymbols<f64>;
pub type RSymbols32 = braiding::RSymbols<f32>;
