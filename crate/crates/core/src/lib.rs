pub mod classify;
pub mod dataset;
pub mod elements;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod layout;
pub mod pixelops;
pub mod textmerge;
