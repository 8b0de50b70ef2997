pub mod automl;
pub mod datagen;
pub mod eval;
pub mod featsel;
pub mod features;
pub mod ingest;
pub mod models;
pub mod seed;
