pub mod experiment;
pub mod fakerefs;
pub mod metaeval;
pub mod negatives;
pub mod score;
pub mod train;
