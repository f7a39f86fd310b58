pub mod corpus;
pub mod discovery;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod query;
pub mod rng;
