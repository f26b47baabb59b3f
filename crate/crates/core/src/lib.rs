//! Generation and scoring of Blackbird Language Matrix puzzles on verb
//! alternations.

pub mod builder;
pub mod catalog;
pub mod eval;
pub mod lexicon;
pub mod model;
pub mod pipeline;
pub mod realize;
pub mod seed;
pub mod ud;
