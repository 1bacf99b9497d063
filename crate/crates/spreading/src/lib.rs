//! Command-line front end for `spreading-core`: spec files, coefficient
//! expressions, the built-in corpus, JSON/CSV output and the property suite.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod expr;
pub mod output;
pub mod verify;
