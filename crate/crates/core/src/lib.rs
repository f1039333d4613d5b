//! Instructable semantic-network reasoner.

pub mod batch;
pub mod interp;
pub mod kernel;
pub mod lang;
pub mod policy;
pub mod rules;
pub mod semnet;
pub mod service;
