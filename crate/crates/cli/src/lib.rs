//! Command line tools and the HTTP practice service.

pub mod commands;
pub mod models;
pub mod recognize;
pub mod service;
pub mod store;
