//! Command-line front end and HTTP service for picbreeder experiments.

pub mod server;
