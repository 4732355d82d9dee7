pub mod broker;
pub mod domain;
pub mod persist;
pub mod query;
pub mod store;
pub mod wire;
