pub mod admin;
pub mod bench;
pub mod check;
pub mod config;
pub mod http;
pub mod ingest;
pub mod net;
pub mod node;
pub mod store_net;
