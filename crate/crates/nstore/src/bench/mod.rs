pub mod fixture;
pub mod golden;
pub mod metrics;
pub mod query_load;
pub mod resources;
pub mod storage_load;
