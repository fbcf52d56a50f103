//! Simulator of a blockchain whose blocks commit transactions without
//! executing them. World state is materialized on demand by replaying only
//! the provenance closure of a query, and payments are verified through
//! computational accounting.

pub mod accounting;
pub mod attacks;
pub mod executor;
pub mod keys;
pub mod ledger;
pub mod oracle;
pub mod query;
pub mod random;
pub mod scenario;
pub mod state;
pub mod tx;
pub mod txindex;
pub mod types;
pub mod vm;
