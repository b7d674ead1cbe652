//! Topic registry, empirical survey ingestion and the response log.

mod empirical;
mod records;
mod registry;

pub use empirical::{
    ingest_empirical_csv, ingest_means_csv, EmpiricalCounts, IngestError, MeanRow, MeansTable,
    Reject,
};
pub use records::{
    ingest_response_log, records_to_counts, write_response_log, Group, GroupLabel, GroupPair,
    LogIngest, RecordFilter, Regime, ResponseRecord, Source, Tally,
};
pub use registry::{
    apply_reversal, Dataset, Registry, RegistryError, TopicSpec, PARTY_PLACEHOLDER,
};
