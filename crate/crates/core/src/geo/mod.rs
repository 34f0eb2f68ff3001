//! Outcome-defined image domains: score locations, take the best and worst
//! fractions, and attach the nearest street image within a radius.

mod domain;
mod records;
mod spatial;

pub use domain::{
    build_domain_pair, read_domain_manifest, write_domain_manifest, DomainPair, DomainStats, Side,
    DEFAULT_FRACTION, DEFAULT_RADIUS_M,
};
pub use records::{
    aggregate_by_group, load_records, select_deciles, Deciles, LatLon, LoadedRecords, OutcomeId,
    OutcomeRecord, Polarity, RowError,
};
pub use spatial::{
    haversine_m, match_images, match_images_brute_force, read_image_index, write_image_index,
    ImageIndex, ImageRef, Match, EARTH_RADIUS_M, HEADINGS,
};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("malformed input: {0}")]
    Csv(String),
    #[error("fraction {0} outside (0, 0.5]")]
    InvalidFraction(f64),
    #[error("no records")]
    Empty,
    #[error("records mix outcomes {0} and {1}")]
    MixedOutcomes(OutcomeId, OutcomeId),
    #[error("records for {0} disagree on polarity")]
    MixedPolarity(OutcomeId),
    #[error("best and worst {k} records overlap (shared value {value})")]
    Overlap { k: usize, value: f64 },
}

#[cfg(test)]
mod props;
