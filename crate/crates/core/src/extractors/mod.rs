//! Builds privacy feature vectors from external evidence: a sensitivity
//! annotation service, person-detector output and scene-classifier output.

mod batch;
mod people;
mod safesearch;
mod scene;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use batch::{
    cache_path, run_extraction, ExtractionOutcome, ExtractionReport, ExtractionSources, ImageFailure,
    ImageRefs, SceneSource,
};
pub use people::{load_detections, people_features, Detection, PeopleFeatures, DEFAULT_CONFIDENCE_THRESHOLD, PERSON_CLASS};
pub use safesearch::{
    parse_response, ClientConfig, RateLimiter, SafeSearchClient, SafeSearchResult, KEY_ENV, URL_ENV,
};
pub use scene::{load_categories, load_io_map, outdoor_probability, IoMap, SceneDistribution, SceneIo};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("rate limited: retries exhausted")]
    RateLimited,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected HTTP status {0}")]
    HttpStatus(u16),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("scene category '{0}' has no indoor/outdoor assignment")]
    UnmappedCategory(String),
    #[error("invalid scene distribution: {0}")]
    InvalidScene(String),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("no {0} available for this image")]
    MissingSource(&'static str),
    #[error("cache: {0}")]
    Cache(String),
}

impl ExtractError {
    pub(crate) fn input(path: &Path, message: impl Display) -> Self {
        ExtractError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}
