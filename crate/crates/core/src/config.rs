//! Scenario document format. The key names here are the repo's contract:
//! `sizes`, `freshness`, `users[].interests`, `users[].offpeak_load`,
//! `connectivity` (full matrix or a scalar broadcast to all off-diagonal
//! entries), `beta`, `price_cap`.

use serde::Deserialize;

use crate::error::ValidationError;
use crate::scenario::{
    validate_parts, ConnectivityMatrix, ContentCatalog, Scenario, UserProfile,
};

#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioDoc {
    pub sizes: Vec<f64>,
    pub freshness: Vec<f64>,
    pub users: Vec<UserDoc>,
    #[serde(default)]
    pub connectivity: ConnectivityDoc,
    pub beta: f64,
    pub price_cap: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct UserDoc {
    pub interests: Vec<f64>,
    #[serde(default)]
    pub offpeak_load: f64,
}

/// Either one probability for every ordered pair or an explicit matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ConnectivityDoc {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Default for ConnectivityDoc {
    fn default() -> Self {
        ConnectivityDoc::Scalar(0.0)
    }
}

/// Checks every invariant of a raw document and returns the validated
/// scenario. Interest ties across users are handled downstream by the
/// deterministic ordering perturbation in [`crate::scenario::pi_structure`].
pub fn validate_scenario(doc: &ScenarioDoc) -> Result<Scenario, ValidationError> {
    let catalog = ContentCatalog {
        sizes: doc.sizes.clone(),
        freshness: doc.freshness.clone(),
    };
    let users: Vec<UserProfile> = doc
        .users
        .iter()
        .map(|u| UserProfile {
            interests: u.interests.clone(),
            offpeak_load: u.offpeak_load,
        })
        .collect();
    let n = users.len();
    let connectivity = match &doc.connectivity {
        ConnectivityDoc::Scalar(value) => {
            if !(0.0..=1.0).contains(value) {
                return Err(ValidationError::ConnectivityOutOfRange {
                    row: 0,
                    col: 0,
                    value: *value,
                });
            }
            ConnectivityMatrix::uniform(n, *value)
        }
        ConnectivityDoc::Matrix(rows) => ConnectivityMatrix {
            omega: rows.clone(),
        },
    };
    validate_parts(&catalog, &users, &connectivity, doc.beta, doc.price_cap)?;
    Ok(Scenario {
        catalog,
        users,
        connectivity,
        beta: doc.beta,
        price_cap: doc.price_cap,
    })
}

/// Parses and validates a scenario from TOML text.
pub fn scenario_from_toml(text: &str) -> Result<Scenario, ValidationError> {
    let doc: ScenarioDoc =
        toml::from_str(text).map_err(|e| ValidationError::Parse(e.to_string()))?;
    validate_scenario(&doc)
}
