//! Game instance: content catalog, user profiles, connectivity, and the
//! freshness-popularity structure every other module is built on.

use crate::error::ValidationError;

/// Per-user-index perturbation applied to freshness-popularity products so
/// that orderings are strict even when two users share an interest value.
/// Ordering decisions only; payment arithmetic always uses raw products.
pub const TIE_PERTURBATION: f64 = 1e-9;

/// The catalog of contents offered by the carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCatalog {
    /// Data amount of each content (units).
    pub sizes: Vec<f64>,
    /// Fraction of a proactive download still fresh at peak consumption.
    pub freshness: Vec<f64>,
}

impl ContentCatalog {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// One end-user: peak-time request probabilities and mean off-peak demand.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub interests: Vec<f64>,
    pub offpeak_load: f64,
}

/// Directed connectivity probabilities; `omega[j][i]` is the probability
/// that user `j` can transfer data to user `i` during the peak time.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    pub omega: Vec<Vec<f64>>,
}

impl ConnectivityMatrix {
    /// All off-diagonal entries set to `value`, diagonal fixed at zero.
    pub fn uniform(n: usize, value: f64) -> Self {
        let omega = (0..n)
            .map(|j| (0..n).map(|i| if i == j { 0.0 } else { value }).collect())
            .collect();
        Self { omega }
    }

    pub fn zero(n: usize) -> Self {
        Self::uniform(n, 0.0)
    }
}

/// A full game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub catalog: ContentCatalog,
    pub users: Vec<UserProfile>,
    pub connectivity: ConnectivityMatrix,
    /// Carrier cost factor (money per data unit).
    pub beta: f64,
    /// Regulated upper limit on both prices.
    pub price_cap: f64,
}

impl Scenario {
    pub fn num_contents(&self) -> usize {
        self.catalog.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Raw freshness-popularity product of user `j` for content `m`.
    pub fn pi(&self, j: usize, m: usize) -> f64 {
        self.catalog.freshness[m] * self.users[j].interests[m]
    }

    /// Re-checks every invariant; used after programmatic edits.
    pub fn validate(&self) -> Result<(), ValidationError> {
        validate_parts(
            &self.catalog,
            &self.users,
            &self.connectivity,
            self.beta,
            self.price_cap,
        )
    }

    /// A copy with every off-diagonal connectivity entry replaced.
    pub fn with_uniform_connectivity(&self, value: f64) -> Self {
        let mut s = self.clone();
        s.connectivity = ConnectivityMatrix::uniform(self.num_users(), value);
        s
    }

    /// A copy with all connectivity removed (disconnected play).
    pub fn disconnected(&self) -> Self {
        self.with_uniform_connectivity(0.0)
    }
}

/// Carrier strategy: off-peak price, peak price, and trading commission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingPolicy {
    pub y_o: f64,
    pub y_p: f64,
    pub gamma: f64,
}

impl PricingPolicy {
    /// Flat pricing at the regulated cap with no commission.
    pub fn flat(price_cap: f64) -> Self {
        Self {
            y_o: price_cap,
            y_p: price_cap,
            gamma: 0.0,
        }
    }

    pub fn validate(&self, price_cap: f64) -> Result<(), ValidationError> {
        for (field, value, hi) in [
            ("y_o", self.y_o, price_cap),
            ("y_p", self.y_p, price_cap),
            ("gamma", self.gamma, 1.0),
        ] {
            if !(0.0..=hi).contains(&value) || !value.is_finite() {
                return Err(ValidationError::PolicyOutOfRange {
                    field,
                    value,
                    lo: 0.0,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// One level of a sorted freshness-popularity sequence. `ord` is the
/// tie-perturbed value used for ordering and candidate prices, `raw` the
/// unperturbed product used in closed-form arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiLevel {
    pub ord: f64,
    pub raw: f64,
}

/// Freshness-popularity products plus the sorted structures the carrier
/// and the win-win analysis draw candidates from.
#[derive(Debug, Clone, PartialEq)]
pub struct PiStructure {
    /// Raw products `freshness[m] * interests[j][m]`, indexed `[j][m]`.
    pub pi: Vec<Vec<f64>>,
    /// Tie-perturbed products used for every ordering decision.
    pub pi_ord: Vec<Vec<f64>>,
    /// All `N*M` products, prefixed by 1.0, descending, deduplicated.
    pub sorted_disconnected: Vec<PiLevel>,
    /// Per-content maxima over users, prefixed by 1.0, descending, deduplicated.
    pub sorted_connected: Vec<PiLevel>,
    /// For each content, the user with the highest perturbed product.
    pub top_user: Vec<usize>,
}

/// Derives the freshness-popularity structure of a validated scenario.
/// Deterministic and idempotent.
pub fn pi_structure(s: &Scenario) -> PiStructure {
    let n = s.num_users();
    let m_count = s.num_contents();
    let mut pi = vec![vec![0.0; m_count]; n];
    let mut pi_ord = vec![vec![0.0; m_count]; n];
    for j in 0..n {
        for m in 0..m_count {
            let raw = s.pi(j, m);
            pi[j][m] = raw;
            pi_ord[j][m] = (raw - j as f64 * TIE_PERTURBATION).max(0.0);
        }
    }

    let mut top_user = vec![0usize; m_count];
    for m in 0..m_count {
        let mut best = 0usize;
        for j in 1..n {
            if pi_ord[j][m] > pi_ord[best][m] {
                best = j;
            }
        }
        top_user[m] = best;
    }

    let mut all_levels = vec![PiLevel { ord: 1.0, raw: 1.0 }];
    for j in 0..n {
        for m in 0..m_count {
            all_levels.push(PiLevel {
                ord: pi_ord[j][m],
                raw: pi[j][m],
            });
        }
    }
    let sorted_disconnected = sort_dedup(all_levels);

    let mut max_levels = vec![PiLevel { ord: 1.0, raw: 1.0 }];
    for m in 0..m_count {
        let j = top_user[m];
        max_levels.push(PiLevel {
            ord: pi_ord[j][m],
            raw: pi[j][m],
        });
    }
    let sorted_connected = sort_dedup(max_levels);

    PiStructure {
        pi,
        pi_ord,
        sorted_disconnected,
        sorted_connected,
        top_user,
    }
}

fn sort_dedup(mut levels: Vec<PiLevel>) -> Vec<PiLevel> {
    levels.sort_by(|a, b| b.ord.partial_cmp(&a.ord).expect("finite products"));
    levels.dedup_by(|a, b| a.ord == b.ord);
    levels
}

pub(crate) fn validate_parts(
    catalog: &ContentCatalog,
    users: &[UserProfile],
    connectivity: &ConnectivityMatrix,
    beta: f64,
    price_cap: f64,
) -> Result<(), ValidationError> {
    if catalog.is_empty() {
        return Err(ValidationError::EmptyCatalog);
    }
    if catalog.sizes.len() != catalog.freshness.len() {
        return Err(ValidationError::CatalogLengthMismatch {
            sizes: catalog.sizes.len(),
            freshness: catalog.freshness.len(),
        });
    }
    for (index, &value) in catalog.sizes.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ValidationError::NonPositiveSize { index, value });
        }
    }
    for (index, &value) in catalog.freshness.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(ValidationError::FreshnessOutOfRange { index, value });
        }
    }
    if users.is_empty() {
        return Err(ValidationError::NoUsers);
    }
    let m_count = catalog.len();
    for (user, profile) in users.iter().enumerate() {
        if profile.interests.len() != m_count {
            return Err(ValidationError::InterestLengthMismatch {
                user,
                got: profile.interests.len(),
                expected: m_count,
            });
        }
        for (index, &value) in profile.interests.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ValidationError::InterestOutOfRange { user, index, value });
            }
        }
        if !(profile.offpeak_load >= 0.0) || !profile.offpeak_load.is_finite() {
            return Err(ValidationError::NegativeOffpeakLoad {
                user,
                value: profile.offpeak_load,
            });
        }
    }
    let n = users.len();
    if connectivity.omega.len() != n {
        return Err(ValidationError::ConnectivityShape {
            expected: n,
            rows: connectivity.omega.len(),
        });
    }
    for (row, entries) in connectivity.omega.iter().enumerate() {
        if entries.len() != n {
            return Err(ValidationError::ConnectivityRowLength {
                row,
                got: entries.len(),
                expected: n,
            });
        }
        for (col, &value) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ValidationError::ConnectivityOutOfRange { row, col, value });
            }
            if row == col && value != 0.0 {
                return Err(ValidationError::NonZeroDiagonal { index: row, value });
            }
        }
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(ValidationError::NonPositiveBeta(beta));
    }
    if !(price_cap > 0.0) || !price_cap.is_finite() {
        return Err(ValidationError::NonPositivePriceCap(price_cap));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_user_scenario() -> Scenario {
        Scenario {
            catalog: ContentCatalog {
                sizes: vec![100.0; 5],
                freshness: vec![1.0, 0.95, 0.90, 0.85, 0.80],
            },
            users: vec![UserProfile {
                interests: vec![1.0; 5],
                offpeak_load: 0.0,
            }],
            connectivity: ConnectivityMatrix::zero(1),
            beta: 0.75,
            price_cap: 1.0,
        }
    }

    #[test]
    fn well_formed_scenario_is_accepted() {
        assert!(single_user_scenario().validate().is_ok());
    }

    #[test]
    fn out_of_range_freshness_names_field_and_index() {
        let mut s = single_user_scenario();
        s.catalog.freshness[2] = 1.2;
        let err = s.validate().unwrap_err();
        assert_eq!(
            err,
            ValidationError::FreshnessOutOfRange {
                index: 2,
                value: 1.2
            }
        );
        assert!(err.to_string().contains("freshness[2]"));
    }

    #[test]
    fn single_product() {
        let s = Scenario {
            catalog: ContentCatalog {
                sizes: vec![100.0],
                freshness: vec![1.0],
            },
            users: vec![UserProfile {
                interests: vec![0.5],
                offpeak_load: 0.0,
            }],
            connectivity: ConnectivityMatrix::zero(1),
            beta: 0.75,
            price_cap: 1.0,
        };
        let pi = pi_structure(&s);
        assert_eq!(pi.pi, vec![vec![0.5]]);
        let values: Vec<f64> = pi.sorted_disconnected.iter().map(|l| l.ord).collect();
        assert_eq!(values, vec![1.0, 0.5]);
    }

    #[test]
    fn products_multiply_and_sort() {
        let s = Scenario {
            catalog: ContentCatalog {
                sizes: vec![10.0, 10.0],
                freshness: vec![0.9, 0.8],
            },
            users: vec![UserProfile {
                interests: vec![1.0, 0.5],
                offpeak_load: 0.0,
            }],
            connectivity: ConnectivityMatrix::zero(1),
            beta: 1.0,
            price_cap: 1.0,
        };
        let pi = pi_structure(&s);
        assert_eq!(pi.pi, vec![vec![0.9, 0.4]]);
        let values: Vec<f64> = pi.sorted_disconnected.iter().map(|l| l.raw).collect();
        assert_eq!(values, vec![1.0, 0.9, 0.4]);
    }

    #[test]
    fn identical_interests_are_perturbed_for_ordering_only() {
        let s = Scenario {
            catalog: ContentCatalog {
                sizes: vec![100.0],
                freshness: vec![1.0],
            },
            users: vec![
                UserProfile {
                    interests: vec![0.5],
                    offpeak_load: 0.0,
                },
                UserProfile {
                    interests: vec![0.5],
                    offpeak_load: 0.0,
                },
            ],
            connectivity: ConnectivityMatrix::zero(2),
            beta: 1.0,
            price_cap: 1.0,
        };
        let pi = pi_structure(&s);
        assert_eq!(pi.pi[0][0], pi.pi[1][0]);
        assert!(pi.pi_ord[0][0] > pi.pi_ord[1][0]);
        assert_eq!(pi.pi_ord[1][0], 0.5 - TIE_PERTURBATION);
        assert_eq!(pi.top_user[0], 0);
    }

    #[test]
    fn two_user_structure_tracks_per_content_maxima() {
        // Both users fully interested in everything except user 1 trails off.
        let s = Scenario {
            catalog: ContentCatalog {
                sizes: vec![100.0; 5],
                freshness: vec![0.9; 5],
            },
            users: vec![
                UserProfile {
                    interests: vec![1.0; 5],
                    offpeak_load: 0.0,
                },
                UserProfile {
                    interests: vec![0.95, 0.90, 0.85, 0.80, 0.75],
                    offpeak_load: 0.0,
                },
            ],
            connectivity: ConnectivityMatrix::uniform(2, 1.0),
            beta: 0.75,
            price_cap: 1.0,
        };
        let pi = pi_structure(&s);
        assert!(pi.top_user.iter().all(|&j| j == 0));
        let raw: Vec<f64> = pi.sorted_connected.iter().map(|l| l.raw).collect();
        assert_eq!(raw, vec![1.0, 0.9]);
        // connected levels are a subset of the disconnected ones
        for level in &pi.sorted_connected {
            assert!(pi.sorted_disconnected.iter().any(|l| l.ord == level.ord));
        }
    }

    #[test]
    fn pi_structure_is_idempotent() {
        let s = single_user_scenario();
        assert_eq!(pi_structure(&s), pi_structure(&s));
    }

    #[test]
    fn sorted_sequences_strictly_descending_in_unit_interval() {
        let s = single_user_scenario();
        let pi = pi_structure(&s);
        for seq in [&pi.sorted_disconnected, &pi.sorted_connected] {
            for pair in seq.windows(2) {
                assert!(pair[0].ord > pair[1].ord);
            }
            for l in seq {
                assert!((0.0..=1.0).contains(&l.ord));
            }
            assert_eq!(seq[0].ord, 1.0);
        }
        // scenario has pi_1 = 1.0 which merges with the prefix after dedup
        assert_eq!(pi.sorted_disconnected.len(), 5);
    }

    #[test]
    fn policy_validation() {
        assert!(PricingPolicy::flat(1.0).validate(1.0).is_ok());
        let bad = PricingPolicy {
            y_o: 1.2,
            y_p: 1.0,
            gamma: 0.0,
        };
        assert!(matches!(
            bad.validate(1.0),
            Err(ValidationError::PolicyOutOfRange { field: "y_o", .. })
        ));
        let bad_gamma = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 1.5,
        };
        assert!(bad_gamma.validate(1.0).is_err());
    }
}
