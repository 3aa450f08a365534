//! End-user side of the game: expected payments, optimal proactive
//! downloads, and optimal selling prices for a fixed carrier policy.
//!
//! Trading structure: for every content the only potential seller is the
//! user with the highest freshness-popularity product for it, and a buyer
//! trades with that seller only while the seller holds strictly more of
//! the content. Payments are expectations over request indicators
//! (Bernoulli per user/content interest) and link indicators (Bernoulli
//! per ordered user pair connectivity).

use crate::error::SolveError;
use crate::scenario::{PiStructure, PricingPolicy, Scenario};

/// Relative tolerance for detecting payment ties in best-response
/// decisions. Wide enough to absorb both floating-point noise and the
/// deliberate ordering perturbation; ties are then resolved by rule.
pub const TIE_REL: f64 = 1e-7;

/// Follower strategy profile: proactive download amounts and flat
/// per-unit selling prices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProactiveAllocation {
    /// `x[j][m]` in `[0, S_m]`.
    pub x: Vec<Vec<f64>>,
    /// `selling_prices[j]` in `[0, y_p]`.
    pub selling_prices: Vec<f64>,
}

impl ProactiveAllocation {
    /// Nothing cached; everyone quoting `price` (normally `y_p`).
    pub fn empty(n: usize, m: usize, price: f64) -> Self {
        Self {
            x: vec![vec![0.0; m]; n],
            selling_prices: vec![price; n],
        }
    }
}

/// Overlap indicators: `chi[i][j][m]` is 1 exactly when user `i` holds no
/// more of content `m` than user `j`, i.e. `i` is the buying side of the
/// pair for that content.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapIndicators {
    pub chi: Vec<Vec<Vec<u8>>>,
}

impl OverlapIndicators {
    pub fn from_allocation(alloc: &ProactiveAllocation) -> Self {
        let n = alloc.x.len();
        let m = alloc.x.first().map_or(0, Vec::len);
        let mut chi = vec![vec![vec![0u8; m]; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for c in 0..m {
                    chi[i][j][c] = u8::from(alloc.x[i][c] <= alloc.x[j][c]);
                }
            }
        }
        Self { chi }
    }
}

/// The seller serving `(buyer, m)`, if any: the content's top user, when
/// connected to the buyer and holding strictly more of the content.
pub fn assigned_seller(
    s: &Scenario,
    pi: &PiStructure,
    x: &[Vec<f64>],
    buyer: usize,
    m: usize,
) -> Option<usize> {
    let t = pi.top_user[m];
    if t != buyer && s.connectivity.omega[t][buyer] > 0.0 && x[t][m] > x[buyer][m] {
        Some(t)
    } else {
        None
    }
}

/// User `j`'s payment terms attributable to content `m`: off-peak
/// purchase, peer purchase and refresh when the link is up, refresh and
/// completion when it is down, minus commission-discounted resale revenue.
fn content_contribution(
    s: &Scenario,
    pi: &PiStructure,
    pol: &PricingPolicy,
    alloc: &ProactiveAllocation,
    j: usize,
    m: usize,
) -> f64 {
    let size = s.catalog.sizes[m];
    let alpha = s.catalog.freshness[m];
    let p = s.users[j].interests[m];
    let x_j = alloc.x[j][m];

    let mut total = pol.y_o * x_j;

    let consume = match assigned_seller(s, pi, &alloc.x, j, m) {
        Some(seller) => {
            let w = s.connectivity.omega[seller][j];
            let x_s = alloc.x[seller][m];
            let traded = alpha * (x_s - x_j);
            w * (alloc.selling_prices[seller] * traded + pol.y_p * (size - alpha * x_s))
                + (1.0 - w) * pol.y_p * (size - alpha * x_j)
        }
        None => pol.y_p * (size - alpha * x_j),
    };
    total += p * consume;

    if pi.top_user[m] == j {
        let mut sold = 0.0;
        for b in 0..s.num_users() {
            if b == j {
                continue;
            }
            if assigned_seller(s, pi, &alloc.x, b, m) == Some(j) {
                let w = s.connectivity.omega[j][b];
                sold += w * alpha * (x_j - alloc.x[b][m]) * s.users[b].interests[m];
            }
        }
        total -= alloc.selling_prices[j] * (1.0 - pol.gamma) * sold;
    }

    total
}

/// Expected daily payment of user `j` under the given strategy profile.
pub fn payment(
    s: &Scenario,
    pi: &PiStructure,
    pol: &PricingPolicy,
    alloc: &ProactiveAllocation,
    j: usize,
) -> Result<f64, SolveError> {
    if j >= s.num_users() {
        return Err(SolveError::UserIndexOutOfRange {
            index: j,
            users: s.num_users(),
        });
    }
    let mut mu = pol.y_o * s.users[j].offpeak_load;
    for m in 0..s.num_contents() {
        mu += content_contribution(s, pi, pol, alloc, j, m);
    }
    Ok(mu)
}

/// Optimal proactive downloads of user `j` holding everyone else's
/// strategy fixed. Payments are affine in each `x_m`, so the response is
/// bang-bang; both endpoints are evaluated through the payment function
/// itself. Exact ties go to caching at the carrier threshold and to
/// waiting when a peer trade is on the table.
pub fn proactive_best_response(
    s: &Scenario,
    pi: &PiStructure,
    pol: &PricingPolicy,
    alloc: &ProactiveAllocation,
    j: usize,
) -> Result<Vec<f64>, SolveError> {
    if j >= s.num_users() {
        return Err(SolveError::UserIndexOutOfRange {
            index: j,
            users: s.num_users(),
        });
    }
    let mut probe = alloc.clone();
    let mut response = Vec::with_capacity(s.num_contents());
    for m in 0..s.num_contents() {
        let size = s.catalog.sizes[m];
        probe.x[j][m] = 0.0;
        let wait_cost = content_contribution(s, pi, pol, &probe, j, m);
        let peer_available =
            assigned_seller(s, pi, &probe.x, j, m).is_some() && s.users[j].interests[m] > 0.0;
        probe.x[j][m] = size;
        let cache_cost = content_contribution(s, pi, pol, &probe, j, m);

        let tol = TIE_REL * size * pol.y_p.max(pol.y_o).max(1e-12);
        let cache = if cache_cost < wait_cost - tol {
            true
        } else if cache_cost > wait_cost + tol {
            false
        } else if peer_available {
            // indifference induced by a seller's price: wait and trade
            false
        } else {
            // carrier threshold tie: cache
            pi.pi_ord[j][m] * pol.y_p >= pol.y_o
        };
        let amount = if cache { size } else { 0.0 };
        probe.x[j][m] = alloc.x[j][m];
        response.push(amount);
    }
    Ok(response)
}

/// Expected fresh volume user `seller` sells across contents and buyers.
pub fn expected_sales(s: &Scenario, pi: &PiStructure, alloc: &ProactiveAllocation, seller: usize) -> f64 {
    let mut total = 0.0;
    for m in 0..s.num_contents() {
        if pi.top_user[m] != seller {
            continue;
        }
        let alpha = s.catalog.freshness[m];
        for b in 0..s.num_users() {
            if b != seller && assigned_seller(s, pi, &alloc.x, b, m) == Some(seller) {
                total += s.connectivity.omega[seller][b]
                    * alpha
                    * (alloc.x[seller][m] - alloc.x[b][m])
                    * s.users[b].interests[m];
            }
        }
    }
    total
}

/// Optimal flat selling price of `seller` over its cached contents,
/// holding every other selling price fixed and letting reachable buyers
/// re-derive their downloads at each candidate price.
///
/// Candidate prices are the buyer indifference points of every
/// (buyer, cached content) pair, clipped into `[0, y_p]`, plus `y_p`
/// itself; the seller's payment is piecewise linear and decreasing in the
/// price between consecutive buyer flips, so its minimum over `[0, y_p]`
/// is attained at one of these candidates. With no reachable buyer the
/// price defaults to `y_p`.
pub fn optimal_selling_price(
    s: &Scenario,
    pi: &PiStructure,
    pol: &PricingPolicy,
    alloc: &ProactiveAllocation,
    seller: usize,
) -> Result<f64, SolveError> {
    let n = s.num_users();
    if seller >= n {
        return Err(SolveError::UserIndexOutOfRange {
            index: seller,
            users: n,
        });
    }
    let cached: Vec<usize> = (0..s.num_contents())
        .filter(|&m| alloc.x[seller][m] > 0.0)
        .collect();
    if cached.is_empty() {
        return Err(SolveError::EmptyCachedSet { user: seller });
    }
    let reachable: Vec<usize> = (0..n)
        .filter(|&b| b != seller && s.connectivity.omega[seller][b] > 0.0)
        .collect();
    if reachable.is_empty() {
        return Ok(pol.y_p);
    }

    let mut candidates = vec![pol.y_p];
    for &b in &reachable {
        let w = s.connectivity.omega[seller][b];
        for &m in &cached {
            if pi.top_user[m] != seller {
                continue;
            }
            let pi_b = pi.pi[b][m];
            if pi_b <= 0.0 {
                continue;
            }
            let t = (pol.y_o - pol.y_p * (1.0 - w) * pi_b) / (w * pi_b);
            candidates.push(t.clamp(0.0, pol.y_p));
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite prices"));
    candidates.dedup();

    let mut best: Option<(f64, f64, f64)> = None; // (payment, sales, price)
    for &price in &candidates {
        let mut trial = alloc.clone();
        trial.selling_prices[seller] = price;
        for &b in &reachable {
            trial.x[b] = proactive_best_response(s, pi, pol, &trial, b)?;
        }
        let cost = payment(s, pi, pol, &trial, seller)?;
        let sales = expected_sales(s, pi, &trial, seller);
        let better = match best {
            None => true,
            Some((bc, bs, _)) => {
                let tol = TIE_REL * (bc.abs().max(1.0));
                if cost < bc - tol {
                    true
                } else if cost > bc + tol {
                    false
                } else if sales > bs + 1e-12 {
                    // payment tie: prefer the price that moves more volume
                    true
                } else {
                    // then prefer the higher price (no-market convention)
                    sales >= bs - 1e-12
                }
            }
        };
        if better {
            best = Some((cost, sales, price));
        }
    }
    Ok(best.expect("at least one candidate").2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{pi_structure, ConnectivityMatrix, ContentCatalog, UserProfile};

    fn one_user(alpha: f64, p: f64, load: f64) -> Scenario {
        Scenario {
            catalog: ContentCatalog {
                sizes: vec![100.0],
                freshness: vec![alpha],
            },
            users: vec![UserProfile {
                interests: vec![p],
                offpeak_load: load,
            }],
            connectivity: ConnectivityMatrix::zero(1),
            beta: 0.75,
            price_cap: 1.0,
        }
    }

    fn two_user_pair(alpha: f64, p_seller: f64, p_buyer: f64, omega: f64) -> Scenario {
        Scenario {
            catalog: ContentCatalog {
                sizes: vec![100.0],
                freshness: vec![alpha],
            },
            users: vec![
                UserProfile {
                    interests: vec![p_seller],
                    offpeak_load: 0.0,
                },
                UserProfile {
                    interests: vec![p_buyer],
                    offpeak_load: 0.0,
                },
            ],
            connectivity: ConnectivityMatrix::uniform(2, omega),
            beta: 0.75,
            price_cap: 1.0,
        }
    }

    #[test]
    fn disconnected_payment_with_full_cache() {
        let s = one_user(0.9, 1.0, 0.0);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.9,
            y_p: 1.0,
            gamma: 0.0,
        };
        let mut alloc = ProactiveAllocation::empty(1, 1, pol.y_p);
        alloc.x[0][0] = 100.0;
        let mu = payment(&s, &pi, &pol, &alloc, 0).unwrap();
        assert!((mu - 100.0).abs() < 1e-12); // 0.9*100 + 1*(100-90)
    }

    #[test]
    fn disconnected_payment_without_cache_is_peak_purchase() {
        let s = one_user(0.9, 1.0, 0.0);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.9,
            y_p: 1.0,
            gamma: 0.0,
        };
        let alloc = ProactiveAllocation::empty(1, 1, pol.y_p);
        let mu = payment(&s, &pi, &pol, &alloc, 0).unwrap();
        assert!((mu - 100.0).abs() < 1e-12); // y_p * S * p
    }

    #[test]
    fn connected_buyer_pays_peer_and_refresh_terms() {
        let s = two_user_pair(0.9, 1.0, 0.95, 1.0);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 0.0,
        };
        let mut alloc = ProactiveAllocation::empty(2, 1, pol.y_p);
        alloc.x[0][0] = 100.0;
        alloc.selling_prices[0] = 0.5;
        let mu = payment(&s, &pi, &pol, &alloc, 1).unwrap();
        // peer term 0.5*0.9*100*0.95 = 42.75; refresh term 1*(100-90)*0.95 = 9.5
        assert!((mu - (42.75 + 9.5)).abs() < 1e-9);
        // seller books the mirrored revenue
        let seller = payment(&s, &pi, &pol, &alloc, 0).unwrap();
        assert!((seller - (50.0 + 10.0 - 42.75)).abs() < 1e-9);
    }

    #[test]
    fn threshold_response_disconnected() {
        let pol = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 0.0,
        };
        let s = one_user(0.9, 1.0, 0.0);
        let pi = pi_structure(&s);
        let alloc = ProactiveAllocation::empty(1, 1, pol.y_p);
        let x = proactive_best_response(&s, &pi, &pol, &alloc, 0).unwrap();
        assert_eq!(x, vec![100.0]); // 0.9 >= 0.5

        let s = one_user(0.3, 1.0, 0.0);
        let pi = pi_structure(&s);
        let x = proactive_best_response(&s, &pi, &pol, &alloc, 0).unwrap();
        assert_eq!(x, vec![0.0]); // 0.3 < 0.5
    }

    #[test]
    fn carrier_threshold_tie_caches() {
        let pol = PricingPolicy {
            y_o: 0.9,
            y_p: 1.0,
            gamma: 0.0,
        };
        let s = one_user(0.9, 1.0, 0.0);
        let pi = pi_structure(&s);
        let alloc = ProactiveAllocation::empty(1, 1, pol.y_p);
        let x = proactive_best_response(&s, &pi, &pol, &alloc, 0).unwrap();
        assert_eq!(x, vec![100.0]);
    }

    #[test]
    fn buyer_indifference_at_seller_price_waits() {
        // pi_buyer = 0.8, y_o = 0.5, omega = 1: indifference price 0.625.
        let s = two_user_pair(0.8, 1.0, 1.0, 1.0);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 0.0,
        };
        let mut alloc = ProactiveAllocation::empty(2, 1, pol.y_p);
        alloc.x[0][0] = 100.0;
        alloc.selling_prices[0] = 0.625;
        let x = proactive_best_response(&s, &pi, &pol, &alloc, 1).unwrap();
        assert_eq!(x, vec![0.0], "buyer waits at exact indifference");
        // strictly below the indifference price the buyer still waits
        alloc.selling_prices[0] = 0.624;
        let x = proactive_best_response(&s, &pi, &pol, &alloc, 1).unwrap();
        assert_eq!(x, vec![0.0]);
        // above it the buyer caches for himself
        alloc.selling_prices[0] = 0.627;
        let x = proactive_best_response(&s, &pi, &pol, &alloc, 1).unwrap();
        assert_eq!(x, vec![100.0]);
    }

    #[test]
    fn selling_price_closed_form_full_connectivity() {
        let s = two_user_pair(0.9, 1.0, 0.8 / 0.9, 1.0); // buyer pi = 0.8
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 0.0,
        };
        let mut alloc = ProactiveAllocation::empty(2, 1, pol.y_p);
        alloc.x[0][0] = 100.0;
        let price = optimal_selling_price(&s, &pi, &pol, &alloc, 0).unwrap();
        assert!((price - 0.625).abs() < 1e-12);
    }

    #[test]
    fn selling_price_closed_form_partial_connectivity() {
        let s = two_user_pair(0.9, 1.0, 0.8 / 0.9, 0.5);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 0.0,
        };
        let mut alloc = ProactiveAllocation::empty(2, 1, pol.y_p);
        alloc.x[0][0] = 100.0;
        let price = optimal_selling_price(&s, &pi, &pol, &alloc, 0).unwrap();
        // (0.5 - 0.5*0.8) / (0.5*0.8) = 0.25
        assert!((price - 0.25).abs() < 1e-12);
    }

    #[test]
    fn selling_price_clips_at_peak_price_under_flat_pricing() {
        let s = two_user_pair(0.9, 1.0, 0.8 / 0.9, 1.0);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 1.0,
            y_p: 1.0,
            gamma: 0.0,
        };
        let mut alloc = ProactiveAllocation::empty(2, 1, pol.y_p);
        alloc.x[0][0] = 100.0;
        let price = optimal_selling_price(&s, &pi, &pol, &alloc, 0).unwrap();
        assert_eq!(price, 1.0); // formula gives 1.25, clipped to y_p
    }

    #[test]
    fn selling_price_defaults_to_peak_price_without_buyers() {
        let s = two_user_pair(0.9, 1.0, 0.9, 0.0);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 0.0,
        };
        let mut alloc = ProactiveAllocation::empty(2, 1, pol.y_p);
        alloc.x[0][0] = 100.0;
        assert_eq!(
            optimal_selling_price(&s, &pi, &pol, &alloc, 0).unwrap(),
            1.0
        );
    }

    #[test]
    fn selling_price_errors_on_empty_cache() {
        let s = two_user_pair(0.9, 1.0, 0.9, 1.0);
        let pi = pi_structure(&s);
        let pol = PricingPolicy {
            y_o: 0.5,
            y_p: 1.0,
            gamma: 0.0,
        };
        let alloc = ProactiveAllocation::empty(2, 1, pol.y_p);
        assert!(matches!(
            optimal_selling_price(&s, &pi, &pol, &alloc, 0),
            Err(SolveError::EmptyCachedSet { user: 0 })
        ));
    }

    #[test]
    fn overlap_indicators_follow_holdings() {
        let mut alloc = ProactiveAllocation::empty(2, 2, 1.0);
        alloc.x[0] = vec![100.0, 0.0];
        alloc.x[1] = vec![40.0, 0.0];
        let chi = OverlapIndicators::from_allocation(&alloc);
        assert_eq!(chi.chi[1][0][0], 1); // buyer 1 under seller 0
        assert_eq!(chi.chi[0][1][0], 0);
        assert_eq!(chi.chi[0][1][1], 1); // equal holdings count as overlap
        assert_eq!(chi.chi[1][0][1], 1);
    }
}
