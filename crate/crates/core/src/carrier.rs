//! Carrier side: expected service cost, profit accounting, and the search
//! over candidate off-peak prices and commissions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::equilibrium::{subgame_equilibrium, MarketOutcome};
use crate::error::SolveError;
use crate::response::{assigned_seller, ProactiveAllocation};
use crate::scenario::{pi_structure, PiStructure, PricingPolicy, Scenario};

/// Joint indicator count up to which exact enumeration is mandatory.
pub const EXACT_INDICATOR_LIMIT: usize = 22;
/// Hard ceiling on exact enumeration size (2^28 joint realizations).
pub const EXACT_HARD_LIMIT: usize = 28;
const MC_BATCH: u64 = 4096;

/// How the cost expectation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMethod {
    /// Enumerate every joint realization of the request and link indicators.
    Exact,
    /// Seeded sampling; substreams are derived per batch from the root
    /// seed so results do not depend on how work is split.
    MonteCarlo { samples: usize, seed: u64 },
    /// Exact when the joint indicator count allows it, sampling otherwise.
    Auto { samples: usize, seed: u64 },
}

impl CostMethod {
    fn resolve(self, indicators: usize) -> CostMethod {
        match self {
            CostMethod::Auto { samples, seed } => {
                if indicators <= EXACT_INDICATOR_LIMIT {
                    CostMethod::Exact
                } else {
                    CostMethod::MonteCarlo { samples, seed }
                }
            }
            other => other,
        }
    }
}

/// An evaluated carrier cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEstimate {
    pub value: f64,
    pub exact: bool,
    /// 0 for exact evaluation.
    pub samples: usize,
    /// Standard error of the estimate; 0 for exact evaluation.
    pub stderr: f64,
}

/// Random structure of the peak load for a fixed allocation.
struct PeakModel {
    /// Deterministic part of the peak load.
    base: f64,
    /// (probability, volume) for requests that do not ride a random link.
    plain: Vec<(f64, f64)>,
    /// Random links: probability the link is up.
    links: Vec<f64>,
    /// (request probability, link index, volume when down, volume when up).
    linked: Vec<(f64, usize, f64, f64)>,
}

fn build_peak_model(s: &Scenario, pi: &PiStructure, alloc: &ProactiveAllocation) -> PeakModel {
    let mut base = 0.0;
    let mut plain = Vec::new();
    let mut links: Vec<f64> = Vec::new();
    let mut link_index = std::collections::BTreeMap::new();
    let mut linked = Vec::new();

    for j in 0..s.num_users() {
        for m in 0..s.num_contents() {
            let p = s.users[j].interests[m];
            if p <= 0.0 {
                continue;
            }
            let size = s.catalog.sizes[m];
            let alpha = s.catalog.freshness[m];
            let own = size - alpha * alloc.x[j][m];
            match assigned_seller(s, pi, &alloc.x, j, m) {
                Some(seller) => {
                    let w = s.connectivity.omega[seller][j];
                    let with_peer = size - alpha * alloc.x[seller][m];
                    if w >= 1.0 {
                        if p >= 1.0 {
                            base += with_peer;
                        } else {
                            plain.push((p, with_peer));
                        }
                    } else {
                        let li = *link_index.entry((seller, j)).or_insert_with(|| {
                            links.push(w);
                            links.len() - 1
                        });
                        linked.push((p, li, own, with_peer));
                    }
                }
                None => {
                    if p >= 1.0 {
                        base += own;
                    } else {
                        plain.push((p, own));
                    }
                }
            }
        }
    }
    PeakModel {
        base,
        plain,
        links,
        linked,
    }
}

impl PeakModel {
    fn indicator_count(&self) -> usize {
        self.plain.len() + self.links.len() + self.linked.len()
    }
}

/// Total off-peak load: mean exogenous demand plus all proactive downloads.
pub fn offpeak_volume(s: &Scenario, alloc: &ProactiveAllocation) -> f64 {
    (0..s.num_users())
        .map(|j| s.users[j].offpeak_load + alloc.x[j].iter().sum::<f64>())
        .sum()
}

/// Expected peak-time volume served by the carrier (the mean of the peak
/// argument of the cost maximum).
pub fn expected_peak_volume(s: &Scenario, pi: &PiStructure, alloc: &ProactiveAllocation) -> f64 {
    let mut total = 0.0;
    for j in 0..s.num_users() {
        for m in 0..s.num_contents() {
            let p = s.users[j].interests[m];
            if p <= 0.0 {
                continue;
            }
            let size = s.catalog.sizes[m];
            let alpha = s.catalog.freshness[m];
            let own = size - alpha * alloc.x[j][m];
            total += p * match assigned_seller(s, pi, &alloc.x, j, m) {
                Some(seller) => {
                    let w = s.connectivity.omega[seller][j];
                    w * (size - alpha * alloc.x[seller][m]) + (1.0 - w) * own
                }
                None => own,
            };
        }
    }
    total
}

/// Carrier cost `beta * E[max(off-peak load, peak load)]`, the expectation
/// running over request and link indicators.
pub fn expected_cost(
    s: &Scenario,
    pi: &PiStructure,
    alloc: &ProactiveAllocation,
    method: CostMethod,
) -> Result<CostEstimate, SolveError> {
    let model = build_peak_model(s, pi, alloc);
    let off = offpeak_volume(s, alloc);
    let indicators = model.indicator_count();
    match method.resolve(indicators) {
        CostMethod::Exact => {
            if indicators > EXACT_HARD_LIMIT {
                return Err(SolveError::ExactTooLarge {
                    indicators,
                    max: EXACT_HARD_LIMIT,
                });
            }
            let value = exact_expected_max(off, &model);
            Ok(CostEstimate {
                value: s.beta * value,
                exact: true,
                samples: 0,
                stderr: 0.0,
            })
        }
        CostMethod::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(SolveError::NoSamples);
            }
            let (mean, stderr) = sample_expected_max(off, &model, samples, seed);
            Ok(CostEstimate {
                value: s.beta * mean,
                exact: false,
                samples,
                stderr: s.beta * stderr,
            })
        }
        CostMethod::Auto { .. } => unreachable!("resolved above"),
    }
}

fn exact_expected_max(off: f64, model: &PeakModel) -> f64 {
    let link_count = model.links.len();
    let mut expectation = 0.0;
    for link_state in 0u64..(1u64 << link_count) {
        let mut p_links = 1.0;
        for (li, &w) in model.links.iter().enumerate() {
            let up = link_state >> li & 1 == 1;
            p_links *= if up { w } else { 1.0 - w };
        }
        if p_links == 0.0 {
            continue;
        }
        // request volumes under this link state
        let mut terms: Vec<(f64, f64)> = model.plain.clone();
        let mut base = model.base;
        for &(p, li, down, up_vol) in &model.linked {
            let vol = if link_state >> li & 1 == 1 { up_vol } else { down };
            if p >= 1.0 {
                base += vol;
            } else {
                terms.push((p, vol));
            }
        }
        expectation += p_links * expected_max_over_requests(off, base, &terms);
    }
    expectation
}

fn expected_max_over_requests(off: f64, base: f64, terms: &[(f64, f64)]) -> f64 {
    let count = terms.len();
    let mut acc = 0.0;
    for mask in 0u64..(1u64 << count) {
        let mut prob = 1.0;
        let mut peak = base;
        for (i, &(p, v)) in terms.iter().enumerate() {
            if mask >> i & 1 == 1 {
                prob *= p;
                peak += v;
            } else {
                prob *= 1.0 - p;
            }
        }
        if prob > 0.0 {
            acc += prob * off.max(peak);
        }
    }
    acc
}

fn sample_expected_max(off: f64, model: &PeakModel, samples: usize, seed: u64) -> (f64, f64) {
    if model.indicator_count() == 0 {
        // fully deterministic peak; every draw is identical
        return (off.max(model.base), 0.0);
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let batches = (samples as u64).div_ceil(MC_BATCH);
    let mut remaining = samples as u64;
    for batch in 0..batches {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(batch);
        let this_batch = remaining.min(MC_BATCH);
        remaining -= this_batch;
        for _ in 0..this_batch {
            let mut peak = model.base;
            let mut link_up = [false; 64];
            for (li, &w) in model.links.iter().enumerate() {
                link_up[li] = rng.gen::<f64>() < w;
            }
            for &(p, v) in &model.plain {
                if rng.gen::<f64>() < p {
                    peak += v;
                }
            }
            for &(p, li, down, up_vol) in &model.linked {
                if rng.gen::<f64>() < p {
                    peak += if link_up[li] { up_vol } else { down };
                }
            }
            let value = off.max(peak);
            sum += value;
            sum_sq += value * value;
        }
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let stderr = (var / n).sqrt();
    (mean, stderr)
}

/// Carrier revenue and profit for one policy and strategy profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitBreakdown {
    pub revenue_offpeak: f64,
    pub revenue_peak: f64,
    pub revenue_commission: f64,
    pub cost: f64,
    pub profit: f64,
}

/// Expected commission base: selling price times expected traded fresh
/// volume over every (seller, buyer, content) triple.
pub fn expected_trade_value(s: &Scenario, pi: &PiStructure, alloc: &ProactiveAllocation) -> f64 {
    let mut total = 0.0;
    for m in 0..s.num_contents() {
        let seller = pi.top_user[m];
        let alpha = s.catalog.freshness[m];
        for b in 0..s.num_users() {
            if b != seller && assigned_seller(s, pi, &alloc.x, b, m) == Some(seller) {
                total += alloc.selling_prices[seller]
                    * s.connectivity.omega[seller][b]
                    * alpha
                    * (alloc.x[seller][m] - alloc.x[b][m])
                    * s.users[b].interests[m];
            }
        }
    }
    total
}

/// Evaluates the carrier profit `R = sum of payments - cost`, broken into
/// carrier-billed volumes and the commission share of peer trades.
pub fn profit(
    s: &Scenario,
    pi: &PiStructure,
    pol: &PricingPolicy,
    alloc: &ProactiveAllocation,
    method: CostMethod,
) -> Result<(ProfitBreakdown, CostEstimate), SolveError> {
    let revenue_offpeak = pol.y_o * offpeak_volume(s, alloc);
    let revenue_peak = pol.y_p * expected_peak_volume(s, pi, alloc);
    let revenue_commission = pol.gamma * expected_trade_value(s, pi, alloc);
    let cost = expected_cost(s, pi, alloc, method)?;
    let breakdown = ProfitBreakdown {
        revenue_offpeak,
        revenue_peak,
        revenue_commission,
        cost: cost.value,
        profit: revenue_offpeak + revenue_peak + revenue_commission - cost.value,
    };
    Ok((breakdown, cost))
}

/// Which follower game the carrier is optimizing over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Connectivity forced to zero.
    Disconnected,
    /// Connectivity as given by the scenario.
    Connected,
}

/// Knobs shared by the solver entry points.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub gamma_grid_size: usize,
    pub max_iterations: usize,
    pub cost_method: CostMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gamma_grid_size: 101,
            max_iterations: 100,
            cost_method: CostMethod::Auto {
                samples: 100_000,
                seed: 0,
            },
        }
    }
}

/// Searches the candidate pricing set: `y_p = price_cap`, `y_o` over the
/// price-cap multiples of the sorted freshness-popularity levels for the
/// mode, and the commission over a uniform grid. For every candidate the
/// followers' subgame equilibrium is solved and the profit evaluated;
/// ties go to the larger `y_o`, then the larger commission.
pub fn optimize_pricing(
    s: &Scenario,
    mode: Mode,
    opts: &SolverOptions,
) -> Result<(PricingPolicy, MarketOutcome), SolveError> {
    let effective = match mode {
        Mode::Disconnected => s.disconnected(),
        Mode::Connected => s.clone(),
    };
    let pi = pi_structure(&effective);
    let levels = match mode {
        Mode::Disconnected => &pi.sorted_disconnected,
        Mode::Connected => &pi.sorted_connected,
    };
    let any_link = effective
        .connectivity
        .omega
        .iter()
        .any(|row| row.iter().any(|&w| w > 0.0));
    // Without connectivity no trade can form and the commission never
    // binds; the grid collapses to its largest point by the tie rule.
    let gammas: Vec<f64> = if any_link {
        let g = opts.gamma_grid_size.max(2);
        (0..g).map(|i| i as f64 / (g - 1) as f64).collect()
    } else {
        vec![1.0]
    };

    let candidates: Vec<(f64, f64)> = levels
        .iter()
        .flat_map(|level| {
            let y_o = (effective.price_cap * level.ord).clamp(0.0, effective.price_cap);
            gammas.iter().map(move |&g| (y_o, g))
        })
        .collect();

    let evaluated: Vec<Result<(PricingPolicy, MarketOutcome), SolveError>> = candidates
        .par_iter()
        .map(|&(y_o, gamma)| {
            let pol = PricingPolicy {
                y_o,
                y_p: effective.price_cap,
                gamma,
            };
            let outcome = subgame_equilibrium(&effective, &pol, opts)?;
            Ok((pol, outcome))
        })
        .collect();

    let mut best: Option<(PricingPolicy, MarketOutcome)> = None;
    for item in evaluated {
        let (pol, outcome) = item?;
        let replace = match &best {
            None => true,
            Some((best_pol, best_outcome)) => {
                let p_new = outcome.profit.profit;
                let p_best = best_outcome.profit.profit;
                let tol = 1e-9 * p_best.abs().max(1.0);
                if p_new > p_best + tol {
                    true
                } else if p_new < p_best - tol {
                    false
                } else if pol.y_o != best_pol.y_o {
                    pol.y_o > best_pol.y_o
                } else {
                    pol.gamma > best_pol.gamma
                }
            }
        };
        if replace {
            best = Some((pol, outcome));
        }
    }
    Ok(best.expect("candidate set is never empty"))
}
