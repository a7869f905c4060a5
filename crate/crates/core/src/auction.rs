//! Sealed-bid auction settlement over a discrete bid grid.
//!
//! All bidders share a common value for the good, normalized to 1. Bids live
//! on an evenly spaced grid from 0 to 1. A single settlement resolves the
//! winner (uniform tie-break), the price under the chosen payment rule, and
//! per-bidder rewards. `counterfactual_action_values` computes, for every
//! grid level, the expected reward a bidder would have earned against a fixed
//! set of rival bids -- the quantity synchronous Q-updates feed on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete bid levels `0 = b_0 < b_1 < ... < b_K = 1`, evenly spaced.
#[derive(Debug, Clone, PartialEq)]
pub struct BidGrid {
    levels: Vec<f64>,
}

impl BidGrid {
    /// Evenly spaced grid with `num_actions` levels: `{0, 1/(n-1), ..., 1}`.
    pub fn evenly_spaced(num_actions: usize) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::Config(format!(
                "bid grid needs at least 2 levels, got {num_actions}"
            )));
        }
        let k = (num_actions - 1) as f64;
        let levels = (0..num_actions).map(|j| j as f64 / k).collect();
        Ok(Self { levels })
    }

    pub fn num_actions(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Bid value at `index`. Panics if out of range.
    pub fn level(&self, index: usize) -> f64 {
        self.levels[index]
    }

    /// Spacing between adjacent levels.
    pub fn step(&self) -> f64 {
        self.levels[1] - self.levels[0]
    }

    /// Grid index of `bid` if it is a grid level (within 1e-9).
    pub fn index_of(&self, bid: f64) -> Option<usize> {
        self.levels.iter().position(|&l| (l - bid).abs() < 1e-9)
    }

    fn require_index(&self, bid: f64) -> Result<usize> {
        self.index_of(bid)
            .ok_or_else(|| Error::Domain(format!("bid {bid} is not a grid level")))
    }
}

/// Payment rule. Serializes as the `design` indicator used throughout the
/// experiment dataset: 1 = first-price, 0 = second-price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum PaymentRule {
    FirstPrice,
    SecondPrice,
}

impl PaymentRule {
    /// Numeric `design` code: 1 for first-price, 0 for second-price.
    pub fn design_code(self) -> u8 {
        match self {
            PaymentRule::FirstPrice => 1,
            PaymentRule::SecondPrice => 0,
        }
    }
}

impl From<PaymentRule> for u8 {
    fn from(rule: PaymentRule) -> u8 {
        rule.design_code()
    }
}

impl TryFrom<u8> for PaymentRule {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, String> {
        match code {
            1 => Ok(PaymentRule::FirstPrice),
            0 => Ok(PaymentRule::SecondPrice),
            other => Err(format!("design code must be 0 or 1, got {other}")),
        }
    }
}

/// Result of settling one auction.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    /// Index of the winning bidder.
    pub winner: usize,
    /// The winning bid (a grid level).
    pub winning_bid: f64,
    /// Price paid by the winner.
    pub price: f64,
    /// Per-bidder rewards: `1 - price` for the winner, 0 for everyone else.
    pub rewards: Vec<f64>,
    /// Number of bidders tied at the highest bid.
    pub tie_count: usize,
}

/// Compact index-level settlement used on the simulation hot path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Settled {
    pub winner: usize,
    pub winning_index: usize,
    pub price: f64,
    pub tie_count: usize,
}

/// Settle an auction given bids as grid indices.
///
/// Consumes exactly one uniform draw from `rng` when two or more bidders tie
/// at the top, and none otherwise; the tied winner is picked uniformly.
pub(crate) fn settle_indices<R: Rng>(
    rule: PaymentRule,
    bids: &[usize],
    grid: &BidGrid,
    rng: &mut R,
) -> Settled {
    debug_assert!(bids.len() >= 2, "settlement needs at least two bidders");
    let mut max1 = bids[0];
    let mut max2: Option<usize> = None;
    for &b in &bids[1..] {
        if b > max1 {
            max2 = Some(max1);
            max1 = b;
        } else {
            max2 = Some(max2.map_or(b, |m| m.max(b)));
        }
    }
    let max2 = max2.expect("at least two bidders");
    let tie_count = bids.iter().filter(|&&b| b == max1).count();
    let winner = if tie_count == 1 {
        bids.iter().position(|&b| b == max1).unwrap()
    } else {
        // One draw regardless of how many are tied.
        let u: f64 = rng.gen();
        let pick = ((u * tie_count as f64) as usize).min(tie_count - 1);
        bids.iter()
            .enumerate()
            .filter(|&(_, &b)| b == max1)
            .nth(pick)
            .map(|(i, _)| i)
            .unwrap()
    };
    let price = match rule {
        PaymentRule::FirstPrice => grid.level(max1),
        PaymentRule::SecondPrice => grid.level(max2),
    };
    Settled {
        winner,
        winning_index: max1,
        price,
        tie_count,
    }
}

/// Settle one sealed-bid auction.
///
/// Every bid must be a grid level; the winner pays their own bid under
/// `FirstPrice` and the second-highest submitted bid under `SecondPrice`.
/// With a tie at the top the winner is drawn uniformly among the tied
/// bidders, consuming exactly one draw from `rng`.
pub fn settle_auction<R: Rng>(
    rule: PaymentRule,
    grid: &BidGrid,
    bids: &[f64],
    rng: &mut R,
) -> Result<AuctionOutcome> {
    if bids.len() < 2 {
        return Err(Error::Config(format!(
            "an auction needs at least 2 bidders, got {}",
            bids.len()
        )));
    }
    let indices: Vec<usize> = bids
        .iter()
        .map(|&b| grid.require_index(b))
        .collect::<Result<_>>()?;
    let settled = settle_indices(rule, &indices, grid, rng);
    let mut rewards = vec![0.0; bids.len()];
    rewards[settled.winner] = 1.0 - settled.price;
    Ok(AuctionOutcome {
        winner: settled.winner,
        winning_bid: grid.level(settled.winning_index),
        price: settled.price,
        rewards,
        tie_count: settled.tie_count,
    })
}

/// Expected reward of one candidate bid against fixed rival bids, together
/// with the bid that would have won the auction in that counterfactual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterfactualValue {
    /// The candidate bid (a grid level).
    pub candidate_bid: f64,
    /// Expected reward, with the tie-break lottery taken in expectation.
    pub expected_reward: f64,
    /// The winning bid in the counterfactual auction: `max(candidate, rivals)`.
    pub counterfactual_winning_bid: f64,
    /// Grid index of `counterfactual_winning_bid`.
    pub winning_bid_index: usize,
}

/// Index-level counterfactual evaluation reusing `out` as scratch.
pub(crate) fn counterfactual_values_into(
    rule: PaymentRule,
    grid: &BidGrid,
    rival_indices: &[usize],
    out: &mut Vec<CounterfactualValue>,
) {
    debug_assert!(!rival_indices.is_empty());
    let m = *rival_indices.iter().max().unwrap();
    let ties_at_m = rival_indices.iter().filter(|&&b| b == m).count();
    out.clear();
    for a in 0..grid.num_actions() {
        let (expected_reward, winning_index) = if a > m {
            let price = match rule {
                PaymentRule::FirstPrice => grid.level(a),
                PaymentRule::SecondPrice => grid.level(m),
            };
            (1.0 - price, a)
        } else if a == m {
            // Tied at the top: price equals the tied bid under either rule,
            // and the win probability is 1/(k+1) with k rivals at m.
            ((1.0 - grid.level(m)) / (ties_at_m + 1) as f64, m)
        } else {
            (0.0, m)
        };
        out.push(CounterfactualValue {
            candidate_bid: grid.level(a),
            expected_reward,
            counterfactual_winning_bid: grid.level(winning_index),
            winning_bid_index: winning_index,
        });
    }
}

/// Expected reward of every grid level against the given rival bids.
///
/// For candidate `b` with top rival bid `m`: if `b > m` the candidate wins
/// and pays `b` (first-price) or `m` (second-price); if `b = m` it wins the
/// tie lottery with probability `1/(k+1)` where `k` rivals sit at `m`; if
/// `b < m` it loses and earns 0. Returns one entry per grid level, in grid
/// order.
pub fn counterfactual_action_values(
    rule: PaymentRule,
    grid: &BidGrid,
    rival_bids: &[f64],
) -> Result<Vec<CounterfactualValue>> {
    if rival_bids.is_empty() {
        return Err(Error::Config(
            "counterfactual evaluation needs at least one rival bid".into(),
        ));
    }
    let rival_indices: Vec<usize> = rival_bids
        .iter()
        .map(|&b| grid.require_index(b))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(grid.num_actions());
    counterfactual_values_into(rule, grid, &rival_indices, &mut out);
    Ok(out)
}
