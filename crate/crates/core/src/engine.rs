//! Influencer-proposing deferred acceptance under product and merchant quotas.
//!
//! Free influencers apply to the first product still on their list. The
//! product's merchant provisionally accepts; a product overflow evicts the
//! worst holder of that product under ν_k^j, otherwise a merchant overflow
//! evicts the worst holder anywhere at the merchant under ν_k. Whenever a
//! product becomes full, every influencer ranked below its worst holder loses
//! that product; whenever a merchant becomes full, every influencer ranked
//! below its worst holder loses all of that merchant's products. Deleted pairs
//! are never proposed again, so the procedure ends after at most Σ|D_i|
//! proposals and yields the influencer-optimal stable matching.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::{Instance, Matching};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub proposal_count: u64,
    pub rejection_count: u64,
    /// Generations of the free-influencer queue.
    pub rounds: u64,
}

struct Lists {
    /// `live[i][pos]` is false once the pair (i, D_i[pos]) has been deleted.
    live: Vec<Vec<bool>>,
    /// Every position before `cursor[i]` is deleted.
    cursor: Vec<usize>,
}

impl Lists {
    fn new(instance: &Instance) -> Lists {
        let n = instance.influencer_count();
        Lists {
            live: (0..n)
                .map(|i| vec![true; instance.desired_of(i).len()])
                .collect(),
            cursor: vec![0; n],
        }
    }

    fn first_live(&mut self, instance: &Instance, i: usize) -> Option<usize> {
        let live = &self.live[i];
        let cursor = &mut self.cursor[i];
        while *cursor < live.len() && !live[*cursor] {
            *cursor += 1;
        }
        instance.desired_of(i).get(*cursor).copied()
    }

    fn delete(&mut self, instance: &Instance, i: usize, j: usize) {
        if let Some(pos) = instance.desire_rank(i, j) {
            self.live[i][pos] = false;
        }
    }

    fn delete_merchant(&mut self, instance: &Instance, i: usize, k: usize) {
        for (pos, &j) in instance.desired_of(i).iter().enumerate() {
            if instance.owner_of(j) == k {
                self.live[i][pos] = false;
            }
        }
    }
}

fn worst(instance: &Instance, holders: &[usize]) -> Option<usize> {
    holders.iter().copied().max_by_key(|&i| instance.standing(i))
}

/// Entries of `prefs` (sorted by standing) ranked strictly below `cutoff`, or
/// all of them when there is no cutoff.
fn successors<'a>(instance: &Instance, prefs: &'a [usize], cutoff: Option<usize>) -> &'a [usize] {
    match cutoff {
        Some(w) => {
            let s = instance.standing(w);
            &prefs[prefs.partition_point(|&t| instance.standing(t) <= s)..]
        }
        None => prefs,
    }
}

/// Computes the influencer-optimal stable matching.
pub fn solve(instance: &Instance) -> (Matching, SolveTrace) {
    let mut matching = Matching::empty(instance);
    let mut lists = Lists::new(instance);
    let mut trace = SolveTrace::default();

    let mut queue: VecDeque<usize> = instance.tie_break_order().into();
    let mut next = VecDeque::new();

    while !queue.is_empty() {
        trace.rounds += 1;
        while let Some(i) = queue.pop_front() {
            while matching.product_of(i).is_none() {
                let Some(j) = lists.first_live(instance, i) else {
                    break;
                };
                let k = instance.owner_of(j);
                trace.proposal_count += 1;
                matching.assign(instance, i, j);

                let evicted = if matching.product_holders(j).len() > instance.product_quota(j) {
                    worst(instance, matching.product_holders(j))
                } else if matching.merchant_holders(k).len() > instance.merchant_quota(k) {
                    worst(instance, matching.merchant_holders(k))
                } else {
                    None
                };
                if let Some(r) = evicted {
                    matching.unassign(instance, r);
                    trace.rejection_count += 1;
                    if r != i {
                        next.push_back(r);
                    }
                }

                if matching.product_holders(j).len() == instance.product_quota(j) {
                    let cutoff = worst(instance, matching.product_holders(j));
                    for &t in successors(instance, instance.product_pref_indices(j), cutoff) {
                        lists.delete(instance, t, j);
                    }
                }
                if matching.merchant_holders(k).len() == instance.merchant_quota(k) {
                    let cutoff = worst(instance, matching.merchant_holders(k));
                    for &t in successors(instance, instance.merchant_pref_indices(k), cutoff) {
                        lists.delete_merchant(instance, t, k);
                    }
                }
            }
        }
        std::mem::swap(&mut queue, &mut next);
    }

    (matching, trace)
}
