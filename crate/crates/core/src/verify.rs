//! Stability oracle.
//!
//! Blocking pairs are evaluated directly from their definition against a
//! fresh recount of the assignment vector; nothing here reads the engine's
//! state or the matching's reverse indexes. The only shared source with the
//! engine is the instance's preference order.

use std::fmt;

use thiserror::Error;

use crate::model::{Instance, InfluencerId, Matching, ProductId};

pub const DEFAULT_ENUMERATION_BOUND: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Infeasibility {
    NotDesired {
        influencer: InfluencerId,
        product: ProductId,
    },
    ProductOverAllocated {
        product: ProductId,
        assigned: usize,
        quota: usize,
    },
    MerchantOverAllocated {
        merchant: String,
        assigned: usize,
        quota: usize,
    },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::NotDesired {
                influencer,
                product,
            } => write!(f, "`{influencer}` holds undesired product `{product}`"),
            Infeasibility::ProductOverAllocated {
                product,
                assigned,
                quota,
            } => write!(f, "product `{product}` holds {assigned} > quota {quota}"),
            Infeasibility::MerchantOverAllocated {
                merchant,
                assigned,
                quota,
            } => write!(f, "merchant `{merchant}` holds {assigned} > quota {quota}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("unknown influencer `{0}`")]
    UnknownInfluencer(String),
    #[error("unknown product `{0}`")]
    UnknownProduct(String),
    #[error("infeasible matching: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InfeasibleMatching(Vec<Infeasibility>),
    #[error("instance has {influencers} influencers, enumeration bound is {bound}")]
    InstanceTooLarge { influencers: usize, bound: usize },
}

/// Which clause of the blocking-pair definition fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockingCase {
    /// Product and merchant both under-allocated.
    BothUnder,
    /// Product under-allocated, merchant full, and the influencer is already at
    /// the merchant or outranks the merchant's worst holder.
    MerchantFull,
    /// Product full and the influencer outranks the product's worst holder.
    ProductFull,
}

/// Counts and worst holders recomputed from an assignment vector.
struct Tally {
    product_count: Vec<usize>,
    merchant_count: Vec<usize>,
    product_worst: Vec<Option<usize>>,
    merchant_worst: Vec<Option<usize>>,
}

impl Tally {
    fn new(instance: &Instance, assignment: &[Option<usize>]) -> Tally {
        let mut t = Tally {
            product_count: vec![0; instance.product_count()],
            merchant_count: vec![0; instance.merchant_count()],
            product_worst: vec![None; instance.product_count()],
            merchant_worst: vec![None; instance.merchant_count()],
        };
        let lower = |slot: &mut Option<usize>, i: usize| match *slot {
            Some(w) if instance.standing(w) >= instance.standing(i) => {}
            _ => *slot = Some(i),
        };
        for (i, a) in assignment.iter().enumerate() {
            if let Some(j) = *a {
                let k = instance.owner_of(j);
                t.product_count[j] += 1;
                t.merchant_count[k] += 1;
                lower(&mut t.product_worst[j], i);
                lower(&mut t.merchant_worst[k], i);
            }
        }
        t
    }
}

fn outranks(instance: &Instance, i: usize, worst: Option<usize>) -> bool {
    worst.is_some_and(|w| instance.standing(i) < instance.standing(w))
}

fn blocking_case(
    instance: &Instance,
    assignment: &[Option<usize>],
    tally: &Tally,
    i: usize,
    j: usize,
) -> Option<BlockingCase> {
    let wanted = instance.desire_rank(i, j)?;
    if let Some(current) = assignment[i] {
        let held = instance.desire_rank(i, current).unwrap_or(usize::MAX);
        if wanted >= held {
            return None;
        }
    }
    let k = instance.owner_of(j);
    let (pc, pq) = (tally.product_count[j], instance.product_quota(j));
    let (mc, mq) = (tally.merchant_count[k], instance.merchant_quota(k));
    if pc < pq && mc < mq {
        return Some(BlockingCase::BothUnder);
    }
    if pc < pq && mc == mq {
        let at_merchant = assignment[i].is_some_and(|c| instance.owner_of(c) == k);
        if at_merchant || outranks(instance, i, tally.merchant_worst[k]) {
            return Some(BlockingCase::MerchantFull);
        }
    }
    if pc == pq && outranks(instance, i, tally.product_worst[j]) {
        return Some(BlockingCase::ProductFull);
    }
    None
}

/// Reports every quota or desirability violation, recounting from scratch.
pub fn check_feasibility(instance: &Instance, matching: &Matching) -> Result<(), VerifyError> {
    let assignment = matching.assignment();
    let mut problems = Vec::new();
    for (i, a) in assignment.iter().enumerate() {
        if let Some(j) = *a {
            if instance.desire_rank(i, j).is_none() {
                problems.push(Infeasibility::NotDesired {
                    influencer: instance.influencers()[i].id.clone(),
                    product: instance.products()[j].id.clone(),
                });
            }
        }
    }
    let tally = Tally::new(instance, assignment);
    for (j, &count) in tally.product_count.iter().enumerate() {
        if count > instance.product_quota(j) {
            problems.push(Infeasibility::ProductOverAllocated {
                product: instance.products()[j].id.clone(),
                assigned: count,
                quota: instance.product_quota(j),
            });
        }
    }
    for (k, &count) in tally.merchant_count.iter().enumerate() {
        if count > instance.merchant_quota(k) {
            problems.push(Infeasibility::MerchantOverAllocated {
                merchant: instance.merchants()[k].id.to_string(),
                assigned: count,
                quota: instance.merchant_quota(k),
            });
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(VerifyError::InfeasibleMatching(problems))
    }
}

/// Index-level blocking test; `None` when (i, j) does not block.
pub fn blocking_pair_case(
    instance: &Instance,
    matching: &Matching,
    i: usize,
    j: usize,
) -> Option<BlockingCase> {
    let tally = Tally::new(instance, matching.assignment());
    blocking_case(instance, matching.assignment(), &tally, i, j)
}

pub fn is_blocking_pair(
    instance: &Instance,
    matching: &Matching,
    influencer: &str,
    product: &str,
) -> Result<bool, VerifyError> {
    let i = instance
        .influencer_idx(influencer)
        .ok_or_else(|| VerifyError::UnknownInfluencer(influencer.to_string()))?;
    let j = instance
        .product_idx(product)
        .ok_or_else(|| VerifyError::UnknownProduct(product.to_string()))?;
    Ok(blocking_pair_case(instance, matching, i, j).is_some())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityScan {
    pub blocking: Vec<(InfluencerId, ProductId)>,
    /// Candidate pairs examined; always |F|·|P|.
    pub pairs_visited: usize,
}

fn lexical_products(instance: &Instance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.product_count()).collect();
    order.sort_by(|&a, &b| instance.products()[a].id.cmp(&instance.products()[b].id));
    order
}

/// Full |F|·|P| scan in tie-break × product-lexical order.
pub fn scan_stability(instance: &Instance, matching: &Matching) -> Result<StabilityScan, VerifyError> {
    check_feasibility(instance, matching)?;
    let assignment = matching.assignment();
    let tally = Tally::new(instance, assignment);
    let products = lexical_products(instance);
    let mut scan = StabilityScan {
        blocking: Vec::new(),
        pairs_visited: 0,
    };
    for i in instance.tie_break_order() {
        for &j in &products {
            scan.pairs_visited += 1;
            if blocking_case(instance, assignment, &tally, i, j).is_some() {
                scan.blocking.push((
                    instance.influencers()[i].id.clone(),
                    instance.products()[j].id.clone(),
                ));
            }
        }
    }
    Ok(scan)
}

/// All blocking pairs; empty iff the matching is stable.
pub fn verify_stability(
    instance: &Instance,
    matching: &Matching,
) -> Result<Vec<(InfluencerId, ProductId)>, VerifyError> {
    scan_stability(instance, matching).map(|s| s.blocking)
}

fn has_blocking_pair(instance: &Instance, assignment: &[Option<usize>]) -> bool {
    let tally = Tally::new(instance, assignment);
    (0..instance.influencer_count()).any(|i| {
        instance
            .desired_of(i)
            .iter()
            .any(|&j| blocking_case(instance, assignment, &tally, i, j).is_some())
    })
}

pub fn enumerate_stable_matchings(instance: &Instance) -> Result<Vec<Matching>, VerifyError> {
    enumerate_stable_matchings_bounded(instance, DEFAULT_ENUMERATION_BOUND)
}

/// Brute force: every feasible matching with no blocking pair, in
/// depth-first order over influencer indices (unassigned first, then D_i).
pub fn enumerate_stable_matchings_bounded(
    instance: &Instance,
    bound: usize,
) -> Result<Vec<Matching>, VerifyError> {
    let n = instance.influencer_count();
    if n > bound {
        return Err(VerifyError::InstanceTooLarge {
            influencers: n,
            bound,
        });
    }
    let mut search = Search {
        instance,
        assignment: vec![None; n],
        product_load: vec![0; instance.product_count()],
        merchant_load: vec![0; instance.merchant_count()],
        found: Vec::new(),
    };
    search.descend(0);
    Ok(search.found)
}

struct Search<'a> {
    instance: &'a Instance,
    assignment: Vec<Option<usize>>,
    product_load: Vec<usize>,
    merchant_load: Vec<usize>,
    found: Vec<Matching>,
}

impl Search<'_> {
    fn descend(&mut self, i: usize) {
        let inst = self.instance;
        if i == inst.influencer_count() {
            if !has_blocking_pair(inst, &self.assignment) {
                let m = Matching::from_assignment(inst, self.assignment.clone())
                    .expect("enumerated pairs are desired");
                self.found.push(m);
            }
            return;
        }
        self.descend(i + 1);
        for &j in inst.desired_of(i) {
            let k = inst.owner_of(j);
            if self.product_load[j] < inst.product_quota(j)
                && self.merchant_load[k] < inst.merchant_quota(k)
            {
                self.product_load[j] += 1;
                self.merchant_load[k] += 1;
                self.assignment[i] = Some(j);
                self.descend(i + 1);
                self.assignment[i] = None;
                self.product_load[j] -= 1;
                self.merchant_load[k] -= 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, BuildOptions, InfluencerSpec, MerchantSpec, ProductSpec, TieBreak};

    fn inf(id: &str, r: f64, desired: &[&str]) -> InfluencerSpec {
        InfluencerSpec {
            id: id.into(),
            reputation: r,
            desired: desired.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn prod(id: &str, quota: u32, merchant: &str) -> ProductSpec {
        ProductSpec {
            id: id.into(),
            quota,
            merchant: merchant.into(),
        }
    }

    fn merch(id: &str, quota: u32) -> MerchantSpec {
        MerchantSpec {
            id: id.into(),
            quota,
        }
    }

    fn build(i: Vec<InfluencerSpec>, p: Vec<ProductSpec>, m: Vec<MerchantSpec>) -> Instance {
        build_instance(i, p, m, TieBreak::Lexical, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn empty_matching_blocks_via_both_under() {
        let inst = build(
            vec![inf("f", 1.0, &["p"])],
            vec![prod("p", 1, "m")],
            vec![merch("m", 1)],
        );
        let m = Matching::empty(&inst);
        assert!(is_blocking_pair(&inst, &m, "f", "p").unwrap());
        assert_eq!(blocking_pair_case(&inst, &m, 0, 0), Some(BlockingCase::BothUnder));
        assert_eq!(verify_stability(&inst, &m).unwrap().len(), 1);
    }

    #[test]
    fn first_choice_never_blocks_lower_choices() {
        let inst = build(
            vec![inf("f", 1.0, &["p1", "p2"])],
            vec![prod("p1", 1, "m"), prod("p2", 1, "m")],
            vec![merch("m", 2)],
        );
        let m = Matching::from_pairs(&inst, [("f", "p1")]).unwrap();
        assert!(!is_blocking_pair(&inst, &m, "f", "p2").unwrap());
        assert!(!is_blocking_pair(&inst, &m, "f", "p1").unwrap());
    }

    #[test]
    fn full_product_with_weaker_holder_blocks() {
        // p is full with g; f outranks g and prefers p to its own slot.
        let inst = build(
            vec![inf("f", 9.0, &["p", "q"]), inf("g", 1.0, &["p"])],
            vec![prod("p", 1, "m"), prod("q", 1, "n")],
            vec![merch("m", 1), merch("n", 1)],
        );
        let m = Matching::from_pairs(&inst, [("f", "q"), ("g", "p")]).unwrap();
        assert_eq!(blocking_pair_case(&inst, &m, 0, 0), Some(BlockingCase::ProductFull));
        assert_eq!(
            verify_stability(&inst, &m).unwrap(),
            vec![(InfluencerId::new("f").unwrap(), ProductId::new("p").unwrap())]
        );
    }

    #[test]
    fn full_merchant_blocks_for_own_influencer_moving_up() {
        let inst = build(
            vec![inf("f", 1.0, &["p1", "p2"])],
            vec![prod("p1", 1, "m"), prod("p2", 1, "m")],
            vec![merch("m", 1)],
        );
        let m = Matching::from_pairs(&inst, [("f", "p2")]).unwrap();
        assert_eq!(blocking_pair_case(&inst, &m, 0, 0), Some(BlockingCase::MerchantFull));
    }

    #[test]
    fn full_merchant_with_stronger_holder_does_not_block() {
        let inst = build(
            vec![inf("f", 1.0, &["p1"]), inf("g", 5.0, &["p2"])],
            vec![prod("p1", 1, "m"), prod("p2", 1, "m")],
            vec![merch("m", 1)],
        );
        let m = Matching::from_pairs(&inst, [("g", "p2")]).unwrap();
        assert!(verify_stability(&inst, &m).unwrap().is_empty());
    }

    #[test]
    fn zero_quota_never_blocks() {
        let inst = build(
            vec![inf("f", 1.0, &["p"])],
            vec![prod("p", 0, "m")],
            vec![merch("m", 0)],
        );
        let m = Matching::empty(&inst);
        assert!(verify_stability(&inst, &m).unwrap().is_empty());
    }

    #[test]
    fn over_allocation_is_reported_before_scan() {
        let inst = build(
            vec![inf("f", 1.0, &["p"]), inf("g", 2.0, &["p"])],
            vec![prod("p", 1, "m")],
            vec![merch("m", 1)],
        );
        let m = Matching::from_pairs(&inst, [("f", "p"), ("g", "p")]).unwrap();
        let err = verify_stability(&inst, &m).unwrap_err();
        let VerifyError::InfeasibleMatching(problems) = err else {
            panic!("expected infeasible");
        };
        assert_eq!(problems.len(), 2);
    }

    #[test]
    fn unknown_entities() {
        let inst = Instance::empty();
        let m = Matching::empty(&inst);
        assert_eq!(
            is_blocking_pair(&inst, &m, "x", "y"),
            Err(VerifyError::UnknownInfluencer("x".into()))
        );
    }

    #[test]
    fn scan_visits_every_pair() {
        let inst = build(
            vec![inf("a", 1.0, &["p"]), inf("b", 1.0, &[]), inf("c", 3.0, &["q"])],
            vec![prod("p", 1, "m"), prod("q", 1, "m"), prod("r", 0, "n")],
            vec![merch("m", 1), merch("n", 0)],
        );
        let scan = scan_stability(&inst, &Matching::empty(&inst)).unwrap();
        assert_eq!(scan.pairs_visited, 9);
        // tie-break order, then product lexical
        let got: Vec<_> = scan
            .blocking
            .iter()
            .map(|(f, p)| format!("{f}{p}"))
            .collect();
        assert_eq!(got, ["ap", "cq"]);
    }

    #[test]
    fn single_pair_has_one_stable_matching() {
        let inst = build(
            vec![inf("f", 1.0, &["p"])],
            vec![prod("p", 1, "m")],
            vec![merch("m", 1)],
        );
        let stable = enumerate_stable_matchings(&inst).unwrap();
        assert_eq!(stable, vec![Matching::from_pairs(&inst, [("f", "p")]).unwrap()]);
    }

    #[test]
    fn nobody_desires_anything() {
        let inst = build(
            vec![inf("f", 1.0, &[]), inf("g", 2.0, &[])],
            vec![prod("p", 1, "m")],
            vec![merch("m", 1)],
        );
        let stable = enumerate_stable_matchings(&inst).unwrap();
        assert_eq!(stable, vec![Matching::empty(&inst)]);
    }

    #[test]
    fn enumeration_bound() {
        let specs = (0..7).map(|i| inf(&format!("f{i}"), 1.0, &[])).collect();
        let inst = build(specs, vec![], vec![]);
        assert_eq!(
            enumerate_stable_matchings(&inst),
            Err(VerifyError::InstanceTooLarge {
                influencers: 7,
                bound: DEFAULT_ENUMERATION_BOUND
            })
        );
        assert_eq!(enumerate_stable_matchings_bounded(&inst, 7).unwrap().len(), 1);
    }
}
