use super::{Instance, InfluencerId, ModelError, ProductId};

/// An allocation of influencers to products.
///
/// Construction enforces that every influencer holds at most one product and
/// only products it desires. Quotas are not enforced here: an over-allocated
/// value can be represented so that [`crate::verify`] can report it.
///
/// Reverse indexes are kept sorted by influencer index, so two matchings with
/// the same assignment compare equal regardless of how they were built.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Matching {
    assignment: Vec<Option<usize>>,
    by_product: Vec<Vec<usize>>,
    by_merchant: Vec<Vec<usize>>,
}

impl Matching {
    pub fn empty(instance: &Instance) -> Matching {
        Matching {
            assignment: vec![None; instance.influencer_count()],
            by_product: vec![Vec::new(); instance.product_count()],
            by_merchant: vec![Vec::new(); instance.merchant_count()],
        }
    }

    /// Builds from a per-influencer assignment vector of product indices.
    pub fn from_assignment(
        instance: &Instance,
        assignment: Vec<Option<usize>>,
    ) -> Result<Matching, ModelError> {
        if assignment.len() != instance.influencer_count() {
            return Err(ModelError::AssignmentLength {
                expected: instance.influencer_count(),
                got: assignment.len(),
            });
        }
        let mut by_product = vec![Vec::new(); instance.product_count()];
        let mut by_merchant = vec![Vec::new(); instance.merchant_count()];
        for (i, slot) in assignment.iter().enumerate() {
            let Some(j) = *slot else { continue };
            if j >= instance.product_count() {
                return Err(ModelError::UnknownProduct(format!("#{j}")));
            }
            if instance.desire_rank(i, j).is_none() {
                return Err(ModelError::NotDesired {
                    influencer: instance.influencers()[i].id.to_string(),
                    product: instance.products()[j].id.to_string(),
                });
            }
            by_product[j].push(i);
            by_merchant[instance.owner_of(j)].push(i);
        }
        Ok(Matching {
            assignment,
            by_product,
            by_merchant,
        })
    }

    /// Builds from `(influencer, product)` id pairs.
    pub fn from_pairs<I, F, P>(instance: &Instance, pairs: I) -> Result<Matching, ModelError>
    where
        I: IntoIterator<Item = (F, P)>,
        F: AsRef<str>,
        P: AsRef<str>,
    {
        let mut assignment = vec![None; instance.influencer_count()];
        for (f, p) in pairs {
            let (f, p) = (f.as_ref(), p.as_ref());
            let i = instance
                .influencer_idx(f)
                .ok_or_else(|| ModelError::UnknownInfluencer(f.to_string()))?;
            let j = instance
                .product_idx(p)
                .ok_or_else(|| ModelError::UnknownProduct(p.to_string()))?;
            if assignment[i].replace(j).is_some() {
                return Err(ModelError::AlreadyAssigned(f.to_string()));
            }
        }
        Matching::from_assignment(instance, assignment)
    }

    /// Product index held by influencer `i`.
    pub fn product_of(&self, i: usize) -> Option<usize> {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    /// E(p_j), sorted by influencer index.
    pub fn product_holders(&self, j: usize) -> &[usize] {
        &self.by_product[j]
    }

    /// E(v_k), sorted by influencer index.
    pub fn merchant_holders(&self, k: usize) -> &[usize] {
        &self.by_merchant[k]
    }

    pub fn matched_count(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.iter().all(Option::is_none)
    }

    /// Assigned pairs in influencer input order.
    pub fn pairs(&self, instance: &Instance) -> Vec<(InfluencerId, ProductId)> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                a.map(|j| {
                    (
                        instance.influencers()[i].id.clone(),
                        instance.products()[j].id.clone(),
                    )
                })
            })
            .collect()
    }

    /// Caller guarantees `i` is free and desires `j`.
    pub(crate) fn assign(&mut self, instance: &Instance, i: usize, j: usize) {
        debug_assert!(self.assignment[i].is_none());
        self.assignment[i] = Some(j);
        insert_sorted(&mut self.by_product[j], i);
        insert_sorted(&mut self.by_merchant[instance.owner_of(j)], i);
    }

    pub(crate) fn unassign(&mut self, instance: &Instance, i: usize) -> Option<usize> {
        let j = self.assignment[i].take()?;
        remove_sorted(&mut self.by_product[j], i);
        remove_sorted(&mut self.by_merchant[instance.owner_of(j)], i);
        Some(j)
    }
}

fn insert_sorted(v: &mut Vec<usize>, x: usize) {
    let pos = v.partition_point(|&y| y < x);
    v.insert(pos, x);
}

fn remove_sorted(v: &mut Vec<usize>, x: usize) {
    if let Ok(pos) = v.binary_search(&x) {
        v.remove(pos);
    }
}
