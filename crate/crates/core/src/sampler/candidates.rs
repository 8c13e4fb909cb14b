//! Candidate families for updating one inclusion indicator.
//!
//! Every valid inclusion matrix `s` has an anchor for the coordinate
//! `(j, h)`. States sharing an anchor form a family, and an update at
//! `(j, h)` only moves within the family of the current state. Because the
//! family is the same set from the point of view of each of its members,
//! weighted draws from it are reversible.
//!
//! A family contains the anchor `a`, the anchor with `j` added to function
//! `h`, and, when `h` is active in `a` and nothing already decomposes it,
//! every decomposition that places `{j} ∪ B` (with `B` a proper subset of
//! `A_h`) into an empty function other than `h`. Decompositions are listed
//! for every empty slot so that families do not depend on function labels.

use crate::types::{ExposureSet, ZetaMatrix};

use super::block::log_odds;

/// Functions `e != h` whose active set is `{j} ∪ B` with `B ⊊ A_h` and at
/// most `cap` members.
pub fn decomposition_functions(z: &ZetaMatrix, j: usize, h: usize, cap: usize) -> Vec<usize> {
    let ah = z.active_set(h);
    (0..z.k())
        .filter(|&e| {
            let ae = z.active_set(e);
            e != h && ae.contains(j) && ae.len() <= cap && ae.without(j).is_proper_subset_of(ah)
        })
        .collect()
}

/// Anchor of `z` for coordinate `(j, h)`.
pub fn anchor_of(z: &ZetaMatrix, j: usize, h: usize, cap: usize) -> ZetaMatrix {
    let mut a = z.clone();
    if z.get(j, h) {
        a.set(j, h, false);
    } else if let [e] = decomposition_functions(z, j, h, cap)[..] {
        a.set_active_set(e, ExposureSet::EMPTY);
    }
    a
}

/// One model of a family up to the choice of empty slot: the active set of
/// function `h` and, for decompositions, the set placed in an empty slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelClass {
    pub h_set: ExposureSet,
    pub piece: Option<ExposureSet>,
}

impl ModelClass {
    /// Nonempty active sets of the block, ordered as in the evidence cache.
    pub fn block_sets(&self) -> Vec<ExposureSet> {
        let mut sets: Vec<ExposureSet> = std::iter::once(self.h_set)
            .chain(self.piece)
            .filter(|s| !s.is_empty())
            .collect();
        sets.sort_by_key(|s| s.bits());
        sets
    }
}

/// The family of states reachable by an update of `(j, h)`.
///
/// Members are numbered class by class; a decomposition class has one member
/// per entry of `slots`.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub element: (usize, usize),
    pub anchor: ZetaMatrix,
    pub classes: Vec<ModelClass>,
    /// Empty functions of the anchor other than `h`.
    pub slots: Vec<usize>,
    /// Member index of the current state.
    pub current: usize,
    /// Functions whose coefficients can change within the family: `h` and
    /// the slots.
    pub block_functions: Vec<usize>,
    /// A decomposition was possible but no empty function slot was left.
    pub saturated: bool,
    starts: Vec<usize>,
    len: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn class_size(&self, c: usize) -> usize {
        if self.classes[c].piece.is_some() {
            self.slots.len()
        } else {
            1
        }
    }

    /// Class of a member and, for decompositions, its slot.
    pub fn locate(&self, member: usize) -> (usize, Option<usize>) {
        let c = self.starts.partition_point(|&s| s <= member) - 1;
        let slot = self.classes[c]
            .piece
            .map(|_| self.slots[member - self.starts[c]]);
        (c, slot)
    }

    pub fn member_index(&self, class: usize, slot_pos: usize) -> usize {
        self.starts[class] + slot_pos
    }

    pub fn member(&self, i: usize) -> ZetaMatrix {
        let (c, slot) = self.locate(i);
        let mut z = self.anchor.clone();
        z.set_active_set(self.element.1, self.classes[c].h_set);
        if let (Some(e), Some(piece)) = (slot, self.classes[c].piece) {
            z.set_active_set(e, piece);
        }
        z
    }

    pub fn models(&self) -> Vec<ZetaMatrix> {
        (0..self.len).map(|i| self.member(i)).collect()
    }

    /// Log inclusion prior of a member minus that of the anchor.
    pub fn log_prior_delta(&self, member: usize, tau: &[f64]) -> f64 {
        let (c, slot) = self.locate(member);
        let h = self.element.1;
        let class = self.classes[c];
        let dh = class.h_set.len() as f64 - self.anchor.active_set(h).len() as f64;
        let mut d = dh * log_odds(tau[h]);
        if let (Some(e), Some(piece)) = (slot, class.piece) {
            d += piece.len() as f64 * log_odds(tau[e]);
        }
        d
    }

    /// MH proposal weight of a member: uniform over classes, then uniform
    /// within the class.
    pub fn proposal_weight(&self, member: usize) -> f64 {
        1.0 / self.class_size(self.locate(member).0) as f64
    }

    /// Probability of proposing `to` from `from`. The current member is
    /// excluded and the remaining weights renormalized.
    pub fn proposal_prob(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return 0.0;
        }
        let rest = self.classes.len() as f64 - self.proposal_weight(from);
        self.proposal_weight(to) / rest
    }

    /// Draws a proposal from `from` given a uniform variate `u` in `[0, 1)`
    /// and a uniform index source for the slot.
    pub fn propose(&self, from: usize, u: f64, pick: impl FnOnce(usize) -> usize) -> usize {
        let (cc, _) = self.locate(from);
        let w_from = self.proposal_weight(from);
        let rest = self.classes.len() as f64 - w_from;
        let mut target = u * rest;
        let mut chosen = None;
        for c in 0..self.classes.len() {
            let mass = if c == cc { 1.0 - w_from } else { 1.0 };
            if target < mass {
                chosen = Some(c);
                break;
            }
            target -= mass;
        }
        let c = chosen.unwrap_or_else(|| {
            (0..self.classes.len())
                .rev()
                .find(|&c| c != cc || self.class_size(c) > 1)
                .expect("family has another member")
        });
        let size = self.class_size(c);
        if c == cc {
            let own = from - self.starts[c];
            let k = pick(size - 1);
            self.starts[c] + if k >= own { k + 1 } else { k }
        } else {
            self.starts[c] + pick(size)
        }
    }
}

/// Whether `set` placed in function `at` keeps the constraint, given that
/// every other function of `z` (ignoring `skip`) already satisfies it.
fn fits(z: &ZetaMatrix, at: usize, set: ExposureSet, skip: Option<(usize, ExposureSet)>) -> bool {
    if set.is_empty() {
        return true;
    }
    (0..z.k()).filter(|&e| e != at).all(|e| {
        let other = match skip {
            Some((s, v)) if s == e => v,
            _ => z.active_set(e),
        };
        other.is_empty() || (!set.is_subset_of(other) && !other.is_subset_of(set))
    })
}

/// Candidate family of `zeta` (which must satisfy the inclusion constraint)
/// for coordinate `(j, h)`.
pub fn candidate_models(
    zeta: &ZetaMatrix,
    element: (usize, usize),
    subset_cap: usize,
) -> CandidateSet {
    let (j, h) = element;
    let cap = subset_cap;
    let anchor = anchor_of(zeta, j, h, cap);
    let ah = anchor.active_set(h);
    let slots: Vec<usize> = (0..anchor.k())
        .filter(|&e| e != h && anchor.active_set(e).is_empty())
        .collect();

    let mut classes = Vec::new();
    if fits(&anchor, h, ah, None) {
        classes.push(ModelClass {
            h_set: ah,
            piece: None,
        });
    }
    let merged = ah.with(j);
    if fits(&anchor, h, merged, None) {
        classes.push(ModelClass {
            h_set: merged,
            piece: None,
        });
    }
    let mut saturated = false;
    if !ah.is_empty() && decomposition_functions(&anchor, j, h, cap).is_empty() {
        saturated = slots.is_empty();
        if !slots.is_empty() {
            let mut bases: Vec<ExposureSet> = ah
                .all_subsets()
                .into_iter()
                .filter(|b| *b != ah && b.len() < cap)
                .collect();
            bases.sort_by(|a, b| {
                a.len()
                    .cmp(&b.len())
                    .then_with(|| a.to_vec().cmp(&b.to_vec()))
            });
            for b in bases {
                let piece = b.with(j);
                if fits(&anchor, slots[0], piece, None)
                    && fits(&anchor, h, ah, Some((slots[0], piece)))
                {
                    classes.push(ModelClass {
                        h_set: ah,
                        piece: Some(piece),
                    });
                }
            }
        }
    }

    let mut starts = Vec::with_capacity(classes.len());
    let mut len = 0;
    for c in &classes {
        starts.push(len);
        len += if c.piece.is_some() { slots.len() } else { 1 };
    }

    // Locate the current state: its function h and, if it differs from the
    // anchor elsewhere, the slot holding the decomposition.
    let moved = (0..zeta.k()).find(|&e| e != h && zeta.active_set(e) != anchor.active_set(e));
    let key = ModelClass {
        h_set: zeta.active_set(h),
        piece: moved.map(|e| zeta.active_set(e)),
    };
    let c = classes
        .iter()
        .position(|m| *m == key)
        .expect("a valid state belongs to its own family");
    let current = match moved {
        Some(e) => {
            starts[c]
                + slots
                    .iter()
                    .position(|&s| s == e)
                    .expect("decomposition sits in a slot")
        }
        None => starts[c],
    };

    let block_functions = std::iter::once(h).chain(slots.iter().copied()).collect();
    CandidateSet {
        element,
        anchor,
        classes,
        slots,
        current,
        block_functions,
        saturated,
        starts,
        len,
    }
}

/// Update kernel of one coordinate, as `(target, probability)` pairs.
///
/// `log_weight` is the target log density of a full inclusion matrix.
pub fn transition_probabilities(
    zeta: &ZetaMatrix,
    element: (usize, usize),
    subset_cap: usize,
    gibbs: bool,
    log_weight: impl Fn(&ZetaMatrix) -> f64,
) -> Vec<(ZetaMatrix, f64)> {
    let cs = candidate_models(zeta, element, subset_cap);
    let models = cs.models();
    let lw: Vec<f64> = models.iter().map(&log_weight).collect();
    let n = models.len();
    let mut probs = vec![0.0; n];
    if gibbs {
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        for (p, wi) in probs.iter_mut().zip(&w) {
            *p = wi / total;
        }
    } else {
        let c = cs.current;
        let mut moved = 0.0;
        for t in (0..n).filter(|&t| t != c) {
            let q = cs.proposal_prob(c, t);
            let a = (lw[t] - lw[c] + cs.proposal_prob(t, c).ln() - q.ln())
                .exp()
                .min(1.0);
            probs[t] = q * a;
            moved += q * a;
        }
        probs[c] = 1.0 - moved;
    }
    models.into_iter().zip(probs).collect()
}
