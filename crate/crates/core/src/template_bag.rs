//! Bag of target templates with confidence-driven slot updates.
//!
//! Slot 1 holds the first-frame template and never changes. Every other slot
//! owns a half-open confidence interval `[τ_i, τ_{i-1})`; a frame whose
//! confidence falls in that interval replaces the slot's template. The
//! thresholds are recomputed from the running average confidence `c̄`:
//!
//! * above-mean slots: `τ_i = 1 - (1 - c̄) / T_i`
//! * below-mean slots: `τ_i = 1 + (τ_min - c̄) / T_i`
//!
//! and then clamped from below at `τ_min`.

use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BagError {
    #[error("bag needs at least one slot")]
    NoSlots,
    #[error("tau_min must lie in (0, 1), got {0}")]
    TauMin(f64),
    #[error("expected {expected} slot weights, got {got}")]
    SlotWeightCount { expected: usize, got: usize },
    #[error("slot weight {index} must be positive and finite, got {value}")]
    SlotWeight { index: usize, value: f64 },
    #[error("above-mean slots must precede below-mean slots")]
    GroupOrder,
    #[error("expected {expected} fusion weights, got {got}")]
    FusionWeightCount { expected: usize, got: usize },
    #[error("fusion weights must be non-negative and sum to 1 (sum = {0})")]
    FusionWeightSum(f64),
    #[error("running-average rate must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("constant thresholds: {0}")]
    ConstantThresholds(&'static str),
    #[error("thresholds not strictly decreasing: tau_{upper_slot} = {upper} <= tau_{lower_slot} = {lower}")]
    NonMonotone {
        upper_slot: usize,
        lower_slot: usize,
        upper: f64,
        lower: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotGroup {
    Fixed,
    AboveMean,
    BelowMean,
}

/// Per-slot weight `T_i` and whether it applies above or below the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotWeight {
    pub t: f64,
    pub group: SlotGroup,
}

impl SlotWeight {
    pub const fn above(t: f64) -> Self {
        Self {
            t,
            group: SlotGroup::AboveMean,
        }
    }

    pub const fn below(t: f64) -> Self {
        Self {
            t,
            group: SlotGroup::BelowMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdMode {
    Adaptive,
    /// Fixed `τ_2..τ_n`.
    Constant(Vec<f64>),
}

/// How `c̄` averages the qualifying confidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    Ema,
    CumulativeMean,
    /// `c̄` keeps its seed value.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagConfig {
    pub n: usize,
    pub tau_min: f64,
    /// `T_2..T_n`, above-mean group first.
    pub slot_weights: Vec<SlotWeight>,
    /// `W_1..W_n` used by score fusion.
    pub fusion_weights: Vec<f64>,
    pub cbar_alpha: f64,
    pub mode: ThresholdMode,
    pub average: AverageMode,
}

/// Default `T` vector for a bag of `n` slots.
///
/// Slots `2..n` form the above-mean group with `T_k = (n-2)/k`, which puts
/// their thresholds `1 - k(1-c̄)/(n-2)` evenly between 1 and `c̄`; for `n = 6`
/// this is `[4, 2, 4/3, 1]`. Slot `n` is the only below-mean slot, with
/// `T = 0.1`: it sits on `τ_min` once `c̄ ≥ τ_min + 0.1(1-τ_min)` and catches
/// every acceptable confidence under `c̄`. With `τ_min = 0.5` the sequence is
/// strictly decreasing for every `c̄` in `(0.55, 1)`. A second below-mean slot
/// would need its own `T < T_last_above · 0.05/0.45`, and two such slots both
/// clamp onto `τ_min` and tie.
pub fn default_slot_weights(n: usize) -> Vec<SlotWeight> {
    let above = n.saturating_sub(2);
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..=above {
        out.push(SlotWeight::above(above as f64 / k as f64));
    }
    if n >= 2 {
        out.push(SlotWeight::below(0.1));
    }
    out
}

/// Default fusion weights: first-frame template heaviest, sum exactly 1.
pub fn default_fusion_weights(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![1.0],
        6 => alloc::vec![0.30, 0.20, 0.14, 0.14, 0.11, 0.11],
        10 => alloc::vec![0.20, 0.12, 0.10, 0.10, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08],
        _ => alloc::vec![1.0 / n as f64; n],
    }
}

impl BagConfig {
    pub fn with_slots(n: usize) -> Self {
        Self {
            n,
            tau_min: 0.5,
            slot_weights: default_slot_weights(n),
            fusion_weights: default_fusion_weights(n),
            cbar_alpha: 0.05,
            mode: ThresholdMode::Adaptive,
            average: AverageMode::Ema,
        }
    }

    pub fn validate(&self) -> Result<(), BagError> {
        if self.n == 0 {
            return Err(BagError::NoSlots);
        }
        if !(self.tau_min > 0.0 && self.tau_min < 1.0) {
            return Err(BagError::TauMin(self.tau_min));
        }
        if self.slot_weights.len() != self.n - 1 {
            return Err(BagError::SlotWeightCount {
                expected: self.n - 1,
                got: self.slot_weights.len(),
            });
        }
        let mut seen_below = false;
        for (k, sw) in self.slot_weights.iter().enumerate() {
            if !(sw.t.is_finite() && sw.t > 0.0) {
                return Err(BagError::SlotWeight {
                    index: k + 2,
                    value: sw.t,
                });
            }
            match sw.group {
                SlotGroup::BelowMean => seen_below = true,
                SlotGroup::AboveMean if seen_below => return Err(BagError::GroupOrder),
                SlotGroup::AboveMean => {}
                SlotGroup::Fixed => return Err(BagError::GroupOrder),
            }
        }
        if self.fusion_weights.len() != self.n {
            return Err(BagError::FusionWeightCount {
                expected: self.n,
                got: self.fusion_weights.len(),
            });
        }
        let sum: f64 = self.fusion_weights.iter().sum();
        if self.fusion_weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(BagError::FusionWeightSum(sum));
        }
        if !(self.cbar_alpha > 0.0 && self.cbar_alpha < 1.0) {
            return Err(BagError::Alpha(self.cbar_alpha));
        }
        if let ThresholdMode::Constant(fixed) = &self.mode {
            if fixed.len() != self.n - 1 {
                return Err(BagError::ConstantThresholds("need one threshold per updatable slot"));
            }
            let mut prev = 1.0;
            for &t in fixed {
                if !(t < prev) {
                    return Err(BagError::ConstantThresholds("must be strictly decreasing below 1"));
                }
                if t < self.tau_min {
                    return Err(BagError::ConstantThresholds("must not fall below tau_min"));
                }
                prev = t;
            }
        }
        Ok(())
    }
}

impl Default for BagConfig {
    fn default() -> Self {
        Self::with_slots(6)
    }
}

/// Raw threshold evaluation: `τ_1 = 1` followed by one value per slot weight,
/// clamped at `τ_min`. No ordering check.
pub fn evaluate_thresholds(cbar: f64, tau_min: f64, weights: &[SlotWeight]) -> Vec<f64> {
    let mut out = Vec::with_capacity(weights.len() + 1);
    out.push(1.0);
    for sw in weights {
        let tau = match sw.group {
            SlotGroup::AboveMean => 1.0 - (1.0 - cbar) / sw.t,
            SlotGroup::BelowMean => 1.0 + (tau_min - cbar) / sw.t,
            SlotGroup::Fixed => 1.0,
        };
        out.push(tau.max(tau_min));
    }
    out
}

/// Strict-decrease check over `thresholds`, skipping slots listed as collapsed.
fn check_monotone(thresholds: &[f64], collapsed: &[bool]) -> Result<(), BagError> {
    let mut prev = (1usize, thresholds[0]);
    for (k, &tau) in thresholds.iter().enumerate().skip(1) {
        if collapsed[k] {
            continue;
        }
        if !(tau < prev.1) {
            return Err(BagError::NonMonotone {
                upper_slot: prev.0,
                lower_slot: k + 1,
                upper: prev.1,
                lower: tau,
            });
        }
        prev = (k + 1, tau);
    }
    Ok(())
}

/// Slot chosen for confidence `c` given thresholds `τ_1..τ_n` (slot numbers are
/// 1-based). Slots flagged in `collapsed` are never chosen and do not bound
/// their neighbours. The first eligible slot's interval is closed at 1.
/// A qualifying confidence below every threshold lands in slot `n`.
pub fn select_slot(thresholds: &[f64], collapsed: &[bool], c: f64, tau_min: f64) -> Option<usize> {
    if c < tau_min || thresholds.len() < 2 {
        return None;
    }
    let mut upper: Option<f64> = None;
    let mut last_eligible = None;
    for (k, &tau) in thresholds.iter().enumerate().skip(1) {
        if collapsed.get(k).copied().unwrap_or(false) {
            continue;
        }
        let below_upper = match upper {
            None => c <= 1.0,
            Some(u) => c < u,
        };
        if tau <= c && below_upper {
            return Some(k + 1);
        }
        upper = Some(tau);
        last_eligible = Some(k + 1);
    }
    last_eligible.map(|_| thresholds.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSlot<T> {
    /// 1-based slot number.
    pub index: usize,
    pub template: T,
    pub threshold: f64,
    /// `T_i`; `None` for the fixed slot.
    pub weight: Option<f64>,
    pub group: SlotGroup,
    pub last_update_frame: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TemplateBag<T> {
    slots: Vec<TemplateSlot<T>>,
    cbar: f64,
    qualifying_frames: u64,
    degenerate: bool,
    config: BagConfig,
}

impl<T: Clone> TemplateBag<T> {
    /// Every slot starts as a copy of the first-frame template and `c̄ = 1`.
    pub fn new(config: BagConfig, first_template: T) -> Result<Self, BagError> {
        config.validate()?;
        let mut slots = Vec::with_capacity(config.n);
        slots.push(TemplateSlot {
            index: 1,
            template: first_template.clone(),
            threshold: 1.0,
            weight: None,
            group: SlotGroup::Fixed,
            last_update_frame: None,
        });
        for (k, sw) in config.slot_weights.iter().enumerate() {
            slots.push(TemplateSlot {
                index: k + 2,
                template: first_template.clone(),
                threshold: 1.0,
                weight: Some(sw.t),
                group: sw.group,
                last_update_frame: None,
            });
        }
        let mut bag = Self {
            slots,
            cbar: 1.0,
            qualifying_frames: 1,
            degenerate: false,
            config,
        };
        bag.recompute_thresholds()?;
        Ok(bag)
    }

    pub fn slots(&self) -> &[TemplateSlot<T>] {
        &self.slots
    }

    pub fn templates(&self) -> impl Iterator<Item = &T> {
        self.slots.iter().map(|s| &s.template)
    }

    pub fn config(&self) -> &BagConfig {
        &self.config
    }

    pub fn running_confidence(&self) -> f64 {
        self.cbar
    }

    /// Overrides `c̄` (seeding, ablations). Thresholds are not recomputed.
    pub fn set_running_confidence(&mut self, cbar: f64) {
        self.cbar = cbar;
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.threshold).collect()
    }

    /// True when `c̄ = 1` collapsed every above-mean threshold onto 1.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn collapsed(&self) -> Vec<bool> {
        self.slots
            .iter()
            .map(|s| self.degenerate && s.group == SlotGroup::AboveMean)
            .collect()
    }

    /// Recomputes `τ_1..τ_n` from `c̄` and stores them in the slots.
    pub fn recompute_thresholds(&mut self) -> Result<Vec<f64>, BagError> {
        let (taus, degenerate) = match &self.config.mode {
            ThresholdMode::Constant(fixed) => {
                let mut t = Vec::with_capacity(fixed.len() + 1);
                t.push(1.0);
                t.extend_from_slice(fixed);
                (t, false)
            }
            ThresholdMode::Adaptive => {
                let taus = evaluate_thresholds(self.cbar, self.config.tau_min, &self.config.slot_weights);
                let degenerate = self.cbar >= 1.0
                    && self
                        .config
                        .slot_weights
                        .iter()
                        .any(|s| s.group == SlotGroup::AboveMean);
                (taus, degenerate)
            }
        };
        if degenerate && !self.degenerate {
            log::debug!("c̄ = 1: above-mean thresholds collapsed, only below-mean slots update");
        }
        let collapsed: Vec<bool> = self
            .slots
            .iter()
            .map(|s| degenerate && s.group == SlotGroup::AboveMean)
            .collect();
        check_monotone(&taus, &collapsed)?;
        self.degenerate = degenerate;
        for (slot, &tau) in self.slots.iter_mut().zip(&taus) {
            slot.threshold = tau;
        }
        Ok(taus)
    }

    /// Folds a frame confidence into `c̄`; confidences below `τ_min` are ignored.
    pub fn update_running_confidence(&mut self, c: f64) -> f64 {
        if c < self.config.tau_min {
            return self.cbar;
        }
        match self.config.average {
            AverageMode::Ema => {
                let a = self.config.cbar_alpha;
                self.cbar = (1.0 - a) * self.cbar + a * c;
            }
            AverageMode::CumulativeMean => {
                self.qualifying_frames += 1;
                self.cbar += (c - self.cbar) / self.qualifying_frames as f64;
            }
            AverageMode::Frozen => {}
        }
        self.cbar = self.cbar.clamp(self.config.tau_min, 1.0);
        self.cbar
    }

    /// Offers a new template at confidence `c`. Returns the 1-based slot that
    /// took it, or `None` when `c < τ_min`.
    ///
    /// `c̄` is updated first, then the thresholds are recomputed, then the slot
    /// is matched. A threshold ordering failure is returned after `c̄` moved.
    pub fn try_update(&mut self, c: f64, new_template: T, frame: u64) -> Result<Option<usize>, BagError> {
        if c < self.config.tau_min {
            return Ok(None);
        }
        self.update_running_confidence(c);
        self.recompute_thresholds()?;
        let taus = self.thresholds();
        let slot = select_slot(&taus, &self.collapsed(), c, self.config.tau_min);
        if let Some(i) = slot {
            let s = &mut self.slots[i - 1];
            s.template = new_template;
            s.last_update_frame = Some(frame);
        }
        Ok(slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn worked_example_config() -> BagConfig {
        BagConfig {
            slot_weights: vec![
                SlotWeight::above(4.0),
                SlotWeight::above(2.0),
                SlotWeight::below(1.5),
                SlotWeight::below(1.2),
                SlotWeight::below(1.0),
            ],
            ..BagConfig::with_slots(6)
        }
    }

    fn constant(fixed: &[f64]) -> BagConfig {
        BagConfig {
            mode: ThresholdMode::Constant(fixed.to_vec()),
            ..BagConfig::with_slots(fixed.len() + 1)
        }
    }

    #[test]
    fn init_six_slots() {
        let bag = TemplateBag::new(BagConfig::with_slots(6), 7u32).unwrap();
        assert_eq!(bag.slots().len(), 6);
        assert!(bag.templates().all(|t| *t == 7));
        assert_eq!(bag.slots()[0].threshold, 1.0);
        assert_eq!(bag.slots()[0].group, SlotGroup::Fixed);
        assert_eq!(bag.running_confidence(), 1.0);
    }

    #[test]
    fn init_single_slot_is_baseline() {
        let mut bag = TemplateBag::new(BagConfig::with_slots(1), 1u8).unwrap();
        assert_eq!(bag.slots().len(), 1);
        assert_eq!(bag.try_update(0.9, 2, 1).unwrap(), None);
        assert_eq!(bag.slots()[0].template, 1);
    }

    #[test]
    fn init_ten_slots_strictly_decreasing() {
        let mut bag = TemplateBag::new(BagConfig::with_slots(10), ()).unwrap();
        bag.set_running_confidence(0.8);
        let t = bag.recompute_thresholds().unwrap();
        assert_eq!(t.len(), 10);
        assert!(t.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn thresholds_worked_example() {
        let mut bag = TemplateBag::new(worked_example_config(), ()).unwrap();
        bag.set_running_confidence(0.8);
        let t = bag.recompute_thresholds().unwrap();
        let want = [1.0, 0.95, 0.90, 0.80, 0.75, 0.70];
        for (g, w) in t.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{t:?}");
        }
    }

    #[test]
    fn thresholds_at_unit_average_are_degenerate() {
        let mut bag = TemplateBag::new(worked_example_config(), 0u8).unwrap();
        let t = bag.recompute_thresholds().unwrap();
        assert_eq!(&t[..3], &[1.0, 1.0, 1.0]);
        assert!(bag.is_degenerate());
        // C = 1 would match slot 2 in the normal interval scheme; here it goes
        // to the first below-mean slot.
        let mut frozen = worked_example_config();
        frozen.average = AverageMode::Frozen;
        let mut bag = TemplateBag::new(frozen, 0u8).unwrap();
        assert_eq!(bag.try_update(1.0, 1, 1).unwrap(), Some(4));
    }

    #[test]
    fn thresholds_at_tau_min_fail() {
        let mut bag = TemplateBag::new(worked_example_config(), ()).unwrap();
        bag.set_running_confidence(0.5);
        let err = bag.recompute_thresholds().unwrap_err();
        assert!(matches!(err, BagError::NonMonotone { .. }), "{err}");
    }

    #[test]
    fn example_t_vector_breaks_ordering_at_low_average() {
        // the old [4,2 | 1.5,1.2,1.0] vector orders correctly only for c̄ > 5/7
        let mut bag = TemplateBag::new(worked_example_config(), ()).unwrap();
        bag.set_running_confidence(0.65);
        assert!(matches!(
            bag.recompute_thresholds(),
            Err(BagError::NonMonotone {
                upper_slot: 3,
                lower_slot: 4,
                ..
            })
        ));
    }

    #[test]
    fn update_interval_examples() {
        let fixed = [0.95, 0.90, 0.80, 0.75, 0.70];
        let mut bag = TemplateBag::new(constant(&fixed), 0u32).unwrap();
        assert_eq!(bag.try_update(0.92, 1, 1).unwrap(), Some(3));
        assert_eq!(bag.try_update(0.99, 2, 2).unwrap(), Some(2));
        assert_eq!(bag.try_update(0.3, 3, 3).unwrap(), None);
        assert_eq!(bag.slots()[2].template, 1);
        assert_eq!(bag.slots()[1].template, 2);
        assert_eq!(bag.slots()[1].last_update_frame, Some(2));
        assert_eq!(bag.slots()[0].template, 0);
    }

    #[test]
    fn below_minimum_leaves_bag_untouched() {
        let mut bag = TemplateBag::new(BagConfig::with_slots(6), 0u32).unwrap();
        bag.set_running_confidence(0.8);
        bag.recompute_thresholds().unwrap();
        let before = bag.thresholds();
        assert_eq!(bag.try_update(0.3, 9, 1).unwrap(), None);
        assert_eq!(bag.running_confidence(), 0.8);
        assert_eq!(bag.thresholds(), before);
        assert!(bag.templates().all(|t| *t == 0));
    }

    #[test]
    fn gap_between_tau_n_and_tau_min_goes_to_last_slot() {
        let mut bag = TemplateBag::new(constant(&[0.9, 0.8, 0.7]), 0u8).unwrap();
        assert_eq!(bag.try_update(0.6, 1, 1).unwrap(), Some(4));
    }

    #[test]
    fn running_confidence_examples() {
        let mut bag = TemplateBag::new(BagConfig::with_slots(6), ()).unwrap();
        bag.set_running_confidence(0.8);
        assert!((bag.update_running_confidence(1.0) - 0.81).abs() < 1e-15);
        bag.set_running_confidence(0.7);
        assert_eq!(bag.update_running_confidence(0.7), 0.7);
        assert_eq!(bag.update_running_confidence(0.2), 0.7);
    }

    #[test]
    fn cumulative_mean_mode() {
        let cfg = BagConfig {
            average: AverageMode::CumulativeMean,
            ..BagConfig::with_slots(6)
        };
        let mut bag = TemplateBag::new(cfg, ()).unwrap();
        bag.update_running_confidence(0.8);
        bag.update_running_confidence(0.6);
        assert!((bag.running_confidence() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert_eq!(BagConfig::with_slots(0).validate(), Err(BagError::NoSlots));
        let mut c = BagConfig::with_slots(6);
        c.fusion_weights[0] += 0.01;
        assert!(matches!(c.validate(), Err(BagError::FusionWeightSum(_))));
        let mut c = BagConfig::with_slots(6);
        c.slot_weights.swap(0, 4);
        assert_eq!(c.validate(), Err(BagError::GroupOrder));
        let c = constant(&[0.9, 0.95, 0.7]);
        assert!(matches!(c.validate(), Err(BagError::ConstantThresholds(_))));
        let c = constant(&[0.9, 0.8, 0.4]);
        assert!(matches!(c.validate(), Err(BagError::ConstantThresholds(_))));
        let mut c = BagConfig::with_slots(6);
        c.tau_min = 1.0;
        assert!(matches!(c.validate(), Err(BagError::TauMin(_))));
    }

    #[test]
    fn default_fusion_weights_sum_to_one() {
        for n in 1..16 {
            let w = default_fusion_weights(n);
            assert_eq!(w.len(), n);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9, "n={n}");
        }
    }

    fn brute_force_slot(taus: &[f64], c: f64, tau_min: f64) -> Option<usize> {
        if c < tau_min || taus.len() < 2 {
            return None;
        }
        let hits: Vec<usize> = (2..=taus.len())
            .filter(|&i| {
                let lo = taus[i - 1];
                let hi = taus[i - 2];
                if i == 2 {
                    lo <= c && c <= 1.0
                } else {
                    lo <= c && c < hi
                }
            })
            .collect();
        assert!(hits.len() <= 1);
        hits.first().copied().or(Some(taus.len()))
    }

    proptest! {
        #[test]
        fn default_vectors_monotone_over_range(cbar in 0.5500001f64..0.9999999, n in prop::sample::select(vec![6usize, 10])) {
            let mut bag = TemplateBag::new(BagConfig::with_slots(n), ()).unwrap();
            bag.set_running_confidence(cbar);
            let t = bag.recompute_thresholds().unwrap();
            prop_assert!(t.windows(2).all(|w| w[0] > w[1]));
            prop_assert!(t.iter().all(|&x| x >= 0.5));
        }

        #[test]
        fn slot_choice_matches_interval_scan(
            raw in prop::collection::vec(0.5f64..1.0, 1..10),
            c in 0.0f64..=1.0,
        ) {
            let mut taus = raw.clone();
            taus.sort_by(|a, b| b.partial_cmp(a).unwrap());
            taus.dedup();
            taus.insert(0, 1.0);
            if taus[1] == 1.0 { taus.remove(1); }
            let collapsed = vec![false; taus.len()];
            prop_assert_eq!(select_slot(&taus, &collapsed, c, 0.5), brute_force_slot(&taus, c, 0.5));
        }

        #[test]
        fn slot_one_survives_fuzz(cs in prop::collection::vec(0.0f64..=1.0, 1..300)) {
            let mut bag = TemplateBag::new(BagConfig::with_slots(6), 0u64).unwrap();
            for (f, &c) in cs.iter().enumerate() {
                let before: Vec<u64> = bag.templates().copied().collect();
                if let Ok(slot) = bag.try_update(c, f as u64 + 1, f as u64) {
                    let after: Vec<u64> = bag.templates().copied().collect();
                    let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
                    prop_assert!(changed <= 1);
                    prop_assert_eq!(slot.is_some(), c >= 0.5);
                }
                prop_assert_eq!(bag.slots()[0].template, 0);
                prop_assert_eq!(bag.slots()[0].threshold, 1.0);
            }
        }

        #[test]
        fn frozen_adaptive_equals_constant(
            cbar in 0.6f64..0.99,
            cs in prop::collection::vec(0.0f64..=1.0, 1..100),
        ) {
            let adaptive_cfg = BagConfig { average: AverageMode::Frozen, ..BagConfig::with_slots(6) };
            let mut adaptive = TemplateBag::new(adaptive_cfg, 0usize).unwrap();
            adaptive.set_running_confidence(cbar);
            let taus = adaptive.recompute_thresholds().unwrap();
            let mut fixed = TemplateBag::new(constant(&taus[1..]), 0usize).unwrap();
            for (f, &c) in cs.iter().enumerate() {
                prop_assert_eq!(adaptive.try_update(c, f, f as u64), fixed.try_update(c, f, f as u64));
            }
        }
    }
}
