//! Path-aware candidate selection.
//!
//! Each candidate's confidence `C_j` is adjusted by how far its center lies
//! from the temporally predicted center:
//!
//! ```text
//! DE_j = |PC_1 + PC_2 - CC_j1 - CC_j2| / 2
//! RS_j = C_j - (DE_j - b) * SC_t * (1 - C_j) / RW
//! ```
//!
//! `SC_t` is a running measure of recent tracking success. Candidates closer
//! than `b` to the prediction gain reliability, farther ones lose it.

use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::geometry::{BBox, ImageDims};
use crate::score_fusion::Candidate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("no candidates to select from")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// `|pc1 + pc2 - cc1 - cc2| / 2`; offsets along the anti-diagonal cancel.
    Sum,
    /// `(|pc1 - cc1| + |pc2 - cc2|) / 2`.
    L1Mean,
}

/// What the sequential-confidence average is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScSource {
    /// 1 when the winner's confidence reaches `tau_conf`, else 0.
    SuccessIndicator,
    /// The winner's raw confidence.
    Confidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorConfig {
    pub bonus_b: f64,
    pub rw: f64,
    pub sc_alpha: f64,
    pub tau_select: f64,
    pub tau_conf: f64,
    pub de_mode: DistanceMode,
    pub sc_source: ScSource,
    pub sc_init: f64,
    /// When false the path term and the acceptance gate are both bypassed:
    /// the highest-confidence candidate is always reported as tracked.
    pub enabled: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            bonus_b: 0.1,
            rw: 1.0,
            sc_alpha: 0.1,
            tau_select: 0.35,
            tau_conf: 0.6,
            de_mode: DistanceMode::Sum,
            sc_source: ScSource::SuccessIndicator,
            sc_init: 0.5,
            enabled: true,
        }
    }
}

impl SelectorConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.bonus_b >= 0.0) {
            return Err("bonus_b must be >= 0");
        }
        if !(self.rw > 0.0) {
            return Err("rw must be > 0");
        }
        if !(self.sc_alpha > 0.0 && self.sc_alpha < 1.0) {
            return Err("sc_alpha must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.tau_select) {
            return Err("tau_select must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.sc_init) {
            return Err("sc_init must lie in [0, 1]");
        }
        Ok(())
    }
}

pub fn distance_error(pc: (f64, f64), cc: (f64, f64), mode: DistanceMode) -> f64 {
    match mode {
        DistanceMode::Sum => ((pc.0 - cc.0) + (pc.1 - cc.1)).abs() / 2.0,
        DistanceMode::L1Mean => ((pc.0 - cc.0).abs() + (pc.1 - cc.1).abs()) / 2.0,
    }
}

/// Unclamped: a candidate closer than `b` may score above its confidence.
pub fn reliability_score(confidence: f64, de: f64, sc: f64, cfg: &SelectorConfig) -> f64 {
    confidence - (de - cfg.bonus_b) * sc * (1.0 - confidence) / cfg.rw
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequentialConfidence(f64);

impl SequentialConfidence {
    pub fn new(sc: f64) -> Self {
        Self(sc.clamp(0.0, 1.0))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// Running average toward 1 on a successful frame and toward 0 otherwise.
    pub fn update(&mut self, confidence: f64, cfg: &SelectorConfig) -> f64 {
        let step = match cfg.sc_source {
            ScSource::SuccessIndicator => {
                if confidence >= cfg.tau_conf {
                    1.0
                } else {
                    0.0
                }
            }
            ScSource::Confidence => confidence.clamp(0.0, 1.0),
        };
        self.push(step, cfg.sc_alpha)
    }

    /// Unsuccessful frame: the average moves toward 0.
    pub fn record_failure(&mut self, cfg: &SelectorConfig) -> f64 {
        self.push(0.0, cfg.sc_alpha)
    }

    fn push(&mut self, step: f64, alpha: f64) -> f64 {
        self.0 = ((1.0 - alpha) * self.0 + alpha * step).clamp(0.0, 1.0);
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub confidence: f64,
    pub de: f64,
    pub rs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Tracked { index: usize, bbox: BBox, rs: f64 },
    Lost { best_rs: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub outcome: Outcome,
    pub diagnostics: Vec<CandidateScore>,
}

impl Selection {
    pub fn is_tracked(&self) -> bool {
        matches!(self.outcome, Outcome::Tracked { .. })
    }

    /// Reliability of the best candidate, tracked or not.
    pub fn best_rs(&self) -> f64 {
        match self.outcome {
            Outcome::Tracked { rs, .. } => rs,
            Outcome::Lost { best_rs } => best_rs,
        }
    }
}

/// Candidate center in image-relative units.
pub fn normalized_center(b: &BBox, dims: ImageDims) -> (f64, f64) {
    let (cx, cy) = b.center();
    (
        (cx / dims.width as f64).clamp(0.0, 1.0),
        (cy / dims.height as f64).clamp(0.0, 1.0),
    )
}

/// `a` ranks before `b`: higher RS, then higher C, then lower DE.
fn ranks_before(a: &CandidateScore, b: &CandidateScore) -> bool {
    let ord = a
        .rs
        .partial_cmp(&b.rs)
        .unwrap_or(Ordering::Equal)
        .then(a.confidence.partial_cmp(&b.confidence).unwrap_or(Ordering::Equal))
        .then(b.de.partial_cmp(&a.de).unwrap_or(Ordering::Equal));
    ord == Ordering::Greater
}

/// Picks the most reliable candidate, or reports the target lost when even the
/// best falls under `tau_select`. Index ties go to the earlier candidate.
pub fn select(
    candidates: &[Candidate],
    pc: (f64, f64),
    sc: f64,
    dims: ImageDims,
    cfg: &SelectorConfig,
) -> Result<Selection, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::NoCandidates);
    }
    let diagnostics: Vec<CandidateScore> = candidates
        .iter()
        .map(|c| {
            let de = distance_error(pc, normalized_center(&c.bbox, dims), cfg.de_mode);
            let rs = if cfg.enabled {
                reliability_score(c.confidence, de, sc, cfg)
            } else {
                c.confidence
            };
            CandidateScore {
                confidence: c.confidence,
                de,
                rs,
            }
        })
        .collect();
    let mut best = 0;
    for (j, d) in diagnostics.iter().enumerate().skip(1) {
        // A disabled selector ignores the path entirely, tie-breaks included.
        let better = if cfg.enabled {
            ranks_before(d, &diagnostics[best])
        } else {
            d.confidence > diagnostics[best].confidence
        };
        if better {
            best = j;
        }
    }
    let rs = diagnostics[best].rs;
    let outcome = if !cfg.enabled || rs >= cfg.tau_select {
        Outcome::Tracked {
            index: best,
            bbox: candidates[best].bbox,
            rs,
        }
    } else {
        Outcome::Lost { best_rs: rs }
    };
    Ok(Selection {
        outcome,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const DIMS: ImageDims = ImageDims::new(100, 100);

    fn cand(cx: f64, cy: f64, c: f64) -> Candidate {
        Candidate {
            bbox: BBox::from_center(cx * 100.0, cy * 100.0, 10.0, 10.0),
            confidence: c,
            cell: (0, 0),
        }
    }

    #[test]
    fn distance_error_examples() {
        for mode in [DistanceMode::Sum, DistanceMode::L1Mean] {
            assert_eq!(distance_error((0.3, 0.4), (0.3, 0.4), mode), 0.0);
        }
        assert!((distance_error((0.30, 0.40), (0.25, 0.35), DistanceMode::Sum) - 0.05).abs() < 1e-15);
        assert!(distance_error((0.6, 0.4), (0.5, 0.5), DistanceMode::Sum).abs() < 1e-15);
        assert!((distance_error((0.6, 0.4), (0.5, 0.5), DistanceMode::L1Mean) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn reliability_examples() {
        let cfg = SelectorConfig::default();
        assert_eq!(reliability_score(0.7, 0.1, 0.9, &cfg), 0.7);
        assert_eq!(reliability_score(1.0, 0.4, 0.9, &cfg), 1.0);
        assert!((reliability_score(0.9, 0.05, 0.8, &cfg) - 0.904).abs() < 1e-15);
    }

    #[test]
    fn sequential_confidence_examples() {
        let cfg = SelectorConfig::default();
        let mut sc = SequentialConfidence::new(0.5);
        assert!((sc.update(0.9, &cfg) - 0.55).abs() < 1e-15);
        let mut sc = SequentialConfidence::new(0.5);
        assert!((sc.update(0.2, &cfg) - 0.45).abs() < 1e-15);

        let mut sc = SequentialConfidence::new(0.5);
        let mut prev = sc.value();
        for _ in 0..300 {
            let v = sc.update(0.95, &cfg);
            assert!(v >= prev);
            prev = v;
        }
        assert!(prev > 0.999);
        for _ in 0..300 {
            let v = sc.update(0.1, &cfg);
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn near_candidate_beats_far_one_at_equal_confidence() {
        let cfg = SelectorConfig {
            de_mode: DistanceMode::L1Mean,
            ..SelectorConfig::default()
        };
        let cands = [cand(0.8, 0.8, 0.7), cand(0.5, 0.5, 0.7)];
        let s = select(&cands, (0.5, 0.5), 0.8, DIMS, &cfg).unwrap();
        assert!(matches!(s.outcome, Outcome::Tracked { index: 1, .. }));
        assert!(s.diagnostics[1].rs > 0.7 && s.diagnostics[0].rs < 0.7);
        assert!((s.diagnostics[0].de - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_sc_reduces_to_confidence_argmax() {
        let cands = [cand(0.1, 0.1, 0.6), cand(0.9, 0.9, 0.8), cand(0.5, 0.5, 0.7)];
        let s = select(&cands, (0.5, 0.5), 0.0, DIMS, &SelectorConfig::default()).unwrap();
        assert!(matches!(s.outcome, Outcome::Tracked { index: 1, .. }));
    }

    #[test]
    fn all_below_gate_is_lost() {
        let cands = [cand(0.1, 0.1, 0.2), cand(0.5, 0.5, 0.3)];
        let s = select(&cands, (0.5, 0.5), 0.5, DIMS, &SelectorConfig::default()).unwrap();
        match s.outcome {
            Outcome::Lost { best_rs } => assert!(best_rs < 0.35),
            other => panic!("expected lost, got {other:?}"),
        }
        assert_eq!(s.diagnostics.len(), 2);
        let off = select(&cands, (0.5, 0.5), 0.5, DIMS, &SelectorConfig::disabled()).unwrap();
        assert!(matches!(off.outcome, Outcome::Tracked { index: 1, .. }));
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(
            select(&[], (0.5, 0.5), 0.5, DIMS, &SelectorConfig::default()),
            Err(SelectError::NoCandidates)
        );
    }

    fn brute_force(cands: &[Candidate], pc: (f64, f64), sc: f64, cfg: &SelectorConfig) -> usize {
        let mut rows: Vec<(f64, f64, f64, usize)> = cands
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let (cx, cy) = c.bbox.center();
                let cc = (cx / 100.0, cy / 100.0);
                let de = match cfg.de_mode {
                    DistanceMode::Sum => (pc.0 + pc.1 - cc.0 - cc.1).abs() / 2.0,
                    DistanceMode::L1Mean => ((pc.0 - cc.0).abs() + (pc.1 - cc.1).abs()) / 2.0,
                };
                let rs = c.confidence - (de - cfg.bonus_b) * sc * (1.0 - c.confidence) / cfg.rw;
                (rs, c.confidence, de, j)
            })
            .collect();
        rows.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(b.1.partial_cmp(&a.1).unwrap())
                .then(a.2.partial_cmp(&b.2).unwrap())
                .then(a.3.cmp(&b.3))
        });
        rows[0].3
    }

    fn candidates() -> impl Strategy<Value = Vec<Candidate>> {
        prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..=10)
            .prop_map(|v| v.into_iter().map(|(x, y, c)| cand(x, y, c)).collect())
    }

    proptest! {
        #[test]
        fn rs_equals_confidence_at_bonus(c in 0.0f64..=1.0, sc in 0.0f64..=1.0, b in 0.0f64..0.5) {
            let cfg = SelectorConfig { bonus_b: b, ..SelectorConfig::default() };
            prop_assert_eq!(reliability_score(c, b, sc, &cfg), c);
        }

        #[test]
        fn rs_non_increasing_in_de(c in 0.0f64..1.0, sc in 0.01f64..=1.0, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
            let cfg = SelectorConfig::default();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(reliability_score(c, lo, sc, &cfg) >= reliability_score(c, hi, sc, &cfg));
        }

        #[test]
        fn select_matches_brute_force(
            cands in candidates(),
            pc in (0.0f64..=1.0, 0.0f64..=1.0),
            sc in 0.0f64..=1.0,
            l1 in any::<bool>(),
        ) {
            let cfg = SelectorConfig {
                de_mode: if l1 { DistanceMode::L1Mean } else { DistanceMode::Sum },
                ..SelectorConfig::default()
            };
            let s = select(&cands, pc, sc, DIMS, &cfg).unwrap();
            let want = brute_force(&cands, pc, sc, &cfg);
            match s.outcome {
                Outcome::Tracked { index, rs, .. } => {
                    prop_assert_eq!(index, want);
                    prop_assert!(rs >= cfg.tau_select);
                }
                Outcome::Lost { best_rs } => prop_assert!(best_rs < cfg.tau_select),
            }
        }

        #[test]
        fn sc_stays_in_unit_interval(start in 0.0f64..=1.0, cs in prop::collection::vec(0.0f64..=1.0, 0..200), raw in any::<bool>()) {
            let cfg = SelectorConfig {
                sc_source: if raw { ScSource::Confidence } else { ScSource::SuccessIndicator },
                ..SelectorConfig::default()
            };
            let mut sc = SequentialConfidence::new(start);
            for c in cs {
                let v = sc.update(c, &cfg);
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn diagnostics_always_populated() {
        let cands = vec![cand(0.2, 0.2, 0.9); 10];
        let s = select(&cands, (0.2, 0.2), 1.0, DIMS, &SelectorConfig::default()).unwrap();
        assert_eq!(s.diagnostics.len(), 10);
        assert!(matches!(s.outcome, Outcome::Tracked { index: 0, .. }));
    }
}
