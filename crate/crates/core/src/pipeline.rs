//! Per-frame orchestration: score every slot template, fuse, extract peaks,
//! predict the next center from the path history, select, then update the
//! bag, the sequential confidence and the history.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::combinet::{linear_extrapolation, predict_or_extrapolate, CombiNetError, CombiNetModel, WINDOW};
use crate::geometry::{normalize, BBox, GeometryError, ImageDims, NormBBox};
use crate::score_fusion::{fuse, top_candidates, Candidate, ScoreMap, DEFAULT_NMS_RADIUS, DEFAULT_TOP_K};
use crate::selector::{select, CandidateScore, Outcome, SelectorConfig, SequentialConfidence};
use crate::template_bag::{BagConfig, BagError, TemplateBag};

/// Appearance model behind the tracker. Implementations must be
/// deterministic and return maps of one fixed grid size per sequence.
pub trait AppearanceScorer {
    type Frame;
    type Template: Clone;
    type Error: fmt::Display;

    fn dims(&self, frame: &Self::Frame) -> ImageDims;
    fn make_template(&self, frame: &Self::Frame, bbox: &BBox) -> Result<Self::Template, Self::Error>;
    fn score(&self, frame: &Self::Frame, template: &Self::Template) -> Result<ScoreMap, Self::Error>;
}

/// Source of the predicted next center, in normalized coordinates.
pub trait PathPredictor {
    fn predict(&self, history: &[NormBBox]) -> Result<(f64, f64), CombiNetError>;
}

impl PathPredictor for CombiNetModel {
    fn predict(&self, history: &[NormBBox]) -> Result<(f64, f64), CombiNetError> {
        predict_or_extrapolate(self, history)
    }
}

/// Constant-velocity extrapolation from the last two boxes; repeats a single box.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearPredictor;

impl PathPredictor for LinearPredictor {
    fn predict(&self, history: &[NormBBox]) -> Result<(f64, f64), CombiNetError> {
        match history {
            [] => Err(CombiNetError::EmptyHistory),
            [only] => Ok(only.center()),
            [.., prev, last] => Ok(linear_extrapolation(prev.center(), last.center())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LostPolicy {
    /// Report the last tracked box.
    Hold,
    /// Report no box.
    ReportNothing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub bag: BagConfig,
    pub selector: SelectorConfig,
    pub top_k: usize,
    pub nms_radius: usize,
    /// Build the refresh template only when the winner's confidence reaches
    /// `tau_min`; the bag rejects anything lower anyway.
    pub lazy_templates: bool,
    pub lost_policy: LostPolicy,
    /// When false, sequential confidence is pinned at 0 so the path term
    /// never contributes.
    pub temporal: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            bag: BagConfig::default(),
            selector: SelectorConfig::default(),
            top_k: DEFAULT_TOP_K,
            nms_radius: DEFAULT_NMS_RADIUS,
            lazy_templates: false,
            lost_policy: LostPolicy::Hold,
            temporal: true,
        }
    }
}

impl PipelineConfig {
    /// Single template, no path term, no gate: the raw scorer argmax.
    pub fn baseline() -> Self {
        Self {
            bag: BagConfig::with_slots(1),
            selector: SelectorConfig::disabled(),
            temporal: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.bag.validate()?;
        self.selector.validate().map_err(PipelineError::Selector)?;
        if self.top_k == 0 {
            return Err(PipelineError::Config("top_k must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("template bag: {0}")]
    Bag(#[from] BagError),
    #[error("selector config: {0}")]
    Selector(&'static str),
    #[error("pipeline config: {0}")]
    Config(&'static str),
    #[error("initial box: {0}")]
    Geometry(#[from] GeometryError),
    #[error("scorer: {0}")]
    Scorer(String),
    #[error("empty sequence")]
    EmptySequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Tracked,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub bbox: Option<BBox>,
    /// Confidence of the selected candidate, or of the best-RS candidate when lost.
    pub confidence: f64,
    pub rs: f64,
    pub status: Status,
    /// 1-based slot replaced this frame.
    pub updated_slot: Option<usize>,
    /// Index into `candidates` of the selected one.
    pub selected: Option<usize>,
    pub predicted_center: Option<(f64, f64)>,
    pub candidates: Vec<Candidate>,
    pub diagnostics: Vec<CandidateScore>,
    pub fault: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrackState<T> {
    pub bag: TemplateBag<T>,
    pub sc: SequentialConfidence,
    /// Normalized boxes of the most recent tracked frames, oldest first.
    pub history: Vec<NormBBox>,
    pub last_output: BBox,
    pub status: Status,
    pub frame_index: u64,
}

impl<T> TrackState<T> {
    fn push_history(&mut self, b: NormBBox) {
        if self.history.len() == WINDOW {
            self.history.remove(0);
        }
        self.history.push(b);
    }
}

pub struct Tracker<'a, S: AppearanceScorer, P: PathPredictor + ?Sized> {
    scorer: &'a S,
    predictor: &'a P,
    cfg: PipelineConfig,
    state: TrackState<S::Template>,
}

impl<'a, S: AppearanceScorer, P: PathPredictor + ?Sized> Tracker<'a, S, P> {
    pub fn init(
        scorer: &'a S,
        predictor: &'a P,
        cfg: PipelineConfig,
        first_frame: &S::Frame,
        gt_box: BBox,
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let dims = scorer.dims(first_frame);
        let seed = normalize(gt_box, dims)?;
        let template = scorer
            .make_template(first_frame, &gt_box)
            .map_err(|e| PipelineError::Scorer(format!("{e}")))?;
        let bag = TemplateBag::new(cfg.bag.clone(), template)?;
        let sc = SequentialConfidence::new(if cfg.temporal { cfg.selector.sc_init } else { 0.0 });
        let mut history = Vec::with_capacity(WINDOW);
        history.push(seed);
        Ok(Self {
            scorer,
            predictor,
            state: TrackState {
                bag,
                sc,
                history,
                last_output: gt_box,
                status: Status::Tracked,
                frame_index: 0,
            },
            cfg,
        })
    }

    pub fn state(&self) -> &TrackState<S::Template> {
        &self.state
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn step(&mut self, frame: &S::Frame) -> FrameResult {
        let frame_index = self.state.frame_index;
        self.state.frame_index += 1;
        let dims = self.scorer.dims(frame);

        let scorer = self.scorer;
        let maps: Result<Vec<ScoreMap>, _> = self.state.bag.templates().map(|t| scorer.score(frame, t)).collect();
        let maps = match maps {
            Ok(m) => m,
            Err(e) => return self.lost_with_fault(frame_index, format!("scorer: {e}")),
        };
        let fused = match fuse(&maps, &self.cfg.bag.fusion_weights) {
            Ok(m) => m,
            Err(e) => return self.lost_with_fault(frame_index, format!("fusion: {e}")),
        };
        let candidates = top_candidates(&fused, self.cfg.top_k, self.cfg.nms_radius);

        let mut fault = None;
        let pc = if self.cfg.temporal {
            match self.predictor.predict(&self.state.history) {
                Ok(pc) => pc,
                Err(e) => {
                    fault = Some(format!("predictor: {e}"));
                    self.state.history.last().map(NormBBox::center).unwrap_or((0.5, 0.5))
                }
            }
        } else {
            self.state.history.last().map(NormBBox::center).unwrap_or((0.5, 0.5))
        };

        let selection = match select(&candidates, pc, self.state.sc.value(), dims, &self.cfg.selector) {
            Ok(s) => s,
            Err(e) => return self.lost_with_fault(frame_index, format!("selector: {e}")),
        };

        match selection.outcome {
            Outcome::Tracked { index, bbox, rs } => {
                let confidence = candidates[index].confidence;
                match normalize(bbox, dims) {
                    Ok(nb) => self.state.push_history(nb),
                    Err(e) => fault = Some(format!("history: {e}")),
                }
                if self.cfg.temporal {
                    self.state.sc.update(confidence, &self.cfg.selector);
                }
                let updated_slot = self.refresh_bag(frame, &bbox, confidence, frame_index, &mut fault);
                self.state.last_output = bbox;
                self.state.status = Status::Tracked;
                FrameResult {
                    frame_index,
                    bbox: Some(bbox),
                    confidence,
                    rs,
                    status: Status::Tracked,
                    updated_slot,
                    selected: Some(index),
                    predicted_center: Some(pc),
                    candidates,
                    diagnostics: selection.diagnostics,
                    fault,
                }
            }
            Outcome::Lost { best_rs } => {
                if self.cfg.temporal {
                    self.state.sc.record_failure(&self.cfg.selector);
                }
                self.state.status = Status::Lost;
                let confidence = selection
                    .diagnostics
                    .iter()
                    .filter(|d| d.rs == best_rs)
                    .map(|d| d.confidence)
                    .fold(0.0, f64::max);
                FrameResult {
                    frame_index,
                    bbox: self.lost_output(),
                    confidence,
                    rs: best_rs,
                    status: Status::Lost,
                    updated_slot: None,
                    selected: None,
                    predicted_center: Some(pc),
                    candidates,
                    diagnostics: selection.diagnostics,
                    fault,
                }
            }
        }
    }

    fn refresh_bag(
        &mut self,
        frame: &S::Frame,
        bbox: &BBox,
        confidence: f64,
        frame_index: u64,
        fault: &mut Option<String>,
    ) -> Option<usize> {
        if self.cfg.lazy_templates && confidence < self.cfg.bag.tau_min {
            return None;
        }
        let template = match self.scorer.make_template(frame, bbox) {
            Ok(t) => t,
            Err(e) => {
                *fault = Some(format!("template: {e}"));
                return None;
            }
        };
        match self.state.bag.try_update(confidence, template, frame_index) {
            Ok(slot) => slot,
            Err(e) => {
                *fault = Some(format!("bag: {e}"));
                None
            }
        }
    }

    fn lost_output(&self) -> Option<BBox> {
        match self.cfg.lost_policy {
            LostPolicy::Hold => Some(self.state.last_output),
            LostPolicy::ReportNothing => None,
        }
    }

    fn lost_with_fault(&mut self, frame_index: u64, note: String) -> FrameResult {
        if self.cfg.temporal {
            self.state.sc.record_failure(&self.cfg.selector);
        }
        self.state.status = Status::Lost;
        FrameResult {
            frame_index,
            bbox: self.lost_output(),
            confidence: 0.0,
            rs: 0.0,
            status: Status::Lost,
            updated_slot: None,
            selected: None,
            predicted_center: None,
            candidates: Vec::new(),
            diagnostics: Vec::new(),
            fault: Some(note),
        }
    }
}

/// Initializes on `frames[0]` with `gt_first`, then steps over every frame,
/// the first one included.
pub fn run_sequence<S: AppearanceScorer, P: PathPredictor + ?Sized>(
    scorer: &S,
    predictor: &P,
    cfg: &PipelineConfig,
    frames: &[S::Frame],
    gt_first: BBox,
) -> Result<Vec<FrameResult>, PipelineError> {
    let first = frames.first().ok_or(PipelineError::EmptySequence)?;
    let mut tracker = Tracker::init(scorer, predictor, cfg.clone(), first, gt_first)?;
    Ok(frames.iter().map(|f| tracker.step(f)).collect())
}
