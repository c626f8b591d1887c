//! Deterministic synthetic tracking world and a mock appearance scorer.
//!
//! Every entity carries a unit appearance vector in `R^16`. The scorer turns a
//! template vector into a score map on a fixed grid: each visible entity
//! deposits a Gaussian bump centered on its grid cell whose height is the
//! cosine similarity between template and entity, clamped to `[0, 1]`.
//! Overlapping bumps combine by maximum, then uniform noise in
//! `[-noise, noise]` is added and the cell clamped to `[0, 1]`.
//!
//! Each frame shows every entity with observation jitter: a fresh Gaussian
//! vector of norm about `appearance_jitter` is added to the underlying
//! appearance and the result renormalized. Two observations of the same
//! entity then agree at about `1/(1 + jitter^2)` and the confidence of a
//! template fluctuates from frame to frame.
//!
//! The target's appearance drifts toward a seeded attractor whose cosine to
//! the first-frame appearance is `drift_floor`, so the first-frame template
//! slowly stops matching it but the target never turns into a stranger.
//! Distractors are re-anchored every frame at a fixed cosine similarity to the
//! target's current vector, with the remaining component along a private
//! random direction.
//!
//! [`motion_corpus`] generates plain box paths for training the path
//! predictor.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::geometry::{iou, BBox, ImageDims};
use crate::pipeline::AppearanceScorer;
use crate::score_fusion::ScoreMap;

/// Dimension of appearance vectors.
pub const APPEARANCE_DIM: usize = 16;
pub type Appearance = [f64; APPEARANCE_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    /// Center moves by `(vx, vy)` pixels per frame.
    ConstantVelocity { vx: f64, vy: f64 },
    /// Constant horizontal speed, sinusoidal vertical offset.
    SineWeave { vx: f64, amplitude: f64, period: f64 },
    /// Gaussian steps of standard deviation `sigma` pixels per axis.
    RandomWalk { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistractorConfig {
    pub count: usize,
    /// Cosine similarity to the target's current appearance.
    pub similarity: f64,
    /// Pixels per frame; distractors bounce off the arena walls.
    pub speed: f64,
}

impl DistractorConfig {
    pub const NONE: Self = Self {
        count: 0,
        similarity: 0.0,
        speed: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frames: usize,
    pub arena: ImageDims,
    pub target_start: (f64, f64),
    pub target_size: (f64, f64),
    pub motion: Motion,
    pub distractors: DistractorConfig,
    /// Angle-scale step of the target appearance per frame.
    pub drift_rate: f64,
    /// Cosine between the initial appearance and the direction drift pulls
    /// toward.
    pub drift_floor: f64,
    /// Norm scale of the per-frame observation noise on every appearance.
    pub appearance_jitter: f64,
    /// `(first_frame, length)` windows during which the target is hidden.
    pub occlusions: Vec<(usize, usize)>,
    pub scorer: ScorerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScorerConfig {
    pub grid: usize,
    /// Bump standard deviation in cells.
    pub sigma: f64,
    pub noise: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            grid: 32,
            sigma: 1.5,
            noise: 0.05,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 200,
            arena: ImageDims::new(640, 480),
            target_start: (120.0, 120.0),
            target_size: (48.0, 36.0),
            motion: Motion::ConstantVelocity { vx: 2.0, vy: 1.2 },
            distractors: DistractorConfig::NONE,
            drift_rate: 0.0,
            drift_floor: 0.0,
            appearance_jitter: 0.0,
            occlusions: Vec::new(),
            scorer: ScorerConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.frames < 5 {
            return Err("a scenario needs at least 5 frames");
        }
        if self.arena.validate().is_err() {
            return Err("arena must have positive size");
        }
        let (w, h) = self.target_size;
        if !(w > 0.0 && h > 0.0 && w <= self.arena.width as f64 && h <= self.arena.height as f64) {
            return Err("target size must be positive and fit the arena");
        }
        if !(0.0..=1.0).contains(&self.distractors.similarity) {
            return Err("distractor similarity must lie in [0, 1]");
        }
        if !(-1.0..1.0).contains(&self.drift_floor) {
            return Err("drift floor must lie in [-1, 1)");
        }
        if !(self.drift_rate >= 0.0) || !(self.distractors.speed >= 0.0) {
            return Err("drift rate and distractor speed must be non-negative");
        }
        if let Motion::SineWeave { period, .. } = self.motion {
            if !(period > 0.0) {
                return Err("sine period must be positive");
            }
        }
        let sc = &self.scorer;
        if sc.grid == 0 || !(sc.sigma > 0.0) || !(sc.noise >= 0.0) || !(self.appearance_jitter >= 0.0) {
            return Err("scorer grid and sigma must be positive, noise levels non-negative");
        }
        Ok(())
    }

    pub fn is_occluded(&self, frame: usize) -> bool {
        self.occlusions.iter().any(|&(s, len)| frame >= s && frame < s + len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: usize,
    pub bbox: BBox,
    pub appearance: Appearance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldFrame {
    pub frame_index: usize,
    pub arena: ImageDims,
    /// Visible entities. The target is absent while occluded.
    pub entities: Vec<Entity>,
    pub target_id: usize,
    pub target_visible: bool,
    /// True target box, also while occluded.
    pub target_box: BBox,
}

impl WorldFrame {
    /// Ground truth as annotated: absent while occluded.
    pub fn annotation(&self) -> Option<BBox> {
        self.target_visible.then_some(self.target_box)
    }
}

const TARGET_ID: usize = 0;

fn dot(a: &Appearance, b: &Appearance) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &Appearance) -> f64 {
    libm::sqrt(dot(a, a))
}

fn scaled(a: &Appearance, k: f64) -> Appearance {
    let mut out = *a;
    out.iter_mut().for_each(|x| *x *= k);
    out
}

fn add(a: &Appearance, b: &Appearance, k: f64) -> Appearance {
    let mut out = *a;
    out.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
    out
}

fn unit(a: &Appearance) -> Option<Appearance> {
    let n = norm(a);
    (n > 1e-12).then(|| scaled(a, 1.0 / n))
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &Appearance, b: &Appearance) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng) -> Appearance {
    let mut v = [0.0; APPEARANCE_DIM];
    v.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
    v
}

fn random_unit(rng: &mut ChaCha8Rng) -> Appearance {
    loop {
        if let Some(u) = unit(&gaussian_vec(rng)) {
            return u;
        }
    }
}

/// Component of `v` orthogonal to unit vector `t`.
fn reject(v: &Appearance, t: &Appearance) -> Appearance {
    add(v, t, -dot(v, t))
}

/// Target centers before clamping to the arena.
pub fn target_path(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let (x0, y0) = cfg.target_start;
    let mut out = Vec::with_capacity(cfg.frames);
    let (mut x, mut y) = (x0, y0);
    for t in 0..cfg.frames {
        let tf = t as f64;
        let c = match cfg.motion {
            Motion::ConstantVelocity { vx, vy } => (x0 + vx * tf, y0 + vy * tf),
            Motion::SineWeave { vx, amplitude, period } => (
                x0 + vx * tf,
                y0 + amplitude * libm::sin(2.0 * core::f64::consts::PI * tf / period),
            ),
            Motion::RandomWalk { sigma } => {
                if t > 0 {
                    x += sigma * rng.sample::<f64, _>(StandardNormal);
                    y += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                (x, y)
            }
        };
        out.push(c);
    }
    out
}

fn box_in_arena(center: (f64, f64), size: (f64, f64), arena: ImageDims) -> BBox {
    let (w, h) = size;
    let x = (center.0 - w / 2.0).clamp(0.0, arena.width as f64 - w);
    let y = (center.1 - h / 2.0).clamp(0.0, arena.height as f64 - h);
    BBox::new(x, y, w, h)
}

/// Bounces `pos` off `[lo, hi]`, flipping `vel` on contact.
fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    if *pos < lo {
        *pos = 2.0 * lo - *pos;
        *vel = -*vel;
    } else if *pos > hi {
        *pos = 2.0 * hi - *pos;
        *vel = -*vel;
    }
    *pos = pos.clamp(lo, hi);
}

/// Builds every frame of the scenario. Identical configs give identical worlds.
pub fn generate(cfg: &ScenarioConfig) -> Vec<WorldFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = random_unit(&mut rng);
    let drift_dir = {
        let q = unit(&reject(&random_unit(&mut rng), &initial)).unwrap_or(initial);
        let f = cfg.drift_floor;
        add(&scaled(&initial, f), &q, libm::sqrt(1.0 - f * f))
    };
    let path = target_path(cfg);

    let (aw, ah) = (cfg.arena.width as f64, cfg.arena.height as f64);
    let (tw, th) = cfg.target_size;
    struct Mover {
        x: f64,
        y: f64,
        vx: f64,
        vy: f64,
        offset: Appearance,
    }
    let mut movers: Vec<Mover> = (0..cfg.distractors.count)
        .map(|_| {
            let x = rng.random_range(tw / 2.0..=aw - tw / 2.0);
            let y = rng.random_range(th / 2.0..=ah - th / 2.0);
            let angle = rng.random_range(0.0..2.0 * core::f64::consts::PI);
            Mover {
                x,
                y,
                vx: cfg.distractors.speed * libm::cos(angle),
                vy: cfg.distractors.speed * libm::sin(angle),
                offset: random_unit(&mut rng),
            }
        })
        .collect();

    let s = cfg.distractors.similarity;
    let s_perp = libm::sqrt((1.0 - s * s).max(0.0));
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    jitter_rng.set_stream(2);
    let jitter_scale = cfg.appearance_jitter / libm::sqrt(APPEARANCE_DIM as f64);
    let mut observe = |a: Appearance| -> Appearance {
        if jitter_scale == 0.0 {
            return a;
        }
        let o = add(&a, &gaussian_vec(&mut jitter_rng), jitter_scale);
        unit(&o).unwrap_or(a)
    };
    let mut appearance = initial;
    let mut frames = Vec::with_capacity(cfg.frames);
    for (t, &center) in path.iter().enumerate() {
        if t > 0 && cfg.drift_rate > 0.0 {
            let jitter = gaussian_vec(&mut rng);
            let dir = unit(&add(&drift_dir, &jitter, 0.5 / libm::sqrt(APPEARANCE_DIM as f64))).unwrap_or(drift_dir);
            appearance = unit(&add(&appearance, &dir, cfg.drift_rate)).unwrap_or(appearance);
        }
        let target_box = box_in_arena(center, cfg.target_size, cfg.arena);
        let visible = !cfg.is_occluded(t);
        let mut entities = Vec::with_capacity(1 + movers.len());
        if visible {
            entities.push(Entity {
                id: TARGET_ID,
                bbox: target_box,
                appearance: observe(appearance),
            });
        }
        for (k, m) in movers.iter_mut().enumerate() {
            if t > 0 {
                m.x += m.vx;
                m.y += m.vy;
                reflect(&mut m.x, &mut m.vx, tw / 2.0, aw - tw / 2.0);
                reflect(&mut m.y, &mut m.vy, th / 2.0, ah - th / 2.0);
            }
            let perp = unit(&reject(&m.offset, &appearance)).unwrap_or([0.0; APPEARANCE_DIM]);
            let d = add(&scaled(&appearance, s), &perp, s_perp);
            entities.push(Entity {
                id: k + 1,
                bbox: box_in_arena((m.x, m.y), cfg.target_size, cfg.arena),
                appearance: observe(unit(&d).unwrap_or(d)),
            });
        }
        frames.push(WorldFrame {
            frame_index: t,
            arena: cfg.arena,
            entities,
            target_id: TARGET_ID,
            target_visible: visible,
            target_box,
        });
    }
    frames
}

/// Appearance-free scorer over [`WorldFrame`]s.
#[derive(Debug, Clone)]
pub struct MockScorer {
    cfg: ScorerConfig,
    arena: ImageDims,
    noise_seed: u64,
}

impl MockScorer {
    pub fn new(cfg: ScorerConfig, arena: ImageDims, noise_seed: u64) -> Self {
        Self { cfg, arena, noise_seed }
    }

    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        Self::new(cfg.scorer, cfg.arena, cfg.seed ^ 0x6e6f_6973_65)
    }

    fn cell_size(&self) -> (f64, f64) {
        let g = self.cfg.grid as f64;
        (self.arena.width as f64 / g, self.arena.height as f64 / g)
    }

    /// Grid cell holding the point, as `(row, col)`.
    pub fn cell_of(&self, p: (f64, f64)) -> (usize, usize) {
        let (cw, ch) = self.cell_size();
        let g = self.cfg.grid;
        let col = ((p.0 / cw) as usize).min(g - 1);
        let row = ((p.1 / ch) as usize).min(g - 1);
        (row, col)
    }

    fn cell_box(&self, row: usize, col: usize) -> BBox {
        let (cw, ch) = self.cell_size();
        BBox::new(col as f64 * cw, row as f64 * ch, cw, ch)
    }
}

impl AppearanceScorer for MockScorer {
    type Frame = WorldFrame;
    type Template = Appearance;
    type Error = String;

    fn dims(&self, frame: &WorldFrame) -> ImageDims {
        frame.arena
    }

    /// Appearance of the entity overlapping `bbox` most (IoU at least 0.3),
    /// otherwise the zero vector.
    fn make_template(&self, frame: &WorldFrame, bbox: &BBox) -> Result<Appearance, String> {
        let mut best = (0.3, None);
        for e in &frame.entities {
            let o = iou(&e.bbox, bbox);
            if o >= best.0 {
                best = (o, Some(e.appearance));
            }
        }
        Ok(best.1.unwrap_or([0.0; APPEARANCE_DIM]))
    }

    fn score(&self, frame: &WorldFrame, template: &Appearance) -> Result<ScoreMap, String> {
        if frame.arena != self.arena {
            return Err(format!(
                "frame arena {}x{} differs from scorer arena {}x{}",
                frame.arena.width, frame.arena.height, self.arena.width, self.arena.height
            ));
        }
        let g = self.cfg.grid;
        let mut scores = vec![0.0; g * g];
        let mut nearest = vec![(f64::INFINITY, None::<BBox>); g * g];
        let reach = (3.0 * self.cfg.sigma) as isize + 1;
        let two_s2 = 2.0 * self.cfg.sigma * self.cfg.sigma;
        for e in &frame.entities {
            let h = cosine(template, &e.appearance).clamp(0.0, 1.0);
            let (er, ec) = self.cell_of(e.bbox.center());
            for r in 0..g {
                for c in 0..g {
                    let dr = r as isize - er as isize;
                    let dc = c as isize - ec as isize;
                    let d2 = (dr * dr + dc * dc) as f64;
                    let cell = &mut nearest[r * g + c];
                    if d2 < cell.0 {
                        *cell = (d2, Some(e.bbox));
                    }
                    if dr.abs() <= reach && dc.abs() <= reach {
                        let v = h * libm::exp(-d2 / two_s2);
                        if v > scores[r * g + c] {
                            scores[r * g + c] = v;
                        }
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        rng.set_stream(frame.frame_index as u64);
        let amp = self.cfg.noise;
        for s in &mut scores {
            let u: f64 = rng.random_range(-1.0..1.0);
            *s = (*s + amp * u).clamp(0.0, 1.0);
        }
        let max_d2 = (reach * reach) as f64;
        let boxes = (0..g * g)
            .map(|i| match nearest[i] {
                (d2, Some(b)) if d2 <= max_d2 => b,
                _ => self.cell_box(i / g, i % g),
            })
            .collect();
        ScoreMap::new(g, g, scores, boxes).map_err(|e| format!("{e}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedScenario {
    pub name: String,
    pub config: ScenarioConfig,
}

/// Variant axis of the frozen suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Clean,
    Distractors,
    DriftDistractors,
    Occlusion,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Clean,
        Variant::Distractors,
        Variant::DriftDistractors,
        Variant::Occlusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Clean => "clean",
            Variant::Distractors => "distractors",
            Variant::DriftDistractors => "drift-distractors",
            Variant::Occlusion => "occlusion",
        }
    }

    pub fn has_distractors(self) -> bool {
        matches!(self, Variant::Distractors | Variant::DriftDistractors)
    }
}

/// Motion axis of the frozen suite, with its fixed parameters.
pub fn suite_motions() -> [(&'static str, Motion, (f64, f64)); 3] {
    [
        ("cv", Motion::ConstantVelocity { vx: 2.0, vy: 1.2 }, (120.0, 120.0)),
        (
            "sine",
            Motion::SineWeave {
                vx: 2.2,
                amplitude: 90.0,
                period: 80.0,
            },
            (100.0, 240.0),
        ),
        ("walk", Motion::RandomWalk { sigma: 3.0 }, (320.0, 240.0)),
    ]
}

/// Observation jitter of every suite scenario. Puts a fresh template's
/// confidence near 0.92 with frame-to-frame spread, so adaptive thresholds
/// have a spread of confidences to sort.
pub const SUITE_APPEARANCE_JITTER: f64 = 0.3;

/// Scenario for one cell of the suite grid.
pub fn suite_scenario(motion_index: usize, variant: Variant) -> NamedScenario {
    let (mname, motion, start) = suite_motions()[motion_index];
    let variant_index = Variant::ALL.iter().position(|v| *v == variant).unwrap_or(0);
    let mut config = ScenarioConfig {
        seed: 7100 + (motion_index * 4 + variant_index) as u64,
        motion,
        target_start: start,
        appearance_jitter: SUITE_APPEARANCE_JITTER,
        ..ScenarioConfig::default()
    };
    match variant {
        Variant::Clean => {}
        Variant::Distractors => {
            config.distractors = DistractorConfig {
                count: 3,
                similarity: 0.9,
                speed: 2.0,
            };
        }
        Variant::DriftDistractors => {
            config.drift_rate = 0.02;
            config.drift_floor = 0.5;
            config.distractors = DistractorConfig {
                count: 3,
                similarity: 0.85,
                speed: 2.0,
            };
        }
        Variant::Occlusion => {
            config.occlusions = vec![(60, 12), (140, 8)];
        }
    }
    NamedScenario {
        name: format!("{mname}-{}", variant.name()),
        config,
    }
}

/// The frozen 12-scenario suite: 3 motions x 4 variants, motion-major.
pub fn scenario_suite() -> Vec<NamedScenario> {
    (0..3)
        .flat_map(|m| Variant::ALL.iter().map(move |&v| suite_scenario(m, v)))
        .collect()
}

/// Box-path corpus for training the path predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub sequences: usize,
    /// Frames per sequence; each yields `frames - 4` training windows.
    pub frames: usize,
    pub arena: ImageDims,
    /// Largest per-axis speed in normalized units per frame. Zero gives
    /// stationary targets.
    pub max_speed: f64,
    /// Range of normalized box sides.
    pub size: (f64, f64),
    /// Standard deviation of the Gaussian annotation noise on every box
    /// center, in normalized units.
    pub jitter: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sequences: 5000,
            frames: 14,
            arena: ImageDims::new(1000, 1000),
            max_speed: 0.02,
            size: (0.05, 0.3),
            jitter: 0.002,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.frames < 5 {
            return Err("corpus sequences need at least 5 frames");
        }
        if self.arena.validate().is_err() {
            return Err("arena must have positive size");
        }
        let (lo, hi) = self.size;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err("box sides must satisfy 0 < min <= max < 1");
        }
        if !(self.max_speed >= 0.0) || !(self.jitter >= 0.0) {
            return Err("speed and jitter must be non-negative");
        }
        let travel = self.max_speed * (self.frames - 1) as f64;
        if hi + 2.0 * travel >= 1.0 {
            return Err("boxes cannot stay inside the arena at this speed and length");
        }
        Ok(())
    }
}

/// Constant-velocity box sequences in pixel coordinates, ready for
/// [`crate::combinet::load_windows`]. Start, velocity and size are uniform;
/// every path keeps its whole box inside the arena before jitter.
pub fn motion_corpus(cfg: &CorpusConfig) -> Vec<(ImageDims, Vec<Option<BBox>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (aw, ah) = (cfg.arena.width as f64, cfg.arena.height as f64);
    let travel = cfg.max_speed * (cfg.frames - 1) as f64;
    let mut uniform = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
    let mut out = Vec::with_capacity(cfg.sequences);
    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise.set_stream(1);
    for _ in 0..cfg.sequences {
        let w = uniform(cfg.size.0, cfg.size.1);
        let h = uniform(cfg.size.0, cfg.size.1);
        let x0 = uniform(w / 2.0 + travel, 1.0 - w / 2.0 - travel);
        let y0 = uniform(h / 2.0 + travel, 1.0 - h / 2.0 - travel);
        let vx = uniform(-cfg.max_speed, cfg.max_speed);
        let vy = uniform(-cfg.max_speed, cfg.max_speed);
        let boxes = (0..cfg.frames)
            .map(|t| {
                let nx: f64 = noise.sample(StandardNormal);
                let ny: f64 = noise.sample(StandardNormal);
                let cx = x0 + vx * t as f64 + cfg.jitter * nx;
                let cy = y0 + vy * t as f64 + cfg.jitter * ny;
                Some(BBox::from_center(cx * aw, cy * ah, w * aw, h * ah))
            })
            .collect();
        out.push((cfg.arena, boxes));
    }
    out
}
