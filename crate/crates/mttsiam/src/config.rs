//! Unified config file: a flat, ordered list of `key = value` lines.
//!
//! Keys carry a section prefix (`bag.`, `fusion.`, `selector.`, `combinet.`,
//! `scenario.`). `#` starts a comment; blank lines are ignored. Lists are
//! comma-separated. Later lines override earlier ones, except
//! `scenario.preset`, which always applies first so the other scenario keys
//! refine it. `bag.n` resets the slot weights, fusion weights and threshold
//! mode to the defaults for that size, so it belongs before them.

use std::fmt::Write as _;
use std::path::Path;

use mttsiam_core::combinet::{Architecture, LrSchedule, TrainConfig};
use mttsiam_core::geometry::ImageDims;
use mttsiam_core::pipeline::{LostPolicy, PipelineConfig};
use mttsiam_core::selector::{DistanceMode, ScSource};
use mttsiam_core::template_bag::{default_fusion_weights, default_slot_weights, AverageMode, SlotWeight, ThresholdMode};
use mttsiam_core::world::{scenario_suite, DistractorConfig, Motion, ScenarioConfig};
use thiserror::Error;

use crate::ablation::suite_pipeline_config;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Every setting a CLI run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub arch: Architecture,
    pub train: TrainConfig,
    /// Name of the suite scenario the scenario keys started from.
    pub scenario_name: String,
    pub scenario: ScenarioConfig,
}

impl Default for Settings {
    /// Suite pipeline settings, 100-epoch batch-1024 training, and the
    /// `cv-clean` suite scenario.
    fn default() -> Self {
        let first = scenario_suite().swap_remove(0);
        Self {
            pipeline: suite_pipeline_config(),
            arch: Architecture::default(),
            train: TrainConfig {
                batch_size: 1024,
                epochs: 100,
                ..TrainConfig::default()
            },
            scenario_name: first.name,
            scenario: first.config,
        }
    }
}

/// Parsed `(line, key, value)` entries in file order.
pub fn parse_document(text: &str, path: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Parse {
                path: path.into(),
                line: i + 1,
                msg: format!("expected `key = value`, found {raw:?}"),
            });
        };
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: name.clone(),
            source,
        })?;
        Self::from_str_named(&text, &name)
    }

    pub fn from_str_named(text: &str, path: &str) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        s.apply(text, path)?;
        Ok(s)
    }

    /// Applies a document on top of the current values and validates.
    pub fn apply(&mut self, text: &str, path: &str) -> Result<(), ConfigError> {
        let entries = parse_document(text, path)?;
        let (presets, rest): (Vec<_>, Vec<_>) = entries.into_iter().partition(|(_, k, _)| k == "scenario.preset");
        for (line, k, v) in presets.iter().chain(&rest) {
            self.set(k, v).map_err(|msg| ConfigError::Parse {
                path: path.into(),
                line: *line,
                msg: format!("{k}: {msg}"),
            })?;
        }
        self.validate().map_err(|msg| ConfigError::Invalid { path: path.into(), msg })
    }

    pub fn validate(&self) -> Result<(), String> {
        self.pipeline.validate().map_err(|e| e.to_string())?;
        self.arch.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        self.scenario.validate().map_err(str::to_string)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let p = &mut self.pipeline;
        let sel = &mut p.selector;
        let sc = &mut self.scenario;
        let tr = &mut self.train;
        match key {
            "bag.n" => {
                let n = num(v)?;
                p.bag.n = n;
                p.bag.slot_weights = default_slot_weights(n);
                p.bag.fusion_weights = default_fusion_weights(n);
                if let ThresholdMode::Constant(_) = p.bag.mode {
                    p.bag.mode = ThresholdMode::Adaptive;
                }
            }
            "bag.tau_min" => p.bag.tau_min = float(v)?,
            "bag.cbar_alpha" => p.bag.cbar_alpha = float(v)?,
            "bag.above_t" | "bag.below_t" => {
                let above = key == "bag.above_t";
                let keep: Vec<SlotWeight> = p
                    .bag
                    .slot_weights
                    .iter()
                    .copied()
                    .filter(|w| (w.group == mttsiam_core::template_bag::SlotGroup::AboveMean) != above)
                    .collect();
                let new: Vec<SlotWeight> = floats(v)?
                    .into_iter()
                    .map(|t| if above { SlotWeight::above(t) } else { SlotWeight::below(t) })
                    .collect();
                p.bag.slot_weights = if above { [new, keep].concat() } else { [keep, new].concat() };
            }
            "bag.mode" => {
                p.bag.mode = match v {
                    "adaptive" => ThresholdMode::Adaptive,
                    "constant" => ThresholdMode::Constant(match &p.bag.mode {
                        ThresholdMode::Constant(t) => t.clone(),
                        ThresholdMode::Adaptive => Vec::new(),
                    }),
                    _ => return Err("expected adaptive or constant".into()),
                }
            }
            "bag.constant_thresholds" => p.bag.mode = ThresholdMode::Constant(floats(v)?),
            "bag.average" => {
                p.bag.average = match v {
                    "ema" => AverageMode::Ema,
                    "cumulative" => AverageMode::CumulativeMean,
                    "frozen" => AverageMode::Frozen,
                    _ => return Err("expected ema, cumulative or frozen".into()),
                }
            }
            "fusion.weights" => p.bag.fusion_weights = floats(v)?,
            "fusion.top_k" => p.top_k = num(v)?,
            "fusion.nms_radius" => p.nms_radius = num(v)?,
            "selector.bonus_b" => sel.bonus_b = float(v)?,
            "selector.rw" => sel.rw = float(v)?,
            "selector.sc_alpha" => sel.sc_alpha = float(v)?,
            "selector.tau_select" => sel.tau_select = float(v)?,
            "selector.tau_conf" => sel.tau_conf = float(v)?,
            "selector.sc_init" => sel.sc_init = float(v)?,
            "selector.enabled" => sel.enabled = boolean(v)?,
            "selector.temporal" => p.temporal = boolean(v)?,
            "selector.lazy_templates" => p.lazy_templates = boolean(v)?,
            "selector.de_mode" => {
                sel.de_mode = match v {
                    "sum" => DistanceMode::Sum,
                    "l1_mean" => DistanceMode::L1Mean,
                    _ => return Err("expected sum or l1_mean".into()),
                }
            }
            "selector.sc_source" => {
                sel.sc_source = match v {
                    "success" => ScSource::SuccessIndicator,
                    "confidence" => ScSource::Confidence,
                    _ => return Err("expected success or confidence".into()),
                }
            }
            "selector.lost_policy" => {
                p.lost_policy = match v {
                    "hold" => LostPolicy::Hold,
                    "nothing" => LostPolicy::ReportNothing,
                    _ => return Err("expected hold or nothing".into()),
                }
            }
            "combinet.conv_channels" => self.arch.conv_channels = num(v)?,
            "combinet.kernel" => self.arch.kernel = num(v)?,
            "combinet.outputs" => self.arch.outputs = num(v)?,
            "combinet.leaky_slope" => self.arch.leaky_slope = float(v)?,
            "combinet.batch_size" => tr.batch_size = num(v)?,
            "combinet.momentum" => tr.momentum = float(v)?,
            "combinet.weight_decay" => tr.weight_decay = float(v)?,
            "combinet.epochs" => tr.epochs = num(v)?,
            "combinet.lr0" => tr.lr0 = float(v)?,
            "combinet.lr_decay_base" => tr.lr_decay_base = float(v)?,
            "combinet.schedule" => {
                tr.schedule = match v {
                    "literal" => LrSchedule::Literal,
                    "multiplicative" => LrSchedule::Multiplicative,
                    _ => return Err("expected literal or multiplicative".into()),
                }
            }
            "scenario.preset" => {
                let named = scenario_suite()
                    .into_iter()
                    .find(|s| s.name == v)
                    .ok_or_else(|| format!("unknown suite scenario {v:?}"))?;
                self.scenario_name = named.name;
                self.scenario = named.config;
            }
            "scenario.seed" => sc.seed = num(v)?,
            "scenario.frames" => sc.frames = num(v)?,
            "scenario.arena" => {
                let [w, h] = pair(v)?;
                sc.arena = ImageDims::new(w as u32, h as u32);
            }
            "scenario.target_start" => {
                let [x, y] = pair(v)?;
                sc.target_start = (x, y);
            }
            "scenario.target_size" => {
                let [w, h] = pair(v)?;
                sc.target_size = (w, h);
            }
            "scenario.motion" => sc.motion = parse_motion(v)?,
            "scenario.distractors" => {
                let f = floats(v)?;
                let [count, similarity, speed] = f[..] else {
                    return Err("expected count, similarity, speed".into());
                };
                if count < 0.0 || count.fract() != 0.0 {
                    return Err("distractor count must be a whole number".into());
                }
                sc.distractors = DistractorConfig {
                    count: count as usize,
                    similarity,
                    speed,
                };
            }
            "scenario.drift_rate" => sc.drift_rate = float(v)?,
            "scenario.drift_floor" => sc.drift_floor = float(v)?,
            "scenario.appearance_jitter" => sc.appearance_jitter = float(v)?,
            "scenario.occlusions" => {
                sc.occlusions = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|p| {
                            let (a, b) = p.trim().split_once(':').ok_or("expected start:length pairs")?;
                            Ok((num(a)?, num(b)?))
                        })
                        .collect::<Result<_, String>>()?
                };
            }
            "scenario.grid" => sc.scorer.grid = num(v)?,
            "scenario.sigma" => sc.scorer.sigma = float(v)?,
            "scenario.noise" => sc.scorer.noise = float(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Every setting as a document that [`Settings::from_str_named`] reads
    /// back to an equal value.
    pub fn to_document(&self) -> String {
        let mut o = String::new();
        let p = &self.pipeline;
        let b = &p.bag;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let group = |above: bool| -> Vec<f64> {
            b.slot_weights
                .iter()
                .filter(|w| (w.group == mttsiam_core::template_bag::SlotGroup::AboveMean) == above)
                .map(|w| w.t)
                .collect()
        };
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("bag.n", b.n.to_string());
        kv("bag.tau_min", b.tau_min.to_string());
        kv("bag.cbar_alpha", b.cbar_alpha.to_string());
        kv("bag.above_t", list(&group(true)));
        kv("bag.below_t", list(&group(false)));
        match &b.mode {
            ThresholdMode::Adaptive => kv("bag.mode", "adaptive".into()),
            ThresholdMode::Constant(t) => kv("bag.constant_thresholds", list(t)),
        }
        let avg = match b.average {
            AverageMode::Ema => "ema",
            AverageMode::CumulativeMean => "cumulative",
            AverageMode::Frozen => "frozen",
        };
        kv("bag.average", avg.into());
        kv("fusion.weights", list(&b.fusion_weights));
        kv("fusion.top_k", p.top_k.to_string());
        kv("fusion.nms_radius", p.nms_radius.to_string());
        let s = &p.selector;
        kv("selector.bonus_b", s.bonus_b.to_string());
        kv("selector.rw", s.rw.to_string());
        kv("selector.sc_alpha", s.sc_alpha.to_string());
        kv("selector.tau_select", s.tau_select.to_string());
        kv("selector.tau_conf", s.tau_conf.to_string());
        kv("selector.sc_init", s.sc_init.to_string());
        kv("selector.enabled", s.enabled.to_string());
        kv("selector.temporal", p.temporal.to_string());
        kv("selector.lazy_templates", p.lazy_templates.to_string());
        let de = match s.de_mode {
            DistanceMode::Sum => "sum",
            DistanceMode::L1Mean => "l1_mean",
        };
        kv("selector.de_mode", de.into());
        let src = match s.sc_source {
            ScSource::SuccessIndicator => "success",
            ScSource::Confidence => "confidence",
        };
        kv("selector.sc_source", src.into());
        let lost = match p.lost_policy {
            LostPolicy::Hold => "hold",
            LostPolicy::ReportNothing => "nothing",
        };
        kv("selector.lost_policy", lost.into());
        let a = &self.arch;
        kv("combinet.conv_channels", a.conv_channels.to_string());
        kv("combinet.kernel", a.kernel.to_string());
        kv("combinet.outputs", a.outputs.to_string());
        kv("combinet.leaky_slope", a.leaky_slope.to_string());
        let t = &self.train;
        kv("combinet.batch_size", t.batch_size.to_string());
        kv("combinet.momentum", t.momentum.to_string());
        kv("combinet.weight_decay", t.weight_decay.to_string());
        kv("combinet.epochs", t.epochs.to_string());
        kv("combinet.lr0", t.lr0.to_string());
        kv("combinet.lr_decay_base", t.lr_decay_base.to_string());
        let sched = match t.schedule {
            LrSchedule::Literal => "literal",
            LrSchedule::Multiplicative => "multiplicative",
        };
        kv("combinet.schedule", sched.into());
        if scenario_suite().iter().any(|s| s.name == self.scenario_name) {
            kv("scenario.preset", self.scenario_name.clone());
        }
        let c = &self.scenario;
        kv("scenario.seed", c.seed.to_string());
        kv("scenario.frames", c.frames.to_string());
        kv("scenario.arena", format!("{}, {}", c.arena.width, c.arena.height));
        kv("scenario.target_start", format!("{}, {}", c.target_start.0, c.target_start.1));
        kv("scenario.target_size", format!("{}, {}", c.target_size.0, c.target_size.1));
        kv("scenario.motion", format_motion(&c.motion));
        let d = &c.distractors;
        kv("scenario.distractors", format!("{}, {}, {}", d.count, d.similarity, d.speed));
        kv("scenario.drift_rate", c.drift_rate.to_string());
        kv("scenario.drift_floor", c.drift_floor.to_string());
        kv("scenario.appearance_jitter", c.appearance_jitter.to_string());
        let occ: Vec<String> = c.occlusions.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        kv("scenario.occlusions", occ.join(", "));
        kv("scenario.grid", c.scorer.grid.to_string());
        kv("scenario.sigma", c.scorer.sigma.to_string());
        kv("scenario.noise", c.scorer.noise.to_string());
        o
    }
}

/// `cv vx vy`, `sine vx amplitude period` or `walk sigma`.
fn parse_motion(v: &str) -> Result<Motion, String> {
    let mut it = v.split_whitespace();
    let kind = it.next().unwrap_or("");
    let args: Vec<f64> = it.map(|s| s.parse().map_err(|_| format!("bad number {s:?}"))).collect::<Result<_, _>>()?;
    match (kind, &args[..]) {
        ("cv", &[vx, vy]) => Ok(Motion::ConstantVelocity { vx, vy }),
        ("sine", &[vx, amplitude, period]) => Ok(Motion::SineWeave { vx, amplitude, period }),
        ("walk", &[sigma]) => Ok(Motion::RandomWalk { sigma }),
        _ => Err("expected `cv vx vy`, `sine vx amplitude period` or `walk sigma`".into()),
    }
}

fn format_motion(m: &Motion) -> String {
    match *m {
        Motion::ConstantVelocity { vx, vy } => format!("cv {vx} {vy}"),
        Motion::SineWeave { vx, amplitude, period } => format!("sine {vx} {amplitude} {period}"),
        Motion::RandomWalk { sigma } => format!("walk {sigma}"),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, found {v:?}"))
}

fn float(v: &str) -> Result<f64, String> {
    v.parse().map_err(|_| format!("expected a number, found {v:?}"))
}

fn floats(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| float(s.trim())).collect()
}

fn pair(v: &str) -> Result<[f64; 2], String> {
    floats(v)?.try_into().map_err(|_| "expected two comma-separated numbers".to_string())
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}
