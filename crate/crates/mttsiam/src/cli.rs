//! Command-line entry points.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mttsiam_core::combinet::{load_windows, train_with, CombiNetModel};
use mttsiam_core::metrics::{aggregate, compute_metrics};
use mttsiam_core::pipeline::{LinearPredictor, PathPredictor};
use mttsiam_core::world::{generate, motion_corpus, scenario_suite, CorpusConfig, NamedScenario, WorldFrame};
use rayon::prelude::*;

use crate::ablation::{default_grid, precision_curves_csv, run_ablation, run_scenario, success_curves_csv, table_csv};
use crate::annotations::{load_annotations, write_otb, Layout, SequenceAnnotation};
use crate::config::Settings;
use crate::report::{write_report, EvalReport};
use crate::results::{self, ResultRecord};
use crate::model_io;

#[derive(Debug, Parser)]
#[command(name = "mttsiam", version, about = "Multi-template temporal tracking on synthetic and annotated sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed override; see each subcommand for what it seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Otb,
    Got10k,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Otb => Layout::Otb,
            LayoutArg::Got10k => Layout::Got10k,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario (`--seed` sets the scenario seed).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Suite scenario name, or `all` for the whole suite.
        #[arg(long)]
        scenario: Option<String>,
        /// Also write OTB-layout ground truth under `<out>/otb/`.
        #[arg(long)]
        export_otb: bool,
    },
    /// Train the path predictor (`--seed` seeds initialization, shuffling
    /// and the synthetic corpus).
    TrainCombinet {
        #[command(flatten)]
        common: Common,
        /// GOT-10k-layout annotation directory to train on.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        corpus: Option<PathBuf>,
        /// Train on a generated constant-velocity corpus instead.
        #[arg(long)]
        synthetic: bool,
        /// Sequences in the synthetic corpus (each gives 10 windows).
        #[arg(long, default_value_t = 5000)]
        sequences: usize,
    },
    /// Track scenarios and write per-frame results (`--seed` sets the
    /// scenario seed).
    Track {
        #[command(flatten)]
        common: Common,
        /// Suite scenario name, or `all`.
        #[arg(long)]
        scenario: Option<String>,
        /// Path predictor model file; linear extrapolation without one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Score results against annotations (`--seed` is accepted and unused).
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory of `<sequence>.csv` results files, or one results file
        /// when the annotations hold a single sequence.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value = "otb")]
        layout: LayoutArg,
    },
    /// Run the ablation grid on the frozen suite (`--seed`, when given, is
    /// added to every scenario seed).
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            scenario,
            export_otb,
        } => simulate(&common, scenario.as_deref(), export_otb),
        Command::TrainCombinet {
            common,
            corpus,
            synthetic: _,
            sequences,
        } => train_combinet(&common, corpus.as_deref(), sequences),
        Command::Track { common, scenario, model } => track(&common, scenario.as_deref(), model.as_deref()),
        Command::Eval {
            common,
            results,
            annotations,
            layout,
        } => eval(&common, &results, &annotations, layout.into()),
        Command::Ablate { common, model } => ablate(&common, model.as_deref()),
    }
}

fn settings(common: &Common) -> Result<Settings> {
    match &common.config {
        Some(path) => Ok(Settings::load(path)?),
        None => Ok(Settings::default()),
    }
}

/// Scenarios selected by `--scenario`; without it, the config's scenario.
/// `--seed` replaces the seed of every selected scenario.
fn scenarios(common: &Common, s: &Settings, which: Option<&str>) -> Result<Vec<NamedScenario>> {
    let mut out = match which {
        Some("all") => scenario_suite(),
        Some(name) => vec![scenario_suite()
            .into_iter()
            .find(|x| x.name == name)
            .with_context(|| format!("unknown scenario {name:?}"))?],
        None => vec![NamedScenario {
            name: s.scenario_name.clone(),
            config: s.scenario.clone(),
        }],
    };
    if let Some(seed) = common.seed {
        for sc in &mut out {
            sc.config.seed = seed;
        }
    }
    for sc in &out {
        sc.config.validate().map_err(|e| anyhow::anyhow!("{}: {e}", sc.name))?;
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `frame,entity,visible,x,y,w,h`; entity 0 is the target and is listed
/// with `visible = 0` while occluded.
fn world_csv(world: &[WorldFrame]) -> String {
    let mut o = String::from("frame,entity,visible,x,y,w,h\n");
    for f in world {
        let b = f.target_box;
        o.push_str(&format!("{},0,{},{},{},{},{}\n", f.frame_index, u8::from(f.target_visible), b.x, b.y, b.w, b.h));
        for e in f.entities.iter().filter(|e| e.id != f.target_id) {
            let b = e.bbox;
            o.push_str(&format!("{},{},1,{},{},{},{}\n", f.frame_index, e.id, b.x, b.y, b.w, b.h));
        }
    }
    o
}

fn simulate(common: &Common, which: Option<&str>, export_otb: bool) -> Result<()> {
    let s = settings(common)?;
    let list = scenarios(common, &s, which)?;
    create_dir(&common.out)?;
    for sc in &list {
        let world = generate(&sc.config);
        let dir = common.out.join("worlds");
        create_dir(&dir)?;
        write(&dir.join(format!("{}.csv", sc.name)), world_csv(&world))?;
        let cfg = Settings {
            scenario_name: sc.name.clone(),
            scenario: sc.config.clone(),
            ..s.clone()
        };
        write(&dir.join(format!("{}.cfg", sc.name)), cfg.to_document())?;
        if export_otb {
            let ann = SequenceAnnotation {
                name: sc.name.clone(),
                dims: sc.config.arena,
                boxes: world.iter().map(WorldFrame::annotation).collect(),
            };
            write_otb(&common.out.join("otb"), &ann)?;
        }
        log::info!("{}: {} frames", sc.name, world.len());
    }
    Ok(())
}

fn train_combinet(common: &Common, corpus: Option<&Path>, sequences: usize) -> Result<()> {
    let mut s = settings(common)?;
    if let Some(seed) = common.seed {
        s.train.seed = seed;
    }
    let seqs = match corpus {
        Some(dir) => load_annotations(dir, Layout::Got10k)?
            .into_iter()
            .map(|a| (a.dims, a.boxes))
            .collect(),
        None => {
            let cfg = CorpusConfig {
                seed: s.train.seed,
                sequences,
                ..CorpusConfig::default()
            };
            cfg.validate().map_err(anyhow::Error::msg)?;
            motion_corpus(&cfg)
        }
    };
    let set = load_windows(&seqs);
    if set.skipped_short > 0 {
        log::warn!("{} sequences shorter than 5 frames skipped", set.skipped_short);
    }
    if set.samples.is_empty() {
        bail!("corpus yields no training windows");
    }
    log::info!("{} training windows", set.samples.len());
    let init = CombiNetModel::random(s.arch, s.train.seed)?;
    let report = train_with(&set.samples, init, &s.train, |epoch, loss| {
        log::info!("epoch {epoch}: loss {loss}");
    })?;
    create_dir(&common.out)?;
    model_io::save(&report.model, &common.out.join("model.txt"))?;
    let mut log = String::from("epoch,lr,loss\n");
    for (i, (lr, loss)) in report.learning_rates.iter().zip(&report.epoch_losses).enumerate() {
        log.push_str(&format!("{i},{lr},{loss}\n"));
    }
    write(&common.out.join("loss.csv"), log)
}

fn predictor(model: Option<&Path>) -> Result<Box<dyn PathPredictor + Sync>> {
    Ok(match model {
        Some(p) => Box::new(model_io::load(p)?),
        None => Box::new(LinearPredictor),
    })
}

fn track(common: &Common, which: Option<&str>, model: Option<&Path>) -> Result<()> {
    let s = settings(common)?;
    let list = scenarios(common, &s, which)?;
    let pred = predictor(model)?;
    let runs: Vec<_> = list
        .par_iter()
        .map(|sc| run_scenario(sc, &s.pipeline, pred.as_ref()))
        .collect();
    let dir = common.out.join("results");
    create_dir(&dir)?;
    for run in runs {
        let run = run.map_err(anyhow::Error::msg)?;
        let recs: Vec<ResultRecord> = run.results.iter().map(ResultRecord::from).collect();
        results::save(&recs, &dir.join(format!("{}.csv", run.name)))?;
        log::info!("{}: success AUC {:.4}", run.name, run.report.success_auc);
    }
    Ok(())
}

fn eval(common: &Common, results_path: &Path, annotations: &Path, layout: Layout) -> Result<()> {
    let seqs = load_annotations(annotations, layout)?;
    if seqs.is_empty() {
        bail!("no annotated sequences under {}", annotations.display());
    }
    let single_file = results_path.is_file();
    if single_file && seqs.len() != 1 {
        bail!(
            "{} is a single results file but {} holds {} sequences",
            results_path.display(),
            annotations.display(),
            seqs.len()
        );
    }
    let per_seq: Vec<Result<(String, _)>> = seqs
        .par_iter()
        .map(|seq| {
            let file = if single_file {
                results_path.to_path_buf()
            } else {
                results_path.join(format!("{}.csv", seq.name))
            };
            let recs = results::load(&file)?;
            let predicted: Vec<_> = recs.iter().map(|r| r.bbox).collect();
            let m = compute_metrics(&predicted, &seq.boxes).with_context(|| format!("sequence {}", seq.name))?;
            Ok((seq.name.clone(), m))
        })
        .collect();
    let sequences = per_seq.into_iter().collect::<Result<Vec<_>>>()?;
    let reports: Vec<_> = sequences.iter().map(|(_, m)| m.clone()).collect();
    let report = EvalReport {
        overall: aggregate(&reports)?,
        sequences,
    };
    write_report(&common.out, &report).with_context(|| format!("writing report to {}", common.out.display()))?;
    log::info!("success AUC {:.4}", report.overall.success_auc);
    Ok(())
}

fn ablate(common: &Common, model: Option<&Path>) -> Result<()> {
    let s = settings(common)?;
    let mut suite = scenario_suite();
    if let Some(seed) = common.seed {
        for sc in &mut suite {
            sc.config.seed = sc.config.seed.wrapping_add(seed);
        }
    }
    let pred = predictor(model)?;
    let rows = run_ablation(&suite, &default_grid(), &s.pipeline, pred.as_ref());
    create_dir(&common.out)?;
    write(&common.out.join("ablation.csv"), table_csv(&rows))?;
    write(&common.out.join("ablation_success.csv"), success_curves_csv(&rows))?;
    write(&common.out.join("ablation_precision.csv"), precision_curves_csv(&rows))?;
    for row in &rows {
        for e in row.runs.iter().filter_map(|r| r.as_ref().err()) {
            log::error!("{}: {e}", row.cell.label());
        }
    }
    Ok(())
}
