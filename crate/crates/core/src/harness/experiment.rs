//! The method × rank experiment over random speaker pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{load_corpus, Corpus, SplitRule};
use super::report::{
    read_rows, sort_rows, summarize, write_rows, write_summary, CellKey, ExperimentSummary, ResultRow, RowAppender,
    TimingRow, RESULTS_FILE, SUMMARY_FILE, TIMINGS_FILE,
};
use crate::dsp::{make_mixture, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::metrics::{bss_eval, DEFAULT_FILTER_LEN};
use crate::nae::TrainConfig;
use crate::numerics::{seeded_rng, SeedHasher};
use crate::separation::{separate, train_source_model, ModelKind, ModelSpec, SourceModel};

pub const CONFIG_FILE: &str = "config.json";
pub const MODELS_DIR: &str = "models";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of the `<root>/<speaker_id>/*.wav` corpus.
    pub corpus: PathBuf,
    pub split: SplitRule,
    pub n_mixtures: usize,
    pub methods: Vec<ModelKind>,
    pub ranks: Vec<usize>,
    /// `L` for the deep NAE.
    pub depth: usize,
    pub stft: StftConfig,
    /// Level of the second speaker relative to the first, in dB.
    pub snr_db: f64,
    /// Sparsity weight, used both in training and in the mixture fit.
    pub lambda: f64,
    pub train_iterations: usize,
    pub fit_iterations: usize,
    pub tol: f64,
    pub patience: usize,
    pub filter_len: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            corpus: PathBuf::from("corpus"),
            split: SplitRule::default(),
            n_mixtures: 32,
            methods: ModelKind::ALL.to_vec(),
            ranks: vec![20, 100],
            depth: 2,
            stft: StftConfig::default(),
            snr_db: 0.0,
            lambda: train.lambda,
            train_iterations: train.max_iterations,
            fit_iterations: train.max_iterations,
            tol: train.tol,
            patience: train.patience,
            filter_len: DEFAULT_FILTER_LEN,
            master_seed: 0,
            output_dir: PathBuf::from("results"),
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_mixtures == 0 {
            return bad("n_mixtures must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return bad(format!(
                "ranks must be a non-empty list of positive integers, got {:?}",
                self.ranks
            ));
        }
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.filter_len == 0 {
            return bad("filter_len must be at least 1".into());
        }
        if !self.snr_db.is_finite() {
            return bad(format!("snr_db must be finite, got {}", self.snr_db));
        }
        Ok(())
    }

    pub fn spec(&self, method: ModelKind, rank: usize) -> ModelSpec {
        ModelSpec {
            depth: self.depth,
            ..ModelSpec::new(method, rank)
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            max_iterations: self.train_iterations,
            tol: self.tol,
            patience: self.patience,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn fit_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_iterations: self.fit_iterations,
            ..self.train_config(seed)
        }
    }

    /// The fields that determine results. Paths and thread count may
    /// change between a run and its resumption.
    fn fingerprint(&self) -> Self {
        Self {
            corpus: PathBuf::new(),
            output_dir: PathBuf::new(),
            threads: 0,
            ..self.clone()
        }
    }

    /// Methods and ranks in canonical order, duplicates removed.
    fn grid(&self) -> Vec<(ModelKind, usize)> {
        let methods: BTreeSet<_> = self.methods.iter().copied().collect();
        let ranks: BTreeSet<_> = self.ranks.iter().copied().collect();
        methods
            .iter()
            .flat_map(|&m| ranks.iter().map(move |&r| (m, r)))
            .collect()
    }
}

/// Two distinct speakers drawn for one mixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixturePlan {
    pub mixture_id: usize,
    pub speaker_a: usize,
    pub speaker_b: usize,
}

pub fn mixture_seed(master: u64, mixture_id: usize) -> u64 {
    SeedHasher::new(master)
        .mix_str("mixture")
        .mix_u64(mixture_id as u64)
        .finish()
}

/// Seed of the separation of one cell.
pub fn cell_seed(master: u64, mixture_id: usize, method: ModelKind, rank: usize) -> u64 {
    SeedHasher::new(master)
        .mix_u64(mixture_id as u64)
        .mix_str(method.as_str())
        .mix_u64(rank as u64)
        .finish()
}

/// Seed for training one speaker's model; shared by every mixture that
/// uses the speaker so the model is trained once.
pub fn model_seed(master: u64, speaker: &str, method: ModelKind, rank: usize) -> u64 {
    SeedHasher::new(master)
        .mix_str("model")
        .mix_str(speaker)
        .mix_str(method.as_str())
        .mix_u64(rank as u64)
        .finish()
}

/// Draws the speaker pair of every mixture; each pair depends only on the
/// master seed and the mixture index.
pub fn plan_mixtures(master: u64, n_mixtures: usize, n_speakers: usize) -> Result<Vec<MixturePlan>> {
    if n_speakers < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two speakers, got {n_speakers}"
        )));
    }
    Ok((0..n_mixtures)
        .map(|mixture_id| {
            let mut rng = seeded_rng(mixture_seed(master, mixture_id));
            let speaker_a = rng.random_range(0..n_speakers);
            let mut speaker_b = rng.random_range(0..n_speakers - 1);
            if speaker_b >= speaker_a {
                speaker_b += 1;
            }
            MixturePlan {
                mixture_id,
                speaker_a,
                speaker_b,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: ExperimentSummary,
    /// Cells computed by this call, as opposed to loaded from a previous run.
    pub computed_cells: usize,
}

pub fn results_path(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join(RESULTS_FILE)
}

fn model_path(config: &ExperimentConfig, speaker: &str, method: ModelKind, rank: usize) -> PathBuf {
    config
        .output_dir
        .join(MODELS_DIR)
        .join(format!("{speaker}_{}_r{rank}.naem", method.as_str()))
}

fn check_config(config: &ExperimentConfig) -> Result<()> {
    let path = config.output_dir.join(CONFIG_FILE);
    if path.exists() {
        let previous: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if previous.fingerprint() != config.fingerprint() {
            return Err(Error::InvalidArgument(format!(
                "{} was written by a different configuration; use a fresh output directory",
                path.display()
            )));
        }
    }
    fs::write(&path, serde_json::to_string_pretty(config)? + "\n")?;
    Ok(())
}

/// Rows from an earlier run, keeping only cells with both sources present.
fn completed_rows(path: &Path) -> Result<Vec<ResultRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let rows = read_rows(path)?;
    let mut per_cell: BTreeMap<CellKey, Vec<ResultRow>> = BTreeMap::new();
    for row in rows {
        per_cell.entry(row.cell()).or_default().push(row);
    }
    Ok(per_cell
        .into_values()
        .filter(|rs| rs.len() == 2 && rs[0].source != rs[1].source)
        .flatten()
        .collect())
}

/// Loads a cached model or trains and saves it.
fn obtain_model(
    config: &ExperimentConfig,
    corpus: &Corpus,
    speaker: usize,
    method: ModelKind,
    rank: usize,
) -> Result<SourceModel> {
    let id = &corpus.speakers[speaker].id;
    let path = model_path(config, id, method, rank);
    if path.exists() {
        return SourceModel::load(&path);
    }
    let waves = corpus.speakers[speaker].load_train()?;
    let seed = model_seed(config.master_seed, id, method, rank);
    let model = train_source_model(
        &waves,
        &config.spec(method, rank),
        &config.stft,
        &config.train_config(seed),
    )?;
    model.save(&path)?;
    log::info!("trained {id} {method} rank {rank}");
    Ok(model)
}

struct Cell<'a> {
    key: CellKey,
    plan: &'a MixturePlan,
}

/// Runs every missing (mixture, method, rank) cell, appending rows as cells
/// finish, then rewrites `results.csv` in canonical order and writes
/// `summary.json`.
///
/// Each cell trains (or loads) one model per speaker on the speaker's
/// training clips, mixes the two test clips at `snr_db`, separates and
/// scores both sources. Cells already present in `results.csv` are kept and
/// skipped, so an interrupted run resumes where it stopped.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus, &config.split)?;
    fs::create_dir_all(config.output_dir.join(MODELS_DIR))?;
    check_config(config)?;

    let plans = plan_mixtures(config.master_seed, config.n_mixtures, corpus.speakers.len())?;
    let results = results_path(config);
    let mut rows = completed_rows(&results)?;
    let done: BTreeSet<CellKey> = rows.iter().map(ResultRow::cell).collect();
    sort_rows(&mut rows);
    write_rows(&results, &rows)?;

    let grid = config.grid();
    let pending: Vec<Cell> = plans
        .iter()
        .flat_map(|plan| {
            grid.iter().map(move |&(method, rank)| Cell {
                key: CellKey {
                    mixture_id: plan.mixture_id,
                    method,
                    rank,
                },
                plan,
            })
        })
        .filter(|cell| !done.contains(&cell.key))
        .collect();
    log::info!("{} cells done, {} to run", done.len(), pending.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;

    let mut needed: BTreeSet<(usize, ModelKind, usize)> = BTreeSet::new();
    for cell in &pending {
        needed.insert((cell.plan.speaker_a, cell.key.method, cell.key.rank));
        needed.insert((cell.plan.speaker_b, cell.key.method, cell.key.rank));
    }
    let needed: Vec<_> = needed.into_iter().collect();
    let models: BTreeMap<(usize, ModelKind, usize), SourceModel> = pool.install(|| {
        needed
            .par_iter()
            .map(|&(s, m, r)| obtain_model(config, &corpus, s, m, r).map(|model| ((s, m, r), model)))
            .collect::<Result<_>>()
    })?;

    let mut test_clips: BTreeMap<usize, Waveform> = BTreeMap::new();
    for cell in &pending {
        for s in [cell.plan.speaker_a, cell.plan.speaker_b] {
            if let std::collections::btree_map::Entry::Vacant(e) = test_clips.entry(s) {
                e.insert(corpus.speakers[s].load_test()?);
            }
        }
    }

    let appender = Mutex::new((
        RowAppender::open(&results)?,
        RowAppender::open(config.output_dir.join(TIMINGS_FILE))?,
    ));
    let new_rows: Vec<Vec<ResultRow>> = pool.install(|| {
        pending
            .par_iter()
            .map(|cell| {
                let start = Instant::now();
                let cell_rows = run_cell(config, &corpus, cell, &models, &test_clips)?;
                let timing = TimingRow {
                    mixture_id: cell.key.mixture_id,
                    method: cell.key.method,
                    rank: cell.key.rank,
                    seconds: start.elapsed().as_secs_f64(),
                };
                let mut guard = appender.lock().expect("writer lock poisoned");
                guard.0.append(&cell_rows)?;
                guard.1.append(&[timing])?;
                Ok(cell_rows)
            })
            .collect::<Result<_>>()
    })?;
    drop(appender);

    let computed_cells = new_rows.len();
    rows.extend(new_rows.into_iter().flatten());
    sort_rows(&mut rows);
    let expected = plans.len() * grid.len() * 2;
    if rows.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "expected {expected} result rows, found {}",
            rows.len()
        )));
    }
    write_rows(&results, &rows)?;
    let summary = summarize(&rows, config.master_seed)?;
    write_summary(config.output_dir.join(SUMMARY_FILE), &summary)?;
    Ok(ExperimentOutput {
        rows,
        summary,
        computed_cells,
    })
}

fn run_cell(
    config: &ExperimentConfig,
    corpus: &Corpus,
    cell: &Cell,
    models: &BTreeMap<(usize, ModelKind, usize), SourceModel>,
    test_clips: &BTreeMap<usize, Waveform>,
) -> Result<Vec<ResultRow>> {
    let CellKey {
        mixture_id,
        method,
        rank,
    } = cell.key;
    let (a, b) = (cell.plan.speaker_a, cell.plan.speaker_b);
    let mix = make_mixture(&test_clips[&a], &test_clips[&b], config.snr_db)?;
    let seed = cell_seed(config.master_seed, mixture_id, method, rank);
    let pair = [&models[&(a, method, rank)], &models[&(b, method, rank)]];
    let estimates = separate(&mix.mixture, &pair, &config.stft, &config.fit_config(seed))?;
    let eval = bss_eval(&estimates, &[mix.source1, mix.source2], config.filter_len)?;
    let ids = [&corpus.speakers[a].id, &corpus.speakers[b].id];
    Ok((0..2)
        .map(|source| ResultRow {
            mixture_id,
            speaker_a: ids[0].clone(),
            speaker_b: ids[1].clone(),
            method,
            rank,
            depth: config.spec(method, rank).decoder_depth(),
            source,
            speaker: ids[source].clone(),
            sdr: eval.sdr[source],
            sir: eval.sir[source],
            sar: eval.sar[source],
            seed,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_are_distinct_and_reproducible() {
        let plans = plan_mixtures(5, 200, 4).unwrap();
        assert!(plans
            .iter()
            .all(|p| p.speaker_a != p.speaker_b && p.speaker_a < 4 && p.speaker_b < 4));
        assert_eq!(plans, plan_mixtures(5, 200, 4).unwrap());
        // A prefix of a longer plan is the shorter plan.
        assert_eq!(plans[..10], plan_mixtures(5, 10, 4).unwrap()[..]);
        let used: BTreeSet<_> = plans.iter().flat_map(|p| [p.speaker_a, p.speaker_b]).collect();
        assert_eq!(used.len(), 4);
        assert!(plan_mixtures(5, 1, 1).is_err());
    }

    #[test]
    fn seeds_separate_cells() {
        let a = cell_seed(1, 0, ModelKind::Nmf, 20);
        assert_ne!(a, cell_seed(1, 1, ModelKind::Nmf, 20));
        assert_ne!(a, cell_seed(1, 0, ModelKind::NaeShallow, 20));
        assert_ne!(a, cell_seed(1, 0, ModelKind::Nmf, 100));
        assert_ne!(a, cell_seed(2, 0, ModelKind::Nmf, 20));
        assert_ne!(
            model_seed(1, "spk00", ModelKind::Nmf, 20),
            model_seed(1, "spk01", ModelKind::Nmf, 20)
        );
    }

    #[test]
    fn grid_is_canonical() {
        let config = ExperimentConfig {
            methods: vec![ModelKind::NaeDeep, ModelKind::Nmf, ModelKind::Nmf],
            ranks: vec![100, 20],
            ..ExperimentConfig::default()
        };
        assert_eq!(
            config.grid(),
            [
                (ModelKind::Nmf, 20),
                (ModelKind::Nmf, 100),
                (ModelKind::NaeDeep, 20),
                (ModelKind::NaeDeep, 100)
            ]
        );
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let config = ExperimentConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        assert!(json.contains("\"nae-shallow\""));
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), config);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"ranks": [5], "master_seed": 9}"#).unwrap();
        assert_eq!(partial.ranks, [5]);
        assert_eq!(partial.n_mixtures, 32);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"rank": [5]}"#).is_err());
        for broken in [
            ExperimentConfig {
                n_mixtures: 0,
                ..config.clone()
            },
            ExperimentConfig {
                ranks: vec![],
                ..config.clone()
            },
            ExperimentConfig {
                methods: vec![],
                ..config.clone()
            },
        ] {
            assert!(broken.validate().is_err());
        }
    }
}
