//! Command implementations behind the `scaledown` binary: dataset
//! preparation, the training grid, the rate-distortion sweep, BD-BR
//! reporting, and self-verification. Everything is a library function so
//! integration tests can drive the full pipeline in-process.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::codec::{external, CodecConfig};
use crate::config::{parse_filter_name, FilterName, RunConfig, SourceSpec};
use crate::error::{Error, Result};
use crate::eval::report::{
    bd_report, curve_files, merge_external_scores, render_bd_csv, render_bd_text, rows_from_csv,
    rows_to_csv, Metric, SweepRow,
};
use crate::eval::sweep::{evaluate_point, PointFilter};
use crate::media::{
    extract_patches, simulate_chroma_degradation, write_frames, ChromaLayout, FramePlanar,
    SequenceSource,
};
use crate::resample::{FilterKind, ScaleRatio};
use crate::train::{train_model, Checkpoint, Dataset, Strategy, LOG_HEADER};

/// Write via a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Run `f(0..n)` on a bounded worker pool, preserving index order.
pub fn run_parallel<T, F>(n: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.max(1).min(n.max(1));
    if jobs <= 1 {
        return (0..n).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, T)>> = Mutex::new(Vec::with_capacity(n));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                results.lock().unwrap().push((i, out));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|&(i, _)| i);
    results.into_iter().map(|(_, t)| t).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_source(spec: &SourceSpec, max_frames: usize) -> Result<Vec<FramePlanar>> {
    let src = SequenceSource::open(&spec.path, spec.raw_geometry())?;
    let count = if max_frames > 0 {
        src.frame_count.min(max_frames)
    } else {
        src.frame_count
    };
    src.read_frames(0..count)
}

// ---------------------------------------------------------------- prepare

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManifestSource {
    pub path: PathBuf,
    pub sha256: String,
    pub frames_used: usize,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub patch_size: usize,
    pub stride: usize,
    pub train_count: usize,
    pub holdout_count: usize,
    pub train_file: String,
    pub holdout_file: String,
    pub train_sha256: String,
    pub holdout_sha256: String,
    pub sources: Vec<ManifestSource>,
}

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("dataset/manifest.toml")
}

/// Extract training patches: read every source, apply the 4:2:0 chroma
/// degradation to 4:4:4 content, cut seed-shuffled patches, split off the
/// holdout set, and write everything with content hashes.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    if cfg.dataset.sources.is_empty() {
        return Err(Error::Config("[dataset] has no sources".into()));
    }
    let dataset_dir = cfg.out_dir.join("dataset");
    std::fs::create_dir_all(&dataset_dir).map_err(|e| Error::io(&dataset_dir, e))?;

    let mut frames = Vec::new();
    let mut sources = Vec::new();
    for spec in &cfg.dataset.sources {
        let read = read_source(spec, cfg.dataset.max_frames_per_source)?;
        let bytes = std::fs::read(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
        sources.push(ManifestSource {
            path: spec.path.clone(),
            sha256: sha256_hex(&bytes),
            frames_used: read.len(),
        });
        for frame in read {
            // 4:4:4 sources get the chroma degradation the deployed 4:2:0
            // pipeline would apply; 4:2:0 sources already carry it.
            frames.push(match frame.layout {
                ChromaLayout::C444 => simulate_chroma_degradation(&frame)?,
                ChromaLayout::C420 => frame.to_444(),
            });
        }
    }
    let patches = extract_patches(&frames, cfg.dataset.patch_size, cfg.dataset.stride, cfg.seed)?;
    let data = Dataset::split(patches, cfg.dataset.holdout_every);

    let train_file = dataset_dir.join("patches_train.y4m");
    let holdout_file = dataset_dir.join("patches_holdout.y4m");
    write_frames(&data.train, &train_file, ChromaLayout::C444, (30, 1))?;
    write_frames(&data.holdout, &holdout_file, ChromaLayout::C444, (30, 1))?;
    let train_bytes = std::fs::read(&train_file).map_err(|e| Error::io(&train_file, e))?;
    let holdout_bytes = std::fs::read(&holdout_file).map_err(|e| Error::io(&holdout_file, e))?;

    let manifest = Manifest {
        seed: cfg.seed,
        patch_size: cfg.dataset.patch_size,
        stride: cfg.dataset.stride,
        train_count: data.train.len(),
        holdout_count: data.holdout.len(),
        train_file: "patches_train.y4m".into(),
        holdout_file: "patches_holdout.y4m".into(),
        train_sha256: sha256_hex(&train_bytes),
        holdout_sha256: sha256_hex(&holdout_bytes),
        sources,
    };
    let text = toml::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&manifest_path(cfg), text.as_bytes())?;
    Ok(manifest)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<(Manifest, Dataset)> {
    let path = manifest_path(cfg);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Config(format!("bad manifest: {e}")))?;
    let dir = path.parent().unwrap();
    let read = |file: &str, expect: usize| -> Result<Vec<FramePlanar>> {
        if expect == 0 {
            return Ok(Vec::new());
        }
        let src = SequenceSource::open_y4m(dir.join(file))?;
        src.read_all()
    };
    let train = read(&manifest.train_file, manifest.train_count)?;
    let holdout = read(&manifest.holdout_file, manifest.holdout_count)?;
    if train.len() != manifest.train_count || holdout.len() != manifest.holdout_count {
        return Err(Error::Config(
            "patch files do not match the manifest counts; rerun prepare".into(),
        ));
    }
    Ok((manifest, Dataset { train, holdout }))
}

// ------------------------------------------------------------------ train

#[derive(Clone, Debug)]
pub struct TrainCell {
    pub strategy: Strategy,
    pub scale: ScaleRatio,
    pub q: f64,
    pub lambda: f64,
}

impl TrainCell {
    /// Stable file stem, e.g. `scaled-d_s1-2_q30` or `scaled-rd_s1-2_q30_l0.001`.
    pub fn stem(&self) -> String {
        let mut s = format!(
            "{}_s{}-{}",
            self.strategy.name(),
            self.scale.num(),
            self.scale.den()
        );
        if self.strategy.requires_codec() {
            s.push_str(&format!("_q{}", self.q));
        }
        if self.strategy == Strategy::ScaledRd {
            s.push_str(&format!("_l{}", self.lambda));
        }
        s
    }
}

/// The full training grid: strategies x scales (x quantizers for codec-aware
/// strategies) (x lambdas for scaled-rd).
pub fn train_cells(cfg: &RunConfig) -> Vec<TrainCell> {
    let qs = cfg.codec.grid(&cfg.train.qps, &cfg.train.qsteps);
    let mut cells = Vec::new();
    for &strategy in &cfg.train.strategies {
        for &scale in &cfg.train.scales {
            match strategy {
                Strategy::DOnly => cells.push(TrainCell {
                    strategy,
                    scale,
                    q: 0.0,
                    lambda: 0.0,
                }),
                Strategy::Ste | Strategy::ScaledD => {
                    for &q in &qs {
                        cells.push(TrainCell {
                            strategy,
                            scale,
                            q,
                            lambda: 0.0,
                        });
                    }
                }
                Strategy::ScaledRd => {
                    for &q in &qs {
                        for &lambda in &cfg.train.lambdas {
                            cells.push(TrainCell {
                                strategy,
                                scale,
                                q,
                                lambda,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

pub fn checkpoint_path(cfg: &RunConfig, cell: &TrainCell) -> PathBuf {
    cfg.out_dir
        .join("checkpoints")
        .join(format!("{}.sclcp", cell.stem()))
}

#[derive(Debug, Default)]
pub struct TrainSummary {
    pub trained: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

/// Train every grid cell, skipping cells whose checkpoint already exists and
/// loads cleanly. Independent cells run on the worker pool.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let (_, data) = load_dataset(cfg)?;
    let data = if cfg.train.max_patches > 0 && data.train.len() > cfg.train.max_patches {
        Dataset {
            train: data.train[..cfg.train.max_patches].to_vec(),
            holdout: data.holdout,
        }
    } else {
        data
    };
    if data.train.is_empty() {
        return Err(Error::Config("no training patches; run prepare first".into()));
    }
    let cells = train_cells(cfg);
    let exec = cfg.codec.exec();

    enum CellOutcome {
        Trained(String),
        Skipped(String),
        Failed(String, String),
    }
    let outcomes = run_parallel(cells.len(), cfg.effective_jobs(), |i| {
        let cell = &cells[i];
        let path = checkpoint_path(cfg, cell);
        if path.exists() && Checkpoint::load(&path).is_ok() {
            return CellOutcome::Skipped(cell.stem());
        }
        let run = || -> Result<()> {
            let train_cfg = cfg.train_config(cell.strategy, cell.scale, cell.q, cell.lambda)?;
            let outcome = train_model(&train_cfg, &exec, &data)?;
            outcome.checkpoint.save(&path)?;
            let mut log = String::from(LOG_HEADER);
            log.push('\n');
            for row in &outcome.log {
                log.push_str(&row.to_csv());
                log.push('\n');
            }
            write_atomic(
                &cfg.out_dir.join("logs").join(format!("{}.csv", cell.stem())),
                log.as_bytes(),
            )?;
            Ok(())
        };
        match run() {
            Ok(()) => CellOutcome::Trained(cell.stem()),
            Err(e) => CellOutcome::Failed(cell.stem(), e.to_string()),
        }
    });

    let mut summary = TrainSummary::default();
    for o in outcomes {
        match o {
            CellOutcome::Trained(s) => summary.trained.push(s),
            CellOutcome::Skipped(s) => summary.skipped.push(s),
            CellOutcome::Failed(s, e) => summary.failed.push((s, e)),
        }
    }
    Ok(summary)
}

// ------------------------------------------------------------------ sweep

#[derive(Debug, Default)]
pub struct SweepSummary {
    pub rows: usize,
    pub failures: Vec<(String, String)>,
    pub csv_path: PathBuf,
}

pub fn sweep_csv_path(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("rd_results.csv")
}

fn sweep_sources(cfg: &RunConfig) -> Vec<SourceSpec> {
    if cfg.sweep.sequences.is_empty() {
        cfg.dataset.sources.clone()
    } else {
        cfg.sweep.sequences.clone()
    }
}

/// Run the full (sequence x filter x scale x quantizer) grid. Per-point codec
/// failures are collected and the sweep continues; the CSV is written in a
/// deterministic order, so a rerun is byte-identical.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepSummary> {
    cfg.validate()?;
    let sources = sweep_sources(cfg);
    if sources.is_empty() {
        return Err(Error::Config("no sweep sequences configured".into()));
    }
    let qs = cfg.codec.grid(&cfg.sweep.qps, &cfg.sweep.qsteps);
    let base_codec = CodecConfig::new(cfg.codec.settings()?, cfg.codec.exec());

    struct Job {
        sequence: String,
        filter: String,
        filter_name: FilterName,
        scale: ScaleRatio,
        q: f64,
    }
    let mut jobs = Vec::new();
    let mut sequences: BTreeMap<String, Vec<FramePlanar>> = BTreeMap::new();
    for spec in &sources {
        let frames = read_source(spec, cfg.sweep.max_frames)?;
        if frames.is_empty() {
            return Err(Error::Config(format!(
                "sequence {} has no frames",
                spec.path.display()
            )));
        }
        sequences.insert(spec.name(), frames);
        for filter in &cfg.sweep.filters {
            let filter_name = parse_filter_name(filter)?;
            for &scale in &cfg.sweep.scales {
                for &q in &qs {
                    jobs.push(Job {
                        sequence: spec.name(),
                        filter: filter.clone(),
                        filter_name: filter_name.clone(),
                        scale,
                        q,
                    });
                }
            }
        }
    }

    let results = run_parallel(jobs.len(), cfg.effective_jobs(), |i| {
        let job = &jobs[i];
        let frames = &sequences[&job.sequence];
        let codec = base_codec.with_settings(base_codec.settings.with_q(job.q));
        let point = match &job.filter_name {
            FilterName::Lanczos => {
                evaluate_point(frames, &PointFilter::Fixed(FilterKind::Lanczos3), job.scale, &codec)
            }
            FilterName::Bicubic => evaluate_point(
                frames,
                &PointFilter::Fixed(FilterKind::CatmullRom),
                job.scale,
                &codec,
            ),
            FilterName::Bilinear => evaluate_point(
                frames,
                &PointFilter::Fixed(FilterKind::Bilinear),
                job.scale,
                &codec,
            ),
            FilterName::Learned(strategy) => {
                let cell = TrainCell {
                    strategy: *strategy,
                    scale: job.scale,
                    q: job.q,
                    lambda: cfg.train.lambdas.first().copied().unwrap_or(0.0),
                };
                Checkpoint::load(&checkpoint_path(cfg, &cell))
                    .and_then(|ck| ck.model_params())
                    .and_then(|params| {
                        evaluate_point(frames, &PointFilter::Learned(&params), job.scale, &codec)
                    })
            }
        };
        (i, point)
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, point) in results {
        let job = &jobs[i];
        let label = format!(
            "{} / {} / s={} / q={}",
            job.sequence, job.filter, job.scale, job.q
        );
        match point {
            Ok(point) => rows.push(SweepRow {
                sequence: job.sequence.clone(),
                filter: job.filter.clone(),
                point,
                ext: None,
            }),
            Err(e) => failures.push((label, e.to_string())),
        }
    }
    rows.sort_by(|a, b| {
        a.sequence
            .cmp(&b.sequence)
            .then_with(|| a.filter.cmp(&b.filter))
            .then_with(|| a.point.scale.value().total_cmp(&b.point.scale.value()))
            .then_with(|| a.point.q.total_cmp(&b.point.q))
    });

    let csv_path = sweep_csv_path(cfg);
    write_atomic(&csv_path, rows_to_csv(&rows).as_bytes())?;
    Ok(SweepSummary {
        rows: rows.len(),
        failures,
        csv_path,
    })
}

// ----------------------------------------------------------------- report

#[derive(Debug)]
pub struct ReportSummary {
    pub table_text: String,
    pub bd_csv_path: PathBuf,
    pub curves: usize,
}

/// Build hulls and BD-BR tables from the sweep CSV against the configured
/// reference filter, plus per-sequence curve files for plotting.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportSummary> {
    let csv_path = sweep_csv_path(cfg);
    if !csv_path.exists() {
        return Err(Error::Config(format!(
            "missing sweep results {}; run sweep first",
            csv_path.display()
        )));
    }
    let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut rows = rows_from_csv(&text)?;
    if let Some(scores) = &cfg.report.external_scores {
        let ext = std::fs::read_to_string(scores).map_err(|e| Error::io(scores, e))?;
        merge_external_scores(&mut rows, &ext)?;
    }
    let metrics: Vec<Metric> = cfg
        .report
        .metrics
        .iter()
        .map(|m| Metric::parse(m))
        .collect::<Result<_>>()?;
    let entries = bd_report(&rows, &cfg.report.reference, &metrics)?;

    let bd_csv_path = cfg.out_dir.join("bdbr.csv");
    write_atomic(&bd_csv_path, render_bd_csv(&entries).as_bytes())?;
    let table_text = render_bd_text(&entries, &cfg.report.reference);
    write_atomic(&cfg.out_dir.join("bdbr.txt"), table_text.as_bytes())?;

    let curves = curve_files(&rows);
    let curve_dir = cfg.out_dir.join("curves");
    for (name, body) in &curves {
        write_atomic(&curve_dir.join(name), body.as_bytes())?;
    }
    Ok(ReportSummary {
        table_text,
        bd_csv_path,
        curves: curves.len(),
    })
}

// ----------------------------------------------------------------- verify

/// Run the embedded property suites; `Ok` only when every suite passed.
pub fn cmd_verify() -> Result<Vec<crate::verify::SuiteResult>> {
    let results = crate::verify::run_all();
    Ok(results)
}

/// True when the configured external encoder and decoder both respond.
pub fn external_codec_available(cfg: &RunConfig) -> bool {
    external::available(&cfg.codec.exec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_creates_parents_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/c.txt");
        write_atomic(&path, b"one").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"one");
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
    }

    #[test]
    fn parallel_map_preserves_order() {
        let out = run_parallel(100, 4, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        let seq = run_parallel(10, 1, |i| i + 1);
        assert_eq!(seq, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn cell_stems_are_stable() {
        let cell = TrainCell {
            strategy: Strategy::ScaledRd,
            scale: ScaleRatio::new(1, 2).unwrap(),
            q: 30.0,
            lambda: 0.001,
        };
        assert_eq!(cell.stem(), "scaled-rd_s1-2_q30_l0.001");
        let d = TrainCell {
            strategy: Strategy::DOnly,
            scale: ScaleRatio::new(2, 3).unwrap(),
            q: 0.0,
            lambda: 0.0,
        };
        assert_eq!(d.stem(), "d-only_s2-3");
    }
}
