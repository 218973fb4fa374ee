//! End-to-end pipeline: simulate, embed, reduce, build regions, evaluate
//! and compare. Every stage reads its inputs from and writes its outputs to
//! an artifact directory, so stages can also run one at a time.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DVector;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{seeds, Method, PipelineConfig};
use crate::container::write_json;
use crate::dnn::{self, DnnReduction};
use crate::error::{LpvError, Result};
use crate::lpv::{build_variation_dataset, AffineLpvModel, FullOrderEmbedding, SchedulingReduction};
use crate::metrics::{
    compare_trajectories, embedding_exactness, evaluate_reduction, write_reports_csv, write_reports_json, ErrorReport,
};
use crate::model::FactorizedModel;
use crate::pca::{NormMode, PcaBasis, PcaReduction};
use crate::region::{
    build_region, conservatism_ratio, write_box_wireframe_csv, write_ellipsoid_surface_csv, write_points_csv,
    RegionDocument, RegionMethod, DEFAULT_MVEE_TOLERANCE,
};
use crate::sim::{generate_dataset, maneuver_scenarios, random_scenarios, InputSignal, SampleSet};

pub const TOOL_NAME: &str = "lpvred";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Points kept in region documents and point CSVs.
const MAX_PLOT_POINTS: usize = 5_000;

/// Fraction of the DNN training samples held out for early stopping.
const EARLY_STOP_FRACTION: f64 = 0.1;

/// File locations inside an artifact directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("data/train.lpvc")
    }

    pub fn validation(&self) -> PathBuf {
        self.root.join("data/validation.lpvc")
    }

    pub fn data_summary(&self) -> PathBuf {
        self.root.join("data/summary.json")
    }

    pub fn embedding(&self) -> PathBuf {
        self.root.join("embedding/full_order.lpvc")
    }

    pub fn embedding_summary(&self) -> PathBuf {
        self.root.join("embedding/summary.json")
    }

    pub fn reduction_dir(&self, method: Method, norm: NormMode) -> PathBuf {
        self.root.join(method.tag()).join(norm.tag())
    }

    pub fn reduction(&self, method: Method, norm: NormMode, n: usize) -> PathBuf {
        self.reduction_dir(method, norm).join(format!("n{n:02}.lpvc"))
    }

    pub fn spectrum(&self, norm: NormMode) -> PathBuf {
        self.reduction_dir(Method::Pca, norm).join("spectrum.csv")
    }

    pub fn region_stem(&self, method: Method, norm: NormMode, n: usize) -> PathBuf {
        self.root.join("regions").join(format!("{}_{}_n{n:02}", method.tag(), norm.tag()))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn compare(&self) -> PathBuf {
        self.root.join("compare")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    /// `path` if it exists, otherwise an error naming the producing subcommand.
    pub fn require(&self, path: PathBuf, producer: &str) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(LpvError::MissingArtifact {
                path: path.display().to_string(),
                producer: producer.to_string(),
            })
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Runs `f` on a single worker thread when `deterministic` is set.
pub fn with_threads<T: Send>(deterministic: bool, f: impl FnOnce() -> T + Send) -> Result<T> {
    if deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| LpvError::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    } else {
        Ok(f())
    }
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    info!("stage {name}");
    f().map_err(|e| match e {
        e @ (LpvError::Stage { .. } | LpvError::MissingArtifact { .. } | LpvError::Config(_)) => e,
        e => LpvError::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        },
    })
}

/// A reduction read back from disk.
pub enum LoadedReduction {
    Pca(PcaReduction),
    Dnn(DnnReduction),
}

impl LoadedReduction {
    pub fn as_dyn(&self) -> &dyn SchedulingReduction {
        match self {
            LoadedReduction::Pca(r) => r,
            LoadedReduction::Dnn(r) => r,
        }
    }

    pub fn region(&self) -> &crate::region::ScheduledRegion {
        match self {
            LoadedReduction::Pca(r) => &r.region,
            LoadedReduction::Dnn(r) => &r.region,
        }
    }
}

pub fn load_reduction(art: &Artifacts, method: Method, norm: NormMode, n: usize) -> Result<LoadedReduction> {
    let path = art.require(art.reduction(method, norm, n), method.producer())?;
    Ok(match method {
        Method::Pca => LoadedReduction::Pca(PcaReduction::read(path)?),
        Method::Dnn => LoadedReduction::Dnn(DnnReduction::read(path)?),
    })
}

fn load_split(art: &Artifacts) -> Result<(SampleSet, SampleSet)> {
    let train = SampleSet::read(art.require(art.train(), "simulate")?)?;
    let val = SampleSet::read(art.require(art.validation(), "simulate")?)?;
    Ok((train, val))
}

fn check_model(model: &dyn FactorizedModel, samples: &SampleSet) -> Result<()> {
    if samples.model_id != model.id() {
        return Err(LpvError::Config(format!(
            "dataset was generated for model '{}' but the config selects '{}'",
            samples.model_id,
            model.id()
        )));
    }
    Ok(())
}

/// Simulates the scenario set and writes the training and validation splits.
pub fn simulate(cfg: &PipelineConfig, art: &Artifacts) -> Result<()> {
    stage("simulate", || {
        let model = cfg.model.build();
        let sim = &cfg.simulation;
        let mut scenarios = random_scenarios(
            model.as_ref(),
            sim.random_scenarios,
            sim.duration,
            cfg.seed_for(seeds::SCENARIOS),
        );
        if sim.maneuvers {
            scenarios.extend(maneuver_scenarios(model.as_ref(), sim.duration, cfg.seed_for(seeds::MANEUVERS))?);
        }
        let all = generate_dataset(
            model.as_ref(),
            &scenarios,
            sim.h,
            cfg.dataset.samples,
            cfg.seed_for(seeds::SAMPLING),
        )?;
        let (train, val) = all.split(cfg.dataset.validation_fraction, cfg.seed_for(seeds::SPLIT))?;
        ensure_parent(&art.train())?;
        train.write(art.train())?;
        val.write(art.validation())?;
        write_json(
            art.data_summary(),
            &json!({
                "model": model.id(),
                "scenarios": scenarios.len(),
                "h": sim.h,
                "duration": sim.duration,
                "train": train.len(),
                "validation": val.len(),
                "train_out_of_region": train.out_of_region(),
                "validation_out_of_region": val.out_of_region(),
            }),
        )
    })
}

/// Builds the full-order embedding and checks it against the model.
pub fn embed(cfg: &PipelineConfig, art: &Artifacts) -> Result<()> {
    stage("embed", || {
        let model = cfg.model.build();
        let (_, val) = load_split(art)?;
        check_model(model.as_ref(), &val)?;
        let full = FullOrderEmbedding::new(model.as_ref(), cfg.embedding.grid_density)?;
        ensure_parent(&art.embedding())?;
        full.lpv.write(art.embedding())?;
        let exact = embedding_exactness(model.as_ref(), &full.lpv, &val.points)?;
        write_json(
            art.embedding_summary(),
            &json!({ "model": full.lpv.summary(), "exactness_validation": exact }),
        )
    })
}

/// PCA reductions for every configured normalization and dimension.
pub fn reduce_pca(cfg: &PipelineConfig, art: &Artifacts, norms: &[NormMode], sweep: &[usize]) -> Result<()> {
    stage("reduce-pca", || {
        let model = cfg.model.build();
        let (train, _) = load_split(art)?;
        check_model(model.as_ref(), &train)?;
        let ds = build_variation_dataset(model.as_ref(), &train, cfg.dataset.layout)?;
        for &norm in norms {
            let basis = PcaBasis::fit(&ds, norm)?;
            info!(
                "PCA ({}) numerical rank {} of {} rows",
                norm.tag(),
                basis.numerical_rank,
                ds.n_pi()
            );
            ensure_parent(&art.spectrum(norm))?;
            basis.write_spectrum_csv(art.spectrum(norm))?;
            for &n in sweep {
                if n > basis.numerical_rank {
                    warn!("n_theta_hat = {n} exceeds the numerical rank {}", basis.numerical_rank);
                }
                let red = basis.reduction(n, cfg.region.method)?;
                let path = art.reduction(Method::Pca, norm, n);
                red.write(&path)?;
                write_json(path.with_extension("json"), &red.sidecar())?;
            }
        }
        Ok(())
    })
}

fn subset(samples: &SampleSet, keep: usize, seed: u64) -> SampleSet {
    if keep >= samples.len() {
        return samples.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; samples.len()];
    for i in index::sample(&mut rng, samples.len(), keep) {
        chosen[i] = true;
    }
    samples.select(|i| chosen[i])
}

/// Trains one network per normalization and dimension. Early stopping uses
/// a holdout carved from the training split; the validation split stays
/// untouched for evaluation.
pub fn reduce_dnn(cfg: &PipelineConfig, art: &Artifacts, norms: &[NormMode], sweep: &[usize]) -> Result<()> {
    stage("reduce-dnn", || {
        let model = cfg.model.build();
        let (train, _) = load_split(art)?;
        check_model(model.as_ref(), &train)?;
        let seed = cfg.seed_for(seeds::DNN);
        let pool = match cfg.dnn.max_train_samples {
            Some(m) => subset(&train, m, seed),
            None => train.clone(),
        };
        let (fit, holdout) = pool.split(EARLY_STOP_FRACTION, seed.wrapping_add(1))?;
        let fit_ds = build_variation_dataset(model.as_ref(), &fit, cfg.dataset.layout)?;
        let hold_ds = build_variation_dataset(model.as_ref(), &holdout, cfg.dataset.layout)?;
        for &norm in norms {
            for &n in sweep {
                let tc = cfg.dnn.train_config(seed, norm, cfg.region.method);
                info!("training DNN ({}, n_theta_hat = {n})", norm.tag());
                let mut red = dnn::train(model.as_ref(), (&fit, &fit_ds), (&holdout, &hold_ds), n, &tc)?;
                red.rebound(&train.points, cfg.region.method)?;
                let path = art.reduction(Method::Dnn, norm, n);
                ensure_parent(&path)?;
                red.write(&path)?;
                write_json(path.with_extension("json"), &red.sidecar())?;
                red.curve
                    .write_csv(path.with_file_name(format!("n{n:02}_curve.csv")))?;
            }
        }
        Ok(())
    })
}

/// Selection of reductions a stage operates on.
#[derive(Debug, Clone)]
pub struct Selection {
    pub methods: Vec<Method>,
    pub norms: Vec<NormMode>,
    pub sweep: Vec<usize>,
}

impl Selection {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        Self {
            methods: cfg.reduction.methods.clone(),
            norms: cfg.reduction.normalizations.clone(),
            sweep: cfg.reduction.n_theta_hat.clone(),
        }
    }

    fn items(&self) -> Vec<(Method, NormMode, usize)> {
        let mut out = Vec::new();
        for &m in &self.methods {
            for &nm in &self.norms {
                for &n in &self.sweep {
                    out.push((m, nm, n));
                }
            }
        }
        out
    }
}

/// Overrides for the region stage.
#[derive(Debug, Clone, Default)]
pub struct RegionOptions {
    pub method: Option<RegionMethod>,
    /// Use only the leading `dim` coordinates of `theta_hat`.
    pub dim: Option<usize>,
}

fn thin(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let step = points.len().div_ceil(MAX_PLOT_POINTS).max(1);
    points.iter().step_by(step).cloned().collect()
}

/// Region documents (with conservatism ratios in low dimension) and the
/// CSV files the 3-D plots read. Returns the written document paths.
pub fn regions(cfg: &PipelineConfig, art: &Artifacts, sel: &Selection, opts: &RegionOptions) -> Result<Vec<PathBuf>> {
    stage("region", || {
        let model = cfg.model.build();
        let (train, _) = load_split(art)?;
        check_model(model.as_ref(), &train)?;
        let mut written = Vec::new();
        for (method, norm, n) in sel.items() {
            let red = load_reduction(art, method, norm, n)?;
            let r = red.as_dyn();
            let dim = opts.dim.unwrap_or(n);
            if dim == 0 || dim > n {
                return Err(LpvError::Config(format!("region dimension {dim} must be in 1..={n}")));
            }
            let points: Vec<DVector<f64>> = train
                .points
                .par_iter()
                .filter_map(|pt| r.reduced_theta(model.as_ref(), pt).ok())
                .map(|t| t.rows(0, dim).into_owned())
                .collect();
            let region = match (opts.method, dim == n) {
                (None, true) => red.region().clone(),
                (m, _) => build_region(&points, m.unwrap_or(cfg.region.method), DEFAULT_MVEE_TOLERANCE)?,
            };
            let conservatism = if (2..=cfg.region.conservatism_max_dim).contains(&dim) {
                Some(conservatism_ratio(
                    &points,
                    &region.bx,
                    cfg.region.mc_samples,
                    cfg.seed_for(seeds::CONSERVATISM),
                )?)
            } else {
                None
            };
            let mut stem = art.region_stem(method, norm, n);
            if dim != n {
                stem = stem.with_file_name(format!(
                    "{}_d{dim}",
                    stem.file_name().and_then(|s| s.to_str()).unwrap_or("region")
                ));
            }
            ensure_parent(&stem)?;
            let plot = thin(&points);
            let doc_path = stem.with_extension("json");
            if dim <= 3 {
                let base = stem.display().to_string();
                write_points_csv(format!("{base}_points.csv"), &plot)?;
                write_box_wireframe_csv(format!("{base}_box.csv"), &region.bx)?;
                if let Some(ell) = &region.ellipsoid {
                    write_ellipsoid_surface_csv(format!("{base}_ellipsoid.csv"), ell, 24)?;
                }
            }
            RegionDocument::new(region, &plot, conservatism).write(&doc_path)?;
            written.push(doc_path);
        }
        Ok(written)
    })
}

/// Error reports on the validation split (and the training split) for every
/// selected reduction plus the full-order reference.
pub fn evaluate(cfg: &PipelineConfig, art: &Artifacts, sel: &Selection) -> Result<Vec<ErrorReport>> {
    stage("evaluate", || {
        let model = cfg.model.build();
        let (train, val) = load_split(art)?;
        check_model(model.as_ref(), &val)?;
        let layout = cfg.dataset.layout;
        let mut reports = Vec::new();
        let full = FullOrderEmbedding {
            lpv: AffineLpvModel::read(art.require(art.embedding(), "embed")?)?,
        };
        reports.push(evaluate_reduction(model.as_ref(), &full, &val.points, layout, "validation")?);
        for (method, norm, n) in sel.items() {
            let red = load_reduction(art, method, norm, n)?;
            for (tag, set) in [("validation", &val), ("training", &train)] {
                reports.push(evaluate_reduction(model.as_ref(), red.as_dyn(), &set.points, layout, tag)?);
            }
        }
        fs::create_dir_all(art.reports())?;
        write_reports_csv(art.reports().join("errors.csv"), &reports)?;
        write_reports_json(art.reports().join("errors.json"), &reports)?;
        Ok(reports)
    })
}

/// Open-loop flights of the nonlinear model and the reduced models with
/// the given dimensions, one CSV bundle per method and normalization.
pub fn compare(cfg: &PipelineConfig, art: &Artifacts, sel: &Selection) -> Result<Vec<PathBuf>> {
    stage("compare", || {
        let model = cfg.model.build();
        let full = FullOrderEmbedding {
            lpv: AffineLpvModel::read(art.require(art.embedding(), "embed")?)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed_for(seeds::COMPARE));
        let x0 = model.sample_initial_state(&mut rng);
        let input = InputSignal::maneuver(&cfg.compare.maneuver, &model.region().u, cfg.compare.duration)?;
        fs::create_dir_all(art.compare())?;
        let mut written = Vec::new();
        let mut summaries = serde_json::Map::new();
        for &method in &sel.methods {
            for &norm in &sel.norms {
                let loaded = sel
                    .sweep
                    .iter()
                    .map(|&n| Ok((n, load_reduction(art, method, norm, n)?)))
                    .collect::<Result<Vec<_>>>()?;
                let labels: Vec<String> = loaded.iter().map(|(n, _)| format!("{}_n{n:02}", method.tag())).collect();
                let mut list: Vec<(&str, &dyn SchedulingReduction)> = vec![("full_order", &full)];
                for (label, (_, red)) in labels.iter().zip(&loaded) {
                    list.push((label.as_str(), red.as_dyn()));
                }
                let bundle = compare_trajectories(
                    model.as_ref(),
                    &list,
                    &x0,
                    &input,
                    cfg.simulation.h,
                    cfg.compare.duration,
                )?;
                let path = art.compare().join(format!("{}_{}.csv", method.tag(), norm.tag()));
                bundle.write_csv(&path)?;
                summaries.insert(format!("{}_{}", method.tag(), norm.tag()), bundle.summary());
                written.push(path);
            }
        }
        write_json(
            art.compare().join("summary.json"),
            &json!({
                "maneuver": cfg.compare.maneuver,
                "duration": cfg.compare.duration,
                "x0": x0.as_slice(),
                "runs": summaries,
            }),
        )?;
        Ok(written)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub files: Vec<ManifestEntry>,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Hashes every file under the artifact root (except the manifest itself)
/// and writes the manifest.
pub fn write_manifest(cfg: &PipelineConfig, art: &Artifacts) -> Result<Manifest> {
    let mut paths = Vec::new();
    collect_files(&art.root, &mut paths)?;
    let manifest_path = art.manifest();
    let mut files = Vec::new();
    for p in paths.into_iter().filter(|p| *p != manifest_path) {
        let bytes = fs::read(&p)?;
        let rel = p.strip_prefix(&art.root).unwrap_or(&p);
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        files.push(ManifestEntry {
            path: rel,
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash()?,
        files,
    };
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

/// Writes the resolved configuration (without the output directory).
pub fn write_config(cfg: &PipelineConfig, art: &Artifacts) -> Result<()> {
    let mut c = cfg.clone();
    c.output_dir = None;
    fs::create_dir_all(&art.root)?;
    write_json(art.config(), &c)
}

/// Runs every stage in order and returns the manifest.
pub fn run_pipeline(cfg: &PipelineConfig, out: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let art = Artifacts::new(out.as_ref());
    with_threads(cfg.deterministic, || {
        write_config(cfg, &art)?;
        simulate(cfg, &art)?;
        embed(cfg, &art)?;
        let sel = Selection::from_config(cfg);
        for &m in &sel.methods {
            match m {
                Method::Pca => reduce_pca(cfg, &art, &sel.norms, &sel.sweep)?,
                Method::Dnn => reduce_dnn(cfg, &art, &sel.norms, &sel.sweep)?,
            }
        }
        regions(cfg, &art, &sel, &RegionOptions::default())?;
        evaluate(cfg, &art, &sel)?;
        let cmp: Vec<usize> = cfg
            .compare
            .n_theta_hat
            .iter()
            .copied()
            .filter(|n| sel.sweep.contains(n))
            .collect();
        if cmp.is_empty() {
            warn!("no compare dimension is part of the reduction sweep; skipping compare");
        } else {
            compare(cfg, &art, &Selection { sweep: cmp, ..sel.clone() })?;
        }
        write_manifest(cfg, &art)
    })?
}
