//! Experiment drivers behind the CLI subcommands.
//!
//! Every run is a pure function of its settings: per-job seeds are derived by
//! hashing the user seed with the scene id and the model/optimizer ordinals,
//! so adding a scene or reordering the worker pool never shifts another job's
//! randomness. Failures in one scene are reported and skipped; the run still
//! writes everything that succeeded and signals the partial failure through
//! the returned `failures` count.

use crate::render::{render_svg, RenderOptions};
use advscene::hash::{fnv1a, hash64, split_seed};
use advscene::{
    acs, adversarial_loss, apply_perturbation, aps, avg_points_per_box, default_collab,
    generate_challenging, generate_scene, load_scene, save_scene, AcsConfig, ApsConfig,
    ChallengeConfig, ChallengeOutcome, CollaborationChoice, EvalReport, FusionMode, Layout,
    LossWeights, ModelConfig, OptimizerKind, Scene, SceneGenConfig,
};
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const CSV_HEADER: &str =
    "scene_id,model,stage,optimizer,seed,ap03,ap05,ap07,l_adv,queries_used,elapsed_ms";

/// One line of results.csv / bench.csv.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scene_id: String,
    pub model: FusionMode,
    /// "normal", "post_acs" or "post_aps".
    pub stage: &'static str,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub report: EvalReport,
    pub queries_used: usize,
    /// 0 unless timing was requested; timing breaks byte reproducibility.
    pub elapsed_ms: u64,
}

impl ResultRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scene_id,
            self.model.as_str(),
            self.stage,
            self.optimizer.as_str(),
            self.seed,
            self.report.ap_at(0.3).unwrap_or(f64::NAN),
            self.report.ap_at(0.5).unwrap_or(f64::NAN),
            self.report.ap_at(0.7).unwrap_or(f64::NAN),
            self.report.l_adv,
            self.queries_used,
            self.elapsed_ms
        )
    }
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = String::with_capacity(80 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Expands a scene source into (scene_id, path) pairs: a directory takes all
/// its *.json files sorted by name, a comma list takes each entry, anything
/// else is a single file. The scene id is the file stem.
pub fn scene_sources(spec: &str) -> Result<Vec<(String, PathBuf)>> {
    let path = Path::new(spec);
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {spec}"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        v.sort();
        v
    } else if spec.contains(',') {
        spec.split(',').map(|s| PathBuf::from(s.trim())).filter(|p| !p.as_os_str().is_empty()).collect()
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        bail!("no scene files in '{spec}'");
    }
    let mut seen = HashSet::new();
    files
        .into_iter()
        .map(|p| {
            let id = scene_id_of(&p)?;
            if !seen.insert(id.clone()) {
                bail!("duplicate scene id '{id}' in '{spec}'");
            }
            Ok((id, p))
        })
        .collect()
}

pub fn scene_id_of(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("scene path {} has no usable file name", path.display()))
}

pub fn load_scene_file(path: &Path) -> Result<Scene> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
    load_scene(&text).with_context(|| format!("parsing scene {}", path.display()))
}

pub fn parse_models(s: &str) -> Result<Vec<FusionMode>> {
    parse_list(s, "model")
}

pub fn parse_optimizers(s: &str) -> Result<Vec<OptimizerKind>> {
    parse_list(s, "optimizer")
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    parse_list(s, "seed")
}

pub fn parse_ids(s: &str) -> Result<Vec<u64>> {
    parse_list(s, "id")
}

fn parse_list<T>(s: &str, what: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<T>().map_err(|e| anyhow!("bad {what} '{part}': {e}"))?);
    }
    if out.is_empty() {
        bail!("empty {what} list '{s}'");
    }
    Ok(out)
}

/// Derives the seed driving one (scene, model, optimizer, repetition) job.
pub fn job_seed(user_seed: u64, scene_id: &str, model: FusionMode, optimizer: OptimizerKind) -> u64 {
    hash64(&[user_seed, fnv1a(scene_id.as_bytes()), model as u64, optimizer as u64])
}

/// Runs `f` on a pool of `jobs` rayon workers; 0 means the default pool.
/// Job outputs are collected in job order, so the worker count never changes
/// the bytes written.
fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;
    Ok(pool.install(f))
}

// ---------------------------------------------------------------------------
// attack

#[derive(Debug, Clone)]
pub struct AttackSettings {
    pub scenes: String,
    pub models: Vec<FusionMode>,
    pub optimizers: Vec<OptimizerKind>,
    pub budget: usize,
    pub k: usize,
    pub k0: usize,
    pub tau: f64,
    pub m_targets: usize,
    pub nq: usize,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub out: PathBuf,
    pub timing: bool,
}

pub struct AttackOutput {
    pub rows: Vec<ResultRow>,
    pub failures: usize,
    pub csv_path: PathBuf,
}

#[derive(Debug, Clone)]
struct AttackJob {
    scene_id: String,
    path: PathBuf,
    model: FusionMode,
    optimizer: OptimizerKind,
    seed: u64,
}

fn challenge_config(s: &AttackSettings, optimizer: OptimizerKind) -> ChallengeConfig {
    ChallengeConfig {
        acs: AcsConfig { k: s.k, k0: s.k0, tau: s.tau },
        aps: ApsConfig { budget: s.budget, m_targets: s.m_targets, n_q: s.nq, ..ApsConfig::default() },
        optimizer,
        weights: LossWeights::default(),
    }
}

pub fn run_attack(s: &AttackSettings) -> Result<AttackOutput> {
    let sources = scene_sources(&s.scenes)?;
    fs::create_dir_all(s.out.join("adv")).context("creating adv dir")?;
    fs::create_dir_all(s.out.join("reports")).context("creating reports dir")?;

    let mut jobs = Vec::new();
    for (scene_id, path) in &sources {
        for &model in &s.models {
            for &optimizer in &s.optimizers {
                for &seed in &s.seeds {
                    jobs.push(AttackJob {
                        scene_id: scene_id.clone(),
                        path: path.clone(),
                        model,
                        optimizer,
                        seed,
                    });
                }
            }
        }
    }

    let results: Vec<Result<Vec<ResultRow>>> =
        with_pool(s.jobs, || jobs.par_iter().map(|job| run_attack_job(s, job)).collect())?;

    let mut rows = Vec::new();
    let mut failures = 0;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => {
                failures += 1;
                eprintln!(
                    "attack failed: scene {} model {} optimizer {} seed {}: {e:#}",
                    job.scene_id,
                    job.model.as_str(),
                    job.optimizer.as_str(),
                    job.seed
                );
            }
        }
    }
    let csv_path = s.out.join("results.csv");
    write_csv(&csv_path, &rows)?;
    Ok(AttackOutput { rows, failures, csv_path })
}

fn run_attack_job(s: &AttackSettings, job: &AttackJob) -> Result<Vec<ResultRow>> {
    let scene = load_scene_file(&job.path)?;
    let cfg = challenge_config(s, job.optimizer);
    let started = Instant::now();
    let outcome = generate_challenging(
        &scene,
        &ModelConfig::new(job.model),
        &cfg,
        job_seed(job.seed, &job.scene_id, job.model, job.optimizer),
    )?;
    let elapsed = if s.timing { started.elapsed().as_millis() as u64 } else { 0 };

    let stem = format!(
        "{}__{}__{}__s{}",
        job.scene_id,
        job.model.as_str(),
        job.optimizer.as_str(),
        job.seed
    );
    let adv_path = s.out.join("adv").join(format!("{stem}.json"));
    fs::write(&adv_path, save_scene(&outcome.adversarial))
        .with_context(|| format!("writing {}", adv_path.display()))?;
    let report_path = s.out.join("reports").join(format!("{stem}.json"));
    // Relative to the report file, so report bytes do not depend on --out.
    let adv_rel = PathBuf::from("..").join("adv").join(format!("{stem}.json"));
    fs::write(&report_path, attack_report_json(job, s.budget, &outcome, &job.path, &adv_rel))
        .with_context(|| format!("writing {}", report_path.display()))?;

    let row = |stage, report: &EvalReport, queries, elapsed_ms| ResultRow {
        scene_id: job.scene_id.clone(),
        model: job.model,
        stage,
        optimizer: job.optimizer,
        seed: job.seed,
        report: report.clone(),
        queries_used: queries,
        elapsed_ms,
    };
    Ok(vec![
        row("normal", &outcome.original, 1, 0),
        row("post_acs", &outcome.post_acs, outcome.acs_evaluations, 0),
        row("post_aps", &outcome.post_aps, outcome.trace.len(), elapsed),
    ])
}

fn ap_map(report: &EvalReport) -> Value {
    report.to_json()["ap"].clone()
}

fn attack_report_json(
    job: &AttackJob,
    budget: usize,
    outcome: &ChallengeOutcome,
    scene_file: &Path,
    adv_file: &Path,
) -> String {
    let delta: Vec<Value> = outcome
        .perturbation
        .deltas
        .iter()
        .map(|d| json!([d[0], d[1], d[2].to_degrees()]))
        .collect();
    let v = json!({
        "scene_id": job.scene_id,
        "model": job.model.as_str(),
        "collab": outcome.collab.members,
        "targets": outcome.perturbation.targets,
        "delta": delta,
        "l_adv": {
            "original": outcome.original.l_adv,
            "post_acs": outcome.post_acs.l_adv,
            "post_aps": outcome.post_aps.l_adv,
        },
        "ap": ap_map(&outcome.post_aps),
        "optimizer": job.optimizer.as_str(),
        "budget": budget,
        "seed": job.seed,
        "queries_used": outcome.trace.len(),
        "acs_evaluations": outcome.acs_evaluations,
        "scene_file": scene_file.display().to_string(),
        "adv_scene_file": adv_file.display().to_string(),
    });
    let mut text = serde_json::to_string_pretty(&v).expect("report serializes");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub scenes: String,
    pub model: FusionMode,
    pub optimizers: Vec<OptimizerKind>,
    pub budget: usize,
    pub k: usize,
    pub k0: usize,
    pub tau: f64,
    pub m_targets: usize,
    pub nq: usize,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    pub out: PathBuf,
    pub timing: bool,
}

pub struct BenchOutput {
    pub rows: Vec<ResultRow>,
    /// Scenes dropped because some job in them failed.
    pub failures: usize,
    /// (optimizer, median l_adv, mean l_adv) over all kept rows.
    pub summary: Vec<(OptimizerKind, f64, f64)>,
}

pub fn run_bench(s: &BenchSettings) -> Result<BenchOutput> {
    if s.optimizers.len() < 2 {
        bail!("bench needs at least 2 optimizers, got {}", s.optimizers.len());
    }
    if s.seeds.len() < 3 {
        bail!("bench needs at least 3 seeds, got {}", s.seeds.len());
    }
    let sources = scene_sources(&s.scenes)?;
    if sources.len() < 5 {
        bail!("bench needs at least 5 scenes, got {}", sources.len());
    }
    fs::create_dir_all(&s.out).context("creating output dir")?;

    // One unit per (scene, seed): the collaborator stage runs once and every
    // optimizer attacks the same collaboration, so the comparison is paired.
    let units: Vec<(usize, u64)> = sources
        .iter()
        .enumerate()
        .flat_map(|(i, _)| s.seeds.iter().map(move |&seed| (i, seed)))
        .collect();

    let results: Vec<Result<Vec<ResultRow>>> = with_pool(s.jobs, || {
        units
            .par_iter()
            .map(|&(i, seed)| run_bench_unit(s, &sources[i].0, &sources[i].1, seed))
            .collect()
    })?;

    let mut dropped: HashSet<String> = HashSet::new();
    for (&(i, seed), res) in units.iter().zip(&results) {
        if let Err(e) = res {
            eprintln!("bench failed: scene {} seed {}: {e:#}", sources[i].0, seed);
            dropped.insert(sources[i].0.clone());
        }
    }

    // scene -> optimizer -> seed, skipping dropped scenes wholesale so every
    // optimizer sees the same workload.
    let mut rows = Vec::new();
    for (i, (scene_id, _)) in sources.iter().enumerate() {
        if dropped.contains(scene_id) {
            continue;
        }
        for &opt in &s.optimizers {
            for (u, &(j, _)) in units.iter().enumerate() {
                if j != i {
                    continue;
                }
                let unit_rows = results[u].as_ref().expect("kept scenes have results");
                rows.extend(unit_rows.iter().filter(|r| r.optimizer == opt).cloned());
            }
        }
    }

    let summary: Vec<(OptimizerKind, f64, f64)> = s
        .optimizers
        .iter()
        .map(|&opt| {
            let mut vals: Vec<f64> =
                rows.iter().filter(|r| r.optimizer == opt).map(|r| r.report.l_adv).collect();
            let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
            (opt, median(&mut vals), mean)
        })
        .collect();

    write_csv(&s.out.join("bench.csv"), &rows)?;
    fs::write(s.out.join("bench.md"), bench_markdown(s, &sources, &dropped, &rows, &summary))
        .context("writing bench.md")?;
    Ok(BenchOutput { rows, failures: dropped.len(), summary })
}

fn run_bench_unit(
    s: &BenchSettings,
    scene_id: &str,
    path: &Path,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let scene = load_scene_file(path)?;
    let model = ModelConfig::new(s.model);
    let weights = LossWeights::default();
    let acs_cfg = AcsConfig { k: s.k, k0: s.k0, tau: s.tau };
    let base = hash64(&[seed, fnv1a(scene_id.as_bytes()), s.model as u64]);

    let baseline = default_collab(&scene, s.k)?;
    let original = adversarial_loss(&scene, &baseline, &model, &weights)?;
    let (acs_choice, acs_report) = acs(&scene, &model, &acs_cfg, &weights, split_seed(base, 1))?;
    let collab =
        if acs_report.l_adv <= original.l_adv { acs_choice } else { baseline };

    let aps_cfg = ApsConfig {
        budget: s.budget,
        m_targets: s.m_targets,
        n_q: s.nq,
        ..ApsConfig::default()
    };
    let mut rows = Vec::new();
    for &opt in &s.optimizers {
        let opt_seed = hash64(&[base, opt as u64]);
        let mut optimizer = opt.build(split_seed(opt_seed, 2));
        let started = Instant::now();
        let (perturbation, trace) = aps(
            &scene,
            &collab,
            &model,
            &weights,
            optimizer.as_mut(),
            &aps_cfg,
            split_seed(opt_seed, 3),
        )?;
        let elapsed = if s.timing { started.elapsed().as_millis() as u64 } else { 0 };
        let adversarial = apply_perturbation(&scene, &perturbation)?;
        let report = adversarial_loss(&adversarial, &collab, &model, &weights)?;
        rows.push(ResultRow {
            scene_id: scene_id.to_string(),
            model: s.model,
            stage: "post_aps",
            optimizer: opt,
            seed,
            report,
            queries_used: trace.len(),
            elapsed_ms: elapsed,
        });
    }
    Ok(rows)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn bench_markdown(
    s: &BenchSettings,
    sources: &[(String, PathBuf)],
    dropped: &HashSet<String>,
    rows: &[ResultRow],
    summary: &[(OptimizerKind, f64, f64)],
) -> String {
    let kept: Vec<&String> =
        sources.iter().map(|(id, _)| id).filter(|id| !dropped.contains(*id)).collect();
    let seeds: Vec<String> = s.seeds.iter().map(u64::to_string).collect();
    let mut md = String::new();
    md.push_str("# Optimizer benchmark\n\n");
    md.push_str(&format!(
        "Model `{}`, budget {}, seeds {}, {} scenes ({} dropped). \
         Lower adversarial loss is a stronger attack.\n\n",
        s.model.as_str(),
        s.budget,
        seeds.join(","),
        kept.len(),
        dropped.len()
    ));
    md.push_str("| optimizer | median l_adv | mean l_adv |\n|---|---|---|\n");
    for (opt, med, mean) in summary {
        md.push_str(&format!("| {} | {:.4} | {:.4} |\n", opt.as_str(), med, mean));
    }
    md.push_str("\n## Per-scene mean l_adv (seeds pooled)\n\n");
    md.push_str("| scene |");
    for &opt in &s.optimizers {
        md.push_str(&format!(" {} |", opt.as_str()));
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(s.optimizers.len()));
    md.push('\n');
    for id in kept {
        md.push_str(&format!("| {id} |"));
        for &opt in &s.optimizers {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.scene_id == *id && r.optimizer == opt)
                .map(|r| r.report.l_adv)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
            md.push_str(&format!(" {mean:.4} |"));
        }
        md.push('\n');
    }
    md
}

// ---------------------------------------------------------------------------
// transfer

#[derive(Debug, Clone)]
pub struct TransferSettings {
    pub scenes: String,
    pub models: Vec<FusionMode>,
    pub optimizer: OptimizerKind,
    pub budget: usize,
    pub k: usize,
    pub k0: usize,
    pub tau: f64,
    pub m_targets: usize,
    pub nq: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
}

pub struct TransferOutput {
    pub models: Vec<FusionMode>,
    /// Mean unattacked l_adv per evaluated model.
    pub normal: Vec<f64>,
    /// `matrix[target][source]`: mean l_adv of the evaluated (target) model
    /// on scenes attacked against the source model.
    pub matrix: Vec<Vec<f64>>,
    pub failures: usize,
}

pub fn run_transfer(s: &TransferSettings) -> Result<TransferOutput> {
    if s.models.len() < 2 {
        bail!("transfer needs at least 2 models, got {}", s.models.len());
    }
    let sources = scene_sources(&s.scenes)?;
    fs::create_dir_all(s.out.join("adv")).context("creating adv dir")?;

    // Attack phase: every (scene, source model) pair, in parallel.
    let pairs: Vec<(usize, FusionMode)> = sources
        .iter()
        .enumerate()
        .flat_map(|(i, _)| s.models.iter().map(move |&m| (i, m)))
        .collect();
    let attacked: Vec<Result<(PathBuf, CollaborationChoice)>> = with_pool(s.jobs, || {
        pairs
            .par_iter()
            .map(|&(i, source)| {
                let (scene_id, path) = &sources[i];
                let scene = load_scene_file(path)?;
                let cfg = ChallengeConfig {
                    acs: AcsConfig { k: s.k, k0: s.k0, tau: s.tau },
                    aps: ApsConfig {
                        budget: s.budget,
                        m_targets: s.m_targets,
                        n_q: s.nq,
                        ..ApsConfig::default()
                    },
                    optimizer: s.optimizer,
                    weights: LossWeights::default(),
                };
                let outcome = generate_challenging(
                    &scene,
                    &ModelConfig::new(source),
                    &cfg,
                    job_seed(s.seed, scene_id, source, s.optimizer),
                )?;
                let adv_path =
                    s.out.join("adv").join(format!("{}__src-{}.json", scene_id, source.as_str()));
                fs::write(&adv_path, save_scene(&outcome.adversarial))
                    .with_context(|| format!("writing {}", adv_path.display()))?;
                Ok((adv_path, outcome.collab))
            })
            .collect()
    })?;

    // A failed pair drops its scene from the whole matrix so every cell
    // averages over the same scenes.
    let mut dropped: HashSet<usize> = HashSet::new();
    for (&(i, source), res) in pairs.iter().zip(&attacked) {
        if let Err(e) = res {
            eprintln!("transfer attack failed: scene {} source {}: {e:#}", sources[i].0, source.as_str());
            dropped.insert(i);
        }
    }
    let kept: Vec<usize> = (0..sources.len()).filter(|i| !dropped.contains(i)).collect();
    if kept.is_empty() {
        bail!("transfer: every scene failed");
    }

    // Evaluation phase reloads the saved adversarial scenes; the artifact on
    // disk is what transfers, not in-memory state.
    let weights = LossWeights::default();
    let mut normal = Vec::new();
    let mut matrix = Vec::new();
    for &target in &s.models {
        let target_cfg = ModelConfig::new(target);
        let mut normal_sum = 0.0;
        for &i in &kept {
            let scene = load_scene_file(&sources[i].1)?;
            let collab = default_collab(&scene, s.k)?;
            normal_sum += adversarial_loss(&scene, &collab, &target_cfg, &weights)?.l_adv;
        }
        normal.push(normal_sum / kept.len() as f64);

        let mut row = Vec::new();
        for si in 0..s.models.len() {
            let mut sum = 0.0;
            for &i in &kept {
                let pair_idx = i * s.models.len() + si;
                let (adv_path, collab) =
                    attacked[pair_idx].as_ref().expect("kept scenes attacked cleanly");
                let adv = load_scene_file(adv_path)?;
                sum += adversarial_loss(&adv, collab, &target_cfg, &weights)?.l_adv;
            }
            row.push(sum / kept.len() as f64);
        }
        matrix.push(row);
    }

    let out = TransferOutput { models: s.models.clone(), normal, matrix, failures: dropped.len() };
    fs::write(s.out.join("transfer.csv"), transfer_csv(&out)).context("writing transfer.csv")?;
    fs::write(s.out.join("transfer.md"), transfer_markdown(s, &out, kept.len()))
        .context("writing transfer.md")?;
    Ok(out)
}

fn transfer_csv(t: &TransferOutput) -> String {
    let mut out = String::from("target,normal");
    for m in &t.models {
        out.push(',');
        out.push_str(m.as_str());
    }
    out.push('\n');
    for (ti, target) in t.models.iter().enumerate() {
        out.push_str(&format!("{},{}", target.as_str(), t.normal[ti]));
        for v in &t.matrix[ti] {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

fn transfer_markdown(s: &TransferSettings, t: &TransferOutput, n_scenes: usize) -> String {
    let mut md = String::from("# Attack transfer across fusion models\n\n");
    md.push_str(&format!(
        "Mean adversarial loss over {} scenes (optimizer `{}`, budget {}, seed {}). \
         Rows are the evaluated model, columns the model the attack was built \
         against; `normal` is the unattacked scene with the default \
         collaboration. Lower means the attack carries over harder.\n\n",
        n_scenes,
        s.optimizer.as_str(),
        s.budget,
        s.seed
    ));
    md.push_str("| evaluated \\ attacked | normal |");
    for m in &t.models {
        md.push_str(&format!(" {} |", m.as_str()));
    }
    md.push_str("\n|---|---|");
    md.push_str(&"---|".repeat(t.models.len()));
    md.push('\n');
    for (ti, target) in t.models.iter().enumerate() {
        md.push_str(&format!("| {} | {:.4} |", target.as_str(), t.normal[ti]));
        for v in &t.matrix[ti] {
            md.push_str(&format!(" {v:.4} |"));
        }
        md.push('\n');
    }
    md
}

// ---------------------------------------------------------------------------
// gen-scenes

#[derive(Debug, Clone)]
pub struct GenScenesSettings {
    pub count: usize,
    pub config: SceneGenConfig,
    pub seed: u64,
    pub out: PathBuf,
}

/// Writes `count` scenes as scene_0000.json… under `out`. Each index hashes
/// its own seed stream, so scene i is the same no matter how many follow, and
/// placement dead-ends retry with fresh sub-seeds.
pub fn run_gen_scenes(s: &GenScenesSettings) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&s.out).context("creating output dir")?;
    let mut paths = Vec::new();
    for i in 0..s.count {
        let mut scene = None;
        let mut last = String::new();
        for attempt in 0..32u64 {
            match generate_scene(&s.config, hash64(&[s.seed, i as u64, attempt])) {
                Ok(sc) => {
                    scene = Some(sc);
                    break;
                }
                Err(e) => last = e.to_string(),
            }
        }
        let scene =
            scene.ok_or_else(|| anyhow!("scene {i}: generation kept failing, last error: {last}"))?;
        let path = s.out.join(format!("scene_{i:04}.json"));
        fs::write(&path, save_scene(&scene)).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn parse_layout(s: &str) -> Result<Layout> {
    match s {
        "uniform" => Ok(Layout::UniformField),
        "corridor" => Ok(Layout::TwoLaneCorridor),
        other => bail!("unknown layout '{other}' (expected uniform|corridor)"),
    }
}

// ---------------------------------------------------------------------------
// curate

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurateViewpoints {
    Intelligent,
    Ego,
}

impl std::str::FromStr for CurateViewpoints {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "intelligent" => Ok(CurateViewpoints::Intelligent),
            "ego" => Ok(CurateViewpoints::Ego),
            other => Err(format!("unknown viewpoints '{other}' (expected intelligent|ego)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurateSettings {
    pub scenes: String,
    pub threshold: f64,
    pub viewpoints: CurateViewpoints,
    /// When set, kept scene files are copied here.
    pub out: Option<PathBuf>,
}

pub struct CurateOutput {
    /// (scene_id, avg points per box) under the threshold, in source order.
    pub kept: Vec<(String, f64)>,
    pub dropped: Vec<(String, f64)>,
    pub failures: usize,
}

/// Keeps the scenes whose ground-truth boxes collect few LiDAR returns on
/// average; sparse scenes are where cooperative perception is fragile.
pub fn run_curate(s: &CurateSettings) -> Result<CurateOutput> {
    let sources = scene_sources(&s.scenes)?;
    if let Some(out) = &s.out {
        fs::create_dir_all(out).context("creating output dir")?;
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut failures = 0;
    for (scene_id, path) in &sources {
        let result = (|| -> Result<f64> {
            let scene = load_scene_file(path)?;
            let viewpoints: Vec<u64> = match s.viewpoints {
                CurateViewpoints::Intelligent => scene.intelligent_ids(),
                CurateViewpoints::Ego => vec![scene.ego_id],
            };
            Ok(avg_points_per_box(&scene, &viewpoints)?)
        })();
        match result {
            Ok(avg) if avg < s.threshold => {
                if let Some(out) = &s.out {
                    let dest = out.join(path.file_name().expect("sources have file names"));
                    fs::copy(path, &dest)
                        .with_context(|| format!("copying to {}", dest.display()))?;
                }
                kept.push((scene_id.clone(), avg));
            }
            Ok(avg) => dropped.push((scene_id.clone(), avg)),
            Err(e) => {
                failures += 1;
                eprintln!("curate failed: scene {scene_id}: {e:#}");
            }
        }
    }
    Ok(CurateOutput { kept, dropped, failures })
}

// ---------------------------------------------------------------------------
// render

#[derive(Debug, Clone)]
pub struct RenderSettings {
    pub scenes: Option<String>,
    /// Attack report to take the collaboration, targets and adversarial
    /// scene from; explicit flags below still win.
    pub report: Option<PathBuf>,
    pub model: Option<FusionMode>,
    pub collab: Vec<u64>,
    pub targets: Vec<u64>,
    pub lidar: bool,
    pub out: PathBuf,
}

pub fn run_render(s: &RenderSettings) -> Result<Vec<PathBuf>> {
    let mut opts = RenderOptions {
        collab: s.collab.clone(),
        targets: s.targets.clone(),
        model: s.model,
        lidar: s.lidar,
    };
    let sources = if let Some(report_path) = &s.report {
        let text = fs::read_to_string(report_path)
            .with_context(|| format!("reading report {}", report_path.display()))?;
        let v: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing report {}", report_path.display()))?;
        if opts.collab.is_empty() {
            opts.collab = ids_from(&v, "collab")?;
        }
        if opts.targets.is_empty() {
            opts.targets = ids_from(&v, "targets")?;
        }
        match &s.scenes {
            Some(spec) => scene_sources(spec)?,
            None => {
                let adv = v["adv_scene_file"]
                    .as_str()
                    .ok_or_else(|| anyhow!("report has no adv_scene_file and no --scenes given"))?;
                // Relative paths in the report count from the report file.
                let adv = if Path::new(adv).is_relative() {
                    report_path.parent().unwrap_or(Path::new(".")).join(adv)
                } else {
                    PathBuf::from(adv)
                };
                vec![(scene_id_of(&adv)?, adv)]
            }
        }
    } else {
        scene_sources(s.scenes.as_deref().context("render needs --scenes or --report")?)?
    };

    let single_file_out =
        sources.len() == 1 && s.out.extension().is_some_and(|e| e == "svg");
    if !single_file_out {
        fs::create_dir_all(&s.out).context("creating output dir")?;
    }
    let mut written = Vec::new();
    for (scene_id, path) in &sources {
        let scene = load_scene_file(path)?;
        let svg = render_svg(&scene, &opts);
        let dest = if single_file_out { s.out.clone() } else { s.out.join(format!("{scene_id}.svg")) };
        fs::write(&dest, svg).with_context(|| format!("writing {}", dest.display()))?;
        written.push(dest);
    }
    Ok(written)
}

fn ids_from(v: &Value, key: &str) -> Result<Vec<u64>> {
    v[key]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_u64).collect())
        .ok_or_else(|| anyhow!("report key '{key}' is not an id array"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_matches_row_shape() {
        assert_eq!(CSV_HEADER.split(',').count(), 11);
        let row = ResultRow {
            scene_id: "s".into(),
            model: FusionMode::AttSurrogate,
            stage: "normal",
            optimizer: OptimizerKind::Bo,
            seed: 7,
            report: EvalReport {
                ap: vec![(0.3, 1.0), (0.5, 0.5), (0.7, 0.25)],
                l_adv: 1.525,
                n_gt: 4,
                n_det: 4,
            },
            queries_used: 1,
            elapsed_ms: 0,
        };
        assert_eq!(row.csv_line(), "s,att,normal,bo,7,1,0.5,0.25,1.525,1,0");
    }

    #[test]
    fn csv_loss_is_weighted_ap_sum() {
        let report = EvalReport {
            ap: vec![(0.3, 0.9), (0.5, 0.6), (0.7, 0.1)],
            l_adv: 0.9 + 0.8 * 0.6 + 0.5 * 0.1,
            n_gt: 3,
            n_det: 3,
        };
        let want = report.ap_at(0.3).unwrap() + 0.8 * report.ap_at(0.5).unwrap()
            + 0.5 * report.ap_at(0.7).unwrap();
        assert!((report.l_adv - want).abs() < 1e-9);
    }

    #[test]
    fn median_of_odd_and_even_slices() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn job_seed_separates_every_axis() {
        let base = job_seed(0, "a", FusionMode::AttSurrogate, OptimizerKind::Bo);
        assert_ne!(base, job_seed(1, "a", FusionMode::AttSurrogate, OptimizerKind::Bo));
        assert_ne!(base, job_seed(0, "b", FusionMode::AttSurrogate, OptimizerKind::Bo));
        assert_ne!(base, job_seed(0, "a", FusionMode::LateFusion, OptimizerKind::Bo));
        assert_ne!(base, job_seed(0, "a", FusionMode::AttSurrogate, OptimizerKind::Rs));
    }

    #[test]
    fn comma_lists_parse_and_reject() {
        assert_eq!(parse_seeds("0, 1,2").unwrap(), vec![0, 1, 2]);
        assert_eq!(
            parse_models("late,att").unwrap(),
            vec![FusionMode::LateFusion, FusionMode::AttSurrogate]
        );
        assert!(parse_optimizers("rs,sgd").is_err());
        assert!(parse_seeds(",").is_err());
    }

    #[test]
    fn scene_sources_sorts_directory_listing() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.json", "a.json", "c.txt"] {
            fs::write(dir.path().join(name), "{}").unwrap();
        }
        let got = scene_sources(dir.path().to_str().unwrap()).unwrap();
        let ids: Vec<&str> = got.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }
}
