//! Experiment stages wired to a fixed on-disk layout under the output root:
//!
//! ```text
//! out/
//!   manifest.toml                      frozen copy of the run manifest
//!   dataset/                           dataset.json + sample_*.nstj
//!   runs/m{idx}_{kind}/{scheme}/       log.csv, checkpoint_{best,final}.ckpt
//!     eval/                            curve.csv, report.csv, mean_rel_l2.txt,
//!                                      snapshots/sample_*/{target,pred,diff}_*.{pgm,f32}
//!   summary.csv                        scheme,model,mean_rel_l2
//!   plots/                             errors_*.svg, train_*.svg
//!   FAILED                             written when a stage errors out
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::datagen::{generate_dataset, load_dataset, DatagenError, Dataset};
use crate::eval::{evaluate_model, export_snapshots, EvalError};
use crate::manifest::{ManifestError, Precision, RunManifest};
use crate::models::{ModelError, StepModel};
use crate::numerics::Scalar;
use crate::rollout::Scheme;
use crate::trainer::{
    load_checkpoint, save_checkpoint, train, write_log_csv, Checkpoint, TrainError, TrainRun,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("training diverged in {run}: {msg}")]
    Diverged { run: String, msg: String },
    #[error("missing artifact {0}; run the earlier stages first")]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Invalid(String),
    #[error("reproducibility check failed: {0}")]
    ReproMismatch(String),
}

pub fn dataset_dir(out: &Path) -> PathBuf {
    out.join("dataset")
}

pub fn run_dir(out: &Path, manifest: &RunManifest, model_idx: usize, scheme: Scheme) -> PathBuf {
    let kind = manifest.models[model_idx].kind.as_str();
    out.join("runs")
        .join(format!("m{model_idx}_{kind}"))
        .join(scheme.as_str())
}

fn failed_marker(out: &Path) -> PathBuf {
    out.join("FAILED")
}

/// Record a stage failure in the artifact tree so partial outputs are never
/// mistaken for a completed run.
pub fn write_failed_marker(out: &Path, err: &PipelineError) {
    let _ = fs::create_dir_all(out);
    let _ = fs::write(failed_marker(out), format!("{err}\n"));
}

fn clear_failed_marker(out: &Path) -> std::io::Result<()> {
    match fs::remove_file(failed_marker(out)) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(e),
    }
}

/// Which (model, scheme) runs a stage invocation touches.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunFilter {
    pub model_idx: Option<usize>,
    pub scheme: Option<Scheme>,
}

impl RunFilter {
    fn pairs(&self, manifest: &RunManifest) -> Result<Vec<(usize, Scheme)>, PipelineError> {
        if let Some(idx) = self.model_idx {
            if idx >= manifest.models.len() {
                return Err(PipelineError::Invalid(format!(
                    "model index {idx} out of range ({} models)",
                    manifest.models.len()
                )));
            }
        }
        if let Some(s) = self.scheme {
            if !manifest.training.schemes.contains(&s) {
                return Err(PipelineError::Invalid(format!(
                    "scheme {} is not part of this manifest",
                    s.as_str()
                )));
            }
        }
        let mut pairs = Vec::new();
        for idx in 0..manifest.models.len() {
            if self.model_idx.is_some_and(|m| m != idx) {
                continue;
            }
            for &scheme in &manifest.training.schemes {
                if self.scheme.is_some_and(|s| s != scheme) {
                    continue;
                }
                pairs.push((idx, scheme));
            }
        }
        Ok(pairs)
    }
}

pub fn stage_gen_data(manifest: &RunManifest, out: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(out)?;
    clear_failed_marker(out)?;
    manifest.save(&out.join("manifest.toml"))?;
    let dir = dataset_dir(out);
    fs::create_dir_all(&dir)?;
    generate_dataset(
        &manifest.dataset.solver,
        manifest.dataset.n_samples,
        &manifest.dataset.split,
        manifest.master_seed,
        &dir,
    )?;
    Ok(())
}

fn load_dataset_checked<T: Scalar>(out: &Path) -> Result<Dataset<T>, PipelineError> {
    let dir = dataset_dir(out);
    let meta = dir.join(crate::datagen::DATASET_META);
    if !meta.exists() {
        return Err(PipelineError::MissingArtifact(meta));
    }
    Ok(load_dataset::<T>(&dir)?)
}

fn train_one<T: Scalar>(
    manifest: &RunManifest,
    out: &Path,
    data: &Dataset<T>,
    model_idx: usize,
    scheme: Scheme,
    resume: bool,
    verbose: bool,
) -> Result<(), PipelineError> {
    let dir = run_dir(out, manifest, model_idx, scheme);
    fs::create_dir_all(&dir)?;
    let cfg = manifest.train_config(model_idx, scheme);
    let mut model = StepModel::<T>::init(manifest.models[model_idx].clone(), manifest.init_seed(model_idx))?;

    let final_path = dir.join("checkpoint_final.ckpt");
    let mut prior_log: Vec<crate::trainer::EpochRecord> = Vec::new();
    let resume_ckpt = if resume && final_path.exists() {
        let ck = load_checkpoint::<T>(&final_path)?;
        prior_log = read_log_csv(&dir.join("log.csv")).unwrap_or_default();
        prior_log.truncate(ck.epoch);
        Some(ck)
    } else {
        None
    };

    if verbose {
        eprintln!(
            "== training m{model_idx}_{} / {} ({} params, {} epochs)",
            manifest.models[model_idx].kind.as_str(),
            scheme.as_str(),
            model.param_count(),
            cfg.epochs
        );
    }
    let run: TrainRun<T> = train(&mut model, &data.train, &data.val, &cfg, resume_ckpt, verbose)?;

    let mut log = prior_log;
    log.extend(run.log.iter().cloned());
    write_log_csv(&dir.join("log.csv"), &log)?;

    let (best_epoch, best_val) = match &run.best {
        Some(b) => (Some(b.epoch), Some(b.val_rel_l2)),
        None => (None, None),
    };
    save_checkpoint(
        &final_path,
        &Checkpoint {
            store: model.params.clone(),
            adam: run.adam.clone(),
            train: cfg.clone(),
            epoch: run.epochs_done,
            best_epoch,
            best_val,
        },
    )?;
    let best_path = dir.join("checkpoint_best.ckpt");
    match &run.best {
        Some(b) => save_checkpoint(
            &best_path,
            &Checkpoint {
                store: b.store.clone(),
                adam: b.adam.clone(),
                train: cfg.clone(),
                epoch: b.epoch + 1,
                best_epoch: Some(b.epoch),
                best_val: Some(b.val_rel_l2),
            },
        )?,
        // No validation improvement this call (e.g. empty val split): fall
        // back to the final weights so the eval stage always has a model.
        None => {
            if !best_path.exists() {
                fs::copy(&final_path, &best_path)?;
            }
        }
    }

    if let Some(msg) = run.diverged {
        fs::write(dir.join("DIVERGED"), format!("{msg}\n"))?;
        return Err(PipelineError::Diverged {
            run: format!("m{model_idx}/{}", scheme.as_str()),
            msg,
        });
    }
    Ok(())
}

fn read_log_csv(path: &Path) -> Option<Vec<crate::trainer::EpochRecord>> {
    let text = fs::read_to_string(path).ok()?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let mut it = line.split(',');
        rows.push(crate::trainer::EpochRecord {
            epoch: it.next()?.parse().ok()?,
            e: it.next()?.parse().ok()?,
            lr: it.next()?.parse().ok()?,
            train_loss: it.next()?.parse().ok()?,
            val_rel_l2: it.next()?.parse().ok()?,
        });
    }
    Some(rows)
}

pub fn stage_train<T: Scalar>(
    manifest: &RunManifest,
    out: &Path,
    filter: RunFilter,
    resume: bool,
    verbose: bool,
) -> Result<(), PipelineError> {
    let data = load_dataset_checked::<T>(out)?;
    for (idx, scheme) in filter.pairs(manifest)? {
        train_one(manifest, out, &data, idx, scheme, resume, verbose)?;
    }
    Ok(())
}

fn eval_one<T: Scalar>(
    manifest: &RunManifest,
    out: &Path,
    data: &Dataset<T>,
    model_idx: usize,
    scheme: Scheme,
) -> Result<f64, PipelineError> {
    let dir = run_dir(out, manifest, model_idx, scheme);
    let ckpt_path = dir.join("checkpoint_best.ckpt");
    if !ckpt_path.exists() {
        return Err(PipelineError::MissingArtifact(ckpt_path));
    }
    let ckpt = load_checkpoint::<T>(&ckpt_path)?;
    let mut model = StepModel::<T>::init(manifest.models[model_idx].clone(), manifest.init_seed(model_idx))?;
    model.params = ckpt.store;

    let t_in = manifest.training.t_in;
    let horizon = manifest.eval.horizon;
    let summary = evaluate_model(&model, &data.test, t_in, horizon)?;

    let eval_dir = dir.join("eval");
    fs::create_dir_all(&eval_dir)?;
    summary.write_curve_csv(&eval_dir.join("curve.csv"), t_in + manifest.training.t_out)?;
    summary.write_report_csv(&eval_dir.join("report.csv"))?;
    fs::write(eval_dir.join("mean_rel_l2.txt"), format!("{}\n", summary.mean_rel_l2))?;

    if manifest.eval.snapshot_samples > 0 && !manifest.eval.snapshot_steps.is_empty() {
        // Manifest snapshot steps are rollout-relative; the exporter addresses
        // absolute frame indices.
        let abs_steps: Vec<usize> = manifest.eval.snapshot_steps.iter().map(|&s| t_in + s).collect();
        let n = manifest.eval.snapshot_samples.min(data.test.len());
        for traj in &data.test[..n] {
            let snap_dir = eval_dir
                .join("snapshots")
                .join(format!("sample_{:05}", traj.sample_id));
            fs::create_dir_all(&snap_dir)?;
            export_snapshots(&model, traj, t_in, &abs_steps, &snap_dir)?;
        }
    }
    Ok(summary.mean_rel_l2)
}

/// Rebuild summary.csv from every run directory that has been evaluated.
fn write_summary(manifest: &RunManifest, out: &Path) -> Result<(), PipelineError> {
    let mut rows = String::from("scheme,model,mean_rel_l2\n");
    for (idx, m) in manifest.models.iter().enumerate() {
        for &scheme in &manifest.training.schemes {
            let mean_path = run_dir(out, manifest, idx, scheme)
                .join("eval")
                .join("mean_rel_l2.txt");
            if let Ok(text) = fs::read_to_string(&mean_path) {
                rows.push_str(&format!(
                    "{},m{idx}_{},{}\n",
                    scheme.as_str(),
                    m.kind.as_str(),
                    text.trim()
                ));
            }
        }
    }
    fs::write(out.join("summary.csv"), rows)?;
    Ok(())
}

pub fn stage_eval<T: Scalar>(
    manifest: &RunManifest,
    out: &Path,
    filter: RunFilter,
    verbose: bool,
) -> Result<(), PipelineError> {
    let data = load_dataset_checked::<T>(out)?;
    for (idx, scheme) in filter.pairs(manifest)? {
        let mean = eval_one(manifest, out, &data, idx, scheme)?;
        if verbose {
            eprintln!(
                "== eval m{idx}_{} / {}: mean rel L2 {mean:.4}",
                manifest.models[idx].kind.as_str(),
                scheme.as_str()
            );
        }
    }
    write_summary(manifest, out)?;
    Ok(())
}

/// Render one error chart and one loss chart per model directory by scanning
/// `runs/`. Needs no manifest: the interpolation/extrapolation boundary is
/// recovered from the region column of each curve.csv.
pub fn stage_plot(out: &Path) -> Result<(), PipelineError> {
    let runs = out.join("runs");
    if !runs.is_dir() {
        return Err(PipelineError::MissingArtifact(runs));
    }
    let plots = out.join("plots");
    fs::create_dir_all(&plots)?;
    let mut model_dirs: Vec<PathBuf> = fs::read_dir(&runs)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    model_dirs.sort();

    for model_dir in model_dirs {
        let tag = model_dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut scheme_dirs: Vec<PathBuf> = fs::read_dir(&model_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        scheme_dirs.sort();

        let mut err_series = Vec::new();
        let mut loss_series = Vec::new();
        let mut boundary = None;
        for dir in scheme_dirs {
            let label = dir.file_name().unwrap().to_string_lossy().into_owned();
            if let Ok(text) = fs::read_to_string(dir.join("eval").join("curve.csv")) {
                let pts = parse_csv_xy(&text, 0, 1);
                if boundary.is_none() {
                    boundary = first_extrap_step(&text);
                }
                if !pts.is_empty() {
                    err_series.push(Series {
                        label: label.clone(),
                        points: pts,
                    });
                }
            }
            if let Ok(log) = fs::read_to_string(dir.join("log.csv")) {
                let pts = parse_csv_xy(&log, 0, 3);
                if !pts.is_empty() {
                    loss_series.push(Series { label, points: pts });
                }
            }
        }
        if !err_series.is_empty() {
            write_svg_chart(
                &plots.join(format!("errors_{tag}.svg")),
                &format!("{tag}: free-rollout error by step"),
                "frame index",
                "relative L2",
                &err_series,
                boundary.map(|b| b - 0.5),
            )?;
        }
        if !loss_series.is_empty() {
            write_svg_chart(
                &plots.join(format!("train_{tag}.svg")),
                &format!("{tag}: training loss"),
                "epoch",
                "sequence MSE",
                &loss_series,
                None,
            )?;
        }
    }
    Ok(())
}

/// Frame index of the first row labeled `extrap`, i.e. t_train_end.
fn first_extrap_step(curve_csv: &str) -> Option<f64> {
    for line in curve_csv.lines().skip(1) {
        let mut it = line.split(',');
        let step = it.next()?.parse::<f64>().ok()?;
        it.next();
        if it.next()? == "extrap" {
            return Some(step);
        }
    }
    None
}

fn parse_csv_xy(text: &str, x_col: usize, y_col: usize) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if let (Some(x), Some(y)) = (fields.get(x_col), fields.get(y_col)) {
            if let (Ok(x), Ok(y)) = (x.parse::<f64>(), y.parse::<f64>()) {
                if x.is_finite() && y.is_finite() {
                    pts.push((x, y));
                }
            }
        }
    }
    pts
}

/// The full scheme comparison: data generation, one training run per
/// (model, scheme), evaluation, summary.csv, plots. Any failure leaves a
/// FAILED marker at the output root.
pub fn run_all(manifest: &RunManifest, out: &Path, resume: bool, verbose: bool) -> Result<(), PipelineError> {
    let result = (|| {
        stage_gen_data(manifest, out)?;
        match manifest.precision {
            Precision::Single => {
                stage_train::<f32>(manifest, out, RunFilter::default(), resume, verbose)?;
                stage_eval::<f32>(manifest, out, RunFilter::default(), verbose)?;
            }
            Precision::Double => {
                stage_train::<f64>(manifest, out, RunFilter::default(), resume, verbose)?;
                stage_eval::<f64>(manifest, out, RunFilter::default(), verbose)?;
            }
        }
        stage_plot(out)?;
        Ok(())
    })();
    if let Err(ref e) = result {
        write_failed_marker(out, e);
    }
    result
}

/// Determinism audit used by the test suite: run the whole pipeline twice
/// into sibling directories and demand byte-identical artifacts (SVGs
/// included). Returns the number of compared files.
pub fn verify_bitwise_repro(manifest: &RunManifest, out: &Path) -> Result<usize, PipelineError> {
    let a = out.join("pass_a");
    let b = out.join("pass_b");
    for dir in [&a, &b] {
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        run_all(manifest, dir, false, false)?;
    }
    let mut files_a = Vec::new();
    collect_files(&a, Path::new(""), &mut files_a)?;
    let mut files_b = Vec::new();
    collect_files(&b, Path::new(""), &mut files_b)?;
    files_a.sort();
    files_b.sort();
    if files_a != files_b {
        return Err(PipelineError::ReproMismatch(format!(
            "file sets differ ({} vs {} files)",
            files_a.len(),
            files_b.len()
        )));
    }
    for rel in &files_a {
        let bytes_a = fs::read(a.join(rel))?;
        let bytes_b = fs::read(b.join(rel))?;
        if bytes_a != bytes_b {
            return Err(PipelineError::ReproMismatch(format!(
                "{} differs between runs",
                rel.display()
            )));
        }
    }
    Ok(files_a.len())
}

fn collect_files(root: &Path, rel: &Path, acc: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(root.join(rel))? {
        let entry = entry?;
        let name = entry.file_name();
        let sub = rel.join(&name);
        if entry.file_type()?.is_dir() {
            collect_files(root, &sub, acc)?;
        } else {
            acc.push(sub);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// SVG line charts. Hand-rolled on purpose: the output must be a pure function
// of the data for the byte-level repro check, and the needs are tiny.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 62.0; // left margin, leaves room for y tick labels
const MR: f64 = 18.0;
const MT: f64 = 34.0;
const MB: f64 = 46.0;

pub fn write_svg_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    vline: Option<f64>,
) -> std::io::Result<()> {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if let Some(v) = vline {
        x_min = x_min.min(v);
        x_max = x_max.max(v);
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let pad = (y_max - y_min) * 0.05;
    y_min -= pad;
    y_max += pad;

    let sx = |x: f64| ML + (x - x_min) / (x_max - x_min) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_min) / (y_max - y_min) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        (ML + W - MR) / 2.0,
        xml_escape(title)
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        H - MB
    ));
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            sx(fx),
            H - MB,
            sx(fx),
            H - MB + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            sx(fx),
            H - MB + 17.0,
            fmt_tick(fx)
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{ML}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            ML - 4.0,
            sy(fy),
            sy(fy)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            ML - 7.0,
            sy(fy) + 4.0,
            fmt_tick(fy)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (ML + W - MR) / 2.0,
        H - 10.0,
        xml_escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>\n",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        xml_escape(y_label)
    ));

    if let Some(v) = vline {
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{MT}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n",
            sx(v),
            sx(v),
            H - MB
        ));
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        let ly = MT + 16.0 * i as f64 + 8.0;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            W - MR - 120.0,
            W - MR - 96.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            W - MR - 90.0,
            ly + 4.0,
            xml_escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1000.0 || a < 0.01 {
        format!("{v:.1e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
