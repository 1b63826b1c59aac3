use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sceneseg::annotation_io::{
    dataset_stats, load_frame_outputs, load_matrix, parse_annotations, parse_annotations_lenient,
    parse_predictions, parse_shots, save_frame_outputs, save_matrix, serialize_annotations,
    serialize_predictions, serialize_shots, snap_to_shots, BoundaryMove, ContainerKind,
    DatasetSplit, Header, SnapWarning, StatsReport, DEFAULT_SNAP_EPS_S, SCHEMA_VERSION,
};
use sceneseg::decode::{decode_video, DecodeConfig, FrameOutputs};
use sceneseg::metrics::{evaluate, EvaluationReport};
use sceneseg::model::{
    fit_and_predict, FeatureBundle, FitConfig, FitReport, ModelConfig, ModelWeights,
};
use sceneseg::synth::{gen_corpus, SynthConfig};
use sceneseg::{validate_annotation, PredictedSceneSet, Taxonomy, Violation};

use crate::defaults::{pick_parsed, Defaults};
use crate::status::{input, Fail, Status};
use crate::{
    Cli, Command, DecodeArgs, DecodeFlags, EvaluateArgs, ModelDemoArgs, StatsArgs, SynthArgs,
    ValidateArgs,
};

pub fn run(cli: Cli) -> anyhow::Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(input("thread count must be positive"));
        }
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let d = Defaults::load(cli.defaults.as_deref())?;
    match cli.command {
        Command::Evaluate(a) => cmd_evaluate(a, &d),
        Command::Decode(a) => cmd_decode(a, &d),
        Command::Validate(a) => cmd_validate(a, &d),
        Command::Stats(a) => cmd_stats(a, &d),
        Command::Synth(a) => cmd_synth(a, &d),
        Command::ModelDemo(a) => cmd_model_demo(a, &d),
    }
}

// --- helpers ---------------------------------------------------------------

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let res = (|| {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, contents)
    })();
    res.map_err(|e| Fail(Status::Internal, format!("writing {}: {e}", path.display())).into())
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).map_err(|e| {
        Fail(
            Status::Internal,
            format!("creating {}: {e}", path.display()),
        )
        .into()
    })
}

/// Write failures are ours, not the caller's input.
fn internal_io(e: sceneseg::Error, path: &Path) -> anyhow::Error {
    Fail(Status::Internal, format!("writing {}: {e}", path.display())).into()
}

fn taxonomy(flag: &Option<PathBuf>, d: &Defaults) -> anyhow::Result<Taxonomy> {
    match flag.as_ref().or(d.taxonomy.as_ref()) {
        Some(p) => Taxonomy::load(p).with_context(|| format!("taxonomy {}", p.display())),
        None => Ok(Taxonomy::bundled()),
    }
}

fn load_annotations(path: &Path) -> anyhow::Result<DatasetSplit> {
    parse_annotations(&read(path)?).with_context(|| format!("annotations {}", path.display()))
}

fn decode_config(flags: &DecodeFlags, d: &Defaults) -> anyhow::Result<DecodeConfig> {
    let base = DecodeConfig::default();
    Ok(DecodeConfig {
        mode: pick_parsed(flags.mode, &d.mode, "mode")?.unwrap_or(base.mode),
        thr: flags.thr.or(d.thr).unwrap_or(base.thr),
        nms_window_s: flags
            .nms_window
            .or(d.nms_window)
            .unwrap_or(base.nms_window_s),
    })
}

/// Files in `dir` ending in `suffix`, as (stem, path) sorted by stem.
fn list_by_suffix(dir: &Path, suffix: &str) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry
            .with_context(|| format!("listing {}", dir.display()))?
            .path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix(suffix) {
            if !stem.is_empty() && path.is_file() {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn versioned_json<T: Serialize>(body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })
    .expect("report serializes");
    s.push('\n');
    s
}

fn write_report(dir: &Path, report: &EvaluationReport) -> anyhow::Result<()> {
    write(&dir.join("report.json"), report.to_json())?;
    write(&dir.join("report.csv"), report.to_csv())
}

// --- evaluate --------------------------------------------------------------

fn cmd_evaluate(a: EvaluateArgs, d: &Defaults) -> anyhow::Result<Status> {
    let tax = taxonomy(&a.taxonomy, d)?;
    let gt = load_annotations(&a.gt)?;
    let bytes = read(&a.pred)?;
    let preds = if bytes.iter().all(u8::is_ascii_whitespace) {
        Vec::new()
    } else {
        parse_predictions(&bytes, &tax)
            .with_context(|| format!("predictions {}", a.pred.display()))?
    };
    let strategy = pick_parsed(a.f1_strategy, &d.f1_strategy, "f1_strategy")?.unwrap_or_default();
    let report = evaluate(&gt, &preds, &tax, strategy)?;
    print!("{}", report.to_pretty());
    if let Some(dir) = &a.out {
        write_report(dir, &report)?;
    }
    Ok(Status::Ok)
}

// --- decode ----------------------------------------------------------------

fn decode_all(
    outputs: &[(String, FrameOutputs)],
    cfg: &DecodeConfig,
) -> anyhow::Result<Vec<PredictedSceneSet>> {
    outputs
        .par_iter()
        .map(|(id, out)| decode_video(out, cfg, id).with_context(|| format!("decoding {id}")))
        .collect()
}

fn cmd_decode(a: DecodeArgs, d: &Defaults) -> anyhow::Result<Status> {
    let cfg = decode_config(&a.decode, d)?;
    let files = list_by_suffix(&a.outputs_dir, ".bin")?;
    if files.is_empty() {
        eprintln!("warning: no .bin files in {}", a.outputs_dir.display());
    }
    let outputs: Vec<(String, FrameOutputs)> = files
        .par_iter()
        .map(|(id, path)| {
            let out = load_frame_outputs(path)
                .with_context(|| format!("frame outputs {}", path.display()))?;
            Ok((id.clone(), out))
        })
        .collect::<anyhow::Result<_>>()?;
    let preds = decode_all(&outputs, &cfg)?;
    write(&a.out, serialize_predictions(&preds))?;
    let segments: usize = preds.iter().map(|p| p.segments.len()).sum();
    println!(
        "decoded {} videos into {segments} segments -> {}",
        preds.len(),
        a.out.display()
    );
    Ok(Status::Ok)
}

// --- validate --------------------------------------------------------------

#[derive(Serialize)]
struct VideoViolations<'a> {
    video_id: &'a str,
    violations: &'a [Violation],
}

#[derive(Serialize)]
struct PreviewMove<'a> {
    video_id: &'a str,
    #[serde(flatten)]
    mv: &'a BoundaryMove,
}

#[derive(Serialize)]
struct PreviewWarning<'a> {
    video_id: &'a str,
    #[serde(flatten)]
    warning: &'a SnapWarning,
}

#[derive(Serialize)]
struct SnapPreview<'a> {
    eps_s: f64,
    moves: Vec<PreviewMove<'a>>,
    warnings: Vec<PreviewWarning<'a>>,
    /// Videos not previewed: no shot list, or structural violations.
    skipped: Vec<&'a str>,
}

#[derive(Serialize)]
struct LintReport<'a> {
    num_videos: usize,
    num_violations: usize,
    videos: Vec<VideoViolations<'a>>,
    snap_preview: Option<SnapPreview<'a>>,
}

fn cmd_validate(a: ValidateArgs, d: &Defaults) -> anyhow::Result<Status> {
    let tax = taxonomy(&a.taxonomy, d)?;
    let split = parse_annotations_lenient(&read(&a.ann)?)
        .with_context(|| format!("annotations {}", a.ann.display()))?;
    let reports: Vec<_> = split
        .annotations
        .iter()
        .map(|ann| validate_annotation(ann, &tax))
        .collect();
    let num_violations: usize = reports.iter().map(|r| r.violations.len()).sum();
    for r in &reports {
        for v in &r.violations {
            println!("{}: {v}", r.video_id);
        }
    }
    println!(
        "{num_violations} violations in {} videos",
        split.annotations.len()
    );

    let mut outcomes = Vec::new();
    let mut skipped = Vec::new();
    let mut eps = DEFAULT_SNAP_EPS_S;
    if let Some(path) = &a.shots {
        eps = a.snap_eps.or(d.snap_eps).unwrap_or(DEFAULT_SNAP_EPS_S);
        let shots =
            parse_shots(&read(path)?).with_context(|| format!("shots {}", path.display()))?;
        let by_id: BTreeMap<&str, _> = shots.iter().map(|s| (s.video_id.as_str(), s)).collect();
        for (ann, rep) in split.annotations.iter().zip(&reports) {
            let structural = rep.violations.iter().any(|v| {
                !matches!(
                    v,
                    Violation::UnknownLabel { .. }
                        | Violation::MutualExclusion { .. }
                        | Violation::EmptyLabels { .. }
                )
            });
            match by_id.get(ann.video_id.as_str()) {
                Some(s) if !structural => {
                    outcomes.push((ann.video_id.as_str(), snap_to_shots(ann, s, eps)?))
                }
                _ => skipped.push(ann.video_id.as_str()),
            }
        }
        let moves: usize = outcomes.iter().map(|(_, o)| o.moves.len()).sum();
        println!("\nsnap preview (eps {eps} s, nothing written): {moves} boundaries would move");
        for (id, o) in &outcomes {
            for m in &o.moves {
                println!(
                    "  {id} boundary {}: {:.3} -> {:.3} ({:+.3} s)",
                    m.boundary,
                    m.from_s,
                    m.to_s,
                    m.to_s - m.from_s
                );
            }
            for w in &o.warnings {
                println!(
                    "  {id} boundary {}: kept at {:.3}, {}",
                    w.boundary, w.at_s, w.reason
                );
            }
        }
        if !skipped.is_empty() {
            println!("  not previewed: {}", skipped.join(", "));
        }
    }

    if let Some(out) = &a.out {
        let report = LintReport {
            num_videos: split.annotations.len(),
            num_violations,
            videos: reports
                .iter()
                .filter(|r| !r.is_valid())
                .map(|r| VideoViolations {
                    video_id: &r.video_id,
                    violations: &r.violations,
                })
                .collect(),
            snap_preview: a.shots.as_ref().map(|_| SnapPreview {
                eps_s: eps,
                moves: outcomes
                    .iter()
                    .flat_map(|(id, o)| {
                        o.moves
                            .iter()
                            .map(move |mv| PreviewMove { video_id: id, mv })
                    })
                    .collect(),
                warnings: outcomes
                    .iter()
                    .flat_map(|(id, o)| {
                        o.warnings.iter().map(move |warning| PreviewWarning {
                            video_id: id,
                            warning,
                        })
                    })
                    .collect(),
                skipped: skipped.clone(),
            }),
        };
        write(out, versioned_json(&report))?;
    }
    Ok(if num_violations == 0 {
        Status::Ok
    } else {
        Status::Validation
    })
}

// --- stats -----------------------------------------------------------------

fn cmd_stats(a: StatsArgs, d: &Defaults) -> anyhow::Result<Status> {
    let tax = taxonomy(&a.taxonomy, d)?;
    let split = load_annotations(&a.ann)?;
    let stats: StatsReport = dataset_stats(&split, &tax);
    print!("{}", stats.to_pretty());
    if let Some(dir) = &a.out {
        write(&dir.join("stats.json"), versioned_json(&stats))?;
        let csv = stats.to_csv();
        let (header, rest) = csv.split_once('\n').expect("csv has a header");
        write(
            &dir.join("stats.csv"),
            format!("{header}\nsummary,schema_version,{SCHEMA_VERSION}\n{rest}"),
        )?;
    }
    Ok(Status::Ok)
}

// --- synth -----------------------------------------------------------------

fn cmd_synth(a: SynthArgs, d: &Defaults) -> anyhow::Result<Status> {
    let mut cfg = match &a.params {
        Some(p) => {
            let text = String::from_utf8(read(p)?)
                .map_err(|_| input(format!("{} is not UTF-8", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| input(format!("synth params {}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.seed.or(d.seed) {
        cfg.seed = v;
    }
    if let Some(v) = a.num_videos.or(d.num_videos) {
        cfg.num_videos = v;
    }
    if let Some(v) = a.feature_noise.or(d.feature_noise) {
        cfg.feature_noise = v;
    }
    if let Some(v) = a.label_noise.or(d.label_noise) {
        cfg.label_noise = v;
    }
    let tax = Taxonomy::bundled();
    let corpus = gen_corpus(&cfg, &tax)?;

    let out = &a.out;
    create_dir(out)?;
    write(
        &out.join("annotations.json"),
        serialize_annotations(&corpus.split),
    )?;
    write(&out.join("shots.json"), serialize_shots(&corpus.shots))?;
    write(
        &out.join("synth.toml"),
        toml::to_string(&cfg).map_err(|e| Fail(Status::Internal, e.to_string()))?,
    )?;
    let (fdir, odir) = (out.join("features"), out.join("outputs"));
    create_dir(&fdir)?;
    create_dir(&odir)?;
    corpus
        .split
        .annotations
        .par_iter()
        .zip(&corpus.features)
        .zip(&corpus.outputs)
        .try_for_each(|((ann, f), o)| -> anyhow::Result<()> {
            let id = &ann.video_id;
            for (kind, m) in [
                (ContainerKind::Frame, &f.frame),
                (ContainerKind::Audio, &f.audio),
                (ContainerKind::Text, &f.text),
            ] {
                let p = fdir.join(format!("{id}.{}.bin", kind.tag()));
                save_matrix(&p, kind, m, f.fps, f.duration_s).map_err(|e| internal_io(e, &p))?;
            }
            let p = odir.join(format!("{id}.bin"));
            save_frame_outputs(&p, o).map_err(|e| internal_io(e, &p))
        })?;
    println!(
        "wrote {} videos ({} scenes, seed {}) to {}",
        corpus.split.annotations.len(),
        corpus
            .split
            .annotations
            .iter()
            .map(|a| a.scenes.len())
            .sum::<usize>(),
        cfg.seed,
        out.display()
    );
    Ok(Status::Ok)
}

// --- model demo ------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoConfig {
    model: Option<ModelConfig>,
    fit: Option<FitConfig>,
}

fn load_matrix_kind(path: &Path, kind: ContainerKind) -> anyhow::Result<(Header, Array2<f64>)> {
    let (h, m) = load_matrix(path).with_context(|| format!("features {}", path.display()))?;
    if h.kind != kind {
        return Err(input(format!(
            "{} holds {:?} data, expected {:?}",
            path.display(),
            h.kind,
            kind
        )));
    }
    Ok((h, m))
}

fn load_bundle(dir: &Path, id: &str) -> anyhow::Result<FeatureBundle> {
    let path = |kind: ContainerKind| dir.join(format!("{id}.{}.bin", kind.tag()));
    let (h, frame) = load_matrix_kind(&path(ContainerKind::Frame), ContainerKind::Frame)?;
    let (_, audio) = load_matrix_kind(&path(ContainerKind::Audio), ContainerKind::Audio)?;
    let (_, text) = load_matrix_kind(&path(ContainerKind::Text), ContainerKind::Text)?;
    FeatureBundle::new(frame, audio, text, h.fps, h.duration_s)
        .with_context(|| format!("features of {id}"))
}

fn cmd_model_demo(a: ModelDemoArgs, d: &Defaults) -> anyhow::Result<Status> {
    let tax = taxonomy(&a.taxonomy, d)?;
    let decode = decode_config(&a.decode, d)?;
    let demo: DemoConfig = match &a.config {
        Some(p) => {
            let text = String::from_utf8(read(p)?)
                .map_err(|_| input(format!("{} is not UTF-8", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| input(format!("model config {}: {e}", p.display())))?
        }
        None => DemoConfig::default(),
    };
    let split = a.ann.as_deref().map(load_annotations).transpose()?;
    let ids: Vec<String> = match &split {
        Some(s) => s.annotations.iter().map(|a| a.video_id.clone()).collect(),
        None => list_by_suffix(&a.features_dir, ".frame.bin")?
            .into_iter()
            .map(|(id, _)| id)
            .collect(),
    };
    if ids.is_empty() {
        return Err(input(format!(
            "no videos found for {}",
            a.features_dir.display()
        )));
    }
    let bundles: Vec<FeatureBundle> = ids
        .par_iter()
        .map(|id| load_bundle(&a.features_dir, id))
        .collect::<anyhow::Result<_>>()?;
    let widths = (
        bundles[0].frame.ncols(),
        bundles[0].audio.ncols(),
        bundles[0].text.ncols(),
    );

    let (cfg, mut w) = match &a.weights {
        Some(p) => {
            if demo.model.is_some() {
                return Err(input(
                    "--weights carries its own model config; drop the [model] table",
                ));
            }
            let (cfg, w) =
                ModelWeights::load(p).with_context(|| format!("weights {}", p.display()))?;
            if (cfg.frame_dim, cfg.audio_dim, cfg.text_dim) != widths
                || cfg.num_classes != tax.num_classes()
            {
                return Err(input(format!(
                    "weights expect widths {:?} and {} classes; data has {widths:?} and {} classes",
                    (cfg.frame_dim, cfg.audio_dim, cfg.text_dim),
                    cfg.num_classes,
                    tax.num_classes()
                )));
            }
            (cfg, w)
        }
        None => {
            // Widths and class count always come from the data.
            let cfg = ModelConfig {
                frame_dim: widths.0,
                audio_dim: widths.1,
                text_dim: widths.2,
                num_classes: tax.num_classes(),
                ..demo.model.unwrap_or_default()
            };
            cfg.check()
                .map_err(|e| input(format!("model config: {e}")))?;
            let w = ModelWeights::init(&cfg)?;
            (cfg, w)
        }
    };
    let fit = demo.fit.unwrap_or_default();
    let anns = split.as_ref().map(|s| s.annotations.as_slice());
    let (outputs, fit_report) = fit_and_predict(&bundles, anns, &cfg, &mut w, &fit)?;

    let out = &a.out;
    let odir = out.join("outputs");
    create_dir(&odir)?;
    let named: Vec<(String, FrameOutputs)> = ids.into_iter().zip(outputs).collect();
    for (id, o) in &named {
        let p = odir.join(format!("{id}.bin"));
        save_frame_outputs(&p, o).map_err(|e| internal_io(e, &p))?;
    }
    let wdir = out.join("weights");
    w.save(&wdir, &cfg).map_err(|e| internal_io(e, &wdir))?;
    let preds = decode_all(&named, &decode)?;
    write(&out.join("predictions.json"), serialize_predictions(&preds))?;
    println!(
        "{} videos, {} stages x {} layers",
        named.len(),
        cfg.stages,
        cfg.layers
    );

    if let (Some(split), Some(fr)) = (&split, &fit_report) {
        write(&out.join("fit.json"), versioned_json::<FitReport>(fr))?;
        for s in &fr.stages {
            println!(
                "stage {}: cls {:.4} -> {:.4}, boundary {:.4} -> {:.4}, offset {:.5} -> {:.5}",
                s.stage,
                s.classification.loss_before,
                s.classification.loss_after,
                s.boundary.loss_before,
                s.boundary.loss_after,
                s.offset.loss_before,
                s.offset.loss_after
            );
        }
        let strategy = pick_parsed(None, &d.f1_strategy, "f1_strategy")?.unwrap_or_default();
        let report = evaluate(split, &preds, &tax, strategy)?;
        print!("{}", report.to_pretty());
        write_report(out, &report)?;
    }
    Ok(Status::Ok)
}
