use std::io::Write;
use std::path::Path;

use lofi_core::align::{self, DropReport};
use lofi_core::csi::{self, CompletionReport, CsiSequence, IngestReport};
use lofi_core::detection::{self, LabelStats};
use lofi_core::features::{self, ErrorSummary, EvalConfig, EvalReport};
use lofi_core::geometry::{self, AnchorFile, AnchorSet, Homography, HomographyFile};
use lofi_core::pipeline::{self, PipelineOptions, RunReport};
use lofi_core::simulate::{self, Scenario};
use lofi_core::{Error, LabeledFrame};
use serde::Serialize;

use crate::config::{pick, positive, require, PipelineConfig};
use crate::files::{io_at, open, print_json, read_json, write_json, write_with};
use crate::{Cli, Command, LabelingArgs, StreamArgs};

/// Row spacing of the CDF table printed to stdout; `--cdf-out` keeps every row.
const CDF_PRINT_STEP_CM: usize = 10;

struct Ctx {
    cfg: PipelineConfig,
    quiet: bool,
}

impl Ctx {
    fn report<T: Serialize>(&self, value: &T) {
        if !self.quiet {
            print_json(value);
        }
    }

    fn stream(&self, args: &StreamArgs) -> Result<(f64, usize), Error> {
        let rate = positive("csi rate", pick(args.rate, &self.cfg.csi_rate, csi::DEFAULT_RATE_HZ))?;
        let s = pick(args.subcarriers, &self.cfg.subcarriers, csi::DEFAULT_SUBCARRIERS);
        if s == 0 {
            return Err(Error::Config("subcarriers must be at least 1".into()));
        }
        Ok((rate, s))
    }

    fn options(&self, stream: &StreamArgs, labeling: &LabelingArgs, target: Option<String>) -> Result<PipelineOptions, Error> {
        let defaults = PipelineOptions::default();
        let (csi_rate, subcarriers) = self.stream(stream)?;
        let camera_rate = positive(
            "camera rate",
            pick(labeling.camera_rate, &self.cfg.camera_rate, defaults.camera_rate),
        )?;
        let max_gap = labeling.max_gap.or(self.cfg.max_gap);
        if let Some(g) = max_gap {
            positive("max gap", g)?;
        }
        Ok(PipelineOptions {
            target_label: pick(target, &self.cfg.target_label, defaults.target_label),
            person_id: pick(labeling.person_id.clone(), &self.cfg.person_id, defaults.person_id),
            camera_rate,
            csi_rate,
            subcarriers,
            max_gap,
        })
    }

    fn eval_config(&self, window: Option<usize>, stride: Option<usize>, mode: Option<crate::ModeArg>) -> EvalConfig {
        let d = EvalConfig::default();
        EvalConfig {
            window: pick(window, &self.cfg.window, d.window),
            stride: pick(stride, &self.cfg.stride, d.stride),
            mode: pick(mode.map(Into::into), &self.cfg.mode, d.mode),
            region_x: pick(None, &self.cfg.region_x, d.region_x),
            region_y: pick(None, &self.cfg.region_y, d.region_y),
            ..d
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Error> {
    if let Command::Simulate { out_dir } = &cli.command {
        let mut scenario: Scenario = match &cli.config {
            Some(path) => read_config(path)?,
            None => Scenario::default(),
        };
        if let Some(seed) = cli.seed {
            scenario.seed = seed;
        }
        return simulate(&scenario, out_dir, cli.quiet);
    }
    let cfg = match &cli.config {
        Some(path) => read_config(path)?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx { cfg, quiet: cli.quiet };
    match cli.command {
        Command::Calibrate { anchors, out } => calibrate(&ctx, &require(anchors, &ctx.cfg.anchors, "anchors")?, &out),
        Command::Label {
            detections,
            homography,
            target_label,
            out,
        } => label(
            &ctx,
            &require(detections, &ctx.cfg.detections, "detections")?,
            &require(homography, &ctx.cfg.homography, "homography")?,
            &pick(target_label, &ctx.cfg.target_label, detection::DEFAULT_TARGET_LABEL.into()),
            &out,
        ),
        Command::Complete { csi, stream, out } => {
            let (rate, s) = ctx.stream(&stream)?;
            complete(&ctx, &require(csi, &ctx.cfg.csi, "csi")?, rate, s, &out)
        }
        Command::Align {
            csi,
            labels,
            stream,
            labeling,
            out,
            out_csv,
        } => {
            let opts = ctx.options(&stream, &labeling, None)?;
            align_cmd(&ctx, &require(csi, &ctx.cfg.csi, "csi")?, &labels, &opts, &out, out_csv.as_deref())
        }
        Command::Features {
            dataset,
            window,
            stride,
            mode,
            out,
        } => features_cmd(&ctx, &dataset, &ctx.eval_config(window, stride, mode), &out),
        Command::Eval {
            dataset,
            window,
            stride,
            mode,
            split,
            classes,
            knn,
            report,
            cdf_out,
        } => {
            let d = EvalConfig::default();
            let cfg = EvalConfig {
                split: pick(split, &ctx.cfg.split, d.split),
                classes: pick(classes, &ctx.cfg.classes, d.classes),
                k: pick(knn, &ctx.cfg.knn, d.k),
                ..ctx.eval_config(window, stride, mode)
            };
            eval(&ctx, &dataset, &cfg, report.as_deref(), cdf_out.as_deref())
        }
        Command::EvalLabels { produced, truth } => eval_labels(&ctx, &produced, &truth),
        Command::Pipeline {
            anchors,
            detections,
            csi,
            target_label,
            stream,
            labeling,
            out,
            out_csv,
            report,
        } => {
            let opts = ctx.options(&stream, &labeling, target_label)?;
            let inputs = PipelineInputs {
                anchors: require(anchors, &ctx.cfg.anchors, "anchors")?,
                detections: require(detections, &ctx.cfg.detections, "detections")?,
                csi: require(csi, &ctx.cfg.csi, "csi")?,
            };
            pipeline_cmd(&ctx, &inputs, &opts, &out, out_csv.as_deref(), &report)
        }
        Command::Simulate { .. } => unreachable!("handled above"),
    }
}

/// A config that does not parse is a configuration error, not a data error.
fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    read_json(path).map_err(|e| match e {
        Error::Json { context, source } => Error::Config(format!("{context}: {source}")),
        other => other,
    })
}

fn load_anchors(path: &Path) -> Result<AnchorSet, Error> {
    let file: AnchorFile = read_json(path)?;
    Ok(AnchorSet::try_from(file)?)
}

fn load_homography(path: &Path) -> Result<Homography, Error> {
    let file: HomographyFile = read_json(path)?;
    Ok(Homography::try_from(file)?)
}

fn calibrate(ctx: &Ctx, anchors: &Path, out: &Path) -> Result<(), Error> {
    let h = geometry::solve_homography(&load_anchors(anchors)?)?;
    let file = HomographyFile::from(&h);
    write_json(out, &file)?;
    ctx.report(&serde_json::json!({ "matrix": file.matrix }));
    Ok(())
}

fn label(ctx: &Ctx, detections: &Path, homography: &Path, target: &str, out: &Path) -> Result<(), Error> {
    let frames = detection::read_detections(open(detections)?)?;
    let h = load_homography(homography)?;
    let stream = detection::label_stream(&frames, &h, target);
    write_with(out, |w| detection::write_labels(w, &stream.entries).map_err(io_at(out)))?;
    ctx.report(&stream.stats);
    Ok(())
}

#[derive(Serialize)]
struct CompleteReport {
    ingest: IngestReport,
    completion: CompletionReport,
}

fn read_sequence(path: &Path, rate: f64, subcarriers: usize) -> Result<(CsiSequence, IngestReport), Error> {
    let rows = csi::read_csv(open(path)?, subcarriers)?;
    Ok(csi::ingest(rows, rate, subcarriers)?)
}

fn complete(ctx: &Ctx, input: &Path, rate: f64, subcarriers: usize, out: &Path) -> Result<(), Error> {
    let (seq, ingest) = read_sequence(input, rate, subcarriers)?;
    let (done, completion) = csi::complete(&seq)?;
    write_with(out, |w| Ok(csi::write_csv(w, done.packets(), subcarriers, true)?))?;
    ctx.report(&CompleteReport { ingest, completion });
    Ok(())
}

#[derive(Serialize)]
struct AlignReport {
    ingest: IngestReport,
    max_gap: f64,
    labeled: usize,
    drops: DropReport,
}

fn write_dataset(frames: &[LabeledFrame], subcarriers: usize, out: &Path, out_csv: Option<&Path>) -> Result<(), Error> {
    write_with(out, |w| align::write_dataset_jsonl(w, frames).map_err(io_at(out)))?;
    if let Some(path) = out_csv {
        write_with(path, |w| Ok(align::write_dataset_csv(w, frames, subcarriers)?))?;
    }
    Ok(())
}

fn align_cmd(
    ctx: &Ctx,
    csi_path: &Path,
    labels_path: &Path,
    opts: &PipelineOptions,
    out: &Path,
    out_csv: Option<&Path>,
) -> Result<(), Error> {
    let (seq, ingest) = read_sequence(csi_path, opts.csi_rate, opts.subcarriers)?;
    let labels = detection::read_labels(open(labels_path)?)?;
    let max_gap = opts.effective_max_gap();
    let (frames, drops) = align::align(&seq, &labels, &opts.person_id, max_gap)?;
    write_dataset(&frames, opts.subcarriers, out, out_csv)?;
    ctx.report(&AlignReport {
        ingest,
        max_gap,
        labeled: frames.len(),
        drops,
    });
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Vec<LabeledFrame>, Error> {
    Ok(align::read_dataset_jsonl(open(path)?)?)
}

#[derive(Serialize)]
struct FeatureLine<'a> {
    start: f64,
    x: f64,
    y: f64,
    rows: usize,
    cols: usize,
    /// Row-major.
    values: &'a [f64],
}

fn features_cmd(ctx: &Ctx, dataset: &Path, cfg: &EvalConfig, out_dir: &Path) -> Result<(), Error> {
    let frames = read_dataset(dataset)?;
    let windows = features::windows(&frames, cfg.window, cfg.stride)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let path = out_dir.join("features.jsonl");
    let mut shape = (0, 0);
    write_with(&path, |w| {
        for (window, target) in &windows {
            // row-major from nalgebra's column-major storage
            let m = cfg.mode.extract(window).transpose();
            shape = (m.ncols(), m.nrows());
            let line = FeatureLine {
                start: window.start(),
                x: target.x,
                y: target.y,
                rows: m.ncols(),
                cols: m.nrows(),
                values: m.as_slice(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(|e| Error::json(format!("writing {}", path.display()), e))?;
            w.write_all(b"\n").map_err(io_at(&path))?;
        }
        Ok(())
    })?;
    ctx.report(&serde_json::json!({
        "windows": windows.len(),
        "mode": cfg.mode,
        "window": cfg.window,
        "stride": cfg.stride,
        "shape": [shape.0, shape.1],
        "out": path,
    }));
    Ok(())
}

fn write_cdf(path: &Path, summary: &ErrorSummary) -> Result<(), Error> {
    write_with(path, |w| {
        writeln!(w, "error_cm,fraction").map_err(io_at(path))?;
        for p in &summary.cdf {
            writeln!(w, "{},{}", p.error_cm, p.fraction).map_err(io_at(path))?;
        }
        Ok(())
    })
}

fn print_eval(cfg: &EvalConfig, r: &EvalReport) {
    let line = |name: &str, s: &ErrorSummary| {
        println!(
            "{name:<10} mean {:.2} cm  std {:.2} cm  max {:.2} cm",
            s.mean * 100.0,
            s.std * 100.0,
            s.max * 100.0
        )
    };
    println!("windows    train {}  test {}", r.train_windows, r.test_windows);
    line(&format!("k-NN k={}", cfg.k), &r.knn);
    line("constant", &r.constant_center);
    if let (Some(knn), Some(constant)) = (r.knn_accuracy, r.constant_center_accuracy) {
        println!(
            "accuracy   {} classes  k-NN {:.1}%  constant {:.1}%",
            cfg.classes,
            knn * 100.0,
            constant * 100.0
        );
    }
    println!("error_cm,fraction");
    for p in r.knn.cdf.iter().filter(|p| (p.error_cm as usize).is_multiple_of(CDF_PRINT_STEP_CM)) {
        println!("{},{:.4}", p.error_cm, p.fraction);
    }
}

fn eval(ctx: &Ctx, dataset: &Path, cfg: &EvalConfig, report: Option<&Path>, cdf_out: Option<&Path>) -> Result<(), Error> {
    let frames = read_dataset(dataset)?;
    let r = features::evaluate(&frames, cfg)?;
    if let Some(path) = report {
        write_json(path, &r)?;
    }
    if let Some(path) = cdf_out {
        write_cdf(path, &r.knn)?;
    }
    if !ctx.quiet {
        print_eval(cfg, &r);
    }
    Ok(())
}

fn eval_labels(ctx: &Ctx, produced: &Path, truth: &Path) -> Result<(), Error> {
    let entries = detection::read_labels(open(produced)?)?;
    let truth = simulate::read_truth(open(truth)?)?;
    let points: Vec<_> = entries
        .iter()
        .filter_map(|e| e.world.map(|w| (e.timestamp, w)))
        .collect();
    let summary = simulate::eval_labels(&points, &truth)?;
    ctx.report(&serde_json::json!({
        "count": summary.count,
        "unlabeled": entries.len() - points.len(),
        "mean": summary.mean,
        "std": summary.std,
        "max": summary.max,
        "cdf": summary.cdf,
    }));
    Ok(())
}

fn simulate(scenario: &Scenario, out_dir: &Path, quiet: bool) -> Result<(), Error> {
    let sim = simulate::generate(scenario)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let det = out_dir.join("detections.jsonl");
    write_with(&det, |w| detection::write_detections(w, &sim.frames).map_err(io_at(&det)))?;
    write_with(&out_dir.join("csi.csv"), |w| {
        Ok(csi::write_csv(w, &sim.packets, scenario.subcarriers, false)?)
    })?;
    let truth = out_dir.join("truth.jsonl");
    write_with(&truth, |w| simulate::write_truth(w, &sim.truth).map_err(io_at(&truth)))?;
    let anchors = scenario.corner_anchors()?;
    write_json(&out_dir.join("anchors.json"), &anchors)?;
    let truth_h = HomographyFile {
        matrix: scenario.true_homography()?.entries(),
        anchors: Some(anchors),
    };
    write_json(&out_dir.join("homography.json"), &truth_h)?;
    write_json(&out_dir.join("scenario.json"), scenario)?;
    if !quiet {
        print_json(&serde_json::json!({
            "frames": sim.frames.len(),
            "missed_frames": sim.truth.missed_frames(),
            "packets": sim.packets.len(),
            "dropped_packets": sim.truth.dropped_packets(),
            "interior_dropped_packets": sim.truth.interior_dropped_packets(),
            "max_speed": sim.truth.max_speed(),
        }));
    }
    Ok(())
}

struct PipelineInputs {
    anchors: std::path::PathBuf,
    detections: std::path::PathBuf,
    csi: std::path::PathBuf,
}

#[derive(Serialize)]
struct PipelineReport<'a> {
    homography: [f64; 9],
    /// Completed packets not in the dataset, all reasons.
    dropped: usize,
    filled: u64,
    #[serde(flatten)]
    run: &'a RunReport,
}

fn pipeline_cmd(
    ctx: &Ctx,
    inputs: &PipelineInputs,
    opts: &PipelineOptions,
    out: &Path,
    out_csv: Option<&Path>,
    report_path: &Path,
) -> Result<(), Error> {
    let h = geometry::solve_homography(&load_anchors(&inputs.anchors)?)?;
    let frames = detection::read_detections(open(&inputs.detections)?)?;
    let rows = csi::read_csv(open(&inputs.csi)?, opts.subcarriers)?;
    let output = pipeline::run(&h, &frames, rows, opts)?;
    write_dataset(&output.dataset, opts.subcarriers, out, out_csv)?;
    let run = &output.report;
    let report = PipelineReport {
        homography: h.entries(),
        dropped: run.drops.total(),
        filled: run.completion.filled,
        run,
    };
    write_json(report_path, &report)?;
    ctx.report(&Summary::from(run));
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    packets: usize,
    filled: u64,
    labeled: usize,
    dropped: usize,
    labels: &'a LabelStats,
    conserved: bool,
}

impl<'a> From<&'a RunReport> for Summary<'a> {
    fn from(r: &'a RunReport) -> Self {
        Summary {
            packets: r.completion.output_packets,
            filled: r.completion.filled,
            labeled: r.labeled,
            dropped: r.drops.total(),
            labels: &r.labels,
            conserved: r.is_conserved(),
        }
    }
}
