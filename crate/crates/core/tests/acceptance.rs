//! Exit-criteria suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::time::{Duration, Instant};

use lofi_core::align::{align, nearest_label};
use lofi_core::csi::{complete, count_lost, CsiPacket, CsiSequence};
use lofi_core::detection::{label_stream, LabelEntry};
use lofi_core::features::{self, correlation_matrix, standardize, windows, AmplitudeWindow, EvalConfig};
use lofi_core::geometry::{solve_homography, AnchorSet, PixelPoint, WorldPoint};
use lofi_core::pipeline::{self, PipelineOptions};
use lofi_core::simulate::{eval_labels, generate, synthetic_csi, Scenario};
use lofi_core::LabeledFrame;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CAMERA_HZ: f64 = 26.0;
const CSI_HZ: f64 = 100.0;
const REGION_X: f64 = 1.8;
const REGION_Y: f64 = 4.8;
const SESSION_S: f64 = 300.0;
const MAX_SPEED: f64 = 1.5;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn session_scenario() -> Scenario {
    Scenario {
        region_x: REGION_X,
        region_y: REGION_Y,
        duration: SESSION_S,
        camera_rate: CAMERA_HZ,
        csi_rate: CSI_HZ,
        speed_min: 0.2,
        speed_max: MAX_SPEED,
        seed: 7,
        ..Scenario::default()
    }
}

fn options() -> PipelineOptions {
    PipelineOptions {
        camera_rate: CAMERA_HZ,
        csi_rate: CSI_HZ,
        person_id: "P1".into(),
        ..PipelineOptions::default()
    }
}

/// Corners of a rectangle at `origin` with `size`, each moved by up to 20 % of the size.
fn jittered_quad(rng: &mut ChaCha8Rng, origin: [f64; 2], size: [f64; 2]) -> [[f64; 2]; 4] {
    let base = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    base.map(|[a, b]| {
        let da = rng.random_range(-0.2..0.2);
        let db = rng.random_range(-0.2..0.2);
        [origin[0] + (a + da) * size[0], origin[1] + (b + db) * size[1]]
    })
}

fn homography_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let (mut worst_anchor, mut worst_roundtrip) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let pw = rng.random_range(100.0..500.0);
        let ph = rng.random_range(100.0..400.0);
        let origin = [rng.random_range(0.0..100.0), rng.random_range(0.0..80.0)];
        let pixel = jittered_quad(&mut rng, origin, [pw, ph]);
        let ww = rng.random_range(0.5..10.0);
        let wh = rng.random_range(0.5..10.0);
        let origin = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let world = jittered_quad(&mut rng, origin, [ww, wh]);
        let anchors = AnchorSet::new(
            pixel.map(|[u, v]| PixelPoint::new(u, v)),
            world.map(|[x, y]| WorldPoint::new(x, y)),
        )
        .map_err(|e| format!("anchor set rejected: {e}"))?;
        let h = solve_homography(&anchors).map_err(|e| format!("solve failed: {e}"))?;
        for (p, w) in anchors.pairs() {
            let got = h.apply(p).map_err(|e| e.to_string())?;
            worst_anchor = worst_anchor.max(got.distance(&w));
        }
        let inverse = h.invert().map_err(|e| e.to_string())?;
        for _ in 0..100 {
            // convex combination of the world anchors: strictly inside the quad
            let mut weights = [0.0; 4];
            for w in &mut weights {
                *w = rng.random_range(0.05..1.0);
            }
            let total: f64 = weights.iter().sum();
            let (x, y) = weights.iter().zip(&world).fold((0.0, 0.0), |(x, y), (w, p)| {
                (x + w / total * p[0], y + w / total * p[1])
            });
            let target = WorldPoint::new(x, y);
            let px = inverse.apply(PixelPoint::new(x, y)).map_err(|e| e.to_string())?;
            let back = h.apply(PixelPoint::new(px.x, px.y)).map_err(|e| e.to_string())?;
            worst_roundtrip = worst_roundtrip.max(back.distance(&target));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst_anchor <= 1e-6 && worst_roundtrip <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("max anchor error {worst_anchor:.2e} m, max round-trip {worst_roundtrip:.2e} m, {elapsed:.2?}"),
    )
}

fn lost_packet_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 100_000usize;
    let subcarriers = 52;
    let mut dropped_idx = Vec::new();
    let mut packets = Vec::with_capacity(n);
    for i in 0..n {
        // first and last are always received; losses outside them are invisible
        let drop = i > 0 && i + 1 < n && rng.random_bool(0.1);
        let ts = i as f64 / CSI_HZ;
        if drop {
            dropped_idx.push(ts);
            continue;
        }
        let p = WorldPoint::new((i % 180) as f64 / 100.0, (i % 480) as f64 / 100.0);
        packets.push(CsiPacket::new(ts, -40.0, synthetic_csi(p, subcarriers)));
    }
    let start = Instant::now();
    let seq = CsiSequence::new(packets, CSI_HZ, subcarriers).map_err(|e| e.to_string())?;
    let counted: u64 = seq
        .packets()
        .windows(2)
        .map(|w| count_lost(w[0].timestamp, w[1].timestamp, CSI_HZ).unwrap())
        .sum();
    let (done, report) = complete(&seq).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let inserted: Vec<f64> = done
        .packets()
        .iter()
        .filter(|p| p.interpolated)
        .map(|p| p.timestamp)
        .collect();
    let grid_ok = inserted.len() == dropped_idx.len()
        && inserted
            .iter()
            .zip(&dropped_idx)
            .all(|(a, b)| (a - b).abs() < 0.5 / CSI_HZ);
    check(
        counted == dropped_idx.len() as u64
            && report.filled == counted
            && inserted.len() as u64 == counted
            && grid_ok
            && elapsed < Duration::from_secs(5),
        format!(
            "dropped {}, counted {counted}, inserted {}, grid match {grid_ok}, {elapsed:.2?}",
            dropped_idx.len(),
            inserted.len()
        ),
    )
}

fn zero_noise_identity() -> Outcome {
    let sc = session_scenario();
    let start = Instant::now();
    let sim = generate(&sc).map_err(|e| e.to_string())?;
    let anchors = sc.corner_anchors().map_err(|e| e.to_string())?;
    let h = solve_homography(&anchors).map_err(|e| e.to_string())?;
    let out = pipeline::run(&h, &sim.frames, sim.packets.clone(), &options()).map_err(|e| e.to_string())?;
    let produced: Vec<_> = out.dataset.iter().map(|f| (f.timestamp, f.world)).collect();
    let summary = eval_labels(&produced, &sim.truth).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let bound = MAX_SPEED / (2.0 * CAMERA_HZ) + 1e-6;
    check(
        sim.truth.max_speed() <= MAX_SPEED + 1e-12
            && summary.mean <= bound
            && out.dataset.len() == sc.csi_packets()
            && elapsed < Duration::from_secs(10),
        format!(
            "mean {:.4} m, max {:.4} m (bound {bound:.4} m), {} rows labeled, {elapsed:.2?}",
            summary.mean,
            summary.max,
            out.dataset.len()
        ),
    )
}

fn noise_plausibility() -> Outcome {
    const TARGET_RMS_M: f64 = 0.12;
    let mut sc = session_scenario();
    sc.seed = 11;
    // Pick the pixel sigma from the mean squared Jacobian of pixel → world over the
    // visited ground points, so that the induced ground-plane RMS is TARGET_RMS_M.
    let clean = generate(&sc).map_err(|e| e.to_string())?;
    let h = sc.true_homography().map_err(|e| e.to_string())?;
    let mut jac_sq = 0.0;
    let step = 1e-3;
    for s in &clean.truth.camera {
        let px = h.apply_inverse(s.world).map_err(|e| e.to_string())?;
        let base = h.apply(px).map_err(|e| e.to_string())?;
        let du = h.apply(PixelPoint::new(px.u + step, px.v)).map_err(|e| e.to_string())?;
        let dv = h.apply(PixelPoint::new(px.u, px.v + step)).map_err(|e| e.to_string())?;
        jac_sq += ((du.x - base.x).powi(2) + (du.y - base.y).powi(2) + (dv.x - base.x).powi(2) + (dv.y - base.y).powi(2))
            / (step * step);
    }
    jac_sq /= clean.truth.camera.len() as f64;
    sc.pixel_noise_sigma = TARGET_RMS_M / jac_sq.sqrt();

    let noisy = generate(&sc).map_err(|e| e.to_string())?;
    let anchors = sc.corner_anchors().map_err(|e| e.to_string())?;
    let calibrated = solve_homography(&anchors).map_err(|e| e.to_string())?;
    let labels = label_stream(&noisy.frames, &calibrated, "person");
    let produced: Vec<_> = labels
        .entries
        .iter()
        .filter_map(|e| e.world.map(|w| (e.timestamp, w)))
        .collect();
    let summary = eval_labels(&produced, &noisy.truth).map_err(|e| e.to_string())?;
    let rms = (produced
        .iter()
        .map(|(t, p)| p.distance(&noisy.truth.position(*t)).powi(2))
        .sum::<f64>()
        / produced.len() as f64)
        .sqrt();
    let (lo, hi) = (0.1182 * 0.5, 0.1744 * 1.5);
    check(
        (lo..=hi).contains(&summary.mean),
        format!(
            "pixel sigma {:.2} px, ground RMS {:.4} m, mean error {:.4} m, band [{lo:.4}, {hi:.4}] m",
            sc.pixel_noise_sigma, rms, summary.mean
        ),
    )
}

fn alignment_bound() -> Outcome {
    const EPS: f64 = 1e-9;
    let mut sc = session_scenario();
    sc.jitter_sigma = 0.002;
    sc.loss_probability = 0.1;
    sc.seed = 3;
    let sim = generate(&sc).map_err(|e| e.to_string())?;

    // Gapless 26 Hz labels spanning the whole CSI capture.
    let labels: Vec<LabelEntry> = (-26..=(SESSION_S as i64 * 26 + 26))
        .map(|m| {
            let ts = m as f64 / CAMERA_HZ;
            LabelEntry {
                timestamp: ts,
                world: Some(sim.truth.position(ts)),
            }
        })
        .collect();
    let seq = lofi_core::csi::ingest(sim.packets.clone(), CSI_HZ, sc.subcarriers)
        .map_err(|e| e.to_string())?
        .0;
    let (done, _) = complete(&seq).map_err(|e| e.to_string())?;
    let (frames, drops) = align(&done, &labels, "P1", 2.0 / CAMERA_HZ).map_err(|e| e.to_string())?;
    let worst = frames.iter().map(|f| f.label_gap).fold(0.0, f64::max);
    let bound = 1.0 / (2.0 * CAMERA_HZ) + EPS;
    let mut ok = worst <= bound && frames.len() == done.len() && drops.total() == 0;
    let mut detail = format!("max label gap {worst:.5} s (bound {bound:.5} s)");

    // Conservation on a spread of pipeline runs, including stalls and misses.
    let h = solve_homography(&sc.corner_anchors().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let mut runs = 0;
    for (miss, loss, max_gap, stall) in [
        (0.0, 0.0, None, false),
        (0.2, 0.1, None, false),
        (0.5, 0.3, Some(0.02), true),
        (1.0, 0.0, None, false),
    ] {
        let mut s = sc.clone();
        s.miss_probability = miss;
        s.loss_probability = loss;
        s.duration = 60.0;
        let mut sim = generate(&s).map_err(|e| e.to_string())?;
        if stall {
            sim.frames.retain(|f| !(20.0..25.0).contains(&f.timestamp));
        }
        let opts = PipelineOptions {
            max_gap,
            ..options()
        };
        let out = pipeline::run(&h, &sim.frames, sim.packets, &opts).map_err(|e| e.to_string())?;
        let r = &out.report;
        ok &= r.is_conserved() && r.labeled + r.drops.total() == r.completion.output_packets;
        gap_ok(&out.dataset, &opts, &mut ok);
        runs += 1;
    }
    detail.push_str(&format!(", conservation exact on {runs} pipeline runs: {ok}"));
    check(ok, detail)
}

fn gap_ok(frames: &[LabeledFrame], opts: &PipelineOptions, ok: &mut bool) {
    *ok &= frames.iter().all(|f| f.label_gap <= opts.effective_max_gap());
}

fn feature_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut asym, mut neg_eig, mut idem, mut affine) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let t = rng.random_range(2..64);
        let s = rng.random_range(1..53);
        let m = DMatrix::from_fn(t, s, |_, _| rng.random_range(0.0..20.0));
        let w = AmplitudeWindow::new(m.clone(), 0.0).map_err(|e| e.to_string())?;
        let f = correlation_matrix(&w);
        asym = asym.max((&f - f.transpose()).amax());
        let min_eig = f.clone().symmetric_eigen().eigenvalues.min();
        neg_eig = neg_eig.max(-min_eig / f.norm());

        let z = standardize(&w);
        idem = idem.max((standardize(&z).matrix() - z.matrix()).amax());
        let a = rng.random_range(0.1..10.0);
        let b = rng.random_range(-10.0..10.0);
        let shifted = AmplitudeWindow::new(m.map(|v| a * v + b), 0.0).map_err(|e| e.to_string())?;
        affine = affine.max((standardize(&shifted).matrix() - z.matrix()).amax());
    }
    let mut counts_ok = true;
    let frame = |i: usize| LabeledFrame {
        timestamp: i as f64,
        world: WorldPoint::new(0.0, 0.0),
        person_id: "P".into(),
        rssi: 0.0,
        csi: vec![Complex64::new(1.0, 0.0)],
        interpolated: false,
        label_gap: 0.0,
    };
    let frames: Vec<_> = (0..300).map(frame).collect();
    for n in [2, 5, 99, 100, 101, 250, 300] {
        for (length, stride) in [(2, 1), (5, 5), (100, 25), (7, 3)] {
            if n >= length {
                let got = windows(&frames[..n], length, stride).map_err(|e| e.to_string())?.len();
                counts_ok &= got == (n - length) / stride + 1;
            }
        }
    }
    check(
        asym <= 1e-12 && neg_eig <= 1e-9 && idem <= 1e-9 && affine <= 1e-9 && counts_ok,
        format!(
            "asymmetry {asym:.1e}, min eig/|F| {:.1e}, idempotence {idem:.1e}, affine {affine:.1e}, counts exact {counts_ok}",
            -neg_eig
        ),
    )
}

fn baseline_sanity() -> Outcome {
    let mut sc = session_scenario();
    sc.seed = 21;
    let sim = generate(&sc).map_err(|e| e.to_string())?;
    let h = solve_homography(&sc.corner_anchors().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let out = pipeline::run(&h, &sim.frames, sim.packets, &options()).map_err(|e| e.to_string())?;
    let cfg = EvalConfig {
        classes: 6,
        ..EvalConfig::default()
    };
    let report = features::evaluate(&out.dataset, &cfg).map_err(|e| e.to_string())?;
    let improvement = 1.0 - report.knn.mean / report.constant_center.mean;
    check(
        improvement >= 0.30,
        format!(
            "k-NN mean {:.3} m vs constant {:.3} m ({:.0}% better), 6-class accuracy {:.1}% vs {:.1}%",
            report.knn.mean,
            report.constant_center.mean,
            improvement * 100.0,
            report.knn_accuracy.unwrap_or(0.0) * 100.0,
            report.constant_center_accuracy.unwrap_or(0.0) * 100.0
        ),
    )
}

fn nearest_label_smoke() -> Outcome {
    let labels: Vec<LabelEntry> = [1.20, 1.25]
        .iter()
        .map(|&t| LabelEntry {
            timestamp: t,
            world: None,
        })
        .collect();
    let a = nearest_label(1.234, &labels).map_err(|e| e.to_string())?.0;
    let b = nearest_label(1.225, &labels).map_err(|e| e.to_string())?.0;
    check(a == 1 && b == 0, format!("1.234 -> {a}, 1.225 -> {b}"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("homography correctness", homography_correctness),
        ("lost-packet oracle equivalence", lost_packet_oracle),
        ("end-to-end zero-noise identity", zero_noise_identity),
        ("noise plausibility", noise_plausibility),
        ("alignment bound and conservation", alignment_bound),
        ("feature properties", feature_properties),
        ("k-NN baseline beats constant predictor", baseline_sanity),
        ("nearest-label tie rule", nearest_label_smoke),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
