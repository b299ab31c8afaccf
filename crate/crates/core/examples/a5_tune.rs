use homoflow::evaluation::evaluate_clips;
use homoflow::pipeline::{SynthGenConfig};
use homoflow::predictor::*;
use homoflow::sampling::*;
use homoflow::synthetic::*;
use homoflow::*;
use rayon::prelude::*;

fn cue_items(seed: u64, frames: usize) -> Vec<(Clip, DataSample)> {
    let geom = FrameGeometry::new(320, 240);
    let scene = generate_scene(seed, 1024);
    let kind = TrajectoryKind::CueConditioned(CueParams::default());
    let traj = generate_trajectory(&kind, frames, &geom, 1024, seed ^ 0x7a73).unwrap();
    let truth = traj.truth_track(&geom, 5, 25.0, "cue").unwrap();
    let opts = RenderOptions::default();
    let down: Vec<GrayFrame> = (0..frames)
        .into_par_iter()
        .map(|t| render_frame(&scene, &traj, &geom, &opts, t).unwrap().downsample(32, 32))
        .collect();
    let sigma = compute_sigma(std::slice::from_ref(&truth)).unwrap();
    let spec = ClipSpec::default();
    let clips = importance_sample(&truth, sigma, &spec, usize::MAX, seed).unwrap();
    clips
        .into_iter()
        .map(|clip| {
            let recall_frames: Vec<GrayFrame> =
                clip.recall_frame_indices().iter().map(|i| down[*i].clone()).collect();
            let recall_motions: Vec<_> = clip
                .recall_motion_indices().iter().map(|i| *truth.entry(*i).unwrap()).collect();
            let target: Vec<_> = clip
                .preview_motion_indices().iter().map(|i| *truth.entry(*i).unwrap()).collect();
            let s = DataSample {
                input: PredictorInput { recall_frames, recall_motions, geom },
                target,
            };
            (clip, s)
        })
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let frames: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(7200);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.02);
    let hidden: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(128);
    let _ = SynthGenConfig::default();
    for seed in [1u64, 2, 3] {
        let t0 = std::time::Instant::now();
        let items = cue_items(seed, frames);
        let n = items.len();
        let n_train = (n as f64 * 0.6) as usize;
        let n_val = (n as f64 * 0.1) as usize;
        let train_s: Vec<DataSample> = items[..n_train].iter().map(|(_, s)| s.clone()).collect();
        let val_s: Vec<DataSample> = items[n_train..n_train + n_val].iter().map(|(_, s)| s.clone()).collect();
        let test_items: Vec<_> = items[n_train + n_val..].to_vec();
        let cfg = TrainConfig {
            epochs, batch_size: 64, learning_rate: lr,
            lr_drops: vec![(epochs * 3 / 4, 0.5)],
            lambda: 0.1, seed, hidden_dims: vec![hidden],
        };
        let t1 = std::time::Instant::now();
        let (model, log) = train(&train_s, &val_s, &cfg, &AugmentationPolicy::default()).unwrap();
        let t2 = std::time::Instant::now();
        let (methods, _) = evaluate_clips(&test_items, Some(&model)).unwrap();
        let m = methods["model"].mpd_mean;
        let t1m = methods["taylor_o1"].mpd_mean;
        println!(
            "seed {seed}: clips {n} (test {}), model {m:.3} vs o1 {t1m:.3} -> improvement {:.1}% | data {:.1}s train {:.1}s | last val_mpd {:.3}",
            test_items.len(), (1.0 - m / t1m) * 100.0,
            t1.duration_since(t0).as_secs_f64(), t2.duration_since(t1).as_secs_f64(),
            log.last().unwrap().val_mpd.unwrap()
        );
    }
}
