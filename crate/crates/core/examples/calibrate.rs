use std::time::Instant;
use stereo_refine::blackbox::{run_blackbox, BlackboxConfig};
use stereo_refine::eval::{bad, epe};
use stereo_refine::grid::{resize_bilinear, StereoPair};
use stereo_refine::net::{refine_grid, NetConfig, RefinementModel};
use stereo_refine::train::{synth_scene, train_epochs, SynthParams, TrainConfig};

fn main() {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let mut model = RefinementModel::init(NetConfig::desk_default(), 0).unwrap();
    let config = TrainConfig {
        steps,
        scene_d_max: 14,
        kappa_choices: vec![1, 2],
        log_every: 100,
        lr: std::env::var("CAL_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-4),
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let report = train_epochs(&mut model, &config).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("trained {} steps in {:.1}s ({:.3} s/step), final loss {:.4}",
        steps, dt, dt / steps as f64, report.final_loss);
    for l in report.logs.iter().take(40) {
        println!("  step {:5} total {:.4} ce {:.4} off {:.4} masked {:.3}", l.step, l.total, l.ce, l.offset, l.masked_fraction);
    }

    // Held-out evaluation, kappa = 1.
    let params = SynthParams::new(64, 64, 14);
    let bb = BlackboxConfig { d_max: 16, ..BlackboxConfig::default() };
    let (mut raw_epe_sum, mut ref_epe_sum, mut raw_bad3_sum, mut ref_bad3_sum) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..20u64 {
        let scene = synth_scene(10_001 + i, &params).unwrap();
        let pair = StereoPair::new(scene.left.clone(), scene.right.clone()).unwrap();
        let raw = run_blackbox(&pair, &bb).unwrap();
        let refined = refine_grid(&pair, &raw, &model, 64, 64).unwrap();
        raw_epe_sum += epe(&raw, &scene.gt).unwrap();
        ref_epe_sum += epe(&refined, &scene.gt).unwrap();
        raw_bad3_sum += bad(&raw, &scene.gt, 3.0).unwrap();
        ref_bad3_sum += bad(&refined, &scene.gt, 3.0).unwrap();
    }
    println!("kappa=1: raw EPE {:.4} refined EPE {:.4} ratio {:.3}", raw_epe_sum/20.0, ref_epe_sum/20.0, ref_epe_sum/raw_epe_sum);
    println!("kappa=1: raw bad3 {:.2}% refined bad3 {:.2}% ratio {:.3}", raw_bad3_sum/20.0, ref_bad3_sum/20.0, ref_bad3_sum/raw_bad3_sum);

    // kappa = 2 evaluation: refined bad1 vs NN-upsampled raw bad1 per scene.
    let bb2 = BlackboxConfig { d_max: 8, ..BlackboxConfig::default() };
    let mut wins = 0;
    for i in 0..20u64 {
        let scene = synth_scene(20_001 + i, &params).unwrap();
        let right_low = resize_bilinear(&scene.right, 32, 32).unwrap();
        let pair = StereoPair::new(scene.left.clone(), right_low).unwrap();
        let raw = run_blackbox(&pair, &bb2).unwrap();
        let refined = refine_grid(&pair, &raw, &model, 64, 64).unwrap();
        let rb = bad(&raw, &scene.gt, 1.0).unwrap();
        let fb = bad(&refined, &scene.gt, 1.0).unwrap();
        if fb < rb { wins += 1; }
        if i < 5 { println!("  kappa2 scene {}: raw bad1 {:.2}% refined bad1 {:.2}%", i, rb, fb); }
    }
    println!("kappa=2: refined bad1 beats raw on {wins}/20 scenes");
    model.save(std::path::Path::new(&format!("/tmp/calib_{steps}.ckpt"))).unwrap();
}
