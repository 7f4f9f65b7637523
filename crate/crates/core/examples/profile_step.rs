use std::time::Instant;
use stereo_refine::autodiff::{adam_step, AdamState};
use stereo_refine::net::{NetConfig, RefinementModel};
use stereo_refine::train::{make_train_sample, train_step, TrainConfig};

fn main() {
    let mut model = RefinementModel::init(NetConfig::desk_default(), 0).unwrap();
    let config = TrainConfig { scene_d_max: 14, kappa_choices: vec![1, 2], ..TrainConfig::default() };
    let mut state = AdamState::new(&model.params);
    // warmup
    let s = make_train_sample(1, &config).unwrap();
    train_step(&mut model, &mut state, &s, config.sigma, 1e-4).unwrap();

    let t0 = Instant::now();
    let mut samples = Vec::new();
    for i in 0..10 { samples.push(make_train_sample(100 + i, &config).unwrap()); }
    let t_sample = t0.elapsed().as_secs_f64() / 10.0;

    let t1 = Instant::now();
    for s in &samples { train_step(&mut model, &mut state, s, config.sigma, 1e-4).unwrap(); }
    let t_step = t1.elapsed().as_secs_f64() / 10.0;
    println!("make_train_sample: {:.1} ms", t_sample * 1e3);
    println!("train_step (fwd+bwd+adam): {:.1} ms", t_step * 1e3);
    let _ = adam_step; 
}
