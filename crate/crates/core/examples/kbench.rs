use std::time::Instant;
use stereo_refine::autodiff::Tape;

fn bench(name: &str, mut f: impl FnMut(), flops: f64, iters: usize) {
    let t0 = Instant::now();
    for _ in 0..iters { f(); }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    println!("{name:28} {:8.2} ms  {:6.2} GFLOP/s", dt * 1e3, flops / dt / 1e9);
}

fn main() {
    let n = 2048usize; let k = 208; let m = 64;
    let a: Vec<f64> = (0..n*k).map(|i| (i % 97) as f64 * 0.01).collect();
    let b: Vec<f64> = (0..k*m).map(|i| (i % 89) as f64 * 0.01).collect();

    // matmul forward via tape
    bench("tape matmul 2048x208x64", || {
        let mut t = Tape::new();
        let av = t.leaf(&[n, k], a.clone()).unwrap();
        let bv = t.leaf(&[k, m], b.clone()).unwrap();
        let _ = t.matmul(av, bv).unwrap();
    }, 2.0 * (n*k*m) as f64, 20);

    // matmul + backward
    bench("tape matmul fwd+bwd", || {
        let mut t = Tape::new();
        let av = t.leaf(&[n, k], a.clone()).unwrap();
        let bv = t.leaf(&[k, m], b.clone()).unwrap();
        let mm = t.matmul(av, bv).unwrap();
        let s = t.sum(mm);
        t.backward(s).unwrap();
    }, 6.0 * (n*k*m) as f64, 10);

    // conv2d 16ch->32ch stride2 on 64x64
    let img: Vec<f64> = (0..16*64*64).map(|i| (i % 83) as f64 * 0.01).collect();
    let w: Vec<f64> = (0..32*16*9).map(|i| (i % 79) as f64 * 0.01).collect();
    bench("tape conv 16->32 s2 fwd+bwd", || {
        let mut t = Tape::new();
        let iv = t.leaf(&[16, 64, 64], img.clone()).unwrap();
        let wv = t.leaf(&[32, 16, 3, 3], w.clone()).unwrap();
        let c = t.conv2d(iv, wv, None, 2, 1).unwrap();
        let s = t.sum(c);
        t.backward(s).unwrap();
    }, 6.0 * (32.0*16.0*9.0*32.0*32.0), 10);
}
