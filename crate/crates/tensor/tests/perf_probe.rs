//! Rough throughput probe; run manually with
//! `cargo test -p ynet-tensor --test perf_probe -- --ignored --nocapture`.

use std::time::Instant;
use ynet_tensor::{Conv2dCfg, Tensor};

#[test]
#[ignore]
fn conv_throughput() {
    // Shapes close to the level-2/3 workload of a w=32 network on 96-384px inputs.
    let cases = [
        (3usize, 384usize, 16usize, 7usize, 2usize, 3usize),
        (16, 192, 32, 3, 2, 1),
        (32, 96, 32, 3, 1, 1),
        (64, 48, 64, 3, 1, 1),
    ];
    for (c_in, hw, c_out, k, stride, pad) in cases {
        let x = Tensor::<f32>::full(&[c_in, hw, hw], 0.5);
        let w = Tensor::<f32>::full(&[c_out, c_in, k, k], 0.01);
        let wp = Tensor::<f32>::param(&[c_out, c_in, k, k], vec![0.01; c_out * c_in * k * k]).unwrap();
        let cfg = Conv2dCfg::strided(stride, pad);

        let out = x.conv2d(&w, None, cfg).unwrap();
        let out_hw = out.shape()[1];
        let macs = (c_out * out_hw * out_hw * c_in * k * k) as f64;

        let reps = (2e9 / macs).ceil().max(1.0) as usize;
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = x.conv2d(&w, None, cfg).unwrap();
        }
        let fwd = t0.elapsed().as_secs_f64() / reps as f64;

        let t0 = Instant::now();
        for _ in 0..reps {
            let y = x.conv2d(&wp, None, cfg).unwrap();
            let loss = y.sum_all().unwrap();
            loss.backward().unwrap();
            wp.zero_grad();
        }
        let fwdbwd = t0.elapsed().as_secs_f64() / reps as f64;

        println!(
            "conv {}x{}x{} -> {} k{} s{}: fwd {:.1} ms ({:.2} GFLOP/s), fwd+bwd {:.1} ms",
            c_in,
            hw,
            hw,
            c_out,
            k,
            stride,
            fwd * 1e3,
            2.0 * macs / fwd / 1e9,
            fwdbwd * 1e3,
        );
    }
}
