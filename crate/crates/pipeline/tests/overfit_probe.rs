//! Manual probe for overfitting dynamics; run with
//! `cargo test -p ynet-pipeline --test overfit_probe -- --ignored --nocapture`.

use std::time::Instant;
use ynet_model::{BlockKind, Mode, NetworkConfig, Sharing, YNet};
use ynet_pipeline::schedule::TrainConfig;
use ynet_pipeline::synth::{generate_roi, SynthConfig};
use ynet_pipeline::train::{seg_pixel_accuracy, seg_samples_from_rois, train_segmentation, SegSample};
use ynet_tensor::Tensor;

fn train_mode_accuracy(net: &YNet<f32>, samples: &[SegSample]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in samples {
        let x = Tensor::from_vec(&[3, s.size, s.size], s.image.clone()).unwrap();
        let logits = net.forward_seg(&x, Mode::Train).unwrap();
        let data = logits.to_vec();
        let plane = s.size * s.size;
        for p in 0..plane {
            let mut best = 0;
            let mut bv = f32::NEG_INFINITY;
            for c in 0..8 {
                if data[c * plane + p] > bv {
                    bv = data[c * plane + p];
                    best = c;
                }
            }
            if best as u8 == s.mask[p] {
                hits += 1;
            }
        }
        total += plane;
    }
    hits as f64 / total as f64
}

#[test]
#[ignore]
fn overfit_dynamics() {
    let net_cfg = NetworkConfig {
        w: 32,
        d: 2,
        encoder: BlockKind::Esp,
        decoder: BlockKind::Esp,
        sharing: Sharing::None,
        tissue_classes: 8,
        diagnostic_classes: 4,
    };
    let synth = SynthConfig {
        region_count: 8,
        noise_amplitude: 0.02,
        ..Default::default()
    };
    let mut rois = Vec::new();
    for seed in 0..2 {
        let roi = generate_roi(&synth, seed).unwrap();
        rois.push((roi.image, roi.mask));
    }
    let mut samples = seg_samples_from_rois(&rois, 96, 24).unwrap();
    samples.truncate(8);

    for lr0 in [3e-2, 5e-2] {
        let net = YNet::build_segmentation(net_cfg, 11).unwrap();
        let t0 = Instant::now();
        let cfg = TrainConfig {
            epochs: 200,
            lr0,
            decay_factor: 2.0,
            decay_every: 50,
            val_fraction: 0.12,
            batch_size: 1,
            seed: 7,
            augment: false,
        };
        let history = train_segmentation(&net, &samples, &cfg).unwrap();
        let eval_acc = seg_pixel_accuracy(&net, &samples).unwrap();
        let train_acc = train_mode_accuracy(&net, &samples);
        println!(
            "lr0={lr0:.0e}: 200 epochs in {:.1}s -> best epoch {}, loss {:.4}, eval acc {:.4}, train-mode acc {:.4}",
            t0.elapsed().as_secs_f64(),
            history.best_epoch,
            history.records.last().unwrap().train_loss,
            eval_acc,
            train_acc
        );
    }
}
