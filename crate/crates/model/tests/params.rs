//! Parameter-count contracts for the network family.

use ynet_model::{BlockKind, NetworkConfig, Sharing, YNet};

fn config(w: usize, d: usize, enc: BlockKind, dec: BlockKind, sharing: Sharing) -> NetworkConfig {
    NetworkConfig {
        w,
        d,
        encoder: enc,
        decoder: dec,
        sharing,
        tissue_classes: 8,
        diagnostic_classes: 4,
    }
}

fn seg_count(cfg: NetworkConfig) -> usize {
    YNet::<f32>::build_segmentation(cfg, 0).unwrap().param_count()
}

fn joint_count(cfg: NetworkConfig) -> usize {
    let mut net = YNet::<f32>::build_segmentation(cfg, 0).unwrap();
    net.attach_classification_head(1).unwrap();
    net.param_count()
}

#[test]
fn esp_psp_w128_d5_seg_count_near_2_75m() {
    let n = seg_count(config(128, 5, BlockKind::Esp, BlockKind::Psp, Sharing::Concat)) as f64;
    assert!(n >= 0.8 * 2.75e6 && n <= 1.2 * 2.75e6, "seg params {}", n);
}

#[test]
fn esp_psp_w128_d5_joint_count_near_3_91m() {
    let n = joint_count(config(128, 5, BlockKind::Esp, BlockKind::Psp, Sharing::Concat)) as f64;
    assert!(n >= 0.8 * 3.91e6 && n <= 1.2 * 3.91e6, "joint params {}", n);
}

#[test]
fn rcb_to_esp_joint_ratio_near_2_77() {
    let esp = joint_count(config(128, 5, BlockKind::Esp, BlockKind::Psp, Sharing::Concat)) as f64;
    let rcb = joint_count(config(128, 5, BlockKind::Rcb, BlockKind::Psp, Sharing::Concat)) as f64;
    let ratio = rcb / esp;
    assert!((2.2..=3.3).contains(&ratio), "ratio {}", ratio);
}

#[test]
fn depth_ratio_d5_over_d2_in_band() {
    // Depth scaling measured without the sharing concat, whose widened
    // level-3 entry conv is depth-independent and dilutes the ratio.
    let d5 = seg_count(config(64, 5, BlockKind::Esp, BlockKind::Esp, Sharing::None)) as f64;
    let d2 = seg_count(config(64, 2, BlockKind::Esp, BlockKind::Esp, Sharing::None)) as f64;
    let ratio = d5 / d2;
    assert!((1.4..=1.8).contains(&ratio), "ratio {}", ratio);
}

#[test]
fn params_increase_with_width_for_every_kind_pair() {
    for enc in [BlockKind::Esp, BlockKind::Rcb] {
        for dec in BlockKind::ALL {
            let small = seg_count(config(64, 5, enc, dec, Sharing::Concat));
            let large = seg_count(config(128, 5, enc, dec, Sharing::Concat));
            assert!(large > small, "{enc}-{dec}: {large} !> {small}");
        }
    }
}

#[test]
fn params_increase_with_depth_for_both_encoder_kinds() {
    for enc in [BlockKind::Esp, BlockKind::Rcb] {
        let d2 = seg_count(config(64, 2, enc, BlockKind::Psp, Sharing::Concat));
        let d5 = seg_count(config(64, 5, enc, BlockKind::Psp, Sharing::Concat));
        assert!(d5 > d2);
    }
}

#[test]
fn sharing_modes_order_strictly() {
    for (enc, dec) in [
        (BlockKind::Esp, BlockKind::Esp),
        (BlockKind::Rcb, BlockKind::Psp),
    ] {
        let none = seg_count(config(64, 5, enc, dec, Sharing::None));
        let add = seg_count(config(64, 5, enc, dec, Sharing::Add));
        let cat = seg_count(config(64, 5, enc, dec, Sharing::Concat));
        assert!(cat > add && add > none, "{enc}-{dec}: {none} {add} {cat}");
    }
}

#[test]
fn head_params_are_exactly_joint_minus_seg() {
    let cfg = config(32, 2, BlockKind::Esp, BlockKind::Psp, Sharing::Concat);
    let seg = seg_count(cfg);
    let mut net = YNet::<f32>::build_segmentation(cfg, 0).unwrap();
    net.attach_classification_head(1).unwrap();
    assert_eq!(net.param_count() - seg, net.head_param_count());
}

#[test]
fn attach_twice_is_an_error() {
    let cfg = config(8, 1, BlockKind::Esp, BlockKind::Esp, Sharing::None);
    let mut net = YNet::<f32>::build_segmentation(cfg, 0).unwrap();
    net.attach_classification_head(1).unwrap();
    assert!(net.attach_classification_head(2).is_err());
}

#[test]
fn odd_width_is_rejected() {
    let cfg = config(63, 5, BlockKind::Esp, BlockKind::Esp, Sharing::None);
    assert!(YNet::<f32>::build_segmentation(cfg, 0).is_err());
}
