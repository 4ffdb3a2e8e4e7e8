mod common;

use common::*;
use rand::Rng;
use rexa::host::config::NodeConfig;
use rexa::host::node::Node;

fn ann_node() -> Node {
    let mut cfg = NodeConfig::default();
    cfg.vm.cs = 4096;
    node(cfg)
}

fn forward(n: &mut Node, x: [i32; 4]) -> Vec<i128> {
    let d = n.vm.ios.dios_by_name_mut("samples").unwrap();
    for (i, v) in x.into_iter().enumerate() {
        d.set(100 + i, v).unwrap();
    }
    let text = n.run_program(&fixture("ex2_ann.rx"), 10_000).unwrap();
    text.split_whitespace().map(|s| s.parse().unwrap()).collect()
}

#[test]
fn frame_size_in_range() {
    let mut n = ann_node();
    let info = n.vm.compile(&fixture("ex2_ann.rx")).unwrap();
    let frame = n.vm.cs.frame(info.frame).unwrap().len;
    assert_eq!(frame, info.code_len + info.data_len);
    assert!((237..=450).contains(&frame), "{frame}");
}

#[test]
fn matches_wide_reference_and_float_bound() {
    let mut n = ann_node();
    let mut r = rng(7);
    for _ in 0..300 {
        let x = [(); 4].map(|_| r.gen_range(-3000..3000));
        let got = forward(&mut n, x);
        assert_eq!(got, ann_wide(&x), "input {x:?}");
        let (f, bound) = ann_float(&x);
        for k in 0..2 {
            assert!((got[k] as f64 - f[k]).abs() <= bound[k], "input {x:?} out {k}: {} vs {} (bound {})", got[k], f[k], bound[k]);
        }
    }
}

#[test]
fn bound_is_informative() {
    let (_, bound) = ann_float(&[100, -20, 50, 7]);
    assert!(bound.iter().all(|&b| b < 1000.0), "{bound:?}");
}
