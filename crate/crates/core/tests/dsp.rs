mod common;

use common::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rexa::dsp::dtree::{self, Node, EQ, GT, LT, NEAR};
use rexa::dsp::fixed::{fplog10, fpsigmoid, fpsin, luts};
use rexa::host::config::NodeConfig;

fn random_tree(r: &mut ChaCha8Rng, depth: usize, nin: usize, nout: usize) -> Node {
    if depth == 0 || r.gen_bool(0.25) {
        return Node::Out { var: r.gen_range(0..nout) as i16, value: r.gen_range(-500..500) };
    }
    let n = r.gen_range(1..4);
    Node::Test {
        var: r.gen_range(0..nin) as i16,
        op: [LT, GT, EQ, NEAR][r.gen_range(0..4)],
        choices: (0..n).map(|_| (r.gen_range(-20..20), random_tree(r, depth - 1, nin, nout))).collect(),
    }
}

/// Direct evaluation over the tree structure.
fn walk(node: &Node, x: &[i16], out: &mut [i16]) -> usize {
    match node {
        Node::Out { var, value } => {
            out[*var as usize] = *value;
            1
        }
        Node::Test { var, op, choices } => {
            let v = x[*var as usize];
            let last = choices.len() - 1;
            let pick = match *op {
                LT => choices.iter().position(|c| v < c.0).unwrap_or(last),
                GT => choices.iter().position(|c| v > c.0).unwrap_or(last),
                EQ => choices.iter().position(|c| v == c.0).unwrap_or(last),
                _ => (0..choices.len()).min_by_key(|&i| ((v as i32 - choices[i].0 as i32).abs(), i)).unwrap(),
            };
            walk(&choices[pick].1, x, out)
        }
    }
}

#[test]
fn dtree_matches_structural_walk() {
    let mut r = rng(21);
    for _ in 0..2000 {
        let tree = random_tree(&mut r, 5, 4, 3);
        let table = dtree::encode(&tree);
        for _ in 0..10 {
            let x: Vec<i16> = (0..4).map(|_| r.gen_range(-25..25)).collect();
            let (mut a, mut b) = ([0i16; 3], [0i16; 3]);
            assert_eq!(dtree::eval(&table, &x, &mut a), Ok(walk(&tree, &x, &mut b)));
            assert_eq!(a, b);
        }
    }
}

#[test]
fn dtree_word_on_node() {
    let mut r = rng(5);
    for _ in 0..50 {
        let tree = random_tree(&mut r, 4, 2, 2);
        let table: Vec<String> = dtree::encode(&tree).iter().map(i16::to_string).collect();
        let x = [r.gen_range(-25..25), r.gen_range(-25..25)];
        let mut want = [0i16; 2];
        let n = walk(&tree, &x, &mut want);
        let src = format!(
            "array t {{ {} }} array x {{ {} {} }} array y 2 t x y dtree . 0 y read . 1 y read .",
            table.join(" "),
            x[0],
            x[1]
        );
        let mut node = node(NodeConfig::default());
        let got = node.run_program(&src, 10_000).unwrap();
        assert_eq!(got, format!("{n} {} {} ", want[0], want[1]));
    }
}

#[test]
fn sigmoid_sweep() {
    let mut worst = 0.0f64;
    for x in -10_000..=10_000 {
        let exact = 1.0 / (1.0 + (-(x as f64) / 1000.0).exp());
        worst = worst.max((fpsigmoid(x) as f64 / 1000.0 - exact).abs());
    }
    assert!(worst < 0.01, "{worst}");
    assert_eq!((fpsigmoid(0), fpsigmoid(10_000), fpsigmoid(-10_000)), (500, 1000, 0));
}

#[test]
fn lut_shapes() {
    let l = luts();
    assert_eq!((l.sglut13.len(), l.sglut310.len(), l.log10lut.len()), (24, 6, 100));
    for (i, &v) in l.log10lut.iter().enumerate() {
        assert_eq!(v as i32, ((i as f64 + 10.0) / 10.0).log10().mul_add(100.0, 1e-9).floor() as i32);
    }
}

#[test]
fn log10_sweep() {
    for x in 10..30_000i16 {
        let exact = (x as f64 / 10.0).log10() * 100.0;
        let got = fplog10(x).unwrap() as f64;
        assert!((got - exact).abs() <= 5.0, "x={x}: {got} vs {exact}");
    }
    assert_eq!(fplog10(9), None);
}

#[test]
fn sine_sweep() {
    let mut worst = 0.0f64;
    for x in -20_000..=20_000i16 {
        let exact = (x as f64 / 1000.0).sin() * 1000.0;
        worst = worst.max((fpsin(x) as f64 - exact).abs());
    }
    // 64 segments per quarter wave: chord error <= (pi/128)^2 / 8 * 1000 plus
    // rounding, and the 6283 mrad period drifts from 2*pi by 0.185 mrad per turn.
    assert!(worst <= 4.0, "{worst}");
}
