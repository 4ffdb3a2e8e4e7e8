mod common;

use common::*;

#[test]
fn random_programs_resume_identically() {
    let mut live = 0;
    for seed in 0..300 {
        live += checkpoint_replay(seed).unwrap() as usize;
    }
    assert!(live > 150, "only {live} checkpoints were taken mid-run");
}
