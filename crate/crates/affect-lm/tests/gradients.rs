//! Full-model gradient checks: every analytic gradient against central
//! finite differences on small configurations.

use affect_lm::corpus::Batch;
use affect_lm::lexicon::{AffectCategory, AffectVector};
use affect_lm::model::{loss_and_grads, Hyperparams, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(v: usize, lanes: usize, steps: usize, rng: &mut ChaCha8Rng) -> Batch {
    let mut batch = Batch {
        inputs: Vec::new(),
        targets: Vec::new(),
        affect: Vec::new(),
    };
    for _ in 0..lanes {
        batch
            .inputs
            .push((0..steps).map(|_| rng.gen_range(0..v)).collect());
        batch
            .targets
            .push((0..steps).map(|_| rng.gen_range(0..v)).collect());
        batch.affect.push(
            (0..steps)
                .map(|_| match rng.gen_range(0..4) {
                    0 => AffectVector::zero(),
                    1 => AffectVector::one_hot(AffectCategory::PositiveEmotion),
                    2 => AffectVector::one_hot(AffectCategory::Angry),
                    _ => {
                        let mut s = affect_lm::lexicon::CategorySet::EMPTY;
                        s.insert(AffectCategory::Sad);
                        s.insert(AffectCategory::NegativeEmotion);
                        AffectVector::from(s)
                    }
                })
                .collect(),
        );
    }
    batch
}

/// Relative error with a floor on the denominator: below the floor the
/// comparison degenerates to an absolute tolerance of `tol * floor`, which
/// keeps finite-difference round-off (~1e-10 absolute here) from swamping
/// near-zero gradients.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn check_config(hyper: &Hyperparams, lanes: usize, steps: usize, beta: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(hyper, seed ^ 0x5eed).unwrap();
    let batch = random_batch(hyper.vocab_size, lanes, steps, &mut rng);

    // Non-zero initial state so the window boundary is exercised too.
    let mut warm = vec![hyper.zero_state(); lanes];
    let warm_batch = random_batch(hyper.vocab_size, lanes, 3, &mut rng);
    let _ = loss_and_grads(&params, hyper, &warm_batch, beta, &mut warm).unwrap();

    let mut states = warm.clone();
    let (_, grads) = loss_and_grads(&params, hyper, &batch, beta, &mut states).unwrap();

    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let count = params.param_count();
    for idx in 0..count {
        let orig = params.get_flat(idx);
        let mut p = params.clone();

        p.set_flat(idx, orig + eps);
        let mut s = warm.clone();
        let (loss_plus, _) = loss_and_grads(&p, hyper, &batch, beta, &mut s).unwrap();

        p.set_flat(idx, orig - eps);
        let mut s = warm.clone();
        let (loss_minus, _) = loss_and_grads(&p, hyper, &batch, beta, &mut s).unwrap();

        let numeric = (loss_plus - loss_minus) / (2.0 * eps);
        let analytic = grads.get_flat(idx);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

#[test]
fn gradients_match_finite_differences_one_layer() {
    let hyper = Hyperparams::small(12, 1, 5, 3);
    let worst = check_config(&hyper, 2, 4, 1.7, 11);
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn gradients_match_finite_differences_two_layers() {
    let hyper = Hyperparams::small(9, 2, 4, 3);
    let worst = check_config(&hyper, 2, 3, 2.3, 29);
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn gradients_match_finite_differences_beta_zero() {
    let hyper = Hyperparams::small(10, 1, 4, 2);
    let worst = check_config(&hyper, 1, 5, 0.0, 37);
    assert!(worst < 1e-5, "worst relative error {worst}");
}
