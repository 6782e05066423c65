//! Finite-difference verification of every differentiable primitive.
//!
//! Each case wraps the op's inputs as parameters, projects the output to a
//! scalar against a fixed random tensor, and compares reverse-mode
//! gradients with central differences.

use std::rc::Rc;

use nn_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.iter().product()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Project a tensor to a scalar with fixed random weights so every output
/// entry contributes a distinct gradient path.
fn project(tape: &Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let w = rand_t(&shape, &mut rng(seed));
    let wv = tape.leaf(w);
    let p = mul(tape, y, wv)?;
    Ok(sum(tape, p))
}

fn check<F>(store: &mut ParamStore, build: F, tol: f64)
where
    F: Fn(&Tape, &ParamStore) -> Result<Var>,
{
    let err = grad_check(
        store,
        |s| loss_and_param_grads(s, &build),
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(err <= tol, "max relative error {err} exceeds {tol}");
}

#[test]
fn dense_gradients_random_3x3() {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[3, 3], &mut r)).unwrap();
    let w = store.add("w", rand_t(&[3, 3], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[3], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = dense(tape, tape.param(s, x), tape.param(s, w), tape.param(s, b))?;
            project(tape, y, 100)
        },
        1e-6,
    );
}

#[test]
fn conv2d_9x9_gradients() {
    let mut r = rng(2);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[1, 2, 8, 8], &mut r)).unwrap();
    let w = store.add("w", rand_t(&[2, 2, 9, 9], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[2], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = conv2d(tape, tape.param(s, x), tape.param(s, w), tape.param(s, b))?;
            project(tape, y, 101)
        },
        1e-5,
    );
}

#[test]
fn conv2d_asymmetric_kernel_gradients() {
    let mut r = rng(3);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[2, 1, 4, 6], &mut r)).unwrap();
    let w = store.add("w", rand_t(&[2, 1, 1, 11], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[2], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = conv2d(tape, tape.param(s, x), tape.param(s, w), tape.param(s, b))?;
            project(tape, y, 102)
        },
        1e-5,
    );
}

#[test]
fn batch_norm_train_gradients() {
    let mut r = rng(4);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[2, 3, 2, 2], &mut r)).unwrap();
    let g = store.add("g", rand_t(&[3], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[3], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = batch_norm_train(tape, tape.param(s, x), tape.param(s, g), tape.param(s, b), None)?;
            project(tape, y, 103)
        },
        1e-4,
    );
}

#[test]
fn batch_norm_eval_gradients() {
    let mut r = rng(5);
    let mut stats = BatchNormStats::new(3);
    stats.mean = vec![0.1, -0.2, 0.3];
    stats.var = vec![1.5, 0.7, 2.0];
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[2, 3, 2, 2], &mut r)).unwrap();
    let g = store.add("g", rand_t(&[3], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[3], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = batch_norm_eval(tape, tape.param(s, x), tape.param(s, g), tape.param(s, b), &stats)?;
            project(tape, y, 104)
        },
        1e-5,
    );
}

#[test]
fn layer_norm_gradients() {
    let mut r = rng(6);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[2, 3, 5], &mut r)).unwrap();
    let g = store.add("g", rand_t(&[5], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[5], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = layer_norm(tape, tape.param(s, x), tape.param(s, g), tape.param(s, b))?;
            project(tape, y, 105)
        },
        1e-4,
    );
}

#[test]
fn softmax_gradients() {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[3, 6], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = softmax_last(tape, tape.param(s, x))?;
            project(tape, y, 106)
        },
        1e-5,
    );
}

#[test]
fn activation_gradients() {
    // Keep relu inputs away from the kink.
    let mut store = ParamStore::new();
    let x = store
        .add("x", Tensor::from_vec(&[6], vec![-1.7, -0.9, -0.3, 0.4, 1.1, 2.3]).unwrap())
        .unwrap();
    for kind in [Activation::Relu, Activation::Sigmoid, Activation::Gelu] {
        check(
            &mut store,
            move |tape, s| {
                let y = activation(tape, tape.param(s, x), kind);
                project(tape, y, 107)
            },
            1e-5,
        );
    }
}

#[test]
fn matmul_gradients() {
    let mut r = rng(8);
    let mut store = ParamStore::new();
    let a = store.add("a", rand_t(&[2, 3, 4], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[2, 4, 5], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = matmul_batched(tape, tape.param(s, a), tape.param(s, b))?;
            project(tape, y, 108)
        },
        1e-5,
    );
}

#[test]
fn reshuffle_op_gradients() {
    let mut r = rng(9);
    let mut store = ParamStore::new();
    let a = store.add("a", rand_t(&[2, 2, 3], &mut r)).unwrap();
    let b = store.add("b", rand_t(&[2, 1, 3], &mut r)).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let c = concat_axis(tape, &[tape.param(s, a), tape.param(s, b)], 1)?;
            let sl = slice_axis(tape, c, 1, 1, 2)?;
            let g = gather(tape, sl, &[4, 3], Rc::new((0..12).rev().collect()))?;
            let rs = reshape(tape, g, &[2, 6])?;
            project(tape, rs, 109)
        },
        1e-5,
    );
}

#[test]
fn xent_gradients() {
    let mut r = rng(10);
    let mut store = ParamStore::new();
    let x = store.add("logits", rand_t(&[4, 7], &mut r)).unwrap();
    let targets = Rc::new(vec![0usize, 3, 6, 2]);
    check(
        &mut store,
        move |tape, s| softmax_xent_bits(tape, tape.param(s, x), Rc::clone(&targets)),
        1e-5,
    );
}

#[test]
fn attention_seq_gradients() {
    let mut r = rng(11);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[2, 4, 8], &mut r)).unwrap();
    let params = AttentionParams::init(&mut store, "attn", 8, 2, 16, BiasTable::Seq(4), &mut r).unwrap();
    for causal in [false, true] {
        let p = params.clone();
        check(
            &mut store,
            move |tape, s| {
                let y = attention_seq(tape, tape.param(s, x), &p, s, 2, causal, 4)?;
                project(tape, y, 110)
            },
            1e-4,
        );
    }
}

#[test]
fn attention_2d_window4_gradients() {
    let mut r = rng(12);
    let mut store = ParamStore::new();
    let x = store.add("x", rand_t(&[1, 4, 4, 8], &mut r)).unwrap();
    let params =
        AttentionParams::init(&mut store, "attn", 4, 2, 8, BiasTable::Window2d(4), &mut r).unwrap();
    check(
        &mut store,
        move |tape, s| {
            let y = attention_2d(tape, tape.param(s, x), &params, s, 4, 2)?;
            project(tape, y, 111)
        },
        1e-4,
    );
}

#[test]
fn non_finite_gradient_is_a_contract_violation() {
    let mut store = ParamStore::new();
    store.add("x", Tensor::from_vec(&[1], vec![0.0]).unwrap()).unwrap();
    let err = grad_check(
        &mut store,
        |_s| Ok((f64::NAN, vec![Tensor::from_vec(&[1], vec![f64::NAN]).unwrap()])),
        &GradCheckOptions::default(),
    );
    assert!(matches!(err, Err(NnError::ContractViolation(_))));
}
