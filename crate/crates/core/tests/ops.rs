use approx::assert_abs_diff_eq;
use hgsg_core::{BackwardFault, Error, GradCheck, PoolMode, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero so ReLU kinks sit outside the probe width.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Weighted sum with fixed random coefficients, so every output coordinate
/// gets a distinct upstream gradient.
fn probe(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let w = random(tape.shape(y), &mut rng);
    let w = tape.leaf(w);
    let m = tape.mul(y, w).unwrap();
    tape.sum(m)
}

fn check<F>(f: F, params: &[Tensor])
where
    F: Fn(&mut Tape, &[Var]) -> hgsg_core::Result<Var>,
{
    let report = GradCheck::default().run(f, params).unwrap();
    assert!(report.pass, "max relative errors {:?}", report.max_rel_error);
}

#[test]
fn matmul_small_case() {
    let mut tape = Tape::new();
    let a = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let b = tape.leaf(t(&[2, 1], &[5.0, 6.0]));
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c), &t(&[2, 1], &[17.0, 39.0]));
}

#[test]
fn matmul_inner_mismatch() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3]));
    let b = tape.leaf(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.matmul(a, b), Err(Error::Dimension { .. })));
}

#[test]
fn conv1x1_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, cin, cout, l) = (3, 4, 5, 6);
    let x = random(&[n, cin, l], &mut rng);
    let w = random(&[cout, cin], &mut rng);
    let b = random(&[cout], &mut rng);
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.conv1x1(xv, wv, bv).unwrap();
    let y = tape.value(y);
    assert_eq!(y.shape(), [n, cout, l]);
    for i in 0..n {
        for o in 0..cout {
            for p in 0..l {
                let mut acc = b.at(&[o]);
                for c in 0..cin {
                    acc += w.at(&[o, c]) * x.at(&[i, c, p]);
                }
                assert_abs_diff_eq!(y.at(&[i, o, p]), acc, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn row_reduce_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = random(&[2, 3, 4], &mut rng);
    let w = random(&[3], &mut rng);
    let b = random(&[1], &mut rng);
    let mut tape = Tape::new();
    let (mv, wv, bv) = (tape.leaf(m.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.row_reduce_conv(mv, wv, bv).unwrap();
    let y = tape.value(y);
    assert_eq!(y.shape(), [2, 1, 4]);
    for i in 0..2 {
        for c in 0..4 {
            let expect: f64 = b.item() + (0..3).map(|r| w.at(&[r]) * m.at(&[i, r, c])).sum::<f64>();
            assert_abs_diff_eq!(y.at(&[i, 0, c]), expect, epsilon = 1e-12);
        }
    }
}

#[test]
fn pooling_small_case() {
    let x = t(&[2, 3], &[1.0, 5.0, 2.0, 4.0, 0.0, 6.0]);
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let mx = tape.pool_axis(xv, 0, PoolMode::Max).unwrap();
    let mn = tape.pool_axis(xv, 0, PoolMode::Mean).unwrap();
    let rows = tape.pool_axis(xv, 1, PoolMode::Max).unwrap();
    assert_eq!(tape.value(mx), &t(&[3], &[4.0, 5.0, 6.0]));
    assert_eq!(tape.value(mn), &t(&[3], &[2.5, 2.5, 4.0]));
    assert_eq!(tape.value(rows), &t(&[2], &[5.0, 6.0]));
    assert!(tape.pool_axis(xv, 2, PoolMode::Max).is_err());
}

#[test]
fn broadcast_multiply_small_case() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let m = tape.leaf(t(&[1, 2], &[10.0, -1.0]));
    let y = tape.broadcast_mul_over_pixels(x, m).unwrap();
    assert_eq!(tape.value(y), &t(&[1, 2, 2], &[10.0, 20.0, -3.0, -4.0]));
}

#[test]
fn cross_entropy_values() {
    let mut tape = Tape::new();
    let logits = tape.leaf(t(&[1, 3], &[1.0, 2.0, 3.0]));
    let ce = tape.cross_entropy(logits, &[0]).unwrap();
    let lse = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
    assert_abs_diff_eq!(tape.value(ce).item(), lse - 1.0, epsilon = 1e-12);

    let confident = tape.leaf(t(&[1, 2], &[50.0, 0.0]));
    let ce = tape.cross_entropy(confident, &[0]).unwrap();
    let v = tape.value(ce).item();
    assert!(v.is_finite() && (0.0..1e-18).contains(&v), "{v}");

    for k in [2usize, 7, 275] {
        let uniform = tape.leaf(Tensor::full(&[3, k], 0.25));
        let ce = tape.cross_entropy(uniform, &[0, k - 1, k / 2]).unwrap();
        assert_abs_diff_eq!(tape.value(ce).item(), (k as f64).ln(), epsilon = 1e-12);
    }

    let bad = tape.leaf(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.cross_entropy(bad, &[0, 3]), Err(Error::Label { index: 3, classes: 3 })));
}

#[test]
fn backward_elementary_cases() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[1.0, -2.0, 0.5]));
    let s = tape.sum(x);
    assert_eq!(tape.backward(s).unwrap().wrt(x), Tensor::ones(&[3]));

    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    assert_eq!(tape.backward(s).unwrap().wrt(x), t(&[2], &[2.0, 4.0]));

    let mut tape = Tape::new();
    let x = tape.leaf(t(&[2], &[1.0, 2.0]));
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn relu_subgradient_at_zero() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]));
    let y = tape.relu(x);
    let s = tape.sum(y);
    assert_eq!(tape.backward(s).unwrap().wrt(x), t(&[3], &[0.0, 0.0, 1.0]));
}

#[test]
fn corrupted_backward_rules_are_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = away_from_zero(&[3, 4], &mut rng);
    let relu_case = |tape: &mut Tape, v: &[Var]| {
        let y = tape.relu(v[0]);
        Ok(probe(tape, y, 1))
    };
    let faulty = GradCheck { fault: Some(BackwardFault::ReluDoubled), ..GradCheck::default() };
    assert!(!faulty.run(relu_case, std::slice::from_ref(&x)).unwrap().pass);
    assert!(GradCheck::default().run(relu_case, &[x]).unwrap().pass);

    let a = random(&[2, 3], &mut rng);
    let b = random(&[3, 2], &mut rng);
    let mm = |tape: &mut Tape, v: &[Var]| {
        let y = tape.matmul(v[0], v[1])?;
        Ok(probe(tape, y, 2))
    };
    let faulty = GradCheck { fault: Some(BackwardFault::MatMulRhsZeroed), ..GradCheck::default() };
    assert!(!faulty.run(mm, &[a, b]).unwrap().pass);
}

#[test]
fn grad_check_rejects_bad_eps_and_nondeterminism() {
    let x = Tensor::ones(&[2]);
    let bad = GradCheck { eps: 0.0, ..GradCheck::default() };
    assert!(matches!(bad.run(|tape, v| Ok(tape.sum(v[0])), std::slice::from_ref(&x)), Err(Error::Parameter(_))));
    let counter = std::cell::Cell::new(0.0);
    let drifting = |tape: &mut Tape, v: &[Var]| {
        counter.set(counter.get() + 1.0);
        let s = tape.sum(v[0]);
        Ok(tape.scale(s, counter.get()))
    };
    assert!(matches!(GradCheck::default().run(drifting, &[x]), Err(Error::Determinism)));
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..=4, 1usize..=5, 1usize..=6, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn grad_matmul((n, c, l, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&[n, c], &mut rng), random(&[c, l], &mut rng)];
        check(|tape, v| { let y = tape.matmul(v[0], v[1])?; Ok(probe(tape, y, seed)) }, &params);
    }

    #[test]
    fn grad_batched_matmul_and_transpose((n, c, l, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&[n, c, l], &mut rng), random(&[n, c, l], &mut rng)];
        check(|tape, v| {
            let bt = tape.transpose(v[1])?;
            let y = tape.batched_matmul(v[0], bt)?;
            Ok(probe(tape, y, seed))
        }, &params);
    }

    #[test]
    fn grad_conv1x1((n, c, l, seed) in dims(), cout in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&[n, c, l], &mut rng), random(&[cout, c], &mut rng), random(&[cout], &mut rng)];
        check(|tape, v| { let y = tape.conv1x1(v[0], v[1], v[2])?; Ok(probe(tape, y, seed)) }, &params);
    }

    #[test]
    fn grad_row_reduce((n, c, l, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&[n, c, l], &mut rng), random(&[c], &mut rng), random(&[1], &mut rng)];
        check(|tape, v| { let y = tape.row_reduce_conv(v[0], v[1], v[2])?; Ok(probe(tape, y, seed)) }, &params);
    }

    #[test]
    fn grad_pooling((n, c, l, seed) in dims(), axis in 0usize..3, max in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mode = if max { PoolMode::Max } else { PoolMode::Mean };
        let params = [random(&[n, c, l], &mut rng)];
        check(|tape, v| { let y = tape.pool_axis(v[0], axis, mode)?; Ok(probe(tape, y, seed)) }, &params);
    }

    #[test]
    fn grad_relu_mul_add_scale((n, c, l, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [away_from_zero(&[n, c, l], &mut rng), random(&[n, c, l], &mut rng), random(&[n, c], &mut rng)];
        check(|tape, v| {
            let r = tape.relu(v[0]);
            let m = tape.mul(r, v[1])?;
            let b = tape.broadcast_mul_over_pixels(m, v[2])?;
            let s = tape.scale(b, -1.5);
            let y = tape.add(s, v[1])?;
            Ok(probe(tape, y, seed))
        }, &params);
    }

    #[test]
    fn grad_cross_entropy((n, _c, k, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let params = [random(&[n, k], &mut rng).map(|v| 3.0 * v)];
        check(|tape, v| tape.cross_entropy(v[0], &targets), &params);
    }

    #[test]
    fn grad_batch_norm((n, c, l, seed) in dims()) {
        prop_assume!(n * l >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = [random(&[n, c, l], &mut rng), random(&[c], &mut rng), random(&[c], &mut rng)];
        check(|tape, v| { let y = tape.batch_norm(v[0], v[1], v[2], 1e-5, None)?; Ok(probe(tape, y, seed)) }, &params);
    }

    #[test]
    fn shape_algebra((n, c, l, seed) in dims(), cout in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let x = tape.leaf(random(&[n, c, l], &mut rng));
        let w = tape.leaf(random(&[cout, c], &mut rng));
        let b = tape.leaf(random(&[cout], &mut rng));
        let y = tape.conv1x1(x, w, b).unwrap();
        prop_assert_eq!(tape.shape(y), &[n, cout, l]);
        let xt = tape.transpose(x).unwrap();
        prop_assert_eq!(tape.shape(xt), &[n, l, c]);
        let g = tape.batched_matmul(x, xt).unwrap();
        prop_assert_eq!(tape.shape(g), &[n, c, c]);
        for axis in 0..3 {
            let p = tape.pool_axis(x, axis, PoolMode::Mean).unwrap();
            let mut expect = vec![n, c, l];
            expect.remove(axis);
            prop_assert_eq!(tape.shape(p), expect.as_slice());
        }
        let bad = tape.leaf(Tensor::zeros(&[cout, c + 1]));
        prop_assert!(tape.conv1x1(x, bad, b).is_err());
    }

    #[test]
    fn max_pool_dominates_mean((n, c, l, seed) in dims(), axis in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let x = tape.leaf(random(&[n, c, l], &mut rng));
        let mx = tape.pool_axis(x, axis, PoolMode::Max).unwrap();
        let mn = tape.pool_axis(x, axis, PoolMode::Mean).unwrap();
        for (a, b) in tape.value(mx).data().iter().zip(tape.value(mn).data()) {
            prop_assert!(a + 1e-15 >= *b);
        }
    }
}
