use milkd::ad::{finite_difference_check, NumericArray, ParameterStore, Tape};
use milkd::data::{bag_label, generate_synthetic, Bag, GenSpec};
use milkd::eval::{auc, ScoredSet};
use milkd::hpm::{filter_bag, HpmConfig};
use milkd::labels::{make_pseudo_labels, minmax_normalize};
use milkd::models::{MilModel, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_EPS: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> NumericArray<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    NumericArray::new(shape.to_vec(), data).unwrap()
}

/// Random readout weights turn any output into a scalar with a
/// non-trivial gradient.
fn readout(tape: &mut Tape<f64>, out: milkd::ad::NodeId, seed: u64) -> milkd::Result<milkd::ad::NodeId> {
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random_array(&mut rng, &shape, -1.0, 1.0));
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

#[derive(Debug, Clone, Copy)]
enum Prim {
    MatMul,
    Add,
    AddBias,
    Mul,
    Scale,
    Tanh,
    Sigmoid,
    Relu,
    Ln,
    Softmax0,
    Softmax1,
    Sum,
    Mean,
    Max0,
    Max1,
    Transpose,
    Reshape,
    Bce,
}

const PRIMS: [Prim; 18] = [
    Prim::MatMul,
    Prim::Add,
    Prim::AddBias,
    Prim::Mul,
    Prim::Scale,
    Prim::Tanh,
    Prim::Sigmoid,
    Prim::Relu,
    Prim::Ln,
    Prim::Softmax0,
    Prim::Softmax1,
    Prim::Sum,
    Prim::Mean,
    Prim::Max0,
    Prim::Max1,
    Prim::Transpose,
    Prim::Reshape,
    Prim::Bce,
];

fn check_primitive(prim: Prim, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..5);
    let n = rng.gen_range(1..5);
    let k = rng.gen_range(1..5);
    let mut store = ParameterStore::new();
    let (lo, hi) = match prim {
        Prim::Ln => (0.2, 3.0),
        Prim::Bce => (0.05, 0.95),
        _ => (-2.0, 2.0),
    };
    let mut a = random_array(&mut rng, &[m, n], lo, hi);
    if matches!(prim, Prim::Relu) {
        // keep away from the kink
        for v in a.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1;
            }
        }
    }
    if matches!(prim, Prim::Max0 | Prim::Max1) {
        // distinct values so the argmax is stable under the probe
        let len = a.len();
        for (i, v) in a.data_mut().iter_mut().enumerate() {
            *v = *v * 0.01 + i as f64 / len as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    store.insert("a", a).unwrap();
    store.insert("b", random_array(&mut rng, &[n, k], -2.0, 2.0)).unwrap();
    store.insert("c", random_array(&mut rng, &[m, n], -2.0, 2.0)).unwrap();
    store.insert("bias", random_array(&mut rng, &[n], -2.0, 2.0)).unwrap();
    let targets: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let c: f64 = rng.gen_range(-3.0..3.0);

    let report = finite_difference_check(
        |t, s| {
            let a = t.param(s, "a")?;
            let out = match prim {
                Prim::MatMul => {
                    let b = t.param(s, "b")?;
                    t.matmul(a, b)?
                }
                Prim::Add => {
                    let c = t.param(s, "c")?;
                    t.add(a, c)?
                }
                Prim::AddBias => {
                    let b = t.param(s, "bias")?;
                    t.add_bias(a, b)?
                }
                Prim::Mul => {
                    let c = t.param(s, "c")?;
                    t.mul(a, c)?
                }
                Prim::Scale => t.scale(a, c)?,
                Prim::Tanh => t.tanh(a)?,
                Prim::Sigmoid => t.sigmoid(a)?,
                Prim::Relu => t.relu(a)?,
                Prim::Ln => t.ln(a)?,
                Prim::Softmax0 => t.softmax(a, 0)?,
                Prim::Softmax1 => t.softmax(a, 1)?,
                Prim::Sum => t.sum(a)?,
                Prim::Mean => t.mean(a)?,
                Prim::Max0 => t.max_axis(a, 0)?,
                Prim::Max1 => t.max_axis(a, 1)?,
                Prim::Transpose => t.transpose(a)?,
                Prim::Reshape => t.reshape(a, &[n, m])?,
                Prim::Bce => t.binary_cross_entropy(a, targets.clone())?,
            };
            readout(t, out, seed ^ 0xabc)
        },
        &store,
        FD_EPS,
    )
    .unwrap();
    // parameters the primitive does not read have zero gradients on both sides
    report.max_relative_error
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_primitive_matches_finite_differences(seed in any::<u64>()) {
        for prim in PRIMS {
            let err = check_primitive(prim, seed);
            prop_assert!(err < FD_TOL, "{prim:?} seed {seed}: {err}");
        }
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant(
        xs in prop::collection::vec(-50.0f64..50.0, 1..40),
        shift in -100.0f64..100.0,
    ) {
        let mut t = Tape::<f64>::inference();
        let a = t.constant(NumericArray::vector(xs.clone()));
        let s = t.softmax(a, 0).unwrap();
        let b = t.constant(NumericArray::vector(xs.iter().map(|x| x + shift).collect()));
        let s2 = t.softmax(b, 0).unwrap();
        let total: f64 = t.value(s).data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (p, q) in t.value(s).data().iter().zip(t.value(s2).data()) {
            prop_assert!(*p >= 0.0);
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn minmax_range_and_extremes(xs in prop::collection::vec(-1e3f64..1e3, 1..60)) {
        let out = minmax_normalize(&xs).unwrap();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        if hi - lo > 1e-8 {
            let imin = xs.iter().position(|&x| x == lo).unwrap();
            let imax = xs.iter().position(|&x| x == hi).unwrap();
            prop_assert_eq!(out[imin], 0.0);
            prop_assert_eq!(out[imax], 1.0);
        } else {
            prop_assert!(out.iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn auc_matches_pairwise_oracle(
        pairs in prop::collection::vec((0u8..8, 0u8..2), 2..80),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|(s, _)| f64::from(*s) / 8.0).collect();
        let labels: Vec<u8> = pairs.iter().map(|(_, l)| *l).collect();
        let set = ScoredSet::new(scores.clone(), labels.clone()).unwrap();
        let pos: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
        let neg: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
        prop_assume!(!pos.is_empty() && !neg.is_empty());
        let mut wins = 0.0;
        for p in &pos {
            for q in &neg {
                wins += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
            }
        }
        let oracle = wins / (pos.len() * neg.len()) as f64;
        prop_assert_eq!(auc(&set).unwrap(), oracle);
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(
        scores in prop::collection::vec(-5.0f64..5.0, 4..50),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<u8> = scores.iter().map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let a = auc(&ScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
        let b = auc(&ScoredSet::new(mapped, labels.clone()).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let c = auc(&ScoredSet::new(scores, flipped).unwrap()).unwrap();
        prop_assert!((a + c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bag_label_is_any(labels in prop::collection::vec(0u8..2, 1..100)) {
        prop_assert_eq!(bag_label(&labels).unwrap(), u8::from(labels.contains(&1)));
    }

    #[test]
    fn filter_bag_contracts(
        scores in prop::collection::vec(0.0f64..1.0, 1..40),
        threshold in 0.01f64..0.99,
        min_surviving in 1usize..4,
        positive in any::<bool>(),
    ) {
        let n = scores.len();
        let mut labels = vec![0u8; n];
        if positive {
            labels[0] = 1;
        }
        let bag = Bag::new(0, NumericArray::zeros(&[n, 2]), labels).unwrap();
        let cfg = HpmConfig { threshold, warmup_epochs: 0, min_surviving };
        let view = filter_bag(&bag, &scores, &cfg).unwrap();
        prop_assert!(!view.surviving.is_empty());
        let mut all: Vec<usize> = view.surviving.iter().chain(&view.dropped).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        if !positive {
            prop_assert!(view.dropped.is_empty());
        }
        for &j in &view.dropped {
            prop_assert!(scores[j] > threshold);
        }
        let above = scores.iter().filter(|&&s| s > threshold).count();
        let expected = if positive { (n - above).max(min_surviving.min(n)) } else { n };
        prop_assert_eq!(view.surviving.len(), expected);
    }

    #[test]
    fn pseudo_labels_for_negative_bags_are_zero(n in 1usize..60, seed in any::<u64>()) {
        let bag = Bag::new(seed as u32, NumericArray::zeros(&[n, 1]), vec![0; n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attention: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        for att in [None, Some(attention.as_slice())] {
            let set = make_pseudo_labels(&bag, att, 0).unwrap();
            prop_assert!(set.labels.iter().all(|&y| y == 0.0));
        }
    }
}

fn small_model(seed: u64, shared: bool, dim: usize) -> (MilModel, ParameterStore<f64>) {
    let mut config = ModelConfig::new(dim, shared);
    config.encoder.hidden = vec![6];
    config.encoder.embed_dim = 5;
    config.attention.hidden_dim = 4;
    let model = MilModel::new(config).unwrap();
    let store = model.init_params(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (model, store)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn attention_is_a_distribution_and_permutation_consistent(
        seed in any::<u64>(),
        n in 1usize..30,
    ) {
        let (model, store) = small_model(seed, true, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let x = random_array(&mut rng, &[n, 3], -3.0, 3.0);
        let (att, _) = model.teacher_outputs(&store, &x).unwrap();
        prop_assert!((att.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(att.iter().all(|&a| a > 0.0));

        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(n / 3);
        let (att_p, prob_p) = model.teacher_outputs(&store, &x.select_rows(&perm)).unwrap();
        let (_, prob) = model.teacher_outputs(&store, &x).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            prop_assert!((att_p[k] - att[j]).abs() < 1e-12);
        }
        prop_assert!((prob - prob_p).abs() < 1e-12);
    }
}

#[test]
fn generated_bags_obey_the_label_rule_and_ratio() {
    for ratio in [0.02, 0.1, 0.2, 0.5, 1.0] {
        let spec = GenSpec {
            train_bags: 30,
            valid_bags: 10,
            test_bags: 10,
            instances_per_bag: 20,
            dim: 4,
            positive_ratio: ratio,
            seed: 3,
            ..GenSpec::default()
        };
        let data = generate_synthetic(&spec).unwrap().dataset;
        let k = spec.positives_per_bag();
        assert_eq!(k, ((ratio * 20.0_f64).round() as usize).max(1));
        for bag in data.bags() {
            assert_eq!(bag_label(&bag.instance_labels).unwrap(), bag.label);
            let count = bag.instance_labels.iter().filter(|&&y| y == 1).count();
            assert_eq!(count, if bag.label == 1 { k } else { 0 });
        }
    }
}

#[test]
fn generation_is_a_function_of_the_seed() {
    let spec = GenSpec {
        train_bags: 10,
        valid_bags: 4,
        test_bags: 4,
        instances_per_bag: 8,
        dim: 5,
        seed: 11,
        ..GenSpec::default()
    };
    let a = generate_synthetic(&spec).unwrap().dataset;
    let b = generate_synthetic(&spec).unwrap().dataset;
    assert_eq!(a, b);
    let c = generate_synthetic(&GenSpec { seed: 12, ..spec }).unwrap().dataset;
    assert_ne!(a, c);
}

#[test]
fn teacher_and_student_losses_pass_gradient_check() {
    for seed in 0..5 {
        for shared in [true, false] {
            let (model, store) = small_model(seed, shared, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x = random_array(&mut rng, &[7, 3], -2.0, 2.0);
            let targets: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t = finite_difference_check(|t, s| model.teacher_loss(t, s, &x, 1), &store, FD_EPS).unwrap();
            assert!(t.max_relative_error < FD_TOL, "{t:?}");
            let s = finite_difference_check(|t, s| model.student_loss(t, s, &x, targets.clone()), &store, FD_EPS)
                .unwrap();
            assert!(s.max_relative_error < FD_TOL, "{s:?}");
        }
    }
}

#[test]
fn forward_is_bitwise_deterministic() {
    let (model, store) = small_model(9, false, 3);
    let x = random_array(&mut ChaCha8Rng::seed_from_u64(1), &[12, 3], -2.0, 2.0);
    let a = model.teacher_outputs(&store, &x).unwrap();
    let b = model.teacher_outputs(&store, &x).unwrap();
    assert_eq!(a.1.to_bits(), b.1.to_bits());
    assert!(a.0.iter().zip(&b.0).all(|(p, q)| p.to_bits() == q.to_bits()));
}

/// A student step moves the teacher only through a shared encoder.
#[test]
fn student_updates_reach_the_teacher_only_when_shared() {
    for shared in [true, false] {
        let (model, mut store) = small_model(4, shared, 3);
        let x = random_array(&mut ChaCha8Rng::seed_from_u64(2), &[10, 3], -2.0, 2.0);
        let before = model.teacher_outputs(&store, &x).unwrap();
        let mut tape = Tape::new();
        let loss = model.student_loss(&mut tape, &store, &x, vec![1.0; 10]).unwrap();
        tape.backward(loss, &mut store).unwrap();
        store.sgd_step(0.5).unwrap();
        let after = model.teacher_outputs(&store, &x).unwrap();
        if shared {
            assert_ne!(before, after);
        } else {
            assert_eq!(before, after);
        }
        let names: Vec<&str> = store.names().collect();
        assert_eq!(
            names.iter().any(|n| n.starts_with("student.encoder")),
            !shared,
            "{names:?}"
        );
    }
}
