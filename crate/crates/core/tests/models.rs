use qfusion::models::{read_checkpoint, write_checkpoint, Model, ModelKind, ParamCount};
use qfusion::rng::{stream, Stream};
use qfusion::tensor::{softmax_in_place, Mode, Tape, Tensor};
use qfusion::Error;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

fn images(seed: u64, batch: usize) -> Tensor {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    Tensor::from_fn(&[batch, 1, 28, 28], |_| rng.gen_range(-1.0..1.0))
}

fn conv(cin: usize, cout: usize) -> usize {
    cin * cout * 9 + cout + 2 * cout
}

fn linear(i: usize, o: usize) -> usize {
    i * o + o
}

/// Counts from the declared layer shapes alone.
fn expected_counts(hybrid: bool) -> ParamCount {
    let backbone = conv(1, 32) + conv(32, 32) + conv(32, 64) + conv(64, 64) + conv(64, 128) + conv(128, 128);
    let first = if hybrid { 128 + 2048 } else { 2048 };
    let classifier = linear(first, 512) + linear(512, 256) + linear(256, 128) + linear(128, 2);
    let (projection, circuit, fusion) = if hybrid {
        (linear(2048, 16) + linear(2048, 4), 32, linear(10, 128) + 2 * 128)
    } else {
        (0, 0, 0)
    };
    ParamCount {
        backbone,
        projection,
        circuit,
        fusion,
        classifier,
        total: backbone + projection + circuit + fusion + classifier,
    }
}

#[test]
fn parameter_counts_follow_the_declared_shapes() {
    let hybrid = Model::new(ModelKind::Hybrid, 1).param_count();
    let classical = Model::new(ModelKind::Classical, 1).param_count();
    assert_eq!(hybrid, expected_counts(true));
    assert_eq!(classical, expected_counts(false));
    assert_eq!(hybrid.backbone, 287_328);
    assert_eq!(hybrid.total, 1_609_110);
    assert_eq!(classical.total, 1_500_898);
    assert_eq!(hybrid.circuit, 32);
    assert_eq!(
        hybrid.total - classical.total,
        hybrid.projection + hybrid.fusion + hybrid.circuit + 128 * 512
    );
}

#[test]
fn shared_seed_gives_identical_backbones() {
    let h = Model::new(ModelKind::Hybrid, 42);
    let c = Model::new(ModelKind::Classical, 42);
    let bb = |m: &Model| -> Vec<(String, Vec<f64>)> {
        m.params()
            .params()
            .iter()
            .filter(|p| p.name.starts_with("backbone."))
            .map(|p| (p.name.clone(), p.value.data().to_vec()))
            .collect()
    };
    assert_eq!(bb(&h), bb(&c));
    assert_ne!(bb(&h), bb(&Model::new(ModelKind::Hybrid, 43)));
}

#[test]
fn backbone_shape_trace_and_eval_determinism() {
    for kind in [ModelKind::Hybrid, ModelKind::Classical] {
        let mut model = Model::new(kind, 3);
        let x = images(4, 3);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let mut rng = stream(3, Stream::Dropout, 0);
        let out = model.forward(&mut tape, v, Mode::Eval, &mut rng).unwrap();
        let shapes: Vec<_> = out.blocks.iter().map(|b| tape.value(*b).shape().to_vec()).collect();
        assert_eq!(shapes, [vec![3, 32, 14, 14], vec![3, 64, 7, 7], vec![3, 128, 4, 4]]);
        assert_eq!(tape.value(out.features).shape(), &[3, 2048]);
        assert_eq!(tape.value(out.logits).shape(), &[3, 2]);
        if let Some((q1, q2)) = out.quantum {
            assert_eq!(tape.value(q1).shape(), &[3, 4]);
            assert_eq!(tape.value(q2).shape(), &[3, 6]);
        }

        let a = model.logits(&x).unwrap();
        let b = model.logits(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        for row in a.data().chunks(2) {
            let mut p = row.to_vec();
            softmax_in_place(&mut p);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn logits_finite_at_the_corners_of_the_input_cube() {
    let mut model = Model::new(ModelKind::Hybrid, 8);
    for v in [-1.0, 1.0] {
        assert!(model.logits(&Tensor::full(&[1, 1, 28, 28], v)).unwrap().is_finite());
    }
    let checker = Tensor::from_fn(&[1, 1, 28, 28], |i| if (i / 28 + i % 28) % 2 == 0 { 1.0 } else { -1.0 });
    assert!(model.logits(&checker).unwrap().is_finite());
}

#[test]
fn wrong_image_shape_is_rejected() {
    let mut model = Model::new(ModelKind::Classical, 1);
    let err = model.logits(&Tensor::zeros(&[2, 1, 27, 28])).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

/// Train-mode loss with a fixed dropout stream so repeated calls agree.
fn train_loss(model: &mut Model, x: &Tensor, labels: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let mut rng = stream(9, Stream::Dropout, 0);
    let out = model.forward(&mut tape, v, Mode::Train, &mut rng).unwrap();
    let loss = tape.cross_entropy_smoothed(out.logits, labels, 0.1).unwrap();
    tape.value(loss).item()
}

fn check_gradients(kind: ModelKind, names: &[&str]) {
    let mut model = Model::new(kind, 21);
    let x = images(22, 2);
    let labels = [0, 1];
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let mut rng = stream(9, Stream::Dropout, 0);
    let out = model.forward(&mut tape, v, Mode::Train, &mut rng).unwrap();
    let loss = tape.cross_entropy_smoothed(out.logits, &labels, 0.1).unwrap();
    tape.backward(loss).unwrap();
    let grads = model.params().collect_grads(&tape, &out.bound);

    let h = 1e-5;
    for name in names {
        let idx = model.params().params().iter().position(|p| p.name == *name).unwrap();
        // pick the element with the largest gradient to keep the check meaningful
        let (elem, &analytic) = grads[idx]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let original = model.params().params()[idx].value.data()[elem];
        model.params_mut().params_mut()[idx].value.data_mut()[elem] = original + h;
        let lp = train_loss(&mut model, &x, &labels);
        model.params_mut().params_mut()[idx].value.data_mut()[elem] = original - h;
        let lm = train_loss(&mut model, &x, &labels);
        model.params_mut().params_mut()[idx].value.data_mut()[elem] = original;
        let fd = (lp - lm) / (2.0 * h);
        assert!(
            (analytic - fd).abs() <= 1e-4 * fd.abs().max(1e-6),
            "{name}[{elem}]: analytic {analytic} vs fd {fd}"
        );
    }
}

#[test]
fn hybrid_gradient_matches_finite_differences() {
    check_gradients(
        ModelKind::Hybrid,
        &["backbone.block1.0.conv.weight", "amplitude.circuit", "angle.circuit"],
    );
}

#[test]
fn classical_gradient_matches_finite_differences() {
    check_gradients(ModelKind::Classical, &["backbone.block1.0.conv.weight", "classifier.3.weight"]);
}

#[test]
fn checkpoint_round_trip_preserves_logits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.ckpt");
    let mut model = Model::new(ModelKind::Hybrid, 17);
    let x = images(18, 2);
    // one train-mode pass so the running statistics differ from their init
    train_loss(&mut model, &x, &[0, 1]);
    write_checkpoint(&model, &path).unwrap();
    let mut back = read_checkpoint(&path).unwrap();
    assert_eq!(back.kind(), ModelKind::Hybrid);
    assert_eq!(back.seed(), 17);
    assert_eq!(model.logits(&x).unwrap(), back.logits(&x).unwrap());
}
