//! Cross-module properties on small random networks.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nhash::codes::{encode, encode_batch, LayerMask};
use nhash::data;
use nhash::geometry::{avg_stochastic_diameter, region_interval, sample_direction, DiameterConfig};
use nhash::harness::{
    read_records, run_sweep_with_data, Factor, SweepConfig, SweepData, SweepValue, RECORDS_FILE,
};
use nhash::nn::{checkpoint, train, MlpModel, TrainConfig};
use nhash::probes::redundancy;

fn random_point(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))
}

#[test]
fn logits_are_affine_inside_a_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..10 {
        let model = MlpModel::init(&[6, 9, 7, 3], seed).unwrap();
        let x = random_point(6, &mut rng);
        let u = sample_direction(6, &mut rng);
        let s = region_interval(&model, x.view(), u.view(), 1e6).unwrap();
        let (a, b) = (s.t_lo.max(-1.0) * 0.9, s.t_hi.min(1.0) * 0.9);
        let at = |t: f64| model.forward((&x + &(t * &u)).view()).unwrap().logits;
        let mid = 0.5 * (a + b);
        let lhs = &at(mid) * 2.0;
        let rhs = &at(a) + &at(b);
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-9 * (1.0 + l.abs()), "{l} vs {r}");
        }
    }
}

#[test]
fn code_is_constant_on_the_interval_and_changes_past_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = MlpModel::init(&[4, 12, 12, 2], 3).unwrap();
    for _ in 0..20 {
        let x = random_point(4, &mut rng);
        let u = sample_direction(4, &mut rng);
        let s = region_interval(&model, x.view(), u.view(), 1e6).unwrap();
        let code = encode(&model, x.view()).unwrap();
        for f in [0.0, 0.25, 0.5, 0.75, 0.999] {
            let t = s.t_lo + f * (s.t_hi - s.t_lo);
            let t = t.clamp(s.t_lo * 0.999, s.t_hi * 0.999);
            assert_eq!(encode(&model, (&x + &(t * &u)).view()).unwrap(), code);
        }
        if s.bounded_hi {
            let past = s.t_hi * 1.001 + 1e-9;
            assert_ne!(encode(&model, (&x + &(past * &u)).view()).unwrap(), code);
        }
    }
}

#[test]
fn diameters_are_symmetric_under_direction_flip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = MlpModel::init(&[5, 10, 10, 3], 8).unwrap();
    let x = random_point(5, &mut rng);
    let u = sample_direction(5, &mut rng);
    let fwd = region_interval(&model, x.view(), u.view(), 1e6).unwrap();
    let back = region_interval(&model, x.view(), (-&u).view(), 1e6).unwrap();
    assert!((fwd.diameter - back.diameter).abs() < 1e-9);
    assert!((fwd.t_hi + back.t_lo).abs() < 1e-9);
}

#[test]
fn scaling_inputs_of_a_biasless_network_scales_diameters() {
    let mut model = MlpModel::init(&[3, 8, 8, 2], 4).unwrap();
    for b in model.biases_mut() {
        b.fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_point(3, &mut rng);
    let u = sample_direction(3, &mut rng);
    let one = region_interval(&model, x.view(), u.view(), 1e6).unwrap();
    let three = region_interval(&model, (&x * 3.0).view(), u.view(), 1e6).unwrap();
    if one.is_bounded() {
        assert!((three.diameter - 3.0 * one.diameter).abs() < 1e-8 * three.diameter);
    }
}

#[test]
fn diameter_summary_matches_individual_intervals() {
    let model = MlpModel::init(&[4, 6, 3], 1).unwrap();
    let anchors = data::random_pixels(15, 4, 3, 2).x;
    let cfg = DiameterConfig { seed: 3, ..DiameterConfig::default() };
    let a = avg_stochastic_diameter(&model, anchors.view(), &cfg).unwrap();
    let b = avg_stochastic_diameter(&model, anchors.view(), &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.bounded_count + a.unbounded_count + a.skipped.len(), 15);
    let bounded: Vec<f64> = a.samples.iter().filter(|s| s.is_bounded()).map(|s| s.diameter).collect();
    if let Some(mean) = a.mean {
        assert!((mean - bounded.iter().sum::<f64>() / bounded.len() as f64).abs() < 1e-12);
    }
    for s in &a.samples {
        let x = anchors.row(s.anchor_index);
        let again = region_interval(&model, x, s.direction.view(), cfg.cap).unwrap();
        assert_eq!(again.diameter, s.diameter);
    }
}

#[test]
fn adding_layers_to_the_code_never_increases_redundancy() {
    let model = MlpModel::init(&[8, 5, 5, 5, 2], 6).unwrap();
    let ds = data::random_pixels(400, 8, 2, 1);
    let full = encode_batch(&model, ds.x.view()).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=3 {
        let mask = LayerMask::new(1..=k).unwrap();
        let codes: Vec<_> = full.iter().map(|c| c.restrict(&mask).unwrap()).collect();
        let r = redundancy(&codes).unwrap().ratio;
        assert!(r <= last, "layers 1..={k}: {r} > {last}");
        last = r;
    }
}

#[test]
fn checkpoint_round_trip_preserves_codes_and_predictions() {
    let ds = data::random_pixels(200, 10, 3, 4);
    let cfg = TrainConfig { epochs: 3, seed: 1, use_batch_norm: true, ..TrainConfig::default() };
    let model = train(MlpModel::init(&[10, 7, 7, 3], 1).unwrap(), &ds, &cfg, &[]).unwrap().model;
    let mut buf = Vec::new();
    checkpoint::write_checkpoint(&model, &mut buf).unwrap();
    let back = checkpoint::read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(encode_batch(&model, ds.x.view()).unwrap(), encode_batch(&back, ds.x.view()).unwrap());
    assert_eq!(model.predict(ds.x.view()).unwrap(), back.predict(ds.x.view()).unwrap());
}

#[test]
fn sweeps_are_reproducible_across_worker_counts() {
    let data = SweepData {
        train: data::random_pixels(150, 12, 3, 1),
        test: data::random_pixels(60, 12, 3, 2),
    };
    let run = |workers: usize| {
        let mut cfg = SweepConfig::new(Factor::Width, vec![SweepValue::Int(3), SweepValue::Int(9)]);
        cfg.seeds = vec![0, 1];
        cfg.checkpoint_epochs = vec![0, 2];
        cfg.workers = workers;
        let dir = tempfile::tempdir().unwrap();
        run_sweep_with_data(&cfg, &data, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap();
        assert_eq!(read_records(text.as_bytes()).unwrap().len(), 8);
        text
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn wider_untrained_networks_separate_more_inputs() {
    let ds = data::random_pixels(300, 20, 10, 3);
    let ratio = |width: usize| {
        let model = MlpModel::init(&[20, width, 10], 0).unwrap();
        redundancy(&encode_batch(&model, ds.x.view()).unwrap()).unwrap().ratio
    };
    let (narrow, wide) = (ratio(4), ratio(200));
    assert!(wide < narrow, "width 200: {wide}, width 4: {narrow}");
    assert!(wide < 0.01, "{wide}");
}
