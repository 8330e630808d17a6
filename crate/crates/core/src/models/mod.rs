//! Feature-only, history and multi-horizon forecasters.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{Checkpoint, FORMAT as CHECKPOINT_FORMAT, VERSION as CHECKPOINT_VERSION};
pub use network::{ForecastOutput, Model, Pass};
pub use spec::{ModelKind, ModelSpec, Route};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParameterStore, Tensor};
    use crate::data::{Batch, FeatureLayout, WindowSample};
    use crate::nn::{CellKind, DropoutMode, DropoutSpec};
    use crate::rng::StreamRng;
    use rand::{Rng, SeedableRng};

    const LAYOUT: FeatureLayout = FeatureLayout { n_static: 2, n_dynamic: 3 };

    fn sample<R: Rng>(r: &mut R, past: usize, future: usize) -> WindowSample {
        let mut row = || (0..LAYOUT.n_features()).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let past_x: Vec<_> = (0..past).map(|_| row()).collect();
        let future_x: Vec<_> = (0..future).map(|_| row()).collect();
        WindowSample {
            defect_id: "x".into(),
            start: 0,
            past_x,
            past_y: (0..past).map(|j| j as f64 * 0.1).collect(),
            past_interpolated: vec![false; past],
            past_mask: vec![true; past],
            future_x,
            future_y: vec![0.5; future],
            future_mask: vec![true; future],
            n_valid: future,
            last_measured_value: 0.0,
            preceding_length: None,
        }
    }

    fn small_spec(kind: ModelKind) -> ModelSpec {
        let mut s = ModelSpec::new(kind, LAYOUT);
        s.hidden = 5;
        s.static_widths = vec![3];
        s.dynamic_widths = vec![4];
        s.head_widths = vec![3];
        s
    }

    fn build(spec: ModelSpec, seed: u64) -> (Model, ParameterStore) {
        let mut store = ParameterStore::new();
        let m = Model::new(spec, &mut store, &mut StreamRng::seed_from_u64(seed)).unwrap();
        (m, store)
    }

    fn eval(model: &Model, store: &ParameterStore, batch: &Batch) -> (Tensor, Option<Tensor>) {
        let mut r = StreamRng::seed_from_u64(0);
        let mut pass = Pass { dropout: DropoutSpec::off(), rng: &mut r };
        model.predict(store, batch, &mut pass).unwrap()
    }

    fn batch_for(spec: &ModelSpec, n: usize, seed: u64) -> (Vec<WindowSample>, Batch) {
        let mut r = StreamRng::seed_from_u64(seed);
        let samples: Vec<_> = (0..n).map(|_| sample(&mut r, spec.past, spec.future)).collect();
        let refs: Vec<&WindowSample> = samples.iter().collect();
        let b = Batch::from_samples(&refs, LAYOUT).unwrap();
        (samples, b)
    }

    #[test]
    fn output_shapes_for_every_kind() {
        for kind in ModelKind::ALL {
            let spec = small_spec(kind);
            let (m, store) = build(spec.clone(), 1);
            let (_, b) = batch_for(&spec, 6, 2);
            let (y, s) = eval(&m, &store, &b);
            assert_eq!(y.shape(), &[6, spec.future], "{kind}");
            assert_eq!(s.is_some(), kind == ModelKind::Bmh);
            if let Some(s) = s {
                assert_eq!(s.shape(), &[6, spec.future]);
                assert!(s.all_finite());
            }
        }
    }

    #[test]
    fn feature_models_reject_history_and_others_require_it() {
        let spec = small_spec(ModelKind::GruFc);
        let (m, store) = build(spec.clone(), 1);
        let mut hist = spec.clone();
        hist.past = 2;
        let (_, b) = batch_for(&hist, 2, 3);
        let mut r = StreamRng::seed_from_u64(0);
        let mut pass = Pass { dropout: DropoutSpec::off(), rng: &mut r };
        assert!(m.predict(&store, &b, &mut pass).is_err());

        let spec = small_spec(ModelKind::GruFcLh);
        let (m, store) = build(spec.clone(), 1);
        let mut flat = spec.clone();
        flat.past = 0;
        let (_, b) = batch_for(&flat, 2, 3);
        assert!(m.predict(&store, &b, &mut pass).is_err());
    }

    #[test]
    fn dropout_off_is_deterministic_and_active_is_not() {
        let spec = small_spec(ModelKind::Bmh);
        let (m, store) = build(spec.clone(), 4);
        let (_, b) = batch_for(&spec, 4, 5);
        assert_eq!(eval(&m, &store, &b), eval(&m, &store, &b));
        let mut r = StreamRng::seed_from_u64(9);
        let mut pass = Pass {
            dropout: DropoutSpec::new(0.3, DropoutMode::InferenceActive).unwrap(),
            rng: &mut r,
        };
        let a = m.predict(&store, &b, &mut pass).unwrap();
        let c = m.predict(&store, &b, &mut pass).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn zero_weights_give_constant_output() {
        let spec = small_spec(ModelKind::LstmFc);
        let (m, mut store) = build(spec.clone(), 4);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.value_mut(id).data_mut().fill(0.0);
        }
        let (_, b1) = batch_for(&spec, 3, 1);
        let (_, b2) = batch_for(&spec, 3, 2);
        let (y1, _) = eval(&m, &store, &b1);
        let (y2, _) = eval(&m, &store, &b2);
        assert_eq!(y1, y2);
        assert!(y1.data().iter().all(|&v| v == y1.data()[0]));
    }

    #[test]
    fn batch_permutation_permutes_outputs() {
        let spec = small_spec(ModelKind::GruFcLh);
        let (m, store) = build(spec.clone(), 6);
        let (samples, b) = batch_for(&spec, 4, 7);
        let perm = [2usize, 0, 3, 1];
        let refs: Vec<&WindowSample> = perm.iter().map(|&i| &samples[i]).collect();
        let bp = Batch::from_samples(&refs, LAYOUT).unwrap();
        let (y, _) = eval(&m, &store, &b);
        let (yp, _) = eval(&m, &store, &bp);
        for (row, &src) in perm.iter().enumerate() {
            assert_eq!(yp.row(row), y.row(src));
        }
    }

    #[test]
    fn multi_horizon_uses_both_paths_and_ignores_targets() {
        for cell in [CellKind::Gru, CellKind::Lstm] {
            let mut spec = small_spec(ModelKind::Mh);
            spec.cell = cell;
            spec.past = 1;
            let (m, store) = build(spec.clone(), 8);
            let (mut samples, b) = batch_for(&spec, 3, 9);
            let (y, _) = eval(&m, &store, &b);

            let mut zero_future = samples.clone();
            for s in &mut zero_future {
                s.future_x.iter_mut().for_each(|r| r.fill(0.0));
            }
            let refs: Vec<_> = zero_future.iter().collect();
            let (y_f, _) = eval(&m, &store, &Batch::from_samples(&refs, LAYOUT).unwrap());

            let mut zero_past = samples.clone();
            for s in &mut zero_past {
                s.past_y.fill(0.7);
            }
            let refs: Vec<_> = zero_past.iter().collect();
            let (y_p, _) = eval(&m, &store, &Batch::from_samples(&refs, LAYOUT).unwrap());

            let max_diff = |a: &Tensor, b: &Tensor| {
                a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            };
            assert!(max_diff(&y, &y_f) > 1e-9);
            assert!(max_diff(&y, &y_p) > 1e-9);

            for s in &mut samples {
                s.future_y = vec![123.0; s.future_len()];
            }
            let refs: Vec<_> = samples.iter().collect();
            let (y_t, _) = eval(&m, &store, &Batch::from_samples(&refs, LAYOUT).unwrap());
            assert_eq!(y, y_t);
        }
    }

    #[test]
    fn parameter_count_depends_only_on_spec() {
        for kind in ModelKind::ALL {
            let (_, a) = build(small_spec(kind), 1);
            let (_, b) = build(small_spec(kind), 99);
            assert_eq!(a.num_scalars(), b.num_scalars());
            assert_eq!(a.len(), b.len());
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let spec = small_spec(ModelKind::Bmh);
        let (m, store) = build(spec.clone(), 12);
        let ck = Checkpoint { spec: spec.clone(), scaler: None, store };
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back.spec, spec);
        for ((n1, t1), (n2, t2)) in ck.store.iter().zip(back.store.iter()) {
            assert_eq!(n1, n2);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
        let (_, b) = batch_for(&spec, 2, 1);
        assert_eq!(eval(&m, &ck.store, &b), eval(&back.model().unwrap(), &back.store, &b));
        assert!(Checkpoint::from_json("{\"format\":\"x\"}").is_err());
    }
}
