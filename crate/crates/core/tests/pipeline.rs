use virtstain_core::cyclegan::{
    load_checkpoint, save_checkpoint, Checkpoint, CycleGan, DiscriminatorConfig, GeneratorConfig, TrainHyper,
};
use virtstain_core::quantify::{evaluate_pair, DensityReport, StainRef};
use virtstain_core::synthdata::{make_eval_set, make_training_set};
use virtstain_core::tiling::{collect_running_stats, run_strategy, seam_index, InferenceStrategy};
use virtstain_core::Tensor;

fn tiny_gan(seed: u64) -> CycleGan {
    let hyper = TrainHyper { seed, workers: 1, pool_capacity: 4, ..TrainHyper::default() };
    CycleGan::new(
        GeneratorConfig { base_channels: 8, n_residual_blocks: 1 },
        DiscriminatorConfig { base_channels: 8, n_layers: 2 },
        hyper,
    )
    .unwrap()
}

#[test]
fn synth_train_checkpoint_infer_eval() {
    let set = make_training_set(12, 32, 5).unwrap();
    let a: Vec<Tensor> = set.tiles_a.iter().map(|s| s.to_tensor()).collect();
    let b: Vec<Tensor> = set.tiles_b.iter().map(|s| s.to_tensor()).collect();

    let mut gan = tiny_gan(5);
    for _ in 0..3 {
        let loss = gan.train_on(&a, &b).unwrap();
        assert!(loss.entries().iter().all(|(_, v)| v.is_finite()));
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&Checkpoint::from_state(&gan, true), &path).unwrap();
    let restored = load_checkpoint(&path).unwrap().into_state(None).unwrap();
    assert_eq!(restored.networks().checksum(), gan.networks().checksum());

    let g = &restored.networks().g_ab;
    let table = collect_running_stats(g, &a).unwrap();
    let pair = &make_eval_set(1, 96, 96, 5).unwrap()[0];
    let strategies = [
        InferenceStrategy::Naive { tile: 48 },
        InferenceStrategy::GlobalStats { table, tile: 48 },
        InferenceStrategy::Sliding { effective: 32, window: 64 },
    ];
    let mut report = DensityReport::default();
    for s in &strategies {
        let out = run_strategy(g, &pair.slide_a, s).unwrap();
        assert_eq!((out.width(), out.height()), (96, 96));
        let idx = seam_index(&out, &s.boundaries(96, 96).unwrap()).unwrap();
        assert!(idx.is_finite() && idx > 0.0);
        report.rows.extend(evaluate_pair(s.name(), &pair.slide_b, &out, &StainRef::defaults()).unwrap());
    }
    assert_eq!(report.rows.len(), 6);
    assert_eq!(DensityReport::from_csv(&report.to_csv()).unwrap(), report);
}

#[test]
fn identical_seeds_train_identically() {
    let set = make_training_set(8, 32, 1).unwrap();
    let a: Vec<Tensor> = set.tiles_a.iter().map(|s| s.to_tensor()).collect();
    let b: Vec<Tensor> = set.tiles_b.iter().map(|s| s.to_tensor()).collect();
    let (mut x, mut y) = (tiny_gan(9), tiny_gan(9));
    for _ in 0..2 {
        assert_eq!(x.train_on(&a, &b).unwrap(), y.train_on(&a, &b).unwrap());
    }
    assert_eq!(x.networks(), y.networks());
}
