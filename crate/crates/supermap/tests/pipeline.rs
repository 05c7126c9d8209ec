use std::path::Path;

use supermap::bulk::{generate_pairs, BulkConfig};
use supermap::config::layered;
use supermap::dataset_io::{
    bin_path, build_dataset, load_manifest, load_split, manifest_path, read_bin, split_path, DatasetConfig,
    SplitCounts,
};
use supermap::model_io::{load_model, load_model_file, save_model, ModelFile, ModelProvenance};
use supermap::parallel::ShardedExecutor;
use supermap::training::{train_model, TrainJob};
use supermap::ExitKind;
use supermap_core::dataset::DatasetSplit;
use supermap_core::generators::SamplerConfig;
use supermap_core::neural::{init_model, BatchExecutor, SerialExecutor, TrainConfig};
use supermap_core::Grid;

fn small_config(seed: u64) -> DatasetConfig {
    DatasetConfig {
        seed,
        counts: SplitCounts {
            train: 40,
            val: 10,
            test: 10,
        },
        sampler: SamplerConfig {
            max_stream_dim: 20,
            ..SamplerConfig::default()
        },
        binary: true,
        ..DatasetConfig::default()
    }
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn datasets_are_byte_identical_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config(5);
    let ma = build_dataset(&cfg, a.path(), "d", None).unwrap();
    let mb = build_dataset(&cfg, b.path(), "d", None).unwrap();
    assert_eq!(ma, mb);
    for split in DatasetSplit::ALL {
        assert_eq!(read(&split_path(a.path(), "d", split)), read(&split_path(b.path(), "d", split)));
        assert_eq!(read(&bin_path(a.path(), "d", split)), read(&bin_path(b.path(), "d", split)));
    }
    let c = tempfile::tempdir().unwrap();
    build_dataset(&small_config(6), c.path(), "d", None).unwrap();
    assert_ne!(
        read(&split_path(a.path(), "d", DatasetSplit::Train)),
        read(&split_path(c.path(), "d", DatasetSplit::Train))
    );
}

#[test]
fn binary_split_matches_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&small_config(1), dir.path(), "d", None).unwrap();
    let manifest = manifest_path(dir.path(), "d");
    for split in DatasetSplit::ALL {
        let json = load_split(&manifest, split).unwrap();
        let bin = read_bin(&bin_path(dir.path(), "d", split)).unwrap();
        assert_eq!(json, bin);
    }
}

#[test]
fn corrupted_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    build_dataset(&small_config(2), dir.path(), "d", None).unwrap();
    let manifest = manifest_path(dir.path(), "d");
    let path = split_path(dir.path(), "d", DatasetSplit::Val);
    let mut bytes = read(&path);
    let i = bytes.iter().position(|b| b.is_ascii_digit()).unwrap();
    bytes[i] = if bytes[i] == b'9' { b'8' } else { bytes[i] + 1 };
    std::fs::write(&path, &bytes).unwrap();
    let e = load_split(&manifest, DatasetSplit::Val).unwrap_err();
    assert_eq!(e.exit_kind(), ExitKind::Config);
    assert!(load_split(&manifest, DatasetSplit::Train).is_ok());

    let text = std::fs::read_to_string(&manifest).unwrap().replace("\"seed\": 2", "\"seed\": 3");
    std::fs::write(&manifest, text).unwrap();
    assert!(load_manifest(&manifest).is_err());

    let bin = bin_path(dir.path(), "d", DatasetSplit::Test);
    let bytes = read(&bin);
    std::fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_bin(&bin).is_err());
}

#[test]
fn model_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let mut model = init_model(&[26, 7, 13], 4).unwrap();
    model.with_grids(Some(Grid::TARGET), Grid::TARGET).unwrap();
    let prov = ModelProvenance {
        best_epoch: Some(3),
        ..ModelProvenance::default()
    };
    save_model(&model, prov.clone(), &path).unwrap();
    let (back, p) = load_model_file(&path).unwrap();
    assert_eq!(p, prov);
    assert_eq!(back.params().len(), model.params().len());
    assert!(back.params().iter().zip(model.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(back, model);

    let mut file: ModelFile = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    file.layers[0].biases = file.layers[1].biases.clone();
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    assert_eq!(load_model(&path).unwrap_err().exit_kind(), ExitKind::Config);
}

#[derive(Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
struct Demo {
    seed: u64,
    name: Option<String>,
    sampler: SamplerConfig,
}

impl Default for Demo {
    fn default() -> Self {
        Demo {
            seed: 1,
            name: None,
            sampler: SamplerConfig::default(),
        }
    }
}

#[test]
fn config_layers_apply_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    std::fs::write(&file, r#"{"seed": 5, "sampler": {"max_stream_dim": 12}}"#).unwrap();
    let d = Demo::default();
    let c: Demo = layered(&d, Some(&file), &[]).unwrap();
    assert_eq!((c.seed, c.sampler.max_stream_dim), (5, 12));
    assert_eq!(c.sampler.p_stay, d.sampler.p_stay);
    let c: Demo = layered(
        &d,
        Some(&file),
        &["seed=9".into(), "name=run".into(), "sampler.method_mix.2=0.5".into()],
    )
    .unwrap();
    assert_eq!((c.seed, c.name.as_deref()), (9, Some("run")));
    assert_eq!(c.sampler.method_mix[2], 0.5);
    for bad in ["seeds=1", "sampler.max_stream_dim.x=1", "sampler.method_mix.7=1", "seed"] {
        assert_eq!(layered(&d, None, &[bad.to_string()]).unwrap_err().exit_kind(), ExitKind::Config, "{bad}");
    }
    std::fs::write(&file, r#"{"sed": 5}"#).unwrap();
    assert!(layered(&d, Some(&file), &[]).is_err());
}

#[test]
fn sharded_gradient_equals_serial() {
    let mut model = init_model(&[26, 16, 13], 8).unwrap();
    model.with_grids(Some(Grid::TARGET), Grid::TARGET).unwrap();
    let x: Vec<f64> = (0..26 * 37).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = (0..13 * 37).map(|i| (i as f64 * 0.11).cos()).collect();
    let mut g1 = vec![0.0; model.param_count()];
    let l1 = SerialExecutor.loss_and_gradient(&model, &x, &y, 0.5, &mut g1).unwrap();
    for shards in [1, 2, 5, 37, 64] {
        let mut g2 = vec![1.0; model.param_count()];
        let l2 = ShardedExecutor::new(shards).loss_and_gradient(&model, &x, &y, 0.5, &mut g2).unwrap();
        assert!((l1.total - l2.total).abs() <= 1e-12 * l1.total.abs().max(1.0));
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-6), "{shards}: {a} vs {b}");
        }
    }
}

#[test]
fn sharded_training_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(9);
    cfg.binary = false;
    build_dataset(&cfg, dir.path(), "d", None).unwrap();
    let m = manifest_path(dir.path(), "d");
    let (tr, va) = (load_split(&m, DatasetSplit::Train).unwrap(), load_split(&m, DatasetSplit::Val).unwrap());
    let job = TrainJob {
        train: TrainConfig {
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        },
        shards: 3,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_model(&tr, &va, &job, &mut |_| {}).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
}

#[test]
fn bulk_method_mix_matches_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BulkConfig {
        seed: 3,
        count: 5000,
        sampler: SamplerConfig {
            max_stream_dim: 30,
            ..SamplerConfig::default()
        },
    };
    let m = generate_pairs(&cfg, dir.path(), None).unwrap();
    assert_eq!(m.pairs.len(), 5000);
    for (share, w) in m.method_shares().iter().zip(cfg.sampler.method_mix) {
        assert!((share - w).abs() < 0.03, "{:?}", m.method_shares());
    }
    let p = &m.pairs[17];
    let text = std::fs::read(dir.path().join(&p.first)).unwrap();
    assert_eq!(supermap::formats::sha256_hex(&text), p.first_sha256);
}
