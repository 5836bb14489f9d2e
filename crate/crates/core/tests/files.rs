use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ranet_core::featblocks::{RadarBranchParams, ScseParams, TinyConvStack, WeightFile};
use ranet_core::pipeline::{run_scene, PipelineConfig, WeightSource};
use ranet_core::scene_io::{generate_synthetic_scenes, load_scenes, save_scenes, ImageSize, SynthConfig};

fn small_scenes(n: usize, seed: u64) -> Vec<ranet_core::scene_io::SceneRecord> {
    let cfg = SynthConfig {
        scene_count: n,
        image_size: ImageSize::square(96),
        ..SynthConfig::default()
    };
    generate_synthetic_scenes(&cfg, seed).unwrap()
}

#[test]
fn scene_file_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenes.json");
    let scenes = small_scenes(25, 3);
    save_scenes(&path, &scenes).unwrap();
    assert_eq!(load_scenes(&path).unwrap(), scenes);
}

#[test]
fn missing_scene_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_scenes(&dir.path().join("absent.json")).is_err());
}

#[test]
fn weight_file_reproduces_seeded_networks() {
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let rgb = TinyConvStack::random(cfg.channels, &mut rng);
    let radar = RadarBranchParams::random(cfg.channels, &mut rng);
    let gate = ScseParams::random(cfg.channels, cfg.scse_reduction, cfg.combine, &mut rng).unwrap();
    let mut wf = WeightFile::default();
    wf.put_tiny_stack("rgb", &rgb);
    wf.put_radar_branch("radar", &radar);
    wf.put_scse("scse", &gate);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.json");
    wf.save(&path).unwrap();
    assert_eq!(WeightFile::load(&path).unwrap(), wf);

    let from_file = PipelineConfig {
        weights: WeightSource::File(path),
        ..cfg.clone()
    };
    for scene in small_scenes(3, 8) {
        let a = run_scene(&scene, &cfg).unwrap();
        let b = run_scene(&scene, &from_file).unwrap();
        assert!(a.same_result(&b), "{}", scene.scene_id);
    }
}

#[test]
fn truncated_weight_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.json");
    std::fs::write(&path, r#"{"rgb.conv1.weight": {"shape": [8, 3, 3, 3], "values": [0.0]}}"#).unwrap();
    assert!(WeightFile::load(&path).is_err());
    let cfg = PipelineConfig {
        weights: WeightSource::File(path),
        ..PipelineConfig::default()
    };
    assert!(run_scene(&small_scenes(1, 0)[0], &cfg).is_err());
}
