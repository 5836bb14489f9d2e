use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ranet_core::anchors::Placement;
use ranet_core::featblocks::NoiseConfig;
use ranet_core::metrics::{eval_report, ground_truths, Detection, GroundTruth};
use ranet_core::oracle::self_check;
use ranet_core::pipeline::{run_all, run_experiment, summarize, Mode, PipelineConfig};
use ranet_core::rpn_targets::BestOfTwoMode;
use ranet_core::scene_io::{
    generate_synthetic_scenes, load_scenes, parse_scenes, save_scenes, ImageSize, PlacementMix, SceneRecord,
    ShapeModel, SynthConfig,
};

use crate::{BestOfTwoArg, Cli, Command, EvalArgs, GenArgs, ModeArg, PlacementArg, RunArgs, SelfcheckArgs, ShapeArg};

const FIXTURES: &str = include_str!("../fixtures/selfcheck_scenes.json");

pub enum Failure {
    /// Exit code 1.
    Check(String),
    /// Exit code 2.
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

/// Contents of `--config`. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub synth: SynthConfig,
    pub synth_seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub compare: Option<PipelineConfig>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn workers(cli: &Cli) -> anyhow::Result<usize> {
    match cli.workers {
        Some(0) => bail!("--workers must be at least 1"),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn write_json(out: Option<&PathBuf>, value: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::GenScenes(args) => gen_scenes(cli, config, args),
        Command::Run(args) => run(cli, config, args),
        Command::Eval(args) => eval(cli, args),
        Command::Selfcheck(args) => selfcheck(cli, args),
    }
}

fn placement_mix(p: PlacementArg) -> PlacementMix {
    match p {
        PlacementArg::Uniform => PlacementMix::uniform(),
        PlacementArg::Edges => PlacementMix::edges(),
        PlacementArg::Top => PlacementMix::only(Placement::Top),
        PlacementArg::Bottom => PlacementMix::only(Placement::Bottom),
        PlacementArg::Left => PlacementMix::only(Placement::Left),
        PlacementArg::Right => PlacementMix::only(Placement::Right),
        PlacementArg::Center => PlacementMix::only(Placement::Center),
    }
}

fn gen_scenes(cli: &Cli, config: ConfigFile, args: &GenArgs) -> Result<(), Failure> {
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| anyhow!("gen-scenes needs --out <path>"))?;
    let mut synth = config.synth;
    if let Some(n) = args.count {
        synth.scene_count = n;
    }
    if let Some(s) = args.image_size {
        synth.image_size = ImageSize::square(s);
    }
    if let Some(p) = args.p_hit {
        synth.p_hit = p;
    }
    if let Some(p) = args.placement {
        synth.placement_mix = placement_mix(p);
    }
    if let Some(j) = args.jitter {
        synth.jitter_sigma = j;
    }
    if let Some(n) = args.min_boxes {
        synth.boxes_per_scene[0] = n;
    }
    if let Some(n) = args.max_boxes {
        synth.boxes_per_scene[1] = n;
    }
    if let Some(shape) = args.shape {
        synth.shape = match shape {
            ShapeArg::Uniform => SynthConfig::default().shape,
            ShapeArg::AnchorLike => ShapeModel::AnchorLike {
                scales: vec![16.0, 32.0, 64.0, 128.0],
                ratios: vec![0.5, 1.0, 2.0],
                size_jitter: 0.1,
            },
        };
    }
    let seed = cli.seed.or(config.synth_seed).unwrap_or(0);
    let scenes = generate_synthetic_scenes(&synth, seed).map_err(|e| anyhow!(e))?;
    save_scenes(out, &scenes).map_err(|e| anyhow!(e))?;

    let boxes: usize = scenes.iter().map(|s| s.gt_boxes.len()).sum();
    let points: usize = scenes.iter().map(|s| s.radar_points.len()).sum();
    let hit_fraction = if boxes == 0 { 0.0 } else { points as f64 / boxes as f64 };
    let summary = json!({
        "scenes": scenes.len(),
        "gt_boxes": boxes,
        "radar_points": points,
        "hit_fraction": hit_fraction,
    });
    let meta = json!({
        "command": "gen-scenes",
        "seed": seed,
        "effective_config": { "synth": synth },
        "summary": summary,
    });
    write_json(Some(&sidecar(out)), &meta)?;
    println!(
        "scenes: {}, gt boxes: {boxes}, radar points: {points}, hit fraction: {hit_fraction:.4}",
        scenes.len()
    );
    Ok(())
}

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Ffpn => Mode::Ffpn,
        ModeArg::Ranet => Mode::Ranet,
        ModeArg::Biranet => Mode::Biranet,
    }
}

fn run(cli: &Cli, config: ConfigFile, args: &RunArgs) -> Result<(), Failure> {
    let scenes = load_scenes(&args.scenes).map_err(|e| anyhow!(e))?;
    let workers = workers(cli)?;
    let mut a = config.pipeline;
    if let Some(s) = cli.seed {
        a.seed = s;
        a.assignment.seed = s;
    }
    if let Some(m) = args.mode {
        a.mode = mode(m);
    }
    if let Some(b) = args.best_of_two {
        a.best_of_two = match b {
            BestOfTwoArg::PerGt => BestOfTwoMode::PerGt,
            BestOfTwoArg::Pairwise => BestOfTwoMode::Pairwise,
        };
    }
    if args.noise {
        a.noise = NoiseConfig::evaluation();
    }
    if args.geometric {
        a.compute_features = false;
    }
    a.validate().map_err(|e| anyhow!(e))?;

    let mut b = config.compare;
    let comparing = args.compare_mode.is_some() || args.compare_center_only || args.compare_noise;
    if comparing {
        let mut cb = b.take().unwrap_or_else(|| a.clone());
        if let Some(m) = args.compare_mode {
            cb.mode = mode(m);
        }
        if args.compare_center_only {
            cb.anchors = cb.anchors.center_only();
        }
        if args.compare_noise {
            cb.noise = if a.noise.is_identity() {
                NoiseConfig::evaluation()
            } else {
                NoiseConfig::default()
            };
        }
        b = Some(cb);
    }

    if let Some(dir) = &args.dump_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let dump_cfg = PipelineConfig {
            dump_intermediates: true,
            ..a.clone()
        };
        for out in run_all(&scenes, &dump_cfg, workers).map_err(|e| anyhow!(e))? {
            let path = dir.join(format!("{}.json", out.scene_id));
            let text = serde_json::to_string(&out).map_err(|e| anyhow!(e))?;
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
    }

    let report = match &b {
        Some(cb) => {
            cb.validate().map_err(|e| anyhow!(e))?;
            serde_json::to_value(run_experiment(&scenes, &a, cb, workers).map_err(|e| anyhow!(e))?)
        }
        None => serde_json::to_value(summarize("a", &scenes, &a, workers).map_err(|e| anyhow!(e))?),
    }
    .map_err(|e| anyhow!(e))?;
    let artifact = json!({
        "command": "run",
        "seed": a.seed,
        "workers": workers,
        "scenes_file": args.scenes,
        "effective_config": { "a": a, "b": b },
        "report": report,
    });
    write_json(cli.out.as_ref(), &artifact)?;
    Ok(())
}

fn load_gts(path: &Path) -> anyhow::Result<Vec<GroundTruth>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match parse_scenes(&text) {
        Ok(scenes) => Ok(ground_truths(&scenes)),
        Err(scene_err) => serde_json::from_str::<Vec<GroundTruth>>(&text).map_err(|gt_err| {
            anyhow!(
                "{} is neither a scene file ({scene_err}) nor a ground-truth list ({gt_err})",
                path.display()
            )
        }),
    }
}

fn eval(cli: &Cli, args: &EvalArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.dets).with_context(|| format!("reading {}", args.dets.display()))?;
    let dets: Vec<Detection> =
        serde_json::from_str(&text).with_context(|| format!("parsing detections {}", args.dets.display()))?;
    let gts = load_gts(&args.gts)?;
    let report = eval_report(&dets, &gts);
    let artifact = json!({
        "command": "eval",
        "seed": cli.seed,
        "effective_config": { "dets": args.dets, "gts": args.gts },
        "detections": dets.len(),
        "ground_truths": gts.len(),
        "defined": report.is_defined(),
        "report": report,
    });
    write_json(cli.out.as_ref(), &artifact)?;
    Ok(())
}

fn selfcheck(cli: &Cli, args: &SelfcheckArgs) -> Result<(), Failure> {
    let (source, scenes): (String, Vec<SceneRecord>) = match &args.fixtures {
        Some(p) => (p.display().to_string(), load_scenes(p).map_err(|e| anyhow!(e))?),
        None => ("built-in".into(), parse_scenes(FIXTURES).map_err(|e| anyhow!(e))?),
    };
    let seed = cli.seed.unwrap_or(0);
    let outcomes = self_check(&scenes, args.cases, seed);
    for o in &outcomes {
        eprintln!(
            "[{}] {}: {} cases, max error {:.1e} (tolerance {:.0e})",
            if o.passed() { "PASS" } else { "FAIL" },
            o.name,
            o.cases,
            o.max_error,
            o.tolerance
        );
    }
    let artifact = json!({
        "command": "selfcheck",
        "seed": seed,
        "effective_config": { "fixtures": source, "cases": args.cases },
        "checks": outcomes,
    });
    write_json(cli.out.as_ref(), &artifact)?;
    match outcomes.iter().find(|o| !o.passed()) {
        Some(o) => Err(Failure::Check(format!(
            "{}: {}",
            o.name,
            o.first_failure.as_deref().unwrap_or("unknown case")
        ))),
        None => Ok(()),
    }
}
