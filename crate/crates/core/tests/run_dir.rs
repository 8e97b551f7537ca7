use std::fs;
use std::path::Path;

use sigg_core::agents::sender_mean_signal;
use sigg_core::app::{
    export_sign_grid, load_checkpoint, parse_config, plot, read_metrics, render_sign_grid, run, save_checkpoint,
    train_on, AppError, SignGridSpec, TrainOptions,
};
use sigg_core::data::synthetic::glyph_dataset;
use sigg_core::data::Dataset;
use sigg_core::game::{sender_from_records, RunConfig};

const CONFIG: &str = r#"
regime = "manipulation_then_cooperation"
population = 2
seed = 5
epochs = 4
rounds_per_epoch = 64
switch_epoch = 2
checkpoint_every = 2

[dataset]
classes = [0, 1, 2]

[schedule]
max_solipsistic_epochs = 1
ramp_epochs = 0

[ppo]
minibatch = 16
update_epochs = 2

[probe]
threshold = 0.6
min_steps = 50
max_steps = 600
batch = 16
eval_every = 25
arch = { conv1 = 4, conv2 = 4, hidden = 16 }

[receiver_arch]
conv1 = 4
conv2 = 4
hidden = 16

[sender_arch]
hidden = 16
"#;

fn config(dir: &Path) -> RunConfig {
    let p = dir.join("run.toml");
    fs::write(&p, CONFIG).unwrap();
    parse_config(&p).unwrap()
}

fn dataset(cfg: &RunConfig) -> Dataset {
    Dataset::from_items(glyph_dataset(3, 30, 16, 1), &cfg.dataset.spec().unwrap()).unwrap()
}

fn train(cfg: &RunConfig, out: &Path, opts: &TrainOptions) -> usize {
    let mut seen = 0;
    train_on(cfg, dataset(cfg), out, opts, |_| seen += 1).unwrap();
    seen
}

#[test]
fn run_directory_is_self_describing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let out = tmp.path().join("run");
    assert_eq!(train(&cfg, &out, &TrainOptions { deterministic: true, resume: None }), 4);

    let table = read_metrics(&out.join(run::METRICS_FILE)).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!(parse_config(&out.join(run::CONFIG_FILE)).unwrap(), cfg);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join(run::MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["regime"], "manipulation_then_cooperation");
    assert!(manifest["version"].is_string());
    for e in [2, 4] {
        assert!(run::checkpoint_path(&out, e).is_file());
    }
    assert!(!run::checkpoint_path(&out, 1).exists());
    let text = fs::read_to_string(out.join(run::METRICS_FILE)).unwrap();
    let payoffs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(19).unwrap()).collect();
    assert_eq!(payoffs, ["manipulation", "manipulation", "manipulation", "cooperation"]);
}

#[test]
fn deterministic_runs_and_resume_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let opts = TrainOptions { deterministic: true, resume: None };
    train(&cfg, &a, &opts);
    train(&cfg, &b, &opts);
    let full = fs::read_to_string(a.join(run::METRICS_FILE)).unwrap();
    assert_eq!(full, fs::read_to_string(b.join(run::METRICS_FILE)).unwrap());

    // Resume into a directory holding extra rows past the checkpoint.
    fs::create_dir_all(&c).unwrap();
    fs::copy(a.join(run::METRICS_FILE), c.join(run::METRICS_FILE)).unwrap();
    let resume = TrainOptions { deterministic: true, resume: Some(run::checkpoint_path(&a, 2)) };
    assert_eq!(train(&cfg, &c, &resume), 2);
    assert_eq!(fs::read_to_string(c.join(run::METRICS_FILE)).unwrap(), full);
    assert_eq!(fs::read(run::checkpoint_path(&c, 4)).unwrap(), fs::read(run::checkpoint_path(&a, 4)).unwrap());

    let mut other = cfg.clone();
    other.seed = 6;
    let err = train_on(&other, dataset(&other), &tmp.path().join("d"), &resume, |_| {}).unwrap_err();
    assert!(err.to_string().contains("seed"), "{err}");
}

#[test]
fn checkpoint_file_roundtrip_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let out = tmp.path().join("run");
    train(&cfg, &out, &TrainOptions::default());
    let path = run::checkpoint_path(&out, 4);
    let bytes = fs::read(&path).unwrap();
    let copy = tmp.path().join("copy.ckpt");
    save_checkpoint(&load_checkpoint(&path).unwrap(), &copy).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), bytes);

    let mut corrupt = bytes.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x10;
    fs::write(&copy, &corrupt).unwrap();
    assert!(matches!(load_checkpoint(&copy), Err(sigg_core::app::CheckpointError::Crc { .. })));
    fs::write(&copy, &bytes[..bytes.len() - 9]).unwrap();
    assert!(matches!(load_checkpoint(&copy), Err(sigg_core::app::CheckpointError::Truncated { .. })));
}

#[test]
fn sign_grid_export() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let out = tmp.path().join("run");
    train(&cfg, &out, &TrainOptions::default());

    let spec = SignGridSpec { referents: vec![0, 1, 2], epochs: vec![2, 4], scale: 2, agent: 1 };
    let png_path = tmp.path().join("grid.png");
    let img = export_sign_grid(&out, &spec, &png_path).unwrap();
    assert_eq!((img.width, img.height), (2 * 16 * 2, 3 * 16 * 2));

    let decoder = png::Decoder::new(std::io::BufReader::new(fs::File::open(&png_path).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width as usize, info.height as usize), (img.width, img.height));
    assert_eq!(info.color_type, png::ColorType::Grayscale);
    assert_eq!(&buf[..info.buffer_size()], &img.pixels[..]);

    let single = SignGridSpec { referents: vec![2], epochs: vec![4], scale: 1, agent: 0 };
    let cell = render_sign_grid(&out, &single).unwrap();
    let ckpt = load_checkpoint(&run::checkpoint_path(&out, 4)).unwrap();
    let (net, canvas) = sender_from_records(&cfg, &ckpt.records, 0).unwrap();
    assert_eq!(cell.pixels, sender_mean_signal(&net, 2, &canvas).unwrap().image.to_u8());

    let missing = SignGridSpec { referents: vec![0], epochs: vec![1, 2, 3], scale: 1, agent: 0 };
    match render_sign_grid(&out, &missing) {
        Err(AppError::MissingCheckpoints { epochs, .. }) => assert_eq!(epochs, vec![1, 3]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn plots_from_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let out = tmp.path().join("run");
    train(&cfg, &out, &TrainOptions::default());
    let metrics = out.join(run::METRICS_FILE);
    plot(&metrics, &tmp.path().join("p.svg")).unwrap();
    assert!(fs::read_to_string(tmp.path().join("p.svg")).unwrap().contains("<polyline"));
    plot(&metrics, &tmp.path().join("p.png")).unwrap();
    let decoder = png::Decoder::new(std::io::BufReader::new(fs::File::open(tmp.path().join("p.png")).unwrap()));
    assert!(decoder.read_info().is_ok());
    assert!(plot(&metrics, &tmp.path().join("p.gif")).is_err());

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, fs::read_to_string(&metrics).unwrap().lines().next().unwrap()).unwrap();
    let err = plot(&empty, &tmp.path().join("e.svg")).unwrap_err();
    assert!(err.to_string().contains("no data rows"), "{err}");
}

#[test]
fn probe_command_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let out = tmp.path().join("probe");
    let summary = run::probe_on(&cfg, &dataset(&cfg), &out).unwrap();
    assert!(summary.heldout_accuracy >= 0.6);
    assert_eq!(summary.classes, vec![0, 1, 2]);
    let ckpt = load_checkpoint(&out.join(run::PROBE_WEIGHTS)).unwrap();
    assert!(ckpt.records.contains("probe/head.w"));
    assert!(out.join(run::PROBE_REPORT).is_file());
}

#[test]
fn missing_dataset_names_locations() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path());
    cfg.dataset.root = Some(tmp.path().join("nowhere"));
    let err = run::train(&cfg, &tmp.path().join("run"), &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, AppError::Data(_)), "{err}");
    assert!(err.to_string().contains("nowhere"), "{err}");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = parse_config(&path).unwrap_or_else(|e| panic!("{e}"));
            assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
