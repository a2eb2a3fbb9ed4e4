// temporary calibration harness (removed before finishing)
use cascade_core::cascade::{detect, AcceptAll, HpnClassifier};
use cascade_core::eval::{match_detections, report, MetricsCounts};
use cascade_core::hpn::HpnConfig;
use cascade_core::hrn::HrnConfig;
use cascade_core::pipeline::{Paths, RunConfig, Splits, run_pipeline, stages::load_report};
use cascade_core::raster::{rasterize, read_polygons, read_scene};
use cascade_core::synth::SynthConfig;
use cascade_core::nn::load_checkpoint;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scale = args.get(1).map(|s| s.as_str()).unwrap_or("small");
    let root = std::path::PathBuf::from(format!("/tmp/calib-{scale}"));
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();

    let (n_train, n_val, n_test, size, hrn_epochs, hpn_epochs, ratio) = match scale {
        "full" => (20, 5, 5, 512, 30, 10, 6.0),
        _ => (6, 2, 2, 256, 20, 20, 6.0),
    };
    let ids = |prefix: &str, a: usize, b: usize| -> Vec<String> {
        (a..b).map(|i| format!("scene-{i:03}")).collect::<Vec<_>>()
    };
    let synth_over = if scale == "full" { SynthConfig { height: size, width: size, ..SynthConfig::default() } }
        else { SynthConfig { height: size, width: size, objects_min: 2, objects_max: 3, radius_min: 12.0, radius_max: 20.0, decoys: 4, ..SynthConfig::default() } };
    let cfg = RunConfig {
        paths: Paths {
            scenes: root.join("scenes"),
            polygons: root.join("polys"),
            masks: None,
            out: root.join("out"),
        },
        seed: 42,
        splits: Splits {
            train: ids("t", 0, n_train),
            validation: ids("v", n_train, n_train + n_val),
            test: ids("x", n_train + n_val, n_train + n_val + n_test),
        },
        hrn: HrnConfig { epochs: hrn_epochs, snapshot_interval: 10, neg_pos_ratio: ratio, lr: 0.02, ..HrnConfig::default() },
        hpn: HpnConfig { epochs: hpn_epochs, ..HpnConfig::default() },
        synth: synth_over,
    };

    let t0 = Instant::now();
    for stage in cascade_core::pipeline::STAGES {
        let st = Instant::now();
        stage.run(&cfg).unwrap();
        println!("stage {:>10}: {:?}", stage.name(), st.elapsed());
    }
    println!("pipeline total: {:?}", t0.elapsed());

    // inspect snapshots
    let snaps = std::fs::read_to_string(cfg.paths.out.join("hrn/snapshots.jsonl")).unwrap();
    println!("--- snapshots.jsonl ---\n{snaps}");
    let sel = std::fs::read_to_string(cfg.paths.out.join("hrn/selected.json")).unwrap();
    println!("--- selected ---\n{sel}");
    let mines = std::fs::read_to_string(cfg.paths.out.join("mine/negatives.jsonl")).unwrap();
    println!("--- mined negatives: {} train lines", mines.lines().count() - 1);
    let hpn_sum = std::fs::read_to_string(cfg.paths.out.join("hpn/training.json")).unwrap();
    println!("--- hpn training ---\n{hpn_sum}");
    let rep = load_report(&cfg).unwrap();
    println!("--- cascade report: micro r={:.3} p={:.3} f={:.3} counts tp={} fp={} fn={}",
        rep.micro.recall, rep.micro.precision, rep.micro.f_measure,
        rep.micro_counts.tp, rep.micro_counts.fp, rep.micro_counts.fn_);

    // HRN-alone baseline on test scenes (accept-all second stage)
    let sel_json: serde_json::Value = serde_json::from_str(&sel).unwrap();
    let hrn_path = cfg.paths.out.join(sel_json["record"]["path"].as_str().unwrap());
    let (hrn_net, _) = load_checkpoint(&hrn_path).unwrap();
    {
        use cascade_core::hrn::{validate_tile_metrics, LabeledScene};
        use cascade_core::tiling::{grid_scene, label_tiles};
        let mut test_ls = Vec::new();
        for id in &cfg.splits.test {
            let scene = read_scene(&cfg.paths.scenes.join(format!("{id}.scnr"))).unwrap();
            let polys = read_polygons(&cfg.paths.polygons.join(format!("{id}.json"))).unwrap();
            let gt = rasterize(&polys, scene.height(), scene.width()).unwrap();
            let grid = grid_scene(&scene, 16).unwrap();
            let labels = label_tiles(&grid, &gt, None).unwrap();
            test_ls.push(LabeledScene { scene, labels, validity: None });
        }
        let (r, p) = validate_tile_metrics(&hrn_net, &test_ls).unwrap();
        println!("selected HRN on TEST tiles: recall {r:.3} precision {p:.3}");
    }
    let (hpn_net, _) = load_checkpoint(&cfg.paths.out.join("hpn/best.cnnc")).unwrap();
    let mut alone = Vec::new();
    let mut casc = Vec::new();
    for id in &cfg.splits.test {
        let scene = read_scene(&cfg.paths.scenes.join(format!("{id}.scnr"))).unwrap();
        let polys = read_polygons(&cfg.paths.polygons.join(format!("{id}.json"))).unwrap();
        let gt = rasterize(&polys, scene.height(), scene.width()).unwrap();
        let d1 = detect(&scene, None, &hrn_net, &AcceptAll, &cfg.hpn, "fp").unwrap();
        let c1 = match_detections(&d1, &polys, &gt, None).unwrap();
        alone.push((id.clone(), c1));
        let d2 = detect(&scene, None, &hrn_net, &HpnClassifier { net: &hpn_net }, &cfg.hpn, "fp").unwrap();
        let c2 = match_detections(&d2, &polys, &gt, None).unwrap();
        casc.push((id.clone(), c2));
        println!("scene {id}: HRN-alone tp={} fp={} fn={} | cascade tp={} fp={} fn={}",
            c1.tp, c1.fp, c1.fn_, c2.tp, c2.fp, c2.fn_);
    }
    let ra = report(&alone).unwrap();
    let rc = report(&casc).unwrap();
    println!("HRN-alone micro: r={:.3} p={:.3} f={:.3}", ra.micro.recall, ra.micro.precision, ra.micro.f_measure);
    println!("cascade   micro: r={:.3} p={:.3} f={:.3}", rc.micro.recall, rc.micro.precision, rc.micro.f_measure);
    println!("precision gain: {:.3}, recall drop: {:.3}", rc.micro.precision - ra.micro.precision, ra.micro.recall - rc.micro.recall);
    let _ = MetricsCounts::default();
}
