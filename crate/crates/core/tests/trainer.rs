mod common;

use std::fs;

use tpl_core::checkpoint::Checkpoint;
use tpl_core::head::{decode_keypoints, render_target_heatmaps};
use tpl_core::metrics::read_rows;
use tpl_core::trainer::{
    checkpoint_path, evaluate, evaluate_with, run_plan, Stage, StagePlan, REPORT_NAME,
};
use tpl_core::{Error, PoseModel};

#[test]
fn warmup_freezes_the_trunk() {
    let run = common::micro_run("freeze");
    let data = common::micro_dataset(5, 12, 3);
    let dir = tempfile::tempdir().unwrap();
    let plan = StagePlan::new(&run.train, true).only(&[Stage::Warmup]);
    let summary = run_plan(&run, &data, dir.path(), &plan).unwrap();
    let initial = PoseModel::<f32>::new(&run.model, run.train.rng_seed).unwrap();
    let warm: PoseModel<f32> = Checkpoint::load(&summary.checkpoints[0].1)
        .unwrap()
        .restore_model()
        .unwrap();
    let mut changed = 0;
    for (id, name, v) in warm.params.iter() {
        let before = initial.params.value(id);
        let same = v.iter().zip(before.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        if name.starts_with("encoder.") || name.starts_with("decoder.") {
            assert!(same, "{name} moved during warm-up");
        } else if !same {
            changed += 1;
        }
    }
    assert!(changed > 0);
}

#[test]
fn identical_seeds_give_identical_reports() {
    let data = common::micro_dataset(5, 12, 4);
    let run = common::micro_run("det");
    let plan = StagePlan::new(&run.train, false);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_plan(&run, &data, a.path(), &plan).unwrap();
    run_plan(&run, &data, b.path(), &plan).unwrap();
    let ra = fs::read(a.path().join("det").join(REPORT_NAME)).unwrap();
    let rb = fs::read(b.path().join("det").join(REPORT_NAME)).unwrap();
    assert_eq!(ra, rb);
    let rows = read_rows(&a.path().join("det").join(REPORT_NAME)).unwrap();
    let stages: Vec<_> = rows.iter().map(|r| (r.stage.as_str(), r.split.as_str())).collect();
    assert_eq!(stages.first(), Some(&("pretrain", "train")));
    assert_eq!(stages.last(), Some(&("finetune", "test")));
    assert!(rows.iter().any(|r| r.stage == "warmup" && r.split == "test"));
}

#[test]
fn resume_reproduces_an_uninterrupted_run() {
    let data = common::micro_dataset(5, 12, 5);
    let mut run = common::micro_run("resume");
    run.train.checkpoint_every = 1;
    let plan = StagePlan::new(&run.train, true);
    let full = tempfile::tempdir().unwrap();
    run_plan(&run, &data, full.path(), &plan).unwrap();

    let cut = tempfile::tempdir().unwrap();
    run_plan(&run, &data, cut.path(), &plan).unwrap();
    let run_dir = cut.path().join("resume");
    let last = checkpoint_path(&run_dir, Stage::Finetune, run.train.finetune_epochs);
    fs::remove_file(&last).unwrap();
    run_plan(&run, &data, cut.path(), &plan).unwrap();

    let a = fs::read(checkpoint_path(&full.path().join("resume"), Stage::Finetune, 3)).unwrap();
    let b = fs::read(&last).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read(full.path().join("resume").join(REPORT_NAME)).unwrap(),
        fs::read(run_dir.join(REPORT_NAME)).unwrap()
    );
}

#[test]
fn warmup_without_pretraining_is_refused() {
    let data = common::micro_dataset(5, 12, 6);
    let run = common::micro_run("prereq");
    let plan = StagePlan::new(&run.train, false).only(&[Stage::Warmup]);
    let dir = tempfile::tempdir().unwrap();
    match run_plan(&run, &data, dir.path(), &plan) {
        Err(Error::MissingPrerequisite(path)) => assert!(path.ends_with("pretrain/epoch_1.ckpt")),
        other => panic!("expected a missing-prerequisite error, got {other:?}"),
    }
}

#[test]
fn fine_tuning_loss_descends() {
    let data = common::micro_dataset(6, 16, 7);
    let mut run = common::micro_run("descent");
    run.train.finetune_epochs = 10;
    let dir = tempfile::tempdir().unwrap();
    let summary = run_plan(&run, &data, dir.path(), &StagePlan::new(&run.train, true)).unwrap();
    let losses: Vec<f64> = summary
        .rows
        .iter()
        .filter(|r| r.stage == "finetune" && r.split == "train")
        .map(|r| r.loss_total.unwrap())
        .collect();
    assert_eq!(losses.len(), 10);
    assert!(losses[9] < losses[0], "{losses:?}");
}

#[test]
fn evaluation_is_repeatable() {
    let data = common::micro_dataset(5, 12, 8);
    let run = common::micro_run("eval");
    let model = PoseModel::<f32>::new(&run.model, 1).unwrap();
    let a = evaluate(&model, &data.test, &data.skeleton).unwrap();
    let b = evaluate(&model, &data.test, &data.skeleton).unwrap();
    assert_eq!(a, b);
    assert!(a.windows > 0);
    let long = tpl_core::ModelConfig {
        frames_t: 16,
        ..run.model.clone()
    };
    let model = PoseModel::<f32>::new(&long, 1).unwrap();
    let r = evaluate(&model, &data.test, &data.skeleton);
    assert!(matches!(r, Err(Error::EmptySplit(_))));
}

#[test]
fn ground_truth_stuffing_oracle() {
    let data = common::micro_dataset(6, 16, 9);
    let cfg = common::micro_run("oracle").model;
    let report = evaluate_with(&data.test, cfg.frames_t, &data.skeleton, cfg.cell_pitch_cm, |_, gt| {
        let (maps, _) = render_target_heatmaps(gt, &cfg);
        Ok(decode_keypoints(&maps, &cfg).0)
    })
    .unwrap();
    assert_eq!(report.pckh, 100.0, "{report:?}");
    assert!(report.mpjpe_cm < 0.5 * cfg.cell_pitch_cm, "{report:?}");
}
