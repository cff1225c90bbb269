use super::*;
use crate::config::{ExperimentConfig, RegimeKind};
use crate::data::PlanBatch;
use crate::error::Error;
use crate::learners::{ParamRole, PnKind};
use crate::models::{Checkpoint, ModelKind};
use crate::numerics::Tensor;

fn tiny(regime: RegimeKind, pn: PnKind, out: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        name: "t".into(),
        regime,
        output_dir: out.to_path_buf(),
        cold_start: true,
        ..ExperimentConfig::default()
    };
    c.model.pn = pn;
    c.model.dccnn.cascades = 1;
    c.model.dccnn.channels = 4;
    c.data.height = 32;
    c.data.width = 32;
    c.data.train_per_anatomy = 4;
    c.data.val_per_anatomy = 2;
    c.schedule.batch_size = 2;
    c.schedule.oaon_epochs = 2;
    c.schedule.maon_epochs = 2;
    c.schedule.mapn_epochs = 2;
    c.schedule.warmup_epochs = 1;
    c
}

fn trainer(c: &ExperimentConfig) -> Trainer {
    Trainer::new(c, &build_dataset(c).unwrap()).unwrap()
}

fn batch(anatomy: usize) -> PlanBatch {
    PlanBatch {
        anatomy,
        indices: vec![0, 1],
    }
}

fn snapshot(t: &Trainer) -> Vec<(String, Tensor)> {
    t.network
        .registry
        .records()
        .map(|(tag, name, e)| (format!("{tag}/{name}"), e.value.clone()))
        .collect()
}

fn changed(a: &[(String, Tensor)], b: &[(String, Tensor)]) -> Vec<String> {
    a.iter().zip(b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.clone()).collect()
}

#[test]
fn warmup_step_touches_only_unfrozen_tensors_of_the_batch_anatomy() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(&tiny(RegimeKind::Mapn, PnKind::Pn4, dir.path()));
    assert!(t.in_warmup());
    let before = snapshot(&t);
    t.train_step(&batch(1)).unwrap();
    let moved = changed(&before, &snapshot(&t));
    assert!(!moved.is_empty());
    for key in &moved {
        assert!(key.starts_with("specific:brain/"), "{key}");
    }
    for (key, _) in &before {
        if key.starts_with("shared/") {
            let role = t.network.registry.by_key(key).unwrap().role;
            assert_eq!(role, ParamRole::Conv3x3);
        }
    }
    // after warm-up the shared convolutions train too
    t.state.epoch = 1;
    let before = snapshot(&t);
    t.train_step(&batch(2)).unwrap();
    let moved = changed(&before, &snapshot(&t));
    assert!(moved.iter().any(|k| k.starts_with("shared/")));
    assert!(moved.iter().all(|k| k.starts_with("shared/") || k.starts_with("specific:cardiac/")));
}

#[test]
fn repeated_steps_on_one_batch_reduce_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(RegimeKind::Maon, PnKind::Pn0, dir.path());
    c.schedule.learning_rate = 1e-3;
    let mut t = trainer(&c);
    let losses: Vec<f64> = (0..100).map(|_| t.train_step(&batch(0)).unwrap()).collect();
    assert!(losses[99] < 0.7 * losses[0], "{} -> {}", losses[0], losses[99]);
    assert_eq!(t.state.step, 100);
}

#[test]
fn non_finite_weights_abort_with_the_batch_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(&tiny(RegimeKind::Maon, PnKind::Pn0, dir.path()));
    let key = t.network.registry.shared().keys().next().unwrap().clone();
    t.network.registry.by_key_mut(&format!("shared/{key}")).unwrap().value.data_mut()[0] = f64::NAN;
    match t.train_step(&batch(2)) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("cardiac") && msg.contains("[0, 1]"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert!(t.adam.moments.is_empty());
}

#[test]
fn mapn_pn0_without_warmup_matches_maon() {
    let dir = tempfile::tempdir().unwrap();
    let maon = tiny(RegimeKind::Maon, PnKind::Pn0, dir.path());
    let mut mapn = tiny(RegimeKind::Mapn, PnKind::Pn0, dir.path());
    mapn.schedule.warmup_epochs = 0;
    let (mut a, mut b) = (trainer(&maon), trainer(&mapn));
    a.train_epoch().unwrap();
    b.train_epoch().unwrap();
    assert_eq!(a.network.records(), b.network.records());
}

#[test]
fn warm_started_mapn_reproduces_maon_outputs() {
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Dccnn, ModelKind::Unet] {
        let mut maon_cfg = tiny(RegimeKind::Maon, PnKind::Pn0, dir.path());
        maon_cfg.model.kind = kind;
        maon_cfg.model.unet.levels = 2;
        maon_cfg.model.unet.base_channels = 4;
        let mut maon = trainer(&maon_cfg);
        maon.train_epoch().unwrap();
        for pn in [PnKind::Pn1, PnKind::Pn2, PnKind::Pn3, PnKind::Pn4] {
            let mut cfg = maon_cfg.clone();
            cfg.regime = RegimeKind::Mapn;
            cfg.model.pn = pn;
            let mut mapn = trainer(&cfg);
            let report = warm_start(&mut mapn.network, &maon.checkpoint()).unwrap();
            assert!(report.unused.is_empty(), "{:?}", report.unused);
            assert!(report.seeded > 0);
            for a in 0..3 {
                let x = maon.reconstruct(a, crate::data::Split::Val).unwrap();
                let y = mapn.reconstruct(a, crate::data::Split::Val).unwrap();
                for (p, q) in x.iter().zip(&y) {
                    let d = p.re.iter().chain(&p.im).zip(q.re.iter().chain(&q.im)).map(|(u, v)| (u - v).abs());
                    let d = d.fold(0.0, f64::max);
                    if pn == PnKind::Pn2 {
                        // the gate starts at 1/2, so outputs differ
                        continue;
                    }
                    assert!(d < 1e-10, "{kind} {pn}: {d}");
                }
            }
        }
    }
}

#[test]
fn warm_start_reports_every_incompatibility() {
    let dir = tempfile::tempdir().unwrap();
    let maon = trainer(&tiny(RegimeKind::Maon, PnKind::Pn0, dir.path()));
    let mut cfg = tiny(RegimeKind::Mapn, PnKind::Pn4, dir.path());
    cfg.model.dccnn.channels = 6;
    let mut mapn = trainer(&cfg);
    let before = mapn.network.records();
    match warm_start(&mut mapn.network, &maon.checkpoint()) {
        Err(Error::Checkpoint(msg)) => assert!(msg.lines().count() > 3, "{msg}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(mapn.network.records(), before);
    let empty = Checkpoint {
        meta: serde_json::Value::Null,
        records: Vec::new(),
    };
    assert!(warm_start(&mut mapn.network, &empty).unwrap_err().to_string().contains("absent"));
}

#[test]
fn oaon_trains_a_single_anatomy() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(RegimeKind::Oaon, PnKind::Pn0, dir.path());
    c.oaon_anatomy = "brain".into();
    let mut t = trainer(&c);
    assert_eq!(t.network.registry.labels(), ["brain"]);
    let plan = t.epoch_plan().unwrap();
    assert_eq!(plan.len(), 2);
    let losses = t.train_epoch().unwrap();
    assert_eq!(losses.len(), 1);
    assert_eq!(losses[0].0, "brain");
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg_a = tiny(RegimeKind::Mapn, PnKind::Pn4, a.path());
    cfg_a.schedule.mapn_epochs = 3;
    let mut cfg_b = cfg_a.clone();
    cfg_b.output_dir = b.path().to_path_buf();
    let full = run_regime(&cfg_a, &RunOptions::default(), |_| {}).unwrap();
    assert!(full.complete);
    let first = run_regime(
        &cfg_b,
        &RunOptions {
            resume: false,
            stop_after: Some(1),
        },
        |_| {},
    )
    .unwrap();
    assert!(!first.complete);
    assert!(run_regime(&cfg_b, &RunOptions::default(), |_| {}).is_err());
    let resumed = run_regime(
        &cfg_b,
        &RunOptions {
            resume: true,
            stop_after: None,
        },
        |_| {},
    )
    .unwrap();
    let ca = Checkpoint::load(&full.dir.join(LAST_CKPT)).unwrap();
    let cb = Checkpoint::load(&resumed.dir.join(LAST_CKPT)).unwrap();
    assert_eq!(ca.records, cb.records);
    assert_eq!(ca.meta["state"], cb.meta["state"]);
    let ma = std::fs::read_to_string(full.dir.join(METRICS_FILE)).unwrap();
    let mb = std::fs::read_to_string(resumed.dir.join(METRICS_FILE)).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.lines().count(), 1 + 3 * 6);
    assert_eq!(full.eval.last, resumed.eval.last);
    for f in [CONFIG_FILE, RUN_FILE, EVAL_FILE, BEST_CKPT, "masks/knee_val.txt", "masks/cardiac_train.txt"] {
        assert!(full.dir.join(f).exists(), "{f}");
    }
    let info = RunInfo::load(&full.dir).unwrap();
    assert_eq!(info.anatomies, ["knee", "brain", "cardiac"]);
    assert_eq!(info.config_hash, cfg_a.hash());
}

#[test]
fn mapn_requires_a_warm_start_unless_cold() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(RegimeKind::Mapn, PnKind::Pn4, dir.path());
    c.cold_start = false;
    match run_regime(&c, &RunOptions::default(), |_| {}) {
        Err(Error::Config(msg)) => assert!(msg.starts_with("warm_start"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reset_flag_clears_shared_moments_at_warmup_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(RegimeKind::Mapn, PnKind::Pn4, dir.path());
    c.model.dccnn.dc = crate::models::DcMode::Soft;
    c.schedule.reset_adam_after_warmup = true;
    let mut t = trainer(&c);
    t.train_epoch().unwrap();
    let key = "shared/c0.dc.lambda";
    let steps = t.adam.moments[key].step;
    assert_eq!(steps, 6);
    t.train_epoch().unwrap();
    assert_eq!(t.adam.moments[key].step, 6);
    assert!(t.adam.moments.keys().any(|k| k.starts_with("shared/") && k != key));
}

#[test]
fn zero_filled_baseline_is_below_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let t = trainer(&tiny(RegimeKind::Maon, PnKind::Pn0, dir.path()));
    let r = t.zero_filled_report().unwrap();
    assert_eq!(r.anatomies.len(), 3);
    for a in &r.anatomies {
        assert!(a.psnr_mean > 10.0 && a.psnr_mean < 60.0, "{a:?}");
        assert_eq!(a.slices, 2);
    }
}
