//! Canned experiment suites reproducing the published comparisons.
//!
//! Each preset is an ordered list of labelled configs; the CLI runs
//! them into `out/<label>/`.  Deterministic all-RN entries use a single
//! repetition, stochastic ones the standard 20 (5 for desk-scale
//! variants sized for a laptop-class afternoon run).

use crate::format::FloatFormat;
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::problems::SettingId;
use crate::rounding::RoundingMode;

const NAMES: &[&str] = &[
    "setting1",
    "setting2",
    "setting2-desk",
    "mlr-modes",
    "mlr-signed",
    "mlr-lr-sweep",
    "mlr-desk",
    "nn-modes",
    "nn-signed",
    "nn-desk",
];

pub fn preset_names() -> &'static [&'static str] {
    NAMES
}

fn sr_eps(e: f64) -> RoundingMode {
    RoundingMode::sr_eps(e).expect("valid epsilon")
}

fn ssr(e: f64) -> RoundingMode {
    RoundingMode::signed_sr_eps(e).expect("valid epsilon")
}

type Modes = (RoundingMode, RoundingMode, RoundingMode);

const RN3: Modes = (
    RoundingMode::NearestEven,
    RoundingMode::NearestEven,
    RoundingMode::NearestEven,
);
const SR3: Modes = (RoundingMode::Sr, RoundingMode::Sr, RoundingMode::Sr);

fn entry(
    kind: ExperimentKind,
    label: &str,
    format: FloatFormat,
    modes: Modes,
    reps: u32,
    iters: u64,
) -> (String, ExperimentConfig) {
    let mut cfg = ExperimentConfig::new(kind);
    cfg.label = label.to_string();
    cfg.format = format;
    (cfg.mode_grad, cfg.mode_mul, cfg.mode_sub) = modes;
    cfg.reps = reps;
    cfg.iters = iters;
    (label.to_string(), cfg)
}

fn quad(setting: SettingId, dim: usize, label: &str, format: FloatFormat, modes: Modes, reps: u32)
    -> (String, ExperimentConfig)
{
    let (label, mut cfg) = entry(ExperimentKind::Quadratic, label, format, modes, reps, 4000);
    cfg.setting = setting;
    cfg.dim = dim;
    (label, cfg)
}

fn quadratic_suite(setting: SettingId, dim: usize) -> Vec<(String, ExperimentConfig)> {
    let bf16 = FloatFormat::bfloat16();
    vec![
        quad(setting, dim, "b32-rn", FloatFormat::binary32(), RN3, 1),
        quad(setting, dim, "bf16-sr", bf16, SR3, 20),
        quad(
            setting,
            dim,
            "bf16-signed0.4",
            bf16,
            (RoundingMode::Sr, RoundingMode::Sr, ssr(0.4)),
            20,
        ),
    ]
}

fn mlr(label: &str, modes: Modes, reps: u32) -> (String, ExperimentConfig) {
    entry(ExperimentKind::Mlr, label, FloatFormat::binary8(), modes, reps, 150)
}

fn nn(label: &str, modes: Modes, reps: u32) -> (String, ExperimentConfig) {
    entry(ExperimentKind::Nn, label, FloatFormat::binary8(), modes, reps, 50)
}

fn with_t(mut e: (String, ExperimentConfig), t: f64) -> (String, ExperimentConfig) {
    e.1.t = Some(t);
    e
}

fn mlr_baseline() -> (String, ExperimentConfig) {
    let (l, mut cfg) = mlr("b32-rn", RN3, 1);
    cfg.format = FloatFormat::binary32();
    (l, cfg)
}

fn nn_baseline() -> (String, ExperimentConfig) {
    let (l, mut cfg) = nn("b32-rn", RN3, 1);
    cfg.format = FloatFormat::binary32();
    (l, cfg)
}

fn mlr_modes_suite() -> Vec<(String, ExperimentConfig)> {
    let sr = RoundingMode::Sr;
    vec![
        mlr_baseline(),
        mlr("b8-rn", (RoundingMode::NearestEven, RoundingMode::NearestEven, sr), 20),
        mlr("b8-sr", SR3, 20),
        mlr("b8-sreps0.2", (sr_eps(0.2), sr_eps(0.2), sr), 20),
        mlr("b8-sreps0.4", (sr_eps(0.4), sr_eps(0.4), sr), 20),
    ]
}

fn mlr_signed_suite() -> Vec<(String, ExperimentConfig)> {
    let sr = RoundingMode::Sr;
    vec![
        mlr_baseline(),
        mlr("b8-sr", SR3, 20),
        mlr("b8-muleps0.1", (sr, sr_eps(0.1), sr), 20),
        mlr("b8-signed0.1", (sr, sr_eps(0.1), ssr(0.1)), 20),
        mlr("b8-signed0.2", (sr, sr_eps(0.2), ssr(0.2)), 20),
        with_t(mlr("b8-signed0.1-t0.1", (sr, sr_eps(0.1), ssr(0.1)), 20), 0.1),
    ]
}

fn mlr_lr_suite() -> Vec<(String, ExperimentConfig)> {
    let mut out = vec![with_t(mlr_baseline(), 1.25)];
    for t in [0.1, 0.25, 0.5, 1.0, 1.25] {
        out.push(with_t(mlr(&format!("b8-sr-t{t}"), SR3, 20), t));
        out.push(with_t(
            mlr(
                &format!("b8-signed0.1-t{t}"),
                (sr_eps(0.1), ssr(0.1), ssr(0.1)),
                20,
            ),
            t,
        ));
    }
    out
}

fn nn_modes_suite() -> Vec<(String, ExperimentConfig)> {
    let sr = RoundingMode::Sr;
    vec![
        nn_baseline(),
        nn("b8-rn", RN3, 1),
        nn("b8-sr", SR3, 20),
        nn("b8-sreps0.2", (sr_eps(0.2), sr_eps(0.2), sr), 20),
        nn("b8-sreps0.4", (sr_eps(0.4), sr_eps(0.4), sr), 20),
    ]
}

fn nn_signed_suite() -> Vec<(String, ExperimentConfig)> {
    vec![
        nn_baseline(),
        nn("b8-sr", SR3, 20),
        nn("b8-signed0.1", (sr_eps(0.1), sr_eps(0.1), ssr(0.1)), 20),
        nn("b8-signed0.2", (sr_eps(0.2), sr_eps(0.2), ssr(0.2)), 20),
    ]
}

fn desk(mut suite: Vec<(String, ExperimentConfig)>, subset: usize) -> Vec<(String, ExperimentConfig)> {
    for (_, cfg) in &mut suite {
        cfg.subset_train = Some(subset);
        if cfg.reps > 5 {
            cfg.reps = 5;
        }
    }
    suite
}

/// Looks up a suite of labelled experiment configs by name.
pub fn preset(name: &str) -> Option<Vec<(String, ExperimentConfig)>> {
    match name {
        "setting1" => Some(quadratic_suite(SettingId::One, 1000)),
        "setting2" => Some(quadratic_suite(SettingId::Two, 1000)),
        "setting2-desk" => Some(quadratic_suite(SettingId::Two, 200)),
        "mlr-modes" => Some(mlr_modes_suite()),
        "mlr-signed" => Some(mlr_signed_suite()),
        "mlr-lr-sweep" => Some(mlr_lr_suite()),
        "mlr-desk" => {
            let sr = RoundingMode::Sr;
            Some(desk(
                vec![
                    mlr_baseline(),
                    mlr("b8-rn", (RoundingMode::NearestEven, RoundingMode::NearestEven, sr), 20),
                    mlr("b8-sr", SR3, 20),
                    with_t(mlr("b8-signed0.1-t0.1", (sr, sr_eps(0.1), ssr(0.1)), 20), 0.1),
                ],
                10000,
            ))
        }
        "nn-modes" => Some(nn_modes_suite()),
        "nn-signed" => Some(nn_signed_suite()),
        "nn-desk" => {
            let sr = RoundingMode::Sr;
            Some(desk(
                vec![
                    nn_baseline(),
                    nn("b8-rn", RN3, 1),
                    nn("b8-sr", SR3, 20),
                    nn("b8-sreps0.2", (sr_eps(0.2), sr_eps(0.2), sr), 20),
                    nn("b8-signed0.1", (sr_eps(0.1), sr_eps(0.1), ssr(0.1)), 20),
                ],
                4000,
            ))
        }
        _ => None,
    }
}
