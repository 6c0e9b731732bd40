//! `selftest`: the synthetic acceptance checks at reduced sample counts.

use std::time::Instant;

use boxseg_core::chanvese::{chan_vese_energy_with_means, energy_gradient_with_means, region_means};
use boxseg_core::matching::{hungarian, CostMatrix};
use boxseg_core::metrics::iou;
use boxseg_core::{segment_image, BBox, BinaryMask, EvolutionConfig, Grid, LevelSetField, MatchingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rle;
use crate::synthetic::{self, Scene};

pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn defaults() -> Vec<Check> {
    let e = EvolutionConfig::default();
    let m = MatchingConfig::default();
    let want: [(&str, f64, f64); 8] = [
        ("gamma", e.gamma, 1e-4),
        ("lambda1", e.lambda1, 0.05),
        ("lambda2", e.lambda2, 5.0),
        ("k", e.k as f64, 10.0),
        ("alpha", e.alpha, 3.0),
        ("dilation", e.dilation as f64, 3.0),
        ("beta1", m.beta1, 2.0),
        ("beta2", m.beta2, 6.0),
    ];
    want.iter()
        .map(|&(name, have, expect)| check(format!("default {name}"), have == expect, format!("{have}")))
        .collect()
}

fn gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let window = BBox::new(0, 0, 8, 8);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let data = Grid::new(8, 8, 1, (0..64).map(|_| rng.gen()).collect()).unwrap();
        let phi = LevelSetField::new(window, (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let gamma = [0.0, 1e-4, 0.3][trial % 3];
        let means = region_means(&data, &phi).unwrap();
        let g = energy_gradient_with_means(&data, &phi, &means, gamma).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..64)
            .map(|i| {
                let at = |d: f64| {
                    let mut v = phi.values().to_vec();
                    v[i] += d;
                    let p = LevelSetField::new(window, v).unwrap();
                    chan_vese_energy_with_means(&data, &p, &means, gamma).unwrap().total()
                };
                (at(h) - at(-h)) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    check(
        "gradient vs finite differences",
        worst < 1e-4,
        format!("max rel err {worst:.2e}"),
    )
}

fn run_scene(scene: &Scene, config: &EvolutionConfig, min_iou: f64) -> Check {
    let start = Instant::now();
    let out = segment_image(&scene.image, &scene.boxes, scene.features.as_ref(), config, 1);
    let mut ok = true;
    let mut ious = Vec::new();
    let mut steps = Vec::new();
    for ((res, truth), bx) in out.iter().zip(&scene.truth).zip(&scene.boxes) {
        let Ok(r) = res else {
            ok = false;
            continue;
        };
        let descends = r.trace.steps.iter().all(|s| s.energy.total <= s.energy_before + 1e-9);
        let inside = (0..r.mask.height()).all(|y| (0..r.mask.width()).all(|x| !r.mask.get(y, x) || bx.contains(x, y)));
        ok &= descends && inside && r.trace.converged();
        steps.push(r.trace.steps.len().to_string());
        if let Some(t) = truth {
            let v = iou(&r.mask, t);
            ok &= v >= min_iou;
            ious.push(format!("{v:.4}"));
        }
    }
    let mut detail = format!("steps [{}]", steps.join(", "));
    if !ious.is_empty() {
        detail += &format!(", IoU [{}]", ious.join(", "));
    }
    detail += &format!(", {:.2}s", start.elapsed().as_secs_f64());
    check(scene.name.clone(), ok, detail)
}

fn camouflage() -> Vec<Check> {
    let scene = synthetic::camouflage(3);
    let truth = scene.truth[0].as_ref().unwrap();
    let score = |config: &EvolutionConfig| {
        segment_image(&scene.image, &scene.boxes, scene.features.as_ref(), config, 1)[0]
            .as_ref()
            .map(|r| iou(&r.mask, truth))
            .unwrap_or(0.0)
    };
    let with = score(&EvolutionConfig::default());
    let without = score(&EvolutionConfig {
        lambda2: 0.0,
        ..Default::default()
    });
    vec![
        check("camouflage with features", with >= 0.95, format!("IoU {with:.4}")),
        check(
            "camouflage without features",
            without <= 0.6,
            format!("IoU {without:.4}"),
        ),
    ]
}

fn brute_force(cost: &CostMatrix, r: usize, used: &mut Vec<bool>) -> f64 {
    if r == cost.rows() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for c in 0..cost.cols() {
        if !used[c] {
            used[c] = true;
            best = best.min(cost.get(r, c) + brute_force(cost, r + 1, used));
            used[c] = false;
        }
    }
    best
}

fn hungarian_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for _ in 0..50 {
        let r = rng.gen_range(1..=5);
        let c = rng.gen_range(r..=5);
        let cost = CostMatrix::new(r, c, (0..r * c).map(|_| rng.gen_range(0..20) as f64).collect()).unwrap();
        if hungarian(&cost).total_cost(&cost) != brute_force(&cost, 0, &mut vec![false; c]) {
            bad += 1;
        }
    }
    check("hungarian vs brute force", bad == 0, format!("{bad} of 50 differ"))
}

fn rle_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let (h, w) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let p = rng.gen::<f64>();
        let bits = (0..h * w).map(|_| rng.gen_bool(p) as u8).collect();
        let m = BinaryMask::new(h, w, bits).unwrap();
        if rle::decode(&rle::encode(&m)).as_ref() != Ok(&m) {
            bad += 1;
        }
    }
    check("RLE round trip", bad == 0, format!("{bad} of 1000 differ"))
}

pub fn run() -> Vec<Check> {
    let config = EvolutionConfig::default();
    let mut checks = defaults();
    checks.push(gradient());
    for scene in synthetic::convergence_suite() {
        let min = if scene.name == "bright disk" { 0.97 } else { 0.98 };
        checks.push(run_scene(&scene, &config, min));
    }
    checks.extend(camouflage());
    checks.push(hungarian_check());
    checks.push(rle_check());
    checks
}
