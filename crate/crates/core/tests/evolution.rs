use boxseg_core::metrics::iou;
use boxseg_core::{evolve_instance, segment_image, BBox, BinaryMask, EvolutionConfig, Grid, InstanceResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square_image(sq: BBox, fg: f64, bg: f64) -> Grid {
    Grid::from_fn(64, 64, |y, x| if sq.contains(x, y) { fg } else { bg }).unwrap()
}

fn disk(y: usize, x: usize) -> bool {
    (x as f64 - 31.5).powi(2) + (y as f64 - 31.5).powi(2) <= 144.0
}

fn run(img: &Grid, features: Option<&Grid>, b: BBox, cfg: &EvolutionConfig) -> InstanceResult {
    evolve_instance(img, features, b, cfg).unwrap()
}

fn assert_descent(r: &InstanceResult) {
    for s in &r.trace.steps {
        assert!(s.energy.total <= s.energy_before + 1e-9, "step {} rose", s.step);
        assert!(s.energy.total.is_finite());
    }
}

fn assert_inside(r: &InstanceResult, b: BBox) {
    for y in 0..r.mask.height() {
        for x in 0..r.mask.width() {
            assert!(!r.mask.get(y, x) || b.contains(x, y));
        }
    }
}

#[test]
fn bright_square() {
    let sq = BBox::new(20, 20, 44, 44);
    let cfg = EvolutionConfig {
        max_steps: 200,
        ..Default::default()
    };
    let b = BBox::new(16, 16, 48, 48);
    let r = run(&square_image(sq, 1.0, 0.0), None, b, &cfg);
    assert!(iou(&r.mask, &BinaryMask::from_box(64, 64, sq)) >= 0.98);
    assert!(r.trace.converged());
    assert_descent(&r);
    assert_inside(&r, b);
}

#[test]
fn bright_disk() {
    let img = Grid::from_fn(64, 64, |y, x| disk(y, x) as u8 as f64).unwrap();
    let r = run(&img, None, BBox::new(16, 16, 48, 48), &EvolutionConfig::default());
    assert!(iou(&r.mask, &BinaryMask::from_fn(64, 64, disk)) >= 0.97);
    assert!(r.trace.converged());
    assert_descent(&r);
}

#[test]
fn constant_image_keeps_the_whole_box() {
    for v in [0.0, 0.3, 1.0] {
        let b = BBox::new(10, 12, 40, 50);
        let r = run(
            &Grid::filled(64, 64, 1, v).unwrap(),
            None,
            b,
            &EvolutionConfig::default(),
        );
        assert_eq!(r.mask, BinaryMask::from_box(64, 64, b));
        assert_descent(&r);
    }
}

#[test]
fn two_regions_converge() {
    for split in [20, 32, 44] {
        let img = Grid::from_fn(64, 64, |_, x| if x < split { 0.2 } else { 0.8 }).unwrap();
        let r = run(&img, None, BBox::new(8, 8, 56, 56), &EvolutionConfig::default());
        assert!(r.trace.converged(), "split {split}");
        assert_descent(&r);
    }
}

#[test]
fn two_squares_are_segmented_independently() {
    let a = BBox::new(6, 8, 26, 28);
    let b = BBox::new(36, 34, 58, 56);
    let img = Grid::from_fn(
        64,
        64,
        |y, x| if a.contains(x, y) || b.contains(x, y) { 0.9 } else { 0.1 },
    )
    .unwrap();
    let boxes = [BBox::new(3, 5, 29, 31), BBox::new(33, 31, 61, 59)];
    let cfg = EvolutionConfig::default();
    let serial = segment_image(&img, &boxes, None, &cfg, 1);
    let parallel = segment_image(&img, &boxes, None, &cfg, 4);
    assert_eq!(serial, parallel);
    for ((r, gt), bx) in serial.iter().zip([a, b]).zip(boxes) {
        let r = r.as_ref().unwrap();
        assert!(iou(&r.mask, &BinaryMask::from_box(64, 64, gt)) >= 0.98);
        assert_inside(r, bx);
    }
    assert!(segment_image(&img, &[], None, &cfg, 3).is_empty());
}

#[test]
fn failing_instance_does_not_affect_the_others() {
    let img = square_image(BBox::new(20, 20, 44, 44), 1.0, 0.0);
    let boxes = [BBox::new(16, 16, 48, 48), BBox::new(60, 60, 70, 70)];
    let out = segment_image(&img, &boxes, None, &EvolutionConfig::default(), 2);
    assert!(out[0].is_ok());
    assert!(out[1].is_err());
}

fn camouflage(seed: u64) -> (Grid, Grid, BBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obj = BBox::new(22, 22, 42, 42);
    let img: Vec<f64> = (0..64 * 64)
        .map(|_| if rng.gen_bool(0.5) { 0.8 } else { 0.2 })
        .collect();
    let feat: Vec<f64> = (0..64 * 64)
        .map(|i| obj.contains(i % 64, i / 64) as u8 as f64 + 0.1 * rng.gen_range(-1.0..1.0))
        .collect();
    (
        Grid::new(64, 64, 1, img).unwrap(),
        Grid::new(64, 64, 1, feat).unwrap(),
        obj,
    )
}

#[test]
fn features_carry_a_camouflaged_object() {
    let (img, feat, obj) = camouflage(3);
    let gt = BinaryMask::from_box(64, 64, obj);
    let bx = BBox::new(18, 18, 46, 46);
    let with = run(&img, Some(&feat), bx, &EvolutionConfig::default());
    assert!(iou(&with.mask, &gt) >= 0.95);
    let without = EvolutionConfig {
        lambda2: 0.0,
        ..Default::default()
    };
    assert!(iou(&run(&img, Some(&feat), bx, &without).mask, &gt) <= 0.6);
}

#[test]
fn zero_feature_weight_equals_no_features() {
    let (img, feat, _) = camouflage(5);
    let cfg = EvolutionConfig {
        lambda2: 0.0,
        ..Default::default()
    };
    let bx = BBox::new(18, 18, 46, 46);
    assert_eq!(run(&img, Some(&feat), bx, &cfg), run(&img, None, bx, &cfg));
}

#[test]
fn evolution_is_deterministic() {
    let (img, feat, _) = camouflage(9);
    let bx = BBox::new(18, 18, 46, 46);
    let cfg = EvolutionConfig::default();
    let a = run(&img, Some(&feat), bx, &cfg);
    let b = run(&img, Some(&feat), bx, &cfg);
    assert_eq!(a, b);
}

#[test]
fn doubling_the_weights_with_half_the_step_scales_the_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..4 {
        let sq = BBox::new(
            rng.gen_range(10..25),
            rng.gen_range(10..25),
            rng.gen_range(35..50),
            rng.gen_range(35..50),
        );
        let vals: Vec<f64> = (0..64 * 64)
            .map(|i| sq.contains(i % 64, i / 64) as u8 as f64 + 0.2 * rng.gen_range(-1.0..1.0))
            .collect();
        let img = Grid::new(64, 64, 1, vals).unwrap();
        let bx = BBox::new(sq.x0 - 4, sq.y0 - 4, sq.x1 + 4, sq.y1 + 4);
        let base = EvolutionConfig::default();
        let doubled = EvolutionConfig {
            lambda1: 2.0 * base.lambda1,
            lambda2: 2.0 * base.lambda2,
            alpha: 2.0 * base.alpha,
            mu_lcm: 2.0 * base.mu_lcm,
            dt: base.dt / 2.0,
            dt_max: base.dt_max / 2.0,
            ..base
        };
        let a = run(&img, None, bx, &base);
        let b = run(&img, None, bx, &doubled);
        assert_eq!(a.soft, b.soft);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.trace.steps.len(), b.trace.steps.len());
        assert_eq!(a.trace.converged_at, b.trace.converged_at);
        for (s, t) in a.trace.steps.iter().zip(&b.trace.steps) {
            assert_eq!(2.0 * s.energy.total, t.energy.total);
            assert_eq!(2.0 * s.energy_before, t.energy_before);
            assert_eq!(s.dt, 2.0 * t.dt);
            assert_eq!(s.backtracks, t.backtracks);
        }
    }
}

#[test]
fn random_boxes_keep_masks_inside_and_descend() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let cfg = EvolutionConfig {
        max_steps: 60,
        ..Default::default()
    };
    for _ in 0..10 {
        let vals: Vec<f64> = (0..40 * 40).map(|_| rng.gen()).collect();
        let img = Grid::new(40, 40, 1, vals).unwrap();
        let x0 = rng.gen_range(0..30);
        let y0 = rng.gen_range(0..30);
        let b = BBox::new(x0, y0, rng.gen_range(x0 + 2..=40), rng.gen_range(y0 + 2..=40));
        let r = run(&img, None, b, &cfg);
        assert!(r.trace.steps.len() <= cfg.max_steps);
        assert_descent(&r);
        assert_inside(&r, b);
    }
}
