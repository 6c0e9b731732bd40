use boxseg_core::chanvese::{
    box_projection_cost, chan_vese_energy, chan_vese_energy_with_means, energy_gradient_with_means, region_means,
};
use boxseg_core::grid::{axis_projection, dice_1d, normalize, sigmoid_field, Axis};
use boxseg_core::lcm::{affinity_for, combined_affinity, normalize_affinity, pixel_affinity, propagate, spatial_field};
use boxseg_core::matching::{center_region_assign, hungarian, instance_cost, CostMatrix};
use boxseg_core::treefilter::{build_grid_graph, mst, tree_filter};
use boxseg_core::{BBox, BinaryMask, Grid, LevelSetField, SoftMask};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..9, 1usize..9)
}

fn field(h: usize, w: usize, spread: f64) -> impl Strategy<Value = LevelSetField> {
    prop::collection::vec(-spread..spread, h * w)
        .prop_map(move |v| LevelSetField::new(BBox::new(0, 0, w, h), v).unwrap())
}

fn grid(h: usize, w: usize, c: usize) -> impl Strategy<Value = Grid> {
    prop::collection::vec(0.0..1.0f64, h * w * c).prop_map(move |v| Grid::new(h, w, c, v).unwrap())
}

fn soft(h: usize, w: usize) -> impl Strategy<Value = SoftMask> {
    prop::collection::vec(0.0..=1.0f64, h * w).prop_map(move |v| SoftMask::new(h, w, v).unwrap())
}

fn boxed(w: usize, h: usize) -> impl Strategy<Value = BBox> {
    (0..w, 0..h)
        .prop_flat_map(move |(x0, y0)| ((x0 + 1)..=w, (y0 + 1)..=h).prop_map(move |(x1, y1)| BBox::new(x0, y0, x1, y1)))
}

proptest! {
    #[test]
    fn sigmoid_field_is_monotone(
        (a, bump) in dims().prop_flat_map(|(h, w)| (field(h, w, 40.0), prop::collection::vec(0.0..5.0f64, h * w)))
    ) {
        let b = LevelSetField::new(a.window(), a.values().iter().zip(&bump).map(|(v, d)| v + d).collect()).unwrap();
        let (ma, mb) = (sigmoid_field(&a), sigmoid_field(&b));
        for (lo, hi) in ma.values().iter().zip(mb.values()) {
            prop_assert!(lo <= hi);
        }
    }

    #[test]
    fn projections_are_bounded_and_commute_with_union(
        (a, b) in dims().prop_flat_map(|(h, w)| (soft(h, w), soft(h, w)))
    ) {
        let (h, w) = (a.height(), a.width());
        let union = SoftMask::from_fn(h, w, |y, x| a.get(y, x).max(b.get(y, x))).unwrap();
        for axis in [Axis::X, Axis::Y] {
            let (pa, pb, pu) = (axis_projection(&a, axis), axis_projection(&b, axis), axis_projection(&union, axis));
            for i in 0..pu.len() {
                prop_assert!(pu[i] <= 1.0);
                prop_assert_eq!(pu[i], pa[i].max(pb[i]));
            }
        }
        let px = axis_projection(&a, Axis::X);
        let py = axis_projection(&a, Axis::Y);
        for y in 0..h {
            for x in 0..w {
                prop_assert!(px[x] >= a.get(y, x) && py[y] >= a.get(y, x));
            }
        }
    }

    #[test]
    fn dice_is_symmetric_and_bounded(
        (p, g) in (1usize..20).prop_flat_map(|n| (prop::collection::vec(0.0..1.0f64, n), prop::collection::vec(0.0..1.0f64, n)))
    ) {
        let d = dice_1d(&p, &g).unwrap();
        prop_assert_eq!(d, dice_1d(&g, &p).unwrap());
        prop_assert!((0.0..=1.0 + 1e-15).contains(&d));
        if p.iter().any(|&v| v > 0.0) {
            prop_assert!((dice_1d(&p, &p).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_is_idempotent(
        (g, region) in (dims(), 1usize..3).prop_flat_map(|((h, w), c)| (grid(h, w, c), boxed(w, h)))
    ) {
        let once = normalize(&g, region).unwrap();
        let twice = normalize(&once, region).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn region_means_stay_in_the_data_range(
        (data, phi) in (dims(), 1usize..3).prop_flat_map(|((h, w), c)| (grid(h, w, c), field(h, w, 8.0)))
    ) {
        let m = region_means(&data, &phi).unwrap();
        for c in 0..data.channels() {
            let lo = data.channel(c).iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.channel(c).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in [m.inside[c], m.outside[c]] {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        let zero = LevelSetField::filled(phi.window(), 0.0).unwrap();
        let m = region_means(&data, &zero).unwrap();
        prop_assert_eq!(m.inside, m.outside);
    }

    #[test]
    fn a_small_descent_step_does_not_increase_the_energy(
        (data, phi) in dims().prop_flat_map(|(h, w)| (grid(h, w, 1), field(h, w, 3.0)))
    ) {
        let means = region_means(&data, &phi).unwrap();
        let before = chan_vese_energy_with_means(&data, &phi, &means, 1e-4).unwrap().total();
        let grad = energy_gradient_with_means(&data, &phi, &means, 1e-4).unwrap();
        let step: Vec<f64> = phi.values().iter().zip(&grad).map(|(p, g)| p - 1e-3 * g).collect();
        let after = chan_vese_energy_with_means(&data, &LevelSetField::new(phi.window(), step).unwrap(), &means, 1e-4)
            .unwrap()
            .total();
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn saturated_shift_changes_nothing(
        (data, signs, c) in dims().prop_flat_map(|(h, w)| (grid(h, w, 1), prop::collection::vec(any::<bool>(), h * w), -5.0..5.0f64))
    ) {
        prop_assume!(signs.iter().any(|&s| s) && signs.iter().any(|&s| !s));
        let window = BBox::new(0, 0, data.width(), data.height());
        let base: Vec<f64> = signs.iter().map(|&s| if s { 40.0 } else { -40.0 }).collect();
        let a = LevelSetField::new(window, base.clone()).unwrap();
        let b = LevelSetField::new(window, base.iter().map(|v| v + c).collect()).unwrap();
        let (ea, eb) = (chan_vese_energy(&data, &a, 0.5).unwrap(), chan_vese_energy(&data, &b, 0.5).unwrap());
        prop_assert!((ea.data_inside - eb.data_inside).abs() < 1e-8);
        prop_assert!((ea.data_outside - eb.data_outside).abs() < 1e-8);
        prop_assert!((ea.length - eb.length).abs() < 1e-8);
    }

    #[test]
    fn box_cost_vanishes_exactly_on_matching_projections(
        (bbox, extra) in (2usize..10, 2usize..10).prop_flat_map(|(w, h)| (boxed(w, h).prop_map(move |b| (b, w, h)), 0.0..1.0f64))
    ) {
        let (b, w, h) = bbox;
        let indicator = BinaryMask::from_box(h, w, b).to_soft();
        prop_assert_eq!(box_projection_cost(&indicator, b), 0.0);
        // a diagonal inside the box, padded with lower values, projects to the same indicator
        let n = b.width().max(b.height());
        let diag = SoftMask::from_fn(h, w, |y, x| {
            if !b.contains(x, y) {
                return 0.0;
            }
            let (i, j) = (x - b.x0, y - b.y0);
            let on = (0..n).any(|t| i == t.min(b.width() - 1) && j == t.min(b.height() - 1));
            if on { 1.0 } else { extra * 0.5 }
        })
        .unwrap();
        prop_assert_eq!(box_projection_cost(&diag, b), 0.0);
        let shifted = SoftMask::from_fn(h, w, |y, x| if b.contains(x, y) { 0.5 + 0.5 * extra.min(0.99) } else { 0.0 }).unwrap();
        prop_assert!(box_projection_cost(&shifted, b) > 0.0);
    }

    #[test]
    fn affinity_rows_sum_to_one(
        (data, d, eta) in (1usize..4).prop_flat_map(|d| ((d + 1)..(d + 8), 1usize..8, 1usize..3).prop_flat_map(move |(h, w, c)| (grid(h, w, c), Just(d), 0.0..3.0f64)))
    ) {
        let a = affinity_for(&data, d, eta);
        for y in 0..data.height() {
            for x in 0..data.width() {
                let row = a.at(y, x);
                let s: f64 = row.iter().sum();
                // a pixel farther than the dilation from every other pixel has no neighbours at all
                let isolated = (0..8).all(|k| !a.is_valid(y, x, k));
                prop_assert!(if isolated { s == 0.0 } else { (s - 1.0).abs() <= 1e-12 }, "row sum {}", s);
                for k in 0..8 {
                    prop_assert!(a.is_valid(y, x, k) || row[k] == 0.0);
                }
            }
        }
    }

    #[test]
    fn eta_zero_is_the_pixel_affinity(data in (2usize..8, 2usize..8).prop_flat_map(|(h, w)| grid(h, w, 1)), d in 1usize..3) {
        let pixel = normalize_affinity(&pixel_affinity(&data, d));
        let spatial = normalize_affinity(&spatial_field(data.height(), data.width(), d));
        prop_assert_eq!(combined_affinity(&pixel, &spatial, 0.0), pixel);
    }

    #[test]
    fn propagation_contracts_the_range(
        (data, phi, k) in dims().prop_flat_map(|(h, w)| (grid(h, w, 1), field(h, w, 10.0), 0usize..12))
    ) {
        let a = affinity_for(&data, 1, 1.0);
        let out = propagate(&phi, &a, k);
        let lo = phi.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = phi.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for &v in out.values() {
            prop_assert!(v >= lo && v <= hi);
        }
    }

    #[test]
    fn constant_fields_are_fixed_points(
        (data, c, k, d) in dims().prop_flat_map(|(h, w)| (grid(h, w, 2), -20.0..20.0f64, 0usize..12, 1usize..4))
    ) {
        let phi = LevelSetField::filled(BBox::new(0, 0, data.width(), data.height()), c).unwrap();
        let out = propagate(&phi, &affinity_for(&data, d, 1.0), k);
        prop_assert!(out.values().iter().all(|&v| v == c));
    }

    #[test]
    fn tree_filter_is_bounded_and_linear(
        (guide, x, a, b, sigma) in dims().prop_flat_map(|(h, w)| (grid(h, w, 2), grid(h, w, 1), 0.1..4.0f64, -3.0..3.0f64, 0.05..2.0f64))
    ) {
        let tree = mst(&build_grid_graph(&guide));
        let y = tree_filter(&x, &tree, sigma);
        let lo = x.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for &v in y.values() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
        let ax = Grid::new(x.height(), x.width(), 1, x.values().iter().map(|v| a * v + b).collect()).unwrap();
        let ay = tree_filter(&ax, &tree, sigma);
        for (p, q) in ay.values().iter().zip(y.values()) {
            prop_assert!((p - (a * q + b)).abs() < 1e-9);
        }
    }

    #[test]
    fn hungarian_ignores_shifts_and_scalings(
        (r, c, data, shift, scale) in (1usize..7, 1usize..7).prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(0.0..10.0f64, r * c), -50.0..50.0f64, 0.01..100.0f64))
    ) {
        let cost = CostMatrix::new(r, c, data).unwrap();
        let base = hungarian(&cost);
        prop_assert_eq!(&hungarian(&cost.map(|v| v + shift).unwrap()), &base);
        prop_assert_eq!(&hungarian(&cost.map(|v| v * scale).unwrap()), &base);
    }

    #[test]
    fn box_indicator_has_zero_instance_cost(
        (b, w, h) in (1usize..40, 1usize..40).prop_flat_map(|(w, h)| (boxed(w, h), Just(w), Just(h)))
    ) {
        prop_assert_eq!(instance_cost(&BinaryMask::from_box(h, w, b).to_soft(), b), 0.0);
    }

    #[test]
    fn centre_positives_grow_with_scale(
        (boxes, grid_shape, s1, s2) in prop::collection::vec(boxed(96, 80), 1..4).prop_flat_map(|b| (Just(b), (1usize..20, 1usize..20), 0.0..1.0f64, 0.0..1.0f64))
    ) {
        let (lo, hi) = (s1.min(s2), s1.max(s2));
        let small = center_region_assign(&boxes, (80, 96), grid_shape, lo);
        let large = center_region_assign(&boxes, (80, 96), grid_shape, hi);
        for (a, b) in small.owner.iter().zip(&large.owner) {
            prop_assert!(a.is_none() || b.is_some());
        }
        for g in 0..boxes.len() {
            let single = [boxes[g]];
            let a = center_region_assign(&single, (80, 96), grid_shape, lo).positives(0);
            let b = center_region_assign(&single, (80, 96), grid_shape, hi).positives(0);
            prop_assert!(!a.is_empty());
            prop_assert!(a.iter().all(|p| b.contains(p)));
        }
    }
}
