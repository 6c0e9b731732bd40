//! Box-level label assignment: projection costs, Hungarian matching and
//! centre-region sampling.

use crate::chanvese::box_projection_cost;
use crate::error::{Error, Result};
use crate::grid::{BBox, SoftMask};

/// Dense cost matrix, rows are candidates and columns ground-truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::BufferLength {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            data: (0..self.cols)
                .flat_map(|c| (0..self.rows).map(move |r| (r, c)))
                .map(|(r, c)| self.get(r, c))
                .collect(),
        }
    }
}

/// One-to-one pairing of candidates with ground truths; `None` marks "no object".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub candidate_to_gt: Vec<Option<usize>>,
    pub gt_to_candidate: Vec<Option<usize>>,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.gt_to_candidate
            .iter()
            .enumerate()
            .filter_map(|(g, c)| c.map(|c| (c, g)))
    }

    /// Sum of matched costs, accumulated in ground-truth order.
    pub fn total_cost(&self, cost: &CostMatrix) -> f64 {
        self.pairs().map(|(c, g)| cost.get(c, g)).sum()
    }
}

/// Weights of the total matching cost and the centre-sampling scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub center_scale: f64,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            beta1: 2.0,
            beta2: 6.0,
            center_scale: 0.2,
        }
    }
}

/// Projection cost of a predicted mask against a box on the same plane.
pub fn instance_cost(pred: &SoftMask, gt_box: BBox) -> f64 {
    box_projection_cost(pred, gt_box)
}

/// Cross-entropy `-ln p[label]`, with `p` floored at 1e-12.
pub fn category_cost(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::InvalidLabel {
            label,
            classes: probs.len(),
        });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::ProbabilitySum(sum));
    }
    Ok(-probs[label].max(1e-12).ln())
}

/// `beta1 * inst + beta2 * cate`; the category matrix may be omitted for class-agnostic matching.
pub fn total_cost(inst: &CostMatrix, cate: Option<&CostMatrix>, beta1: f64, beta2: f64) -> Result<CostMatrix> {
    match cate {
        None => inst.map(|v| beta1 * v),
        Some(c) => {
            if (c.rows, c.cols) != (inst.rows, inst.cols) {
                return Err(Error::ShapeMismatch(format!(
                    "instance cost is {}x{} but category cost is {}x{}",
                    inst.rows, inst.cols, c.rows, c.cols
                )));
            }
            CostMatrix::new(
                inst.rows,
                inst.cols,
                inst.data
                    .iter()
                    .zip(&c.data)
                    .map(|(a, b)| beta1 * a + beta2 * b)
                    .collect(),
            )
        }
    }
}

/// Build instance and optional category costs for a set of candidates.
pub fn matching_costs(
    preds: &[SoftMask],
    probs: Option<&[Vec<f64>]>,
    gt_boxes: &[BBox],
    gt_labels: Option<&[usize]>,
    config: &MatchingConfig,
) -> Result<CostMatrix> {
    let inst = CostMatrix::from_fn(preds.len(), gt_boxes.len(), |r, c| {
        instance_cost(&preds[r], gt_boxes[c])
    })?;
    match (probs, gt_labels) {
        (Some(p), Some(l)) => {
            let mut data = Vec::with_capacity(preds.len() * gt_boxes.len());
            for row in p {
                for &label in l {
                    data.push(category_cost(row, label)?);
                }
            }
            let cate = CostMatrix::new(p.len(), l.len(), data)?;
            total_cost(&inst, Some(&cate), config.beta1, config.beta2)
        }
        _ => total_cost(&inst, None, config.beta1, 0.0),
    }
}

/// Minimum cost of assigning every row of `cost` (rows <= cols) to a distinct column.
///
/// Shortest augmenting path with dual potentials, O(rows^2 cols).
fn solve_rows(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let total = row_to_col.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
    (total, row_to_col)
}

fn sub_optimum(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let sub: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| cost[r][c]).collect())
        .collect();
    solve_rows(&sub).0
}

/// Optimal assignment of rows to columns that is lexicographically smallest
/// among all optimal ones (row 0's column first, then row 1's, ...).
fn lexicographic_rows(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    let mut free_cols: Vec<usize> = (0..m).collect();
    let mut out = Vec::with_capacity(n);
    let scale = cost.iter().flatten().fold(1.0f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * scale * n as f64;
    for r in 0..n {
        let rows: Vec<usize> = (r..n).collect();
        let rest: Vec<usize> = (r + 1..n).collect();
        let sub: Vec<Vec<f64>> = rows
            .iter()
            .map(|&rr| free_cols.iter().map(|&c| cost[rr][c]).collect())
            .collect();
        let (best, plain) = solve_rows(&sub);
        // the plain solver's column is feasible; only smaller columns can beat it
        let mut k = plain[0];
        for cand in 0..plain[0] {
            let mut remaining = free_cols.clone();
            let c = remaining.remove(cand);
            if cost[r][c] + sub_optimum(cost, &rest, &remaining) <= best + tol {
                k = cand;
                break;
            }
        }
        out.push(free_cols.remove(k));
    }
    out
}

/// Minimum-cost one-to-one matching.
///
/// With at least as many candidates as ground truths every ground truth is
/// matched; otherwise every candidate is. Among optimal matchings the one
/// whose ground-truth-to-candidate vector is lexicographically smallest wins.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let (nc, ng) = (cost.rows, cost.cols);
    let mut candidate_to_gt = vec![None; nc];
    let mut gt_to_candidate = vec![None; ng];
    if ng == 0 || nc == 0 {
        return Assignment {
            candidate_to_gt,
            gt_to_candidate,
        };
    }
    if ng <= nc {
        let t = cost.transpose();
        let rows: Vec<Vec<f64>> = (0..ng).map(|g| t.data[g * nc..(g + 1) * nc].to_vec()).collect();
        for (g, c) in lexicographic_rows(&rows).into_iter().enumerate() {
            gt_to_candidate[g] = Some(c);
            candidate_to_gt[c] = Some(g);
        }
    } else {
        let rows: Vec<Vec<f64>> = (0..nc).map(|c| cost.data[c * ng..(c + 1) * ng].to_vec()).collect();
        for (c, g) in lexicographic_rows(&rows).into_iter().enumerate() {
            candidate_to_gt[c] = Some(g);
            gt_to_candidate[g] = Some(c);
        }
    }
    Assignment {
        candidate_to_gt,
        gt_to_candidate,
    }
}

/// Owner of each lattice location after centre sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CenterAssignment {
    pub grid_height: usize,
    pub grid_width: usize,
    /// Row-major, `Some(gt index)` for positive locations.
    pub owner: Vec<Option<usize>>,
}

impl CenterAssignment {
    pub fn positives(&self, gt: usize) -> Vec<(usize, usize)> {
        self.owner
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Some(gt))
            .map(|(i, _)| (i / self.grid_width, i % self.grid_width))
            .collect()
    }

    pub fn positive_count(&self) -> usize {
        self.owner.iter().filter(|o| o.is_some()).count()
    }
}

/// Lattice cells whose centres fall in `[c - half, c + half)`, or the first
/// cell that would enter that interval as it grows when it holds none.
fn cell_span(center: f64, half: f64, cells: usize) -> (usize, usize) {
    let lo = (center - half - 0.5).ceil().max(0.0);
    let hi = (center + half - 0.5).ceil().min(cells as f64);
    if hi > lo {
        (lo as usize, hi as usize)
    } else {
        let nearest = (center - 1.0).ceil().clamp(0.0, cells as f64 - 1.0) as usize;
        (nearest, nearest + 1)
    }
}

/// Positive lattice locations for each box under centre-region sampling.
///
/// Boxes are given on an `image_height x image_width` plane; the lattice has
/// `grid_height x grid_width` cells over the same plane. A cell is positive
/// for a box when its centre lies in the box scaled by `scale` about the box
/// centre. Ownership conflicts go to the smaller box, then the lower index.
pub fn center_region_assign(
    gt_boxes: &[BBox],
    image_size: (usize, usize),
    grid_shape: (usize, usize),
    scale: f64,
) -> CenterAssignment {
    let (ih, iw) = image_size;
    let (gh, gw) = grid_shape;
    let mut owner: Vec<Option<usize>> = vec![None; gh * gw];
    let sx = gw as f64 / iw as f64;
    let sy = gh as f64 / ih as f64;
    for (g, b) in gt_boxes.iter().enumerate() {
        let cx = (b.x0 + b.x1) as f64 / 2.0 * sx;
        let cy = (b.y0 + b.y1) as f64 / 2.0 * sy;
        let hx = scale * b.width() as f64 * sx / 2.0;
        let hy = scale * b.height() as f64 * sy / 2.0;
        let (x0, x1) = cell_span(cx, hx, gw);
        let (y0, y1) = cell_span(cy, hy, gh);
        for y in y0..y1 {
            for x in x0..x1 {
                let slot = &mut owner[y * gw + x];
                let wins = match *slot {
                    None => true,
                    Some(o) => {
                        let (ao, ag) = (gt_boxes[o].area(), b.area());
                        ag < ao || (ag == ao && g < o)
                    }
                };
                if wins {
                    *slot = Some(g);
                }
            }
        }
    }
    CenterAssignment {
        grid_height: gh,
        grid_width: gw,
        owner,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn instance_cost_examples() {
        let b = BBox::new(1, 1, 5, 3);
        let ind = SoftMask::from_fn(4, 6, |y, x| b.contains(x, y) as u8 as f64).unwrap();
        assert_eq!(instance_cost(&ind, b), 0.0);
        let outside = SoftMask::from_fn(4, 6, |y, x| if b.contains(x, y) { 0.0 } else { 1e-9 }).unwrap();
        assert_abs_diff_eq!(instance_cost(&outside, b), 2.0, epsilon = 1e-6);
        let half = SoftMask::from_fn(4, 6, |y, x| (b.contains(x, y) && x < 3) as u8 as f64).unwrap();
        assert_abs_diff_eq!(instance_cost(&half, b), 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn category_cost_examples() {
        assert_eq!(category_cost(&[0.0, 1.0], 1).unwrap(), 0.0);
        assert_abs_diff_eq!(category_cost(&[0.25; 4], 2).unwrap(), 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            category_cost(&[0.6, 0.25, 0.15], 1).unwrap(),
            1.3862943611,
            epsilon = 1e-9
        );
        assert!(matches!(category_cost(&[0.5, 0.5], 2), Err(Error::InvalidLabel { .. })));
        assert!(category_cost(&[0.5, 0.6], 0).is_err());
        assert!(category_cost(&[1.0, 0.0], 1).unwrap().is_finite());
    }

    #[test]
    fn total_cost_weights() {
        let a = CostMatrix::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = CostMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(total_cost(&a, Some(&b), 1.0, 0.0).unwrap(), a);
        assert_eq!(total_cost(&a, Some(&b), 0.0, 1.0).unwrap(), b);
        let c = total_cost(&a, Some(&b), 2.0, 6.0).unwrap();
        for (i, v) in c.values().iter().enumerate() {
            assert_abs_diff_eq!(*v, 2.0 * a.values()[i] + 6.0 * b.values()[i], epsilon = 1e-15);
        }
        let wrong = CostMatrix::new(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(total_cost(&a, Some(&wrong), 1.0, 1.0).is_err());
    }

    #[test]
    fn diagonal_preference() {
        let c = CostMatrix::from_fn(4, 4, |r, g| if r == g { 0.0 } else { 1.0 }).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.gt_to_candidate, (0..4).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn single_pair_and_empty_sets() {
        let c = CostMatrix::new(1, 1, vec![42.0]).unwrap();
        assert_eq!(hungarian(&c).gt_to_candidate, vec![Some(0)]);
        let none = CostMatrix::new(3, 0, vec![]).unwrap();
        assert_eq!(hungarian(&none).candidate_to_gt, vec![None; 3]);
    }

    #[test]
    fn surplus_candidates_are_no_object() {
        let c = CostMatrix::new(3, 1, vec![5.0, 1.0, 3.0]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.candidate_to_gt, vec![None, Some(0), None]);
    }

    #[test]
    fn fewer_candidates_than_gts() {
        let c = CostMatrix::new(1, 3, vec![5.0, 1.0, 3.0]).unwrap();
        let a = hungarian(&c);
        assert_eq!(a.gt_to_candidate, vec![None, Some(0), None]);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let c = CostMatrix::new(3, 3, vec![1.0; 9]).unwrap();
        assert_eq!(hungarian(&c).gt_to_candidate, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn center_sampling_examples() {
        let full = center_region_assign(&[BBox::new(2, 2, 8, 8)], (10, 10), (10, 10), 1.0);
        assert_eq!(full.positives(0).len(), 36);

        let small = center_region_assign(&[BBox::new(43, 12, 45, 14)], (100, 100), (10, 10), 0.2);
        assert_eq!(small.positives(0), vec![(1, 4)]);

        let half = center_region_assign(&[BBox::new(20, 20, 80, 80)], (100, 100), (10, 10), 0.5);
        assert_eq!(half.positives(0).len(), 9);
    }

    #[test]
    fn overlaps_go_to_the_smaller_box() {
        let boxes = [BBox::new(0, 0, 10, 10), BBox::new(2, 2, 8, 8)];
        let a = center_region_assign(&boxes, (10, 10), (10, 10), 1.0);
        assert_eq!(a.owner[5 * 10 + 5], Some(1));
        assert_eq!(a.owner[0], Some(0));
    }
}
