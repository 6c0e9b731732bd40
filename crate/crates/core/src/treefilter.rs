//! Minimum-spanning-tree filtering.
//!
//! A 4-connected grid graph is weighted by guidance-feature distances, reduced
//! to its minimum spanning tree, and every pixel is replaced by an average of
//! all pixels weighted by `exp(-D / sigma)`, where `D` is the tree path length.
//! The all-pairs sum is evaluated exactly with one leaf-to-root and one
//! root-to-leaf pass.

use crate::grid::{normalize_full, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// 4-connected pixel graph. Edges are listed per pixel in scan order, right neighbour first.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    pub height: usize,
    pub width: usize,
    pub edges: Vec<Edge>,
}

/// Spanning tree rooted at pixel 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    pub height: usize,
    pub width: usize,
    /// `parent[root] == root`.
    pub parent: Vec<usize>,
    /// Weight of the edge to the parent; 0 for the root.
    pub parent_weight: Vec<f64>,
    /// Breadth-first order from the root; parents precede children.
    pub order: Vec<usize>,
}

impl SpanningTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn total_weight(&self) -> f64 {
        self.parent_weight.iter().sum()
    }
}

pub fn build_grid_graph(guidance: &Grid) -> GridGraph {
    let (h, w) = (guidance.height(), guidance.width());
    let dist = |a: usize, b: usize| -> f64 {
        let (ay, ax, by, bx) = (a / w, a % w, b / w, b % w);
        guidance
            .pixel(ay, ax)
            .zip(guidance.pixel(by, bx))
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut edges = Vec::with_capacity(2 * h * w - h - w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push(Edge {
                    a: i,
                    b: i + 1,
                    weight: dist(i, i + 1),
                });
            }
            if y + 1 < h {
                edges.push(Edge {
                    a: i,
                    b: i + w,
                    weight: dist(i, i + w),
                });
            }
        }
    }
    GridGraph {
        height: h,
        width: w,
        edges,
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Kruskal's algorithm; ties are broken by edge index.
pub fn mst(graph: &GridGraph) -> SpanningTree {
    let n = graph.height * graph.width;
    let mut idx: Vec<usize> = (0..graph.edges.len()).collect();
    idx.sort_by(|&i, &j| graph.edges[i].weight.total_cmp(&graph.edges[j].weight).then(i.cmp(&j)));

    let mut sets = DisjointSet::new(n);
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut taken = 0;
    for i in idx {
        let e = graph.edges[i];
        if sets.union(e.a, e.b) {
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
            taken += 1;
            if taken + 1 == n {
                break;
            }
        }
    }

    let mut parent = vec![usize::MAX; n];
    let mut parent_weight = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    parent[0] = 0;
    order.push(0);
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &(u, wt) in &adj[v] {
            if parent[u] == usize::MAX {
                parent[u] = v;
                parent_weight[u] = wt;
                order.push(u);
            }
        }
    }
    SpanningTree {
        height: graph.height,
        width: graph.width,
        parent,
        parent_weight,
        order,
    }
}

/// Exact tree filter: `y_i = sum_j exp(-D(i,j)/sigma) x_j / sum_j exp(-D(i,j)/sigma)`.
pub fn tree_filter(values: &Grid, tree: &SpanningTree, sigma: f64) -> Grid {
    assert!(sigma > 0.0, "tree filter bandwidth must be positive");
    assert_eq!(values.plane_len(), tree.len(), "values must align with the tree");
    let n = tree.len();
    let ch = values.channels();
    let decay: Vec<f64> = tree.parent_weight.iter().map(|&w| (-w / sigma).exp()).collect();

    // Leaf-to-root: subtree aggregates of x and of 1.
    let mut up = values.values().to_vec();
    let mut up_norm = vec![1.0; n];
    for &v in tree.order.iter().rev().take(n - 1) {
        let p = tree.parent[v];
        up_norm[p] += decay[v] * up_norm[v];
        for c in 0..ch {
            up[c * n + p] += decay[v] * up[c * n + v];
        }
    }

    // Root-to-leaf: fold in everything outside each subtree.
    let mut down = up.clone();
    let mut down_norm = up_norm.clone();
    for &v in tree.order.iter().skip(1) {
        let p = tree.parent[v];
        let d = decay[v];
        down_norm[v] = up_norm[v] + d * (down_norm[p] - d * up_norm[v]);
        for c in 0..ch {
            down[c * n + v] = up[c * n + v] + d * (down[c * n + p] - d * up[c * n + v]);
        }
    }

    let out = (0..ch * n).map(|i| down[i] / down_norm[i % n]).collect();
    Grid::from_parts_unchecked(values.height(), values.width(), ch, out)
}

/// Structural feature term.
///
/// The guidance is the image, concatenated with `raw_features` when present.
/// The features are filtered along the guidance tree (the image itself when
/// no features are given) and each output channel is rescaled to `[0, 1]`.
pub fn structural_features(image: &Grid, raw_features: Option<&Grid>, sigma: f64) -> crate::Result<Grid> {
    let (guidance, target) = match raw_features {
        Some(f) => (image.concat(f)?, f),
        None => (image.clone(), image),
    };
    let tree = mst(&build_grid_graph(&guidance));
    Ok(normalize_full(&tree_filter(target, &tree, sigma)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn graph_shapes_and_weights() {
        let g = build_grid_graph(&Grid::filled(3, 4, 2, 0.5).unwrap());
        assert_eq!(g.edges.len(), 2 * 12 - 3 - 4);
        assert!(g.edges.iter().all(|e| e.weight == 0.0));

        let g = build_grid_graph(&Grid::new(1, 2, 1, vec![0.0, 3.0]).unwrap());
        assert_eq!(
            g.edges,
            vec![Edge {
                a: 0,
                b: 1,
                weight: 3.0
            }]
        );

        // [[(0,0), (3,0)], [(0,4), (1,1)]]
        let f = Grid::new(2, 2, 2, vec![0.0, 3.0, 0.0, 1.0, 0.0, 0.0, 4.0, 1.0]).unwrap();
        let g = build_grid_graph(&f);
        let weights: Vec<f64> = g.edges.iter().map(|e| e.weight).collect();
        assert_eq!(weights.len(), 4);
        assert_abs_diff_eq!(weights[0], 3.0, epsilon = 1e-15); // 0-1
        assert_abs_diff_eq!(weights[1], 4.0, epsilon = 1e-15); // 0-2
        assert_abs_diff_eq!(weights[2], 5f64.sqrt(), epsilon = 1e-15); // 1-3
        assert_abs_diff_eq!(weights[3], 10f64.sqrt(), epsilon = 1e-15); // 2-3
    }

    #[test]
    fn mst_of_equal_weights() {
        let g = build_grid_graph(&Grid::filled(4, 5, 1, 1.0).unwrap());
        let t = mst(&g);
        assert_eq!(t.edge_count(), 19);
        assert_eq!(t.total_weight(), 0.0);
        assert_eq!(t.order.len(), 20);
    }

    #[test]
    fn mst_drops_heaviest_cycle_edge() {
        // 2x2 cycle with weights 1 (0-1), 5 (0-2), 1 (1-3), 1 (2-3)
        let g = GridGraph {
            height: 2,
            width: 2,
            edges: vec![
                Edge {
                    a: 0,
                    b: 1,
                    weight: 1.0,
                },
                Edge {
                    a: 0,
                    b: 2,
                    weight: 5.0,
                },
                Edge {
                    a: 1,
                    b: 3,
                    weight: 1.0,
                },
                Edge {
                    a: 2,
                    b: 3,
                    weight: 1.0,
                },
            ],
        };
        let t = mst(&g);
        assert_eq!(t.total_weight(), 3.0);
        assert_eq!(t.parent[2], 3);
    }

    #[test]
    fn zero_weights_give_the_global_mean() {
        let x = Grid::from_fn(3, 3, |y, x| (y * 3 + x) as f64).unwrap();
        let t = mst(&build_grid_graph(&Grid::filled(3, 3, 1, 0.0).unwrap()));
        let y = tree_filter(&x, &t, 0.1);
        assert!(y.values().iter().all(|v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn vanishing_sigma_is_identity() {
        let x = Grid::from_fn(4, 4, |y, x| ((y * 7 + x * 3) % 5) as f64).unwrap();
        let t = mst(&build_grid_graph(
            &Grid::from_fn(4, 4, |y, x| (y * 4 + x) as f64).unwrap(),
        ));
        let y = tree_filter(&x, &t, 1e-9);
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Grid::filled(5, 5, 1, 0.25).unwrap();
        let out = structural_features(&img, None, 0.1).unwrap();
        let first = out.values()[0];
        assert!(out.values().iter().all(|&v| v == first));
    }
}
