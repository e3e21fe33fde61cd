use nalgebra::Point3;

use super::Aabb;

const LEAF: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    start: u32,
    count: u32,
    left: u32,
}

/// Static nearest-neighbour index over a point set.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Point3<f64>>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl PointIndex {
    /// Panics on an empty point set.
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        assert!(!points.is_empty(), "PointIndex needs at least one point");
        let n = points.len();
        let mut idx = PointIndex {
            order: (0..n as u32).collect(),
            nodes: vec![Node {
                bbox: Aabb::empty(),
                start: 0,
                count: 0,
                left: 0,
            }],
            points,
        };
        idx.build(0, 0, n);
        idx
    }

    fn build(&mut self, node: usize, start: usize, end: usize) {
        let bbox = Aabb::from_points(self.order[start..end].iter().map(|&i| &self.points[i as usize]));
        self.nodes[node].bbox = bbox;
        let count = end - start;
        let ext = bbox.extent();
        if count <= LEAF || ext.max() <= 0.0 {
            self.nodes[node].start = start as u32;
            self.nodes[node].count = count as u32;
            return;
        }
        let axis = ext.imax();
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
            pts[a as usize][axis].total_cmp(&pts[b as usize][axis]).then(a.cmp(&b))
        });
        let left = self.nodes.len();
        self.nodes.push(Node {
            bbox: Aabb::empty(),
            start: 0,
            count: 0,
            left: 0,
        });
        self.nodes.push(Node {
            bbox: Aabb::empty(),
            start: 0,
            count: 0,
            left: 0,
        });
        self.nodes[node].left = left as u32;
        self.build(left, start, start + count / 2);
        self.build(left + 1, start + count / 2, end);
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of and squared distance to the nearest point. Ties go to the
    /// lowest index.
    pub fn nearest(&self, q: &Point3<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut stack: Vec<(u32, f64)> = vec![(0, self.nodes[0].bbox.distance_squared(q))];
        while let Some((ni, d2)) = stack.pop() {
            if d2 > best.1 {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                for &i in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let d = (self.points[i as usize] - q).norm_squared();
                    if d < best.1 || (d == best.1 && (i as usize) < best.0) {
                        best = (i as usize, d);
                    }
                }
            } else {
                let l = node.left;
                let dl = self.nodes[l as usize].bbox.distance_squared(q);
                let dr = self.nodes[l as usize + 1].bbox.distance_squared(q);
                if dl <= dr {
                    stack.push((l + 1, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((l + 1, dr));
                }
            }
        }
        best
    }
}
