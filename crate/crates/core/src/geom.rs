//! Small geometry helpers shared by preparation, pockets and graphs.

pub type Vec3 = [f64; 3];

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Two unit vectors orthogonal to `axis` and to each other.
pub fn orthonormal_pair(axis: Vec3) -> (Vec3, Vec3) {
    let probe = if axis[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let u = normalize(cross(axis, probe));
    let v = cross(axis, u);
    (u, v)
}

/// Uniform hash grid for fixed-radius neighbor queries.
pub struct NeighborGrid {
    cell: f64,
    cells: std::collections::HashMap<(i64, i64, i64), Vec<usize>>,
    positions: Vec<Vec3>,
}

impl NeighborGrid {
    pub fn build(positions: &[Vec3], cell: f64) -> Self {
        let mut cells: std::collections::HashMap<(i64, i64, i64), Vec<usize>> =
            std::collections::HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            cells.entry(Self::key(*p, cell)).or_default().push(i);
        }
        NeighborGrid {
            cell,
            cells,
            positions: positions.to_vec(),
        }
    }

    fn key(p: Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    /// Indices of points within `radius` of `p` (closed ball), ascending.
    /// `radius` must not exceed the grid cell size.
    pub fn within(&self, p: Vec3, radius: f64) -> Vec<usize> {
        debug_assert!(radius <= self.cell + 1e-12);
        let (cx, cy, cz) = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in bucket {
                            if distance(self.positions[i], p) <= radius {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_matches_brute_force() {
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    pts.push([i as f64, j as f64 * 1.3, k as f64 * 0.7]);
                }
            }
        }
        let grid = NeighborGrid::build(&pts, 2.0);
        for (qi, &q) in pts.iter().enumerate().step_by(7) {
            let got = grid.within(q, 2.0);
            let want: Vec<usize> = (0..pts.len())
                .filter(|&i| distance(pts[i], q) <= 2.0)
                .collect();
            assert_eq!(got, want, "query {qi}");
        }
    }

    #[test]
    fn orthonormal_pair_is_orthonormal() {
        for axis in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], normalize([1.0, 2.0, -3.0])] {
            let (u, v) = orthonormal_pair(axis);
            assert!(dot(u, axis).abs() < 1e-12);
            assert!(dot(v, axis).abs() < 1e-12);
            assert!(dot(u, v).abs() < 1e-12);
            assert!((norm(u) - 1.0).abs() < 1e-12);
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
    }
}
