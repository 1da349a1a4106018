//! Convex hulls of link vertex sets: facet inequalities for the solver and an
//! independent simplex-based membership test for checking.

use nalgebra::{Matrix3, Vector3};

/// Half-space `normal·x ≤ offset` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

fn scale(vertices: &[Vector3<f64>]) -> f64 {
    let c = centroid(vertices);
    vertices.iter().map(|v| (v - c).norm()).fold(0.0, f64::max)
}

pub fn centroid(vertices: &[Vector3<f64>]) -> Vector3<f64> {
    vertices.iter().fold(Vector3::zeros(), |a, v| a + v) / vertices.len().max(1) as f64
}

/// Facets of conv(vertices) by enumerating supporting planes through vertex
/// triples. `None` when the hull has no interior.
pub fn facets(vertices: &[Vector3<f64>]) -> Option<Vec<Facet>> {
    let n = vertices.len();
    if n < 4 || vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
        return None;
    }
    let size = scale(vertices);
    if size <= 0.0 {
        return None;
    }
    let tol = 1e-10 * size;
    let mut out: Vec<Facet> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
                let len = normal.norm();
                if len <= 1e-12 * size * size {
                    continue;
                }
                let mut normal = normal / len;
                let mut offset = normal.dot(&vertices[i]);
                let (mut above, mut below) = (false, false);
                for v in vertices {
                    let s = normal.dot(v) - offset;
                    above |= s > tol;
                    below |= s < -tol;
                }
                if above && below {
                    continue;
                }
                if !above && !below {
                    // Every vertex on one plane: flat hull.
                    return None;
                }
                if above {
                    normal = -normal;
                    offset = -offset;
                }
                let duplicate = out
                    .iter()
                    .any(|f| (f.normal - normal).norm() < 1e-9 && (f.offset - offset).abs() < tol);
                if !duplicate {
                    out.push(Facet { normal, offset });
                }
            }
        }
    }
    if out.len() < 4 {
        None
    } else {
        Some(out)
    }
}

/// Distance bound from `point` to conv(vertices): zero when the point lies in
/// one of the vertex tetrahedra, otherwise the distance to the nearest clamped
/// barycentric point over all tetrahedra (an upper bound on the true distance).
pub fn outside_distance(vertices: &[Vector3<f64>], point: &Vector3<f64>) -> f64 {
    let n = vertices.len();
    let size = scale(vertices).max(f64::MIN_POSITIVE);
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                for l in k + 1..n {
                    let v0 = vertices[i];
                    let m = Matrix3::from_columns(&[vertices[j] - v0, vertices[k] - v0, vertices[l] - v0]);
                    if m.determinant().abs() <= 1e-12 * size.powi(3) {
                        continue;
                    }
                    let Some(inv) = m.try_inverse() else { continue };
                    let w = inv * (point - v0);
                    let bary = [1.0 - w.x - w.y - w.z, w.x, w.y, w.z];
                    if bary.iter().all(|b| *b >= 0.0) {
                        return 0.0;
                    }
                    let clamped: Vec<f64> = bary.iter().map(|b| b.max(0.0)).collect();
                    let total: f64 = clamped.iter().sum();
                    if total <= 0.0 {
                        continue;
                    }
                    let q = (v0 * clamped[0] + vertices[j] * clamped[1] + vertices[k] * clamped[2] + vertices[l] * clamped[3])
                        / total;
                    best = best.min((point - q).norm());
                }
            }
        }
    }
    best
}
