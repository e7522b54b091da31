//! Marker-mesh generation for the benchmark body models: icosphere shells,
//! layered filled spheres, 2D circle shells and polar disks, plus
//! per-marker surface area weights. All constructors are deterministic.

use crate::kernels::MarkerSet;

/// Triangulated sphere produced by recursive icosahedron subdivision.
#[derive(Clone, Debug)]
pub struct TriMeshShell {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub level: usize,
    pub radius: f64,
}

/// Icosphere shell at subdivision level `k` (k = 1 is the icosahedron with
/// 12 vertices and 20 faces; each level quadruples the triangles, giving
/// 10·4^(k−1) + 2 vertices).
pub fn icosphere_shell(k: usize, radius: f64) -> TriMeshShell {
    assert!(k >= 1);
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = vec![
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    for v in vertices.iter_mut() {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        for x in v.iter_mut() {
            *x *= radius / n;
        }
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 1..k {
        let mut midpoints: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoints.entry(key).or_insert_with(|| {
                    let va = vertices[a];
                    let vb = vertices[b];
                    let mut m = [
                        0.5 * (va[0] + vb[0]),
                        0.5 * (va[1] + vb[1]),
                        0.5 * (va[2] + vb[2]),
                    ];
                    let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                    for x in m.iter_mut() {
                        *x *= radius / n;
                    }
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            new_faces.push([f[0], mid[0], mid[2]]);
            new_faces.push([f[1], mid[1], mid[0]]);
            new_faces.push([f[2], mid[2], mid[1]]);
            new_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = new_faces;
    }
    TriMeshShell {
        vertices,
        faces,
        level: k,
        radius,
    }
}

fn tri_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let cx = u[1] * v[2] - u[2] * v[1];
    let cy = u[2] * v[0] - u[0] * v[2];
    let cz = u[0] * v[1] - u[1] * v[0];
    0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
}

/// Per-vertex surface areas: one third of each incident triangle's area.
pub fn marker_areas(shell: &TriMeshShell) -> Vec<f64> {
    let mut areas = vec![0.0; shell.vertices.len()];
    for f in &shell.faces {
        let a = tri_area(shell.vertices[f[0]], shell.vertices[f[1]], shell.vertices[f[2]]);
        assert!(a > 0.0, "degenerate triangle");
        for &vi in f {
            areas[vi] += a / 3.0;
        }
    }
    areas
}

/// Marker set of an icosphere shell centered at `center`, with surface-area
/// weights attached.
pub fn shell_markers(k: usize, radius: f64, center: [f64; 3]) -> MarkerSet {
    let mesh = icosphere_shell(k, radius);
    let areas = marker_areas(&mesh);
    let positions = mesh
        .vertices
        .iter()
        .map(|v| [v[0] + center[0], v[1] + center[1], v[2] + center[2]])
        .collect();
    let mut m = MarkerSet::new(3, positions);
    m.areas = Some(areas);
    m
}

/// Typical nearest-neighbor spacing of an icosphere level (icosahedron edge
/// scaled down by 2 per subdivision).
pub fn icosphere_spacing(k: usize, radius: f64) -> f64 {
    let icosa_edge = 4.0 / (10.0 + 2.0 * 5.0f64.sqrt()).sqrt();
    icosa_edge * radius / 2f64.powi(k as i32 - 1)
}

/// Level whose typical spacing best matches `s` from the sparse side.
fn level_for_spacing(radius: f64, s: f64) -> usize {
    let mut k = 1usize;
    while icosphere_spacing(k + 1, radius) >= 0.85 * s && k < 8 {
        k += 1;
    }
    k
}

/// Filled sphere: outer shell at level `k_surface` plus concentric interior
/// icosphere layers spaced `s` apart (subdivision level reduced per layer to
/// keep local spacing near `s`), plus a center marker.
pub fn filled_sphere(k_surface: usize, radius: f64, s: f64, center: [f64; 3]) -> MarkerSet {
    assert!(s > 0.0 && s < radius, "layer spacing must be positive and below the radius");
    let outer = icosphere_shell(k_surface, radius);
    let mut positions: Vec<[f64; 3]> = outer.vertices.clone();
    let mut r = radius - s;
    while r > s {
        let k = level_for_spacing(r, s);
        let layer = icosphere_shell(k, r);
        // guard against quantization making a layer too dense
        let mut k_use = k;
        while k_use > 1 {
            let test = icosphere_shell(k_use, r);
            let mesh_min = min_spacing_of(&test.vertices);
            if mesh_min >= 0.8 * s {
                break;
            }
            k_use -= 1;
        }
        let layer = if k_use == layer.level {
            layer
        } else {
            icosphere_shell(k_use, r)
        };
        positions.extend_from_slice(&layer.vertices);
        r -= s;
    }
    positions.push([0.0; 3]);
    for p in positions.iter_mut() {
        for d in 0..3 {
            p[d] += center[d];
        }
    }
    MarkerSet::new(3, positions)
}

fn min_spacing_of(pts: &[[f64; 3]]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let d2: f64 = (0..3).map(|d| (pts[i][d] - pts[j][d]).powi(2)).sum();
            m = m.min(d2.sqrt());
        }
    }
    m
}

/// N equispaced markers on a circle (2D).
pub fn circle_shell(n: usize, radius: f64, center: [f64; 2]) -> MarkerSet {
    assert!(n >= 3);
    let positions = (0..n)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            [center[0] + radius * th.cos(), center[1] + radius * th.sin(), 0.0]
        })
        .collect();
    MarkerSet::new(2, positions)
}

/// Polar grid of markers filling a disk: concentric rings about `s` apart
/// with ring counts round(2πj), phases staggered half a step between
/// adjacent rings, plus the center marker. The outermost ring sits on the
/// disk surface.
pub fn polar_disk(radius: f64, s: f64, center: [f64; 2]) -> MarkerSet {
    assert!(s > 0.0);
    let m = (radius / s).round().max(1.0) as usize;
    let ds = radius / m as f64;
    let mut positions = vec![[center[0], center[1], 0.0]];
    for j in 1..=m {
        let r = j as f64 * ds;
        let cnt = (2.0 * std::f64::consts::PI * j as f64).round() as usize;
        let phase = if j % 2 == 0 { 0.5 } else { 0.0 };
        for q in 0..cnt {
            let th = 2.0 * std::f64::consts::PI * (q as f64 + phase) / cnt as f64;
            positions.push([center[0] + r * th.cos(), center[1] + r * th.sin(), 0.0]);
        }
    }
    MarkerSet::new(2, positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_counts_follow_subdivision_rule() {
        for (k, count, nfaces) in [(1usize, 12usize, 20usize), (2, 42, 80), (3, 162, 320), (4, 642, 1280), (5, 2562, 5120)] {
            let mesh = icosphere_shell(k, 1.0);
            assert_eq!(mesh.vertices.len(), count);
            assert_eq!(mesh.vertices.len(), 10 * 4usize.pow(k as u32 - 1) + 2);
            assert_eq!(mesh.faces.len(), nfaces);
            // Euler characteristic of a closed surface: V - E + F = 2
            let mut edges = std::collections::HashSet::new();
            for f in &mesh.faces {
                for e in 0..3 {
                    let (a, b) = (f[e], f[(e + 1) % 3]);
                    edges.insert((a.min(b), a.max(b)));
                }
            }
            assert_eq!(
                mesh.vertices.len() as i64 - edges.len() as i64 + mesh.faces.len() as i64,
                2
            );
        }
    }

    #[test]
    fn vertices_on_sphere_and_mesh_quality() {
        let r = 2.5;
        for k in 1..=4 {
            let mesh = icosphere_shell(k, r);
            let mut dmin = f64::INFINITY;
            let mut dmax: f64 = 0.0;
            for v in &mesh.vertices {
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                assert!((n - r).abs() < 1e-12 * r);
            }
            // nearest-neighbor distances via edges
            let mut nn = vec![f64::INFINITY; mesh.vertices.len()];
            for f in &mesh.faces {
                for e in 0..3 {
                    let (a, b) = (f[e], f[(e + 1) % 3]);
                    let d: f64 = (0..3)
                        .map(|d| (mesh.vertices[a][d] - mesh.vertices[b][d]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    nn[a] = nn[a].min(d);
                    nn[b] = nn[b].min(d);
                }
            }
            for d in nn {
                dmin = dmin.min(d);
                dmax = dmax.max(d);
            }
            assert!(dmax / dmin < 1.5, "quality ratio {} at level {k}", dmax / dmin);
        }
    }

    #[test]
    fn areas_partition_mesh_area() {
        let mesh = icosphere_shell(1, 1.0);
        let areas = marker_areas(&mesh);
        // icosahedron symmetry: all vertex areas equal
        for a in &areas {
            assert!((a - areas[0]).abs() < 1e-12);
        }
        let total_faces: f64 = mesh
            .faces
            .iter()
            .map(|f| tri_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]))
            .sum();
        let total_vertices: f64 = areas.iter().sum();
        assert!((total_faces - total_vertices).abs() < 1e-10 * total_faces);

        let mesh4 = icosphere_shell(4, 1.0);
        let total4: f64 = marker_areas(&mesh4).iter().sum();
        let sphere = 4.0 * std::f64::consts::PI;
        assert!(
            (total4 - sphere).abs() < 0.01 * sphere,
            "area {total4} vs {sphere}"
        );
        assert!(total4 < sphere, "inscribed mesh area deficit");
    }

    #[test]
    fn filled_sphere_layering() {
        // tiny sphere: just the shell and the center
        let tiny = filled_sphere(2, 1.0, 0.6, [0.0; 3]);
        assert_eq!(tiny.len(), 42 + 1);

        // a 162-surface filled model lands in the paper's size regime
        let r = 7.2;
        let s = 1.9;
        let m = filled_sphere(3, r, s, [0.0; 3]);
        assert!(
            m.len() >= 200 && m.len() <= 300,
            "filled model has {} markers",
            m.len()
        );
        assert!(m.min_spacing() >= 0.8 * s, "min spacing {}", m.min_spacing());
    }

    #[test]
    fn circle_and_disk_models() {
        let n = 39;
        let r = 3.0;
        let shell = circle_shell(n, r, [0.0, 0.0]);
        let expect = 2.0 * r * (std::f64::consts::PI / n as f64).sin();
        assert!((shell.min_spacing() - expect).abs() < 1e-12);

        let disk = polar_disk(6.0, 1.0, [10.0, 10.0]);
        for p in &disk.positions {
            let d = ((p[0] - 10.0).powi(2) + (p[1] - 10.0).powi(2)).sqrt();
            assert!(d <= 6.0 + 1e-12);
        }
        // 37-surface-like configuration: rings j=1..6, outermost count 38
        assert_eq!(disk.len(), 1 + (1..=6).map(|j| (2.0 * std::f64::consts::PI * j as f64).round() as usize).sum::<usize>());
        assert!((121i64 - disk.len() as i64).abs() < 20, "disk count {}", disk.len());
    }
}
