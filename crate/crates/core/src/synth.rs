//! Procedural test surfaces: planar patches, spheres, cylinders and height
//! fields. All meshes are oriented with outward (or +z) normals.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use crate::mesh::{TriMesh, Vec3};

fn build(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> TriMesh {
    TriMesh::new(positions, faces).expect("generated mesh is valid")
}

/// Planar rectangle in z = 0 split into `nx` x `ny` cells, two triangles per
/// cell sharing the (i, j)-(i+1, j+1) diagonal.
pub fn grid(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> TriMesh {
    height_field(x0, x1, y0, y1, nx, ny, |_, _| 0.0)
}

pub fn height_field(
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    nx: usize,
    ny: usize,
    z: impl Fn(f64, f64) -> f64,
) -> TriMesh {
    let mut positions = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = y0 + (y1 - y0) * j as f64 / ny as f64;
        for i in 0..=nx {
            let x = x0 + (x1 - x0) * i as f64 / nx as f64;
            positions.push(Vec3::new(x, y, z(x, y)));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    build(positions, faces)
}

/// The planar strip [0, 20] x [0, 10] used throughout the tests, with
/// square cells of side `20 / nx`.
pub fn strip(nx: usize) -> TriMesh {
    grid(0.0, 20.0, 0.0, 10.0, nx, nx / 2)
}

/// Disk vertex layout: centre plus ring k holding 6k points at radius
/// k / rings (unit disk). Returns 2D points and faces.
fn unit_disk(rings: usize) -> (Vec<(f64, f64)>, Vec<[usize; 3]>) {
    let mut pts = vec![(0.0, 0.0)];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(pts.len());
        let n = 6 * k;
        let r = k as f64 / rings as f64;
        for s in 0..n {
            let a = TAU * s as f64 / n as f64;
            pts.push((r * a.cos(), r * a.sin()));
        }
    }
    let mut faces = Vec::new();
    for k in 1..=rings {
        let outer = |s: usize| ring_start[k] + s % (6 * k);
        if k == 1 {
            for s in 0..6 {
                faces.push([0, outer(s), outer(s + 1)]);
            }
            continue;
        }
        let inner_n = 6 * (k - 1);
        let inner = |s: usize| ring_start[k - 1] + s % inner_n;
        // Each of the six sectors has k outer and k-1 inner segments.
        for sector in 0..6 {
            for s in 0..k {
                let o = sector * k + s;
                let i = sector * (k - 1) + s;
                faces.push([inner(i), outer(o), outer(o + 1)]);
                if s < k - 1 {
                    faces.push([inner(i), outer(o + 1), inner(i + 1)]);
                }
            }
        }
    }
    (pts, faces)
}

/// Planar disk of the given radius with `rings` concentric rings
/// (6 rings² faces).
pub fn disk(radius: f64, rings: usize) -> TriMesh {
    let (pts, faces) = unit_disk(rings);
    let positions = pts
        .into_iter()
        .map(|(x, y)| Vec3::new(radius * x, radius * y, 0.0))
        .collect();
    build(positions, faces)
}

/// Planar annulus between `r_in` and `r_out`.
pub fn annulus(r_in: f64, r_out: f64, rings: usize, segments: usize) -> TriMesh {
    let mut positions = Vec::new();
    for k in 0..=rings {
        let r = r_in + (r_out - r_in) * k as f64 / rings as f64;
        // Stagger alternate rings by half a segment for better triangles.
        let off = if k % 2 == 1 { 0.5 } else { 0.0 };
        for s in 0..segments {
            let a = TAU * (s as f64 + off) / segments as f64;
            positions.push(Vec3::new(r * a.cos(), r * a.sin(), 0.0));
        }
    }
    let id = |k: usize, s: usize| k * segments + s % segments;
    let mut faces = Vec::new();
    for k in 0..rings {
        for s in 0..segments {
            // (angle, radius) is a clockwise frame, hence the winding.
            if k % 2 == 0 {
                faces.push([id(k, s), id(k + 1, s), id(k, s + 1)]);
                faces.push([id(k, s + 1), id(k + 1, s), id(k + 1, s + 1)]);
            } else {
                faces.push([id(k, s), id(k + 1, s), id(k + 1, s + 1)]);
                faces.push([id(k, s), id(k + 1, s + 1), id(k, s + 1)]);
            }
        }
    }
    build(positions, faces)
}

/// Subdivided icosahedron projected to a sphere (20 * 4^level faces).
pub fn icosphere(radius: f64, level: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
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
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, positions: &mut Vec<Vec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                positions.push(((positions[a] + positions[b]) * 0.5).normalize());
                positions.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut positions);
            let bc = mid(b, c, &mut positions);
            let ca = mid(c, a, &mut positions);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for p in &mut positions {
        *p *= radius;
    }
    build(positions, faces)
}

/// Spherical cap around +z: all points within polar angle `max_polar`
/// (radians). The disk layout is wrapped on the sphere by the azimuthal
/// equidistant map, so rings are geodesic circles around the pole.
pub fn sphere_cap(radius: f64, max_polar: f64, rings: usize) -> TriMesh {
    let (pts, faces) = unit_disk(rings);
    let positions = pts
        .into_iter()
        .map(|(x, y)| {
            let rho = (x * x + y * y).sqrt();
            let theta = rho * max_polar;
            let az = y.atan2(x);
            Vec3::new(
                radius * theta.sin() * az.cos(),
                radius * theta.sin() * az.sin(),
                radius * theta.cos(),
            )
        })
        .collect();
    build(positions, faces)
}

/// Open cylinder of radius `radius` around the z axis, z in [0, height].
pub fn cylinder(radius: f64, height: f64, segments: usize, layers: usize) -> TriMesh {
    let mut positions = Vec::new();
    for j in 0..=layers {
        let z = height * j as f64 / layers as f64;
        let off = if j % 2 == 1 { 0.5 } else { 0.0 };
        for s in 0..segments {
            let a = TAU * (s as f64 + off) / segments as f64;
            positions.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let id = |j: usize, s: usize| j * segments + s % segments;
    let mut faces = Vec::new();
    for j in 0..layers {
        for s in 0..segments {
            if j % 2 == 0 {
                faces.push([id(j, s), id(j, s + 1), id(j + 1, s)]);
                faces.push([id(j, s + 1), id(j + 1, s + 1), id(j + 1, s)]);
            } else {
                faces.push([id(j, s), id(j + 1, s + 1), id(j + 1, s)]);
                faces.push([id(j, s), id(j, s + 1), id(j + 1, s + 1)]);
            }
        }
    }
    build(positions, faces)
}

/// Smooth free-form test surface: a 40 x 40 mm patch with a gentle
/// two-directional wave, `n` cells per side.
pub fn wavy(n: usize) -> TriMesh {
    height_field(0.0, 40.0, 0.0, 40.0, n, n, wavy_height)
}

pub fn wavy_height(x: f64, y: f64) -> f64 {
    3.0 * (PI * x / 40.0).sin() * (PI * y / 30.0).cos() + 0.5 * (PI * x / 15.0).sin()
}

/// Face-like relief on an elliptical footprint (semi-axes 35 x 45 mm): a
/// shallow dome with nose, cheek and brow bumps. Disk topology, one boundary
/// loop, suited to contour-parallel planning.
pub fn face_like(rings: usize) -> TriMesh {
    let (pts, faces) = unit_disk(rings);
    let positions = pts
        .into_iter()
        .map(|(u, v)| {
            let (x, y) = (35.0 * u, 45.0 * v);
            Vec3::new(x, y, face_height(x, y))
        })
        .collect();
    build(positions, faces)
}

pub fn face_height(x: f64, y: f64) -> f64 {
    let g = |cx: f64, cy: f64, sx: f64, sy: f64, a: f64| {
        a * (-((x - cx).powi(2) / (2.0 * sx * sx) + (y - cy).powi(2) / (2.0 * sy * sy))).exp()
    };
    let dome = 8.0 * (1.0 - (x / 35.0).powi(2) - (y / 45.0).powi(2)).max(0.0);
    dome + g(0.0, -2.0, 5.5, 9.0, 7.0)
        + g(-14.0, -10.0, 8.0, 7.0, 4.0)
        + g(14.0, -10.0, 8.0, 7.0, 4.0)
        + g(0.0, 22.0, 20.0, 8.0, 4.0)
}
