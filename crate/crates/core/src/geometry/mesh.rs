use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::{Mat3, Vec2, Vec3};
use super::rotation::Rotation;
use crate::error::{Error, Result};
use crate::real::Real;

/// Triangle mesh with a per-vertex UV atlas.
#[derive(Clone, Debug, PartialEq)]
pub struct GuideMesh<T: Real> {
    vertices: Vec<Vec3<T>>,
    triangles: Vec<[u32; 3]>,
    uvs: Vec<Vec2<T>>,
}

/// Position of a point on the mesh: triangle index plus barycentric weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SurfaceAnchor<T: Real> {
    pub triangle: u32,
    pub bary: [T; 3],
}

impl<T: Real> GuideMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>, uvs: Vec<Vec2<T>>) -> Result<Self> {
        if uvs.len() != vertices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} uvs for {} vertices",
                uvs.len(),
                vertices.len()
            )));
        }
        let n = vertices.len() as u32;
        for (i, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!(
                    "triangle {i} references a vertex >= {n}"
                )));
            }
            let [a, b, c] = tri.map(|v| uvs[v as usize]);
            if uv_area2(a, b, c) == T::zero() {
                return Err(Error::Degenerate(format!("triangle {i} has zero uv area")));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            uvs,
        })
    }

    /// Regular grid over the unit UV square mapped through `f(u, v)`.
    /// Triangles are counter-clockwise in UV; triangles that collapse in
    /// space (e.g. at poles) are dropped.
    pub fn parametric(res_u: usize, res_v: usize, f: impl Fn(T, T) -> Vec3<T>) -> Result<Self> {
        if res_u == 0 || res_v == 0 {
            return Err(Error::InvalidInput("grid resolution must be >= 1".into()));
        }
        let mut vertices = Vec::with_capacity((res_u + 1) * (res_v + 1));
        let mut uvs = Vec::with_capacity(vertices.capacity());
        for j in 0..=res_v {
            for i in 0..=res_u {
                let u = T::lit(i as f64 / res_u as f64);
                let v = T::lit(j as f64 / res_v as f64);
                vertices.push(f(u, v));
                uvs.push(Vec2::new(u, v));
            }
        }
        let id = |i: usize, j: usize| (j * (res_u + 1) + i) as u32;
        let area_eps = T::lit(1e-12);
        let mut triangles = Vec::with_capacity(2 * res_u * res_v);
        for j in 0..res_v {
            for i in 0..res_u {
                for tri in [
                    [id(i, j), id(i + 1, j), id(i + 1, j + 1)],
                    [id(i, j), id(i + 1, j + 1), id(i, j + 1)],
                ] {
                    let [a, b, c] = tri.map(|k| vertices[k as usize]);
                    if (b - a).cross(c - a).norm() > area_eps {
                        triangles.push(tri);
                    }
                }
            }
        }
        if triangles.is_empty() {
            return Err(Error::Degenerate("parametric surface has no area".into()));
        }
        Self::new(vertices, triangles, uvs)
    }

    /// Sphere with outward normals; `u` runs around the equator, `v` pole to pole.
    pub fn uv_sphere(radius: T, res_u: usize, res_v: usize) -> Result<Self> {
        let pi = T::PI();
        Self::parametric(res_u, res_v, |u, v| {
            let (theta, phi) = (pi * v, (pi + pi) * u);
            Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()) * radius
        })
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn uvs(&self) -> &[Vec2<T>] {
        &self.uvs
    }

    /// Same topology and atlas with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3<T>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} vertices for a mesh of {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            triangles: self.triangles.clone(),
            uvs: self.uvs.clone(),
        })
    }

    pub fn cast<U: Real>(&self) -> GuideMesh<U> {
        GuideMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            triangles: self.triangles.clone(),
            uvs: self
                .uvs
                .iter()
                .map(|uv| Vec2::new(U::lit(uv.x.as_f64()), U::lit(uv.y.as_f64())))
                .collect(),
        }
    }

    pub fn triangle_positions(&self, tri: u32) -> [Vec3<T>; 3] {
        self.triangles[tri as usize].map(|v| self.vertices[v as usize])
    }

    pub fn triangle_uvs(&self, tri: u32) -> [Vec2<T>; 3] {
        self.triangles[tri as usize].map(|v| self.uvs[v as usize])
    }

    /// First triangle (lowest index) whose UV footprint contains `uv`.
    pub fn locate_uv(&self, uv: Vec2<T>) -> Option<SurfaceAnchor<T>> {
        let tol = T::lit(1e-7);
        self.triangles.iter().enumerate().find_map(|(i, _)| {
            let [a, b, c] = self.triangle_uvs(i as u32);
            let area = uv_area2(a, b, c);
            let w0 = uv_area2(uv, b, c) / area;
            let w1 = uv_area2(a, uv, c) / area;
            let w2 = T::one() - w0 - w1;
            (w0 >= -tol && w1 >= -tol && w2 >= -tol).then_some(SurfaceAnchor {
                triangle: i as u32,
                bary: [w0, w1, w2],
            })
        })
    }

    fn anchor_or_err(&self, uv: Vec2<T>) -> Result<SurfaceAnchor<T>> {
        self.locate_uv(uv).ok_or(Error::UvNotCovered {
            u: uv.x.as_f64(),
            v: uv.y.as_f64(),
        })
    }

    pub fn surface_point(&self, anchor: &SurfaceAnchor<T>) -> Vec3<T> {
        let p = self.triangle_positions(anchor.triangle);
        p[0] * anchor.bary[0] + p[1] * anchor.bary[1] + p[2] * anchor.bary[2]
    }

    /// Surface point and (tangent, bitangent, normal) frame at a UV location.
    pub fn tangent_frame(&self, uv: Vec2<T>) -> Result<(Vec3<T>, Rotation<T>)> {
        let anchor = self.anchor_or_err(uv)?;
        let frame = TriangleFrame::new(
            self.triangle_positions(anchor.triangle),
            self.triangle_uvs(anchor.triangle),
        )?;
        Ok((self.surface_point(&anchor), frame.rotation()))
    }

    /// Per-axis primitive scale from the UV Jacobian at `uv`.
    pub fn uv_scale_gradient(&self, uv: Vec2<T>, grid_spacing: T) -> Result<Vec3<T>> {
        let anchor = self.anchor_or_err(uv)?;
        let frame = TriangleFrame::new(
            self.triangle_positions(anchor.triangle),
            self.triangle_uvs(anchor.triangle),
        )?;
        Ok(frame.scale(grid_spacing))
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for uv in &self.uvs {
            let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
        }
        for t in &self.triangles {
            let _ = writeln!(
                out,
                "f {0}/{0} {1}/{1} {2}/{2}",
                t[0] + 1,
                t[1] + 1,
                t[2] + 1
            );
        }
        out
    }

    /// Parses `v`, `vt` and `f v/vt` records. Vertices that appear with
    /// several texture coordinates are split, one mesh vertex per pair.
    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut positions = Vec::new();
        let mut texcoords = Vec::new();
        let mut faces: Vec<Vec<(usize, usize)>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let xs: Vec<f64> = it
                        .take(3)
                        .map(|s| s.parse().map_err(|_| bad("bad vertex coordinate")))
                        .collect::<Result<_>>()?;
                    if xs.len() != 3 {
                        return Err(bad("vertex needs 3 coordinates"));
                    }
                    positions.push(Vec3::new(T::lit(xs[0]), T::lit(xs[1]), T::lit(xs[2])));
                }
                Some("vt") => {
                    let xs: Vec<f64> = it
                        .take(2)
                        .map(|s| s.parse().map_err(|_| bad("bad texture coordinate")))
                        .collect::<Result<_>>()?;
                    if xs.len() != 2 {
                        return Err(bad("vt needs 2 coordinates"));
                    }
                    texcoords.push(Vec2::new(T::lit(xs[0]), T::lit(xs[1])));
                }
                Some("f") => {
                    let mut face = Vec::new();
                    for tok in it {
                        let mut parts = tok.split('/');
                        let v = parts.next().and_then(|s| s.parse::<usize>().ok());
                        let vt = parts.next().and_then(|s| s.parse::<usize>().ok());
                        match (v, vt) {
                            (Some(v), Some(vt))
                                if v >= 1 && vt >= 1 && v <= positions.len() && vt <= texcoords.len() =>
                            {
                                face.push((v - 1, vt - 1))
                            }
                            _ => return Err(bad("face corners must be v/vt with valid 1-based indices")),
                        }
                    }
                    if face.len() < 3 {
                        return Err(bad("face needs at least 3 corners"));
                    }
                    faces.push(face);
                }
                _ => {}
            }
        }
        let mut index: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for face in &faces {
            for &c in face {
                index.insert(c, 0);
            }
        }
        let mut vertices = Vec::with_capacity(index.len());
        let mut uvs = Vec::with_capacity(index.len());
        for (i, (&(v, vt), slot)) in index.iter_mut().enumerate() {
            *slot = i as u32;
            vertices.push(positions[v]);
            uvs.push(texcoords[vt]);
        }
        let mut triangles = Vec::new();
        for face in &faces {
            for k in 1..face.len() - 1 {
                triangles.push([index[&face[0]], index[&face[k]], index[&face[k + 1]]]);
            }
        }
        Self::new(vertices, triangles, uvs)
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse_obj(&std::fs::read_to_string(path)?)
    }
}

/// Twice the signed area of a UV triangle.
fn uv_area2<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    let ab = b - a;
    let ac = c - a;
    ab.x * ac.y - ab.y * ac.x
}

/// Differentiable local frame of one triangle: the UV Jacobian columns and the
/// orthonormal (tangent, bitangent, normal) basis derived from them. The
/// normal follows the triangle winding; the tangent is `∂x/∂u` projected onto
/// the face plane.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TriangleFrame<T: Real> {
    e1: Vec3<T>,
    e2: Vec3<T>,
    du1: T,
    dv1: T,
    du2: T,
    dv2: T,
    det: T,
    tu: Vec3<T>,
    tv: Vec3<T>,
    m_norm: T,
    n: Vec3<T>,
    w_norm: T,
    t: Vec3<T>,
}

impl<T: Real> TriangleFrame<T> {
    pub(crate) fn new(p: [Vec3<T>; 3], uv: [Vec2<T>; 3]) -> Result<Self> {
        let e1 = p[1] - p[0];
        let e2 = p[2] - p[0];
        let d1 = uv[1] - uv[0];
        let d2 = uv[2] - uv[0];
        let det = d1.x * d2.y - d2.x * d1.y;
        if det == T::zero() {
            return Err(Error::Degenerate("singular uv jacobian".into()));
        }
        let tu = (e1 * d2.y - e2 * d1.y) * (T::one() / det);
        let tv = (e2 * d1.x - e1 * d2.x) * (T::one() / det);
        let m = e1.cross(e2);
        let m_norm = m.norm();
        if m_norm <= T::min_positive_value() || tu.norm() <= T::min_positive_value() || tv.norm() <= T::min_positive_value() {
            return Err(Error::Degenerate("zero-area triangle or collapsed uv axis".into()));
        }
        let n = m * (T::one() / m_norm);
        let w = tu - n * tu.dot(n);
        let w_norm = w.norm();
        if w_norm <= T::min_positive_value() {
            return Err(Error::Degenerate("tangent parallel to normal".into()));
        }
        Ok(Self {
            e1,
            e2,
            du1: d1.x,
            dv1: d1.y,
            du2: d2.x,
            dv2: d2.y,
            det,
            tu,
            tv,
            m_norm,
            n,
            w_norm,
            t: w * (T::one() / w_norm),
        })
    }

    pub(crate) fn rotation(&self) -> Rotation<T> {
        Rotation::from_frame(self.t, self.n.cross(self.t), self.n)
    }

    /// `(‖∂x/∂u‖h, ‖∂x/∂v‖h, sqrt(‖∂x/∂u‖‖∂x/∂v‖)h)`
    pub(crate) fn scale(&self, spacing: T) -> Vec3<T> {
        let a = self.tu.norm();
        let b = self.tv.norm();
        Vec3::new(a * spacing, b * spacing, (a * b).sqrt() * spacing)
    }

    /// Gradients with respect to the three triangle corners, given upstream
    /// gradients of the frame rotation matrix and of [`Self::scale`].
    pub(crate) fn backward(&self, g_rot: &Mat3<T>, g_scale: Vec3<T>, spacing: T) -> [Vec3<T>; 3] {
        let (n, t) = (self.n, self.t);
        let g_t0 = g_rot.col(0);
        let g_b = g_rot.col(1);
        let mut g_n = g_rot.col(2);
        // b = n × t
        g_n += t.cross(g_b);
        let g_t = g_t0 + g_b.cross(n);
        // t = w / |w|
        let g_w = (g_t - t * t.dot(g_t)) * (T::one() / self.w_norm);
        // w = tu − (tu·n) n
        let nw = n.dot(g_w);
        let mut g_tu = g_w - n * nw;
        g_n -= self.tu * nw + g_w * self.tu.dot(n);
        // n = m / |m|
        let g_m = (g_n - n * n.dot(g_n)) * (T::one() / self.m_norm);
        // m = e1 × e2
        let mut g_e1 = self.e2.cross(g_m);
        let mut g_e2 = g_m.cross(self.e1);

        let a = self.tu.norm();
        let b = self.tv.norm();
        let sz = (a * b).sqrt() * spacing;
        let half = T::lit(0.5);
        g_tu += self.tu * ((g_scale.x * spacing + g_scale.z * sz * half / a) / a);
        let g_tv = self.tv * ((g_scale.y * spacing + g_scale.z * sz * half / b) / b);

        let inv = T::one() / self.det;
        g_e1 += g_tu * (self.dv2 * inv) - g_tv * (self.du2 * inv);
        g_e2 += g_tv * (self.du1 * inv) - g_tu * (self.dv1 * inv);
        [-(g_e1 + g_e2), g_e1, g_e2]
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::unit_quad;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transformed(mesh: &GuideMesh<f64>, f: impl Fn(Vec3<f64>) -> Vec3<f64>) -> GuideMesh<f64> {
        mesh.with_vertices(mesh.vertices().iter().map(|&v| f(v)).collect())
            .unwrap()
    }

    #[test]
    fn flat_quad_frame_is_identity() {
        let mesh = unit_quad::<f64>();
        let (p, r) = mesh.tangent_frame(Vec2::new(0.5, 0.5)).unwrap();
        assert!((p - Vec3::new(0.5, 0.5, 0.0)).max_abs() < 1e-15);
        assert!(r.matrix().max_abs_diff(&Mat3::identity()) < 1e-15);
    }

    #[test]
    fn rotated_quad_normal_follows_rotation() {
        let rot = Rotation::from_axis_angle(Vec3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let mesh = transformed(&unit_quad(), |v| rot.apply(v));
        let (_, r) = mesh.tangent_frame(Vec2::new(0.3, 0.6)).unwrap();
        assert!((r.matrix().col(2) - Vec3::new(0.0, -1.0, 0.0)).max_abs() < 1e-12);
    }

    #[test]
    fn uv_outside_atlas_is_an_error() {
        let mesh = unit_quad::<f64>();
        assert!(matches!(
            mesh.tangent_frame(Vec2::new(1.5, 0.5)),
            Err(Error::UvNotCovered { .. })
        ));
    }

    #[test]
    fn isometric_scale() {
        let mesh = unit_quad::<f64>();
        let s = mesh.uv_scale_gradient(Vec2::new(0.2, 0.7), 1.0 / 16.0).unwrap();
        assert!((s - Vec3::splat(1.0 / 16.0)).max_abs() < 1e-15);
    }

    #[test]
    fn stretched_scale_hand_computed() {
        let mesh = transformed(&unit_quad(), |v| Vec3::new(2.0 * v.x, v.y, v.z));
        let s = mesh.uv_scale_gradient(Vec2::new(0.4, 0.4), 1.0 / 16.0).unwrap();
        let expect = Vec3::new(2.0 / 16.0, 1.0 / 16.0, 2f64.sqrt() / 16.0);
        assert!((s - expect).max_abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_triangle() {
        // (0.5, 0.5) lies on the shared diagonal of both triangles.
        let a = unit_quad::<f64>().locate_uv(Vec2::new(0.5, 0.5)).unwrap();
        assert_eq!(a.triangle, 0);
    }

    fn random_triangle(rng: &mut ChaCha8Rng) -> ([Vec3<f64>; 3], [Vec2<f64>; 3]) {
        let mut v = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let p = [v(), v(), v()];
        let uv = [
            Vec2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
            Vec2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
            Vec2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
        ];
        (p, uv)
    }

    #[test]
    fn random_frames_are_orthonormal_with_positive_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 200 {
            let (p, uv) = random_triangle(&mut rng);
            let Ok(f) = TriangleFrame::new(p, uv) else { continue };
            assert!(f.rotation().orthonormality_error() < 1e-12);
            assert!((f.rotation().matrix().det() - 1.0).abs() < 1e-12);
            let s = f.scale(0.1);
            assert!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0);
            checked += 1;
        }
    }

    #[test]
    fn frame_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (p, uv) = random_triangle(&mut rng);
        let frame = TriangleFrame::new(p, uv).unwrap();
        let g_rot = Mat3 { m: std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))) };
        let g_s = Vec3::new(0.3, -0.7, 1.1);
        let objective = |p: [Vec3<f64>; 3]| {
            let f = TriangleFrame::new(p, uv).unwrap();
            f.rotation().matrix().frob_dot(&g_rot) + f.scale(0.25).dot(g_s)
        };
        let grads = frame.backward(&g_rot, g_s, 0.25);
        for corner in 0..3 {
            for axis in 0..3 {
                let h = 1e-6;
                let mut pp = p;
                pp[corner][axis] += h;
                let mut pm = p;
                pm[corner][axis] -= h;
                let fd = (objective(pp) - objective(pm)) / (2.0 * h);
                let an = grads[corner][axis];
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "corner {corner} axis {axis}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn sphere_normals_point_outward() {
        let mesh = GuideMesh::<f64>::uv_sphere(0.7, 16, 8).unwrap();
        for tri in 0..mesh.triangles().len() as u32 {
            let p = mesh.triangle_positions(tri);
            let f = TriangleFrame::new(p, mesh.triangle_uvs(tri)).unwrap();
            let c = (p[0] + p[1] + p[2]) * (1.0 / 3.0);
            assert!(f.rotation().matrix().col(2).dot(c) > 0.0);
        }
        for v in mesh.vertices() {
            assert!((v.norm() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn obj_round_trip_and_seam_split() {
        let mesh = unit_quad::<f64>();
        let back = GuideMesh::<f64>::parse_obj(&mesh.to_obj()).unwrap();
        assert_eq!(back, mesh);

        let seam = "v 0 0 0\nv 1 0 0\nv 1 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0.5 0\n\
                    f 1/1 2/2 3/3\nf 1/4 3/3 2/2\n";
        let m = GuideMesh::<f64>::parse_obj(seam).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles().len(), 2);
    }

    #[test]
    fn obj_rejects_bad_faces() {
        assert!(GuideMesh::<f32>::parse_obj("v 0 0 0\nf 1 1 1\n").is_err());
        assert!(GuideMesh::<f32>::parse_obj("v 0 0 0\nvt 0 0\nf 1/1 2/1 1/1\n").is_err());
    }
}
