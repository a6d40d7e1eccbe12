use crate::error::{Error, Result};
use crate::geometry::{GuideMesh, Mat3, SurfaceAnchor, TriangleFrame, Vec2, Vec3};
use crate::real::Real;

use super::transform::{BaseTransform, PrimitiveTransform};

/// Primitives placed on a regular UV grid over a guide mesh.
#[derive(Clone, Debug)]
pub struct MeshInit<T: Real> {
    pub anchors: Vec<SurfaceAnchor<T>>,
    /// Grid UV coordinate of each placed primitive.
    pub uvs: Vec<Vec2<T>>,
    /// UV grid spacing `1 / sqrt(N)`.
    pub spacing: T,
    pub transforms: Vec<PrimitiveTransform<T>>,
}

/// Places up to `n_prim` primitives at the centers of a `sqrt(N) × sqrt(N)`
/// UV grid. Grid points that miss the atlas are skipped; fewer than half
/// landing is an error.
pub fn init_from_mesh<T: Real>(mesh: &GuideMesh<T>, n_prim: usize) -> Result<MeshInit<T>> {
    let side = (n_prim as f64).sqrt().round() as usize;
    if n_prim == 0 || side * side != n_prim {
        return Err(Error::InvalidInput(format!(
            "primitive count {n_prim} is not a positive perfect square"
        )));
    }
    let h = 1.0 / side as f64;
    let spacing = T::lit(h);
    let mut out = MeshInit {
        anchors: Vec::with_capacity(n_prim),
        uvs: Vec::with_capacity(n_prim),
        spacing,
        transforms: Vec::with_capacity(n_prim),
    };
    for j in 0..side {
        for i in 0..side {
            let uv = Vec2::new(T::lit((i as f64 + 0.5) * h), T::lit((j as f64 + 0.5) * h));
            let Some(anchor) = mesh.locate_uv(uv) else { continue };
            let base = base_from_anchor(mesh, &anchor, spacing)?;
            out.anchors.push(anchor);
            out.uvs.push(uv);
            out.transforms.push(PrimitiveTransform::from_base(base));
        }
    }
    if out.anchors.len() * 2 < n_prim {
        return Err(Error::UvNotCovered {
            u: f64::NAN,
            v: f64::NAN,
        });
    }
    Ok(out)
}

/// Base transform of a primitive anchored on the mesh, recomputed from the
/// current vertex positions.
pub fn base_from_anchor<T: Real>(
    mesh: &GuideMesh<T>,
    anchor: &SurfaceAnchor<T>,
    spacing: T,
) -> Result<BaseTransform<T>> {
    let frame = TriangleFrame::new(
        mesh.triangle_positions(anchor.triangle),
        mesh.triangle_uvs(anchor.triangle),
    )?;
    Ok(BaseTransform {
        translation: mesh.surface_point(anchor),
        rotation: frame.rotation(),
        scale: frame.scale(spacing),
    })
}

/// Pulls base-transform gradients back to the anchor triangle's vertices.
/// Returns `(vertex index, gradient)` for the three corners.
pub fn base_from_anchor_backward<T: Real>(
    mesh: &GuideMesh<T>,
    anchor: &SurfaceAnchor<T>,
    spacing: T,
    g_translation: Vec3<T>,
    g_rotation: &Mat3<T>,
    g_scale: Vec3<T>,
) -> Result<[(u32, Vec3<T>); 3]> {
    let tri = mesh.triangles()[anchor.triangle as usize];
    let frame = TriangleFrame::new(
        mesh.triangle_positions(anchor.triangle),
        mesh.triangle_uvs(anchor.triangle),
    )?;
    let g = frame.backward(g_rotation, g_scale, spacing);
    Ok(std::array::from_fn(|c| {
        (tri[c], g[c] + g_translation * anchor.bary[c])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fixtures::unit_quad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_on_flat_quad() {
        let init = init_from_mesh(&unit_quad::<f64>(), 16).unwrap();
        assert_eq!(init.transforms.len(), 16);
        assert_eq!(init.spacing, 0.25);
        let b = &init.transforms[5].base;
        assert!((b.translation - Vec3::new(0.375, 0.375, 0.0)).max_abs() < 1e-15);
        assert!((b.scale - Vec3::splat(0.25)).max_abs() < 1e-15);
    }

    #[test]
    fn non_square_count_rejected() {
        assert!(init_from_mesh(&unit_quad::<f64>(), 15).is_err());
        assert!(init_from_mesh(&unit_quad::<f64>(), 0).is_err());
    }

    #[test]
    fn sparse_atlas_rejected() {
        // Atlas only covers the lower-left triangle of UV space; half of a
        // 2×2 grid lands exactly on its diagonal, so shrink it further.
        let mesh = GuideMesh::<f64>::new(
            vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
            vec![Vec2::new(0.0, 0.0), Vec2::new(0.3, 0.0), Vec2::new(0.0, 0.3)],
        )
        .unwrap();
        assert!(matches!(init_from_mesh(&mesh, 16), Err(Error::UvNotCovered { .. })));
    }

    /// Closest point on triangle `abc` to `p`, by Voronoi region.
    fn closest_on_triangle(p: Vec3<f64>, a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>) -> Vec3<f64> {
        let (ab, ac, ap) = (b - a, c - a, p - a);
        let (d1, d2) = (ab.dot(ap), ac.dot(ap));
        if d1 <= 0.0 && d2 <= 0.0 {
            return a;
        }
        let bp = p - b;
        let (d3, d4) = (ab.dot(bp), ac.dot(bp));
        if d3 >= 0.0 && d4 <= d3 {
            return b;
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            return a + ab * (d1 / (d1 - d3));
        }
        let cp = p - c;
        let (d5, d6) = (ab.dot(cp), ac.dot(cp));
        if d6 >= 0.0 && d5 <= d6 {
            return c;
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            return a + ac * (d2 / (d2 - d6));
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
            return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
        }
        let denom = 1.0 / (va + vb + vc);
        a + ab * (vb * denom) + ac * (vc * denom)
    }

    #[test]
    fn sphere_centers_lie_on_the_surface() {
        let mesh = GuideMesh::<f64>::uv_sphere(1.0, 256, 128).unwrap();
        let init = init_from_mesh(&mesh, 64).unwrap();
        assert_eq!(init.transforms.len(), 64);
        for xf in &init.transforms {
            let t = xf.base.translation;
            let to_mesh = (0..mesh.triangles().len() as u32)
                .map(|i| {
                    let [a, b, c] = mesh.triangle_positions(i);
                    (closest_on_triangle(t, a, b, c) - t).norm()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(to_mesh < 1e-9, "center {t:?} is {to_mesh} from the mesh");
            assert!((t.norm() - 1.0).abs() < 1e-3, "center {t:?} is off the sphere");
            assert!(xf.base.scale.x > 0.0 && xf.base.scale.y > 0.0 && xf.base.scale.z > 0.0);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base_mesh = unit_quad::<f64>();
        let verts: Vec<_> = base_mesh
            .vertices()
            .iter()
            .map(|v| *v + Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.3..0.3)))
            .collect();
        let mesh = base_mesh.with_vertices(verts.clone()).unwrap();
        let anchor = mesh.locate_uv(Vec2::new(0.7, 0.2)).unwrap();
        let gt = Vec3::new(0.4, -1.0, 0.2);
        let gs = Vec3::new(-0.3, 0.8, 0.5);
        let gr = Mat3 { m: std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))) };
        let objective = |v: &[Vec3<f64>]| {
            let m = mesh.with_vertices(v.to_vec()).unwrap();
            let b = base_from_anchor(&m, &anchor, 0.125).unwrap();
            b.translation.dot(gt) + b.rotation.matrix().frob_dot(&gr) + b.scale.dot(gs)
        };
        let grads = base_from_anchor_backward(&mesh, &anchor, 0.125, gt, &gr, gs).unwrap();
        for (vi, g) in grads {
            for a in 0..3 {
                let mut vp = verts.clone();
                vp[vi as usize][a] += 1e-6;
                let mut vm = verts.clone();
                vm[vi as usize][a] -= 1e-6;
                let fd = (objective(&vp) - objective(&vm)) / 2e-6;
                assert!((fd - g[a]).abs() < 1e-6, "{fd} vs {}", g[a]);
            }
        }
    }
}
