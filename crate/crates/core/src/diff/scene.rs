use crate::error::{Error, Result};
use crate::geometry::{GuideMesh, SurfaceAnchor, Vec3};
use crate::primitive::{
    base_from_anchor, init_from_mesh, BaseTransform, PrimitiveSlab, PrimitiveTransform,
    TransformDelta, WindowParams,
};
use crate::real::Real;
use crate::renderer::{FrameGeometry, SceneView};

use super::params::SceneParams;

/// Where base transforms come from.
#[derive(Clone, Debug)]
pub enum Attachment<T: Real> {
    /// Constant bases, independent of any mesh.
    Fixed(Vec<BaseTransform<T>>),
    /// Bases recomputed from the (offset) guide mesh at each anchor.
    Mesh {
        mesh: GuideMesh<T>,
        anchors: Vec<SurfaceAnchor<T>>,
        spacing: T,
    },
}

impl<T: Real> Attachment<T> {
    pub fn len(&self) -> usize {
        match self {
            Attachment::Fixed(b) => b.len(),
            Attachment::Mesh { anchors, .. } => anchors.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mesh(&self) -> Option<&GuideMesh<T>> {
        match self {
            Attachment::Fixed(_) => None,
            Attachment::Mesh { mesh, .. } => Some(mesh),
        }
    }

    pub fn cast<U: Real>(&self) -> Attachment<U> {
        match self {
            Attachment::Fixed(b) => Attachment::Fixed(
                b.iter()
                    .map(|b| BaseTransform {
                        translation: b.translation.cast(),
                        rotation: crate::geometry::Rotation::from_matrix_unchecked(b.rotation.matrix().cast()),
                        scale: b.scale.cast(),
                    })
                    .collect(),
            ),
            Attachment::Mesh {
                mesh,
                anchors,
                spacing,
            } => Attachment::Mesh {
                mesh: mesh.cast(),
                anchors: anchors
                    .iter()
                    .map(|a| SurfaceAnchor {
                        triangle: a.triangle,
                        bary: a.bary.map(|b| U::lit(b.as_f64())),
                    })
                    .collect(),
                spacing: U::lit(spacing.as_f64()),
            },
        }
    }
}

/// Primitive mixture: attachment to the guide mesh plus learned parameters.
#[derive(Clone, Debug)]
pub struct Scene<T: Real> {
    pub attachment: Attachment<T>,
    pub params: SceneParams<T>,
    pub window: WindowParams,
}

impl<T: Real> Scene<T> {
    pub fn new(attachment: Attachment<T>, params: SceneParams<T>, window: WindowParams) -> Result<Self> {
        window.validate()?;
        let n = attachment.len();
        if params.payload.n_prim() != n || params.deltas.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} bases, {} payloads, {} deltas",
                params.payload.n_prim(),
                params.deltas.len()
            )));
        }
        let n_vert = attachment.mesh().map_or(0, |m| m.vertices().len());
        if !params.vertex_offsets.is_empty() && params.vertex_offsets.len() != n_vert {
            return Err(Error::ShapeMismatch(format!(
                "{} vertex offsets for {n_vert} mesh vertices",
                params.vertex_offsets.len()
            )));
        }
        Ok(Self {
            attachment,
            params,
            window,
        })
    }

    /// Primitives on a UV grid over `mesh` with a constant payload and zero
    /// deltas. With `optimize_vertices` the mesh vertices get learnable offsets.
    pub fn from_mesh(
        mesh: GuideMesh<T>,
        n_prim: usize,
        m: usize,
        rgb: Vec3<T>,
        sigma: T,
        window: WindowParams,
        optimize_vertices: bool,
    ) -> Result<Self> {
        let init = init_from_mesh(&mesh, n_prim)?;
        let n = init.anchors.len();
        let params = SceneParams {
            payload: PrimitiveSlab::constant(n, m, rgb, sigma),
            deltas: vec![TransformDelta::default(); n],
            vertex_offsets: if optimize_vertices {
                vec![Vec3::zero(); mesh.vertices().len()]
            } else {
                Vec::new()
            },
        };
        Self::new(
            Attachment::Mesh {
                mesh,
                anchors: init.anchors,
                spacing: init.spacing,
            },
            params,
            window,
        )
    }

    pub fn n_prim(&self) -> usize {
        self.attachment.len()
    }

    /// Guide mesh with the learned offsets applied.
    pub fn fitted_mesh(&self) -> Option<GuideMesh<T>> {
        let mesh = self.attachment.mesh()?;
        if self.params.vertex_offsets.is_empty() {
            return Some(mesh.clone());
        }
        let verts = mesh
            .vertices()
            .iter()
            .zip(&self.params.vertex_offsets)
            .map(|(v, o)| *v + *o)
            .collect();
        mesh.with_vertices(verts).ok()
    }

    pub fn bases(&self) -> Result<Vec<BaseTransform<T>>> {
        match &self.attachment {
            Attachment::Fixed(b) => Ok(b.clone()),
            Attachment::Mesh { anchors, spacing, .. } => {
                let mesh = self.fitted_mesh().expect("mesh attachment");
                anchors
                    .iter()
                    .map(|a| base_from_anchor(&mesh, a, *spacing))
                    .collect()
            }
        }
    }

    pub fn transforms(&self) -> Result<Vec<PrimitiveTransform<T>>> {
        Ok(self
            .bases()?
            .into_iter()
            .zip(&self.params.deltas)
            .map(|(base, delta)| PrimitiveTransform { base, delta: *delta })
            .collect())
    }

    pub fn geometry(&self) -> Result<FrameGeometry<T>> {
        FrameGeometry::build(&self.transforms()?)
    }

    pub fn view<'a>(&'a self, geometry: &'a FrameGeometry<T>) -> Result<SceneView<'a, T>> {
        SceneView::new(&self.params.payload, geometry, self.window)
    }

    pub fn cast<U: Real>(&self) -> Scene<U> {
        Scene {
            attachment: self.attachment.cast(),
            params: self.params.cast(),
            window: self.window,
        }
    }
}
