use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::primitive::{PrimitiveSlab, TransformDelta, CHANNELS, SIGMA};
use crate::real::Real;

/// Parameter families, used for per-group learning rates and gradient checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    PayloadRgb,
    PayloadSigma,
    DeltaTranslation,
    DeltaRotation,
    DeltaScale,
    VertexOffset,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::PayloadRgb,
        ParamGroup::PayloadSigma,
        ParamGroup::DeltaTranslation,
        ParamGroup::DeltaRotation,
        ParamGroup::DeltaScale,
        ParamGroup::VertexOffset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::PayloadRgb => "payload_rgb",
            ParamGroup::PayloadSigma => "payload_sigma",
            ParamGroup::DeltaTranslation => "delta_t",
            ParamGroup::DeltaRotation => "delta_r",
            ParamGroup::DeltaScale => "delta_s",
            ParamGroup::VertexOffset => "vertex_offset",
        }
    }
}

/// Position of one scalar in the flattened parameter vector: payload values
/// first, then nine numbers per delta (t, R, s), then vertex offsets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Payload(usize),
    Delta(usize, usize),
    Vertex(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layout {
    payload: usize,
    deltas: usize,
    vertices: usize,
    /// Values per payload channel block.
    block: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.payload + 9 * self.deltas + 3 * self.vertices
    }

    fn slot(&self, i: usize) -> Slot {
        if i < self.payload {
            Slot::Payload(i)
        } else if i < self.payload + 9 * self.deltas {
            let j = i - self.payload;
            Slot::Delta(j / 9, j % 9)
        } else {
            let j = i - self.payload - 9 * self.deltas;
            Slot::Vertex(j / 3, j % 3)
        }
    }

    fn group(&self, i: usize) -> ParamGroup {
        match self.slot(i) {
            Slot::Payload(p) => {
                if (p / self.block) % CHANNELS == SIGMA {
                    ParamGroup::PayloadSigma
                } else {
                    ParamGroup::PayloadRgb
                }
            }
            Slot::Delta(_, f) => match f / 3 {
                0 => ParamGroup::DeltaTranslation,
                1 => ParamGroup::DeltaRotation,
                _ => ParamGroup::DeltaScale,
            },
            Slot::Vertex(..) => ParamGroup::VertexOffset,
        }
    }
}

fn delta_field<T: Real>(d: &TransformDelta<T>, f: usize) -> T {
    match f / 3 {
        0 => d.translation[f % 3],
        1 => d.rotation[f % 3],
        _ => d.scale[f % 3],
    }
}

fn delta_field_mut<T: Real>(d: &mut TransformDelta<T>, f: usize) -> &mut T {
    match f / 3 {
        0 => &mut d.translation[f % 3],
        1 => &mut d.rotation[f % 3],
        _ => &mut d.scale[f % 3],
    }
}

/// Everything the optimizer updates.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneParams<T: Real> {
    pub payload: PrimitiveSlab<T>,
    pub deltas: Vec<TransformDelta<T>>,
    /// Offsets added to the guide-mesh vertices; empty when the mesh is fixed.
    pub vertex_offsets: Vec<Vec3<T>>,
}

impl<T: Real> SceneParams<T> {
    fn layout(&self) -> Layout {
        Layout {
            payload: self.payload.data().len(),
            deltas: self.deltas.len(),
            vertices: self.vertex_offsets.len(),
            block: self.payload.voxels_per_channel(),
        }
    }

    pub fn len(&self) -> usize {
        self.layout().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, i: usize) -> ParamGroup {
        self.layout().group(i)
    }

    pub fn get(&self, i: usize) -> T {
        match self.layout().slot(i) {
            Slot::Payload(p) => self.payload.data()[p],
            Slot::Delta(k, f) => delta_field(&self.deltas[k], f),
            Slot::Vertex(v, a) => self.vertex_offsets[v][a],
        }
    }

    pub fn set(&mut self, i: usize, value: T) {
        match self.layout().slot(i) {
            Slot::Payload(p) => self.payload.data_mut()[p] = value,
            Slot::Delta(k, f) => *delta_field_mut(&mut self.deltas[k], f) = value,
            Slot::Vertex(v, a) => self.vertex_offsets[v][a] = value,
        }
    }

    /// Calls `f(index, group, value)` for every scalar in flat order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(usize, ParamGroup, &mut T)) {
        let layout = self.layout();
        let mut i = 0;
        for v in self.payload.data_mut() {
            f(i, layout.group(i), v);
            i += 1;
        }
        for d in &mut self.deltas {
            for fld in 0..9 {
                f(i, layout.group(i), delta_field_mut(d, fld));
                i += 1;
            }
        }
        for v in &mut self.vertex_offsets {
            for a in 0..3 {
                f(i, ParamGroup::VertexOffset, &mut v[a]);
                i += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.payload.is_finite()
            && self.deltas.iter().all(TransformDelta::is_finite)
            && self.vertex_offsets.iter().all(|v| v.is_finite())
    }

    pub fn zero_grad(&self) -> GradBuffer<T> {
        GradBuffer {
            payload: vec![T::zero(); self.payload.data().len()],
            deltas: vec![TransformDelta::default(); self.deltas.len()],
            vertex_offsets: vec![Vec3::zero(); self.vertex_offsets.len()],
            block: self.payload.voxels_per_channel(),
            rays: 0,
        }
    }

    pub fn cast<U: Real>(&self) -> SceneParams<U> {
        SceneParams {
            payload: self.payload.cast(),
            deltas: self
                .deltas
                .iter()
                .map(|d| TransformDelta {
                    translation: d.translation.cast(),
                    rotation: d.rotation.cast(),
                    scale: d.scale.cast(),
                })
                .collect(),
            vertex_offsets: self.vertex_offsets.iter().map(|v| v.cast()).collect(),
        }
    }
}

/// Gradient mirror of [`SceneParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer<T: Real> {
    pub payload: Vec<T>,
    pub deltas: Vec<TransformDelta<T>>,
    pub vertex_offsets: Vec<Vec3<T>>,
    block: usize,
    /// Rays accumulated into this buffer.
    pub rays: usize,
}

impl<T: Real> GradBuffer<T> {
    fn layout(&self) -> Layout {
        Layout {
            payload: self.payload.len(),
            deltas: self.deltas.len(),
            vertices: self.vertex_offsets.len(),
            block: self.block,
        }
    }

    pub fn len(&self) -> usize {
        self.layout().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> T {
        match self.layout().slot(i) {
            Slot::Payload(p) => self.payload[p],
            Slot::Delta(k, f) => delta_field(&self.deltas[k], f),
            Slot::Vertex(v, a) => self.vertex_offsets[v][a],
        }
    }

    pub fn group(&self, i: usize) -> ParamGroup {
        self.layout().group(i)
    }

    pub fn zero(&mut self) {
        self.payload.iter_mut().for_each(|v| *v = T::zero());
        self.deltas.iter_mut().for_each(|d| *d = TransformDelta::default());
        self.vertex_offsets.iter_mut().for_each(|v| *v = Vec3::zero());
        self.rays = 0;
    }

    pub fn check_shape(&self, params: &SceneParams<T>) -> Result<()> {
        if self.layout() != params.layout() {
            return Err(Error::ShapeMismatch("gradient buffer does not match parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        (0..self.len()).all(|i| self.get(i).is_finite())
    }

    /// Element-wise `self += other`.
    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.payload.iter_mut().zip(&other.payload) {
            *a += *b;
        }
        for (a, b) in self.deltas.iter_mut().zip(&other.deltas) {
            a.translation += b.translation;
            a.rotation += b.rotation;
            a.scale += b.scale;
        }
        for (a, b) in self.vertex_offsets.iter_mut().zip(&other.vertex_offsets) {
            *a += *b;
        }
        self.rays += other.rays;
    }

    pub fn max_abs(&self) -> T {
        (0..self.len()).fold(T::zero(), |m, i| m.max(self.get(i).abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        (0..self.len()).fold(T::zero(), |m, i| m.max((self.get(i) - other.get(i)).abs()))
    }
}
