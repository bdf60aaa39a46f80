use std::collections::HashMap;

use crate::advection::{patch_index, StencilPatch};
use crate::grid::{BlockSpec, BoundaryRule, Field3};
use crate::scalar::Scalar;

/// Rolling window of three x planes around the slice being computed.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceBuffer<P> {
    pub prev: Option<P>,
    pub current: Option<P>,
    /// `None` while the next plane is pending load.
    pub next: Option<P>,
}

impl<P> SliceBuffer<P> {
    pub fn new(prev: P, current: P, next: P) -> Self {
        SliceBuffer {
            prev: Some(prev),
            current: Some(current),
            next: Some(next),
        }
    }

    pub fn is_pending(&self) -> bool {
        self.next.is_none()
    }
}

/// Moves every plane down one x step; the old previous plane is dropped and
/// the next plane is left pending.
pub fn shift_slices<P>(buf: SliceBuffer<P>) -> SliceBuffer<P> {
    SliceBuffer {
        prev: buf.current,
        current: buf.next,
        next: None,
    }
}

/// One z-by-y plane of a block plus one halo column on each y side.
///
/// Halo columns come straight from the input field; the interior is filled
/// value by value from the read stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    x: usize,
    slice_y: usize,
    z: usize,
    data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn with_halo(field: &Field3<T>, x: usize, block: &BlockSpec, rule: BoundaryRule) -> Self {
        let d = field.dims();
        let z = d.z;
        let mut data = vec![T::zero(); (block.slice_y + 2) * z];
        let lo = rule.lateral(block.y_start, -1, d.y);
        let hi = rule.lateral(block.y_start + block.slice_y - 1, 1, d.y);
        for k in 0..z {
            data[k] = field.get(x, lo, k);
            data[(block.slice_y + 1) * z + k] = field.get(x, hi, k);
        }
        Plane {
            x,
            slice_y: block.slice_y,
            z,
            data,
        }
    }

    pub fn x(&self) -> usize {
        self.x
    }

    /// Stores interior value `pos` (z fastest, then block-local y).
    #[inline]
    pub fn set_core(&mut self, pos: usize, value: T) {
        self.data[self.z + pos] = value;
    }

    /// Value at block-local column `jj` (-1..=slice_y) and level `k`.
    #[inline]
    pub fn at(&self, jj: isize, k: usize) -> T {
        self.data[(jj + 1) as usize * self.z + k]
    }

    pub fn core_len(&self) -> usize {
        self.slice_y * self.z
    }
}

/// The three field planes at one x position.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSet<T> {
    pub fields: [Plane<T>; 3],
}

impl<T: Scalar> PlaneSet<T> {
    pub fn with_halo(
        inputs: [&Field3<T>; 3],
        x: usize,
        block: &BlockSpec,
        rule: BoundaryRule,
    ) -> Self {
        PlaneSet {
            fields: inputs.map(|f| Plane::with_halo(f, x, block, rule)),
        }
    }

    pub fn x(&self) -> usize {
        self.fields[0].x()
    }
}

/// Builds the neighborhood of block-local cell `(jj, k)` from a full buffer.
pub fn patch_from_buffer<T: Scalar>(
    buf: &SliceBuffer<PlaneSet<T>>,
    jj: usize,
    k: usize,
    rule: BoundaryRule,
    nz: usize,
) -> StencilPatch<T> {
    let planes = [
        buf.prev.as_ref().expect("previous plane loaded"),
        buf.current.as_ref().expect("current plane loaded"),
        buf.next.as_ref().expect("next plane loaded"),
    ];
    let mut patch = StencilPatch::zeros();
    for (px, plane) in planes.iter().enumerate() {
        let dx = px as isize - 1;
        for dy in -1..=1isize {
            for dz in -1..=1isize {
                let kk = rule.vertical(k, dz, nz);
                let at = patch_index(dx, dy, dz);
                let col = jj as isize + dy;
                patch.u[at] = plane.fields[0].at(col, kk);
                patch.v[at] = plane.fields[1].at(col, kk);
                patch.w[at] = plane.fields[2].at(col, kk);
            }
        }
    }
    patch
}

/// Planes loaded for the current block, kept until their last use.
///
/// Wraparound planes (needed again at the end of the block) are cloned out;
/// every other plane is moved into the slice buffer.
#[derive(Debug)]
pub(crate) struct PlaneBank<T> {
    nx: usize,
    rule: BoundaryRule,
    uses: HashMap<usize, usize>,
    planes: HashMap<usize, PlaneSet<T>>,
}

impl<T: Scalar> PlaneBank<T> {
    pub(crate) fn new(nx: usize, rule: BoundaryRule) -> Self {
        let mut uses = HashMap::new();
        let mut need = |x: usize| *uses.entry(x).or_insert(0) += 1;
        need(rule.lateral(0, -1, nx));
        need(0);
        for i in 0..nx {
            need(rule.lateral(i, 1, nx));
        }
        PlaneBank {
            nx,
            rule,
            uses,
            planes: HashMap::new(),
        }
    }

    pub(crate) fn insert(&mut self, plane: PlaneSet<T>) {
        self.planes.insert(plane.x(), plane);
    }

    fn take(&mut self, x: usize) -> PlaneSet<T> {
        let left = self.uses.get_mut(&x).expect("plane scheduled");
        *left -= 1;
        if *left == 0 {
            self.planes.remove(&x).expect("plane loaded before use")
        } else {
            self.planes
                .get(&x)
                .expect("plane loaded before use")
                .clone()
        }
    }

    /// Buffer for computing slice `x`, built from the buffer of slice `x - 1`.
    pub(crate) fn advance(
        &mut self,
        buf: Option<SliceBuffer<PlaneSet<T>>>,
        x: usize,
    ) -> SliceBuffer<PlaneSet<T>> {
        let rule = self.rule;
        match buf {
            Some(b) if x > 0 => {
                let mut b = shift_slices(b);
                b.next = Some(self.take(rule.lateral(x, 1, self.nx)));
                b
            }
            _ => {
                let prev = self.take(rule.lateral(0, -1, self.nx));
                let cur = self.take(0);
                let next = self.take(rule.lateral(0, 1, self.nx));
                SliceBuffer::new(prev, cur, next)
            }
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }
}
