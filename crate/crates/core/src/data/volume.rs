use sean_tensor::Tensor;

use crate::error::{Error, Result};

/// Stack of axial slices in HU-like units, `[depth, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CtVolume {
    pub id: String,
    voxels: Tensor<f32>,
    /// (dz, dy, dx) in mm.
    pub spacing: [f64; 3],
}

impl CtVolume {
    pub fn new(id: impl Into<String>, voxels: Tensor<f32>, spacing: [f64; 3]) -> Result<Self> {
        let id = id.into();
        if voxels.ndim() != 3 || voxels.shape().iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("volume {id}: expected non-empty [D, H, W], got {:?}", voxels.shape())));
        }
        if !voxels.all_finite() {
            return Err(Error::Degenerate(format!("volume {id} contains non-finite voxels")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("volume {id}: spacing must be positive, got {spacing:?}")));
        }
        Ok(Self { id, voxels, spacing })
    }

    pub fn voxels(&self) -> &Tensor<f32> {
        &self.voxels
    }

    pub fn dims(&self) -> [usize; 3] {
        let s = self.voxels.shape();
        [s[0], s[1], s[2]]
    }

    pub fn depth(&self) -> usize {
        self.voxels.dim(0)
    }

    pub fn height(&self) -> usize {
        self.voxels.dim(1)
    }

    pub fn width(&self) -> usize {
        self.voxels.dim(2)
    }

    /// Axial slice `i` as `[H, W]`.
    pub fn slice(&self, i: usize) -> Tensor<f32> {
        let [_, h, w] = self.dims();
        self.voxels.narrow(0, i, 1).reshape(vec![h, w])
    }

    pub fn slices(&self) -> impl Iterator<Item = Tensor<f32>> + '_ {
        (0..self.depth()).map(|i| self.slice(i))
    }

    /// Same id and spacing, voxels replaced slice by slice.
    pub fn map_slices(&self, mut f: impl FnMut(&Tensor<f32>) -> Tensor<f32>) -> Result<Self> {
        let [d, h, w] = self.dims();
        let mut data = Vec::with_capacity(d * h * w);
        for s in self.slices() {
            let out = f(&s);
            assert_eq!(out.shape(), &[h, w], "slice map must preserve shape");
            data.extend_from_slice(out.data());
        }
        Self::new(self.id.clone(), Tensor::from_vec(vec![d, h, w], data), self.spacing)
    }
}

/// Binary voxel mask, `[depth, height, width]`, values in {0, 1}.
/// A 2D mask is a depth-1 mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: [usize; 3],
    data: Vec<u8>,
}

impl Mask {
    pub fn new(dims: [usize; 3], data: Vec<u8>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("mask dims {dims:?} do not match {} values", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Format { path: "<mask>".into(), msg: "mask values must be 0 or 1".into() });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![0; dims.iter().product()] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    data.push(u8::from(f(z, y, x)));
                }
            }
        }
        Self { dims, data }
    }

    /// 2D mask from row-major booleans.
    pub fn from_2d(h: usize, w: usize, values: &[bool]) -> Self {
        assert_eq!(values.len(), h * w, "2D mask size mismatch");
        Self { dims: [1, h, w], data: values.iter().map(|&b| u8::from(b)).collect() }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x] != 0
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, on: bool) {
        let i = (z * self.dims[1] + y) * self.dims[2] + x;
        self.data[i] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn slice(&self, z: usize) -> Mask {
        let plane = self.dims[1] * self.dims[2];
        Mask { dims: [1, self.dims[1], self.dims[2]], data: self.data[z * plane..(z + 1) * plane].to_vec() }
    }

    /// Stacks equally sized 2D masks along depth.
    pub fn stack(slices: &[Mask]) -> Result<Mask> {
        let first = slices.first().ok_or_else(|| Error::Shape("cannot stack zero masks".into()))?;
        let [_, h, w] = first.dims;
        let mut data = Vec::with_capacity(slices.len() * h * w);
        for s in slices {
            if s.dims != [1, h, w] {
                return Err(Error::Shape(format!("stacking mask {:?} onto [1, {h}, {w}]", s.dims)));
            }
            data.extend_from_slice(&s.data);
        }
        Ok(Mask { dims: [slices.len(), h, w], data })
    }

    /// Mirrors every slice left-right.
    pub fn flip_horizontal(&self) -> Mask {
        let [_, _, w] = self.dims;
        let mut out = self.clone();
        for row in out.data.chunks_mut(w) {
            row.reverse();
        }
        out
    }

    /// Values as `{0.0, 1.0}` with shape `[D, H, W]`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(self.dims.to_vec(), self.data.iter().map(|&v| f32::from(v)).collect())
    }

    /// `values >= threshold`, any rank whose element count matches `dims`.
    pub fn threshold(values: &Tensor<f32>, dims: [usize; 3], threshold: f32) -> Result<Mask> {
        if values.numel() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("cannot threshold {:?} into mask {dims:?}", values.shape())));
        }
        Ok(Mask { dims, data: values.data().iter().map(|&v| u8::from(v >= threshold)).collect() })
    }
}
