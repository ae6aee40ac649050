use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LayerSpec, Scalar};
use crate::error::{Error, Result};

/// Where one parameterized layer lives inside the flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub layer: usize,
    pub offset: usize,
    pub len: usize,
}

/// All trainable values of a network as one flat vector plus an offset table
/// covering the layers that own parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T = f32> {
    values: Vec<T>,
    slots: Vec<ParamSlot>,
}

/// JSON descriptor written next to a raw parameter stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub dtype: String,
    pub byte_order: String,
    pub total: usize,
    pub layers: Vec<LayerEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub layer: usize,
    pub spec: LayerSpec,
    pub offset: usize,
    pub len: usize,
}

impl<T: Scalar> ParamSet<T> {
    pub(crate) fn zeros_for(layers: &[LayerSpec]) -> Self {
        let mut slots = Vec::new();
        let mut offset = 0;
        for (layer, spec) in layers.iter().enumerate() {
            let len = spec.param_count();
            if len > 0 {
                slots.push(ParamSlot { layer, offset, len });
                offset += len;
            }
        }
        ParamSet {
            values: vec![T::zero(); offset],
            slots,
        }
    }

    /// Wraps raw values; `values.len()` must equal the slot total.
    pub fn from_parts(values: Vec<T>, slots: Vec<ParamSlot>) -> Result<Self> {
        let mut expect = 0;
        for s in &slots {
            if s.offset != expect || s.len == 0 {
                return Err(Error::Layout(format!(
                    "slot {s:?} breaks the contiguous layout"
                )));
            }
            expect += s.len;
        }
        if expect != values.len() {
            return Err(Error::Layout(format!(
                "layout covers {expect} values, got {}",
                values.len()
            )));
        }
        Ok(ParamSet { values, slots })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn same_layout(&self, other: &ParamSet<T>) -> bool {
        self.slots == other.slots && self.values.len() == other.values.len()
    }

    pub(crate) fn slot_of(&self, layer: usize) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.layer == layer)
    }

    pub(crate) fn layer_values(&self, layer: usize) -> &[T] {
        match self.slot_of(layer) {
            Some(s) => &self.values[s.offset..s.offset + s.len],
            None => &[],
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            values: vec![T::zero(); self.values.len()],
            slots: self.slots.clone(),
        }
    }

    /// Same layout, values converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            values: self
                .values
                .iter()
                .map(|&v| U::from_f64(v.as_f64()))
                .collect(),
            slots: self.slots.clone(),
        }
    }

    pub fn layout(&self, layers: &[LayerSpec]) -> ParamLayout {
        ParamLayout {
            dtype: "f32".into(),
            byte_order: "little".into(),
            total: self.values.len(),
            layers: self
                .slots
                .iter()
                .map(|s| LayerEntry {
                    layer: s.layer,
                    spec: layers[s.layer],
                    offset: s.offset,
                    len: s.len,
                })
                .collect(),
        }
    }
}

impl ParamSet<f32> {
    /// Raw little-endian `f32` stream.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8], layout: &ParamLayout) -> Result<Self> {
        if bytes.len() != layout.total * 4 {
            return Err(Error::Layout(format!(
                "stream has {} bytes, layout needs {}",
                bytes.len(),
                layout.total * 4
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let slots = layout
            .layers
            .iter()
            .map(|e| ParamSlot {
                layer: e.layer,
                offset: e.offset,
                len: e.len,
            })
            .collect();
        ParamSet::from_parts(values, slots)
    }

    /// SHA-256 over the little-endian stream.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_le_bytes()))
    }
}
