use crate::scalar::Scalar;

/// Values carried by one 256-bit memory beat.
pub const LANES: usize = 4;

/// Four doubles packed into one 256-bit word, lane 0 at the lowest offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WideWord<T> {
    pub lanes: [T; LANES],
}

pub fn pack_wide<T: Scalar>(values: [T; LANES]) -> WideWord<T> {
    WideWord { lanes: values }
}

pub fn unpack_wide<T: Scalar>(word: WideWord<T>) -> [T; LANES] {
    word.lanes
}

impl<T: Scalar> WideWord<T> {
    /// Packs `values` (at most four) padding missing lanes with zero.
    pub fn from_partial(values: &[T]) -> Self {
        assert!(
            values.len() <= LANES,
            "a wide word holds at most {LANES} values"
        );
        let mut lanes = [T::zero(); LANES];
        lanes[..values.len()].copy_from_slice(values);
        WideWord { lanes }
    }
}

impl WideWord<f64> {
    /// The 32-byte little-endian image of the word.
    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (n, v) in self.lanes.iter().enumerate() {
            out[n * 8..n * 8 + 8].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        let mut lanes = [0.0; LANES];
        for (n, lane) in lanes.iter_mut().enumerate() {
            *lane = f64::from_le_bytes(bytes[n * 8..n * 8 + 8].try_into().unwrap());
        }
        WideWord { lanes }
    }
}
