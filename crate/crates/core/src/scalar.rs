//! Floating-point scalar abstraction shared by the forest and the metrics.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar usable for forest training and prediction: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Width in bytes of the little-endian encoding.
    const WIDTH: u8;

    /// Absolute slack used when comparing an accumulated cumulative weight
    /// against a requested probability level. Weight sums pick up rounding
    /// noise of a few ulps; the slack keeps a quantile from jumping to the
    /// next support point when the exact cumulative weight equals `q`.
    fn cdf_slack() -> Self;

    fn write_le(self, out: &mut Vec<u8>);

    /// Reads a value from exactly `WIDTH` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f64 {
    const WIDTH: u8 = 8;

    fn cdf_slack() -> Self {
        1e-10
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(buf)
    }
}

impl Scalar for f32 {
    const WIDTH: u8 = 4;

    fn cdf_slack() -> Self {
        1e-5
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<T: Scalar>(v: T) -> T {
        let mut out = Vec::new();
        v.write_le(&mut out);
        assert_eq!(out.len(), T::WIDTH as usize);
        T::read_le(&out)
    }

    #[test]
    fn le_encoding_roundtrips() {
        assert_eq!(roundtrip(-0.1f64).to_bits(), (-0.1f64).to_bits());
        assert_eq!(roundtrip(3.25f32).to_bits(), 3.25f32.to_bits());
    }
}
