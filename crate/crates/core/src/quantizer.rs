//! Mid-tread uniform quantizer with `2K + 1` output levels `{0, ±1, …, ±K}`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformQuantizer {
    levels: u64,
}

impl UniformQuantizer {
    pub fn new(levels: u64) -> Result<Self> {
        if levels == 0 {
            return Err(Error::OutOfRange {
                name: "K",
                value: 0.0,
                expected: "at least 1",
            });
        }
        Ok(Self { levels })
    }

    /// Number of positive levels `K`.
    pub fn levels(&self) -> u64 {
        self.levels
    }

    /// Saturation threshold `K + 1/2`.
    pub fn range(&self) -> f64 {
        self.levels as f64 + 0.5
    }

    /// Returns the symbol and whether `|u| ≥ K + 1/2`, where the error bound
    /// of 1/2 no longer holds.
    ///
    /// Positive half-open cells `[(2k-1)/2, (2k+1)/2)` map to `k`; negative
    /// inputs use the odd extension, so `-1/2` maps to `-1`.
    pub fn quantize(&self, u: f64) -> Result<(i64, bool)> {
        if !u.is_finite() {
            return Err(Error::NonFinite("quantize"));
        }
        let mag = u.abs();
        let saturated = mag >= self.range();
        let k = if saturated {
            self.levels as f64
        } else {
            // round() is half-away-from-zero, exactly the cell rule above
            mag.round().min(self.levels as f64)
        };
        let k = k as i64;
        Ok((if u < 0.0 { -k } else { k }, saturated))
    }

    pub fn quantize_vector(&self, u: &[f64]) -> Result<(Vec<i64>, bool)> {
        let mut any = false;
        let symbols = u
            .iter()
            .map(|&x| {
                let (s, sat) = self.quantize(x)?;
                any |= sat;
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((symbols, any))
    }

    /// Fixed-width wire cost, `ceil(log2(2K + 1))` bits per symbol.
    pub fn bits_per_symbol(&self) -> u32 {
        let alphabet = 2 * self.levels + 1;
        64 - (alphabet - 1).leading_zeros()
    }

    /// Entropy bound `log2(2K + 1)` bits per symbol.
    pub fn entropy_bits(&self) -> f64 {
        ((2 * self.levels + 1) as f64).log2()
    }
}
