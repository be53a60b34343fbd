//! Zooming encoder/decoder pairs.
//!
//! A sender quantizes the innovation `(value - internal) / h(k-1)` and
//! broadcasts the integer symbols; sender and receivers then run the same
//! additive recursion `state += h(k-1) * symbols`, so every decoder tracks
//! the encoder's internal state exactly.

use std::io::Write;

use serde::Serialize;

use crate::error::{check_positive, Error, Result};
use crate::quantizer::UniformQuantizer;

/// `h(k) = C ξᵏ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSchedule {
    c: f64,
    xi: f64,
}

impl ScalingSchedule {
    pub fn new(c: f64, xi: f64) -> Result<Self> {
        check_positive("C", c)?;
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::OutOfRange {
                name: "xi",
                value: xi,
                expected: "strictly between 0 and 1",
            });
        }
        Ok(Self { c, xi })
    }

    /// Non-decaying scale, used only by the naive-quantization baseline.
    pub fn constant(c: f64) -> Result<Self> {
        check_positive("C", c)?;
        Ok(Self { c, xi: 1.0 })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// Recomputed from `(C, ξ, k)` each call so encoder and decoder never
    /// accumulate different rounding.
    pub fn h(&self, k: usize) -> f64 {
        self.c * self.xi.powf(k as f64)
    }

    /// Requires `ρ̂ < ξ < 1`.
    pub fn check_rate(&self, rho_hat: f64) -> Result<()> {
        if self.xi > rho_hat && self.xi < 1.0 {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                name: "xi",
                value: self.xi,
                expected: "in (rho_hat, 1)",
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    internal: Vec<f64>,
}

impl EncoderState {
    pub fn new(dim: usize) -> Self {
        Self {
            internal: vec![0.0; dim],
        }
    }

    pub fn internal(&self) -> &[f64] {
        &self.internal
    }

    /// Quantizes `(value - internal) / h_prev` and folds the symbols back
    /// into the internal state.
    pub fn encode(
        &mut self,
        value: &[f64],
        h_prev: f64,
        quantizer: UniformQuantizer,
    ) -> Result<(Vec<i64>, bool)> {
        if value.len() != self.internal.len() {
            return Err(Error::Dimension(format!(
                "encoder holds {} components, got {}",
                self.internal.len(),
                value.len()
            )));
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encode"));
        }
        check_positive("h", h_prev)?;
        let scaled: Vec<f64> = value
            .iter()
            .zip(&self.internal)
            .map(|(v, p)| (v - p) / h_prev)
            .collect();
        let (symbols, saturated) = quantizer.quantize_vector(&scaled)?;
        accumulate(&mut self.internal, &symbols, h_prev);
        Ok((symbols, saturated))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    estimate: Vec<f64>,
}

impl DecoderState {
    pub fn new(dim: usize) -> Self {
        Self {
            estimate: vec![0.0; dim],
        }
    }

    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    pub fn decode(&mut self, symbols: &[i64], h_prev: f64) -> Result<&[f64]> {
        if symbols.len() != self.estimate.len() {
            return Err(Error::Dimension(format!(
                "decoder holds {} components, got {}",
                self.estimate.len(),
                symbols.len()
            )));
        }
        accumulate(&mut self.estimate, symbols, h_prev);
        Ok(&self.estimate)
    }
}

// shared by both ends so the floating-point operations are identical
fn accumulate(state: &mut [f64], symbols: &[i64], h: f64) {
    for (s, &q) in state.iter_mut().zip(symbols) {
        *s += h * q as f64;
    }
}

/// Scaled quantizer error `(internal - value) / h_prev` after an encode.
pub fn quantization_error(value: &[f64], enc_after: &EncoderState, h_prev: f64) -> Vec<f64> {
    enc_after
        .internal
        .iter()
        .zip(value)
        .map(|(p, v)| (p - v) / h_prev)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    X,
    Y,
}

impl ChannelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::X => "x",
            ChannelKind::Y => "y",
        }
    }
}

/// One sender's broadcast link for one variable family, together with the
/// decoders held by each of its receivers.
#[derive(Debug, Clone)]
pub struct CodecChannel {
    sender: usize,
    kind: ChannelKind,
    encoder: EncoderState,
    receivers: Vec<(usize, DecoderState)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub symbols: Vec<i64>,
    pub saturated: bool,
}

impl CodecChannel {
    /// `receivers` are the out-neighbors of `sender`, excluding itself.
    pub fn new(sender: usize, kind: ChannelKind, dim: usize, receivers: &[usize]) -> Self {
        Self {
            sender,
            kind,
            encoder: EncoderState::new(dim),
            receivers: receivers
                .iter()
                .filter(|&&r| r != sender)
                .map(|&r| (r, DecoderState::new(dim)))
                .collect(),
        }
    }

    pub fn sender(&self) -> usize {
        self.sender
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn encoder(&self) -> &EncoderState {
        &self.encoder
    }

    /// Encode at the sender and decode at every receiver.
    pub fn transmit(
        &mut self,
        value: &[f64],
        h_prev: f64,
        quantizer: UniformQuantizer,
    ) -> Result<Transmission> {
        let (symbols, saturated) = self.encoder.encode(value, h_prev, quantizer)?;
        for (_, dec) in &mut self.receivers {
            dec.decode(&symbols, h_prev)?;
        }
        Ok(Transmission { symbols, saturated })
    }

    /// The sender's value as reconstructed at `receiver`. The sender reads
    /// its own encoder state.
    pub fn estimate_at(&self, receiver: usize) -> Option<&[f64]> {
        if receiver == self.sender {
            return Some(self.encoder.internal());
        }
        self.receivers
            .iter()
            .find(|(r, _)| *r == receiver)
            .map(|(_, d)| d.estimate())
    }

    pub fn in_sync(&self) -> bool {
        self.receivers
            .iter()
            .all(|(_, d)| d.estimate() == self.encoder.internal())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolRecord {
    pub round: usize,
    pub sender: usize,
    pub channel: ChannelKind,
    pub component: usize,
    pub symbol: i64,
    pub h: f64,
    pub saturated: bool,
}

/// CSV with columns `round, sender, channel, component, symbol, h, saturated`.
/// Senders are written 1-based.
pub fn write_symbol_trace<W: Write>(out: W, records: &[SymbolRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "sender", "channel", "component", "symbol", "h", "saturated"])?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            (r.sender + 1).to_string(),
            r.channel.as_str().to_string(),
            r.component.to_string(),
            r.symbol.to_string(),
            format!("{:e}", r.h),
            r.saturated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
