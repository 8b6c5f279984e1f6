//! Labeled receiver frames and their on-disk format.
//!
//! A dataset file is one UTF-8 JSON header line terminated by `\n`, then the
//! samples of every frame as little-endian `f64` pairs `(re, im)`, then the
//! reference bits of every frame packed MSB-first into bytes.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{receiver_frontend, transmit_link, LaunchConfig, LinkParams};
use crate::error::{Error, Result};
use crate::signal::qam::BITS_PER_SYMBOL;
use crate::signal::rng::SeedStream;
use crate::signal::{qam64_map, PulseShape, SymbolFrame};

pub const FORMAT_TAG: &str = "nlc-dataset-v1";

/// Transmitter/receiver settings that are not fiber parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub symbol_rate: f64,
    pub roll_off: f64,
    /// Oversampling of the channel simulation.
    pub channel_sps: usize,
    /// Oversampling at the equalizer input.
    pub rx_sps: usize,
    /// Samples per frame at the equalizer input.
    pub frame_len: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            symbol_rate: 32e9,
            roll_off: 0.1,
            channel_sps: 8,
            rx_sps: 2,
            frame_len: 2048,
        }
    }
}

impl SystemConfig {
    pub fn symbols_per_frame(&self) -> usize {
        self.frame_len / self.rx_sps
    }

    pub fn rx_rate(&self) -> f64 {
        self.symbol_rate * self.rx_sps as f64
    }

    /// Occupied one-sided bandwidth `(1+β)/2 · R_s`.
    pub fn band_hz(&self) -> f64 {
        0.5 * (1.0 + self.roll_off) * self.symbol_rate
    }

    /// Periodic RRC over the whole frame at the channel oversampling.
    pub fn pulse(&self) -> Result<PulseShape> {
        PulseShape::new(self.roll_off, self.symbols_per_frame(), self.channel_sps)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: format!("system.{path}"),
                message,
            })
        };
        if !(self.symbol_rate > 0.0) {
            return bad("symbol_rate", "must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.roll_off) {
            return bad("roll_off", format!("must lie in [0, 1], got {}", self.roll_off));
        }
        if self.rx_sps < 1 || self.channel_sps < 2 || !self.channel_sps.is_multiple_of(self.rx_sps) {
            return bad(
                "channel_sps",
                format!(
                    "channel oversampling {} must be >= 2 and a multiple of rx_sps {}",
                    self.channel_sps, self.rx_sps
                ),
            );
        }
        if self.frame_len == 0 || !self.frame_len.is_multiple_of(self.rx_sps) {
            return bad("frame_len", "must be a positive multiple of rx_sps".into());
        }
        Ok(())
    }
}

/// One received frame with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Unit-power samples at the equalizer rate.
    pub samples: Vec<Complex64>,
    /// Field scale divided out by the receiver (√W).
    pub norm_factor: f64,
    /// Launch power (W).
    pub launch_w: f64,
    pub bits: Vec<u8>,
    pub symbols: Vec<Complex64>,
}

impl FrameRecord {
    /// Factor taking equalized unit-power samples back to constellation units.
    pub fn symbol_scale(&self) -> f64 {
        self.norm_factor / self.launch_w.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: String,
    pub config_digest: String,
    pub seed: u64,
    pub launch_power_dbm: f64,
    pub n_frames: usize,
    pub frame_len: usize,
    pub sample_rate: f64,
    pub symbol_rate: f64,
    pub bits_per_frame: usize,
    pub norm_factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub frames: Vec<FrameRecord>,
}

/// Hex SHA-256 of a byte string.
pub fn digest_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Simulates `n_frames` frames through the link. Frame `i` draws its bits and
/// noise from `SeedStream::new(seed).child(i)`, so any subset regenerates
/// bit-exactly.
pub fn simulate_frames(
    link: &LinkParams,
    system: &SystemConfig,
    launch: &LaunchConfig,
    seed: u64,
    n_frames: usize,
) -> Result<Vec<FrameRecord>> {
    link.validate()?;
    system.validate()?;
    let pulse = system.pulse()?;
    let stream = SeedStream::new(seed);
    (0..n_frames as u64)
        .into_par_iter()
        .map(|i| {
            let frame_seed = stream.child(i);
            let frame = SymbolFrame::random(frame_seed.seed(), system.symbols_per_frame())?;
            let tx = transmit_link(
                &frame,
                link,
                launch,
                &pulse,
                system.symbol_rate,
                frame_seed.child(0).seed(),
            )?;
            let rx = receiver_frontend(&tx, &pulse, system.symbol_rate, system.rx_sps)?;
            Ok(FrameRecord {
                samples: rx.signal.into_samples(),
                norm_factor: rx.norm_factor,
                launch_w: launch.watts(),
                bits: frame.bits,
                symbols: frame.symbols,
            })
        })
        .collect()
}

impl Dataset {
    pub fn generate(
        link: &LinkParams,
        system: &SystemConfig,
        launch_power_dbm: f64,
        seed: u64,
        n_frames: usize,
        config_digest: &str,
    ) -> Result<Self> {
        let launch = LaunchConfig::new(launch_power_dbm)?;
        let frames = simulate_frames(link, system, &launch, seed, n_frames)?;
        Ok(Dataset {
            header: DatasetHeader {
                format: FORMAT_TAG.into(),
                version: crate::VERSION.into(),
                config_digest: config_digest.into(),
                seed,
                launch_power_dbm,
                n_frames,
                frame_len: system.frame_len,
                sample_rate: system.rx_rate(),
                symbol_rate: system.symbol_rate,
                bits_per_frame: system.symbols_per_frame() * BITS_PER_SYMBOL,
                norm_factors: frames.iter().map(|f| f.norm_factor).collect(),
            },
            frames,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let h = &self.header;
        serde_json::to_writer(&mut w, h)?;
        w.write_all(b"\n")?;
        for f in &self.frames {
            if f.samples.len() != h.frame_len {
                return Err(Error::LengthMismatch {
                    expected: h.frame_len,
                    actual: f.samples.len(),
                });
            }
            let mut buf = Vec::with_capacity(16 * f.samples.len());
            for s in &f.samples {
                buf.extend_from_slice(&s.re.to_le_bytes());
                buf.extend_from_slice(&s.im.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        for f in &self.frames {
            w.write_all(&pack_bits(&f.bits))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: DatasetHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("dataset header: {e}")))?;
        if header.format != FORMAT_TAG {
            return Err(Error::Format(format!("unknown dataset format '{}'", header.format)));
        }
        if header.norm_factors.len() != header.n_frames {
            return Err(Error::Format(
                "header norm factor count differs from frame count".into(),
            ));
        }
        let launch_w = LaunchConfig::new(header.launch_power_dbm)
            .map_err(|e| Error::Format(format!("dataset header: {e}")))?
            .watts();
        let mut frames = Vec::with_capacity(header.n_frames);
        let mut buf = vec![0u8; 16 * header.frame_len];
        for i in 0..header.n_frames {
            r.read_exact(&mut buf)
                .map_err(|e| Error::Format(format!("frame {i} samples: {e}")))?;
            let samples = buf
                .chunks_exact(16)
                .map(|c| {
                    let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                    let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                    Complex64::new(re, im)
                })
                .collect();
            frames.push(FrameRecord {
                samples,
                norm_factor: header.norm_factors[i],
                launch_w,
                bits: Vec::new(),
                symbols: Vec::new(),
            });
        }
        let mut packed = vec![0u8; header.bits_per_frame.div_ceil(8)];
        for (i, f) in frames.iter_mut().enumerate() {
            r.read_exact(&mut packed)
                .map_err(|e| Error::Format(format!("frame {i} bits: {e}")))?;
            f.bits = unpack_bits(&packed, header.bits_per_frame);
            f.symbols = qam64_map(&f.bits)?.symbols;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!(
                "{} trailing bytes after the bit section",
                rest.len()
            )));
        }
        Ok(Dataset { header, frames })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, b)| acc | ((b & 1) << (7 - i))))
        .collect()
}

fn unpack_bits(packed: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|i| (packed[i / 8] >> (7 - i % 8)) & 1).collect()
}
