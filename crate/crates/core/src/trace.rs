//! Sampled traces and their CSV file format.
//!
//! ```text
//! # label=homodyne sweep
//! # center_frequency_hz=5000000
//! # rbw_hz=300000
//! # units=linear
//! # seed=1
//! # generator=chacha8+ziggurat
//! t_s,value
//! 0.0000000000000000e0,1.0234000000000000e0
//! ```
//!
//! Header lines start with `#` and hold `key=value` pairs. Values are written
//! with 17 significant digits so every `f64` round-trips exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMN_HEADER: &str = "t_s,value";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub label: Option<String>,
    pub center_frequency_hz: Option<f64>,
    pub rbw_hz: Option<f64>,
    /// `linear` for raw power, `normalized` for vacuum-normalized variance.
    pub units: Option<String>,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    /// Any other header entries, in file order.
    pub extra: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    t: Vec<f64>,
    v: Vec<f64>,
    pub meta: TraceMeta,
}

impl Trace {
    /// Builds a trace, checking equal lengths, at least two samples, finite
    /// values and nondecreasing times.
    pub fn new(t: Vec<f64>, v: Vec<f64>, meta: TraceMeta) -> Result<Self> {
        if t.len() != v.len() {
            return Err(Error::domain(format!(
                "time and value columns differ in length ({} vs {})",
                t.len(),
                v.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "trace has {} samples, need >= 2",
                t.len()
            )));
        }
        if t.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::domain("trace contains non-finite samples"));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::domain(format!(
                "sample times decrease at index {}",
                i + 1
            )));
        }
        if t[t.len() - 1] == t[0] {
            return Err(Error::domain("trace has zero duration"));
        }
        Ok(Self { t, v, meta })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    /// Same times, new values.
    pub fn with_values(&self, v: Vec<f64>) -> Result<Self> {
        Self::new(self.t.clone(), v, self.meta.clone())
    }

    /// Merges samples that share a timestamp by averaging their values.
    pub fn deduplicated(&self) -> Result<Self> {
        let mut t = Vec::with_capacity(self.len());
        let mut v = Vec::with_capacity(self.len());
        let mut i = 0;
        while i < self.len() {
            let mut j = i + 1;
            while j < self.len() && self.t[j] == self.t[i] {
                j += 1;
            }
            t.push(self.t[i]);
            v.push(self.v[i..j].iter().sum::<f64>() / (j - i) as f64);
            i = j;
        }
        Self::new(t, v, self.meta.clone())
    }

    /// Samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Self> {
        let lo = self.t.partition_point(|&t| t < t0);
        let hi = self.t.partition_point(|&t| t <= t1);
        if hi <= lo {
            return Err(Error::InsufficientData(format!(
                "no samples in [{t0}, {t1}]"
            )));
        }
        Self::new(
            self.t[lo..hi].to_vec(),
            self.v[lo..hi].to_vec(),
            self.meta.clone(),
        )
    }

    /// Centered moving average over `window` samples; the window shrinks at
    /// the edges.
    pub fn moving_average(&self, window: usize) -> Result<Self> {
        self.with_values(moving_average(&self.v, window))
    }

    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut meta = TraceMeta::default();
        let mut t = Vec::new();
        let mut v = Vec::new();
        let mut seen_header = false;
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = k + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            if let Some(rest) = trimmed.strip_prefix('#') {
                if seen_header {
                    return Err(parse_err("metadata after the column header".into()));
                }
                let (key, value) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| parse_err(format!("expected key=value, got {rest:?}")))?;
                meta.set(key.trim(), value.trim()).map_err(parse_err)?;
                continue;
            }
            if !seen_header {
                if trimmed != COLUMN_HEADER {
                    return Err(parse_err(format!(
                        "expected column header {COLUMN_HEADER:?}"
                    )));
                }
                seen_header = true;
                continue;
            }
            let (a, b) = trimmed
                .split_once(',')
                .ok_or_else(|| parse_err("expected two comma-separated columns".into()))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("bad number {s:?}: {e}")))
            };
            t.push(num(a)?);
            v.push(num(b)?);
        }
        if !seen_header {
            return Err(Error::Parse {
                line: 0,
                message: "missing column header".into(),
            });
        }
        Self::new(t, v, meta)
    }

    pub fn write_csv(&self, mut writer: impl Write) -> Result<()> {
        let mut out = String::with_capacity(48 * self.len() + 256);
        for (k, value) in self.meta.entries() {
            let _ = writeln!(out, "# {k}={value}");
        }
        out.push_str(COLUMN_HEADER);
        out.push('\n');
        for (t, v) in self.t.iter().zip(&self.v) {
            let _ = writeln!(out, "{},{}", fmt17(*t), fmt17(*v));
        }
        writer.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

impl TraceMeta {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let float = |s: &str| s.parse::<f64>().map_err(|e| format!("bad {key}: {e}"));
        match key {
            "label" => self.label = Some(value.to_string()),
            "center_frequency_hz" => self.center_frequency_hz = Some(float(value)?),
            "rbw_hz" => self.rbw_hz = Some(float(value)?),
            "units" => self.units = Some(value.to_string()),
            "seed" => self.seed = Some(value.parse().map_err(|e| format!("bad seed: {e}"))?),
            "generator" => self.generator = Some(value.to_string()),
            _ => self.extra.push((key.to_string(), value.to_string())),
        }
        Ok(())
    }

    /// Header entries in canonical order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e = Vec::new();
        if let Some(l) = &self.label {
            e.push(("label".into(), l.clone()));
        }
        if let Some(f) = self.center_frequency_hz {
            e.push(("center_frequency_hz".into(), f.to_string()));
        }
        if let Some(f) = self.rbw_hz {
            e.push(("rbw_hz".into(), f.to_string()));
        }
        if let Some(u) = &self.units {
            e.push(("units".into(), u.clone()));
        }
        if let Some(s) = self.seed {
            e.push(("seed".into(), s.to_string()));
        }
        if let Some(g) = &self.generator {
            e.push(("generator".into(), g.clone()));
        }
        e.extend(self.extra.iter().cloned());
        e
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let n = v.len();
    if window <= 1 || n == 0 {
        return v.to_vec();
    }
    let half_lo = (window - 1) / 2;
    let half_hi = window / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for x in v {
        acc += x;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_lo);
            let hi = (i + half_hi + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Linear-interpolated percentile (`q` in `[0, 1]`).
pub(crate) fn percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub(crate) fn median(v: &[f64]) -> f64 {
    percentile(v, 0.5)
}
