//! Periodic grids, sampled fields and their discrete Fourier representation.
//!
//! A [`GridSpec`] discretizes the box `[-L, L)^d` with `N` points per axis.
//! Samples are stored row-major (the last axis is contiguous) and channel-major:
//! channel `c` occupies `values[c * len .. (c + 1) * len]`.
//!
//! The frequency attached to FFT slot `j` is `ξ = π k / L` with
//! `k = j` for `j < N/2` and `k = j - N` otherwise.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, half_width: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half-width must be positive, got {half_width}")));
        }
        Ok(Self { dim, n, half_width })
    }

    /// One-dimensional grid on `[-L, L)`.
    pub fn line(n: usize, half_width: f64) -> Result<Self> {
        Self::new(1, n, half_width)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Number of nodes, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    /// Coordinate of index `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    /// Per-axis indices of a flat node index.
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    /// Coordinates of a flat node index (unused axes are zero).
    pub fn node(&self, flat: usize) -> [f64; 2] {
        let idx = self.unflatten(flat);
        match self.dim {
            1 => [self.coord(idx[0]), 0.0],
            _ => [self.coord(idx[0]), self.coord(idx[1])],
        }
    }

    /// Signed mode number of FFT slot `j`.
    pub fn mode(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Frequency spacing `π / L`.
    pub fn frequency_step(&self) -> f64 {
        std::f64::consts::PI / self.half_width
    }

    /// Frequencies in FFT slot order along one axis.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let step = self.frequency_step();
        (0..self.n).map(|j| step * self.mode(j) as f64).collect()
    }

    /// Largest per-axis frequency magnitude `π N / (2L)`.
    pub fn max_frequency(&self) -> f64 {
        self.frequency_step() * (self.n / 2) as f64
    }

    /// Largest `|ξ|` on the lattice.
    pub fn max_radius(&self) -> f64 {
        self.max_frequency() * (self.dim as f64).sqrt()
    }

    /// `|ξ|²` for every flat spectral slot.
    pub fn xi_squared(&self) -> Vec<f64> {
        let k = self.wavenumbers();
        match self.dim {
            1 => k.iter().map(|x| x * x).collect(),
            _ => {
                let mut out = Vec::with_capacity(self.len());
                for a in &k {
                    for b in &k {
                        out.push(a * a + b * b);
                    }
                }
                out
            }
        }
    }

    /// Frequency component along `axis` for every flat spectral slot.
    pub fn xi_component(&self, axis: usize) -> Vec<f64> {
        let k = self.wavenumbers();
        match self.dim {
            1 => k,
            _ => {
                let mut out = Vec::with_capacity(self.len());
                for a in 0..self.n {
                    for b in 0..self.n {
                        out.push(if axis == 0 { k[a] } else { k[b] });
                    }
                }
                out
            }
        }
    }

    /// True when slot `flat` carries the Nyquist mode `k = -N/2` along `axis`.
    pub fn is_nyquist(&self, flat: usize, axis: usize) -> bool {
        self.unflatten(flat)[axis] == self.n / 2
    }
}

/// Real samples of a (possibly vector- or matrix-valued) function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    channels: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        Self { grid, channels, values: vec![0.0; grid.len() * channels] }
    }

    pub fn constant(grid: GridSpec, channels: usize, value: f64) -> Self {
        Self { grid, channels, values: vec![value; grid.len() * channels] }
    }

    pub fn from_values(grid: GridSpec, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != grid.len() * channels {
            return Err(Error::Mismatch(format!(
                "expected {} samples for {channels} channel(s), got {}",
                grid.len() * channels,
                values.len()
            )));
        }
        Ok(Self { grid, channels, values })
    }

    /// Samples `f(x, out)` at every node; `out` has one slot per channel.
    pub fn from_fn(grid: GridSpec, channels: usize, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let len = grid.len();
        let mut values = vec![0.0; len * channels];
        let mut out = vec![0.0; channels];
        for i in 0..len {
            let x = grid.node(i);
            f(&x[..grid.dim()], &mut out);
            for c in 0..channels {
                values[c * len + i] = out[c];
            }
        }
        Self { grid, channels, values }
    }

    pub fn scalar_from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, 1, |x, out| out[0] = f(x))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let len = self.grid.len();
        &self.values[c * len..(c + 1) * len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.grid.len();
        &mut self.values[c * len..(c + 1) * len]
    }

    /// Builds a field by stacking single-channel fields.
    pub fn stack(parts: &[Field]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
        let mut values = Vec::with_capacity(parts.len() * first.grid.len());
        let mut channels = 0;
        for p in parts {
            first.check_grid(p)?;
            values.extend_from_slice(&p.values);
            channels += p.channels;
        }
        Ok(Self { grid: first.grid, channels, values })
    }

    pub fn extract_channel(&self, c: usize) -> Field {
        Field { grid: self.grid, channels: 1, values: self.channel(c).to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context))
        }
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    pub fn check_layout(&self, other: &Field) -> Result<()> {
        self.check_grid(other)?;
        if self.channels != other.channels {
            return Err(Error::Mismatch(format!(
                "{} vs {} channels",
                self.channels, other.channels
            )));
        }
        Ok(())
    }

    /// Pointwise Euclidean (Frobenius) magnitude over channels.
    pub fn magnitude(&self) -> Vec<f64> {
        let len = self.grid.len();
        if self.channels == 1 {
            return self.values.iter().map(|v| v.abs()).collect();
        }
        (0..len)
            .map(|i| {
                (0..self.channels)
                    .map(|c| self.values[c * len + i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    /// Discrete `L^r` norm of the pointwise magnitude (periodic trapezoidal rule).
    pub fn lr_norm(&self, r: f64) -> f64 {
        lr_of_magnitude(&self.magnitude(), r, self.grid.cell_volume())
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            grid: self.grid,
            channels: self.channels,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `a * self + other`
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.check_layout(other)?;
        Ok(Field {
            grid: self.grid,
            channels: self.channels,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + y).collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        other.axpy(-1.0, self).map(|f| f.scaled(-1.0))
    }

    /// Sample-wise product; a single-channel factor broadcasts over the other.
    pub fn mul_samples(&self, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let len = self.grid.len();
        let (wide, narrow) = if self.channels >= other.channels { (self, other) } else { (other, self) };
        if narrow.channels != 1 && narrow.channels != wide.channels {
            return Err(Error::Mismatch(format!(
                "cannot multiply {} by {} channels",
                self.channels, other.channels
            )));
        }
        let mut values = wide.values.clone();
        for c in 0..wide.channels {
            let nc = if narrow.channels == 1 { 0 } else { c };
            let src = narrow.channel(nc);
            for (v, s) in values[c * len..(c + 1) * len].iter_mut().zip(src) {
                *v *= s;
            }
        }
        Ok(Field { grid: self.grid, channels: wide.channels, values })
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Serialization: a header `(d, N, L, channels)` followed by one record per
/// node (row-major), each record holding every channel.
impl Field {
    pub fn to_bytes(&self) -> Vec<u8> {
        let len = self.grid.len();
        let mut out = Vec::with_capacity(20 + 8 * self.values.len());
        out.extend_from_slice(&(self.grid.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.n as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.half_width.to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        for i in 0..len {
            for c in 0..self.channels {
                out.extend_from_slice(&self.values[c * len + i].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let take = |at: usize, n: usize| -> Result<&[u8]> {
            bytes.get(at..at + n).ok_or_else(|| Error::Parse("truncated field record".into()))
        };
        let u32_at = |at: usize| -> Result<u32> { Ok(u32::from_le_bytes(take(at, 4)?.try_into().unwrap())) };
        let dim = u32_at(0)? as usize;
        let n = u32_at(4)? as usize;
        let half_width = f64::from_le_bytes(take(8, 8)?.try_into().unwrap());
        let channels = u32_at(16)? as usize;
        let grid = GridSpec::new(dim, n, half_width)?;
        let len = grid.len();
        if channels == 0 || bytes.len() != 20 + 8 * len * channels {
            return Err(Error::Parse(format!("expected {} bytes of samples", 8 * len * channels)));
        }
        let mut values = vec![0.0; len * channels];
        for i in 0..len {
            for c in 0..channels {
                let at = 20 + 8 * (i * channels + c);
                values[c * len + i] = f64::from_le_bytes(take(at, 8)?.try_into().unwrap());
            }
        }
        Field::from_values(grid, channels, values)
    }

    /// CSV with a `# d,N,L,channels` header line, then `x..., c0, c1, ...` per node.
    /// Floats are written in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let len = self.grid.len();
        let mut s = format!("# d={},N={},L={},channels={}\n", self.grid.dim, self.grid.n, self.grid.half_width, self.channels);
        let axes = ["x0", "x1"];
        let mut cols: Vec<String> = axes[..self.grid.dim].iter().map(|a| a.to_string()).collect();
        cols.extend((0..self.channels).map(|c| format!("c{c}")));
        s.push_str(&cols.join(","));
        s.push('\n');
        for i in 0..len {
            let x = self.grid.node(i);
            let mut row: Vec<String> = x[..self.grid.dim].iter().map(|v| format!("{v}")).collect();
            row.extend((0..self.channels).map(|c| format!("{}", self.values[c * len + i])));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field CSV".into()))?;
        let mut dim = None;
        let mut n = None;
        let mut half_width = None;
        let mut channels = None;
        for part in header.trim_start_matches('#').trim().split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("bad header item {part:?}")))?;
            let bad = |_| Error::Parse(format!("bad header value {v:?}"));
            match k.trim() {
                "d" => dim = Some(v.trim().parse::<usize>().map_err(bad)?),
                "N" => n = Some(v.trim().parse::<usize>().map_err(bad)?),
                "L" => half_width = Some(v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad L {v:?}")))?),
                "channels" => channels = Some(v.trim().parse::<usize>().map_err(bad)?),
                other => return Err(Error::Parse(format!("unknown header key {other:?}"))),
            }
        }
        let missing = || Error::Parse("incomplete field CSV header".into());
        let grid = GridSpec::new(dim.ok_or_else(missing)?, n.ok_or_else(missing)?, half_width.ok_or_else(missing)?)?;
        let channels = channels.ok_or_else(missing)?;
        lines.next();
        let len = grid.len();
        let mut values = vec![0.0; len * channels];
        let mut count = 0;
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            if i >= len {
                return Err(Error::Parse("too many rows".into()));
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != grid.dim + channels {
                return Err(Error::Parse(format!("row {i} has {} cells", cells.len())));
            }
            for c in 0..channels {
                values[c * len + i] = cells[grid.dim + c]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad sample in row {i}")))?;
            }
            count += 1;
        }
        if count != len {
            return Err(Error::Parse(format!("expected {len} rows, got {count}")));
        }
        Field::from_values(grid, channels, values)
    }
}

pub(crate) fn lr_of_magnitude(mag: &[f64], r: f64, cell: f64) -> f64 {
    if r == 2.0 {
        return (mag.iter().map(|m| m * m).sum::<f64>() * cell).sqrt();
    }
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    // scale by the peak before raising to r
    let s: f64 = mag.iter().map(|m| (m / peak).powf(r)).sum();
    peak * (s * cell).powf(1.0 / r)
}

/// Discrete Fourier coefficients of every channel of a [`Field`].
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: GridSpec,
    channels: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        Self { grid, channels, data: vec![Complex64::new(0.0, 0.0); grid.len() * channels] }
    }

    pub fn from_field(field: &Field) -> Self {
        let grid = field.grid;
        let mut data: Vec<Complex64> =
            field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for chunk in data.chunks_mut(grid.len()) {
            transform(&grid, chunk, false);
        }
        Self { grid, channels: field.channels, data }
    }

    /// Wraps raw coefficients laid out like [`Field`] values.
    pub fn from_raw(grid: GridSpec, channels: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() * channels {
            return Err(Error::Mismatch("spectrum length".into()));
        }
        Ok(Self { grid, channels, data })
    }

    pub fn to_field(&self) -> Field {
        let grid = self.grid;
        let mut data = self.data.clone();
        let norm = 1.0 / grid.len() as f64;
        for chunk in data.chunks_mut(grid.len()) {
            transform(&grid, chunk, true);
        }
        Field {
            grid,
            channels: self.channels,
            values: data.into_iter().map(|c| c.re * norm).collect(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let len = self.grid.len();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let len = self.grid.len();
        &mut self.data[c * len..(c + 1) * len]
    }

    /// Multiplies every channel by a real multiplier given per flat slot.
    pub fn apply_real(&mut self, multiplier: &[f64]) {
        let len = self.grid.len();
        for chunk in self.data.chunks_mut(len) {
            for (z, m) in chunk.iter_mut().zip(multiplier) {
                *z *= *m;
            }
        }
    }

    pub fn with_real(&self, multiplier: &[f64]) -> Spectrum {
        let mut s = self.clone();
        s.apply_real(multiplier);
        s
    }

    pub fn axpy(&mut self, a: f64, other: &Spectrum) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += *y * a;
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized in-place d-dimensional FFT of one channel.
fn transform(grid: &GridSpec, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let fft = plan(n, inverse);
    match grid.dim() {
        1 => fft.process(data),
        _ => {
            // rows (last axis) are contiguous
            fft.process(data);
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for b in 0..n {
                for a in 0..n {
                    column[a] = data[a * n + b];
                }
                fft.process(&mut column);
                for a in 0..n {
                    data[a * n + b] = column[a];
                }
            }
        }
    }
}
