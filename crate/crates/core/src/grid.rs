//! Periodic box `[-L, L)^d`, complex fields on it, and the discrete
//! analogue of `v̂(ξ) = ∫ v(x) e^{-iξ·x} dx`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::cutoff::chi;
use crate::fft::{self, Direction};
use crate::{par, Error, Result, C64};

/// Largest supported points-per-axis (guards the binary reader).
const MAX_POINTS: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    half_len: [f64; 2],
}

impl Grid {
    pub fn new(n: &[usize], half_len: &[f64]) -> Result<Self> {
        let dim = n.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if half_len.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: half_len.len() });
        }
        let mut g = Grid { dim, n: [1, 1], half_len: [1.0, 1.0] };
        for a in 0..dim {
            if n[a] < 8 || !n[a].is_power_of_two() || n[a] > MAX_POINTS {
                return Err(Error::InvalidGrid(format!(
                    "N = {} on axis {a} must be a power of two >= 8",
                    n[a]
                )));
            }
            if !(half_len[a] > 0.0 && half_len[a].is_finite()) {
                return Err(Error::InvalidGrid(format!("L = {} on axis {a} must be positive", half_len[a])));
            }
            g.n[a] = n[a];
            g.half_len[a] = half_len[a];
        }
        Ok(g)
    }

    pub fn new_1d(n: usize, half_len: f64) -> Result<Self> {
        Self::new(&[n], &[half_len])
    }

    pub fn new_2d(n: [usize; 2], half_len: [f64; 2]) -> Result<Self> {
        Self::new(&n, &half_len)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn half_lengths(&self) -> &[f64] {
        &self.half_len[..self.dim]
    }

    pub fn points(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn half_len(&self, axis: usize) -> f64 {
        self.half_len[axis]
    }

    /// Total number of samples `Π N_a`.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_len[axis] / self.n[axis] as f64
    }

    /// `(2L/N)^d`
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// `π/L` per axis, product over axes.
    pub fn freq_cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.freq_spacing(a)).product()
    }

    pub fn freq_spacing(&self, axis: usize) -> f64 {
        PI / self.half_len[axis]
    }

    /// Largest resolved frequency magnitude `πN/(2L)`.
    pub fn nyquist(&self, axis: usize) -> f64 {
        PI * self.n[axis] as f64 / (2.0 * self.half_len[axis])
    }

    pub fn min_nyquist(&self) -> f64 {
        (0..self.dim).map(|a| self.nyquist(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn coord(&self, axis: usize, j: usize) -> f64 {
        -self.half_len[axis] + j as f64 * self.spacing(axis)
    }

    /// Signed lattice index of storage slot `j`: `0..N/2-1, -N/2..-1`.
    pub fn freq_index(&self, axis: usize, j: usize) -> i64 {
        let n = self.n[axis];
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    pub fn freq(&self, axis: usize, j: usize) -> f64 {
        self.freq_index(axis, j) as f64 * self.freq_spacing(axis)
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|j| self.coord(axis, j)).collect()
    }

    pub fn freqs(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|j| self.freq(axis, j)).collect()
    }

    fn split(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n[1], idx % self.n[1]]
        }
    }

    /// Physical coordinates of flat sample `idx`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let j = self.split(idx);
        [self.coord(0, j[0]), if self.dim == 2 { self.coord(1, j[1]) } else { 0.0 }]
    }

    /// Lattice frequency of flat storage slot `idx`.
    pub fn freq_point(&self, idx: usize) -> [f64; 2] {
        let j = self.split(idx);
        [self.freq(0, j[0]), if self.dim == 2 { self.freq(1, j[1]) } else { 0.0 }]
    }

    /// Real function of the frequency evaluated on the lattice (storage order).
    pub fn freq_table<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let d = self.dim;
        par::map_range(self.len(), |i| f(&self.freq_point(i)[..d]))
    }

    /// Complex multiplier on the lattice; a NaN names the offending frequency.
    pub fn multiplier_table<F>(&self, m: F) -> Result<Vec<C64>>
    where
        F: Fn(&[f64]) -> C64 + Sync + Send,
    {
        let d = self.dim;
        let t = par::map_range(self.len(), |i| m(&self.freq_point(i)[..d]));
        if let Some(i) = t.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!(
                "multiplier is {} at ξ = {:?}",
                t[i],
                &self.freq_point(i)[..d]
            )));
        }
        Ok(t)
    }

    /// Smallest admissible power-of-two N (>= 8) whose Nyquist frequency
    /// reaches `max_freq` on an axis of half-length `half_len`.
    pub fn required_points(half_len: f64, max_freq: f64) -> usize {
        let need = (2.0 * half_len * max_freq / PI).ceil().max(8.0) as usize;
        need.next_power_of_two()
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Unnormalised in-place FFT over all axes.
    pub(crate) fn fft(&self, buf: &mut [C64], dir: Direction) {
        if self.dim == 1 {
            fft::fft_1d(buf, dir);
        } else {
            fft::fft_2d(buf, self.n[0], self.n[1], dir);
        }
    }

    /// `(-1)^{k}` of the storage slot: the phase of `e^{-iξ·x_0}` at `x_0 = -L`.
    fn alternating(&self, idx: usize) -> f64 {
        let j = self.split(idx);
        if (j[0] + j[1]).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LowPass {
    /// Zero every coefficient with `‖ξ‖ > K`.
    Sharp,
    /// Multiply by `χ(ξ/K)`.
    Smooth,
}

/// Complex samples on a grid, row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<C64>,
}

/// Fourier coefficients approximating `∫ f(x) e^{-iξ·x} dx` on the lattice,
/// in FFT storage order (see [`Grid::freq_index`]).
#[derive(Clone, Debug, PartialEq)]
pub struct FreqField {
    grid: Grid,
    coeffs: Vec<C64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!("field value at sample {i}")));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Sample `f` at every grid point. Non-finite samples are an error.
    pub fn from_fn<F>(grid: Grid, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> C64 + Sync + Send,
    {
        let d = grid.dim;
        let values = par::map_range(grid.len(), |i| f(&grid.point(i)[..d]));
        Field::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn to_frequency(&self) -> FreqField {
        let g = self.grid;
        let mut buf = self.values.clone();
        g.fft(&mut buf, Direction::Forward);
        let w = g.cell_volume();
        par::for_each_chunk_mut(&mut buf, 4096, |c, chunk| {
            for (k, v) in chunk.iter_mut().enumerate() {
                *v *= w * g.alternating(c * 4096 + k);
            }
        });
        FreqField { grid: g, coeffs: buf }
    }

    /// `to_physical(m · to_frequency(f))` for a tabulated multiplier in
    /// storage order. The `(-1)^k` phases cancel, so this is FFT, product,
    /// inverse FFT.
    pub fn apply_table(&self, table: &[C64]) -> Field {
        assert_eq!(table.len(), self.values.len());
        let g = self.grid;
        let mut buf = self.values.clone();
        g.fft(&mut buf, Direction::Forward);
        let scale = 1.0 / g.len() as f64;
        par::for_each_chunk_mut(&mut buf, 4096, |c, chunk| {
            let off = c * 4096;
            for (k, v) in chunk.iter_mut().enumerate() {
                *v *= table[off + k] * scale;
            }
        });
        g.fft(&mut buf, Direction::Inverse);
        Field { grid: g, values: buf }
    }

    /// Same as [`Field::apply_table`] for a real multiplier.
    pub fn apply_real_table(&self, table: &[f64]) -> Field {
        assert_eq!(table.len(), self.values.len());
        let g = self.grid;
        let mut buf = self.values.clone();
        g.fft(&mut buf, Direction::Forward);
        let scale = 1.0 / g.len() as f64;
        par::for_each_chunk_mut(&mut buf, 4096, |c, chunk| {
            let off = c * 4096;
            for (k, v) in chunk.iter_mut().enumerate() {
                *v *= table[off + k] * scale;
            }
        });
        g.fft(&mut buf, Direction::Inverse);
        Field { grid: g, values: buf }
    }

    pub fn apply_multiplier<F>(&self, m: F) -> Result<Field>
    where
        F: Fn(&[f64]) -> C64 + Sync + Send,
    {
        let t = self.grid.multiplier_table(m)?;
        Ok(self.apply_table(&t))
    }

    /// Band-limited evaluation at `x + shift` for every grid point `x`.
    pub fn fourier_interpolate(&self, shift: &[f64]) -> Result<Field> {
        let d = self.grid.dim;
        if shift.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: shift.len() });
        }
        self.apply_multiplier(|xi| {
            let ph: f64 = xi.iter().zip(shift).map(|(a, b)| a * b).sum();
            C64::new(ph.cos(), ph.sin())
        })
    }

    pub fn low_pass(&self, k: f64, kind: LowPass) -> Result<Field> {
        if !(k > 0.0) {
            return Err(Error::param(format!("low-pass radius must be positive, got {k}")));
        }
        let t = self.grid.freq_table(|xi| {
            let r = xi.iter().map(|a| a * a).sum::<f64>().sqrt();
            match kind {
                LowPass::Sharp => {
                    if r > k {
                        0.0
                    } else {
                        1.0
                    }
                }
                LowPass::Smooth => chi(r / k),
            }
        });
        Ok(self.apply_real_table(&t))
    }

    /// `Σ |f|² h^d`
    pub fn norm_sqr(&self) -> f64 {
        let v = &self.values;
        self.grid.cell_volume() * par::sum_range(v.len(), |i| v[i].norm_sqr())
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `(f, g) = Σ f conj(g) h^d`
    pub fn inner(&self, other: &Field) -> Result<C64> {
        self.grid.check_same(&other.grid)?;
        let (a, b) = (&self.values, &other.values);
        Ok(par::sum_range_c(a.len(), |i| a[i] * b[i].conj()) * self.grid.cell_volume())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn scale(&self, c: C64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    /// Pointwise product with a function of position.
    pub fn mul_fn<F>(&self, f: F) -> Field
    where
        F: Fn(&[f64]) -> C64 + Sync + Send,
    {
        let g = self.grid;
        let d = g.dim;
        let values = par::map_range(g.len(), |i| self.values[i] * f(&g.point(i)[..d]));
        Field { grid: g, values }
    }

    /// `Σ w(x)|f(x)|² h^d` for a real weight.
    pub fn weighted_mass<F>(&self, w: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let g = self.grid;
        let d = g.dim;
        g.cell_volume() * par::sum_range(g.len(), |i| w(&g.point(i)[..d]) * self.values[i].norm_sqr())
    }

    /// Mass in the outer `frac` strip of every axis (union over axes).
    pub fn boundary_mass(&self, frac: f64) -> f64 {
        let g = self.grid;
        let d = g.dim;
        let lim: Vec<f64> = (0..d).map(|a| g.half_len[a] * (1.0 - frac)).collect();
        self.weighted_mass(|x| {
            if x.iter().zip(&lim).any(|(xa, l)| xa.abs() >= *l) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_header(w, self.grid.shape(), self.grid.half_lengths())?;
        write_values(w, &self.values)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Field> {
        let (n, l) = read_header(r)?;
        let grid = Grid::new(&n, &l)?;
        let values = read_values(r, grid.len())?;
        Field::new(grid, values)
    }
}

impl FreqField {
    pub fn new(grid: Grid, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: coeffs.len() });
        }
        Ok(FreqField { grid, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Coefficient at signed lattice indices `k` (one per axis).
    pub fn at(&self, k: &[i64]) -> C64 {
        let g = &self.grid;
        let slot = |a: usize| k[a].rem_euclid(g.n[a] as i64) as usize;
        if g.dim == 1 {
            self.coeffs[slot(0)]
        } else {
            self.coeffs[slot(0) * g.n[1] + slot(1)]
        }
    }

    /// `(2π)^{-d} Σ |F|² (π/L)^d`, equal to the physical `‖f‖²`.
    pub fn mass(&self) -> f64 {
        let c = &self.coeffs;
        let d = self.grid.dim as i32;
        self.grid.freq_cell_volume() / (2.0 * PI).powi(d) * par::sum_range(c.len(), |i| c[i].norm_sqr())
    }

    pub fn to_physical(&self) -> Field {
        let g = self.grid;
        let w = 1.0 / (g.cell_volume() * g.len() as f64);
        let mut buf: Vec<C64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, v)| v * (w * g.alternating(i)))
            .collect();
        g.fft(&mut buf, Direction::Inverse);
        Field { grid: g, values: buf }
    }
}

pub(crate) fn write_header<W: Write>(w: &mut W, n: &[usize], l: &[f64]) -> Result<()> {
    w.write_all(&(n.len() as u64).to_le_bytes())?;
    for &k in n {
        w.write_all(&(k as u64).to_le_bytes())?;
    }
    for &x in l {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn write_values<W: Write>(w: &mut W, v: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(16 * v.len());
    for c in v {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_header<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
    let d = read_u64(r)? as usize;
    if !(1..=2).contains(&d) {
        return Err(Error::Parse(format!("header dimension {d} not in {{1, 2}}")));
    }
    let mut n = Vec::with_capacity(d);
    for _ in 0..d {
        let k = read_u64(r)? as usize;
        if k > MAX_POINTS * 2 {
            return Err(Error::Parse(format!("header axis length {k} too large")));
        }
        n.push(k);
    }
    let mut l = Vec::with_capacity(d);
    for _ in 0..d {
        l.push(read_f64(r)?);
    }
    Ok((n, l))
}

pub(crate) fn read_values<R: Read>(r: &mut R, count: usize) -> Result<Vec<C64>> {
    let mut buf = vec![0u8; 16 * count];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}
