//! Band-limited functions on the integer frequency lattice.
//!
//! A [`BandFunction`] stores `f(x) = sum c_xi exp(i xi.x)` with no `2 pi`
//! normalisation. Modes are kept in lexicographic order of the frequency
//! vector, which the tensor-grid evaluator relies on.

use std::collections::HashSet;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error("frequency {0:?} appears twice")]
    DuplicateFrequency(Vec<i64>),
    #[error("coefficient at {0:?} is not finite")]
    NonFinite(Vec<i64>),
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandFunction {
    dim: usize,
    freqs: Vec<i64>,
    coeffs: Vec<Complex64>,
}

impl BandFunction {
    pub fn zero(dim: usize) -> Self {
        BandFunction {
            dim,
            freqs: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn new<I>(dim: usize, modes: I) -> Result<Self, SpectraError>
    where
        I: IntoIterator<Item = (Vec<i64>, Complex64)>,
    {
        let mut freqs = Vec::new();
        let mut coeffs = Vec::new();
        for (xi, c) in modes {
            if xi.len() != dim {
                return Err(SpectraError::DimensionMismatch {
                    expected: dim,
                    got: xi.len(),
                });
            }
            freqs.extend_from_slice(&xi);
            coeffs.push(c);
        }
        Self::from_parts(dim, freqs, coeffs)
    }

    /// Builds from a flat frequency array (`dim` entries per mode).
    pub fn from_parts(
        dim: usize,
        freqs: Vec<i64>,
        coeffs: Vec<Complex64>,
    ) -> Result<Self, SpectraError> {
        if freqs.len() != dim * coeffs.len() {
            return Err(SpectraError::DimensionMismatch {
                expected: dim * coeffs.len(),
                got: freqs.len(),
            });
        }
        for (k, c) in coeffs.iter().enumerate() {
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(SpectraError::NonFinite(
                    freqs[k * dim..(k + 1) * dim].to_vec(),
                ));
            }
        }
        let n = coeffs.len();
        let mut order: Vec<usize> = (0..n).collect();
        let key = |k: usize| &freqs[k * dim..(k + 1) * dim];
        let sorted = (1..n).all(|k| key(k - 1) < key(k));
        if !sorted {
            order.sort_by(|&a, &b| key(a).cmp(key(b)));
            for w in order.windows(2) {
                if key(w[0]) == key(w[1]) {
                    return Err(SpectraError::DuplicateFrequency(key(w[0]).to_vec()));
                }
            }
            let mut f = Vec::with_capacity(freqs.len());
            let mut c = Vec::with_capacity(n);
            for &k in &order {
                f.extend_from_slice(key(k));
                c.push(coeffs[k]);
            }
            return Ok(BandFunction {
                dim,
                freqs: f,
                coeffs: c,
            });
        }
        Ok(BandFunction { dim, freqs, coeffs })
    }

    /// Every lattice point of `region`, with coefficient `coeff(xi)`.
    pub fn from_region(
        region: &FrequencyRegion,
        mut coeff: impl FnMut(&[i64]) -> Complex64,
    ) -> Result<Self, SpectraError> {
        let dim = region.mode_dim();
        let freqs = region_modes(region);
        let coeffs = freqs.chunks(dim.max(1)).map(|xi| coeff(xi)).collect();
        Self::from_parts(dim, freqs, coeffs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn freq(&self, k: usize) -> &[i64] {
        &self.freqs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn freqs_flat(&self) -> &[i64] {
        &self.freqs
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn modes(&self) -> impl Iterator<Item = (&[i64], Complex64)> + '_ {
        (0..self.len()).map(move |k| (self.freq(k), self.coeffs[k]))
    }

    /// `|xi|` of mode `k`.
    pub fn norm_of(&self, k: usize) -> f64 {
        (norm2(self.freq(k)) as f64).sqrt()
    }

    pub fn max_frequency(&self) -> f64 {
        (0..self.len())
            .map(|k| norm2(self.freq(k)))
            .max()
            .map_or(0.0, |n| (n as f64).sqrt())
    }

    /// Same modes, coefficients replaced by `g(xi, c)`.
    pub fn map_coeffs(&self, mut g: impl FnMut(&[i64], Complex64) -> Complex64) -> Self {
        let coeffs = (0..self.len())
            .map(|k| g(self.freq(k), self.coeffs[k]))
            .collect();
        BandFunction {
            dim: self.dim,
            freqs: self.freqs.clone(),
            coeffs,
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map_coeffs(|_, c| c * a)
    }

    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.dim, "point dimension");
        let tables = AxisTables::new(self);
        tables.eval_point(self, x, None)
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `(sum (1+|xi|^2)^s |c_xi|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.modes()
            .map(|(xi, c)| (1.0 + norm2(xi) as f64).powf(s) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Multiplies by `psi(|xi|/lambda)` and drops the modes where it vanishes.
    pub fn littlewood_paley(&self, lambda: f64) -> Self {
        let mut freqs = Vec::new();
        let mut coeffs = Vec::new();
        for (xi, c) in self.modes() {
            let m = lp_bump((norm2(xi) as f64).sqrt() / lambda);
            if m > 0.0 {
                freqs.extend_from_slice(xi);
                coeffs.push(c * m);
            }
        }
        BandFunction {
            dim: self.dim,
            freqs,
            coeffs,
        }
    }

    /// `e^{it sqrt(-Laplacian)}`: each coefficient gains the phase `e^{it|xi|}`.
    pub fn half_wave(&self, t: f64) -> Self {
        if t == 0.0 {
            return self.clone();
        }
        self.map_coeffs(|xi, c| c * Complex64::cis(t * (norm2(xi) as f64).sqrt()))
    }

    /// Values at many points (`dim` coordinates each), after propagating to time `t`.
    ///
    /// Points forming a (nearly) complete product grid go through the separable
    /// evaluator; anything else is summed directly.
    pub fn evaluate_many(&self, points: &[f64], t: f64) -> Vec<Complex64> {
        let g = self.half_wave(t);
        if let Some(grid) = ProductGrid::detect(points, self.dim) {
            if grid.worth_it(points.len() / self.dim.max(1), self.len()) {
                return grid.gather(&g.evaluate_tensor(&grid.axes), points);
            }
        }
        g.evaluate_direct(points, None)
    }

    /// Direct summation at many points; `times[j]` (if given) propagates point `j` separately.
    pub fn evaluate_direct(&self, points: &[f64], times: Option<&[f64]>) -> Vec<Complex64> {
        let d = self.dim;
        let n = if d == 0 { 0 } else { points.len() / d };
        if let Some(ts) = times {
            assert_eq!(ts.len(), n, "one time per point");
        }
        let tables = AxisTables::new(self);
        let norms: Vec<f64> = (0..self.len()).map(|k| self.norm_of(k)).collect();
        (0..n)
            .into_par_iter()
            .map(|j| {
                let x = &points[j * d..(j + 1) * d];
                let phase = times.map(|ts| (ts[j], norms.as_slice()));
                tables.eval_point(self, x, phase)
            })
            .collect()
    }

    /// Values on the full product grid `axes[0] x ... x axes[d-1]`, last axis fastest.
    pub fn evaluate_tensor(&self, axes: &[Vec<f64>]) -> Vec<Complex64> {
        assert_eq!(axes.len(), self.dim, "one axis per dimension");
        let total: usize = axes.iter().map(Vec::len).product();
        if self.is_empty() || total == 0 {
            return vec![Complex64::new(0.0, 0.0); total];
        }
        let d = self.dim;
        let tables = AxisTables::new(self);
        let exp_tables: Vec<Vec<Complex64>> = (0..d)
            .map(|a| {
                let (lo, hi) = tables.range[a];
                let n = axes[a].len();
                let mut e = Vec::with_capacity(((hi - lo + 1) as usize) * n);
                for k in lo..=hi {
                    e.extend(axes[a].iter().map(|&x| Complex64::cis(k as f64 * x)));
                }
                e
            })
            .collect();

        // Contract the last axis: one vector per distinct prefix xi_0..xi_{d-2}.
        let last = d - 1;
        let n_last = axes[last].len();
        let (lo_last, _) = tables.range[last];
        let groups = prefix_ranges(&self.freqs, d, last, &(0..self.len()).collect::<Vec<_>>());
        let mut blocks: Vec<(usize, Vec<Complex64>)> = groups
            .par_iter()
            .map(|&(start, end)| {
                let mut v = vec![Complex64::new(0.0, 0.0); n_last];
                for k in start..end {
                    let row = (self.freq(k)[last] - lo_last) as usize * n_last;
                    let e = &exp_tables[last][row..row + n_last];
                    let c = self.coeffs[k];
                    for (vi, ei) in v.iter_mut().zip(e) {
                        *vi += c * ei;
                    }
                }
                (start, v)
            })
            .collect();

        let mut width = n_last;
        for axis in (0..last).rev() {
            let heads: Vec<usize> = blocks.iter().map(|b| b.0).collect();
            let merged = prefix_ranges(&self.freqs, d, axis, &heads);
            let n_axis = axes[axis].len();
            let (lo, _) = tables.range[axis];
            let table = &exp_tables[axis];
            let blocks_ref = &blocks;
            // `merged` indexes blocks here, since it was built from block heads.
            let next: Vec<(usize, Vec<Complex64>)> = merged
                .par_iter()
                .map(|&(bs, be)| {
                    let mut v = vec![Complex64::new(0.0, 0.0); n_axis * width];
                    for (head, old) in &blocks_ref[bs..be] {
                        let row = (self.freq(*head)[axis] - lo) as usize * n_axis;
                        for i in 0..n_axis {
                            let e = table[row + i];
                            let dst = &mut v[i * width..(i + 1) * width];
                            for (di, oi) in dst.iter_mut().zip(old) {
                                *di += e * oi;
                            }
                        }
                    }
                    (blocks_ref[bs].0, v)
                })
                .collect();
            blocks = next;
            width *= n_axis;
        }
        debug_assert_eq!(blocks.len(), 1);
        blocks.pop().map(|b| b.1).unwrap_or_default()
    }
}

/// Splits `heads` (mode indices in increasing order) into runs agreeing on the
/// first `keep` coordinates. Returned ranges index into `heads`.
fn prefix_ranges(freqs: &[i64], d: usize, keep: usize, heads: &[usize]) -> Vec<(usize, usize)> {
    let prefix = |k: usize| &freqs[k * d..k * d + keep];
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=heads.len() {
        if i == heads.len() || prefix(heads[i]) != prefix(heads[start]) {
            out.push((start, i));
            start = i;
        }
    }
    out
}

/// Per-axis frequency ranges, used to build exponential lookup tables.
struct AxisTables {
    range: Vec<(i64, i64)>,
}

impl AxisTables {
    fn new(f: &BandFunction) -> Self {
        let range = (0..f.dim)
            .map(|a| {
                let it = (0..f.len()).map(|k| f.freq(k)[a]);
                let lo = it.clone().min().unwrap_or(0);
                let hi = it.max().unwrap_or(0);
                (lo, hi)
            })
            .collect();
        AxisTables { range }
    }

    fn eval_point(
        &self,
        f: &BandFunction,
        x: &[f64],
        phase: Option<(f64, &[f64])>,
    ) -> Complex64 {
        if f.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let tables: Vec<Vec<Complex64>> = self
            .range
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &xa)| (lo..=hi).map(|k| Complex64::cis(k as f64 * xa)).collect())
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..f.len() {
            let xi = f.freq(k);
            let mut term = f.coeffs[k];
            for (a, &xa) in xi.iter().enumerate() {
                term *= tables[a][(xa - self.range[a].0) as usize];
            }
            if let Some((t, norms)) = phase {
                term *= Complex64::cis(t * norms[k]);
            }
            acc += term;
        }
        acc
    }
}

/// Points that sit on a product of per-axis coordinate lists.
struct ProductGrid {
    axes: Vec<Vec<f64>>,
}

impl ProductGrid {
    fn detect(points: &[f64], d: usize) -> Option<Self> {
        if d == 0 || points.is_empty() {
            return None;
        }
        let n = points.len() / d;
        let mut axes = Vec::with_capacity(d);
        for a in 0..d {
            let mut seen = HashSet::new();
            let mut coords = Vec::new();
            for j in 0..n {
                let x = points[j * d + a];
                if seen.insert(x.to_bits()) {
                    coords.push(x);
                    if coords.len() > n {
                        return None;
                    }
                }
            }
            coords.sort_by(f64::total_cmp);
            axes.push(coords);
        }
        Some(ProductGrid { axes })
    }

    fn worth_it(&self, n_points: usize, n_modes: usize) -> bool {
        let full: f64 = self.axes.iter().map(|a| a.len() as f64).product();
        n_points >= 64 && n_modes >= 64 && full <= 4.0 * n_points as f64
    }

    fn gather(&self, values: &[Complex64], points: &[f64]) -> Vec<Complex64> {
        let d = self.axes.len();
        points
            .chunks(d)
            .map(|x| {
                let mut idx = 0usize;
                for (a, &xa) in x.iter().enumerate() {
                    let i = self.axes[a]
                        .binary_search_by(|c| c.total_cmp(&xa))
                        .expect("point lies on its own grid");
                    idx = idx * self.axes[a].len() + i;
                }
                values[idx]
            })
            .collect()
    }
}

/// Squared Euclidean norm of an integer vector.
pub fn norm2(xi: &[i64]) -> i64 {
    xi.iter().map(|v| v * v).sum()
}

/// The Littlewood-Paley profile `exp(1 - 1/(1 - (log2 r)^2))` on `(1/2, 2)`.
pub fn lp_bump(r: f64) -> f64 {
    if r <= 0.5 || r >= 2.0 {
        return 0.0;
    }
    let u = r.log2();
    let den = 1.0 - u * u;
    if den <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / den).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyRegion {
    /// `|xi| <= radius` in `Z^dim`.
    Ball { dim: usize, radius: f64 },
    /// `||xi| - lambda| <= width`.
    Annulus { dim: usize, lambda: f64, width: f64 },
    /// `lambda <= xi_1 <= 2 lambda`, `|xi'| <= sqrt(lambda)`.
    Plate { dim: usize, lambda: f64 },
    /// `(xi, tau)` in `Z^{dim+1}` with `|tau - |xi|| <= width` and `lambda/2 <= |xi| <= 2 lambda`.
    ConeShell { dim: usize, lambda: f64, width: f64 },
    /// The cone over one spatial annulus: `|tau - |xi|| <= width`, `||xi| - lambda| <= width`.
    ConeBand { dim: usize, lambda: f64, width: f64 },
}

impl FrequencyRegion {
    /// Length of a mode vector (`dim + 1` for cone regions).
    pub fn mode_dim(&self) -> usize {
        match *self {
            FrequencyRegion::Ball { dim, .. }
            | FrequencyRegion::Annulus { dim, .. }
            | FrequencyRegion::Plate { dim, .. } => dim,
            FrequencyRegion::ConeShell { dim, .. } | FrequencyRegion::ConeBand { dim, .. } => {
                dim + 1
            }
        }
    }

    pub fn contains(&self, xi: &[i64]) -> bool {
        match *self {
            FrequencyRegion::Ball { radius, .. } => in_shell(norm2(xi), 0.0, radius),
            FrequencyRegion::Annulus { lambda, width, .. } => {
                in_shell(norm2(xi), lambda - width, lambda + width)
            }
            FrequencyRegion::Plate { lambda, .. } => {
                let x1 = xi[0] as f64;
                x1 >= lambda && x1 <= 2.0 * lambda && in_shell(norm2(&xi[1..]), 0.0, lambda.sqrt())
            }
            FrequencyRegion::ConeShell { lambda, width, .. } => {
                let (space, tau) = xi.split_at(xi.len() - 1);
                let n2 = norm2(space);
                in_shell(n2, lambda / 2.0, 2.0 * lambda)
                    && (tau[0] as f64 - (n2 as f64).sqrt()).abs() <= width + TOL
            }
            FrequencyRegion::ConeBand { lambda, width, .. } => {
                let (space, tau) = xi.split_at(xi.len() - 1);
                let n2 = norm2(space);
                in_shell(n2, lambda - width, lambda + width)
                    && (tau[0] as f64 - (n2 as f64).sqrt()).abs() <= width + TOL
            }
        }
    }

    /// Radial bounds on the spatial part, used to prune enumeration.
    fn spatial_shell(&self) -> (f64, f64) {
        match *self {
            FrequencyRegion::Ball { radius, .. } => (0.0, radius),
            FrequencyRegion::Annulus { lambda, width, .. }
            | FrequencyRegion::ConeBand { lambda, width, .. } => (lambda - width, lambda + width),
            FrequencyRegion::Plate { lambda, .. } => (lambda, (4.0 * lambda * lambda + lambda).sqrt()),
            FrequencyRegion::ConeShell { lambda, .. } => (lambda / 2.0, 2.0 * lambda),
        }
    }
}

const TOL: f64 = 1e-9;

fn in_shell(n2: i64, lo: f64, hi: f64) -> bool {
    let r = (n2 as f64).sqrt();
    r >= lo - TOL && r <= hi + TOL
}

/// Every lattice point of the region in lexicographic order, flattened
/// (`region.mode_dim()` entries per point).
pub fn region_modes(region: &FrequencyRegion) -> Vec<i64> {
    let (lo, hi) = region.spatial_shell();
    if hi < 0.0 || hi < lo {
        return Vec::new();
    }
    let spatial_dim = match *region {
        FrequencyRegion::ConeShell { dim, .. } | FrequencyRegion::ConeBand { dim, .. } => dim,
        _ => region.mode_dim(),
    };
    let bound = (hi + TOL).floor() as i64;
    let hi2 = (hi + TOL) * (hi + TOL);
    let mut out = Vec::new();
    let mut xi = vec![0i64; spatial_dim];
    let mut visit = |xi: &[i64]| match *region {
        FrequencyRegion::ConeShell { width, .. } | FrequencyRegion::ConeBand { width, .. } => {
            let r = (norm2(xi) as f64).sqrt();
            let t_lo = (r - width - TOL).ceil() as i64;
            let t_hi = (r + width + TOL).floor() as i64;
            let mut v = xi.to_vec();
            v.push(0);
            for tau in t_lo..=t_hi {
                *v.last_mut().unwrap() = tau;
                if region.contains(&v) {
                    out.extend_from_slice(&v);
                }
            }
        }
        _ => {
            if region.contains(xi) {
                out.extend_from_slice(xi);
            }
        }
    };
    enumerate_box(&mut xi, 0, 0, bound, hi2, &mut visit);
    out
}

fn enumerate_box(
    xi: &mut [i64],
    axis: usize,
    partial: i64,
    bound: i64,
    hi2: f64,
    visit: &mut impl FnMut(&[i64]),
) {
    if axis == xi.len() {
        visit(xi);
        return;
    }
    let room = hi2 - partial as f64;
    if room < 0.0 {
        return;
    }
    let b = (room.sqrt().floor() as i64).min(bound);
    for v in -b..=b {
        xi[axis] = v;
        enumerate_box(xi, axis + 1, partial + v * v, bound, hi2, visit);
    }
}

/// Uniform nodes covering `[t_min, t_max]` inclusively with spacing at most `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
}

impl TimeGrid {
    pub fn new(t_min: f64, t_max: f64, step: f64) -> Result<Self, SpectraError> {
        if !(t_min < t_max) || !(step > 0.0) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(SpectraError::InvalidGrid(format!(
                "need t_min < t_max and step > 0, got ({t_min}, {t_max}) step {step}"
            )));
        }
        Ok(TimeGrid { t_min, t_max, step })
    }

    /// `(0, 1)` with step `1/(16 |xi|_max)`, enough to resolve every phase.
    pub fn default_for(f: &BandFunction) -> Self {
        let lam = f.max_frequency().max(1.0);
        TimeGrid {
            t_min: 0.0,
            t_max: 1.0,
            step: 1.0 / (16.0 * lam),
        }
    }

    pub fn intervals(&self) -> usize {
        (((self.t_max - self.t_min) / self.step).ceil() as usize).max(1)
    }

    pub fn spacing(&self) -> f64 {
        (self.t_max - self.t_min) / self.intervals() as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let n = self.intervals();
        let h = self.spacing();
        (0..=n).map(|k| self.t_min + k as f64 * h).collect()
    }

    /// Trapezoid weights matching [`TimeGrid::nodes`].
    pub fn weights(&self) -> Vec<f64> {
        let n = self.intervals();
        let h = self.spacing();
        (0..=n)
            .map(|k| if k == 0 || k == n { h / 2.0 } else { h })
            .collect()
    }
}

/// Per-point maximum of `|e^{it sqrt(-Lap)} f(x)|` over the grid and the time attaining it.
///
/// Ties go to the earlier time.
pub fn maximal_field(f: &BandFunction, points: &[f64], grid: &TimeGrid) -> Vec<(f64, f64)> {
    let d = f.dim();
    let n_points = if d == 0 { 0 } else { points.len() / d };
    // Modes sharing |xi|^2 share the time phase, so fold them before the time loop.
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by_key(|&k| norm2(f.freq(k)));
    let mut shells: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut last = -1i64;
    for k in order {
        let n2 = norm2(f.freq(k));
        if n2 != last {
            shells.push(((n2 as f64).sqrt(), Vec::new()));
            last = n2;
        }
        shells.last_mut().unwrap().1.push(k);
    }
    let h = grid.spacing();
    let n_t = grid.intervals() + 1;
    let start: Vec<Complex64> = shells.iter().map(|s| Complex64::cis(grid.t_min * s.0)).collect();
    let step: Vec<Complex64> = shells.iter().map(|s| Complex64::cis(h * s.0)).collect();
    let tables = AxisTables::new(f);

    (0..n_points)
        .into_par_iter()
        .map(|j| {
            let x = &points[j * d..(j + 1) * d];
            let exps: Vec<Vec<Complex64>> = tables
                .range
                .iter()
                .zip(x)
                .map(|(&(lo, hi), &xa)| {
                    (lo..=hi).map(|k| Complex64::cis(k as f64 * xa)).collect()
                })
                .collect();
            let mut b: Vec<Complex64> = shells
                .iter()
                .map(|(_, ks)| {
                    ks.iter()
                        .map(|&k| {
                            let mut term = f.coeffs()[k];
                            for (a, &v) in f.freq(k).iter().enumerate() {
                                term *= exps[a][(v - tables.range[a].0) as usize];
                            }
                            term
                        })
                        .sum()
                })
                .collect();
            for (bi, si) in b.iter_mut().zip(&start) {
                *bi *= si;
            }
            let mut best = (f64::NEG_INFINITY, grid.t_min);
            for n in 0..n_t {
                let v: Complex64 = b.iter().sum();
                let m = v.norm();
                if m > best.0 {
                    best = (m, grid.t_min + n as f64 * h);
                }
                for (bi, si) in b.iter_mut().zip(&step) {
                    *bi *= si;
                }
            }
            if f.is_empty() {
                (0.0, grid.t_min)
            } else {
                best
            }
        })
        .collect()
}
