//! Constructions showing that the maximal estimate fails below each necessary
//! regularity, as parameterised generators with predicted growth exponents.
//!
//! Each family builds, for a frequency scale `lambda`, a band-limited `f`, an
//! alpha-regular measure and a time per atom at which the field is large. The
//! ratio `|| e^{it sqrt(-Lap)} f (x, t(x)) ||_{L^q(mu)} / ||f||_2` is a lower bound
//! for the maximal ratio and grows like `lambda^sigma`; sweeps fit `sigma`.

use std::f64::consts::{PI, TAU};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exponents::{necessary_terms, Rational};
use crate::measures::{
    ball_union_side, fibonacci_points, lattice_centers, lq_norm, slice_dim, weak_lorentz_norm, DiscreteMeasure,
    MeasureBuilder, MeasureError,
};
use crate::spectra::{norm2, region_modes, BandFunction, FrequencyRegion, SpectraError, TimeGrid};
use crate::sphavg::{fit_linear, fit_power_law, ExponentFit, SphavgError};

/// Fitted exponents may undershoot the prediction by this much.
pub const SWEEP_TOLERANCE: f64 = 0.15;
/// Wider tolerance for the Knapp family at non-integer alpha.
pub const KNAPP_FRACTIONAL_TOLERANCE: f64 = 0.2;
/// Ball-focus evaluates the field on `|x| <= FOCUS_RADIUS / lambda`.
pub const FOCUS_RADIUS: f64 = 2.0;
/// Half-length `c` of the lit Knapp slabs.
pub const SLAB_C: f64 = 0.25;
/// Translate separations are this multiple of the nominal spacing, so the
/// translates are nearly orthogonal on the lattice.
pub const SEPARATION_FACTOR: f64 = TAU;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CounterexError {
    #[error("{family} needs {requirement}")]
    Domain { family: &'static str, requirement: String },
    #[error("unknown family '{0}'")]
    UnknownFamily(String),
    #[error("need at least {need} scales, got {got}")]
    TooFewScales { need: usize, got: usize },
    #[error("quadrature would need too many nodes (r = {r}, K = {k})")]
    NodeExplosion { r: f64, k: u32 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Fit(#[from] SphavgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    BallFocus,
    Knapp,
    LatticeKnapp,
    BallUnion,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::BallFocus, Family::Knapp, Family::LatticeKnapp, Family::BallUnion];

    pub fn name(self) -> &'static str {
        match self {
            Family::BallFocus => "ball-focus",
            Family::Knapp => "knapp",
            Family::LatticeKnapp => "lattice-knapp",
            Family::BallUnion => "ball-union",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CounterexError> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| CounterexError::UnknownFamily(name.to_string()))
    }

    /// Growth exponent of the ratio, exactly.
    pub fn predicted(self, d: i64, alpha: Rational, q: Rational) -> Rational {
        let dq = Rational::from_integer(d);
        let one = Rational::from_integer(1);
        match self {
            Family::BallFocus => dq / 2 - alpha / q,
            Family::Knapp if alpha <= one => (dq + 1) / 4,
            Family::Knapp => (dq + 1) / 4 - (alpha - 1) / (q * 2),
            Family::LatticeKnapp => (dq + 2 - alpha) / 4,
            Family::BallUnion => (dq - alpha) / 2,
        }
    }

    /// Position of this family's bound among `necessary_terms(d, alpha, q)`, when it is one of them.
    pub fn term_index(self, alpha: Rational) -> Option<usize> {
        let above_one = alpha > Rational::from_integer(1);
        match self {
            Family::BallFocus => Some(0),
            Family::Knapp => Some(1),
            Family::LatticeKnapp if above_one => Some(2),
            Family::BallUnion if above_one => Some(3),
            _ => None,
        }
    }

    /// The matching necessary term, if any.
    pub fn necessary_term(self, d: i64, alpha: Rational, q: Rational) -> Option<Rational> {
        self.term_index(alpha).map(|i| necessary_terms(d, alpha, q)[i])
    }

    pub fn tolerance(self, alpha: Rational) -> f64 {
        if self == Family::Knapp && !alpha.is_integer() {
            KNAPP_FRACTIONAL_TOLERANCE
        } else {
            SWEEP_TOLERANCE
        }
    }

    pub fn build(self, d: usize, alpha: f64, lambda: f64) -> Result<Instance, CounterexError> {
        match self {
            Family::BallFocus => build_ball_focus(d, alpha, lambda),
            Family::Knapp => build_knapp(d, alpha, lambda),
            Family::LatticeKnapp => build_lattice_knapp(d, alpha, lambda),
            Family::BallUnion => build_ball_union(d, alpha, lambda),
        }
    }
}

/// One member of a family at one scale.
#[derive(Debug, Clone)]
pub struct Instance {
    pub family: Family,
    pub dim: usize,
    pub alpha: f64,
    pub scale: f64,
    pub f: BandFunction,
    pub mu: DiscreteMeasure,
    /// Evaluation time of each atom, in `(0, 1)`.
    pub times: Vec<f64>,
}

impl Instance {
    /// `e^{it sqrt(-Lap)} f` at every atom, each at its own time.
    pub fn field(&self) -> Vec<Complex64> {
        let t0 = self.times[0];
        if self.times.iter().all(|&t| t == t0) {
            self.f.evaluate_many(self.mu.coords(), t0)
        } else {
            self.f.evaluate_direct(self.mu.coords(), Some(&self.times))
        }
    }

    /// `|| field ||_{L^q(mu)} / ||f||_2`.
    pub fn ratio(&self, q: f64) -> f64 {
        let values: Vec<f64> = self.field().iter().map(|z| z.norm()).collect();
        lq_norm(&values, &self.mu, q) / self.f.l2_norm()
    }
}

fn require(ok: bool, family: &'static str, requirement: &str) -> Result<(), CounterexError> {
    if ok {
        Ok(())
    } else {
        Err(CounterexError::Domain {
            family,
            requirement: requirement.to_string(),
        })
    }
}

/// `exp(1 - 1/(1 - u^2))` on `(-1, 1)`, the one-dimensional profile of the smooth bumps.
pub fn unit_bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// `f^ = 1` on `|xi| <= lambda`, evaluated at `t = 1/lambda` on the focal ball
/// `|x| <= 2/lambda` of `|x|^(alpha-d)`, discretised on the grid `h = min(1/(4 lambda), 1/64)`.
pub fn build_ball_focus(d: usize, alpha: f64, lambda: f64) -> Result<Instance, CounterexError> {
    require(d >= 2, "ball-focus", "d >= 2")?;
    require(lambda >= 8.0, "ball-focus", "lambda >= 8")?;
    require(alpha > 0.0 && alpha <= d as f64, "ball-focus", "0 < alpha <= d")?;
    let f = BandFunction::from_region(&FrequencyRegion::Ball { dim: d, radius: lambda }, |_| Complex64::new(1.0, 0.0))?;
    let h = (0.25 / lambda).min(1.0 / 64.0);
    let mu = MeasureBuilder::default().radial_power_within(d, alpha, h, FOCUS_RADIUS / lambda)?;
    let times = vec![1.0 / lambda; mu.len()];
    Ok(Instance {
        family: Family::BallFocus,
        dim: d,
        alpha,
        scale: lambda,
        f,
        mu,
        times,
    })
}

/// Grid time nearest `x1`-dependent focusing time `-x1`, kept inside `(0, 1)`.
fn knapp_time(x1: f64, step: f64) -> f64 {
    let t = ((-x1) / step).round() * step;
    t.clamp(step, 1.0 - step)
}

/// `f^ = 1` on the plate `lambda <= xi_1 <= 2 lambda, |xi'| <= sqrt(lambda)`; the
/// measure `|x_l|^(alpha-l)` on the `l = ceil(alpha)` slice. The wave packet
/// travels along `x_1 = -t`, so each atom is read at the grid time nearest `-x_1`.
pub fn build_knapp(d: usize, alpha: f64, lambda: f64) -> Result<Instance, CounterexError> {
    require(d == 2 || d == 3, "knapp", "d in {2, 3}")?;
    require(lambda >= 16.0, "knapp", "lambda >= 16")?;
    require(alpha > 0.0 && alpha <= d as f64, "knapp", "0 < alpha <= d")?;
    let f = BandFunction::from_region(&FrequencyRegion::Plate { dim: d, lambda }, |_| Complex64::new(1.0, 0.0))?;
    let h = if slice_dim(alpha) == 1 {
        (1.0 / lambda).min(1.0 / 64.0)
    } else {
        (0.25 / lambda.sqrt().ceil()).min(1.0 / 64.0)
    };
    let mu = MeasureBuilder::default().product_delta(d, alpha, h)?;
    let step = 1.0 / (16.0 * lambda);
    let times = (0..mu.len()).map(|j| knapp_time(mu.point(j)[0], step)).collect();
    Ok(Instance {
        family: Family::Knapp,
        dim: d,
        alpha,
        scale: lambda,
        f,
        mu,
        times,
    })
}

/// Smooth bump on the plate: a bump in `xi_1` over `[lambda, 2 lambda]` times one per transverse axis.
pub fn plate_bump(xi: &[i64], lambda: f64) -> f64 {
    let first = unit_bump((xi[0] as f64 - 1.5 * lambda) / (0.5 * lambda));
    xi[1..]
        .iter()
        .fold(first, |acc, &v| acc * unit_bump(v as f64 / lambda.sqrt()))
}

/// Translates per transverse axis: `lambda^((alpha-1)/(2(d-1)))` divided by the separation factor.
pub fn lattice_knapp_side(d: usize, alpha: f64, lambda: f64) -> usize {
    let nominal = lambda.powf((alpha - 1.0) / (2.0 * (d as f64 - 1.0)));
    ((nominal / SEPARATION_FACTOR).round() as usize).max(1)
}

/// Transverse translates `v_k` (flattened, `d-1` coordinates each).
pub fn lattice_knapp_translates(d: usize, alpha: f64, lambda: f64) -> Vec<f64> {
    let n = lattice_knapp_side(d, alpha, lambda);
    let c = lattice_centers(n);
    match d {
        2 => c,
        _ => c.iter().flat_map(|&a| c.iter().flat_map(move |&b| [a, b])).collect(),
    }
}

/// `f^ = N^{-1/2} phi_P(xi) sum_k exp(-i v_k . xi')`, lit on `N` slabs
/// `x_1 in (-c, 0), |x' - v_k| <= c lambda^{-1/2}`. Atoms sit on a cell grid
/// inside the slabs and carry density `lambda^((d-alpha)/2)`.
pub fn build_lattice_knapp(d: usize, alpha: f64, lambda: f64) -> Result<Instance, CounterexError> {
    require(d == 2 || d == 3, "lattice-knapp", "d in {2, 3}")?;
    require(alpha > 1.0 && alpha <= d as f64, "lattice-knapp", "1 < alpha <= d")?;
    require(lambda >= 16.0, "lattice-knapp", "lambda >= 16")?;
    let v = lattice_knapp_translates(d, alpha, lambda);
    let n_translates = v.len() / (d - 1);
    let scale = (n_translates as f64).sqrt();
    let freqs = region_modes(&FrequencyRegion::Plate { dim: d, lambda });
    let mut kept = Vec::with_capacity(freqs.len());
    let mut coeffs = Vec::with_capacity(freqs.len() / d);
    for xi in freqs.chunks(d) {
        let phi = plate_bump(xi, lambda);
        if phi == 0.0 {
            continue;
        }
        let sum: Complex64 = v
            .chunks(d - 1)
            .map(|vk| Complex64::cis(-vk.iter().zip(&xi[1..]).map(|(a, &b)| a * b as f64).sum::<f64>()))
            .sum();
        kept.extend_from_slice(xi);
        coeffs.push(sum * (phi / scale));
    }
    let f = BandFunction::from_parts(d, kept, coeffs)?;

    let s = SLAB_C / lambda.sqrt() / 2.0;
    let along = (SLAB_C / s).floor() as usize;
    let weight = lambda.powf((d as f64 - alpha) / 2.0) * s.powi(d as i32);
    let offsets: Vec<f64> = (-2..=2).map(|j| j as f64 * s).collect();
    let mut coords = Vec::new();
    for vk in v.chunks(d - 1) {
        for i in 0..along {
            let x1 = -(i as f64 + 0.5) * s;
            if d == 2 {
                for &o in &offsets {
                    coords.extend_from_slice(&[x1, vk[0] + o]);
                }
            } else {
                for &o in &offsets {
                    for &p in &offsets {
                        coords.extend_from_slice(&[x1, vk[0] + o, vk[1] + p]);
                    }
                }
            }
        }
    }
    let atoms = coords.len() / d;
    let mu = DiscreteMeasure::new(
        d,
        coords,
        vec![weight; atoms],
        format!("knapp-slabs(dim={d},alpha={alpha},lambda={lambda},translates={n_translates})"),
    )?;
    let step = 1.0 / (16.0 * lambda);
    let times = (0..mu.len()).map(|j| knapp_time(mu.point(j)[0], step)).collect();
    Ok(Instance {
        family: Family::LatticeKnapp,
        dim: d,
        alpha,
        scale: lambda,
        f,
        mu,
        times,
    })
}

/// `f^ = M^{-1/2} phi(|xi|/lambda) sum_k exp(-i w_k . xi)` over the ball-union centres
/// `w_k`, read at `t = 1/lambda` on the ball-union measure.
pub fn build_ball_union(d: usize, alpha: f64, lambda: f64) -> Result<Instance, CounterexError> {
    require(d == 2 || d == 3, "ball-union", "d in {2, 3}")?;
    require(alpha > 0.0 && alpha <= d as f64, "ball-union", "0 < alpha <= d")?;
    let mu = MeasureBuilder::default().ball_union(d, alpha, lambda)?;
    let n = ball_union_side(d, alpha, lambda);
    let centers = lattice_centers(n);
    let m = (mu.len() as f64).sqrt();
    let lo = lambda.floor() as i64;
    // The centre lattice is a product, so the sum over centres factors per axis.
    let axis_sum: Vec<Complex64> = (-lo..=lo)
        .map(|k| centers.iter().map(|&c| Complex64::cis(-c * k as f64)).sum())
        .collect();
    let f = BandFunction::from_region(&FrequencyRegion::Ball { dim: d, radius: lambda }, |xi| {
        let bump = unit_bump((norm2(xi) as f64).sqrt() / lambda);
        let prod: Complex64 = xi.iter().map(|&k| axis_sum[(k + lo) as usize]).product();
        prod * (bump / m)
    })?;
    // drop the boundary shell where the bump vanishes
    let f = {
        let (mut kept, mut coeffs) = (Vec::new(), Vec::new());
        for (xi, c) in f.modes() {
            if c != Complex64::new(0.0, 0.0) {
                kept.extend_from_slice(xi);
                coeffs.push(c);
            }
        }
        BandFunction::from_parts(d, kept, coeffs)?
    };
    let times = vec![1.0 / lambda; mu.len()];
    Ok(Instance {
        family: Family::BallUnion,
        dim: d,
        alpha,
        scale: lambda,
        f,
        mu,
        times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub family: Family,
    pub dim: usize,
    pub alpha: String,
    pub q: String,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub atoms: Vec<usize>,
    pub modes: Vec<usize>,
    pub predicted: f64,
    pub predicted_exact: String,
    pub fit: ExponentFit,
    pub tolerance: f64,
    pub pass: bool,
}

impl SweepReport {
    /// `family,d,alpha,q,scale,ratio` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,d,alpha,q,scale,ratio\n");
        for (s, r) in self.scales.iter().zip(&self.ratios) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.family.name(),
                self.dim,
                self.alpha,
                self.q,
                crate::exponents::format_sig(*s, 12),
                crate::exponents::format_sig(*r, 12)
            ));
        }
        out
    }
}

fn rational_string(x: Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

fn as_f64(x: Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Builds the family at every scale, measures the ratio and fits its growth.
pub fn run_sweep(
    family: Family,
    d: usize,
    alpha: Rational,
    q: Rational,
    scales: &[f64],
) -> Result<SweepReport, CounterexError> {
    if scales.len() < 5 {
        return Err(CounterexError::TooFewScales {
            need: 5,
            got: scales.len(),
        });
    }
    let a = as_f64(alpha);
    let qf = as_f64(q);
    require(qf >= 1.0, family.name(), "q >= 1")?;
    let rows: Vec<(f64, usize, usize)> = scales
        .par_iter()
        .map(|&lam| {
            let inst = family.build(d, a, lam)?;
            Ok((inst.ratio(qf), inst.mu.len(), inst.f.len()))
        })
        .collect::<Result<_, CounterexError>>()?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fit = fit_power_law(scales, &ratios)?;
    let predicted_exact = family.predicted(d as i64, alpha, q);
    let predicted = as_f64(predicted_exact);
    let tolerance = family.tolerance(alpha);
    Ok(SweepReport {
        family,
        dim: d,
        alpha: rational_string(alpha),
        q: rational_string(q),
        scales: scales.to_vec(),
        pass: fit.slope >= predicted - tolerance,
        ratios,
        atoms: rows.iter().map(|r| r.1).collect(),
        modes: rows.iter().map(|r| r.2).collect(),
        predicted,
        predicted_exact: rational_string(predicted_exact),
        fit,
        tolerance,
    })
}

/// Gauss-Legendre nodes per panel in the radial quadrature.
const PANEL_NODES: usize = 16;
/// Upper limit on quadrature panels per shell before giving up.
const MAX_PANELS: usize = 1 << 22;
/// Radial and angular resolution of the annulus measure.
pub const ANNULUS_RADII: usize = 48;
pub const ANNULUS_DIRECTIONS: usize = 16;

/// The radial profile `beta(s) = c exp(-1/(1-u^2))`, `u = (4s-5)/3`, supported in
/// `(1/2, 2)` and normalised by `int beta(s) s ds = 1`.
#[derive(Debug, Clone)]
pub struct ShellProfile {
    c: f64,
    rule: Vec<(f64, f64)>,
}

impl Default for ShellProfile {
    fn default() -> Self {
        Self::new()
    }
}

impl ShellProfile {
    pub fn new() -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(PANEL_NODES).expect("nonzero"))
            .as_node_weight_pairs()
            .to_vec();
        let mut p = ShellProfile { c: 1.0, rule };
        let m = p.integrate_real(0.5, 2.0, 64, |s| p.beta(s) * s);
        p.c = 1.0 / m;
        p
    }

    pub fn beta(&self, s: f64) -> f64 {
        let u = (4.0 * s - 5.0) / 3.0;
        if u.abs() >= 1.0 {
            0.0
        } else {
            self.c * (-1.0 / (1.0 - u * u)).exp()
        }
    }

    /// `beta_N(rho) = N^{-2} beta(rho / N)`.
    pub fn beta_n(&self, n: f64, rho: f64) -> f64 {
        self.beta(rho / n) / (n * n)
    }

    fn integrate_real(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let w = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * w;
            for &(x, wt) in &self.rule {
                total += wt * 0.5 * w * f(lo + 0.5 * w * (x + 1.0));
            }
        }
        total
    }

    /// Composite Gauss-Legendre nodes and weights on the support `(N/2, 2N)` of the shell `N`.
    fn shell_nodes(&self, n: f64, panels: usize) -> Vec<(f64, f64)> {
        let (a, b) = (0.5 * n, 2.0 * n);
        let w = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.rule.len());
        for p in 0..panels {
            let lo = a + p as f64 * w;
            for &(x, wt) in &self.rule {
                out.push((lo + 0.5 * w * (x + 1.0), wt * 0.5 * w));
            }
        }
        out
    }

    fn panels_for(n: f64, omega: f64) -> usize {
        // at most half an oscillation per panel
        ((1.5 * n * omega / PI).ceil() as usize + 4).min(MAX_PANELS)
    }

    /// `int sin(rho r)/(rho r) exp(i t rho) beta_N(rho) rho^2 d rho`, the radial
    /// three-dimensional field of the shell `N` at `|x| = r`, time `t`.
    /// Panels double until two successive estimates agree to `1e-12`.
    pub fn shell_field(&self, n: f64, r: f64, t: f64) -> Complex64 {
        let mut panels = Self::panels_for(n, r + t.abs());
        let mut prev = self.shell_field_with(n, r, t, panels);
        loop {
            panels *= 2;
            let next = self.shell_field_with(n, r, t, panels);
            if (next - prev).norm() <= 1e-12 * next.norm().max(1e-3) || panels >= MAX_PANELS {
                return next;
            }
            prev = next;
        }
    }

    fn shell_field_with(&self, n: f64, r: f64, t: f64, panels: usize) -> Complex64 {
        self.shell_nodes(n, panels)
            .iter()
            .map(|&(rho, w)| Complex64::cis(t * rho) * (w * sinc(rho * r) * self.beta_n(n, rho) * rho * rho))
            .sum()
    }

    /// Large-`N` value of the shell field at `t = |x| = r`: `i / (2r)`.
    pub fn asymptotic(r: f64) -> Complex64 {
        Complex64::new(0.0, 0.5 / r)
    }

    /// `int |sum_k beta_{N_k}(rho)|^2 (1 + rho^2)^{1/2} rho^2 d rho`.
    pub fn h_half_norm_sq(&self, shells: &[f64]) -> f64 {
        let (lo, hi) = shells
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &n| (l.min(0.5 * n), h.max(2.0 * n)));
        let mut total = 0.0;
        let mut a = lo;
        while a < hi {
            let b = (2.0 * a).min(hi);
            total += self.integrate_real(a, b, 32, |rho| {
                let v: f64 = shells.iter().map(|&n| self.beta_n(n, rho)).sum();
                v * v * (1.0 + rho * rho).sqrt() * rho * rho
            });
            a = b;
        }
        total
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Shells `N = 2^k` with `1/r <= 2^k <= 2^K`.
pub fn log_divergence_shells(r: f64, big_k: u32) -> Vec<f64> {
    let k0 = (1.0 / r).log2().ceil().max(0.0) as u32;
    (k0..=big_k).map(|k| 2f64.powi(k as i32)).collect()
}

/// Uniform measure on `r <= |x| <= 1` in three dimensions: radial midpoints times
/// Fibonacci directions, weights proportional to `rho^2`, total mass one.
pub fn annulus_measure(r: f64) -> Result<(DiscreteMeasure, Vec<f64>), CounterexError> {
    let radii: Vec<f64> = (0..ANNULUS_RADII)
        .map(|i| r + (i as f64 + 0.5) * (1.0 - r) / ANNULUS_RADII as f64)
        .collect();
    let dirs = fibonacci_points(ANNULUS_DIRECTIONS);
    let total: f64 = radii.iter().map(|x| x * x).sum::<f64>() * ANNULUS_DIRECTIONS as f64;
    let mut coords = Vec::with_capacity(radii.len() * dirs.len());
    let mut weights = Vec::new();
    for &rho in &radii {
        for u in dirs.chunks(3) {
            coords.extend(u.iter().map(|c| c * rho));
            weights.push(rho * rho / total);
        }
    }
    let mu = DiscreteMeasure::new(3, coords, weights, format!("annulus(r={r})"))?;
    Ok((mu, radii))
}

#[derive(Debug, Clone)]
pub struct LogDivergenceInstance {
    pub r: f64,
    pub big_k: u32,
    pub shells: Vec<f64>,
    pub mu: DiscreteMeasure,
    /// Radius of each radial node; atom `j` sits at radius `radii[j / ANNULUS_DIRECTIONS]`.
    pub radii: Vec<f64>,
}

/// `f_L` with `f^_L = sum_{1/r <= 2^k <= L} beta_{2^k}`, `L = 2^K`, in three dimensions.
pub fn build_log_divergence(d: usize, r: f64, big_k: u32) -> Result<LogDivergenceInstance, CounterexError> {
    require(d == 3, "log-divergence", "d = 3")?;
    require(r > 0.0 && r < 1.0, "log-divergence", "0 < r < 1")?;
    if r < 1.0 / 1024.0 || big_k > 20 {
        return Err(CounterexError::NodeExplosion { r, k: big_k });
    }
    let shells = log_divergence_shells(r, big_k);
    let (mu, radii) = annulus_measure(r)?;
    Ok(LogDivergenceInstance {
        r,
        big_k,
        shells,
        mu,
        radii,
    })
}

impl LogDivergenceInstance {
    /// Field at every radial node with `t = |x|`.
    pub fn distinguished_field(&self, profile: &ShellProfile) -> Vec<Complex64> {
        self.radii
            .par_iter()
            .map(|&rho| self.shells.iter().map(|&n| profile.shell_field(n, rho, rho)).sum())
            .collect()
    }

    /// `max_t |field|` over the grid at every radial node.
    pub fn grid_sup(&self, profile: &ShellProfile, grid: &TimeGrid) -> Vec<f64> {
        let times = grid.nodes();
        let dt = grid.spacing();
        self.radii
            .par_iter()
            .map(|&rho| {
                let omega = rho + grid.t_max.abs().max(grid.t_min.abs());
                // (rho, amplitude, current phase, phase step)
                let mut nodes: Vec<(f64, f64, Complex64, Complex64)> = Vec::new();
                for &n in &self.shells {
                    let panels = 2 * ShellProfile::panels_for(n, omega);
                    for (x, w) in profile.shell_nodes(n, panels) {
                        let amp = w * sinc(x * rho) * profile.beta_n(n, x) * x * x;
                        nodes.push((x, amp, Complex64::cis(times[0] * x), Complex64::cis(dt * x)));
                    }
                }
                let mut best = 0.0f64;
                for i in 0..times.len() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for node in nodes.iter_mut() {
                        acc += node.2 * node.1;
                        node.2 *= node.3;
                    }
                    // re-anchor the phase recurrence every 256 steps
                    if i % 256 == 255 && i + 1 < times.len() {
                        for node in nodes.iter_mut() {
                            node.2 = Complex64::cis(times[i + 1] * node.0);
                        }
                    }
                    best = best.max(acc.norm());
                }
                best
            })
            .collect()
    }

    fn atom_values(&self, per_radius: &[f64]) -> Vec<f64> {
        per_radius
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(ANNULUS_DIRECTIONS))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogDivergenceRow {
    pub big_k: u32,
    pub shells: usize,
    /// Weak `L^{2,inf}(mu)` norm of the field at `t = |x|`, over `||f_L||_{H^{1/2}}`.
    pub g: f64,
    pub g_sq_over_k: f64,
    pub h_half_sq: f64,
    pub h_half_sq_over_k: f64,
    /// Weak norm at `t = |x|` over the weak norm of the grid supremum (`K <= 8` only).
    pub distinguished_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogDivergenceReport {
    pub r: f64,
    pub rows: Vec<LogDivergenceRow>,
    /// Linear fit of `G(K)^2` against `K`.
    pub fit: ExponentFit,
    /// `max / min` of `G(K)^2 / K`.
    pub spread: f64,
    pub pass: bool,
}

/// Largest `K` for which the distinguished time is compared with the full grid.
pub const GRID_COMPARE_MAX_K: u32 = 8;

/// Growth of the weak-type ratio `G(K)` with `K = log2 L`.
pub fn run_log_divergence(r: f64, ks: &[u32]) -> Result<LogDivergenceReport, CounterexError> {
    if ks.len() < 5 {
        return Err(CounterexError::TooFewScales { need: 5, got: ks.len() });
    }
    let profile = ShellProfile::new();
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let inst = build_log_divergence(3, r, k)?;
        let field = inst.distinguished_field(&profile);
        let mags: Vec<f64> = field.iter().map(|z| z.norm()).collect();
        let weak = weak_lorentz_norm(&inst.atom_values(&mags), &inst.mu, 2.0);
        let h = profile.h_half_norm_sq(&inst.shells);
        let g = weak / h.sqrt();
        let share = if k <= GRID_COMPARE_MAX_K {
            let grid = TimeGrid::new(0.0, 1.0, 1.0 / (16.0 * 2f64.powi(k as i32)))?;
            let sup = inst.grid_sup(&profile, &grid);
            let sup_weak = weak_lorentz_norm(&inst.atom_values(&sup), &inst.mu, 2.0);
            Some(weak / sup_weak)
        } else {
            None
        };
        rows.push(LogDivergenceRow {
            big_k: k,
            shells: inst.shells.len(),
            g,
            g_sq_over_k: g * g / k as f64,
            h_half_sq: h,
            h_half_sq_over_k: h / k as f64,
            distinguished_share: share,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.big_k as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.g * r.g).collect();
    let fit = fit_linear(&xs, &ys)?;
    let ratios: Vec<f64> = rows.iter().map(|r| r.g_sq_over_k).collect();
    let spread = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LogDivergenceReport {
        r,
        pass: fit.r2 >= 0.9 && fit.slope > 0.0,
        rows,
        fit,
        spread,
    })
}
