//! Spherical averages of `|mu^(lambda theta)|^2` and power-law fits.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::measures::{circle_points, fibonacci_points, DiscreteMeasure};

/// Sub-samples per band in band-averaged sweeps.
pub const BAND_SAMPLES: usize = 16;
/// Relative agreement required between successive node doublings.
pub const NODE_TOLERANCE: f64 = 0.01;
/// Maximum number of node doublings before a value is flagged.
pub const MAX_DOUBLINGS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphavgError {
    #[error("sphere quadrature is only available for d = 2 and d = 3 (got {0})")]
    UnsupportedDim(usize),
    #[error("need at least {need} nodes, got {got}")]
    TooFewNodes { need: usize, got: usize },
    #[error("a fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("value {value} at scale {scale} is not positive; band-average before fitting")]
    NonPositive { scale: f64, value: f64 },
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

/// `sum_j w_j exp(-i xi . x_j)`.
pub fn measure_ft(mu: &DiscreteMeasure, xi: &[f64]) -> Complex64 {
    assert_eq!(xi.len(), mu.dim(), "frequency dimension");
    (0..mu.len())
        .map(|j| {
            let dot: f64 = mu.point(j).iter().zip(xi).map(|(a, b)| a * b).sum();
            Complex64::cis(-dot) * mu.weights()[j]
        })
        .sum()
}

/// Directions on the unit sphere with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereNodes {
    pub dim: usize,
    pub dirs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereNodes {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dir(&self, k: usize) -> &[f64] {
        &self.dirs[k * self.dim..(k + 1) * self.dim]
    }
}

/// Equispaced angles for `d = 2`, a Fibonacci spiral for `d = 3`; weights `1/M`.
pub fn sphere_nodes(d: usize, m: usize) -> Result<SphereNodes, SphavgError> {
    if m < 8 {
        return Err(SphavgError::TooFewNodes { need: 8, got: m });
    }
    let dirs = match d {
        2 => circle_points(m),
        3 => fibonacci_points(m),
        _ => return Err(SphavgError::UnsupportedDim(d)),
    };
    Ok(SphereNodes {
        dim: d,
        dirs,
        weights: vec![1.0 / m as f64; m],
    })
}

/// For each `lambda_s = (offset/2 + s) * step`, the weighted mean over
/// directions of `|mu^(lambda_s theta)|^2`.
///
/// All phases of one atom are powers of `exp(-i p step/2)`, so a whole band
/// costs a single `cis` per atom and direction.
fn progression_average(
    mu: &DiscreteMeasure,
    nodes: &SphereNodes,
    step: f64,
    offset: u32,
    count: usize,
) -> Vec<f64> {
    let d = mu.dim();
    let per_dir: Vec<Vec<f64>> = (0..nodes.len())
        .into_par_iter()
        .map(|k| {
            let theta = nodes.dir(k);
            let mut acc = vec![Complex64::new(0.0, 0.0); count];
            for j in 0..mu.len() {
                let x = &mu.coords()[j * d..(j + 1) * d];
                let p: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
                let half = Complex64::cis(-0.5 * step * p);
                let rot = half * half;
                let mut e = half.powu(offset) * mu.weights()[j];
                for a in acc.iter_mut() {
                    *a += e;
                    e *= rot;
                }
            }
            acc.iter().map(|a| a.norm_sqr() * nodes.weights[k]).collect()
        })
        .collect();
    let mut out = vec![0.0; count];
    for v in &per_dir {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    out
}

/// A value computed with node doubling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AverageValue {
    pub value: f64,
    pub nodes: usize,
    pub converged: bool,
}

fn with_doubling(
    dim: usize,
    m0: usize,
    mut eval: impl FnMut(&SphereNodes) -> f64,
) -> Result<AverageValue, SphavgError> {
    let mut m = m0;
    let mut prev = eval(&sphere_nodes(dim, m)?);
    for _ in 0..MAX_DOUBLINGS {
        m *= 2;
        let next = eval(&sphere_nodes(dim, m)?);
        if (next - prev).abs() <= NODE_TOLERANCE * next.abs().max(f64::MIN_POSITIVE) {
            return Ok(AverageValue {
                value: next,
                nodes: m,
                converged: true,
            });
        }
        prev = next;
    }
    Ok(AverageValue {
        value: prev,
        nodes: m,
        converged: false,
    })
}

/// `A(lambda) = sum_k w_k |mu^(lambda theta_k)|^2`, starting from `m` nodes and
/// doubling until successive values agree within 1%.
pub fn spherical_average(mu: &DiscreteMeasure, lambda: f64, m: usize) -> Result<AverageValue, SphavgError> {
    with_doubling(mu.dim(), m, |nodes| progression_average(mu, nodes, lambda, 2, 1)[0])
}

/// Mean of `A` over `BAND_SAMPLES` points spread evenly across `[lambda, 2 lambda]`.
pub fn band_average(mu: &DiscreteMeasure, lambda: f64, m: usize) -> Result<AverageValue, SphavgError> {
    let step = lambda / BAND_SAMPLES as f64;
    // first sample at lambda + step/2
    let offset = 2 * BAND_SAMPLES as u32 + 1;
    with_doubling(mu.dim(), m, |nodes| {
        let v = progression_average(mu, nodes, step, offset, BAND_SAMPLES);
        v.iter().sum::<f64>() / BAND_SAMPLES as f64
    })
}

/// Radius of the smallest origin-centred ball containing the atoms.
pub fn support_radius(mu: &DiscreteMeasure) -> f64 {
    (0..mu.len())
        .map(|j| mu.point(j).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}

/// Starting node count: enough directions to resolve angular oscillation in the
/// plane; a fixed 16 on the sphere, where doubling does the certifying.
pub fn initial_nodes(mu: &DiscreteMeasure, lambda_top: f64) -> usize {
    match mu.dim() {
        2 => ((2.0 * lambda_top * support_radius(mu)).ceil() as usize)
            .max(8)
            .next_power_of_two(),
        _ => 16,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub band_averaged: bool,
    pub label: String,
    pub nodes: Vec<usize>,
    pub converged: Vec<bool>,
}

/// Geometric scales `lambda_min * 2^(k/p)` up to `lambda_max`.
pub fn geometric_scales(lambda_min: f64, lambda_max: f64, per_octave: usize) -> Vec<f64> {
    let steps = ((lambda_max / lambda_min).log2() * per_octave as f64 + 1e-9).floor() as usize;
    (0..=steps)
        .map(|k| lambda_min * 2f64.powf(k as f64 / per_octave as f64))
        .collect()
}

pub fn decay_sweep(
    mu: &DiscreteMeasure,
    lambda_min: f64,
    lambda_max: f64,
    per_octave: usize,
    band: bool,
) -> Result<DecayCurve, SphavgError> {
    if !(lambda_min > 0.0) || lambda_max < 4.0 * lambda_min || per_octave < 4 {
        return Err(SphavgError::InvalidSweep(format!(
            "need lambda_max >= 4 lambda_min > 0 and at least 4 points per octave \
             (got [{lambda_min}, {lambda_max}], {per_octave})"
        )));
    }
    if !matches!(mu.dim(), 2 | 3) {
        return Err(SphavgError::UnsupportedDim(mu.dim()));
    }
    let lambdas = geometric_scales(lambda_min, lambda_max, per_octave);
    let results = lambdas
        .iter()
        .map(|&lam| {
            let top = if band { 2.0 * lam } else { lam };
            let m = initial_nodes(mu, top);
            if band {
                band_average(mu, lam, m)
            } else {
                spherical_average(mu, lam, m)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DecayCurve {
        values: results.iter().map(|r| r.value).collect(),
        nodes: results.iter().map(|r| r.nodes).collect(),
        converged: results.iter().map(|r| r.converged).collect(),
        lambdas,
        band_averaged: band,
        label: mu.label().to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Ordinary least squares `y = slope x + intercept`.
///
/// A series with no spread in `y` reports `r2 = 1` and zero standard error.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<ExponentFit, SphavgError> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let n = xs.len();
    if n < 4 {
        return Err(SphavgError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - slope * x - intercept;
            e * e
        })
        .sum();
    let tiny = 1e-24 * (1.0 + my * my) * nf;
    let (r2, stderr) = if syy <= tiny {
        (1.0, 0.0)
    } else {
        (
            (1.0 - ss_res / syy).clamp(0.0, 1.0),
            (ss_res / (nf - 2.0) / sxx).sqrt(),
        )
    };
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ExponentFit {
        slope,
        intercept,
        stderr,
        r2,
        window: (lo, hi),
        points: n,
    })
}

/// Log-log fit of `values` against `scales`; the window is reported in scale units.
pub fn fit_power_law(scales: &[f64], values: &[f64]) -> Result<ExponentFit, SphavgError> {
    if let Some((s, v)) = scales.iter().zip(values).find(|(_, v)| !(**v > 0.0)) {
        return Err(SphavgError::NonPositive { scale: *s, value: *v });
    }
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mut fit = fit_linear(&xs, &ys)?;
    fit.window = (
        scales.iter().copied().fold(f64::INFINITY, f64::min),
        scales.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(fit)
}

pub fn fit_exponent(curve: &DecayCurve) -> Result<ExponentFit, SphavgError> {
    fit_power_law(&curve.lambdas, &curve.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{cantor_dust, sphere_surface_measure};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn measure_ft_examples() {
        let pt = DiscreteMeasure::point_mass(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(measure_ft(&pt, &[3.0, -7.0]), Complex64::new(1.0, 0.0));
        let sph = sphere_surface_measure(3, 1.0, 2000).unwrap();
        assert!(measure_ft(&sph, &[0.0, 0.0, PI]).norm() < 2e-3);
        let two = DiscreteMeasure::new(1, vec![-0.5, 0.5], vec![0.5, 0.5], "two").unwrap();
        for lam in [0.3, 2.0, 9.5] {
            let v = measure_ft(&two, &[lam]);
            assert!((v.re - (lam / 2.0).cos()).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_node_examples() {
        let n = sphere_nodes(2, 8).unwrap();
        for k in 0..8 {
            let th = 2.0 * PI * k as f64 / 8.0;
            assert!((n.dir(k)[0] - th.cos()).abs() < 1e-15);
            assert_eq!(n.weights[k], 0.125);
        }
        let sx: f64 = (0..8).map(|k| n.dir(k)[0] * n.weights[k]).sum();
        let sy: f64 = (0..8).map(|k| n.dir(k)[1] * n.weights[k]).sum();
        assert!(sx.abs() < 1e-15 && sy.abs() < 1e-15);
        let n = sphere_nodes(3, 2000).unwrap();
        let zz: f64 = (0..n.len()).map(|k| n.dir(k)[2].powi(2) * n.weights[k]).sum();
        assert!((zz - 1.0 / 3.0).abs() < 1e-3);
        assert!(sphere_nodes(3, 4).is_err());
        assert!(sphere_nodes(4, 16).is_err());
    }

    #[test]
    fn spherical_average_examples() {
        let pt = DiscreteMeasure::point_mass(&[0.0, 0.0, 0.0], 2.0).unwrap();
        let a = spherical_average(&pt, 17.0, 16).unwrap();
        assert!((a.value - 4.0).abs() < 1e-12 && a.converged);
        let sph = sphere_surface_measure(3, 1.0, 20000).unwrap();
        let a = spherical_average(&sph, 10.0, 32).unwrap();
        assert!((a.value - 0.002960).abs() < 2e-5, "{}", a.value);
        let exact = 10f64.sin().powi(2) / 100.0;
        assert!((a.value - exact).abs() < 0.01 * exact);
    }

    #[test]
    fn doubling_contract_for_symmetric_measure() {
        let dust = cantor_dust(2, 0.25, 4, 2).unwrap();
        let nodes = initial_nodes(&dust, 40.0);
        let a = spherical_average(&dust, 40.0, nodes).unwrap();
        assert!(a.converged);
        let direct = |m: usize| {
            let q = sphere_nodes(2, m).unwrap();
            (0..m)
                .map(|k| {
                    let th: Vec<f64> = q.dir(k).iter().map(|v| v * 40.0).collect();
                    measure_ft(&dust, &th).norm_sqr() * q.weights[k]
                })
                .sum::<f64>()
        };
        let (x, y) = (direct(a.nodes / 2), direct(a.nodes));
        assert!((x - y).abs() <= 0.01 * y);
        assert!((a.value - y).abs() < 1e-12 * y.max(1e-300));
    }

    #[test]
    fn point_mass_sweep_is_flat() {
        let pt = DiscreteMeasure::point_mass(&[0.0, 0.0], 1.0).unwrap();
        let c = decay_sweep(&pt, 4.0, 64.0, 4, true).unwrap();
        assert!(c.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let fit = fit_exponent(&c).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert!(decay_sweep(&pt, 4.0, 8.0, 4, true).is_err());
        assert!(decay_sweep(&pt, 4.0, 64.0, 2, true).is_err());
    }

    #[test]
    fn band_values_stable_under_refinement() {
        let dust = cantor_dust(2, 0.25, 4, 2).unwrap();
        let coarse = decay_sweep(&dust, 8.0, 32.0, 4, true).unwrap();
        let fine = decay_sweep(&dust, 8.0, 32.0, 8, true).unwrap();
        for (k, v) in coarse.values.iter().enumerate() {
            let w = fine.values[2 * k];
            assert!((v - w).abs() <= 0.05 * w, "{v} vs {w}");
        }
    }

    #[test]
    fn fit_examples() {
        let lams: Vec<f64> = (0..8).map(|k| 4.0 * 2f64.powi(k)).collect();
        let vals: Vec<f64> = lams.iter().map(|l| l.powf(-1.5)).collect();
        let f = fit_power_law(&lams, &vals).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-10 && (f.r2 - 1.0).abs() < 1e-10);
        assert_eq!(f.window, (4.0, 512.0));

        let flat = fit_power_law(&lams, &vec![3.0; 8]).unwrap();
        assert_eq!((flat.slope, flat.r2, flat.stderr), (0.0, 1.0, 0.0));

        let lams: Vec<f64> = (0..40).map(|k| 2f64.powf(2.0 + k as f64 / 4.0)).collect();
        let vals: Vec<f64> = lams.iter().map(|l| (1.0 + 0.1 * l.ln().sin()) / l).collect();
        assert!((fit_power_law(&lams, &vals).unwrap().slope + 1.0).abs() < 0.06);

        assert!(matches!(fit_power_law(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), Err(SphavgError::TooFewPoints(3))));
        assert!(matches!(
            fit_power_law(&[1.0, 2.0, 3.0, 4.0], &[1.0, 0.0, 1.0, 1.0]),
            Err(SphavgError::NonPositive { .. })
        ));
    }

    fn arb_measure(dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
        prop::collection::vec((prop::collection::vec(-0.6f64..0.6, dim), 0.0f64..1.0), 1..30).prop_map(
            move |atoms| {
                let coords = atoms.iter().flat_map(|a| a.0.clone()).collect();
                let weights = atoms.iter().map(|a| a.1).collect();
                DiscreteMeasure::new(dim, coords, weights, "random").unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn ft_bounds_and_symmetry(mu in arb_measure(2), xi in prop::array::uniform2(-50.0f64..50.0)) {
            let m = mu.total_mass();
            let v = measure_ft(&mu, &xi);
            prop_assert!(v.norm() <= m * (1.0 + 1e-12));
            let w = measure_ft(&mu, &[-xi[0], -xi[1]]);
            prop_assert!((w - v.conj()).norm() <= 1e-12 * m.max(1.0));
            prop_assert!((measure_ft(&mu, &[0.0, 0.0]).re - m).abs() <= 1e-12 * m.max(1.0));
        }

        #[test]
        fn average_bounded_by_mass_squared(mu in arb_measure(3), lam in 0.0f64..40.0) {
            let a = spherical_average(&mu, lam, 16).unwrap();
            let m = mu.total_mass();
            prop_assert!(a.value >= 0.0 && a.value <= m * m * (1.0 + 1e-12));
            if lam == 0.0 {
                prop_assert!((a.value - m * m).abs() <= 1e-12 * m.max(1.0));
            }
        }

        #[test]
        fn power_law_fit_is_exact(beta in -3.0f64..3.0, c in 0.1f64..10.0) {
            let lams: Vec<f64> = (0..10).map(|k| 2f64.powf(1.0 + k as f64 / 2.0)).collect();
            let vals: Vec<f64> = lams.iter().map(|l| c * l.powf(beta)).collect();
            let f = fit_power_law(&lams, &vals).unwrap();
            prop_assert!((f.slope - beta).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&f.r2) && f.stderr >= 0.0);
        }
    }
}
