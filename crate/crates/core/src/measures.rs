//! Discrete measures: weighted atoms in the unit ball.
//!
//! Continuous densities are discretised with centre-point cell weights. The
//! regularity estimate is a probe-ball lower bound for the best constant in
//! `mu(B(x, rho)) <= C rho^alpha`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ATOM_CAP: usize = 2_000_000;

/// Above this many atoms, regularity probes a strided subset of atoms as centres.
pub const MAX_PROBE_CENTERS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("weight {0} at atom {1} is negative or not finite")]
    InvalidWeight(f64, usize),
    #[error("coordinate array of length {got} does not hold whole {dim}-dimensional points")]
    DimensionMismatch { dim: usize, got: usize },
    #[error("{requested} atoms exceed the cap of {cap}")]
    TooManyAtoms { requested: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("selector has {selector} values but the measure has {atoms} atoms")]
    Misaligned { selector: usize, atoms: usize },
    #[error("restriction set has zero mass")]
    EmptyRestriction,
    #[error("dimension {0} is not supported here")]
    UnsupportedDim(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    label: String,
}

impl DiscreteMeasure {
    pub fn new(
        dim: usize,
        coords: Vec<f64>,
        weights: Vec<f64>,
        label: impl Into<String>,
    ) -> Result<Self, MeasureError> {
        if dim == 0 || coords.len() != dim * weights.len() {
            return Err(MeasureError::DimensionMismatch {
                dim,
                got: coords.len(),
            });
        }
        if let Some((j, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(MeasureError::InvalidWeight(w, j));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(MeasureError::InvalidParameter("non-finite coordinate".into()));
        }
        Ok(DiscreteMeasure {
            dim,
            coords,
            weights,
            label: label.into(),
        })
    }

    /// Unit mass at `x`.
    pub fn point_mass(x: &[f64], weight: f64) -> Result<Self, MeasureError> {
        Self::new(x.len(), x.to_vec(), vec![weight], "point")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Mass of the closed ball `B(center, r)`.
    pub fn ball_mass(&self, center: &[f64], r: f64) -> f64 {
        let r2 = r * r;
        (0..self.len())
            .filter(|&j| dist2(self.point(j), center) <= r2)
            .map(|j| self.weights[j])
            .sum()
    }

    pub fn in_unit_ball(&self) -> bool {
        (0..self.len()).all(|j| dist2(self.point(j), &vec![0.0; self.dim]) <= 1.0 + 1e-12)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn scale_weights(&self, c: f64) -> Self {
        DiscreteMeasure {
            weights: self.weights.iter().map(|w| w * c).collect(),
            ..self.clone()
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Constructors sharing an atom-count cap.
#[derive(Debug, Clone, Copy)]
pub struct MeasureBuilder {
    pub cap: usize,
}

impl Default for MeasureBuilder {
    fn default() -> Self {
        MeasureBuilder {
            cap: DEFAULT_ATOM_CAP,
        }
    }
}

impl MeasureBuilder {
    pub fn with_cap(cap: usize) -> Self {
        MeasureBuilder { cap }
    }

    fn check(&self, n: f64) -> Result<(), MeasureError> {
        if n > self.cap as f64 {
            Err(MeasureError::TooManyAtoms {
                requested: n.min(usize::MAX as f64) as usize,
                cap: self.cap,
            })
        } else {
            Ok(())
        }
    }

    /// Product of `dim` one-dimensional Cantor sets: each cell keeps `branches`
    /// children of relative length `r`, starting from `[-1/2, 1/2]`.
    pub fn cantor_dust(
        &self,
        dim: usize,
        r: f64,
        depth: u32,
        branches: usize,
    ) -> Result<DiscreteMeasure, MeasureError> {
        if dim == 0 || depth == 0 || branches < 2 || !(r > 0.0) || branches as f64 * r > 1.0 + 1e-12 {
            return Err(MeasureError::InvalidParameter(format!(
                "cantor dust needs dim >= 1, depth >= 1, branches >= 2, 0 < branches*r <= 1 \
                 (got dim={dim}, depth={depth}, branches={branches}, r={r})"
            )));
        }
        let per_axis = (branches as f64).powi(depth as i32);
        self.check(per_axis.powi(dim as i32))?;

        let mut starts = vec![-0.5f64];
        let mut len = 1.0f64;
        for _ in 0..depth {
            let child = r * len;
            let gap = (len - child) / (branches - 1) as f64;
            starts = starts
                .iter()
                .flat_map(|&a| (0..branches).map(move |k| a + k as f64 * gap))
                .collect();
            len = child;
        }
        let centers: Vec<f64> = starts.iter().map(|a| a + len / 2.0).collect();
        let n = centers.len().pow(dim as u32);
        let mut coords = Vec::with_capacity(n * dim);
        for idx in 0..n {
            let mut rest = idx;
            let mut p = vec![0.0; dim];
            for a in (0..dim).rev() {
                p[a] = centers[rest % centers.len()];
                rest /= centers.len();
            }
            coords.extend(p);
        }
        let label = format!(
            "cantor(dim={dim},r={r},depth={depth},branches={branches},alpha={:.6})",
            cantor_dimension(dim, r, branches)
        );
        DiscreteMeasure::new(dim, coords, vec![1.0 / n as f64; n], label)
    }

    /// Centre-point discretisation of `|x|^(alpha-d)` on `B(0, 1/2)` over the
    /// `h`-grid through the origin. The origin cell uses `h/2` for `|x|`.
    pub fn radial_power(&self, dim: usize, alpha: f64, h: f64) -> Result<DiscreteMeasure, MeasureError> {
        if dim == 0 || !(alpha > 0.0) || alpha > dim as f64 || !(h > 0.0) || h > 0.125 {
            return Err(MeasureError::InvalidParameter(format!(
                "radial power needs 0 < alpha <= d and 0 < h <= 1/8 (got alpha={alpha}, h={h})"
            )));
        }
        self.radial_power_within(dim, alpha, h, 0.5)
    }

    /// The atoms of `radial_power(dim, alpha, h)` with `|x| <= radius`: a sub-measure,
    /// so it inherits the regularity constant.
    pub fn radial_power_within(
        &self,
        dim: usize,
        alpha: f64,
        h: f64,
        radius: f64,
    ) -> Result<DiscreteMeasure, MeasureError> {
        if dim == 0 || !(alpha > 0.0) || alpha > dim as f64 || !(h > 0.0) || h > 0.125 {
            return Err(MeasureError::InvalidParameter(format!(
                "radial power needs 0 < alpha <= d and 0 < h <= 1/8 (got alpha={alpha}, h={h})"
            )));
        }
        if !(radius > 0.0 && radius <= 0.5) {
            return Err(MeasureError::InvalidParameter(format!("radius {radius} outside (0, 1/2]")));
        }
        let (coords, norms) = self.grid_in_ball(dim, dim, h, radius)?;
        let weights = norms
            .iter()
            .map(|&r| h.powi(dim as i32) * r.max(h / 2.0).powf(alpha - dim as f64))
            .collect();
        let label = if radius == 0.5 {
            format!("radial-power(dim={dim},alpha={alpha},h={h})")
        } else {
            format!("radial-power(dim={dim},alpha={alpha},h={h},radius={radius})")
        };
        DiscreteMeasure::new(dim, coords, weights, label)
    }

    /// `|x_l|^(alpha-l)` on the `l`-dimensional slice `x_{l+1} = ... = x_d = 0`
    /// inside `B(0, 1/2)`, with `l = ceil(alpha)`.
    pub fn product_delta(&self, dim: usize, alpha: f64, h: f64) -> Result<DiscreteMeasure, MeasureError> {
        if dim == 0 || !(alpha > 0.0) || alpha > dim as f64 || !(h > 0.0) || h > 0.125 {
            return Err(MeasureError::InvalidParameter(format!(
                "product delta needs 0 < alpha <= d and 0 < h <= 1/8 (got alpha={alpha}, h={h})"
            )));
        }
        let l = slice_dim(alpha);
        let (coords, _) = self.grid_in_ball(dim, l, h, 0.5)?;
        let weights = coords
            .chunks(dim)
            .map(|x| h.powi(l as i32) * x[l - 1].abs().max(h / 2.0).powf(alpha - l as f64))
            .collect();
        DiscreteMeasure::new(
            dim,
            coords,
            weights,
            format!("product-delta(dim={dim},alpha={alpha},h={h})"),
        )
    }

    /// Grid points `h k` with `|x| <= 1/2` in the first `active` coordinates; the rest are zero.
    fn grid_in_ball(
        &self,
        dim: usize,
        active: usize,
        h: f64,
        radius: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), MeasureError> {
        let m = (radius / h + 1e-9).floor() as i64;
        let approx = unit_ball_volume(active) * (radius / h).powi(active as i32);
        self.check(approx)?;
        let mut coords = Vec::new();
        let mut norms = Vec::new();
        let mut k = vec![-m; active];
        loop {
            let x: Vec<f64> = k.iter().map(|&v| v as f64 * h).collect();
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= radius + 1e-12 {
                coords.extend_from_slice(&x);
                coords.extend(std::iter::repeat(0.0).take(dim - active));
                norms.push(r);
            }
            // odometer increment, last axis fastest
            let mut a = active;
            loop {
                if a == 0 {
                    return Ok((coords, norms));
                }
                a -= 1;
                if k[a] < m {
                    k[a] += 1;
                    break;
                }
                k[a] = -m;
            }
        }
    }

    /// One atom of weight `lambda^-alpha` at each of `n^d` cell centres of
    /// `[-1/2, 1/2]^d`, with `n = round(lambda^(alpha/d))`.
    pub fn ball_union(&self, dim: usize, alpha: f64, lambda: f64) -> Result<DiscreteMeasure, MeasureError> {
        if dim == 0 || !(alpha > 0.0) || alpha > dim as f64 || !(lambda >= 4.0) {
            return Err(MeasureError::InvalidParameter(format!(
                "ball union needs 0 < alpha <= d and lambda >= 4 (got alpha={alpha}, lambda={lambda})"
            )));
        }
        let n = ball_union_side(dim, alpha, lambda);
        self.check((n as f64).powi(dim as i32))?;
        let centers = lattice_centers(n);
        let total = n.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        for idx in 0..total {
            let mut rest = idx;
            let mut p = vec![0.0; dim];
            for a in (0..dim).rev() {
                p[a] = centers[rest % n];
                rest /= n;
            }
            coords.extend(p);
        }
        DiscreteMeasure::new(
            dim,
            coords,
            vec![lambda.powf(-alpha); total],
            format!("ball-union(dim={dim},alpha={alpha},lambda={lambda})"),
        )
    }

    /// Normalised surface measure on the sphere of radius `t`: equispaced
    /// angles in the plane, a Fibonacci spiral in space.
    pub fn sphere_surface(&self, dim: usize, t: f64, m: usize) -> Result<DiscreteMeasure, MeasureError> {
        if !(t > 0.0 && t <= 1.0) || m == 0 {
            return Err(MeasureError::InvalidParameter(format!(
                "sphere needs 0 < t <= 1 and at least one node (got t={t}, nodes={m})"
            )));
        }
        self.check(m as f64)?;
        let dirs = match dim {
            2 => circle_points(m),
            3 => fibonacci_points(m),
            _ => return Err(MeasureError::UnsupportedDim(dim)),
        };
        DiscreteMeasure::new(
            dim,
            dirs.iter().map(|v| v * t).collect(),
            vec![1.0 / m as f64; m],
            format!("sphere(dim={dim},radius={t},nodes={m})"),
        )
    }
}

pub fn cantor_dust(dim: usize, r: f64, depth: u32, branches: usize) -> Result<DiscreteMeasure, MeasureError> {
    MeasureBuilder::default().cantor_dust(dim, r, depth, branches)
}

pub fn radial_power_measure(dim: usize, alpha: f64, h: f64) -> Result<DiscreteMeasure, MeasureError> {
    MeasureBuilder::default().radial_power(dim, alpha, h)
}

pub fn product_delta_measure(dim: usize, alpha: f64, h: f64) -> Result<DiscreteMeasure, MeasureError> {
    MeasureBuilder::default().product_delta(dim, alpha, h)
}

pub fn ball_union_measure(dim: usize, alpha: f64, lambda: f64) -> Result<DiscreteMeasure, MeasureError> {
    MeasureBuilder::default().ball_union(dim, alpha, lambda)
}

pub fn sphere_surface_measure(dim: usize, t: f64, m: usize) -> Result<DiscreteMeasure, MeasureError> {
    MeasureBuilder::default().sphere_surface(dim, t, m)
}

/// Similarity dimension `dim * ln b / ln(1/r)`.
pub fn cantor_dimension(dim: usize, r: f64, branches: usize) -> f64 {
    dim as f64 * (branches as f64).ln() / (1.0 / r).ln()
}

/// `ceil(alpha)`, the dimension of the slice carrying a product-delta measure.
pub fn slice_dim(alpha: f64) -> usize {
    (alpha - 1e-12).ceil().max(1.0) as usize
}

/// Lattice side `round(lambda^(alpha/d))` of the ball-union construction.
pub fn ball_union_side(dim: usize, alpha: f64, lambda: f64) -> usize {
    (lambda.powf(alpha / dim as f64).round() as usize).max(1)
}

/// Cell centres `-1/2 + (i + 1/2)/n` of a uniform partition of `[-1/2, 1/2]`.
pub fn lattice_centers(n: usize) -> Vec<f64> {
    (0..n).map(|i| -0.5 + (i as f64 + 0.5) / n as f64).collect()
}

fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// `m` equispaced unit vectors in the plane, flattened.
pub fn circle_points(m: usize) -> Vec<f64> {
    (0..m)
        .flat_map(|k| {
            let th = 2.0 * PI * k as f64 / m as f64;
            [th.cos(), th.sin()]
        })
        .collect()
}

/// Fibonacci spiral: `z_k = 1 - (2k+1)/m`, azimuth `k pi (3 - sqrt 5)`.
pub fn fibonacci_points(m: usize) -> Vec<f64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..m)
        .flat_map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / m as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub alpha: f64,
    pub c_alpha_lower: f64,
    pub total_mass: f64,
    pub probe_count: usize,
    pub worst_center: Vec<f64>,
    pub worst_radius: f64,
}

/// Probe-ball lower bound for `<mu>_alpha`: balls of radius `2^-j`, `j = 0..=depth`,
/// centred at atoms, plus the radius-one ball at the origin.
pub fn regularity(mu: &DiscreteMeasure, alpha: f64, depth: u32) -> RegularityReport {
    let d = mu.dim();
    let n = mu.len();
    let radii: Vec<f64> = (0..=depth).map(|j| 0.5f64.powi(j as i32)).collect();
    let mut best = RegularityReport {
        alpha,
        c_alpha_lower: mu.ball_mass(&vec![0.0; d], 1.0),
        total_mass: mu.total_mass(),
        probe_count: 1,
        worst_center: vec![0.0; d],
        worst_radius: 1.0,
    };
    let stride = n.div_ceil(MAX_PROBE_CENTERS).max(1);
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    for c in (0..n).step_by(stride) {
        let center = mu.point(c);
        let mut masses = vec![0.0; radii.len()];
        for j in 0..n {
            let dd = dist2(mu.point(j), center);
            let w = mu.weights()[j];
            for (m, &rr) in masses.iter_mut().zip(&r2) {
                if dd <= rr {
                    *m += w;
                } else {
                    break;
                }
            }
        }
        for (m, &rho) in masses.iter().zip(&radii) {
            let ratio = m / rho.powf(alpha);
            if ratio > best.c_alpha_lower {
                best.c_alpha_lower = ratio;
                best.worst_center = center.to_vec();
                best.worst_radius = rho;
            }
        }
        best.probe_count += radii.len();
    }
    best
}

/// Per-atom times `t(x_j)`, all in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSelector {
    values: Vec<f64>,
}

impl TimeSelector {
    pub fn new(values: Vec<f64>) -> Result<Self, MeasureError> {
        if let Some(t) = values.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(MeasureError::InvalidParameter(format!(
                "selector time {t} is outside (0, 1)"
            )));
        }
        Ok(TimeSelector { values })
    }

    pub fn constant(n: usize, t: f64) -> Result<Self, MeasureError> {
        Self::new(vec![t; n])
    }

    /// Uniform draws from `(0, 1)` with a fixed seed.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n)
            .map(|_| loop {
                let t: f64 = rng.gen();
                if t > 0.0 {
                    break t;
                }
            })
            .collect();
        TimeSelector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The lifted measure on `R^{d+1}` with atoms `(x_j, t(x_j))` and the same weights.
pub fn pushforward(mu: &DiscreteMeasure, sel: &TimeSelector) -> Result<DiscreteMeasure, MeasureError> {
    if sel.len() != mu.len() {
        return Err(MeasureError::Misaligned {
            selector: sel.len(),
            atoms: mu.len(),
        });
    }
    let d = mu.dim();
    let mut coords = Vec::with_capacity(mu.len() * (d + 1));
    for j in 0..mu.len() {
        coords.extend_from_slice(mu.point(j));
        coords.push(sel.values[j]);
    }
    DiscreteMeasure::new(
        d + 1,
        coords,
        mu.weights().to_vec(),
        format!("pushforward({})", mu.label()),
    )
}

/// `nu(E)^-1 chi_E nu`, with `E` given as a predicate on (atom position, weight).
pub fn restrict(
    nu: &DiscreteMeasure,
    keep: impl Fn(&[f64], f64) -> bool,
) -> Result<DiscreteMeasure, MeasureError> {
    let d = nu.dim();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for j in 0..nu.len() {
        let w = nu.weights()[j];
        if keep(nu.point(j), w) {
            coords.extend_from_slice(nu.point(j));
            weights.push(w);
        }
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(MeasureError::EmptyRestriction);
    }
    for w in &mut weights {
        *w /= mass;
    }
    DiscreteMeasure::new(d, coords, weights, format!("restrict({})", nu.label()))
}

/// `sup_w w * mu(|g| > w)^(1/q)`, evaluated exactly at the jumps of the distribution function.
pub fn weak_lorentz_norm(values: &[f64], mu: &DiscreteMeasure, q: f64) -> f64 {
    assert_eq!(values.len(), mu.len(), "one value per atom");
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    let mut best = 0.0f64;
    let mut mass = 0.0;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]].abs();
        while i < order.len() && values[order[i]].abs() == v {
            mass += mu.weights()[order[i]];
            i += 1;
        }
        best = best.max(v * mass.powf(1.0 / q));
    }
    best
}

/// `(sum w_j |g_j|^q)^(1/q)`.
pub fn lq_norm(values: &[f64], mu: &DiscreteMeasure, q: f64) -> f64 {
    assert_eq!(values.len(), mu.len(), "one value per atom");
    values
        .iter()
        .zip(mu.weights())
        .map(|(v, w)| w * v.abs().powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

fn default_branches() -> usize {
    2
}

fn default_radius() -> f64 {
    1.0
}

fn default_weight() -> f64 {
    1.0
}

/// Text form of a measure, as accepted on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    Cantor {
        dim: usize,
        r: f64,
        depth: u32,
        #[serde(default = "default_branches")]
        branches: usize,
    },
    RadialPower { dim: usize, alpha: f64, h: f64 },
    ProductDelta { dim: usize, alpha: f64, h: f64 },
    BallUnion { dim: usize, alpha: f64, lambda: f64 },
    Sphere {
        dim: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        nodes: usize,
    },
    Point {
        dim: usize,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    Pushforward {
        base: Box<MeasureSpec>,
        selector: SelectorSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SelectorSpec {
    Constant { t: f64 },
    Random { seed: u64 },
}

impl MeasureSpec {
    pub fn build(&self, builder: &MeasureBuilder) -> Result<DiscreteMeasure, MeasureError> {
        match self {
            MeasureSpec::Cantor {
                dim,
                r,
                depth,
                branches,
            } => builder.cantor_dust(*dim, *r, *depth, *branches),
            MeasureSpec::RadialPower { dim, alpha, h } => builder.radial_power(*dim, *alpha, *h),
            MeasureSpec::ProductDelta { dim, alpha, h } => builder.product_delta(*dim, *alpha, *h),
            MeasureSpec::BallUnion { dim, alpha, lambda } => builder.ball_union(*dim, *alpha, *lambda),
            MeasureSpec::Sphere { dim, radius, nodes } => builder.sphere_surface(*dim, *radius, *nodes),
            MeasureSpec::Point { dim, weight } => {
                if *dim == 0 {
                    return Err(MeasureError::UnsupportedDim(0));
                }
                DiscreteMeasure::point_mass(&vec![0.0; *dim], *weight)
            }
            MeasureSpec::Pushforward { base, selector } => {
                let mu = base.build(builder)?;
                let sel = match selector {
                    SelectorSpec::Constant { t } => TimeSelector::constant(mu.len(), *t)?,
                    SelectorSpec::Random { seed } => TimeSelector::random(mu.len(), *seed),
                };
                pushforward(&mu, &sel)
            }
        }
    }

    /// Dimension of the built measure.
    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::Cantor { dim, .. }
            | MeasureSpec::RadialPower { dim, .. }
            | MeasureSpec::ProductDelta { dim, .. }
            | MeasureSpec::BallUnion { dim, .. }
            | MeasureSpec::Sphere { dim, .. }
            | MeasureSpec::Point { dim, .. } => *dim,
            MeasureSpec::Pushforward { base, .. } => base.dim() + 1,
        }
    }

    /// Regularity exponent the construction is designed for, where one is defined.
    pub fn nominal_alpha(&self) -> Option<f64> {
        match self {
            MeasureSpec::Cantor { dim, r, branches, .. } => Some(cantor_dimension(*dim, *r, *branches)),
            MeasureSpec::RadialPower { alpha, .. }
            | MeasureSpec::ProductDelta { alpha, .. }
            | MeasureSpec::BallUnion { alpha, .. } => Some(*alpha),
            MeasureSpec::Sphere { dim, .. } => Some(*dim as f64 - 1.0),
            MeasureSpec::Point { .. } => Some(0.0),
            MeasureSpec::Pushforward { base, .. } => base.nominal_alpha(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cantor_examples() {
        let mu = cantor_dust(1, 0.25, 1, 2).unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.weights(), &[0.5, 0.5]);
        assert!((cantor_dimension(1, 0.25, 2) - 0.5).abs() < 1e-15);
        let mu = cantor_dust(2, 0.25, 5, 2).unwrap();
        assert_eq!(mu.len(), 1024);
        assert!((cantor_dimension(2, 0.25, 2) - 1.0).abs() < 1e-15);
        let mu = cantor_dust(1, 0.5, 3, 2).unwrap();
        let xs: Vec<f64> = mu.coords().to_vec();
        for (k, x) in xs.iter().enumerate() {
            assert!((x - (-0.5 + (k as f64 + 0.5) / 8.0)).abs() < 1e-15);
        }
        assert!(matches!(
            MeasureBuilder::with_cap(100).cantor_dust(2, 0.25, 4, 2),
            Err(MeasureError::TooManyAtoms { .. })
        ));
        assert!(cantor_dust(1, 0.6, 2, 2).is_err());
    }

    #[test]
    fn cantor_cells_have_equal_mass() {
        let mu = cantor_dust(2, 0.25, 3, 2).unwrap();
        let w = 4f64.powi(-3);
        assert!(mu.weights().iter().all(|&x| (x - w).abs() < 1e-18));
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_power_examples() {
        let h = 1.0 / 64.0;
        let mu = radial_power_measure(2, 2.0, h).unwrap();
        assert!(mu.weights().iter().all(|&w| (w - h * h).abs() < 1e-18));

        let mu = radial_power_measure(2, 1.0, h).unwrap();
        for rho in [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0] {
            let ratio = mu.ball_mass(&[0.0, 0.0], rho) / rho;
            assert!((ratio / (2.0 * PI) - 1.0).abs() < 0.15, "rho={rho} ratio={ratio}");
        }

        let mu = radial_power_measure(1, 0.5, 1.0 / 128.0).unwrap();
        let exact = 4.0 * 0.5f64.sqrt();
        assert!((mu.total_mass() / exact - 1.0).abs() < 0.05, "{}", mu.total_mass());
        assert!(mu.in_unit_ball());
        assert!(radial_power_measure(2, 1.0, 0.2).is_err());
    }

    #[test]
    fn product_delta_examples() {
        let mu = product_delta_measure(3, 1.0, 1.0 / 32.0).unwrap();
        assert!(mu.coords().chunks(3).all(|x| x[1] == 0.0 && x[2] == 0.0));
        let w0 = mu.weights()[0];
        assert!(mu.weights().iter().all(|&w| (w - w0).abs() < 1e-18));

        let mu = product_delta_measure(3, 1.5, 1.0 / 128.0).unwrap();
        assert!(mu.coords().chunks(3).all(|x| x[2] == 0.0));
        let rhos = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];
        let masses: Vec<f64> = rhos.iter().map(|&r| mu.ball_mass(&[0.0; 3], r)).collect();
        for w in masses.windows(2) {
            let slope = (w[1] / w[0]).log2();
            assert!((slope - 1.5).abs() < 0.15, "slope {slope}");
        }

        let mu = product_delta_measure(2, 2.0, 1.0 / 16.0).unwrap();
        assert!(mu.weights().iter().all(|&w| (w - 1.0 / 256.0).abs() < 1e-18));
    }

    #[test]
    fn ball_union_examples() {
        let mu = ball_union_measure(2, 2.0, 16.0).unwrap();
        assert_eq!(mu.len(), 256);
        assert!(mu.weights().iter().all(|&w| (w - 1.0 / 256.0).abs() < 1e-18));
        let mu = ball_union_measure(1, 1.0, 8.0).unwrap();
        assert_eq!(mu.len(), 8);
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        let mu = ball_union_measure(2, 1.0, 16.0).unwrap();
        assert_eq!(mu.len(), 16);
        assert!((mu.point(1)[1] - mu.point(0)[1] - 0.25).abs() < 1e-15);
        assert!(mu.weights().iter().all(|&w| (w - 1.0 / 16.0).abs() < 1e-18));
        assert!(mu.in_unit_ball());
    }

    #[test]
    fn sphere_examples() {
        let mu = sphere_surface_measure(2, 1.0, 4).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (j, e) in expect.iter().enumerate() {
            assert!(dist2(mu.point(j), e) < 1e-30);
            assert_eq!(mu.weights()[j], 0.25);
        }
        let mu = sphere_surface_measure(3, 1.0, 1000).unwrap();
        let ft: num_complex::Complex64 = (0..mu.len())
            .map(|j| num_complex::Complex64::cis(-6.0 * mu.point(j)[2]) * mu.weights()[j])
            .sum();
        assert!((ft.re - 6f64.sin() / 6.0).abs() < 1e-3);
        assert!((ft.re + 0.04657).abs() < 1e-3);
        assert!(matches!(
            sphere_surface_measure(4, 1.0, 10),
            Err(MeasureError::UnsupportedDim(4))
        ));
    }

    #[test]
    fn regularity_examples() {
        let pt = DiscreteMeasure::point_mass(&[0.1, 0.2], 1.0).unwrap();
        let rep = regularity(&pt, 1.0, 3);
        assert_eq!(rep.c_alpha_lower, 8.0);
        assert_eq!(rep.worst_radius, 0.125);

        let dust = cantor_dust(1, 0.25, 6, 2).unwrap();
        let c = regularity(&dust, 0.5, 8).c_alpha_lower;
        assert!((1.0..=4.0).contains(&c), "{c}");

        // 255 atoms: no dyadic radius is a whole number of spacings, so closed
        // balls never pick up an extra endpoint atom.
        let n = 255;
        let grid = DiscreteMeasure::new(1, lattice_centers(n), vec![1.0 / n as f64; n], "grid").unwrap();
        let rep = regularity(&grid, 1.0, 6);
        assert!((1.0..=2.0).contains(&rep.c_alpha_lower), "{}", rep.c_alpha_lower);
        assert!(rep.c_alpha_lower >= rep.total_mass);
    }

    #[test]
    fn regularity_is_monotone() {
        let mu = cantor_dust(2, 0.25, 4, 2).unwrap();
        let mut prev = 0.0;
        for a in [0.5, 0.8, 1.0, 1.3] {
            let c = regularity(&mu, a, 6).c_alpha_lower;
            assert!(c >= prev);
            prev = c;
        }
        assert!(regularity(&mu, 1.0, 7).c_alpha_lower >= regularity(&mu, 1.0, 5).c_alpha_lower);
    }

    #[test]
    fn pushforward_examples() {
        let mu = DiscreteMeasure::new(2, vec![0.1, 0.0, -0.2, 0.3], vec![0.4, 0.6], "two").unwrap();
        let sel = TimeSelector::new(vec![0.3, 0.7]).unwrap();
        let nu = pushforward(&mu, &sel).unwrap();
        assert_eq!(nu.dim(), 3);
        assert_eq!(nu.point(0), &[0.1, 0.0, 0.3]);
        assert_eq!(nu.point(1), &[-0.2, 0.3, 0.7]);
        assert_eq!(nu.total_mass(), mu.total_mass());
        let short = TimeSelector::new(vec![0.5]).unwrap();
        assert!(matches!(pushforward(&mu, &short), Err(MeasureError::Misaligned { .. })));
        assert!(TimeSelector::new(vec![0.0]).is_err());
        assert!(TimeSelector::new(vec![1.0]).is_err());
    }

    #[test]
    fn constant_selector_keeps_probe_masses() {
        let mu = cantor_dust(2, 0.25, 3, 2).unwrap();
        let nu = pushforward(&mu, &TimeSelector::constant(mu.len(), 0.4).unwrap()).unwrap();
        for j in (0..mu.len()).step_by(7) {
            for r in [0.5, 0.1, 0.02] {
                let mut c = mu.point(j).to_vec();
                let a = mu.ball_mass(&c, r);
                c.push(0.4);
                assert_eq!(nu.ball_mass(&c, r), a);
            }
        }
    }

    #[test]
    fn restrict_examples() {
        let mu = DiscreteMeasure::new(1, vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 1.0], "m").unwrap();
        let all = restrict(&mu, |_, _| true).unwrap();
        assert_eq!(all.weights(), &[0.25, 0.5, 0.25]);
        let one = restrict(&mu, |x, _| x[0] == 0.2).unwrap();
        assert_eq!(one.weights(), &[1.0]);
        assert!(matches!(restrict(&mu, |_, _| false), Err(MeasureError::EmptyRestriction)));
    }

    #[test]
    fn weak_norm_examples() {
        let mu = DiscreteMeasure::new(1, vec![0.0, 0.5], vec![0.5, 0.5], "m").unwrap();
        assert!((weak_lorentz_norm(&[1.0, 1.0], &mu, 2.0) - 1.0).abs() < 1e-15);
        assert!((weak_lorentz_norm(&[2.0, 1.0], &mu, 2.0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trips() {
        let specs = [
            r#"{"type":"cantor","dim":2,"r":0.25,"depth":5}"#,
            r#"{"type":"radial-power","dim":2,"alpha":1.0,"h":0.03125}"#,
            r#"{"type":"product-delta","dim":3,"alpha":1.5,"h":0.0625}"#,
            r#"{"type":"ball-union","dim":2,"alpha":1.0,"lambda":16.0}"#,
            r#"{"type":"sphere","dim":3,"nodes":100}"#,
            r#"{"type":"point","dim":2}"#,
            r#"{"type":"pushforward","base":{"type":"point","dim":2},"selector":{"kind":"constant","t":0.5}}"#,
        ];
        for text in specs {
            let spec: MeasureSpec = serde_json::from_str(text).unwrap();
            let again: MeasureSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
            assert_eq!(spec, again);
            let mu = spec.build(&MeasureBuilder::default()).unwrap();
            assert_eq!(mu.dim(), spec.dim());
        }
        assert!(serde_json::from_str::<MeasureSpec>(r#"{"type":"blob","dim":2}"#).is_err());
    }

    fn arb_measure() -> impl Strategy<Value = DiscreteMeasure> {
        prop::collection::vec((-0.7f64..0.7, -0.7f64..0.7, 0.0f64..1.0), 1..60).prop_map(|atoms| {
            let coords = atoms.iter().flat_map(|a| [a.0, a.1]).collect();
            let weights = atoms.iter().map(|a| a.2).collect();
            DiscreteMeasure::new(2, coords, weights, "random").unwrap()
        })
    }

    proptest! {
        #[test]
        fn pushforward_probe_inequality(
            mu in arb_measure(),
            seed in any::<u64>(),
            y in prop::array::uniform2(-0.8f64..0.8),
            s in 0.0f64..1.0,
            r in 0.01f64..1.0,
        ) {
            let nu = pushforward(&mu, &TimeSelector::random(mu.len(), seed)).unwrap();
            prop_assert_eq!(nu.total_mass(), mu.total_mass());
            prop_assert!(nu.ball_mass(&[y[0], y[1], s], r) <= mu.ball_mass(&y, r));
        }

        #[test]
        fn restrict_probe_inequality(
            mu in arb_measure(),
            y in prop::array::uniform2(-0.8f64..0.8),
            r in 0.01f64..1.0,
            alpha in 0.1f64..2.0,
        ) {
            let mass_e: f64 = (0..mu.len()).filter(|&j| mu.point(j)[0] >= 0.0).map(|j| mu.weights()[j]).sum();
            prop_assume!(mass_e > 0.0);
            let nu_e = restrict(&mu, |x, _| x[0] >= 0.0).unwrap();
            prop_assert!((nu_e.total_mass() - 1.0).abs() < 1e-12);
            let lhs = nu_e.ball_mass(&y, r) / r.powf(alpha);
            let rhs = mu.ball_mass(&y, r) / r.powf(alpha) / mass_e;
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn weak_norm_below_strong(
            mu in arb_measure(),
            vals in prop::collection::vec(0.0f64..10.0, 60),
            q in 1.0f64..6.0,
        ) {
            let v = &vals[..mu.len()];
            prop_assert!(weak_lorentz_norm(v, &mu, q) <= lq_norm(v, &mu, q) * (1.0 + 1e-12));
        }

        #[test]
        fn weak_norm_exact_for_constants(mu in arb_measure(), c in 0.0f64..5.0, q in 1.0f64..6.0) {
            let v = vec![c; mu.len()];
            let weak = weak_lorentz_norm(&v, &mu, q);
            prop_assert!((weak - lq_norm(&v, &mu, q)).abs() <= 1e-12 * weak.max(1.0));
        }

        #[test]
        fn regularity_dominates_total_mass(mu in arb_measure(), alpha in 0.1f64..2.0) {
            prop_assume!(mu.in_unit_ball());
            let rep = regularity(&mu, alpha, 4);
            prop_assert!(rep.c_alpha_lower >= rep.total_mass * (1.0 - 1e-12));
        }
    }
}
