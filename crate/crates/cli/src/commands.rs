use crate::report::{envelope, num, opt_num, read_csv, to_csv, Artifacts, Row};
use crate::{svg, Extent, NormKind, Range, TableName};
use anyhow::{bail, ensure, Context, Result};
use fracwave::counterex::{run_log_divergence, run_sweep, Family};
use fracwave::exponents::{necessary_s, parse_rational, to_decimal, Rational, Table};
use fracwave::measures::{regularity as probe_regularity, DiscreteMeasure, MeasureBuilder, MeasureSpec};
use fracwave::normlab::{
    cone_ext_constant, equivalence_report, frac_strichartz_constant, maximal_constant_lower, sphere_ext_constant,
    spherical_means_constant, strichartz_constant, unit_interval_grid, ConeExtent, MaximalSettings, NormEstimate,
};
use fracwave::spectra::TimeGrid;
use fracwave::sphavg::{decay_sweep, fit_exponent, fit_power_law, geometric_scales, ExponentFit};
use serde_json::{json, Value};
use std::path::Path;

fn rational(text: &str, name: &str) -> Result<Rational> {
    parse_rational(text).with_context(|| format!("--{name}: cannot read '{text}' as a rational"))
}

fn ratio_f64(x: Rational) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Inline JSON when the argument starts with `{`, otherwise a path to a JSON file.
fn load_measure(text: &str) -> Result<(MeasureSpec, DiscreteMeasure)> {
    let body = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text).with_context(|| format!("reading measure file {text}"))?
    };
    let spec: MeasureSpec = serde_json::from_str(&body).context("parsing measure spec")?;
    let mu = spec.build(&MeasureBuilder::default())?;
    Ok((spec, mu))
}

fn resolve(range: &Range, defaults: (f64, f64, usize)) -> Result<(f64, f64, usize)> {
    let lmin = range.lmin.unwrap_or(defaults.0);
    let lmax = range.lmax.unwrap_or(defaults.1);
    let per = range.per_octave.unwrap_or(defaults.2);
    ensure!(lmin > 0.0 && lmax >= lmin, "need 0 < lmin <= lmax, got [{lmin}, {lmax}]");
    ensure!(per >= 1, "--per-octave must be at least 1");
    Ok((lmin, lmax, per))
}

fn write_svg(path: Option<&Path>, title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], fit: Option<&ExponentFit>) -> Result<()> {
    if let Some(p) = path {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(p, svg::render(title, xlabel, ylabel, xs, ys, fit)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn table_of(name: TableName) -> Option<Table> {
    match name {
        TableName::Thm11 => Some(Table::DivergenceBound),
        TableName::Conjecture => Some(Table::ConjecturedDivergence),
        TableName::Prior => Some(Table::PriorDivergence),
        TableName::S22 => Some(Table::SufficientRegularity),
        TableName::S2 => Some(Table::FractalStrichartz),
        TableName::Necessary => None,
    }
}

pub fn exponents(name: TableName, d: i64, grid: &str, q: &str) -> Result<Artifacts> {
    let step = rational(grid, "grid")?;
    let q = rational(q, "q")?;
    ensure!(step > Rational::from_integer(0), "--grid must be positive");
    ensure!(d >= 3, "tables are defined for d >= 3, got {d}");
    let table = table_of(name);
    let (label, variable, upper) = match table {
        Some(t) => (t.name(), t.variable(), t.pieces(d).last().expect("tables are non-empty").upper),
        None => ("necessary", "alpha", Rational::from_integer(d)),
    };
    let mut rows = Vec::new();
    let mut x = step;
    while x <= upper {
        let value = match table {
            Some(t) => t.evaluate(d, x),
            None => necessary_s(d, x, q),
        };
        if let Ok(v) = value {
            let (alpha, s_or_q) = match (table, variable) {
                (None, _) => (to_decimal(x), to_decimal(q)),
                (_, "alpha") => (to_decimal(x), String::new()),
                _ => (String::new(), to_decimal(x)),
            };
            rows.push(Row {
                kind: label.into(),
                d: d.to_string(),
                alpha,
                s_or_q,
                value: to_decimal(v.value),
                aux1: v.branch,
                aux2: v.value.to_string(),
                ..Row::default()
            });
        }
        x += step;
    }
    ensure!(!rows.is_empty(), "no grid point of step {step} lies in the domain of {label}");
    Ok(Artifacts {
        command: "exponents",
        csv: Some(to_csv(&rows)?),
        json: None,
        pass: None,
    })
}

pub fn decay(measure: &str, range: &Range, band: bool, svg_path: Option<&Path>) -> Result<Artifacts> {
    let (spec, mu) = load_measure(measure)?;
    let (lmin, lmax, per) = resolve(range, (16.0, 512.0, 4))?;
    let curve = decay_sweep(&mu, lmin, lmax, per, band)?;
    let fit = fit_exponent(&curve)?;
    let kind = if band { "band-average" } else { "spherical-average" };
    let rows: Vec<Row> = (0..curve.lambdas.len())
        .map(|k| Row {
            kind: kind.into(),
            d: mu.dim().to_string(),
            alpha: opt_num(spec.nominal_alpha()),
            s_or_q: String::new(),
            scale: num(curve.lambdas[k]),
            value: num(curve.values[k]),
            aux1: curve.nodes[k].to_string(),
            aux2: u8::from(curve.converged[k]).to_string(),
        })
        .collect();
    write_svg(svg_path, &format!("decay: {}", mu.label()), "lambda", "A(lambda)", &curve.lambdas, &curve.values, Some(&fit))?;
    let config = json!({"measure": spec, "lmin": lmin, "lmax": lmax, "per_octave": per, "band": band});
    let payload = json!({
        "label": mu.label(),
        "fit": fit,
        "beta": 0.0 - fit.slope,
        "all_converged": curve.converged.iter().all(|c| *c),
    });
    Ok(Artifacts {
        command: "decay",
        csv: Some(to_csv(&rows)?),
        json: Some(envelope("decay", config, payload)),
        pass: None,
    })
}

pub fn regularity(measure: &str, alpha: Option<f64>, depth: u32) -> Result<Artifacts> {
    let (spec, mu) = load_measure(measure)?;
    let alpha = match alpha.or(spec.nominal_alpha()) {
        Some(a) => a,
        None => bail!("--alpha is required for this measure"),
    };
    ensure!(alpha >= 0.0, "--alpha must be non-negative");
    let rep = probe_regularity(&mu, alpha, depth);
    let row = Row {
        kind: "regularity".into(),
        d: mu.dim().to_string(),
        alpha: num(alpha),
        s_or_q: String::new(),
        scale: num(rep.worst_radius),
        value: num(rep.c_alpha_lower),
        aux1: rep.probe_count.to_string(),
        aux2: num(rep.total_mass),
    };
    let config = json!({"measure": spec, "alpha": alpha, "depth": depth});
    Ok(Artifacts {
        command: "regularity",
        csv: Some(to_csv(&[row])?),
        json: Some(envelope("regularity", config, json!({"label": mu.label(), "report": rep}))),
        pass: None,
    })
}

fn extent_of(e: Extent) -> ConeExtent {
    match e {
        Extent::Band => ConeExtent::Band,
        Extent::Shell => ConeExtent::Shell,
    }
}

fn extent_name(e: Extent) -> &'static str {
    match e {
        Extent::Band => "band",
        Extent::Shell => "shell",
    }
}

fn norm_name(kind: NormKind) -> &'static str {
    match kind {
        NormKind::Sphere => "sphere",
        NormKind::Strichartz => "strichartz",
        NormKind::Cone => "cone",
        NormKind::Fractal => "fractal",
        NormKind::SphericalMeans => "spherical-means",
        NormKind::MaximalLower => "maximal-lower",
    }
}

fn kind_label(e: &NormEstimate) -> String {
    serde_json::to_value(e.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub struct NormOptions {
    pub seed: u64,
    pub extent: Extent,
    pub rounds: usize,
    pub restarts: usize,
}

pub fn norms(kind: NormKind, measure: &str, range: &Range, opts: NormOptions, svg_path: Option<&Path>) -> Result<Artifacts> {
    let (spec, mu) = load_measure(measure)?;
    let (lmin, lmax, per) = resolve(range, (16.0, 128.0, 1))?;
    let lambdas = geometric_scales(lmin, lmax, per);
    let settings = MaximalSettings {
        rounds: opts.rounds,
        restarts: opts.restarts,
        seed: opts.seed,
    };
    let mut estimates = Vec::with_capacity(lambdas.len());
    for &lam in &lambdas {
        let grid = unit_interval_grid(lam);
        let est = match kind {
            NormKind::Sphere => sphere_ext_constant(&mu, lam, opts.seed)?,
            NormKind::Strichartz => strichartz_constant(&mu, lam, &grid, opts.seed)?,
            NormKind::Cone => cone_ext_constant(&mu, lam, &grid, extent_of(opts.extent), opts.seed)?,
            NormKind::Fractal => frac_strichartz_constant(&mu, lam, opts.seed)?,
            NormKind::SphericalMeans => spherical_means_constant(&mu, lam, &grid, opts.seed)?,
            NormKind::MaximalLower => {
                let times = TimeGrid::new(0.0, 1.0, 1.0 / (16.0 * lam))?;
                maximal_constant_lower(&mu, lam, &times, settings)?
            }
        };
        estimates.push(est);
    }
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let fit = if lambdas.len() >= 4 { Some(fit_power_law(&lambdas, &values)?) } else { None };
    // the fractal operator lives on R^{d+1}
    let d = if kind == NormKind::Fractal { mu.dim() - 1 } else { mu.dim() };
    let rows: Vec<Row> = lambdas
        .iter()
        .zip(&estimates)
        .map(|(&lam, e)| Row {
            kind: kind_label(e),
            d: d.to_string(),
            alpha: opt_num(spec.nominal_alpha()),
            s_or_q: "2".into(),
            scale: num(lam),
            value: num(e.value),
            aux1: num(e.lower),
            aux2: num(e.upper),
        })
        .collect();
    let name = norm_name(kind);
    write_svg(svg_path, &format!("{name}: {}", mu.label()), "lambda", "constant", &lambdas, &values, fit.as_ref())?;
    let series: Vec<Value> = lambdas
        .iter()
        .zip(&estimates)
        .map(|(l, e)| json!({"lambda": l, "estimate": e}))
        .collect();
    let config = json!({
        "kind": name,
        "measure": spec,
        "lmin": lmin,
        "lmax": lmax,
        "per_octave": per,
        "seed": opts.seed,
        "extent": extent_name(opts.extent),
        "rounds": opts.rounds,
        "restarts": opts.restarts,
    });
    Ok(Artifacts {
        command: "norms",
        csv: Some(to_csv(&rows)?),
        json: Some(envelope("norms", config, json!({"label": mu.label(), "series": series, "fit": fit}))),
        pass: None,
    })
}

pub fn equivalence(measure: &str, lmin: f64, lmax: f64, seed: u64, extent: Extent) -> Result<Artifacts> {
    let (spec, mu) = load_measure(measure)?;
    ensure!(lmin > 0.0 && lmax >= lmin, "need 0 < lmin <= lmax, got [{lmin}, {lmax}]");
    let lambdas = geometric_scales(lmin, lmax, 1);
    ensure!(lambdas.len() >= 5, "need at least 5 dyadic scales between lmin and lmax, got {}", lambdas.len());
    let rep = equivalence_report(&mu, &lambdas, extent_of(extent), seed)?;
    let mut rows = Vec::new();
    for r in &rep.rows {
        for (kind, e) in [("sphere", &r.sphere), ("cone", &r.cone), ("strichartz", &r.strichartz)] {
            rows.push(Row {
                kind: kind.into(),
                d: mu.dim().to_string(),
                alpha: opt_num(spec.nominal_alpha()),
                s_or_q: "2".into(),
                scale: num(r.lambda),
                value: num(e.value),
                aux1: num(e.lower),
                aux2: num(e.upper),
            });
        }
    }
    let config = json!({"measure": spec, "lmin": lmin, "lmax": lmax, "seed": seed, "extent": extent_name(extent)});
    let pass = rep.pass;
    Ok(Artifacts {
        command: "equivalence",
        csv: Some(to_csv(&rows)?),
        json: Some(envelope("equivalence", config, json!({"report": rep, "pass": pass}))),
        pass: Some(pass),
    })
}

pub fn counterexample(family: &str, d: usize, alpha: &str, q: &str, range: &Range, svg_path: Option<&Path>) -> Result<Artifacts> {
    let fam = Family::from_name(family)?;
    let alpha = rational(alpha, "alpha")?;
    let q = rational(q, "q")?;
    let (lmin, lmax, per) = resolve(range, (32.0, 1024.0, 2))?;
    let scales = geometric_scales(lmin, lmax, per);
    let rep = run_sweep(fam, d, alpha, q, &scales)?;
    let rows: Vec<Row> = (0..rep.scales.len())
        .map(|k| Row {
            kind: fam.name().into(),
            d: d.to_string(),
            alpha: num(ratio_f64(alpha)),
            s_or_q: num(ratio_f64(q)),
            scale: num(rep.scales[k]),
            value: num(rep.ratios[k]),
            aux1: rep.atoms[k].to_string(),
            aux2: rep.modes[k].to_string(),
        })
        .collect();
    write_svg(svg_path, &format!("{} d={d} alpha={alpha} q={q}", fam.name()), "lambda", "ratio", &rep.scales, &rep.ratios, Some(&rep.fit))?;
    let config = json!({
        "family": fam.name(),
        "d": d,
        "alpha": alpha.to_string(),
        "q": q.to_string(),
        "lmin": lmin,
        "lmax": lmax,
        "per_octave": per,
    });
    let pass = rep.pass;
    Ok(Artifacts {
        command: "counterexample",
        csv: Some(to_csv(&rows)?),
        json: Some(envelope("counterexample", config, json!({"report": rep, "pass": pass}))),
        pass: Some(pass),
    })
}

pub fn log_divergence(d: usize, r: &str, kmin: u32, kmax: u32, svg_path: Option<&Path>) -> Result<Artifacts> {
    ensure!(d == 3, "log-divergence runs on the radial path in d=3 only, got d={d}");
    let r = ratio_f64(rational(r, "r")?);
    ensure!(kmin <= kmax, "need kmin <= kmax");
    let ks: Vec<u32> = (kmin..=kmax).collect();
    let rep = run_log_divergence(r, &ks)?;
    let rows: Vec<Row> = rep
        .rows
        .iter()
        .map(|row| Row {
            kind: "log-divergence".into(),
            d: "3".into(),
            alpha: String::new(),
            s_or_q: "2".into(),
            scale: row.big_k.to_string(),
            value: num(row.g),
            aux1: num(row.h_half_sq_over_k),
            aux2: num(row.g_sq_over_k),
        })
        .collect();
    let xs: Vec<f64> = rep.rows.iter().map(|row| row.big_k as f64).collect();
    let gs: Vec<f64> = rep.rows.iter().map(|row| row.g).collect();
    let fit = fit_power_law(&xs, &gs)?;
    write_svg(svg_path, &format!("log-divergence r={r}"), "K", "G(K)", &xs, &gs, Some(&fit))?;
    let config = json!({"family": "log-divergence", "d": 3, "r": r, "kmin": kmin, "kmax": kmax});
    let pass = rep.pass;
    Ok(Artifacts {
        command: "counterexample",
        csv: Some(to_csv(&rows)?),
        json: Some(envelope("counterexample", config, json!({"report": rep, "pass": pass}))),
        pass: Some(pass),
    })
}

fn column<'a>(row: &'a Row, name: &str) -> Result<&'a str> {
    Ok(match name {
        "d" => &row.d,
        "alpha" => &row.alpha,
        "s_or_q" => &row.s_or_q,
        "scale" => &row.scale,
        "value" => &row.value,
        "aux1" => &row.aux1,
        "aux2" => &row.aux2,
        _ => bail!("unknown numeric column '{name}'"),
    })
}

pub fn plot(csv: &Path, out: &Path, kind: Option<&str>, x: &str, y: &str, title: Option<&str>) -> Result<Artifacts> {
    let rows = read_csv(csv)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        if kind.is_some_and(|want| want != row.kind) {
            continue;
        }
        let line = k + 2;
        let parse = |name: &str| -> Result<f64> {
            let text = column(row, name)?;
            let v: f64 = text
                .parse()
                .with_context(|| format!("{}: line {line}: column {name} is not a number: '{text}'", csv.display()))?;
            ensure!(v > 0.0, "{}: line {line}: column {name} must be positive for a log axis", csv.display());
            Ok(v)
        };
        xs.push(parse(x)?);
        ys.push(parse(y)?);
    }
    ensure!(!xs.is_empty(), "{}: no rows to plot", csv.display());
    let fit = fit_power_law(&xs, &ys).ok();
    let title = title.map(str::to_string).unwrap_or_else(|| csv.display().to_string());
    write_svg(Some(out), &title, x, y, &xs, &ys, fit.as_ref())?;
    let config = json!({"csv": csv.display().to_string(), "svg": out.display().to_string(), "kind": kind, "x": x, "y": y});
    Ok(Artifacts {
        command: "plot",
        csv: None,
        json: Some(envelope("plot", config, json!({"points": xs.len(), "fit": fit}))),
        pass: None,
    })
}
