//! Exact piecewise-rational exponent tables.
//!
//! Every table is a list of [`Piece`]s ordered by the variable (`s` or
//! `alpha`). Where two printed intervals share an endpoint the formulas agree
//! there, and the left piece is the one reported.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExponentError {
    #[error("dimension d = {d} is not supported (need d >= {min})")]
    Dimension { d: i64, min: i64 },
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: Rational,
        range: String,
    },
}

/// A table output together with the label of the piece that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentValue {
    pub value: Rational,
    pub branch: String,
}

/// One branch of a piecewise table: `formula(d, x)` on `(lower, upper]`
/// (or `[lower, upper]` when `lower_closed`).
#[derive(Clone, Copy)]
pub struct Piece {
    pub label: &'static str,
    pub lower: Rational,
    pub lower_closed: bool,
    pub upper: Rational,
    formula: fn(Rational, Rational) -> Rational,
}

impl Piece {
    pub fn contains(&self, x: Rational) -> bool {
        let above = if self.lower_closed {
            x >= self.lower
        } else {
            x > self.lower
        };
        above && x <= self.upper
    }

    pub fn eval(&self, d: i64, x: Rational) -> Rational {
        (self.formula)(int(d), x)
    }
}

impl fmt::Debug for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed { '[' } else { '(' };
        write!(
            f,
            "{} on {}{}, {}]",
            self.label, open, self.lower, self.upper
        )
    }
}

/// The piecewise tables with a single free variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table {
    /// Upper bound on the divergence-set dimension, variable `s`.
    DivergenceBound,
    /// Conjectured divergence-set dimension, variable `s`.
    ConjecturedDivergence,
    /// Previously known divergence bound, variable `s`.
    PriorDivergence,
    /// Sufficient Sobolev regularity s(alpha, d) for the maximal estimate.
    SufficientRegularity,
    /// Fractal Strichartz regularity gamma(alpha, d).
    FractalStrichartz,
}

impl Table {
    pub const ALL: [Table; 5] = [
        Table::DivergenceBound,
        Table::ConjecturedDivergence,
        Table::PriorDivergence,
        Table::SufficientRegularity,
        Table::FractalStrichartz,
    ];

    /// Short name used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Table::DivergenceBound => "thm11",
            Table::ConjecturedDivergence => "conjecture",
            Table::PriorDivergence => "prior",
            Table::SufficientRegularity => "s22",
            Table::FractalStrichartz => "s2",
        }
    }

    pub fn from_name(name: &str) -> Option<Table> {
        Table::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Name of the free variable (`"s"` or `"alpha"`).
    pub fn variable(self) -> &'static str {
        match self {
            Table::DivergenceBound | Table::ConjecturedDivergence | Table::PriorDivergence => "s",
            Table::SufficientRegularity | Table::FractalStrichartz => "alpha",
        }
    }

    /// Pieces in increasing order of the variable.
    pub fn pieces(self, d: i64) -> Vec<Piece> {
        let dq = int(d);
        let half = Rational::new(1, 2);
        match self {
            Table::DivergenceBound => vec![
                Piece {
                    label: "lower",
                    lower: half,
                    lower_closed: false,
                    upper: dq / 4,
                    formula: |d, s| {
                        (d * d - d - 1) / (d - 2) - int(2) * (d - 1) * s / (d - 2)
                    },
                },
                Piece {
                    label: "middle",
                    lower: dq / 4,
                    lower_closed: true,
                    upper: (dq + 1) / 4,
                    formula: |d, s| (int(3) * d + 1) / 2 - int(4) * s,
                },
                Piece {
                    label: "upper",
                    lower: (dq + 1) / 4,
                    lower_closed: true,
                    upper: dq / 2,
                    formula: |d, s| d - int(2) * s,
                },
            ],
            Table::ConjecturedDivergence => vec![
                Piece {
                    label: "low",
                    lower: half,
                    lower_closed: false,
                    upper: int(1),
                    formula: |d, s| d + 2 - int(4) * s,
                },
                Piece {
                    label: "high",
                    lower: int(1),
                    lower_closed: true,
                    upper: dq / 2,
                    formula: |d, s| d - int(2) * s,
                },
            ],
            Table::PriorDivergence => vec![
                Piece {
                    label: "low",
                    lower: half,
                    lower_closed: false,
                    upper: (dq + 1) / 4,
                    formula: |d, s| (d * d - int(2) * d * s) / (d - 1),
                },
                Piece {
                    label: "high",
                    lower: (dq + 1) / 4,
                    lower_closed: false,
                    upper: dq / 2,
                    formula: |d, s| d - int(2) * s,
                },
            ],
            Table::SufficientRegularity | Table::FractalStrichartz => {
                let mut pieces = vec![
                    Piece {
                        label: "small",
                        lower: Rational::zero(),
                        lower_closed: false,
                        upper: (dq - 1) / 2,
                        formula: |d, a| (d - a) / 2,
                    },
                    Piece {
                        label: "medium",
                        lower: (dq - 1) / 2,
                        lower_closed: false,
                        upper: (dq + 1) / 2,
                        formula: |d, a| (int(3) * d + 1) / 8 - a / 4,
                    },
                    Piece {
                        label: "large",
                        lower: (dq + 1) / 2,
                        lower_closed: false,
                        upper: dq,
                        formula: |d, a| (d - a) / 2 + (a - 1) / (int(2) * (d - 1)),
                    },
                ];
                if self == Table::FractalStrichartz {
                    pieces.push(Piece {
                        label: "spacetime",
                        lower: dq,
                        lower_closed: false,
                        upper: dq + 1,
                        formula: |d, a| (d + 1 - a) / 2,
                    });
                }
                pieces
            }
        }
    }

    /// Evaluates the table, validating `d >= 3` and the variable's range.
    pub fn evaluate(self, d: i64, x: Rational) -> Result<ExponentValue, ExponentError> {
        check_dim(d)?;
        let pieces = self.pieces(d);
        if self == Table::DivergenceBound && x > int(d) / 2 {
            return Ok(ExponentValue {
                value: Rational::zero(),
                branch: "trivial".into(),
            });
        }
        pieces
            .iter()
            .find(|p| p.contains(x))
            .map(|p| ExponentValue {
                value: p.eval(d, x),
                branch: p.label.into(),
            })
            .ok_or_else(|| ExponentError::OutOfRange {
                name: self.variable(),
                value: x,
                range: range_text(&pieces),
            })
    }

    /// False only for the prior bound, which drops by 1/2 at `(d+1)/4`.
    pub fn is_continuous(self) -> bool {
        self != Table::PriorDivergence
    }

    /// Endpoints shared by consecutive pieces, with the left and right branch values.
    pub fn junctions(self, d: i64) -> Vec<(Rational, Rational, Rational)> {
        self.pieces(d)
            .windows(2)
            .map(|w| {
                let x = w[0].upper;
                (x, w[0].eval(d, x), w[1].eval(d, x))
            })
            .collect()
    }
}

fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

fn check_dim(d: i64) -> Result<(), ExponentError> {
    if d < 3 {
        Err(ExponentError::Dimension { d, min: 3 })
    } else {
        Ok(())
    }
}

fn range_text(pieces: &[Piece]) -> String {
    let first = pieces.first().expect("tables are non-empty");
    let last = pieces.last().expect("tables are non-empty");
    let open = if first.lower_closed { '[' } else { '(' };
    format!("{open}{}, {}]", first.lower, last.upper)
}

/// Upper bound on the divergence-set dimension for `d >= 3`.
///
/// Returns 0 above `d/2`. For `s <= 1/2` the bound is the trivial value `d`,
/// which is reported as an error so callers must opt into it explicitly.
pub fn thm11_divergence_bound(d: i64, s: Rational) -> Result<ExponentValue, ExponentError> {
    Table::DivergenceBound.evaluate(d, s)
}

pub fn conjecture_bound(d: i64, s: Rational) -> Result<ExponentValue, ExponentError> {
    Table::ConjecturedDivergence.evaluate(d, s)
}

pub fn prior_bound(d: i64, s: Rational) -> Result<ExponentValue, ExponentError> {
    Table::PriorDivergence.evaluate(d, s)
}

/// s(alpha, d): the maximal estimate holds for every `s` strictly above this value.
pub fn thm12_sufficient_s(d: i64, alpha: Rational) -> Result<ExponentValue, ExponentError> {
    Table::SufficientRegularity.evaluate(d, alpha)
}

/// gamma(alpha, d) for measures on R^{d+1}; `alpha` ranges over `(0, d+1]`.
pub fn thm21_gamma(d: i64, alpha: Rational) -> Result<ExponentValue, ExponentError> {
    Table::FractalStrichartz.evaluate(d, alpha)
}

/// The individual lower bounds whose maximum is the necessary regularity.
///
/// Two terms for `alpha <= 1`, four otherwise. No dimension restriction is
/// applied here, so the counterexample families can quote the same terms in
/// the plane.
pub fn necessary_terms(d: i64, alpha: Rational, q: Rational) -> Vec<Rational> {
    let dq = int(d);
    let focus = dq / 2 - alpha / q;
    if alpha <= int(1) {
        vec![focus, (dq + 1) / 4]
    } else {
        vec![
            focus,
            (dq + 1) / 4 - (alpha - 1) / (int(2) * q),
            (dq + 2 - alpha) / 4,
            (dq - alpha) / 2,
        ]
    }
}

/// Necessary regularity for the L^q maximal estimate against every alpha-regular measure.
///
/// The branch label names every term attaining the maximum, e.g. `"term2+term3"`.
pub fn necessary_s(d: i64, alpha: Rational, q: Rational) -> Result<ExponentValue, ExponentError> {
    check_dim(d)?;
    if !alpha.is_positive() || alpha > int(d) {
        return Err(ExponentError::OutOfRange {
            name: "alpha",
            value: alpha,
            range: format!("(0, {d}]"),
        });
    }
    if q < int(1) {
        return Err(ExponentError::OutOfRange {
            name: "q",
            value: q,
            range: "[1, inf)".into(),
        });
    }
    let terms = necessary_terms(d, alpha, q);
    let value = *terms.iter().max().expect("at least two terms");
    let branch = terms
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == value)
        .map(|(i, _)| format!("term{}", i + 1))
        .collect::<Vec<_>>()
        .join("+");
    Ok(ExponentValue { value, branch })
}

/// Parses `"3"`, `"-1/2"` or a terminating decimal such as `"0.25"`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        return (d != 0).then(|| Rational::new(n, d));
    }
    if let Some((whole, frac)) = text.split_once('.') {
        if frac.len() > 12 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let negative = whole.trim_start().starts_with('-');
        let w: i64 = if whole.is_empty() || whole == "-" {
            0
        } else {
            whole.parse().ok()?
        };
        let scale = 10i64.pow(frac.len() as u32);
        let f: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
        let f = if negative { -f } else { f };
        return Some(Rational::new(w * scale + f, scale));
    }
    text.parse::<i64>().ok().map(Rational::from_integer)
}

/// Renders a rational as a decimal with 12 significant digits.
pub fn to_decimal(x: Rational) -> String {
    let v = *x.numer() as f64 / *x.denom() as f64;
    format_sig(v, 12)
}

/// Formats with `digits` significant digits, trimming trailing zeros.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { format!("{v}") };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    if !(-5..=15).contains(&magnitude) {
        return format!("{:.*e}", digits - 1, v);
    }
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn thm11_examples() {
        let v = thm11_divergence_bound(3, r(1, 1)).unwrap();
        assert_eq!(v.value, r(1, 1));
        assert_eq!(v.branch, "middle");
        assert_eq!(thm11_divergence_bound(3, r(2, 1)).unwrap().value, r(0, 1));
        assert_eq!(
            thm11_divergence_bound(3, r(3, 2) + r(1, 1000)).unwrap().value,
            r(0, 1)
        );
        let pieces = Table::DivergenceBound.pieces(6);
        let s = r(7, 4);
        assert_eq!(pieces[1].eval(6, s), r(5, 2));
        assert_eq!(pieces[2].eval(6, s), r(5, 2));
    }

    #[test]
    fn thm11_rejects_trivial_regime() {
        assert!(matches!(
            thm11_divergence_bound(3, r(1, 2)),
            Err(ExponentError::OutOfRange { .. })
        ));
        assert!(matches!(
            thm11_divergence_bound(2, r(1, 1)),
            Err(ExponentError::Dimension { .. })
        ));
    }

    #[test]
    fn conjecture_and_prior_examples() {
        assert_eq!(conjecture_bound(3, r(1, 1)).unwrap().value, r(1, 1));
        assert_eq!(conjecture_bound(4, r(2, 1)).unwrap().value, r(0, 1));
        let p = Table::ConjecturedDivergence.pieces(5);
        assert_eq!(p[0].eval(5, r(1, 1)), r(3, 1));
        assert_eq!(p[1].eval(5, r(1, 1)), r(3, 1));
        assert!(conjecture_bound(3, r(2, 1)).is_err());

        assert_eq!(prior_bound(3, r(1, 1)).unwrap().value, r(3, 2));
        assert_eq!(prior_bound(3, r(3, 2)).unwrap().value, r(0, 1));
        // (d+1)/4 belongs to the low branch; the high branch starts half a unit lower.
        assert_eq!(prior_bound(7, r(2, 1)).unwrap().value, r(7, 2));
        let p = Table::PriorDivergence.pieces(7);
        assert_eq!(p[1].eval(7, r(2, 1)), r(3, 1));
        let (x, left, right) = Table::PriorDivergence.junctions(7)[0];
        assert_eq!((x, left - right), (r(2, 1), r(1, 2)));
    }

    #[test]
    fn sufficient_and_gamma_examples() {
        assert_eq!(thm12_sufficient_s(3, r(3, 1)).unwrap().value, r(1, 2));
        assert_eq!(thm12_sufficient_s(3, r(1, 1)).unwrap().value, r(1, 1));
        let p = Table::SufficientRegularity.pieces(5);
        assert_eq!(p[0].eval(5, r(2, 1)), r(3, 2));
        assert_eq!(p[1].eval(5, r(2, 1)), r(3, 2));
        assert!(thm12_sufficient_s(3, r(7, 2)).is_err());
        assert!(thm12_sufficient_s(3, r(0, 1)).is_err());

        assert_eq!(thm21_gamma(3, r(7, 2)).unwrap().value, r(1, 4));
        assert_eq!(thm21_gamma(3, r(1, 1)).unwrap().value, r(1, 1));
        let p = Table::FractalStrichartz.pieces(4);
        assert_eq!(p[2].eval(4, r(4, 1)), r(1, 2));
        assert_eq!(p[3].eval(4, r(4, 1)), r(1, 2));
        assert!(thm21_gamma(3, r(9, 2)).is_err());
    }

    #[test]
    fn necessary_examples() {
        let v = necessary_s(3, r(2, 1), r(2, 1)).unwrap();
        assert_eq!(v.value, r(3, 4));
        assert_eq!(v.branch, "term2+term3");
        assert_eq!(necessary_s(3, r(1, 2), r(2, 1)).unwrap().value, r(5, 4));
        let v = necessary_s(4, r(4, 1), r(2, 1)).unwrap();
        assert_eq!(v.value, r(1, 2));
        assert_eq!(
            necessary_terms(4, r(4, 1), r(2, 1)),
            vec![r(0, 1), r(1, 2), r(1, 2), r(0, 1)]
        );
        assert!(necessary_s(3, r(4, 1), r(2, 1)).is_err());
    }

    #[test]
    fn junction_equalities_hold_exactly() {
        for d in 3..=10 {
            for table in Table::ALL.into_iter().filter(|t| t.is_continuous()) {
                for (x, left, right) in table.junctions(d) {
                    assert_eq!(left, right, "{} d={d} at {x}", table.name());
                }
            }
        }
    }

    #[test]
    fn left_branch_labels_junctions() {
        assert_eq!(thm11_divergence_bound(4, r(1, 1)).unwrap().branch, "lower");
        assert_eq!(thm11_divergence_bound(3, r(1, 1)).unwrap().branch, "middle");
    }

    #[test]
    fn parse_and_render() {
        assert_eq!(parse_rational("3/2"), Some(r(3, 2)));
        assert_eq!(parse_rational("0.25"), Some(r(1, 4)));
        assert_eq!(parse_rational("-1.5"), Some(r(-3, 2)));
        assert_eq!(parse_rational("7"), Some(r(7, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
        assert_eq!(to_decimal(r(1, 3)), "0.333333333333");
        assert_eq!(to_decimal(r(5, 2)), "2.5");
        assert_eq!(to_decimal(r(0, 1)), "0");
        assert_eq!(format_sig(1234.5678, 12), "1234.5678");
    }
}
