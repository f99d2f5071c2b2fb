//! Text format for metric families.
//!
//! A file is a sequence of `key = value;` statements; `#` starts a comment.
//!
//! ```text
//! family = frame_minkowski;
//! dim = 2;
//! frame = [[1, 0], [0, exp(x1)]];
//! minkowski_b = [0.3, 0];
//! domain = [[-5, 5], [-5, 5]];
//! ```
//!
//! `family` and `dim` come first. Coefficient keys per family:
//! `riemannian`: `a`; `randers`: `a` (default identity) and `b`;
//! `frame_minkowski`: `frame`, `minkowski_b` and optionally `minkowski_a`
//! (constant entries). `domain` is optional for every family and accepts `inf`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr, Token, TokenStream};
use crate::metric::{ChartDomain, FamilyKind, MatrixField, MetricFamily, MinkowskiNorm, VectorField};

#[derive(Debug, Clone)]
enum Value {
    Name(String),
    Integer,
    Matrix(Vec<Vec<Expr>>),
    Vector(Vec<Expr>),
    Bounds(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

fn syntax_at(pos: Pos, message: impl Into<String>) -> Error {
    Error::Syntax {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

/// Parses a metric file into a family.
pub fn parse_metric_spec(text: &str) -> Result<MetricFamily> {
    let mut ts = TokenStream::new(text)?;
    let mut dim: Option<usize> = None;
    let mut entries: BTreeMap<String, (Value, Pos)> = BTreeMap::new();

    while ts.peek().tok != Token::Eof {
        let key_tok = ts.next();
        let pos = Pos {
            line: key_tok.line,
            column: key_tok.column,
        };
        let Token::Ident(key) = key_tok.tok else {
            return Err(syntax_at(pos, "expected a statement key"));
        };
        ts.expect(Token::Eq)?;
        let value = match key.as_str() {
            "family" => match ts.next().tok {
                Token::Ident(name) => Value::Name(name),
                _ => return Err(syntax_at(pos, "`family` takes a family name")),
            },
            "dim" => {
                let at = ts.peek().clone();
                match ts.next().tok {
                    Token::Num(v) if v.fract() == 0.0 && v >= 1.0 => {
                        dim = Some(v as usize);
                        Value::Integer
                    }
                    _ => {
                        return Err(syntax_at(
                            Pos {
                                line: at.line,
                                column: at.column,
                            },
                            "`dim` takes a positive integer",
                        ))
                    }
                }
            }
            "a" | "frame" | "minkowski_a" => Value::Matrix(parse_matrix(&mut ts, require_dim(dim, pos)?)?),
            "b" | "minkowski_b" => Value::Vector(parse_vector(&mut ts, require_dim(dim, pos)?)?),
            "domain" => Value::Bounds(parse_bounds(&mut ts, require_dim(dim, pos)?)?),
            other => return Err(syntax_at(pos, format!("unknown key `{other}`"))),
        };
        ts.expect(Token::Semi)?;
        if entries.insert(key.clone(), (value, pos)).is_some() {
            return Err(syntax_at(pos, format!("duplicate key `{key}`")));
        }
    }

    let (family_name, family_pos) = match entries.remove("family") {
        Some((Value::Name(n), p)) => (n, p),
        _ => return Err(ts.error_here("missing `family` statement")),
    };
    let dim = dim.ok_or_else(|| ts.error_here("missing `dim` statement"))?;
    entries.remove("dim");
    let domain = match entries.remove("domain") {
        Some((Value::Bounds(b), _)) => Some(ChartDomain {
            lower: b.iter().map(|p| p.0).collect(),
            upper: b.iter().map(|p| p.1).collect(),
        }),
        _ => None,
    };

    let mut take_matrix = |key: &str| -> Option<(Vec<Vec<Expr>>, Pos)> {
        match entries.remove(key) {
            Some((Value::Matrix(m), p)) => Some((m, p)),
            _ => None,
        }
    };
    let family = match family_name.as_str() {
        "riemannian" => {
            let (a, _) = take_matrix("a").ok_or_else(|| syntax_at(family_pos, "riemannian needs `a`"))?;
            reject_leftovers(&entries, &family_name)?;
            MetricFamily::riemannian(matrix_field(dim, a)?)?
        }
        "randers" => {
            let a = take_matrix("a").map(|(m, _)| m);
            let b = match entries.remove("b") {
                Some((Value::Vector(v), _)) => v,
                _ => return Err(syntax_at(family_pos, "randers needs `b`")),
            };
            reject_leftovers(&entries, &family_name)?;
            let a = match a {
                Some(m) => matrix_field(dim, m)?,
                None => MatrixField::identity(dim),
            };
            MetricFamily::randers(a, VectorField::new(b))?
        }
        "frame_minkowski" => {
            let (frame, _) =
                take_matrix("frame").ok_or_else(|| syntax_at(family_pos, "frame_minkowski needs `frame`"))?;
            let norm_a = match take_matrix("minkowski_a") {
                Some((m, p)) => constant_matrix(dim, m, p)?,
                None => DMatrix::identity(dim, dim),
            };
            let norm_b = match entries.remove("minkowski_b") {
                Some((Value::Vector(v), p)) => constant_vector(v, p)?,
                _ => return Err(syntax_at(family_pos, "frame_minkowski needs `minkowski_b`")),
            };
            reject_leftovers(&entries, &family_name)?;
            MetricFamily::frame_minkowski(
                matrix_field(dim, frame)?,
                MinkowskiNorm {
                    a: norm_a,
                    b: norm_b,
                },
            )?
        }
        other => return Err(Error::UnknownFamily(other.to_string())),
    };
    match domain {
        Some(d) => family.with_domain(d),
        None => Ok(family),
    }
}

fn require_dim(dim: Option<usize>, pos: Pos) -> Result<usize> {
    dim.ok_or_else(|| syntax_at(pos, "`dim` must be declared before coefficient entries"))
}

fn reject_leftovers(entries: &BTreeMap<String, (Value, Pos)>, family: &str) -> Result<()> {
    match entries.iter().next() {
        Some((key, (_, pos))) => Err(syntax_at(*pos, format!("key `{key}` does not apply to family {family}"))),
        None => Ok(()),
    }
}

fn matrix_field(dim: usize, rows: Vec<Vec<Expr>>) -> Result<MatrixField> {
    MatrixField::new(dim, rows.into_iter().flatten().collect())
}

fn constant_matrix(dim: usize, rows: Vec<Vec<Expr>>, pos: Pos) -> Result<DMatrix<f64>> {
    let flat = constant_vector(rows.into_iter().flatten().collect(), pos)?;
    Ok(DMatrix::from_row_slice(dim, dim, flat.as_slice()))
}

fn constant_vector(v: Vec<Expr>, pos: Pos) -> Result<DVector<f64>> {
    if v.iter().any(Expr::depends_on_x) {
        return Err(syntax_at(pos, "Minkowski norm entries must be constant"));
    }
    Ok(DVector::from_iterator(v.len(), v.iter().map(|e| e.eval(&[]))))
}

fn parse_vector(ts: &mut TokenStream, dim: usize) -> Result<Vec<Expr>> {
    ts.expect(Token::LBracket)?;
    let mut out = vec![parse_expr(ts, dim)?];
    while ts.peek().tok == Token::Comma {
        ts.next();
        out.push(parse_expr(ts, dim)?);
    }
    ts.expect(Token::RBracket)?;
    if out.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: out.len(),
        });
    }
    Ok(out)
}

fn parse_matrix(ts: &mut TokenStream, dim: usize) -> Result<Vec<Vec<Expr>>> {
    ts.expect(Token::LBracket)?;
    let mut rows = vec![parse_vector(ts, dim)?];
    while ts.peek().tok == Token::Comma {
        ts.next();
        rows.push(parse_vector(ts, dim)?);
    }
    ts.expect(Token::RBracket)?;
    if rows.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rows.len(),
        });
    }
    Ok(rows)
}

fn parse_bound(ts: &mut TokenStream, dim: usize) -> Result<f64> {
    let negative = ts.peek().tok == Token::Minus;
    let infinite = |ts: &TokenStream| ts.peek().tok == Token::Ident("inf".into());
    if negative {
        ts.next();
        if infinite(ts) {
            ts.next();
            return Ok(f64::NEG_INFINITY);
        }
        let e = parse_expr(ts, dim)?;
        return bound_value(ts, &e).map(|v| -v);
    }
    if infinite(ts) {
        ts.next();
        return Ok(f64::INFINITY);
    }
    let e = parse_expr(ts, dim)?;
    bound_value(ts, &e)
}

fn bound_value(ts: &TokenStream, e: &Expr) -> Result<f64> {
    if e.depends_on_x() {
        return Err(ts.error_here("domain bounds must be constant"));
    }
    Ok(e.eval(&[]))
}

fn parse_bounds(ts: &mut TokenStream, dim: usize) -> Result<Vec<(f64, f64)>> {
    ts.expect(Token::LBracket)?;
    let mut out = Vec::new();
    loop {
        ts.expect(Token::LBracket)?;
        let lo = parse_bound(ts, dim)?;
        ts.expect(Token::Comma)?;
        let hi = parse_bound(ts, dim)?;
        ts.expect(Token::RBracket)?;
        if !(lo < hi) {
            return Err(ts.error_here("domain interval is empty"));
        }
        out.push((lo, hi));
        if ts.peek().tok != Token::Comma {
            break;
        }
        ts.next();
    }
    ts.expect(Token::RBracket)?;
    if out.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: out.len(),
        });
    }
    Ok(out)
}

/// Writes `family` in the metric-file format; parsing the result gives a
/// family with identical expression trees.
pub fn to_spec_text(family: &MetricFamily) -> Result<String> {
    let n = family.dim();
    let mut s = String::new();
    writeln!(s, "family = {};", family.name()).unwrap();
    writeln!(s, "dim = {n};").unwrap();
    let matrix = |m: &MatrixField| {
        let rows: Vec<String> = (0..n)
            .map(|i| {
                let cells: Vec<String> = (0..n).map(|j| m.entry(i, j).to_string()).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        format!("[{}]", rows.join(", "))
    };
    let vector = |items: Vec<String>| format!("[{}]", items.join(", "));
    match family.kind() {
        FamilyKind::Riemannian { a } => writeln!(s, "a = {};", matrix(a)).unwrap(),
        FamilyKind::Randers { a, b } => {
            writeln!(s, "a = {};", matrix(a)).unwrap();
            writeln!(s, "b = {};", vector((0..n).map(|i| b.entry(i).to_string()).collect())).unwrap();
        }
        FamilyKind::FrameMinkowski { frame, norm } => {
            writeln!(s, "frame = {};", matrix(frame)).unwrap();
            writeln!(s, "minkowski_a = {};", matrix(&MatrixField::constant(&norm.a))).unwrap();
            let b = norm.b.iter().map(|v| Expr::constant(*v).to_string()).collect();
            writeln!(s, "minkowski_b = {};", vector(b)).unwrap();
        }
        FamilyKind::Numeric(_) => {
            return Err(Error::WrongFamily {
                expected: "expression-defined",
            })
        }
    }
    let d = family.domain();
    if !d.is_unbounded() {
        let bound = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                Expr::constant(v).to_string()
            }
        };
        let pairs: Vec<String> = d
            .lower
            .iter()
            .zip(&d.upper)
            .map(|(l, u)| format!("[{}, {}]", bound(*l), bound(*u)))
            .collect();
        writeln!(s, "domain = [{}];", pairs.join(", ")).unwrap();
    }
    Ok(s)
}
