mod common;

use berwald_core::expr::Expr;
use berwald_core::metric::{ChartPoint, MatrixField, MetricFamily, MinkowskiNorm, VectorField};
use berwald_core::spec_file::{parse_metric_spec, to_spec_text};
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Evaluates while parsing; no tree is built. Returns the value and whether
/// the subexpression is free of coordinates.
struct Reference<'a> {
    s: &'a [u8],
    i: usize,
    x: &'a [f64],
}

impl Reference<'_> {
    fn skip(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip();
        self.s.get(self.i).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> (f64, bool) {
        let (mut v, mut c) = self.term();
        loop {
            if self.eat(b'+') {
                let (r, rc) = self.term();
                v += r;
                c &= rc;
            } else if self.eat(b'-') {
                let (r, rc) = self.term();
                v -= r;
                c &= rc;
            } else {
                return (v, c);
            }
        }
    }

    fn term(&mut self) -> (f64, bool) {
        let (mut v, mut c) = self.unary();
        loop {
            if self.eat(b'*') {
                let (r, rc) = self.unary();
                v *= r;
                c &= rc;
            } else if self.eat(b'/') {
                let (r, rc) = self.unary();
                v /= r;
                c &= rc;
            } else {
                return (v, c);
            }
        }
    }

    fn unary(&mut self) -> (f64, bool) {
        if self.eat(b'-') {
            let (v, c) = self.unary();
            (-v, c)
        } else if self.eat(b'+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> (f64, bool) {
        let (base, bc) = self.atom();
        if !self.eat(b'^') {
            return (base, bc);
        }
        let (e, ec) = self.unary();
        let v = if ec && e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
            base.powi(e as i32)
        } else {
            base.powf(e)
        };
        (v, bc && ec)
    }

    fn atom(&mut self) -> (f64, bool) {
        let c = self.peek().expect("atom");
        if c == b'(' {
            self.i += 1;
            let v = self.expr();
            assert!(self.eat(b')'));
            return v;
        }
        let start = self.i;
        if c.is_ascii_digit() || c == b'.' {
            while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
                self.i += 1;
            }
            if self.i < self.s.len() && matches!(self.s[self.i], b'e' | b'E') {
                self.i += 1;
                if matches!(self.s[self.i], b'+' | b'-') {
                    self.i += 1;
                }
                while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                    self.i += 1;
                }
            }
            let text = std::str::from_utf8(&self.s[start..self.i]).unwrap();
            return (text.parse().unwrap(), true);
        }
        while self.i < self.s.len() && (self.s[self.i].is_ascii_alphanumeric() || self.s[self.i] == b'_') {
            self.i += 1;
        }
        let name = std::str::from_utf8(&self.s[start..self.i]).unwrap();
        let func: Option<fn(f64) -> f64> = match name {
            "sin" => Some(f64::sin),
            "cos" => Some(f64::cos),
            "tan" => Some(f64::tan),
            "exp" => Some(f64::exp),
            "ln" => Some(f64::ln),
            "sqrt" => Some(f64::sqrt),
            _ => None,
        };
        if let Some(f) = func {
            assert!(self.eat(b'('));
            let (v, c) = self.expr();
            assert!(self.eat(b')'));
            return (f(v), c);
        }
        match name {
            "pi" => (std::f64::consts::PI, true),
            "e" => (std::f64::consts::E, true),
            _ => {
                let k: usize = name[1..].parse().unwrap();
                (self.x[k - 1], false)
            }
        }
    }
}

fn reference_eval(text: &str, x: &[f64]) -> f64 {
    let mut r = Reference { s: text.as_bytes(), i: 0, x };
    let (v, _) = r.expr();
    assert_eq!(r.peek(), None, "trailing input in {text}");
    v
}

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..40).prop_map(|k| format!("{}", k as f64 / 8.0)),
        (1u32..10).prop_map(|k| format!("{k}")),
        (1u32..9).prop_map(|k| format!("{k}.5e-1")),
        (1usize..4).prop_map(|k| format!("x{k}")),
        Just("pi".to_string()),
        Just("e".to_string()),
    ]
}

fn expression() -> impl Strategy<Value = String> {
    leaf().prop_recursive(5, 48, 3, |inner| {
        let op = prop_oneof![Just("+"), Just("-"), Just("*"), Just("/"), Just(" ^ ")];
        let func = prop_oneof![Just("sin"), Just("cos"), Just("tan"), Just("exp"), Just("ln"), Just("sqrt")];
        prop_oneof![
            (inner.clone(), op, inner.clone()).prop_map(|(a, o, b)| format!("{a} {o} {b}")),
            inner.clone().prop_map(|a| format!("({a})")),
            inner.clone().prop_map(|a| format!("-{a}")),
            (func, inner.clone()).prop_map(|(f, a)| format!("{f}( {a} )")),
            (inner, 2i32..4).prop_map(|(a, k)| format!("({a})^{k}")),
        ]
    })
}

fn agree(a: f64, b: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-14 * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parser_agrees_with_reference_interpreter(text in expression(), x in prop::collection::vec(-2.0..2.0f64, 3)) {
        let e = Expr::parse(&text, 3).unwrap();
        let (got, want) = (e.eval(&x), reference_eval(&text, &x));
        prop_assert!(agree(got, want), "{text}: {got:e} vs {want:e}");
        let again = Expr::parse(&e.to_string(), 3).unwrap();
        prop_assert!(agree(again.eval(&x), got));
    }
}

fn samples(dim: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let xs = [0.0, 0.3, 0.71, 1.0];
    let ys = [[1.0, 0.0, 0.0], [0.3, -0.8, 0.5], [-0.6, 0.2, -1.1], [0.0, 1.0, 0.4]];
    xs.iter()
        .flat_map(|&a| {
            ys.iter()
                .map(move |y| ((0..dim).map(|k| a + 0.1 * k as f64).collect(), y[..dim].to_vec()))
        })
        .collect()
}

fn assert_equivalent(a: &MetricFamily, b: &MetricFamily) {
    assert_eq!(a.dim(), b.dim());
    assert_eq!(a.name(), b.name());
    for (x, y) in samples(a.dim()) {
        let p = ChartPoint::new(x);
        let (fa, fb) = (a.at(&p).unwrap().value(&y), b.at(&p).unwrap().value(&y));
        assert!((fa - fb).abs() <= 1e-14 * fa.abs(), "{} at {:?}: {fa} vs {fb}", a.name(), p.coords);
    }
}

fn built_in_families() -> Vec<MetricFamily> {
    let mut fams: Vec<MetricFamily> = [
        EUCLIDEAN,
        CONFORMAL,
        MINKOWSKI_RANDERS,
        FRAME_RANDERS,
        NON_GB_RANDERS,
        FRAME_RANDERS_3D,
        TILTED_RANDERS,
    ]
    .iter()
    .map(|t| family(t))
    .collect();
    let diag = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
    fams.push(MetricFamily::riemannian(MatrixField::constant(&diag)).unwrap());
    fams.push(MetricFamily::randers(MatrixField::identity(3), VectorField::constant(&[0.25, 0.0, 0.0])).unwrap());
    let mut frame = MatrixField::identity(2);
    frame.set(0, 1, Expr::parse("0.5*sin(x2)", 2).unwrap());
    let norm = MinkowskiNorm {
        a: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]),
        ..MinkowskiNorm::randers(&[0.1, -0.2])
    };
    fams.push(MetricFamily::frame_minkowski(frame, norm).unwrap());
    fams
}

#[test]
fn built_in_families_round_trip() {
    for fam in built_in_families() {
        let text = to_spec_text(&fam).unwrap();
        let back = parse_metric_spec(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert_equivalent(&fam, &back);
        assert_eq!(to_spec_text(&back).unwrap(), text);
    }
}

#[test]
fn identity_riemannian_is_euclidean() {
    let fam = family(EUCLIDEAN);
    let local = fam.at(&ChartPoint::new(vec![0.3, -2.0])).unwrap();
    for y in [[1.0, 0.0], [3.0, 4.0], [-0.5, 0.25]] {
        assert!((local.value(&y) - (y[0] * y[0] + y[1] * y[1]).sqrt()).abs() < 1e-15);
    }
}
