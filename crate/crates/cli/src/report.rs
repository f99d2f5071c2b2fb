//! Report writers: JSON with 17 significant digits and the CSV torsion field.

use std::io::{self, Write};

use berwald_core::torsion::TorsionTensor;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Pretty JSON whose floats are written as `d.dddddddddddddddde±x`.
/// Non-finite values never reach the formatter; serde_json maps them to `null`.
struct SeventeenDigits<'a>(PrettyFormatter<'a>);

impl Formatter for SeventeenDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", sci(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Scientific notation with 17 significant digits.
pub fn sci(value: f64) -> String {
    format!("{value:.16e}")
}

/// Serializes `value` as pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Column names `T{c}_{a}{b}`, 1-based, `c` outermost and `a < b`.
pub fn torsion_columns(dim: usize) -> Vec<String> {
    let mut cols = Vec::new();
    for c in 0..dim {
        for a in 0..dim {
            for b in (a + 1)..dim {
                cols.push(format!("T{}_{}{}", c + 1, a + 1, b + 1));
            }
        }
    }
    cols
}

/// One CSV row of the torsion field.
pub struct TorsionRow<'a> {
    pub point: &'a [f64],
    pub torsion: &'a TorsionTensor,
    pub residual: f64,
}

/// Writes `u1..un`, the chart torsion components and the residual per row.
pub fn write_torsion_csv<W: Write>(mut out: W, dim: usize, rows: &[TorsionRow<'_>]) -> io::Result<()> {
    let mut header: Vec<String> = (1..=dim).map(|i| format!("u{i}")).collect();
    header.extend(torsion_columns(dim));
    header.push("residual".into());
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut fields: Vec<String> = row.point.iter().copied().map(sci).collect();
        for c in 0..dim {
            for a in 0..dim {
                for b in (a + 1)..dim {
                    fields.push(sci(row.torsion.get(a, b, c)));
                }
            }
        }
        fields.push(sci(row.residual));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use berwald_core::torsion::FrameTag;

    #[test]
    fn floats_carry_seventeen_digits() {
        let json = String::from_utf8(to_json(&vec![0.1, -0.375, f64::NAN]).unwrap()).unwrap();
        assert!(json.contains("1.0000000000000001e-1"), "{json}");
        assert!(json.contains("-3.7500000000000000e-1"));
        assert!(json.contains("null"));
        let back: Vec<Option<f64>> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0], Some(0.1));
    }

    #[test]
    fn csv_header_and_row() {
        let mut t = TorsionTensor::zeros(2, FrameTag::Chart);
        t.set(0, 1, 1, -1.0);
        let mut buf = Vec::new();
        write_torsion_csv(
            &mut buf,
            2,
            &[TorsionRow {
                point: &[0.5, 0.0],
                torsion: &t,
                residual: 0.0,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("u1,u2,T1_12,T2_12,residual"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.5, 0.0, 0.0, -1.0, 0.0]);
    }
}
