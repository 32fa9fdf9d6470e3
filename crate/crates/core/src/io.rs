//! Curve files: CSV with header `k,accuracy,stderr`, or a JSON array of
//! `{"k":…,"accuracy":…,"stderr":…}` objects. Numbers carry 10 significant
//! digits; a missing stderr is an empty CSV field or JSON `null`.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::analytic::{CurvePoint, PerformanceCurve};
use crate::error::{Error, Result};

pub const CURVE_HEADER: &str = "k,accuracy,stderr";

const SIGNIFICANT_DIGITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// `%.10g`-style rendering: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let mantissa = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Value that re-parses to what [`format_number`] prints.
fn rounded(v: f64) -> f64 {
    format_number(v).parse().unwrap_or(v)
}

pub fn write_curve<W: Write>(curve: &PerformanceCurve, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{CURVE_HEADER}")?;
            for p in curve.points() {
                let se = p.stderr.map(format_number).unwrap_or_default();
                writeln!(out, "{},{},{}", p.k, format_number(p.accuracy), se)?;
            }
        }
        Format::Json => {
            serde_json::to_writer(&mut out, &curve_json(curve))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
pub(crate) struct JsonPoint {
    k: u32,
    accuracy: f64,
    stderr: Option<f64>,
}

pub(crate) fn curve_json(curve: &PerformanceCurve) -> Vec<JsonPoint> {
    curve
        .points()
        .iter()
        .map(|p| JsonPoint { k: p.k, accuracy: rounded(p.accuracy), stderr: p.stderr.map(rounded) })
        .collect()
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("not a number: {field:?}") })
}

pub fn parse_curve_csv<R: BufRead>(reader: R) -> Result<PerformanceCurve> {
    let mut lines = reader.lines().enumerate();
    let header = lines.next().map(|(_, h)| h).transpose()?;
    if header.as_deref().map(str::trim) != Some(CURVE_HEADER) {
        return Err(Error::Parse { line: 1, message: format!("expected header {CURVE_HEADER:?}") });
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: lineno, message: "expected 3 fields".into() });
        }
        let k = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line: lineno, message: format!("bad k {:?}", fields[0]) })?;
        let accuracy = parse_number(fields[1], lineno)?;
        let stderr = if fields[2].trim().is_empty() { None } else { Some(parse_number(fields[2], lineno)?) };
        points.push(CurvePoint { k, accuracy, stderr });
    }
    PerformanceCurve::new(points)
}

pub fn parse_curve_json(text: &str) -> Result<PerformanceCurve> {
    let points: Vec<CurvePoint> = serde_json::from_str(text)?;
    PerformanceCurve::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(0.5), "0.5");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(0.597875), "0.597875");
        assert_eq!(format_number(2.0 / 3.0), "0.6666666667");
        assert_eq!(format_number(1.0 / 3.0 * 1e-7), "3.333333333e-08");
        assert_eq!(format_number(123456.789), "123456.789");
        assert_eq!(format_number(12345678901.0), "1.23456789e+10");
        assert_eq!(format_number(-0.25), "-0.25");
        assert_eq!(format_number(0.00012345), "0.00012345");
        assert_eq!(format_number(0.999999999999), "1");
    }

    #[test]
    fn csv_layout() {
        let curve = PerformanceCurve::new(vec![
            CurvePoint { k: 1, accuracy: 0.58, stderr: None },
            CurvePoint { k: 3, accuracy: 0.5869, stderr: Some(0.004) },
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_curve(&curve, Format::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,accuracy,stderr\n1,0.58,\n3,0.5869,0.004\n");
        let mut buf = Vec::new();
        write_curve(&curve, Format::Json, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "[{\"k\":1,\"accuracy\":0.58,\"stderr\":null},{\"k\":3,\"accuracy\":0.5869,\"stderr\":0.004}]\n"
        );
    }

    #[test]
    fn csv_parse_errors() {
        assert!(parse_curve_csv("k,acc\n1,0.5,\n".as_bytes()).is_err());
        assert!(parse_curve_csv("k,accuracy,stderr\n1,x,\n".as_bytes()).is_err());
        assert!(parse_curve_csv("k,accuracy,stderr\n1,0.5\n".as_bytes()).is_err());
        assert!(parse_curve_csv("k,accuracy,stderr\n2,0.5,\n1,0.5,\n".as_bytes()).is_err());
    }

    fn arb_curve() -> impl Strategy<Value = PerformanceCurve> {
        prop::collection::btree_map(1u32..10_000, (0.0f64..=1.0, prop::option::of(0.0f64..0.5)), 1..40).prop_map(
            |m| {
                PerformanceCurve::new(
                    m.into_iter().map(|(k, (accuracy, stderr))| CurvePoint { k, accuracy, stderr }).collect(),
                )
                .unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn csv_round_trip(curve in arb_curve()) {
            let mut first = Vec::new();
            write_curve(&curve, Format::Csv, &mut first).unwrap();
            let parsed = parse_curve_csv(first.as_slice()).unwrap();
            prop_assert_eq!(parsed.ks(), curve.ks());
            for (a, b) in parsed.points().iter().zip(curve.points()) {
                prop_assert!((a.accuracy - b.accuracy).abs() <= 5e-10 * b.accuracy.abs().max(1e-300));
                prop_assert_eq!(a.stderr.is_some(), b.stderr.is_some());
            }
            let mut second = Vec::new();
            write_curve(&parsed, Format::Csv, &mut second).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn json_round_trip(curve in arb_curve()) {
            let mut first = Vec::new();
            write_curve(&curve, Format::Json, &mut first).unwrap();
            let parsed = parse_curve_json(std::str::from_utf8(&first).unwrap()).unwrap();
            let mut second = Vec::new();
            write_curve(&parsed, Format::Json, &mut second).unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
