//! Measure files: CSV with an `x,w` (atomic) or `s,q` (quantile) header and an optional
//! `# kind=atomic|quantile` comment line.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::{grid_point, AtomicMeasure, Measure, QuantileMeasure};

pub fn read_measure(path: impl AsRef<Path>) -> Result<Measure> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_measure(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_measure(text: &str) -> Result<Measure> {
    let mut declared: Option<String> = None;
    for line in text.lines().map(str::trim).filter(|l| l.starts_with('#')) {
        if let Some(rest) = line.trim_start_matches('#').trim().strip_prefix("kind=") {
            declared = Some(rest.trim().to_ascii_lowercase());
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let kind = match (declared.as_deref(), header.as_slice()) {
        (Some("atomic"), _) => "atomic",
        (Some("quantile"), _) => "quantile",
        (Some(other), _) => return Err(Error::Parse(format!("unknown kind `{other}`"))),
        (None, [a, b]) if a == "x" && b == "w" => "atomic",
        (None, [a, b]) if a == "s" && b == "q" => "quantile",
        (None, h) => return Err(Error::Parse(format!("unrecognized header {h:?}; expected x,w or s,q"))),
    };
    if header.len() != 2 {
        return Err(Error::Parse(format!("expected two columns, found {}", header.len())));
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Parse(format!("row {}: expected two fields", row + 1)));
        }
        let parse = |k: usize| -> Result<f64> {
            record[k]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: `{}`: {e}", row + 1, &record[k])))
        };
        first.push(parse(0)?);
        second.push(parse(1)?);
    }
    if first.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    match kind {
        "atomic" => Ok(Measure::Atomic(AtomicMeasure::new(first, second)?)),
        _ => Ok(Measure::Quantile(quantile_from_samples(&first, &second)?)),
    }
}

/// Builds a quantile measure from `(s, q)` samples. Samples on the midpoint grid are used
/// directly; other levels are interpolated onto a midpoint grid of the same size.
fn quantile_from_samples(s: &[f64], q: &[f64]) -> Result<QuantileMeasure> {
    if s.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidMeasure("quantile levels must lie in (0, 1)".into()));
    }
    if s.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidMeasure("quantile levels must be strictly increasing".into()));
    }
    let n = s.len();
    let on_grid = s.iter().enumerate().all(|(i, &v)| (v - grid_point(i, n)).abs() <= 1e-9);
    if on_grid || n == 1 {
        return QuantileMeasure::new(q.to_vec());
    }
    let sampled = QuantileMeasure::new(q.to_vec())?;
    QuantileMeasure::from_fn(n, |t| {
        let k = s.partition_point(|&v| v < t).clamp(1, n - 1);
        let (s0, s1) = (s[k - 1], s[k]);
        let (q0, q1) = (sampled.q()[k - 1], sampled.q()[k]);
        q0 + (t - s0) * (q1 - q0) / (s1 - s0)
    })
}

pub fn format_measure(mu: &Measure) -> String {
    let mut out = String::new();
    match mu {
        Measure::Atomic(a) => {
            out.push_str("# kind=atomic\nx,w\n");
            for (x, w) in a.positions().iter().zip(a.weights()) {
                out.push_str(&format!("{x:e},{w:e}\n"));
            }
        }
        Measure::Quantile(q) => {
            out.push_str("# kind=quantile\ns,q\n");
            for (i, x) in q.q().iter().enumerate() {
                out.push_str(&format!("{:e},{x:e}\n", grid_point(i, q.n())));
            }
        }
    }
    out
}

pub fn write_measure(path: impl AsRef<Path>, mu: &Measure) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(format_measure(mu).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_round_trip() {
        let m = Measure::Atomic(AtomicMeasure::new(vec![0.0, 2.5], vec![0.25, 0.75]).unwrap());
        assert_eq!(parse_measure(&format_measure(&m)).unwrap(), m);
    }

    #[test]
    fn quantile_round_trip() {
        let m = Measure::Quantile(QuantileMeasure::uniform(0.0, 1.0, 9).unwrap());
        assert_eq!(parse_measure(&format_measure(&m)).unwrap(), m);
    }

    #[test]
    fn header_infers_kind() {
        let m = parse_measure("x,w\n2,1\n").unwrap();
        assert_eq!(m, Measure::dirac(2.0));
    }

    #[test]
    fn off_grid_levels_are_interpolated() {
        let m = parse_measure("s,q\n0.1,0.1\n0.5,0.5\n0.9,0.9\n").unwrap();
        let q = m.as_quantile().unwrap();
        for (i, x) in q.q().iter().enumerate() {
            assert!((x - grid_point(i, 3)).abs() < 1e-15);
        }
    }

    #[test]
    fn malformed_rows_fail() {
        assert!(parse_measure("x,w\n1,abc\n").is_err());
        assert!(parse_measure("a,b\n1,1\n").is_err());
        assert!(parse_measure("x,w\n").is_err());
    }
}
