//! Sweep grid specs: `key=v1,v2,...` groups separated by `;`.

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepMode {
    Dropout,
    Corruption,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Dropout { durations: Vec<f64> },
    Corruption { rates: Vec<f64>, p_corrupt: Vec<f64> },
}

fn parse_groups(spec: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for group in spec.split(';').map(str::trim).filter(|g| !g.is_empty()) {
        let (key, values) = group.split_once('=').with_context(|| format!("grid group `{group}` has no `=`"))?;
        let key = key.trim().to_ascii_lowercase();
        if groups.iter().any(|(k, _)| *k == key) {
            bail!("grid key `{key}` given twice");
        }
        let values = values
            .split(',')
            .map(|v| {
                let v = v.trim();
                let x: f64 = v.parse().with_context(|| format!("`{v}` in grid key `{key}` is not a number"))?;
                if !x.is_finite() {
                    bail!("grid value `{v}` is not finite");
                }
                Ok(x)
            })
            .collect::<Result<Vec<_>>>()?;
        groups.push((key, values));
    }
    Ok(groups)
}

fn take(groups: &mut Vec<(String, Vec<f64>)>, names: &[&str]) -> Option<Vec<f64>> {
    let i = groups.iter().position(|(k, _)| names.contains(&k.as_str()))?;
    Some(groups.remove(i).1)
}

pub fn parse(mode: SweepMode, spec: &str) -> Result<Grid> {
    let mut groups = parse_groups(spec)?;
    let grid = match mode {
        SweepMode::Dropout => {
            let durations = take(&mut groups, &["durations", "duration"]).context("dropout grid needs `durations=`")?;
            if durations.iter().any(|d| *d < 0.0) {
                bail!("dropout durations must be non-negative");
            }
            Grid::Dropout { durations }
        }
        SweepMode::Corruption => {
            let rates = take(&mut groups, &["rates", "rate"]).context("corruption grid needs `rates=`")?;
            let p_corrupt =
                take(&mut groups, &["pcorrupt", "p_corrupt"]).context("corruption grid needs `pcorrupt=`")?;
            if rates.iter().any(|r| *r <= 0.0) {
                bail!("sensor rates must be positive");
            }
            if p_corrupt.iter().any(|p| !(0.0..=1.0).contains(p)) {
                bail!("corruption probabilities must lie in [0, 1]");
            }
            Grid::Corruption { rates, p_corrupt }
        }
    };
    if let Some((k, _)) = groups.first() {
        bail!("unknown grid key `{k}` for this mode");
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropout_grid() {
        let g = parse(SweepMode::Dropout, "durations=0,3,5,7,9").unwrap();
        assert_eq!(g, Grid::Dropout { durations: vec![0.0, 3.0, 5.0, 7.0, 9.0] });
    }

    #[test]
    fn corruption_grid() {
        let g = parse(SweepMode::Corruption, "rates=5,10,30;pcorrupt=0,0.25,0.5,0.75").unwrap();
        assert_eq!(g, Grid::Corruption { rates: vec![5.0, 10.0, 30.0], p_corrupt: vec![0.0, 0.25, 0.5, 0.75] });
    }

    #[test]
    fn rejects_bad_specs() {
        for (mode, spec) in [
            (SweepMode::Dropout, ""),
            (SweepMode::Dropout, "durations=1,x"),
            (SweepMode::Dropout, "durations=1;rates=5"),
            (SweepMode::Dropout, "durations=-1"),
            (SweepMode::Corruption, "rates=5"),
            (SweepMode::Corruption, "rates=5;pcorrupt=1.5"),
            (SweepMode::Corruption, "rates=5;rates=6;pcorrupt=0"),
            (SweepMode::Corruption, "rates"),
        ] {
            assert!(parse(mode, spec).is_err(), "{spec}");
        }
    }
}
