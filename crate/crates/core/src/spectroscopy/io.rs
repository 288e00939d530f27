//! Spectrum CSV and dip-report JSON.

use std::io::{BufRead, Write};

use serde::Serialize;

use super::fit::{CouplingContext, DipReport};
use super::sweep::Spectrum;
use crate::error::{Error, Result};

/// Writes `# protocol=… swept=… shots=… seed=…`, a second comment line with
/// the values needed to turn dip positions into couplings, a column header,
/// then `x,signal` rows.
pub fn write_spectrum_csv<W: Write>(spec: &Spectrum, mut w: W) -> Result<()> {
    let seed = spec.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    writeln!(
        w,
        "# protocol={} swept={} shots={} seed={}",
        spec.plan.protocol,
        spec.plan.swept.as_str(),
        spec.shots,
        seed
    )?;
    writeln!(
        w,
        "# larmor_khz={} omega_prime_khz={}",
        spec.larmor_khz, spec.plan.fixed.omega_prime_khz
    )?;
    writeln!(w, "x,signal")?;
    for (x, y) in &spec.points {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

/// Contents of a spectrum CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvSpectrum {
    pub protocol: Option<String>,
    pub swept: Option<String>,
    pub shots: Option<u32>,
    pub seed: Option<u64>,
    pub larmor_khz: Option<f64>,
    pub omega_prime_khz: Option<f64>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl CsvSpectrum {
    /// Coupling context recovered from the header, if it carries enough information.
    pub fn coupling_context(&self) -> CouplingContext {
        let Some(l) = self.larmor_khz else {
            return CouplingContext::None;
        };
        match (self.protocol.as_deref(), self.swept.as_deref()) {
            (Some("pm_hhdr"), Some("nu")) => match self.omega_prime_khz {
                Some(op) => CouplingContext::PmNu {
                    larmor_khz: l,
                    omega_prime_khz: op,
                },
                None => CouplingContext::None,
            },
            (Some("hhdr"), Some("omega")) => CouplingContext::HhdrOmega { larmor_khz: l },
            (Some("xy_n"), Some("tau")) => CouplingContext::XyTau { larmor_khz: l },
            _ => CouplingContext::None,
        }
    }
}

pub fn read_spectrum_csv<R: BufRead>(r: R) -> Result<CsvSpectrum> {
    let mut out = CsvSpectrum {
        protocol: None,
        swept: None,
        shots: None,
        seed: None,
        larmor_khz: None,
        omega_prime_khz: None,
        xs: Vec::new(),
        ys: Vec::new(),
    };
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                let Some((k, v)) = kv.split_once('=') else { continue };
                match k {
                    "protocol" => out.protocol = Some(v.to_string()),
                    "swept" => out.swept = Some(v.to_string()),
                    "shots" => out.shots = v.parse().ok(),
                    "seed" => out.seed = v.parse().ok(),
                    "larmor_khz" => out.larmor_khz = v.parse().ok(),
                    "omega_prime_khz" => out.omega_prime_khz = v.parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        if line.starts_with("x,") {
            continue;
        }
        let bad = || Error::Parse(format!("line {}: expected `x,signal`, got `{line}`", lineno + 1));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        let x: f64 = a.trim().parse().map_err(|_| bad())?;
        let y: f64 = b.trim().parse().map_err(|_| bad())?;
        out.xs.push(x);
        out.ys.push(y);
    }
    Ok(out)
}

pub fn report_json(report: &DipReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::ProtocolTag;
    use crate::spectroscopy::sweep::{ProtocolParams, SweepPlan, SweptParameter};

    #[test]
    fn csv_round_trip() {
        let plan = SweepPlan::new(ProtocolTag::PmHhdr, SweptParameter::Nu, vec![1.0, 3.0], ProtocolParams::default()).unwrap();
        let spec = Spectrum {
            points: vec![(1.0, 0.25), (3.0, 1.0 / 3.0)],
            plan,
            shots: 20,
            seed: Some(7),
            larmor_khz: 1970.0,
        };
        let mut buf = Vec::new();
        write_spectrum_csv(&spec, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# protocol=pm_hhdr swept=nu shots=20 seed=7\n"));
        let back = read_spectrum_csv(&buf[..]).unwrap();
        assert_eq!(back.xs, spec.xs());
        assert_eq!(back.ys, spec.ys());
        assert_eq!(back.shots, Some(20));
        assert_eq!(back.protocol.as_deref(), Some("pm_hhdr"));
        assert_eq!(back.larmor_khz, Some(1970.0));
        assert_eq!(
            back.coupling_context(),
            CouplingContext::PmNu {
                larmor_khz: 1970.0,
                omega_prime_khz: 104.0
            }
        );
    }

    #[test]
    fn malformed_row_is_a_parse_error() {
        let text = "x,signal\n1.0,abc\n";
        assert!(matches!(read_spectrum_csv(text.as_bytes()), Err(Error::Parse(_))));
    }
}
