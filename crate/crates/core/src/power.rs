//! Peak and average microwave power for the three detection schemes.
//!
//! Power follows from the Rabi frequency through a radiation efficiency
//! `η` (kHz/√mW): `P = (Ω/η)²`. Cross-scheme comparisons are reported as
//! ratios, which do not depend on `η`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placeholder radiation efficiency in kHz/√mW. Replace with a measured value
/// for absolute numbers.
pub const DEFAULT_RADIATION_EFFICIENCY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    /// kHz of Rabi frequency per √mW.
    pub radiation_efficiency: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            radiation_efficiency: DEFAULT_RADIATION_EFFICIENCY,
        }
    }
}

impl PowerConfig {
    pub fn new(radiation_efficiency: f64) -> Result<Self> {
        let c = Self { radiation_efficiency };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radiation_efficiency > 0.0) || !self.radiation_efficiency.is_finite() {
            return Err(Error::invalid("radiation_efficiency", "must be finite and > 0"));
        }
        Ok(())
    }

    /// `(Ω/η)²` in mW.
    pub fn power_mw(&self, rabi_khz: f64) -> f64 {
        (rabi_khz / self.radiation_efficiency).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    /// `n` pulses at Rabi frequency `omega_pulse_khz`, half-spacing `tau_us`.
    /// `t_pi_us` defaults to `1/(2Ω)`.
    XyN {
        omega_pulse_khz: f64,
        n: u32,
        tau_us: f64,
        t_pi_us: Option<f64>,
    },
    Hhdr {
        omega_khz: f64,
    },
    /// Toggling between `2Ω′` and zero with equal dwell.
    PmHhdr {
        omega_prime_khz: f64,
    },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::XyN { .. } => "xy_n",
            Scheme::Hhdr { .. } => "hhdr",
            Scheme::PmHhdr { .. } => "pm_hhdr",
        }
    }

    /// The nominal drive amplitude: `Ω_pulse`, `Ω` or `Ω′`.
    pub fn driving_amplitude_khz(&self) -> f64 {
        match *self {
            Scheme::XyN { omega_pulse_khz, .. } => omega_pulse_khz,
            Scheme::Hhdr { omega_khz } => omega_khz,
            Scheme::PmHhdr { omega_prime_khz } => omega_prime_khz,
        }
    }

    /// Largest instantaneous Rabi frequency.
    pub fn max_rabi_khz(&self) -> f64 {
        match *self {
            Scheme::PmHhdr { omega_prime_khz } => 2.0 * omega_prime_khz,
            _ => self.driving_amplitude_khz(),
        }
    }

    /// Fraction of the sequence during which the drive is on.
    pub fn duty_cycle(&self) -> Result<f64> {
        match *self {
            Scheme::Hhdr { .. } => Ok(1.0),
            Scheme::PmHhdr { .. } => Ok(0.5),
            Scheme::XyN {
                omega_pulse_khz,
                n,
                tau_us,
                t_pi_us,
            } => {
                if n == 0 {
                    return Err(Error::invalid("n", "must be > 0"));
                }
                if !(tau_us > 0.0) {
                    return Err(Error::invalid("tau_us", "must be > 0"));
                }
                let t_pi = t_pi_us.unwrap_or(1e3 / (2.0 * omega_pulse_khz));
                if !(t_pi > 0.0) || !t_pi.is_finite() {
                    return Err(Error::invalid("t_pi_us", "must be > 0"));
                }
                let total = 2.0 * n as f64 * tau_us;
                let on = n as f64 * t_pi;
                if on > total {
                    return Err(Error::invalid(
                        "t_pi_us",
                        format!("n·t_pi = {on} µs exceeds the sequence length {total} µs"),
                    ));
                }
                Ok(on / total)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            Scheme::XyN { omega_pulse_khz, .. } => ("omega_pulse_khz", omega_pulse_khz),
            Scheme::Hhdr { omega_khz } => ("omega_khz", omega_khz),
            Scheme::PmHhdr { omega_prime_khz } => ("omega_prime_khz", omega_prime_khz),
        };
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub scheme: &'static str,
    pub rabi_khz: f64,
    pub max_rabi_khz: f64,
    pub duty_cycle: f64,
    pub peak_mw: f64,
    pub average_mw: f64,
}

pub fn power_for_scheme(cfg: &PowerConfig, scheme: &Scheme) -> Result<PowerEstimate> {
    cfg.validate()?;
    scheme.validate()?;
    let duty = scheme.duty_cycle()?;
    let peak = cfg.power_mw(scheme.max_rabi_khz());
    Ok(PowerEstimate {
        scheme: scheme.name(),
        rabi_khz: scheme.driving_amplitude_khz(),
        max_rabi_khz: scheme.max_rabi_khz(),
        duty_cycle: duty,
        peak_mw: peak,
        average_mw: peak * duty,
    })
}

/// Ratio of drive amplitudes `a / b`.
pub fn driving_field_ratio(a: &Scheme, b: &Scheme) -> f64 {
    a.driving_amplitude_khz() / b.driving_amplitude_khz()
}

/// Ratio of powers at the drive amplitudes, the square of [`driving_field_ratio`].
pub fn driving_power_ratio(a: &Scheme, b: &Scheme) -> f64 {
    driving_field_ratio(a, b).powi(2)
}

/// Ratio of peak fields `a / b`.
pub fn peak_field_ratio(a: &Scheme, b: &Scheme) -> f64 {
    a.max_rabi_khz() / b.max_rabi_khz()
}

/// Scheme settings for a power table across static fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSettings {
    pub omega_prime_khz: f64,
    /// XY pulse Rabi frequency as a multiple of the nuclear Larmor frequency.
    pub xy_rabi_per_larmor: f64,
    pub xy_n: u32,
    pub gamma_n_khz_per_gauss: f64,
}

impl Default for TableSettings {
    fn default() -> Self {
        Self {
            omega_prime_khz: 104.0,
            xy_rabi_per_larmor: 10.0,
            xy_n: 32,
            gamma_n_khz_per_gauss: 1.07084,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerRow {
    pub b_z_gauss: f64,
    pub estimate: PowerEstimate,
}

/// One row per scheme and field. HHDR drives at the bare Larmor frequency,
/// XY-N sits on its first resonance `τ = 1/(4 γ_n B)`.
pub fn power_table(cfg: &PowerConfig, fields_gauss: &[f64], s: &TableSettings) -> Result<Vec<PowerRow>> {
    if !(s.xy_rabi_per_larmor >= 1.0) {
        return Err(Error::invalid("xy_rabi_per_larmor", "must be >= 1 so pulses fit between echoes"));
    }
    let mut rows = Vec::with_capacity(3 * fields_gauss.len());
    for &b in fields_gauss {
        if !(b > 0.0) {
            return Err(Error::invalid("b_z_gauss", "must be > 0"));
        }
        let larmor = s.gamma_n_khz_per_gauss * b;
        let schemes = [
            Scheme::XyN {
                omega_pulse_khz: s.xy_rabi_per_larmor * larmor,
                n: s.xy_n,
                tau_us: 1e3 / (4.0 * larmor),
                t_pi_us: None,
            },
            Scheme::Hhdr { omega_khz: larmor },
            Scheme::PmHhdr {
                omega_prime_khz: s.omega_prime_khz,
            },
        ];
        for sc in &schemes {
            rows.push(PowerRow {
                b_z_gauss: b,
                estimate: power_for_scheme(cfg, sc)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_power_csv<W: Write>(rows: &[PowerRow], mut w: W) -> Result<()> {
    writeln!(w, "scheme,B_z,rabi_khz,peak_mw,avg_mw")?;
    for r in rows {
        let e = &r.estimate;
        writeln!(w, "{},{},{},{},{}", e.scheme, r.b_z_gauss, e.rabi_khz, e.peak_mw, e.average_mw)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PowerConfig {
        PowerConfig::default()
    }

    #[test]
    fn hhdr_versus_pm() {
        let hh = Scheme::Hhdr { omega_khz: 1970.0 };
        let pm = Scheme::PmHhdr { omega_prime_khz: 104.0 };
        assert_eq!(driving_field_ratio(&hh, &pm), 1970.0 / 104.0);
        assert!((peak_field_ratio(&hh, &pm) - 9.4712).abs() < 1e-3);
        let a = power_for_scheme(&cfg(), &hh).unwrap();
        let b = power_for_scheme(&cfg(), &pm).unwrap();
        assert!((a.peak_mw / b.peak_mw - 89.70).abs() < 0.01);
        assert_eq!(b.average_mw, 0.5 * b.peak_mw);
        assert_eq!(a.average_mw, a.peak_mw);
    }

    #[test]
    fn xy_ratio_is_exact() {
        let pm = Scheme::PmHhdr { omega_prime_khz: 104.0 };
        let xy = Scheme::XyN {
            omega_pulse_khz: 250.0 * 104.0,
            n: 32,
            tau_us: 10.0,
            t_pi_us: None,
        };
        assert_eq!(driving_field_ratio(&xy, &pm), 250.0);
        assert_eq!(driving_power_ratio(&xy, &pm), 62_500.0);
    }

    #[test]
    fn xy_duty_cycle() {
        let xy = Scheme::XyN {
            omega_pulse_khz: 500.0,
            n: 8,
            tau_us: 2.0,
            t_pi_us: None,
        };
        // t_π = 1 µs, total 32 µs
        assert!((xy.duty_cycle().unwrap() - 0.25).abs() < 1e-15);
        let bad = Scheme::XyN {
            omega_pulse_khz: 500.0,
            n: 8,
            tau_us: 0.4,
            t_pi_us: None,
        };
        assert!(bad.duty_cycle().is_err());
    }

    #[test]
    fn quadratic_scaling_and_efficiency() {
        let c = cfg();
        let p1 = power_for_scheme(&c, &Scheme::Hhdr { omega_khz: 300.0 }).unwrap();
        let p2 = power_for_scheme(&c, &Scheme::Hhdr { omega_khz: 600.0 }).unwrap();
        assert_eq!(p2.peak_mw / p1.peak_mw, 4.0);
        let c2 = PowerConfig::new(2.0 * c.radiation_efficiency).unwrap();
        let p3 = power_for_scheme(&c2, &Scheme::Hhdr { omega_khz: 300.0 }).unwrap();
        assert_eq!(p3.peak_mw, p1.peak_mw / 4.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PowerConfig::new(0.0).is_err());
        let c = PowerConfig { radiation_efficiency: 0.0 };
        assert!(power_for_scheme(&c, &Scheme::Hhdr { omega_khz: 1.0 }).is_err());
        assert!(power_for_scheme(&cfg(), &Scheme::PmHhdr { omega_prime_khz: -1.0 }).is_err());
    }

    #[test]
    fn table_csv() {
        let rows = power_table(&cfg(), &[525.0, 1840.0, 3015.0], &TableSettings::default()).unwrap();
        assert_eq!(rows.len(), 9);
        for r in &rows {
            assert!(r.estimate.average_mw <= r.estimate.peak_mw);
        }
        let mut buf = Vec::new();
        write_power_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("scheme,B_z,rabi_khz,peak_mw,avg_mw\n"));
        assert_eq!(s.lines().count(), 10);
    }
}
