//! C ABI over `nvdr`.
//!
//! Objects are opaque heap handles created by `nvdr_*_new`/`nvdr_sweep_*`/
//! `nvdr_fit` and released with the matching `*_free`. Every call returns an
//! [`NvdrStatus`]; on failure a message is kept per thread and can be copied
//! out with [`nvdr_last_error`]. Panics never cross the boundary.
//!
//! Units follow the Rust crate: kHz, µs, Gauss.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nvdr::power::{power_for_scheme, PowerConfig, Scheme};
use nvdr::spectroscopy::{
    fit_spectrum, pm_dressed_shift_khz, predict_pm_resonances, run_sweep, AmplitudeNoise, FitOptions, ProtocolParams,
    SweptParameter,
};
use nvdr::{DipReport, Error, HyperfineVector, NuclearSpinSpec, ProtocolTag, Spectrum, SpinSystemSpec, SweepPlan};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    /// A simulation step failed (non-unitary propagator, bad grid point, ...).
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    IndexOutOfRange = 7,
    Panic = 8,
}

/// Spin system: field plus up to five nuclei.
pub struct NvdrSystem(SpinSystemSpec);

/// Swept spectrum.
pub struct NvdrSpectrum(Spectrum);

/// Fitted dips of one spectrum.
pub struct NvdrDipReport(DipReport);

/// Linear sweep grid `start, start + step, ..., stop`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NvdrGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Reject frequency grids finer than the 2 kHz hardware resolution.
    pub emulate_resolution: bool,
}

/// Multiplicative amplitude noise averaged over `shots` seeded realisations.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NvdrNoise {
    pub relative_std: f64,
    pub shots: u32,
    pub seed: u64,
}

/// One fitted dip. `a_par_khz` is NaN when no coupling could be assigned.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvdrDip {
    pub center_khz: f64,
    /// Full width at half minimum.
    pub width_khz: f64,
    pub depth: f64,
    pub a_par_khz: f64,
    pub center_stderr: f64,
    pub width_stderr: f64,
}

/// Peak and duty-cycle-averaged microwave power of one scheme (mW).
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NvdrPower {
    pub max_rabi_khz: f64,
    pub duty_cycle: f64,
    pub peak_mw: f64,
    pub average_mw: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: NvdrStatus,
    message: String,
}

impl Failure {
    fn new(status: NvdrStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse(_) => NvdrStatus::Parse,
            Error::Io(_) => NvdrStatus::Io,
            Error::GridPoint { .. }
            | Error::Numerical(_)
            | Error::NotUnitary { .. }
            | Error::NotHermitian { .. }
            | Error::SampleOutOfRange { .. }
            | Error::DimensionMismatch { .. } => NvdrStatus::Numerical,
            _ => NvdrStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> NvdrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NvdrStatus::Ok
        }
        Ok(Err(fail)) => {
            set_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            NvdrStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(NvdrStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(NvdrStatus::NullPointer, format!("`{what}` is null")))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::new(NvdrStatus::NullPointer, format!("`{what}` is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(NvdrStatus::NullPointer, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(NvdrStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

fn publish<T>(out: *mut *mut T, value: T) -> Outcome {
    // SAFETY: `out` was checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Outcome {
    if out.is_null() {
        return Err(Failure::new(NvdrStatus::NullPointer, "`out` is null"));
    }
    // SAFETY: non-null, and the caller promises it is writable.
    unsafe { *out = std::ptr::null_mut() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nvdr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap - 1` bytes) and returns its full length in bytes, or 0 if
/// the last call succeeded. `buf` may be null when `cap` is 0.
///
/// # Safety
/// `buf` must be valid for `cap` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn nvdr_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && cap > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates a system at static field `b_z_gauss` with no nuclei.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn nvdr_system_new(b_z_gauss: f64, out: *mut *mut NvdrSystem) -> NvdrStatus {
    guard(|| {
        check_out(out)?;
        let sys = SpinSystemSpec::new(b_z_gauss)?;
        publish(out, NvdrSystem(sys))
    })
}

/// Adds a nucleus with the given hyperfine couplings (kHz). `label` may be null.
/// `bath_proxy` only tags the nucleus as standing in for the unresolved bath.
///
/// # Safety
/// `sys` must come from `nvdr_system_new`; `label` must be null or a valid C string.
#[no_mangle]
pub unsafe extern "C" fn nvdr_system_add_nucleus(
    sys: *mut NvdrSystem,
    label: *const c_char,
    a_par_khz: f64,
    a_perp_khz: f64,
    bath_proxy: bool,
) -> NvdrStatus {
    guard(|| {
        let sys = deref_mut(sys, "sys")?;
        let label = if label.is_null() {
            format!("n{}", sys.0.n_nuclei())
        } else {
            c_str(label, "label")?.to_string()
        };
        let mut n = NuclearSpinSpec::new(label, HyperfineVector::from_par_perp(a_par_khz, a_perp_khz));
        if bath_proxy {
            n = n.bath_proxy();
        }
        sys.0 = sys.0.clone().with_nucleus(n)?;
        Ok(())
    })
}

/// # Safety
/// `sys` must come from `nvdr_system_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_system_n_nuclei(sys: *const NvdrSystem, out: *mut usize) -> NvdrStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(sys, "sys")?.0.n_nuclei();
        Ok(())
    })
}

/// Bare nuclear Larmor frequency γ_n·B (kHz).
///
/// # Safety
/// `sys` must come from `nvdr_system_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_system_larmor_khz(sys: *const NvdrSystem, out: *mut f64) -> NvdrStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(sys, "sys")?.0.larmor_khz();
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or come from `nvdr_system_new`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvdr_system_free(sys: *mut NvdrSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

unsafe fn sweep(
    sys: *const NvdrSystem,
    protocol: ProtocolTag,
    swept: SweptParameter,
    grid: NvdrGrid,
    fixed: ProtocolParams,
    noise: *const NvdrNoise,
    out: *mut *mut NvdrSpectrum,
) -> NvdrStatus {
    guard(|| {
        check_out(out)?;
        let sys = &deref(sys, "sys")?.0;
        let xs = SweepPlan::linear_grid(grid.start, grid.stop, grid.step)?;
        let plan = if grid.emulate_resolution {
            SweepPlan::new(protocol, swept, xs, fixed)?
        } else {
            SweepPlan::unfloored(protocol, swept, xs, fixed)?
        };
        let noise = match noise.as_ref() {
            Some(n) => Some(AmplitudeNoise::new(n.relative_std, n.shots, n.seed)?),
            None => None,
        };
        let spec = run_sweep(sys, &plan, noise.as_ref())?;
        publish(out, NvdrSpectrum(spec))
    })
}

/// PM-HHDR spectrum versus modulation frequency ν (kHz) at fixed Ω′ and t_f.
/// `noise` may be null for a noiseless sweep.
///
/// # Safety
/// Pointers must be valid or null where allowed; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_sweep_pm_hhdr(
    sys: *const NvdrSystem,
    omega_prime_khz: f64,
    t_f_us: f64,
    grid: NvdrGrid,
    noise: *const NvdrNoise,
    out: *mut *mut NvdrSpectrum,
) -> NvdrStatus {
    let fixed = ProtocolParams {
        omega_prime_khz,
        t_f_us,
        ..Default::default()
    };
    sweep(sys, ProtocolTag::PmHhdr, SweptParameter::Nu, grid, fixed, noise, out)
}

/// HHDR spectrum versus drive amplitude Ω (kHz) at fixed t_f.
///
/// # Safety
/// As for [`nvdr_sweep_pm_hhdr`].
#[no_mangle]
pub unsafe extern "C" fn nvdr_sweep_hhdr(
    sys: *const NvdrSystem,
    t_f_us: f64,
    grid: NvdrGrid,
    noise: *const NvdrNoise,
    out: *mut *mut NvdrSpectrum,
) -> NvdrStatus {
    let fixed = ProtocolParams {
        t_f_us,
        ..Default::default()
    };
    sweep(sys, ProtocolTag::Hhdr, SweptParameter::Omega, grid, fixed, noise, out)
}

/// XY-N spectrum versus half-spacing τ (µs) with ideal π pulses.
///
/// # Safety
/// As for [`nvdr_sweep_pm_hhdr`].
#[no_mangle]
pub unsafe extern "C" fn nvdr_sweep_xy(
    sys: *const NvdrSystem,
    n_pulses: u32,
    grid: NvdrGrid,
    noise: *const NvdrNoise,
    out: *mut *mut NvdrSpectrum,
) -> NvdrStatus {
    let fixed = ProtocolParams {
        n_pulses,
        ..Default::default()
    };
    sweep(sys, ProtocolTag::XyN, SweptParameter::Tau, grid, fixed, noise, out)
}

/// Runs the sweep described by a TOML experiment config (same format as the
/// `nvdr sweep --config` file).
///
/// # Safety
/// `config_toml` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_sweep_config(config_toml: *const c_char, out: *mut *mut NvdrSpectrum) -> NvdrStatus {
    guard(|| {
        check_out(out)?;
        let cfg = nvdr::config::ExperimentConfig::from_toml_str(c_str(config_toml, "config_toml")?)?;
        let spec = run_sweep(&cfg.spin_system()?, &cfg.sweep_plan()?, cfg.noise()?.as_ref())?;
        publish(out, NvdrSpectrum(spec))
    })
}

/// # Safety
/// `spec` must come from a sweep call; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_spectrum_len(spec: *const NvdrSpectrum, out: *mut usize) -> NvdrStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(spec, "spec")?.0.len();
        Ok(())
    })
}

/// Copies the swept values and signals into `xs` and `ys`, each of capacity
/// `cap`. Fails with `BUFFER_TOO_SMALL` if `cap` is below the spectrum length.
///
/// # Safety
/// `xs` and `ys` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn nvdr_spectrum_copy(
    spec: *const NvdrSpectrum,
    xs: *mut f64,
    ys: *mut f64,
    cap: usize,
) -> NvdrStatus {
    guard(|| {
        let spec = &deref(spec, "spec")?.0;
        let n = spec.len();
        if cap < n {
            return Err(Failure::new(
                NvdrStatus::BufferTooSmall,
                format!("need {n} entries, got {cap}"),
            ));
        }
        let xs = out_slice(xs, n, "xs")?;
        let ys = out_slice(ys, n, "ys")?;
        for (i, &(x, y)) in spec.points.iter().enumerate() {
            xs[i] = x;
            ys[i] = y;
        }
        Ok(())
    })
}

/// Writes the spectrum as CSV to `path`.
///
/// # Safety
/// `path` must be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn nvdr_spectrum_write_csv(spec: *const NvdrSpectrum, path: *const c_char) -> NvdrStatus {
    guard(|| {
        let spec = &deref(spec, "spec")?.0;
        let path = c_str(path, "path")?;
        let f = std::fs::File::create(path).map_err(Error::from)?;
        let mut w = std::io::BufWriter::new(f);
        nvdr::spectroscopy::io::write_spectrum_csv(spec, &mut w)?;
        std::io::Write::flush(&mut w).map_err(Error::from)?;
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or come from a sweep call, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvdr_spectrum_free(spec: *mut NvdrSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Fits up to `max_dips` Lorentzian dips with default detection settings.
///
/// # Safety
/// `spec` must come from a sweep call; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_fit(spec: *const NvdrSpectrum, max_dips: usize, out: *mut *mut NvdrDipReport) -> NvdrStatus {
    guard(|| {
        check_out(out)?;
        let spec = &deref(spec, "spec")?.0;
        let opts = FitOptions {
            max_dips,
            ..Default::default()
        };
        let report = fit_spectrum(spec, &opts)?;
        publish(out, NvdrDipReport(report))
    })
}

/// # Safety
/// `report` must come from `nvdr_fit`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_report_len(report: *const NvdrDipReport, out: *mut usize) -> NvdrStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(report, "report")?.0.dips.len();
        Ok(())
    })
}

/// RMS residual of the fit.
///
/// # Safety
/// `report` must come from `nvdr_fit`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_report_residual(report: *const NvdrDipReport, out: *mut f64) -> NvdrStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(report, "report")?.0.fit_residual;
        Ok(())
    })
}

/// Dips are ordered by center.
///
/// # Safety
/// `report` must come from `nvdr_fit`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_report_dip(report: *const NvdrDipReport, index: usize, out: *mut NvdrDip) -> NvdrStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let dips = &deref(report, "report")?.0.dips;
        let d = dips.get(index).ok_or_else(|| {
            Failure::new(
                NvdrStatus::IndexOutOfRange,
                format!("dip {index} of {}", dips.len()),
            )
        })?;
        *out = NvdrDip {
            center_khz: d.center_khz,
            width_khz: d.width_khz,
            depth: d.depth,
            a_par_khz: d.a_par_khz.unwrap_or(f64::NAN),
            center_stderr: d.center_stderr,
            width_stderr: d.width_stderr,
        };
        Ok(())
    })
}

/// # Safety
/// `report` must be null or come from `nvdr_fit`, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nvdr_report_free(report: *mut NvdrDipReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// First-order PM sideband positions ν∓ (kHz), one per nucleus in insertion
/// order. `cap` must be at least the nucleus count.
///
/// # Safety
/// `nu_minus` and `nu_plus` must be valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn nvdr_predict_pm(
    sys: *const NvdrSystem,
    omega_prime_khz: f64,
    nu_minus: *mut f64,
    nu_plus: *mut f64,
    cap: usize,
) -> NvdrStatus {
    guard(|| {
        let sys = &deref(sys, "sys")?.0;
        if !(omega_prime_khz >= 0.0) || !omega_prime_khz.is_finite() {
            return Err(Failure::new(
                NvdrStatus::InvalidArgument,
                "omega_prime_khz must be finite and >= 0",
            ));
        }
        let n = sys.n_nuclei();
        if cap < n {
            return Err(Failure::new(
                NvdrStatus::BufferTooSmall,
                format!("need {n} entries, got {cap}"),
            ));
        }
        let lo = out_slice(nu_minus, n, "nu_minus")?;
        let hi = out_slice(nu_plus, n, "nu_plus")?;
        for (i, r) in predict_pm_resonances(sys, omega_prime_khz).iter().enumerate() {
            lo[i] = r.nu_minus_khz;
            hi[i] = r.nu_plus_khz;
        }
        Ok(())
    })
}

/// Mean second-order shift of the PM sidebands (kHz); subtract from ν₋.
///
/// # Safety
/// `sys` must come from `nvdr_system_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_pm_dressed_shift(sys: *const NvdrSystem, omega_prime_khz: f64, out: *mut f64) -> NvdrStatus {
    guard(|| {
        *deref_mut(out, "out")? = pm_dressed_shift_khz(&deref(sys, "sys")?.0, omega_prime_khz);
        Ok(())
    })
}

unsafe fn power(efficiency: f64, scheme: Scheme, out: *mut NvdrPower) -> NvdrStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let p = power_for_scheme(&PowerConfig::new(efficiency)?, &scheme)?;
        *out = NvdrPower {
            max_rabi_khz: p.max_rabi_khz,
            duty_cycle: p.duty_cycle,
            peak_mw: p.peak_mw,
            average_mw: p.average_mw,
        };
        Ok(())
    })
}

/// Power for continuous HHDR at Rabi frequency `omega_khz`, given the radiation
/// efficiency in kHz/√mW.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_power_hhdr(efficiency: f64, omega_khz: f64, out: *mut NvdrPower) -> NvdrStatus {
    power(efficiency, Scheme::Hhdr { omega_khz }, out)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_power_pm_hhdr(efficiency: f64, omega_prime_khz: f64, out: *mut NvdrPower) -> NvdrStatus {
    power(efficiency, Scheme::PmHhdr { omega_prime_khz }, out)
}

/// XY-N with square π pulses of Rabi frequency `omega_pulse_khz`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvdr_power_xy(
    efficiency: f64,
    omega_pulse_khz: f64,
    n_pulses: u32,
    tau_us: f64,
    out: *mut NvdrPower,
) -> NvdrStatus {
    let scheme = Scheme::XyN {
        omega_pulse_khz,
        n: n_pulses,
        tau_us,
        t_pi_us: None,
    };
    power(efficiency, scheme, out)
}
