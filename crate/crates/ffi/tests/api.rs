use std::ffi::{c_char, CStr};
use std::ptr::{null, null_mut};

use nvdr_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { nvdr_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn system(b: f64, nuclei: &[(f64, f64)]) -> *mut NvdrSystem {
    let mut sys = null_mut();
    assert_eq!(unsafe { nvdr_system_new(b, &mut sys) }, NvdrStatus::Ok);
    for &(a, p) in nuclei {
        assert_eq!(unsafe { nvdr_system_add_nucleus(sys, null(), a, p, false) }, NvdrStatus::Ok);
    }
    sys
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(nvdr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn invalid_field_reports_error() {
    let mut sys = 0x1 as *mut NvdrSystem;
    assert_eq!(unsafe { nvdr_system_new(-5.0, &mut sys) }, NvdrStatus::InvalidArgument);
    assert!(sys.is_null());
    assert!(last_error().contains("b_z"), "{}", last_error());
    // success clears it
    let ok = system(1840.0, &[]);
    assert_eq!(unsafe { nvdr_last_error(null_mut(), 0) }, 0);
    unsafe { nvdr_system_free(ok) };
}

#[test]
fn null_handles_are_rejected() {
    let mut n = 0usize;
    assert_eq!(unsafe { nvdr_system_n_nuclei(null(), &mut n) }, NvdrStatus::NullPointer);
    assert_eq!(unsafe { nvdr_system_new(1.0, null_mut()) }, NvdrStatus::NullPointer);
    assert_eq!(unsafe { nvdr_fit(null(), 3, null_mut()) }, NvdrStatus::NullPointer);
    unsafe {
        nvdr_system_free(null_mut());
        nvdr_spectrum_free(null_mut());
        nvdr_report_free(null_mut());
    }
}

#[test]
fn too_many_nuclei() {
    let sys = system(1840.0, &[(1.0, 10.0); 5]);
    assert_eq!(unsafe { nvdr_system_add_nucleus(sys, null(), 1.0, 10.0, false) }, NvdrStatus::InvalidArgument);
    let mut n = 0;
    unsafe { nvdr_system_n_nuclei(sys, &mut n) };
    assert_eq!(n, 5);
    unsafe { nvdr_system_free(sys) };
}

#[test]
fn predict_pm_sidebands() {
    let sys = system(1840.0, &[(-11.3, 40.0)]);
    let (mut lo, mut hi) = ([0.0; 1], [0.0; 1]);
    assert_eq!(unsafe { nvdr_predict_pm(sys, 104.0, lo.as_mut_ptr(), hi.as_mut_ptr(), 1) }, NvdrStatus::Ok);
    assert!((lo[0] - 1871.996).abs() < 1e-3 && (hi[0] - 2079.996).abs() < 1e-3);
    assert_eq!(unsafe { nvdr_predict_pm(sys, 104.0, lo.as_mut_ptr(), hi.as_mut_ptr(), 0) }, NvdrStatus::BufferTooSmall);
    unsafe { nvdr_system_free(sys) };
}

#[test]
fn pm_sweep_and_fit() {
    let sys = system(1840.0, &[(-11.3, 40.0)]);
    let grid = NvdrGrid { start: 1850.0, stop: 1894.0, step: 2.0, emulate_resolution: true };
    let noise = NvdrNoise { relative_std: 0.005, shots: 2, seed: 9 };
    let mut spec = null_mut();
    assert_eq!(unsafe { nvdr_sweep_pm_hhdr(sys, 104.0, 300.0, grid, &noise, &mut spec) }, NvdrStatus::Ok);
    let mut n = 0;
    unsafe { nvdr_spectrum_len(spec, &mut n) };
    assert_eq!(n, 23);
    let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { nvdr_spectrum_copy(spec, xs.as_mut_ptr(), ys.as_mut_ptr(), n) }, NvdrStatus::Ok);
    assert_eq!(xs[0], 1850.0);
    assert!(ys.iter().all(|y| (-0.1..=1.1).contains(y)));
    assert_eq!(unsafe { nvdr_spectrum_copy(spec, xs.as_mut_ptr(), ys.as_mut_ptr(), n - 1) }, NvdrStatus::BufferTooSmall);

    let mut report = null_mut();
    assert_eq!(unsafe { nvdr_fit(spec, 3, &mut report) }, NvdrStatus::Ok);
    let mut k = 0;
    unsafe { nvdr_report_len(report, &mut k) };
    assert!(k >= 1);
    let mut dip = NvdrDip::default();
    let best = (0..k)
        .map(|i| {
            unsafe { nvdr_report_dip(report, i, &mut dip) };
            dip
        })
        .max_by(|a, b| a.depth.total_cmp(&b.depth))
        .unwrap();
    assert!((best.center_khz - 1872.0).abs() < 2.0, "{best:?}");
    assert!((best.a_par_khz + 11.3).abs() < 4.0, "{best:?}");
    assert_eq!(unsafe { nvdr_report_dip(report, k, &mut dip) }, NvdrStatus::IndexOutOfRange);
    unsafe {
        nvdr_report_free(report);
        nvdr_spectrum_free(spec);
        nvdr_system_free(sys);
    }
}

#[test]
fn fine_grid_needs_resolution_off() {
    let sys = system(1840.0, &[(-11.3, 40.0)]);
    let mut grid = NvdrGrid { start: 1860.0, stop: 1880.0, step: 0.5, emulate_resolution: true };
    let mut spec = null_mut();
    assert_eq!(unsafe { nvdr_sweep_pm_hhdr(sys, 104.0, 100.0, grid, null(), &mut spec) }, NvdrStatus::InvalidArgument);
    grid.emulate_resolution = false;
    assert_eq!(unsafe { nvdr_sweep_pm_hhdr(sys, 104.0, 100.0, grid, null(), &mut spec) }, NvdrStatus::Ok);
    unsafe {
        nvdr_spectrum_free(spec);
        nvdr_system_free(sys);
    }
}

#[test]
fn hhdr_and_xy_sweeps() {
    let sys = system(1840.0, &[(-11.3, 40.0)]);
    let mut spec = null_mut();
    let grid = NvdrGrid { start: 1950.0, stop: 2000.0, step: 2.0, emulate_resolution: true };
    assert_eq!(unsafe { nvdr_sweep_hhdr(sys, 200.0, grid, null(), &mut spec) }, NvdrStatus::Ok);
    unsafe { nvdr_spectrum_free(spec) };
    let grid = NvdrGrid { start: 0.1, stop: 0.3, step: 0.01, emulate_resolution: true };
    assert_eq!(unsafe { nvdr_sweep_xy(sys, 16, grid, null(), &mut spec) }, NvdrStatus::Ok);
    let mut n = 0;
    unsafe { nvdr_spectrum_len(spec, &mut n) };
    assert_eq!(n, 21);
    unsafe { nvdr_spectrum_free(spec) };
    assert_eq!(unsafe { nvdr_sweep_xy(sys, 12, grid, null(), &mut spec) }, NvdrStatus::InvalidArgument);
    assert!(last_error().contains("n_pulses"));
    unsafe { nvdr_system_free(sys) };
}

#[test]
fn config_sweep_and_csv() {
    let toml = c"
[system]
b_z_gauss = 1840.0
[[system.nuclei]]
label = \"C1\"
a_par_khz = -11.3
a_perp_khz = 40.0
[protocol]
kind = \"pm_hhdr\"
omega_prime_khz = 104.0
t_f_us = 300.0
[sweep]
parameter = \"nu\"
start = 1850.0
stop = 1894.0
step = 2.0
";
    let mut spec = null_mut();
    assert_eq!(unsafe { nvdr_sweep_config(toml.as_ptr(), &mut spec) }, NvdrStatus::Ok);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let cpath = std::ffi::CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { nvdr_spectrum_write_csv(spec, cpath.as_ptr()) }, NvdrStatus::Ok);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("# protocol=pm_hhdr swept=nu"));
    unsafe { nvdr_spectrum_free(spec) };

    assert_eq!(unsafe { nvdr_sweep_config(c"[system]\nb_z_gauss = ".as_ptr(), &mut spec) }, NvdrStatus::Parse);
    assert_eq!(unsafe { nvdr_sweep_config(c"[system]\nb_z_gauss = 1.0\nfoo = 2".as_ptr(), &mut spec) }, NvdrStatus::Parse);
    assert!(last_error().contains("foo"));
}

#[test]
fn power_ratio() {
    let (mut pm, mut hh) = (NvdrPower::default(), NvdrPower::default());
    assert_eq!(unsafe { nvdr_power_pm_hhdr(100.0, 104.0, &mut pm) }, NvdrStatus::Ok);
    assert_eq!(unsafe { nvdr_power_hhdr(100.0, 1970.0, &mut hh) }, NvdrStatus::Ok);
    assert!((hh.peak_mw / pm.peak_mw - 89.7).abs() < 0.05);
    assert_eq!(pm.duty_cycle, 0.5);
    assert_eq!(unsafe { nvdr_power_hhdr(0.0, 1970.0, &mut hh) }, NvdrStatus::InvalidArgument);
    let mut xy = NvdrPower::default();
    assert_eq!(unsafe { nvdr_power_xy(100.0, 10000.0, 32, 10.0, &mut xy) }, NvdrStatus::Ok);
    assert!(xy.average_mw < xy.peak_mw);
}

#[test]
fn dressed_shift() {
    let sys = system(3015.0, &[(-29.0, 30.0), (31.0, 30.0), (52.0, 30.0), (10.0, 15.0)]);
    let mut s = 0.0;
    assert_eq!(unsafe { nvdr_pm_dressed_shift(sys, 200.0, &mut s) }, NvdrStatus::Ok);
    let expect = (29.0f64.powi(2) + 31.0f64.powi(2) + 52.0f64.powi(2) + 10.0f64.powi(2)) / 1600.0;
    assert!((s - expect).abs() < 1e-12);
    unsafe { nvdr_system_free(sys) };
}
