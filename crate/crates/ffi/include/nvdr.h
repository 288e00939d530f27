#ifndef NVDR_H
#define NVDR_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result code of every exported function.
 */
typedef enum NvdrStatus {
  NVDR_STATUS_OK = 0,
  NVDR_STATUS_NULL_POINTER = 1,
  NVDR_STATUS_INVALID_ARGUMENT = 2,
  NVDR_STATUS_PARSE = 3,
  /*
   A simulation step failed (non-unitary propagator, bad grid point, ...).
   */
  NVDR_STATUS_NUMERICAL = 4,
  NVDR_STATUS_IO = 5,
  NVDR_STATUS_BUFFER_TOO_SMALL = 6,
  NVDR_STATUS_INDEX_OUT_OF_RANGE = 7,
  NVDR_STATUS_PANIC = 8,
} NvdrStatus;

/*
 Fitted dips of one spectrum.
 */
typedef struct NvdrDipReport NvdrDipReport;

/*
 Swept spectrum.
 */
typedef struct NvdrSpectrum NvdrSpectrum;

/*
 Spin system: field plus up to five nuclei.
 */
typedef struct NvdrSystem NvdrSystem;

/*
 Linear sweep grid `start, start + step, ..., stop`.
 */
typedef struct NvdrGrid {
  double start;
  double stop;
  double step;
  /*
   Reject frequency grids finer than the 2 kHz hardware resolution.
   */
  bool emulate_resolution;
} NvdrGrid;

/*
 Multiplicative amplitude noise averaged over `shots` seeded realisations.
 */
typedef struct NvdrNoise {
  double relative_std;
  uint32_t shots;
  uint64_t seed;
} NvdrNoise;

/*
 One fitted dip. `a_par_khz` is NaN when no coupling could be assigned.
 */
typedef struct NvdrDip {
  double center_khz;
  /*
   Full width at half minimum.
   */
  double width_khz;
  double depth;
  double a_par_khz;
  double center_stderr;
  double width_stderr;
} NvdrDip;

/*
 Peak and duty-cycle-averaged microwave power of one scheme (mW).
 */
typedef struct NvdrPower {
  double max_rabi_khz;
  double duty_cycle;
  double peak_mw;
  double average_mw;
} NvdrPower;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *nvdr_version(void);

/*
 Copies the calling thread's last error message into `buf` (NUL-terminated,
 truncated to `cap - 1` bytes) and returns its full length in bytes, or 0 if
 the last call succeeded. `buf` may be null when `cap` is 0.

 # Safety
 `buf` must be valid for `cap` bytes of writes.
 */
size_t nvdr_last_error(char *buf, size_t cap);

/*
 Creates a system at static field `b_z_gauss` with no nuclei.

 # Safety
 `out` must be a valid pointer to writable storage.
 */
enum NvdrStatus nvdr_system_new(double b_z_gauss, struct NvdrSystem **out);

/*
 Adds a nucleus with the given hyperfine couplings (kHz). `label` may be null.
 `bath_proxy` only tags the nucleus as standing in for the unresolved bath.

 # Safety
 `sys` must come from `nvdr_system_new`; `label` must be null or a valid C string.
 */
enum NvdrStatus nvdr_system_add_nucleus(struct NvdrSystem *sys,
                                        const char *label,
                                        double a_par_khz,
                                        double a_perp_khz,
                                        bool bath_proxy);

/*
 # Safety
 `sys` must come from `nvdr_system_new`; `out` must be writable.
 */
enum NvdrStatus nvdr_system_n_nuclei(const struct NvdrSystem *sys, size_t *out);

/*
 Bare nuclear Larmor frequency γ_n·B (kHz).

 # Safety
 `sys` must come from `nvdr_system_new`; `out` must be writable.
 */
enum NvdrStatus nvdr_system_larmor_khz(const struct NvdrSystem *sys, double *out);

/*
 # Safety
 `sys` must be null or come from `nvdr_system_new`, and not be used afterwards.
 */
void nvdr_system_free(struct NvdrSystem *sys);

/*
 PM-HHDR spectrum versus modulation frequency ν (kHz) at fixed Ω′ and t_f.
 `noise` may be null for a noiseless sweep.

 # Safety
 Pointers must be valid or null where allowed; `out` must be writable.
 */
enum NvdrStatus nvdr_sweep_pm_hhdr(const struct NvdrSystem *sys,
                                   double omega_prime_khz,
                                   double t_f_us,
                                   struct NvdrGrid grid,
                                   const struct NvdrNoise *noise,
                                   struct NvdrSpectrum **out);

/*
 HHDR spectrum versus drive amplitude Ω (kHz) at fixed t_f.

 # Safety
 As for [`nvdr_sweep_pm_hhdr`].
 */
enum NvdrStatus nvdr_sweep_hhdr(const struct NvdrSystem *sys,
                                double t_f_us,
                                struct NvdrGrid grid,
                                const struct NvdrNoise *noise,
                                struct NvdrSpectrum **out);

/*
 XY-N spectrum versus half-spacing τ (µs) with ideal π pulses.

 # Safety
 As for [`nvdr_sweep_pm_hhdr`].
 */
enum NvdrStatus nvdr_sweep_xy(const struct NvdrSystem *sys,
                              uint32_t n_pulses,
                              struct NvdrGrid grid,
                              const struct NvdrNoise *noise,
                              struct NvdrSpectrum **out);

/*
 Runs the sweep described by a TOML experiment config (same format as the
 `nvdr sweep --config` file).

 # Safety
 `config_toml` must be a valid C string; `out` must be writable.
 */
enum NvdrStatus nvdr_sweep_config(const char *config_toml, struct NvdrSpectrum **out);

/*
 # Safety
 `spec` must come from a sweep call; `out` must be writable.
 */
enum NvdrStatus nvdr_spectrum_len(const struct NvdrSpectrum *spec, size_t *out);

/*
 Copies the swept values and signals into `xs` and `ys`, each of capacity
 `cap`. Fails with `BUFFER_TOO_SMALL` if `cap` is below the spectrum length.

 # Safety
 `xs` and `ys` must be valid for `cap` writes.
 */
enum NvdrStatus nvdr_spectrum_copy(const struct NvdrSpectrum *spec,
                                   double *xs,
                                   double *ys,
                                   size_t cap);

/*
 Writes the spectrum as CSV to `path`.

 # Safety
 `path` must be a valid C string.
 */
enum NvdrStatus nvdr_spectrum_write_csv(const struct NvdrSpectrum *spec, const char *path);

/*
 # Safety
 `spec` must be null or come from a sweep call, and not be used afterwards.
 */
void nvdr_spectrum_free(struct NvdrSpectrum *spec);

/*
 Fits up to `max_dips` Lorentzian dips with default detection settings.

 # Safety
 `spec` must come from a sweep call; `out` must be writable.
 */
enum NvdrStatus nvdr_fit(const struct NvdrSpectrum *spec,
                         size_t max_dips,
                         struct NvdrDipReport **out);

/*
 # Safety
 `report` must come from `nvdr_fit`; `out` must be writable.
 */
enum NvdrStatus nvdr_report_len(const struct NvdrDipReport *report, size_t *out);

/*
 RMS residual of the fit.

 # Safety
 `report` must come from `nvdr_fit`; `out` must be writable.
 */
enum NvdrStatus nvdr_report_residual(const struct NvdrDipReport *report, double *out);

/*
 Dips are ordered by center.

 # Safety
 `report` must come from `nvdr_fit`; `out` must be writable.
 */
enum NvdrStatus nvdr_report_dip(const struct NvdrDipReport *report,
                                size_t index,
                                struct NvdrDip *out);

/*
 # Safety
 `report` must be null or come from `nvdr_fit`, and not be used afterwards.
 */
void nvdr_report_free(struct NvdrDipReport *report);

/*
 First-order PM sideband positions ν∓ (kHz), one per nucleus in insertion
 order. `cap` must be at least the nucleus count.

 # Safety
 `nu_minus` and `nu_plus` must be valid for `cap` writes.
 */
enum NvdrStatus nvdr_predict_pm(const struct NvdrSystem *sys,
                                double omega_prime_khz,
                                double *nu_minus,
                                double *nu_plus,
                                size_t cap);

/*
 Mean second-order shift of the PM sidebands (kHz); subtract from ν₋.

 # Safety
 `sys` must come from `nvdr_system_new`; `out` must be writable.
 */
enum NvdrStatus nvdr_pm_dressed_shift(const struct NvdrSystem *sys,
                                      double omega_prime_khz,
                                      double *out);

/*
 Power for continuous HHDR at Rabi frequency `omega_khz`, given the radiation
 efficiency in kHz/√mW.

 # Safety
 `out` must be writable.
 */
enum NvdrStatus nvdr_power_hhdr(double efficiency, double omega_khz, struct NvdrPower *out);

/*
 # Safety
 `out` must be writable.
 */
enum NvdrStatus nvdr_power_pm_hhdr(double efficiency,
                                   double omega_prime_khz,
                                   struct NvdrPower *out);

/*
 XY-N with square π pulses of Rabi frequency `omega_pulse_khz`.

 # Safety
 `out` must be writable.
 */
enum NvdrStatus nvdr_power_xy(double efficiency,
                              double omega_pulse_khz,
                              uint32_t n_pulses,
                              double tau_us,
                              struct NvdrPower *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NVDR_H */
