#ifndef GSTRUMENT_H
#define GSTRUMENT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum GsStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidArgument = 2,
  InvalidState = 3,
  NotFound = 4,
  SingularOperator = 5,
  Io = 6,
  Format = 7,
  Panic = 8,
} GsStatus;

/**
 * Opaque mel filterbank handle.
 */
typedef struct GsFilterbank GsFilterbank;

/**
 * STFT parameters passed by value across the ABI.
 */
typedef struct GsStftParams {
  uintptr_t window_size;
  uintptr_t hop_size;
  uintptr_t fft_size;
  uintptr_t target_frames;
} GsStftParams;

/**
 * NNLS refinement parameters. `init`: 0 = SVD-clip, 1 = random, 2 = zeros.
 */
typedef struct GsNnlsParams {
  uintptr_t max_iters;
  double tol;
  int init;
  uint64_t seed;
} GsNnlsParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *gs_last_error(void);

/**
 * Library version as a static string.
 */
const char *gs_version(void);

/**
 * Create a filterbank; on success writes the handle to `out`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum GsStatus gs_filterbank_new(uintptr_t mel_bins,
                                uintptr_t fft_size,
                                uint32_t sample_rate,
                                double f_min,
                                double f_max,
                                struct GsFilterbank **out);

/**
 * Number of mel rows in the filterbank.
 *
 * # Safety
 * `fb` must be a handle from `gs_filterbank_new` that has not been freed.
 */
uintptr_t gs_filterbank_mel_bins(const struct GsFilterbank *fb);

/**
 * Release a filterbank handle. Null is a no-op.
 *
 * # Safety
 * `fb` must be null or an unfreed handle from `gs_filterbank_new`.
 */
void gs_filterbank_free(struct GsFilterbank *fb);

/**
 * Mel-analyze a mono waveform. Writes a row-major `mel_bins x target_frames`
 * matrix into `out_mel`, which must hold that many doubles.
 *
 * # Safety
 * `fb` must be a live handle; `samples` must point to `n_samples` doubles;
 * `out_mel` must point to `mel_bins * target_frames` writable doubles.
 */
enum GsStatus gs_analyze(const struct GsFilterbank *fb,
                         const double *samples,
                         uintptr_t n_samples,
                         uint32_t sample_rate,
                         struct GsStftParams stft,
                         double *out_mel);

/**
 * Invert a row-major `mel_bins x frames` mel matrix to a waveform of
 * `n_samples` samples (NNLS + Griffin-Lim).
 *
 * # Safety
 * `fb` must be a live handle; `mel` must point to `mel_bins * frames`
 * doubles; `out_samples` must point to `n_samples` writable doubles.
 */
enum GsStatus gs_invert_mel(const struct GsFilterbank *fb,
                            const double *mel,
                            uintptr_t frames,
                            struct GsStftParams stft,
                            struct GsNnlsParams nnls,
                            uintptr_t griffin_lim_iters,
                            uint32_t sample_rate,
                            double *out_samples,
                            uintptr_t n_samples);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GSTRUMENT_H */
