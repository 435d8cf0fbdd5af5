//! C ABI for the core analysis and inversion pipeline. All entry points
//! return a status code; handles are opaque pointers freed by their matching
//! `_free` function. On failure, `gs_last_error` returns a message for the
//! calling thread.

use gstrument::inversion::{invert_mel, GriffinLimConfig, NnlsConfig, NnlsInit, PhaseInit};
use gstrument::signal::{analyze, MelFilterbank, StftConfig, Waveform};
use ndarray::Array2;
use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidState = 3,
    NotFound = 4,
    SingularOperator = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(err: &gstrument::Error) -> GsStatus {
    use gstrument::Error::*;
    match err {
        InvalidArgument(_) => GsStatus::InvalidArgument,
        InvalidState(_) => GsStatus::InvalidState,
        NotFound(_) => GsStatus::NotFound,
        SingularOperator(_) => GsStatus::SingularOperator,
        Io(_) => GsStatus::Io,
        Format(_) => GsStatus::Format,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), (GsStatus, String)>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GsStatus::Panic
        }
    }
}

fn from_core(e: gstrument::Error) -> (GsStatus, String) {
    (status_of(&e), e.to_string())
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque mel filterbank handle.
pub struct GsFilterbank {
    fb: MelFilterbank,
}

/// STFT parameters passed by value across the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GsStftParams {
    pub window_size: usize,
    pub hop_size: usize,
    pub fft_size: usize,
    pub target_frames: usize,
}

/// NNLS refinement parameters. `init`: 0 = SVD-clip, 1 = random, 2 = zeros.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GsNnlsParams {
    pub max_iters: usize,
    pub tol: c_double,
    pub init: c_int,
    pub seed: u64,
}

fn stft_config(p: &GsStftParams) -> StftConfig {
    StftConfig {
        window_size: p.window_size,
        hop_size: p.hop_size,
        fft_size: p.fft_size,
        target_frames: p.target_frames,
    }
}

fn nnls_config(p: &GsNnlsParams) -> Result<NnlsConfig, (GsStatus, String)> {
    let init = match p.init {
        0 => NnlsInit::SvdClip,
        1 => NnlsInit::Random,
        2 => NnlsInit::Zeros,
        other => {
            return Err((
                GsStatus::InvalidArgument,
                format!("init must be 0, 1 or 2, got {other}"),
            ))
        }
    };
    Ok(NnlsConfig {
        max_iters: p.max_iters,
        tol: p.tol,
        init,
        seed: p.seed,
        ..NnlsConfig::default()
    })
}

/// Create a filterbank; on success writes the handle to `out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gs_filterbank_new(
    mel_bins: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: c_double,
    f_max: c_double,
    out: *mut *mut GsFilterbank,
) -> GsStatus {
    guarded(|| {
        if out.is_null() {
            return Err((GsStatus::NullPointer, "out is null".into()));
        }
        let fb = MelFilterbank::new(mel_bins, fft_size, sample_rate, f_min, f_max)
            .map_err(from_core)?;
        unsafe { *out = Box::into_raw(Box::new(GsFilterbank { fb })) };
        Ok(())
    })
}

/// Number of mel rows in the filterbank.
///
/// # Safety
/// `fb` must be a handle from `gs_filterbank_new` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn gs_filterbank_mel_bins(fb: *const GsFilterbank) -> usize {
    if fb.is_null() {
        return 0;
    }
    unsafe { (*fb).fb.mel_bins() }
}

/// Release a filterbank handle. Null is a no-op.
///
/// # Safety
/// `fb` must be null or an unfreed handle from `gs_filterbank_new`.
#[no_mangle]
pub unsafe extern "C" fn gs_filterbank_free(fb: *mut GsFilterbank) {
    if !fb.is_null() {
        drop(unsafe { Box::from_raw(fb) });
    }
}

/// Mel-analyze a mono waveform. Writes a row-major `mel_bins x target_frames`
/// matrix into `out_mel`, which must hold that many doubles.
///
/// # Safety
/// `fb` must be a live handle; `samples` must point to `n_samples` doubles;
/// `out_mel` must point to `mel_bins * target_frames` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_analyze(
    fb: *const GsFilterbank,
    samples: *const c_double,
    n_samples: usize,
    sample_rate: u32,
    stft: GsStftParams,
    out_mel: *mut c_double,
) -> GsStatus {
    guarded(|| {
        if fb.is_null() || samples.is_null() || out_mel.is_null() {
            return Err((GsStatus::NullPointer, "null pointer argument".into()));
        }
        let fb = unsafe { &(*fb).fb };
        let cfg = stft_config(&stft);
        let wave = Waveform::new(
            unsafe { std::slice::from_raw_parts(samples, n_samples) }.to_vec(),
            sample_rate,
        )
        .map_err(from_core)?;
        let mel = analyze(&wave, &cfg, fb).map_err(from_core)?;
        let out = unsafe {
            std::slice::from_raw_parts_mut(out_mel, fb.mel_bins() * cfg.target_frames)
        };
        for (o, v) in out.iter_mut().zip(mel.iter()) {
            *o = *v;
        }
        Ok(())
    })
}

/// Invert a row-major `mel_bins x frames` mel matrix to a waveform of
/// `n_samples` samples (NNLS + Griffin-Lim).
///
/// # Safety
/// `fb` must be a live handle; `mel` must point to `mel_bins * frames`
/// doubles; `out_samples` must point to `n_samples` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_invert_mel(
    fb: *const GsFilterbank,
    mel: *const c_double,
    frames: usize,
    stft: GsStftParams,
    nnls: GsNnlsParams,
    griffin_lim_iters: usize,
    sample_rate: u32,
    out_samples: *mut c_double,
    n_samples: usize,
) -> GsStatus {
    guarded(|| {
        if fb.is_null() || mel.is_null() || out_samples.is_null() {
            return Err((GsStatus::NullPointer, "null pointer argument".into()));
        }
        let fb = unsafe { &(*fb).fb };
        let mel_bins = fb.mel_bins();
        let data = unsafe { std::slice::from_raw_parts(mel, mel_bins * frames) };
        let mel = Array2::from_shape_vec((mel_bins, frames), data.to_vec())
            .map_err(|e| (GsStatus::InvalidArgument, e.to_string()))?;
        let stft_cfg = stft_config(&stft);
        let nnls_cfg = nnls_config(&nnls)?;
        let gl_cfg = GriffinLimConfig {
            iters: griffin_lim_iters,
            momentum: 0.0,
            init_phase: PhaseInit::Zero,
        };
        let (wave, _) = invert_mel(
            fb,
            &mel,
            &stft_cfg,
            &nnls_cfg,
            &gl_cfg,
            n_samples,
            sample_rate,
        )
        .map_err(from_core)?;
        let out = unsafe { std::slice::from_raw_parts_mut(out_samples, n_samples) };
        out.copy_from_slice(&wave.samples);
        Ok(())
    })
}
