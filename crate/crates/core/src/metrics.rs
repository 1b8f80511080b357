//! BSS-EVAL scores and spectrograms.
//!
//! An estimate is split into a target part (its least-squares projection
//! onto delayed copies of the true source, lags `0..L`), an interference part
//! (what the delayed copies of the other sources add to that projection) and
//! an artefact part (the rest). Signals are zero-padded by `L - 1` samples so
//! every delayed copy is complete.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Stand-in for `+inf` dB in CSV output.
pub const INFINITE_DB_SENTINEL: f64 = 1e9;

/// Energy ratios beyond this (about 240 dB) are indistinguishable from
/// rounding noise and reported as `+inf`.
const ZERO_ENERGY_RATIO: f64 = 1e-24;

pub const DEFAULT_FILTER_LEN: usize = 512;

/// Target / interference / artefact split of one estimate, each of length
/// `n + L - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BssDecomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
    pub filter_len: usize,
}

/// Gram system for the delayed copies of a set of references.
///
/// Built once and reused for every estimate scored against the same
/// references.
pub struct Projector {
    references: Vec<Vec<f64>>,
    filter_len: usize,
    gram: DMatrix<f64>,
    all: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    per_source: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

/// `sum_u x[u] y[u + lag]`.
fn xcorr(x: &[f64], y: &[f64], lag: isize) -> f64 {
    let n = x.len().min(y.len()) as isize;
    let (start, end) = (0.max(-lag), n.min(n - lag));
    if start >= end {
        return 0.0;
    }
    let (s, e) = (start as usize, end as usize);
    let xs = &x[s..e];
    let ys = &y[(s as isize + lag) as usize..(e as isize + lag) as usize];
    crate::linalg::dot(xs, ys)
}

fn ridge_cholesky(mut g: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let dim = g.nrows();
    let eps = 1e-10 * g.trace() / dim as f64;
    if eps.is_nan() || eps <= 0.0 || !eps.is_finite() {
        return Err(Error::DegenerateReferences);
    }
    for i in 0..dim {
        g[(i, i)] += eps;
    }
    g.cholesky().ok_or(Error::DegenerateReferences)
}

/// Solves `g c = d` with the ridge factor, then refines twice against the
/// unregularized `g` so the ridge only biases near-null directions.
fn refined_solve(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, g: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    let mut c = chol.solve(d);
    for _ in 0..2 {
        let r = d - g * &c;
        c += chol.solve(&r);
    }
    c
}

impl Projector {
    pub fn new(references: &[&[f64]], filter_len: usize) -> Result<Self> {
        if references.is_empty() || filter_len == 0 {
            return Err(Error::InvalidConfig("need at least one reference and L >= 1".into()));
        }
        let n = references[0].len();
        if references.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidBuffer("references differ in length".into()));
        }
        if n <= filter_len {
            return Err(Error::SignalTooShort {
                len: n,
                window: filter_len + 1,
            });
        }
        let k = references.len();
        let l = filter_len;
        let dim = k * l;
        let mut gram = DMatrix::zeros(dim, dim);
        for j in 0..k {
            for m in j..k {
                let lags: Vec<f64> = (-(l as isize - 1)..l as isize)
                    .map(|lag| xcorr(references[j], references[m], lag))
                    .collect();
                for a in 0..l {
                    for b in 0..l {
                        // sum_t s_j(t - a) s_m(t - b) = xcorr_jm(a - b)
                        let v = lags[(a as isize - b as isize + l as isize - 1) as usize];
                        gram[(j * l + a, m * l + b)] = v;
                        gram[(m * l + b, j * l + a)] = v;
                    }
                }
            }
        }
        let all = ridge_cholesky(gram.clone())?;
        let per_source = (0..k)
            .map(|j| ridge_cholesky(gram.view((j * l, j * l), (l, l)).into_owned()))
            .collect::<Result<_>>()?;
        Ok(Projector {
            references: references.iter().map(|r| r.to_vec()).collect(),
            filter_len,
            gram,
            all,
            per_source,
        })
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    fn synthesize(&self, sources: &[usize], coefs: &[f64]) -> Vec<f64> {
        let l = self.filter_len;
        let n = self.references[0].len();
        let mut out = vec![0.0; n + l - 1];
        for (slot, &j) in sources.iter().enumerate() {
            for (lag, &c) in coefs[slot * l..(slot + 1) * l].iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                crate::linalg::axpy(c, &self.references[j], &mut out[lag..lag + n]);
            }
        }
        out
    }

    pub fn decompose(&self, estimate: &[f64], target_index: usize) -> Result<BssDecomposition> {
        let n = self.references[0].len();
        if estimate.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: estimate.len(),
            });
        }
        let k = self.references.len();
        if target_index >= k {
            return Err(Error::InvalidConfig(format!(
                "target index {target_index} with {k} references"
            )));
        }
        let l = self.filter_len;
        // d[(j, a)] = sum_u s_j(u) e(u + a)
        let d = DVector::from_iterator(
            k * l,
            (0..k)
                .flat_map(|j| (0..l).map(move |a| (j, a)))
                .map(|(j, a)| xcorr(&self.references[j], estimate, a as isize)),
        );
        let d_target = d.rows(target_index * l, l).into_owned();
        let g_target = self
            .gram
            .view((target_index * l, target_index * l), (l, l))
            .into_owned();
        let c_target = refined_solve(&self.per_source[target_index], &g_target, &d_target);
        let c_all = refined_solve(&self.all, &self.gram, &d);

        let s_target = self.synthesize(&[target_index], c_target.as_slice());
        let p_all = self.synthesize(&(0..k).collect::<Vec<_>>(), c_all.as_slice());
        let e_interf = p_all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
        let e_artif = p_all
            .iter()
            .enumerate()
            .map(|(t, p)| estimate.get(t).copied().unwrap_or(0.0) - p)
            .collect();
        Ok(BssDecomposition {
            s_target,
            e_interf,
            e_artif,
            filter_len: l,
        })
    }
}

/// Projects `estimate` onto the delayed copies of `references`.
pub fn decompose_projection(
    estimate: &[f64],
    references: &[&[f64]],
    target_index: usize,
    filter_len: usize,
) -> Result<BssDecomposition> {
    Projector::new(references, filter_len)?.decompose(estimate, target_index)
}

/// SDR / SIR / SAR for one estimate, in dB (`+inf` when the distortion
/// term vanishes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceScores {
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationMetrics {
    pub sources: Vec<SourceScores>,
    /// Resampling rate the estimates were produced with, if known.
    pub n_passes: Option<usize>,
}

fn energy(x: &[f64]) -> f64 {
    crate::linalg::dot(x, x)
}

/// `10 log10(num / den)`, `+inf` for a vanishing denominator.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if den <= ZERO_ENERGY_RATIO * num {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

impl BssDecomposition {
    pub fn scores(&self) -> SourceScores {
        let target = energy(&self.s_target);
        let distortion: Vec<f64> = self.e_interf.iter().zip(&self.e_artif).map(|(i, a)| i + a).collect();
        let projected: Vec<f64> = self.s_target.iter().zip(&self.e_interf).map(|(s, i)| s + i).collect();
        SourceScores {
            sdr_db: ratio_db(target, energy(&distortion)),
            sir_db: ratio_db(target, energy(&self.e_interf)),
            sar_db: ratio_db(energy(&projected), energy(&self.e_artif)),
        }
    }
}

/// Scores estimate `i` against reference `i` for every source.
pub fn bss_eval(estimates: &[&[f64]], references: &[&[f64]], filter_len: usize) -> Result<SeparationMetrics> {
    if estimates.len() != references.len() {
        return Err(Error::InvalidConfig(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    let projector = Projector::new(references, filter_len)?;
    let sources = estimates
        .iter()
        .enumerate()
        .map(|(i, est)| projector.decompose(est, i).map(|d| d.scores()))
        .collect::<Result<_>>()?;
    Ok(SeparationMetrics {
        sources,
        n_passes: None,
    })
}

/// dB value as written to CSV: `+inf` becomes [`INFINITE_DB_SENTINEL`].
pub fn csv_db(v: f64) -> String {
    if v == f64::INFINITY {
        format!("{INFINITE_DB_SENTINEL}")
    } else {
        format!("{v:.6}")
    }
}

/// Name of source `i` in CSV files (`a`, `b`, ...).
pub fn source_name(i: usize) -> String {
    char::from(b'a' + (i % 26) as u8).to_string()
}

impl SeparationMetrics {
    /// CSV with header `source,n_passes,sdr_db,sir_db,sar_db`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,n_passes,sdr_db,sir_db,sar_db\n");
        let n = self.n_passes.map(|n| n.to_string()).unwrap_or_default();
        for (i, s) in self.sources.iter().enumerate() {
            out.push_str(&format!(
                "{},{n},{},{},{}\n",
                source_name(i),
                csv_db(s.sdr_db),
                csv_db(s.sir_db),
                csv_db(s.sar_db)
            ));
        }
        out
    }
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex spectrum (all `fft_size` bins) of one Hann-windowed frame.
pub fn frame_spectrum(frame: &[f64]) -> Result<Vec<Complex<f64>>> {
    let n = frame.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidConfig(format!("FFT size {n} is not a power of two")));
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .zip(hann(n))
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .collect();
    fft.process(&mut buf);
    Ok(buf)
}

/// Magnitude spectrogram in dB, `20 log10(|X| + 1e-12)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// One row per frame, `fft_size / 2 + 1` bins each.
    pub rows: Vec<Vec<f64>>,
    pub fft_size: usize,
    pub hop: usize,
}

pub fn spectrogram(signal: &[f64], fft_size: usize, hop: usize) -> Result<Spectrogram> {
    if fft_size == 0 || !fft_size.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "FFT size {fft_size} is not a power of two"
        )));
    }
    if hop == 0 {
        return Err(Error::InvalidConfig("hop must be at least 1".into()));
    }
    if signal.len() < fft_size {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            window: fft_size,
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let window = hann(fft_size);
    let n_frames = (signal.len() - fft_size) / hop + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let rows = (0..n_frames)
        .map(|f| {
            let frame = &signal[f * hop..f * hop + fft_size];
            for ((b, x), w) in buf.iter_mut().zip(frame).zip(&window) {
                *b = Complex::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            buf[..fft_size / 2 + 1]
                .iter()
                .map(|c| 20.0 * (c.norm() + 1e-12).log10())
                .collect()
        })
        .collect();
    Ok(Spectrogram { rows, fft_size, hop })
}

impl Spectrogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Binary PGM, time left to right, frequency bottom to top, dB mapped
    /// linearly from `floor_db..ceil_db` onto `0..255`.
    pub fn to_pgm(&self, floor_db: f64, ceil_db: f64) -> Vec<u8> {
        let width = self.rows.len();
        let height = self.rows.first().map_or(0, Vec::len);
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        let span = (ceil_db - floor_db).max(f64::MIN_POSITIVE);
        for bin in (0..height).rev() {
            for row in &self.rows {
                let level = ((row[bin] - floor_db) / span).clamp(0.0, 1.0);
                out.push((level * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>, floor_db: f64, ceil_db: f64) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm(floor_db, ceil_db))
            .map_err(|e| Error::io(path, e))
    }
}
