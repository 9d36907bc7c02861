//! Truncated Fourier basis on the unit torus with an FFT collocation grid.
//!
//! A field is `f(y) = Σ_{|m_i| ≤ M} c_m exp(2πi m·y)`. Coefficients are
//! stored with `m1` major, both components running from `-M` to `M`. The
//! collocation grid has `N ≥ 4M + 1` nodes per axis, which makes products of
//! two truncated fields alias-free on the retained modes.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::scalar::{lit, Scalar, Vec2};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid of {n} nodes cannot resolve products of modes up to {m} (need at least {need})")]
    Aliasing { m: usize, n: usize, need: usize },
}

pub struct FourierGrid<T: Scalar> {
    m: usize,
    n: usize,
    modes: Vec<[i32; 2]>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Clone for FourierGrid<T> {
    fn clone(&self) -> Self {
        FourierGrid { m: self.m, n: self.n, modes: self.modes.clone(), fwd: self.fwd.clone(), inv: self.inv.clone() }
    }
}

impl<T: Scalar> std::fmt::Debug for FourierGrid<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FourierGrid {{ m: {}, n: {} }}", self.m, self.n)
    }
}

/// Scratch buffers for one grid; one per worker thread.
pub struct FftWork<T> {
    pub buf: Vec<Complex<T>>,
    pub aux: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Scalar> FourierGrid<T> {
    /// Grid with the smallest 5-smooth `N ≥ 4M + 1`.
    pub fn new(m: usize) -> Self {
        Self::with_nodes(m, smooth_size(4 * m + 1)).expect("4M+1 nodes always suffice")
    }

    pub fn with_nodes(m: usize, n: usize) -> Result<Self, GridError> {
        let need = 4 * m + 1;
        if n < need {
            return Err(GridError::Aliasing { m, n, need });
        }
        let mut planner = FftPlanner::new();
        let mi = m as i32;
        let modes = (-mi..=mi).flat_map(|a| (-mi..=mi).map(move |b| [a, b])).collect();
        Ok(FourierGrid { m, n, modes, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    pub fn n_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[[i32; 2]] {
        &self.modes
    }

    pub fn mode_index(&self, k: [i32; 2]) -> Option<usize> {
        let m = self.m as i32;
        if k[0].abs() > m || k[1].abs() > m {
            return None;
        }
        Some(((k[0] + m) * (2 * m + 1) + (k[1] + m)) as usize)
    }

    /// Index of the constant mode.
    pub fn zero_index(&self) -> usize {
        self.mode_index([0, 0]).expect("constant mode")
    }

    /// Node `j` as a point of `[0, 1)²`.
    pub fn node(&self, j: usize) -> Vec2<T> {
        let n = lit::<T>(self.n as f64);
        [lit::<T>((j / self.n) as f64) / n, lit::<T>((j % self.n) as f64) / n]
    }

    pub fn work(&self) -> FftWork<T> {
        let len = self.n * self.n;
        let scratch_len = self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len());
        let zero = Complex::new(T::zero(), T::zero());
        FftWork { buf: vec![zero; len], aux: vec![zero; len], scratch: vec![zero; scratch_len] }
    }

    fn spectrum_slot(&self, k: [i32; 2]) -> usize {
        let n = self.n as i32;
        (k[0].rem_euclid(n) * n + k[1].rem_euclid(n)) as usize
    }

    /// Signed wavenumber of FFT bin `j` along one axis.
    pub fn wavenumber(&self, j: usize) -> i32 {
        let n = self.n as i32;
        let j = j as i32;
        if 2 * j > n {
            j - n
        } else {
            j
        }
    }

    fn transform(&self, plan: &Arc<dyn Fft<T>>, buf: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        let n = self.n;
        plan.process_with_scratch(buf, scratch);
        transpose_square(buf, n);
        plan.process_with_scratch(buf, scratch);
        transpose_square(buf, n);
    }

    /// Writes `Σ_m weight(m)·c_m` into the zero-padded spectrum in `work.buf`
    /// and transforms to nodal values.
    pub fn synthesize_with(&self, coeffs: &[Complex<T>], weight: impl Fn([i32; 2]) -> Complex<T>, work: &mut FftWork<T>) {
        let zero = Complex::new(T::zero(), T::zero());
        work.buf.iter_mut().for_each(|v| *v = zero);
        for (c, &k) in coeffs.iter().zip(&self.modes) {
            let slot = self.spectrum_slot(k);
            work.buf[slot] = *c * weight(k);
        }
        let FftWork { buf, scratch, .. } = work;
        self.transform(&self.inv, buf, scratch);
    }

    pub fn synthesize(&self, coeffs: &[Complex<T>], work: &mut FftWork<T>) {
        let one = Complex::new(T::one(), T::zero());
        self.synthesize_with(coeffs, |_| one, work);
    }

    /// Nodal values in `work.buf` -> normalized full spectrum in `work.buf`.
    pub fn analyze_in_place(&self, work: &mut FftWork<T>) {
        let FftWork { buf, scratch, .. } = work;
        self.transform(&self.fwd, buf, scratch);
        let inv = T::one() / lit::<T>((self.n * self.n) as f64);
        buf.iter_mut().for_each(|v| *v = *v * inv);
    }

    /// Inverse transform of a full spectrum held in `work.buf`.
    pub fn synthesize_full_in_place(&self, work: &mut FftWork<T>) {
        let FftWork { buf, scratch, .. } = work;
        self.transform(&self.inv, buf, scratch);
    }

    /// Coefficient of mode `k` in a full spectrum.
    pub fn spectrum_at(&self, spectrum: &[Complex<T>], k: [i32; 2]) -> Complex<T> {
        spectrum[self.spectrum_slot(k)]
    }

    /// Retained modes of a full spectrum.
    pub fn truncate(&self, spectrum: &[Complex<T>], out: &mut [Complex<T>]) {
        for (o, &k) in out.iter_mut().zip(&self.modes) {
            *o = spectrum[self.spectrum_slot(k)];
        }
    }

    /// Splits the spectrum of `f + i g` for real `f`, `g` and returns the
    /// retained coefficients of `f` and `g`.
    pub fn split_packed(&self, spectrum: &[Complex<T>], f: &mut [Complex<T>], g: &mut [Complex<T>]) {
        let half = lit::<T>(0.5);
        for ((fo, go), &k) in f.iter_mut().zip(g.iter_mut()).zip(&self.modes) {
            let z = spectrum[self.spectrum_slot(k)];
            let zc = spectrum[self.spectrum_slot([-k[0], -k[1]])].conj();
            *fo = (z + zc) * half;
            let d = (z - zc) * half;
            *go = Complex::new(d.im, -d.re);
        }
    }

    /// Forward transform of real nodal values.
    pub fn analyze_real(&self, values: &[T], work: &mut FftWork<T>, out: &mut [Complex<T>]) {
        for (b, &v) in work.buf.iter_mut().zip(values) {
            *b = Complex::new(v, T::zero());
        }
        self.analyze_in_place(work);
        self.truncate(&work.buf, out);
    }

    /// Nodal values of a real field whose coefficients are `coeffs`.
    pub fn nodal_real(&self, coeffs: &[Complex<T>], work: &mut FftWork<T>) -> Vec<T> {
        self.synthesize(coeffs, work);
        work.buf.iter().map(|v| v.re).collect()
    }

    /// Direct evaluation at an arbitrary point.
    pub fn evaluate(&self, coeffs: &[Complex<T>], y: Vec2<T>) -> Complex<T> {
        self.evaluate_with(coeffs, y, |_| Complex::new(T::one(), T::zero()))
    }

    pub fn evaluate_with(&self, coeffs: &[Complex<T>], y: Vec2<T>, weight: impl Fn([i32; 2]) -> Complex<T>) -> Complex<T> {
        let m = self.m as i32;
        let two_pi = T::PI() + T::PI();
        let phase = |x: T| -> Vec<Complex<T>> {
            (-m..=m)
                .map(|k| {
                    let t = two_pi * lit::<T>(k as f64) * x;
                    Complex::new(t.cos(), t.sin())
                })
                .collect()
        };
        let (p1, p2) = (phase(y[0]), phase(y[1]));
        let mut acc = Complex::new(T::zero(), T::zero());
        for (c, &k) in coeffs.iter().zip(&self.modes) {
            acc = acc + *c * weight(k) * p1[(k[0] + m) as usize] * p2[(k[1] + m) as usize];
        }
        acc
    }

    /// `(∂₁, ∂₂)` multipliers `2πi k`.
    pub fn ik(&self, k: [i32; 2]) -> [Complex<T>; 2] {
        let two_pi = T::PI() + T::PI();
        [Complex::new(T::zero(), two_pi * lit(k[0] as f64)), Complex::new(T::zero(), two_pi * lit(k[1] as f64))]
    }

    /// Embeds coefficients from a coarser (or equal) grid.
    pub fn embed(&self, from: &FourierGrid<T>, coeffs: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.n_modes()];
        for (c, &k) in coeffs.iter().zip(from.modes()) {
            if let Some(i) = self.mode_index(k) {
                out[i] = *c;
            }
        }
        out
    }
}

/// Smallest `n' ≥ n` with no prime factor above 5.
fn smooth_size(n: usize) -> usize {
    (n..).find(|&k| {
        let mut r = k;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        r == 1
    })
    .expect("5-smooth numbers are unbounded")
}

fn transpose_square<T: Copy>(buf: &mut [T], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}
