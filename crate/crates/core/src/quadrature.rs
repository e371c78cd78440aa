//! Adaptive Gauss–Kronrod (7/15) integration of vector-valued integrands
//! on a finite interval.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_intervals: 200,
        }
    }
}

struct Panel<const N: usize> {
    lo: f64,
    hi: f64,
    value: [f64; N],
    error: f64,
}

fn gk15<const N: usize, F: FnMut(f64) -> [f64; N]>(f: &mut F, lo: f64, hi: f64) -> Panel<N> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    let fc = f(center);
    for k in 0..N {
        kronrod[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for k in 0..N {
            let s = f1[k] + f2[k];
            kronrod[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut error = 0.0f64;
    for k in 0..N {
        kronrod[k] *= half;
        gauss[k] *= half;
        error = error.max((kronrod[k] - gauss[k]).abs());
    }
    Panel {
        lo,
        hi,
        value: kronrod,
        error,
    }
}

/// Integrate `f` over `[lo, hi]` to an absolute tolerance on every
/// component, bisecting the panel with the largest error estimate.
pub fn integrate<const N: usize, F: FnMut(f64) -> [f64; N]>(
    mut f: F,
    lo: f64,
    hi: f64,
    opts: QuadratureOptions,
) -> Result<[f64; N]> {
    let mut panels = vec![gk15(&mut f, lo, hi)];
    loop {
        let total_error: f64 = panels.iter().map(|p| p.error).sum();
        if total_error <= opts.abs_tol {
            break;
        }
        if panels.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure {
                tolerance: opts.abs_tol,
                evaluations: panels.len() * 15,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.lo + p.hi);
        panels.push(gk15(&mut f, p.lo, mid));
        panels.push(gk15(&mut f, mid, p.hi));
    }
    let mut total = [0.0; N];
    for p in &panels {
        for k in 0..N {
            total[k] += p.value[k];
        }
    }
    Ok(total)
}
