//! Globally adaptive Gauss–Kronrod (7/15) quadrature for small vector-valued
//! integrands.
//!
//! All components share the same abscissae, so moments of one density
//! (mass, first and second moment) cost a single pass. Convergence is judged
//! per component against `rel_tol · ∫|f_k|`, which keeps centred moments that
//! are close to zero from stalling the refinement.

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
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, PartialEq)]
pub enum QuadError {
    NonFinite { at: f64 },
    NonConvergence { intervals: usize, worst_ratio: f64 },
    EmptyRange,
}

impl std::fmt::Display for QuadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuadError::NonFinite { at } => write!(f, "integrand not finite at {at}"),
            QuadError::NonConvergence {
                intervals,
                worst_ratio,
            } => write!(
                f,
                "no convergence after {intervals} intervals (error/tolerance = {worst_ratio:.3e})"
            ),
            QuadError::EmptyRange => write!(f, "empty integration range"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
    pub initial_panels: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-300,
            max_intervals: 2000,
            initial_panels: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    abs: [f64; N],
}

fn gk15<const N: usize, F>(f: &mut F, a: f64, b: f64) -> Result<Panel<N>, QuadError>
where
    F: FnMut(f64) -> [f64; N],
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs = [0.0; N];
    let mut values = [[0.0; N]; 15];

    let fc = f(centre);
    for k in 0..N {
        if !fc[k].is_finite() {
            return Err(QuadError::NonFinite { at: centre });
        }
        kronrod[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
        abs[k] = WGK[7] * fc[k].abs();
    }
    values[14] = fc;

    for j in 0..7 {
        let dx = half * XGK[j];
        let lo = f(centre - dx);
        let hi = f(centre + dx);
        for k in 0..N {
            if !lo[k].is_finite() {
                return Err(QuadError::NonFinite { at: centre - dx });
            }
            if !hi[k].is_finite() {
                return Err(QuadError::NonFinite { at: centre + dx });
            }
            kronrod[k] += WGK[j] * (lo[k] + hi[k]);
            abs[k] += WGK[j] * (lo[k].abs() + hi[k].abs());
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * (lo[k] + hi[k]);
            }
        }
        values[2 * j] = lo;
        values[2 * j + 1] = hi;
    }

    let mut error = [0.0; N];
    for k in 0..N {
        // QUADPACK-style error scaling.
        let mean = 0.5 * kronrod[k];
        let mut asc = WGK[7] * (values[14][k] - mean).abs();
        for j in 0..7 {
            asc += WGK[j] * ((values[2 * j][k] - mean).abs() + (values[2 * j + 1][k] - mean).abs());
        }
        asc *= half.abs();
        let raw = ((kronrod[k] - gauss[k]) * half).abs();
        let mut err = raw;
        if asc != 0.0 && raw != 0.0 {
            err = asc * (200.0 * raw / asc).powf(1.5).min(1.0);
        }
        let resabs = abs[k] * half.abs();
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        error[k] = err;
        kronrod[k] *= half;
        abs[k] = resabs;
    }

    Ok(Panel {
        a,
        b,
        value: kronrod,
        error,
        abs,
    })
}

impl Integrator {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    /// Integrates every component of `f` over `[a, b]`.
    pub fn integrate<const N: usize, F>(&self, mut f: F, a: f64, b: f64) -> Result<[f64; N], QuadError>
    where
        F: FnMut(f64) -> [f64; N],
    {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(QuadError::EmptyRange);
        }
        let panels = self.initial_panels.max(1);
        let width = (b - a) / panels as f64;
        let mut work: Vec<Panel<N>> = Vec::with_capacity(self.max_intervals);
        for p in 0..panels {
            let lo = a + width * p as f64;
            let hi = if p + 1 == panels { b } else { lo + width };
            work.push(gk15(&mut f, lo, hi)?);
        }

        loop {
            let mut total = [0.0; N];
            let mut total_err = [0.0; N];
            let mut total_abs = [0.0; N];
            for p in &work {
                for k in 0..N {
                    total[k] += p.value[k];
                    total_err[k] += p.error[k];
                    total_abs[k] += p.abs[k];
                }
            }
            let tol: [f64; N] = std::array::from_fn(|k| (self.rel_tol * total_abs[k]).max(self.abs_tol));
            let worst_ratio = (0..N)
                .map(|k| total_err[k] / tol[k])
                .fold(0.0_f64, f64::max);
            if worst_ratio <= 1.0 {
                return Ok(total);
            }
            if work.len() >= self.max_intervals {
                return Err(QuadError::NonConvergence {
                    intervals: work.len(),
                    worst_ratio,
                });
            }

            let (idx, _) = work
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let r = (0..N).map(|k| p.error[k] / tol[k]).fold(0.0_f64, f64::max);
                    (i, r)
                })
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            let worst = work.swap_remove(idx);
            let mid = 0.5 * (worst.a + worst.b);
            if !(mid > worst.a && mid < worst.b) {
                // Interval can no longer be split in floating point.
                return Err(QuadError::NonConvergence {
                    intervals: work.len() + 1,
                    worst_ratio,
                });
            }
            work.push(gk15(&mut f, worst.a, mid)?);
            work.push(gk15(&mut f, mid, worst.b)?);
        }
    }

    pub fn integrate_scalar<F>(&self, mut f: F, a: f64, b: f64) -> Result<f64, QuadError>
    where
        F: FnMut(f64) -> f64,
    {
        self.integrate(|x| [f(x)], a, b).map(|v| v[0])
    }
}
