//! Dormand-Prince 5(4) with dense output.

use crate::error::{BubbleError, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

// difference between the 5th- and 4th-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// Steps below `min_step_fraction * |t|` (or absolute 1e-300) count as underflow.
    pub min_step_fraction: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: 1e-3,
            max_step: f64::INFINITY,
            min_step_fraction: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

/// Interpolant over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    cont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> &[f64] {
        &self.cont[0]
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [c0, c1, c2, c3, c4] = &self.cont;
        (0..c0.len())
            .map(|i| c0[i] + s * (c1[i] + s1 * (c2[i] + s * (c3[i] + s1 * c4[i]))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

/// Why the integrator returned.
#[derive(Debug)]
pub enum Outcome<S> {
    Completed,
    /// The step callback asked to stop.
    Stopped(S),
    /// The step size fell below the underflow threshold. Carries the last
    /// right-hand-side error if rejections were caused by one.
    StepUnderflow(Option<BubbleError>),
}

#[derive(Debug)]
pub struct Integration<S> {
    pub t: f64,
    pub y: Vec<f64>,
    pub stats: StepStats,
    pub outcome: Outcome<S>,
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`. `on_step` sees every
/// accepted step and may stop the run. A failing right-hand side rejects the
/// step and halves it.
pub fn dopri5<S>(
    mut f: impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    t0: f64,
    y0: Vec<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
    mut on_step: impl FnMut(&DenseStep) -> Result<Option<S>>,
) -> Result<Integration<S>> {
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k0 = f(t, &y)?;
    stats.rhs_evaluations += 1;
    let mut h = opts.initial_step.min(opts.max_step).min(t_end - t0);
    let mut last_error: Option<BubbleError> = None;
    if !(h > 0.0) {
        return Ok(Integration {
            t,
            y,
            stats,
            outcome: Outcome::Completed,
        });
    }

    loop {
        if t >= t_end {
            return Ok(Integration {
                t,
                y,
                stats,
                outcome: Outcome::Completed,
            });
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(BubbleError::Solver(format!(
                "step budget of {} exhausted",
                opts.max_steps
            )));
        }
        let h_min = (opts.min_step_fraction * t.abs().max(t_end.abs())).max(1e-300);
        if h < h_min {
            return Ok(Integration {
                t,
                y,
                stats,
                outcome: Outcome::StepUnderflow(last_error),
            });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(k0.clone());
        let mut failed = None;
        let mut y_new = vec![0.0; n];
        for s in 1..7 {
            let ys: Vec<f64> = (0..n)
                .map(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                .collect();
            if s == 6 {
                y_new.clone_from(&ys);
            }
            stats.rhs_evaluations += 1;
            match f(t + C[s] * h, &ys) {
                Ok(v) => k.push(v),
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failed {
            log::debug!("right-hand side failed at t={t:.6e}, h={h:.3e}: {e}");
            last_error = Some(e);
            stats.rejected += 1;
            h *= 0.5;
            continue;
        }

        let mut err = 0.0;
        for i in 0..n {
            let e: f64 = h * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };

        if err <= 1.0 {
            stats.accepted += 1;
            last_error = None;
            let ydiff: Vec<f64> = (0..n).map(|i| y_new[i] - y[i]).collect();
            let bspl: Vec<f64> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
            let c3: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
            let c4: Vec<f64> = (0..n)
                .map(|i| h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>())
                .collect();
            let step = DenseStep {
                t0: t,
                h,
                cont: [y.clone(), ydiff, bspl, c3, c4],
            };
            t = if last { t_end } else { t + h };
            y = y_new;
            k0 = k.swap_remove(6);
            if let Some(stop) = on_step(&step)? {
                return Ok(Integration {
                    t,
                    y,
                    stats,
                    outcome: Outcome::Stopped(stop),
                });
            }
            h = (h * factor).min(opts.max_step);
        } else {
            stats.rejected += 1;
            h *= factor.min(1.0);
        }
    }
}
