//! Deterministic bounded Nelder–Mead simplex maximization.
//!
//! Profile likelihood surfaces here are one- to three-dimensional, cheap to
//! evaluate, and not reliably differentiable (the Hurst dimension can pin at
//! its bounds), so a derivative-free polish after a coarse grid scan is the
//! right tool. Candidate points are clamped into the box, ties are broken by
//! vertex index, and there is no randomness, so results are reproducible to
//! the bit.

/// Stopping and budget knobs for [`nelder_mead_max`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Maximum number of simplex iterations.
    pub max_iter: usize,
    /// Stop when the simplex f-spread falls below `tol_f·(1 + |f_best|)`.
    pub tol_f: f64,
    /// Stop when every coordinate spread falls below `tol_x·(1 + bound range)`.
    pub tol_x: f64,
    /// Initial step as a fraction of each dimension's bound range.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol_f: 1e-10,
            tol_x: 1e-8,
            initial_step: 0.05,
        }
    }
}

fn clamp_point(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

/// Result of a simplex run: the best vertex, its value, and whether the
/// stopping tolerances were met within the iteration budget.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

/// Maximize `f` over the axis-aligned box `bounds`, starting from `start`.
///
/// Returns the best point found, its objective value, and a convergence
/// flag. `f` returning `-inf`/NaN is treated as "worse than anything", so
/// callers can encode hard constraint violations that way.
pub fn nelder_mead_max<F>(
    mut f: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    opts: &NelderMeadOptions,
) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(start.len(), bounds.len(), "start/bounds dimension mismatch");
    let dim = start.len();
    let score = |value: f64| {
        if value.is_nan() {
            f64::NEG_INFINITY
        } else {
            value
        }
    };

    // Initial simplex: the start plus one vertex stepped along each axis,
    // reflected inward when the step would leave the box.
    let mut start = start.to_vec();
    clamp_point(&mut start, bounds);
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for d in 0..dim {
        let (lo, hi) = bounds[d];
        let span = hi - lo;
        let step = if span.is_finite() && span > 0.0 {
            opts.initial_step * span
        } else {
            1.0
        };
        let mut vertex = start.clone();
        vertex[d] = if vertex[d] + step <= hi {
            vertex[d] + step
        } else {
            vertex[d] - step
        };
        clamp_point(&mut vertex, bounds);
        simplex.push(vertex);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| score(f(v))).collect();

    let order = |simplex: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        // Descending by value; ties by index for determinism.
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        *simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        *values = idx.iter().map(|&i| values[i]).collect();
    };
    order(&mut simplex, &mut values);

    let mut converged = false;
    for _ in 0..opts.max_iter {
        let f_spread = values[0] - values[dim];
        let converged_f = f_spread.abs() <= opts.tol_f * (1.0 + values[0].abs());
        let converged_x = (0..dim).all(|d| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in &simplex {
                lo = lo.min(v[d]);
                hi = hi.max(v[d]);
            }
            let span = bounds[d].1 - bounds[d].0;
            hi - lo <= opts.tol_x * (1.0 + span.abs())
        });
        if converged_f && converged_x {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for v in simplex.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += v[d] / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let propose = |coef: f64| {
            let mut p: Vec<f64> = (0..dim)
                .map(|d| centroid[d] + coef * (centroid[d] - worst[d]))
                .collect();
            clamp_point(&mut p, bounds);
            p
        };

        let reflected = propose(1.0);
        let f_reflected = score(f(&reflected));
        if f_reflected > values[0] {
            let expanded = propose(2.0);
            let f_expanded = score(f(&expanded));
            if f_expanded > f_reflected {
                simplex[dim] = expanded;
                values[dim] = f_expanded;
            } else {
                simplex[dim] = reflected;
                values[dim] = f_reflected;
            }
        } else if f_reflected > values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = f_reflected;
        } else {
            let contracted = propose(if f_reflected > values[dim] { 0.5 } else { -0.5 });
            let f_contracted = score(f(&contracted));
            if f_contracted > values[dim].max(f_reflected) {
                simplex[dim] = contracted;
                values[dim] = f_contracted;
            } else {
                // Shrink towards the best vertex.
                let best = simplex[0].clone();
                for i in 1..=dim {
                    for (x, b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    clamp_point(&mut simplex[i], bounds);
                    values[i] = score(f(&simplex[i]));
                }
            }
        }
        order(&mut simplex, &mut values);
    }

    NelderMeadOutcome {
        point: simplex[0].clone(),
        value: values[0],
        converged,
    }
}
