//! Nelder-Mead simplex minimizer used by the EGP and MGP likelihood fits.
//!
//! Derivative-free with standard reflection/expansion/contraction/shrink
//! coefficients. Infeasible points signal themselves by returning
//! `f64::MAX` from the objective.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Converged when the simplex f-spread drops below
    /// `f_tol * (|f_best| + f_tol)`.
    pub f_tol: f64,
    /// Converged when every vertex is within `x_tol` of the best vertex.
    pub x_tol: f64,
    /// Relative step used to build the initial simplex.
    pub init_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 600,
            f_tol: 1e-9,
            x_tol: 1e-7,
            init_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub converged: bool,
}

pub fn nelder_mead<F>(
    objective: &mut F,
    start: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for i in 0..dim {
        let mut p = start.to_vec();
        let step = if p[i].abs() > 1e-8 {
            p[i].abs() * opts.init_step
        } else {
            opts.init_step
        };
        p[i] += step;
        simplex.push(p);
    }
    let mut scores: Vec<f64> = simplex.iter().map(|p| objective(p)).collect();

    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iters {
        iters += 1;
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let f_best = scores[best];
        let f_worst = scores[worst];
        let f_spread_ok = (f_worst - f_best).abs() <= opts.f_tol * (f_best.abs() + opts.f_tol);
        let x_spread_ok = simplex.iter().all(|p| {
            p.iter()
                .zip(&simplex[best])
                .all(|(a, b)| (a - b).abs() <= opts.x_tol * (1.0 + b.abs()))
        });
        if f_spread_ok && x_spread_ok {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; dim];
        for &idx in order.iter().take(dim) {
            for (c, v) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(c, w)| c + ALPHA * (c - w))
            .collect();
        let f_reflect = objective(&reflect);

        if f_reflect < scores[second_worst] && f_reflect >= f_best {
            simplex[worst] = reflect;
            scores[worst] = f_reflect;
            continue;
        }

        if f_reflect < f_best {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&reflect)
                .map(|(c, r)| c + GAMMA * (r - c))
                .collect();
            let f_expand = objective(&expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                scores[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                scores[worst] = f_reflect;
            }
            continue;
        }

        let contract: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(c, w)| c + RHO * (w - c))
            .collect();
        let f_contract = objective(&contract);
        if f_contract < f_worst {
            simplex[worst] = contract;
            scores[worst] = f_contract;
            continue;
        }

        // shrink toward the best vertex
        let best_point = simplex[best].clone();
        for &idx in order.iter().skip(1) {
            let p: Vec<f64> = best_point
                .iter()
                .zip(&simplex[idx])
                .map(|(b, v)| b + SIGMA * (v - b))
                .collect();
            scores[idx] = objective(&p);
            simplex[idx] = p;
        }
    }

    let (best, &f) = scores
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    NelderMeadResult {
        x: simplex[best].clone(),
        f,
        iters,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let mut f = |p: &[f64]| (p[0] - 3.0).powi(2) + 2.0 * (p[1] + 1.0).powi(2);
        let r = nelder_mead(&mut f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] + 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let mut f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let opts = NelderMeadOptions {
            max_iters: 2000,
            ..Default::default()
        };
        let r = nelder_mead(&mut f, &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-3, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn tolerates_infeasible_regions() {
        // objective is MAX on the left half-plane
        let mut f = |p: &[f64]| {
            if p[0] < 0.0 {
                f64::MAX
            } else {
                (p[0] - 2.0).powi(2) + p[1].powi(2)
            }
        };
        let r = nelder_mead(&mut f, &[0.5, 0.5], &NelderMeadOptions::default());
        assert!((r.x[0] - 2.0).abs() < 1e-3);
        assert!(r.x[1].abs() < 1e-3);
    }
}
