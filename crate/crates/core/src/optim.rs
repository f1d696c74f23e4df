//! Derivative-free minimization.

/// Outcome of a [`nelder_mead`] run.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder–Mead simplex search with standard coefficients.
///
/// Starts from the simplex `x0, x0 + step·e_i` and stops after `max_evals`
/// evaluations or once the spread of simplex values falls below
/// `ftol·(1 + |best|)` and the simplex diameter below `xtol`.
pub(crate) fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    ftol: f64,
    xtol: f64,
) -> Minimum {
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        // past the cap, trial points are rejected without calling f
        if *evaluations >= max_evals.max(1) {
            return f64::INFINITY;
        }
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evaluations);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        if evaluations >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }
    if simplex.len() < n + 1 {
        return best_of(simplex, evaluations);
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let along = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
        from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
    };
    while evaluations < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) && diameter <= xtol {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let xr = along(&centroid, &simplex[n].0, -alpha);
        let fr = eval(&xr, &mut evaluations);
        if fr < simplex[0].1 {
            let xe = along(&centroid, &simplex[n].0, -gamma);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(&centroid, &xr, rho);
                let fc = eval(&xc, &mut evaluations);
                (xc, fc)
            } else {
                let xc = along(&centroid, &simplex[n].0, rho);
                let fc = eval(&xc, &mut evaluations);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    if evaluations >= max_evals {
                        break;
                    }
                    let x = along(&x_best, &entry.0, sigma);
                    let v = eval(&x, &mut evaluations);
                    *entry = (x, v);
                }
            }
        }
    }
    best_of(simplex, evaluations)
}

fn best_of(simplex: Vec<(Vec<f64>, f64)>, evaluations: usize) -> Minimum {
    let (x, value) = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("simplex holds the start point");
    Minimum { x, value, evaluations }
}
