//! Bounded Nelder-Mead on the unit box.
//!
//! Coefficients follow the dimension-adaptive choice of Gao and Han (2012),
//! which keeps the simplex from collapsing in tens of dimensions. Trial
//! points are clamped to `[0, 1]^d`. Non-finite objective values are treated
//! as worse than any finite value.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub step: f64,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// ... and the simplex diameter (max-norm) falls below this.
    pub xtol: f64,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_evals: 2000, step: 0.15, ftol: 1e-8, xtol: 1e-6, restarts: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn key(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn clamp_unit(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        key(f(x))
    };
    let mut best_x = x0.to_vec();
    clamp_unit(&mut best_x);
    let mut best_f = eval(&best_x, &mut evals);
    if d == 0 {
        return Minimum { x: best_x, value: best_f, evals };
    }
    let n = d as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / n, 0.75 - 1.0 / (2.0 * n), 1.0 - 1.0 / n);
    // with d = 1 the adaptive values degenerate; fall back to the classic ones
    let (beta, gamma, delta) = if d == 1 { (2.0, 0.5, 0.5) } else { (beta, gamma, delta) };

    for round in 0..=opts.restarts {
        if evals >= opts.max_evals {
            break;
        }
        let step = opts.step / (1 << round) as f64;
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_f)];
        for i in 0..d {
            let mut x = best_x.clone();
            x[i] = if x[i] + step <= 1.0 { x[i] + step } else { x[i] - step };
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }
        let start_f = best_f;
        while evals < opts.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (fbest, fworst) = (simplex[0].1, simplex[d].1);
            let diam = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if fworst.is_finite() && (fworst - fbest).abs() <= opts.ftol * (1.0 + fbest.abs()) && diam <= opts.xtol {
                break;
            }
            let mut centroid = vec![0.0; d];
            for (x, _) in &simplex[..d] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n;
                }
            }
            let along = |t: f64, worst: &[f64]| -> Vec<f64> {
                let mut x: Vec<f64> = centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect();
                clamp_unit(&mut x);
                x
            };
            let worst = simplex[d].0.clone();
            let xr = along(alpha, &worst);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(alpha * beta, &worst);
                let fe = eval(&xe, &mut evals);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(alpha * gamma, &worst);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-gamma, &worst);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fr.min(simplex[d].1) {
                simplex[d] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let x0 = simplex[0].0.clone();
            for v in simplex.iter_mut().skip(1) {
                for (a, b) in v.0.iter_mut().zip(&x0) {
                    *a = b + delta * (*a - b);
                }
                v.1 = eval(&v.0, &mut evals);
                if evals >= opts.max_evals {
                    break;
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if round > 0 && start_f - best_f <= opts.ftol * (1.0 + best_f.abs()) {
            break;
        }
    }
    Minimum { x: best_x, value: best_f, evals }
}
