//! Independent reference implementations shared by the test targets.
#![allow(dead_code)]

use dualpath::linalg::CsrMatrix;

/// Spectral radius by power iteration from the all-ones vector. Once the iterate
/// has settled into the dominant invariant subspace, either `A v = λ v` (real
/// dominant eigenvalue) or `A² v = a A v + b v` (complex pair, roots of
/// `z² - a z - b`).
pub fn power_iteration_radius(m: &CsrMatrix) -> f64 {
    let n = m.rows();
    let entries: Vec<(usize, usize, f64)> = m.triplets().collect();
    let apply = |x: &[f64]| {
        let mut y = vec![0.0; n];
        for &(r, c, v) in &entries {
            y[r] += v * x[c];
        }
        y
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm = |x: &[f64]| dot(x, x).sqrt();
    let axpy = |y: &[f64], a: f64, x: &[f64]| -> Vec<f64> { y.iter().zip(x).map(|(yi, xi)| yi - a * xi).collect() };
    let tol = 1e-10;
    let mut v = vec![1.0; n];
    for iter in 0..200_000 {
        let s = norm(&v);
        v.iter_mut().for_each(|x| *x /= s);
        let v1 = apply(&v);
        if iter % 50 == 49 {
            let scale = norm(&v1);
            let lambda = dot(&v, &v1);
            let r1 = axpy(&v1, lambda, &v);
            if norm(&r1) <= tol * scale {
                return lambda.abs();
            }
            // Orthonormal basis q0 = v, q1 of span(v, A v); then A v = lambda q0 + h q1.
            let h = norm(&r1);
            let q1: Vec<f64> = r1.iter().map(|x| x / h).collect();
            let v2 = apply(&v1);
            let (c0, c1) = (dot(&v, &v2), dot(&q1, &v2));
            let resid = axpy(&axpy(&v2, c0, &v), c1, &q1);
            if norm(&resid) <= tol * norm(&v2) {
                // v2 = a v1 + b v  with  v1 = lambda v + h q1.
                let a = c1 / h;
                let b = c0 - a * lambda;
                let disc = a * a + 4.0 * b;
                return if disc >= 0.0 {
                    ((a + disc.sqrt()) / 2.0).abs().max(((a - disc.sqrt()) / 2.0).abs())
                } else {
                    (-b).sqrt()
                };
            }
        }
        v = v1;
    }
    panic!("power iteration did not settle");
}

/// Cycle detection by iterative three-colour depth-first search over source -> target edges.
pub fn has_cycle(m: &CsrMatrix) -> bool {
    let n = m.rows();
    let mut succ = vec![Vec::new(); n];
    for (dst, src, _) in m.triplets() {
        succ[src].push(dst);
    }
    let mut colour = vec![0u8; n];
    for root in 0..n {
        if colour[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        colour[root] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < succ[node].len() {
                let child = succ[node][*next];
                *next += 1;
                match colour[child] {
                    0 => {
                        colour[child] = 1;
                        stack.push((child, 0));
                    }
                    1 => return true,
                    _ => {}
                }
            } else {
                colour[node] = 2;
                stack.pop();
            }
        }
    }
    false
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, 1e-14, 50)
}

/// Two-sided tail of Student's t by quadrature of the unnormalized density after
/// the substitution s = tan(θ), normalized by the integral over the whole line.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let g = |theta: f64| {
        let s = theta.tan();
        let c = theta.cos();
        if c <= 0.0 {
            return 0.0;
        }
        (1.0 + s * s / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let tail = integrate(g, t.abs().atan(), half_pi);
    let total = 2.0 * integrate(g, 0.0, half_pi);
    2.0 * tail / total
}
