//! Orthogonal polynomials by three-term recurrence.

/// Generalized Laguerre polynomial `L_k^{(alpha)}(x)`.
pub fn laguerre(k: u32, alpha: f64, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut p0 = 1.0;
    let mut p1 = 1.0 + alpha - x;
    for n in 1..k {
        let nf = n as f64;
        let p2 = ((2.0 * nf + 1.0 + alpha - x) * p1 - (nf + alpha) * p0) / (nf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `d/dx L_k^{(alpha)}(x) = -L_{k-1}^{(alpha+1)}(x)`.
pub fn laguerre_derivative(k: u32, alpha: f64, x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        -laguerre(k - 1, alpha + 1.0, x)
    }
}

/// Jacobi polynomial `P_k^{(alpha, beta)}(x)`.
pub fn jacobi(k: u32, alpha: f64, beta: f64, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let ab = alpha + beta;
    let mut p0 = 1.0;
    let mut p1 = (alpha + 1.0) + 0.5 * (ab + 2.0) * (x - 1.0);
    for n in 1..k {
        let nf = n as f64;
        let c = 2.0 * nf + ab;
        let a1 = 2.0 * (nf + 1.0) * (nf + ab + 1.0) * c;
        let a2 = (c + 1.0) * (alpha * alpha - beta * beta);
        let a3 = c * (c + 1.0) * (c + 2.0);
        let a4 = 2.0 * (nf + alpha) * (nf + beta) * (c + 2.0);
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `d/dx P_k^{(alpha,beta)}(x) = (k + alpha + beta + 1)/2 · P_{k-1}^{(alpha+1,beta+1)}(x)`.
pub fn jacobi_derivative(k: u32, alpha: f64, beta: f64, x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        0.5 * (k as f64 + alpha + beta + 1.0) * jacobi(k - 1, alpha + 1.0, beta + 1.0, x)
    }
}
