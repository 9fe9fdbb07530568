//! One-dimensional Gauss rules on [-1, 1] and their tensor products.

use crate::real::Real;

/// Legendre polynomial `P_n(x)` and its derivative, by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for j in 2..=n {
        let jf = j as f64;
        let next = ((2.0 * jf - 1.0) * x * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = next;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // Endpoint value of P_n'.
        0.5 * nf * (nf + 1.0) * x.powi(n as i32 + 1)
    } else {
        nf * (x * p - p_prev) / (x * x - 1.0)
    };
    (p, dp)
}

/// Nodes and weights of a one-dimensional rule, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule1d<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Rule1d<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn gauss_legendre_f64(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `n`-point Gauss–Legendre rule, exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre<T: Real>(n: usize) -> Rule1d<T> {
    assert!(n >= 1, "a Gauss rule needs at least one node");
    let (x, w) = gauss_legendre_f64(n);
    Rule1d { nodes: x.into_iter().map(T::of).collect(), weights: w.into_iter().map(T::of).collect() }
}

/// `n`-point Gauss–Lobatto rule (includes both endpoints), exact to degree `2n - 3`.
pub fn gauss_lobatto<T: Real>(n: usize) -> Rule1d<T> {
    assert!(n >= 2, "a Lobatto rule needs at least two nodes");
    let m = n - 1;
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    nodes[0] = -1.0;
    nodes[m] = 1.0;
    // Interior nodes are the roots of P'_m; Newton on P'_m using
    // (1 - x^2) P''_m = 2x P'_m - m(m+1) P_m.
    for i in 1..m {
        let mut x = -(std::f64::consts::PI * i as f64 / m as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, x);
            let ddp = (2.0 * x * dp - (m * (m + 1)) as f64 * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
    }
    for i in 0..n {
        let (p, _) = legendre_with_derivative(m, nodes[i]);
        weights[i] = 2.0 / ((m * n) as f64 * p * p);
    }
    Rule1d { nodes: nodes.into_iter().map(T::of).collect(), weights: weights.into_iter().map(T::of).collect() }
}

/// Tensor-product rule in `dim` dimensions, first axis fastest.
#[derive(Debug, Clone)]
pub struct TensorRule<T> {
    pub dim: usize,
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
}

impl<T: Real> TensorRule<T> {
    pub fn new(rule: &Rule1d<T>, dim: usize) -> Self {
        let n = rule.len();
        let total = n.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut p = [T::zero(); 3];
            let mut w = T::one();
            let mut rest = flat;
            for coord in p.iter_mut().take(dim) {
                let i = rest % n;
                rest /= n;
                *coord = rule.nodes[i];
                w *= rule.weights[i];
            }
            points.push(p);
            weights.push(w);
        }
        Self { dim, points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
