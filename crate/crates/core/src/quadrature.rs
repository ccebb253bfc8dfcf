//! Numerical integration: Gauss-Legendre on [0,1], tensor Duffy rules on
//! the reference triangle, and affine maps to physical simplices.
//!
//! The Duffy rule collapses the square onto the triangle with
//! `(u,v) -> (u, v(1-u))`, weights picking up the Jacobian `1-u`. A
//! monomial `x^a y^b` pulls back to `u^a v^b (1-u)^{b+1}`, so the n x n
//! tensor rule is exact for total degree `a+b <= 2n-2`; the default
//! assembly choice `n = p+1` therefore integrates products of two degree-p
//! polynomials exactly (modulo the non-polynomial coefficients, which is
//! what the `quad_order` override is for).

use crate::scalar::Real;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

/// Largest supported Gauss-Legendre point count per direction.
pub const MAX_GL_POINTS: usize = 30;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("unsupported quadrature order: {n} points (supported 1..={MAX_GL_POINTS})")]
    UnsupportedOrder { n: usize },
    #[error("degenerate element: zero or non-finite Jacobian")]
    DegenerateElement,
}

/// A list of nodes and weights. `dim` is the coordinate dimension of each
/// node; nodes are stored flat, `dim` entries apiece.
#[derive(Clone, Debug)]
pub struct QuadratureRule<F> {
    pub dim: usize,
    nodes: Vec<F>,
    weights: Vec<F>,
}

impl<F: Real> QuadratureRule<F> {
    pub fn from_raw(dim: usize, nodes: Vec<F>, weights: Vec<F>) -> Self {
        assert_eq!(nodes.len(), dim * weights.len());
        Self { dim, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, q: usize) -> &[F] {
        &self.nodes[q * self.dim..(q + 1) * self.dim]
    }

    pub fn weight(&self, q: usize) -> F {
        self.weights[q]
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// All node coordinates as one flat slice, `len() * dim` long.
    pub fn nodes_flat(&self) -> &[F] {
        &self.nodes
    }

    pub fn sum_weights(&self) -> F {
        self.weights.iter().fold(F::zero(), |s, &w| s + w)
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact for polynomials of
/// degree `<= 2n-1`. Computed once per `n` (Newton iteration on the
/// Legendre recurrence, tolerance 1e-15) and cached process-wide.
pub fn gauss_legendre<F: Real>(n: usize) -> Result<QuadratureRule<F>, QuadratureError> {
    let pairs = gl_table(n)?;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &(x, w) in pairs.iter() {
        nodes.push(F::from_f64(x).unwrap());
        weights.push(F::from_f64(w).unwrap());
    }
    Ok(QuadratureRule { dim: 1, nodes, weights })
}

fn gl_table(n: usize) -> Result<Arc<Vec<(f64, f64)>>, QuadratureError> {
    if n == 0 || n > MAX_GL_POINTS {
        return Err(QuadratureError::UnsupportedOrder { n });
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    Ok(guard.entry(n).or_insert_with(|| Arc::new(compute_gl(n))).clone())
}

/// Value and derivative of the Legendre polynomial P_n at t in (-1, 1).
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * t * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

fn compute_gl(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // Chebyshev-asymptotic initial guess for the k-th root, then Newton.
        let mut t = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        // Map [-1,1] to [0,1]: roots descend in t, so x ascends in k.
        let x = (1.0 - t) / 2.0;
        let w = 1.0 / ((1.0 - t * t) * dp * dp);
        out.push((x, w));
    }
    out
}

/// Tensor Duffy rule on the reference triangle `{x >= 0, y >= 0, x+y <= 1}`:
/// the n x n Gauss-Legendre grid on the square pushed through
/// `(u,v) -> (u, v(1-u))`, weights times the Jacobian `1-u`. Weights sum
/// to the triangle area 1/2.
pub fn duffy_triangle<F: Real>(n: usize) -> Result<QuadratureRule<F>, QuadratureError> {
    let line = gauss_legendre::<F>(n)?;
    let m = n * n;
    let mut nodes = Vec::with_capacity(2 * m);
    let mut weights = Vec::with_capacity(m);
    for iu in 0..n {
        let u = line.node(iu)[0];
        let wu = line.weight(iu);
        let jac = F::one() - u;
        for iv in 0..n {
            let v = line.node(iv)[0];
            nodes.push(u);
            nodes.push(v * jac);
            weights.push(wu * line.weight(iv) * jac);
        }
    }
    Ok(QuadratureRule { dim: 2, nodes, weights })
}

/// Push a reference rule to a physical simplex given by its vertices:
/// an interval or facet segment for a 1D rule (two vertices, any ambient
/// dimension), a triangle for a 2D rule (three vertices in the plane).
/// Weights are scaled by the segment length or `|det J|`.
pub fn map_to_element<F: Real>(
    rule: &QuadratureRule<F>,
    vertices: &[&[F]],
) -> Result<QuadratureRule<F>, QuadratureError> {
    assert_eq!(
        vertices.len(),
        rule.dim + 1,
        "simplex needs dim+1 vertices for a dim-dimensional rule"
    );
    let ambient = vertices[0].len();
    let m = rule.len();
    let mut nodes = Vec::with_capacity(ambient * m);
    let mut weights = Vec::with_capacity(m);
    match rule.dim {
        1 => {
            let (a, b) = (vertices[0], vertices[1]);
            let mut len2 = F::zero();
            for q in 0..ambient {
                let d = b[q] - a[q];
                len2 += d * d;
            }
            let scale = len2.sqrt();
            if !(scale.is_finite() && scale > F::zero()) {
                return Err(QuadratureError::DegenerateElement);
            }
            for i in 0..m {
                let t = rule.node(i)[0];
                for q in 0..ambient {
                    nodes.push(a[q] + t * (b[q] - a[q]));
                }
                weights.push(rule.weight(i) * scale);
            }
        }
        2 => {
            assert_eq!(ambient, 2, "triangle rules map within the plane");
            let (v0, v1, v2) = (vertices[0], vertices[1], vertices[2]);
            let j11 = v1[0] - v0[0];
            let j21 = v1[1] - v0[1];
            let j12 = v2[0] - v0[0];
            let j22 = v2[1] - v0[1];
            let det = (j11 * j22 - j12 * j21).abs();
            if !(det.is_finite() && det > F::zero()) {
                return Err(QuadratureError::DegenerateElement);
            }
            for i in 0..m {
                let t = rule.node(i);
                nodes.push(v0[0] + j11 * t[0] + j12 * t[1]);
                nodes.push(v0[1] + j21 * t[0] + j22 * t[1]);
                weights.push(rule.weight(i) * det);
            }
        }
        d => panic!("unsupported rule dimension {d}"),
    }
    Ok(QuadratureRule { dim: ambient, nodes, weights })
}
