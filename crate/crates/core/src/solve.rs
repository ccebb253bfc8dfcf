//! Direct solve of assembled systems and error/convergence analysis.

use thiserror::Error;

use crate::assembly::DgSystem;
use crate::basis::LocalBasis;
use crate::linalg::{band_solve, LinalgError};
use crate::mesh::{FacetKind, Mesh};
use crate::problem::ProblemSpec;
use crate::quadrature::QuadratureError;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("quadrature unavailable: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error("problem declares no exact solution to compare against")]
    MissingExactSolution,
    #[error("convergence rates need at least two reports with strictly decreasing h")]
    NonMonotoneH,
}

/// Coefficient vector of a solved system, tied to the mesh and bases it was
/// assembled from. Dof layout matches [`DgSystem`]: per-element blocks in
/// mesh order, member order within a block.
#[derive(Debug)]
pub struct DiscreteSolution<'a, F> {
    pub mesh: &'a Mesh<F>,
    pub bases: &'a [LocalBasis<F>],
    pub offsets: Vec<usize>,
    pub coefficients: Vec<F>,
    /// Relative max-norm residual |A x - b| / |b| of the direct solve.
    pub residual: F,
}

impl<F: Real> DiscreteSolution<'_, F> {
    pub fn dofs(&self) -> usize {
        self.coefficients.len()
    }

    fn element_coefficients(&self, t: usize) -> &[F] {
        &self.coefficients[self.offsets[t]..self.offsets[t + 1]]
    }

    /// Value of the local polynomial of element `t` at `x` (which need not
    /// lie inside the element; traces on facets use this).
    pub fn element_value(&self, t: usize, x: &[F]) -> F {
        let c = self.element_coefficients(t);
        (0..self.bases[t].len())
            .fold(F::zero(), |s, i| s + c[i] * self.bases[t].member(i).value(x))
    }

    pub fn element_gradient(&self, t: usize, x: &[F]) -> Vec<F> {
        let c = self.element_coefficients(t);
        let mut g = vec![F::zero(); self.mesh.dim];
        for i in 0..self.bases[t].len() {
            for (ax, gi) in self.bases[t].member(i).gradient(x).into_iter().enumerate() {
                g[ax] += c[i] * gi;
            }
        }
        g
    }

    /// Point evaluation; `None` outside the mesh. Ties on shared facets go
    /// to the lowest element id, matching `Mesh::locate_element`.
    pub fn evaluate(&self, x: &[F]) -> Option<F> {
        let t = self.mesh.locate_element(x, F::of_u128(1) / F::of_u128(1_000_000_000))?;
        Some(self.element_value(t, x))
    }
}

/// Factor and solve `A x = b` with the banded direct solver, returning the
/// solution bundled with its verification residual.
pub fn solve<'a, F: Real>(
    system: &DgSystem<F>,
    mesh: &'a Mesh<F>,
    bases: &'a [LocalBasis<F>],
) -> Result<DiscreteSolution<'a, F>, SolveError> {
    let x = band_solve(&system.matrix, &system.rhs)?;
    let mut ax = vec![F::zero(); x.len()];
    system.matrix.matvec(&x, &mut ax);
    let bmax = system.rhs.iter().fold(F::zero(), |m, &v| m.max(v.abs()));
    let rmax = ax
        .iter()
        .zip(&system.rhs)
        .fold(F::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    let residual = if bmax > F::zero() { rmax / bmax } else { rmax };
    Ok(DiscreteSolution {
        mesh,
        bases,
        offsets: system.offsets.clone(),
        coefficients: x,
        residual,
    })
}

/// Knobs for [`compute_errors`]. The effective volume rule is
/// `max(quad_points, degree + 2)` per element, so error integration is
/// always at least one order finer than assembly.
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorOptions<F> {
    pub quad_points: Option<usize>,
    /// When set, also compute the mesh-dependent energy norm of the error
    /// (diffusion seminorm + penalty jumps + L2 + upwind jumps) with this
    /// penalty scale.
    pub dar_gamma: Option<F>,
}

/// Error norms of one discrete solution against the problem's exact
/// solution, plus the size data convergence studies need.
#[derive(Clone, Copy, Debug)]
pub struct ErrorReport<F> {
    pub err_l2: F,
    /// Full H1 norm: sqrt(L2^2 + seminorm^2), so `err_l2 <= err_h1` always.
    pub err_h1: F,
    pub err_h1_semi: F,
    /// Max over all volume quadrature nodes and element vertices.
    pub err_linf: F,
    pub err_dar: Option<F>,
    pub dofs: usize,
    pub h_nominal: Option<F>,
    pub h_actual: F,
}

pub fn compute_errors<F: Real>(
    solution: &DiscreteSolution<'_, F>,
    problem: &ProblemSpec<F>,
    options: ErrorOptions<F>,
) -> Result<ErrorReport<F>, SolveError> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or(SolveError::MissingExactSolution)?;
    let mesh = solution.mesh;
    let field = &problem.coefficients;
    let d = mesh.dim;
    let advecting = !field.beta_is_zero();
    let half = F::of_u128(1) / F::of_u128(2);

    let mut l2_sq = F::zero();
    let mut semi_sq = F::zero();
    let mut linf = F::zero();
    let mut dar_sq = F::zero();
    for t in 0..mesh.elements.len() {
        let degree = solution.bases[t].degree as usize;
        let nq = options.quad_points.unwrap_or(0).max(degree + 2);
        let rule = mesh.volume_rule(t, nq)?;
        let tabs = solution.bases[t].tabulate(rule.nodes_flat());
        let c = solution.element_coefficients(t);
        let nb = solution.bases[t].len();
        for q in 0..rule.len() {
            let x = rule.node(q);
            let w = rule.weight(q);
            let mut uh = F::zero();
            let mut guh = vec![F::zero(); d];
            for i in 0..nb {
                uh += c[i] * tabs.value(q, i);
                for (ax, &gi) in tabs.gradient(q, i).iter().enumerate() {
                    guh[ax] += c[i] * gi;
                }
            }
            let e = uh - exact.value(x);
            let ge: Vec<F> = exact
                .gradient(x)
                .into_iter()
                .zip(&guh)
                .map(|(gu, &gh)| gh - gu)
                .collect();
            l2_sq += w * e * e;
            let gsq = ge.iter().fold(F::zero(), |s, &v| s + v * v);
            semi_sq += w * gsq;
            linf = linf.max(e.abs());
            if options.dar_gamma.is_some() {
                let k = field.k_matrix(x);
                let mut kgg = F::zero();
                for j in 0..d {
                    let mut row = F::zero();
                    for m in 0..d {
                        row += k[j * d + m] * ge[m];
                    }
                    kgg += row * ge[j];
                }
                dar_sq += w * kgg;
            }
        }
        for v in mesh.element_vertex_coords(t) {
            let e = solution.element_value(t, v) - exact.value(v);
            linf = linf.max(e.abs());
        }
    }

    let err_dar = if let Some(gamma) = options.dar_gamma {
        // Jump terms: penalty-weighted on interior and Dirichlet facets,
        // upwind-weighted on every facet. The exact solution is continuous,
        // so interior jumps of the error are jumps of u_h alone; boundary
        // "jumps" are traces of the error itself.
        for e in 0..mesh.facets.len() {
            let facet = &mesh.facets[e];
            let (t1, t2) = (facet.kind.first(), facet.kind.second());
            let deg = solution.bases[t1]
                .degree
                .max(t2.map_or(0, |t| solution.bases[t].degree)) as usize;
            let nq = options.quad_points.unwrap_or(0).max(deg + 2);
            let rule = mesh.facet_rule(e, nq)?;
            let goh = gamma / facet.diameter;
            for q in 0..rule.len() {
                let x = rule.node(q);
                let w = rule.weight(q);
                let jump = match facet.kind {
                    FacetKind::Interior { t1, t2 } => {
                        solution.element_value(t1, x) - solution.element_value(t2, x)
                    }
                    _ => solution.element_value(t1, x) - exact.value(x),
                };
                let bn = if advecting {
                    let beta = field.beta_vector(x);
                    (0..d).fold(F::zero(), |s, m| s + beta[m] * facet.normal[m])
                } else {
                    F::zero()
                };
                let penalized = match facet.kind {
                    FacetKind::Neumann { .. } => F::zero(),
                    _ => goh,
                };
                dar_sq += w * (penalized + half * bn.abs()) * jump * jump;
            }
        }
        Some((dar_sq + l2_sq).sqrt())
    } else {
        None
    };

    Ok(ErrorReport {
        err_l2: l2_sq.sqrt(),
        err_h1: (l2_sq + semi_sq).sqrt(),
        err_h1_semi: semi_sq.sqrt(),
        err_linf: linf,
        err_dar,
        dofs: solution.dofs(),
        h_nominal: mesh.h_nominal,
        h_actual: mesh.h(),
    })
}

/// Observed orders between consecutive refinement levels.
#[derive(Clone, Copy, Debug)]
pub struct RateTriple<F> {
    pub l2: F,
    pub h1: F,
    pub linf: F,
}

/// Rates `log(e_coarse / e_fine) / log(h_coarse / h_fine)` on the measured
/// mesh sizes. One triple per consecutive report pair.
pub fn convergence_rates<F: Real>(
    reports: &[ErrorReport<F>],
) -> Result<Vec<RateTriple<F>>, SolveError> {
    if reports.len() < 2 {
        return Err(SolveError::NonMonotoneH);
    }
    for w in reports.windows(2) {
        if !(w[1].h_actual < w[0].h_actual) {
            return Err(SolveError::NonMonotoneH);
        }
    }
    Ok(reports
        .windows(2)
        .map(|w| {
            let lh = (w[0].h_actual / w[1].h_actual).ln();
            RateTriple {
                l2: (w[0].err_l2 / w[1].err_l2).ln() / lh,
                h1: (w[0].err_h1 / w[1].err_h1).ln() / lh,
                linf: (w[0].err_linf / w[1].err_linf).ln() / lh,
            }
        })
        .collect())
}
