//! Boundary-value problem descriptions.
//!
//! A problem is the coefficient triple (K, beta, sigma) of
//! `div(-K grad u + beta u) + sigma u = f`, boundary data, and optionally a
//! manufactured exact solution. The basis recurrence consumes derivatives
//! `D^l K`, `D^l beta`, `D^l sigma` at element centres up to order p-1
//! (p-2 for sigma), so every coefficient carries an exact derivative
//! oracle: closed-form differentiation, not finite differences and not AD.
//!
//! The oracle forms cover the built-in problem family exactly:
//! polynomials, `c e^{a.x}` (derivatives scale by powers of `a`), and
//! polynomial quotients `s/q`, whose derivatives follow from Leibniz on
//! `s = (s/q) q`:
//!
//! ```text
//!     D^l(s/q) = ( D^l s - sum_{m < l} C(l,m) D^m(s/q) D^{l-m} q ) / q .
//! ```
//!
//! A `Custom` variant takes a closure plus a declared order for anything
//! else; requests past the declared order fail with `OrderTooHigh`.

use crate::multiindex::{self, multi_binomial, MultiIndex};
use crate::scalar::Real;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown builtin problem: {0}")]
    UnknownProblem(String),
    #[error("problem {name} requires parameter nu > 0")]
    MissingParameter { name: String },
    #[error("derivative order {requested} exceeds declared smoothness {declared}")]
    OrderTooHigh { requested: u32, declared: u32 },
    #[error("K_11 = {value:e} <= 0 at element {element} barycentre; the basis recurrence divides by it")]
    HardFailure { element: usize, value: f64 },
}

/// Scalar coefficient with an exact derivative oracle.
#[derive(Clone)]
pub enum Coefficient<F> {
    /// Identically zero. Kept as its own variant so consumers can skip
    /// whole sums instead of multiplying by zeros.
    Zero { dim: usize },
    Constant { dim: usize, value: F },
    Poly(Polynomial<F>),
    /// `amplitude * e^{direction . x}`.
    ExpLinear { amplitude: F, direction: Vec<F> },
    /// `numerator / denominator`, denominator nonzero on the domain.
    Quotient { numerator: Polynomial<F>, denominator: Polynomial<F> },
    /// Arbitrary oracle `(l, x) -> D^l value(x)` valid for `|l| <= order`.
    Custom {
        dim: usize,
        order: u32,
        eval: Arc<dyn Fn(&MultiIndex, &[F]) -> F + Send + Sync>,
    },
}

impl<F> fmt::Debug for Coefficient<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Coefficient::Zero { .. } => "Zero",
            Coefficient::Constant { .. } => "Constant",
            Coefficient::Poly(_) => "Poly",
            Coefficient::ExpLinear { .. } => "ExpLinear",
            Coefficient::Quotient { .. } => "Quotient",
            Coefficient::Custom { .. } => "Custom",
        };
        write!(f, "{name}")
    }
}

impl<F: Real> Coefficient<F> {
    pub fn zero(dim: usize) -> Self {
        Coefficient::Zero { dim }
    }

    pub fn constant(dim: usize, value: F) -> Self {
        Coefficient::Constant { dim, value }
    }

    pub fn dim(&self) -> usize {
        match self {
            Coefficient::Zero { dim } | Coefficient::Constant { dim, .. } => *dim,
            Coefficient::Poly(p) => p.dim(),
            Coefficient::ExpLinear { direction, .. } => direction.len(),
            Coefficient::Quotient { numerator, .. } => numerator.dim(),
            Coefficient::Custom { dim, .. } => *dim,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero { .. })
    }

    /// Highest supported derivative order, `None` when unbounded.
    pub fn declared_order(&self) -> Option<u32> {
        match self {
            Coefficient::Custom { order, .. } => Some(*order),
            _ => None,
        }
    }

    pub fn value(&self, x: &[F]) -> F {
        self.derivative(&MultiIndex::zero(self.dim()), x)
            .expect("order-0 derivative is always available")
    }

    /// Exact derivative `D^l` at `x`.
    pub fn derivative(&self, l: &MultiIndex, x: &[F]) -> Result<F, ProblemError> {
        debug_assert_eq!(l.dim(), self.dim());
        match self {
            Coefficient::Zero { .. } => Ok(F::zero()),
            Coefficient::Constant { value, .. } => {
                Ok(if l.total() == 0 { *value } else { F::zero() })
            }
            Coefficient::Poly(p) => Ok(p.deriv_at(l, x)),
            Coefficient::ExpLinear { amplitude, direction } => {
                let mut factor = *amplitude;
                for (q, &e) in l.entries().iter().enumerate() {
                    factor = factor * direction[q].powi(e as i32);
                }
                let mut dot = F::zero();
                for (q, &d) in direction.iter().enumerate() {
                    dot += d * x[q];
                }
                Ok(factor * dot.exp())
            }
            Coefficient::Quotient { numerator, denominator } => {
                // Back-substitution over all m <= l, lowest degree first;
                // every dependency of m is entry-wise below it.
                let q0 = denominator.eval(x);
                let mut memo: Vec<(MultiIndex, F)> = Vec::new();
                for m in l.sub_indices() {
                    let mut acc = numerator.deriv_at(&m, x);
                    for (prev, r) in &memo {
                        if prev.leq(&m) && prev != &m {
                            let gap = m.checked_sub(prev).unwrap();
                            acc -= F::of_u128(multi_binomial(&m, prev))
                                * *r
                                * denominator.deriv_at(&gap, x);
                        }
                    }
                    memo.push((m, acc / q0));
                }
                Ok(memo.last().unwrap().1)
            }
            Coefficient::Custom { order, eval, .. } => {
                if l.total() > *order {
                    return Err(ProblemError::OrderTooHigh {
                        requested: l.total(),
                        declared: *order,
                    });
                }
                Ok(eval(l, x))
            }
        }
    }

    /// All derivatives `D^m` for `|m| <= p` at `x`, in canonical
    /// (graded-lex) rank order. For quotients this is a single
    /// back-substitution pass, much cheaper than a call per entry.
    pub fn derivative_table(&self, p: u32, x: &[F]) -> Result<Vec<F>, ProblemError> {
        let d = self.dim();
        let set = multiindex::index_set(d, p);
        match self {
            Coefficient::Quotient { numerator, denominator } => {
                let q0 = denominator.eval(x);
                let mut table = vec![F::zero(); set.len()];
                for (rank, m) in set.indices().iter().enumerate() {
                    let mut acc = numerator.deriv_at(m, x);
                    for l in m.sub_indices() {
                        if &l == m {
                            continue;
                        }
                        let gap = m.checked_sub(&l).unwrap();
                        acc -= F::of_u128(multi_binomial(m, &l))
                            * table[set.rank(&l).unwrap()]
                            * denominator.deriv_at(&gap, x);
                    }
                    table[rank] = acc / q0;
                }
                Ok(table)
            }
            _ => set
                .indices()
                .iter()
                .map(|m| self.derivative(m, x))
                .collect(),
        }
    }
}

/// Multivariate polynomial as a term list, exact coefficient arithmetic.
#[derive(Clone, Debug)]
pub struct Polynomial<F> {
    dim: usize,
    terms: Vec<(MultiIndex, F)>,
}

impl<F: Real> Polynomial<F> {
    pub fn new(dim: usize, raw: Vec<(MultiIndex, F)>) -> Self {
        let mut terms: Vec<(MultiIndex, F)> = Vec::new();
        for (k, c) in raw {
            assert_eq!(k.dim(), dim);
            match terms.iter_mut().find(|(t, _)| t == &k) {
                Some((_, acc)) => *acc += c,
                None => terms.push((k, c)),
            }
        }
        terms.retain(|(_, c)| *c != F::zero());
        terms.sort_by(|(a, _), (b, _)| (a.total(), a.entries()).cmp(&(b.total(), b.entries())));
        Self { dim, terms }
    }

    pub fn constant(dim: usize, c: F) -> Self {
        Self::new(dim, vec![(MultiIndex::zero(dim), c)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(MultiIndex, F)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(k, _)| k.total()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[F]) -> F {
        let mut acc = F::zero();
        for (k, c) in &self.terms {
            let mut t = *c;
            for (q, &e) in k.entries().iter().enumerate() {
                t = t * x[q].powi(e as i32);
            }
            acc += t;
        }
        acc
    }

    /// `D^l` of this polynomial evaluated at `x`, exactly: per term the
    /// falling-factorial prefactor `k!/(k-l)!` and the reduced power.
    pub fn deriv_at(&self, l: &MultiIndex, x: &[F]) -> F {
        let mut acc = F::zero();
        'terms: for (k, c) in &self.terms {
            let mut t = *c;
            for (q, (&kq, &lq)) in k.entries().iter().zip(l.entries()).enumerate() {
                if lq > kq {
                    continue 'terms;
                }
                let fall = multiindex::factorial(kq) / multiindex::factorial(kq - lq);
                t = t * F::of_u128(fall) * x[q].powi((kq - lq) as i32);
            }
            acc += t;
        }
        acc
    }

    /// `D^l` as a polynomial.
    pub fn derivative(&self, l: &MultiIndex) -> Polynomial<F> {
        let mut out = Vec::new();
        'terms: for (k, c) in &self.terms {
            let mut coeff = *c;
            let mut entries = Vec::with_capacity(self.dim);
            for (&kq, &lq) in k.entries().iter().zip(l.entries()) {
                if lq > kq {
                    continue 'terms;
                }
                let fall = multiindex::factorial(kq) / multiindex::factorial(kq - lq);
                coeff = coeff * F::of_u128(fall);
                entries.push(kq - lq);
            }
            out.push((MultiIndex::new(entries), coeff));
        }
        Polynomial::new(self.dim, out)
    }

    pub fn mul(&self, rhs: &Polynomial<F>) -> Polynomial<F> {
        assert_eq!(self.dim, rhs.dim);
        let mut out = Vec::new();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                out.push((ka.plus(kb), *ca * *cb));
            }
        }
        Polynomial::new(self.dim, out)
    }

    pub fn add_scaled(&self, rhs: &Polynomial<F>, s: F) -> Polynomial<F> {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.terms.clone();
        for (k, c) in &rhs.terms {
            out.push((k.clone(), *c * s));
        }
        Polynomial::new(self.dim, out)
    }
}

/// The coefficient triple. K is stored as d*d scalar coefficients
/// (row-major); the builtins all use scalar multiples of the identity but
/// assembly and the recurrence read the full matrix.
#[derive(Clone, Debug)]
pub struct CoefficientField<F> {
    pub dim: usize,
    k: Vec<Coefficient<F>>,
    beta: Vec<Coefficient<F>>,
    sigma: Coefficient<F>,
}

impl<F: Real> CoefficientField<F> {
    pub fn new(
        dim: usize,
        k: Vec<Coefficient<F>>,
        beta: Vec<Coefficient<F>>,
        sigma: Coefficient<F>,
    ) -> Self {
        assert_eq!(k.len(), dim * dim);
        assert_eq!(beta.len(), dim);
        assert_eq!(sigma.dim(), dim);
        for c in k.iter().chain(beta.iter()) {
            assert_eq!(c.dim(), dim);
        }
        Self { dim, k, beta, sigma }
    }

    /// `K = kappa * Id`.
    pub fn isotropic(
        dim: usize,
        kappa: Coefficient<F>,
        beta: Vec<Coefficient<F>>,
        sigma: Coefficient<F>,
    ) -> Self {
        let mut k = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                k.push(if i == j { kappa.clone() } else { Coefficient::zero(dim) });
            }
        }
        Self::new(dim, k, beta, sigma)
    }

    pub fn k(&self, row: usize, col: usize) -> &Coefficient<F> {
        &self.k[row * self.dim + col]
    }

    pub fn beta(&self, row: usize) -> &Coefficient<F> {
        &self.beta[row]
    }

    pub fn sigma(&self) -> &Coefficient<F> {
        &self.sigma
    }

    pub fn beta_is_zero(&self) -> bool {
        self.beta.iter().all(|b| b.is_zero())
    }

    /// K(x) as a dense row-major d*d matrix.
    pub fn k_matrix(&self, x: &[F]) -> Vec<F> {
        self.k.iter().map(|c| c.value(x)).collect()
    }

    pub fn beta_vector(&self, x: &[F]) -> Vec<F> {
        self.beta.iter().map(|c| c.value(x)).collect()
    }

    pub fn sigma_value(&self, x: &[F]) -> F {
        self.sigma.value(x)
    }

    /// `div beta(x)`, from the derivative oracles.
    pub fn div_beta(&self, x: &[F]) -> Result<F, ProblemError> {
        let mut acc = F::zero();
        for (q, b) in self.beta.iter().enumerate() {
            acc += b.derivative(&MultiIndex::unit(self.dim, q), x)?;
        }
        Ok(acc)
    }
}

pub type BoundaryValueFn<F> = Arc<dyn Fn(&[F]) -> F + Send + Sync>;
/// Scalar Neumann flux `g_N(x, n)` with the convention `-K grad u . n = g_N`.
pub type BoundaryFluxFn<F> = Arc<dyn Fn(&[F], &[F]) -> F + Send + Sync>;
pub type RegionPredicate<F> = Arc<dyn Fn(&[F]) -> bool + Send + Sync>;

/// How boundary facets split into Dirichlet and Neumann parts.
#[derive(Clone)]
pub enum Regions<F> {
    /// Dirichlet where `beta . n < 0` (inflow), Neumann where `>= 0`.
    ByInflowSign,
    /// Explicit predicates, checked in order Dirichlet then Neumann; a
    /// facet satisfying neither on all its quadrature nodes is an error.
    Explicit {
        dirichlet: RegionPredicate<F>,
        neumann: RegionPredicate<F>,
    },
}

impl<F> fmt::Debug for Regions<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regions::ByInflowSign => write!(f, "ByInflowSign"),
            Regions::Explicit { .. } => write!(f, "Explicit"),
        }
    }
}

impl<F> Regions<F> {
    pub fn all_dirichlet() -> Self {
        Regions::Explicit {
            dirichlet: Arc::new(|_: &[F]| true),
            neumann: Arc::new(|_: &[F]| false),
        }
    }
}

#[derive(Clone)]
pub struct BoundaryData<F> {
    pub dirichlet_value: BoundaryValueFn<F>,
    pub neumann_flux: BoundaryFluxFn<F>,
    pub regions: Regions<F>,
}

impl<F: Real> BoundaryData<F> {
    pub fn dirichlet_only(g_d: BoundaryValueFn<F>) -> Self {
        Self {
            dirichlet_value: g_d,
            neumann_flux: Arc::new(|_: &[F], _: &[F]| F::zero()),
            regions: Regions::all_dirichlet(),
        }
    }
}

/// Manufactured solution wrapped around a derivative oracle, so Taylor
/// polynomials of the exact solution are available to any order the
/// oracle supports.
#[derive(Clone, Debug)]
pub struct ExactSolution<F> {
    pub field: Coefficient<F>,
}

impl<F: Real> ExactSolution<F> {
    pub fn value(&self, x: &[F]) -> F {
        self.field.value(x)
    }

    pub fn gradient(&self, x: &[F]) -> Vec<F> {
        let d = self.field.dim();
        (0..d)
            .map(|q| {
                self.field
                    .derivative(&MultiIndex::unit(d, q), x)
                    .expect("exact solutions must be at least C^1")
            })
            .collect()
    }

    pub fn derivative(&self, l: &MultiIndex, x: &[F]) -> Result<F, ProblemError> {
        self.field.derivative(l, x)
    }
}

#[derive(Clone)]
pub struct ProblemSpec<F> {
    pub name: String,
    pub coefficients: CoefficientField<F>,
    pub boundary: BoundaryData<F>,
    /// Source term f. Quasi-Trefftz spaces approximate solutions of the
    /// homogeneous equation, so f = 0 for all builtins.
    pub source: Coefficient<F>,
    pub exact: Option<ExactSolution<F>>,
}

impl<F> fmt::Debug for ProblemSpec<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProblemSpec({})", self.name)
    }
}

/// Tolerance for matching points to boundary pieces like `{x_1 = 0}`.
/// Structured meshes place boundary nodes exactly; this absorbs imported
/// coordinates written with limited precision.
fn edge_tol<F: Real>() -> F {
    F::from_f64(1e-9).unwrap()
}

fn poly2<F: Real>(terms: &[([u32; 2], f64)]) -> Polynomial<F> {
    Polynomial::new(
        2,
        terms
            .iter()
            .map(|&(k, c)| (MultiIndex::new(k.to_vec()), F::from_f64(c).unwrap()))
            .collect(),
    )
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 6] = [
    "poly_reaction",
    "exp_diffusion",
    "smooth_dar",
    "advdom_neumann",
    "advdom_dirichlet",
    "reactdom",
];

/// Whether a builtin takes the diffusion-scale parameter nu.
pub fn builtin_takes_nu(name: &str) -> bool {
    matches!(name, "advdom_neumann" | "advdom_dirichlet" | "reactdom")
}

/// The experiment suite, all posed on the unit square.
///
/// * `poly_reaction`: K = Id, beta = 0, sigma = 4/(x1^2+x2^2+1), exact
///   solution u = x1^2+x2^2+1 (a quasi-Trefftz function itself), Dirichlet
///   everywhere.
/// * `exp_diffusion`: K = e^{x1-x2} Id, beta = 0, sigma = 0, exact solution
///   u = e^{-x1+x2}, Dirichlet everywhere.
/// * `smooth_dar`: K = (x1+x2+1) Id, beta = (1,0), sigma = 3/(x1+x2+1),
///   exact solution u = 1/(x1+x2+1), Dirichlet on the inflow {x1 = 0},
///   Neumann (flux from u) elsewhere.
/// * `advdom_neumann(nu)`: K = nu Id, beta = (x2+1, 2-x1), sigma = 0,
///   inflow/outflow split by sign, piecewise-constant inflow datum,
///   g_N = 0 on the outflow; no exact solution.
/// * `advdom_dirichlet(nu)`: same field, Dirichlet on the whole boundary
///   with the inflow datum extended by zero on the outflow.
/// * `reactdom(nu)`: K = nu Id, beta = 0, sigma = x1+x2+1, g_D = 1 on the
///   whole boundary; no exact solution.
pub fn builtin<F: Real>(name: &str, nu: Option<F>) -> Result<ProblemSpec<F>, ProblemError> {
    let need_nu = || -> Result<F, ProblemError> {
        match nu {
            Some(v) if v > F::zero() => Ok(v),
            _ => Err(ProblemError::MissingParameter { name: name.to_string() }),
        }
    };
    // 1 + x1^2 + x2^2 and x1 + x2 + 1 appear in several roles below.
    let one_plus_r2 = || poly2::<F>(&[([0, 0], 1.0), ([2, 0], 1.0), ([0, 2], 1.0)]);
    let linear_w = || poly2::<F>(&[([0, 0], 1.0), ([1, 0], 1.0), ([0, 1], 1.0)]);
    let tol = edge_tol::<F>();

    let spec = match name {
        "poly_reaction" => {
            let coefficients = CoefficientField::isotropic(
                2,
                Coefficient::constant(2, F::one()),
                vec![Coefficient::zero(2), Coefficient::zero(2)],
                Coefficient::Quotient {
                    numerator: Polynomial::constant(2, F::from_f64(4.0).unwrap()),
                    denominator: one_plus_r2(),
                },
            );
            ProblemSpec {
                name: name.to_string(),
                coefficients,
                boundary: BoundaryData::dirichlet_only(Arc::new(|x: &[F]| {
                    F::one() + x[0] * x[0] + x[1] * x[1]
                })),
                source: Coefficient::zero(2),
                exact: Some(ExactSolution { field: Coefficient::Poly(one_plus_r2()) }),
            }
        }
        "exp_diffusion" => {
            let coefficients = CoefficientField::isotropic(
                2,
                Coefficient::ExpLinear {
                    amplitude: F::one(),
                    direction: vec![F::one(), -F::one()],
                },
                vec![Coefficient::zero(2), Coefficient::zero(2)],
                Coefficient::zero(2),
            );
            ProblemSpec {
                name: name.to_string(),
                coefficients,
                boundary: BoundaryData::dirichlet_only(Arc::new(|x: &[F]| {
                    (x[1] - x[0]).exp()
                })),
                source: Coefficient::zero(2),
                exact: Some(ExactSolution {
                    field: Coefficient::ExpLinear {
                        amplitude: F::one(),
                        direction: vec![-F::one(), F::one()],
                    },
                }),
            }
        }
        "smooth_dar" => {
            let coefficients = CoefficientField::isotropic(
                2,
                Coefficient::Poly(linear_w()),
                vec![Coefficient::constant(2, F::one()), Coefficient::zero(2)],
                Coefficient::Quotient {
                    numerator: Polynomial::constant(2, F::from_f64(3.0).unwrap()),
                    denominator: linear_w(),
                },
            );
            ProblemSpec {
                name: name.to_string(),
                coefficients,
                boundary: BoundaryData {
                    dirichlet_value: Arc::new(|x: &[F]| {
                        F::one() / (x[0] + x[1] + F::one())
                    }),
                    // -K grad u . n with u = 1/w, K = w Id: grad u = -(1,1)/w^2,
                    // so the flux is (n1+n2)/w.
                    neumann_flux: Arc::new(|x: &[F], n: &[F]| {
                        (n[0] + n[1]) / (x[0] + x[1] + F::one())
                    }),
                    regions: Regions::Explicit {
                        dirichlet: Arc::new(move |x: &[F]| x[0].abs() <= tol),
                        neumann: Arc::new(move |x: &[F]| x[0].abs() > tol),
                    },
                },
                source: Coefficient::zero(2),
                exact: Some(ExactSolution {
                    field: Coefficient::Quotient {
                        numerator: Polynomial::constant(2, F::one()),
                        denominator: linear_w(),
                    },
                }),
            }
        }
        "advdom_neumann" | "advdom_dirichlet" => {
            let nu = need_nu()?;
            let coefficients = CoefficientField::isotropic(
                2,
                Coefficient::constant(2, nu),
                vec![
                    Coefficient::Poly(poly2(&[([0, 0], 1.0), ([0, 1], 1.0)])),
                    Coefficient::Poly(poly2(&[([0, 0], 2.0), ([1, 0], -1.0)])),
                ],
                Coefficient::zero(2),
            );
            // Inflow datum: 1 on the edge {x1 = 0}, 1 on {x2 = 0, x1 <= 1/3},
            // 0 on the rest of {x2 = 0}; extended by 0 elsewhere for the
            // all-Dirichlet variant.
            let third = F::from_f64(1.0 / 3.0).unwrap();
            let g_d: BoundaryValueFn<F> = Arc::new(move |x: &[F]| {
                if x[0].abs() <= tol {
                    F::one()
                } else if x[1].abs() <= tol && x[0] <= third {
                    F::one()
                } else {
                    F::zero()
                }
            });
            let regions = if name == "advdom_neumann" {
                Regions::ByInflowSign
            } else {
                Regions::all_dirichlet()
            };
            ProblemSpec {
                name: name.to_string(),
                coefficients,
                boundary: BoundaryData {
                    dirichlet_value: g_d,
                    neumann_flux: Arc::new(|_: &[F], _: &[F]| F::zero()),
                    regions,
                },
                source: Coefficient::zero(2),
                exact: None,
            }
        }
        "reactdom" => {
            let nu = need_nu()?;
            let coefficients = CoefficientField::isotropic(
                2,
                Coefficient::constant(2, nu),
                vec![Coefficient::zero(2), Coefficient::zero(2)],
                Coefficient::Poly(linear_w()),
            );
            ProblemSpec {
                name: name.to_string(),
                coefficients,
                boundary: BoundaryData::dirichlet_only(Arc::new(|_: &[F]| F::one())),
                source: Coefficient::zero(2),
                exact: None,
            }
        }
        other => return Err(ProblemError::UnknownProblem(other.to_string())),
    };
    Ok(spec)
}

/// What [`validate_problem`] measured. Minima are over element barycentres
/// and the volume quadrature nodes of the default degree-(p+1) rule.
#[derive(Clone, Debug)]
pub struct ValidationReport<F> {
    /// Minimum of K_11 over barycentres (the recurrence pivot).
    pub min_k11_center: F,
    /// Minimum eigenvalue of the symmetrized K over all sample points.
    pub min_k_eigenvalue: F,
    /// Minimum of sigma + div(beta)/2 over all sample points.
    pub min_sigma_stab: F,
    pub warnings: Vec<String>,
}

/// Sample the coefficient assumptions over a mesh: ellipticity, the
/// reaction-advection bound sigma + div(beta)/2, and positivity of
/// K_11 at barycentres. Everything is advisory except the last, which the
/// recurrence divides by.
pub fn validate_problem<F: Real>(
    problem: &ProblemSpec<F>,
    mesh: &crate::mesh::Mesh<F>,
    p: u32,
) -> Result<ValidationReport<F>, ProblemError> {
    let d = mesh.dim;
    let field = &problem.coefficients;
    let mut min_k11 = F::infinity();
    let mut min_eig = F::infinity();
    let mut min_stab = F::infinity();

    let mut scan = |x: &[F]| -> Result<(), ProblemError> {
        let k = field.k_matrix(x);
        let mut sym = vec![F::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                sym[i * d + j] =
                    (k[i * d + j] + k[j * d + i]) / F::of_usize(2);
            }
        }
        let eig = crate::linalg::symmetric_eigenvalues(&sym, d);
        min_eig = min_eig.min(eig[0]);
        let stab = field.sigma_value(x) + field.div_beta(x)? / F::of_usize(2);
        min_stab = min_stab.min(stab);
        Ok(())
    };

    for (t, element) in mesh.elements.iter().enumerate() {
        let k11 = field.k(0, 0).value(&element.centroid);
        if !(k11 > F::zero()) {
            return Err(ProblemError::HardFailure {
                element: t,
                value: k11.to_f64().unwrap_or(f64::NAN),
            });
        }
        min_k11 = min_k11.min(k11);
        scan(&element.centroid)?;
        let rule = mesh
            .volume_rule(t, (p + 1) as usize)
            .expect("default volume rule within supported orders");
        for q in 0..rule.len() {
            scan(rule.node(q))?;
        }
    }

    let mut warnings = Vec::new();
    if !(min_eig > F::zero()) {
        warnings.push(format!(
            "ellipticity violated: min eigenvalue of symmetrized K is {min_eig}"
        ));
    }
    let has_reaction_or_advection =
        !field.sigma().is_zero() || !field.beta_is_zero();
    if has_reaction_or_advection && !(min_stab > F::zero()) {
        warnings.push(format!(
            "sigma + div(beta)/2 is not positive (min {min_stab}); the coercivity assumption fails"
        ));
    }
    let mut dirichlet = 0usize;
    let mut unclassified = 0usize;
    for f in &mesh.facets {
        match f.kind {
            crate::mesh::FacetKind::Dirichlet { .. } => dirichlet += 1,
            crate::mesh::FacetKind::Unclassified { .. } => unclassified += 1,
            _ => {}
        }
    }
    if unclassified > 0 {
        warnings.push(format!(
            "{unclassified} boundary facets are unclassified; run classify_boundary before assembly"
        ));
    } else if dirichlet == 0 {
        warnings.push("no Dirichlet facets: the problem assumes Gamma_D is nonempty".to_string());
    }

    Ok(ValidationReport { min_k11_center: min_k11, min_k_eigenvalue: min_eig, min_sigma_stab: min_stab, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiindex::{enumerate_up_to, Order};

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    #[test]
    fn polynomial_eval_and_derivatives() {
        // f = 3 + 2 x1 x2^2, df/dx2 = 4 x1 x2, d2f/dx2^2 = 4 x1.
        let f = poly2::<f64>(&[([0, 0], 3.0), ([1, 2], 2.0)]);
        let x = [2.0, 5.0];
        assert_eq!(f.eval(&x), 3.0 + 2.0 * 2.0 * 25.0);
        assert_eq!(f.deriv_at(&mi(&[0, 1]), &x), 4.0 * 2.0 * 5.0);
        assert_eq!(f.deriv_at(&mi(&[0, 2]), &x), 4.0 * 2.0);
        assert_eq!(f.deriv_at(&mi(&[3, 0]), &x), 0.0);
        let d = f.derivative(&mi(&[1, 1]));
        assert_eq!(d.eval(&x), 4.0 * 5.0);
    }

    #[test]
    fn polynomial_product_leibniz() {
        // D^i(fg) = sum_{l <= i} C(i,l) D^l f D^{i-l} g, checked exactly on
        // a grid of derivative orders and points.
        let f = poly2::<f64>(&[([2, 0], 1.0), ([0, 1], -2.0), ([1, 1], 0.5)]);
        let g = poly2::<f64>(&[([0, 2], 3.0), ([1, 0], 1.0), ([0, 0], -1.0)]);
        let fg = f.mul(&g);
        for i in enumerate_up_to(2, 4, Order::GradedLex) {
            for x in [[0.3, -0.7], [1.5, 2.0], [0.0, 0.0]] {
                let direct = fg.deriv_at(&i, &x);
                let mut leibniz = 0.0;
                for l in i.sub_indices() {
                    let gap = i.checked_sub(&l).unwrap();
                    leibniz += multi_binomial(&i, &l) as f64
                        * f.deriv_at(&l, &x)
                        * g.deriv_at(&gap, &x);
                }
                assert!(
                    (direct - leibniz).abs() <= 1e-10 * (1.0 + direct.abs()),
                    "i={i:?} x={x:?}: {direct} vs {leibniz}"
                );
            }
        }
    }

    #[test]
    fn quotient_derivatives_match_closed_form_1d() {
        // r = 1/(1+x): D^k r = (-1)^k k! / (1+x)^{k+1}.
        let r = Coefficient::Quotient {
            numerator: Polynomial::constant(1, 1.0f64),
            denominator: Polynomial::new(
                1,
                vec![(mi(&[0]), 1.0), (mi(&[1]), 1.0)],
            ),
        };
        let x = [0.5];
        for k in 0..=8u32 {
            let got = r.derivative(&mi(&[k]), &x).unwrap();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let expect = sign * crate::multiindex::factorial(k) as f64
                / 1.5f64.powi(k as i32 + 1);
            assert!(
                ((got - expect) / expect).abs() < 1e-12,
                "k={k}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn derivative_table_matches_single_calls() {
        let problem = builtin::<f64>("smooth_dar", None).unwrap();
        let sigma = problem.coefficients.sigma();
        let x = [0.3, 0.4];
        let set = crate::multiindex::index_set(2, 5);
        let table = sigma.derivative_table(5, &x).unwrap();
        for (rank, m) in set.indices().iter().enumerate() {
            let single = sigma.derivative(m, &x).unwrap();
            assert!(
                (table[rank] - single).abs() <= 1e-12 * (1.0 + single.abs()),
                "m={m:?}"
            );
        }
    }

    #[test]
    fn builtin_spot_derivatives() {
        // exp_diffusion K_11 = e^{x1-x2}: D^{(1,0)} at (0.5,0.5) is e^0 = 1.
        let p = builtin::<f64>("exp_diffusion", None).unwrap();
        let d = p
            .coefficients
            .k(0, 0)
            .derivative(&mi(&[1, 0]), &[0.5, 0.5])
            .unwrap();
        assert!((d - 1.0).abs() < 1e-15);

        // poly_reaction sigma(0,0) = 4.
        let p = builtin::<f64>("poly_reaction", None).unwrap();
        assert!((p.coefficients.sigma_value(&[0.0, 0.0]) - 4.0).abs() < 1e-15);

        // smooth_dar D^{(2,0)} sigma at the origin: 6/(x1+x2+1)^3 -> 6.
        let p = builtin::<f64>("smooth_dar", None).unwrap();
        let d = p
            .coefficients
            .sigma()
            .derivative(&mi(&[2, 0]), &[0.0, 0.0])
            .unwrap();
        assert!((d - 6.0).abs() < 1e-12);
    }

    #[test]
    fn advdom_divergence_free() {
        let p = builtin::<f64>("advdom_neumann", Some(0.1)).unwrap();
        for x in [[0.2, 0.7], [0.9, 0.1], [0.5, 0.5]] {
            assert_eq!(p.coefficients.div_beta(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            builtin::<f64>("no_such_problem", None),
            Err(ProblemError::UnknownProblem(_))
        ));
        assert!(matches!(
            builtin::<f64>("reactdom", None),
            Err(ProblemError::MissingParameter { .. })
        ));
        assert!(matches!(
            builtin::<f64>("advdom_dirichlet", Some(-1.0)),
            Err(ProblemError::MissingParameter { .. })
        ));
    }

    #[test]
    fn custom_order_limit() {
        let c = Coefficient::Custom {
            dim: 2,
            order: 1,
            eval: Arc::new(|_l: &MultiIndex, _x: &[f64]| 1.0),
        };
        assert!(c.derivative(&mi(&[1, 0]), &[0.0, 0.0]).is_ok());
        assert!(matches!(
            c.derivative(&mi(&[1, 1]), &[0.0, 0.0]),
            Err(ProblemError::OrderTooHigh { requested: 2, declared: 1 })
        ));
    }

    /// Iterated central differences for D^l f, second-order accurate.
    fn fd_derivative(
        f: &dyn Fn(&[f64]) -> f64,
        l: &MultiIndex,
        x: &[f64],
        h: f64,
    ) -> f64 {
        fn along_axis(
            f: &dyn Fn(&[f64]) -> f64,
            l: &MultiIndex,
            axis: usize,
            x: &[f64],
            h: f64,
        ) -> f64 {
            if axis == l.dim() {
                return f(x);
            }
            let m = l.entry(axis);
            if m == 0 {
                return along_axis(f, l, axis + 1, x, h);
            }
            // Central stencil: sum_r (-1)^r C(m,r) f(x + (m/2 - r) h e).
            let mut acc = 0.0;
            for r in 0..=m {
                let mut y = x.to_vec();
                y[axis] += (m as f64 / 2.0 - r as f64) * h;
                let c = crate::multiindex::binomial(m, r) as f64;
                let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * c * along_axis(f, l, axis + 1, &y, h);
            }
            acc / h.powi(m as i32)
        }
        along_axis(f, l, 0, x, h)
    }

    #[test]
    fn oracles_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let problems: Vec<ProblemSpec<f64>> = vec![
            builtin("poly_reaction", None).unwrap(),
            builtin("exp_diffusion", None).unwrap(),
            builtin("smooth_dar", None).unwrap(),
            builtin("advdom_neumann", Some(0.01)).unwrap(),
            builtin("reactdom", Some(0.1)).unwrap(),
        ];
        for problem in &problems {
            let field = &problem.coefficients;
            let mut components: Vec<(&str, &Coefficient<f64>)> = vec![
                ("k11", field.k(0, 0)),
                ("sigma", field.sigma()),
            ];
            components.push(("beta1", field.beta(0)));
            components.push(("beta2", field.beta(1)));
            for (tag, c) in components {
                if c.is_zero() {
                    continue;
                }
                for l in enumerate_up_to(2, 3, Order::GradedLex) {
                    if l.total() == 0 {
                        continue;
                    }
                    // Roundoff in an order-3 stencil needs a wider step.
                    let h = if l.total() <= 2 { 1e-4 } else { 1e-3 };
                    for _ in 0..10 {
                        let x = [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)];
                        let exact = c.derivative(&l, &x).unwrap();
                        let fd = fd_derivative(&|y| c.value(y), &l, &x, h);
                        let scale = exact.abs().max(1.0);
                        assert!(
                            (exact - fd).abs() <= 1e-5 * scale,
                            "{} {tag} l={l:?} x={x:?}: oracle {exact} vs fd {fd}",
                            problem.name
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn manufactured_solutions_are_homogeneous() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for name in ["poly_reaction", "exp_diffusion", "smooth_dar"] {
            let problem = builtin::<f64>(name, None).unwrap();
            let field = &problem.coefficients;
            let exact = problem.exact.as_ref().unwrap();
            // L u = div(-K grad u + beta u) + sigma u, with the divergence
            // by central differences of the analytic flux.
            let flux = |x: &[f64], q: usize| -> f64 {
                let grad = exact.gradient(x);
                let k = field.k_matrix(x);
                let mut g = field.beta_vector(x)[q] * exact.value(x);
                for m in 0..2 {
                    g -= k[q * 2 + m] * grad[m];
                }
                g
            };
            let delta = 1e-5;
            for _ in 0..20 {
                let x = [rng.gen_range(0.06..0.94), rng.gen_range(0.06..0.94)];
                let mut div = 0.0;
                for q in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[q] += delta;
                    xm[q] -= delta;
                    div += (flux(&xp, q) - flux(&xm, q)) / (2.0 * delta);
                }
                let lu = div + field.sigma_value(&x) * exact.value(&x);
                assert!(lu.abs() <= 1e-6, "{name} at {x:?}: Lu = {lu}");
            }
        }
    }

    #[test]
    fn smooth_dar_stability_constant() {
        // sigma + div(beta)/2 = 3/(x1+x2+1) with div beta = 0; minimum on
        // the closed square is 1 at (1,1).
        let p = builtin::<f64>("smooth_dar", None).unwrap();
        let v = p.coefficients.sigma_value(&[1.0, 1.0])
            + p.coefficients.div_beta(&[1.0, 1.0]).unwrap() / 2.0;
        assert!((v - 1.0).abs() < 1e-15);
    }
}
