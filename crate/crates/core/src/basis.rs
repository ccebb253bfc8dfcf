//! Local polynomial bases: full P^p and the quasi-Trefftz space QT^p.
//!
//! Everything lives in scaled monomial coordinates on one element:
//!
//! ```text
//!     v(x) = sum_k  a_k ((x - x_T) / h_T)^k ,   a_k = h_T^{|k|} D^k v(x_T) / k! ,
//! ```
//!
//! so coefficients stay O(1) as the mesh refines. The quasi-Trefftz space
//!
//! ```text
//!     QT^p(T) = { v in P^p : D^i (L v)(x_T) = 0  for all |i| <= p-2 }
//! ```
//!
//! is built by a coefficient recurrence: expanding `D^i(Lv)(x_T) = 0` with
//! the Leibniz rule and isolating the unique second-derivative term in the
//! x1 direction gives, for every `|i| <= p-2`, an equation for `a_{i+2e1}`
//! in terms of coefficients of lower x1-order:
//!
//! ```text
//!     K_11(x_T) (i+2e1)!  a_{i+2e1}  =
//!       - sum_{j,m} sum_{l <= i+e_j, (j,m,l) != (1,1,0)}
//!             [(i+e_j)!/l!] (i+e_j-l+e_m)_m  h^{|l|}   D^l K_jm(x_T)  a_{i+e_j-l+e_m}
//!       + sum_j sum_{l <= i+e_j} [(i+e_j)!/l!]          h^{|l|+1} D^l beta_j(x_T) a_{i+e_j-l}
//!       + sum_{l <= i}           [i!/l!]                h^{|l|+2} D^l sigma(x_T)  a_{i-l} ,
//! ```
//!
//! everything already folded by the net power h^{|i|+2}. Prescribing the
//! Cauchy slice {a_k : k_1 <= 1} and sweeping diagonals |i| = 0, 1, ...
//! (ascending i_1 within each diagonal, so same-diagonal sources are ready)
//! determines the rest. One seed per slice position gives a basis of
//! dimension `S_{d-1,p} + S_{d-1,p-1}`.
//!
//! The integer bookkeeping (which source feeds which target with which
//! factorial weight) depends only on (d, p) and the coefficient sparsity,
//! so it is built once per such signature and cached; per element only the
//! coefficient derivative tables change.

use crate::multiindex::{self, factorial_ratio, MultiIndex, Order};
use crate::problem::{CoefficientField, ExactSolution, ProblemError};
use crate::scalar::Real;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Which local space a basis spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    QuasiTrefftz,
    FullPolynomial,
}

impl SpaceKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "qt" => Some(SpaceKind::QuasiTrefftz),
            "full" => Some(SpaceKind::FullPolynomial),
            _ => None,
        }
    }
}

/// One polynomial in scaled monomial form. `coef[r]` multiplies the
/// monomial `((x-center)/scale)^k` where `k` is the rank-`r` multi-index
/// of the canonical graded enumeration.
#[derive(Clone, Debug)]
pub struct LocalPolynomial<F> {
    dim: usize,
    degree: u32,
    center: Vec<F>,
    scale: F,
    coef: Vec<F>,
}

impl<F: Real> LocalPolynomial<F> {
    pub fn new(dim: usize, degree: u32, center: Vec<F>, scale: F, coef: Vec<F>) -> Self {
        assert_eq!(center.len(), dim);
        assert_eq!(coef.len(), multiindex::count_up_to(dim, degree));
        assert!(scale > F::zero());
        Self { dim, degree, center, scale, coef }
    }

    pub fn zero(dim: usize, degree: u32, center: Vec<F>, scale: F) -> Self {
        let len = multiindex::count_up_to(dim, degree);
        Self::new(dim, degree, center, scale, vec![F::zero(); len])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn center(&self) -> &[F] {
        &self.center
    }

    pub fn scale(&self) -> F {
        self.scale
    }

    pub fn coef(&self) -> &[F] {
        &self.coef
    }

    pub fn coef_mut(&mut self) -> &mut [F] {
        &mut self.coef
    }

    /// The coefficient of the monomial with multi-index `k`, zero when `k`
    /// is outside the degree range.
    pub fn coefficient(&self, k: &MultiIndex) -> F {
        multiindex::index_set(self.dim, self.degree)
            .rank(k)
            .map_or(F::zero(), |r| self.coef[r])
    }

    fn xi(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(&self.center)
            .map(|(&xq, &cq)| (xq - cq) / self.scale)
            .collect()
    }

    pub fn value(&self, x: &[F]) -> F {
        let xi = self.xi(x);
        let set = multiindex::index_set(self.dim, self.degree);
        let mut acc = F::zero();
        for (r, k) in set.indices().iter().enumerate() {
            if self.coef[r] == F::zero() {
                continue;
            }
            let mut term = self.coef[r];
            for (q, &e) in k.entries().iter().enumerate() {
                term = term * xi[q].powi(e as i32);
            }
            acc += term;
        }
        acc
    }

    pub fn gradient(&self, x: &[F]) -> Vec<F> {
        (0..self.dim).map(|q| self.derivative_axis(q).value(x)).collect()
    }

    /// Exact partial derivative along one axis, one degree lower.
    pub fn derivative_axis(&self, axis: usize) -> LocalPolynomial<F> {
        assert!(axis < self.dim);
        let degree = self.degree.saturating_sub(1);
        let set = multiindex::index_set(self.dim, self.degree);
        let low = multiindex::index_set(self.dim, degree);
        let mut coef = vec![F::zero(); low.len()];
        for (r, k) in set.indices().iter().enumerate() {
            let e = k.entry(axis);
            if e == 0 {
                continue;
            }
            let mut entries = k.entries().to_vec();
            entries[axis] -= 1;
            let target = low.rank(&MultiIndex::new(entries)).unwrap();
            coef[target] += self.coef[r] * F::of_u128(e as u128) / self.scale;
        }
        LocalPolynomial::new(self.dim, degree, self.center.clone(), self.scale, coef)
    }

    /// `D^k v(center)`, read off the coefficient: `a_k k! / h^{|k|}`.
    pub fn derivative_at_center(&self, k: &MultiIndex) -> F {
        let a = self.coefficient(k);
        a * F::of_u128(k.factorial()) / self.scale.powi(k.total() as i32)
    }
}

/// Basis member values and gradients at a batch of points, laid out for
/// assembly: `values[q * nb + i]`, `gradients[(q * nb + i) * dim + axis]`.
#[derive(Clone, Debug)]
pub struct BasisTables<F> {
    pub n_points: usize,
    pub n_members: usize,
    pub dim: usize,
    pub values: Vec<F>,
    pub gradients: Vec<F>,
}

impl<F: Real> BasisTables<F> {
    pub fn value(&self, q: usize, i: usize) -> F {
        self.values[q * self.n_members + i]
    }

    pub fn gradient(&self, q: usize, i: usize) -> &[F] {
        let base = (q * self.n_members + i) * self.dim;
        &self.gradients[base..base + self.dim]
    }
}

/// A basis of the local space on one element. All members share the same
/// center, scale, and degree; quasi-Trefftz members keep full-length
/// coefficient vectors (zeros where the recurrence forced nothing).
#[derive(Clone, Debug)]
pub struct LocalBasis<F> {
    pub kind: SpaceKind,
    pub degree: u32,
    members: Vec<LocalPolynomial<F>>,
}

impl<F: Real> LocalBasis<F> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[LocalPolynomial<F>] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &LocalPolynomial<F> {
        &self.members[i]
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim
    }

    /// Evaluate all members at `points` (flat, `dim` coordinates each).
    /// Scaled monomials are tabulated once per point by degree recursion,
    /// then combined with each member's coefficients.
    pub fn tabulate(&self, points: &[F]) -> BasisTables<F> {
        let dim = self.dim();
        assert_eq!(points.len() % dim, 0);
        let n_points = points.len() / dim;
        let nb = self.members.len();
        let set = multiindex::index_set(dim, self.degree);
        let s = set.len();
        let center = &self.members[0].center;
        let scale = self.members[0].scale;
        let inv_scale = F::one() / scale;

        // Per-rank recursion links, computed once per batch: the monomial
        // of k extends the monomial of k - e_q along q.
        let mut build_link: Vec<(usize, usize)> = Vec::with_capacity(s);
        let mut grad_links: Vec<Vec<(usize, usize, F)>> = Vec::with_capacity(s);
        for k in set.indices() {
            let mut links = Vec::new();
            let mut build = (0usize, 0usize);
            for q in 0..dim {
                let e = k.entry(q);
                if e == 0 {
                    continue;
                }
                let mut entries = k.entries().to_vec();
                entries[q] -= 1;
                let below = set.rank(&MultiIndex::new(entries)).unwrap();
                build = (q, below);
                links.push((q, below, F::of_u128(e as u128) * inv_scale));
            }
            build_link.push(build);
            grad_links.push(links);
        }

        let mut values = vec![F::zero(); n_points * nb];
        let mut gradients = vec![F::zero(); n_points * nb * dim];
        let mut mono = vec![F::zero(); s];
        let mut mono_grad = vec![F::zero(); s * dim];
        for p in 0..n_points {
            let x = &points[p * dim..(p + 1) * dim];
            let xi: Vec<F> = (0..dim)
                .map(|q| (x[q] - center[q]) * inv_scale)
                .collect();
            mono[0] = F::one();
            for g in mono_grad[..dim].iter_mut() {
                *g = F::zero();
            }
            for r in 1..s {
                let (axis, below) = build_link[r];
                mono[r] = mono[below] * xi[axis];
                let base = r * dim;
                for g in mono_grad[base..base + dim].iter_mut() {
                    *g = F::zero();
                }
                for &(q, b, w) in &grad_links[r] {
                    mono_grad[base + q] = w * mono[b];
                }
            }
            for (i, member) in self.members.iter().enumerate() {
                let mut v = F::zero();
                let mut g = vec![F::zero(); dim];
                for (r, &a) in member.coef.iter().enumerate() {
                    if a == F::zero() {
                        continue;
                    }
                    v += a * mono[r];
                    for q in 0..dim {
                        g[q] += a * mono_grad[r * dim + q];
                    }
                }
                values[p * nb + i] = v;
                let base = (p * nb + i) * dim;
                gradients[base..base + dim].copy_from_slice(&g);
            }
        }
        BasisTables { n_points, n_members: nb, dim, values, gradients }
    }
}

/// Dimension of QT^p in d variables: the number of Cauchy data,
/// `S_{d-1,p} + S_{d-1,p-1}` for p >= 2; QT^p = P^p below that.
pub fn qt_dimension(dim: usize, degree: u32) -> usize {
    if degree < 2 {
        return multiindex::count_up_to(dim, degree);
    }
    match dim {
        1 => 2,
        _ => {
            multiindex::count_up_to(dim - 1, degree)
                + multiindex::count_up_to(dim - 1, degree - 1)
        }
    }
}

/// The basis of all scaled monomials of degree `<= p`.
pub fn full_basis<F: Real>(
    dim: usize,
    degree: u32,
    center: Vec<F>,
    scale: F,
) -> LocalBasis<F> {
    let len = multiindex::count_up_to(dim, degree);
    let members = (0..len)
        .map(|r| {
            let mut coef = vec![F::zero(); len];
            coef[r] = F::one();
            LocalPolynomial::new(dim, degree, center.clone(), scale, coef)
        })
        .collect();
    LocalBasis { kind: SpaceKind::FullPolynomial, degree, members }
}

/// Cauchy-slice multi-indices `{k : k_1 <= 1, |k| <= p}` in seed order:
/// the `k_1 = 0` block, then the `k_1 = 1` block.
pub fn cauchy_slice(dim: usize, degree: u32) -> Vec<MultiIndex> {
    if dim == 1 {
        let mut out = vec![MultiIndex::zero(1)];
        if degree >= 1 {
            out.push(MultiIndex::unit(1, 0));
        }
        return out;
    }
    let mut out = Vec::new();
    for lead in 0..=1u32 {
        if degree < lead {
            break;
        }
        for tail in multiindex::enumerate_up_to(dim - 1, degree - lead, Order::GradedLex) {
            let mut entries = Vec::with_capacity(dim);
            entries.push(lead);
            entries.extend_from_slice(tail.entries());
            out.push(MultiIndex::new(entries));
        }
    }
    out
}

/// A coefficient-derivative table slot: K entries first (row-major), then
/// beta components, then sigma.
fn slot_k(dim: usize, j: usize, m: usize) -> usize {
    j * dim + m
}
fn slot_beta(dim: usize, j: usize) -> usize {
    dim * dim + j
}
fn slot_sigma(dim: usize) -> usize {
    dim * dim + dim
}

#[derive(Clone, Debug)]
struct PlanTerm {
    negative: bool,
    slot: usize,
    l_rank: usize,
    source_rank: usize,
    factor: u128,
}

#[derive(Clone, Debug)]
struct PlanStep {
    target_rank: usize,
    /// (i + 2 e_1)!
    target_factorial: u128,
    terms: Vec<PlanTerm>,
}

/// The recurrence schedule for one (dim, degree, sparsity) signature.
#[derive(Clone, Debug)]
struct QtPlan {
    steps: Vec<PlanStep>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct PlanKey {
    dim: usize,
    degree: u32,
    /// Bit j*d+m set when K_jm is not identically zero.
    k_mask: u64,
    beta_mask: u64,
    sigma_nonzero: bool,
}

fn plan_cache() -> &'static Mutex<HashMap<PlanKey, Arc<QtPlan>>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<QtPlan>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn build_plan(key: &PlanKey) -> QtPlan {
    let d = key.dim;
    let p = key.degree;
    let set = multiindex::index_set(d, p);
    let mut steps = Vec::new();
    if p < 2 {
        return QtPlan { steps };
    }
    // Diagonal sweep: ascending |i|, ascending i_1 within a diagonal, so
    // every same-diagonal source (its x1-entry is at most i_1 + 1) has
    // already been filled.
    for i in multiindex::enumerate_up_to(d, p - 2, Order::AlgorithmDiagonal) {
        let target = i.plus_units(0, 2);
        let mut terms = Vec::new();
        for j in 0..d {
            let ipej = i.plus_unit(j);
            for l in ipej.sub_indices() {
                let base = factorial_ratio(&ipej, &l);
                let l_rank = set.rank(&l).unwrap();
                // Diffusion: -D^l K_jm, every m; skip the isolated
                // (j, m, l) = (1, 1, 0) term, which is the unknown.
                for m in 0..d {
                    if key.k_mask & (1 << slot_k(d, j, m)) == 0 {
                        continue;
                    }
                    if j == 0 && m == 0 && l.total() == 0 {
                        continue;
                    }
                    let source = ipej.checked_sub(&l).unwrap().plus_unit(m);
                    terms.push(PlanTerm {
                        negative: true,
                        slot: slot_k(d, j, m),
                        l_rank,
                        source_rank: set.rank(&source).unwrap(),
                        factor: base * source.entry(m) as u128,
                    });
                }
                // Advection: +D^l beta_j.
                if key.beta_mask & (1 << j) != 0 {
                    let source = ipej.checked_sub(&l).unwrap();
                    terms.push(PlanTerm {
                        negative: false,
                        slot: slot_beta(d, j),
                        l_rank,
                        source_rank: set.rank(&source).unwrap(),
                        factor: base,
                    });
                }
            }
        }
        // Reaction: +D^l sigma.
        if key.sigma_nonzero {
            for l in i.sub_indices() {
                let source = i.checked_sub(&l).unwrap();
                terms.push(PlanTerm {
                    negative: false,
                    slot: slot_sigma(d),
                    l_rank: set.rank(&l).unwrap(),
                    source_rank: set.rank(&source).unwrap(),
                    factor: factorial_ratio(&i, &l),
                });
            }
        }
        steps.push(PlanStep {
            target_rank: set.rank(&target).unwrap(),
            target_factorial: target.factorial(),
            terms,
        });
    }
    QtPlan { steps }
}

fn plan_for(key: PlanKey) -> Arc<QtPlan> {
    let mut cache = plan_cache().lock().unwrap();
    cache
        .entry(key.clone())
        .or_insert_with(|| Arc::new(build_plan(&key)))
        .clone()
}

struct EngineStep<F> {
    target_rank: usize,
    /// 1 / (K_11(x_T) (i+2e1)!), the solve scale.
    inv_pivot: F,
    /// K_11(x_T) (i+2e1)!, the leading term put back for residuals.
    lead: F,
    /// (i+2e1)! as a float, the residual normalization.
    factorial: F,
    term_range: std::ops::Range<usize>,
}

/// Recurrence propagator bound to one element: the cached plan folded with
/// the element's coefficient derivative tables, leaving a sparse
/// triangular solve per member.
pub struct QtEngine<F> {
    dim: usize,
    degree: u32,
    steps: Vec<EngineStep<F>>,
    /// `(source_rank, signed weight)` per term, grouped by step.
    terms: Vec<(usize, F)>,
}

impl<F: Real> QtEngine<F> {
    pub fn new(
        field: &CoefficientField<F>,
        degree: u32,
        center: &[F],
        scale: F,
    ) -> Result<Self, ProblemError> {
        let d = field.dim;
        assert_eq!(center.len(), d);
        let mut k_mask = 0u64;
        for j in 0..d {
            for m in 0..d {
                if !field.k(j, m).is_zero() {
                    k_mask |= 1 << slot_k(d, j, m);
                }
            }
        }
        let mut beta_mask = 0u64;
        for j in 0..d {
            if !field.beta(j).is_zero() {
                beta_mask |= 1 << j;
            }
        }
        let key = PlanKey {
            dim: d,
            degree,
            k_mask,
            beta_mask,
            sigma_nonzero: !field.sigma().is_zero(),
        };
        let plan = plan_for(key);

        // Derivative tables at the element center, pre-scaled by the power
        // of h that the folded recurrence attaches to each term: h^{|l|}
        // for K, one more for beta, two more for sigma.
        let n_slots = d * d + d + 1;
        let mut tables: Vec<Vec<F>> = vec![Vec::new(); n_slots];
        if degree >= 2 {
            let dorder = degree - 1;
            let dset = multiindex::index_set(d, dorder);
            let h_pows: Vec<F> = dset
                .indices()
                .iter()
                .map(|l| scale.powi(l.total() as i32))
                .collect();
            let scaled =
                |mut t: Vec<F>, extra: i32, h_pows: &[F]| -> Vec<F> {
                    for (v, hp) in t.iter_mut().zip(h_pows) {
                        *v = *v * *hp * scale.powi(extra);
                    }
                    t
                };
            for j in 0..d {
                for m in 0..d {
                    if k_mask & (1 << slot_k(d, j, m)) != 0 {
                        let t = field.k(j, m).derivative_table(dorder, center)?;
                        tables[slot_k(d, j, m)] = scaled(t, 0, &h_pows);
                    }
                }
                if beta_mask & (1 << j) != 0 {
                    let t = field.beta(j).derivative_table(dorder, center)?;
                    tables[slot_beta(d, j)] = scaled(t, 1, &h_pows);
                }
            }
            if !field.sigma().is_zero() {
                let t = field.sigma().derivative_table(degree - 2, center)?;
                let n = t.len();
                tables[slot_sigma(d)] = scaled(t, 2, &h_pows[..n]);
            }
        }

        let k11 = field.k(0, 0).value(center);
        let mut steps = Vec::with_capacity(plan.steps.len());
        let mut terms = Vec::new();
        for step in &plan.steps {
            let start = terms.len();
            for t in &step.terms {
                let w = tables[t.slot][t.l_rank] * F::of_u128(t.factor);
                terms.push((t.source_rank, if t.negative { -w } else { w }));
            }
            let fact = F::of_u128(step.target_factorial);
            steps.push(EngineStep {
                target_rank: step.target_rank,
                inv_pivot: F::one() / (k11 * fact),
                lead: k11 * fact,
                factorial: fact,
                term_range: start..terms.len(),
            });
        }
        Ok(Self { dim: d, degree, steps, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Fill all `k_1 >= 2` coefficients from the Cauchy slice in place.
    pub fn propagate(&self, coef: &mut [F]) {
        for step in &self.steps {
            let mut acc = F::zero();
            for &(source, w) in &self.terms[step.term_range.clone()] {
                acc += w * coef[source];
            }
            coef[step.target_rank] = acc * step.inv_pivot;
        }
    }

    /// Largest scaled quasi-Trefftz defect over the conditions,
    /// `max_i |D^i(L v)(x_T)| h^{|i|+2} / (i+2e1)!`. Exactly zero terms in
    /// the recurrence come back as exactly zero here.
    pub fn residual(&self, coef: &[F]) -> F {
        let mut worst = F::zero();
        for step in &self.steps {
            let mut acc = F::zero();
            for &(source, w) in &self.terms[step.term_range.clone()] {
                acc += w * coef[source];
            }
            let defect = (acc - step.lead * coef[step.target_rank]).abs() / step.factorial;
            worst = worst.max(defect);
        }
        worst
    }
}

/// The quasi-Trefftz basis on one element: one member per Cauchy slice
/// position, extended by the recurrence.
pub fn qt_basis<F: Real>(
    field: &CoefficientField<F>,
    degree: u32,
    center: Vec<F>,
    scale: F,
) -> Result<LocalBasis<F>, ProblemError> {
    let dim = field.dim;
    if degree < 2 {
        let mut basis = full_basis(dim, degree, center, scale);
        basis.kind = SpaceKind::QuasiTrefftz;
        return Ok(basis);
    }
    let engine = QtEngine::new(field, degree, &center, scale)?;
    let set = multiindex::index_set(dim, degree);
    let members = cauchy_slice(dim, degree)
        .into_iter()
        .map(|seed| {
            let mut coef = vec![F::zero(); set.len()];
            coef[set.rank(&seed).unwrap()] = F::one();
            engine.propagate(&mut coef);
            LocalPolynomial::new(dim, degree, center.clone(), scale, coef)
        })
        .collect();
    Ok(LocalBasis { kind: SpaceKind::QuasiTrefftz, degree, members })
}

/// Max scaled quasi-Trefftz defect of an arbitrary polynomial, from the
/// same tables the recurrence uses.
pub fn qt_residual<F: Real>(
    field: &CoefficientField<F>,
    poly: &LocalPolynomial<F>,
) -> Result<F, ProblemError> {
    let engine = QtEngine::new(field, poly.degree(), poly.center(), poly.scale())?;
    Ok(engine.residual(poly.coef()))
}

/// The degree-p Taylor polynomial of an exact solution about `center`, in
/// scaled monomial form.
pub fn taylor_of<F: Real>(
    exact: &ExactSolution<F>,
    degree: u32,
    center: Vec<F>,
    scale: F,
) -> Result<LocalPolynomial<F>, ProblemError> {
    let dim = exact.field.dim();
    let set = multiindex::index_set(dim, degree);
    let table = exact.field.derivative_table(degree, &center)?;
    let coef: Vec<F> = set
        .indices()
        .iter()
        .zip(&table)
        .map(|(k, &dv)| {
            dv * scale.powi(k.total() as i32) / F::of_u128(k.factorial())
        })
        .collect();
    Ok(LocalPolynomial::new(dim, degree, center, scale, coef))
}

/// `L v` at a point, from exact polynomial derivatives and the coefficient
/// oracles:
///
/// ```text
///     L v = -sum_jm (D^{e_j} K_jm  d_m v + K_jm d_j d_m v)
///           + sum_j (D^{e_j} beta_j  v + beta_j d_j v) + sigma v .
/// ```
fn apply_operator_at<F: Real>(
    field: &CoefficientField<F>,
    value: F,
    grad: &[F],
    hess: &[F],
    x: &[F],
) -> Result<F, ProblemError> {
    let d = field.dim;
    let mut acc = field.sigma().value(x) * value;
    for j in 0..d {
        let ej = MultiIndex::unit(d, j);
        for m in 0..d {
            let kjm = field.k(j, m);
            if kjm.is_zero() {
                continue;
            }
            acc -= kjm.derivative(&ej, x)? * grad[m] + kjm.value(x) * hess[j * d + m];
        }
        let bj = field.beta(j);
        if !bj.is_zero() {
            acc += bj.derivative(&ej, x)? * value + bj.value(x) * grad[j];
        }
    }
    Ok(acc)
}

/// Finite-difference cross-check of the quasi-Trefftz conditions,
/// independent of the recurrence algebra: `L v` is evaluated pointwise
/// from exact polynomial derivatives and coefficient oracles, then
/// `D^i(Lv)(x_T)` is approximated by tensor central differences with step
/// `relative_step * h_T` per axis, and scaled like [`QtEngine::residual`].
pub fn qt_residual_fd<F: Real>(
    field: &CoefficientField<F>,
    poly: &LocalPolynomial<F>,
    relative_step: F,
) -> Result<F, ProblemError> {
    let d = poly.dim();
    let p = poly.degree();
    if p < 2 {
        return Ok(F::zero());
    }
    let grads: Vec<LocalPolynomial<F>> =
        (0..d).map(|q| poly.derivative_axis(q)).collect();
    let hess: Vec<LocalPolynomial<F>> = (0..d)
        .flat_map(|j| (0..d).map(move |m| (j, m)))
        .map(|(j, m)| grads[j].derivative_axis(m))
        .collect();
    let lv = |x: &[F]| -> Result<F, ProblemError> {
        let value = poly.value(x);
        let grad: Vec<F> = grads.iter().map(|g| g.value(x)).collect();
        let h: Vec<F> = hess.iter().map(|h| h.value(x)).collect();
        apply_operator_at(field, value, &grad, &h, x)
    };

    let delta = relative_step * poly.scale();
    let center = poly.center();
    let mut worst = F::zero();
    for i in multiindex::enumerate_up_to(d, p - 2, Order::GradedLex) {
        // Tensor central stencil: sum over offsets r_q in 0..=i_q with
        // weights (-1)^{r_q} C(i_q, r_q), sample at center + (i/2 - r) delta.
        let mut fd = F::zero();
        let mut offsets = vec![0u32; d];
        loop {
            let mut w = F::one();
            let mut x = center.to_vec();
            for q in 0..d {
                let iq = i.entry(q);
                let r = offsets[q];
                let c = multiindex::binomial(iq, r);
                w = w * F::of_u128(c);
                if r % 2 == 1 {
                    w = -w;
                }
                x[q] += (F::of_u128(iq as u128) / F::of_usize(2)
                    - F::of_u128(r as u128))
                    * delta;
            }
            fd += w * lv(&x)?;
            // Advance the mixed-radix offset counter.
            let mut q = 0;
            loop {
                if q == d {
                    break;
                }
                offsets[q] += 1;
                if offsets[q] <= i.entry(q) {
                    break;
                }
                offsets[q] = 0;
                q += 1;
            }
            if q == d {
                break;
            }
        }
        fd = fd / delta.powi(i.total() as i32);
        let target = i.plus_units(0, 2);
        let scaled = fd.abs() * poly.scale().powi(i.total() as i32 + 2)
            / F::of_u128(target.factorial());
        worst = worst.max(scaled);
    }
    Ok(worst)
}

/// Per-element bases for a whole mesh, in element order.
pub fn build_bases<F: Real>(
    field: &CoefficientField<F>,
    mesh: &crate::mesh::Mesh<F>,
    degree: u32,
    kind: SpaceKind,
) -> Result<Vec<LocalBasis<F>>, ProblemError> {
    mesh.elements
        .par_iter()
        .map(|element| match kind {
            SpaceKind::FullPolynomial => Ok(full_basis(
                mesh.dim,
                degree,
                element.centroid.clone(),
                element.diameter,
            )),
            SpaceKind::QuasiTrefftz => qt_basis(
                field,
                degree,
                element.centroid.clone(),
                element.diameter,
            ),
        })
        .collect()
}
