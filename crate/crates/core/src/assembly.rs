//! Interior-penalty discontinuous Galerkin assembly with upwind advective
//! fluxes for the diffusion-advection-reaction operator.
//!
//! The bilinear form per facet is integrated once and scattered to all four
//! element blocks, so interior facet terms enter both orientations from a
//! single quadrature pass. All facet quantities are written with the fixed
//! facet normal `n_e` (outward from the first incident element); the sign
//! bookkeeping below is what makes the result independent of which element
//! ended up first.

use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::basis::LocalBasis;
use crate::linalg::{Coo, Csr};
use crate::mesh::{FacetKind, Mesh};
use crate::problem::{builtin, CoefficientField, ProblemSpec};
use crate::quadrature::QuadratureError;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("facet {facet} is unclassified; classify the boundary or label the mesh file")]
    UnclassifiedFacet { facet: usize },
    #[error("quadrature unavailable: {0}")]
    Quadrature(#[from] QuadratureError),
}

/// Discretization parameters for [`assemble`].
///
/// `epsilon` selects the symmetrization variant (-1 SIPG, 0 IIPG, +1 NIPG)
/// and `gamma` scales the interior/Dirichlet penalty `gamma / h_e`. Values
/// outside the intended sets are accepted as-is; stability is then the
/// caller's problem (deliberately so: a zero penalty is a useful way to
/// manufacture singular systems in tests).
#[derive(Clone, Copy, Debug)]
pub struct DgParameters<F> {
    pub epsilon: F,
    pub gamma: F,
    /// Quadrature points per direction for both volume and facet rules.
    /// `None` picks `degree + 1` per element (the max of the two sides on
    /// an interior facet).
    pub quad_points: Option<usize>,
}

impl<F: Real> DgParameters<F> {
    pub fn new(epsilon: F, gamma: F) -> Self {
        Self { epsilon, gamma, quad_points: None }
    }

    pub fn sipg(gamma: F) -> Self {
        Self::new(-F::one(), gamma)
    }

    pub fn iipg(gamma: F) -> Self {
        Self::new(F::zero(), gamma)
    }

    pub fn nipg(gamma: F) -> Self {
        Self::new(F::one(), gamma)
    }
}

/// Assembled linear system `A x = b` together with the dof layout.
///
/// Dofs are blocked per element in mesh order: element `t` owns the
/// contiguous range `offsets[t]..offsets[t + 1]`, and within a block the dof
/// order is the basis member order.
#[derive(Debug)]
pub struct DgSystem<F> {
    pub matrix: Csr<F>,
    pub rhs: Vec<F>,
    pub offsets: Vec<usize>,
    pub params: DgParameters<F>,
}

impl<F: Real> DgSystem<F> {
    pub fn n_dofs(&self) -> usize {
        *self.offsets.last().expect("offsets never empty")
    }

    pub fn dof_range(&self, t: usize) -> Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }

    /// Matrix in coordinate text form, one `row col value` line per stored
    /// entry, rows ascending.
    pub fn dump_matrix(&self) -> String {
        let mut out = String::new();
        for r in 0..self.matrix.nrows {
            for k in self.matrix.row_ptr[r]..self.matrix.row_ptr[r + 1] {
                writeln!(out, "{} {} {:e}", r, self.matrix.cols[k], self.matrix.vals[k])
                    .expect("string write");
            }
        }
        out
    }

    /// Right-hand side as one value per line.
    pub fn dump_rhs(&self) -> String {
        let mut out = String::new();
        for v in &self.rhs {
            writeln!(out, "{v:e}").expect("string write");
        }
        out
    }
}

fn dof_offsets<F: Real>(bases: &[LocalBasis<F>]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(bases.len() + 1);
    let mut acc = 0usize;
    offsets.push(0);
    for b in bases {
        acc += b.len();
        offsets.push(acc);
    }
    offsets
}

/// Per-element volume contribution: dense local matrix plus local rhs.
struct VolumeLocal<F> {
    t: usize,
    mat: Vec<F>,
    rhs: Vec<F>,
}

/// Per-facet contribution. Interior facets carry the four blocks in test-
/// major order `[t1 t1, t1 t2, t2 t1, t2 t2]`.
enum FacetLocal<F> {
    Boundary { t: usize, mat: Vec<F>, rhs: Vec<F> },
    Interior { t1: usize, t2: usize, nb1: usize, nb2: usize, blocks: [Vec<F>; 4] },
}

/// Evaluate `(K grad phi_a) . n` and `phi_a` for every member at one
/// quadrature point; `kn` and `v` are scratch, `grad` comes from the tables.
fn facet_point_data<F: Real>(
    tabs: &crate::basis::BasisTables<F>,
    q: usize,
    k: &[F],
    normal: &[F],
    kn: &mut [F],
    v: &mut [F],
) {
    let d = normal.len();
    for a in 0..kn.len() {
        let g = tabs.gradient(q, a);
        let mut acc = F::zero();
        for j in 0..d {
            let mut row = F::zero();
            for m in 0..d {
                row += k[j * d + m] * g[m];
            }
            acc += row * normal[j];
        }
        kn[a] = acc;
        v[a] = tabs.value(q, a);
    }
}

/// Assemble the DG system for `problem` on `mesh` with the given local
/// bases (one per element, matching order).
///
/// Element terms: `K grad w . grad v - w (beta . grad v) + sigma w v`.
/// Interior facets add consistency, symmetrization, penalty, mean advective
/// flux and upwind stabilization; Dirichlet facets add the diffusive
/// consistency/symmetrization/penalty triple with the data moved to the
/// rhs (including the advective inflow term `-(beta . n) g_D v`); Neumann
/// facets add `(beta . n) w v` and put the prescribed flux on the rhs.
pub fn assemble<F: Real>(
    mesh: &Mesh<F>,
    problem: &ProblemSpec<F>,
    bases: &[LocalBasis<F>],
    params: DgParameters<F>,
) -> Result<DgSystem<F>, AssemblyError> {
    assert_eq!(bases.len(), mesh.elements.len(), "one basis per element");
    let offsets = dof_offsets(bases);
    let n_dofs = *offsets.last().unwrap();
    let field = &problem.coefficients;
    let d = mesh.dim;
    let advecting = !field.beta_is_zero();
    let has_source = !problem.source.is_zero();
    let half = F::of_u128(1) / F::of_u128(2);

    let volume: Result<Vec<VolumeLocal<F>>, AssemblyError> = (0..mesh.elements.len())
        .into_par_iter()
        .map(|t| {
            let nb = bases[t].len();
            let nq = params.quad_points.unwrap_or(bases[t].degree as usize + 1).max(1);
            let rule = mesh.volume_rule(t, nq)?;
            let tabs = bases[t].tabulate(rule.nodes_flat());
            let mut mat = vec![F::zero(); nb * nb];
            let mut rhs = vec![F::zero(); nb];
            let mut kg = vec![F::zero(); nb * d];
            let mut bg = vec![F::zero(); nb];
            for q in 0..rule.len() {
                let x = rule.node(q);
                let w = rule.weight(q);
                let k = field.k_matrix(x);
                let sigma = field.sigma_value(x);
                let beta = if advecting { field.beta_vector(x) } else { Vec::new() };
                for a in 0..nb {
                    let g = tabs.gradient(q, a);
                    for j in 0..d {
                        let mut row = F::zero();
                        for m in 0..d {
                            row += k[j * d + m] * g[m];
                        }
                        kg[a * d + j] = row;
                    }
                    bg[a] = if advecting {
                        (0..d).fold(F::zero(), |s, m| s + beta[m] * g[m])
                    } else {
                        F::zero()
                    };
                }
                for i in 0..nb {
                    let vi = tabs.value(q, i);
                    let gi = tabs.gradient(q, i);
                    for j in 0..nb {
                        let vj = tabs.value(q, j);
                        let mut diff = F::zero();
                        for ax in 0..d {
                            diff += kg[j * d + ax] * gi[ax];
                        }
                        // - (beta w) . grad v, plus reaction.
                        mat[i * nb + j] += w * (diff - vj * bg[i] + sigma * vj * vi);
                    }
                    if has_source {
                        rhs[i] += w * problem.source.value(x) * vi;
                    }
                }
            }
            Ok(VolumeLocal { t, mat, rhs })
        })
        .collect();
    let volume = volume?;

    let facets: Result<Vec<FacetLocal<F>>, AssemblyError> = (0..mesh.facets.len())
        .into_par_iter()
        .map(|e| {
            let facet = &mesh.facets[e];
            let normal = facet.normal.clone();
            match facet.kind {
                FacetKind::Unclassified { .. } => Err(AssemblyError::UnclassifiedFacet { facet: e }),
                FacetKind::Interior { t1, t2 } => {
                    let (nb1, nb2) = (bases[t1].len(), bases[t2].len());
                    let deg = bases[t1].degree.max(bases[t2].degree) as usize;
                    let nq = params.quad_points.unwrap_or(deg + 1).max(1);
                    let rule = mesh.facet_rule(e, nq)?;
                    let tabs1 = bases[t1].tabulate(rule.nodes_flat());
                    let tabs2 = bases[t2].tabulate(rule.nodes_flat());
                    let goh = params.gamma / facet.diameter;
                    let mut blocks = [
                        vec![F::zero(); nb1 * nb1],
                        vec![F::zero(); nb1 * nb2],
                        vec![F::zero(); nb2 * nb1],
                        vec![F::zero(); nb2 * nb2],
                    ];
                    let mut kn = [vec![F::zero(); nb1], vec![F::zero(); nb2]];
                    let mut vv = [vec![F::zero(); nb1], vec![F::zero(); nb2]];
                    for q in 0..rule.len() {
                        let x = rule.node(q);
                        let w = rule.weight(q);
                        let k = field.k_matrix(x);
                        facet_point_data(&tabs1, q, &k, &normal, &mut kn[0], &mut vv[0]);
                        facet_point_data(&tabs2, q, &k, &normal, &mut kn[1], &mut vv[1]);
                        let bn = if advecting {
                            let beta = field.beta_vector(x);
                            (0..d).fold(F::zero(), |s, m| s + beta[m] * normal[m])
                        } else {
                            F::zero()
                        };
                        let abn = bn.abs();
                        for bi in 0..2 {
                            // Jump signs: +1 on the t1 trace, -1 on the t2 trace.
                            let sign_t = if bi == 0 { F::one() } else { -F::one() };
                            let nb_t = if bi == 0 { nb1 } else { nb2 };
                            for bj in 0..2 {
                                let sign_s = if bj == 0 { F::one() } else { -F::one() };
                                let nb_s = if bj == 0 { nb1 } else { nb2 };
                                let block = &mut blocks[bi * 2 + bj];
                                for i in 0..nb_t {
                                    let vi = vv[bi][i];
                                    let kni = kn[bi][i];
                                    for j in 0..nb_s {
                                        let vj = vv[bj][j];
                                        let val = -half * sign_t * kn[bj][j] * vi
                                            + params.epsilon * half * sign_s * vj * kni
                                            + goh * sign_s * sign_t * vj * vi
                                            + half * bn * sign_t * vj * vi
                                            + half * abn * sign_s * sign_t * vj * vi;
                                        block[i * nb_s + j] += w * val;
                                    }
                                }
                            }
                        }
                    }
                    Ok(FacetLocal::Interior { t1, t2, nb1, nb2, blocks })
                }
                FacetKind::Dirichlet { t } => {
                    let nb = bases[t].len();
                    let nq = params.quad_points.unwrap_or(bases[t].degree as usize + 1).max(1);
                    let rule = mesh.facet_rule(e, nq)?;
                    let tabs = bases[t].tabulate(rule.nodes_flat());
                    let goh = params.gamma / facet.diameter;
                    let mut mat = vec![F::zero(); nb * nb];
                    let mut rhs = vec![F::zero(); nb];
                    let mut kn = vec![F::zero(); nb];
                    let mut vv = vec![F::zero(); nb];
                    for q in 0..rule.len() {
                        let x = rule.node(q);
                        let w = rule.weight(q);
                        let k = field.k_matrix(x);
                        facet_point_data(&tabs, q, &k, &normal, &mut kn, &mut vv);
                        let bn = if advecting {
                            let beta = field.beta_vector(x);
                            (0..d).fold(F::zero(), |s, m| s + beta[m] * normal[m])
                        } else {
                            F::zero()
                        };
                        let gd = (problem.boundary.dirichlet_value)(x);
                        for i in 0..nb {
                            for j in 0..nb {
                                let val = -kn[j] * vv[i]
                                    + params.epsilon * vv[j] * kn[i]
                                    + goh * vv[j] * vv[i];
                                mat[i * nb + j] += w * val;
                            }
                            rhs[i] += w * gd * (params.epsilon * kn[i] + goh * vv[i] - bn * vv[i]);
                        }
                    }
                    Ok(FacetLocal::Boundary { t, mat, rhs })
                }
                FacetKind::Neumann { t } => {
                    let nb = bases[t].len();
                    let nq = params.quad_points.unwrap_or(bases[t].degree as usize + 1).max(1);
                    let rule = mesh.facet_rule(e, nq)?;
                    let tabs = bases[t].tabulate(rule.nodes_flat());
                    let mut mat = vec![F::zero(); nb * nb];
                    let mut rhs = vec![F::zero(); nb];
                    for q in 0..rule.len() {
                        let x = rule.node(q);
                        let w = rule.weight(q);
                        let bn = if advecting {
                            let beta = field.beta_vector(x);
                            (0..d).fold(F::zero(), |s, m| s + beta[m] * normal[m])
                        } else {
                            F::zero()
                        };
                        let gn = (problem.boundary.neumann_flux)(x, &normal);
                        for i in 0..nb {
                            let vi = tabs.value(q, i);
                            if advecting {
                                for j in 0..nb {
                                    mat[i * nb + j] += w * bn * tabs.value(q, j) * vi;
                                }
                            }
                            rhs[i] -= w * gn * vi;
                        }
                    }
                    Ok(FacetLocal::Boundary { t, mat, rhs })
                }
            }
        })
        .collect();
    let facets = facets?;

    // Merge in a fixed order (elements, then facets ascending) so the CSR
    // duplicate summation is deterministic at any thread count.
    let mut coo = Coo::new(n_dofs, n_dofs);
    let mut rhs = vec![F::zero(); n_dofs];
    for local in &volume {
        let base = offsets[local.t];
        let nb = bases[local.t].len();
        for i in 0..nb {
            for j in 0..nb {
                coo.push(base + i, base + j, local.mat[i * nb + j]);
            }
            rhs[base + i] += local.rhs[i];
        }
    }
    for local in &facets {
        match local {
            FacetLocal::Boundary { t, mat, rhs: fr } => {
                let base = offsets[*t];
                let nb = bases[*t].len();
                for i in 0..nb {
                    for j in 0..nb {
                        coo.push(base + i, base + j, mat[i * nb + j]);
                    }
                    rhs[base + i] += fr[i];
                }
            }
            FacetLocal::Interior { t1, t2, nb1, nb2, blocks } => {
                let bases_of = [(offsets[*t1], *nb1), (offsets[*t2], *nb2)];
                for bi in 0..2 {
                    let (row0, nr) = bases_of[bi];
                    for bj in 0..2 {
                        let (col0, nc) = bases_of[bj];
                        let block = &blocks[bi * 2 + bj];
                        for i in 0..nr {
                            for j in 0..nc {
                                coo.push(row0 + i, col0 + j, block[i * nc + j]);
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(DgSystem { matrix: coo.to_csr(), rhs, offsets, params })
}

/// Penalty recommendation `8 p^2` scaled by a lattice estimate of the
/// diffusion magnitude, normalized so the built-in exponential-diffusion
/// field maps to exactly `8 p^2` (32, 72, 128 for p = 2, 3, 4).
///
/// `epsilon` is part of the interface for symmetry with [`DgParameters`];
/// the nonsymmetric variant tolerates any positive penalty, so the same
/// value is returned for every variant.
pub fn recommend_gamma<F: Real>(degree: u32, problem: &ProblemSpec<F>, _epsilon: F) -> F {
    let scale = lattice_max_k(&problem.coefficients);
    let reference = builtin::<F>("exp_diffusion", None)
        .expect("builtin reference field")
        .coefficients;
    let p = degree as usize;
    F::of_usize(8 * p * p) * scale / lattice_max_k(&reference)
}

/// Max of |K entries| over a 17-per-axis lattice on the unit box.
fn lattice_max_k<F: Real>(field: &CoefficientField<F>) -> F {
    let d = field.dim;
    let n = 17usize;
    let mut idx = vec![0usize; d];
    let mut x = vec![F::zero(); d];
    let mut best = F::zero();
    loop {
        for q in 0..d {
            x[q] = F::of_usize(idx[q]) / F::of_usize(n - 1);
        }
        for v in field.k_matrix(&x) {
            best = best.max(v.abs());
        }
        // Mixed-radix increment over the lattice.
        let mut axis = 0;
        loop {
            if axis == d {
                return best;
            }
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Deterministic generator for the identity check; splitmix64 outputs
/// mapped to [-1, 1].
struct SplitMix(u64);

impl SplitMix {
    fn next_unit<F: Real>(&mut self) -> F {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        let unit = F::of_u128(u128::from(z >> 11)) / F::of_u128(1u128 << 53);
        unit + unit - F::one()
    }
}

/// Verify the two algebraic flux identities the upwind form relies on, at
/// the facet quadrature nodes of every interior facet, using a random
/// (but deterministic) member combination on each element:
///
/// * the upwind trace equals the mean flux plus half the signed jump,
///   `(beta . n) phi_up = {beta phi} . n + (|beta . n| / 2) (phi_1 - phi_2)`;
/// * `(beta / 2) . [phi^2] = {beta phi} . [phi]`.
///
/// Returns the largest absolute discrepancy found.
pub fn upwind_identity_check<F: Real>(
    mesh: &Mesh<F>,
    problem: &ProblemSpec<F>,
    bases: &[LocalBasis<F>],
) -> Result<F, AssemblyError> {
    assert_eq!(bases.len(), mesh.elements.len());
    let field = &problem.coefficients;
    let d = mesh.dim;
    let half = F::of_u128(1) / F::of_u128(2);
    let mut gen = SplitMix(0x7154_5f15);
    let coeffs: Vec<Vec<F>> = bases
        .iter()
        .map(|b| (0..b.len()).map(|_| gen.next_unit()).collect())
        .collect();

    let mut worst = F::zero();
    for e in 0..mesh.facets.len() {
        let facet = &mesh.facets[e];
        let FacetKind::Interior { t1, t2 } = facet.kind else { continue };
        let deg = bases[t1].degree.max(bases[t2].degree) as usize;
        let rule = mesh.facet_rule(e, deg + 2)?;
        let tabs1 = bases[t1].tabulate(rule.nodes_flat());
        let tabs2 = bases[t2].tabulate(rule.nodes_flat());
        for q in 0..rule.len() {
            let x = rule.node(q);
            let beta = field.beta_vector(x);
            let bn = (0..d).fold(F::zero(), |s, m| s + beta[m] * facet.normal[m]);
            let phi1 = (0..bases[t1].len())
                .fold(F::zero(), |s, a| s + coeffs[t1][a] * tabs1.value(q, a));
            let phi2 = (0..bases[t2].len())
                .fold(F::zero(), |s, a| s + coeffs[t2][a] * tabs2.value(q, a));
            let upwind = if bn > F::zero() { bn * phi1 } else { bn * phi2 };
            let mean_plus_jump = bn * half * (phi1 + phi2) + bn.abs() * half * (phi1 - phi2);
            worst = worst.max((upwind - mean_plus_jump).abs());
            // (beta / 2) . [phi^2] against {beta phi} . [phi]; the two sides
            // only differ by evaluation order, which is exactly the point.
            let squares = half * bn * (phi1 * phi1 - phi2 * phi2);
            let mean_jump = half * (bn * phi1 + bn * phi2) * (phi1 - phi2);
            worst = worst.max((squares - mean_jump).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::basis::{build_bases, full_basis, taylor_of, SpaceKind};
    use crate::mesh::import_mesh;
    use crate::problem::{BoundaryData, Coefficient, CoefficientField, ProblemSpec};

    fn constant_problem(
        dim: usize,
        kappa: f64,
        sigma: f64,
        boundary: BoundaryData<f64>,
    ) -> ProblemSpec<f64> {
        ProblemSpec {
            name: "test".into(),
            coefficients: CoefficientField::isotropic(
                dim,
                Coefficient::constant(dim, kappa),
                vec![Coefficient::zero(dim); dim],
                Coefficient::constant(dim, sigma),
            ),
            boundary,
            source: Coefficient::zero(dim),
            exact: None,
        }
    }

    #[test]
    fn single_triangle_mass_block() {
        let mesh = import_mesh::<f64>(
            "dim 2\nvertices 3\n0 0\n1 0\n0 1\nelements 1\n0 1 2\nboundary 3\n0 1 N\n1 2 N\n2 0 N\n",
        )
        .unwrap();
        let problem = constant_problem(
            2,
            1.0,
            1.0,
            BoundaryData {
                dirichlet_value: Arc::new(|_: &[f64]| 0.0),
                neumann_flux: Arc::new(|_: &[f64], _: &[f64]| 0.0),
                regions: crate::problem::Regions::ByInflowSign,
            },
        );
        let bases = vec![full_basis(2, 0, vec![0.25, 0.25], 1.0)];
        let system = assemble(&mesh, &problem, &bases, DgParameters::sipg(1.0)).unwrap();
        assert_eq!(system.n_dofs(), 1);
        // beta = 0 kills the Neumann advective term and grad 1 = 0 kills
        // diffusion, so only the reaction mass survives: A = [area] = [1/2].
        assert!((system.matrix.get(0, 0) - 0.5).abs() <= 1e-15);
        assert_eq!(system.rhs[0], 0.0);
    }

    #[test]
    fn dirichlet_penalty_contribution() {
        let mesh = import_mesh::<f64>(
            "dim 2\nvertices 3\n0 0\n0.5 0\n0 0.5\nelements 1\n0 1 2\nboundary 3\n0 1 D\n1 2 N\n2 0 N\n",
        )
        .unwrap();
        let problem = constant_problem(
            2,
            1.0,
            0.0,
            BoundaryData {
                dirichlet_value: Arc::new(|_: &[f64]| 0.0),
                neumann_flux: Arc::new(|_: &[f64], _: &[f64]| 0.0),
                regions: crate::problem::Regions::ByInflowSign,
            },
        );
        let bases = vec![full_basis(2, 0, vec![0.125, 0.125], 1.0)];
        let system = assemble(&mesh, &problem, &bases, DgParameters::sipg(4.0)).unwrap();
        // (gamma / h_e) |e| = (4 / 0.5) * 0.5 = 4 from the penalty; every
        // other term vanishes for the constant basis with sigma = 0.
        assert!((system.matrix.get(0, 0) - 4.0).abs() <= 1e-14);
    }

    #[test]
    fn unclassified_facet_is_an_error() {
        let mesh = Mesh::<f64>::generate_structured(2, 2);
        let problem = crate::problem::builtin::<f64>("poly_reaction", None).unwrap();
        let bases = build_bases(&problem.coefficients, &mesh, 2, SpaceKind::QuasiTrefftz).unwrap();
        let err = assemble(&mesh, &problem, &bases, DgParameters::sipg(32.0)).unwrap_err();
        assert!(matches!(err, AssemblyError::UnclassifiedFacet { .. }));
    }

    fn assembled_builtin(
        name: &str,
        n: usize,
        degree: u32,
        kind: SpaceKind,
        params: DgParameters<f64>,
    ) -> (crate::mesh::Mesh<f64>, ProblemSpec<f64>, Vec<LocalBasis<f64>>, DgSystem<f64>) {
        let mut mesh = Mesh::<f64>::generate_structured(2, n);
        let problem = crate::problem::builtin::<f64>(name, Some(0.1)).unwrap();
        mesh.classify_boundary(&problem, degree as usize + 1).unwrap();
        let bases = build_bases(&problem.coefficients, &mesh, degree, kind).unwrap();
        let system = assemble(&mesh, &problem, &bases, params).unwrap();
        (mesh, problem, bases, system)
    }

    #[test]
    fn block_sparsity_matches_mesh_adjacency() {
        let (mesh, _, _, system) =
            assembled_builtin("exp_diffusion", 2, 1, SpaceKind::QuasiTrefftz, DgParameters::sipg(8.0));
        let owner: Vec<usize> = (0..mesh.elements.len())
            .flat_map(|t| std::iter::repeat(t).take(system.offsets[t + 1] - system.offsets[t]))
            .collect();
        let mut blocks = std::collections::HashSet::new();
        for r in 0..system.matrix.nrows {
            for k in system.matrix.row_ptr[r]..system.matrix.row_ptr[r + 1] {
                blocks.insert((owner[r], owner[system.matrix.cols[k]]));
            }
        }
        let interior = mesh
            .facets
            .iter()
            .filter(|f| f.kind.is_interior())
            .count();
        assert_eq!(blocks.len(), mesh.elements.len() + 2 * interior);
        assert_eq!(interior, 8);
    }

    #[test]
    fn sipg_is_symmetric_without_advection() {
        let (_, _, _, system) =
            assembled_builtin("exp_diffusion", 2, 2, SpaceKind::QuasiTrefftz, DgParameters::sipg(32.0));
        let n = system.n_dofs();
        let dense = system.matrix.to_dense();
        let scale = system.matrix.max_abs();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((dense[i * n + j] - dense[j * n + i]).abs());
            }
        }
        assert!(worst <= 1e-12 * scale, "asymmetry {worst:e} vs scale {scale:e}");
    }

    #[test]
    fn orientation_independence() {
        let mut mesh = Mesh::<f64>::generate_structured(2, 2);
        let problem = crate::problem::builtin::<f64>("smooth_dar", None).unwrap();
        mesh.classify_boundary(&problem, 3).unwrap();
        let bases = build_bases(&problem.coefficients, &mesh, 2, SpaceKind::QuasiTrefftz).unwrap();
        let params = DgParameters::sipg(32.0);
        let system = assemble(&mesh, &problem, &bases, params).unwrap();

        let mut flipped = mesh.clone();
        for facet in &mut flipped.facets {
            if let FacetKind::Interior { t1, t2 } = facet.kind {
                facet.kind = FacetKind::Interior { t1: t2, t2: t1 };
                for c in &mut facet.normal {
                    *c = -*c;
                }
            }
        }
        let system2 = assemble(&flipped, &problem, &bases, params).unwrap();

        let n = system.n_dofs();
        let (a, b) = (system.matrix.to_dense(), system2.matrix.to_dense());
        let scale = system.matrix.max_abs().max(1.0);
        let mut worst: f64 = 0.0;
        for i in 0..n * n {
            worst = worst.max((a[i] - b[i]).abs());
        }
        assert!(worst <= 1e-13 * scale, "orientation dependence {worst:e}");
        for i in 0..n {
            worst = worst.max((system.rhs[i] - system2.rhs[i]).abs());
        }
        assert!(worst <= 1e-13 * scale);
    }

    #[test]
    fn galerkin_consistency_on_polynomial_solution() {
        for degree in [2u32, 3] {
            let mut mesh = Mesh::<f64>::generate_structured(2, 2);
            let problem = crate::problem::builtin::<f64>("poly_reaction", None).unwrap();
            mesh.classify_boundary(&problem, degree as usize + 1).unwrap();
            let bases =
                build_bases(&problem.coefficients, &mesh, degree, SpaceKind::QuasiTrefftz).unwrap();
            let system =
                assemble(&mesh, &problem, &bases, DgParameters::sipg(32.0)).unwrap();

            // The exact solution is a degree-2 polynomial annihilated by the
            // operator, so its Taylor coefficients on the Cauchy slice are
            // its coordinates in the quasi-Trefftz basis.
            let exact = problem.exact.as_ref().unwrap();
            let slice = crate::basis::cauchy_slice(2, degree);
            let mut x = vec![0.0f64; system.n_dofs()];
            for (t, el) in mesh.elements.iter().enumerate() {
                let tay = taylor_of(exact, degree, el.centroid.clone(), el.diameter).unwrap();
                for (i, k) in slice.iter().enumerate() {
                    x[system.offsets[t] + i] = tay.coefficient(k);
                }
            }
            let mut ax = vec![0.0; system.n_dofs()];
            system.matrix.matvec(&x, &mut ax);
            let bnorm = system.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let worst = ax
                .iter()
                .zip(&system.rhs)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(bnorm > 1.0);
            assert!(worst <= 1e-9 * bnorm, "p={degree}: residual {worst:e} vs |b| {bnorm:e}");
        }
    }

    #[test]
    fn gamma_recommendation_reference_values() {
        let problem = crate::problem::builtin::<f64>("exp_diffusion", None).unwrap();
        assert_eq!(recommend_gamma(2, &problem, -1.0), 32.0);
        assert_eq!(recommend_gamma(3, &problem, -1.0), 72.0);
        assert_eq!(recommend_gamma(4, &problem, -1.0), 128.0);
        let poly = crate::problem::builtin::<f64>("poly_reaction", None).unwrap();
        let g = recommend_gamma(2, &poly, -1.0);
        // Unit diffusion is weaker than the exponential reference peak.
        assert!(g > 0.0 && g < 32.0);
    }

    #[test]
    fn upwind_identities_hold_on_advective_field() {
        let mut mesh = Mesh::<f64>::generate_structured(2, 2);
        let problem = crate::problem::builtin::<f64>("advdom_neumann", Some(0.1)).unwrap();
        mesh.classify_boundary(&problem, 3).unwrap();
        let bases =
            build_bases(&problem.coefficients, &mesh, 2, SpaceKind::QuasiTrefftz).unwrap();
        let worst = upwind_identity_check(&mesh, &problem, &bases).unwrap();
        assert!(worst <= 1e-13, "flux identity discrepancy {worst:e}");
    }

    #[test]
    fn neumann_data_lands_on_rhs() {
        let mut mesh = Mesh::<f64>::generate_structured(2, 2);
        let problem = crate::problem::builtin::<f64>("smooth_dar", None).unwrap();
        mesh.classify_boundary(&problem, 3).unwrap();
        let bases =
            build_bases(&problem.coefficients, &mesh, 1, SpaceKind::QuasiTrefftz).unwrap();
        let system = assemble(&mesh, &problem, &bases, DgParameters::sipg(8.0)).unwrap();
        let bmax = system.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(bmax > 0.0);
    }
}
