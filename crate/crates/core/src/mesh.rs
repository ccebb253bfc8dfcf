//! Simplicial meshes of the unit interval and unit square.
//!
//! Facets are first-class: every element boundary piece appears exactly
//! once, tagged as interior (with its two neighbours) or boundary (with a
//! Dirichlet/Neumann label once classified). The stored unit normal points
//! out of the facet's first element; `outward_sign` gives the sign seen
//! from either side. In 1D facets are points and carry the conventions
//! `|e| = h_e = 1`, so facet "integrals" are point evaluations.
//!
//! Interior facets always satisfy `t1 < t2`, which keeps assembly loops
//! and jump signs deterministic regardless of construction order.

use crate::problem::{ProblemSpec, Regions};
use crate::quadrature::{self, QuadratureError, QuadratureRule};
use crate::scalar::Real;
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("non-conforming mesh: {0}")]
    NonConformingMesh(String),
    #[error("facet {facet}: beta . n changes sign across the facet; refine the mesh or declare regions explicitly")]
    MixedSignFacet { facet: usize },
    #[error("boundary facet {facet} matches neither the Dirichlet nor the Neumann region")]
    UnassignedBoundary { facet: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FacetKind {
    /// Shared by two elements; `t1 < t2` always.
    Interior { t1: usize, t2: usize },
    Dirichlet { t: usize },
    Neumann { t: usize },
    /// Boundary facet not yet assigned to a region.
    Unclassified { t: usize },
}

impl FacetKind {
    /// The element whose outward normal the facet stores.
    pub fn first(&self) -> usize {
        match *self {
            FacetKind::Interior { t1, .. } => t1,
            FacetKind::Dirichlet { t }
            | FacetKind::Neumann { t }
            | FacetKind::Unclassified { t } => t,
        }
    }

    pub fn second(&self) -> Option<usize> {
        match *self {
            FacetKind::Interior { t2, .. } => Some(t2),
            _ => None,
        }
    }

    pub fn is_interior(&self) -> bool {
        matches!(self, FacetKind::Interior { .. })
    }

    pub fn is_boundary(&self) -> bool {
        !self.is_interior()
    }
}

#[derive(Clone, Debug)]
pub struct Facet<F> {
    /// Vertex ids: one vertex in 1D, an edge's two endpoints in 2D.
    pub vertices: Vec<usize>,
    pub kind: FacetKind,
    /// Unit normal pointing out of `kind.first()`.
    pub normal: Vec<F>,
    /// h_e: segment length in 2D, 1 by convention in 1D.
    pub diameter: F,
    /// |e|: same as `diameter` for segments, 1 for points.
    pub measure: F,
}

#[derive(Clone, Debug)]
pub struct Element<F> {
    pub vertices: Vec<usize>,
    pub centroid: Vec<F>,
    /// h_T: largest vertex-to-vertex distance.
    pub diameter: F,
    /// |T|: length or area.
    pub measure: F,
    /// Inradius; for a triangle 2|T| / perimeter, half the length in 1D.
    pub inradius: F,
}

#[derive(Clone, Debug)]
pub struct Mesh<F> {
    pub dim: usize,
    pub vertices: Vec<Vec<F>>,
    pub elements: Vec<Element<F>>,
    pub facets: Vec<Facet<F>>,
    /// Facet ids per element, in local edge order.
    pub element_facets: Vec<Vec<usize>>,
    /// The generator's spacing 1/n; `None` for imported meshes.
    pub h_nominal: Option<F>,
}

/// Shape-regularity and grading measurements used to sanity-check a mesh
/// against the method's assumptions. All three are maxima over elements.
#[derive(Clone, Debug)]
pub struct MeshQualityReport<F> {
    /// max h_T / rho_T (shape regularity).
    pub max_shape_ratio: F,
    /// max over elements and their facets of h_T / h_e (local grading).
    pub max_grading: F,
    /// max h_T |boundary of T| / |T| (chunkiness).
    pub max_chunkiness: F,
    pub min_h: F,
    pub max_h: F,
}

fn dist<F: Real>(a: &[F], b: &[F]) -> F {
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += (x - y) * (x - y);
    }
    s.sqrt()
}

fn element_geometry<F: Real>(dim: usize, vertices: &[Vec<F>], ids: &[usize]) -> Element<F> {
    let pts: Vec<&[F]> = ids.iter().map(|&v| vertices[v].as_slice()).collect();
    let mut centroid = vec![F::zero(); dim];
    for p in &pts {
        for (c, &x) in centroid.iter_mut().zip(p.iter()) {
            *c += x;
        }
    }
    let count = F::of_usize(pts.len());
    for c in &mut centroid {
        *c /= count;
    }
    let mut diameter = F::zero();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            diameter = diameter.max(dist(pts[i], pts[j]));
        }
    }
    let (measure, inradius) = match dim {
        1 => {
            let len = (pts[1][0] - pts[0][0]).abs();
            (len, len / F::of_usize(2))
        }
        2 => {
            let (a, b, c) = (pts[0], pts[1], pts[2]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            let area = det.abs() / F::of_usize(2);
            let perimeter = dist(a, b) + dist(b, c) + dist(c, a);
            (area, F::of_usize(2) * area / perimeter)
        }
        _ => unreachable!("meshes are 1D or 2D"),
    };
    Element { vertices: ids.to_vec(), centroid, diameter, measure, inradius }
}

/// Local facets of an element: endpoint vertices in 1D, the three edges
/// in vertex order in 2D.
fn local_facets(dim: usize, ids: &[usize]) -> Vec<Vec<usize>> {
    match dim {
        1 => vec![vec![ids[0]], vec![ids[1]]],
        2 => vec![
            vec![ids[0], ids[1]],
            vec![ids[1], ids[2]],
            vec![ids[2], ids[0]],
        ],
        _ => unreachable!(),
    }
}

fn facet_geometry<F: Real>(
    dim: usize,
    vertices: &[Vec<F>],
    facet_vertices: &[usize],
    owner_centroid: &[F],
) -> (Vec<F>, F, F) {
    match dim {
        1 => {
            let x = vertices[facet_vertices[0]][0];
            let sign = if x > owner_centroid[0] { F::one() } else { -F::one() };
            (vec![sign], F::one(), F::one())
        }
        2 => {
            let a = &vertices[facet_vertices[0]];
            let b = &vertices[facet_vertices[1]];
            let len = dist(a, b);
            let mut normal = vec![(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
            let two = F::of_usize(2);
            let mid = [(a[0] + b[0]) / two, (a[1] + b[1]) / two];
            let dot = normal[0] * (mid[0] - owner_centroid[0])
                + normal[1] * (mid[1] - owner_centroid[1]);
            if dot < F::zero() {
                normal[0] = -normal[0];
                normal[1] = -normal[1];
            }
            (normal, len, len)
        }
        _ => unreachable!(),
    }
}

/// Build the facet table from element connectivity. Fails on facets shared
/// by more than two elements.
fn build_facets<F: Real>(
    dim: usize,
    vertices: &[Vec<F>],
    elements: &[Element<F>],
) -> Result<(Vec<Facet<F>>, Vec<Vec<usize>>), MeshError> {
    let mut facets: Vec<Facet<F>> = Vec::new();
    let mut element_facets: Vec<Vec<usize>> = vec![Vec::new(); elements.len()];
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();

    for (t, element) in elements.iter().enumerate() {
        for fv in local_facets(dim, &element.vertices) {
            let mut key = fv.clone();
            key.sort_unstable();
            match seen.get(&key) {
                None => {
                    let (normal, diameter, measure) =
                        facet_geometry(dim, vertices, &fv, &element.centroid);
                    let id = facets.len();
                    facets.push(Facet {
                        vertices: fv,
                        kind: FacetKind::Unclassified { t },
                        normal,
                        diameter,
                        measure,
                    });
                    seen.insert(key, id);
                    element_facets[t].push(id);
                }
                Some(&id) => {
                    let facet = &mut facets[id];
                    match facet.kind {
                        FacetKind::Unclassified { t: t1 } if t1 != t => {
                            // First-seen element keeps the normal; enforce
                            // t1 < t2 by flipping if ids arrived reversed.
                            if t1 < t {
                                facet.kind = FacetKind::Interior { t1, t2: t };
                            } else {
                                facet.kind = FacetKind::Interior { t1: t, t2: t1 };
                                for c in &mut facet.normal {
                                    *c = -*c;
                                }
                            }
                            element_facets[t].push(id);
                        }
                        _ => {
                            return Err(MeshError::NonConformingMesh(format!(
                                "facet {:?} is shared by more than two elements",
                                facet.vertices
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok((facets, element_facets))
}

/// Reject vertices lying strictly inside another element's facet, the
/// hanging-node pattern that facet matching by vertex ids cannot see.
fn check_hanging_vertices<F: Real>(
    dim: usize,
    vertices: &[Vec<F>],
    facets: &[Facet<F>],
) -> Result<(), MeshError> {
    let tol = F::from_f64(1e-10).unwrap();
    for facet in facets {
        match dim {
            1 => {
                // Point facets cannot hide a vertex; 1D hanging nodes show
                // up as over-shared facets instead.
            }
            2 => {
                let a = &vertices[facet.vertices[0]];
                let b = &vertices[facet.vertices[1]];
                let len = dist(a, b);
                for (v, p) in vertices.iter().enumerate() {
                    if facet.vertices.contains(&v) {
                        continue;
                    }
                    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                    if cross.abs() > tol * len * len {
                        continue;
                    }
                    let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]))
                        / (len * len);
                    if t > tol && t < F::one() - tol {
                        return Err(MeshError::NonConformingMesh(format!(
                            "vertex {v} lies inside facet {:?} (hanging node)",
                            facet.vertices
                        )));
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(())
}

impl<F: Real> Mesh<F> {
    fn from_parts(
        dim: usize,
        vertices: Vec<Vec<F>>,
        element_vertices: Vec<Vec<usize>>,
        h_nominal: Option<F>,
    ) -> Result<Self, MeshError> {
        let elements: Vec<Element<F>> = element_vertices
            .iter()
            .map(|ids| element_geometry(dim, &vertices, ids))
            .collect();
        let (facets, element_facets) = build_facets(dim, &vertices, &elements)?;
        check_hanging_vertices(dim, &vertices, &facets)?;
        Ok(Mesh { dim, vertices, elements, facets, element_facets, h_nominal })
    }

    /// Uniform mesh of the unit interval (`n` segments) or unit square
    /// (`2 n^2` right triangles from an `n x n` grid, every cell split
    /// along its bottom-left to top-right diagonal).
    pub fn generate_structured(dim: usize, n: usize) -> Self {
        assert!(n >= 1, "need at least one cell per direction");
        let nf = F::of_usize(n);
        let (vertices, element_vertices) = match dim {
            1 => {
                let vertices: Vec<Vec<F>> =
                    (0..=n).map(|i| vec![F::of_usize(i) / nf]).collect();
                let elements: Vec<Vec<usize>> = (0..n).map(|i| vec![i, i + 1]).collect();
                (vertices, elements)
            }
            2 => {
                let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
                for iy in 0..=n {
                    for ix in 0..=n {
                        vertices.push(vec![F::of_usize(ix) / nf, F::of_usize(iy) / nf]);
                    }
                }
                let at = |ix: usize, iy: usize| iy * (n + 1) + ix;
                let mut elements = Vec::with_capacity(2 * n * n);
                for iy in 0..n {
                    for ix in 0..n {
                        let (v00, v10) = (at(ix, iy), at(ix + 1, iy));
                        let (v01, v11) = (at(ix, iy + 1), at(ix + 1, iy + 1));
                        elements.push(vec![v00, v10, v11]);
                        elements.push(vec![v00, v11, v01]);
                    }
                }
                (vertices, elements)
            }
            other => panic!("structured meshes are 1D or 2D, got dim {other}"),
        };
        Self::from_parts(dim, vertices, element_vertices, Some(F::one() / nf))
            .expect("structured meshes are conforming by construction")
    }

    /// Largest element diameter.
    pub fn h(&self) -> F {
        self.elements
            .iter()
            .map(|e| e.diameter)
            .fold(F::zero(), F::max)
    }

    /// Largest number of facets on any element (N_boundary in the penalty
    /// scaling heuristics).
    pub fn max_facets_per_element(&self) -> usize {
        self.element_facets.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn element_vertex_coords(&self, t: usize) -> Vec<&[F]> {
        self.elements[t]
            .vertices
            .iter()
            .map(|&v| self.vertices[v].as_slice())
            .collect()
    }

    pub fn facet_vertex_coords(&self, e: usize) -> Vec<&[F]> {
        self.facets[e]
            .vertices
            .iter()
            .map(|&v| self.vertices[v].as_slice())
            .collect()
    }

    /// +1 when the stored facet normal is outward for element `t`,
    /// -1 for the facet's second element.
    pub fn outward_sign(&self, t: usize, facet: usize) -> F {
        if self.facets[facet].kind.first() == t {
            F::one()
        } else {
            debug_assert_eq!(self.facets[facet].kind.second(), Some(t));
            -F::one()
        }
    }

    /// Quadrature rule of `n` points per direction mapped to element `t`.
    pub fn volume_rule(&self, t: usize, n: usize) -> Result<QuadratureRule<F>, QuadratureError> {
        let coords = self.element_vertex_coords(t);
        let reference = match self.dim {
            1 => quadrature::gauss_legendre::<F>(n)?,
            _ => quadrature::duffy_triangle::<F>(n)?,
        };
        quadrature::map_to_element(&reference, &coords)
    }

    /// Quadrature rule on facet `e`: `n` Gauss-Legendre points along an
    /// edge in 2D, the single facet point with weight 1 in 1D.
    pub fn facet_rule(&self, e: usize, n: usize) -> Result<QuadratureRule<F>, QuadratureError> {
        match self.dim {
            1 => {
                let p = &self.vertices[self.facets[e].vertices[0]];
                Ok(QuadratureRule::from_raw(1, p.clone(), vec![F::one()]))
            }
            _ => {
                let coords = self.facet_vertex_coords(e);
                let reference = quadrature::gauss_legendre::<F>(n)?;
                quadrature::map_to_element(&reference, &coords)
            }
        }
    }

    /// Assign Dirichlet/Neumann labels to all boundary facets, sampling
    /// region predicates or `beta . n` at `n_quad` facet quadrature nodes.
    /// Overwrites any previous labels.
    pub fn classify_boundary(
        &mut self,
        problem: &ProblemSpec<F>,
        n_quad: usize,
    ) -> Result<(), MeshError> {
        for e in 0..self.facets.len() {
            let t = match self.facets[e].kind {
                FacetKind::Interior { .. } => continue,
                FacetKind::Dirichlet { t }
                | FacetKind::Neumann { t }
                | FacetKind::Unclassified { t } => t,
            };
            let rule = self.facet_rule(e, n_quad)?;
            let kind = match &problem.boundary.regions {
                Regions::Explicit { dirichlet, neumann } => {
                    let nodes: Vec<&[F]> = (0..rule.len()).map(|q| rule.node(q)).collect();
                    if nodes.iter().all(|x| dirichlet(x)) {
                        FacetKind::Dirichlet { t }
                    } else if nodes.iter().all(|x| neumann(x)) {
                        FacetKind::Neumann { t }
                    } else {
                        return Err(MeshError::UnassignedBoundary { facet: e });
                    }
                }
                Regions::ByInflowSign => {
                    let normal = &self.facets[e].normal;
                    let mut all_negative = true;
                    let mut all_nonnegative = true;
                    for q in 0..rule.len() {
                        let beta = problem.coefficients.beta_vector(rule.node(q));
                        let mut b_n = F::zero();
                        for (bq, nq) in beta.iter().zip(normal) {
                            b_n += *bq * *nq;
                        }
                        if b_n < F::zero() {
                            all_nonnegative = false;
                        } else {
                            all_negative = false;
                        }
                    }
                    if all_negative {
                        FacetKind::Dirichlet { t }
                    } else if all_nonnegative {
                        FacetKind::Neumann { t }
                    } else {
                        return Err(MeshError::MixedSignFacet { facet: e });
                    }
                }
            };
            self.facets[e].kind = kind;
        }
        Ok(())
    }

    /// Measure shape regularity, local grading, and chunkiness.
    pub fn validate_assumptions(&self) -> MeshQualityReport<F> {
        let mut max_shape_ratio = F::zero();
        let mut max_grading = F::zero();
        let mut max_chunkiness = F::zero();
        let mut min_h = F::infinity();
        let mut max_h = F::zero();
        for (t, element) in self.elements.iter().enumerate() {
            let h_t = element.diameter;
            min_h = min_h.min(h_t);
            max_h = max_h.max(h_t);
            max_shape_ratio = max_shape_ratio.max(h_t / element.inradius);
            let mut perimeter = F::zero();
            for &e in &self.element_facets[t] {
                let facet = &self.facets[e];
                max_grading = max_grading.max(h_t / facet.diameter);
                perimeter += facet.measure;
            }
            max_chunkiness = max_chunkiness.max(h_t * perimeter / element.measure);
        }
        MeshQualityReport { max_shape_ratio, max_grading, max_chunkiness, min_h, max_h }
    }

    /// Lowest-id element containing `x` (barycentric coordinates no more
    /// negative than `tol`), or `None` if the point is outside the mesh.
    pub fn locate_element(&self, x: &[F], tol: F) -> Option<usize> {
        for t in 0..self.elements.len() {
            let pts = self.element_vertex_coords(t);
            let inside = match self.dim {
                1 => {
                    let (a, b) = (pts[0][0].min(pts[1][0]), pts[0][0].max(pts[1][0]));
                    x[0] >= a - tol && x[0] <= b + tol
                }
                _ => {
                    let (a, b, c) = (pts[0], pts[1], pts[2]);
                    let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                    let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (x[1] - a[1]) * (c[0] - a[0])) / det;
                    let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / det;
                    let l0 = F::one() - l1 - l2;
                    l0 >= -tol && l1 >= -tol && l2 >= -tol
                }
            };
            if inside {
                return Some(t);
            }
        }
        None
    }

    /// Serialize in the plain-text exchange format read by [`import_mesh`].
    /// Classified boundary facets get a `boundary` section with D/N labels.
    pub fn export_mesh(&self) -> String {
        let mut out = String::new();
        writeln!(out, "dim {}", self.dim).unwrap();
        writeln!(out, "vertices {}", self.vertices.len()).unwrap();
        for v in &self.vertices {
            let coords: Vec<String> = v.iter().map(|c| format!("{c}")).collect();
            writeln!(out, "{}", coords.join(" ")).unwrap();
        }
        writeln!(out, "elements {}", self.elements.len()).unwrap();
        for e in &self.elements {
            let ids: Vec<String> = e.vertices.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", ids.join(" ")).unwrap();
        }
        let labeled: Vec<(usize, char)> = self
            .facets
            .iter()
            .enumerate()
            .filter_map(|(e, f)| match f.kind {
                FacetKind::Dirichlet { .. } => Some((e, 'D')),
                FacetKind::Neumann { .. } => Some((e, 'N')),
                _ => None,
            })
            .collect();
        if !labeled.is_empty() {
            writeln!(out, "boundary {}", labeled.len()).unwrap();
            for (e, label) in labeled {
                let ids: Vec<String> =
                    self.facets[e].vertices.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{} {}", ids.join(" "), label).unwrap();
            }
        }
        out
    }
}

/// Parse the plain-text mesh format:
///
/// ```text
/// dim 2
/// vertices 3
/// 0 0
/// 1 0
/// 0 1
/// elements 1
/// 0 1 2
/// boundary 1
/// 0 1 D
/// ```
///
/// Blank lines and `#` comments are ignored. The `boundary` section is
/// optional; unlabeled boundary facets stay unclassified. Conformity is
/// checked: a facet shared by more than two elements or a vertex lying in
/// the interior of another element's facet is rejected.
pub fn import_mesh<F: Real>(text: &str) -> Result<Mesh<F>, MeshError> {
    struct Lines<'a> {
        iter: std::iter::Enumerate<std::str::Lines<'a>>,
    }
    impl<'a> Lines<'a> {
        fn next_content(&mut self) -> Option<(usize, &'a str)> {
            for (i, raw) in self.iter.by_ref() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if !line.is_empty() {
                    return Some((i + 1, line));
                }
            }
            None
        }
    }
    let parse_err = |line: usize, message: String| MeshError::ParseError { line, message };
    let mut lines = Lines { iter: text.lines().enumerate() };

    let expect_header = |entry: Option<(usize, &str)>,
                         keyword: &str|
     -> Result<(usize, usize), MeshError> {
        let (line, content) =
            entry.ok_or_else(|| parse_err(0, format!("missing '{keyword}' section")))?;
        let mut parts = content.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(count), None) if k == keyword => count
                .parse::<usize>()
                .map(|c| (line, c))
                .map_err(|_| parse_err(line, format!("bad {keyword} count: {count}"))),
            _ => Err(parse_err(line, format!("expected '{keyword} <count>', got '{content}'"))),
        }
    };

    let (dim_line, dim) = expect_header(lines.next_content(), "dim")?;
    if dim != 1 && dim != 2 {
        return Err(parse_err(dim_line, format!("dim must be 1 or 2, got {dim}")));
    }

    let (_, n_vertices) = expect_header(lines.next_content(), "vertices")?;
    let mut vertices: Vec<Vec<F>> = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (line, content) = lines
            .next_content()
            .ok_or_else(|| parse_err(0, "unexpected end of file in vertices".into()))?;
        let coords: Result<Vec<F>, _> = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .and_then(F::from_f64)
                    .ok_or_else(|| parse_err(line, format!("bad coordinate: {tok}")))
            })
            .collect();
        let coords = coords?;
        if coords.len() != dim {
            return Err(parse_err(line, format!("expected {dim} coordinates")));
        }
        vertices.push(coords);
    }

    let (_, n_elements) = expect_header(lines.next_content(), "elements")?;
    let mut element_vertices: Vec<Vec<usize>> = Vec::with_capacity(n_elements);
    for _ in 0..n_elements {
        let (line, content) = lines
            .next_content()
            .ok_or_else(|| parse_err(0, "unexpected end of file in elements".into()))?;
        let ids: Result<Vec<usize>, _> = content
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| parse_err(line, format!("bad vertex id: {tok}")))
            })
            .collect();
        let ids = ids?;
        if ids.len() != dim + 1 {
            return Err(parse_err(line, format!("expected {} vertex ids", dim + 1)));
        }
        for &v in &ids {
            if v >= vertices.len() {
                return Err(parse_err(line, format!("vertex id {v} out of range")));
            }
        }
        let element = element_geometry(dim, &vertices, &ids);
        if !(element.measure > F::zero()) {
            return Err(parse_err(line, format!("degenerate element {ids:?}")));
        }
        element_vertices.push(ids);
    }

    let mut mesh = Mesh::from_parts(dim, vertices, element_vertices, None)?;

    if let Some((line, content)) = lines.next_content() {
        let (_, n_boundary) = expect_header(Some((line, content)), "boundary")?;
        let mut by_key: HashMap<Vec<usize>, usize> = HashMap::new();
        for (e, facet) in mesh.facets.iter().enumerate() {
            let mut key = facet.vertices.clone();
            key.sort_unstable();
            by_key.insert(key, e);
        }
        for _ in 0..n_boundary {
            let (line, content) = lines
                .next_content()
                .ok_or_else(|| parse_err(0, "unexpected end of file in boundary".into()))?;
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if tokens.len() != dim + 1 {
                return Err(parse_err(
                    line,
                    format!("expected {} vertex ids and a D/N label", dim),
                ));
            }
            let mut key: Vec<usize> = Vec::with_capacity(dim);
            for tok in &tokens[..dim] {
                key.push(
                    tok.parse::<usize>()
                        .map_err(|_| parse_err(line, format!("bad vertex id: {tok}")))?,
                );
            }
            key.sort_unstable();
            let &e = by_key
                .get(&key)
                .ok_or_else(|| parse_err(line, format!("no facet with vertices {key:?}")))?;
            let t = match mesh.facets[e].kind {
                FacetKind::Interior { .. } => {
                    return Err(parse_err(
                        line,
                        format!("facet {key:?} is interior, cannot carry a boundary label"),
                    ));
                }
                FacetKind::Dirichlet { t }
                | FacetKind::Neumann { t }
                | FacetKind::Unclassified { t } => t,
            };
            mesh.facets[e].kind = match tokens[dim] {
                "D" => FacetKind::Dirichlet { t },
                "N" => FacetKind::Neumann { t },
                other => {
                    return Err(parse_err(line, format!("label must be D or N, got {other}")));
                }
            };
        }
        if let Some((line, content)) = lines.next_content() {
            return Err(parse_err(line, format!("trailing content: {content}")));
        }
    }

    Ok(mesh)
}
