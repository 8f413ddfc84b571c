//! Nodal polynomial bases on the reference triangle, reference square and
//! reference time interval, plus the quadrature rules used by assembly.
//!
//! Spatial bases use equispaced interpolation nodes (degrees 0..=4), the time
//! basis interpolates at the Gauss-Legendre points of the unit interval.
//! Space-time indices are flattened time-major: `k = l2 * n_spatial + l1`
//! (0-based), which matches the 1-based sorting functions [`sort_indices`].

use crate::error::Error;
use nalgebra::{DMatrix, DVector};

pub const MAX_DEGREE: usize = 4;

/// Reference triangle: vertices (0,0), (1,0), (0,1).
/// Reference square: [0,1]^2. Reference time interval: [0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint {
    pub xi: f64,
    pub gamma: f64,
}

fn check_degree(p: usize) -> Result<(), Error> {
    if p > MAX_DEGREE {
        return Err(Error::UnsupportedDegree(p as isize));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gauss-Legendre rules on [0,1]
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes and weights on [0,1], computed by Newton iteration on
/// the Legendre polynomial of degree `n`.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one quadrature point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess on [-1,1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, dpn) = legendre_eval(n, x);
            let dx = pn / dpn;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dpn) = legendre_eval(n, x);
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        // Map to [0,1]; reverse so nodes come out ascending.
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Legendre P_n(x) and its derivative via the three-term recurrence.
fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

// ---------------------------------------------------------------------------
// Quadrature rules on the reference domains
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadDomain {
    Triangle,
    Square,
    Interval,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// 1D Gauss-Legendre rule on [0,1] exact for polynomials of degree `order`.
pub fn interval_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre_01(order / 2 + 1)
}

/// Quadrature rule exact for polynomials up to total degree `order` on the
/// requested reference domain (interval rules store the point in `xi`).
pub fn quadrature(domain: QuadDomain, order: usize) -> QuadratureRule {
    match domain {
        QuadDomain::Interval => {
            let (x, w) = interval_rule(order);
            QuadratureRule {
                points: x.iter().map(|&xi| [xi, 0.0]).collect(),
                weights: w,
            }
        }
        QuadDomain::Square => {
            let (x, w) = interval_rule(order);
            let mut points = Vec::with_capacity(x.len() * x.len());
            let mut weights = Vec::with_capacity(x.len() * x.len());
            for (i, &xi) in x.iter().enumerate() {
                for (j, &yj) in x.iter().enumerate() {
                    points.push([xi, yj]);
                    weights.push(w[i] * w[j]);
                }
            }
            QuadratureRule { points, weights }
        }
        QuadDomain::Triangle => {
            // Duffy map of a tensor rule: (u, v) -> (u, v(1-u)), weight (1-u).
            // The pullback raises the u-degree by one, so use order+1 there.
            let (xu, wu) = interval_rule(order + 1);
            let (xv, wv) = interval_rule(order);
            let mut points = Vec::with_capacity(xu.len() * xv.len());
            let mut weights = Vec::with_capacity(xu.len() * xv.len());
            for (i, &u) in xu.iter().enumerate() {
                for (j, &v) in xv.iter().enumerate() {
                    points.push([u, v * (1.0 - u)]);
                    weights.push(wu[i] * wv[j] * (1.0 - u));
                }
            }
            QuadratureRule { points, weights }
        }
    }
}

// ---------------------------------------------------------------------------
// 1D Lagrange basis
// ---------------------------------------------------------------------------

/// Lagrange interpolation basis through an arbitrary set of distinct nodes.
#[derive(Debug, Clone)]
pub struct Lagrange1d {
    pub nodes: Vec<f64>,
}

impl Lagrange1d {
    pub fn new(nodes: Vec<f64>) -> Self {
        Self { nodes }
    }

    pub fn equispaced(p: usize) -> Self {
        let nodes = if p == 0 {
            vec![0.5]
        } else {
            (0..=p).map(|i| i as f64 / p as f64).collect()
        };
        Self::new(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eval(&self, x: f64, out: &mut [f64]) {
        let n = self.nodes.len();
        for k in 0..n {
            let mut v = 1.0;
            for m in 0..n {
                if m != k {
                    v *= (x - self.nodes[m]) / (self.nodes[k] - self.nodes[m]);
                }
            }
            out[k] = v;
        }
    }

    pub fn eval_deriv(&self, x: f64, out: &mut [f64]) {
        let n = self.nodes.len();
        for k in 0..n {
            let mut s = 0.0;
            for m in 0..n {
                if m == k {
                    continue;
                }
                let mut prod = 1.0 / (self.nodes[k] - self.nodes[m]);
                for l in 0..n {
                    if l != k && l != m {
                        prod *= (x - self.nodes[l]) / (self.nodes[k] - self.nodes[l]);
                    }
                }
                s += prod;
            }
            out[k] = s;
        }
    }
}

// ---------------------------------------------------------------------------
// Triangle basis
// ---------------------------------------------------------------------------

/// Nodal basis of degree `p` on the reference triangle, built from the
/// monomial span via an inverted Vandermonde matrix.
#[derive(Debug, Clone)]
pub struct TriBasis {
    pub p: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Monomial exponents (a, b) for xi^a * gamma^b.
    expo: Vec<(u32, u32)>,
    /// coeff[(mono, k)]: basis_k = sum_mono coeff * xi^a gamma^b.
    coeff: DMatrix<f64>,
}

/// Number of triangle basis functions of degree `p`: (p+1)(p+2)/2.
pub fn n_tri_basis(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// Number of quadrilateral basis functions of degree `p`: (p+1)^2.
pub fn n_quad_basis(p: usize) -> usize {
    (p + 1) * (p + 1)
}

impl TriBasis {
    pub fn new(p: usize) -> Result<Self, Error> {
        check_degree(p)?;
        let nodes: Vec<[f64; 2]> = if p == 0 {
            vec![[1.0 / 3.0, 1.0 / 3.0]]
        } else {
            let mut v = Vec::new();
            for j in 0..=p {
                for i in 0..=(p - j) {
                    v.push([i as f64 / p as f64, j as f64 / p as f64]);
                }
            }
            v
        };
        let mut expo = Vec::new();
        for b in 0..=p as u32 {
            for a in 0..=(p as u32 - b) {
                expo.push((a, b));
            }
        }
        let n = nodes.len();
        debug_assert_eq!(n, expo.len());
        let mut vand = DMatrix::zeros(n, n);
        for (row, node) in nodes.iter().enumerate() {
            for (col, &(a, b)) in expo.iter().enumerate() {
                vand[(row, col)] = node[0].powi(a as i32) * node[1].powi(b as i32);
            }
        }
        let coeff = vand
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::geometry("singular triangle Vandermonde matrix"))?;
        Ok(Self { p, nodes, expo, coeff })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Basis values at a reference point.
    pub fn eval(&self, pt: RefPoint) -> DVector<f64> {
        let n = self.len();
        let mut vals = DVector::zeros(n);
        for k in 0..n {
            let mut s = 0.0;
            for (m, &(a, b)) in self.expo.iter().enumerate() {
                s += self.coeff[(m, k)] * pt.xi.powi(a as i32) * pt.gamma.powi(b as i32);
            }
            vals[k] = s;
        }
        vals
    }

    /// Reference-space gradients (d/dxi, d/dgamma) of all basis functions.
    pub fn eval_grad(&self, pt: RefPoint) -> Vec<[f64; 2]> {
        let n = self.len();
        let mut out = vec![[0.0; 2]; n];
        for k in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for (m, &(a, b)) in self.expo.iter().enumerate() {
                let c = self.coeff[(m, k)];
                if a > 0 {
                    gx += c * a as f64 * pt.xi.powi(a as i32 - 1) * pt.gamma.powi(b as i32);
                }
                if b > 0 {
                    gy += c * b as f64 * pt.xi.powi(a as i32) * pt.gamma.powi(b as i32 - 1);
                }
            }
            out[k] = [gx, gy];
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Quadrilateral basis (tensor product Lagrange)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct QuadBasis {
    pub p: usize,
    pub line: Lagrange1d,
    pub nodes: Vec<[f64; 2]>,
}

impl QuadBasis {
    pub fn new(p: usize) -> Result<Self, Error> {
        check_degree(p)?;
        let line = Lagrange1d::equispaced(p);
        let mut nodes = Vec::new();
        for j in 0..line.len() {
            for i in 0..line.len() {
                nodes.push([line.nodes[i], line.nodes[j]]);
            }
        }
        Ok(Self { p, line, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eval(&self, pt: RefPoint) -> DVector<f64> {
        let n1 = self.line.len();
        let mut lx = vec![0.0; n1];
        let mut ly = vec![0.0; n1];
        self.line.eval(pt.xi, &mut lx);
        self.line.eval(pt.gamma, &mut ly);
        let mut vals = DVector::zeros(n1 * n1);
        for j in 0..n1 {
            for i in 0..n1 {
                vals[j * n1 + i] = lx[i] * ly[j];
            }
        }
        vals
    }

    pub fn eval_grad(&self, pt: RefPoint) -> Vec<[f64; 2]> {
        let n1 = self.line.len();
        let mut lx = vec![0.0; n1];
        let mut ly = vec![0.0; n1];
        let mut dx = vec![0.0; n1];
        let mut dy = vec![0.0; n1];
        self.line.eval(pt.xi, &mut lx);
        self.line.eval(pt.gamma, &mut ly);
        self.line.eval_deriv(pt.xi, &mut dx);
        self.line.eval_deriv(pt.gamma, &mut dy);
        let mut out = vec![[0.0; 2]; n1 * n1];
        for j in 0..n1 {
            for i in 0..n1 {
                out[j * n1 + i] = [dx[i] * ly[j], lx[i] * dy[j]];
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Time basis: Lagrange through the Gauss-Legendre points of [0,1]
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TimeBasis {
    pub p_gamma: usize,
    pub line: Lagrange1d,
}

impl TimeBasis {
    pub fn new(p_gamma: usize) -> Result<Self, Error> {
        check_degree(p_gamma)?;
        let (nodes, _) = gauss_legendre_01(p_gamma + 1);
        Ok(Self {
            p_gamma,
            line: Lagrange1d::new(nodes),
        })
    }

    pub fn len(&self) -> usize {
        self.line.len()
    }
    pub fn is_empty(&self) -> bool {
        self.line.is_empty()
    }

    pub fn eval(&self, tau: f64) -> DVector<f64> {
        let mut v = vec![0.0; self.len()];
        self.line.eval(tau, &mut v);
        DVector::from_vec(v)
    }

    pub fn eval_deriv(&self, tau: f64) -> DVector<f64> {
        let mut v = vec![0.0; self.len()];
        self.line.eval_deriv(tau, &mut v);
        DVector::from_vec(v)
    }
}

// ---------------------------------------------------------------------------
// Space-time index sorting
// ---------------------------------------------------------------------------

/// Decompose a 1-based space-time basis index `k` into its 1-based spatial
/// index `l1` and temporal layer `l2`, given the spatial basis count `n`.
pub fn sort_indices(k: usize, n: usize) -> Result<(usize, usize), Error> {
    if k == 0 || n == 0 {
        return Err(Error::Usage(format!("sort index {k} out of range (n={n})")));
    }
    let l2 = (k - 1) / n + 1;
    let l1 = k - (l2 - 1) * n;
    Ok((l1, l2))
}

/// Inverse of [`sort_indices`]: recompose the 1-based space-time index.
pub fn flat_index(l1: usize, l2: usize, n: usize) -> usize {
    (l2 - 1) * n + l1
}

// ---------------------------------------------------------------------------
// Bundled space-time basis
// ---------------------------------------------------------------------------

/// Everything needed to evaluate the space-time polynomial spaces for one run:
/// spatial degree `p` on triangles/quads, temporal degree `p_gamma`.
#[derive(Debug, Clone)]
pub struct SpaceTimeBasis {
    pub p: usize,
    pub p_gamma: usize,
    pub tri: TriBasis,
    pub quad: QuadBasis,
    pub time: TimeBasis,
    /// Matrix quadrature rules (order 2p+2 spatial, 2p_gamma+2 temporal).
    pub tri_rule: QuadratureRule,
    pub square_rule: QuadratureRule,
    pub edge_rule: (Vec<f64>, Vec<f64>),
    pub time_rule: (Vec<f64>, Vec<f64>),
    /// Higher-order rules for the nonlinear convective terms.
    pub flux_square_rule: QuadratureRule,
    pub flux_tri_rule: QuadratureRule,
    pub flux_edge_rule: (Vec<f64>, Vec<f64>),
    pub flux_time_rule: (Vec<f64>, Vec<f64>),
}

impl SpaceTimeBasis {
    pub fn new(p: usize, p_gamma: usize) -> Result<Self, Error> {
        check_degree(p)?;
        check_degree(p_gamma)?;
        let tri = TriBasis::new(p)?;
        let quad = QuadBasis::new(p)?;
        let time = TimeBasis::new(p_gamma)?;
        let order_s = 2 * p + 2;
        let order_t = 2 * p_gamma + 2;
        Ok(Self {
            p,
            p_gamma,
            tri,
            quad,
            time,
            tri_rule: quadrature(QuadDomain::Triangle, order_s),
            square_rule: quadrature(QuadDomain::Square, order_s),
            edge_rule: interval_rule(order_s),
            time_rule: interval_rule(order_t),
            flux_square_rule: quadrature(QuadDomain::Square, 3 * p + 2),
            flux_tri_rule: quadrature(QuadDomain::Triangle, 3 * p + 2),
            flux_edge_rule: interval_rule(3 * p + 2),
            flux_time_rule: interval_rule((3 * p_gamma + 2).max(order_t)),
        })
    }

    pub fn n_phi(&self) -> usize {
        self.tri.len()
    }
    pub fn n_psi(&self) -> usize {
        self.quad.len()
    }
    pub fn n_gamma(&self) -> usize {
        self.time.len()
    }
    pub fn n_phi_st(&self) -> usize {
        self.n_phi() * self.n_gamma()
    }
    pub fn n_psi_st(&self) -> usize {
        self.n_psi() * self.n_gamma()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn tri_nodal_property_p1() {
        let b = TriBasis::new(1).unwrap();
        let v = b.eval(RefPoint { xi: 0.0, gamma: 0.0 });
        assert!((v[0] - 1.0).abs() < TOL && v[1].abs() < TOL && v[2].abs() < TOL);
    }

    #[test]
    fn tri_partition_of_unity() {
        for p in 0..=4 {
            let b = TriBasis::new(p).unwrap();
            for &(x, g) in &[(0.1, 0.2), (0.3, 0.3), (1.0 / 3.0, 1.0 / 3.0), (0.7, 0.25)] {
                let v = b.eval(RefPoint { xi: x, gamma: g });
                assert!((v.sum() - 1.0).abs() < TOL, "p={p} at ({x},{g})");
            }
        }
    }

    #[test]
    fn tri_nodal_delta_all_degrees() {
        for p in 0..=4 {
            let b = TriBasis::new(p).unwrap();
            for (l, node) in b.nodes.iter().enumerate() {
                let v = b.eval(RefPoint { xi: node[0], gamma: node[1] });
                for k in 0..b.len() {
                    let want = if k == l { 1.0 } else { 0.0 };
                    assert!((v[k] - want).abs() < TOL, "p={p} k={k} l={l}");
                }
            }
        }
    }

    /// Oracle: the p=1 mass matrix on the reference triangle has the exact
    /// rational entries 1/12 (diagonal) and 1/24 (off-diagonal).
    #[test]
    fn tri_p1_mass_matrix() {
        let b = TriBasis::new(1).unwrap();
        let rule = quadrature(QuadDomain::Triangle, 4);
        let mut m = [[0.0; 3]; 3];
        for (q, pt) in rule.points.iter().enumerate() {
            let v = b.eval(RefPoint { xi: pt[0], gamma: pt[1] });
            for k in 0..3 {
                for l in 0..3 {
                    m[k][l] += rule.weights[q] * v[k] * v[l];
                }
            }
        }
        for k in 0..3 {
            for l in 0..3 {
                let want = if k == l { 1.0 / 12.0 } else { 1.0 / 24.0 };
                assert!((m[k][l] - want).abs() < TOL);
            }
        }
    }

    #[test]
    fn quad_nodal_and_symmetry() {
        let b = QuadBasis::new(1).unwrap();
        let v = b.eval(RefPoint { xi: 0.0, gamma: 0.0 });
        assert!((v[0] - 1.0).abs() < TOL);
        assert!(v[1].abs() < TOL && v[2].abs() < TOL && v[3].abs() < TOL);
        let c = b.eval(RefPoint { xi: 0.5, gamma: 0.5 });
        for k in 0..4 {
            assert!((c[k] - 0.25).abs() < TOL);
        }
    }

    /// Oracle: the p=2 mass matrix on the square equals the tensor square of
    /// the 1D mass matrix of the equispaced Lagrange basis.
    #[test]
    fn quad_mass_is_tensor_square() {
        let b = QuadBasis::new(2).unwrap();
        let n1 = b.line.len();
        let (x, w) = interval_rule(6);
        let mut m1: DMatrix<f64> = DMatrix::zeros(n1, n1);
        let mut vals = vec![0.0; n1];
        for (q, &xq) in x.iter().enumerate() {
            b.line.eval(xq, &mut vals);
            for i in 0..n1 {
                for j in 0..n1 {
                    m1[(i, j)] += w[q] * vals[i] * vals[j];
                }
            }
        }
        let rule = quadrature(QuadDomain::Square, 6);
        let n = b.len();
        let mut m2: DMatrix<f64> = DMatrix::zeros(n, n);
        for (q, pt) in rule.points.iter().enumerate() {
            let v = b.eval(RefPoint { xi: pt[0], gamma: pt[1] });
            for k in 0..n {
                for l in 0..n {
                    m2[(k, l)] += rule.weights[q] * v[k] * v[l];
                }
            }
        }
        for kj in 0..n1 {
            for ki in 0..n1 {
                for lj in 0..n1 {
                    for li in 0..n1 {
                        let got: f64 = m2[(kj * n1 + ki, lj * n1 + li)];
                        let want: f64 = m1[(ki, li)] * m1[(kj, lj)];
                        assert!((got - want).abs() < TOL);
                    }
                }
            }
        }
    }

    #[test]
    fn time_basis_nodal_and_unity() {
        let b = TimeBasis::new(0).unwrap();
        assert!((b.eval(0.37)[0] - 1.0).abs() < TOL);
        assert!(b.eval_deriv(0.37)[0].abs() < TOL);

        let b = TimeBasis::new(1).unwrap();
        let tau1 = (3.0 - 3.0_f64.sqrt()) / 6.0;
        let v = b.eval(tau1);
        assert!((v[0] - 1.0).abs() < 1e-13 && v[1].abs() < 1e-13);

        let b = TimeBasis::new(2).unwrap();
        for i in 0..20 {
            let tau = i as f64 / 19.0;
            assert!((b.eval(tau).sum() - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn sort_index_examples_and_bijection() {
        assert_eq!(sort_indices(7, 6).unwrap(), (1, 2));
        assert_eq!(sort_indices(1, 6).unwrap(), (1, 1));
        assert_eq!(sort_indices(18, 6).unwrap(), (6, 3));
        for n in 1..=25 {
            for k in 1..=(n * 5) {
                let (l1, l2) = sort_indices(k, n).unwrap();
                assert!(1 <= l1 && l1 <= n);
                assert_eq!(flat_index(l1, l2, n), k);
            }
        }
        assert!(sort_indices(0, 6).is_err());
    }

    #[test]
    fn quadrature_measures_and_exactness() {
        let (_, w) = interval_rule(7);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < TOL);

        // Triangle rule of order 4 integrates xi^2 gamma^2 exactly: 1/180.
        let rule = quadrature(QuadDomain::Triangle, 4);
        assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < TOL);
        let mut s = 0.0;
        for (q, pt) in rule.points.iter().enumerate() {
            s += rule.weights[q] * pt[0] * pt[0] * pt[1] * pt[1];
        }
        assert!((s - 1.0 / 180.0).abs() < TOL);

        // Square rule is a tensor rule: xi^3 gamma^3 integrates to 1/16.
        let rule = quadrature(QuadDomain::Square, 3);
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < TOL);
        let mut s = 0.0;
        for (q, pt) in rule.points.iter().enumerate() {
            s += rule.weights[q] * pt[0].powi(3) * pt[1].powi(3);
        }
        assert!((s - 1.0 / 16.0).abs() < TOL);
    }

    /// Analytic basis gradients vs central finite differences.
    #[test]
    fn gradient_consistency() {
        let h = 1e-6;
        for p in 1..=4 {
            let tb = TriBasis::new(p).unwrap();
            let qb = QuadBasis::new(p).unwrap();
            for &(x, g) in &[(0.21, 0.33), (0.4, 0.11), (0.05, 0.61)] {
                let grads = tb.eval_grad(RefPoint { xi: x, gamma: g });
                let vxp = tb.eval(RefPoint { xi: x + h, gamma: g });
                let vxm = tb.eval(RefPoint { xi: x - h, gamma: g });
                let vgp = tb.eval(RefPoint { xi: x, gamma: g + h });
                let vgm = tb.eval(RefPoint { xi: x, gamma: g - h });
                for k in 0..tb.len() {
                    assert!((grads[k][0] - (vxp[k] - vxm[k]) / (2.0 * h)).abs() < 1e-6);
                    assert!((grads[k][1] - (vgp[k] - vgm[k]) / (2.0 * h)).abs() < 1e-6);
                }
                let grads = qb.eval_grad(RefPoint { xi: x, gamma: g });
                let vxp = qb.eval(RefPoint { xi: x + h, gamma: g });
                let vxm = qb.eval(RefPoint { xi: x - h, gamma: g });
                for k in 0..qb.len() {
                    assert!((grads[k][0] - (vxp[k] - vxm[k]) / (2.0 * h)).abs() < 1e-6);
                }
            }
        }
    }

    /// Interpolating a polynomial of degree <= p at the basis nodes must
    /// reproduce it at random points.
    #[test]
    fn interpolation_exactness() {
        let poly = |x: f64, y: f64| 1.0 + 2.0 * x - 0.5 * y + 3.0 * x * y - y * y;
        let b = TriBasis::new(2).unwrap();
        let coeffs: Vec<f64> = b.nodes.iter().map(|n| poly(n[0], n[1])).collect();
        let mut state = 123456789u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let x = rand01();
            let y = rand01() * (1.0 - x);
            let v = b.eval(RefPoint { xi: x, gamma: y });
            let interp: f64 = (0..b.len()).map(|k| coeffs[k] * v[k]).sum();
            assert!((interp - poly(x, y)).abs() < 1e-11);
        }
    }
}
