//! Higher-order covariance matrices, their local symplectic invariants and
//! standard form, and third/fourth-order joint moments of the linear
//! quadratures.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation, embed, Mode, QuantumState, StateRepr, TruncatedOperator};
use crate::quadratures::QuadratureSet;

const SYMMETRY_TOL: f64 = 1e-10;
const COMMUTATOR_TOL: f64 = 1e-8;

/// 4x4 covariance of `(Q^{nk}_A, P^{nk}_A, Q^{nl}_B, P^{nl}_B)` with the
/// commutator expectations that set its uncertainty scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderCovariance {
    pub v: Matrix4<f64>,
    /// `<f_{nk}(N_A)>`.
    pub f_ka: f64,
    /// `<f_{nl}(N_B)>`.
    pub f_lb: f64,
    pub first_moments: Vector4<f64>,
    pub n: usize,
    pub k: usize,
    pub l: usize,
}

impl HigherOrderCovariance {
    /// Wraps a hand-built matrix; labels default to `n = k = l = 1`.
    pub fn from_matrix(v: Matrix4<f64>, f_ka: f64, f_lb: f64) -> Result<Self> {
        let asym = (v - v.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::NumericalConsistency {
                what: "covariance matrix is not symmetric",
                residue: asym,
            });
        }
        Ok(Self {
            v,
            f_ka,
            f_lb,
            first_moments: Vector4::zeros(),
            n: 1,
            k: 1,
            l: 1,
        })
    }

    pub fn block_a(&self) -> Matrix2<f64> {
        self.v.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn block_b(&self) -> Matrix2<f64> {
        self.v.fixed_view::<2, 2>(2, 2).into_owned()
    }

    pub fn block_c(&self) -> Matrix2<f64> {
        self.v.fixed_view::<2, 2>(0, 2).into_owned()
    }

    /// Scalarised commutator matrix `diag(f_ka J, f_lb J)`, `J = [[0, 1], [-1, 0]]`.
    pub fn omega(&self) -> Matrix4<f64> {
        omega(self.f_ka, self.f_lb)
    }

    /// `F = diag(f_ka, f_ka, f_lb, f_lb)`.
    pub fn f_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(self.f_ka, self.f_ka, self.f_lb, self.f_lb))
    }

    pub fn with_matrix(&self, v: Matrix4<f64>) -> Self {
        Self { v, ..self.clone() }
    }

    /// Row-major copy of the 16 entries.
    pub fn entries(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[4 * r + c] = self.v[(r, c)];
            }
        }
        out
    }
}

pub fn omega(f_a: f64, f_b: f64) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 1)] = f_a;
    m[(1, 0)] = -f_a;
    m[(2, 3)] = f_b;
    m[(3, 2)] = -f_b;
    m
}

/// Builds the `(nk, nl)` covariance of a state on an `(A, B)` or
/// `(pump, A, B)` layout.
pub fn build_covariance(
    state: &QuantumState,
    n: usize,
    k: usize,
    l: usize,
) -> Result<HigherOrderCovariance> {
    let qs = QuadratureSet::new(n, k, l, state.layout())?;
    build_covariance_with(state, &qs)
}

/// As [`build_covariance`], reusing prebuilt quadrature operators.
///
/// Also checks that the antisymmetric part of `<R_i R_j>` equals
/// `(i/2) <Omega>`, which holds exactly once the state is padded.
pub fn build_covariance_with(
    state: &QuantumState,
    qs: &QuadratureSet,
) -> Result<HigherOrderCovariance> {
    let raw = qs.moments(state)?;
    let om = omega(raw.f_a, raw.f_b);
    let mut v = Matrix4::zeros();
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let g = raw.gram[i][j];
            v[(i, j)] = g.re - raw.means[i] * raw.means[j];
            worst = worst.max((g.im - 0.5 * om[(i, j)]).abs());
        }
    }
    let scale = 1.0 + raw.f_a.abs().max(raw.f_b.abs());
    if worst > COMMUTATOR_TOL * scale {
        return Err(Error::NumericalConsistency {
            what: "second moments disagree with the commutator table",
            residue: worst,
        });
    }
    let v = (v + v.transpose()) * 0.5;
    Ok(HigherOrderCovariance {
        v,
        f_ka: raw.f_a,
        f_lb: raw.f_b,
        first_moments: Vector4::from(raw.means),
        n: qs.n,
        k: qs.k,
        l: qs.l,
    })
}

/// `Lambda V Lambda` with `Lambda = diag(1, 1, 1, -1)`: phase-space picture
/// of the partial transpose on party B.
pub fn mirror_reflect(cov: &HigherOrderCovariance) -> HigherOrderCovariance {
    let mut v = cov.v;
    for i in 0..4 {
        if i != 3 {
            v[(i, 3)] = -v[(i, 3)];
            v[(3, i)] = -v[(3, i)];
        }
    }
    let mut first_moments = cov.first_moments;
    first_moments[3] = -first_moments[3];
    HigherOrderCovariance {
        v,
        first_moments,
        ..cov.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    /// `det A`
    pub i1: f64,
    /// `det B`
    pub i2: f64,
    /// `det C`
    pub i3: f64,
    /// `det V`
    pub i4: f64,
}

pub fn invariants(cov: &HigherOrderCovariance) -> Invariants {
    Invariants {
        i1: cov.block_a().determinant(),
        i2: cov.block_b().determinant(),
        i3: cov.block_c().determinant(),
        i4: cov.v.determinant(),
    }
}

/// Canonical representative
/// `[[a, 0, c1, 0], [0, a, 0, c2], [c1, 0, b, 0], [0, c2, 0, b]]`
/// with `b >= a` and `c1 >= |c2|`; `c2` carries the sign of `det C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardForm {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
    /// Symplectic map applied to the (post-ordering) first party.
    pub transform_a: Matrix2<f64>,
    /// Symplectic map applied to the (post-ordering) second party.
    pub transform_b: Matrix2<f64>,
    /// Whether A and B were exchanged to obtain `b >= a`.
    pub parties_swapped: bool,
    /// Commutator expectations in post-ordering party order.
    pub f_first: f64,
    pub f_second: f64,
}

impl StandardForm {
    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::new(
            self.a, 0.0, self.c1, 0.0, //
            0.0, self.a, 0.0, self.c2, //
            self.c1, 0.0, self.b, 0.0, //
            0.0, self.c2, 0.0, self.b,
        )
    }

    pub fn covariance(&self) -> HigherOrderCovariance {
        HigherOrderCovariance {
            v: self.matrix(),
            f_ka: self.f_first,
            f_lb: self.f_second,
            first_moments: Vector4::zeros(),
            n: 1,
            k: 1,
            l: 1,
        }
    }
}

/// Reduces `V` to standard form by local symplectic maps.
///
/// Each diagonal block is brought to `sqrt(det) * I` by
/// `S = det^{1/4} X^{-1/2}`, then the transformed correlation block is
/// diagonalised by an SVD restricted to proper rotations.
pub fn standard_form(cov: &HigherOrderCovariance) -> Result<StandardForm> {
    let (sa, a) = williamson_2x2(&cov.block_a(), "A")?;
    let (sb, b) = williamson_2x2(&cov.block_b(), "B")?;
    let u = sa * cov.block_c() * sb.transpose();
    let svd = u.svd(true, true);
    let mut w = svd.u.expect("requested U");
    let mut z = svd.v_t.expect("requested V^T").transpose();
    let mut sigma = [svd.singular_values[0], svd.singular_values[1]];
    if sigma[0] < sigma[1] {
        sigma.swap(0, 1);
        w.swap_columns(0, 1);
        z.swap_columns(0, 1);
    }
    if w.determinant() < 0.0 {
        w.set_column(1, &(-w.column(1)));
        sigma[1] = -sigma[1];
    }
    if z.determinant() < 0.0 {
        z.set_column(1, &(-z.column(1)));
        sigma[1] = -sigma[1];
    }
    let ta = w.transpose() * sa;
    let tb = z.transpose() * sb;
    let mut sf = StandardForm {
        a,
        b,
        c1: sigma[0],
        c2: sigma[1],
        transform_a: ta,
        transform_b: tb,
        parties_swapped: false,
        f_first: cov.f_ka,
        f_second: cov.f_lb,
    };
    if sf.a > sf.b {
        std::mem::swap(&mut sf.a, &mut sf.b);
        std::mem::swap(&mut sf.transform_a, &mut sf.transform_b);
        std::mem::swap(&mut sf.f_first, &mut sf.f_second);
        sf.parties_swapped = true;
    }
    Ok(sf)
}

/// Symplectic `S` with `S X S^T = sqrt(det X) I`, and `sqrt(det X)`.
fn williamson_2x2(x: &Matrix2<f64>, name: &str) -> Result<(Matrix2<f64>, f64)> {
    let det = x.determinant();
    if !(det > 0.0) || !(x.trace() > 0.0) {
        return Err(Error::DegenerateState(format!(
            "block {name} is not positive definite (det = {det:e})"
        )));
    }
    let eig = x.symmetric_eigen();
    let inv_sqrt = eig.eigenvectors
        * Matrix2::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e.sqrt()))
        * eig.eigenvectors.transpose();
    Ok((inv_sqrt * det.powf(0.25), det.sqrt()))
}

/// Linear quadrature selector for third- and fourth-order moments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quadrature {
    QA,
    PA,
    QB,
    PB,
}

impl Quadrature {
    fn mode(self) -> Mode {
        match self {
            Quadrature::QA | Quadrature::PA => Mode::A,
            Quadrature::QB | Quadrature::PB => Mode::B,
        }
    }
}

/// `q = (c + c^dag)/2` or `p = i(c^dag - c)/2` on the state's layout.
fn linear_quadrature(state: &QuantumState, which: Quadrature) -> Result<TruncatedOperator> {
    let layout = state.layout();
    let mode = layout.require(which.mode())?;
    let a = annihilation(layout.dim(mode))?;
    let half = Complex64::new(0.5, 0.0);
    let op = match which {
        Quadrature::QA | Quadrature::QB => a.axpby(half, &a.adjoint(), half),
        Quadrature::PA | Quadrature::PB => {
            a.adjoint()
                .axpby(Complex64::new(0.0, 0.5), &a, Complex64::new(0.0, -0.5))
        }
    };
    embed(&op, mode, layout)?.into_hermitian()
}

/// Pads A and B so that `depth` quadrature applications stay exact.
fn padded_for(state: &QuantumState, depth: usize) -> Result<QuantumState> {
    let layout = state.layout();
    let mut extra = vec![0; layout.num_modes()];
    extra[layout.require(Mode::A)?] = depth;
    extra[layout.require(Mode::B)?] = depth;
    state.padded(&extra)
}

fn real_part(z: Complex64, what: &'static str) -> Result<f64> {
    if z.im.abs() > 1e-10 * (1.0 + z.re.abs()) {
        return Err(Error::NumericalConsistency { what, residue: z.im.abs() });
    }
    Ok(z.re)
}

/// Matrix of `<X Y>` over `X in {q_A, p_A}` and
/// `Y in {q_B^2 - p_B^2, q_B p_B + p_B q_B}`.
///
/// The B-side combinations are assembled from products of linear
/// quadratures, independently of the second-order quadrature operators.
pub fn coskewness_block(state: &QuantumState) -> Result<Matrix2<f64>> {
    if state.layout().num_modes() != 3 {
        return Err(Error::LayoutMismatch(format!(
            "coskewness needs a (pump, A, B) layout, got {}",
            state.layout()
        )));
    }
    let padded = padded_for(state, 2)?;
    let qa = linear_quadrature(&padded, Quadrature::QA)?;
    let pa = linear_quadrature(&padded, Quadrature::PA)?;
    let qb = linear_quadrature(&padded, Quadrature::QB)?;
    let pb = linear_quadrature(&padded, Quadrature::PB)?;
    let y0 = qb.matmul(&qb)?.sub(&pb.matmul(&pb)?)?;
    let y1 = qb.matmul(&pb)?.add(&pb.matmul(&qb)?)?;
    let mut out = Matrix2::zeros();
    for (r, x) in [&qa, &pa].into_iter().enumerate() {
        for (c, y) in [&y0, &y1].into_iter().enumerate() {
            let z = crate::quadratures::expectation(&x.matmul(y)?, &padded)?;
            out[(r, c)] = real_part(z, "coskewness entry is complex")?;
        }
    }
    Ok(out)
}

/// Fourth joint cumulant-style combination
/// `<XYZW> - <XY><ZW> - <XZ><YW> - <XW><YZ>` of linear quadratures, with the
/// four-fold product averaged over all orderings and pair terms
/// symmetrised.
pub fn cokurtosis(state: &QuantumState, selectors: [Quadrature; 4]) -> Result<f64> {
    let padded = padded_for(state, 4)?;
    let ops: Vec<TruncatedOperator> = selectors
        .iter()
        .map(|&s| linear_quadrature(&padded, s))
        .collect::<Result<_>>()?;
    let refs = [&ops[0], &ops[1], &ops[2], &ops[3]];
    cokurtosis_of(&padded, refs)
}

/// [`cokurtosis`] for arbitrary Hermitian operators on the state's layout.
/// The caller is responsible for padding.
pub fn cokurtosis_of(state: &QuantumState, ops: [&TruncatedOperator; 4]) -> Result<f64> {
    for op in ops {
        if !op.is_hermitian() {
            return Err(Error::InvalidParameter("cokurtosis selectors must be Hermitian".into()));
        }
        if op.layout() != state.layout() {
            return Err(Error::LayoutMismatch(format!(
                "selector on {}, state on {}",
                op.layout(),
                state.layout()
            )));
        }
    }
    let pair = |i: usize, j: usize| -> Result<f64> {
        let z = crate::quadratures::second_moment(ops[i], ops[j], state)?;
        Ok(z.re)
    };
    let mut total = Complex64::new(0.0, 0.0);
    let perms = permutations4();
    match state.repr() {
        StateRepr::Pure(psi) => {
            // <psi| X_a X_b X_c X_d |psi> = <X_b X_a psi | X_c X_d psi>
            let singles: Vec<_> = ops.iter().map(|op| op.matrix().mul_vec(psi)).collect();
            let mut doubles = vec![vec![None; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        doubles[i][j] = Some(ops[i].matrix().mul_vec(&singles[j]));
                    }
                }
            }
            for p in &perms {
                let left = doubles[p[1]][p[0]].as_ref().expect("distinct indices");
                let right = doubles[p[2]][p[3]].as_ref().expect("distinct indices");
                total += left.dotc(right);
            }
        }
        StateRepr::Mixed(rho) => {
            for p in &perms {
                let right = ops[p[2]]
                    .matrix()
                    .mul_dense(&ops[p[3]].matrix().mul_dense(rho));
                let left = ops[p[0]].matrix().matmul(ops[p[1]].matrix());
                total += left.trace_product(&right);
            }
        }
    }
    let fourth = real_part(total / perms.len() as f64, "symmetrised fourth moment is complex")?;
    Ok(fourth
        - pair(0, 1)? * pair(2, 3)?
        - pair(0, 2)? * pair(1, 3)?
        - pair(0, 3)? * pair(1, 2)?)
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}
