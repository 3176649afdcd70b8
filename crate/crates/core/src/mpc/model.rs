use super::config::MpcError;
use super::reference::ReferencePoint;
use crate::scalar::Real;
use crate::vehicle::{discretize, linearize, LinearizedModel, VehicleParams};

pub const XI_DIM: usize = 5;

pub type Vec5<T> = [T; XI_DIM];
pub type Mat5<T> = [[T; XI_DIM]; XI_DIM];
pub type Mat5x2<T> = [[T; 2]; XI_DIM];

/// Time-varying extended system `xi(k+1) = A_xi(k) xi(k) + B_xi(k) dw(k)` with
///
/// ```text
/// A_xi = | A_eta  B_eta |     B_xi = | B_eta |
///        |   0      I   |            |   I   |
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedSystem<T> {
    pub a: Vec<Mat5<T>>,
    pub b: Vec<Mat5x2<T>>,
}

impl<T: Real> ExtendedSystem<T> {
    pub fn from_models(models: &[LinearizedModel<T>]) -> Self {
        let (z, one) = (T::zero(), T::one());
        let mut a = Vec::with_capacity(models.len());
        let mut b = Vec::with_capacity(models.len());
        for m in models {
            let mut ax = [[z; 5]; 5];
            let mut bx = [[z; 2]; 5];
            for i in 0..3 {
                ax[i][..3].copy_from_slice(&m.a_eta[i]);
                ax[i][3..].copy_from_slice(&m.b_eta[i]);
                bx[i] = m.b_eta[i];
            }
            ax[3][3] = one;
            ax[4][4] = one;
            bx[3][0] = one;
            bx[4][1] = one;
            a.push(ax);
            b.push(bx);
        }
        Self { a, b }
    }

    /// Linearizes along the first `len - 1` reference points.
    pub fn from_reference(
        reference: &[ReferencePoint<T>],
        params: &VehicleParams<T>,
        step: T,
    ) -> Result<Self, MpcError> {
        let models = reference
            .iter()
            .take(reference.len().saturating_sub(1))
            .map(|r| {
                let j = linearize(&r.state, &r.input, params)?;
                Ok(discretize(&j, step)?)
            })
            .collect::<Result<Vec<_>, MpcError>>()?;
        Ok(Self::from_models(&models))
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }
}

#[inline]
pub(crate) fn mat_vec<T: Real>(m: &Mat5<T>, v: &Vec5<T>) -> Vec5<T> {
    let mut out = [T::zero(); 5];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row
            .iter()
            .zip(v)
            .fold(T::zero(), |acc, (a, b)| acc + *a * *b);
    }
    out
}

#[inline]
pub(crate) fn mat_t_vec<T: Real>(m: &Mat5<T>, v: &Vec5<T>) -> Vec5<T> {
    let mut out = [T::zero(); 5];
    for (row, vi) in m.iter().zip(v) {
        for (o, a) in out.iter_mut().zip(row) {
            *o = *o + *a * *vi;
        }
    }
    out
}

#[inline]
pub(crate) fn input_vec<T: Real>(b: &Mat5x2<T>, dw: &[T; 2]) -> Vec5<T> {
    let mut out = [T::zero(); 5];
    for (o, row) in out.iter_mut().zip(b) {
        *o = row[0] * dw[0] + row[1] * dw[1];
    }
    out
}

#[inline]
pub(crate) fn input_t_vec<T: Real>(b: &Mat5x2<T>, v: &Vec5<T>) -> [T; 2] {
    let mut out = [T::zero(); 2];
    for (row, vi) in b.iter().zip(v) {
        out[0] = out[0] + row[0] * *vi;
        out[1] = out[1] + row[1] * *vi;
    }
    out
}

fn mat_mul<T: Real>(x: &Mat5<T>, y: &Mat5<T>) -> Mat5<T> {
    let mut out = [[T::zero(); 5]; 5];
    for i in 0..5 {
        for k in 0..5 {
            let xik = x[i][k];
            for j in 0..5 {
                out[i][j] = out[i][j] + xik * y[k][j];
            }
        }
    }
    out
}

fn check_len(expected: usize, got: usize) -> Result<(), MpcError> {
    if expected == got {
        Ok(())
    } else {
        Err(MpcError::DimensionMismatch { expected, got })
    }
}

/// Step-by-step recursion. Returns `xi(k+1) ..= xi(k+N)`.
pub fn rollout<T: Real>(
    sys: &ExtendedSystem<T>,
    xi0: &Vec5<T>,
    dw: &[[T; 2]],
) -> Result<Vec<Vec5<T>>, MpcError> {
    check_len(sys.a.len(), dw.len())?;
    check_len(sys.a.len(), sys.b.len())?;
    let mut xi = *xi0;
    Ok(sys
        .a
        .iter()
        .zip(&sys.b)
        .zip(dw)
        .map(|((a, b), u)| {
            let ax = mat_vec(a, &xi);
            let bu = input_vec(b, u);
            for k in 0..5 {
                xi[k] = ax[k] + bu[k];
            }
            xi
        })
        .collect())
}

/// Closed-form horizon prediction
///
/// ```text
/// xi(k+i) = Phi(i,0) xi(k) + sum_{j<i} Phi(i,j+1) B_xi(k+j) dw(k+j)
/// ```
///
/// with `Phi(i,j) = A_xi(k+i-1) ... A_xi(k+j)` and `Phi(i,i) = I`.
pub fn predict<T: Real>(
    a: &[Mat5<T>],
    b: &[Mat5x2<T>],
    xi0: &Vec5<T>,
    dw: &[[T; 2]],
) -> Result<Vec<Vec5<T>>, MpcError> {
    check_len(a.len(), b.len())?;
    check_len(a.len(), dw.len())?;
    let mut identity = [[T::zero(); 5]; 5];
    for (i, row) in identity.iter_mut().enumerate() {
        row[i] = T::one();
    }
    let mut out = Vec::with_capacity(a.len());
    for i in 1..=a.len() {
        let mut transition = identity;
        let mut xi = [T::zero(); 5];
        for j in (0..i).rev() {
            let forced = mat_vec(&transition, &input_vec(&b[j], &dw[j]));
            for k in 0..5 {
                xi[k] = xi[k] + forced[k];
            }
            transition = mat_mul(&transition, &a[j]);
        }
        let free = mat_vec(&transition, xi0);
        for k in 0..5 {
            xi[k] = xi[k] + free[k];
        }
        out.push(xi);
    }
    Ok(out)
}
