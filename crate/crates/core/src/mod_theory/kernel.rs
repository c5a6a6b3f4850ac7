//! Brute-force GP-limit kernel of the modular model, used as a test oracle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::models::{is_prime, mod_dataset};
use crate::{Error, Result};

/// `P² × P²` kernel indexed by `i = n P + m`.
pub type KernelMatrix = DMatrix<f64>;

const MAX_P: usize = 31;

fn check_p(p: usize) -> Result<()> {
    if p < 3 || !is_prime(p) {
        return Err(Error::config("p", format!("must be a prime ≥ 3, got {p}")));
    }
    if p > MAX_P {
        return Err(Error::config("p", format!("brute-force kernel is limited to P ≤ {MAX_P}, got {p}")));
    }
    Ok(())
}

/// `Q = σ_a² [K_ii K_jj + 2 K_ij²]` with `K_{nm,n'm'} = δ_{nn'} + δ_{mm'}`.
pub fn nngp_kernel(p: usize, sigma_a2: f64) -> Result<KernelMatrix> {
    check_p(p)?;
    let n = p * p;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (ni, mi) = (i / p, i % p);
        let (nj, mj) = (j / p, j % p);
        let k = f64::from(u8::from(ni == nj) + u8::from(mi == mj));
        // K_ii = 2 on the diagonal
        sigma_a2 * (4.0 + 2.0 * k * k)
    }))
}

/// `φ_{k,k'}(n, m) = P⁻¹ e^{2πi(kn + k'm)/P}`, returned in order `k P + k'`.
pub fn fourier_basis(p: usize) -> Vec<DVector<Complex64>> {
    let inv = 1.0 / p as f64;
    let mut out = Vec::with_capacity(p * p);
    for k in 0..p {
        for kp in 0..p {
            out.push(DVector::from_fn(p * p, |i, _| {
                let (n, m) = (i / p, i % p);
                let phase = 2.0 * PI * (((k * n + kp * m) % p) as f64) * inv;
                Complex64::from_polar(inv, phase)
            }));
        }
    }
    out
}

/// Target vectors `y^p` over all pairs, one per output `p`.
pub fn target_vectors(p: usize) -> Result<Vec<DVector<f64>>> {
    let data = mod_dataset(p)?;
    Ok((0..p).map(|q| DVector::from_iterator(p * p, data.labels.column(q).iter().copied())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub p: usize,
    pub checks: Vec<CheckResult>,
    /// Distinct eigenvalues with their multiplicities, ascending.
    pub spectrum: Vec<(f64, usize)>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

fn check(name: impl Into<String>, residual: f64, tolerance: f64) -> CheckResult {
    CheckResult { name: name.into(), passed: residual.is_finite() && residual < tolerance, residual, tolerance }
}

/// Max of `|Q[π(i), π(j)] − Q[i, j]|`, i.e. the commutator with the permutation `π`.
fn permutation_commutator(q: &KernelMatrix, perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((q[(perm[i], perm[j])] - q[(i, j)]).abs());
        }
    }
    worst
}

fn complex_apply(q: &KernelMatrix, v: &DVector<Complex64>) -> DVector<Complex64> {
    let re = q * v.map(|z| z.re);
    let im = q * v.map(|z| z.im);
    DVector::from_fn(v.len(), |i, _| Complex64::new(re[i], im[i]))
}

/// Is `k` in the zero group, the single-nonzero group or the double-nonzero group.
fn mode_group(k: usize, kp: usize) -> usize {
    match (k == 0, kp == 0) {
        (true, true) => 0,
        (true, false) | (false, true) => 1,
        (false, false) => 2,
    }
}

/// Translation, dilation, Fourier-eigenvector, spectrum and target checks.
pub fn verify_symmetries(q: &KernelMatrix, p: usize) -> Result<SymmetryReport> {
    check_p(p)?;
    let n = p * p;
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Shape { expected: n, got: q.nrows() });
    }
    let scale = q.abs().max().max(f64::MIN_POSITIVE);
    let tol = 1e-10;
    let mut checks = Vec::new();

    let mut comm = 0.0_f64;
    let t1: Vec<usize> = (0..n).map(|i| ((i / p + 1) % p) * p + i % p).collect();
    let t2: Vec<usize> = (0..n).map(|i| (i / p) * p + (i % p + 1) % p).collect();
    checks.push(check("commutes_T1", permutation_commutator(q, &t1) / scale, tol));
    checks.push(check("commutes_T2", permutation_commutator(q, &t2) / scale, tol));
    for c in 2..p {
        let dil: Vec<usize> = (0..n).map(|i| ((c * (i / p)) % p) * p + (c * (i % p)) % p).collect();
        comm = comm.max(permutation_commutator(q, &dil) / scale);
    }
    checks.push(check("commutes_Cq", comm, tol));

    let basis = fourier_basis(p);
    let mut eig_res = 0.0_f64;
    let mut rayleigh = vec![Vec::new(); 3];
    for (idx, phi) in basis.iter().enumerate() {
        let qphi = complex_apply(q, phi);
        let lambda = phi.dotc(&qphi).re;
        let r = (&qphi - phi * Complex64::new(lambda, 0.0)).norm() / scale;
        eig_res = eig_res.max(r);
        rayleigh[mode_group(idx / p, idx % p)].push(lambda);
    }
    checks.push(check("fourier_eigenvectors", eig_res, tol));

    let eig = SymmetricEigen::new(q.clone());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    let cluster_tol = 1e-8 * scale * n as f64;
    let mut spectrum: Vec<(f64, usize)> = Vec::new();
    for v in values {
        match spectrum.last_mut() {
            Some((last, count)) if (v - *last).abs() <= cluster_tol => {
                *last = (*last * *count as f64 + v) / (*count as f64 + 1.0);
                *count += 1;
            }
            _ => spectrum.push((v, 1)),
        }
    }
    let mut mults: Vec<usize> = spectrum.iter().map(|s| s.1).collect();
    mults.sort_unstable();
    let mut expected = vec![1, 2 * (p - 1), (p - 1) * (p - 1)];
    expected.sort_unstable();
    // groups must also be internally degenerate
    let spread = rayleigh
        .iter()
        .map(|g| {
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max)
        / scale;
    let structure_ok = spectrum.len() == 3 && mults == expected && spread < tol;
    checks.push(CheckResult {
        name: "three_eigenvalues".into(),
        passed: structure_ok,
        residual: spread,
        tolerance: tol,
    });

    let mut target_res = 0.0_f64;
    for y in target_vectors(p)? {
        let qy = q * &y;
        let lambda = y.dot(&qy) / y.dot(&y);
        target_res = target_res.max((&qy - &y * lambda).norm() / y.norm() / scale);
    }
    checks.push(check("target_eigenvector", target_res, tol));

    Ok(SymmetryReport { p, checks, spectrum })
}

/// Rayleigh quotient of the GP kernel on the target subspace.
pub fn gp_target_eigenvalue(p: usize, sigma_a2: f64) -> Result<f64> {
    let q = nngp_kernel(p, sigma_a2)?;
    let y = &target_vectors(p)?[0];
    Ok(y.dot(&(&q * y)) / y.dot(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stream_rng;
    use rand::Rng;

    #[test]
    fn kernel_entries() {
        let q = nngp_kernel(5, 0.5).unwrap();
        assert_eq!(q[(0, 0)], 6.0);
        // (0,0) vs (0,3): shares n only
        assert_eq!(q[(0, 3)], 3.0);
        // (0,0) vs (1,2): disjoint
        assert_eq!(q[(0, 7)], 2.0);
        assert!(nngp_kernel(9, 1.0).is_err());
        assert!(nngp_kernel(37, 1.0).is_err());
    }

    #[test]
    fn basis_is_orthonormal() {
        let p = 5;
        let basis = fourier_basis(p);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let ip = a.dotc(b);
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip.re - expected).abs() < 1e-12 && ip.im.abs() < 1e-12);
            }
        }
        assert!(basis[0].iter().all(|z| (z.re - 0.2).abs() < 1e-15 && z.im.abs() < 1e-15));
    }

    #[test]
    fn target_spans_diagonal_modes() {
        let p = 7;
        let basis = fourier_basis(p);
        let ys = target_vectors(p).unwrap();
        for (q, y) in ys.iter().enumerate() {
            let mut recon = DVector::<Complex64>::zeros(p * p);
            for k in 1..p {
                let coef = Complex64::from_polar(1.0, -2.0 * PI * ((k * q) % p) as f64 / p as f64);
                recon += &basis[k * p + k] * coef;
            }
            for i in 0..p * p {
                assert!((recon[i].re - y[i]).abs() < 1e-12 && recon[i].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gp_kernel_passes_for_small_primes() {
        for (p, mults) in [(5, [1, 8, 16]), (7, [1, 12, 36])] {
            let report = verify_symmetries(&nngp_kernel(p, 1.0).unwrap(), p).unwrap();
            assert!(report.passed(), "{report:?}");
            let mut m: Vec<usize> = report.spectrum.iter().map(|s| s.1).collect();
            m.sort_unstable();
            assert_eq!(m, mults.to_vec());
        }
    }

    #[test]
    fn perturbed_kernel_fails_commutator() {
        let p = 5;
        let mut q = nngp_kernel(p, 1.0).unwrap();
        let mut rng = stream_rng(3, 0);
        for i in 0..p * p {
            for j in 0..=i {
                let e = 1e-3 * rng.random::<f64>();
                q[(i, j)] += e;
                if i != j {
                    q[(j, i)] += e;
                }
            }
        }
        let report = verify_symmetries(&q, p).unwrap();
        assert!(!report.passed());
        assert!(report.failures().contains(&"commutes_T1"));
    }
}
