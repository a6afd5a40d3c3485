//! Gradient-norm-preserving activations and their vector-Jacobian products.
//!
//! GroupSort is a blockwise permutation, so it is 1-Lipschitz in every
//! p-norm and keeps the L1 certificate intact. Householder is an isometry in
//! the 2-norm only; its reflection can have an L1 operator norm above 1, so a
//! network using it is not covered by the L1 certificate.

use crate::error::{Error, Result};
use crate::tensor::{dot, Vector};

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ActivationSpec {
    Identity,
    /// Sorts each contiguous block of `group` entries ascending.
    GroupSort { group: usize },
    /// Identity when `z·v > 0`, reflection `z(I − 2vvᵀ)` otherwise.
    Householder { v: Vector },
    /// Pointwise ReLU. Not gradient-norm preserving; kept as a baseline.
    Relu,
}

impl ActivationSpec {
    pub fn householder(v: Vector) -> Result<Self> {
        check_unit(&v)?;
        Ok(ActivationSpec::Householder { v })
    }

    /// Checks that the activation can act on vectors of length `width`.
    pub fn validate(&self, width: usize) -> Result<()> {
        match self {
            ActivationSpec::GroupSort { group } => {
                if *group == 0 || width % group != 0 {
                    return Err(Error::shape(format!(
                        "width {width} is not divisible by group size {group}"
                    )));
                }
            }
            ActivationSpec::Householder { v } => {
                check_unit(v)?;
                if v.len() != width {
                    return Err(Error::shape(format!(
                        "householder vector has length {}, layer width is {width}",
                        v.len()
                    )));
                }
            }
            ActivationSpec::Identity | ActivationSpec::Relu => {}
        }
        Ok(())
    }

    /// Whether the activation is 1-Lipschitz in the L1 norm.
    pub fn preserves_l1_certificate(&self) -> bool {
        !matches!(self, ActivationSpec::Householder { .. })
    }

    pub(crate) fn forward(&self, z: &[f64]) -> Vec<f64> {
        match self {
            ActivationSpec::Identity => z.to_vec(),
            ActivationSpec::GroupSort { group } => {
                let mut out = vec![0.0; z.len()];
                for_each_block_perm(z, *group, |dst, src| out[dst] = z[src]);
                out
            }
            ActivationSpec::Householder { v } => reflect_if(z, v, dot(z, v) <= 0.0),
            ActivationSpec::Relu => z.iter().map(|x| x.max(0.0)).collect(),
        }
    }

    /// VJP at pre-activation `z`.
    pub(crate) fn backward(&self, z: &[f64], upstream: &[f64]) -> Vec<f64> {
        match self {
            ActivationSpec::Identity => upstream.to_vec(),
            ActivationSpec::GroupSort { group } => {
                let mut out = vec![0.0; z.len()];
                for_each_block_perm(z, *group, |dst, src| out[src] = upstream[dst]);
                out
            }
            ActivationSpec::Householder { v } => reflect_if(upstream, v, dot(z, v) <= 0.0),
            ActivationSpec::Relu => z
                .iter()
                .zip(upstream)
                .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                .collect(),
        }
    }
}

/// Calls `f(dst, src)` for the stable ascending sort of each block: output
/// position `dst` receives input position `src`.
fn for_each_block_perm(x: &[f64], group: usize, mut f: impl FnMut(usize, usize)) {
    let mut idx: Vec<usize> = Vec::with_capacity(group);
    for start in (0..x.len()).step_by(group) {
        idx.clear();
        idx.extend(start..start + group);
        if group == 2 {
            if x[start + 1] < x[start] {
                idx.swap(0, 1);
            }
        } else {
            idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        }
        for (offset, &src) in idx.iter().enumerate() {
            f(start + offset, src);
        }
    }
}

fn reflect_if(x: &[f64], v: &[f64], reflect: bool) -> Vec<f64> {
    if !reflect {
        return x.to_vec();
    }
    let p = 2.0 * dot(x, v);
    x.iter().zip(v).map(|(a, b)| a - p * b).collect()
}

fn check_unit(v: &Vector) -> Result<()> {
    let n = v.norm2();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::config(format!(
            "householder vector must have unit 2-norm, got {n}"
        )));
    }
    Ok(())
}

fn check_group(len: usize, group: usize) -> Result<()> {
    ActivationSpec::GroupSort { group }.validate(len)
}

pub fn groupsort(x: &Vector, group: usize) -> Result<Vector> {
    check_group(x.len(), group)?;
    Ok(Vector::from_raw(ActivationSpec::GroupSort { group }.forward(x)))
}

pub fn groupsort_vjp(x: &Vector, upstream: &Vector, group: usize) -> Result<Vector> {
    check_group(x.len(), group)?;
    if upstream.len() != x.len() {
        return Err(Error::shape("groupsort_vjp: upstream length differs from input"));
    }
    Ok(Vector::from_raw(
        ActivationSpec::GroupSort { group }.backward(x, upstream),
    ))
}

pub fn householder(z: &Vector, v: &Vector) -> Result<Vector> {
    check_unit(v)?;
    if z.len() != v.len() {
        return Err(Error::shape("householder: z and v lengths differ"));
    }
    Ok(Vector::from_raw(reflect_if(z, v, dot(z, v) <= 0.0)))
}

pub fn householder_vjp(z: &Vector, v: &Vector, upstream: &Vector) -> Result<Vector> {
    check_unit(v)?;
    if z.len() != v.len() || upstream.len() != v.len() {
        return Err(Error::shape("householder_vjp: length mismatch"));
    }
    Ok(Vector::from_raw(reflect_if(upstream, v, dot(z, v) <= 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{rand_uniform, Rng};
    use proptest::prelude::*;

    fn v(data: &[f64]) -> Vector {
        Vector::from_slice(data).unwrap()
    }

    fn unit(rng: &mut Rng, n: usize) -> Vector {
        let raw: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        v(&raw.iter().map(|x| x / norm).collect::<Vec<_>>())
    }

    #[test]
    fn groupsort_examples() {
        assert_eq!(groupsort(&v(&[3.0, 1.0, 2.0, 5.0]), 2).unwrap().as_slice(), &[1.0, 3.0, 2.0, 5.0]);
        let sorted = v(&[-1.0, 0.0, 2.0, 7.0, 8.0, 9.0]);
        for g in [1, 2, 3, 6] {
            assert_eq!(groupsort(&sorted, g).unwrap(), sorted);
        }
        assert!(matches!(groupsort(&v(&[1.0, 2.0, 3.0]), 2), Err(Error::Shape(_))));
    }

    #[test]
    fn groupsort_matches_block_sort_oracle() {
        let mut rng = Rng::new(12);
        let x = rand_uniform(&mut rng, 12, -3.0, 3.0).unwrap();
        let got = groupsort(&x, 3).unwrap();
        let mut expected = x.to_vec();
        for block in expected.chunks_mut(3) {
            block.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        assert_eq!(got.as_slice(), expected.as_slice());
    }

    #[test]
    fn groupsort_vjp_examples() {
        assert_eq!(
            groupsort_vjp(&v(&[3.0, 1.0]), &v(&[10.0, 20.0]), 2).unwrap().as_slice(),
            &[20.0, 10.0]
        );
        let up = v(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(groupsort_vjp(&v(&[0.0, 1.0, 2.0, 3.0]), &up, 4).unwrap(), up);
        // ties keep index order, so the Jacobian is the identity there
        assert_eq!(groupsort_vjp(&v(&[1.0, 1.0]), &v(&[5.0, 6.0]), 2).unwrap().as_slice(), &[5.0, 6.0]);
    }

    #[test]
    fn groupsort_vjp_matches_finite_differences() {
        let mut rng = Rng::new(31);
        let x = rand_uniform(&mut rng, 12, -1.0, 1.0).unwrap();
        let up = rand_uniform(&mut rng, 12, -1.0, 1.0).unwrap();
        let analytic = groupsort_vjp(&x, &up, 3).unwrap();
        let h = 1e-7;
        for i in 0..12 {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            let fp = dot(&groupsort(&v(&p), 3).unwrap(), &up);
            let fm = dot(&groupsort(&v(&m), 3).unwrap(), &up);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - analytic[i]).abs() <= 1e-7 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn householder_examples() {
        let vv = v(&[0.0, 1.0]);
        assert_eq!(householder(&v(&[1.0, -2.0]), &vv).unwrap().as_slice(), &[1.0, 2.0]);
        assert_eq!(householder(&v(&[1.0, 3.0]), &vv).unwrap().as_slice(), &[1.0, 3.0]);
        assert!(matches!(householder(&v(&[1.0, 3.0]), &v(&[0.0, 2.0])), Err(Error::Config(_))));
        assert!(ActivationSpec::householder(v(&[0.6, 0.8])).is_ok());
    }

    #[test]
    fn householder_branches_agree_on_boundary() {
        let mut rng = Rng::new(40);
        for _ in 0..20 {
            let vv = unit(&mut rng, 5);
            let raw = rand_uniform(&mut rng, 5, -1.0, 1.0).unwrap();
            let p = dot(&raw, &vv);
            let z: Vec<f64> = raw.iter().zip(vv.iter()).map(|(a, b)| a - p * b).collect();
            let reflected = reflect_if(&z, &vv, true);
            for (a, b) in z.iter().zip(&reflected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn householder_vjp_examples_and_fd() {
        let vv = v(&[0.0, 1.0]);
        let up = v(&[3.0, 4.0]);
        assert_eq!(householder_vjp(&v(&[1.0, 1.0]), &vv, &up).unwrap(), up);
        assert_eq!(householder_vjp(&v(&[1.0, -1.0]), &vv, &up).unwrap().as_slice(), &[3.0, -4.0]);
        // boundary takes the reflection
        assert_eq!(householder_vjp(&v(&[1.0, 0.0]), &vv, &up).unwrap().as_slice(), &[3.0, -4.0]);

        let mut rng = Rng::new(41);
        for _ in 0..10 {
            let vv = unit(&mut rng, 4);
            let z = rand_uniform(&mut rng, 4, -1.0, 1.0).unwrap();
            if dot(&z, &vv).abs() < 1e-3 {
                continue;
            }
            let up = rand_uniform(&mut rng, 4, -1.0, 1.0).unwrap();
            let analytic = householder_vjp(&z, &vv, &up).unwrap();
            let h = 1e-6;
            for i in 0..4 {
                let mut p = z.to_vec();
                let mut m = z.to_vec();
                p[i] += h;
                m[i] -= h;
                let fd = (dot(&householder(&v(&p), &vv).unwrap(), &up)
                    - dot(&householder(&v(&m), &vv).unwrap(), &up))
                    / (2.0 * h);
                assert!((fd - analytic[i]).abs() <= 1e-7 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn householder_jacobian_is_orthogonal() {
        let mut rng = Rng::new(43);
        let vv = unit(&mut rng, 4);
        // Jacobian of the reflected branch: rows are e_i·(I − 2vvᵀ)
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let mut e = vec![0.0; 4];
                e[i] = 1.0;
                reflect_if(&e, &vv, true)
            })
            .collect();
        for i in 0..4 {
            for j in 0..4 {
                let jtj: f64 = (0..4).map(|k| rows[k][i] * rows[k][j]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((jtj - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_baseline() {
        let act = ActivationSpec::Relu;
        assert_eq!(act.forward(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(act.backward(&[-1.0, 2.0], &[5.0, 6.0]), vec![0.0, 6.0]);
        assert!(act.preserves_l1_certificate());
        assert!(!ActivationSpec::Householder { v: v(&[1.0]) }.preserves_l1_certificate());
    }

    fn pnorm(d: &[f64], p: u8) -> f64 {
        match p {
            1 => d.iter().map(|x| x.abs()).sum(),
            2 => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
            _ => d.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    proptest! {
        #[test]
        fn groupsort_is_one_lipschitz(
            pair in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 12),
            group in prop::sample::select(vec![1usize, 2, 3, 4, 6, 12]),
        ) {
            let x: Vec<f64> = pair.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pair.iter().map(|p| p.1).collect();
            let act = ActivationSpec::GroupSort { group };
            let (sx, sy) = (act.forward(&x), act.forward(&y));
            let dout: Vec<f64> = sx.iter().zip(&sy).map(|(a, b)| a - b).collect();
            let din: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            for p in [1u8, 2, 3] {
                prop_assert!(pnorm(&dout, p) <= pnorm(&din, p) * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn groupsort_vjp_preserves_block_multisets(
            x in prop::collection::vec(-5.0f64..5.0, 8),
            up in prop::collection::vec(-5.0f64..5.0, 8),
        ) {
            let out = ActivationSpec::GroupSort { group: 4 }.backward(&x, &up);
            for (a, b) in out.chunks(4).zip(up.chunks(4)) {
                let mut a = a.to_vec();
                let mut b = b.to_vec();
                a.sort_by(f64::total_cmp);
                b.sort_by(f64::total_cmp);
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn householder_preserves_two_norm(
            z in prop::collection::vec(-5.0f64..5.0, 6),
            raw in prop::collection::vec(0.1f64..1.0, 6),
        ) {
            let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let vv = Vector::new(raw.iter().map(|x| x / n).collect()).unwrap();
            let zv = Vector::new(z).unwrap();
            let out = householder(&zv, &vv).unwrap();
            prop_assert!((out.norm2() - zv.norm2()).abs() <= 1e-12 * (1.0 + zv.norm2()));
        }
    }
}
