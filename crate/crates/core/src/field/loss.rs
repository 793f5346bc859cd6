use crate::embed::ConceptEmbedding;
use crate::real::Real;

/// `L_l = -lambda_l <raw, gt>` and its gradient with respect to `raw`.
pub fn language_loss<T: Real>(raw: &[T], gt: &ConceptEmbedding<T>, lambda_l: T) -> (T, Vec<T>) {
    let loss = -lambda_l * crate::embed::dot(raw, &gt.vector);
    let grad = gt.vector.iter().map(|g| -lambda_l * *g).collect();
    (loss, grad)
}

/// Contrastive pair loss with gradients for both members.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLoss<T> {
    pub loss: T,
    pub grad_i: Vec<T>,
    pub grad_j: Vec<T>,
}

/// Pull same-mask pairs together, push others to at least `lambda_in` apart.
/// The subgradient is zero at `||d|| = 0` and exactly at the margin.
pub fn instance_loss<T: Real>(psi_i: &[T], psi_j: &[T], same_mask: bool, lambda_in: T) -> InstanceLoss<T> {
    let diff: Vec<T> = psi_i.iter().zip(psi_j).map(|(a, b)| *a - *b).collect();
    let dist = diff.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let zero = vec![T::zero(); diff.len()];
    let (loss, coef) = if same_mask {
        (dist, if dist > T::zero() { dist.recip() } else { T::zero() })
    } else if dist < lambda_in {
        let c = if dist > T::zero() { -dist.recip() } else { T::zero() };
        (lambda_in - dist, c)
    } else {
        (T::zero(), T::zero())
    };
    if coef == T::zero() {
        return InstanceLoss {
            loss,
            grad_i: zero.clone(),
            grad_j: zero,
        };
    }
    let grad_i: Vec<T> = diff.iter().map(|d| *d * coef).collect();
    let grad_j = grad_i.iter().map(|g| -*g).collect();
    InstanceLoss { loss, grad_i, grad_j }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> ConceptEmbedding<f64> {
        ConceptEmbedding::from_raw(v.to_vec()).unwrap()
    }

    #[test]
    fn language_loss_values() {
        let gt = unit(&[0.6, 0.8, 0.0]);
        assert!((language_loss(&gt.vector, &gt, 1.0).0 + 1.0).abs() < 1e-15);
        assert_eq!(language_loss(&[0.8, -0.6, 3.0], &gt, 1.0).0, 0.0);
    }

    #[test]
    fn language_grad_matches_differences() {
        let gt = unit(&[0.3, -0.2, 0.9, 0.1]);
        let raw = vec![0.5, 0.1, -0.4, 2.0];
        let (_, g) = language_loss(&raw, &gt, 1.7);
        let h = 1e-4;
        for i in 0..raw.len() {
            let mut p = raw.clone();
            let mut m = raw.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (language_loss(&p, &gt, 1.7).0 - language_loss(&m, &gt, 1.7).0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-12), "{fd} {}", g[i]);
        }
    }

    #[test]
    fn instance_loss_values() {
        let a = [0.2, 0.4];
        assert_eq!(instance_loss(&a, &a, true, 1.0).loss, 0.0);
        let l = instance_loss(&a, &a, false, 1.0);
        assert_eq!(l.loss, 1.0);
        assert!(l.grad_i.iter().all(|g| *g == 0.0));
        assert_eq!(instance_loss(&[0.0, 0.0], &[2.0, 0.0], false, 1.0).loss, 0.0);
        // exactly at the margin
        let m = instance_loss(&[0.0, 0.0], &[1.0, 0.0], false, 1.0);
        assert_eq!(m.loss, 0.0);
        assert!(m.grad_j.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn instance_grad_matches_differences() {
        let a = vec![0.1f64, -0.3, 0.25];
        let b = vec![-0.2, 0.1, 0.05];
        for same in [true, false] {
            let l = instance_loss(&a, &b, same, 1.0);
            let h = 1e-5;
            for i in 0..3 {
                let mut p = a.clone();
                let mut m = a.clone();
                p[i] += h;
                m[i] -= h;
                let fd = (instance_loss(&p, &b, same, 1.0).loss - instance_loss(&m, &b, same, 1.0).loss) / (2.0 * h);
                assert!((fd - l.grad_i[i]).abs() < 1e-7);
                assert!((l.grad_i[i] + l.grad_j[i]).abs() < 1e-15);
            }
        }
    }
}
