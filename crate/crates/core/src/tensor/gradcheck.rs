//! Central finite-difference gradient checking.
//!
//! `check` rebuilds the graph from perturbed leaf values and compares the
//! numerical gradient `(f(x+h) - f(x-h)) / 2h` against the reverse-mode
//! gradient, elementwise. The error measure is relative with a unit
//! floor: `|fd - bp| / max(|fd|, |bp|, 1)`.

use super::{Graph, NodeId, Tensor, TensorError};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Largest elementwise error across all leaves.
    pub max_err: f64,
    /// (leaf index, element index) where it occurred.
    pub at: (usize, usize),
}

/// Compare reverse-mode gradients of a scalar-valued graph against central
/// finite differences, for every element of every leaf.
///
/// `build` must construct the same computation from the given leaf nodes
/// each time it is called.
pub fn check<F>(leaves: &[Tensor<f64>], step: f64, build: F) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId, TensorError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = build(&mut g, &ids)?;
        Ok(g.value(out).item())
    };

    let mut graph = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| graph.leaf(t.clone(), true)).collect();
    let out = build(&mut graph, &ids)?;
    graph.backward(out)?;

    let mut result = GradCheck {
        max_err: 0.0,
        at: (0, 0),
    };
    let mut work: Vec<Tensor<f64>> = leaves.to_vec();
    for (li, leaf) in leaves.iter().enumerate() {
        let bp = graph
            .grad(ids[li])
            .map(Tensor::into_data)
            .unwrap_or_else(|| vec![0.0; leaf.shape().numel()]);
        for ei in 0..leaf.shape().numel() {
            let orig = work[li].data()[ei];
            work[li].data_mut()[ei] = orig + step;
            let plus = eval(&work)?;
            work[li].data_mut()[ei] = orig - step;
            let minus = eval(&work)?;
            work[li].data_mut()[ei] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let err = (fd - bp[ei]).abs() / fd.abs().max(bp[ei].abs()).max(1.0);
            if err > result.max_err {
                result.max_err = err;
                result.at = (li, ei);
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(rng: &mut StdRng, shape: Shape) -> Tensor<f64> {
        let n = shape.numel();
        let data = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        Tensor::new(shape, data).unwrap()
    }

    // Gradient oracle for every op: central finite differences at f64.
    // Each op is exercised through a scalar reduction of its output.

    #[test]
    fn grad_matmul_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let a = rand_tensor(&mut rng, Shape::matrix(3, 4));
            let b = rand_tensor(&mut rng, Shape::matrix(4, 2));
            let r = check(&[a, b], DEFAULT_STEP, |g, ids| {
                let m = g.matmul(ids[0], ids[1])?;
                Ok(g.sum(m))
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "matmul grad err {}", r.max_err);
        }
    }

    #[test]
    fn grad_matvec_and_bilinear() {
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..20 {
            let a = rand_tensor(&mut rng, Shape::matrix(3, 5));
            let x = rand_tensor(&mut rng, Shape::vector(5));
            let r = check(&[a, x], DEFAULT_STEP, |g, ids| {
                let y = g.matvec(ids[0], ids[1])?;
                Ok(g.sum(y))
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "matvec grad err {}", r.max_err);

            let xv = rand_tensor(&mut rng, Shape::vector(3));
            let w = rand_tensor(&mut rng, Shape::matrix(3, 2));
            let p = rand_tensor(&mut rng, Shape::vector(2));
            let r = check(&[xv, w, p], DEFAULT_STEP, |g, ids| {
                g.bilinear(ids[0], ids[1], ids[2])
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "bilinear grad err {}", r.max_err);
        }
    }

    #[test]
    fn grad_elementwise_and_reductions() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..20 {
            let a = rand_tensor(&mut rng, Shape::vector(6));
            let b = rand_tensor(&mut rng, Shape::vector(6));
            let r = check(&[a.clone(), b], DEFAULT_STEP, |g, ids| {
                let s = g.add(ids[0], ids[1])?;
                let m = g.mul(s, ids[0])?;
                let sc = g.scale(m, 0.7);
                let t = g.tanh(sc);
                let sg = g.sigmoid(t);
                Ok(g.mean(sg))
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "elementwise grad err {}", r.max_err);

            // log over strictly positive inputs
            let pos = Tensor::vector(
                (0..5)
                    .map(|_| rng.random_range(0.2..2.0))
                    .collect::<Vec<f64>>(),
            );
            let r = check(&[pos], DEFAULT_STEP, |g, ids| {
                let l = g.log(ids[0], 1e-12);
                Ok(g.sum(l))
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "log grad err {}", r.max_err);
        }
    }

    #[test]
    fn grad_shape_ops() {
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..10 {
            let a = rand_tensor(&mut rng, Shape::vector(3));
            let b = rand_tensor(&mut rng, Shape::vector(3));
            let c = rand_tensor(&mut rng, Shape::vector(2));
            let r = check(&[a, b, c], DEFAULT_STEP, |g, ids| {
                let rows = g.stack_rows(&[ids[0], ids[1]])?;
                let cols = g.stack_cols(&[ids[0], ids[1]])?;
                let t = g.transpose(cols)?;
                let both = g.add(rows, t)?;
                let r0 = g.row(both, 1)?;
                let cat = g.concat(&[r0, ids[2]])?;
                let seg = g.segment(cat, 1, 3)?;
                let resh = g.reshape(seg, Shape::matrix(3, 1))?;
                Ok(g.sum(resh))
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "shape op grad err {}", r.max_err);
        }
    }

    #[test]
    fn grad_softmax_squash_and_gather() {
        let mut rng = StdRng::seed_from_u64(15);
        for _ in 0..20 {
            let logits = rand_tensor(&mut rng, Shape::matrix(3, 4));
            let r = check(&[logits], DEFAULT_STEP, |g, ids| {
                let sm = g.softmax(ids[0])?;
                let picked = g.pick_per_row(sm, &[1, 0, 3])?;
                let lg = g.log(picked, 1e-12);
                let avg = g.mean(lg);
                Ok(g.scale(avg, -1.0))
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "softmax/nll grad err {}", r.max_err);

            let s = rand_tensor(&mut rng, Shape::matrix(2, 3));
            let r = check(&[s], DEFAULT_STEP, |g, ids| {
                let v = g.squash(ids[0], 1e-9)?;
                let w = g.mul(v, v)?;
                Ok(g.sum(w))
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "squash grad err {}", r.max_err);
        }
    }

    #[test]
    fn grad_capsule_contractions() {
        let mut rng = StdRng::seed_from_u64(16);
        for _ in 0..20 {
            let (n, m, k) = (3, 2, 2);
            let c = rand_tensor(&mut rng, Shape::matrix(n, m));
            let u = rand_tensor(&mut rng, Shape::cube(n, m, k));
            let a = rand_tensor(&mut rng, Shape::matrix(m, k));
            let w = rand_tensor(&mut rng, Shape::vector(k));
            let r = check(&[c, u, a, w], DEFAULT_STEP, |g, ids| {
                let s = g.coupling_sum(ids[0], ids[1])?;
                let d1 = g.per_role_dot(ids[2], ids[1])?;
                let d2 = g.dot_capsules(ids[3], ids[1])?;
                let mc = g.mean_capsules(ids[1])?;
                let t1 = g.add(d1, d2)?;
                let t2 = g.add(t1, mc)?;
                let s1 = g.sum(t2);
                let s2 = g.sum(s);
                g.add(s1, s2)
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "capsule contraction grad err {}", r.max_err);
        }
    }

    #[test]
    fn grad_row_reductions() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let a = rand_tensor(&mut rng, Shape::matrix(3, 4));
            let r = check(&[a], DEFAULT_STEP, |g, ids| {
                let sm = g.softmax(ids[0])?;
                let t = g.transpose(sm)?;
                let mx = g.row_max(t)?;
                let sums = g.row_sum(t)?;
                let lg = g.log(mx, 1e-12);
                let m1 = g.mean(lg);
                let m2 = g.mean(sums);
                g.add(m1, m2)
            })
            .unwrap();
            assert!(r.max_err <= 1e-6, "row reduction grad err {}", r.max_err);
        }
    }
}
