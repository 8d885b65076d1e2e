//! Minimal dense numerical core: matrices, the layer operations the model
//! needs, reverse-mode gradients for those operations, and the
//! adaptive-moment optimizer with decoupled weight decay.

mod optim;
mod tape;
mod tensor;

pub use optim::{optimizer_step, OptimizerConfig};
pub use tape::{forward_affine, NodeId, ParamBlock, ParamId, ParamSet, Tape};
pub use tensor::Tensor2;

#[cfg(test)]
mod gradcheck_tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Three affine+relu layers ending in a scalar mean-square loss.
    fn build_loss(ps: &ParamSet, input: &Tensor2, target: &Tensor2, ids: &[(ParamId, ParamId)]) -> f64 {
        let mut tape = Tape::new();
        let mut h = tape.constant(input.clone());
        for (i, (w, b)) in ids.iter().enumerate() {
            h = tape.affine(ps, h, *w, *b).unwrap();
            if i + 1 < ids.len() {
                h = tape.relu(h);
            }
        }
        let d = tape.sub_const(h, target).unwrap();
        let sq = tape.square(d);
        let loss = tape.mean(sq);
        tape.scalar(loss).unwrap()
    }

    #[test]
    fn three_layer_network_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dims = [4usize, 5, 3, 1];
        let mut ps = ParamSet::new();
        let mut ids = Vec::new();
        for l in 0..3 {
            let (din, dout) = (dims[l], dims[l + 1]);
            let w: Vec<f64> = (0..din * dout).map(|_| rng.random_range(-0.8..0.8)).collect();
            let b: Vec<f64> = (0..dout).map(|_| rng.random_range(-0.3..0.3)).collect();
            let wid = ps.add(format!("w{l}"), Tensor2::from_vec(din, dout, w).unwrap());
            let bid = ps.add(format!("b{l}"), Tensor2::from_vec(1, dout, b).unwrap());
            ids.push((wid, bid));
        }
        let input = Tensor2::from_vec(6, 4, (0..24).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let target = Tensor2::from_vec(6, 1, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

        // analytic gradients
        {
            let mut tape = Tape::new();
            let mut h = tape.constant(input.clone());
            for (i, (w, b)) in ids.iter().enumerate() {
                h = tape.affine(&ps, h, *w, *b).unwrap();
                if i + 1 < ids.len() {
                    h = tape.relu(h);
                }
            }
            let d = tape.sub_const(h, &target).unwrap();
            let sq = tape.square(d);
            let loss = tape.mean(sq);
            ps.zero_grads();
            tape.backward(loss, &mut ps).unwrap();
        }

        // central finite differences, h = 1e-5
        let h = 1e-5;
        for bi in 0..ps.len() {
            let n = ps.blocks()[bi].value.data().len();
            for ei in 0..n {
                let orig = ps.blocks()[bi].value.data()[ei];
                ps.blocks_mut()[bi].value.data_mut()[ei] = orig + h;
                let lp = build_loss(&ps, &input, &target, &ids);
                ps.blocks_mut()[bi].value.data_mut()[ei] = orig - h;
                let lm = build_loss(&ps, &input, &target, &ids);
                ps.blocks_mut()[bi].value.data_mut()[ei] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = ps.blocks()[bi].grad.data()[ei];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1.0);
                assert!(rel <= 1e-4, "block {bi} elem {ei}: analytic {an} vs fd {fd}");
            }
        }
    }
}
