//! Minimal dense reverse-mode automatic differentiation, neural building
//! blocks and the Adam optimizer.

pub mod adam;
pub mod checkpoint;
pub mod fd;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use fd::{finite_diff_grad, max_relative_error};
pub use nn::{Gru, GruParams, Linear, Mlp, MlpParams};
pub use tape::{Gradients, Index, Tape, Var};
pub use tensor::{log_sum_exp, sigmoid, softmax, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn simple_values_and_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::row(vec![0.0]));
        let y = tape.sigmoid(x);
        assert_eq!(tape.value(y).item(), 0.5);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.25]);

        let mut tape = Tape::new();
        let x = tape.param(&Tensor::row(vec![3.0]));
        let y = tape.scale(x, 2.0);
        let y = tape.relu(y);
        let loss = tape.sum(y);
        assert_eq!(tape.backward(loss).unwrap().get(x).unwrap(), &[2.0]);

        let mut tape = Tape::new();
        let v = tape.constant(Tensor::row(vec![0.0, 0.0]));
        let s = tape.softmax(v).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
        let a = tape.constant(Tensor::row(vec![-3.25]));
        let l = tape.log_sum_exp(a, 1).unwrap();
        assert_eq!(tape.value(l).item(), -3.25);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::row(vec![0.0]));
        let y = tape.relu(x);
        let loss = tape.sum(y);
        assert_eq!(tape.backward(loss).unwrap().get(x).unwrap(), &[0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(&Tensor::row(vec![1.0, 2.0]));
        let y = tape.exp(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(tape.add(a, c).is_err());
        let idx: Index = Arc::from(vec![0usize, 5]);
        assert!(tape.gather(a, &idx).is_err());
    }

    #[test]
    fn constants_are_not_recorded() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::row(vec![1.0]));
        let b = tape.exp(a);
        assert!(!tape.requires_grad(b));
        let p = tape.param(&Tensor::row(vec![1.0]));
        let c = tape.add(b, p).unwrap();
        assert!(tape.requires_grad(c));
    }

    /// Random input away from rectifier kinks and log's pole.
    fn sample(rng: &mut ChaCha8Rng, shape: &[usize], positive: bool) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| loop {
                let x: f64 = rng.gen_range(-2.0..2.0);
                let x = if positive { x.abs() + 0.1 } else { x };
                if x.abs() >= 1e-3 {
                    break x;
                }
            })
            .collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

    /// Checks every input's adjoint of `sum(w ∘ op(inputs))` against central
    /// differences; `w` is a fixed random weighting so the reduction does not
    /// hide errors.
    fn check(rng: &mut ChaCha8Rng, inputs: Vec<Tensor>, build: &Builder) {
        let out_shape = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let y = build(&mut tape, &vars);
            tape.shape(y).to_vec()
        };
        let weights = sample(rng, &out_shape, false);
        let eval = |ins: &[Tensor], grads: bool| -> (f64, Vec<Vec<f64>>) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ins
                .iter()
                .map(|t| if grads { tape.param(t) } else { tape.constant(t.clone()) })
                .collect();
            let y = build(&mut tape, &vars);
            let w = tape.constant(weights.clone());
            let wy = tape.mul(y, w).unwrap();
            let loss = tape.sum(wy);
            let value = tape.value(loss).item();
            if !grads {
                return (value, Vec::new());
            }
            let g = tape.backward(loss).unwrap();
            let gs = vars
                .iter()
                .zip(ins)
                .map(|(v, t)| g.get(*v).map_or(vec![0.0; t.numel()], <[f64]>::to_vec))
                .collect();
            (value, gs)
        };
        let (_, analytic) = eval(&inputs, true);
        for (k, input) in inputs.iter().enumerate() {
            let numeric = finite_diff_grad(
                |probe| {
                    let mut ins = inputs.clone();
                    ins[k] = probe.clone();
                    eval(&ins, false).0
                },
                input,
                1e-6,
            );
            let err = max_relative_error(&analytic[k], numeric.data(), 1e-3);
            assert!(err < 1e-4, "input {k}: relative error {err}");
        }
    }

    #[test]
    fn primitive_adjoints_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..50 {
            let r = rng.gen_range(1..5);
            let c = rng.gen_range(1..5);
            let k = rng.gen_range(1..5);
            let m = |rng: &mut ChaCha8Rng| sample(rng, &[r, c], false);
            let pos = |rng: &mut ChaCha8Rng| sample(rng, &[r, c], true);
            let idx: Index = Arc::from((0..r + 2).map(|i| (i * 7 + trial) % r).collect::<Vec<_>>());
            let seg: Index = Arc::from((0..r).map(|i| (i + trial) % 2).collect::<Vec<_>>());
            let cases: Vec<(Vec<Tensor>, Builder)> = vec![
                (
                    vec![m(&mut rng), sample(&mut rng, &[c, k], false)],
                    Box::new(|t, v| t.matmul(v[0], v[1]).unwrap()),
                ),
                (
                    vec![m(&mut rng), m(&mut rng)],
                    Box::new(|t, v| t.add(v[0], v[1]).unwrap()),
                ),
                (
                    vec![m(&mut rng), sample(&mut rng, &[1, c], false)],
                    Box::new(|t, v| t.sub(v[0], v[1]).unwrap()),
                ),
                (
                    vec![m(&mut rng), sample(&mut rng, &[r, 1], false)],
                    Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
                ),
                (
                    vec![m(&mut rng), m(&mut rng)],
                    Box::new(|t, v| t.mul(v[0], v[1]).unwrap()),
                ),
                (
                    vec![m(&mut rng), sample(&mut rng, &[r, k], false)],
                    Box::new(|t, v| t.concat(&[v[0], v[1]], 1).unwrap()),
                ),
                (
                    vec![m(&mut rng), sample(&mut rng, &[k, c], false)],
                    Box::new(|t, v| t.concat(&[v[0], v[1]], 0).unwrap()),
                ),
                (vec![m(&mut rng)], Box::new(move |t, v| t.gather(v[0], &idx).unwrap())),
                (
                    vec![m(&mut rng)],
                    Box::new(move |t, v| t.segment_sum(v[0], &seg, 2).unwrap()),
                ),
                (vec![m(&mut rng)], Box::new(|t, v| t.relu(v[0]))),
                (vec![m(&mut rng)], Box::new(|t, v| t.sigmoid(v[0]))),
                (vec![m(&mut rng)], Box::new(|t, v| t.tanh(v[0]))),
                (vec![m(&mut rng)], Box::new(|t, v| t.softmax(v[0]).unwrap())),
                (vec![pos(&mut rng)], Box::new(|t, v| t.log(v[0]))),
                (vec![m(&mut rng)], Box::new(|t, v| t.exp(v[0]))),
                (vec![m(&mut rng)], Box::new(|t, v| t.sum(v[0]))),
                (vec![m(&mut rng)], Box::new(|t, v| t.log_sum_exp(v[0], 1).unwrap())),
                (vec![m(&mut rng)], Box::new(|t, v| t.log_sum_exp(v[0], 0).unwrap())),
                (vec![m(&mut rng)], Box::new(|t, v| t.scale(v[0], -1.7))),
            ];
            for (inputs, build) in &cases {
                check(&mut rng, inputs.clone(), build);
            }
        }
    }

    #[test]
    fn composition_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x = sample(&mut rng, &[3, 4], false);
        let w1 = sample(&mut rng, &[4, 5], false);
        let w2 = sample(&mut rng, &[5, 5], false);
        let w3 = sample(&mut rng, &[5, 2], false);
        let run = |ps: &[Tensor], grads: bool| {
            let mut tape = Tape::new();
            let v: Vec<Var> = ps
                .iter()
                .map(|t| if grads { tape.param(t) } else { tape.constant(t.clone()) })
                .collect();
            let h = tape.matmul(v[0], v[1]).unwrap();
            let h = tape.tanh(h);
            let h = tape.matmul(h, v[2]).unwrap();
            let h = tape.sigmoid(h);
            let h = tape.matmul(h, v[3]).unwrap();
            let l = tape.log_sum_exp(h, 1).unwrap();
            let loss = tape.sum(l);
            let val = tape.value(loss).item();
            let g = if grads {
                let g = tape.backward(loss).unwrap();
                v.iter().map(|&x| g.get(x).unwrap().to_vec()).collect()
            } else {
                Vec::new()
            };
            (val, g)
        };
        let params = vec![x, w1, w2, w3];
        let (_, analytic) = run(&params, true);
        for k in 0..params.len() {
            let numeric = finite_diff_grad(
                |p| {
                    let mut ps = params.clone();
                    ps[k] = p.clone();
                    run(&ps, false).0
                },
                &params[k],
                1e-6,
            );
            assert!(max_relative_error(&analytic[k], numeric.data(), 1e-3) < 1e-4);
        }
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let r = rng.gen_range(1..6);
            let c = rng.gen_range(1..8);
            let data = (0..r * c).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::matrix(r, c, data).unwrap());
            let s = tape.softmax(x).unwrap();
            for row in tape.value(s).data().chunks(c) {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn log_sum_exp_bounds_at_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.gen_range(1..10);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e4..1e4)).collect();
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::row(v.clone()));
            let l = tape.log_sum_exp(x, 1).unwrap();
            let l = tape.value(l).item();
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(l.is_finite());
            assert!(l >= max && l <= max + (n as f64).ln() + 1e-9);
        }
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1e4, 1e4]));
        let l = tape.log_sum_exp(x, 1).unwrap();
        assert!((tape.value(l).item() - (1e4 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mlp = MlpParams::init(4, 8, 3, &mut rng);
            let x = Tensor::uniform(&[6, 4], 1.0, &mut rng);
            let mut tape = Tape::new();
            let m = mlp.map(&mut |t| tape.constant(t.clone()));
            let xv = tape.constant(x);
            let y = m.forward(&mut tape, xv).unwrap();
            tape.value(y).data().to_vec()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
