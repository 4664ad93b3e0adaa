//! Dense layers, two-hidden-layer MLPs and a GRU cell.
//!
//! Parameter structs are generic over their leaf type: `Tensor` for stored
//! weights, [`Var`] once bound onto a tape. Weights are stored input-major
//! (`[fan_in, fan_out]`) so a batch of row vectors is transformed as
//! `x · W + b`.

use rand::Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: T,
    pub bias: T,
}

impl Linear<Tensor> {
    /// Uniform in `±1/√fan_in` for both weight and bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[fan_in, fan_out], bound, rng),
            bias: Tensor::uniform(&[1, fan_out], bound, rng),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }
}

impl<T> Linear<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Linear<U> {
        Linear {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

impl Linear<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = tape.matmul(x, self.weight)?;
        tape.add(y, self.bias)
    }
}

/// Two rectified hidden layers followed by a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

pub type MlpParams = Mlp<Tensor>;

impl Mlp<Tensor> {
    pub fn init<R: Rng + ?Sized>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            layers: vec![
                Linear::init(d_in, hidden, rng),
                Linear::init(hidden, hidden, rng),
                Linear::init(hidden, d_out, rng),
            ],
        }
    }

    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            layers: vec![
                Linear::zeros(d_in, hidden),
                Linear::zeros(hidden, hidden),
                Linear::zeros(hidden, d_out),
            ],
        }
    }
}

impl<T> Mlp<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&format!("{prefix}.{i}"), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&format!("{prefix}.{i}"), f);
        }
    }
}

impl Mlp<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Gated recurrent unit: `W_*` act on the message input, `U_*` on the state.
#[derive(Clone, Debug, PartialEq)]
pub struct Gru<T> {
    pub w_z: T,
    pub u_z: T,
    pub b_z: T,
    pub w_r: T,
    pub u_r: T,
    pub b_r: T,
    pub w_h: T,
    pub u_h: T,
    pub b_h: T,
}

pub type GruParams = Gru<Tensor>;

impl Gru<Tensor> {
    pub fn init<R: Rng + ?Sized>(d_in: usize, hidden: usize, rng: &mut R) -> Self {
        let b_in = 1.0 / (d_in.max(1) as f64).sqrt();
        let b_h = 1.0 / (hidden.max(1) as f64).sqrt();
        let mut w = || Tensor::uniform(&[d_in, hidden], b_in, rng);
        let (w_z, w_r, w_h) = (w(), w(), w());
        let mut u = || Tensor::uniform(&[hidden, hidden], b_h, rng);
        let (u_z, u_r, u_h) = (u(), u(), u());
        let mut b = || Tensor::uniform(&[1, hidden], b_h, rng);
        let (b_z, b_r, b_hh) = (b(), b(), b());
        Self {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h: b_hh,
        }
    }

    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[d_in, hidden]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[1, hidden]);
        Self {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
        }
    }
}

impl<T> Gru<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Gru<U> {
        Gru {
            w_z: f(&self.w_z),
            u_z: f(&self.u_z),
            b_z: f(&self.b_z),
            w_r: f(&self.w_r),
            u_r: f(&self.u_r),
            b_r: f(&self.b_r),
            w_h: f(&self.w_h),
            u_h: f(&self.u_h),
            b_h: f(&self.b_h),
        }
    }

    fn fields(&self) -> [(&'static str, &T); 9] {
        [
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_h", &self.w_h),
            ("u_h", &self.u_h),
            ("b_h", &self.b_h),
        ]
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        for (name, t) in self.fields() {
            f(format!("{prefix}.{name}"), t);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(String, &mut T)) {
        let Gru {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        } = self;
        for (name, t) in [
            ("w_z", w_z),
            ("u_z", u_z),
            ("b_z", b_z),
            ("w_r", w_r),
            ("u_r", u_r),
            ("b_r", b_r),
            ("w_h", w_h),
            ("u_h", u_h),
            ("b_h", b_h),
        ] {
            f(format!("{prefix}.{name}"), t);
        }
    }
}

impl Gru<Var> {
    /// `h' = z∘h + (1−z)∘h̃`, with
    /// `z = σ(m W_z + h U_z + b_z)`, `r = σ(m W_r + h U_r + b_r)`,
    /// `h̃ = tanh(m W_h + (r∘h) U_h + b_h)`.
    pub fn forward(&self, tape: &mut Tape, h: Var, m: Var) -> Result<Var> {
        let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, state: Var| -> Result<Var> {
            let a = tape.matmul(m, w)?;
            let c = tape.matmul(state, u)?;
            let s = tape.add(a, c)?;
            tape.add(s, b)
        };
        let z = gate(tape, self.w_z, self.u_z, self.b_z, h)?;
        let z = tape.sigmoid(z);
        let r = gate(tape, self.w_r, self.u_r, self.b_r, h)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = gate(tape, self.w_h, self.u_h, self.b_h, rh)?;
        let cand = tape.tanh(cand);
        // h̃ + z∘(h − h̃)
        let diff = tape.sub(h, cand)?;
        let gated = tape.mul(z, diff)?;
        tape.add(cand, gated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tensor::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bind_mlp(tape: &mut Tape, p: &MlpParams) -> Mlp<Var> {
        p.map(&mut |t| tape.constant(t.clone()))
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let p = MlpParams::zeros(3, 4, 2);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(5, 3, (0..15).map(f64::from).collect()).unwrap());
        let m = bind_mlp(&mut tape, &p);
        let y = m.forward(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), &[5, 2]);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_bias_passes_through() {
        let mut p = MlpParams::zeros(3, 4, 2);
        p.layers[2].bias = Tensor::row(vec![1.5, -2.0]);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 3, vec![9.0, -1.0, 3.0, 0.5, 0.5, 0.5]).unwrap());
        let m = bind_mlp(&mut tape, &p);
        let y = m.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y).data(), &[1.5, -2.0, 1.5, -2.0]);
    }

    #[test]
    fn mlp_rejects_bad_width() {
        let p = MlpParams::zeros(3, 4, 2);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 5]));
        let m = bind_mlp(&mut tape, &p);
        assert!(m.forward(&mut tape, x).is_err());
    }

    #[test]
    fn zero_gru_halves_state() {
        let p = GruParams::zeros(2, 2);
        let mut tape = Tape::new();
        let g = p.map(&mut |t| tape.constant(t.clone()));
        let h = tape.constant(Tensor::row(vec![0.8, -0.4]));
        let m = tape.constant(Tensor::row(vec![3.0, 1.0]));
        let out = g.forward(&mut tape, h, m).unwrap();
        assert_eq!(tape.value(out).data(), &[0.4, -0.2]);

        let zero = tape.constant(Tensor::zeros(&[1, 2]));
        let out = g.forward(&mut tape, zero, zero).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn scalar_gru_matches_hand_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = GruParams::init(1, 1, &mut rng);
        let (h, m) = (0.37, -1.2);
        let s = |t: &Tensor| t.item();
        let z = sigmoid(s(&p.w_z) * m + s(&p.u_z) * h + s(&p.b_z));
        let r = sigmoid(s(&p.w_r) * m + s(&p.u_r) * h + s(&p.b_r));
        let cand = (s(&p.w_h) * m + s(&p.u_h) * (r * h) + s(&p.b_h)).tanh();
        let expected = z * h + (1.0 - z) * cand;

        let mut tape = Tape::new();
        let g = p.map(&mut |t| tape.constant(t.clone()));
        let hv = tape.constant(Tensor::row(vec![h]));
        let mv = tape.constant(Tensor::row(vec![m]));
        let out = g.forward(&mut tape, hv, mv).unwrap();
        assert!((tape.value(out).item() - expected).abs() < 1e-14);
    }

    #[test]
    fn visit_names_are_stable() {
        let p = MlpParams::zeros(1, 1, 1);
        let mut names = Vec::new();
        p.visit("f", &mut |n, _| names.push(n));
        assert_eq!(names[0], "f.0.weight");
        assert_eq!(names[5], "f.2.bias");
    }
}
