use crate::env::Observation;
use crate::error::{Error, Result};
use crate::memory::MemoryStack;
use crate::rng::RngStream;

/// How a stack becomes the network input: slots are encoded oldest first
/// and concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackEncoder {
    OneHot { alphabet: usize },
    Vector { dim: usize },
}

impl StackEncoder {
    pub fn width(&self) -> usize {
        match *self {
            StackEncoder::OneHot { alphabet } => alphabet,
            StackEncoder::Vector { dim } => dim,
        }
    }

    pub fn input_dim(&self, k: usize) -> usize {
        self.width() * k
    }

    pub fn encode(&self, s: &MemoryStack) -> Result<Vec<f64>> {
        let w = self.width();
        let mut out = vec![0.0; w * s.capacity()];
        for (j, slot) in s.slots().iter().enumerate() {
            let dst = &mut out[j * w..(j + 1) * w];
            match (*self, slot) {
                (StackEncoder::OneHot { alphabet }, Observation::Symbol(x)) if (*x as usize) < alphabet => {
                    dst[*x as usize] = 1.0;
                }
                (StackEncoder::Vector { dim }, Observation::Vector(v)) if v.len() == dim => {
                    dst.copy_from_slice(v);
                }
                _ => return Err(Error::contract(format!("slot {slot:?} does not fit encoder {self:?}"))),
            }
        }
        Ok(out)
    }
}

/// Layer widths: input, trunk, and the three heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub env_out: usize,
    pub mem_out: usize,
}

impl NetShape {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.env_out == 0 || self.mem_out == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config(format!("degenerate network shape {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

impl Slot {
    fn len(&self) -> usize {
        self.out * (self.inp + 1)
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// `acts[0]` is the input; `acts[i]` the output of trunk layer `i`.
    pub acts: Vec<Vec<f64>>,
    pub env_logits: Vec<f64>,
    pub mem_logits: Vec<f64>,
    pub value: f64,
}

/// Rectifier trunk with an environment-action head, a memory-action head
/// and a scalar value head. All parameters live in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    shape: NetShape,
    params: Vec<f64>,
    /// Trunk layers, then env head, mem head, value head.
    slots: Vec<Slot>,
}

fn layout(shape: &NetShape) -> (Vec<Slot>, usize) {
    let mut slots = Vec::new();
    let mut off = 0;
    let mut push = |inp: usize, out: usize| {
        let s = Slot {
            w: off,
            b: off + inp * out,
            inp,
            out,
        };
        off += s.len();
        slots.push(s);
    };
    let mut prev = shape.input;
    for &h in &shape.hidden {
        push(prev, h);
        prev = h;
    }
    push(prev, shape.env_out);
    push(prev, shape.mem_out);
    push(prev, 1);
    (slots, off)
}

fn affine(params: &[f64], s: &Slot, x: &[f64]) -> Vec<f64> {
    (0..s.out)
        .map(|o| {
            let row = &params[s.w + o * s.inp..s.w + (o + 1) * s.inp];
            params[s.b + o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

/// Adds `g ⊗ x` to the weight gradient and `g` to the bias gradient, and
/// returns the gradient with respect to `x`.
fn affine_backward(params: &[f64], s: &Slot, x: &[f64], g: &[f64], grad: &mut [f64], dx: &mut [f64]) {
    for o in 0..s.out {
        let go = g[o];
        if go == 0.0 {
            continue;
        }
        grad[s.b + o] += go;
        let w = s.w + o * s.inp;
        for i in 0..s.inp {
            grad[w + i] += go * x[i];
            dx[i] += go * params[w + i];
        }
    }
}

impl PolicyNet {
    pub fn zeros(shape: NetShape) -> Result<Self> {
        shape.validate()?;
        let (slots, n) = layout(&shape);
        Ok(Self {
            shape,
            params: vec![0.0; n],
            slots,
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new(shape: NetShape, rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::zeros(shape)?;
        for s in net.slots.clone() {
            let bound = 1.0 / (s.inp as f64).sqrt();
            for w in &mut net.params[s.w..s.b] {
                *w = rng.uniform_range(-bound, bound);
            }
        }
        Ok(net)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, p: Vec<f64>) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::contract(format!("expected {} parameters, got {}", self.params.len(), p.len())));
        }
        self.params = p;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.shape.input {
            return Err(Error::contract(format!("input has {} entries, network expects {}", x.len(), self.shape.input)));
        }
        let depth = self.shape.hidden.len();
        let mut acts = Vec::with_capacity(depth + 1);
        acts.push(x.to_vec());
        for s in &self.slots[..depth] {
            let mut z = affine(&self.params, s, acts.last().expect("input pushed"));
            for v in &mut z {
                *v = v.max(0.0);
            }
            acts.push(z);
        }
        let h = acts.last().expect("trunk output");
        let env_logits = affine(&self.params, &self.slots[depth], h);
        let mem_logits = affine(&self.params, &self.slots[depth + 1], h);
        let value = affine(&self.params, &self.slots[depth + 2], h)[0];
        Ok(Forward {
            acts,
            env_logits,
            mem_logits,
            value,
        })
    }

    /// Accumulates into `grad` the gradient of a loss whose derivatives with
    /// respect to the three head outputs are given.
    pub fn backward(&self, f: &Forward, g_env: &[f64], g_mem: &[f64], g_value: f64, grad: &mut [f64]) {
        let depth = self.shape.hidden.len();
        let h = &f.acts[depth];
        let mut dh = vec![0.0; h.len()];
        affine_backward(&self.params, &self.slots[depth], h, g_env, grad, &mut dh);
        affine_backward(&self.params, &self.slots[depth + 1], h, g_mem, grad, &mut dh);
        affine_backward(&self.params, &self.slots[depth + 2], h, &[g_value], grad, &mut dh);
        for l in (0..depth).rev() {
            // rectifier: gradient passes where the unit was active
            for (d, &a) in dh.iter_mut().zip(&f.acts[l + 1]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let mut dx = vec![0.0; f.acts[l].len()];
            affine_backward(&self.params, &self.slots[l], &f.acts[l], &dh, grad, &mut dx);
            dh = dx;
        }
    }

    /// Parameter slices in storage order, each as `(weights, biases, in, out)`.
    pub fn layers(&self) -> Vec<(&[f64], &[f64], usize, usize)> {
        self.slots
            .iter()
            .map(|s| (&self.params[s.w..s.b], &self.params[s.b..s.b + s.out], s.inp, s.out))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::MemoryStack;

    fn shape() -> NetShape {
        NetShape {
            input: 8,
            hidden: vec![16, 16, 16],
            env_out: 4,
            mem_out: 2,
        }
    }

    #[test]
    fn layout_counts_parameters() {
        let n = PolicyNet::zeros(shape()).unwrap();
        let expect = 16 * 9 + 2 * 16 * 17 + 4 * 17 + 2 * 17 + 17;
        assert_eq!(n.num_params(), expect);
        assert_eq!(n.layers().len(), 6);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let n = PolicyNet::zeros(shape()).unwrap();
        let f = n.forward(&[1.0; 8]).unwrap();
        assert_eq!(f.env_logits, vec![0.0; 4]);
        assert_eq!(f.mem_logits, vec![0.0; 2]);
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn wrong_input_is_rejected() {
        let n = PolicyNet::zeros(shape()).unwrap();
        assert_eq!(n.forward(&[0.0; 7]).unwrap_err().kind(), "contract");
        assert!(PolicyNet::zeros(NetShape { hidden: vec![], ..shape() }).is_err());
    }

    #[test]
    fn one_hot_encoding() {
        let e = StackEncoder::OneHot { alphabet: 4 };
        let s = MemoryStack::from_symbols(&[2, 0]).unwrap();
        assert_eq!(e.encode(&s).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        // swapping equal symbols leaves the input unchanged, unequal ones do not
        let same = MemoryStack::from_symbols(&[1, 1]).unwrap();
        assert_eq!(e.encode(&same).unwrap(), e.encode(&MemoryStack::from_symbols(&[1, 1]).unwrap()).unwrap());
        assert_ne!(e.encode(&s).unwrap(), e.encode(&MemoryStack::from_symbols(&[0, 2]).unwrap()).unwrap());
        let bad = MemoryStack::from_symbols(&[5, 0]).unwrap();
        assert!(e.encode(&bad).is_err());
    }

    #[test]
    fn vector_encoding() {
        let e = StackEncoder::Vector { dim: 2 };
        let s = MemoryStack::from_slots(vec![Observation::Vector(vec![1.0, 2.0]), Observation::Vector(vec![3.0, 4.0])]).unwrap();
        assert_eq!(e.encode(&s).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.input_dim(2), 4);
    }

    #[test]
    fn init_is_bounded_by_fan_in() {
        let mut rng = RngStream::new(3);
        let n = PolicyNet::new(shape(), &mut rng).unwrap();
        for (w, b, inp, _) in n.layers() {
            let bound = 1.0 / (inp as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }
}
