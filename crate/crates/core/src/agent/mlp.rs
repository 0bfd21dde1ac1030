use rand::Rng;

/// Fully connected ReLU network with a linear output layer.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as
/// a row-major `out × in` weight matrix followed by its bias. Optimizers,
/// Polyak averaging and checkpoints all work on that flat view.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations retained from a forward pass: `acts[0]` is the input batch,
/// `acts[l]` the (post-ReLU) output of layer `l`, the last entry the output.
#[derive(Debug, Clone)]
pub struct MlpForward {
    acts: Vec<Vec<f64>>,
    batch: usize,
}

impl MlpForward {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least input and output")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialisation for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_out * (fan_in + 1)] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_out * (fan_in + 1);
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        let n = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        let net = Self::zeros(sizes);
        (net.params.len() == params.len()).then(|| Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Offset of the bias vector of the last layer.
    pub fn output_bias_offset(&self) -> usize {
        self.params.len() - self.output_dim()
    }

    pub fn forward(&self, input: &[f64], batch: usize) -> MlpForward {
        assert_eq!(input.len(), batch * self.input_dim(), "input shape");
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + n_out * n_in];
            let bias = &self.params[offset + n_out * n_in..offset + n_out * (n_in + 1)];
            let x = &acts[l];
            let mut out = vec![0.0; batch * n_out];
            let hidden = l + 1 < n_layers;
            for b in 0..batch {
                let xb = &x[b * n_in..(b + 1) * n_in];
                let ob = &mut out[b * n_out..(b + 1) * n_out];
                for (o, slot) in ob.iter_mut().enumerate() {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let s = bias[o] + dot(row, xb);
                    *slot = if hidden { s.max(0.0) } else { s };
                }
            }
            acts.push(out);
            offset += n_out * (n_in + 1);
        }
        MlpForward { acts, batch }
    }

    /// Back-propagates `grad_out` (batch × output). Parameter gradients are
    /// accumulated into `grad_params` when given; the input gradient is
    /// returned when `want_input` is set.
    pub fn backward(
        &self,
        fwd: &MlpForward,
        grad_out: &[f64],
        mut grad_params: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let batch = fwd.batch;
        let n_layers = self.sizes.len() - 1;
        assert_eq!(grad_out.len(), batch * self.output_dim(), "grad_out shape");
        if let Some(g) = grad_params.as_deref() {
            assert_eq!(g.len(), self.params.len(), "grad_params shape");
        }
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[1] * (w[0] + 1);
        }
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &fwd.acts[l];
            if let Some(g) = grad_params.as_deref_mut() {
                let (gw, gb) = g[off..off + n_out * (n_in + 1)].split_at_mut(n_out * n_in);
                for b in 0..batch {
                    let xb = &x[b * n_in..(b + 1) * n_in];
                    for o in 0..n_out {
                        let d = delta[b * n_out + o];
                        if d != 0.0 {
                            axpy(d, xb, &mut gw[o * n_in..(o + 1) * n_in]);
                            gb[o] += d;
                        }
                    }
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let weights = &self.params[off..off + n_out * n_in];
            let mut prev = vec![0.0; batch * n_in];
            for b in 0..batch {
                let pb = &mut prev[b * n_in..(b + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[b * n_out + o];
                    if d != 0.0 {
                        axpy(d, &weights[o * n_in..(o + 1) * n_in], pb);
                    }
                }
                if l > 0 {
                    for (p, &a) in pb.iter_mut().zip(&x[b * n_in..(b + 1) * n_in]) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                }
            }
            delta = prev;
        }
        Some(delta)
    }

    /// `self ← (1 − tau)·self + tau·source`.
    pub fn polyak_from(&mut self, source: &Mlp, tau: f64) {
        assert_eq!(
            self.sizes, source.sizes,
            "polyak between mismatched networks"
        );
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
