//! Dense affine layers and a one-hidden-layer tanh MLP with hand-written
//! backpropagation for the squared-error loss `||y - target||^2`.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weight: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    /// Uniform in `[-1/sqrt(cols), 1/sqrt(cols)]` for weights and biases.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        let weight = (0..rows * cols).map(|_| draw()).collect();
        let bias = (0..rows).map(|_| draw()).collect();
        Self { rows, cols, weight, bias }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weight
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| crate::linalg::dot(row, x) + b)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(&self.bias)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    /// Gradient of `<upstream, W x + b>` w.r.t. (W, b), flattened like `params`.
    fn grad_into(&self, x: &[f64], upstream: &[f64], out: &mut Vec<f64>) {
        for g in upstream {
            out.extend(x.iter().map(|xi| g * xi));
        }
        out.extend_from_slice(upstream);
    }

    /// `W^T upstream`.
    fn backprop_input(&self, upstream: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.cols];
        for (row, g) in self.weight.chunks_exact(self.cols).zip(upstream) {
            for (d, w) in dx.iter_mut().zip(row) {
                *d += g * w;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Affine,
    pub output: Affine,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self { hidden: Affine::zeros(hidden, input), output: Affine::zeros(output, hidden) }
    }

    pub fn uniform<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let h = Affine::uniform(hidden, input, rng);
        let o = Affine::uniform(output, hidden, rng);
        Self { hidden: h, output: o }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.cols
    }

    fn activations(&self, x: &[f64]) -> Vec<f64> {
        self.hidden.apply(x).into_iter().map(f64::tanh).collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.output.apply(&self.activations(x))
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.output.param_count()
    }

    /// Flattened parameters: hidden W, hidden b, output W, output b.
    pub fn params(&self) -> Vec<f64> {
        self.hidden.params().chain(self.output.params()).copied().collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        for (p, v) in self.hidden.params_mut().chain(self.output.params_mut()).zip(flat) {
            *p = *v;
        }
    }

    pub fn loss(&self, x: &[f64], target: &[f64]) -> f64 {
        squared_error(&self.forward(x), target)
    }

    /// Loss and its gradient, flattened in `params` order.
    pub fn loss_and_grad(&self, x: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        let h = self.activations(x);
        let y = self.output.apply(&h);
        let dy: Vec<f64> = y.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
        let dh = self.output.backprop_input(&dy);
        let da: Vec<f64> = dh.iter().zip(&h).map(|(g, hi)| g * (1.0 - hi * hi)).collect();

        let mut grad = Vec::with_capacity(self.param_count());
        self.hidden.grad_into(x, &da, &mut grad);
        self.output.grad_into(&h, &dy, &mut grad);
        (squared_error(&y, target), grad)
    }
}

/// Linear map used by the autoregressive predictor; gradient only.
pub(crate) fn affine_loss_and_grad(map: &Affine, x: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let y = map.apply(x);
    let dy: Vec<f64> = y.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
    let mut grad = Vec::with_capacity(map.param_count());
    map.grad_into(x, &dy, &mut grad);
    (squared_error(&y, target), grad)
}

pub fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
