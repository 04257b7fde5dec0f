//! Fully connected ReLU regressor trained with Adam on mini-batches.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpHyper {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// L2 penalty on weights, scaled by the batch size as in the usual
    /// `0.5 * l2 * |W|^2 / batch` formulation.
    pub l2: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Minimum validation-loss improvement that counts as progress.
    pub tol: f64,
    /// Epochs without progress before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper {
            hidden: vec![100, 50],
            learning_rate: 1e-3,
            l2: 1e-4,
            batch: 256,
            max_epochs: 500,
            tol: 1e-5,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[outputs x inputs]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    /// Targets are standardized internally.
    pub y_mean: f64,
    pub y_std: f64,
    pub epochs: usize,
}

impl MlpModel {
    /// Row-at-a-time forward pass with a fixed summation order.
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut cur: Vec<f64> = z.to_vec();
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(l.outputs);
            for o in 0..l.outputs {
                let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                let mut acc = l.b[o];
                for (w, v) in row.iter().zip(&cur) {
                    acc += w * v;
                }
                next.push(if li < last { acc.max(0.0) } else { acc });
            }
            cur = next;
        }
        self.y_mean + self.y_std * cur[0]
    }
}

/// Training-time parameters as ndarray matrices `[in x out]`.
#[derive(Debug, Clone)]
pub(crate) struct Net {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Net {
    fn init(sizes: &[usize], rng: &mut rng::Rng) -> Self {
        let mut w = Vec::new();
        let mut b = Vec::new();
        for pair in sizes.windows(2) {
            let (i, o) = (pair[0], pair[1]);
            let bound = (6.0 / (i + o) as f64).sqrt();
            w.push(Array2::from_shape_fn((i, o), |_| rng.gen_range(-bound..bound)));
            b.push(Array1::from_shape_fn(o, |_| rng.gen_range(-bound..bound)));
        }
        Net { w, b }
    }

    fn zeros_like(&self) -> Self {
        Net {
            w: self.w.iter().map(|m| Array2::zeros(m.raw_dim())).collect(),
            b: self.b.iter().map(|v| Array1::zeros(v.raw_dim())).collect(),
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.w.len() - 1;
        for (l, (w, b)) in self.w.iter().zip(&self.b).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Penalized loss `0.5 mean(err^2) + 0.5 l2 |W|^2 / n` and its gradient.
    pub(crate) fn loss_grad(&self, x: ArrayView2<f64>, y: &[f64], l2: f64) -> (f64, Net) {
        let n = x.nrows() as f64;
        let acts = self.forward(x);
        let out = acts.last().unwrap();
        let mut delta = Array2::zeros((x.nrows(), 1));
        let mut loss = 0.0;
        for (i, &t) in y.iter().enumerate() {
            let e = out[(i, 0)] - t;
            loss += e * e;
            delta[(i, 0)] = e / n;
        }
        loss *= 0.5 / n;
        loss += 0.5 * l2 * self.w.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n;
        let mut g = self.zeros_like();
        for l in (0..self.w.len()).rev() {
            g.w[l] = acts[l].t().dot(&delta) + &(&self.w[l] * (l2 / n));
            g.b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut d = delta.dot(&self.w[l].t());
                d.zip_mut_with(&acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = d;
            }
        }
        (loss, g)
    }

    fn mse(&self, x: ArrayView2<f64>, y: &[f64]) -> f64 {
        let out = self.forward(x).pop().unwrap();
        y.iter().enumerate().map(|(i, t)| (out[(i, 0)] - t).powi(2)).sum::<f64>() / y.len() as f64
    }

    fn into_model(self, y_mean: f64, y_std: f64, epochs: usize) -> MlpModel {
        let layers = self
            .w
            .iter()
            .zip(&self.b)
            .map(|(w, b)| {
                let (i, o) = w.dim();
                Dense { inputs: i, outputs: o, w: w.t().iter().copied().collect(), b: b.to_vec() }
            })
            .collect();
        MlpModel { layers, y_mean, y_std, epochs }
    }
}

struct Adam {
    m: Net,
    v: Net,
    t: i32,
}

impl Adam {
    fn step(&mut self, p: &mut Net, g: &Net, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        let upd = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        };
        for l in 0..p.w.len() {
            ndarray::Zip::from(&mut p.w[l]).and(&mut self.m.w[l]).and(&mut self.v.w[l]).and(&g.w[l]).for_each(|p, m, v, &g| upd(p, m, v, g));
            ndarray::Zip::from(&mut p.b[l]).and(&mut self.m.b[l]).and(&mut self.v.b[l]).and(&g.b[l]).for_each(|p, m, v, &g| upd(p, m, v, g));
        }
    }
}

/// Train on `(x, y)`, stopping when the validation MSE has not improved by
/// `tol` for `patience` epochs; the best epoch's weights are kept.
pub fn fit_mlp(x: ArrayView2<f64>, y: &[f64], xv: ArrayView2<f64>, yv: &[f64], h: &MlpHyper) -> MlpModel {
    let n = y.len();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_std = if var.sqrt() > 1e-12 * y_mean.abs().max(1.0) { var.sqrt() } else { 1.0 };
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();
    let yvs: Vec<f64> = yv.iter().map(|v| (v - y_mean) / y_std).collect();

    let mut r = rng::rng(h.seed);
    let mut sizes = vec![x.ncols()];
    sizes.extend(&h.hidden);
    sizes.push(1);
    let mut net = Net::init(&sizes, &mut r);
    let mut adam = Adam { m: net.zeros_like(), v: net.zeros_like(), t: 0 };
    let mut best = (net.mse(xv, &yvs), net.clone(), 0usize);
    let mut stale = 0;
    let mut order: Vec<usize> = (0..n).collect();
    let batch = h.batch.max(1);
    for epoch in 1..=h.max_epochs {
        order.shuffle(&mut r);
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let (_, g) = net.loss_grad(xb.view(), &yb, h.l2);
            adam.step(&mut net, &g, h.learning_rate);
        }
        let val = net.mse(xv, &yvs);
        if !val.is_finite() {
            break;
        }
        if val < best.0 - h.tol {
            best = (val, net.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= h.patience {
                break;
            }
        }
    }
    best.1.into_model(y_mean, y_std, best.2)
}

/// Loss `0.5 mean(err^2) + 0.5 l2 |W|^2 / n` of the network with layer
/// sizes `sizes` and its gradient, both over the flat parameter vector
/// `theta` (per layer: weights `[in x out]` row-major, then biases).
pub fn mlp_loss_gradient(sizes: &[usize], theta: &[f64], x: ArrayView2<f64>, y: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let mut w = Vec::new();
    let mut b = Vec::new();
    let mut at = 0;
    for pair in sizes.windows(2) {
        let (i, o) = (pair[0], pair[1]);
        w.push(Array2::from_shape_vec((i, o), theta[at..at + i * o].to_vec()).expect("weight block"));
        at += i * o;
        b.push(Array1::from_vec(theta[at..at + o].to_vec()));
        at += o;
    }
    assert_eq!(at, theta.len(), "theta length does not match the layer sizes");
    let (loss, g) = Net { w, b }.loss_grad(x, y, l2);
    let mut flat = Vec::with_capacity(theta.len());
    for (gw, gb) in g.w.iter().zip(&g.b) {
        flat.extend(gw.iter());
        flat.extend(gb.iter());
    }
    (loss, flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    #[test]
    fn gradient_matches_central_differences() {
        let mut r = rng::rng(3);
        let x = Array2::from_shape_fn((10, 4), |_| r.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..10).map(|i| x[(i, 0)] * 2.0 - x[(i, 3)]).collect();
        let net = Net::init(&[4, 6, 5, 1], &mut r);
        let l2 = 0.1;
        let (_, g) = net.loss_grad(x.view(), &y, l2);
        let mut worst: f64 = 0.0;
        let h = 1e-6;
        for l in 0..net.w.len() {
            for idx in 0..net.w[l].len() {
                let (i, j) = (idx / net.w[l].ncols(), idx % net.w[l].ncols());
                let mut p = net.clone();
                p.w[l][(i, j)] += h;
                let up = p.loss_grad(x.view(), &y, l2).0;
                p.w[l][(i, j)] -= 2.0 * h;
                let dn = p.loss_grad(x.view(), &y, l2).0;
                let fd = (up - dn) / (2.0 * h);
                let an = g.w[l][(i, j)];
                worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-6));
            }
            for i in 0..net.b[l].len() {
                let mut p = net.clone();
                p.b[l][i] += h;
                let up = p.loss_grad(x.view(), &y, l2).0;
                p.b[l][i] -= 2.0 * h;
                let dn = p.loss_grad(x.view(), &y, l2).0;
                let fd = (up - dn) / (2.0 * h);
                let an = g.b[l][i];
                worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1e-6));
            }
        }
        assert!(worst <= 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn learns_smooth_function_and_row_inference_matches_training_path() {
        let mut r = rng::rng(1);
        let x: Array2<f64> = Array2::from_shape_fn((600, 2), |_| r.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..600).map(|i| 5.0 + 3.0 * (2.0 * x[(i, 0)]).sin() + x[(i, 1)].powi(2)).collect();
        let h = MlpHyper { hidden: vec![32, 16], learning_rate: 3e-3, max_epochs: 300, batch: 64, ..Default::default() };
        let (tr, va) = (x.slice(s![..500, ..]), x.slice(s![500.., ..]));
        let m = fit_mlp(tr, &y[..500], va, &y[500..], &h);
        let var = {
            let mu = y.iter().sum::<f64>() / 600.0;
            y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 600.0
        };
        let mse = (500..600).map(|i| (m.predict(x.row(i).as_slice().unwrap()) - y[i]).powi(2)).sum::<f64>() / 100.0;
        assert!(mse < 0.05 * var, "mse {mse} var {var}");
        assert!(m.epochs >= 1);
    }
}
