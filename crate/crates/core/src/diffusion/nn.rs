//! Dense layers with explicit backward passes.
//!
//! Activations are row-major `rows × cols` buffers. Forward functions return
//! whatever the matching backward needs; backward functions accumulate into
//! the parameter gradients and return the gradient of their input.

use rand::Rng;

use crate::scalar::Real;

/// A named-by-position parameter array with its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let mut p = Self::zeros(shape);
        p.value.fill(T::of(v));
        p
    }

    /// Uniform in `±bound`; draws in `f64` so every scalar type sees the
    /// same initial values.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(shape);
        for v in &mut p.value {
            *v = T::of(rng.random_range(-bound..bound));
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Callback used to enumerate parameters by hierarchical name.
pub type Visitor<'a, T> = dyn FnMut(&str, &mut Param<T>) + 'a;

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `y = x · W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T: Real> {
    pub w: Param<T>,
    pub b: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: Param::uniform(&[inputs, outputs], 1.0 / (inputs as f64).sqrt(), rng),
            b: Param::zeros(&[outputs]),
        }
    }

    pub fn zeroed(inputs: usize, outputs: usize) -> Self {
        Linear {
            w: Param::zeros(&[inputs, outputs]),
            b: Param::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.shape[0]
    }

    pub fn outputs(&self) -> usize {
        self.w.shape[1]
    }

    pub fn forward(&self, x: &[T], rows: usize) -> Vec<T> {
        let (i, o) = (self.inputs(), self.outputs());
        debug_assert_eq!(x.len(), rows * i);
        let mut y = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            y.extend_from_slice(&self.b.value);
        }
        T::gemm(rows, i, o, T::one(), x, (i as isize, 1), &self.w.value, (o as isize, 1), T::one(), &mut y, (o as isize, 1));
        y
    }

    pub fn backward(&mut self, x: &[T], dy: &[T], rows: usize) -> Vec<T> {
        let (i, o) = (self.inputs(), self.outputs());
        // dW += xᵀ · dy
        T::gemm(i, rows, o, T::one(), x, (1, i as isize), dy, (o as isize, 1), T::one(), &mut self.w.grad, (o as isize, 1));
        for r in 0..rows {
            for (g, d) in self.b.grad.iter_mut().zip(&dy[r * o..(r + 1) * o]) {
                *g += *d;
            }
        }
        let mut dx = vec![T::zero(); rows * i];
        T::gemm(rows, o, i, T::one(), dy, (o as isize, 1), &self.w.value, (1, o as isize), T::zero(), &mut dx, (i as isize, 1));
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visitor<'_, T>) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<T: Real> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

pub struct LayerNormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

const LN_EPS: f64 = 1e-5;

impl<T: Real> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Param::filled(&[dim], 1.0),
            beta: Param::zeros(&[dim]),
        }
    }

    pub fn forward(&self, x: &[T]) -> (Vec<T>, LayerNormCache<T>) {
        let d = self.gamma.len();
        let rows = x.len() / d;
        let inv_d = T::of(1.0 / d as f64);
        let mut y = vec![T::zero(); x.len()];
        let mut xhat = vec![T::zero(); x.len()];
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_d;
            let rs = T::one() / (var + T::of(LN_EPS)).sqrt();
            rstd.push(rs);
            for k in 0..d {
                let h = (row[k] - mean) * rs;
                xhat[r * d + k] = h;
                y[r * d + k] = h * self.gamma.value[k] + self.beta.value[k];
            }
        }
        (y, LayerNormCache { xhat, rstd })
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &[T]) -> Vec<T> {
        let d = self.gamma.len();
        let rows = dy.len() / d;
        let inv_d = T::of(1.0 / d as f64);
        let mut dx = vec![T::zero(); dy.len()];
        let mut g = vec![T::zero(); d];
        for r in 0..rows {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let dyr = &dy[r * d..(r + 1) * d];
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for k in 0..d {
                self.gamma.grad[k] += dyr[k] * xh[k];
                self.beta.grad[k] += dyr[k];
                g[k] = dyr[k] * self.gamma.value[k];
                sum_g += g[k];
                sum_gx += g[k] * xh[k];
            }
            let rs = cache.rstd[r];
            for k in 0..d {
                dx[r * d + k] = rs * (g[k] - (sum_g + xh[k] * sum_gx) * inv_d);
            }
        }
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visitor<'_, T>) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // √(2/π)
const GELU_C: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Real>(x: &[T]) -> Vec<T> {
    let (k, c, half) = (T::of(GELU_K), T::of(GELU_C), T::of(0.5));
    x.iter()
        .map(|&v| half * v * (T::one() + (k * (v + c * v * v * v)).tanh()))
        .collect()
}

pub fn gelu_backward<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    let (k, c, half, three) = (T::of(GELU_K), T::of(GELU_C), T::of(0.5), T::of(3.0));
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let th = (k * (v + c * v * v * v)).tanh();
            let d = half * (T::one() + th) + half * v * (T::one() - th * th) * k * (T::one() + three * c * v * v);
            g * d
        })
        .collect()
}

/// Token groups for attention: every query token in `queries[g]` attends to
/// exactly the key tokens in `keys[g]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Groups {
    pub queries: Vec<Vec<usize>>,
    pub keys: Vec<Vec<usize>>,
}

impl Groups {
    pub fn self_attention(groups: Vec<Vec<usize>>) -> Self {
        Groups {
            keys: groups.clone(),
            queries: groups,
        }
    }
}

/// Multi-head scaled dot-product attention with separate Q/K/V/O projections.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention<T: Real> {
    pub heads: usize,
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub o: Linear<T>,
}

pub struct AttentionCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    ctx: Vec<T>,
    /// Softmax weights, concatenated over groups and heads.
    probs: Vec<T>,
}

impl<T: Real> Attention<T> {
    pub fn new(dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        assert!(dim.is_multiple_of(heads), "width must divide into heads");
        Attention {
            heads,
            q: Linear::new(dim, dim, rng),
            k: Linear::new(dim, dim, rng),
            v: Linear::new(dim, dim, rng),
            o: Linear::new(dim, dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.outputs()
    }

    pub fn forward(&self, xq: &[T], xkv: &[T], groups: &Groups) -> (Vec<T>, AttentionCache<T>) {
        let d = self.dim();
        let dh = d / self.heads;
        let (nq, nk) = (xq.len() / d, xkv.len() / d);
        let q = self.q.forward(xq, nq);
        let k = self.k.forward(xkv, nk);
        let v = self.v.forward(xkv, nk);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut ctx = vec![T::zero(); nq * d];
        let mut probs = Vec::new();
        let mut scores = Vec::new();
        for (qs, ks) in groups.queries.iter().zip(&groups.keys) {
            for h in 0..self.heads {
                let off = h * dh;
                for &qi in qs {
                    let qrow = &q[qi * d + off..qi * d + off + dh];
                    scores.clear();
                    let mut max = T::min_value().unwrap_or(T::of(-1e30));
                    for &kj in ks {
                        let krow = &k[kj * d + off..kj * d + off + dh];
                        let s = dot(qrow, krow) * scale;
                        if s > max {
                            max = s;
                        }
                        scores.push(s);
                    }
                    let mut sum = T::zero();
                    for s in &mut scores {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    let crow = &mut ctx[qi * d + off..qi * d + off + dh];
                    for (s, &kj) in scores.iter_mut().zip(ks) {
                        *s /= sum;
                        let vrow = &v[kj * d + off..kj * d + off + dh];
                        for (c, &vv) in crow.iter_mut().zip(vrow) {
                            *c += *s * vv;
                        }
                    }
                    probs.extend_from_slice(&scores);
                }
            }
        }
        let out = self.o.forward(&ctx, nq);
        (out, AttentionCache { q, k, v, ctx, probs })
    }

    /// Returns `(d xq, d xkv)`; for self-attention the caller adds them.
    pub fn backward(&mut self, cache: &AttentionCache<T>, xq: &[T], xkv: &[T], groups: &Groups, dout: &[T]) -> (Vec<T>, Vec<T>) {
        let d = self.dim();
        let dh = d / self.heads;
        let (nq, nk) = (xq.len() / d, xkv.len() / d);
        let dctx = self.o.backward(&cache.ctx, dout, nq);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (q, k, v) = (&cache.q, &cache.k, &cache.v);
        let mut dq = vec![T::zero(); nq * d];
        let mut dk = vec![T::zero(); nk * d];
        let mut dv = vec![T::zero(); nk * d];
        let mut dp = Vec::new();
        let mut pos = 0;
        for (qs, ks) in groups.queries.iter().zip(&groups.keys) {
            for h in 0..self.heads {
                let off = h * dh;
                for &qi in qs {
                    let p = &cache.probs[pos..pos + ks.len()];
                    pos += ks.len();
                    let dc = &dctx[qi * d + off..qi * d + off + dh];
                    dp.clear();
                    let mut inner = T::zero();
                    for (&kj, &pj) in ks.iter().zip(p) {
                        let vrow = &v[kj * d + off..kj * d + off + dh];
                        let g = dot(dc, vrow);
                        inner += g * pj;
                        dp.push(g);
                        let dvrow = &mut dv[kj * d + off..kj * d + off + dh];
                        for (a, &c) in dvrow.iter_mut().zip(dc) {
                            *a += pj * c;
                        }
                    }
                    for ((&kj, &pj), &g) in ks.iter().zip(p).zip(&dp) {
                        let ds = pj * (g - inner) * scale;
                        for t in 0..dh {
                            dq[qi * d + off + t] += ds * k[kj * d + off + t];
                            dk[kj * d + off + t] += ds * q[qi * d + off + t];
                        }
                    }
                }
            }
        }
        let dxq = self.q.backward(xq, &dq, nq);
        let mut dxkv = self.k.backward(xkv, &dk, nk);
        for (a, b) in dxkv.iter_mut().zip(self.v.backward(xkv, &dv, nk)) {
            *a += b;
        }
        (dxq, dxkv)
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visitor<'_, T>) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.o.visit(&join(prefix, "o"), f);
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn add_assign<T: Real>(a: &mut [T], b: &[T]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += *y;
    }
}

/// Fixed sinusoidal embedding of a scalar position into `dim` channels.
pub fn sinusoid(pos: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central-difference check of `d(Σ w·f(x))/dx` against `backward`.
    fn check_input_grad(x: &[f64], weights: &[f64], f: impl Fn(&[f64]) -> Vec<f64>, analytic: &[f64]) {
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            let lp: f64 = f(&xp).iter().zip(weights).map(|(a, b)| a * b).sum();
            let lm: f64 = f(&xm).iter().zip(weights).map(|(a, b)| a * b).sum();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - analytic[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "input {i}: fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn linear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lin = Linear::<f64>::new(3, 4, &mut rng);
        let x = rand_vec(6, &mut rng);
        let w = rand_vec(8, &mut rng);
        let dx = lin.backward(&x, &w, 2);
        let l2 = lin.clone();
        check_input_grad(&x, &w, |x| l2.forward(x, 2), &dx);
        // dW[i][o] = Σ_r x[r][i]·w[r][o]
        for i in 0..3 {
            for o in 0..4 {
                let expect = x[i] * w[o] + x[3 + i] * w[4 + o];
                assert!((lin.w.grad[i * 4 + o] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ln = LayerNorm::<f64>::new(5);
        for g in &mut ln.gamma.value {
            *g = rng.random_range(0.5..1.5);
        }
        let x = rand_vec(15, &mut rng);
        let w = rand_vec(15, &mut rng);
        let (_, cache) = ln.forward(&x);
        let dx = ln.backward(&cache, &w);
        let l2 = ln.clone();
        check_input_grad(&x, &w, |x| l2.forward(x).0, &dx);
    }

    #[test]
    fn gelu_gradient_and_values() {
        let x = vec![-3.0, -0.5, 0.0, 0.7, 2.5];
        let w = vec![1.0, -2.0, 0.5, 1.5, 0.3];
        let dx = gelu_backward(&x, &w);
        check_input_grad(&x, &w, gelu, &dx);
        assert_eq!(gelu(&[0.0f64])[0], 0.0);
        assert!((gelu(&[10.0f64])[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn attention_gradients_cross_and_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut att = Attention::<f64>::new(4, 2, &mut rng);
        let xq = rand_vec(5 * 4, &mut rng);
        let xkv = rand_vec(3 * 4, &mut rng);
        let groups = Groups {
            queries: vec![vec![0, 2, 4], vec![1, 3]],
            keys: vec![vec![0, 1], vec![1, 2]],
        };
        let w = rand_vec(20, &mut rng);
        let (_, cache) = att.forward(&xq, &xkv, &groups);
        let (dxq, dxkv) = att.backward(&cache, &xq, &xkv, &groups, &w);
        let a2 = att.clone();
        check_input_grad(&xq, &w, |x| a2.forward(x, &xkv, &groups).0, &dxq);
        check_input_grad(&xkv, &w, |x| a2.forward(&xq, x, &groups).0, &dxkv);

        let selfg = Groups::self_attention(vec![vec![0, 1, 2], vec![3, 4]]);
        let mut att2 = a2.clone();
        let (_, cache) = att2.forward(&xq, &xq, &selfg);
        let (a, b) = att2.backward(&cache, &xq, &xq, &selfg, &w);
        let total: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        check_input_grad(&xq, &w, |x| a2.forward(x, x, &selfg).0, &total);
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let att = Attention::<f64>::new(4, 1, &mut rng);
        let x = rand_vec(12, &mut rng);
        let g = Groups::self_attention(vec![vec![0, 1, 2]]);
        let (_, cache) = att.forward(&x, &x, &g);
        for row in cache.probs.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn sinusoid_shape() {
        let e = sinusoid(0.0, 8);
        assert_eq!(e, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_ne!(sinusoid(3.0, 8), sinusoid(4.0, 8));
    }
}
