use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tensor::{Builder, Init, Scalar, Tensor};

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// `x * sigmoid(x)`.
pub fn swish<S: Scalar>(x: S) -> S {
    x * sigmoid(x)
}

fn swish_grad<S: Scalar>(x: S) -> S {
    let s = sigmoid(x);
    s + x * s * (S::one() - s)
}

fn axpy<S: Scalar>(y: &mut [S], a: S, x: &[S]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [S::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = dot_tail(ca.remainder(), cb.remainder());
    for v in acc {
        s += v;
    }
    s
}

fn dot_tail<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Index range `t` with `t` in `[0, dst)` and `t + off` in `[0, src)`.
fn overlap(dst: usize, src: usize, off: isize) -> (usize, usize) {
    let t0 = (-off).max(0) as usize;
    let t1 = (src as isize - off).clamp(0, dst as isize) as usize;
    (t0.min(t1), t1)
}

/// `dst[t] += w * src[t + off]` wherever both exist.
fn tap<S: Scalar>(dst: &mut [S], src: &[S], off: isize, w: S) {
    let (t0, t1) = overlap(dst.len(), src.len(), off);
    if t0 == t1 {
        return;
    }
    let s0 = (t0 as isize + off) as usize;
    axpy(&mut dst[t0..t1], w, &src[s0..s0 + (t1 - t0)]);
}

/// `sum_t a[t] * src[t + off]` over the overlap.
fn tap_dot<S: Scalar>(a: &[S], src: &[S], off: isize) -> S {
    let (t0, t1) = overlap(a.len(), src.len(), off);
    if t0 == t1 {
        return S::zero();
    }
    let s0 = (t0 as isize + off) as usize;
    dot(&a[t0..t1], &src[s0..s0 + (t1 - t0)])
}

/// Even and odd samples of every channel.
fn deinterleave<S: Scalar>(x: &Tensor<S>) -> [Tensor<S>; 2] {
    let mut ph = [Tensor::zeros(x.channels, x.len.div_ceil(2)), Tensor::zeros(x.channels, x.len / 2)];
    for c in 0..x.channels {
        for (t, &v) in x.row(c).iter().enumerate() {
            ph[t % 2].row_mut(c)[t / 2] = v;
        }
    }
    ph
}

fn interleave<S: Scalar>(ph: &[Tensor<S>; 2], len: usize) -> Tensor<S> {
    let mut x = Tensor::zeros(ph[0].channels, len);
    for c in 0..x.channels {
        for (t, v) in x.row_mut(c).iter_mut().enumerate() {
            *v = ph[t % 2].row(c)[t / 2];
        }
    }
    x
}

/// Phase and in-phase offset of a signed tap shift under stride 2.
fn phase_of(s: isize) -> (usize, isize) {
    (s.rem_euclid(2) as usize, s.div_euclid(2))
}

/// 1-D convolution with symmetric zero padding `(k - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pad: usize,
    w: usize,
    b: usize,
}

impl Conv {
    pub fn new<R: Rng>(b: &mut Builder<R>, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        debug_assert!(stride == 1 || stride == 2);
        let bound = 1.0 / libm::sqrt((cin * k) as f64);
        let w = b.alloc(&alloc::format!("{name}.weight"), &[cout, cin, k], Init::Uniform(bound));
        let bias = b.alloc(&alloc::format!("{name}.bias"), &[cout], Init::Zeros);
        Self { cin, cout, k, stride, pad: (k - 1) / 2, w, b: bias }
    }

    pub fn zero_weights<S: Scalar>(&self, p: &mut [S]) {
        p[self.w..self.w + self.cout * self.cin * self.k].fill(S::zero());
        p[self.b..self.b + self.cout].fill(S::zero());
    }

    pub fn out_len(&self, l: usize) -> usize {
        (l + 2 * self.pad - self.k) / self.stride + 1
    }

    /// Source row and offset for tap `j`: output `t` reads `src[t + off]`.
    fn source<'a, S: Scalar>(&self, j: usize, i: usize, x: &'a Tensor<S>, ph: &'a Option<[Tensor<S>; 2]>) -> (&'a [S], isize) {
        let s = j as isize - self.pad as isize;
        match ph {
            None => (x.row(i), s),
            Some(ph) => {
                let (q, off) = phase_of(s);
                (ph[q].row(i), off)
            }
        }
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &Tensor<S>) -> Tensor<S> {
        debug_assert_eq!(x.channels, self.cin);
        let lo = self.out_len(x.len);
        let ph = (self.stride == 2).then(|| deinterleave(x));
        let mut y = Tensor::zeros(self.cout, lo);
        for o in 0..self.cout {
            let yo = y.row_mut(o);
            yo.fill(p[self.b + o]);
            for i in 0..self.cin {
                for j in 0..self.k {
                    let (src, off) = self.source(j, i, x, &ph);
                    tap(yo, src, off, p[self.w + (o * self.cin + i) * self.k + j]);
                }
            }
        }
        y
    }

    pub fn backward<S: Scalar>(&self, p: &[S], x: &Tensor<S>, gy: &Tensor<S>, g: &mut [S]) -> Tensor<S> {
        let ph = (self.stride == 2).then(|| deinterleave(x));
        let mut gph = match &ph {
            None => [Tensor::zeros(self.cin, x.len), Tensor::zeros(0, 0)],
            Some(ph) => [Tensor::zeros(self.cin, ph[0].len), Tensor::zeros(self.cin, ph[1].len)],
        };
        for o in 0..self.cout {
            let go = gy.row(o);
            g[self.b + o] += dot_tail(go, &vec![S::one(); go.len()]);
            for i in 0..self.cin {
                for j in 0..self.k {
                    let wi = self.w + (o * self.cin + i) * self.k + j;
                    let (src, off) = self.source(j, i, x, &ph);
                    g[wi] += tap_dot(go, src, off);
                    let q = if ph.is_some() { phase_of(j as isize - self.pad as isize).0 } else { 0 };
                    // gsrc[t + off] += w * go[t]
                    tap(gph[q].row_mut(i), go, -off, p[wi]);
                }
            }
        }
        match ph {
            None => {
                let [gx, _] = gph;
                gx
            }
            Some(_) => interleave(&gph, x.len),
        }
    }
}

/// Transposed convolution doubling the length: the adjoint of a stride-2
/// convolution with the same kernel and padding.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvT {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pad: usize,
    w: usize,
    b: usize,
}

impl ConvT {
    pub fn new<R: Rng>(b: &mut Builder<R>, name: &str, cin: usize, cout: usize, k: usize) -> Self {
        // Each output sample receives about k/2 taps per input channel.
        let bound = 1.0 / libm::sqrt((cin * k.div_ceil(2)) as f64);
        let w = b.alloc(&alloc::format!("{name}.weight"), &[cin, cout, k], Init::Uniform(bound));
        let bias = b.alloc(&alloc::format!("{name}.bias"), &[cout], Init::Zeros);
        Self { cin, cout, k, pad: (k - 1) / 2, w, b: bias }
    }

    // Input t feeds output 2t + j - pad, i.e. phase q at position t + off.
    fn phase(&self, j: usize) -> (usize, isize) {
        phase_of(j as isize - self.pad as isize)
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &Tensor<S>) -> Tensor<S> {
        let lout = 2 * x.len;
        let mut yph = [Tensor::zeros(self.cout, x.len), Tensor::zeros(self.cout, x.len)];
        for o in 0..self.cout {
            for ph in &mut yph {
                ph.row_mut(o).fill(p[self.b + o]);
            }
        }
        for i in 0..self.cin {
            let xi = x.row(i);
            for o in 0..self.cout {
                for j in 0..self.k {
                    let (q, off) = self.phase(j);
                    tap(yph[q].row_mut(o), xi, -off, p[self.w + (i * self.cout + o) * self.k + j]);
                }
            }
        }
        interleave(&yph, lout)
    }

    pub fn backward<S: Scalar>(&self, p: &[S], x: &Tensor<S>, gy: &Tensor<S>, g: &mut [S]) -> Tensor<S> {
        let gph = deinterleave(gy);
        let mut gx = Tensor::zeros(self.cin, x.len);
        for o in 0..self.cout {
            g[self.b + o] += dot_tail(gy.row(o), &vec![S::one(); gy.len]);
        }
        for i in 0..self.cin {
            let xi = x.row(i);
            for o in 0..self.cout {
                for j in 0..self.k {
                    let wi = self.w + (i * self.cout + o) * self.k + j;
                    let (q, off) = self.phase(j);
                    let go = gph[q].row(o);
                    // y[t + off] += w x[t]
                    g[wi] += tap_dot(xi, go, off);
                    tap(gx.row_mut(i), go, off, p[wi]);
                }
            }
        }
        gx
    }
}

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Per-channel normalization over time with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct InstanceNorm {
    ch: usize,
    gamma: usize,
    beta: usize,
}

pub(crate) struct NormCache<S> {
    xhat: Tensor<S>,
    inv_std: Vec<S>,
}

impl InstanceNorm {
    pub fn new<R: Rng>(b: &mut Builder<R>, name: &str, ch: usize) -> Self {
        let gamma = b.alloc(&alloc::format!("{name}.gamma"), &[ch], Init::Ones);
        let beta = b.alloc(&alloc::format!("{name}.beta"), &[ch], Init::Zeros);
        Self { ch, gamma, beta }
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &Tensor<S>) -> (Tensor<S>, NormCache<S>) {
        let n = S::of(x.len as f64);
        let mut xhat = x.clone();
        let mut y = Tensor::zeros(self.ch, x.len);
        let mut inv_std = Vec::with_capacity(self.ch);
        for c in 0..self.ch {
            let row = xhat.row_mut(c);
            let mean = row.iter().fold(S::zero(), |a, &v| a + v) / n;
            let var = row.iter().fold(S::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
            let is = S::one() / (var + S::of(NORM_EPS)).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
            let (gm, bt) = (p[self.gamma + c], p[self.beta + c]);
            for (yv, &h) in y.row_mut(c).iter_mut().zip(xhat.row(c)) {
                *yv = gm * h + bt;
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward<S: Scalar>(&self, p: &[S], cache: &NormCache<S>, gy: &Tensor<S>, g: &mut [S]) -> Tensor<S> {
        let n = S::of(gy.len as f64);
        let mut gx = Tensor::zeros(self.ch, gy.len);
        for c in 0..self.ch {
            let (go, xh) = (gy.row(c), cache.xhat.row(c));
            let sum_g = go.iter().fold(S::zero(), |a, &v| a + v);
            let sum_gx = dot(go, xh);
            g[self.gamma + c] += sum_gx;
            g[self.beta + c] += sum_g;
            let k = p[self.gamma + c] * cache.inv_std[c];
            let (mg, mgx) = (sum_g / n, sum_gx / n);
            for ((d, &gv), &h) in gx.row_mut(c).iter_mut().zip(go).zip(xh) {
                *d = k * (gv - mg - h * mgx);
            }
        }
        gx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ConvUnit {
    Plain(Conv),
    /// Three parallel paths (kernels 3, 9, 15) concatenated, then a width-1
    /// reduction back to the nominal feature count.
    Inception { paths: [Conv; 3], reduce: Conv },
}

pub(crate) const INCEPTION_KERNELS: [usize; 3] = [3, 9, 15];

/// Convolution (or inception unit), instance normalization, Swish.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    unit: ConvUnit,
    norm: Option<InstanceNorm>,
}

pub(crate) struct BlockCache<S> {
    x: Tensor<S>,
    paths_out: Option<Tensor<S>>,
    norm: Option<NormCache<S>>,
    pre_act: Tensor<S>,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        b: &mut Builder<R>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        inception: bool,
        norm: bool,
    ) -> Self {
        let unit = if inception {
            let paths = INCEPTION_KERNELS.map(|pk| Conv::new(b, &alloc::format!("{name}.path{pk}"), cin, cout, pk, stride));
            let reduce = Conv::new(b, &alloc::format!("{name}.reduce"), 3 * cout, cout, 1, 1);
            ConvUnit::Inception { paths, reduce }
        } else {
            ConvUnit::Plain(Conv::new(b, &alloc::format!("{name}.conv"), cin, cout, k, stride))
        };
        let norm = norm.then(|| InstanceNorm::new(b, &alloc::format!("{name}.norm"), cout));
        Self { unit, norm }
    }

    pub fn out_channels(&self) -> usize {
        match &self.unit {
            ConvUnit::Plain(c) => c.cout,
            ConvUnit::Inception { reduce, .. } => reduce.cout,
        }
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &Tensor<S>) -> (Tensor<S>, BlockCache<S>) {
        let (u, paths_out) = match &self.unit {
            ConvUnit::Plain(c) => (c.forward(p, x), None),
            ConvUnit::Inception { paths, reduce } => {
                let a = paths[0].forward(p, x);
                let b = paths[1].forward(p, x);
                let c = paths[2].forward(p, x);
                let cat = Tensor::concat(&Tensor::concat(&a, &b), &c);
                (reduce.forward(p, &cat), Some(cat))
            }
        };
        let (pre_act, norm) = match &self.norm {
            Some(n) => {
                let (y, c) = n.forward(p, &u);
                (y, Some(c))
            }
            None => (u, None),
        };
        let mut y = pre_act.clone();
        for v in y.data.iter_mut() {
            *v = swish(*v);
        }
        (y, BlockCache { x: x.clone(), paths_out, norm, pre_act })
    }

    pub fn backward<S: Scalar>(&self, p: &[S], cache: &BlockCache<S>, gy: &Tensor<S>, g: &mut [S]) -> Tensor<S> {
        let mut ga = gy.clone();
        for (d, &a) in ga.data.iter_mut().zip(&cache.pre_act.data) {
            *d *= swish_grad(a);
        }
        let gu = match (&self.norm, &cache.norm) {
            (Some(n), Some(c)) => n.backward(p, c, &ga, g),
            _ => ga,
        };
        match &self.unit {
            ConvUnit::Plain(c) => c.backward(p, &cache.x, &gu, g),
            ConvUnit::Inception { paths, reduce } => {
                let cat = cache.paths_out.as_ref().expect("inception cache");
                let gcat = reduce.backward(p, cat, &gu, g);
                let (ga, rest) = gcat.split(paths[0].cout);
                let (gb, gc) = rest.split(paths[1].cout);
                let mut gx = paths[0].backward(p, &cache.x, &ga, g);
                gx.add_assign(&paths[1].backward(p, &cache.x, &gb, g));
                gx.add_assign(&paths[2].backward(p, &cache.x, &gc, g));
                gx
            }
        }
    }
}

/// Gated recurrent unit over the time axis; hidden size equals the input
/// channel count so the output can replace its input.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Gru {
    h: usize,
    w: usize,
    u: usize,
    bi: usize,
    br: usize,
}

pub(crate) struct GruCache<S> {
    x: Tensor<S>,
    /// Hidden states, time-major, `(len + 1) * h` with the zero state first.
    hs: Vec<S>,
    z: Vec<S>,
    r: Vec<S>,
    n: Vec<S>,
    /// Recurrent pre-activation of the candidate gate, `U_n h + b_n`.
    ghn: Vec<S>,
}

impl Gru {
    pub fn new<R: Rng>(b: &mut Builder<R>, name: &str, h: usize) -> Self {
        let bound = 1.0 / libm::sqrt(h as f64);
        let w = b.alloc(&alloc::format!("{name}.w_input"), &[3 * h, h], Init::Uniform(bound));
        let u = b.alloc(&alloc::format!("{name}.w_recurrent"), &[3 * h, h], Init::Uniform(bound));
        let bi = b.alloc(&alloc::format!("{name}.b_input"), &[3 * h], Init::Zeros);
        let br = b.alloc(&alloc::format!("{name}.b_recurrent"), &[3 * h], Init::Zeros);
        Self { h, w, u, bi, br }
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &Tensor<S>) -> (Tensor<S>, GruCache<S>) {
        let (h, l) = (self.h, x.len);
        let xt = time_major(x);
        let mut hs = vec![S::zero(); (l + 1) * h];
        let (mut z, mut r, mut n, mut ghn) = (vec![S::zero(); l * h], vec![S::zero(); l * h], vec![S::zero(); l * h], vec![S::zero(); l * h]);
        let mut gx = vec![S::zero(); 3 * h];
        let mut gh = vec![S::zero(); 3 * h];
        for t in 0..l {
            let xv = &xt[t * h..(t + 1) * h];
            let hp = hs[t * h..(t + 1) * h].to_vec();
            for q in 0..3 * h {
                gx[q] = p[self.bi + q] + dot(&p[self.w + q * h..self.w + (q + 1) * h], xv);
                gh[q] = p[self.br + q] + dot(&p[self.u + q * h..self.u + (q + 1) * h], &hp);
            }
            for k in 0..h {
                let zk = sigmoid(gx[k] + gh[k]);
                let rk = sigmoid(gx[h + k] + gh[h + k]);
                let nk = (gx[2 * h + k] + rk * gh[2 * h + k]).tanh();
                z[t * h + k] = zk;
                r[t * h + k] = rk;
                n[t * h + k] = nk;
                ghn[t * h + k] = gh[2 * h + k];
                hs[(t + 1) * h + k] = (S::one() - zk) * nk + zk * hp[k];
            }
        }
        let y = channel_major(&hs[h..], h, l);
        (y, GruCache { x: x.clone(), hs, z, r, n, ghn })
    }

    pub fn backward<S: Scalar>(&self, p: &[S], c: &GruCache<S>, gy: &Tensor<S>, g: &mut [S]) -> Tensor<S> {
        let (h, l) = (self.h, gy.len);
        let gyt = time_major(gy);
        let xt = time_major(&c.x);
        let mut gxt = vec![S::zero(); l * h];
        let mut dh = vec![S::zero(); h];
        let mut dgx = vec![S::zero(); 3 * h];
        let mut dgh = vec![S::zero(); 3 * h];
        for t in (0..l).rev() {
            for k in 0..h {
                dh[k] += gyt[t * h + k];
            }
            let hp = &c.hs[t * h..(t + 1) * h];
            for k in 0..h {
                let i = t * h + k;
                let (zk, rk, nk) = (c.z[i], c.r[i], c.n[i]);
                let dz = dh[k] * (hp[k] - nk);
                let dn = dh[k] * (S::one() - zk) * (S::one() - nk * nk);
                let dr = dn * c.ghn[i] * rk * (S::one() - rk);
                let dzp = dz * zk * (S::one() - zk);
                dgx[k] = dzp;
                dgh[k] = dzp;
                dgx[h + k] = dr;
                dgh[h + k] = dr;
                dgx[2 * h + k] = dn;
                dgh[2 * h + k] = dn * rk;
                dh[k] *= zk;
            }
            let xv = &xt[t * h..(t + 1) * h];
            for q in 0..3 * h {
                g[self.bi + q] += dgx[q];
                g[self.br + q] += dgh[q];
                axpy(&mut g[self.w + q * h..self.w + (q + 1) * h], dgx[q], xv);
                axpy(&mut g[self.u + q * h..self.u + (q + 1) * h], dgh[q], hp);
                axpy(&mut gxt[t * h..(t + 1) * h], dgx[q], &p[self.w + q * h..self.w + (q + 1) * h]);
                axpy(&mut dh, dgh[q], &p[self.u + q * h..self.u + (q + 1) * h]);
            }
        }
        channel_major(&gxt, h, l)
    }
}

/// Long short-term memory run forward in time.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Lstm {
    input: usize,
    h: usize,
    w: usize,
    u: usize,
    b: usize,
}

pub(crate) struct LstmCache<S> {
    /// Time-major input, already reversed for the backward direction.
    xt: Vec<S>,
    hs: Vec<S>,
    cs: Vec<S>,
    /// Gate activations i, f, g, o per step, `len * 4h`.
    gates: Vec<S>,
}

impl Lstm {
    pub fn new<R: Rng>(b: &mut Builder<R>, name: &str, input: usize, h: usize) -> Self {
        let bound = 1.0 / libm::sqrt(h as f64);
        let w = b.alloc(&alloc::format!("{name}.w_input"), &[4 * h, input], Init::Uniform(bound));
        let u = b.alloc(&alloc::format!("{name}.w_recurrent"), &[4 * h, h], Init::Uniform(bound));
        let bias = b.alloc(&alloc::format!("{name}.bias"), &[4 * h], Init::Zeros);
        Self { input, h, w, u, b: bias }
    }

    fn forward_seq<S: Scalar>(&self, p: &[S], xt: Vec<S>, l: usize) -> LstmCache<S> {
        let (h, d) = (self.h, self.input);
        let mut hs = vec![S::zero(); (l + 1) * h];
        let mut cs = vec![S::zero(); (l + 1) * h];
        let mut gates = vec![S::zero(); l * 4 * h];
        let mut pre = vec![S::zero(); 4 * h];
        for t in 0..l {
            let xv = &xt[t * d..(t + 1) * d];
            let hp = &hs[t * h..(t + 1) * h];
            for q in 0..4 * h {
                pre[q] = p[self.b + q] + dot(&p[self.w + q * d..self.w + (q + 1) * d], xv) + dot(&p[self.u + q * h..self.u + (q + 1) * h], hp);
            }
            for k in 0..h {
                let ig = sigmoid(pre[k]);
                let fg = sigmoid(pre[h + k]);
                let gg = pre[2 * h + k].tanh();
                let og = sigmoid(pre[3 * h + k]);
                let c = fg * cs[t * h + k] + ig * gg;
                cs[(t + 1) * h + k] = c;
                hs[(t + 1) * h + k] = og * c.tanh();
                let gi = t * 4 * h;
                gates[gi + k] = ig;
                gates[gi + h + k] = fg;
                gates[gi + 2 * h + k] = gg;
                gates[gi + 3 * h + k] = og;
            }
        }
        LstmCache { xt, hs, cs, gates }
    }

    /// Gradient w.r.t. the time-major input given gradients of the hidden states.
    fn backward_seq<S: Scalar>(&self, p: &[S], c: &LstmCache<S>, ght: &[S], l: usize, g: &mut [S]) -> Vec<S> {
        let (h, d) = (self.h, self.input);
        let mut gxt = vec![S::zero(); l * d];
        let mut dh = vec![S::zero(); h];
        let mut dc = vec![S::zero(); h];
        let mut dpre = vec![S::zero(); 4 * h];
        for t in (0..l).rev() {
            for k in 0..h {
                dh[k] += ght[t * h + k];
            }
            let gi = t * 4 * h;
            for k in 0..h {
                let (ig, fg, gg, og) = (c.gates[gi + k], c.gates[gi + h + k], c.gates[gi + 2 * h + k], c.gates[gi + 3 * h + k]);
                let ct = c.cs[(t + 1) * h + k];
                let th = ct.tanh();
                let dct = dc[k] + dh[k] * og * (S::one() - th * th);
                dpre[3 * h + k] = dh[k] * th * og * (S::one() - og);
                dpre[k] = dct * gg * ig * (S::one() - ig);
                dpre[h + k] = dct * c.cs[t * h + k] * fg * (S::one() - fg);
                dpre[2 * h + k] = dct * ig * (S::one() - gg * gg);
                dc[k] = dct * fg;
                dh[k] = S::zero();
            }
            let xv = &c.xt[t * d..(t + 1) * d];
            let hp = &c.hs[t * h..(t + 1) * h];
            for q in 0..4 * h {
                g[self.b + q] += dpre[q];
                axpy(&mut g[self.w + q * d..self.w + (q + 1) * d], dpre[q], xv);
                axpy(&mut g[self.u + q * h..self.u + (q + 1) * h], dpre[q], hp);
                axpy(&mut gxt[t * d..(t + 1) * d], dpre[q], &p[self.w + q * d..self.w + (q + 1) * d]);
                axpy(&mut dh, dpre[q], &p[self.u + q * h..self.u + (q + 1) * h]);
            }
        }
        gxt
    }
}

/// Bidirectional LSTM; output channels are the forward then backward hidden states.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BiLstm {
    fwd: Lstm,
    bwd: Lstm,
}

pub(crate) struct BiLstmCache<S> {
    fwd: LstmCache<S>,
    bwd: LstmCache<S>,
}

pub(crate) const BILSTM_HIDDEN: usize = 16;

impl BiLstm {
    pub fn new<R: Rng>(b: &mut Builder<R>, name: &str, input: usize) -> Self {
        Self {
            fwd: Lstm::new(b, &alloc::format!("{name}.forward"), input, BILSTM_HIDDEN),
            bwd: Lstm::new(b, &alloc::format!("{name}.backward"), input, BILSTM_HIDDEN),
        }
    }

    pub fn out_channels(&self) -> usize {
        2 * BILSTM_HIDDEN
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &Tensor<S>) -> (Tensor<S>, BiLstmCache<S>) {
        let (d, l, h) = (x.channels, x.len, BILSTM_HIDDEN);
        let xt = time_major(x);
        let f = self.fwd.forward_seq(p, xt.clone(), l);
        let b = self.bwd.forward_seq(p, reverse_steps(&xt, d, l), l);
        let mut y = Tensor::zeros(2 * h, l);
        for t in 0..l {
            for k in 0..h {
                y.data[k * l + t] = f.hs[(t + 1) * h + k];
                y.data[(h + k) * l + t] = b.hs[(l - t) * h + k];
            }
        }
        (y, BiLstmCache { fwd: f, bwd: b })
    }

    pub fn backward<S: Scalar>(&self, p: &[S], c: &BiLstmCache<S>, gy: &Tensor<S>, g: &mut [S]) -> Tensor<S> {
        let (l, h, d) = (gy.len, BILSTM_HIDDEN, self.fwd.input);
        let mut gf = vec![S::zero(); l * h];
        let mut gb = vec![S::zero(); l * h];
        for t in 0..l {
            for k in 0..h {
                gf[t * h + k] = gy.data[k * l + t];
                gb[(l - 1 - t) * h + k] = gy.data[(h + k) * l + t];
            }
        }
        let gxf = self.fwd.backward_seq(p, &c.fwd, &gf, l, g);
        let gxb = reverse_steps(&self.bwd.backward_seq(p, &c.bwd, &gb, l, g), d, l);
        let sum: Vec<S> = gxf.iter().zip(&gxb).map(|(&a, &b)| a + b).collect();
        channel_major(&sum, d, l)
    }
}

fn time_major<S: Scalar>(x: &Tensor<S>) -> Vec<S> {
    let (c, l) = x.shape();
    let mut out = vec![S::zero(); c * l];
    for ch in 0..c {
        for (t, &v) in x.row(ch).iter().enumerate() {
            out[t * c + ch] = v;
        }
    }
    out
}

fn channel_major<S: Scalar>(xt: &[S], c: usize, l: usize) -> Tensor<S> {
    let mut y = Tensor::zeros(c, l);
    for t in 0..l {
        for ch in 0..c {
            y.data[ch * l + t] = xt[t * c + ch];
        }
    }
    y
}

fn reverse_steps<S: Scalar>(xt: &[S], d: usize, l: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(xt.len());
    for t in (0..l).rev() {
        out.extend_from_slice(&xt[t * d..(t + 1) * d]);
    }
    out
}

/// Sigmoid of the time-averaged single-channel map, and its derivative helper.
pub(crate) fn mean_sigmoid<S: Scalar>(x: &Tensor<S>) -> (S, S) {
    let m = x.data.iter().fold(S::zero(), |a, &v| a + v) / S::of(x.data.len() as f64);
    (sigmoid(m), m)
}
