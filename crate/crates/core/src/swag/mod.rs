//! Semantic weighting and guidance (SWAG) gate.
//!
//! Given semantic features `f_sem: H×W×C` and detection features `f_od: H×W×D`
//! on the same spatial grid:
//!
//! ```text
//! h_sem = σ(W_sem · f_sem + b_sem)        per site, K outputs
//! h_od  = σ(W_od  · f_od  + b_od)
//! m     = h_od ⊙ h_sem                    (MatchMode::Double applies σ once more to each side)
//! y     = BN(conv1x1(m))                  inference-mode batch norm, C outputs
//! w     = σ(mean over sites of y)         w ∈ (0, 1)^C
//! fused = concat(f_od, w ⊙ f_sem)
//! ```
//!
//! [`swag_backward`] returns exact gradients of a scalar loss with respect to
//! both inputs and every learnable parameter; [`gradcheck`] verifies them
//! against central finite differences.

pub mod gradcheck;

use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, Axis, NdFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::container::{self, ContainerError};

#[derive(Debug, Error)]
pub enum SwagError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),
    #[error("forward output carries no cached intermediates")]
    MissingCache,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("parameter bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Semantic,
    Detection,
}

/// Dense `H × W × C` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<F = f64> {
    pub data: Array3<F>,
    pub kind: FeatureKind,
}

impl<F: NdFloat> FeatureMap<F> {
    pub fn new(data: Array3<F>, kind: FeatureKind) -> Self {
        Self { data, kind }
    }

    pub fn zeros(h: usize, w: usize, c: usize, kind: FeatureKind) -> Self {
        Self { data: Array3::zeros((h, w, c)), kind }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    /// Nearest-neighbour resampling onto an `h × w` grid.
    pub fn resample_nearest(&self, h: usize, w: usize) -> Self {
        let (sh, sw, c) = self.dims();
        let mut out = Array3::zeros((h, w, c));
        for i in 0..h {
            let si = (i * sh) / h.max(1);
            for j in 0..w {
                let sj = (j * sw) / w.max(1);
                out.slice_mut(s![i, j, ..]).assign(&self.data.slice(s![si, sj, ..]));
            }
        }
        Self { data: out, kind: self.kind }
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// How the two embeddings are combined into the match map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// `m = h_od ⊙ h_sem`.
    #[default]
    Single,
    /// `m = σ(h_od) ⊙ σ(h_sem)`.
    Double,
}

/// Channel counts: semantic `C`, detection `D`, embedding `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwagDims {
    pub c_sem: usize,
    pub d_od: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwagParams<F = f64> {
    /// `K × C`.
    pub w_sem: Array2<F>,
    pub b_sem: Array1<F>,
    /// `K × D`.
    pub w_od: Array2<F>,
    pub b_od: Array1<F>,
    /// 1×1 convolution kernel, `C × K`.
    pub conv: Array2<F>,
    pub bn_gamma: Array1<F>,
    pub bn_beta: Array1<F>,
    pub bn_mean: Array1<F>,
    /// Running variance; strictly positive.
    pub bn_var: Array1<F>,
    pub bn_eps: F,
    pub match_mode: MatchMode,
}

impl<F: NdFloat> SwagParams<F> {
    /// All weights zero, identity batch norm.
    pub fn zeros(d: SwagDims) -> Self {
        Self {
            w_sem: Array2::zeros((d.k, d.c_sem)),
            b_sem: Array1::zeros(d.k),
            w_od: Array2::zeros((d.k, d.d_od)),
            b_od: Array1::zeros(d.k),
            conv: Array2::zeros((d.c_sem, d.k)),
            bn_gamma: Array1::ones(d.c_sem),
            bn_beta: Array1::zeros(d.c_sem),
            bn_mean: Array1::zeros(d.c_sem),
            bn_var: Array1::ones(d.c_sem),
            bn_eps: F::from(1e-5).unwrap(),
            match_mode: MatchMode::Single,
        }
    }

    pub fn dims(&self) -> SwagDims {
        SwagDims { c_sem: self.w_sem.ncols(), d_od: self.w_od.ncols(), k: self.w_sem.nrows() }
    }

    pub fn validate(&self) -> Result<SwagDims, SwagError> {
        let d = self.dims();
        let checks = [
            ("b_sem", self.b_sem.len() == d.k),
            ("w_od", self.w_od.nrows() == d.k),
            ("b_od", self.b_od.len() == d.k),
            ("conv", self.conv.dim() == (d.c_sem, d.k)),
            ("bn_gamma", self.bn_gamma.len() == d.c_sem),
            ("bn_beta", self.bn_beta.len() == d.c_sem),
            ("bn_mean", self.bn_mean.len() == d.c_sem),
            ("bn_var", self.bn_var.len() == d.c_sem),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(SwagError::InvalidParams(format!("{name} has an inconsistent shape")));
        }
        if self.bn_var.iter().any(|&v| !(v > F::zero())) {
            return Err(SwagError::InvalidParams("running variance must be positive".into()));
        }
        if !(self.bn_eps >= F::zero()) {
            return Err(SwagError::InvalidParams("bn_eps must be non-negative".into()));
        }
        Ok(d)
    }
}

impl SwagParams<f64> {
    /// Seeded random parameters of moderate scale.
    pub fn random(d: SwagDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |lo: f64, hi: f64, n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(lo..hi)).collect() };
        let mat = |r: usize, c: usize, v: Vec<f64>| Array2::from_shape_vec((r, c), v).expect("shape");
        Self {
            w_sem: mat(d.k, d.c_sem, uniform(-1.0, 1.0, d.k * d.c_sem)),
            b_sem: Array1::from(uniform(-0.5, 0.5, d.k)),
            w_od: mat(d.k, d.d_od, uniform(-1.0, 1.0, d.k * d.d_od)),
            b_od: Array1::from(uniform(-0.5, 0.5, d.k)),
            conv: mat(d.c_sem, d.k, uniform(-1.0, 1.0, d.c_sem * d.k)),
            bn_gamma: Array1::from(uniform(0.5, 1.5, d.c_sem)),
            bn_beta: Array1::from(uniform(-0.5, 0.5, d.c_sem)),
            bn_mean: Array1::from(uniform(-0.5, 0.5, d.c_sem)),
            bn_var: Array1::from(uniform(0.5, 2.0, d.c_sem)),
            bn_eps: 1e-5,
            match_mode: MatchMode::Single,
        }
    }

    /// Narrowed copy for single-precision benchmarking.
    pub fn to_f32(&self) -> SwagParams<f32> {
        let v = |a: &Array1<f64>| a.mapv(|x| x as f32);
        let m = |a: &Array2<f64>| a.mapv(|x| x as f32);
        SwagParams {
            w_sem: m(&self.w_sem),
            b_sem: v(&self.b_sem),
            w_od: m(&self.w_od),
            b_od: v(&self.b_od),
            conv: m(&self.conv),
            bn_gamma: v(&self.bn_gamma),
            bn_beta: v(&self.bn_beta),
            bn_mean: v(&self.bn_mean),
            bn_var: v(&self.bn_var),
            bn_eps: self.bn_eps as f32,
            match_mode: self.match_mode,
        }
    }
}

/// Intermediates retained by the forward pass, flattened to `sites × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwagCache<F = f64> {
    f_sem: Array2<F>,
    f_od: Array2<F>,
    h_sem: Array2<F>,
    h_od: Array2<F>,
    g_sem: Array2<F>,
    g_od: Array2<F>,
    m: Array2<F>,
    q_hat: Array2<F>,
    inv_std: Array1<F>,
    params: SwagParams<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwagOutput<F = f64> {
    /// `H × W × K`.
    pub match_map: Array3<F>,
    /// Per-channel gate `w`, length `C`.
    pub weights: Array1<F>,
    /// `w ⊙ f_sem`, `H × W × C`.
    pub weighted_sem: Array3<F>,
    /// `concat(f_od, w ⊙ f_sem)`, `H × W × (D + C)`.
    pub fused: Array3<F>,
    cache: Option<SwagCache<F>>,
}

impl<F> SwagOutput<F> {
    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Releases cached intermediates; [`swag_backward`] then fails.
    pub fn drop_cache(&mut self) {
        self.cache = None;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwagGrads<F = f64> {
    pub f_sem: Array3<F>,
    pub f_od: Array3<F>,
    pub w_sem: Array2<F>,
    pub b_sem: Array1<F>,
    pub w_od: Array2<F>,
    pub b_od: Array1<F>,
    pub conv: Array2<F>,
    pub bn_gamma: Array1<F>,
    pub bn_beta: Array1<F>,
}

#[inline]
pub fn sigmoid<F: NdFloat>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn flatten<F: NdFloat>(a: &Array3<F>) -> Array2<F> {
    let (h, w, c) = a.dim();
    a.as_standard_layout()
        .into_owned()
        .into_shape_with_order((h * w, c))
        .expect("standard layout")
}

fn unflatten<F: NdFloat>(a: Array2<F>, h: usize, w: usize) -> Array3<F> {
    let c = a.ncols();
    a.as_standard_layout()
        .into_owned()
        .into_shape_with_order((h, w, c))
        .expect("standard layout")
}

fn affine<F: NdFloat>(x: &Array2<F>, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
    x.dot(&w.t()) + b
}

fn check_finite<F: NdFloat>(a: ArrayView2<F>, stage: &'static str) -> Result<(), SwagError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SwagError::NonFiniteActivation(stage))
    }
}

/// Runs the gate and fusion. Detection features must already share the
/// semantic map's `H × W` (see [`FeatureMap::resample_nearest`]).
pub fn swag_forward<F: NdFloat>(
    f_sem: &FeatureMap<F>,
    f_od: &FeatureMap<F>,
    p: &SwagParams<F>,
) -> Result<SwagOutput<F>, SwagError> {
    let d = p.validate()?;
    let (h, w, c) = f_sem.dims();
    let (ho, wo, dd) = f_od.dims();
    if (ho, wo) != (h, w) {
        return Err(SwagError::ShapeMismatch(format!(
            "detection grid {ho}x{wo} differs from semantic grid {h}x{w}"
        )));
    }
    if c != d.c_sem || dd != d.d_od {
        return Err(SwagError::ShapeMismatch(format!(
            "feature channels (C={c}, D={dd}) do not match parameters (C={}, D={})",
            d.c_sem, d.d_od
        )));
    }
    if h * w == 0 {
        return Err(SwagError::ShapeMismatch("empty spatial grid".into()));
    }
    if !f_sem.is_finite() || !f_od.is_finite() {
        return Err(SwagError::NonFiniteActivation("input"));
    }

    let sites = F::from(h * w).unwrap();
    let fs = flatten(&f_sem.data);
    let fo = flatten(&f_od.data);
    let h_sem = affine(&fs, &p.w_sem, &p.b_sem).mapv(sigmoid);
    let h_od = affine(&fo, &p.w_od, &p.b_od).mapv(sigmoid);
    let (g_sem, g_od) = match p.match_mode {
        MatchMode::Single => (h_sem.clone(), h_od.clone()),
        MatchMode::Double => (h_sem.mapv(sigmoid), h_od.mapv(sigmoid)),
    };
    let m = &g_od * &g_sem;

    let inv_std = (&p.bn_var + p.bn_eps).mapv(|v| F::one() / v.sqrt());
    let q_hat = (m.dot(&p.conv.t()) - &p.bn_mean) * &inv_std;
    let y = &q_hat * &p.bn_gamma + &p.bn_beta;
    check_finite(y.view(), "batch norm")?;
    let weights = (y.sum_axis(Axis(0)) / sites).mapv(sigmoid);

    let weighted = &fs * &weights;
    let fused = concatenate(Axis(1), &[fo.view(), weighted.view()]).expect("same number of sites");
    check_finite(fused.view(), "fusion")?;

    Ok(SwagOutput {
        match_map: unflatten(m.clone(), h, w),
        weights,
        weighted_sem: unflatten(weighted, h, w),
        fused: unflatten(fused, h, w),
        cache: Some(SwagCache { f_sem: fs, f_od: fo, h_sem, h_od, g_sem, g_od, m, q_hat, inv_std, params: p.clone() }),
    })
}

/// Gradients of a scalar loss given `∂L/∂fused`.
pub fn swag_backward<F: NdFloat>(out: &SwagOutput<F>, grad_fused: &Array3<F>) -> Result<SwagGrads<F>, SwagError> {
    let cache = out.cache.as_ref().ok_or(SwagError::MissingCache)?;
    let p = &cache.params;
    let (h, w, _) = out.fused.dim();
    if grad_fused.dim() != out.fused.dim() {
        return Err(SwagError::ShapeMismatch(format!(
            "upstream gradient {:?} differs from fused output {:?}",
            grad_fused.dim(),
            out.fused.dim()
        )));
    }
    let d = p.dims();
    let sites = F::from(h * w).unwrap();
    let g = flatten(grad_fused);
    let g_od_direct = g.slice(s![.., ..d.d_od]);
    let g_weighted = g.slice(s![.., d.d_od..]);

    // Gate and weighted features.
    let d_weights = (&g_weighted * &cache.f_sem).sum_axis(Axis(0));
    let mut d_fsem = &g_weighted * &out.weights;
    let d_ybar = &d_weights * &out.weights.mapv(|v| v * (F::one() - v));

    // Batch norm over the spatial mean: every site receives d_ybar / S.
    let d_beta = d_ybar.clone();
    let d_gamma = &d_ybar * &(cache.q_hat.sum_axis(Axis(0)) / sites);
    let d_q_row = &d_ybar * &p.bn_gamma * &cache.inv_std / sites;

    // 1×1 convolution: q = m · convᵀ with identical upstream rows.
    let d_conv = outer(&d_q_row, &cache.m.sum_axis(Axis(0)));
    let d_m_row = d_q_row.dot(&p.conv);
    let d_m = Array2::from_shape_fn(cache.m.dim(), |(_, k)| d_m_row[k]);

    let mut d_hod = &d_m * &cache.g_sem;
    let mut d_hsem = &d_m * &cache.g_od;
    if p.match_mode == MatchMode::Double {
        d_hod = d_hod * cache.g_od.mapv(|v| v * (F::one() - v));
        d_hsem = d_hsem * cache.g_sem.mapv(|v| v * (F::one() - v));
    }
    let d_asem = d_hsem * cache.h_sem.mapv(|v| v * (F::one() - v));
    let d_aod = d_hod * cache.h_od.mapv(|v| v * (F::one() - v));

    d_fsem = d_fsem + d_asem.dot(&p.w_sem);
    let d_fod = &g_od_direct + &d_aod.dot(&p.w_od);

    Ok(SwagGrads {
        f_sem: unflatten(d_fsem, h, w),
        f_od: unflatten(d_fod, h, w),
        w_sem: d_asem.t().dot(&cache.f_sem),
        b_sem: d_asem.sum_axis(Axis(0)),
        w_od: d_aod.t().dot(&cache.f_od),
        b_od: d_aod.sum_axis(Axis(0)),
        conv: d_conv,
        bn_gamma: d_gamma,
        bn_beta: d_beta,
    })
}

fn outer<F: NdFloat>(a: &Array1<F>, b: &Array1<F>) -> Array2<F> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// Unweighted channel concatenation `concat(f_od, f_sem)`.
pub fn naive_concat_baseline<F: NdFloat>(f_sem: &FeatureMap<F>, f_od: &FeatureMap<F>) -> Result<Array3<F>, SwagError> {
    let (h, w, _) = f_sem.dims();
    let (ho, wo, _) = f_od.dims();
    if (h, w) != (ho, wo) {
        return Err(SwagError::ShapeMismatch(format!(
            "detection grid {ho}x{wo} differs from semantic grid {h}x{w}"
        )));
    }
    Ok(concatenate(Axis(2), &[f_od.data.view(), f_sem.data.view()]).expect("same grid"))
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleManifest {
    dims: SwagDims,
    bn_eps: f64,
    match_mode: MatchMode,
    tensors: Vec<BundleEntry>,
}

pub const BUNDLE_MANIFEST: &str = "manifest.json";

impl SwagParams<f64> {
    fn named(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let m = |a: &Array2<f64>| vec![a.nrows(), a.ncols()];
        let v = |a: &Array1<f64>| vec![a.len()];
        fn sl2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn sl1(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("contiguous")
        }
        vec![
            ("w_sem", m(&self.w_sem), sl2(&self.w_sem)),
            ("b_sem", v(&self.b_sem), sl1(&self.b_sem)),
            ("w_od", m(&self.w_od), sl2(&self.w_od)),
            ("b_od", v(&self.b_od), sl1(&self.b_od)),
            ("conv", m(&self.conv), sl2(&self.conv)),
            ("bn_gamma", v(&self.bn_gamma), sl1(&self.bn_gamma)),
            ("bn_beta", v(&self.bn_beta), sl1(&self.bn_beta)),
            ("bn_mean", v(&self.bn_mean), sl1(&self.bn_mean)),
            ("bn_var", v(&self.bn_var), sl1(&self.bn_var)),
        ]
    }

    /// Writes one `.bevg` (f64) file per tensor plus `manifest.json`.
    /// A vector of length `n` is stored as `n × 1 × 1`, a matrix `r × c` as `r × c × 1`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), SwagError> {
        let dims = self.validate()?;
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut tensors = Vec::new();
        for (name, shape, data) in self.named() {
            let file = format!("{name}.bevg");
            let (hh, ww) = (shape[0], shape.get(1).copied().unwrap_or(1));
            fs::write(dir.join(&file), container::encode_f64(hh, ww, 1, data)?)?;
            tensors.push(BundleEntry { name: name.into(), shape, file });
        }
        let manifest = BundleManifest { dims, bn_eps: self.bn_eps, match_mode: self.match_mode, tensors };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| SwagError::Bundle(e.to_string()))?;
        fs::write(dir.join(BUNDLE_MANIFEST), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SwagError> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(BUNDLE_MANIFEST))?;
        let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| SwagError::Bundle(e.to_string()))?;
        let mut params = SwagParams::<f64>::zeros(manifest.dims);
        params.bn_eps = manifest.bn_eps;
        params.match_mode = manifest.match_mode;
        for entry in &manifest.tensors {
            let (header, data) = container::decode_f64(&fs::read(dir.join(&entry.file))?)?;
            let expected: usize = entry.shape.iter().product();
            if header.elements() != expected {
                return Err(SwagError::Bundle(format!("{}: shape does not match manifest", entry.name)));
            }
            let as2 = |r: usize, c: usize| {
                Array2::from_shape_vec((r, c), data.clone()).map_err(|e| SwagError::Bundle(e.to_string()))
            };
            let shape2 = || -> Result<(usize, usize), SwagError> {
                match entry.shape.as_slice() {
                    [r, c] => Ok((*r, *c)),
                    _ => Err(SwagError::Bundle(format!("{}: expected a matrix", entry.name))),
                }
            };
            match entry.name.as_str() {
                "w_sem" => params.w_sem = { let (r, c) = shape2()?; as2(r, c)? },
                "w_od" => params.w_od = { let (r, c) = shape2()?; as2(r, c)? },
                "conv" => params.conv = { let (r, c) = shape2()?; as2(r, c)? },
                "b_sem" => params.b_sem = Array1::from(data),
                "b_od" => params.b_od = Array1::from(data),
                "bn_gamma" => params.bn_gamma = Array1::from(data),
                "bn_beta" => params.bn_beta = Array1::from(data),
                "bn_mean" => params.bn_mean = Array1::from(data),
                "bn_var" => params.bn_var = Array1::from(data),
                other => return Err(SwagError::Bundle(format!("unknown tensor {other:?}"))),
            }
        }
        if params.dims() != manifest.dims {
            return Err(SwagError::Bundle("tensor shapes disagree with manifest dims".into()));
        }
        params.validate()?;
        Ok(params)
    }
}
