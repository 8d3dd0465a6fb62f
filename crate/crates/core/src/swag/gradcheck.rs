//! Central finite-difference check of [`swag_backward`](super::swag_backward).
//!
//! The scalar probed is `L = Σ upstream ⊙ fused`. Each input and learnable
//! parameter entry is perturbed by `±step`; the numeric slope is compared to
//! the analytic gradient with error `|a − n| / max(1, |a|, |n|)`.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{swag_backward, swag_forward, FeatureKind, FeatureMap, SwagDims, SwagError, SwagGrads, SwagParams};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

/// Spatial size plus channel counts of one check instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceShape {
    pub height: usize,
    pub width: usize,
    pub dims: SwagDims,
}

impl InstanceShape {
    /// Random shape with every extent in `1..=max`.
    pub fn random(seed: u64, max: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_4150_4553_4545);
        let mut pick = || rng.gen_range(1..=max.max(1));
        Self { height: pick(), width: pick(), dims: SwagDims { c_sem: pick(), d_od: pick(), k: pick() } }
    }
}

/// Random inputs, parameters and upstream gradient for one check.
#[derive(Debug, Clone)]
pub struct Instance {
    pub f_sem: FeatureMap<f64>,
    pub f_od: FeatureMap<f64>,
    pub params: SwagParams<f64>,
    pub upstream: Array3<f64>,
}

impl Instance {
    pub fn random(shape: InstanceShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let InstanceShape { height: h, width: w, dims } = shape;
        let mut field = |c: usize| Array3::from_shape_simple_fn((h, w, c), || rng.gen_range(-1.0..1.0));
        let f_sem = FeatureMap::new(field(dims.c_sem), FeatureKind::Semantic);
        let f_od = FeatureMap::new(field(dims.d_od), FeatureKind::Detection);
        let upstream = field(dims.c_sem + dims.d_od);
        let params = SwagParams::random(dims, seed.wrapping_add(0x9E37_79B9));
        Self { f_sem, f_od, params, upstream }
    }

    fn loss(&self) -> Result<f64, SwagError> {
        let out = swag_forward(&self.f_sem, &self.f_od, &self.params)?;
        Ok((&out.fused * &self.upstream).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: String,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error <= tolerance
    }
}

pub fn scaled_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Mutable access to the `idx`-th entry of a named tensor in the instance.
fn entry<'a>(inst: &'a mut Instance, name: &str, idx: usize) -> &'a mut f64 {
    let p = &mut inst.params;
    let slot = match name {
        "f_sem" => inst.f_sem.data.as_slice_mut(),
        "f_od" => inst.f_od.data.as_slice_mut(),
        "w_sem" => p.w_sem.as_slice_mut(),
        "b_sem" => p.b_sem.as_slice_mut(),
        "w_od" => p.w_od.as_slice_mut(),
        "b_od" => p.b_od.as_slice_mut(),
        "conv" => p.conv.as_slice_mut(),
        "bn_gamma" => p.bn_gamma.as_slice_mut(),
        "bn_beta" => p.bn_beta.as_slice_mut(),
        _ => unreachable!("unknown tensor {name}"),
    };
    &mut slot.expect("standard layout")[idx]
}

fn analytic_entries(g: &SwagGrads<f64>) -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("f_sem", g.f_sem.iter().copied().collect()),
        ("f_od", g.f_od.iter().copied().collect()),
        ("w_sem", g.w_sem.iter().copied().collect()),
        ("b_sem", g.b_sem.to_vec()),
        ("w_od", g.w_od.iter().copied().collect()),
        ("b_od", g.b_od.to_vec()),
        ("conv", g.conv.iter().copied().collect()),
        ("bn_gamma", g.bn_gamma.to_vec()),
        ("bn_beta", g.bn_beta.to_vec()),
    ]
}

/// Compares every analytic gradient entry with a central difference.
pub fn check_instance(inst: &Instance, step: f64) -> Result<GradCheckReport, SwagError> {
    let out = swag_forward(&inst.f_sem, &inst.f_od, &inst.params)?;
    let grads = swag_backward(&out, &inst.upstream)?;
    let mut probe = inst.clone();
    let mut report = GradCheckReport { checked: 0, max_error: 0.0, worst: String::new() };
    for (name, analytic) in analytic_entries(&grads) {
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = *entry(&mut probe, name, idx);
            *entry(&mut probe, name, idx) = orig + step;
            let plus = probe.loss()?;
            *entry(&mut probe, name, idx) = orig - step;
            let minus = probe.loss()?;
            *entry(&mut probe, name, idx) = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = scaled_error(a, numeric);
            report.checked += 1;
            if report.worst.is_empty() || err > report.max_error {
                report.max_error = err;
                report.worst = format!("{name}[{idx}]");
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance_passes() {
        let shape = InstanceShape { height: 3, width: 2, dims: SwagDims { c_sem: 3, d_od: 2, k: 2 } };
        let r = check_instance(&Instance::random(shape, 3), DEFAULT_STEP).unwrap();
        assert_eq!(r.checked, 3 * 2 * 3 + 3 * 2 * 2 + 2 * 3 + 2 + 2 * 2 + 2 + 3 * 2 + 3 + 3);
        assert!(r.passes(DEFAULT_TOLERANCE), "{r:?}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        assert!(scaled_error(2.0, 2.0 + 1e-3) > DEFAULT_TOLERANCE);
        assert!(scaled_error(1e-9, 0.0) < 1e-8);
    }

    #[test]
    fn random_shapes_are_bounded() {
        for seed in 0..50 {
            let s = InstanceShape::random(seed, 8);
            for v in [s.height, s.width, s.dims.c_sem, s.dims.d_od, s.dims.k] {
                assert!((1..=8).contains(&v));
            }
        }
    }
}
