//! Random scaling, rotation and translation of oriented boxes.
//!
//! Stream-consumption contract (golden files depend on it): per eligible box,
//! stages run in the order scale → rotate → translate; a disabled stage draws
//! nothing; isotropic scaling/translation draws one value, anisotropic two
//! (x first). Boxes gated by `gamma` draw nothing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, OrientedBox};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Default configuration file shipped with the crate.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../config/nbbox-default.toml");

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("invalid noise config: {0}")]
    InvalidConfig(String),
    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: String },
}

impl TransformError {
    fn record(index: usize, e: GeometryError) -> Self {
        Self::InvalidRecord { index, reason: e.to_string() }
    }
}

/// Full noise-injection hyper-parameter set.
///
/// Missing keys in a config file fall back to [`NoiseConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub scale_enabled: bool,
    pub s_min: f64,
    pub s_max: f64,
    pub isotropic_scale: bool,
    pub rotate_enabled: bool,
    /// degrees
    pub r_min: f64,
    /// degrees
    pub r_max: f64,
    pub translate_enabled: bool,
    /// pixels
    pub t_min: i64,
    /// pixels
    pub t_max: i64,
    pub isotropic_translate: bool,
    /// Boxes with `w <= gamma` or `h <= gamma` are left untouched.
    pub gamma: u32,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            scale_enabled: true,
            s_min: 0.99,
            s_max: 1.01,
            isotropic_scale: true,
            rotate_enabled: true,
            r_min: -0.01,
            r_max: 0.01,
            translate_enabled: true,
            t_min: -1,
            t_max: 1,
            isotropic_translate: true,
            gamma: 16,
        }
    }
}

impl NoiseConfig {
    /// All stages disabled.
    pub fn disabled() -> Self {
        Self { scale_enabled: false, rotate_enabled: false, translate_enabled: false, ..Self::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TransformError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let bad = |m: String| Err(TransformError::InvalidConfig(m));
        if !(self.s_min.is_finite() && self.s_max.is_finite() && self.r_min.is_finite() && self.r_max.is_finite()) {
            return bad("ranges must be finite".into());
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max) {
            return bad(format!("need 0 < s_min <= s_max, got [{}, {}]", self.s_min, self.s_max));
        }
        if self.r_min > self.r_max {
            return bad(format!("need r_min <= r_max, got [{}, {}]", self.r_min, self.r_max));
        }
        if self.t_min > self.t_max {
            return bad(format!("need t_min <= t_max, got [{}, {}]", self.t_min, self.t_max));
        }
        Ok(())
    }

    /// True when a box of this size is left untouched.
    pub fn is_gated<T: Scalar>(&self, b: &OrientedBox<T>) -> bool {
        let gamma = T::lit(self.gamma as f64);
        b.w <= gamma || b.h <= gamma
    }
}

/// One labeled object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord<T> {
    pub bbox: OrientedBox<T>,
    pub category: String,
    /// 0 = normal; anything else is treated as difficult.
    pub difficulty: u32,
}

impl<T: Scalar> AnnotationRecord<T> {
    pub fn new(bbox: OrientedBox<T>, category: impl Into<String>, difficulty: u32) -> Self {
        Self { bbox, category: category.into(), difficulty }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.category.is_empty() {
            return Err(GeometryError::InvalidBox("empty category".into()));
        }
        self.bbox.validate()
    }
}

/// Uniform draw in `[a, c)`; a zero-width range still consumes one draw and returns `a`.
fn draw_float(rng: &mut RngStream, a: f64, c: f64) -> f64 {
    if a == c {
        rng.next_u64();
        return a;
    }
    rng.rand_float(a, c).expect("validated range")
}

fn draw_int(rng: &mut RngStream, a: i64, c: i64) -> i64 {
    rng.rand_int(a, c).expect("validated range")
}

pub fn noisy_scale<T: Scalar>(b: &OrientedBox<T>, cfg: &NoiseConfig, rng: &mut RngStream) -> Result<OrientedBox<T>, TransformError> {
    cfg.validate()?;
    if !cfg.scale_enabled {
        return Ok(*b);
    }
    let alpha = draw_float(rng, cfg.s_min, cfg.s_max);
    let beta = if cfg.isotropic_scale { alpha } else { draw_float(rng, cfg.s_min, cfg.s_max) };
    Ok(OrientedBox { w: b.w * T::lit(alpha), h: b.h * T::lit(beta), ..*b })
}

pub fn noisy_rotate<T: Scalar>(b: &OrientedBox<T>, cfg: &NoiseConfig, rng: &mut RngStream) -> Result<OrientedBox<T>, TransformError> {
    cfg.validate()?;
    if !cfg.rotate_enabled {
        return Ok(*b);
    }
    let r = draw_float(rng, cfg.r_min, cfg.r_max);
    let theta = if r == 0.0 { b.theta } else { b.theta + T::lit(r) };
    Ok(OrientedBox { theta, ..*b })
}

pub fn noisy_translate<T: Scalar>(b: &OrientedBox<T>, cfg: &NoiseConfig, rng: &mut RngStream) -> Result<OrientedBox<T>, TransformError> {
    cfg.validate()?;
    if !cfg.translate_enabled {
        return Ok(*b);
    }
    let tx = draw_int(rng, cfg.t_min, cfg.t_max);
    let ty = if cfg.isotropic_translate { tx } else { draw_int(rng, cfg.t_min, cfg.t_max) };
    let shift = |v: T, t: i64| if t == 0 { v } else { v + T::lit(t as f64) };
    Ok(OrientedBox { x_c: shift(b.x_c, tx), y_c: shift(b.y_c, ty), ..*b })
}

/// Result of a traced application: the new records and which inputs were gated.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOutcome<T> {
    pub records: Vec<AnnotationRecord<T>>,
    pub gated: Vec<bool>,
}

impl<T> NoiseOutcome<T> {
    pub fn gated_count(&self) -> usize {
        self.gated.iter().filter(|g| **g).count()
    }
}

/// Applies noise to every eligible record, in order. All inputs are
/// validated before any draw, so an error never leaves partial output.
pub fn nbbox_apply<T: Scalar>(
    labels: &[AnnotationRecord<T>],
    cfg: &NoiseConfig,
    rng: &mut RngStream,
) -> Result<Vec<AnnotationRecord<T>>, TransformError> {
    nbbox_apply_traced(labels, cfg, rng).map(|o| o.records)
}

pub fn nbbox_apply_traced<T: Scalar>(
    labels: &[AnnotationRecord<T>],
    cfg: &NoiseConfig,
    rng: &mut RngStream,
) -> Result<NoiseOutcome<T>, TransformError> {
    cfg.validate()?;
    for (i, rec) in labels.iter().enumerate() {
        rec.validate().map_err(|e| TransformError::record(i, e))?;
    }
    let mut records = Vec::with_capacity(labels.len());
    let mut gated = Vec::with_capacity(labels.len());
    for rec in labels {
        if cfg.is_gated(&rec.bbox) {
            records.push(rec.clone());
            gated.push(true);
            continue;
        }
        let b = noisy_scale(&rec.bbox, cfg, rng)?;
        let b = noisy_rotate(&b, cfg, rng)?;
        let b = noisy_translate(&b, cfg, rng)?;
        records.push(AnnotationRecord { bbox: b, ..rec.clone() });
        gated.push(false);
    }
    Ok(NoiseOutcome { records, gated })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: f64, y: f64, w: f64, h: f64, t: f64) -> OrientedBox<f64> {
        OrientedBox::new(x, y, w, h, t).unwrap()
    }

    fn only_scale(iso: bool) -> NoiseConfig {
        NoiseConfig { rotate_enabled: false, translate_enabled: false, isotropic_scale: iso, gamma: 0, ..NoiseConfig::default() }
    }

    #[test]
    fn shipped_default_matches_builtin() {
        assert_eq!(NoiseConfig::from_toml_str(DEFAULT_CONFIG_TOML).unwrap(), NoiseConfig::default());
        let back = NoiseConfig::from_toml_str(&NoiseConfig::default().to_toml_string()).unwrap();
        assert_eq!(back, NoiseConfig::default());
    }

    #[test]
    fn config_validation() {
        assert!(NoiseConfig { s_min: 0.0, ..NoiseConfig::default() }.validate().is_err());
        assert!(NoiseConfig { s_min: 1.2, s_max: 1.1, ..NoiseConfig::default() }.validate().is_err());
        assert!(NoiseConfig { r_min: 1.0, r_max: -1.0, ..NoiseConfig::default() }.validate().is_err());
        assert!(NoiseConfig { t_min: 2, t_max: 1, ..NoiseConfig::default() }.validate().is_err());
        assert!(NoiseConfig::from_toml_str("bogus = 1").is_err());
        let partial = NoiseConfig::from_toml_str("gamma = 8\nisotropic_scale = false").unwrap();
        assert_eq!(partial.gamma, 8);
        assert!(!partial.isotropic_scale);
        assert_eq!(partial.s_min, 0.99);
    }

    #[test]
    fn identity_scale() {
        let cfg = NoiseConfig { s_min: 1.0, s_max: 1.0, ..only_scale(false) };
        let b = bx(3.0, 4.0, 10.0, 4.0, 12.5);
        assert_eq!(noisy_scale(&b, &cfg, &mut RngStream::new(1)).unwrap(), b);
    }

    #[test]
    fn isotropic_scale_uses_one_draw() {
        let cfg = only_scale(true);
        let b = bx(0.0, 0.0, 10.0, 4.0, 0.0);
        let mut rng = RngStream::new(9);
        let mut replay = rng.clone();
        let out = noisy_scale(&b, &cfg, &mut rng).unwrap();
        let alpha = replay.rand_float(0.99, 1.01).unwrap();
        assert_eq!((out.w, out.h), (10.0 * alpha, 4.0 * alpha));
        assert!((out.w / out.h - 2.5).abs() < 1e-12);
        assert_eq!(rng.next_u64(), replay.next_u64());
    }

    #[test]
    fn anisotropic_scale_uses_two_draws() {
        let cfg = only_scale(false);
        let b = bx(0.0, 0.0, 10.0, 4.0, 0.0);
        let mut rng = RngStream::new(9);
        let mut replay = rng.clone();
        let out = noisy_scale(&b, &cfg, &mut rng).unwrap();
        let alpha = replay.rand_float(0.99, 1.01).unwrap();
        let beta = replay.rand_float(0.99, 1.01).unwrap();
        assert_eq!((out.w, out.h), (10.0 * alpha, 4.0 * beta));
        assert_eq!((out.x_c, out.y_c, out.theta), (0.0, 0.0, 0.0));
        assert_eq!(rng.next_u64(), replay.next_u64());
    }

    #[test]
    fn pinned_scale_factors() {
        // the arithmetic the stage performs once alpha/beta are pinned
        let b = bx(0.0, 0.0, 10.0, 4.0, 0.0);
        let iso = OrientedBox { w: b.w * 1.01, h: b.h * 1.01, ..b };
        assert!((iso.w - 10.1).abs() < 1e-12 && (iso.h - 4.04).abs() < 1e-12);
        let aniso = OrientedBox { w: b.w * 0.99, h: b.h * 1.01, ..b };
        assert!((aniso.w - 9.9).abs() < 1e-12 && (aniso.h - 4.04).abs() < 1e-12);
    }

    #[test]
    fn rotation_adds_without_normalizing() {
        let cfg = NoiseConfig { scale_enabled: false, translate_enabled: false, r_min: 0.01, r_max: 0.01, ..NoiseConfig::default() };
        let out = noisy_rotate(&bx(1.0, 2.0, 3.0, 4.0, 30.0), &cfg, &mut RngStream::new(0)).unwrap();
        assert!((out.theta - 30.01).abs() < 1e-12);
        assert_eq!((out.x_c, out.y_c, out.w, out.h), (1.0, 2.0, 3.0, 4.0));
        let edge = noisy_rotate(&bx(0.0, 0.0, 3.0, 4.0, 89.995), &cfg, &mut RngStream::new(0)).unwrap();
        assert!((edge.theta - 90.005).abs() < 1e-12);
        let off = NoiseConfig { rotate_enabled: false, ..cfg };
        let b = bx(0.0, 0.0, 3.0, 4.0, 10.0);
        assert_eq!(noisy_rotate(&b, &off, &mut RngStream::new(0)).unwrap(), b);
    }

    #[test]
    fn translation_cases() {
        let base = NoiseConfig { scale_enabled: false, rotate_enabled: false, ..NoiseConfig::default() };
        let b = bx(100.0, 50.0, 20.0, 20.0, 0.0);
        let zero = NoiseConfig { t_min: 0, t_max: 0, ..base.clone() };
        assert_eq!(noisy_translate(&b, &zero, &mut RngStream::new(0)).unwrap(), b);
        let minus = NoiseConfig { t_min: -1, t_max: -1, ..base.clone() };
        let out = noisy_translate(&b, &minus, &mut RngStream::new(0)).unwrap();
        assert_eq!((out.x_c, out.y_c), (99.0, 49.0));

        let aniso = NoiseConfig { t_min: -3, t_max: 3, isotropic_translate: false, ..base };
        let mut rng = RngStream::new(4);
        let mut replay = rng.clone();
        let out = noisy_translate(&b, &aniso, &mut rng).unwrap();
        let (a, c) = (replay.rand_int(-3, 3).unwrap(), replay.rand_int(-3, 3).unwrap());
        assert_eq!((out.x_c, out.y_c), (100.0 + a as f64, 50.0 + c as f64));
        assert_eq!((out.w, out.h, out.theta), (20.0, 20.0, 0.0));
    }

    #[test]
    fn gating_by_gamma() {
        let cfg = NoiseConfig { t_min: 5, t_max: 5, ..NoiseConfig::default() };
        let small = AnnotationRecord::new(bx(0.0, 0.0, 10.0, 40.0, 0.0), "car", 0);
        let big = AnnotationRecord::new(bx(0.0, 0.0, 20.0, 40.0, 0.0), "car", 1);
        let boundary = AnnotationRecord::new(bx(0.0, 0.0, 16.0, 40.0, 0.0), "car", 0);
        let out = nbbox_apply_traced(&[small.clone(), big.clone(), boundary.clone()], &cfg, &mut RngStream::new(2)).unwrap();
        assert_eq!(out.records[0], small);
        assert_ne!(out.records[1].bbox, big.bbox);
        assert_eq!(out.records[1].difficulty, 1);
        assert_eq!(out.records[2], boundary);
        assert_eq!(out.gated, vec![true, false, true]);
        assert_eq!(out.gated_count(), 2);
    }

    #[test]
    fn gated_boxes_consume_no_draws() {
        let cfg = NoiseConfig::default();
        let small = AnnotationRecord::new(bx(0.0, 0.0, 5.0, 5.0, 0.0), "a", 0);
        let big = AnnotationRecord::new(bx(0.0, 0.0, 50.0, 30.0, 0.0), "a", 0);
        let with_small = nbbox_apply(&[small, big.clone()], &cfg, &mut RngStream::new(8)).unwrap();
        let without = nbbox_apply(&[big], &cfg, &mut RngStream::new(8)).unwrap();
        assert_eq!(with_small[1], without[0]);
    }

    #[test]
    fn apply_rejects_bad_input_without_partial_output() {
        let good = AnnotationRecord::new(bx(0.0, 0.0, 50.0, 30.0, 0.0), "a", 0);
        let bad = AnnotationRecord { bbox: OrientedBox { w: -1.0, ..good.bbox }, ..good.clone() };
        let err = nbbox_apply(&[good.clone(), bad], &NoiseConfig::default(), &mut RngStream::new(0)).unwrap_err();
        assert!(matches!(err, TransformError::InvalidRecord { index: 1, .. }));
        let unnamed = AnnotationRecord { category: String::new(), ..good };
        assert!(nbbox_apply(&[unnamed], &NoiseConfig::default(), &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn disabled_config_is_identity() {
        let recs: Vec<_> = (0..20).map(|i| AnnotationRecord::new(bx(i as f64, 1.0, 30.0 + i as f64, 20.0, 5.0), "x", 0)).collect();
        let out = nbbox_apply(&recs, &NoiseConfig::disabled(), &mut RngStream::new(0)).unwrap();
        assert_eq!(out, recs);
    }
}
