//! Heatmap post-processing and image export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{LatentField, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// `[min, max]` maps affinely onto `[0, 255]`.
    #[default]
    Signed,
    /// Negative values become 0, then `[0, max]` maps onto `[0, 255]`.
    Clamped,
}

impl std::str::FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(RenderMode::Signed),
            "clamped" => Ok(RenderMode::Clamped),
            other => Err(Error::invalid(format!("unknown render mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeatmapMeta {
    /// Which quantity the map holds, such as `r`, `u1`, `s` or `mi`.
    pub term: String,
    pub prompt: String,
    pub mode: RenderMode,
}

/// A single-channel map with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    field: LatentField,
    pub meta: HeatmapMeta,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, values: Vec<f64>, meta: HeatmapMeta) -> Result<Self> {
        Ok(Heatmap {
            field: LatentField::new(Shape::new(1, height, width)?, values)?,
            meta,
        })
    }

    /// Wraps a one-channel field; multi-channel fields are summed over channels.
    pub fn from_field(field: &LatentField, meta: HeatmapMeta) -> Self {
        let field = if field.shape().channels == 1 {
            field.clone()
        } else {
            field.channel_sum()
        };
        Heatmap { field, meta }
    }

    pub fn height(&self) -> usize {
        self.field.shape().height
    }

    pub fn width(&self) -> usize {
        self.field.shape().width
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn field(&self) -> &LatentField {
        &self.field
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.field.get(0, row, col)
    }

    fn with_values(&self, values: Vec<f64>) -> Heatmap {
        Heatmap {
            field: LatentField::from_raw(self.field.shape(), values),
            meta: self.meta.clone(),
        }
    }

    fn expect_same_shape(&self, other: &Heatmap, name: &str) -> Result<()> {
        other.field.expect_shape(self.field.shape(), name)
    }
}

/// Bilinear interpolation on a corner-aligned grid: the first and last output
/// rows and columns sample the first and last input rows and columns exactly.
pub fn bilinear_upsample(map: &Heatmap, target_h: usize, target_w: usize) -> Result<Heatmap> {
    let (h, w) = (map.height(), map.width());
    if target_h == 0 || target_w == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    if target_h < h || target_w < w {
        return Err(Error::invalid(format!("cannot upsample {h}x{w} to smaller {target_h}x{target_w}")));
    }
    let coord = |i: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        if dst == 1 || src == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
        let lo = (pos.floor() as usize).min(src - 2);
        (lo, lo + 1, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(target_h * target_w);
    for i in 0..target_h {
        let (r0, r1, fr) = coord(i, h, target_h);
        for j in 0..target_w {
            let (c0, c1, fc) = coord(j, w, target_w);
            let top = map.get(r0, c0) * (1.0 - fc) + map.get(r0, c1) * fc;
            let bottom = map.get(r1, c0) * (1.0 - fc) + map.get(r1, c1) * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    let mut up = Heatmap::new(target_h, target_w, out, map.meta.clone())?;
    // Convex combinations can overshoot the input range by rounding only.
    let (lo, hi) = min_max(map.values());
    up.field = up.field.map(|v| v.clamp(lo, hi));
    Ok(up)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Cells strictly above `mean + k * sd`, with the population standard deviation.
pub fn threshold_mask(map: &Heatmap, k: f64) -> Vec<bool> {
    let (mean, var) = map.field.mean_and_variance();
    let threshold = mean + k * var.sqrt();
    map.values().iter().map(|&v| v > threshold).collect()
}

/// Mean of the two maps on the cells where both exceed their thresholds, zero elsewhere.
pub fn intersection_baseline(m1: &Heatmap, m2: &Heatmap, k: f64) -> Result<Heatmap> {
    m1.expect_same_shape(m2, "m2")?;
    let (a, b) = (threshold_mask(m1, k), threshold_mask(m2, k));
    let values = (0..a.len())
        .map(|i| if a[i] && b[i] { (m1.values()[i] + m2.values()[i]) / 2.0 } else { 0.0 })
        .collect();
    Ok(m1.with_values(values))
}

/// Min-max normalization onto `[0, 1]`. A constant list maps to all zeros.
pub fn normalize_dataset(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot normalize an empty list"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("cannot normalize non-finite values"));
    }
    let (lo, hi) = min_max(values);
    if hi == lo {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// 8-bit grey levels, row-major from the top row.
pub fn render(map: &Heatmap, mode: RenderMode) -> Vec<u8> {
    let values: Vec<f64> = match mode {
        RenderMode::Signed => map.values().to_vec(),
        RenderMode::Clamped => map.values().iter().map(|v| v.max(0.0)).collect(),
    };
    let (lo, hi) = match mode {
        RenderMode::Signed => min_max(&values),
        RenderMode::Clamped => (0.0, min_max(&values).1),
    };
    if hi <= lo {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Single-channel portable float map: `Pf`, little-endian (scale -1.0), rows
/// stored bottom to top.
pub fn write_pfm<W: Write>(map: &Heatmap, mut w: W) -> Result<()> {
    write!(w, "Pf\n{} {}\n-1.0\n", map.width(), map.height())?;
    let mut bytes = Vec::with_capacity(4 * map.values().len());
    for row in (0..map.height()).rev() {
        for col in 0..map.width() {
            bytes.extend_from_slice(&(map.get(row, col) as f32).to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_pfm(bytes: &[u8], meta: HeatmapMeta) -> Result<Heatmap> {
    let bad = |m: &str| Error::Format {
        path: "<pfm>".into(),
        message: m.to_string(),
    };
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "Pf" {
        return Err(bad("only single-channel Pf maps are supported"));
    }
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = token()?.parse().map_err(|_| bad("bad scale"))?;
    // Exactly one whitespace byte separates the header from the data.
    let data = &bytes[pos + 1..];
    if data.len() != 4 * width * height {
        return Err(bad("payload size does not match dimensions"));
    }
    let mut values = vec![0.0; width * height];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, col) = (i / width, i % width);
        values[(height - 1 - row_from_bottom) * width + col] = f64::from(v);
    }
    Heatmap::new(height, width, values, meta)
}

/// Binary greymap (`P5`).
pub fn write_pgm<W: Write>(width: usize, height: usize, pixels: &[u8], mut w: W) -> Result<()> {
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(flatten)]
    pub meta: HeatmapMeta,
    pub height: usize,
    pub width: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedMap {
    pub pfm: PathBuf,
    pub pgm: PathBuf,
    pub json: PathBuf,
}

/// Writes `<stem>.pfm`, `<stem>.pgm` and `<stem>.json` into `dir`.
pub fn export_heatmap(map: &Heatmap, dir: &Path, stem: &str) -> Result<ExportedMap> {
    fs::create_dir_all(dir)?;
    let out = ExportedMap {
        pfm: dir.join(format!("{stem}.pfm")),
        pgm: dir.join(format!("{stem}.pgm")),
        json: dir.join(format!("{stem}.json")),
    };
    let mut pfm = Vec::new();
    write_pfm(map, &mut pfm)?;
    fs::write(&out.pfm, pfm)?;
    let mut pgm = Vec::new();
    write_pgm(map.width(), map.height(), &render(map, map.meta.mode), &mut pgm)?;
    fs::write(&out.pgm, pgm)?;
    let (min, max) = min_max(map.values());
    let sidecar = Sidecar {
        meta: map.meta.clone(),
        height: map.height(),
        width: map.width(),
        min,
        max,
        mean: map.field.mean(),
    };
    fs::write(&out.json, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(out)
}

/// Lowercase ASCII alphanumerics with runs of anything else collapsed to `-`.
pub fn slug(text: &str) -> String {
    let mut out = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let trimmed = out.trim_end_matches('-');
    if trimmed.is_empty() {
        "none".to_string()
    } else {
        trimmed.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hm(h: usize, w: usize, v: Vec<f64>) -> Heatmap {
        Heatmap::new(h, w, v, HeatmapMeta::default()).unwrap()
    }

    #[test]
    fn upsample_goldens() {
        let up = bilinear_upsample(&hm(2, 2, vec![0.0, 1.0, 0.0, 1.0]), 2, 3).unwrap();
        assert_eq!(up.values(), &[0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
        let one = bilinear_upsample(&hm(1, 1, vec![3.5]), 4, 5).unwrap();
        assert!(one.values().iter().all(|&v| v == 3.5));
        let m = hm(2, 3, vec![1.0, -2.0, 3.0, 0.5, 7.0, -1.0]);
        assert_eq!(bilinear_upsample(&m, 2, 3).unwrap().values(), m.values());
        assert!(bilinear_upsample(&m, 0, 3).is_err());
        assert!(bilinear_upsample(&m, 1, 3).is_err());
    }

    #[test]
    fn threshold_goldens() {
        let m = hm(1, 4, vec![0.0, 0.0, 0.0, 10.0]);
        assert_eq!(threshold_mask(&m, 1.5), vec![false, false, false, true]);
        let (mean, var) = m.field().mean_and_variance();
        assert_relative_eq!(mean + 1.5 * var.sqrt(), 8.995, epsilon = 1e-3);
        assert!(threshold_mask(&hm(2, 2, vec![4.0; 4]), 1.5).iter().all(|&b| !b));
    }

    #[test]
    fn gaussian_map_selects_upper_tail() {
        use crate::diffusion::{standard_normal_field, stream, StreamDomain};
        let f = standard_normal_field(Shape::new(1, 100, 100).unwrap(), &mut stream(5, StreamDomain::Sample, 0));
        let frac = threshold_mask(&Heatmap::from_field(&f, HeatmapMeta::default()), 1.5).iter().filter(|&&b| b).count() as f64 / 1e4;
        assert!((frac - 0.0668).abs() < 0.02, "{frac}");
    }

    #[test]
    fn intersection_goldens() {
        let a = hm(1, 8, vec![9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = hm(1, 8, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 9.0]);
        assert!(intersection_baseline(&a, &b, 1.5).unwrap().values().iter().all(|&v| v == 0.0));
        let same = intersection_baseline(&a, &a, 1.5).unwrap();
        assert_eq!(same.values(), a.values());
        let flat = hm(1, 8, vec![2.0; 8]);
        assert!(intersection_baseline(&a, &flat, 1.5).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(intersection_baseline(&a, &hm(2, 4, vec![0.0; 8]), 1.5).is_err());
    }

    #[test]
    fn normalization_goldens() {
        assert_eq!(normalize_dataset(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_dataset(&[3.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(normalize_dataset(&[7.0]).unwrap(), vec![0.0]);
        assert!(normalize_dataset(&[]).is_err());
    }

    #[test]
    fn rendering_modes() {
        assert!(render(&hm(2, 2, vec![0.0; 4]), RenderMode::Signed).iter().all(|&p| p == 0));
        let m = hm(1, 3, vec![-1.0, 0.0, 1.0]);
        assert_eq!(render(&m, RenderMode::Clamped), vec![0, 0, 255]);
        assert_eq!(render(&m, RenderMode::Signed), vec![0, 128, 255]);
    }

    #[test]
    fn pfm_layout_and_round_trip() {
        let m = hm(2, 3, vec![1.0, 2.0, 3.0, -4.5, 0.25, 1e-3f32 as f64]);
        let mut bytes = Vec::new();
        write_pfm(&m, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"Pf\n3 2\n-1.0\n"));
        // First stored row is the bottom one.
        let data = &bytes[b"Pf\n3 2\n-1.0\n".len()..];
        assert_eq!(f32::from_le_bytes([data[0], data[1], data[2], data[3]]), -4.5);
        let back = read_pfm(&bytes, HeatmapMeta::default()).unwrap();
        assert_eq!(back, m);
        assert!(read_pfm(b"PF\n1 1\n-1.0\n", HeatmapMeta::default()).is_err());
    }

    #[test]
    fn export_writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = Heatmap::new(2, 2, vec![0.0, 1.0, -1.0, 0.5], HeatmapMeta { term: "r".into(), prompt: "a cat".into(), mode: RenderMode::Clamped }).unwrap();
        let out = export_heatmap(&m, dir.path(), "r_a_cat").unwrap();
        let pgm = fs::read(&out.pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        let side: Sidecar = serde_json::from_slice(&fs::read(&out.json).unwrap()).unwrap();
        assert_eq!(side.meta.term, "r");
        assert_eq!(read_pfm(&fs::read(&out.pfm).unwrap(), side.meta.clone()).unwrap().values(), m.values());
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Male Doctor!"), "male-doctor");
        assert_eq!(slug("  "), "none");
    }

    fn arb_map() -> impl Strategy<Value = Heatmap> {
        (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
            prop::collection::vec(-100.0f64..100.0, h * w).prop_map(move |v| hm(h, w, v))
        })
    }

    proptest! {
        #[test]
        fn upsampling_stays_in_range(m in arb_map(), dh in 0usize..5, dw in 0usize..5) {
            let up = bilinear_upsample(&m, m.height() + dh, m.width() + dw).unwrap();
            let (lo, hi) = min_max(m.values());
            prop_assert!(up.values().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn mask_is_affine_invariant(m in arb_map(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let scaled = m.with_values(m.values().iter().map(|v| a * v + b).collect());
            let (x, y) = (threshold_mask(&m, 1.5), threshold_mask(&scaled, 1.5));
            // Values within rounding distance of the threshold may flip.
            let (mean, var) = m.field().mean_and_variance();
            let t = mean + 1.5 * var.sqrt();
            for (i, v) in m.values().iter().enumerate() {
                if (v - t).abs() > 1e-9 * (1.0 + t.abs()) {
                    prop_assert_eq!(x[i], y[i]);
                }
            }
        }

        #[test]
        fn intersection_is_symmetric(m1 in arb_map(), seed in any::<u64>()) {
            let m2 = m1.with_values(m1.values().iter().enumerate().map(|(i, v)| v * ((seed >> (i % 60)) & 1) as f64).collect());
            prop_assert_eq!(intersection_baseline(&m1, &m2, 1.5).unwrap(), intersection_baseline(&m2, &m1, 1.5).unwrap());
        }

        #[test]
        fn normalization_preserves_order(v in prop::collection::vec(-1e3f64..1e3, 1..40), a in 0.1f64..10.0, b in -10.0f64..10.0) {
            let n = normalize_dataset(&v).unwrap();
            let t = normalize_dataset(&v.iter().map(|x| a * x + b).collect::<Vec<_>>()).unwrap();
            prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
            let argmax = |x: &[f64]| x.iter().enumerate().fold(0, |best, (i, v)| if *v > x[best] { i } else { best });
            prop_assert_eq!(argmax(&n), argmax(&v));
            prop_assert_eq!(argmax(&t), argmax(&v));
            for i in 0..v.len() { for j in 0..v.len() { if v[i] < v[j] { prop_assert!(n[i] <= n[j]); } } }
        }
    }
}
