//! Slice montages as 8-bit grayscale PNG.

use std::str::FromStr;

use thoraxdiff_core::data::Volume;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Z,
    Y,
    X,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" | "axial" => Ok(Axis::Z),
            "y" | "coronal" => Ok(Axis::Y),
            "x" | "sagittal" => Ok(Axis::X),
            _ => Err(Error::Usage(format!("unknown axis `{s}` (z, y or x)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// `k` slice indices spread evenly over `n`, each at the center of its
/// share; one slice is the middle one.
pub fn slice_indices(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| (2 * i + 1) * n / (2 * k)).collect()
}

/// [-1, 1] to [0, 255], rounding to nearest.
pub fn to_gray(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Tiles `rows × cols` slices along `axis`, row-major. Slices normal to `z`
/// show `y` down and `x` across; the others show `z` down.
pub fn render_montage(vol: &Volume, axis: Axis, rows: usize, cols: usize) -> Result<GrayImage> {
    let [d, h, w] = vol.dims();
    let (n, sh, sw) = match axis {
        Axis::Z => (d, h, w),
        Axis::Y => (h, d, w),
        Axis::X => (w, d, h),
    };
    if rows == 0 || cols == 0 {
        return Err(Error::Usage("montage grid needs at least one row and column".into()));
    }
    if rows * cols > n {
        return Err(Error::Usage(format!("{rows}x{cols} grid needs {} slices, axis has {n}", rows * cols)));
    }
    let (width, height) = (cols * sw, rows * sh);
    let mut pixels = vec![0u8; width * height];
    let values = vol.values();
    for (k, s) in slice_indices(n, rows * cols).into_iter().enumerate() {
        let (r0, c0) = ((k / cols) * sh, (k % cols) * sw);
        for i in 0..sh {
            for j in 0..sw {
                let (z, y, x) = match axis {
                    Axis::Z => (s, i, j),
                    Axis::Y => (i, s, j),
                    Axis::X => (i, j, s),
                };
                pixels[(r0 + i) * width + c0 + j] = to_gray(values[(z * h + y) * w + x]);
            }
        }
    }
    Ok(GrayImage { width, height, pixels })
}

/// Unfiltered, default-compression, non-interlaced grayscale PNG.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Default);
        enc.set_filter(png::FilterType::NoFilter);
        enc.set_adaptive_filter(png::AdaptiveFilterType::NonAdaptive);
        let mut writer = enc.write_header().map_err(|e| Error::Usage(e.to_string()))?;
        writer.write_image_data(&img.pixels).map_err(|e| Error::Usage(e.to_string()))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_choice() {
        assert_eq!(slice_indices(32, 1), vec![16]);
        assert_eq!(slice_indices(9, 3), vec![1, 4, 7]);
        assert_eq!(slice_indices(4, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn gray_mapping_endpoints() {
        assert_eq!(to_gray(-1.0), 0);
        assert_eq!(to_gray(1.0), 255);
        assert_eq!(to_gray(0.0), 128);
    }

    #[test]
    fn single_tile_is_the_middle_slice() {
        let values: Vec<f32> = (0..4 * 2 * 3).map(|i| (i / 6) as f32 / 3.0 * 2.0 - 1.0).collect();
        let vol = Volume::new([4, 2, 3], [1.0; 3], values).unwrap();
        let img = render_montage(&vol, Axis::Z, 1, 1).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert!(img.pixels.iter().all(|&p| p == to_gray(2.0 / 3.0 * 2.0 - 1.0)));
        let x = render_montage(&vol, Axis::X, 1, 3).unwrap();
        assert_eq!((x.width, x.height), (6, 4));
        assert!(matches!(render_montage(&vol, Axis::Z, 2, 3), Err(Error::Usage(_))));
    }

    #[test]
    fn constant_volume_gives_uniform_gray_png() {
        let vol = Volume::constant([8; 3], 0.0).unwrap();
        let bytes = encode_png(&render_montage(&vol, Axis::Y, 2, 2).unwrap()).unwrap();
        let decoder = png::Decoder::new(std::io::Cursor::new(&bytes));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height, info.color_type), (16, 16, png::ColorType::Grayscale));
        assert!(buf[..info.buffer_size()].iter().all(|&p| p == 128));
        assert_eq!(bytes, encode_png(&render_montage(&vol, Axis::Y, 2, 2).unwrap()).unwrap());
    }
}
