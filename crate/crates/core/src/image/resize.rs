use super::GridImage;

/// Per-output-sample list of `(source index, weight)` along one axis.
type Taps = Vec<Vec<(usize, f64)>>;

/// Area-average weights: each output sample covers `n_in / n_out` source
/// samples, partial coverage weighted by overlap.
fn box_taps(n_in: usize, n_out: usize) -> Taps {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut i = a.floor() as usize;
            while (i as f64) < b && i < n_in {
                let overlap = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((i, overlap / scale));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Bilinear weights with aligned pixel centers and clamped edges.
fn linear_taps(n_in: usize, n_out: usize) -> Taps {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let x = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = x.floor() as usize;
            let f = x - i0 as f64;
            if f == 0.0 || i0 + 1 >= n_in {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - f), (i0 + 1, f)]
            }
        })
        .collect()
}

fn taps(n_in: usize, n_out: usize) -> Taps {
    if n_out == n_in {
        (0..n_in).map(|i| vec![(i, 1.0)]).collect()
    } else if n_out < n_in {
        box_taps(n_in, n_out)
    } else {
        linear_taps(n_in, n_out)
    }
}

/// Resizes with a separable filter: box (area average) along axes that
/// shrink, bilinear along axes that grow. Every output value is a convex
/// combination of inputs, so channel sums never grow.
pub fn resize(img: &GridImage, out_w: usize, out_h: usize) -> GridImage {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    if (out_w, out_h) == img.dims() {
        return img.clone();
    }
    let tx = taps(img.width, out_w);
    let ty = taps(img.height, out_h);
    let mut tmp = vec![[0.0f64; 3]; out_w * img.height];
    for y in 0..img.height {
        for (ox, row) in tx.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(x, w) in row {
                let p = img.data[y * img.width + x];
                for c in 0..3 {
                    acc[c] += w * p[c] as f64;
                }
            }
            tmp[y * out_w + ox] = acc;
        }
    }
    let mut out = GridImage::black(out_w, out_h, img.t);
    for (oy, col) in ty.iter().enumerate() {
        for ox in 0..out_w {
            let mut acc = [0.0f64; 3];
            for &(y, w) in col {
                let p = tmp[y * out_w + ox];
                for c in 0..3 {
                    acc[c] += w * p[c];
                }
            }
            out.data[oy * out_w + ox] = acc.map(|v| (v as f32).clamp(0.0, 1.0));
        }
    }
    out
}

/// Nearest-neighbor resize of a binary plane.
pub fn resize_mask(mask: &[bool], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<bool> {
    let mut out = vec![false; out_w * out_h];
    for oy in 0..out_h {
        let y = (((oy as f64 + 0.5) * h as f64 / out_h as f64) as usize).min(h - 1);
        for ox in 0..out_w {
            let x = (((ox as f64 + 0.5) * w as f64 / out_w as f64) as usize).min(w - 1);
            out[oy * out_w + ox] = mask[y * w + x];
        }
    }
    out
}
