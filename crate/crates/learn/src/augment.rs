//! Random-shift augmentation: replicate-pad then crop back to size.

use rand::Rng;

/// Shifts every plane of a `planes × side × side` tensor by the crop
/// offset `(ox, oy) ∈ [0, 2·pad]²` of the padded image.
pub fn shift_with<T: Copy>(x: &[T], planes: usize, side: usize, pad: usize, ox: usize, oy: usize) -> Vec<T> {
    assert_eq!(x.len(), planes * side * side, "tensor size");
    assert!(ox <= 2 * pad && oy <= 2 * pad, "offset outside padded image");
    if pad == 0 {
        return x.to_vec();
    }
    let clamp = |v: isize| v.clamp(0, side as isize - 1) as usize;
    let mut out = Vec::with_capacity(x.len());
    for p in 0..planes {
        let plane = &x[p * side * side..][..side * side];
        for y in 0..side {
            let sy = clamp(y as isize + oy as isize - pad as isize);
            for xx in 0..side {
                let sx = clamp(xx as isize + ox as isize - pad as isize);
                out.push(plane[sy * side + sx]);
            }
        }
    }
    out
}

/// Draws a crop offset for `pad`.
pub fn random_offset<R: Rng>(pad: usize, rng: &mut R) -> (usize, usize) {
    (rng.random_range(0..=2 * pad), rng.random_range(0..=2 * pad))
}

pub fn augment_shift<T: Copy, R: Rng>(x: &[T], planes: usize, side: usize, pad: usize, rng: &mut R) -> Vec<T> {
    let (ox, oy) = random_offset(pad, rng);
    shift_with(x, planes, side, pad, ox, oy)
}
