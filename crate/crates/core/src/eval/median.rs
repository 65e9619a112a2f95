/// Nearest odd kernel length for a filter of `duration_s` at `frame_hop_s` per frame.
pub fn median_kernel_size(duration_s: f64, frame_hop_s: f64) -> usize {
    let frames = duration_s / frame_hop_s;
    let half = ((frames - 1.0) / 2.0).round().max(0.0);
    2 * half as usize + 1
}

/// Thresholds probabilities at 0.5 (`p >= 0.5` is active).
pub fn binarize(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| (p >= 0.5) as u8).collect()
}

/// Per-class sliding median (majority vote) over a binary grid, replicate-padded.
pub fn median_filter_binary(binary: &[u8], n_frames: usize, n_classes: usize, kernel: usize) -> Vec<u8> {
    assert_eq!(binary.len(), n_frames * n_classes, "grid shape mismatch");
    assert!(kernel % 2 == 1, "kernel must be odd");
    let half = kernel / 2;
    let mut out = vec![0u8; binary.len()];
    if n_frames == 0 {
        return out;
    }
    for c in 0..n_classes {
        let at = |t: isize| -> u32 {
            let t = t.clamp(0, n_frames as isize - 1) as usize;
            binary[t * n_classes + c] as u32
        };
        let mut ones: u32 = (-(half as isize)..=half as isize).map(at).sum();
        for t in 0..n_frames {
            out[t * n_classes + c] = (2 * ones as usize > kernel) as u8;
            let leaving = at(t as isize - half as isize);
            let entering = at(t as isize + half as isize + 1);
            ones = ones + entering - leaving;
        }
    }
    out
}

/// Binarize at 0.5, then median-filter each class with a kernel of `duration_s`.
pub fn median_filter(
    strong: &[f64],
    n_frames: usize,
    n_classes: usize,
    duration_s: f64,
    frame_hop_s: f64,
) -> Vec<u8> {
    let kernel = median_kernel_size(duration_s, frame_hop_s);
    median_filter_binary(&binarize(strong), n_frames, n_classes, kernel)
}
