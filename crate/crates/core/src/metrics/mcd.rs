use crate::error::{Error, Result};
use crate::features::MelSpectrogram;

/// `10·√2 / ln 10`.
pub const MCD_K: f64 = 6.141_851_463_713_754;

pub const DEFAULT_MFCC: usize = 13;

/// Orthonormal DCT-II basis, `coeffs x bins`.
pub fn dct_basis(bins: usize, coeffs: usize) -> Vec<Vec<f64>> {
    let n = bins as f64;
    (0..coeffs)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..bins)
                .map(|i| scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .collect()
        })
        .collect()
}

/// Cepstra of each log-mel frame: coefficients `1..=c` when `exclude_c0`,
/// else `0..c`.
pub fn mfcc(m: &MelSpectrogram, c: usize, exclude_c0: bool) -> Result<Vec<Vec<f64>>> {
    let first = usize::from(exclude_c0);
    if c == 0 || c + first > m.n_bins {
        return Err(Error::InvalidConfig(format!(
            "{c} coefficients (c0 {}) from {} mel bins",
            if exclude_c0 { "excluded" } else { "included" },
            m.n_bins
        )));
    }
    let basis = dct_basis(m.n_bins, c + first);
    Ok(m.frames()
        .map(|f| {
            basis[first..]
                .iter()
                .map(|row| row.iter().zip(f).map(|(b, x)| b * x).sum())
                .collect()
        })
        .collect())
}

/// Boundary-anchored DTW with steps (1,0), (0,1), (1,1) and Euclidean local
/// cost; ties prefer the diagonal. Returns the aligned index pairs.
pub fn dtw_path(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("DTW sequence"));
    }
    let (n, m) = (a.len(), b.len());
    let dist = |i: usize, j: usize| -> f64 {
        a[i].iter().zip(&b[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut acc = vec![f64::INFINITY; n * m];
    let mut from = vec![0u8; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = dist(i, j);
            if i == 0 && j == 0 {
                acc[0] = d;
                continue;
            }
            let mut best = (f64::INFINITY, 0u8);
            for (k, (di, dj)) in [(1, 1), (1, 0), (0, 1)].into_iter().enumerate() {
                if i >= di && j >= dj {
                    let c = acc[(i - di) * m + (j - dj)];
                    if c < best.0 {
                        best = (c, k as u8);
                    }
                }
            }
            acc[i * m + j] = best.0 + d;
            from[i * m + j] = best.1;
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        match from[i * m + j] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(path)
}

/// `K` times the mean Euclidean cepstral distance along the DTW path.
pub fn mcd_from_cepstra(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let path = dtw_path(a, b)?;
    let total: f64 = path
        .iter()
        .map(|&(i, j)| a[i].iter().zip(&b[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .sum();
    Ok(MCD_K * total / path.len() as f64)
}

/// Mel-cepstral distortion in dB over MFCCs `c1..c13` with DTW alignment.
pub fn mcd_dtw(reference: &MelSpectrogram, hypothesis: &MelSpectrogram) -> Result<f64> {
    if reference.is_empty() || hypothesis.is_empty() {
        return Err(Error::EmptyInput("mel spectrogram for MCD"));
    }
    if reference.n_bins != hypothesis.n_bins {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} mel bins",
            reference.n_bins, hypothesis.n_bins
        )));
    }
    let a = mfcc(reference, DEFAULT_MFCC, true)?;
    let b = mfcc(hypothesis, DEFAULT_MFCC, true)?;
    mcd_from_cepstra(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mel(frames: &[Vec<f64>]) -> MelSpectrogram {
        MelSpectrogram::from_frames(frames, frames[0].len(), 100.0, "t").unwrap()
    }

    #[test]
    fn k_constant() {
        assert!((MCD_K - 10.0 * 2f64.sqrt() / 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_frame_has_no_higher_cepstra() {
        let c = mfcc(&mel(&[vec![-3.0; 20]]), 13, true).unwrap();
        assert!(c[0].iter().all(|v| v.abs() < 1e-12));
        let c0 = mfcc(&mel(&[vec![-3.0; 20]]), 13, false).unwrap();
        assert!((c0[0][0] - (-3.0 * 20f64.sqrt())).abs() < 1e-12);
        assert!(mfcc(&mel(&[vec![0.0; 10]]), 10, true).is_err());
    }

    #[test]
    fn duplicated_frames_cost_nothing() {
        let frames: Vec<Vec<f64>> = (0..6).map(|t| (0..20).map(|b| ((t * 3 + b) % 7) as f64).collect()).collect();
        let dup: Vec<Vec<f64>> = frames.iter().flat_map(|f| [f.clone(), f.clone()]).collect();
        assert_eq!(mcd_dtw(&mel(&frames), &mel(&frames)).unwrap(), 0.0);
        assert!(mcd_dtw(&mel(&frames), &mel(&dup)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn dtw_prefers_diagonal_on_ties() {
        let a = vec![vec![0.0]; 3];
        assert_eq!(dtw_path(&a, &a).unwrap(), vec![(0, 0), (1, 1), (2, 2)]);
    }
}
