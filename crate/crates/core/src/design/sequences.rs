//! Halton and Sobol low-discrepancy sequences, unscrambled.

use super::sobol_table::SOBOL_DIRECTIONS;
use super::{DesignError, MAX_SEQUENCE_DIM};

pub const PRIMES: [u64; MAX_SEQUENCE_DIM] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229,
];

/// Van der Corput radical inverse of `j` in base `base`.
pub fn radical_inverse(mut j: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while j > 0 {
        r += (j % base) as f64 * f;
        j /= base;
        f *= inv;
    }
    r
}

/// Point number `j` (1-based) of the Halton sequence in `dim` dimensions.
pub fn halton_point(j: u64, dim: usize) -> Vec<f64> {
    PRIMES[..dim].iter().map(|&b| radical_inverse(j, b)).collect()
}

pub fn halton_unit(n: usize, dim: usize) -> Result<Vec<Vec<f64>>, DesignError> {
    check_dim(dim)?;
    Ok((1..=n as u64).map(|j| halton_point(j, dim)).collect())
}

fn check_dim(dim: usize) -> Result<(), DesignError> {
    if dim > MAX_SEQUENCE_DIM {
        return Err(DesignError::DimensionTooLarge {
            dim,
            max: MAX_SEQUENCE_DIM,
        });
    }
    Ok(())
}

const SOBOL_BITS: usize = 32;

/// Gray-code Sobol generator. The all-zero first point is skipped, so the
/// first point returned is `(0.5, ..., 0.5)`.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; SOBOL_BITS]>,
    state: Vec<u32>,
    index: u64,
}

impl SobolSequence {
    pub fn new(dim: usize) -> Result<Self, DesignError> {
        check_dim(dim)?;
        let mut directions = Vec::with_capacity(dim);
        for d in 0..dim {
            let mut v = [0u32; SOBOL_BITS];
            if d == 0 {
                for (k, vk) in v.iter_mut().enumerate() {
                    *vk = 1 << (SOBOL_BITS - 1 - k);
                }
            } else {
                let (poly, m) = SOBOL_DIRECTIONS[d - 1];
                let s = (32 - poly.leading_zeros() - 1) as usize;
                let a = (poly >> 1) & ((1 << (s - 1)) - 1);
                for k in 0..s {
                    v[k] = m[k] << (SOBOL_BITS - 1 - k);
                }
                for k in s..SOBOL_BITS {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for j in 1..s {
                        if (a >> (s - 1 - j)) & 1 == 1 {
                            x ^= v[k - j];
                        }
                    }
                    v[k] = x;
                }
            }
            directions.push(v);
        }
        Ok(Self {
            directions,
            state: vec![0; dim],
            index: 0,
        })
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let c = (!self.index).trailing_zeros() as usize;
        assert!(c < SOBOL_BITS, "Sobol sequence exhausted");
        self.index += 1;
        let scale = 1.0 / (1u64 << SOBOL_BITS) as f64;
        self.state
            .iter_mut()
            .zip(&self.directions)
            .map(|(x, v)| {
                *x ^= v[c];
                *x as f64 * scale
            })
            .collect()
    }
}

pub fn sobol_unit(n: usize, dim: usize) -> Result<Vec<Vec<f64>>, DesignError> {
    let mut seq = SobolSequence::new(dim)?;
    Ok((0..n).map(|_| seq.next_point()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::RandomStream;

    #[test]
    fn halton_prefixes() {
        let pts = halton_unit(3, 2).unwrap();
        assert_eq!([pts[0][0], pts[1][0], pts[2][0]], [0.5, 0.25, 0.75]);
        assert!((pts[0][1] - 1.0 / 3.0).abs() < 1e-16);
        assert!((pts[1][1] - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn sobol_first_dimension_and_first_point() {
        let pts = sobol_unit(4, 50).unwrap();
        let first: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        assert_eq!(first, vec![0.5, 0.75, 0.25, 0.375]);
        assert!(pts[0].iter().all(|&x| x == 0.5));
    }

    #[test]
    fn sobol_matches_reference_second_dimension() {
        // Unscrambled reference values for dimension 2.
        let pts = sobol_unit(4, 2).unwrap();
        let second: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        assert_eq!(second, vec![0.5, 0.25, 0.75, 0.375]);
    }

    #[test]
    fn sobol_2d_is_a_02_net() {
        let pts = sobol_unit(255, 2).unwrap();
        let mut grid = [[0u32; 16]; 16];
        grid[0][0] += 1; // the skipped origin
        for p in &pts {
            grid[(p[0] * 16.0) as usize][(p[1] * 16.0) as usize] += 1;
        }
        assert!(grid.iter().flatten().all(|&c| c == 1));
    }

    #[test]
    fn sobol_columns_are_nets_in_every_dimension() {
        // The first 2^m points (origin included) hit each 1-D dyadic cell once.
        let pts = sobol_unit(63, 50).unwrap();
        for d in 0..50 {
            let mut seen = [false; 64];
            seen[0] = true;
            for p in &pts {
                let k = (p[d] * 64.0) as usize;
                assert!(!seen[k], "dimension {}", d + 1);
                seen[k] = true;
            }
        }
    }

    #[test]
    fn sequences_are_extensible() {
        let a = sobol_unit(10, 5).unwrap();
        let b = sobol_unit(30, 5).unwrap();
        assert_eq!(a[..], b[..10]);
        assert_eq!(halton_unit(10, 5).unwrap()[..], halton_unit(30, 5).unwrap()[..10]);
    }

    /// Star discrepancy evaluated on the grid of point coordinates (exact for
    /// anchored boxes up to boundary conventions).
    fn star_discrepancy(pts: &[Vec<f64>]) -> f64 {
        let n = pts.len() as f64;
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).chain([1.0]).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p[1]).chain([1.0]).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let mut worst: f64 = 0.0;
        for &x in &xs {
            for &y in &ys {
                let open = pts.iter().filter(|p| p[0] < x && p[1] < y).count() as f64;
                let closed = pts.iter().filter(|p| p[0] <= x && p[1] <= y).count() as f64;
                let vol = x * y;
                worst = worst.max((open / n - vol).abs()).max((closed / n - vol).abs());
            }
        }
        worst
    }

    #[test]
    fn halton_discrepancy_beats_random() {
        let h = star_discrepancy(&halton_unit(128, 2).unwrap());
        let mut ds: Vec<f64> = (0..21)
            .map(|s| star_discrepancy(&crate::design::srs_unit(128, 2, &mut RandomStream::new(s))))
            .collect();
        ds.sort_by(f64::total_cmp);
        assert!(h < ds[10], "halton {h} vs median {}", ds[10]);
    }
}
