//! Uncompressed run-length encoding of binary masks.
//!
//! Pixels are visited column by column (column-major) and the counts
//! alternate between runs of 0 and runs of 1, always starting with a run of
//! zeros, which may be empty.

use boxseg_core::BinaryMask;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`.
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

pub fn encode(mask: &BinaryMask) -> Rle {
    let (h, w) = (mask.height(), mask.width());
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(y, x);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle { size: [h, w], counts }
}

pub fn decode(rle: &Rle) -> Result<BinaryMask, String> {
    let [h, w] = rle.size;
    let total: u64 = rle.counts.iter().sum();
    if total != (h * w) as u64 {
        return Err(format!("run counts sum to {total}, expected {}x{} = {}", h, w, h * w));
    }
    let mut mask = BinaryMask::zeros(h, w);
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let on = i % 2 == 1;
        for p in pos..pos + c as usize {
            if on {
                mask.set(p % h, p / h, true);
            }
        }
        pos += c as usize;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&[u8]]) -> BinaryMask {
        BinaryMask::from_fn(rows.len(), rows[0].len(), |y, x| rows[y][x] == 1)
    }

    #[test]
    fn hand_encoded_examples() {
        // column-major: (0,0) (1,0) (0,1) (1,1)
        assert_eq!(encode(&mask(&[&[0, 0], &[1, 1]])).counts, vec![1, 1, 1, 1]);
        assert_eq!(encode(&mask(&[&[1, 1], &[0, 0]])).counts, vec![0, 1, 1, 1, 1]);
        assert_eq!(encode(&mask(&[&[1, 0], &[1, 0]])).counts, vec![0, 2, 2]);
        assert_eq!(encode(&mask(&[&[0, 0], &[0, 0]])).counts, vec![4]);
        assert_eq!(encode(&mask(&[&[1, 1], &[1, 1]])).counts, vec![0, 4]);
    }

    #[test]
    fn decode_rejects_bad_totals() {
        let bad = Rle {
            size: [2, 2],
            counts: vec![1, 1],
        };
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn empty_plane() {
        let m = BinaryMask::zeros(0, 3);
        let r = encode(&m);
        assert_eq!(r.counts, vec![0]);
        assert_eq!(decode(&r).unwrap(), m);
    }
}
