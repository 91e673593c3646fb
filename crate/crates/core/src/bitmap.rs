//! Fixed-length piece bitmaps and their name-component encoding.

use std::fmt;

use crate::name::NameError;

/// Piece index within a torrent.
pub type PieceIndex = u32;

/// Set of pieces a peer holds. Bit `i` set means piece `i` is present.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    n_pieces: u32,
    // little-endian: byte k holds pieces 8k..8k+7, LSB first
    bytes: Vec<u8>,
}

impl Bitmap {
    /// An all-zero bitmap. `n_pieces` must be at least 1.
    pub fn empty(n_pieces: u32) -> Self {
        assert!(n_pieces >= 1, "bitmap needs at least one piece");
        Bitmap {
            n_pieces,
            bytes: vec![0; byte_len(n_pieces)],
        }
    }

    /// An all-ones bitmap.
    pub fn full(n_pieces: u32) -> Self {
        let mut b = Self::empty(n_pieces);
        for i in 0..n_pieces {
            b.set(i);
        }
        b
    }

    pub fn from_indices(n_pieces: u32, indices: impl IntoIterator<Item = PieceIndex>) -> Self {
        let mut b = Self::empty(n_pieces);
        for i in indices {
            b.set(i);
        }
        b
    }

    pub fn n_pieces(&self) -> u32 {
        self.n_pieces
    }

    pub fn get(&self, i: PieceIndex) -> bool {
        i < self.n_pieces && self.bytes[(i / 8) as usize] & (1 << (i % 8)) != 0
    }

    /// Sets bit `i`. Returns true when the bit was previously clear.
    pub fn set(&mut self, i: PieceIndex) -> bool {
        assert!(i < self.n_pieces, "piece {i} out of range {}", self.n_pieces);
        let was = self.get(i);
        self.bytes[(i / 8) as usize] |= 1 << (i % 8);
        !was
    }

    pub fn count_ones(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.count_ones() == self.n_pieces
    }

    pub fn ones(&self) -> impl Iterator<Item = PieceIndex> + '_ {
        (0..self.n_pieces).filter(move |&i| self.get(i))
    }

    /// In-place union. Both bitmaps must describe the same torrent size.
    pub fn union_with(&mut self, other: &Bitmap) -> Result<(), NameError> {
        if other.n_pieces != self.n_pieces {
            return Err(NameError::LengthMismatch {
                left: self.n_pieces,
                right: other.n_pieces,
            });
        }
        for (a, b) in self.bytes.iter_mut().zip(&other.bytes) {
            *a |= *b;
        }
        Ok(())
    }

    /// Hex component: the bitmap read as an unsigned integer (piece 0 is the
    /// least significant bit), printed big-endian with two digits per byte.
    pub fn encode(&self) -> (String, String) {
        let mut hex = String::with_capacity(self.bytes.len() * 2);
        for b in self.bytes.iter().rev() {
            hex.push_str(&format!("{b:02x}"));
        }
        (hex, self.n_pieces.to_string())
    }

    pub fn decode(hex: &str, n_pieces: &str) -> Result<Bitmap, NameError> {
        let malformed = |why: &str| NameError::MalformedBitmap(format!("{hex}/{n_pieces}: {why}"));
        let n: u32 = n_pieces
            .parse()
            .map_err(|_| malformed("piece count is not a decimal integer"))?;
        if n == 0 {
            return Err(malformed("zero pieces"));
        }
        if hex.len() != byte_len(n) * 2 {
            return Err(malformed("hex length does not match piece count"));
        }
        if !hex.bytes().all(|c| matches!(c, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(malformed("not lowercase hex"));
        }
        let mut bytes: Vec<u8> = (0..hex.len())
            .step_by(2)
            .map(|k| u8::from_str_radix(&hex[k..k + 2], 16).expect("validated hex"))
            .collect();
        bytes.reverse();
        let out = Bitmap { n_pieces: n, bytes };
        let stray = (n..out.bytes.len() as u32 * 8).any(|i| out.bytes[(i / 8) as usize] & (1 << (i % 8)) != 0);
        if stray {
            return Err(malformed("bits set beyond piece count"));
        }
        Ok(out)
    }
}

impl fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (hex, n) = self.encode();
        write!(f, "Bitmap({hex}/{n})")
    }
}

fn byte_len(n_pieces: u32) -> usize {
    n_pieces.div_ceil(8) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_pieces_one_and_three() {
        let b = Bitmap::from_indices(4, [1, 3]);
        assert_eq!(b.encode(), ("0a".to_string(), "4".to_string()));
        assert_eq!(Bitmap::decode("0a", "4").unwrap(), b);
    }

    #[test]
    fn encode_zero() {
        assert_eq!(Bitmap::empty(8).encode(), ("00".to_string(), "8".to_string()));
    }

    #[test]
    fn decode_rejects_bad_input() {
        assert!(matches!(Bitmap::decode("zz", "4"), Err(NameError::MalformedBitmap(_))));
        assert!(Bitmap::decode("0a0a", "4").is_err());
        assert!(Bitmap::decode("1f", "4").is_err());
        assert!(Bitmap::decode("0A", "4").is_err());
        assert!(Bitmap::decode("00", "0").is_err());
        assert!(Bitmap::decode("00", "x").is_err());
    }

    #[test]
    fn multi_byte_is_big_endian() {
        let b = Bitmap::from_indices(12, [0, 8]);
        assert_eq!(b.encode().0, "0101");
        let b = Bitmap::full(12);
        assert_eq!(b.encode().0, "0fff");
        assert!(b.is_complete());
    }

    #[test]
    fn union_requires_same_length() {
        let mut a = Bitmap::empty(4);
        assert!(a.union_with(&Bitmap::full(5)).is_err());
        a.union_with(&Bitmap::from_indices(4, [2])).unwrap();
        assert_eq!(a.ones().collect::<Vec<_>>(), vec![2]);
    }
}
