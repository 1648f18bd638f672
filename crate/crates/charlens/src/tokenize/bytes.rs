//! Byte <-> printable-character remapping for byte-level BPE.
//!
//! Token strings in vocab/merges files never contain raw control bytes or
//! spaces: every byte value maps to a distinct printable character. Bytes in
//! the printable ASCII and Latin-1 ranges map to themselves; the remaining
//! 68 bytes map to codepoints 256, 257, ... in byte order (so 0x20 becomes
//! 'Ġ', 0x0A becomes 'Ċ', and so on).

use std::collections::HashMap;
use std::sync::OnceLock;

fn tables() -> &'static ([char; 256], HashMap<char, u8>) {
    static TABLES: OnceLock<([char; 256], HashMap<char, u8>)> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut forward = ['\0'; 256];
        let mut n = 0u32;
        for byte in 0u32..256 {
            let direct = matches!(byte, 0x21..=0x7E | 0xA1..=0xAC | 0xAE..=0xFF);
            let cp = if direct {
                byte
            } else {
                let cp = 256 + n;
                n += 1;
                cp
            };
            forward[byte as usize] = char::from_u32(cp).expect("valid codepoint");
        }
        let mut reverse = HashMap::with_capacity(256);
        for (b, &c) in forward.iter().enumerate() {
            reverse.insert(c, b as u8);
        }
        (forward, reverse)
    })
}

pub fn byte_to_char(b: u8) -> char {
    tables().0[b as usize]
}

pub fn char_to_byte(c: char) -> Option<u8> {
    tables().1.get(&c).copied()
}

/// Remap a raw byte slice into its printable token-string form.
pub fn bytes_to_token_str(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_to_char(b)).collect()
}

/// Recover raw bytes from a token string. `None` if any character is not a
/// remapped byte.
pub fn token_str_to_bytes(s: &str) -> Option<Vec<u8>> {
    s.chars().map(char_to_byte).collect()
}
