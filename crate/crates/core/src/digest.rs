use sha2::{Digest, Sha256};

/// Hex SHA-256 of a byte payload.
pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of any serialisable value via its canonical JSON form.
pub(crate) fn of<T: serde::Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serialisable value");
    sha256_hex(&json)
}
