//! Local content-addressed blob store.
//!
//! Blobs are addressed by the SHA-256 digest of their bytes. Two backends
//! share the [`BlobStore`] interface: [`MemStore`] for tests and simulation,
//! and [`DirStore`], which keeps one file per blob named by its hex digest.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// 32-byte SHA-256 digest. Canonical text form is 64 lowercase hex chars.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ContentHash(pub [u8; 32]);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid content hash `{0}`: expected 64 hex characters")]
pub struct ParseHashError(pub String);

impl ContentHash {
    pub const ZERO: ContentHash = ContentHash([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl FromStr for ContentHash {
    type Err = ParseHashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Uppercase is accepted on input; rendering is always lowercase.
        let mut out = [0u8; 32];
        if s.len() != 64 {
            return Err(ParseHashError(s.to_string()));
        }
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseHashError(s.to_string()))?;
        Ok(ContentHash(out))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of `payload`.
pub fn digest(payload: &[u8]) -> ContentHash {
    ContentHash(Sha256::digest(payload).into())
}

#[derive(Debug, Error)]
pub enum CasError {
    #[error("blob {0} not found")]
    NotFound(ContentHash),
    #[error("integrity failure: stored blob {0} does not match its address")]
    Integrity(ContentHash),
    #[error("blob store I/O failure: {0}")]
    Io(#[from] io::Error),
}

/// An immutable payload together with its address.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blob {
    payload: Vec<u8>,
    hash: ContentHash,
}

impl Blob {
    pub fn new(payload: Vec<u8>) -> Self {
        let hash = digest(&payload);
        Blob { payload, hash }
    }

    pub fn hash(&self) -> ContentHash {
        self.hash
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }
}

pub trait BlobStore: Send + Sync + std::fmt::Debug {
    /// Stores `payload` and returns its address. Re-putting identical content
    /// is a no-op returning the same hash.
    fn put(&self, payload: &[u8]) -> Result<ContentHash, CasError>;

    fn get(&self, hash: &ContentHash) -> Result<Vec<u8>, CasError>;

    fn has(&self, hash: &ContentHash) -> bool;

    /// Number of distinct blobs held.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Default)]
pub struct MemStore {
    blobs: RwLock<HashMap<ContentHash, Vec<u8>>>,
}

impl MemStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BlobStore for MemStore {
    fn put(&self, payload: &[u8]) -> Result<ContentHash, CasError> {
        let hash = digest(payload);
        let mut blobs = self.blobs.write().expect("blob map poisoned");
        match blobs.get(&hash) {
            Some(existing) if existing.as_slice() != payload => Err(CasError::Integrity(hash)),
            Some(_) => Ok(hash),
            None => {
                blobs.insert(hash, payload.to_vec());
                Ok(hash)
            }
        }
    }

    fn get(&self, hash: &ContentHash) -> Result<Vec<u8>, CasError> {
        self.blobs
            .read()
            .expect("blob map poisoned")
            .get(hash)
            .cloned()
            .ok_or(CasError::NotFound(*hash))
    }

    fn has(&self, hash: &ContentHash) -> bool {
        self.blobs.read().expect("blob map poisoned").contains_key(hash)
    }

    fn len(&self) -> usize {
        self.blobs.read().expect("blob map poisoned").len()
    }
}

/// One file per blob under `root`, named by the lowercase hex digest.
#[derive(Debug)]
pub struct DirStore {
    root: PathBuf,
    tmp_counter: AtomicU64,
}

impl DirStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, CasError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(DirStore { root, tmp_counter: AtomicU64::new(0) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, hash: &ContentHash) -> PathBuf {
        self.root.join(hash.to_hex())
    }
}

impl BlobStore for DirStore {
    fn put(&self, payload: &[u8]) -> Result<ContentHash, CasError> {
        let hash = digest(payload);
        let path = self.path_for(&hash);
        if path.exists() {
            let existing = fs::read(&path)?;
            if existing != payload {
                return Err(CasError::Integrity(hash));
            }
            return Ok(hash);
        }
        // Write to a unique temp name and rename so racing writers of the
        // same content never expose a partial file.
        let tmp = self.root.join(format!(
            ".tmp-{}-{}-{}",
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed),
            &hash.to_hex()[..16]
        ));
        fs::File::create(&tmp)?.write_all(payload)?;
        fs::rename(&tmp, &path)?;
        Ok(hash)
    }

    fn get(&self, hash: &ContentHash) -> Result<Vec<u8>, CasError> {
        let bytes = match fs::read(self.path_for(hash)) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(CasError::NotFound(*hash)),
            Err(e) => return Err(e.into()),
        };
        if digest(&bytes) != *hash {
            return Err(CasError::Integrity(*hash));
        }
        Ok(bytes)
    }

    fn has(&self, hash: &ContentHash) -> bool {
        self.path_for(hash).is_file()
    }

    fn len(&self) -> usize {
        fs::read_dir(&self.root)
            .map(|entries| {
                entries
                    .filter_map(Result::ok)
                    .filter(|e| e.file_name().to_str().is_some_and(|n| n.parse::<ContentHash>().is_ok()))
                    .count()
            })
            .unwrap_or(0)
    }
}
