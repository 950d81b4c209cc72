use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use hewe::OrderedSample;
use parking_lot::{Mutex, RwLock};
use sha2::{Digest, Sha256};

/// An uploaded sample and the JSON of estimates already computed on it.
#[derive(Debug)]
pub struct Session {
    pub sample: OrderedSample,
    pub header: Option<Vec<String>>,
    pub non_numeric_rows: Vec<usize>,
    estimates: Mutex<HashMap<String, String>>,
    last_used: AtomicU64,
}

impl Session {
    pub fn new(sample: OrderedSample, header: Option<Vec<String>>, non_numeric_rows: Vec<usize>) -> Self {
        Self { sample, header, non_numeric_rows, estimates: Mutex::new(HashMap::new()), last_used: AtomicU64::new(0) }
    }

    pub fn cached(&self, key: &str) -> Option<String> {
        self.estimates.lock().get(key).cloned()
    }

    pub fn cache(&self, key: String, json: String) {
        self.estimates.lock().insert(key, json);
    }
}

/// In-memory sessions, evicting the least recently used beyond `capacity`.
/// Lookups take the read lock; uploads take the write lock.
#[derive(Debug)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    capacity: usize,
    clock: AtomicU64,
}

/// Sample ids are a digest of the column selector and the uploaded bytes,
/// so re-uploading the same file returns the same id.
pub fn session_id(column: &str, body: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(column.as_bytes());
    h.update([0u8]);
    h.update(body);
    h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
}

impl SessionStore {
    pub fn new(capacity: usize) -> Self {
        Self { sessions: RwLock::new(HashMap::new()), capacity: capacity.max(1), clock: AtomicU64::new(1) }
    }

    fn touch(&self, s: &Session) {
        s.last_used.store(self.clock.fetch_add(1, Ordering::Relaxed), Ordering::Relaxed);
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        let s = self.sessions.read().get(id).cloned()?;
        self.touch(&s);
        Some(s)
    }

    /// Keeps an existing session with the same id.
    pub fn insert(&self, id: String, session: Session) -> Arc<Session> {
        let mut map = self.sessions.write();
        let entry = map.entry(id).or_insert_with(|| Arc::new(session)).clone();
        self.touch(&entry);
        while map.len() > self.capacity {
            let oldest = map
                .iter()
                .min_by_key(|(_, s)| s.last_used.load(Ordering::Relaxed))
                .map(|(k, _)| k.clone())
                .expect("non-empty map");
            map.remove(&oldest);
        }
        entry
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
