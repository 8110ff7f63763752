//! Public-key resolution from an explicit identity `(id, R)`.
//!
//! The relying party recomputes `rho` from the public seed matrix, fetches
//! the stored key for `id`, and accepts it only if the key's embedded `rho`
//! matches. A mismatch or a missing record yields [`Bottom`], a value
//! rather than an error. The directory is never trusted for `rho`.
//!
//! Two modes share the same check: a local [`FilePk`] and an online
//! query service. The online wire protocol is:
//!
//! ```text
//! message  = len u32 BE | payload
//! request  = 0x01                      fetch header and matrix
//!          | 0x02 id-bytes             fetch the latest key for id
//! response = 0x01 header-and-matrix    for 0x01
//!          | 0x00                      for 0x02, not found
//!          | 0x01 pk                   for 0x02, found
//!          | 0xff utf8-message         malformed request
//! ```

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use ipkpq_mldsa::Level;

use crate::directory::{DirectoryError, FilePk, FilePkHeader, HEADER_LEN};
use crate::seed::{derive_public_seed, IdentityHandle, PubMatrix, Seed32, SeedMatrix};

pub const VERB_MATRIX: u8 = 0x01;
pub const VERB_RECORD: u8 = 0x02;
pub const STATUS_ABSENT: u8 = 0x00;
pub const STATUS_OK: u8 = 0x01;
pub const STATUS_ERROR: u8 = 0xff;
/// Bytes added around every payload on the wire.
pub const MESSAGE_OVERHEAD: usize = 4;
const MAX_MESSAGE: usize = 64 << 20;

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error(transparent)]
    Directory(#[from] DirectoryError),
    #[error("transport: {0}")]
    Transport(#[from] io::Error),
    #[error("malformed server response: {0}")]
    Protocol(&'static str),
    #[error("server error: {0}")]
    Server(String),
}

/// Why resolution returned no key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bottom {
    NotFound,
    RhoMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedKey {
    pub id: String,
    pub r: Seed32,
    pub pk: Vec<u8>,
    pub rho_checked: Seed32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Key(ResolvedKey),
    Bottom(Bottom),
}

impl Resolution {
    pub fn key(&self) -> Option<&ResolvedKey> {
        match self {
            Resolution::Key(k) => Some(k),
            Resolution::Bottom(_) => None,
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, Resolution::Bottom(_))
    }
}

/// The consistency check shared by every mode.
pub fn check(id: &str, r: &Seed32, matrix: &PubMatrix, pk: Option<&[u8]>) -> Resolution {
    let Ok(handle) = IdentityHandle::new(id, *r) else {
        return Resolution::Bottom(Bottom::NotFound);
    };
    let Some(pk) = pk else {
        return Resolution::Bottom(Bottom::NotFound);
    };
    let rho = derive_public_seed(&handle, matrix);
    match ipkpq_mldsa::decode_rho(pk) {
        Ok(stored) if stored == rho => Resolution::Key(ResolvedKey {
            id: id.to_owned(),
            r: *r,
            pk: pk.to_vec(),
            rho_checked: rho,
        }),
        _ => Resolution::Bottom(Bottom::RhoMismatch),
    }
}

/// Resolve against a parsed File_PK.
pub fn resolve(id: &str, r: &Seed32, file: &FilePk) -> Resolution {
    check(id, r, &file.extract_matrix(), file.lookup(id))
}

/// Resolve against raw File_PK bytes.
pub fn resolve_bytes(id: &str, r: &Seed32, bytes: &[u8]) -> Result<Resolution, DirectoryError> {
    Ok(resolve(id, r, &FilePk::parse(bytes.to_vec())?))
}

/// A resolution plus what it cost to obtain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lookup {
    pub resolution: Resolution,
    pub objects_fetched: u64,
    pub bytes_fetched: u64,
}

/// Anything that can turn `(id, R)` into a checked key.
pub trait KeyResolver: Send + Sync {
    fn lookup(&self, id: &str, r: &Seed32) -> Result<Lookup, ResolveError>;
}

/// Resolver over a local File_PK with the matrix extracted once.
#[derive(Debug, Clone)]
pub struct FileResolver {
    file: FilePk,
    matrix: PubMatrix,
}

impl FileResolver {
    pub fn new(file: FilePk) -> Self {
        let matrix = file.extract_matrix();
        FileResolver { file, matrix }
    }

    pub fn file(&self) -> &FilePk {
        &self.file
    }
}

impl KeyResolver for FileResolver {
    /// Counts the bytes of the record read from the local file.
    fn lookup(&self, id: &str, r: &Seed32) -> Result<Lookup, ResolveError> {
        let record = self.file.record_bytes(id);
        Ok(Lookup {
            resolution: check(id, r, &self.matrix, self.file.lookup(id)),
            objects_fetched: u64::from(record.is_some()),
            bytes_fetched: record.map_or(0, |b| b.len() as u64),
        })
    }
}

/// Serves online queries over a File_PK snapshot.
#[derive(Debug)]
pub struct QueryServer {
    file: RwLock<FilePk>,
}

impl QueryServer {
    pub fn new(file: FilePk) -> Self {
        QueryServer {
            file: RwLock::new(file),
        }
    }

    /// Replace the served snapshot.
    pub fn publish(&self, file: FilePk) {
        *self.file.write().unwrap_or_else(|e| e.into_inner()) = file;
    }

    pub fn handle(&self, request: &[u8]) -> Vec<u8> {
        let file = self.file.read().unwrap_or_else(|e| e.into_inner());
        match request.split_first() {
            Some((&VERB_MATRIX, [])) => [&[STATUS_OK][..], file.matrix_region()].concat(),
            Some((&VERB_RECORD, id)) => match std::str::from_utf8(id).ok().and_then(|id| file.lookup(id)) {
                Some(pk) => [&[STATUS_OK][..], pk].concat(),
                None => vec![STATUS_ABSENT],
            },
            _ => [&[STATUS_ERROR][..], b"unknown request"].concat(),
        }
    }

    /// Answer framed requests on `stream` until the peer closes it.
    pub fn serve_stream<S: Read + Write>(&self, stream: &mut S) -> io::Result<()> {
        loop {
            let request = match read_message(stream) {
                Ok(r) => r,
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
                Err(e) => return Err(e),
            };
            write_message(stream, &self.handle(&request))?;
        }
    }

    /// Accept TCP connections on a background thread.
    pub fn spawn_tcp(self: Arc<Self>, listener: TcpListener) -> std::thread::JoinHandle<()> {
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let server = Arc::clone(&self);
                std::thread::spawn(move || {
                    let _ = server.serve_stream(&mut stream);
                });
            }
        })
    }
}

pub fn write_message<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub fn read_message<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_MESSAGE {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "message too large"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Carries one request payload to a server and returns the response payload.
pub trait Transport: Send {
    fn exchange(&mut self, request: &[u8]) -> io::Result<Vec<u8>>;
}

/// Direct calls into a server in the same process.
#[derive(Debug, Clone)]
pub struct InProcess {
    server: Arc<QueryServer>,
}

impl InProcess {
    pub fn new(server: Arc<QueryServer>) -> Self {
        InProcess { server }
    }
}

impl Transport for InProcess {
    fn exchange(&mut self, request: &[u8]) -> io::Result<Vec<u8>> {
        Ok(self.server.handle(request))
    }
}

/// Framed messages over a TCP connection.
#[derive(Debug)]
pub struct Tcp {
    stream: TcpStream,
}

impl Tcp {
    pub fn connect(addr: impl std::net::ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Tcp { stream })
    }
}

impl Transport for Tcp {
    fn exchange(&mut self, request: &[u8]) -> io::Result<Vec<u8>> {
        write_message(&mut self.stream, request)?;
        read_message(&mut self.stream)
    }
}

/// Client of the online query service. The matrix is fetched on first
/// use and cached for the resolver's lifetime.
pub struct OnlineResolver<T: Transport> {
    transport: Mutex<T>,
    matrix: OnceLock<(Level, PubMatrix)>,
    bytes_sent: AtomicU64,
    bytes_received: AtomicU64,
}

impl<T: Transport> std::fmt::Debug for OnlineResolver<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnlineResolver")
            .field("matrix_cached", &self.matrix.get().is_some())
            .field("bytes_sent", &self.bytes_sent)
            .field("bytes_received", &self.bytes_received)
            .finish()
    }
}

impl<T: Transport> OnlineResolver<T> {
    pub fn new(transport: T) -> Self {
        OnlineResolver {
            transport: Mutex::new(transport),
            matrix: OnceLock::new(),
            bytes_sent: AtomicU64::new(0),
            bytes_received: AtomicU64::new(0),
        }
    }

    /// Total bytes on the wire in both directions, framing included.
    pub fn bytes_transferred(&self) -> u64 {
        self.bytes_sent.load(Ordering::Relaxed) + self.bytes_received.load(Ordering::Relaxed)
    }

    pub fn matrix_cached(&self) -> bool {
        self.matrix.get().is_some()
    }

    fn call(&self, request: &[u8]) -> Result<(Vec<u8>, u64), ResolveError> {
        let response = self
            .transport
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .exchange(request)?;
        let sent = (MESSAGE_OVERHEAD + request.len()) as u64;
        let received = (MESSAGE_OVERHEAD + response.len()) as u64;
        self.bytes_sent.fetch_add(sent, Ordering::Relaxed);
        self.bytes_received.fetch_add(received, Ordering::Relaxed);
        if response.first() == Some(&STATUS_ERROR) {
            return Err(ResolveError::Server(
                String::from_utf8_lossy(&response[1..]).into_owned(),
            ));
        }
        Ok((response, sent + received))
    }

    /// Fetch the matrix unless cached; returns bytes spent.
    fn ensure_matrix(&self) -> Result<u64, ResolveError> {
        if self.matrix.get().is_some() {
            return Ok(0);
        }
        let (resp, cost) = self.call(&[VERB_MATRIX])?;
        let region = match resp.split_first() {
            Some((&STATUS_OK, rest)) => rest,
            _ => return Err(ResolveError::Protocol("bad matrix response")),
        };
        let header = FilePkHeader::decode(region)?;
        if region.len() != header.records_offset() {
            return Err(ResolveError::Protocol("matrix response has the wrong size"));
        }
        let matrix = SeedMatrix::from_bytes(header.dims, &region[HEADER_LEN..])
            .map_err(|_| ResolveError::Protocol("matrix region"))?;
        let _ = self.matrix.set((header.level, matrix));
        Ok(cost)
    }

    pub fn resolve_online(&self, id: &str, r: &Seed32) -> Result<Lookup, ResolveError> {
        let mut bytes = self.ensure_matrix()?;
        let mut objects = u64::from(bytes > 0);
        let (level, matrix) = self.matrix.get().expect("set above");
        if IdentityHandle::new(id, *r).is_err() {
            return Ok(Lookup {
                resolution: Resolution::Bottom(Bottom::NotFound),
                objects_fetched: objects,
                bytes_fetched: bytes,
            });
        }
        let request = [&[VERB_RECORD][..], id.as_bytes()].concat();
        let (resp, cost) = self.call(&request)?;
        bytes += cost;
        objects += 1;
        let pk = match resp.split_first() {
            Some((&STATUS_ABSENT, [])) => None,
            Some((&STATUS_OK, pk)) if pk.len() == level.pk_len() => Some(pk),
            _ => return Err(ResolveError::Protocol("bad record response")),
        };
        Ok(Lookup {
            resolution: check(id, r, matrix, pk),
            objects_fetched: objects,
            bytes_fetched: bytes,
        })
    }
}

impl<T: Transport> KeyResolver for OnlineResolver<T> {
    fn lookup(&self, id: &str, r: &Seed32) -> Result<Lookup, ResolveError> {
        self.resolve_online(id, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::center::KeyCenter;
    use crate::protocol::run_keygen;
    use crate::seed::Dimensions;
    use chrono::{DateTime, Duration, Utc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn populated() -> (KeyCenter, Vec<(String, Seed32, Vec<u8>)>) {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let mut kc = KeyCenter::init(Level::MlDsa44, Dimensions::new(16, 16).unwrap(), &mut rng);
        let mut keys = Vec::new();
        for id in ["APNIC", "APNIC||CNNIC", "APNIC||CNNIC||CN1"] {
            kc.register(id, id, t0(), t0() + Duration::days(30), &mut rng)
                .unwrap();
            let k = run_keygen(&mut kc, id, &mut rng).unwrap();
            keys.push((id.to_owned(), k.r, k.pk));
        }
        (kc, keys)
    }

    #[test]
    fn resolves_generated_keys() {
        let (kc, keys) = populated();
        for (id, r, pk) in &keys {
            let res = resolve(id, r, kc.file_pk());
            let k = res.key().expect("resolves");
            assert_eq!(&k.pk, pk);
            assert_eq!(k.rho_checked, ipkpq_mldsa::decode_rho(pk).unwrap());
        }
        assert_eq!(
            resolve("UNKNOWN", &[0; 32], kc.file_pk()),
            Resolution::Bottom(Bottom::NotFound)
        );
        assert_eq!(
            resolve("", &[0; 32], kc.file_pk()),
            Resolution::Bottom(Bottom::NotFound)
        );
    }

    #[test]
    fn flipped_r_is_bottom() {
        let (kc, keys) = populated();
        let (id, r, _) = &keys[1];
        for bit in 0..256 {
            let mut bad = *r;
            bad[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(
                resolve(id, &bad, kc.file_pk()),
                Resolution::Bottom(Bottom::RhoMismatch)
            );
        }
    }

    #[test]
    fn malformed_file_is_error_not_bottom() {
        assert!(resolve_bytes("A", &[0; 32], b"IPKQ\x01").is_err());
    }

    #[test]
    fn online_matches_offline_and_counts_bytes() {
        let (kc, keys) = populated();
        let server = Arc::new(QueryServer::new(kc.file_pk().clone()));
        let online = OnlineResolver::new(InProcess::new(server));
        let (id, r, pk) = &keys[2];
        let first = online.resolve_online(id, r).unwrap();
        assert_eq!(first.resolution.key().unwrap().pk, *pk);
        assert!(online.matrix_cached());
        let matrix_cost = (4 + 1) + (4 + 1 + HEADER_LEN + 16 * 16 * 32);
        let record_cost = (4 + 1 + id.len()) + (4 + 1 + pk.len());
        assert_eq!(first.bytes_fetched as usize, matrix_cost + record_cost);
        let second = online.resolve_online(id, r).unwrap();
        assert_eq!(second.bytes_fetched as usize, record_cost);
        let record_len = 2 + id.len() + pk.len();
        assert!((second.bytes_fetched as usize) < record_len + 64);
        for (id, r, _) in &keys {
            let mut bad = *r;
            bad[0] ^= 0x80;
            for rr in [r, &bad] {
                assert_eq!(
                    online.resolve_online(id, rr).unwrap().resolution,
                    resolve(id, rr, kc.file_pk())
                );
            }
        }
        assert_eq!(
            online.resolve_online("NOPE", &[0; 32]).unwrap().resolution,
            Resolution::Bottom(Bottom::NotFound)
        );
    }

    struct Substituting {
        inner: InProcess,
        pk: Vec<u8>,
    }

    impl Transport for Substituting {
        fn exchange(&mut self, request: &[u8]) -> io::Result<Vec<u8>> {
            let resp = self.inner.exchange(request)?;
            if request[0] == VERB_RECORD {
                return Ok([&[STATUS_OK][..], &self.pk].concat());
            }
            Ok(resp)
        }
    }

    #[test]
    fn server_substitution_caught() {
        let (kc, keys) = populated();
        let server = Arc::new(QueryServer::new(kc.file_pk().clone()));
        let online = OnlineResolver::new(Substituting {
            inner: InProcess::new(server),
            pk: keys[0].2.clone(),
        });
        let (id, r, _) = &keys[1];
        assert_eq!(
            online.resolve_online(id, r).unwrap().resolution,
            Resolution::Bottom(Bottom::RhoMismatch)
        );
    }

    #[test]
    fn tcp_transport() {
        let (kc, keys) = populated();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        Arc::new(QueryServer::new(kc.file_pk().clone())).spawn_tcp(listener);
        let online = OnlineResolver::new(Tcp::connect(addr).unwrap());
        for (id, r, pk) in &keys {
            assert_eq!(&online.resolve_online(id, r).unwrap().resolution.key().unwrap().pk, pk);
        }
    }

    #[test]
    fn server_rejects_garbage() {
        let (kc, _) = populated();
        let server = QueryServer::new(kc.file_pk().clone());
        assert_eq!(server.handle(&[])[0], STATUS_ERROR);
        assert_eq!(server.handle(&[0x07])[0], STATUS_ERROR);
        assert_eq!(server.handle(&[VERB_MATRIX, 1])[0], STATUS_ERROR);
        assert_eq!(server.handle(&[VERB_RECORD, 0xff]), vec![STATUS_ABSENT]);
    }

    #[test]
    fn cached_and_fresh_agree() {
        let (kc, keys) = populated();
        let server = Arc::new(QueryServer::new(kc.file_pk().clone()));
        let warm = OnlineResolver::new(InProcess::new(Arc::clone(&server)));
        warm.resolve_online("APNIC", &keys[0].1).unwrap();
        for (id, r, _) in &keys {
            let fresh = OnlineResolver::new(InProcess::new(Arc::clone(&server)));
            assert_eq!(
                warm.resolve_online(id, r).unwrap().resolution,
                fresh.resolve_online(id, r).unwrap().resolution
            );
        }
    }
}
