//! Two-party key generation between a CA and the key center.
//!
//! ```text
//! CA                                        KC
//! K, rho'_r(CA), r  <- random
//! Kr = K + r              --- Msg1 Kr -->
//!                                           R   = Kr + rho_KC
//!                                           rho = public seed of (id, R)
//!                                           rho'_masked = private partial + rho'_r(KC)
//!                    <-- Msg2 R, rho'_masked, rho ---
//! rho' = rho'_masked + rho'_r(CA)
//! (sk, pk) = keygen(rho, rho', K)
//!                         --- Msg3 t1 -->
//!                                           pk = rho || t1, appended to File_PK
//! ```
//!
//! The center never learns `K` or `rho'_r(CA)`, so it cannot rebuild the
//! CA's key. Both sides are explicit phase machines; any message arriving
//! in the wrong phase is rejected.

use std::io::{Read, Write};

use ipkpq_mldsa::Level;
use rand_core::{CryptoRng, RngCore};

use crate::center::{CenterError, KeyCenter};
use crate::seed::{self, derive_public_seed, IdentityHandle, Seed32, Seed64};

pub const FRAME_MAGIC: &[u8; 4] = b"IPKM";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 11;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("{side} in phase {phase} cannot accept {got}")]
    OutOfOrder {
        side: &'static str,
        phase: &'static str,
        got: &'static str,
    },
    #[error("message level {got} does not match {expected}")]
    LevelMismatch { expected: Level, got: Level },
    #[error("t1 is {got} bytes, expected {expected}")]
    T1Length { expected: usize, got: usize },
    #[error(transparent)]
    Center(#[from] CenterError),
    #[error(transparent)]
    Seed(#[from] seed::SeedError),
    #[error(transparent)]
    Key(#[from] ipkpq_mldsa::Error),
    #[error(transparent)]
    Directory(#[from] crate::directory::DirectoryError),
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    Version(u8),
    #[error("unknown message type {0}")]
    MsgType(u8),
    #[error("unknown level code {0}")]
    Level(u8),
    #[error("message type {msg_type} body is {got} bytes, expected {expected}")]
    BodyLength {
        msg_type: u8,
        expected: usize,
        got: usize,
    },
    #[error("frame truncated at offset {offset}: need {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Msg1 {
    pub kr: Seed32,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Msg2 {
    pub r: Seed32,
    pub rho_prime_masked: Seed64,
    pub rho: Seed32,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Msg3 {
    pub t1: Vec<u8>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Message {
    Kr(Msg1),
    Seeds(Msg2),
    T1(Msg3),
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Kr(_) => 1,
            Message::Seeds(_) => 2,
            Message::T1(_) => 3,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Message::Kr(_) => "Msg1",
            Message::Seeds(_) => "Msg2",
            Message::T1(_) => "Msg3",
        }
    }

    fn body(&self) -> Vec<u8> {
        match self {
            Message::Kr(m) => m.kr.to_vec(),
            Message::Seeds(m) => [&m.r[..], &m.rho_prime_masked, &m.rho].concat(),
            Message::T1(m) => m.t1.clone(),
        }
    }
}

fn body_len(msg_type: u8, level: Level) -> usize {
    match msg_type {
        1 => 32,
        2 => 128,
        _ => level.t1_len(),
    }
}

/// A framed protocol message:
/// `"IPKM" | version u8 | msg_type u8 | level u8 | body_len u32 BE | body`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Frame {
    pub level: Level,
    pub message: Message,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let body = self.message.body();
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + body.len());
        out.extend_from_slice(FRAME_MAGIC);
        out.push(FRAME_VERSION);
        out.push(self.message.msg_type());
        out.push(self.level.code());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decode one frame from the front of `bytes`; returns it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
        let (msg_type, level, len) = Self::decode_header(bytes)?;
        let total = FRAME_HEADER_LEN + len;
        if bytes.len() < total {
            return Err(FrameError::Truncated {
                offset: bytes.len(),
                needed: total - bytes.len(),
            });
        }
        let body = &bytes[FRAME_HEADER_LEN..total];
        let message = match msg_type {
            1 => Message::Kr(Msg1 {
                kr: body.try_into().expect("length checked"),
            }),
            2 => Message::Seeds(Msg2 {
                r: body[..32].try_into().expect("length checked"),
                rho_prime_masked: body[32..96].try_into().expect("length checked"),
                rho: body[96..].try_into().expect("length checked"),
            }),
            _ => Message::T1(Msg3 { t1: body.to_vec() }),
        };
        Ok((Frame { level, message }, total))
    }

    fn decode_header(bytes: &[u8]) -> Result<(u8, Level, usize), FrameError> {
        let have = bytes.len().min(FRAME_HEADER_LEN);
        if bytes[..have.min(4)] != FRAME_MAGIC[..have.min(4)] {
            return Err(FrameError::BadMagic);
        }
        if have < FRAME_HEADER_LEN {
            if have > 4 && bytes[4] != FRAME_VERSION {
                return Err(FrameError::Version(bytes[4]));
            }
            return Err(FrameError::Truncated {
                offset: have,
                needed: FRAME_HEADER_LEN - have,
            });
        }
        if bytes[4] != FRAME_VERSION {
            return Err(FrameError::Version(bytes[4]));
        }
        let msg_type = bytes[5];
        if !(1..=3).contains(&msg_type) {
            return Err(FrameError::MsgType(msg_type));
        }
        let level = Level::from_code(bytes[6]).ok_or(FrameError::Level(bytes[6]))?;
        let len = u32::from_be_bytes(bytes[7..11].try_into().expect("sized")) as usize;
        let expected = body_len(msg_type, level);
        if len != expected {
            return Err(FrameError::BodyLength {
                msg_type,
                expected,
                got: len,
            });
        }
        Ok((msg_type, level, len))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FrameError> {
        w.write_all(&self.encode())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Frame, FrameError> {
        let mut buf = vec![0u8; FRAME_HEADER_LEN];
        r.read_exact(&mut buf)?;
        let (_, _, len) = Self::decode_header(&buf)?;
        buf.resize(FRAME_HEADER_LEN + len, 0);
        r.read_exact(&mut buf[FRAME_HEADER_LEN..])?;
        Ok(Self::decode(&buf)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaPhase {
    Started,
    GotSeeds,
    Finished,
}

impl CaPhase {
    fn name(self) -> &'static str {
        match self {
            CaPhase::Started => "Started",
            CaPhase::GotSeeds => "GotSeeds",
            CaPhase::Finished => "Finished",
        }
    }
}

/// The CA's key once the protocol completes.
#[derive(Clone)]
pub struct CaKey {
    pub level: Level,
    pub sk: Vec<u8>,
    pub pk: Vec<u8>,
    pub r: Seed32,
}

impl std::fmt::Debug for CaKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaKey")
            .field("level", &self.level)
            .field("r", &hex::encode(self.r))
            .finish_non_exhaustive()
    }
}

/// CA-side protocol state. The three random values never leave it.
pub struct CaKeygen {
    level: Level,
    k_ca: Seed32,
    rho_prime_r_ca: Seed64,
    // Only the CA can open Kr; the center never sees r.
    #[allow(dead_code)]
    r_ca: Seed32,
    phase: CaPhase,
    seeds: Option<Msg2>,
    result: Option<CaKey>,
}

impl std::fmt::Debug for CaKeygen {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaKeygen")
            .field("level", &self.level)
            .field("phase", &self.phase)
            .finish_non_exhaustive()
    }
}

/// Start a run with fresh randomness.
pub fn ca_begin<R: RngCore + CryptoRng>(level: Level, rng: &mut R) -> (CaKeygen, Msg1) {
    let mut k_ca = [0u8; 32];
    let mut rho_prime_r_ca = [0u8; 64];
    let mut r_ca = [0u8; 32];
    rng.fill_bytes(&mut k_ca);
    rng.fill_bytes(&mut rho_prime_r_ca);
    rng.fill_bytes(&mut r_ca);
    ca_begin_with(level, k_ca, rho_prime_r_ca, r_ca)
}

/// Start a run with caller-chosen randomness.
pub fn ca_begin_with(
    level: Level,
    k_ca: Seed32,
    rho_prime_r_ca: Seed64,
    r_ca: Seed32,
) -> (CaKeygen, Msg1) {
    let kr = seed::add(&k_ca, &r_ca);
    let state = CaKeygen {
        level,
        k_ca,
        rho_prime_r_ca,
        r_ca,
        phase: CaPhase::Started,
        seeds: None,
        result: None,
    };
    (state, Msg1 { kr })
}

impl CaKeygen {
    pub fn level(&self) -> Level {
        self.level
    }

    pub fn phase(&self) -> CaPhase {
        self.phase
    }

    fn out_of_order(&self, got: &'static str) -> ProtocolError {
        ProtocolError::OutOfOrder {
            side: "CA",
            phase: self.phase.name(),
            got,
        }
    }

    /// Accept the center's seeds.
    pub fn receive(&mut self, msg2: &Msg2) -> Result<(), ProtocolError> {
        if self.phase != CaPhase::Started {
            return Err(self.out_of_order("Msg2"));
        }
        self.seeds = Some(msg2.clone());
        self.phase = CaPhase::GotSeeds;
        Ok(())
    }

    /// Derive the key pair and produce the message carrying `t1`.
    pub fn finish(&mut self) -> Result<Msg3, ProtocolError> {
        if self.phase != CaPhase::GotSeeds {
            return Err(self.out_of_order("finish"));
        }
        let seeds = self.seeds.take().expect("set in GotSeeds");
        let rho_prime = seed::add(&seeds.rho_prime_masked, &self.rho_prime_r_ca);
        let c = ipkpq_mldsa::expand_components(self.level, &seeds.rho, &rho_prime, &self.k_ca)?;
        self.result = Some(CaKey {
            level: self.level,
            sk: c.keypair.sk,
            pk: c.keypair.pk,
            r: seeds.r,
        });
        self.phase = CaPhase::Finished;
        Ok(Msg3 { t1: c.t1 })
    }

    pub fn ca_finish(&mut self, msg2: &Msg2) -> Result<Msg3, ProtocolError> {
        self.receive(msg2)?;
        self.finish()
    }

    /// Feed any message; only `Msg2` in phase `Started` is accepted.
    pub fn handle(&mut self, msg: &Message) -> Result<Message, ProtocolError> {
        match msg {
            Message::Seeds(m2) => Ok(Message::T1(self.ca_finish(m2)?)),
            other => Err(self.out_of_order(other.name())),
        }
    }

    pub fn result(&self) -> Option<&CaKey> {
        self.result.as_ref()
    }

    pub fn into_result(self) -> Option<CaKey> {
        self.result
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KcPhase {
    Responded,
    Committed,
}

/// Center-side state for one run.
#[derive(Debug, Clone)]
pub struct KcKeygen {
    id: String,
    level: Level,
    kr: Seed32,
    r: Seed32,
    rho: Seed32,
    phase: KcPhase,
}

impl KcKeygen {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kr(&self) -> &Seed32 {
        &self.kr
    }

    pub fn r(&self) -> &Seed32 {
        &self.r
    }

    pub fn rho(&self) -> &Seed32 {
        &self.rho
    }

    pub fn phase(&self) -> KcPhase {
        self.phase
    }
}

/// Answer the CA's first message for a registered identity.
pub fn kc_respond(
    center: &mut KeyCenter,
    id: &str,
    msg1: &Msg1,
) -> Result<(KcKeygen, Msg2), ProtocolError> {
    center.pending_record(id)?;
    let secret = center
        .sealed()
        .reg_secret(id)
        .ok_or_else(|| CenterError::UnknownId(id.to_owned()))?;
    let r = seed::add(&msg1.kr, &center.sealed().kc_rho());
    let handle = IdentityHandle::new(id, r)?;
    let rho = derive_public_seed(&handle, center.public_matrix());
    let partial = center.sealed().private_partial(&handle);
    let rho_prime_masked = seed::add(&partial, &secret);
    center.bind_r(id, r)?;
    let state = KcKeygen {
        id: id.to_owned(),
        level: center.level(),
        kr: msg1.kr,
        r,
        rho,
        phase: KcPhase::Responded,
    };
    let msg2 = Msg2 {
        r,
        rho_prime_masked,
        rho,
    };
    Ok((state, msg2))
}

/// Assemble `pk = rho || t1` and append it to File_PK.
pub fn kc_commit(
    center: &mut KeyCenter,
    state: &mut KcKeygen,
    msg3: &Msg3,
) -> Result<Vec<u8>, ProtocolError> {
    if state.phase != KcPhase::Responded {
        return Err(ProtocolError::OutOfOrder {
            side: "KC",
            phase: "Committed",
            got: "Msg3",
        });
    }
    if state.level != center.level() {
        return Err(ProtocolError::LevelMismatch {
            expected: center.level(),
            got: state.level,
        });
    }
    if msg3.t1.len() != state.level.t1_len() {
        return Err(ProtocolError::T1Length {
            expected: state.level.t1_len(),
            got: msg3.t1.len(),
        });
    }
    let pk = ipkpq_mldsa::pk_encode(state.level, &state.rho, &msg3.t1)?;
    center.file_pk_mut().append_record(&state.id, &pk)?;
    center.activate(&state.id)?;
    state.phase = KcPhase::Committed;
    Ok(pk)
}

/// Center-side session that dispatches arbitrary incoming messages.
#[derive(Debug, Clone)]
pub struct KcSession {
    id: String,
    level: Level,
    state: Option<KcKeygen>,
}

impl KcSession {
    pub fn new(id: impl Into<String>, level: Level) -> Self {
        KcSession {
            id: id.into(),
            level,
            state: None,
        }
    }

    fn phase_name(&self) -> &'static str {
        match self.state.as_ref().map(|s| s.phase) {
            None => "AwaitingKr",
            Some(KcPhase::Responded) => "Responded",
            Some(KcPhase::Committed) => "Committed",
        }
    }

    pub fn state(&self) -> Option<&KcKeygen> {
        self.state.as_ref()
    }

    /// Returns the reply, if the message calls for one.
    pub fn handle(
        &mut self,
        center: &mut KeyCenter,
        frame: &Frame,
    ) -> Result<Option<Frame>, ProtocolError> {
        if frame.level != self.level {
            return Err(ProtocolError::LevelMismatch {
                expected: self.level,
                got: frame.level,
            });
        }
        let phase = self.phase_name();
        let out_of_order = |got| ProtocolError::OutOfOrder {
            side: "KC",
            phase,
            got,
        };
        match (&frame.message, self.state.as_mut()) {
            (Message::Kr(m1), None) => {
                let (st, m2) = kc_respond(center, &self.id, m1)?;
                self.state = Some(st);
                Ok(Some(Frame {
                    level: self.level,
                    message: Message::Seeds(m2),
                }))
            }
            (Message::T1(m3), Some(st)) if st.phase == KcPhase::Responded => {
                kc_commit(center, st, m3)?;
                Ok(None)
            }
            (m, _) => Err(out_of_order(m.name())),
        }
    }
}

/// Run the whole exchange in-process, passing every message through its
/// wire encoding.
pub fn run_keygen<R: RngCore + CryptoRng>(
    center: &mut KeyCenter,
    id: &str,
    rng: &mut R,
) -> Result<CaKey, ProtocolError> {
    let level = center.level();
    let (mut ca, m1) = ca_begin(level, rng);
    let mut kc = KcSession::new(id, level);
    let wire = |f: Frame| Frame::decode(&f.encode()).map(|(f, _)| f);
    let f1 = wire(Frame {
        level,
        message: Message::Kr(m1),
    })
    .expect("own frame decodes");
    let f2 = kc.handle(center, &f1)?.expect("Msg1 gets a reply");
    let f2 = wire(f2).expect("own frame decodes");
    let m3 = ca.handle(&f2.message)?;
    let f3 = wire(Frame { level, message: m3 }).expect("own frame decodes");
    kc.handle(center, &f3)?;
    Ok(ca.into_result().expect("finished"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Dimensions;
    use chrono::{DateTime, Duration, Utc};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn setup(level: Level) -> (KeyCenter, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut kc = KeyCenter::init(level, Dimensions::new(8, 8).unwrap(), &mut rng);
        kc.register("APNIC", "APNIC", t0(), t0() + Duration::days(365), &mut rng)
            .unwrap();
        (kc, rng)
    }

    #[test]
    fn kr_masks_k() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (st, m1) = ca_begin(Level::MlDsa44, &mut rng);
        assert_eq!(st.phase(), CaPhase::Started);
        assert_eq!(seed::add(&m1.kr, &seed::neg(&st.r_ca)), st.k_ca);
        let (_, m1b) = ca_begin(Level::MlDsa44, &mut rng);
        assert_ne!(m1.kr, m1b.kr);
    }

    #[test]
    fn full_run_agrees() {
        for level in Level::ALL {
            let (mut kc, mut rng) = setup(level);
            let key = run_keygen(&mut kc, "APNIC", &mut rng).unwrap();
            assert_eq!(kc.file_pk().lookup("APNIC").unwrap(), &key.pk[..]);
            assert_eq!(ipkpq_mldsa::decode_rho(&key.pk).unwrap(), {
                let h = IdentityHandle::new("APNIC", key.r).unwrap();
                derive_public_seed(&h, kc.public_matrix())
            });
            let sig = ipkpq_mldsa::sign(&key.sk, b"roa", b"").unwrap();
            assert!(ipkpq_mldsa::verify(&key.pk, b"roa", b"", &sig).unwrap());
            let rec = kc.registrations().get("APNIC").unwrap();
            assert_eq!(rec.r, Some(key.r));
            assert_eq!(rec.status, crate::center::Status::Active);
        }
    }

    #[test]
    fn unknown_id_rejected() {
        let (mut kc, mut rng) = setup(Level::MlDsa44);
        let (_, m1) = ca_begin(Level::MlDsa44, &mut rng);
        assert!(matches!(
            kc_respond(&mut kc, "NOBODY", &m1),
            Err(ProtocolError::Center(CenterError::UnknownId(_)))
        ));
    }

    #[test]
    fn duplicate_keygen_and_commit_rejected() {
        let (mut kc, mut rng) = setup(Level::MlDsa44);
        let (mut ca, m1) = ca_begin(Level::MlDsa44, &mut rng);
        let (mut st, m2) = kc_respond(&mut kc, "APNIC", &m1).unwrap();
        assert!(kc_respond(&mut kc, "APNIC", &m1).is_err());
        let m3 = ca.ca_finish(&m2).unwrap();
        kc_commit(&mut kc, &mut st, &m3).unwrap();
        assert!(matches!(
            kc_commit(&mut kc, &mut st, &m3),
            Err(ProtocolError::OutOfOrder { .. })
        ));
        assert!(kc_respond(&mut kc, "APNIC", &m1).is_err());
        assert_eq!(kc.file_pk().record_count(), 1);
    }

    #[test]
    fn ca_phases_strictly_forward() {
        let (mut kc, mut rng) = setup(Level::MlDsa44);
        let (mut ca, m1) = ca_begin(Level::MlDsa44, &mut rng);
        assert!(ca.finish().is_err());
        let (_, m2) = kc_respond(&mut kc, "APNIC", &m1).unwrap();
        ca.receive(&m2).unwrap();
        assert_eq!(ca.phase(), CaPhase::GotSeeds);
        assert!(ca.receive(&m2).is_err());
        ca.finish().unwrap();
        assert_eq!(ca.phase(), CaPhase::Finished);
        assert!(ca.finish().is_err());
        assert!(ca.receive(&m2).is_err());
    }

    #[test]
    fn frames_round_trip() {
        let frames = [
            Frame {
                level: Level::MlDsa44,
                message: Message::Kr(Msg1 { kr: [7; 32] }),
            },
            Frame {
                level: Level::MlDsa65,
                message: Message::Seeds(Msg2 {
                    r: [1; 32],
                    rho_prime_masked: [2; 64],
                    rho: [3; 32],
                }),
            },
            Frame {
                level: Level::MlDsa87,
                message: Message::T1(Msg3 {
                    t1: vec![9; Level::MlDsa87.t1_len()],
                }),
            },
        ];
        for f in &frames {
            let bytes = f.encode();
            assert_eq!(&bytes[..4], b"IPKM");
            let (back, used) = Frame::decode(&bytes).unwrap();
            assert_eq!(&back, f);
            assert_eq!(used, bytes.len());
            let mut cur = std::io::Cursor::new(bytes.clone());
            assert_eq!(&Frame::read_from(&mut cur).unwrap(), f);
        }
        assert_eq!(frames[0].encode().len(), 11 + 32);
        assert_eq!(frames[1].encode().len(), 11 + 128);
        assert_eq!(frames[2].encode().len(), 11 + 320 * 8);
    }

    #[test]
    fn frame_errors() {
        let good = Frame {
            level: Level::MlDsa44,
            message: Message::Kr(Msg1 { kr: [0; 32] }),
        }
        .encode();
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(Frame::decode(&b), Err(FrameError::BadMagic)));
        let mut b = good.clone();
        b[4] = 9;
        assert!(matches!(Frame::decode(&b), Err(FrameError::Version(9))));
        let mut b = good.clone();
        b[5] = 4;
        assert!(matches!(Frame::decode(&b), Err(FrameError::MsgType(4))));
        let mut b = good.clone();
        b[6] = 1;
        assert!(matches!(Frame::decode(&b), Err(FrameError::Level(1))));
        let mut b = good.clone();
        b[10] = 33;
        assert!(matches!(Frame::decode(&b), Err(FrameError::BodyLength { .. })));
        assert!(matches!(
            Frame::decode(&good[..20]),
            Err(FrameError::Truncated { offset: 20, needed: 23 })
        ));
        for cut in 0..good.len() {
            assert!(Frame::decode(&good[..cut]).is_err());
        }
    }

    #[test]
    fn session_rejects_every_out_of_order_pair() {
        let level = Level::MlDsa44;
        let (_, mut rng) = setup(level);
        let (_, m1) = ca_begin(level, &mut rng);
        let sample = [
            Message::Kr(m1.clone()),
            Message::Seeds(Msg2 {
                r: [0; 32],
                rho_prime_masked: [0; 64],
                rho: [0; 32],
            }),
            Message::T1(Msg3 {
                t1: vec![0; level.t1_len()],
            }),
        ];
        for a in 0..3 {
            for b in 0..3 {
                // A rejected message leaves the phase unchanged.
                let valid_kc = (a == 0 && b == 2) || (a != 0 && b == 0);
                let (mut kc, _) = setup(level);
                let mut sess = KcSession::new("APNIC", level);
                let first = sess.handle(
                    &mut kc,
                    &Frame {
                        level,
                        message: sample[a].clone(),
                    },
                );
                assert_eq!(first.is_ok(), a == 0, "KC first={a}");
                let second = sess.handle(
                    &mut kc,
                    &Frame {
                        level,
                        message: sample[b].clone(),
                    },
                );
                assert_eq!(second.is_ok(), valid_kc, "KC pair=({a},{b})");

                let (mut ca, _) = ca_begin(level, &mut rng);
                let first = ca.handle(&sample[a]);
                assert_eq!(first.is_ok(), a == 1, "CA first={a}");
                let second = ca.handle(&sample[b]);
                assert_eq!(second.is_ok(), a != 1 && b == 1, "CA pair=({a},{b})");
            }
        }
    }

    #[test]
    fn wrong_level_frame_rejected() {
        let (mut kc, mut rng) = setup(Level::MlDsa44);
        let (_, m1) = ca_begin(Level::MlDsa65, &mut rng);
        let mut sess = KcSession::new("APNIC", Level::MlDsa44);
        let f = Frame {
            level: Level::MlDsa65,
            message: Message::Kr(m1),
        };
        assert!(matches!(
            sess.handle(&mut kc, &f),
            Err(ProtocolError::LevelMismatch { .. })
        ));
    }
}
