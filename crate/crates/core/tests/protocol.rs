use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use suc_core::genie::{genie_create, EntropySource};
use suc_core::protocol::{
    memory_pair, Action, CipherE, Command, Device, ERef, ErrorCode, FaultPoint, Interceptor,
    Message, ProtocolError, Purpose, SessionReport, TaConfig, TcpTransport, Transport,
    TrustedAuthority, UirStore,
};
use suc_core::Catalog;

const TIMEOUT: Duration = Duration::from_millis(300);

fn device(seed: u8) -> Device {
    let suc = genie_create(
        Catalog::builtin_verified(),
        EntropySource::Seeded([seed; 32]),
    )
    .unwrap();
    Device::with_rng([seed; 16], suc, ChaCha20Rng::seed_from_u64(seed as u64))
}

fn ta(k: usize, t: usize) -> TrustedAuthority {
    TrustedAuthority::with_rng(
        UirStore::in_memory(),
        TaConfig { k, t },
        ChaCha20Rng::seed_from_u64(99),
    )
    .unwrap()
}

type Policy = Box<dyn FnMut(usize, &Message) -> Action + Send>;

fn pass() -> Policy {
    Box::new(|_, _| Action::Pass)
}

/// Runs one session over an in-memory channel; the policies act on what each
/// side sends.
fn session<R: Send>(
    ta: &TrustedAuthority,
    dev: &mut Device,
    ta_policy: Policy,
    dev_policy: Policy,
    op: impl FnOnce(&mut Device, &mut dyn Transport) -> R + Send,
) -> (Result<SessionReport, ProtocolError>, R, Vec<Message>) {
    let (a, b) = memory_pair(TIMEOUT);
    let mut dev_side = Interceptor::new(b, dev_policy);
    let log = dev_side.transcript();
    let (t, d) = thread::scope(|s| {
        let h = s.spawn(move || {
            let mut ta_side = Interceptor::new(a, ta_policy);
            ta.serve(&mut ta_side)
        });
        let d = op(dev, &mut dev_side);
        drop(dev_side);
        (h.join().unwrap(), d)
    });
    let log = log.lock().unwrap().clone();
    (t, d, log)
}

fn enroll(ta: &TrustedAuthority, dev: &mut Device) {
    let (t, d, _) = session(ta, dev, pass(), pass(), |d, tr| d.enroll(tr));
    t.unwrap();
    d.unwrap();
}

fn identify(
    ta: &TrustedAuthority,
    dev: &mut Device,
) -> (
    Result<SessionReport, ProtocolError>,
    Result<suc_core::protocol::DeviceOutcome, ProtocolError>,
) {
    let (t, d, _) = session(ta, dev, pass(), pass(), |d, tr| d.identify(tr));
    (t, d)
}

fn cursors(ta: &TrustedAuthority, dev: &Device) -> (usize, u64) {
    (ta.record(dev.sn()).unwrap().cursor, dev.cursor())
}

#[test]
fn enrollment_records_the_keystream() {
    let ta = ta(128, 16);
    let mut dev = device(1);
    enroll(&ta, &mut dev);
    let rec = ta.record(dev.sn()).unwrap();
    assert_eq!((rec.t(), rec.k, rec.cursor, rec.epoch), (16, 128, 0, 0));
    assert_eq!(dev.cursor(), 0);
    let mut twin =
        genie_create(Catalog::builtin_verified(), EntropySource::Seeded([1; 32])).unwrap();
    let stream = twin.keystream(2048).to_bytes_msb();
    let joined: Vec<u8> = rec
        .responses
        .iter()
        .flat_map(|y| y.iter().copied())
        .collect();
    assert_eq!(joined, stream);

    let other = self::ta(128, 16);
    let mut again = device(1);
    enroll(&other, &mut again);
    assert_eq!(other.record(again.sn()).unwrap(), rec);
}

#[test]
fn enrollment_rejections() {
    assert!(matches!(
        TrustedAuthority::new(UirStore::in_memory(), TaConfig { k: 128, t: 0 }),
        Err(ProtocolError::BadParameters(_))
    ));
    let ta = ta(64, 4);
    let mut dev = device(2);
    enroll(&ta, &mut dev);
    let mut clone = device(2);
    let (t, d, _) = session(&ta, &mut clone, pass(), pass(), |d, tr| d.enroll(tr));
    assert!(matches!(t, Err(ProtocolError::AlreadyEnrolled)));
    assert!(matches!(
        d,
        Err(ProtocolError::Remote {
            code: ErrorCode::AlreadyEnrolled,
            ..
        })
    ));
    assert!(!clone.is_enrolled());
    let (mut a, _b) = memory_pair(TIMEOUT);
    assert!(matches!(
        dev.enroll(&mut a),
        Err(ProtocolError::AlreadyEnrolled)
    ));
}

#[test]
fn honest_identification_takes_three_flights() {
    let ta = ta(128, 16);
    let mut dev = device(3);
    enroll(&ta, &mut dev);
    for i in 0..3 {
        let (t, d, log) = session(&ta, &mut dev, pass(), pass(), |d, tr| d.identify(tr));
        assert_eq!(t.unwrap().index, i);
        assert_eq!(d.unwrap().index, i);
        assert_eq!(cursors(&ta, &dev), (i + 1, i as u64 + 1));
        let tags: Vec<u8> = log.iter().map(Message::tag).collect();
        assert_eq!(tags, vec![0x01, 0x02, 0x03]);
    }
    assert!(ta.audit().reused_keys().is_empty());
}

#[test]
fn tampered_challenge_is_rejected_and_retry_succeeds() {
    let ta = ta(128, 16);
    let mut dev = device(4);
    enroll(&ta, &mut dev);
    let flip: Policy = Box::new(|_, m| match m {
        Message::Challenge {
            epoch,
            index,
            ct,
            nonce,
        } => {
            let mut ct = *ct;
            ct[3] ^= 0x10;
            Action::Replace(Message::Challenge {
                epoch: *epoch,
                index: *index,
                ct,
                nonce: *nonce,
            })
        }
        _ => Action::Pass,
    });
    let (t, d, _) = session(&ta, &mut dev, flip, pass(), |d, tr| d.identify(tr));
    assert!(matches!(d, Err(ProtocolError::Rejected(_))));
    assert!(t.is_err());
    assert_eq!(cursors(&ta, &dev), (0, 0));
    let (t, d) = identify(&ta, &mut dev);
    assert_eq!((t.unwrap().index, d.unwrap().index), (0, 0));
}

#[test]
fn tampered_answer_is_rejected_by_the_ta() {
    let ta = ta(128, 16);
    let mut dev = device(5);
    enroll(&ta, &mut dev);
    let flip: Policy = Box::new(|_, m| match m {
        Message::Response { ct, nonce } => {
            let mut nonce = *nonce;
            nonce[0] ^= 1;
            Action::Replace(Message::Response { ct: *ct, nonce })
        }
        _ => Action::Pass,
    });
    let (t, d, _) = session(&ta, &mut dev, pass(), flip, |d, tr| d.identify(tr));
    assert!(matches!(t, Err(ProtocolError::Rejected(_))));
    assert!(matches!(
        d,
        Err(ProtocolError::Remote {
            code: ErrorCode::Rejected,
            ..
        })
    ));
    assert_eq!(cursors(&ta, &dev), (0, 0));
}

#[test]
fn replayed_answer_is_rejected() {
    let ta = ta(128, 16);
    let mut dev = device(6);
    enroll(&ta, &mut dev);
    let (t, _, log) = session(&ta, &mut dev, pass(), pass(), |d, tr| d.identify(tr));
    t.unwrap();
    let (hello, old_answer) = (log[0].clone(), log[2].clone());

    // An adversary replays the recorded hello and answer against a fresh challenge.
    let (a, mut b) = memory_pair(TIMEOUT);
    let result = thread::scope(|s| {
        let h = s.spawn(|| {
            let mut a = a;
            ta.serve(&mut a)
        });
        b.send(&hello).unwrap();
        let challenge = b.recv().unwrap().unwrap();
        assert!(matches!(challenge, Message::Challenge { index: 1, .. }));
        b.send(&old_answer).unwrap();
        h.join().unwrap()
    });
    assert!(matches!(result, Err(ProtocolError::Rejected(_))));
    assert_eq!(ta.record(dev.sn()).unwrap().cursor, 1);
    let (t, d) = identify(&ta, &mut dev);
    assert_eq!((t.unwrap().index, d.unwrap().index), (1, 1));
}

#[test]
fn update_cycle() {
    let ta = ta(128, 4);
    let mut dev = device(7);
    enroll(&ta, &mut dev);
    let old = ta.record(dev.sn()).unwrap();
    for _ in 0..3 {
        let (t, d) = identify(&ta, &mut dev);
        t.unwrap();
        d.unwrap();
    }
    let (t, d, _) = session(&ta, &mut dev, pass(), pass(), |d, tr| d.update(tr));
    assert_eq!(t.unwrap().index, 3);
    assert_eq!(d.unwrap().epoch, 1);
    let new = ta.record(dev.sn()).unwrap();
    assert_eq!((new.epoch, new.cursor, new.t()), (1, 0, 4));
    assert!(new.responses.iter().all(|y| !old.responses.contains(y)));
    for i in 0..4 {
        let (t, d) = identify(&ta, &mut dev);
        assert_eq!((t.unwrap().index, d.unwrap().index), (i, i));
    }
    let (t, _) = identify(&ta, &mut dev);
    assert!(matches!(t, Err(ProtocolError::Exhausted)));
    assert!(ta.audit().reused_keys().is_empty());

    // An adversary holding the pre-update responses cannot answer.
    let y_old = old.responses[0].clone();
    let (a, mut b) = memory_pair(TIMEOUT);
    let result = thread::scope(|s| {
        let h = s.spawn(|| {
            let mut a = a;
            ta.serve(&mut a)
        });
        b.send(&Message::Hello {
            sn: *dev.sn(),
            epoch: 0,
            cursor: 0,
            purpose: Purpose::Identify,
        })
        .unwrap();
        let _ = b.recv().unwrap();
        let r_a = 77u64;
        b.send(&Message::Response {
            ct: ERef.encrypt(&y_old, r_a).to_be_bytes(),
            nonce: r_a.to_be_bytes(),
        })
        .unwrap();
        h.join().unwrap()
    });
    assert!(result.is_err());
}

#[test]
fn crash_before_persist_leaves_the_record_and_update_reruns() {
    let ta = ta(128, 4);
    let mut dev = device(8);
    enroll(&ta, &mut dev);
    let before = ta.record(dev.sn()).unwrap();
    ta.inject_fault(FaultPoint::BeforePersist);
    let (t, d, _) = session(&ta, &mut dev, pass(), pass(), |d, tr| d.update(tr));
    assert!(matches!(
        t,
        Err(ProtocolError::Fault(FaultPoint::BeforePersist))
    ));
    assert!(d.is_err());
    assert_eq!(ta.record(dev.sn()).unwrap(), before);
    assert_eq!((dev.epoch(), dev.cursor()), (0, 0));
    let (t, d, _) = session(&ta, &mut dev, pass(), pass(), |d, tr| d.update(tr));
    t.unwrap();
    d.unwrap();
    let (t, d) = identify(&ta, &mut dev);
    assert_eq!((t.unwrap().epoch, d.unwrap().epoch), (1, 1));
}

#[test]
fn lost_update_commit_is_recovered_on_next_identification() {
    let ta = ta(128, 4);
    let mut dev = device(9);
    enroll(&ta, &mut dev);
    let drop_commit: Policy = Box::new(|_, m| {
        if *m == Message::Cmd(Command::Commit) {
            Action::Drop
        } else {
            Action::Pass
        }
    });
    let (t, d, _) = session(&ta, &mut dev, drop_commit, pass(), |d, tr| d.update(tr));
    t.unwrap();
    assert!(d.is_err());
    assert_eq!(dev.epoch(), 0);
    let (t, d) = identify(&ta, &mut dev);
    let (t, d) = (t.unwrap(), d.unwrap());
    assert_eq!((t.epoch, t.index, d.epoch, d.index), (1, 0, 1, 0));
    assert_eq!(cursors(&ta, &dev), (1, 1));
}

#[test]
fn unknown_device_reads_like_a_failed_check() {
    let ta = ta(128, 4);
    let mut enrolled = device(10);
    enroll(&ta, &mut enrolled);
    // A device enrolled elsewhere presents a serial number this TA has never seen.
    let mut stranger = device(11);
    enroll(&self::ta(128, 4), &mut stranger);
    let (t, d, log) = session(&ta, &mut stranger, pass(), pass(), |d, tr| d.identify(tr));
    assert!(matches!(t, Err(ProtocolError::UnknownDevice)));
    assert!(matches!(log[1], Message::Challenge { .. }));
    assert!(matches!(d, Err(ProtocolError::Rejected(_))));
    assert_eq!(stranger.cursor(), 0);

    // Seen from the wire, the TA's verdict on a failed answer is the same
    // frame it sends for an unknown device.
    let bad_answer: Policy = Box::new(|_, m| match m {
        Message::Response { ct, .. } => Action::Replace(Message::Response {
            ct: *ct,
            nonce: [0; 8],
        }),
        _ => Action::Pass,
    });
    let (_, _, log) = session(&ta, &mut enrolled, pass(), bad_answer, |d, tr| {
        d.identify(tr)
    });
    let verdict = log.last().unwrap().clone();
    assert_eq!(
        verdict,
        Message::Error {
            code: ErrorCode::Rejected,
            message: "authentication failed".into()
        }
    );

    let (a, mut b) = memory_pair(TIMEOUT);
    let verdict_unknown = thread::scope(|s| {
        let h = s.spawn(|| {
            let mut a = a;
            ta.serve(&mut a)
        });
        b.send(&Message::Hello {
            sn: [0xEE; 16],
            epoch: 0,
            cursor: 0,
            purpose: Purpose::Identify,
        })
        .unwrap();
        assert!(matches!(b.recv().unwrap(), Some(Message::Challenge { .. })));
        b.send(&Message::Response {
            ct: [1; 8],
            nonce: [2; 8],
        })
        .unwrap();
        let v = b.recv().unwrap();
        let _ = h.join().unwrap();
        v
    });
    assert_eq!(verdict_unknown, Some(verdict));
}

#[test]
fn cursors_resynchronize_after_any_fault_mix() {
    let ta = ta(64, 200);
    let mut dev = device(12);
    enroll(&ta, &mut dev);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let fault = rng.random_range(0..7);
        // Both ends get the same policy; each only ever sees its own messages.
        let policy = move || -> Policy {
            Box::new(move |_, m: &Message| match (fault, m) {
                (1, Message::Challenge { .. }) | (2, Message::Response { .. }) => Action::Drop,
                (
                    3,
                    Message::Challenge {
                        epoch,
                        index,
                        ct,
                        nonce,
                    },
                ) => {
                    let mut ct = *ct;
                    ct[0] ^= 4;
                    Action::Replace(Message::Challenge {
                        epoch: *epoch,
                        index: *index,
                        ct,
                        nonce: *nonce,
                    })
                }
                (4 | 5, Message::Response { ct, .. }) => Action::Replace(Message::Response {
                    ct: *ct,
                    nonce: [0; 8],
                }),
                // The TA's rejection is lost, so the device sees a clean close and runs ahead.
                (5, Message::Error { .. }) => Action::Drop,
                (6, Message::Hello { .. }) => Action::Cut,
                _ => Action::Pass,
            })
        };
        let _ = session(&ta, &mut dev, policy(), policy(), |d, tr| d.identify(tr));
        let (t, d) = identify(&ta, &mut dev);
        t.unwrap();
        d.unwrap();
        let (tc, dc) = cursors(&ta, &dev);
        assert_eq!(tc as u64, dc);
    }
    assert!(ta.audit().reused_keys().is_empty());
}

#[test]
fn tcp_sessions_and_concurrent_devices() {
    let ta = Arc::new(ta(128, 8));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let reports = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&reports);
    let server = {
        let ta = Arc::clone(&ta);
        thread::spawn(move || {
            ta.serve_tcp(listener, Duration::from_secs(5), Some(12), move |r| {
                sink.lock().unwrap().push(r.is_ok())
            })
        })
    };
    let clients: Vec<_> = (20..24)
        .map(|seed| {
            thread::spawn(move || {
                let mut dev = device(seed);
                let connect = || TcpTransport::connect(addr, Duration::from_secs(5)).unwrap();
                dev.enroll(&mut connect()).unwrap();
                for _ in 0..2 {
                    dev.identify(&mut connect()).unwrap();
                }
                dev.cursor()
            })
        })
        .collect();
    for c in clients {
        assert_eq!(c.join().unwrap(), 2);
    }
    server.join().unwrap().unwrap();
    assert_eq!(reports.lock().unwrap().iter().filter(|ok| **ok).count(), 12);
    assert_eq!(
        ta.records().iter().map(|r| r.cursor).collect::<Vec<_>>(),
        vec![2; 4]
    );
    assert!(ta.audit().reused_keys().is_empty());
}

#[test]
fn device_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let ta = ta(128, 4);
    let mut dev = device(30);
    enroll(&ta, &mut dev);
    identify(&ta, &mut dev).1.unwrap();
    let path = dir.path().join("dev.json");
    dev.save(&path).unwrap();
    let mut back = Device::load(&path, Catalog::builtin_verified()).unwrap();
    assert_eq!((back.epoch(), back.cursor(), back.sn()), (0, 1, dev.sn()));
    let (t, d) = identify(&ta, &mut back);
    assert_eq!((t.unwrap().index, d.unwrap().index), (1, 1));
}
