use priv_ft_core::transport::{label_id, tcp_pair, Channel, Frame, MsgType, TransportError, HEADER_BYTES};

#[test]
fn frame_layout() {
    let f = Frame { msg_type: MsgType::Trunc, label_id: 0x01020304, payload: vec![9, 8, 7] };
    assert_eq!(f.encode().unwrap(), vec![0, 0, 0, 3, 2, 1, 2, 3, 4, 9, 8, 7]);
    for t in MsgType::ALL {
        assert_eq!(MsgType::from_u8(t as u8), Some(t));
    }
    assert_eq!(MsgType::from_u8(0), None);
    assert_eq!(label_id("exp"), crc32fast::hash(b"exp"));
}

#[test]
fn words_round_trip_and_meter() {
    let (mut a, mut b) = Channel::mem_pair();
    a.set_label("gate");
    b.set_label("gate");
    a.record_transcript();
    a.send_words::<u64>(MsgType::Open, &[1, 2, 3]).unwrap();
    assert_eq!(b.recv_words::<u64>(MsgType::Open, 3).unwrap(), vec![1, 2, 3]);
    b.send_words::<u32>(MsgType::Trunc, &[5]).unwrap();
    assert_eq!(a.recv_words::<u32>(MsgType::Trunc, 1).unwrap(), vec![5]);
    let ra = a.report();
    let st = ra.total("gate");
    assert_eq!(st.payload_bits(), 3 * 64 + 32);
    assert_eq!(st.header_bits(), 2 * HEADER_BYTES as u64 * 8);
    assert_eq!(st.messages(), 2);
    assert_eq!(ra.type_bits("gate", MsgType::Open), 192);
    let t = a.transcript().unwrap();
    assert_eq!(t.sent.len(), HEADER_BYTES + 24);
    assert_eq!(t.received.len(), HEADER_BYTES + 4);
    assert_eq!(t.types, vec![MsgType::Open, MsgType::Trunc]);
}

#[test]
fn mismatches_are_rejected() {
    let (mut a, mut b) = Channel::mem_pair();
    a.send_words::<u64>(MsgType::Open, &[1]).unwrap();
    assert!(matches!(b.recv_words::<u64>(MsgType::Trunc, 1), Err(TransportError::TypeMismatch { got: 1, .. })));
    a.set_label("x");
    a.send_words::<u64>(MsgType::Open, &[1]).unwrap();
    assert!(matches!(b.recv_words::<u64>(MsgType::Open, 1), Err(TransportError::LabelMismatch { .. })));
    b.set_label("x");
    a.send_words::<u64>(MsgType::Open, &[1, 2]).unwrap();
    assert!(matches!(b.recv_words::<u64>(MsgType::Open, 1), Err(TransportError::SizeMismatch { expected: 8, got: 16 })));
}

#[test]
fn closed_peer_is_an_error() {
    let (mut a, b) = Channel::mem_pair();
    drop(b);
    assert!(matches!(a.recv_words::<u64>(MsgType::Open, 1), Err(TransportError::Closed)));
}

#[test]
fn tcp_matches_memory() {
    let run = |(mut a, mut b): (Channel, Channel)| {
        a.record_transcript();
        let h = std::thread::spawn(move || b.exchange_words::<u64>(MsgType::Open, &[10, 20]).unwrap());
        let got = a.exchange_words::<u64>(MsgType::Open, &[1, 2]).unwrap();
        assert_eq!(h.join().unwrap(), vec![1, 2]);
        (got, a.transcript().unwrap().clone(), a.report())
    };
    let m = run(Channel::mem_pair());
    let t = run(tcp_pair().unwrap());
    assert_eq!(m.0, vec![10, 20]);
    assert_eq!(m.0, t.0);
    assert_eq!(m.1, t.1);
    assert_eq!(m.2.total("").payload_bits(), t.2.total("").payload_bits());
}
