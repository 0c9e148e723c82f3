use fedhql::transport::frame::{decode_header, HEADER_LEN, MAGIC, VERSION};
use fedhql::transport::{decode, encode, DecodeError, Kind, Message, Payload, StateTag};
use proptest::prelude::*;

pub fn arb_payload() -> impl Strategy<Value = Payload> {
    let reals = || prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..16);
    let tag = || prop_oneof![Just(StateTag::Current), Just(StateTag::Next)];
    prop_oneof![
        any::<u64>().prop_map(|steps| Payload::SelfLearnSignal { steps }),
        (tag(), reals()).prop_map(|(tag, state)| Payload::QueryState { tag, state }),
        (tag(), reals()).prop_map(|(tag, values)| Payload::QValuesReply { tag, values }),
        (reals(), any::<u32>(), -1e6..1e6f64)
            .prop_map(|(state, action, target)| Payload::FedTdTarget { state, action, target }),
        any::<u64>().prop_map(|steps| Payload::ImproveAck { steps }),
        Just(Payload::Shutdown),
    ]
}

pub fn arb_message() -> impl Strategy<Value = Message> {
    (any::<u64>(), any::<u16>(), arb_payload()).prop_map(|(round_id, agent_id, payload)| Message {
        round_id,
        agent_id,
        payload,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn encode_decode_round_trip(msg in arb_message()) {
        let bytes = encode(&msg).unwrap();
        prop_assert_eq!(bytes.len(), HEADER_LEN + decode_header(&bytes).unwrap().payload_len);
        prop_assert_eq!(decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn every_strict_prefix_is_rejected(msg in arb_message(), cut in 0usize..1000) {
        let bytes = encode(&msg).unwrap();
        let cut = cut % bytes.len();
        prop_assert!(decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn trailing_bytes_are_rejected(msg in arb_message(), extra in prop::collection::vec(any::<u8>(), 1..9)) {
        let mut bytes = encode(&msg).unwrap();
        bytes.extend(extra);
        let rejected = matches!(decode(&bytes), Err(DecodeError::LengthMismatch { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn framed_noise_never_panics(kind in 0u8..8, body in prop::collection::vec(any::<u8>(), 0..48)) {
        let mut bytes = MAGIC.to_vec();
        bytes.push(VERSION);
        bytes.push(kind);
        bytes.extend_from_slice(&[0; 10]);
        bytes.extend_from_slice(&(body.len() as u32).to_le_bytes());
        bytes.extend(body);
        let _ = decode(&bytes);
    }
}

#[test]
fn header_errors_are_distinct() {
    let good = encode(&Message::new(7, Payload::Shutdown)).unwrap();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert_eq!(decode(&bad_magic), Err(DecodeError::BadMagic));
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    assert_eq!(decode(&bad_version), Err(DecodeError::BadVersion(2)));
    let mut bad_kind = good.clone();
    bad_kind[5] = 99;
    assert_eq!(decode(&bad_kind), Err(DecodeError::UnknownKind(99)));
    assert!(matches!(decode(&good[..10]), Err(DecodeError::TruncatedFrame { .. })));
}

#[test]
fn kinds_cover_only_black_box_traffic() {
    let codes: Vec<u8> = Kind::ALL.iter().map(|k| *k as u8).collect();
    assert_eq!(codes, vec![1, 2, 3, 4, 5, 6]);
}
