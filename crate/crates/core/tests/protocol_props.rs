use airhmi_core::model::{FingerName, FingerState, HandFrame, Vec3};
use airhmi_core::protocol::{decode, encode, Command, CommandMessage, DecodeError, Hello, Message};
use airhmi_core::recognizer::ScrollDirection;
use proptest::prelude::*;
use serde_json::{json, Value};

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![-1e4..1e4f64, -1.0..1.0f64, Just(0.0)]
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit() -> impl Strategy<Value = Vec3> {
    vec3().prop_filter_map("degenerate", |v| {
        let n = v.norm();
        (n > 1e-3).then(|| v * (1.0 / n))
    })
}

fn frame() -> impl Strategy<Value = HandFrame> {
    let present = (any::<u64>(), vec3(), unit(), prop::array::uniform5(vec3()), any::<[bool; 5]>()).prop_map(
        |(ts_us, palm, palm_normal, tips, ext)| HandFrame {
            ts_us,
            hand_present: true,
            palm,
            palm_normal,
            fingers: FingerName::ALL
                .iter()
                .zip(tips)
                .zip(ext)
                .map(|((&name, tip), extended)| FingerState { name, tip, extended })
                .collect(),
        },
    );
    prop_oneof![1 => any::<u64>().prop_map(HandFrame::empty), 4 => present]
}

fn command() -> impl Strategy<Value = Command> {
    let dir = prop_oneof![Just(ScrollDirection::Up), Just(ScrollDirection::Down)];
    prop_oneof![
        (any::<u32>(), any::<u32>()).prop_map(|(x, y)| Command::Move { x, y }),
        (any::<u32>(), any::<u32>()).prop_map(|(x, y)| Command::Click { x, y }),
        Just(Command::Hold),
        Just(Command::Release),
        (dir, 1..=u32::MAX).prop_map(|(dir, n)| Command::Scroll { dir, n }),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        6 => (command(), any::<u64>(), any::<u64>())
            .prop_map(|(command, seq, ts_us)| Message::Command(CommandMessage { command, seq, ts_us })),
        3 => frame().prop_map(Message::Frame),
        1 => ("[a-z]{1,8}", ".{0,12}").prop_map(|(role, name)| Message::Hello(Hello { role, name })),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Malformed,
    UnknownKind,
    MissingField,
    UnexpectedField,
    RangeError,
}

fn class(e: &DecodeError) -> Class {
    match e {
        DecodeError::Malformed(_) => Class::Malformed,
        DecodeError::UnknownKind(_) => Class::UnknownKind,
        DecodeError::MissingField(_) => Class::MissingField,
        DecodeError::UnexpectedField(_) => Class::UnexpectedField,
        DecodeError::RangeError { .. } => Class::RangeError,
    }
}

/// Applies mutation `which` to a valid encoded message and returns the text
/// with the error class the decoder must report.
fn mutate(text: &str, which: u8, pick: usize) -> (String, Class) {
    let mut obj = match serde_json::from_str::<Value>(text).unwrap() {
        Value::Object(o) => o,
        _ => unreachable!(),
    };
    let keys: Vec<String> = obj.keys().filter(|k| k.as_str() != "t").cloned().collect();
    let kind = obj["t"].as_str().unwrap().to_string();
    match which % 6 {
        0 => {
            let key = &keys[pick % keys.len()];
            obj.remove(key);
            (Value::Object(obj).to_string(), Class::MissingField)
        }
        1 => {
            obj.insert(format!("extra{pick}"), json!(1));
            (Value::Object(obj).to_string(), Class::UnexpectedField)
        }
        2 => {
            obj.insert("t".into(), json!(format!("{kind}_x")));
            (Value::Object(obj).to_string(), Class::UnknownKind)
        }
        3 => {
            // Wrong type or out-of-range value in an existing field.
            let key = keys[pick % keys.len()].clone();
            let bad = match key.as_str() {
                "x" | "y" | "n" => json!(1u64 << 33),
                "seq" | "ts_us" => json!(-1),
                "dir" => json!("sideways"),
                "role" => json!(7),
                "name" => json!(null),
                "hand" => json!("yes"),
                "palm" | "palm_normal" => json!([1, 2]),
                "fingers" => json!([{"name": "index"}]),
                other => panic!("unhandled key {other}"),
            };
            obj.insert(key, bad);
            (Value::Object(obj).to_string(), Class::RangeError)
        }
        4 => {
            let mut cut = 1 + pick % (text.len() - 1);
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            (text[..cut].to_string(), Class::Malformed)
        }
        _ => (format!("[{text}]"), Class::Malformed),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn encode_decode_round_trip(m in message()) {
        let text = encode(&m).unwrap();
        prop_assert_eq!(decode(&text).unwrap(), m);
    }

    #[test]
    fn mutations_are_rejected_with_their_class(m in message(), which in any::<u8>(), pick in any::<usize>()) {
        let text = encode(&m).unwrap();
        let (bad, expected) = mutate(&text, which, pick);
        match decode(&bad) {
            Ok(got) => prop_assert!(false, "accepted {} as {:?}", bad, got),
            Err(e) => prop_assert_eq!(class(&e), expected, "{} -> {}", bad, e),
        }
    }
}

#[test]
fn missing_kind_is_missing_field() {
    assert_eq!(decode(r#"{"x":1}"#), Err(DecodeError::MissingField("t".into())));
}

#[test]
fn move_round_trip_example() {
    let text = r#"{"t":"move","x":960,"y":540,"seq":17,"ts_us":123456}"#;
    assert_eq!(encode(&decode(text).unwrap()).unwrap(), text);
}
