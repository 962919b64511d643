use proptest::prelude::*;
use smartmask_core::firmware::{AlertKind, Position};
use smartmask_core::protocol::{decode_frame, encode_frame, AlertFrame, CommandName, Frame, StateFrame};

fn arb_angle() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..=180).prop_map(f64::from), 0.0f64..=180.0]
}

fn arb_position() -> impl Strategy<Value = Position> {
    prop_oneof![
        Just(Position::Covering),
        Just(Position::Open),
        Just(Position::Partial),
        Just(Position::Moving)
    ]
}

fn arb_command() -> impl Strategy<Value = CommandName> {
    prop_oneof![
        Just(CommandName::SetAngle),
        Just(CommandName::Toggle),
        Just(CommandName::GetState),
        Just(CommandName::Subscribe)
    ]
}

pub fn arb_frame() -> impl Strategy<Value = Frame> {
    prop_oneof![
        arb_angle().prop_map(|angle| Frame::SetAngle { angle }),
        Just(Frame::Toggle),
        Just(Frame::GetState),
        Just(Frame::Subscribe),
        (arb_angle(), arb_angle(), arb_position(), prop::option::of(-40.0f64..125.0), any::<bool>()).prop_map(
            |(angle_deg, target_deg, position, last_temp_c, alert_active)| Frame::State(StateFrame {
                angle_deg,
                target_deg,
                position,
                last_temp_c,
                alert_active,
            })
        ),
        (prop_oneof![Just(AlertKind::Proximity), Just(AlertKind::Fever)], ".*", any::<u64>())
            .prop_map(|(kind, message, at_ms)| Frame::Alert(AlertFrame { kind, message, at_ms })),
        arb_command().prop_map(|of| Frame::Ack { of }),
        ("[a-z_]{1,16}", ".*").prop_map(|(code, message)| Frame::Error { code, message }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip(frame in arb_frame()) {
        let line = encode_frame(&frame);
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(decode_frame(&line), Ok(frame.clone()));
        // deterministic bytes
        prop_assert_eq!(encode_frame(&frame), line);
    }

    #[test]
    fn decoder_total_on_arbitrary_text(line in ".*") {
        let _ = decode_frame(&line);
    }

    #[test]
    fn decoder_total_on_mutated_frames(frame in arb_frame(), cut in 0usize..64, junk in ".{0,4}") {
        let mut line = encode_frame(&frame);
        let at = line.char_indices().map(|(i, _)| i).nth(cut).unwrap_or(line.len());
        line.insert_str(at, &junk);
        let _ = decode_frame(&line);
    }
}
