use pbac_core::{Command, CommandCodec, IpTuple, Purpose, PurposeSet, SettingKey, Syntax, TopicFilter};
use proptest::prelude::*;

fn purpose() -> impl Strategy<Value = Purpose> {
    prop::collection::vec("[a-z][a-z0-9_-]{0,5}", 1..=3).prop_map(|s| Purpose::parse(&s.join("/")).unwrap())
}

fn purpose_set() -> impl Strategy<Value = PurposeSet> {
    prop::collection::vec(purpose(), 0..=3).prop_map(|v| v.into_iter().collect())
}

fn filter() -> impl Strategy<Value = TopicFilter> {
    let level = prop_oneof![3 => "[a-z0-9_-]{1,6}", 1 => Just("+".to_owned())];
    (prop::collection::vec(level, 1..=4), any::<bool>()).prop_map(|(mut levels, hash)| {
        if hash {
            levels.push("#".to_owned());
        }
        TopicFilter::parse(&levels.join("/")).unwrap()
    })
}

fn command() -> impl Strategy<Value = Command> {
    prop_oneof![
        (filter(), prop::option::of((purpose_set(), purpose_set())))
            .prop_map(|(filter, t)| Command::Reserve { filter, tuple: t.map(|(a, p)| IpTuple::new(a, p)) }),
        ("[A-Za-z0-9_-]{1,12}", filter(), purpose())
            .prop_map(|(client_id, filter, ap)| Command::Presubscribe { client_id, filter, ap }),
        (filter(), purpose()).prop_map(|(filter, ap)| Command::ApSubscribe { filter, ap }),
        prop_oneof![
            Just((SettingKey::Mode, "fop")),
            Just((SettingKey::Strict, "on")),
            Just((SettingKey::Store, "flat")),
            Just((SettingKey::Cache, "off")),
        ]
        .prop_map(|(key, value)| Command::Set { key, value: value.to_owned() }),
    ]
}

fn reparse(codec: &CommandCodec, topic: &str, payload: &[u8], original: &Command) -> Command {
    match original {
        Command::ApSubscribe { .. } => {
            let (filter, ap) = codec.parse_ap(topic).unwrap();
            Command::ApSubscribe { filter, ap }
        }
        _ => codec.parse_publish(topic, payload).unwrap().unwrap(),
    }
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(cmd in command()) {
        let codec = CommandCodec::default();
        let (topic, payload) = codec.render(&cmd);
        prop_assert_eq!(reparse(&codec, &topic, &payload, &cmd), cmd);
    }

    #[test]
    fn custom_syntax_round_trips(cmd in command()) {
        let codec = CommandCodec::new(Syntax {
            reserve: "$res".into(),
            ap: "$ap".into(),
            presub: "$pre".into(),
            set: "$set".into(),
            open: '[',
            close: ']',
            list_separator: ';',
            tuple_separator: '~',
        });
        let (topic, payload) = codec.render(&cmd);
        prop_assert_eq!(reparse(&codec, &topic, &payload, &cmd), cmd);
    }

    #[test]
    fn data_topics_are_not_commands(levels in prop::collection::vec("[a-z0-9]{1,5}", 1..=4)) {
        let codec = CommandCodec::default();
        let topic = levels.join("/");
        prop_assert!(codec.parse_publish(&topic, b"x").unwrap().is_none());
        let req = codec.parse_subscription(&topic).unwrap();
        prop_assert_eq!(req.filter.as_str(), topic.as_str());
        prop_assert!(req.ap.is_none());
    }
}
