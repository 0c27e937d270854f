//! Purpose-aware publish-subscribe policy core.
//!
//! Publishers bind allowed and prohibited intended purposes to topic
//! filters through reservations; subscribers declare one access purpose per
//! subscription. The types here decide whether a message may reach a
//! subscriber, independent of any transport.

pub mod command;
pub mod eip;
pub mod engine;
pub mod fanout;
pub mod purpose;
pub mod registry;
pub mod store;
pub mod topic;

pub use command::{Classified, Command, CommandCodec, CommandError, CommandKind, SettingKey, Syntax};
pub use eip::{Eip, UnreservedPolicy};
pub use engine::{
    DenyReason, EngineConfig, FilterEngine, InvalidSetting, Mode, PauseAction, PauseKind, SubscribeDecision,
};
pub use purpose::{merge_restrictive, merge_union, IpTuple, Purpose, PurposeError, PurposeSet};
pub use registry::{Presubscription, SubscriptionRecord, SubscriptionRegistry};
pub use store::{build_store, ChangeNotice, Reservation, ReservationStore, StoreKind};
pub use topic::{FilterLevel, MalformedTopic, TopicFilter, TopicName};
