//! The purpose-limitation decision core.
//!
//! Three filtering modes are supported. Filter on subscribe (FoS)
//! authorizes each subscription against every topic it can match and
//! pauses subscriptions that a later reservation change makes
//! incompatible. Filter on publish (FoP) accepts every subscription and
//! gates each outgoing message on the topic's combined EIP. Hybrid rejects
//! subscriptions that could never receive anything and gates the rest on
//! publish. `Off` and `ScanOnly` exist as benchmark baselines and never
//! consult policy state.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::command::{CommandCodec, CommandError, SettingKey};
use crate::eip::{Eip, UnreservedPolicy};
use crate::purpose::{IpTuple, Purpose};
use crate::registry::{Presubscription, SubscriptionRecord, SubscriptionRegistry};
use crate::store::{build_store, ChangeNotice, ReservationStore, StoreKind};
use crate::topic::{TopicFilter, TopicName};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// Engine bypassed entirely.
    Off,
    /// Commands are recognized, nothing is filtered.
    ScanOnly,
    #[default]
    FilterOnSubscribe,
    FilterOnPublish,
    Hybrid,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Off => "off",
            Mode::ScanOnly => "scan",
            Mode::FilterOnSubscribe => "fos",
            Mode::FilterOnPublish => "fop",
            Mode::Hybrid => "hybrid",
        }
    }

    /// True for modes that gate each outgoing message.
    pub fn filters_on_publish(self) -> bool {
        matches!(self, Mode::FilterOnPublish | Mode::Hybrid)
    }
}

impl FromStr for Mode {
    type Err = InvalidSetting;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Mode::Off),
            "scan" => Ok(Mode::ScanOnly),
            "fos" => Ok(Mode::FilterOnSubscribe),
            "fop" => Ok(Mode::FilterOnPublish),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(InvalidSetting::new(SettingKey::Mode, other)),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid value {value:?} for setting {key}")]
pub struct InvalidSetting {
    pub key: SettingKey,
    pub value: String,
}

impl InvalidSetting {
    fn new(key: SettingKey, value: &str) -> Self {
        InvalidSetting {
            key,
            value: value.to_owned(),
        }
    }
}

pub fn parse_switch(key: SettingKey, value: &str) -> Result<bool, InvalidSetting> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(InvalidSetting::new(key, other)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct EngineConfig {
    pub mode: Mode,
    /// Deny subscriptions without a purpose and deliveries on unreserved topics.
    pub strict: bool,
    pub store: StoreKind,
    pub cache: bool,
}

impl EngineConfig {
    pub fn new(mode: Mode) -> Self {
        EngineConfig {
            mode,
            ..Self::default()
        }
    }

    pub fn unreserved_policy(&self) -> UnreservedPolicy {
        if self.strict {
            UnreservedPolicy::DenyAll
        } else {
            UnreservedPolicy::AllowAll
        }
    }

    /// Applies one runtime setting, as carried by a `!SET` command.
    pub fn with_setting(mut self, key: SettingKey, value: &str) -> Result<Self, InvalidSetting> {
        match key {
            SettingKey::Mode => self.mode = value.parse()?,
            SettingKey::Strict => self.strict = parse_switch(key, value)?,
            SettingKey::Store => {
                self.store = value.parse().map_err(|_| InvalidSetting::new(key, value))?
            }
            SettingKey::Cache => self.cache = parse_switch(key, value)?,
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenyReason {
    Malformed(CommandError),
    MissingPurpose,
    Incompatible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubscribeDecision {
    /// Route `filter` (access purpose stripped) at `granted_qos`.
    Allow { filter: TopicFilter, granted_qos: u8 },
    /// `filter` is absent when the request could not be parsed.
    Deny {
        filter: Option<TopicFilter>,
        reason: DenyReason,
    },
}

impl SubscribeDecision {
    pub fn is_allowed(&self) -> bool {
        matches!(self, SubscribeDecision::Allow { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauseKind {
    Pause,
    Unpause,
}

/// A routing change decided by the engine; the broker executes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauseAction {
    pub kind: PauseKind,
    pub client_id: String,
    pub filter: TopicFilter,
    pub qos: u8,
}

impl PauseAction {
    fn for_record(kind: PauseKind, r: &SubscriptionRecord) -> Self {
        PauseAction {
            kind,
            client_id: r.client_id.clone(),
            filter: r.filter.clone(),
            qos: r.qos,
        }
    }
}

pub struct FilterEngine {
    config: EngineConfig,
    codec: CommandCodec,
    store: Box<dyn ReservationStore>,
    registry: SubscriptionRegistry,
}

impl FilterEngine {
    pub fn new(config: EngineConfig) -> Self {
        Self::with_codec(config, CommandCodec::default())
    }

    pub fn with_codec(config: EngineConfig, codec: CommandCodec) -> Self {
        FilterEngine {
            store: build_store(config.store, config.cache, []),
            config,
            codec,
            registry: SubscriptionRegistry::new(),
        }
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn store(&self) -> &dyn ReservationStore {
        self.store.as_ref()
    }

    pub fn registry(&self) -> &SubscriptionRegistry {
        &self.registry
    }

    pub fn codec(&self) -> &CommandCodec {
        &self.codec
    }

    /// Parses an optional access-purpose wrapper, records the subscription
    /// and decides whether it may be routed.
    ///
    /// Denied subscriptions are kept as paused records under FoS so that a
    /// later reservation change can activate them; in other modes they are
    /// dropped.
    pub fn on_subscribe(&mut self, client_id: &str, raw_filter: &str, qos: u8) -> SubscribeDecision {
        let request = match self.codec.parse_subscription(raw_filter) {
            Ok(r) => r,
            Err(e) => {
                return SubscribeDecision::Deny {
                    filter: None,
                    reason: DenyReason::Malformed(e),
                }
            }
        };
        let qos = qos.min(1);
        let record = self.registry.upsert(client_id, request.filter, qos, request.ap);
        if self.subscription_allowed(&self.config, &record) {
            return SubscribeDecision::Allow {
                filter: record.filter,
                granted_qos: qos,
            };
        }
        if self.config.mode == Mode::FilterOnSubscribe {
            let _ = self.registry.set_paused(client_id, &record.filter, true);
        } else {
            self.registry.remove(client_id, &record.filter);
        }
        let reason = if record.ap.is_none() && self.config.strict {
            DenyReason::MissingPurpose
        } else {
            DenyReason::Incompatible
        };
        SubscribeDecision::Deny {
            filter: Some(record.filter),
            reason,
        }
    }

    fn subscription_allowed(&self, config: &EngineConfig, record: &SubscriptionRecord) -> bool {
        let ap = record.ap.as_ref();
        match config.mode {
            Mode::Off | Mode::ScanOnly | Mode::FilterOnPublish => true,
            _ if config.strict && ap.is_none() => false,
            Mode::FilterOnSubscribe => self
                .store
                .filter_eip(&record.filter, config.unreserved_policy())
                .admits(ap, config.strict),
            Mode::Hybrid => self.store.any_topic_admits(&record.filter, ap, config.strict),
        }
    }

    /// Publish-time gate for delivering `topic` to `client_id`.
    pub fn on_deliver(&self, client_id: &str, topic: &TopicName) -> bool {
        if !self.config.mode.filters_on_publish() {
            return true;
        }
        match self.store.combined_eip(topic) {
            Eip::Unrestricted => !self.config.strict,
            Eip::Restricted(tuple) => self
                .registry
                .matching(client_id, topic)
                .any(|r| !r.paused && r.ap.as_ref().is_some_and(|ap| tuple.is_compatible(ap))),
        }
    }

    /// Stores (or with `None` removes) a reservation and returns the pause
    /// changes it causes.
    pub fn apply_reservation(&mut self, filter: TopicFilter, tuple: Option<IpTuple>) -> Vec<PauseAction> {
        let notice = match tuple {
            Some(t) => self.store.set_reservation(filter, t),
            None => self.store.remove_reservation(&filter),
        };
        self.on_reservation_change(&notice)
    }

    /// Re-authorizes FoS subscriptions affected by a changed reservation.
    pub fn on_reservation_change(&self, notice: &ChangeNotice) -> Vec<PauseAction> {
        if self.config.mode != Mode::FilterOnSubscribe {
            return Vec::new();
        }
        self.reauthorize(&self.config, self.registry.records_overlapping(&notice.filter))
    }

    fn reauthorize(&self, config: &EngineConfig, records: Vec<SubscriptionRecord>) -> Vec<PauseAction> {
        let mut actions = Vec::new();
        for record in records {
            let allowed = self.subscription_allowed(config, &record);
            if !allowed && !record.paused {
                actions.push(PauseAction::for_record(PauseKind::Pause, &record));
            } else if allowed && record.paused {
                actions.push(PauseAction::for_record(PauseKind::Unpause, &record));
            }
        }
        actions
    }

    /// Pause changes required when switching from `old` to `new`,
    /// evaluated against the current store and registry.
    pub fn evaluate_mode_switch(&self, old: &EngineConfig, new: &EngineConfig) -> Vec<PauseAction> {
        let into_fos = new.mode == Mode::FilterOnSubscribe
            && (old.mode != Mode::FilterOnSubscribe || old.strict != new.strict);
        if into_fos {
            return self.reauthorize(new, self.registry.iter().cloned().collect());
        }
        if old.mode == Mode::FilterOnSubscribe && new.mode != Mode::FilterOnSubscribe {
            return self
                .registry
                .iter()
                .filter(|r| r.paused)
                .map(|r| PauseAction::for_record(PauseKind::Unpause, r))
                .collect();
        }
        Vec::new()
    }

    /// Switches configuration, rebuilding the store when its kind or
    /// caching changes.
    pub fn reconfigure(&mut self, new: EngineConfig) -> Vec<PauseAction> {
        let old = self.config;
        if old.store != new.store || old.cache != new.cache {
            self.store = build_store(new.store, new.cache, self.store.reservations());
        }
        self.config = new;
        self.evaluate_mode_switch(&old, &new)
    }

    /// Mirrors a pause decision in the registry. Unknown records are ignored.
    pub fn apply_pause(&mut self, action: &PauseAction) {
        let paused = action.kind == PauseKind::Pause;
        let _ = self.registry.set_paused(&action.client_id, &action.filter, paused);
    }

    /// Removes a subscription given the raw (possibly purpose-wrapped) filter.
    pub fn on_unsubscribe(&mut self, client_id: &str, raw_filter: &str) -> Option<SubscriptionRecord> {
        let request = self.codec.parse_subscription(raw_filter).ok()?;
        self.registry.remove(client_id, &request.filter)
    }

    pub fn on_disconnect(&mut self, client_id: &str) -> Vec<SubscriptionRecord> {
        self.registry.remove_client(client_id)
    }

    pub fn add_presubscription(&mut self, presub: Presubscription) {
        self.registry.add_presubscription(presub);
    }

    /// Access purpose of an existing subscription, for diagnostics.
    pub fn subscription_purpose(&self, client_id: &str, filter: &TopicFilter) -> Option<Purpose> {
        self.registry.get(client_id, filter)?.ap.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::purpose::PurposeSet;

    fn f(s: &str) -> TopicFilter {
        TopicFilter::parse(s).unwrap()
    }

    fn t(s: &str) -> TopicName {
        TopicName::parse(s).unwrap()
    }

    fn tuple(aip: &[&str], pip: &[&str]) -> IpTuple {
        IpTuple::new(
            PurposeSet::parse_all(aip.iter().copied()).unwrap(),
            PurposeSet::parse_all(pip.iter().copied()).unwrap(),
        )
    }

    fn engine(mode: Mode) -> FilterEngine {
        FilterEngine::new(EngineConfig::new(mode))
    }

    fn home(e: &mut FilterEngine) {
        e.apply_reservation(f("home/#"), Some(tuple(&["marketing", "operational"], &["marketing/analytics"])));
    }

    fn vehicle(e: &mut FilterEngine) {
        e.apply_reservation(
            f("country1/area3/vehicle2342/location/#"),
            Some(tuple(&["operational", "marketing"], &["marketing/individualized"])),
        );
    }

    #[test]
    fn fos_allows_home_billing() {
        let mut e = engine(Mode::FilterOnSubscribe);
        home(&mut e);
        let d = e.on_subscribe("c1", "!AP/home/sensors/power/#{operational/billing}", 0);
        assert_eq!(d, SubscribeDecision::Allow { filter: f("home/sensors/power/#"), granted_qos: 0 });
    }

    #[test]
    fn fos_blocks_individualized_marketing() {
        let mut e = engine(Mode::FilterOnSubscribe);
        vehicle(&mut e);
        let d = e.on_subscribe("c1", "!AP/country1/area3/+/location/city{marketing/individualized}", 0);
        assert!(!d.is_allowed());
        // kept paused so a later change can activate it
        let rec = e.registry().get("c1", &f("country1/area3/+/location/city")).unwrap();
        assert!(rec.paused);
    }

    #[test]
    fn hybrid_allows_partially_compatible() {
        let mut e = engine(Mode::Hybrid);
        e.apply_reservation(f("a/b"), Some(IpTuple::deny_all()));
        assert!(e.on_subscribe("c1", "!AP/a/#{m}", 0).is_allowed());
        assert!(e.on_deliver("c1", &t("a/c")));
        assert!(!e.on_deliver("c1", &t("a/b")));
        // fully incompatible
        assert!(!e.on_subscribe("c1", "!AP/a/b{m}", 0).is_allowed());
        assert!(e.registry().get("c1", &f("a/b")).is_none());
    }

    #[test]
    fn fop_delivery_gate() {
        let mut e = engine(Mode::FilterOnPublish);
        home(&mut e);
        assert!(e.on_subscribe("billing", "!AP/home/sensors/power/#{operational/billing}", 0).is_allowed());
        assert!(e.on_subscribe("analytics", "!AP/home/sensors/power/#{marketing/analytics}", 0).is_allowed());
        assert!(e.on_subscribe("legacy", "z", 0).is_allowed());
        let topic = t("home/sensors/power/392/total");
        assert!(e.on_deliver("billing", &topic));
        assert!(!e.on_deliver("analytics", &topic));
        assert!(e.on_deliver("legacy", &t("z")));
    }

    #[test]
    fn fos_pause_and_unpause_on_reservation_change() {
        let mut e = engine(Mode::FilterOnSubscribe);
        assert!(e.on_subscribe("c1", "!AP/a/#{m}", 0).is_allowed());
        let actions = e.apply_reservation(f("a/b"), Some(tuple(&["o"], &[])));
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].kind, PauseKind::Pause);
        assert_eq!((actions[0].client_id.as_str(), &actions[0].filter), ("c1", &f("a/#")));
        e.apply_pause(&actions[0]);

        let actions = e.apply_reservation(f("a/b"), None);
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].kind, PauseKind::Unpause);
    }

    #[test]
    fn non_fos_modes_do_not_reauthorize() {
        for mode in [Mode::FilterOnPublish, Mode::Hybrid, Mode::Off, Mode::ScanOnly] {
            let mut e = engine(mode);
            e.on_subscribe("c1", "!AP/a/#{m}", 0);
            assert!(e.apply_reservation(f("a/#"), Some(IpTuple::deny_all())).is_empty());
        }
    }

    #[test]
    fn strict_mode() {
        let mut e = FilterEngine::new(EngineConfig { strict: true, ..EngineConfig::new(Mode::FilterOnSubscribe) });
        let d = e.on_subscribe("c1", "a", 0);
        assert_eq!(d, SubscribeDecision::Deny { filter: Some(f("a")), reason: DenyReason::MissingPurpose });
        // unreserved space is denied
        assert!(!e.on_subscribe("c1", "!AP/a{m}", 0).is_allowed());
        e.apply_reservation(f("a"), Some(tuple(&["m"], &[])));
        assert!(e.on_subscribe("c1", "!AP/a{m}", 0).is_allowed());
        // partially reserved wildcard is denied
        assert!(!e.on_subscribe("c1", "!AP/a/#{m}", 0).is_allowed());

        let mut e = FilterEngine::new(EngineConfig { strict: true, ..EngineConfig::new(Mode::FilterOnPublish) });
        e.on_subscribe("c1", "!AP/#{m}", 0);
        assert!(!e.on_deliver("c1", &t("z")));
    }

    #[test]
    fn legacy_subscriber_in_fos() {
        let mut e = engine(Mode::FilterOnSubscribe);
        home(&mut e);
        assert!(e.on_subscribe("legacy", "z/#", 0).is_allowed());
        assert!(!e.on_subscribe("legacy", "home/#", 0).is_allowed());
    }

    #[test]
    fn presubscription_applies_to_plain_subscribe() {
        let mut e = engine(Mode::FilterOnSubscribe);
        home(&mut e);
        e.add_presubscription(Presubscription {
            client_id: "legacy".into(),
            filter: f("home/#"),
            ap: Purpose::parse("operational").unwrap(),
        });
        assert!(e.on_subscribe("legacy", "home/#", 0).is_allowed());
    }

    #[test]
    fn malformed_subscription_is_denied() {
        let mut e = engine(Mode::FilterOnPublish);
        let d = e.on_subscribe("c1", "!AP/a{x,y}", 0);
        assert!(matches!(d, SubscribeDecision::Deny { filter: None, reason: DenyReason::Malformed(_) }));
        assert!(e.registry().is_empty());
    }

    #[test]
    fn qos_is_capped() {
        let mut e = engine(Mode::FilterOnPublish);
        assert_eq!(e.on_subscribe("c1", "a", 2), SubscribeDecision::Allow { filter: f("a"), granted_qos: 1 });
    }

    #[test]
    fn mode_switches() {
        let mut e = engine(Mode::FilterOnPublish);
        e.apply_reservation(f("a/b"), Some(tuple(&["o"], &[])));
        e.on_subscribe("c1", "!AP/a/#{m}", 0);
        e.on_subscribe("c2", "!AP/a/#{o}", 0);

        let fos = EngineConfig::new(Mode::FilterOnSubscribe);
        let actions = e.reconfigure(fos);
        assert_eq!(actions.len(), 1);
        assert_eq!((actions[0].kind, actions[0].client_id.as_str()), (PauseKind::Pause, "c1"));
        for a in &actions {
            e.apply_pause(a);
        }

        assert!(e.reconfigure(fos).is_empty());

        let actions = e.reconfigure(EngineConfig::new(Mode::FilterOnPublish));
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].kind, PauseKind::Unpause);
    }

    #[test]
    fn store_switch_keeps_reservations() {
        let mut e = engine(Mode::FilterOnPublish);
        home(&mut e);
        let flat = EngineConfig { store: StoreKind::Flat, cache: true, ..e.config() };
        assert!(e.reconfigure(flat).is_empty());
        assert_eq!(e.store().len(), 1);
        assert!(e.store().describe().starts_with("cached(flat"));
    }

    #[test]
    fn settings() {
        let c = EngineConfig::default();
        assert_eq!(c.with_setting(SettingKey::Mode, "fop").unwrap().mode, Mode::FilterOnPublish);
        assert!(c.with_setting(SettingKey::Strict, "on").unwrap().strict);
        assert_eq!(c.with_setting(SettingKey::Store, "flat").unwrap().store, StoreKind::Flat);
        assert!(c.with_setting(SettingKey::Cache, "on").unwrap().cache);
        assert!(c.with_setting(SettingKey::Mode, "fast").is_err());
        assert!(c.with_setting(SettingKey::Strict, "maybe").is_err());
    }
}
