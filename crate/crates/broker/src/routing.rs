//! Level trie over active subscriptions.

use std::collections::{BTreeSet, HashMap};

use pbac_core::{FilterLevel, TopicFilter, TopicName};

#[derive(Debug, Default)]
struct Node {
    /// client id -> granted qos
    subscribers: HashMap<String, u8>,
    children: HashMap<Box<str>, Node>,
}

impl Node {
    fn is_empty(&self) -> bool {
        self.subscribers.is_empty() && self.children.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct RoutingTable {
    root: Node,
    len: usize,
}

impl RoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds or updates the entry of `client_id` on `filter`. Returns true
    /// when the entry is new.
    pub fn insert(&mut self, client_id: &str, filter: &TopicFilter, qos: u8) -> bool {
        let mut node = &mut self.root;
        for level in filter.levels() {
            node = node.children.entry(level.as_str().into()).or_default();
        }
        let new = node.subscribers.insert(client_id.to_owned(), qos).is_none();
        if new {
            self.len += 1;
        }
        new
    }

    pub fn remove(&mut self, client_id: &str, filter: &TopicFilter) -> bool {
        let removed = remove(&mut self.root, filter.levels(), client_id);
        if removed {
            self.len -= 1;
        }
        removed
    }

    pub fn contains(&self, client_id: &str, filter: &TopicFilter) -> bool {
        let mut node = &self.root;
        for level in filter.levels() {
            match node.children.get(level.as_str()) {
                Some(n) => node = n,
                None => return false,
            }
        }
        node.subscribers.contains_key(client_id)
    }

    /// Distinct clients with an entry matching `topic`, each with the
    /// highest qos among its matching entries.
    pub fn lookup(&self, topic: &TopicName) -> HashMap<&str, u8> {
        let levels: Vec<&str> = topic.levels().collect();
        let mut out = HashMap::new();
        collect(&self.root, &levels, &mut out);
        out
    }

    /// Every (client, filter, qos) entry.
    pub fn entries(&self) -> BTreeSet<(String, String, u8)> {
        let mut out = BTreeSet::new();
        let mut path = Vec::new();
        walk(&self.root, &mut path, &mut out);
        out
    }
}

fn remove(node: &mut Node, levels: &[FilterLevel], client_id: &str) -> bool {
    match levels.split_first() {
        None => node.subscribers.remove(client_id).is_some(),
        Some((level, rest)) => {
            let Some(child) = node.children.get_mut(level.as_str()) else {
                return false;
            };
            let removed = remove(child, rest, client_id);
            if child.is_empty() {
                node.children.remove(level.as_str());
            }
            removed
        }
    }
}

fn add<'a>(out: &mut HashMap<&'a str, u8>, subscribers: &'a HashMap<String, u8>) {
    for (client, &qos) in subscribers {
        let e = out.entry(client.as_str()).or_insert(qos);
        *e = (*e).max(qos);
    }
}

fn collect<'a>(node: &'a Node, levels: &[&str], out: &mut HashMap<&'a str, u8>) {
    // `#` matches the remaining levels, including none
    if let Some(hash) = node.children.get("#") {
        add(out, &hash.subscribers);
    }
    match levels.split_first() {
        None => add(out, &node.subscribers),
        Some((level, rest)) => {
            if let Some(child) = node.children.get(*level) {
                collect(child, rest, out);
            }
            if let Some(child) = node.children.get("+") {
                collect(child, rest, out);
            }
        }
    }
}

fn walk<'a>(node: &'a Node, path: &mut Vec<&'a str>, out: &mut BTreeSet<(String, String, u8)>) {
    for (client, &qos) in &node.subscribers {
        out.insert((client.clone(), path.join("/"), qos));
    }
    for (level, child) in &node.children {
        path.push(level);
        walk(child, path, out);
        path.pop();
    }
}
