//! Exploration and delivery logic shared by the searching policies.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use regex::Regex;

use crate::agents::{DialogueDirection, DialogueEntry};
use crate::gateway::AgentView;
use crate::world::{Action, AgentId, EntityId, Observation, HAND_CAPACITY};

static ITEM_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<([a-z_]+)> \((\d+)\)").unwrap());
static FOUND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(I|Agent_\d+) found ((?:<[a-z_]+> \(\d+\)(?:, )?)+) in the ([a-z_]+)").unwrap()
});
static SEARCHED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:I|Agent_\d+) searched the ([a-z_]+)").unwrap());
static HAVE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(I have|Agent_\d+ has) ((?:<[a-z_]+> \(\d+\)(?:, )?)+)").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Sighting {
    pub class: String,
    pub room: String,
}

/// What one agent has learned about the house so far.
#[derive(Debug, Clone, Default)]
pub(crate) struct Searcher {
    explored: BTreeSet<EntityId>,
    visited: BTreeSet<String>,
    room_containers: BTreeMap<String, BTreeSet<EntityId>>,
    known: BTreeMap<EntityId, Sighting>,
    reported: BTreeSet<EntityId>,
    /// Needed items teammates said they are carrying.
    claims: BTreeMap<EntityId, String>,
    announced_held: BTreeSet<EntityId>,
    /// Rooms teammates reported as fully searched.
    cleared: BTreeSet<String>,
    announced_cleared: BTreeSet<String>,
    placed: BTreeMap<String, u32>,
    seen_total: usize,
    /// Rooms to search before anything else, in order.
    pub assigned: Vec<String>,
}

/// Remaining count per needed class, with its target surface.
#[derive(Debug, Clone)]
pub(crate) struct Needs {
    missing: BTreeMap<String, (EntityId, u32)>,
}

impl Needs {
    pub fn from_view(view: &AgentView) -> Self {
        let mut missing = BTreeMap::new();
        for c in &view.progress.classes {
            if c.missing() > 0 {
                let e = missing
                    .entry(c.object_class.clone())
                    .or_insert((c.target_surface_id, 0));
                e.1 += c.missing();
            }
        }
        Needs { missing }
    }

    pub fn target(&self, class: &str) -> Option<EntityId> {
        self.missing.get(class).map(|(t, _)| *t)
    }

    pub fn count(&self, class: &str) -> u32 {
        self.missing.get(class).map_or(0, |(_, n)| *n)
    }

    fn targets(&self) -> BTreeSet<EntityId> {
        self.missing.values().map(|(t, _)| *t).collect()
    }

    /// Subtract items already in hand.
    fn after_holding(&self, obs: &Observation) -> Needs {
        let mut rest = self.clone();
        for h in &obs.held {
            if let Some((_, n)) = rest.missing.get_mut(&h.name) {
                *n = n.saturating_sub(1);
            }
        }
        rest.missing.retain(|_, (_, n)| *n > 0);
        rest
    }

    fn after_claims(mut self, claims: &BTreeMap<EntityId, String>) -> Needs {
        for class in claims.values() {
            if let Some((_, n)) = self.missing.get_mut(class) {
                *n = n.saturating_sub(1);
            }
        }
        self.missing.retain(|_, (_, n)| *n > 0);
        self
    }

    fn total(&self) -> u32 {
        self.missing.values().map(|(_, n)| n).sum()
    }
}

/// Needed items the agent can see, with the ids of goal surfaces excluded.
fn visible_needed(obs: &Observation, needs: &Needs) -> Vec<(EntityId, String)> {
    let targets = needs.targets();
    let mut out: Vec<(EntityId, String)> = Vec::new();
    for c in &obs.visible_containers {
        for o in c.contents.iter().flatten() {
            out.push((o.id, o.name.clone()));
        }
    }
    for s in &obs.visible_surfaces {
        if targets.contains(&s.id) {
            continue;
        }
        for o in &s.contents {
            out.push((o.id, o.name.clone()));
        }
    }
    for o in &obs.visible_loose_objects {
        out.push((o.id, o.name.clone()));
    }
    out.retain(|(_, name)| needs.count(name) > 0);
    out.sort();
    out
}

fn find(obs: &Observation, pred: impl Fn(&Action) -> bool) -> Option<Action> {
    obs.available_actions
        .iter()
        .map(|a| &a.action)
        .find(|a| pred(a))
        .cloned()
}

impl Searcher {
    /// Fold the current observation into memory.
    pub fn observe(&mut self, view: &AgentView) {
        let obs = &view.observation;
        let needs = Needs::from_view(view);
        self.visited.insert(obs.room.clone());
        let here = self.room_containers.entry(obs.room.clone()).or_default();
        for c in &obs.visible_containers {
            here.insert(c.id);
            if c.contents.is_some() {
                self.explored.insert(c.id);
            }
        }
        for c in &view.progress.classes {
            let before = self.placed.insert(c.object_class.clone(), c.placed).unwrap_or(0);
            for _ in before..c.placed {
                let Some(id) = self.claims.iter().find(|(_, k)| **k == c.object_class).map(|(id, _)| *id) else {
                    break;
                };
                self.claims.remove(&id);
            }
        }
        let visible: BTreeSet<EntityId> = visible_needed(obs, &needs).iter().map(|(id, _)| *id).collect();
        self.claims.retain(|id, _| !visible.contains(id));
        // Anything we remembered here that is gone has been taken.
        self.known
            .retain(|id, s| s.room != obs.room || visible.contains(id));
        for h in &obs.held {
            self.known.remove(&h.id);
        }
        for (id, class) in visible_needed(obs, &needs) {
            self.known.insert(
                id,
                Sighting {
                    class,
                    room: obs.room.clone(),
                },
            );
        }
    }

    /// Fold teammates' `I found ...` reports that arrived since the last call.
    pub fn read_reports(&mut self, view: &AgentView) {
        let fresh: Vec<DialogueEntry> = view.unseen_dialogue(self.seen_total).to_vec();
        self.seen_total = view.dialogue_total;
        for e in fresh {
            if matches!(e.direction, DialogueDirection::Received { .. }) {
                self.absorb(&e.content, view);
            }
        }
    }

    /// Take in a teammate's news: sightings elsewhere and items they carry.
    pub fn absorb(&mut self, content: &str, view: &AgentView) {
        let news = parse_news(content, &view.observation.rooms);
        for (id, s) in news.found {
            if s.room != view.observation.room && !self.claims.contains_key(&id) {
                self.known.insert(id, s);
            }
        }
        self.cleared.extend(news.searched);
        let mine: BTreeSet<EntityId> = view.observation.held.iter().map(|h| h.id).collect();
        for (id, class) in news.held {
            if !mine.contains(&id) {
                self.known.remove(&id);
                self.claims.insert(id, class);
            }
        }
    }

    pub fn update(&mut self, view: &AgentView) {
        self.read_reports(view);
        self.observe(view);
    }

    /// Newly seen needed items in the current room and newly carried ones,
    /// each announced once.
    pub fn take_findings(&mut self, view: &AgentView) -> Option<String> {
        let obs = &view.observation;
        let needs = Needs::from_view(view);
        let new: Vec<(EntityId, String)> = visible_needed(obs, &needs)
            .into_iter()
            .filter(|(id, _)| self.reported.insert(*id))
            .collect();
        let held: Vec<(EntityId, String)> = obs
            .held
            .iter()
            .filter(|h| needs.count(&h.name) > 0 && self.announced_held.insert(h.id))
            .map(|h| (h.id, h.name.clone()))
            .collect();
        let list = |items: &[(EntityId, String)]| {
            items
                .iter()
                .map(|(id, n)| format!("<{n}> ({id})"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut parts = Vec::new();
        if !new.is_empty() {
            parts.push(format!("I found {} in the {}.", list(&new), obs.room));
        }
        if !held.is_empty() {
            parts.push(format!("I have {}.", list(&held)));
        }
        let cleared: Vec<String> = self
            .visited
            .iter()
            .filter(|r| self.searched_myself(r) && !self.cleared.contains(*r) && !self.announced_cleared.contains(*r))
            .cloned()
            .collect();
        for r in cleared {
            self.announced_cleared.insert(r.clone());
            parts.push(format!("I searched the {r}."));
        }
        (!parts.is_empty()).then(|| parts.join(" "))
    }

    pub fn exhausted(&self, room: &str) -> bool {
        self.cleared.contains(room) || self.searched_myself(room)
    }

    fn searched_myself(&self, room: &str) -> bool {
        self.visited.contains(room)
            && self
                .room_containers
                .get(room)
                .is_none_or(|cs| cs.iter().all(|c| self.explored.contains(c)))
    }

    /// Room to head for next, if any search option remains.
    fn next_room(&self, obs: &Observation, rest: &Needs) -> Option<String> {
        if let Some(r) = self.assigned.iter().find(|r| !self.exhausted(r)) {
            return Some(r.clone());
        }
        if let Some(s) = self
            .known
            .values()
            .find(|s| rest.count(&s.class) > 0 && s.room != obs.room)
        {
            return Some(s.room.clone());
        }
        obs.rooms.iter().find(|r| !self.exhausted(r)).cloned()
    }

    /// One action: deliver, grab, open, walk, or wait, in that priority.
    /// Delivery waits while hands are free and the current room still has work.
    pub fn act(&self, view: &AgentView) -> Action {
        let obs = &view.observation;
        let needs = Needs::from_view(view);
        let rest = needs.after_holding(obs).after_claims(&self.claims);
        let held_needed: Vec<_> = obs
            .held
            .iter()
            .filter(|h| needs.count(&h.name) > 0)
            .collect();
        let hands_full = obs.held.len() >= HAND_CAPACITY;

        let grab = if hands_full {
            None
        } else {
            visible_needed(obs, &rest).into_iter().find_map(|(id, _)| {
                find(obs, |a| matches!(a, Action::Grab { target } if *target == id))
            })
        };
        // An assigned room elsewhere takes precedence over opening things here.
        let elsewhere = self
            .assigned
            .iter()
            .find(|r| !self.exhausted(r))
            .is_some_and(|r| *r != obs.room);
        let open = if elsewhere {
            None
        } else {
            find(obs, |a| {
                matches!(a, Action::Open { target } if !self.explored.contains(target))
            })
        };
        let walk = self
            .next_room(obs, &rest)
            .filter(|r| *r != obs.room)
            .and_then(|room| find(obs, |a| matches!(a, Action::WalkToRoom { room: r } if *r == room)));
        // Carry items home before leaving a room that has nothing more to offer.
        let busy_here = grab.is_some() || open.is_some();

        if let Some(item) = held_needed.first() {
            if hands_full || rest.total() == 0 || !busy_here {
                let target = needs.target(&item.name).expect("held item is needed");
                if let Some(put) = find(obs, |a| {
                    matches!(a, Action::Put { target: t, destination: d } if *t == item.id && *d == target)
                }) {
                    return put;
                }
                if let Some(go) = find(obs, |a| matches!(a, Action::WalkToEntity { target: t } if *t == target)) {
                    return go;
                }
            }
        }
        grab.or(open).or(walk).unwrap_or(Action::Noop)
    }
}

#[derive(Debug, Default, PartialEq)]
pub(crate) struct News {
    pub found: Vec<(EntityId, Sighting)>,
    pub held: Vec<(EntityId, String)>,
    pub searched: Vec<String>,
}

fn items(list: &str) -> Vec<(EntityId, String)> {
    ITEM_REF
        .captures_iter(list)
        .filter_map(|c| Some((c[2].parse().ok()?, c[1].to_string())))
        .collect()
}

/// Sightings (`... found <x> (id) in the room`), carried items
/// (`I have <x> (id)`, `Agent_k has <x> (id)`) and cleared rooms
/// (`... searched the room`) named in a message.
pub(crate) fn parse_news(content: &str, rooms: &[String]) -> News {
    let mut news = News::default();
    for c in FOUND.captures_iter(content) {
        let room = c[3].to_string();
        if !rooms.contains(&room) {
            continue;
        }
        for (id, class) in items(&c[2]) {
            news.found.push((
                id,
                Sighting {
                    class,
                    room: room.clone(),
                },
            ));
        }
    }
    for c in HAVE.captures_iter(content) {
        news.held.extend(items(&c[2]));
    }
    news.searched = SEARCHED
        .captures_iter(content)
        .map(|c| c[1].to_string())
        .filter(|r| rooms.contains(r))
        .collect();
    news
}

/// The same news told by a third party: `I found` becomes `Agent_k found`.
pub(crate) fn retell(content: &str, speaker: AgentId) -> String {
    content
        .replace("I found ", &format!("Agent_{speaker} found "))
        .replace("I have ", &format!("Agent_{speaker} has "))
        .replace("I searched ", &format!("Agent_{speaker} searched "))
}

/// Rooms named in an order, in the order they appear.
pub(crate) fn rooms_in(content: &str, rooms: &[String]) -> Vec<String> {
    let mut found: Vec<(usize, String)> = rooms
        .iter()
        .filter_map(|r| {
            Regex::new(&format!(r"\bthe {}\b", regex::escape(r)))
                .ok()?
                .find(content)
                .map(|m| (m.start(), r.clone()))
        })
        .collect();
    found.sort();
    found.into_iter().map(|(_, r)| r).collect()
}

pub(crate) fn order_text(to: AgentId, rooms: &[String]) -> String {
    let list: Vec<String> = rooms.iter().map(|r| format!("the {r}")).collect();
    format!("Agent_{to}, please search {}.", list.join(" and "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trip() {
        let rooms = vec!["kitchen".to_string(), "bedroom".to_string()];
        let news = parse_news("I found <wine> (371), <juice> (380) in the bedroom. I have <cupcake> (373).", &rooms);
        assert_eq!(news.found.len(), 2);
        assert_eq!(news.found[0].0, 371);
        assert_eq!(news.found[1].1.room, "bedroom");
        assert_eq!(news.held, vec![(373, "cupcake".to_string())]);
        assert_eq!(parse_news("Agent_2, please search the kitchen.", &rooms), News::default());
        assert!(parse_news("I found <wine> (371) in the attic.", &rooms).found.is_empty());
        let relayed = retell("I found <wine> (371) in the kitchen. I have <juice> (380).", 3);
        assert_eq!(relayed, "Agent_3 found <wine> (371) in the kitchen. Agent_3 has <juice> (380).");
        assert_eq!(parse_news(&relayed, &rooms).held.len(), 1);
        let cleared = parse_news(&retell("I searched the kitchen.", 2), &rooms);
        assert_eq!(cleared.searched, vec!["kitchen".to_string()]);
    }

    #[test]
    fn order_round_trip() {
        let rooms: Vec<String> = ["bathroom", "bedroom", "kitchen", "livingroom"]
            .map(String::from)
            .to_vec();
        let text = order_text(3, &["livingroom".into(), "bathroom".into()]);
        assert_eq!(text, "Agent_3, please search the livingroom and the bathroom.");
        assert_eq!(rooms_in(&text, &rooms), vec!["livingroom", "bathroom"]);
    }
}
