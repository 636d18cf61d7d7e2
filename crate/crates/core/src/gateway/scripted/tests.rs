use super::policies::Leaderful;
use super::*;
use crate::agents::{parse_comm_reply, CommDecision, MemoryStore};
use crate::comms::{route, Message, Recipients};
use crate::gateway::{AgentTask, AgentView, Sidecar};
use crate::world::{Action, ScenarioCatalog, World, WorldState};

fn tea() -> World {
    ScenarioCatalog::builtin().world("prepare_afternoon_tea").unwrap()
}

fn view(world: &World, state: &WorldState, agent: AgentId, memory: &MemoryStore) -> AgentView {
    AgentView::capture(world, state, agent, &[1, 2, 3], memory, "", None, 0).unwrap()
}

fn request(task: AgentTask, view: AgentView) -> ChatRequest {
    ChatRequest::new("", "").with_sidecar(Sidecar {
        fields: Default::default(),
        payload: SidecarPayload::Agent {
            task,
            view: Box::new(view),
        },
    })
}

fn backend(policy: &str) -> Box<dyn Backend> {
    build(policy, &serde_json::Value::Null, Some(1), 3).unwrap()
}

#[test]
fn greedy_opens_lowest_id_unexplored_container() {
    let world = tea();
    for room in ["kitchen", "bedroom", "livingroom", "bathroom"] {
        let mut state = world.init_default(1);
        state.agent_locations.insert(1, room.into());
        let v = view(&world, &state, 1, &MemoryStore::new());
        // oracle: lowest open target in the listed actions
        let expected = v
            .observation
            .available_actions
            .iter()
            .filter_map(|a| match a.action {
                Action::Open { target } => Some((target, a.label.clone())),
                _ => None,
            })
            .min()
            .map(|(_, l)| format!("ACTION: {l}"))
            .unwrap();
        let reply = backend("greedy_searcher")
            .complete(&request(AgentTask::Act, v))
            .unwrap();
        assert_eq!(reply.content, expected, "{room}");
    }
}

#[test]
fn scripted_replies_are_deterministic() {
    let world = tea();
    let state = world.init_default(11);
    for policy in ["greedy_searcher", "leaderful", "noisy"] {
        for task in [AgentTask::Communicate, AgentTask::Act, AgentTask::Elect] {
            let r = request(task, view(&world, &state, 1, &MemoryStore::new()));
            let a = backend(policy).complete(&r).unwrap();
            let b = backend(policy).complete(&r).unwrap();
            assert_eq!(a, b, "{policy}");
        }
    }
}

#[test]
fn leader_assigns_disjoint_rooms() {
    let world = tea();
    let state = world.init_default(5);
    let v = view(&world, &state, 1, &MemoryStore::new());
    let reply = backend("leaderful")
        .complete(&request(AgentTask::Communicate, v.clone()))
        .unwrap();
    let (decision, warnings) = parse_comm_reply(&reply.content, &[1, 2, 3], 1);
    assert!(warnings.is_empty());
    let CommDecision::Targeted { payloads } = decision else {
        panic!("expected targeted orders, got {reply:?}");
    };
    assert_eq!(payloads.len(), 2);
    let rooms = &v.observation.rooms;
    let mut seen = std::collections::BTreeSet::new();
    for p in &payloads {
        let assigned = super::search::rooms_in(&p.content, rooms);
        assert!(!assigned.is_empty());
        for r in assigned {
            assert!(seen.insert(r.clone()), "room {r} assigned twice");
        }
    }
    // the leader keeps its own room
    assert!(!seen.contains(&v.observation.room));
    let plan = Leaderful::partition(&v);
    let covered: usize = plan.iter().map(|(_, r)| r.len()).sum();
    assert_eq!(covered, rooms.len());
}

#[test]
fn three_rooms_two_followers() {
    let world = tea();
    let state = world.init_default(5);
    let mut v = view(&world, &state, 1, &MemoryStore::new());
    v.observation.rooms.truncate(3);
    v.observation.room = v.observation.rooms[0].clone();
    let plan = Leaderful::partition(&v);
    assert_eq!(plan.len(), 3);
    let all: Vec<&String> = plan.iter().flat_map(|(_, r)| r).collect();
    let unique: std::collections::BTreeSet<_> = all.iter().collect();
    assert_eq!(all.len(), 3);
    assert_eq!(unique.len(), 3);
    assert!(plan.iter().all(|(_, r)| r.len() == 1));
}

#[test]
fn follower_searches_its_assigned_room_first() {
    let world = tea();
    let mut state = world.init_default(5);
    state.agent_locations.insert(2, "kitchen".into());
    let mut mem: std::collections::BTreeMap<AgentId, MemoryStore> =
        (1..=3).map(|a| (a, MemoryStore::new())).collect();
    let order = Message::new(
        1,
        0,
        0,
        1,
        Recipients::Agents(vec![2]),
        "Agent_2, please search the bathroom.".into(),
        None,
    );
    route(&order, &mut mem);
    let mut b = build("leaderful", &serde_json::Value::Null, Some(2), 0).unwrap();
    let v = view(&world, &state, 2, &mem[&2]);
    b.complete(&request(AgentTask::Communicate, v.clone())).unwrap();
    let act = b.complete(&request(AgentTask::Act, v)).unwrap();
    assert_eq!(act.content, "ACTION: [walk] <bathroom>");
}

#[test]
fn noisy_full_duplicate_rate_repeats_every_message() {
    let world = tea();
    let mut state = world.init_default(2);
    let params = serde_json::json!({"duplicate_rate": 1.0, "conflict_rate": 1.0});
    let mut b = build("noisy", &params, Some(1), 9).unwrap();
    let mut replies = Vec::new();
    for step in 0..6 {
        state.step = step;
        let v = view(&world, &state, 1, &MemoryStore::new());
        replies.push(b.complete(&request(AgentTask::Communicate, v)).unwrap().content);
    }
    for pair in replies.chunks(2) {
        assert_ne!(pair[0], "SILENCE");
        assert_eq!(pair[0], pair[1]);
    }
}

#[test]
fn noisy_rates_validated() {
    let bad = serde_json::json!({"duplicate_rate": 1.5});
    assert!(matches!(
        build("noisy", &bad, None, 0),
        Err(GatewayError::BadParams { .. })
    ));
    let unknown = serde_json::json!({"dupe": 0.1});
    assert!(build("noisy", &unknown, None, 0).is_err());
}

#[test]
fn replay_emits_verbatim_then_exhausts() {
    let params = serde_json::json!({
        "replies": ["shared"],
        "per_agent": {"2": ["SEND TO ALL: one", "ACTION: [wait]"]}
    });
    let mut b = build("replay", &params, Some(2), 0).unwrap();
    let r = ChatRequest::new("", "");
    assert_eq!(b.complete(&r).unwrap().content, "SEND TO ALL: one");
    assert_eq!(b.complete(&r).unwrap().content, "ACTION: [wait]");
    assert_eq!(b.complete(&r), Err(BackendError::ReplayExhausted));
    let mut shared = build("replay", &params, Some(3), 0).unwrap();
    assert_eq!(shared.complete(&r).unwrap().content, "shared");
}

#[test]
fn agent_policies_need_a_sidecar() {
    let mut b = backend("greedy_searcher");
    assert!(matches!(
        b.complete(&ChatRequest::new("s", "u")),
        Err(BackendError::MissingSidecar(_))
    ));
}

#[test]
fn rubric_empty_message_has_no_labels() {
    let mut b = backend("rubric_classifier");
    let r = ChatRequest::new("", "").with_sidecar(Sidecar {
        fields: Default::default(),
        payload: SidecarPayload::Classify {
            dialogue: String::new(),
        },
    });
    assert_eq!(
        b.complete(&r).unwrap().content,
        "LABEL1: 0\nLABEL2: 0\nLABEL3: 0"
    );
    assert_eq!(
        reviewers::rubric_labels("Hey, where are you? Please let me know your location so that I can assign you a task."),
        [false, true, true]
    );
}
