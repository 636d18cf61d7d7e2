//! Independent invariant checks over world states, computed from scenario data alone.

use std::collections::BTreeSet;

use orgsim_core::world::{Action, AgentId, EntityId, ObjectLocation, Scenario, World, WorldState, HAND_CAPACITY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn conservation(scn: &Scenario, agents: &[AgentId], state: &WorldState) -> Result<(), String> {
    let objects: BTreeSet<EntityId> = scn.objects().map(|(_, id, _)| id).collect();
    let located: BTreeSet<EntityId> = state.object_location.keys().copied().collect();
    if objects != located {
        return Err(format!("object set changed: {objects:?} vs {located:?}"));
    }
    let containers: BTreeSet<EntityId> = scn.containers.iter().map(|c| c.id).collect();
    let surfaces: BTreeSet<EntityId> = scn.surfaces.iter().map(|s| s.id).collect();
    if state.container_open.keys().copied().collect::<BTreeSet<_>>() != containers {
        return Err("container set changed".into());
    }
    if state.agent_locations.keys().copied().collect::<Vec<_>>() != agents {
        return Err("agent set changed".into());
    }
    for r in state.agent_locations.values() {
        if !scn.rooms.contains(r) {
            return Err(format!("agent in unknown room {r}"));
        }
    }
    for (id, loc) in &state.object_location {
        let ok = match loc {
            ObjectLocation::InContainer { id: c } => containers.contains(c),
            ObjectLocation::OnSurface { id: s } => surfaces.contains(s),
            ObjectLocation::HeldBy { agent } => agents.contains(agent),
            ObjectLocation::InRoom { room } => scn.rooms.contains(room),
        };
        if !ok {
            return Err(format!("object {id} at dangling location {loc:?}"));
        }
    }
    for a in agents {
        if state.held_by(*a).len() > HAND_CAPACITY {
            return Err(format!("Agent_{a} holds more than {HAND_CAPACITY}"));
        }
    }
    Ok(())
}

pub fn visibility(world: &World, scn: &Scenario, state: &WorldState, agent: AgentId) -> Result<(), String> {
    let obs = world.observe(state, agent).map_err(|e| e.to_string())?;
    let room = &state.agent_locations[&agent];
    let room_of = |id: &EntityId| {
        scn.containers
            .iter()
            .find(|c| c.id == *id)
            .map(|c| &c.room)
            .or_else(|| scn.surfaces.iter().find(|s| s.id == *id).map(|s| &s.room))
    };
    let expected: BTreeSet<EntityId> = state
        .object_location
        .iter()
        .filter(|(_, loc)| match loc {
            ObjectLocation::InContainer { id } => state.container_open[id] && room_of(id) == Some(room),
            ObjectLocation::OnSurface { id } => room_of(id) == Some(room),
            ObjectLocation::InRoom { room: r } => r == room,
            ObjectLocation::HeldBy { .. } => false,
        })
        .map(|(id, _)| *id)
        .collect();
    let mut seen = BTreeSet::new();
    for c in &obs.visible_containers {
        if room_of(&c.id) != Some(room) {
            return Err(format!("container {} seen from another room", c.id));
        }
        match (&c.contents, state.container_open[&c.id]) {
            (Some(v), true) => seen.extend(v.iter().map(|o| o.id)),
            (None, false) => {}
            _ => return Err(format!("container {} contents leak while closed", c.id)),
        }
    }
    for s in &obs.visible_surfaces {
        if room_of(&s.id) != Some(room) {
            return Err(format!("surface {} seen from another room", s.id));
        }
        seen.extend(s.contents.iter().map(|o| o.id));
    }
    seen.extend(obs.visible_loose_objects.iter().map(|o| o.id));
    if seen != expected {
        return Err(format!("Agent_{agent} sees {seen:?}, expected {expected:?}"));
    }
    let mates: Vec<AgentId> = state
        .agent_locations
        .iter()
        .filter(|(a, r)| **a != agent && *r == room)
        .map(|(a, _)| *a)
        .collect();
    if obs.teammates_in_room != mates {
        return Err(format!("Agent_{agent} teammates {:?}, expected {mates:?}", obs.teammates_in_room));
    }
    let held: BTreeSet<EntityId> = obs.held.iter().map(|o| o.id).collect();
    if held != state.held_by(agent).into_iter().collect() {
        return Err(format!("Agent_{agent} held list is wrong"));
    }
    Ok(())
}

/// Every syntactically possible action over the scenario's ids, plus unknown targets.
pub fn candidate_actions(scn: &Scenario) -> Vec<Action> {
    let mut ids: Vec<EntityId> = scn.containers.iter().map(|c| c.id).collect();
    ids.extend(scn.surfaces.iter().map(|s| s.id));
    ids.extend(scn.objects().map(|(_, id, _)| id));
    ids.push(999_999);
    let receptacles: Vec<EntityId> = scn.containers.iter().map(|c| c.id).chain(scn.surfaces.iter().map(|s| s.id)).collect();
    let objects: Vec<EntityId> = scn.objects().map(|(_, id, _)| id).collect();
    let mut out: Vec<Action> = scn.rooms.iter().map(|r| Action::WalkToRoom { room: r.clone() }).collect();
    out.push(Action::WalkToRoom { room: "attic".into() });
    for &id in &ids {
        out.push(Action::WalkToEntity { target: id });
        out.push(Action::Open { target: id });
        out.push(Action::Close { target: id });
        out.push(Action::Grab { target: id });
    }
    for &o in &objects {
        for &d in receptacles.iter().chain(objects.first()) {
            out.push(Action::Put { target: o, destination: d });
        }
    }
    out.push(Action::Noop);
    out
}

/// Applying `action` succeeds exactly when it is listed as legal, and a failure changes nothing.
pub fn closure_one(world: &World, state: &WorldState, agent: AgentId, action: &Action) -> Result<(), String> {
    let legal = world.legal_actions(state, agent).iter().any(|a| &a.action == action);
    let mut next = state.clone();
    let out = world.apply_action(&mut next, agent, action);
    if out.is_success() != legal {
        return Err(format!("{action:?} legal={legal} but outcome {out:?}"));
    }
    if !out.is_success() && &next != state {
        return Err(format!("failed {action:?} mutated the state"));
    }
    Ok(())
}

pub fn closure_all(world: &World, scn: &Scenario, state: &WorldState, agent: AgentId) -> Result<usize, String> {
    let labels: Vec<String> = world.legal_actions(state, agent).into_iter().map(|a| a.label).collect();
    if labels.iter().collect::<BTreeSet<_>>().len() != labels.len() {
        return Err("duplicate action labels".into());
    }
    let all = candidate_actions(scn);
    for a in &all {
        closure_one(world, state, agent, a)?;
    }
    Ok(all.len())
}

/// A seeded random walk: legal moves mostly, arbitrary candidates sometimes.
/// Checks conservation, visibility and closure after every action.
pub fn random_walk(world: &World, seed: u64, len: usize) -> Result<(), String> {
    let scn = world.scenario().clone();
    let agents: Vec<AgentId> = (1..=scn.agent_count.max(1)).collect();
    let mut state = world.init(seed, &agents);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let candidates = candidate_actions(&scn);
    for i in 0..len {
        let agent = agents[rng.random_range(0..agents.len())];
        let action = if rng.random_bool(0.8) {
            let legal = world.legal_actions(&state, agent);
            legal[rng.random_range(0..legal.len())].action.clone()
        } else {
            candidates[rng.random_range(0..candidates.len())].clone()
        };
        closure_one(world, &state, agent, &action).map_err(|e| format!("seed {seed} step {i}: {e}"))?;
        world.apply_action(&mut state, agent, &action);
        conservation(&scn, &agents, &state).map_err(|e| format!("seed {seed} step {i}: {e}"))?;
        for a in &agents {
            visibility(world, &scn, &state, *a).map_err(|e| format!("seed {seed} step {i}: {e}"))?;
        }
    }
    Ok(())
}

/// A state reached by `steps` random legal moves.
pub fn random_state(world: &World, seed: u64, steps: usize) -> (WorldState, Vec<AgentId>) {
    let agents: Vec<AgentId> = (1..=world.scenario().agent_count.max(1)).collect();
    let mut state = world.init(seed, &agents);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
    for _ in 0..steps {
        let agent = agents[rng.random_range(0..agents.len())];
        let legal = world.legal_actions(&state, agent);
        let a = legal[rng.random_range(0..legal.len())].action.clone();
        world.apply_action(&mut state, agent, &a);
    }
    (state, agents)
}
