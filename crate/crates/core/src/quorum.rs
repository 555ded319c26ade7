//! Three-member arbitration quorum and multiplexed arbiter personas.
//!
//! Leadership follows a fixed priority (`Arbiter < Active < Standby`) rather
//! than randomized timeouts, so every run is reproducible. A member that
//! rejoins always comes back as a follower. With fewer than two members alive
//! there is no leader and no decision is issued.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeCounts;
use crate::learner::CptStore;
use crate::pipeline::{EventOutcome, Evaluation, Pipeline, PipelineEvent};
use crate::policy::DecisionRecord;
use crate::{Error, Result};

/// Quorum members in election priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MemberId {
    Arbiter,
    Active,
    Standby,
}

impl MemberId {
    pub const ALL: [MemberId; 3] = [MemberId::Arbiter, MemberId::Active, MemberId::Standby];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemberId::Arbiter => "ARBITER",
            MemberId::Active => "ACTIVE",
            MemberId::Standby => "STANDBY",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Leader,
    Follower,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Member {
    pub id: MemberId,
    pub alive: bool,
    pub role: Role,
    pub term: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuorumState {
    members: [Member; 3],
    leader: Option<MemberId>,
    term: u64,
}

impl Default for QuorumState {
    fn default() -> Self {
        Self::bootstrap()
    }
}

impl QuorumState {
    /// All members alive, leader elected.
    pub fn bootstrap() -> Self {
        let mut q = Self {
            members: MemberId::ALL.map(|id| Member {
                id,
                alive: true,
                role: Role::Follower,
                term: 0,
            }),
            leader: None,
            term: 0,
        };
        q.elect().expect("three live members form a quorum");
        q
    }

    pub fn leader(&self) -> Option<MemberId> {
        self.leader
    }

    pub fn term(&self) -> u64 {
        self.term
    }

    pub fn member(&self, id: MemberId) -> &Member {
        &self.members[id.index()]
    }

    pub fn members(&self) -> &[Member; 3] {
        &self.members
    }

    pub fn alive_count(&self) -> usize {
        self.members.iter().filter(|m| m.alive).count()
    }

    pub fn has_quorum(&self) -> bool {
        self.alive_count() >= 2
    }

    /// Elect the highest-priority live member.
    pub fn elect(&mut self) -> Result<MemberId> {
        self.elect_among(|_| true)
    }

    fn elect_among(&mut self, eligible: impl Fn(MemberId) -> bool) -> Result<MemberId> {
        if !self.has_quorum() {
            self.step_down();
            return Err(Error::QuorumLost {
                alive: self.alive_count(),
            });
        }
        let winner = self
            .members
            .iter()
            .find(|m| m.alive && eligible(m.id))
            .map(|m| m.id)
            .ok_or_else(|| Error::Contract("no eligible candidate".into()))?;
        self.term += 1;
        self.leader = Some(winner);
        for m in self.members.iter_mut().filter(|m| m.alive) {
            m.role = if m.id == winner { Role::Leader } else { Role::Follower };
            m.term = self.term;
        }
        Ok(winner)
    }

    fn step_down(&mut self) {
        self.leader = None;
        for m in self.members.iter_mut().filter(|m| m.alive) {
            m.role = Role::Follower;
        }
    }

    /// Take a member down. A failed leader is replaced immediately when two
    /// members remain; below that the quorum is lost.
    pub fn fail_member(&mut self, id: MemberId) -> Result<()> {
        let m = &mut self.members[id.index()];
        if !m.alive {
            return Ok(());
        }
        m.alive = false;
        m.role = Role::Down;
        if !self.has_quorum() {
            self.step_down();
        } else if self.leader == Some(id) {
            self.leader = None;
            self.elect()?;
        }
        Ok(())
    }

    /// Bring a member back as a follower. If this restores the quorum, the
    /// members that stayed up elect a leader among themselves.
    pub fn rejoin(&mut self, id: MemberId) -> Result<()> {
        let term = self.term;
        let m = &mut self.members[id.index()];
        if m.alive {
            return Ok(());
        }
        m.alive = true;
        m.role = Role::Follower;
        m.term = term;
        if self.leader.is_none() && self.has_quorum() {
            self.elect_among(|candidate| candidate != id)?;
        }
        Ok(())
    }

    /// Structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let leaders: Vec<_> = self.members.iter().filter(|m| m.role == Role::Leader).collect();
        if leaders.len() > 1 {
            return Err(format!("{} leaders", leaders.len()));
        }
        if let Some(l) = leaders.first() {
            if !l.alive {
                return Err(format!("leader {} is down", l.id));
            }
            if self.leader != Some(l.id) {
                return Err("leader field disagrees with member roles".into());
            }
        } else if self.leader.is_some() {
            return Err("leader field set without a LEADER member".into());
        }
        if self.has_quorum() != self.leader.is_some() {
            return Err(format!(
                "{} alive but leader is {:?}",
                self.alive_count(),
                self.leader
            ));
        }
        for m in &self.members {
            if m.alive == (m.role == Role::Down) {
                return Err(format!("{} alive={} role={:?}", m.id, m.alive, m.role));
            }
        }
        Ok(())
    }
}

/// One logical arbiter for a single Geo-HA domain.
#[derive(Debug)]
pub struct Persona {
    id: String,
    quorum: QuorumState,
    pipeline: Pipeline,
    quota: usize,
    pending: VecDeque<PipelineEvent>,
    checkpoint: Option<(CptStore, CascadeCounts)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonaTick {
    pub persona_id: String,
    pub t: f64,
    pub processed: usize,
    pub deferred: usize,
    pub outcomes: Vec<EventOutcome>,
    /// `None` while the quorum is lost.
    pub evaluation: Option<Evaluation>,
    pub leader: Option<MemberId>,
    /// Events processed plus degraded-service visits; a proxy for work done.
    pub ops: usize,
}

impl PersonaTick {
    pub fn decision_record(&self) -> Option<DecisionRecord> {
        self.evaluation.as_ref().map(|e| DecisionRecord {
            t: e.t,
            posterior: e.switchover.posterior,
            decision: e.state.decision,
        })
    }
}

impl Persona {
    pub fn new(id: impl Into<String>, pipeline: Pipeline, quota: usize) -> Result<Self> {
        if quota == 0 {
            return Err(Error::Config("persona quota must be at least 1".into()));
        }
        Ok(Self {
            id: id.into(),
            quorum: QuorumState::bootstrap(),
            pipeline,
            quota,
            pending: VecDeque::new(),
            checkpoint: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn quota(&self) -> usize {
        self.quota
    }

    pub fn set_quota(&mut self, quota: usize) -> Result<()> {
        if quota == 0 {
            return Err(Error::Config("persona quota must be at least 1".into()));
        }
        self.quota = quota;
        Ok(())
    }

    pub fn quorum(&self) -> &QuorumState {
        &self.quorum
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn pipeline_mut(&mut self) -> &mut Pipeline {
        &mut self.pipeline
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn submit(&mut self, event: PipelineEvent) {
        self.pending.push_back(event);
    }

    pub fn fail_member(&mut self, id: MemberId) -> Result<()> {
        self.quorum.fail_member(id)
    }

    /// Rejoin `id` and return the learned tables it synchronizes to.
    pub fn rejoin_member(&mut self, id: MemberId) -> Result<CptStore> {
        self.quorum.rejoin(id)?;
        Ok(self.pipeline.cpts().clone())
    }

    /// Start a fresh episode: queued events are dropped, learned state kept.
    pub fn begin_episode(&mut self) {
        self.pipeline.begin_episode();
        self.pending.clear();
    }

    /// Record the learned state for later re-instantiation.
    pub fn checkpoint(&mut self) -> (CptStore, CascadeCounts) {
        let snap = (self.pipeline.cpts().clone(), self.pipeline.cascades().counts().clone());
        self.checkpoint = Some(snap.clone());
        snap
    }

    /// Restart the persona from its last checkpoint, dropping queued events.
    pub fn reinstantiate(&mut self) {
        if let Some((cpts, counts)) = self.checkpoint.clone() {
            self.pipeline.restore(cpts, Some(counts));
        }
        self.pipeline.begin_episode();
        self.pending.clear();
    }

    /// Process at most `quota` queued events, then evaluate if a leader exists.
    pub fn step(&mut self, now: f64) -> Result<PersonaTick> {
        let take = self.pending.len().min(self.quota);
        let mut outcomes = Vec::with_capacity(take);
        for event in self.pending.drain(..take).collect::<Vec<_>>() {
            outcomes.push(self.pipeline.apply(event)?);
        }
        let leader = self.quorum.leader();
        let evaluation = match leader {
            Some(_) => Some(self.pipeline.evaluate(now)?),
            None => None,
        };
        let ops = take + evaluation.as_ref().map_or(0, Evaluation::folds);
        Ok(PersonaTick {
            persona_id: self.id.clone(),
            t: now,
            processed: take,
            deferred: self.pending.len(),
            outcomes,
            evaluation,
            leader,
            ops,
        })
    }
}

/// Advance every persona one tick, in persona-id order.
pub fn step_personas(personas: &mut [Persona], now: f64) -> Result<Vec<PersonaTick>> {
    let mut order: Vec<usize> = (0..personas.len()).collect();
    order.sort_by(|&a, &b| personas[a].id.cmp(&personas[b].id));
    order.into_iter().map(|i| personas[i].step(now)).collect()
}
