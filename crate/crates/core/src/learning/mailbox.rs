use serde::Serialize;
use thiserror::Error;

/// Exchange rounds within one step, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    State,
    Action,
    Share,
}

impl Phase {
    const ALL: [Phase; 3] = [Phase::State, Phase::Action, Phase::Share];

    fn slot(self) -> usize {
        match self {
            Self::State => 0,
            Self::Action => 1,
            Self::Share => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::State => "state",
            Self::Action => "action",
            Self::Share => "share",
        }
    }
}

/// What an agent publishes in the last round of a step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Shared {
    /// The sender's `Q̃^{r^j}` at its current local key.
    pub reward_q: f64,
    pub reward_avg: f64,
    pub cost_avg: f64,
    pub nu: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    State(usize),
    Action(usize),
    Share(Shared),
}

impl Payload {
    pub fn phase(&self) -> Phase {
        match self {
            Self::State(_) => Phase::State,
            Self::Action(_) => Phase::Action,
            Self::Share(_) => Phase::Share,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub step: usize,
    pub phase: Phase,
    pub sender: usize,
    pub receiver: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("step {step}: agent {receiver} has no {} message from agent {sender}", phase.name())]
    Missing {
        step: usize,
        phase: Phase,
        sender: usize,
        receiver: usize,
    },
    #[error("step {step}: {} message from agent {sender} to {receiver} is stale (posted at step {posted})", phase.name())]
    Stale {
        step: usize,
        posted: usize,
        phase: Phase,
        sender: usize,
        receiver: usize,
    },
    #[error("agent {receiver} may not read from agent {sender}, which is outside its neighbourhood")]
    NotNeighbor { sender: usize, receiver: usize },
}

/// Per-round message slots. Receivers can only pull from senders in their
/// own κ-hop neighbourhood; every delivery can be logged for auditing.
#[derive(Debug, Clone)]
pub struct Mailbox {
    neighborhoods: Vec<Vec<usize>>,
    slots: [Vec<Option<(usize, Payload)>>; 3],
    audit: Option<Vec<AuditEntry>>,
}

impl Mailbox {
    pub fn new(neighborhoods: Vec<Vec<usize>>, audit: bool) -> Self {
        let n = neighborhoods.len();
        Self {
            neighborhoods,
            slots: [vec![None; n], vec![None; n], vec![None; n]],
            audit: audit.then(Vec::new),
        }
    }

    pub fn post(&mut self, step: usize, sender: usize, payload: Payload) {
        self.slots[payload.phase().slot()][sender] = Some((step, payload));
    }

    /// One message from `sender` to `receiver`.
    pub fn read(&mut self, step: usize, phase: Phase, receiver: usize, sender: usize) -> Result<Payload, ProtocolError> {
        if self.neighborhoods[receiver].binary_search(&sender).is_err() {
            return Err(ProtocolError::NotNeighbor { sender, receiver });
        }
        let (posted, payload) = self.slots[phase.slot()][sender].ok_or(ProtocolError::Missing {
            step,
            phase,
            sender,
            receiver,
        })?;
        if posted != step {
            return Err(ProtocolError::Stale {
                step,
                posted,
                phase,
                sender,
                receiver,
            });
        }
        if let Some(log) = &mut self.audit {
            log.push(AuditEntry {
                step,
                phase,
                sender,
                receiver,
            });
        }
        Ok(payload)
    }

    /// Every message addressed to `receiver` this round, in neighbourhood
    /// order.
    pub fn deliver(&mut self, step: usize, phase: Phase, receiver: usize) -> Result<Vec<Payload>, ProtocolError> {
        let senders = self.neighborhoods[receiver].clone();
        senders.into_iter().map(|j| self.read(step, phase, receiver, j)).collect()
    }

    pub fn audit_log(&self) -> Option<&[AuditEntry]> {
        self.audit.as_deref()
    }

    /// Drops all posted messages.
    pub fn clear(&mut self) {
        for phase in Phase::ALL {
            self.slots[phase.slot()].iter_mut().for_each(|s| *s = None);
        }
    }
}
