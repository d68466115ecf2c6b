use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Registered,
    OrderPlaced,
    OrderRejected,
    Accepted,
    Lost,
    HandedOver,
    Delivered,
    Settled,
    Finalized,
    ConfirmationEmail,
    Expired,
    Refunded,
    Reviewed,
    ReviewRejected,
    TxIngested,
    BlockSealed,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One `time,kind,suborder_id,detail` line of the run's event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
    pub suborder_id: Option<String>,
    pub detail: String,
}

impl Event {
    pub fn new(time: SimTime, kind: EventKind, suborder_id: Option<&str>, detail: impl Into<String>) -> Self {
        Self { time, kind, suborder_id: suborder_id.map(str::to_string), detail: detail.into() }
    }

    pub fn to_line(&self) -> String {
        // detail is the last column, so only line breaks need scrubbing
        let detail = self.detail.replace(['\n', '\r'], " ");
        format!("{},{},{},{}", self.time, self.kind, self.suborder_id.as_deref().unwrap_or("-"), detail)
    }
}

/// Append-only in-memory event log.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn extend(&mut self, events: impl IntoIterator<Item = Event>) {
        self.events.extend(events);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            writeln!(out, "{}", e.to_line())?;
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("Vec writes are infallible");
        buf
    }
}
