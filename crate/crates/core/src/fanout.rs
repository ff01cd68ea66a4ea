//! Per-client outbound queues with move coalescing, and the broadcaster
//! that assigns sequence numbers.
//!
//! Moves are absolute positions, so an older unsent move can always be
//! discarded in favor of a newer one. Clicks, holds, releases and scrolls
//! are never discarded; a client whose queue cannot take one is dropped.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::pipeline::SyncStatus;
use crate::protocol::{Command, CommandMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("client queue overflow ({capacity} non-move commands pending)")]
pub struct QueueOverflow {
    pub capacity: usize,
}

#[derive(Debug, Clone)]
pub struct ClientQueue {
    buf: VecDeque<CommandMessage>,
    capacity: usize,
    move_budget: usize,
    max_depth: usize,
    coalesced: u64,
}

impl ClientQueue {
    /// `move_budget` caps how many moves may wait at once; extra moves evict
    /// the oldest queued move even when the queue has room.
    pub fn new(capacity: usize, move_budget: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            move_budget: move_budget.clamp(1, capacity),
            max_depth: 0,
            coalesced: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Deepest the queue has been since creation.
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Moves discarded by coalescing so far.
    pub fn coalesced(&self) -> u64 {
        self.coalesced
    }

    fn evict_oldest_move(&mut self) -> bool {
        match self.buf.iter().position(|m| m.command.is_move()) {
            Some(i) => {
                self.buf.remove(i);
                self.coalesced += 1;
                true
            }
            None => false,
        }
    }

    pub fn push(&mut self, msg: CommandMessage) -> Result<(), QueueOverflow> {
        if msg.command.is_move() {
            let queued_moves = self.buf.iter().filter(|m| m.command.is_move()).count();
            if queued_moves >= self.move_budget || self.buf.len() >= self.capacity {
                self.evict_oldest_move();
            }
        }
        if self.buf.len() >= self.capacity && !self.evict_oldest_move() {
            return Err(QueueOverflow { capacity: self.capacity });
        }
        self.buf.push_back(msg);
        self.max_depth = self.max_depth.max(self.buf.len());
        Ok(())
    }

    pub fn pop(&mut self) -> Option<CommandMessage> {
        self.buf.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CommandMessage> {
        self.buf.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastReport<K> {
    pub msg: CommandMessage,
    pub enqueued: usize,
    /// Clients removed because their queue overflowed.
    pub dropped: Vec<K>,
}

/// Sequence numbering plus one [`ClientQueue`] per connected client.
#[derive(Debug, Clone)]
pub struct Fanout<K: Ord + Clone> {
    next_seq: u64,
    capacity: usize,
    move_budget: usize,
    queues: BTreeMap<K, ClientQueue>,
}

impl<K: Ord + Clone> Fanout<K> {
    pub fn new(capacity: usize, move_budget: usize) -> Self {
        Self { next_seq: 1, capacity, move_budget, queues: BTreeMap::new() }
    }

    fn stamp(&mut self, command: Command, ts_us: u64) -> CommandMessage {
        let seq = self.next_seq;
        self.next_seq += 1;
        CommandMessage { command, seq, ts_us }
    }

    pub fn add_client(&mut self, key: K) {
        self.queues.insert(key, ClientQueue::new(self.capacity, self.move_budget));
    }

    pub fn remove_client(&mut self, key: &K) -> Option<ClientQueue> {
        self.queues.remove(key)
    }

    pub fn client_count(&self) -> usize {
        self.queues.len()
    }

    pub fn queue(&self, key: &K) -> Option<&ClientQueue> {
        self.queues.get(key)
    }

    pub fn pop(&mut self, key: &K) -> Option<CommandMessage> {
        self.queues.get_mut(key)?.pop()
    }

    /// Stamps `command` with the next sequence number and enqueues it for
    /// every client.
    pub fn broadcast(&mut self, command: Command, ts_us: u64) -> BroadcastReport<K> {
        let msg = self.stamp(command, ts_us);
        let mut enqueued = 0;
        let mut dropped = Vec::new();
        for (key, q) in self.queues.iter_mut() {
            match q.push(msg) {
                Ok(()) => enqueued += 1,
                Err(_) => dropped.push(key.clone()),
            }
        }
        for key in &dropped {
            self.queues.remove(key);
        }
        BroadcastReport { msg, enqueued, dropped }
    }

    /// Queues the state a (re)connecting client needs: the hold flag first,
    /// then the newest position.
    pub fn resync(&mut self, key: &K, status: SyncStatus, ts_us: u64) -> Vec<CommandMessage> {
        if !self.queues.contains_key(key) {
            return Vec::new();
        }
        let mut cmds = vec![if status.holding { Command::Hold } else { Command::Release }];
        if let Some((x, y)) = status.position {
            cmds.push(Command::Move { x, y });
        }
        let msgs: Vec<_> = cmds.into_iter().map(|c| self.stamp(c, ts_us)).collect();
        let q = self.queues.get_mut(key).expect("checked above");
        for m in &msgs {
            // A fresh queue always has room for two messages.
            let _ = q.push(*m);
        }
        msgs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recognizer::ScrollDirection;

    fn mv(seq: u64, x: u32) -> CommandMessage {
        CommandMessage { command: Command::Move { x, y: 0 }, seq, ts_us: seq }
    }

    #[test]
    fn three_clients_three_enqueues() {
        let mut f = Fanout::new(8, 8);
        for k in 0..3 {
            f.add_client(k);
        }
        let r = f.broadcast(Command::Hold, 10);
        assert_eq!(r.enqueued, 3);
        assert_eq!(r.msg.seq, 1);
        for k in 0..3 {
            assert_eq!(f.pop(&k), Some(r.msg));
        }
    }

    #[test]
    fn no_clients_is_fine() {
        let mut f: Fanout<u32> = Fanout::new(8, 8);
        let r = f.broadcast(Command::Move { x: 1, y: 1 }, 0);
        assert_eq!(r.enqueued, 0);
        assert_eq!(f.broadcast(Command::Hold, 1).msg.seq, 2);
    }

    #[test]
    fn full_queue_of_moves_replaces_oldest() {
        let mut q = ClientQueue::new(4, 4);
        for s in 1..=4 {
            q.push(mv(s, s as u32)).unwrap();
        }
        q.push(mv(5, 5)).unwrap();
        let seqs: Vec<_> = q.iter().map(|m| m.seq).collect();
        assert_eq!(seqs, vec![2, 3, 4, 5]);
        assert_eq!(q.coalesced(), 1);
    }

    #[test]
    fn click_on_full_queue_evicts_a_move() {
        let mut q = ClientQueue::new(3, 3);
        for s in 1..=3 {
            q.push(mv(s, 0)).unwrap();
        }
        let click = CommandMessage { command: Command::Click { x: 1, y: 1 }, seq: 4, ts_us: 4 };
        q.push(click).unwrap();
        assert!(q.iter().any(|m| *m == click));
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn overflow_without_moves_drops_the_client() {
        let mut f = Fanout::new(2, 2);
        f.add_client("slow");
        f.add_client("fast");
        let scroll = Command::Scroll { dir: ScrollDirection::Up, n: 1 };
        f.broadcast(scroll, 0);
        f.broadcast(scroll, 1);
        f.pop(&"fast");
        f.pop(&"fast");
        let r = f.broadcast(Command::Click { x: 0, y: 0 }, 2);
        assert_eq!(r.dropped, vec!["slow"]);
        assert_eq!(r.enqueued, 1);
        assert_eq!(f.client_count(), 1);
    }

    #[test]
    fn move_budget_keeps_only_newest_moves() {
        let mut q = ClientQueue::new(64, 1);
        q.push(mv(1, 1)).unwrap();
        q.push(CommandMessage { command: Command::Hold, seq: 2, ts_us: 2 }).unwrap();
        q.push(mv(3, 3)).unwrap();
        let seqs: Vec<_> = q.iter().map(|m| m.seq).collect();
        assert_eq!(seqs, vec![2, 3]);
    }

    #[test]
    fn resync_sends_hold_before_move() {
        let mut f = Fanout::new(8, 8);
        f.add_client(1);
        f.broadcast(Command::Hold, 0);
        f.add_client(2);
        let msgs = f.resync(&2, SyncStatus { holding: true, position: Some((5, 6)) }, 100);
        assert_eq!(msgs[0].command, Command::Hold);
        assert_eq!(msgs[1].command, Command::Move { x: 5, y: 6 });
        assert!(msgs[0].seq < msgs[1].seq && msgs[0].seq > 1);
        let next = f.broadcast(Command::Release, 200);
        assert!(next.msg.seq > msgs[1].seq);
    }
}
