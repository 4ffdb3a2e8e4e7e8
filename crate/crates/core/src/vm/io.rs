//! Output stream and inter-node link queues of one VM instance.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::memory::Cell;

/// One item of the multiplexed output stream: console text is channel 0,
/// `out` values are channel 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutItem {
    Text(String),
    Value(Cell),
}

impl OutItem {
    pub fn channel(&self) -> u8 {
        match self {
            OutItem::Text(_) => 0,
            OutItem::Value(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Output {
    items: Vec<OutItem>,
}

impl Output {
    pub fn text(&mut self, s: &str) {
        if let Some(OutItem::Text(last)) = self.items.last_mut() {
            last.push_str(s);
        } else {
            self.items.push(OutItem::Text(s.to_string()));
        }
    }

    pub fn value(&mut self, v: Cell) {
        self.items.push(OutItem::Value(v));
    }

    pub fn items(&self) -> &[OutItem] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn take(&mut self) -> Vec<OutItem> {
        std::mem::take(&mut self.items)
    }

    /// Drain everything, returning the concatenated console text.
    pub fn take_console(&mut self) -> String {
        console_text(&self.take())
    }

    pub fn restore(&mut self, items: Vec<OutItem>) {
        self.items = items;
    }
}

pub fn console_text(items: &[OutItem]) -> String {
    items
        .iter()
        .filter_map(|i| match i {
            OutItem::Text(s) => Some(s.as_str()),
            OutItem::Value(_) => None,
        })
        .collect()
}

pub fn out_values(items: &[OutItem]) -> Vec<Cell> {
    items
        .iter()
        .filter_map(|i| match i {
            OutItem::Value(v) => Some(*v),
            OutItem::Text(_) => None,
        })
        .collect()
}

/// Directed FIFO links to peer nodes plus the generic input stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Links {
    /// Node ids this instance may address; empty means no links.
    pub peers: Vec<Cell>,
    pub capacity: usize,
    pub outbox: BTreeMap<Cell, VecDeque<Cell>>,
    pub inbox: BTreeMap<Cell, VecDeque<Cell>>,
    pub input: VecDeque<Cell>,
}

impl Links {
    pub fn new(capacity: usize) -> Self {
        Links { capacity, ..Default::default() }
    }

    pub fn is_peer(&self, id: Cell) -> bool {
        self.peers.contains(&id)
    }

    pub fn has_data(&self, src: Cell) -> bool {
        self.inbox.get(&src).is_some_and(|q| !q.is_empty())
    }

    pub fn has_room(&self, dst: Cell, cells: usize) -> bool {
        self.outbox.get(&dst).map_or(0, VecDeque::len) + cells <= self.capacity
    }

    pub fn enqueue(&mut self, dst: Cell, v: Cell) {
        self.outbox.entry(dst).or_default().push_back(v);
    }

    pub fn dequeue(&mut self, src: Cell) -> Option<Cell> {
        self.inbox.get_mut(&src)?.pop_front()
    }

    /// Host side: a value arrived from `src`.
    pub fn deliver(&mut self, src: Cell, v: Cell) {
        self.inbox.entry(src).or_default().push_back(v);
    }

    /// Host side: take everything queued for `dst`.
    pub fn drain_outbox(&mut self, dst: Cell) -> Vec<Cell> {
        self.outbox.get_mut(&dst).map(|q| q.drain(..).collect()).unwrap_or_default()
    }
}
