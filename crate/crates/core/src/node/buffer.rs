//! Multiset of stored codeword parcels with outstanding-request marks.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::model::{CodewordParcel, NodeId};

#[derive(Clone, Debug)]
pub struct Slot {
    pub id: u64,
    pub parcel: Arc<CodewordParcel>,
    /// Edge on which this copy sits in an outstanding request.
    pub outstanding: Option<NodeId>,
}

#[derive(Clone, Debug, Default)]
pub struct Buffer {
    slots: Vec<Slot>,
    pos: HashMap<u64, usize>,
    next_id: u64,
    outstanding: usize,
}

impl Buffer {
    pub fn new() -> Buffer {
        Buffer::default()
    }

    /// Height contribution: every stored copy, outstanding or not.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding
    }

    pub fn push(&mut self, parcel: Arc<CodewordParcel>) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.pos.insert(id, self.slots.len());
        self.slots.push(Slot { id, parcel, outstanding: None });
        id
    }

    pub fn get(&self, id: u64) -> Option<&Slot> {
        self.pos.get(&id).map(|&i| &self.slots[i])
    }

    pub fn remove(&mut self, id: u64) -> Option<Slot> {
        let i = self.pos.remove(&id)?;
        let slot = self.slots.swap_remove(i);
        if i < self.slots.len() {
            self.pos.insert(self.slots[i].id, i);
        }
        if slot.outstanding.is_some() {
            self.outstanding -= 1;
        }
        Some(slot)
    }

    pub fn set_outstanding(&mut self, id: u64, edge: Option<NodeId>) {
        if let Some(&i) = self.pos.get(&id) {
            let slot = &mut self.slots[i];
            match (slot.outstanding.is_some(), edge.is_some()) {
                (false, true) => self.outstanding += 1,
                (true, false) => self.outstanding -= 1,
                _ => {}
            }
            slot.outstanding = edge;
        }
    }

    /// Uniform choice among copies not in an outstanding request.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<u64> {
        let free = self.slots.len() - self.outstanding;
        if free == 0 {
            return None;
        }
        if free * 2 >= self.slots.len() {
            loop {
                let s = &self.slots[rng.gen_range(0..self.slots.len())];
                if s.outstanding.is_none() {
                    return Some(s.id);
                }
            }
        }
        let r = rng.gen_range(0..free);
        self.slots.iter().filter(|s| s.outstanding.is_none()).nth(r).map(|s| s.id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter()
    }

    pub fn clear(&mut self) {
        self.slots.clear();
        self.pos.clear();
        self.outstanding = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{HeBackend, HeContext, Signature};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parcel(i: u32) -> Arc<CodewordParcel> {
        let ctx = HeContext::generate(HeBackend::Transparent, 7, 1, 0).unwrap();
        Arc::new(CodewordParcel {
            transmission: 1,
            message_seq: 0,
            index: i,
            payload: vec![],
            tag: ctx.zero(),
            signature: Signature::empty(),
        })
    }

    #[test]
    fn single_parcel_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = Buffer::new();
        let id = b.push(parcel(0));
        assert_eq!(b.pick(&mut rng), Some(id));
        b.set_outstanding(id, Some(NodeId(1)));
        assert_eq!(b.pick(&mut rng), None);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn remove_keeps_positions_consistent() {
        let mut b = Buffer::new();
        let ids: Vec<u64> = (0..5).map(|i| b.push(parcel(i))).collect();
        b.set_outstanding(ids[4], Some(NodeId(2)));
        assert_eq!(b.remove(ids[1]).unwrap().parcel.index, 1);
        assert_eq!(b.get(ids[4]).unwrap().parcel.index, 4);
        assert_eq!(b.outstanding(), 1);
        b.remove(ids[4]);
        assert_eq!(b.outstanding(), 0);
        assert_eq!(b.len(), 3);
        assert!(b.remove(ids[1]).is_none());
    }

    // 10 parcels, 3 outstanding, 10^4 draws: the 7 free parcels should be
    // hit uniformly. 99.9% chi-square critical value for 6 dof is 22.46.
    #[test]
    fn selection_is_uniform_over_free_parcels() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut b = Buffer::new();
        let ids: Vec<u64> = (0..10).map(|i| b.push(parcel(i))).collect();
        for id in &ids[..3] {
            b.set_outstanding(*id, Some(NodeId(1)));
        }
        let mut hits = [0u32; 10];
        let draws = 10_000;
        for _ in 0..draws {
            let id = b.pick(&mut rng).unwrap();
            hits[b.get(id).unwrap().parcel.index as usize] += 1;
        }
        assert!(hits[..3].iter().all(|h| *h == 0));
        let expected = draws as f64 / 7.0;
        let chi2: f64 = hits[3..].iter().map(|h| (*h as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 22.46, "chi2={chi2} hits={hits:?}");
    }

    #[test]
    fn sparse_free_set_uses_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Buffer::new();
        let ids: Vec<u64> = (0..10).map(|i| b.push(parcel(i))).collect();
        for id in &ids[..9] {
            b.set_outstanding(*id, Some(NodeId(1)));
        }
        for _ in 0..20 {
            assert_eq!(b.pick(&mut rng), Some(ids[9]));
        }
    }
}
