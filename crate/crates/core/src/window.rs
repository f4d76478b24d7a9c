use serde::{Deserialize, Serialize};

use crate::{CoreError, Result, SampleId, Tick};

/// Tick-based sliding window over the stream.
///
/// Members are exactly the stream samples with tick in `(end_tick - length, end_tick]`.
/// Samples sharing a tick enter and leave the window together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindow {
    length: i64,
    end_tick: Tick,
    member_ids: Vec<SampleId>,
    #[serde(default)]
    member_ticks: Vec<Tick>,
}

impl SlidingWindow {
    pub fn new(length: i64, end_tick: Tick) -> Result<Self> {
        if length < 1 {
            return Err(CoreError::InvalidArgument(format!(
                "window length must be >= 1, got {length}"
            )));
        }
        Ok(Self {
            length,
            end_tick,
            member_ids: Vec::new(),
            member_ticks: Vec::new(),
        })
    }

    pub fn length(&self) -> i64 {
        self.length
    }

    pub fn end_tick(&self) -> Tick {
        self.end_tick
    }

    /// Exclusive lower tick bound.
    pub fn start_after(&self) -> Tick {
        self.end_tick - self.length
    }

    pub fn member_ids(&self) -> &[SampleId] {
        &self.member_ids
    }

    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    /// Adds a sample at `tick`, which must not precede the newest member.
    pub fn push(&mut self, id: SampleId, tick: Tick) -> Result<()> {
        if tick < self.end_tick {
            return Err(CoreError::OutOfOrder {
                tick,
                end_tick: self.end_tick,
            });
        }
        self.member_ids.push(id);
        self.member_ticks.push(tick);
        Ok(())
    }

    /// Moves the window end forward and returns the ids that fell out.
    pub fn advance_to(&mut self, tick: Tick) -> Result<Vec<SampleId>> {
        if tick < self.end_tick {
            return Err(CoreError::OutOfOrder {
                tick,
                end_tick: self.end_tick,
            });
        }
        self.end_tick = tick;
        let cut = self.start_after();
        let keep_from = self.member_ticks.partition_point(|t| *t <= cut);
        self.member_ticks.drain(..keep_from);
        Ok(self.member_ids.drain(..keep_from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_last_length_ticks() {
        let mut w = SlidingWindow::new(5, 0).unwrap();
        for t in 1..=10 {
            w.advance_to(t).unwrap();
            w.push(SampleId(t as u64), t).unwrap();
        }
        let ids: Vec<u64> = w.member_ids().iter().map(|i| i.0).collect();
        assert_eq!(ids, vec![6, 7, 8, 9, 10]);
    }

    #[test]
    fn advance_reports_evicted() {
        let mut w = SlidingWindow::new(2, 0).unwrap();
        w.advance_to(1).unwrap();
        w.push(SampleId(1), 1).unwrap();
        w.push(SampleId(2), 1).unwrap();
        w.advance_to(2).unwrap();
        w.push(SampleId(3), 2).unwrap();
        assert_eq!(w.advance_to(3).unwrap(), vec![SampleId(1), SampleId(2)]);
        assert_eq!(w.member_ids(), &[SampleId(3)]);
    }

    #[test]
    fn rejects_going_backwards() {
        let mut w = SlidingWindow::new(3, 5).unwrap();
        assert!(w.advance_to(4).is_err());
        assert!(w.push(SampleId(0), 4).is_err());
    }

    #[test]
    fn zero_length_rejected() {
        assert!(SlidingWindow::new(0, 0).is_err());
    }
}
