use crate::error::{Error, Result};

use super::slot::SLOTS_PER_DAY;

/// Demand counts indexed `[timeslot, region]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandTensor {
    counts: Vec<u32>,
    /// Original grid-cell index of each column, ascending.
    pub region_ids: Vec<usize>,
    pub n_slots: usize,
}

impl DemandTensor {
    pub fn zeros(n_slots: usize, region_ids: Vec<usize>) -> Self {
        DemandTensor {
            counts: vec![0; n_slots * region_ids.len()],
            region_ids,
            n_slots,
        }
    }

    pub fn from_counts(n_slots: usize, region_ids: Vec<usize>, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != n_slots * region_ids.len() {
            return Err(Error::Structural(format!(
                "{} counts for {n_slots} slots x {} regions",
                counts.len(),
                region_ids.len()
            )));
        }
        Ok(DemandTensor {
            counts,
            region_ids,
            n_slots,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.n_slots / SLOTS_PER_DAY
    }

    pub fn get(&self, slot: usize, region: usize) -> u32 {
        self.counts[slot * self.n_regions() + region]
    }

    pub fn get_mut(&mut self, slot: usize, region: usize) -> &mut u32 {
        let n = self.n_regions();
        &mut self.counts[slot * n + region]
    }

    pub fn row(&self, slot: usize) -> &[u32] {
        let n = self.n_regions();
        &self.counts[slot * n..(slot + 1) * n]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn region_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.n_regions()];
        for row in self.counts.chunks_exact(self.n_regions().max(1)) {
            for (t, &c) in totals.iter_mut().zip(row) {
                *t += c as u64;
            }
        }
        totals
    }

    /// Mean requests per day for each region over the whole tensor.
    pub fn daily_means(&self) -> Vec<f64> {
        let days = self.n_slots as f64 / SLOTS_PER_DAY as f64;
        self.region_totals()
            .into_iter()
            .map(|t| t as f64 / days)
            .collect()
    }

    /// Copy of the first `n_days` days.
    pub fn leading_days(&self, n_days: usize) -> DemandTensor {
        let slots = (n_days * SLOTS_PER_DAY).min(self.n_slots);
        DemandTensor {
            counts: self.counts[..slots * self.n_regions()].to_vec(),
            region_ids: self.region_ids.clone(),
            n_slots: slots,
        }
    }

    /// Keep only the given column positions.
    pub fn select_regions(&self, columns: &[usize]) -> DemandTensor {
        let mut counts = Vec::with_capacity(self.n_slots * columns.len());
        for t in 0..self.n_slots {
            let row = self.row(t);
            counts.extend(columns.iter().map(|&c| row[c]));
        }
        DemandTensor {
            counts,
            region_ids: columns.iter().map(|&c| self.region_ids[c]).collect(),
            n_slots: self.n_slots,
        }
    }
}
