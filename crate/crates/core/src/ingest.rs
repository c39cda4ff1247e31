//! Raw ride requests to a cleaned [`DemandTensor`].
//!
//! Cleaning order: out-of-box/out-of-window rows are dropped while loading,
//! then sub-5-second cancels are removed, then each passenger's requests
//! within one 15-minute slot collapse to the earliest one. What remains is
//! counted per `(slot, cell)` and regions under the daily threshold are cut.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{cell_of, slot_of, DemandTensor, GridSpec, RideRequest, StudyWindow};
use crate::error::{Error, Result};

pub const REQUEST_HEADER: [&str; 6] = [
    "request_id",
    "passenger_id",
    "timestamp",
    "lat",
    "lon",
    "cancel_delay",
];

/// Requests canceled strictly faster than this are noise.
pub const CANCEL_THRESHOLD_SECS: f64 = 5.0;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningStats {
    pub total_rows: usize,
    pub skipped_malformed: usize,
    pub dropped_out_of_box: usize,
    pub dropped_out_of_window: usize,
    pub dropped_cancel: usize,
    pub merged_duplicates: usize,
    pub regions_before: usize,
    pub regions_after: usize,
}

impl CleaningStats {
    pub fn to_text(&self) -> String {
        format!(
            "[ingest]\ntotal_rows = {}\nskipped_malformed = {}\ndropped_out_of_box = {}\n\
             dropped_out_of_window = {}\ndropped_cancel = {}\nmerged_duplicates = {}\n\
             regions_before = {}\nregions_after = {}\n",
            self.total_rows,
            self.skipped_malformed,
            self.dropped_out_of_box,
            self.dropped_out_of_window,
            self.dropped_cancel,
            self.merged_duplicates,
            self.regions_before,
            self.regions_after
        )
    }
}

fn parse_row(record: &csv::StringRecord) -> Option<RideRequest> {
    if record.len() != REQUEST_HEADER.len() {
        return None;
    }
    let request_id = record.get(0)?.to_string();
    let passenger_id = record.get(1)?.to_string();
    if request_id.is_empty() || passenger_id.is_empty() {
        return None;
    }
    let timestamp = record.get(2)?.trim().parse::<i64>().ok()?;
    let lat = record.get(3)?.trim().parse::<f64>().ok().filter(|v| v.is_finite())?;
    let lon = record.get(4)?.trim().parse::<f64>().ok().filter(|v| v.is_finite())?;
    let cancel_delay = match record.get(5)?.trim() {
        "" => None,
        s => Some(s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)?),
    };
    Some(RideRequest {
        request_id,
        passenger_id,
        timestamp,
        lat,
        lon,
        cancel_delay,
    })
}

/// Visit every data row of a request CSV in file order; malformed rows are
/// passed as `None`. A missing file or a wrong header is fatal.
fn read_rows<F>(path: &Path, mut visit: F) -> Result<()>
where
    F: FnMut(Option<RideRequest>) -> Result<()>,
{
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| Error::data_at(format!("unreadable header: {e}"), format!("{}:1", path.display())))?;
    if header.iter().map(str::trim).ne(REQUEST_HEADER.iter().copied()) {
        return Err(Error::data_at(
            format!("expected header {:?}, found {:?}", REQUEST_HEADER.join(","), header),
            format!("{}:1", path.display()),
        ));
    }
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(true) => visit(parse_row(&record))?,
            Ok(false) => return Ok(()),
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    return Err(Error::data_at(e.to_string(), format!("{}:{line}", path.display())));
                }
                visit(None)?;
            }
        }
    }
}

fn screen(
    row: Option<RideRequest>,
    spec: &GridSpec,
    window: &StudyWindow,
    stats: &mut CleaningStats,
) -> Option<RideRequest> {
    stats.total_rows += 1;
    let Some(req) = row else {
        stats.skipped_malformed += 1;
        return None;
    };
    if !spec.contains(req.lat, req.lon) {
        stats.dropped_out_of_box += 1;
        None
    } else if !window.contains(req.timestamp) {
        stats.dropped_out_of_window += 1;
        None
    } else {
        Some(req)
    }
}

/// Read the request CSV. Malformed rows and rows outside the box or window
/// are counted and skipped; the rest come back in file order.
pub fn load_requests(
    path: &Path,
    spec: &GridSpec,
    window: &StudyWindow,
) -> Result<(Vec<RideRequest>, CleaningStats)> {
    let mut stats = CleaningStats::default();
    let mut out = Vec::new();
    read_rows(path, |row| {
        out.extend(screen(row, spec, window, &mut stats));
        Ok(())
    })?;
    Ok((out, stats))
}

/// Write requests in the ingest CSV format.
pub fn write_requests(path: &Path, requests: &[RideRequest]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", REQUEST_HEADER.join(",")).map_err(io)?;
    write_rows(&mut w, requests).map_err(io)?;
    w.flush().map_err(io)
}

/// Data rows only, no header.
pub fn write_rows<W: Write>(w: &mut W, requests: &[RideRequest]) -> std::io::Result<()> {
    for r in requests {
        write!(w, "{},{},{},{},{},", r.request_id, r.passenger_id, r.timestamp, r.lat, r.lon)?;
        match r.cancel_delay {
            Some(c) => writeln!(w, "{c}")?,
            None => writeln!(w)?,
        }
    }
    Ok(())
}

/// Drop requests canceled in under five seconds. Order is preserved.
pub fn filter_cancels(requests: Vec<RideRequest>) -> (Vec<RideRequest>, usize) {
    let before = requests.len();
    let kept: Vec<_> = requests
        .into_iter()
        .filter(|r| !matches!(r.cancel_delay, Some(d) if d < CANCEL_THRESHOLD_SECS))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Collapse each `(passenger, slot)` group to its earliest request
/// (first in input order on ties). Survivors keep their input order.
pub fn dedup_passengers(
    requests: Vec<RideRequest>,
    study_start: i64,
) -> Result<(Vec<RideRequest>, usize)> {
    let mut best: HashMap<(&str, usize), usize> = HashMap::with_capacity(requests.len());
    for (i, r) in requests.iter().enumerate() {
        let slot = slot_of(r.timestamp, study_start)?.index;
        best.entry((r.passenger_id.as_str(), slot))
            .and_modify(|b| {
                if r.timestamp < requests[*b].timestamp {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let mut keep = vec![false; requests.len()];
    for &i in best.values() {
        keep[i] = true;
    }
    let merged = requests.len() - best.len();
    let kept = requests
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    Ok((kept, merged))
}

/// Count requests per `(slot, cell)` over every grid cell.
pub fn aggregate(
    requests: &[RideRequest],
    spec: &GridSpec,
    window: &StudyWindow,
) -> Result<DemandTensor> {
    let mut tensor = DemandTensor::zeros(window.n_slots(), (0..spec.n_cells()).collect());
    for r in requests {
        let slot = slot_of(r.timestamp, window.start)?;
        if slot.index >= window.n_slots() {
            return Err(Error::Rejected {
                what: "timestamp",
                detail: format!("{} beyond study window end {}", r.timestamp, window.end()),
            });
        }
        let cell = cell_of(r.lat, r.lon, spec)?;
        *tensor.get_mut(slot.index, cell) += 1;
    }
    Ok(tensor)
}

/// Keep regions averaging at least `min_daily` requests per day.
pub fn filter_regions(full: &DemandTensor, min_daily: f64) -> Result<DemandTensor> {
    let keep: Vec<usize> = full
        .daily_means()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= min_daily)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::Config(format!(
            "no region averages at least {min_daily} requests per day"
        )));
    }
    Ok(full.select_regions(&keep))
}

/// The whole cleaning pipeline over already-loaded requests.
pub fn clean(
    requests: Vec<RideRequest>,
    spec: &GridSpec,
    window: &StudyWindow,
    min_daily: f64,
    mut stats: CleaningStats,
) -> Result<(DemandTensor, CleaningStats)> {
    let (requests, dropped) = filter_cancels(requests);
    stats.dropped_cancel += dropped;
    let (requests, merged) = dedup_passengers(requests, window.start)?;
    stats.merged_duplicates += merged;
    let full = aggregate(&requests, spec, window)?;
    stats.regions_before = full.n_regions();
    let tensor = filter_regions(&full, min_daily)?;
    stats.regions_after = tensor.n_regions();
    Ok((tensor, stats))
}

/// Streaming form of [`clean`]: requests are screened, cancel-filtered and
/// deduplicated one at a time without keeping the raw rows around.
#[derive(Debug)]
pub struct Accumulator {
    spec: GridSpec,
    window: StudyWindow,
    stats: CleaningStats,
    /// `(passenger, slot)` to the `(timestamp, cell)` of its earliest request.
    earliest: HashMap<(String, usize), (i64, usize)>,
    tensor: DemandTensor,
    sealed_before: usize,
}

impl Accumulator {
    pub fn new(spec: GridSpec, window: StudyWindow) -> Self {
        Accumulator {
            tensor: DemandTensor::zeros(window.n_slots(), (0..spec.n_cells()).collect()),
            spec,
            window,
            stats: CleaningStats::default(),
            earliest: HashMap::new(),
            sealed_before: 0,
        }
    }

    /// Offer one parsed row (`None` for a malformed one).
    pub fn offer(&mut self, row: Option<RideRequest>) -> Result<()> {
        let Some(r) = screen(row, &self.spec, &self.window, &mut self.stats) else {
            return Ok(());
        };
        if matches!(r.cancel_delay, Some(d) if d < CANCEL_THRESHOLD_SECS) {
            self.stats.dropped_cancel += 1;
            return Ok(());
        }
        let slot = slot_of(r.timestamp, self.window.start)?.index;
        if slot < self.sealed_before {
            return Err(Error::data(format!(
                "request {} lands in slot {slot}, which was already sealed",
                r.request_id
            )));
        }
        let cell = cell_of(r.lat, r.lon, &self.spec)?;
        match self.earliest.entry((r.passenger_id, slot)) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                self.stats.merged_duplicates += 1;
                if r.timestamp < e.get().0 {
                    e.insert((r.timestamp, cell));
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert((r.timestamp, cell));
            }
        }
        Ok(())
    }

    /// Promise that no further request falls before `slot`, so pending
    /// groups there can be counted and forgotten.
    pub fn seal_before(&mut self, slot: usize) {
        let tensor = &mut self.tensor;
        self.earliest.retain(|(_, s), (_, cell)| {
            if *s < slot {
                *tensor.get_mut(*s, *cell) += 1;
                false
            } else {
                true
            }
        });
        self.sealed_before = self.sealed_before.max(slot);
    }

    /// Full 256-cell tensor and the stats so far.
    pub fn finish_full(mut self) -> (DemandTensor, CleaningStats) {
        self.seal_before(usize::MAX);
        self.stats.regions_before = self.tensor.n_regions();
        (self.tensor, self.stats)
    }

    pub fn finish(self, min_daily: f64) -> Result<(DemandTensor, CleaningStats)> {
        let (full, mut stats) = self.finish_full();
        let tensor = filter_regions(&full, min_daily)?;
        stats.regions_after = tensor.n_regions();
        Ok((tensor, stats))
    }
}

/// Load, clean, aggregate and threshold a request CSV.
pub fn ingest_file(
    path: &Path,
    spec: &GridSpec,
    window: &StudyWindow,
    min_daily: f64,
) -> Result<(DemandTensor, CleaningStats)> {
    let mut acc = Accumulator::new(*spec, *window);
    read_rows(path, |row| acc.offer(row))?;
    acc.finish(min_daily)
}
