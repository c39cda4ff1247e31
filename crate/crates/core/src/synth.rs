//! Seeded generator of ride-request data with diurnal and weekly seasonality.
//!
//! Each `(slot, cell)` count is drawn with mean
//! `base[cell] * diurnal[slot_of_day] * weekly[day_of_week] * damping * city[slot]`,
//! where `city` is a mean-one log-AR(1) factor shared by every cell. Counts
//! are Poisson (by inversion) around a gamma-mixed mean, so `noise` is the
//! squared coefficient of variation of the mixing and `noise = 0` makes the
//! counts deterministic. On top of the real demand the generator adds sub-5 s
//! cancels, same-slot repeat requests and a few off-map GPS fixes.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CalendarInfo, GridSpec, RideRequest, StudyWindow, SLOTS_PER_DAY, SLOT_SECONDS};
use crate::error::{Error, Result};
use crate::seed::{rng_for, sub_seed};

/// Number of cells calibrated to clear 300 requests/day.
pub const DEFAULT_BUSY_CELLS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub window: StudyWindow,
    pub grid: GridSpec,
    /// Mean requests per slot for each grid cell.
    pub base_rates: Vec<f64>,
    /// 96 multipliers, one per 15-minute slot of the day.
    pub diurnal_shape: Vec<f64>,
    /// Strength of the per-cell shift of demand toward the morning or the
    /// evening peak; 0 gives every cell the shared diurnal shape.
    pub diurnal_tilt: f64,
    /// 7 multipliers, Saturday first.
    pub weekly_shape: Vec<f64>,
    pub holiday_damping: f64,
    pub holidays: Vec<usize>,
    pub noise: f64,
    /// Stationary standard deviation of the log city factor.
    pub city_factor_sd: f64,
    /// Slot-to-slot autocorrelation of the log city factor.
    pub city_factor_persistence: f64,
    /// Extra sub-5-second cancels, as a fraction of real requests.
    pub cancel_fraction: f64,
    /// Extra same-slot repeats by an existing passenger.
    pub duplicate_fraction: f64,
    /// Real requests that are canceled after 5 s or later (still demand).
    pub late_cancel_fraction: f64,
    /// Extra requests with coordinates outside the grid box.
    pub out_of_box_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::with_seed(2017)
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        let grid = GridSpec::default();
        SynthConfig {
            seed,
            window: StudyWindow::default(),
            base_rates: default_base_rates(seed, &grid),
            grid,
            diurnal_shape: default_diurnal_shape(),
            diurnal_tilt: 1.0,
            weekly_shape: default_weekly_shape(),
            holiday_damping: 0.6,
            holidays: vec![29, 30, 69, 77, 79, 96],
            noise: 0.05,
            city_factor_sd: 0.2,
            city_factor_persistence: 0.9,
            cancel_fraction: 0.03,
            duplicate_fraction: 0.05,
            late_cancel_fraction: 0.02,
            out_of_box_fraction: 0.001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.window.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        if self.base_rates.len() != self.grid.n_cells() {
            return bad(format!(
                "{} base rates for {} cells",
                self.base_rates.len(),
                self.grid.n_cells()
            ));
        }
        if self.base_rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("base rates must be finite and nonnegative".into());
        }
        if self.diurnal_shape.len() != SLOTS_PER_DAY || self.weekly_shape.len() != 7 {
            return bad("diurnal shape needs 96 entries and weekly shape 7".into());
        }
        if self
            .diurnal_shape
            .iter()
            .chain(&self.weekly_shape)
            .any(|m| !m.is_finite() || *m <= 0.0)
        {
            return bad("seasonal multipliers must be positive".into());
        }
        if !(self.holiday_damping > 0.0 && self.holiday_damping <= 1.0) {
            return bad("holiday_damping must lie in (0, 1]".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite())
            || !(self.city_factor_sd >= 0.0)
            || !(self.diurnal_tilt >= 0.0 && self.diurnal_tilt.is_finite())
        {
            return bad("noise, city_factor_sd and diurnal_tilt must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.city_factor_persistence) {
            return bad("city_factor_persistence must lie in [0, 1)".into());
        }
        for f in [
            self.cancel_fraction,
            self.duplicate_fraction,
            self.late_cancel_fraction,
            self.out_of_box_fraction,
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad("request fractions must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn calendar(&self) -> CalendarInfo {
        CalendarInfo::for_window(self.window.start, self.window.n_days, &self.holidays)
    }
}

fn circular_gap(h: f64, center: f64) -> f64 {
    let d = (h - center).abs() % 24.0;
    d.min(24.0 - d)
}

/// Two rush-hour peaks (about 8:00 and 19:00) over a daytime bump, with the
/// trough around 3:00. Normalized to mean one.
pub fn default_diurnal_shape() -> Vec<f64> {
    let bump = |h: f64, c: f64, sd: f64| (-circular_gap(h, c).powi(2) / (2.0 * sd * sd)).exp();
    let raw: Vec<f64> = (0..SLOTS_PER_DAY)
        .map(|s| {
            let h = (s as f64 + 0.5) / 4.0;
            0.05 + 0.5 * bump(h, 15.0, 3.5) + 1.2 * bump(h, 8.0, 0.5) + 1.6 * bump(h, 19.0, 0.8)
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|v| v / mean).collect()
}

/// Saturday-first weekday multipliers; Thursday is lighter and Friday is the weekend.
pub fn default_weekly_shape() -> Vec<f64> {
    let raw = [1.05, 1.05, 1.05, 1.05, 1.0, 0.9, 0.75];
    let mean = raw.iter().sum::<f64>() / 7.0;
    raw.iter().map(|v| v / mean).collect()
}

/// Per-cell base rates: the `DEFAULT_BUSY_CELLS` cells closest to a jittered
/// city center get 340 to 1900 requests/day (log-spaced, busiest at the
/// center); the rest stay under 150/day.
pub fn default_base_rates(seed: u64, grid: &GridSpec) -> Vec<f64> {
    let mut rng = rng_for(seed, "synth-layout");
    let n = grid.n_cells();
    let (cr, cc) = ((grid.rows as f64 - 1.0) / 2.0, (grid.cols as f64 - 1.0) / 2.0);
    let mut order: Vec<(f64, usize)> = (0..n)
        .map(|cell| {
            let (r, c) = ((cell / grid.cols) as f64, (cell % grid.cols) as f64);
            let dist = ((r - cr).powi(2) + (c - cc).powi(2)).sqrt();
            (dist + rng.random_range(0.0..1.5), cell)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let busy = DEFAULT_BUSY_CELLS.min(n);
    let (hi, lo) = (1900.0f64, 340.0f64);
    let mut rates = vec![0.0; n];
    for (rank, &(_, cell)) in order.iter().enumerate() {
        let daily = if rank < busy {
            let frac = rank as f64 / (busy.max(2) - 1) as f64;
            hi * (lo / hi).powf(frac)
        } else {
            rng.random_range(2.0..150.0)
        };
        rates[cell] = daily / SLOTS_PER_DAY as f64;
    }
    rates
}

fn poisson_inversion(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    // Poisson laws add, so large means are split to keep exp(-mean) well away from underflow.
    let mut remaining = mean;
    let mut total = 0;
    while remaining > 0.0 {
        let lambda = remaining.min(64.0);
        remaining -= lambda;
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf && k < 10_000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        total += k;
    }
    total
}

fn city_factor(cfg: &SynthConfig) -> Vec<f64> {
    let n = cfg.window.n_slots();
    let sd = cfg.city_factor_sd;
    if sd == 0.0 {
        return vec![1.0; n];
    }
    let mut rng = rng_for(cfg.seed, "synth-city");
    let rho = cfg.city_factor_persistence;
    let innov = sd * (1.0 - rho * rho).sqrt();
    let mut level: f64 = sd * rng.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| {
            let f = (level - 0.5 * sd * sd).exp();
            level = rho * level + innov * rng.sample::<f64, _>(StandardNormal);
            f
        })
        .collect()
}

/// Per-cell diurnal shapes. Each cell leans toward the morning (residential)
/// or the evening (commercial) peak by a seeded amount in
/// `[-diurnal_tilt, diurnal_tilt]`; every shape keeps mean one so daily totals
/// do not move.
pub fn cell_diurnal_shapes(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let mut rng = rng_for(cfg.seed, "synth-profile");
    (0..cfg.grid.n_cells())
        .map(|_| {
            let lean = if cfg.diurnal_tilt > 0.0 {
                cfg.diurnal_tilt * rng.random_range(-1.0..1.0)
            } else {
                0.0
            };
            let raw: Vec<f64> = cfg
                .diurnal_shape
                .iter()
                .enumerate()
                .map(|(s, d)| {
                    let h = (s as f64 + 0.5) / 4.0;
                    d * (lean * (std::f64::consts::TAU * (h - 7.5) / 24.0).cos()).exp()
                })
                .collect();
            let norm = cfg.diurnal_shape.iter().sum::<f64>() / raw.iter().sum::<f64>();
            raw.into_iter().map(|v| v * norm).collect()
        })
        .collect()
}

/// Expected count in one `(slot, cell)` before the city factor and noise,
/// given the shapes from [`cell_diurnal_shapes`].
pub fn expected_count(
    cfg: &SynthConfig,
    cal: &CalendarInfo,
    shapes: &[Vec<f64>],
    slot: usize,
    cell: usize,
) -> f64 {
    let day = slot / SLOTS_PER_DAY;
    let damping = if cal.is_holiday[day] {
        cfg.holiday_damping
    } else {
        1.0
    };
    cfg.base_rates[cell]
        * shapes[cell][slot % SLOTS_PER_DAY]
        * cfg.weekly_shape[cal.day_of_week[day] as usize]
        * damping
}

fn point_in_cell(rng: &mut ChaCha8Rng, grid: &GridSpec, cell: usize) -> (f64, f64) {
    let (a, b, c, d) = grid.cell_bounds(cell);
    // keep clear of the edges so rounding cannot move a point to a neighbor
    let lat = a + (b - a) * rng.random_range(0.01..0.99);
    let lon = c + (d - c) * rng.random_range(0.01..0.99);
    ((lat * 1e6).round() / 1e6, (lon * 1e6).round() / 1e6)
}

/// Run the generator, handing each day's requests to `sink` in day order.
pub fn generate_each_day<F>(cfg: &SynthConfig, mut sink: F) -> Result<CalendarInfo>
where
    F: FnMut(usize, Vec<RideRequest>) -> Result<()>,
{
    cfg.validate()?;
    let cal = cfg.calendar();
    let city = city_factor(cfg);
    let shapes = cell_diurnal_shapes(cfg);
    let mixing = if cfg.noise > 0.0 {
        Some(Gamma::new(1.0 / cfg.noise, cfg.noise).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let grid = &cfg.grid;

    for day in 0..cfg.window.n_days {
        let mut rng = rng_for(sub_seed(cfg.seed, "synth-days"), &day.to_string());
        let mut out = Vec::new();
        let mut serial = 0usize;
        let mut next_id = |prefix: char| {
            serial += 1;
            format!("{prefix}{day:04}{serial:07}")
        };
        for sod in 0..SLOTS_PER_DAY {
            let slot = day * SLOTS_PER_DAY + sod;
            let slot_start = cfg.window.start + slot as i64 * SLOT_SECONDS;
            for cell in 0..grid.n_cells() {
                let mean = expected_count(cfg, &cal, &shapes, slot, cell) * city[slot];
                let count = match &mixing {
                    Some(g) => {
                        let mixed = mean * g.sample(&mut rng);
                        poisson_inversion(&mut rng, mixed)
                    }
                    None => mean.round() as u64,
                };
                for _ in 0..count {
                    let ts = slot_start + rng.random_range(0..SLOT_SECONDS);
                    let (lat, lon) = point_in_cell(&mut rng, grid, cell);
                    let passenger = next_id('p');
                    let cancel_delay = (rng.random::<f64>() < cfg.late_cancel_fraction)
                        .then(|| rng.random_range(5..=300) as f64);
                    if rng.random::<f64>() < cfg.duplicate_fraction {
                        let dup_ts = rng.random_range(ts..slot_start + SLOT_SECONDS);
                        let (dlat, dlon) = point_in_cell(&mut rng, grid, cell);
                        out.push(RideRequest {
                            request_id: next_id('r'),
                            passenger_id: passenger.clone(),
                            timestamp: ts,
                            lat,
                            lon,
                            cancel_delay,
                        });
                        out.push(RideRequest {
                            request_id: next_id('r'),
                            passenger_id: passenger,
                            timestamp: dup_ts,
                            lat: dlat,
                            lon: dlon,
                            cancel_delay: None,
                        });
                    } else {
                        out.push(RideRequest {
                            request_id: next_id('r'),
                            passenger_id: passenger,
                            timestamp: ts,
                            lat,
                            lon,
                            cancel_delay,
                        });
                    }
                    if rng.random::<f64>() < cfg.cancel_fraction {
                        let (clat, clon) = point_in_cell(&mut rng, grid, cell);
                        out.push(RideRequest {
                            request_id: next_id('r'),
                            passenger_id: next_id('c'),
                            timestamp: slot_start + rng.random_range(0..SLOT_SECONDS),
                            lat: clat,
                            lon: clon,
                            cancel_delay: Some(rng.random_range(0..49) as f64 / 10.0),
                        });
                    }
                    if rng.random::<f64>() < cfg.out_of_box_fraction {
                        out.push(RideRequest {
                            request_id: next_id('r'),
                            passenger_id: next_id('g'),
                            timestamp: slot_start + rng.random_range(0..SLOT_SECONDS),
                            lat: grid.lat_max + rng.random_range(0.01..0.2),
                            lon,
                            cancel_delay: None,
                        });
                    }
                }
            }
        }
        sink(day, out)?;
    }
    Ok(cal)
}

pub fn generate(cfg: &SynthConfig) -> Result<(Vec<RideRequest>, CalendarInfo)> {
    let mut all = Vec::new();
    let cal = generate_each_day(cfg, |_, mut day| {
        all.append(&mut day);
        Ok(())
    })?;
    Ok((all, cal))
}

/// Stream the generated dataset to the request CSV plus the calendar file.
/// Returns the number of request rows written.
pub fn write_dataset(cfg: &SynthConfig, requests_path: &Path, calendar_path: &Path) -> Result<usize> {
    use std::io::Write;
    let file = std::fs::File::create(requests_path).map_err(|e| Error::io(requests_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(requests_path, e);
    writeln!(w, "{}", crate::ingest::REQUEST_HEADER.join(",")).map_err(io)?;
    let mut rows = 0;
    let cal = generate_each_day(cfg, |_, day| {
        rows += day.len();
        crate::ingest::write_rows(&mut w, &day).map_err(io)
    })?;
    w.flush().map_err(io)?;
    cal.write(calendar_path)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest;

    fn flat(n_days: usize, base: f64) -> SynthConfig {
        let grid = GridSpec {
            rows: 2,
            cols: 2,
            ..GridSpec::default()
        };
        SynthConfig {
            window: StudyWindow {
                n_days,
                ..StudyWindow::default()
            },
            base_rates: vec![base; grid.n_cells()],
            grid,
            diurnal_shape: vec![1.0; 96],
            diurnal_tilt: 0.0,
            weekly_shape: vec![1.0; 7],
            holidays: vec![],
            noise: 0.0,
            city_factor_sd: 0.0,
            out_of_box_fraction: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_degenerate_case() {
        let cfg = SynthConfig {
            cancel_fraction: 0.0,
            duplicate_fraction: 0.0,
            out_of_box_fraction: 0.0,
            ..flat(2, 2.0)
        };
        let (reqs, _) = generate(&cfg).unwrap();
        let t = ingest::aggregate(&reqs, &cfg.grid, &cfg.window).unwrap();
        assert!(t.counts().iter().all(|&c| c == 2));

        // the noise requests are exactly what cleaning removes
        let cfg = SynthConfig {
            cancel_fraction: 0.3,
            duplicate_fraction: 0.3,
            out_of_box_fraction: 0.1,
            ..flat(2, 2.0)
        };
        let (reqs, _) = generate(&cfg).unwrap();
        let stats = ingest::CleaningStats::default();
        let inbox: Vec<_> = reqs
            .into_iter()
            .filter(|r| cfg.grid.contains(r.lat, r.lon))
            .collect();
        let (t, stats) = ingest::clean(inbox, &cfg.grid, &cfg.window, 1.0, stats).unwrap();
        assert!(t.counts().iter().all(|&c| c == 2));
        assert!(stats.dropped_cancel > 0 && stats.merged_duplicates > 0);
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig {
            noise: 0.1,
            city_factor_sd: 0.2,
            ..flat(2, 1.5)
        };
        assert_eq!(generate(&cfg).unwrap().0, generate(&cfg).unwrap().0);
        let other = SynthConfig { seed: 9, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn diurnal_shape_extremes() {
        let d = default_diurnal_shape();
        let argmin = (0..96).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        let argmax = (0..96).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
        assert!((8..=16).contains(&argmin), "min at slot {argmin}");
        assert!((72..=80).contains(&argmax), "max at slot {argmax}");
        // morning rush is a local peak
        assert!(d[32] > d[24] && d[32] > d[40]);
        assert!((d.iter().sum::<f64>() / 96.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_rates_split_at_threshold() {
        let r = default_base_rates(5, &GridSpec::default());
        let busy = r.iter().filter(|&&v| v * 96.0 >= 300.0).count();
        assert_eq!(busy, DEFAULT_BUSY_CELLS);
        assert!(r.iter().all(|&v| v * 96.0 >= 340.0 - 1e-9 || v * 96.0 < 150.0));
    }

    #[test]
    fn per_slot_mean_converges() {
        // Poisson counts (tiny gamma mixing) over many days and cells
        let cfg = SynthConfig {
            noise: 1e-6,
            cancel_fraction: 0.0,
            duplicate_fraction: 0.0,
            late_cancel_fraction: 0.0,
            out_of_box_fraction: 0.0,
            diurnal_shape: default_diurnal_shape(),
            diurnal_tilt: 1.0,
            ..flat(120, 3.0)
        };
        let (reqs, cal) = generate(&cfg).unwrap();
        let shapes = cell_diurnal_shapes(&cfg);
        let t = ingest::aggregate(&reqs, &cfg.grid, &cfg.window).unwrap();
        let cells = cfg.grid.n_cells();
        let n = (cfg.window.n_days * cells) as f64;
        for sod in [0, 12, 32, 50, 76, 95] {
            let mut sum = 0.0;
            let mut expected = 0.0;
            for day in 0..cfg.window.n_days {
                for cell in 0..cells {
                    sum += t.get(day * 96 + sod, cell) as f64;
                    expected += expected_count(&cfg, &cal, &shapes, day * 96 + sod, cell);
                }
            }
            let (mean, mu) = (sum / n, expected / n);
            let se = (mu / n).sqrt();
            assert!((mean - mu).abs() < 3.0 * se, "slot {sod}: {mean} vs {mu} (se {se})");
        }
    }

    #[test]
    fn tilted_shapes_keep_daily_totals() {
        let mut cfg = SynthConfig::default();
        let shapes = cell_diurnal_shapes(&cfg);
        assert!(shapes.iter().all(|s| (s.iter().sum::<f64>() - 96.0).abs() < 1e-9));
        let morning = |s: &Vec<f64>| s[32] / s[76];
        let spread = shapes.iter().map(morning).fold(f64::NAN, f64::max)
            / shapes.iter().map(morning).fold(f64::NAN, f64::min);
        assert!(spread > 2.0, "{spread}");
        cfg.diurnal_tilt = 0.0;
        assert!(cell_diurnal_shapes(&cfg).iter().all(|s| *s == cfg.diurnal_shape));
    }

    #[test]
    fn holidays_are_quieter() {
        let cfg = SynthConfig {
            holidays: vec![7],
            holiday_damping: 0.6,
            noise: 0.05,
            ..flat(15, 4.0)
        };
        let (reqs, cal) = generate(&cfg).unwrap();
        let t = ingest::aggregate(&reqs, &cfg.grid, &cfg.window).unwrap();
        let day_total = |d: usize| (d * 96..(d + 1) * 96).map(|s| t.row(s).iter().sum::<u32>()).sum::<u32>();
        assert_eq!(cal.day_of_week[0], cal.day_of_week[7]);
        assert!(day_total(7) < day_total(0));
        assert!(day_total(7) < day_total(14));
    }

    #[test]
    fn poisson_moments() {
        let mut rng = rng_for(1, "t");
        for mean in [0.5, 7.0, 150.0] {
            let n = 20_000;
            let draws: Vec<f64> = (0..n).map(|_| poisson_inversion(&mut rng, mean) as f64).collect();
            let m = draws.iter().sum::<f64>() / n as f64;
            let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / n as f64;
            assert!((m - mean).abs() < 4.0 * (mean / n as f64).sqrt(), "{mean}: {m}");
            assert!((v / mean - 1.0).abs() < 0.1, "{mean}: var {v}");
        }
    }
}
