use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::slot::SECONDS_PER_DAY;

/// Per-day calendar metadata. Day-of-week counts from Saturday = 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalendarInfo {
    pub day_of_week: Vec<u8>,
    pub is_holiday: Vec<bool>,
}

pub const CALENDAR_HEADER: &str = "day_index,day_of_week,is_holiday";

impl CalendarInfo {
    /// Weekday sequence for `n_days` starting at `start`, with the given holiday day indices.
    pub fn for_window(start: i64, n_days: usize, holidays: &[usize]) -> Self {
        let first = start.div_euclid(SECONDS_PER_DAY);
        // 1970-01-01 was a Thursday, which is 5 when Saturday is 0
        let day_of_week = (0..n_days as i64)
            .map(|d| (first + d + 5).rem_euclid(7) as u8)
            .collect();
        let mut is_holiday = vec![false; n_days];
        for &h in holidays {
            if h < n_days {
                is_holiday[h] = true;
            }
        }
        CalendarInfo {
            day_of_week,
            is_holiday,
        }
    }

    pub fn n_days(&self) -> usize {
        self.day_of_week.len()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(16 * self.n_days() + 40);
        out.push_str(CALENDAR_HEADER);
        out.push('\n');
        for (d, (dow, hol)) in self.day_of_week.iter().zip(&self.is_holiday).enumerate() {
            out.push_str(&format!("{d},{dow},{}\n", u8::from(*hol)));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let loc = |n: usize| format!("{}:{n}", path.display());
        match lines.next() {
            Some(Ok(h)) if h.trim() == CALENDAR_HEADER => {}
            _ => return Err(Error::data_at("bad calendar header", loc(1))),
        }
        let mut cal = CalendarInfo {
            day_of_week: Vec::new(),
            is_holiday: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            let parsed = match fields.as_slice() {
                [d, w, h] => d
                    .parse::<usize>()
                    .ok()
                    .zip(w.parse::<u8>().ok().filter(|w| *w < 7))
                    .zip(match *h {
                        "0" => Some(false),
                        "1" => Some(true),
                        _ => None,
                    }),
                _ => None,
            };
            let ((day, dow), hol) =
                parsed.ok_or_else(|| Error::data_at(format!("bad calendar row {line:?}"), loc(i + 2)))?;
            if day != cal.n_days() {
                return Err(Error::data_at(
                    format!("expected day {} but found {day}", cal.n_days()),
                    loc(i + 2),
                ));
            }
            cal.day_of_week.push(dow);
            cal.is_holiday.push(hol);
        }
        Ok(cal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_of_september_2017_is_friday() {
        let cal = CalendarInfo::for_window(1_504_224_000, 8, &[2]);
        assert_eq!(cal.day_of_week, vec![6, 0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(cal.is_holiday[2], true);
        assert_eq!(cal.is_holiday.iter().filter(|h| **h).count(), 1);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cal.csv");
        let cal = CalendarInfo::for_window(1_504_224_000, 30, &[4, 29]);
        cal.write(&p).unwrap();
        assert_eq!(CalendarInfo::read(&p).unwrap(), cal);
    }

    #[test]
    fn rejects_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cal.csv");
        std::fs::write(&p, "day_index,day_of_week,is_holiday\n0,1,0\n2,3,0\n").unwrap();
        assert!(CalendarInfo::read(&p).is_err());
    }
}
