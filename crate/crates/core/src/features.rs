//! Feature rows, hourly windows, the train/validation split and standardization.
//!
//! Row `t` of a [`FeatureFrame`] is the demand of every retained region at
//! slot `t` followed by the temporal block
//! `[day_of_week / 6, holiday, sin(2 pi s / 96), cos(2 pi s / 96)]`.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{CalendarInfo, DemandTensor, TimeSlot, SLOTS_PER_DAY};
use crate::error::{Error, Result};

/// Slots per window (one hour).
pub const SEQ_LEN: usize = 4;

/// How the day of week enters the temporal block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayEncoding {
    /// One column, `day_of_week / 6`.
    #[default]
    Scaled,
    /// Seven indicator columns.
    OneHot,
}

impl DayEncoding {
    pub fn width(self) -> usize {
        match self {
            DayEncoding::Scaled => 1,
            DayEncoding::OneHot => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_regions: usize,
    pub day_encoding: DayEncoding,
}

impl FeatureLayout {
    pub fn n_features(&self) -> usize {
        self.n_regions + self.day_encoding.width() + 3
    }

    pub fn holiday_col(&self) -> usize {
        self.n_regions + self.day_encoding.width()
    }

    pub fn sin_col(&self) -> usize {
        self.holiday_col() + 1
    }

    pub fn cos_col(&self) -> usize {
        self.holiday_col() + 2
    }
}

/// `[day_of_week / 6, holiday, sin, cos]` for one slot.
pub fn temporal_features(slot: &TimeSlot, cal: &CalendarInfo) -> [f64; 4] {
    let angle = 2.0 * PI * slot.slot_of_day as f64 / SLOTS_PER_DAY as f64;
    [
        cal.day_of_week[slot.day_index] as f64 / 6.0,
        f64::from(u8::from(cal.is_holiday[slot.day_index])),
        angle.sin(),
        angle.cos(),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    /// `[n_slots, n_features]`
    pub x: Array2<f64>,
    pub slot_meta: Vec<TimeSlot>,
    pub layout: FeatureLayout,
}

impl FeatureFrame {
    pub fn n_slots(&self) -> usize {
        self.x.nrows()
    }

    pub fn demand(&self) -> ArrayView2<'_, f64> {
        self.x.slice(s![.., ..self.layout.n_regions])
    }
}

pub fn build_frames(tensor: &DemandTensor, cal: &CalendarInfo) -> Result<FeatureFrame> {
    build_frames_with(tensor, cal, DayEncoding::Scaled)
}

pub fn build_frames_with(
    tensor: &DemandTensor,
    cal: &CalendarInfo,
    day_encoding: DayEncoding,
) -> Result<FeatureFrame> {
    if tensor.n_slots != cal.n_days() * SLOTS_PER_DAY {
        return Err(Error::data(format!(
            "demand covers {} slots but the calendar has {} days",
            tensor.n_slots,
            cal.n_days()
        )));
    }
    let layout = FeatureLayout {
        n_regions: tensor.n_regions(),
        day_encoding,
    };
    let mut x = Array2::zeros((tensor.n_slots, layout.n_features()));
    let mut slot_meta = Vec::with_capacity(tensor.n_slots);
    for (t, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let slot = TimeSlot::from_index(t);
        for (dst, &c) in row.iter_mut().zip(tensor.row(t)) {
            *dst = c as f64;
        }
        let [dow, holiday, sin, cos] = temporal_features(&slot, cal);
        match day_encoding {
            DayEncoding::Scaled => row[layout.n_regions] = dow,
            DayEncoding::OneHot => row[layout.n_regions + cal.day_of_week[slot.day_index] as usize] = 1.0,
        }
        row[layout.holiday_col()] = holiday;
        row[layout.sin_col()] = sin;
        row[layout.cos_col()] = cos;
        slot_meta.push(slot);
    }
    Ok(FeatureFrame {
        x,
        slot_meta,
        layout,
    })
}

/// One training example: `SEQ_LEN` consecutive feature rows and the demand
/// of every region in the slot right after them.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// `[window length, n_features]`
    pub window: Array2<f64>,
    pub target: Array1<f64>,
    pub target_slot: TimeSlot,
}

/// Windows start at `0, stride, 2 * stride, ...`; a window covering slots
/// `t-3..=t` is paired with slot `t+1`, and windows with no next slot are dropped.
pub fn make_sequences(frame: &FeatureFrame, stride: usize) -> Result<Vec<SequenceSample>> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    let n = frame.n_slots();
    if n < SEQ_LEN + 1 {
        return Err(Error::data(format!(
            "{n} slots cannot hold a {SEQ_LEN}-slot window plus a target"
        )));
    }
    let regions = frame.layout.n_regions;
    Ok((0..=n - SEQ_LEN - 1)
        .step_by(stride)
        .map(|start| {
            let target_row = start + SEQ_LEN;
            SequenceSample {
                window: frame.x.slice(s![start..target_row, ..]).to_owned(),
                target: frame.x.slice(s![target_row, ..regions]).to_owned(),
                target_slot: frame.slot_meta[target_row],
            }
        })
        .collect())
}

/// Samples whose target falls in the first `train_days` days train; the rest validate.
pub fn split_train_val(
    samples: Vec<SequenceSample>,
    train_days: usize,
) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>)> {
    let (train, val): (Vec<_>, Vec<_>) = samples
        .into_iter()
        .partition(|s| s.target_slot.day_index < train_days);
    if train.is_empty() || val.is_empty() {
        return Err(Error::data(format!(
            "split at day {train_days} leaves {} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    Ok((train, val))
}

/// Columnwise standardization; pass-through columns keep mean 0 and std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: ArrayView2<'_, f64>, passthrough: &[usize]) -> Self {
        let n = rows.nrows().max(1) as f64;
        let mut mean: Vec<f64> = rows.sum_axis(Axis(0)).iter().map(|s| s / n).collect();
        let mut std: Vec<f64> = rows
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        for &c in passthrough {
            mean[c] = 0.0;
            std[c] = 1.0;
        }
        Scaler { mean, std }
    }

    /// Fit on the frame rows of the first `train_days` days; the holiday flag passes through.
    pub fn fit_frame(frame: &FeatureFrame, train_days: usize) -> Self {
        let rows = (train_days * SLOTS_PER_DAY).min(frame.n_slots());
        Self::fit(frame.x.slice(s![..rows, ..]), &[frame.layout.holiday_col()])
    }

    pub fn n_columns(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / sd;
            }
        }
        out
    }

    pub fn inverse_apply(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * sd + m;
            }
        }
        out
    }

    /// Scale the leading demand columns of a target vector.
    pub fn scale_target(&self, target: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(
            target
                .iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((v, m), sd)| (v - m) / sd),
        )
    }

    pub fn unscale_target(&self, target: ArrayView1<'_, f64>) -> Array1<f64> {
        Array1::from_iter(
            target
                .iter()
                .zip(&self.mean)
                .zip(&self.std)
                .map(|((v, m), sd)| v * sd + m),
        )
    }

    pub fn scale_sample(&self, sample: &SequenceSample) -> SequenceSample {
        SequenceSample {
            window: self.apply(sample.window.view()),
            target: self.scale_target(sample.target.view()),
            target_slot: sample.target_slot,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(days: usize, regions: usize, f: impl Fn(usize, usize) -> u32) -> DemandTensor {
        let n = days * SLOTS_PER_DAY;
        let counts = (0..n).flat_map(|t| (0..regions).map(move |r| (t, r))).map(|(t, r)| f(t, r)).collect();
        DemandTensor::from_counts(n, (0..regions).collect(), counts).unwrap()
    }

    fn calendar(days: usize) -> CalendarInfo {
        CalendarInfo::for_window(1_504_224_000, days, &[1])
    }

    #[test]
    fn temporal_angles() {
        let cal = calendar(1);
        let f = temporal_features(&TimeSlot::from_index(0), &cal);
        assert_eq!((f[2], f[3]), (0.0, 1.0));
        let f = temporal_features(&TimeSlot::from_index(24), &cal);
        assert!((f[2] - 1.0).abs() < 1e-15 && f[3].abs() < 1e-15);
        let f = temporal_features(&TimeSlot::from_index(48), &cal);
        assert!(f[2].abs() < 1e-15 && (f[3] + 1.0).abs() < 1e-15);
        // 2017-09-01 is a Friday
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn frames_match_tensor_and_hand_assembly() {
        let t = tensor(1, 64, |_, _| 0);
        let f = build_frames(&t, &calendar(1)).unwrap();
        assert_eq!(f.x.dim(), (96, 68));
        assert!(f.demand().iter().all(|&v| v == 0.0));

        let t = tensor(2, 3, |t, r| (t * 7 + r) as u32 % 11);
        let cal = calendar(2);
        let f = build_frames(&t, &cal).unwrap();
        for slot in 0..192 {
            for r in 0..3 {
                assert_eq!(f.x[[slot, r]], t.get(slot, r) as f64);
            }
            let (s, c) = (f.x[[slot, 5]], f.x[[slot, 6]]);
            assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
        let angle = 2.0 * PI * 10.0 / 96.0;
        let hand = [
            t.get(10, 0) as f64,
            t.get(10, 1) as f64,
            t.get(10, 2) as f64,
            6.0 / 6.0,
            0.0,
            angle.sin(),
            angle.cos(),
        ];
        assert_eq!(f.x.row(10).to_vec(), hand.to_vec());
        // day 1 is the holiday
        assert_eq!(f.x[[96 + 10, 4]], 1.0);
        assert!(build_frames(&t, &calendar(3)).is_err());
    }

    #[test]
    fn one_hot_day_encoding() {
        let t = tensor(2, 2, |_, _| 1);
        let f = build_frames_with(&t, &calendar(2), DayEncoding::OneHot).unwrap();
        assert_eq!(f.layout.n_features(), 2 + 7 + 3);
        // Friday then Saturday
        assert_eq!(f.x[[0, 2 + 6]], 1.0);
        assert_eq!(f.x[[96, 2]], 1.0);
        assert_eq!(f.x.row(0).slice(s![2..9]).sum(), 1.0);
        assert_eq!(f.x[[96, f.layout.holiday_col()]], 1.0);
    }

    #[test]
    fn window_counts() {
        let f = build_frames(&tensor(110, 2, |_, _| 1), &calendar(110)).unwrap();
        let s = make_sequences(&f, 4).unwrap();
        assert_eq!(s.len(), 2639);
        let (train, val) = split_train_val(s, 80).unwrap();
        assert_eq!((train.len(), val.len()), (1919, 720));

        let short = FeatureFrame {
            x: f.x.slice(s![..8, ..]).to_owned(),
            slot_meta: f.slot_meta[..8].to_vec(),
            layout: f.layout,
        };
        assert_eq!(make_sequences(&short, 4).unwrap().len(), 1);
        let ones = make_sequences(&short, 1).unwrap();
        assert_eq!(ones.len(), 4);
        assert_eq!(ones.last().unwrap().target_slot.index, 7);
    }

    #[test]
    fn split_at_day_boundary() {
        let f = build_frames(&tensor(2, 1, |t, _| t as u32), &calendar(2)).unwrap();
        let samples = make_sequences(&f, 1).unwrap();
        // counting oracle over target days
        let expect_train = samples.iter().filter(|s| s.target_slot.index < 96).count();
        let (train, val) = split_train_val(samples, 1).unwrap();
        assert_eq!(train.len(), expect_train);
        assert_eq!(train.len(), 92);
        assert_eq!(val.len(), 96);
        assert!(split_train_val(make_sequences(&f, 1).unwrap(), 2).is_err());
    }

    #[test]
    fn windows_line_up_with_targets() {
        let f = build_frames(&tensor(1, 2, |t, r| (t * 2 + r) as u32), &calendar(1)).unwrap();
        for s in make_sequences(&f, 4).unwrap() {
            let t = s.target_slot.index;
            assert_eq!(s.target[1], (t * 2 + 1) as f64);
            assert_eq!(s.window[[3, 0]], ((t - 1) * 2) as f64);
            assert_eq!(s.window[[0, 0]], ((t - 4) * 2) as f64);
        }
    }

    #[test]
    fn stride_one_is_superset_and_no_leak() {
        let f = build_frames(&tensor(3, 2, |t, r| (t * 3 + r * 5) as u32 % 17), &calendar(3)).unwrap();
        let ones = make_sequences(&f, 1).unwrap();
        let fours = make_sequences(&f, 4).unwrap();
        for s in &fours {
            assert!(ones.iter().any(|o| o == s));
        }
        let (train, val) = split_train_val(fours, 2).unwrap();
        let max_train_slot = train.iter().map(|s| s.target_slot.index - 1).max().unwrap();
        let min_val_target = val.iter().map(|s| s.target_slot.index).min().unwrap();
        assert!(max_train_slot < min_val_target);
    }

    #[test]
    fn holiday_permutation_touches_only_calendar_columns() {
        let t = tensor(3, 4, |t, r| (t + r) as u32 % 5);
        let a = build_frames(&t, &CalendarInfo::for_window(1_504_224_000, 3, &[0])).unwrap();
        let b = build_frames(&t, &CalendarInfo::for_window(1_504_224_000, 3, &[2])).unwrap();
        assert_eq!(a.demand(), b.demand());
        assert_ne!(a.x, b.x);
    }

    #[test]
    fn scaler_definitions() {
        let rows = ndarray::array![[1.0, 5.0, 0.0], [3.0, 5.0, 1.0], [5.0, 5.0, 0.0]];
        let sc = Scaler::fit(rows.view(), &[2]);
        let z = sc.apply(rows.view());
        assert_eq!(z.column(1).to_vec(), vec![0.0; 3]);
        assert_eq!(z.column(2), rows.column(2));
        let m = z.column(0).mean().unwrap();
        let sd = z.column(0).std(0.0);
        assert!(m.abs() < 1e-15 && (sd - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn scaler_round_trip(vals in proptest::collection::vec(-1e3f64..1e3, 24)) {
            let rows = Array2::from_shape_vec((6, 4), vals).unwrap();
            let sc = Scaler::fit(rows.view(), &[]);
            let back = sc.inverse_apply(sc.apply(rows.view()).view());
            for (a, b) in back.iter().zip(rows.iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
