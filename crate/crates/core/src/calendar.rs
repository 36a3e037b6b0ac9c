//! Hour, day, week and load-block arithmetic shared by the layers.

use serde::{Deserialize, Serialize};

use crate::scenario::{HOURS_PER_WEEK, HOURS_PER_YEAR};

pub const HOURS_PER_DAY: usize = 24;
pub const DAYS_PER_WEEK: usize = 7;

/// Chronological load blocks within a day. The default splits each day into
/// hours 1-7, 8-19 and 20-24, giving 21 blocks per week.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockScheme {
    pub hours: Vec<usize>,
}

impl Default for BlockScheme {
    fn default() -> Self {
        BlockScheme { hours: vec![7, 12, 5] }
    }
}

impl BlockScheme {
    pub fn check(&self) -> Result<(), String> {
        if self.hours.iter().sum::<usize>() != HOURS_PER_DAY || self.hours.contains(&0) {
            return Err("block lengths must be positive and sum to 24".into());
        }
        Ok(())
    }

    pub fn per_day(&self) -> usize {
        self.hours.len()
    }

    pub fn per_week(&self) -> usize {
        self.per_day() * DAYS_PER_WEEK
    }

    /// Duration in hours of block `b` of a week.
    pub fn duration(&self, b: usize) -> usize {
        self.hours[b % self.per_day()]
    }

    /// Hour offset from the week start of the first hour of block `b`.
    pub fn start(&self, b: usize) -> usize {
        let day = b / self.per_day();
        day * HOURS_PER_DAY + self.hours[..b % self.per_day()].iter().sum::<usize>()
    }

    /// Block of the week containing hour offset `h` (0..168).
    pub fn block_of(&self, h: usize) -> usize {
        let day = h / HOURS_PER_DAY;
        let mut rem = h % HOURS_PER_DAY;
        for (k, &len) in self.hours.iter().enumerate() {
            if rem < len {
                return day * self.per_day() + k;
            }
            rem -= len;
        }
        unreachable!("hours sum to 24")
    }

    /// Hour offsets (from the week start) covered by block `b`.
    pub fn hours_of(&self, b: usize) -> std::ops::Range<usize> {
        let s = self.start(b);
        s..s + self.duration(b)
    }
}

/// Week-ahead problems start at every 168-hour boundary of the year except
/// the last day, which stays with the 52nd week.
pub fn is_week_start(hour: usize) -> bool {
    let y = hour % HOURS_PER_YEAR;
    y % HOURS_PER_WEEK == 0 && y < 52 * HOURS_PER_WEEK
}

pub fn is_day_start(hour: usize) -> bool {
    hour % HOURS_PER_DAY == 0
}

/// Problem counts over hours `0..hours`: (week starts, day starts).
pub fn boundary_counts(hours: usize) -> (usize, usize) {
    let weeks = (0..hours).filter(|&h| is_week_start(h)).count();
    let days = hours.div_ceil(HOURS_PER_DAY);
    (weeks, days)
}

/// Study week index (0-based, counting from hour 0) of an absolute hour,
/// following the year's 52-week convention.
pub fn study_week(hour: usize) -> usize {
    let year = hour / HOURS_PER_YEAR;
    year * 52 + crate::scenario::week_of_year(hour)
}

/// First absolute hour of a study week.
pub fn study_week_start(week: usize) -> usize {
    (week / 52) * HOURS_PER_YEAR + (week % 52) * HOURS_PER_WEEK
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_blocks_cover_the_week() {
        let b = BlockScheme::default();
        assert_eq!(b.per_week(), 21);
        assert_eq!((0..21).map(|k| b.duration(k)).sum::<usize>(), 168);
        for h in 0..168 {
            assert!(b.hours_of(b.block_of(h)).contains(&h));
        }
        assert_eq!(b.hours_of(1), 7..19);
    }

    #[test]
    fn year_boundaries() {
        assert_eq!(boundary_counts(8760), (52, 365));
        assert_eq!(boundary_counts(24), (1, 1));
        assert!(!is_week_start(8736));
        assert_eq!(study_week(8759), 51);
        assert_eq!(study_week(8760), 52);
        assert_eq!(study_week_start(52), 8760);
    }
}
