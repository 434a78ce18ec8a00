//! Daily cumulative series to weekly panels, hold-out masks, panel CSV
//! files, and synthetic panels.

pub mod italy;
mod simulate;

pub use simulate::{simulate_panel, simulate_with_phi, SimulatedPanel};

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CountPanel;

/// Exposure unit: offsets are `ln(population / 10⁵)`.
pub const POPULATION_UNIT: f64 = 1e5;

/// One day of a cumulative series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub cumulative_cases: i64,
    pub cumulative_swabs: Option<i64>,
}

/// Daily cumulative counts of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub region: String,
    pub population: f64,
    /// Sorted by date, one record per day at most.
    pub days: Vec<DailyRecord>,
}

impl RawSeries {
    /// Cumulative values on the latest record not after `date`.
    fn cumulative_at(&self, date: NaiveDate) -> Option<(i64, Option<i64>)> {
        let i = self.days.partition_point(|d| d.date <= date);
        (i > 0).then(|| (self.days[i - 1].cumulative_cases, self.days[i - 1].cumulative_swabs))
    }

    /// Days where the cumulative count went down.
    pub fn decreases(&self) -> Vec<NaiveDate> {
        self.days.windows(2).filter(|w| w[1].cumulative_cases < w[0].cumulative_cases).map(|w| w[1].date).collect()
    }
}

/// Inclusive date range of an epidemic wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl WaveWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Data(format!("window ends ({end}) before it starts ({start})")));
        }
        Ok(Self { start, end })
    }

    /// 24 February to 19 July 2020.
    pub fn wave_one() -> Self {
        Self { start: ymd(2020, 2, 24), end: ymd(2020, 7, 19) }
    }

    /// 20 July to 27 December 2020.
    pub fn wave_two() -> Self {
        Self { start: ymd(2020, 7, 20), end: ymd(2020, 12, 27) }
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..=(self.end - self.start).num_days()).map(move |k| start + Duration::days(k))
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// How days are grouped into weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekAnchor {
    /// Week `(day of year − 1) / 7 + 1` of the calendar year; blocks cut by
    /// the window edges are kept as partial weeks.
    #[default]
    Calendar,
    /// 7-day blocks from the window start; a trailing partial block is dropped.
    WindowStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub anchor: WeekAnchor,
    /// A weekly decrease larger than this fraction of the cumulative count
    /// is treated as corrupt data rather than a correction.
    pub max_correction: f64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self { anchor: WeekAnchor::Calendar, max_correction: 0.5 }
    }
}

/// Consecutive day ranges `[first, last]` making up the weeks of a window.
pub fn week_blocks(window: &WaveWindow, anchor: WeekAnchor) -> Vec<(NaiveDate, NaiveDate)> {
    let mut blocks: Vec<(NaiveDate, NaiveDate)> = Vec::new();
    let mut key_of_last = None;
    for day in window.days() {
        let key = match anchor {
            WeekAnchor::Calendar => (day.year(), (day.ordinal() as i64 - 1) / 7),
            WeekAnchor::WindowStart => (0, (day - window.start).num_days() / 7),
        };
        if key_of_last == Some(key) {
            blocks.last_mut().expect("block open").1 = day;
        } else {
            blocks.push((day, day));
            key_of_last = Some(key);
        }
    }
    if anchor == WeekAnchor::WindowStart {
        if let Some(&(a, b)) = blocks.last() {
            if (b - a).num_days() < 6 {
                blocks.pop();
            }
        }
    }
    blocks
}

/// Weekly panel plus the first day of each week.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyPanel {
    pub panel: CountPanel,
    pub week_starts: Vec<NaiveDate>,
    /// `(region, week index)` of every clamped negative difference.
    pub clamped: Vec<(String, usize)>,
}

/// Weekly new cases and weekly swabs from cumulative daily series.
///
/// Week `w` gets `Y^c(last day of w) − Y^c(day before w)`; the day before
/// the first week reads as 0 when the series starts inside the window.
/// Swabs become the only covariate when every series has them.
pub fn aggregate_weekly(raw: &[RawSeries], window: &WaveWindow, opts: &AggregateOptions) -> Result<WeeklyPanel> {
    if raw.is_empty() {
        return Err(Error::Data("no series to aggregate".into()));
    }
    let blocks = week_blocks(window, opts.anchor);
    if blocks.len() < 2 {
        return Err(Error::Data(format!("window {}..{} spans fewer than 2 weeks", window.start, window.end)));
    }
    let with_swabs = raw.iter().all(|s| s.days.iter().all(|d| d.cumulative_swabs.is_some()));
    let mut counts = Vec::with_capacity(raw.len());
    let mut covariates = Vec::with_capacity(raw.len());
    let mut clamped = Vec::new();
    for series in raw {
        if !series.days.iter().any(|d| d.date >= window.start && d.date <= window.end) {
            return Err(Error::Data(format!("region {} has no records inside the window", series.region)));
        }
        if !(series.population > 0.0) {
            return Err(Error::Data(format!("region {} has non-positive population", series.region)));
        }
        let mut row = Vec::with_capacity(blocks.len());
        let mut cov_row = Vec::with_capacity(blocks.len());
        for (w, &(first, last)) in blocks.iter().enumerate() {
            let (c0, s0) = series.cumulative_at(first - Duration::days(1)).unwrap_or((0, Some(0)));
            let (c1, s1) = series
                .cumulative_at(last)
                .ok_or_else(|| Error::Data(format!("region {} has no record by {last}", series.region)))?;
            let diff = c1 - c0;
            if diff < 0 {
                if (-diff) as f64 > opts.max_correction * c0.max(1) as f64 {
                    return Err(Error::Data(format!(
                        "region {}: cumulative count drops from {c0} to {c1} in the week of {first}",
                        series.region
                    )));
                }
                log::warn!("region {}: negative weekly count {diff} in the week of {first} clamped to 0", series.region);
                clamped.push((series.region.clone(), w));
            }
            row.push(diff.max(0) as u64);
            if with_swabs {
                let swabs = (s1.unwrap_or(0) - s0.unwrap_or(0)).max(0);
                cov_row.push(vec![swabs as f64]);
            } else {
                cov_row.push(Vec::new());
            }
        }
        counts.push(row);
        covariates.push(cov_row);
    }
    let mut panel = CountPanel::new(
        raw.iter().map(|s| s.region.clone()).collect(),
        counts,
        raw.iter().map(|s| (s.population / POPULATION_UNIT).ln()).collect(),
    )?;
    if with_swabs {
        panel.covariates = covariates;
        panel.covariate_names = vec!["swabs".into()];
    }
    panel.validate()?;
    Ok(WeeklyPanel { panel, week_starts: blocks.iter().map(|b| b.0).collect(), clamped })
}

fn header_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data(format!("{}: missing column `{name}`", path.display())))
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.get(..10)?, "%Y-%m-%d").ok()
}

/// Reads a daily file with the public regional dataset's columns
/// (`data`, `denominazione_regione`, `totale_casi`, `tamponi`). Rows of
/// regions named in `merge` are summed into the mapped region per date.
/// Populations are left at 0; see [`attach_populations`].
pub fn read_daily_csv(path: &Path, merge: &[(&str, &str)]) -> Result<Vec<RawSeries>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let i_date = header_index(&headers, "data", path)?;
    let i_region = header_index(&headers, "denominazione_regione", path)?;
    let i_cases = header_index(&headers, "totale_casi", path)?;
    let i_swabs = headers.iter().position(|h| h.trim() == "tamponi");
    let mut order: Vec<String> = Vec::new();
    let mut by_region: HashMap<String, BTreeMap<NaiveDate, (i64, Option<i64>)>> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::Data(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let date = parse_date(rec.get(i_date).unwrap_or("")).ok_or_else(|| bad("date"))?;
        let raw_name = rec.get(i_region).unwrap_or("").trim();
        let name = merge.iter().find(|(from, _)| *from == raw_name).map_or(raw_name, |(_, to)| *to).to_string();
        let cases: i64 = rec.get(i_cases).unwrap_or("").trim().parse::<f64>().map_err(|_| bad("totale_casi"))? as i64;
        let swabs = match i_swabs {
            Some(i) => Some(rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|_| bad("tamponi"))? as i64),
            None => None,
        };
        let days = by_region.entry(name.clone()).or_insert_with(|| {
            order.push(name.clone());
            BTreeMap::new()
        });
        let slot = days.entry(date).or_insert((0, swabs.map(|_| 0)));
        slot.0 += cases;
        slot.1 = match (slot.1, swabs) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let days = by_region
                .remove(&name)
                .unwrap_or_default()
                .into_iter()
                .map(|(date, (c, s))| DailyRecord { date, cumulative_cases: c, cumulative_swabs: s })
                .collect();
            RawSeries { region: name, population: 0.0, days }
        })
        .collect())
}

/// Reads `region,population` rows.
pub fn read_population_csv(path: &Path) -> Result<HashMap<String, f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let i_region = header_index(&headers, "region", path)?;
    let i_pop = header_index(&headers, "population", path)?;
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let region = rec.get(i_region).unwrap_or("").trim().to_string();
        let pop: f64 = rec
            .get(i_pop)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("{}: bad population for {region}", path.display())))?;
        out.insert(region, pop);
    }
    Ok(out)
}

pub fn attach_populations(series: &mut [RawSeries], populations: &HashMap<String, f64>) -> Result<()> {
    for s in series {
        s.population = *populations
            .get(&s.region)
            .ok_or_else(|| Error::Data(format!("no population for region {}", s.region)))?;
    }
    Ok(())
}

/// Reorders regions to match `names` (e.g. the order of a graph file).
pub fn align_regions(panel: &CountPanel, names: &[String]) -> Result<CountPanel> {
    if names.len() != panel.n_regions() {
        return Err(Error::Data(format!("{} region names for a panel of {} regions", names.len(), panel.n_regions())));
    }
    let idx = names
        .iter()
        .map(|n| {
            panel.regions.iter().position(|r| r == n).ok_or_else(|| Error::Data(format!("region {n} not in panel")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = panel.clone();
    out.regions = idx.iter().map(|&i| panel.regions[i].clone()).collect();
    out.counts = idx.iter().map(|&i| panel.counts[i].clone()).collect();
    out.offset_log = idx.iter().map(|&i| panel.offset_log[i]).collect();
    out.covariates = idx.iter().map(|&i| panel.covariates[i].clone()).collect();
    out.observed = idx.iter().map(|&i| panel.observed[i].clone()).collect();
    out.validate()?;
    Ok(out)
}

/// Reads a long panel file `region,week,count,population,swabs` (weeks
/// numbered from 1; `swabs` may be left empty on every row).
pub fn read_panel_csv(path: &Path) -> Result<CountPanel> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let cols = ["region", "week", "count", "population", "swabs"]
        .map(|c| header_index(&headers, c, path))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, u64, f64, Option<f64>)>> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |what: &str| Error::Data(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let field = |k: usize| rec.get(cols[k]).unwrap_or("").trim();
        let region = field(0).to_string();
        let week: usize = field(1).parse().map_err(|_| bad("week"))?;
        let count: u64 = field(2).parse().map_err(|_| bad("count"))?;
        let pop: f64 = field(3).parse().map_err(|_| bad("population"))?;
        let swabs = match field(4) {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("swabs"))?),
        };
        if !rows.contains_key(&region) {
            order.push(region.clone());
        }
        rows.entry(region).or_default().push((week, count, pop, swabs));
    }
    if order.is_empty() {
        return Err(Error::Data(format!("{}: no rows", path.display())));
    }
    let mut counts = Vec::new();
    let mut offsets = Vec::new();
    let mut cov = Vec::new();
    let mut any_swabs = None;
    for region in &order {
        let mut r = rows.remove(region).unwrap_or_default();
        r.sort_by_key(|x| x.0);
        if r.iter().enumerate().any(|(i, x)| x.0 != i + 1) {
            return Err(Error::Data(format!("{}: region {region} must list weeks 1..T once each", path.display())));
        }
        let pop = r[0].2;
        if r.iter().any(|x| x.2 != pop) || !(pop > 0.0) {
            return Err(Error::Data(format!("{}: region {region} needs one positive population", path.display())));
        }
        let has = r.iter().all(|x| x.3.is_some());
        if r.iter().any(|x| x.3.is_some()) != has || any_swabs.is_some_and(|a| a != has) {
            return Err(Error::Data(format!("{}: swabs must be given on every row or on none", path.display())));
        }
        any_swabs = Some(has);
        counts.push(r.iter().map(|x| x.1).collect::<Vec<_>>());
        offsets.push((pop / POPULATION_UNIT).ln());
        cov.push(r.iter().map(|x| x.3.map(|v| vec![v]).unwrap_or_default()).collect::<Vec<_>>());
    }
    let mut panel = CountPanel::new(order, counts, offsets)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if any_swabs == Some(true) {
        panel.covariates = cov;
        panel.covariate_names = vec!["swabs".into()];
    }
    panel.validate()?;
    Ok(panel)
}

/// Writes the long panel format read by [`read_panel_csv`]; the first
/// covariate, if any, goes in the `swabs` column.
pub fn write_panel_csv(path: &Path, panel: &CountPanel) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["region", "week", "count", "population", "swabs"]).map_err(|e| Error::csv(path, e))?;
    for g in 0..panel.n_regions() {
        let mut pop = POPULATION_UNIT * panel.offset_log[g].exp();
        if (pop - pop.round()).abs() <= 1e-9 * pop {
            pop = pop.round();
        }
        for t in 0..panel.n_times() {
            let swabs = panel.covariates[g][t].first().map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                panel.regions[g].clone(),
                (t + 1).to_string(),
                panel.counts[g][t].to_string(),
                pop.to_string(),
                swabs,
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Weeks withheld from each region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMask {
    pub fraction: f64,
    pub seed: u64,
    pub n_times: usize,
    /// Sorted 0-based week indices per region.
    pub masked: Vec<Vec<usize>>,
}

impl HoldoutMask {
    /// `true` on held-out cells.
    pub fn held_out(&self) -> Vec<Vec<bool>> {
        self.masked
            .iter()
            .map(|weeks| {
                let mut row = vec![false; self.n_times];
                weeks.iter().for_each(|&t| row[t] = true);
                row
            })
            .collect()
    }

    /// `true` on cells the model may see.
    pub fn observed(&self) -> Vec<Vec<bool>> {
        self.held_out().into_iter().map(|r| r.into_iter().map(|h| !h).collect()).collect()
    }

    /// Copy of `panel` with the held-out cells unobserved.
    pub fn apply(&self, panel: &CountPanel) -> Result<CountPanel> {
        if panel.n_regions() != self.masked.len() || panel.n_times() != self.n_times {
            return Err(Error::Data("hold-out mask does not match the panel shape".into()));
        }
        panel.with_mask(self.observed())
    }
}

/// Masks `round(fraction · T)` uniformly chosen weeks in every region.
pub fn make_holdout(panel: &CountPanel, fraction: f64, seed: u64) -> Result<HoldoutMask> {
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::Data(format!("hold-out fraction {fraction} outside (0, 0.5)")));
    }
    let t = panel.n_times();
    let k = (fraction * t as f64).round() as usize;
    if k == 0 {
        return Err(Error::Data(format!("hold-out fraction {fraction} masks no week out of {t}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masked = (0..panel.n_regions())
        .map(|_| {
            let mut v = sample(&mut rng, t, k).into_vec();
            v.sort_unstable();
            v
        })
        .collect();
    Ok(HoldoutMask { fraction, seed, n_times: t, masked })
}

#[cfg(test)]
mod tests;
