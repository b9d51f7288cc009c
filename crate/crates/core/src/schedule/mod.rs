//! Multi-constraint scheduling: trip, meeting, and calendar problems as
//! small CSP instances with exhaustive solvers.
//!
//! The five-stage pipeline is: instance construction from the entity
//! database, optional goal-solution fixing (calendar), constraint
//! sampling, verification/filtering down to instances with a unique (or
//! uniquely optimal) solution, and natural-language rendering.

mod render;
mod solve;

pub use render::{parse_itinerary, render_nl, ItineraryParseError, RenderedSample};
pub use solve::{accept, solve, verify};

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::{CITIES, DISTRICTS, PEOPLE, WEEKDAYS};

/// Inclusive day window: the named city's visit must contain these days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityWindow {
    pub city: String,
    pub day_lo: u32,
    pub day_hi: u32,
}

/// Trip planning instance. The flight day counts toward both cities, so
/// the day accounting identity is `sum(durations) - (cities - 1) == total_days`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripProblem {
    pub cities: Vec<String>,
    pub total_days: u32,
    pub durations: BTreeMap<String, u32>,
    /// Undirected direct-flight pairs, stored with endpoints sorted.
    pub flights: BTreeSet<(String, String)>,
    pub windows: Vec<CityWindow>,
}

impl TripProblem {
    pub fn flight_key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn has_flight(&self, a: &str, b: &str) -> bool {
        self.flights.contains(&Self::flight_key(a, b))
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.cities.len() as u32;
        if n == 0 {
            return Err("no cities".into());
        }
        let set: BTreeSet<&String> = self.cities.iter().collect();
        if set.len() != self.cities.len() {
            return Err("duplicate city".into());
        }
        let mut total = 0u32;
        for city in &self.cities {
            let d = *self
                .durations
                .get(city)
                .ok_or_else(|| format!("missing duration for {city}"))?;
            if d == 0 {
                return Err(format!("duration for {city} must be >= 1"));
            }
            total += d;
        }
        if total != self.total_days + n - 1 {
            return Err(format!(
                "day accounting identity violated: sum {} != total {} + {}",
                total,
                self.total_days,
                n - 1
            ));
        }
        for w in &self.windows {
            if !set.contains(&w.city) {
                return Err(format!("window references unknown city {}", w.city));
            }
            if w.day_lo > w.day_hi || w.day_hi > self.total_days || w.day_lo == 0 {
                return Err(format!("window({},{},{}) out of range", w.city, w.day_lo, w.day_hi));
            }
        }
        for (a, b) in &self.flights {
            if !set.contains(a) || !set.contains(b) {
                return Err(format!("flight ({a}, {b}) references unknown city"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripSegment {
    pub city: String,
    pub day_lo: u32,
    pub day_hi: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripItinerary {
    pub segments: Vec<TripSegment>,
}

/// One friend to visit: location, availability window, and the minimum
/// meeting length (all times in minutes of day).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Friend {
    pub name: String,
    pub location: String,
    pub avail_lo: u32,
    pub avail_hi: u32,
    pub min_meet: u32,
}

/// Meeting coordination instance: maximize the number of friends met in
/// one day, respecting travel times and availability windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingProblem {
    pub base_location: String,
    pub friends: Vec<Friend>,
    /// Symmetric travel-time matrix in minutes, zero on the diagonal.
    pub travel: BTreeMap<String, BTreeMap<String, u32>>,
    pub day_span: (u32, u32),
    /// Number of friends a valid plan must meet (set to the optimum by
    /// the generator so verification can reject suboptimal plans).
    #[serde(default)]
    pub required_meetings: Option<usize>,
}

impl MeetingProblem {
    pub fn travel_time(&self, from: &str, to: &str) -> Option<u32> {
        if from == to {
            return Some(0);
        }
        self.travel.get(from).and_then(|row| row.get(to)).copied()
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut locations: BTreeSet<&str> = BTreeSet::new();
        locations.insert(self.base_location.as_str());
        for f in &self.friends {
            locations.insert(f.location.as_str());
            if f.avail_lo < self.day_span.0 || f.avail_hi > self.day_span.1 {
                return Err(format!("{}'s availability leaves the day span", f.name));
            }
            if f.avail_lo >= f.avail_hi {
                return Err(format!("{}'s availability window is empty", f.name));
            }
        }
        for a in &locations {
            for b in &locations {
                if a == b {
                    if self.travel_time(a, b) != Some(0) {
                        return Err(format!("travel diagonal for {a} must be zero"));
                    }
                    continue;
                }
                match self.travel_time(a, b) {
                    Some(_) => {}
                    None => return Err(format!("missing travel time {a} -> {b}")),
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub friend: String,
    pub t_start: u32,
    pub t_end: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingItinerary {
    pub visits: Vec<Visit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusyBlock {
    pub day: String,
    pub t_lo: u32,
    pub t_hi: u32,
}

/// Calendar scheduling instance, built by goal-solution fixing: a gold
/// slot is chosen first and the busy blocks are derived so the gold slot
/// is the earliest feasible one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarProblem {
    pub participants: Vec<String>,
    pub busy: BTreeMap<String, Vec<BusyBlock>>,
    pub meeting_len: u32,
    pub workday: (u32, u32),
    pub candidate_days: Vec<String>,
    /// Start-time grid for enumerating slots, in minutes.
    #[serde(default = "default_slot_step")]
    pub slot_step: u32,
    /// Whether a valid answer must be the earliest feasible slot.
    #[serde(default = "default_true")]
    pub require_earliest: bool,
    #[serde(default)]
    pub gold: Option<CalendarSlot>,
}

fn default_slot_step() -> u32 {
    30
}

fn default_true() -> bool {
    true
}

impl CalendarProblem {
    pub fn day_index(&self, day: &str) -> Option<usize> {
        self.candidate_days.iter().position(|d| d == day)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.meeting_len == 0 {
            return Err("meeting length must be positive".into());
        }
        if self.participants.is_empty() {
            return Err("no participants".into());
        }
        if self.candidate_days.is_empty() {
            return Err("no candidate days".into());
        }
        for (who, blocks) in &self.busy {
            if !self.participants.contains(who) {
                return Err(format!("busy blocks for unknown participant {who}"));
            }
            for b in blocks {
                if self.day_index(&b.day).is_none() {
                    return Err(format!("busy block on non-candidate day {}", b.day));
                }
                if b.t_lo < self.workday.0 || b.t_hi > self.workday.1 || b.t_lo >= b.t_hi {
                    return Err(format!(
                        "busy block {}..{} leaves the workday",
                        b.t_lo, b.t_hi
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarSlot {
    pub day: String,
    pub t_start: u32,
}

/// A scheduling CSP instance of any domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum ScheduleProblem {
    Trip(TripProblem),
    Meeting(MeetingProblem),
    Calendar(CalendarProblem),
}

impl ScheduleProblem {
    pub fn domain(&self) -> DomainKind {
        match self {
            ScheduleProblem::Trip(_) => DomainKind::Trip,
            ScheduleProblem::Meeting(_) => DomainKind::Meeting,
            ScheduleProblem::Calendar(_) => DomainKind::Calendar,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            ScheduleProblem::Trip(p) => p.validate(),
            ScheduleProblem::Meeting(p) => p.validate(),
            ScheduleProblem::Calendar(p) => p.validate(),
        }
    }
}

/// A candidate solution of any domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum Itinerary {
    Trip(TripItinerary),
    Meeting(MeetingItinerary),
    Calendar(CalendarSlot),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Trip,
    Meeting,
    Calendar,
}

impl FromStr for DomainKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "trip" => Ok(DomainKind::Trip),
            "meeting" => Ok(DomainKind::Meeting),
            "calendar" => Ok(DomainKind::Calendar),
            other => Err(format!("unknown schedule domain `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("instance too large for exhaustive solving: {0}")]
    TooLargeForExhaustive(String),
    #[error("candidate itinerary domain does not match the problem")]
    DomainMismatch,
    #[error("rejection sampling exhausted after {attempts} attempts")]
    ExhaustedRetries { attempts: u32 },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

/// Generation ranges for trip instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripParams {
    pub city_count: (usize, usize),
    pub duration_range: (u32, u32),
    pub window_count: (usize, usize),
    pub extra_flight_prob: f64,
}

impl Default for TripParams {
    fn default() -> Self {
        Self {
            city_count: (4, 6),
            duration_range: (2, 7),
            window_count: (1, 2),
            extra_flight_prob: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeetingParams {
    pub friend_count: (usize, usize),
    pub travel_range: (u32, u32),
    pub day_span: (u32, u32),
    pub min_meet_choices: Vec<u32>,
}

impl Default for MeetingParams {
    fn default() -> Self {
        Self {
            friend_count: (2, 4),
            travel_range: (5, 40),
            day_span: (540, 1260),
            min_meet_choices: vec![15, 30, 45, 60, 90],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalendarParams {
    pub participant_count: (usize, usize),
    pub day_count: (usize, usize),
    pub busy_per_participant: (usize, usize),
    pub meeting_len_choices: Vec<u32>,
    pub workday: (u32, u32),
    pub slot_step: u32,
}

impl Default for CalendarParams {
    fn default() -> Self {
        Self {
            participant_count: (2, 3),
            day_count: (1, 3),
            busy_per_participant: (1, 3),
            meeting_len_choices: vec![30, 60],
            workday: (540, 1020),
            slot_step: 30,
        }
    }
}

/// Generation parameters for all domains plus the uniqueness filter
/// switch (on by default; calendar uniqueness means a unique earliest
/// slot, which any feasible instance has).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub trip: TripParams,
    pub meeting: MeetingParams,
    pub calendar: CalendarParams,
    pub enforce_unique: Option<bool>,
    pub max_attempts: Option<u32>,
}

impl GenParams {
    pub fn enforce_unique(&self) -> bool {
        self.enforce_unique.unwrap_or(true)
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts.unwrap_or(400)
    }
}

/// A generated-and-accepted instance with its canonical solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedInstance {
    pub problem: ScheduleProblem,
    pub solution: Itinerary,
}

fn range_sample(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    if range.0 >= range.1 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}

/// Generate an instance of the requested domain, rejection-sampling until
/// the uniqueness filter accepts it.
pub fn generate_instance(
    domain: DomainKind,
    params: &GenParams,
    rng_seed: u64,
) -> Result<GeneratedInstance, ScheduleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let attempts = params.max_attempts();
    for _ in 0..attempts {
        let candidate = match domain {
            DomainKind::Trip => generate_trip(&params.trip, &mut rng),
            DomainKind::Meeting => generate_meeting(&params.meeting, &mut rng),
            DomainKind::Calendar => generate_calendar(&params.calendar, &mut rng),
        };
        let Some(problem) = candidate else { continue };
        problem
            .validate()
            .map_err(ScheduleError::InvalidInstance)?;
        let solutions = solve(&problem)?;
        if solutions.is_empty() {
            continue;
        }
        if params.enforce_unique() && !accept(&problem)? {
            continue;
        }
        let solution = solutions.into_iter().next().unwrap();
        debug_assert!(verify(&problem, &solution).is_empty());
        return Ok(GeneratedInstance { problem, solution });
    }
    Err(ScheduleError::ExhaustedRetries { attempts })
}

fn generate_trip(params: &TripParams, rng: &mut ChaCha8Rng) -> Option<ScheduleProblem> {
    let n = range_sample(rng, params.city_count).max(2);
    let mut cities: Vec<String> = CITIES.iter().map(|c| c.to_string()).collect();
    cities.shuffle(rng);
    cities.truncate(n);

    let mut durations = BTreeMap::new();
    let mut total = 0u32;
    for city in &cities {
        let d = rng.random_range(params.duration_range.0..=params.duration_range.1);
        durations.insert(city.clone(), d);
        total += d;
    }
    let total_days = total - (n as u32 - 1);

    // gold visiting order seeds the flight set, so feasibility is guaranteed
    let mut order = cities.clone();
    order.shuffle(rng);
    let mut flights = BTreeSet::new();
    for pair in order.windows(2) {
        flights.insert(TripProblem::flight_key(&pair[0], &pair[1]));
    }
    for i in 0..cities.len() {
        for j in i + 1..cities.len() {
            if rng.random_bool(params.extra_flight_prob) {
                flights.insert(TripProblem::flight_key(&cities[i], &cities[j]));
            }
        }
    }

    // windows pin cities to their gold segments
    let mut day = 1u32;
    let mut segments = Vec::new();
    for city in &order {
        let d = durations[city];
        segments.push(CityWindow {
            city: city.clone(),
            day_lo: day,
            day_hi: day + d - 1,
        });
        day += d - 1;
    }
    let wanted = range_sample(rng, params.window_count).min(segments.len());
    let mut pick: Vec<usize> = (0..segments.len()).collect();
    pick.shuffle(rng);
    let mut windows: Vec<CityWindow> = pick[..wanted]
        .iter()
        .map(|i| segments[*i].clone())
        .collect();
    windows.sort_by(|a, b| a.city.cmp(&b.city));

    Some(ScheduleProblem::Trip(TripProblem {
        cities,
        total_days,
        durations,
        flights,
        windows,
    }))
}

fn generate_meeting(params: &MeetingParams, rng: &mut ChaCha8Rng) -> Option<ScheduleProblem> {
    let k = range_sample(rng, params.friend_count).max(1);
    if k + 1 > DISTRICTS.len() || k > PEOPLE.len() {
        return None;
    }
    let mut locations: Vec<String> = DISTRICTS.iter().map(|s| s.to_string()).collect();
    locations.shuffle(rng);
    let base_location = locations[0].clone();
    let mut names: Vec<String> = PEOPLE.iter().map(|s| s.to_string()).collect();
    names.shuffle(rng);

    let span = params.day_span;
    let mut friends = Vec::new();
    for i in 0..k {
        let min_meet = *params.min_meet_choices.choose(rng).unwrap_or(&30);
        let latest_lo = span.1.saturating_sub(min_meet + 60);
        if latest_lo <= span.0 {
            return None;
        }
        let lo = span.0 + 15 * rng.random_range(0..=((latest_lo - span.0) / 15));
        let slack = 15 * rng.random_range(2..=16);
        let hi = (lo + min_meet + slack).min(span.1);
        friends.push(Friend {
            name: names[i].clone(),
            location: locations[i + 1].clone(),
            avail_lo: lo,
            avail_hi: hi,
            min_meet,
        });
    }

    let mut places: Vec<&String> = friends.iter().map(|f| &f.location).collect();
    places.push(&base_location);
    let mut travel: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for (i, a) in places.iter().enumerate() {
        for b in places.iter().skip(i + 1) {
            let minutes = rng.random_range(params.travel_range.0..=params.travel_range.1);
            travel
                .entry((*a).clone())
                .or_default()
                .insert((*b).clone(), minutes);
            travel
                .entry((*b).clone())
                .or_default()
                .insert((*a).clone(), minutes);
        }
    }

    let mut problem = MeetingProblem {
        base_location,
        friends,
        travel,
        day_span: span,
        required_meetings: None,
    };
    // fix the objective value so verification can reject suboptimal plans
    let maximizers = solve::solve_meeting(&problem).ok()?;
    let best = maximizers.first().map(|m| m.visits.len()).unwrap_or(0);
    if best < 2 {
        return None;
    }
    problem.required_meetings = Some(best);
    Some(ScheduleProblem::Meeting(problem))
}

fn generate_calendar(params: &CalendarParams, rng: &mut ChaCha8Rng) -> Option<ScheduleProblem> {
    let p = range_sample(rng, params.participant_count).clamp(1, PEOPLE.len());
    let mut names: Vec<String> = PEOPLE.iter().map(|s| s.to_string()).collect();
    names.shuffle(rng);
    names.truncate(p);
    names.sort();

    let d = range_sample(rng, params.day_count).clamp(1, WEEKDAYS.len());
    let candidate_days: Vec<String> = WEEKDAYS[..d].iter().map(|s| s.to_string()).collect();

    let meeting_len = *params.meeting_len_choices.choose(rng).unwrap_or(&30);
    let (work_lo, work_hi) = params.workday;
    let step = params.slot_step.max(15);
    if work_lo + meeting_len > work_hi {
        return None;
    }

    // goal-solution fixing: pick the gold slot first
    let slots_per_day = (work_hi - meeting_len - work_lo) / step + 1;
    let gold_day = rng.random_range(0..candidate_days.len());
    let gold_t = work_lo + step * rng.random_range(0..slots_per_day);
    let gold = CalendarSlot {
        day: candidate_days[gold_day].clone(),
        t_start: gold_t,
    };

    let overlaps = |a_lo: u32, a_hi: u32, b_lo: u32, b_hi: u32| a_lo < b_hi && b_lo < a_hi;
    let mut busy: BTreeMap<String, Vec<BusyBlock>> = BTreeMap::new();
    for name in &names {
        let blocks = busy.entry(name.clone()).or_default();
        let count = range_sample(rng, params.busy_per_participant);
        for _ in 0..count {
            let len = step * rng.random_range(1..=3);
            if work_lo + len > work_hi {
                continue;
            }
            let lo = work_lo + step * rng.random_range(0..=((work_hi - len - work_lo) / step));
            let day = candidate_days[rng.random_range(0..candidate_days.len())].clone();
            if day == gold.day && overlaps(lo, lo + len, gold_t, gold_t + meeting_len) {
                continue; // never cover the gold slot
            }
            blocks.push(BusyBlock {
                day,
                t_lo: lo,
                t_hi: lo + len,
            });
        }
    }

    let mut problem = CalendarProblem {
        participants: names.clone(),
        busy,
        meeting_len,
        workday: params.workday,
        candidate_days: candidate_days.clone(),
        slot_step: step,
        require_earliest: true,
        gold: Some(gold.clone()),
    };

    // derive extra constraints until the gold slot is the earliest feasible one
    loop {
        let slots = solve::solve_calendar(&problem).ok()?;
        let earliest = slots.first()?;
        if earliest == &gold {
            break;
        }
        // block the earliest slot for one participant, without touching gold
        let who = names[rng.random_range(0..names.len())].clone();
        let cap = if earliest.day == gold.day && earliest.t_start < gold_t {
            gold_t.min(earliest.t_start + problem.meeting_len)
        } else {
            earliest.t_start + problem.meeting_len
        };
        if cap <= earliest.t_start {
            return None;
        }
        problem.busy.entry(who).or_default().push(BusyBlock {
            day: earliest.day.clone(),
            t_lo: earliest.t_start,
            t_hi: cap,
        });
    }
    Some(ScheduleProblem::Calendar(problem))
}
