//! Exhaustive solving, constraint verification, and the uniqueness filter.
//!
//! Solvers enumerate the full search space under hard size caps; nothing
//! here approximates. Verification checks every constraint class
//! independently and reports violations as data.

use super::*;

const MAX_TRIP_CITIES: usize = 8;
const MAX_MEETING_FRIENDS: usize = 8;
const MAX_CALENDAR_DAYS: usize = 7;

/// All solutions of an instance.
///
/// Trips: every city permutation consistent with flights and windows.
/// Meetings: every visit order that meets the maximum number of friends.
/// Calendar: every feasible slot on the start-time grid, earliest first.
pub fn solve(problem: &ScheduleProblem) -> Result<Vec<Itinerary>, ScheduleError> {
    match problem {
        ScheduleProblem::Trip(p) => {
            Ok(solve_trip(p)?.into_iter().map(Itinerary::Trip).collect())
        }
        ScheduleProblem::Meeting(p) => Ok(solve_meeting(p)?
            .into_iter()
            .map(Itinerary::Meeting)
            .collect()),
        ScheduleProblem::Calendar(p) => Ok(solve_calendar(p)?
            .into_iter()
            .map(Itinerary::Calendar)
            .collect()),
    }
}

/// Uniqueness filter: keep only instances whose solution is unique
/// (trips, meetings) or uniquely optimal (calendar, where the earliest
/// feasible slot is the optimum and is unique whenever one exists).
pub fn accept(problem: &ScheduleProblem) -> Result<bool, ScheduleError> {
    Ok(match problem {
        ScheduleProblem::Trip(p) => solve_trip(p)?.len() == 1,
        ScheduleProblem::Meeting(p) => solve_meeting(p)?.len() == 1,
        ScheduleProblem::Calendar(p) => !solve_calendar(p)?.is_empty(),
    })
}

pub(super) fn solve_trip(problem: &TripProblem) -> Result<Vec<TripItinerary>, ScheduleError> {
    if problem.cities.len() > MAX_TRIP_CITIES {
        return Err(ScheduleError::TooLargeForExhaustive(format!(
            "{} cities > {MAX_TRIP_CITIES}",
            problem.cities.len()
        )));
    }
    let mut out = Vec::new();
    let mut order: Vec<usize> = Vec::with_capacity(problem.cities.len());
    let mut used = vec![false; problem.cities.len()];
    permute_trip(problem, &mut order, &mut used, &mut out);
    Ok(out)
}

fn permute_trip(
    problem: &TripProblem,
    order: &mut Vec<usize>,
    used: &mut [bool],
    out: &mut Vec<TripItinerary>,
) {
    let n = problem.cities.len();
    if order.len() == n {
        if let Some(itin) = realize_trip(problem, order) {
            out.push(itin);
        }
        return;
    }
    for i in 0..n {
        if used[i] {
            continue;
        }
        if let Some(&last) = order.last() {
            if !problem.has_flight(&problem.cities[last], &problem.cities[i]) {
                continue; // prune: no direct flight
            }
        }
        used[i] = true;
        order.push(i);
        permute_trip(problem, order, used, out);
        order.pop();
        used[i] = false;
    }
}

fn realize_trip(problem: &TripProblem, order: &[usize]) -> Option<TripItinerary> {
    let mut segments = Vec::with_capacity(order.len());
    let mut day = 1u32;
    for &idx in order {
        let city = &problem.cities[idx];
        let d = problem.durations[city];
        let seg = TripSegment {
            city: city.clone(),
            day_lo: day,
            day_hi: day + d - 1,
        };
        day = seg.day_hi;
        segments.push(seg);
    }
    for w in &problem.windows {
        let seg = segments.iter().find(|s| s.city == w.city)?;
        if !(seg.day_lo <= w.day_lo && w.day_hi <= seg.day_hi) {
            return None;
        }
    }
    Some(TripItinerary { segments })
}

pub(super) fn solve_meeting(
    problem: &MeetingProblem,
) -> Result<Vec<MeetingItinerary>, ScheduleError> {
    if problem.friends.len() > MAX_MEETING_FRIENDS {
        return Err(ScheduleError::TooLargeForExhaustive(format!(
            "{} friends > {MAX_MEETING_FRIENDS}",
            problem.friends.len()
        )));
    }
    let mut sequences: Vec<Vec<Visit>> = Vec::new();
    let mut used = vec![false; problem.friends.len()];
    let mut visits: Vec<Visit> = Vec::new();
    dfs_meeting(
        problem,
        &problem.base_location,
        problem.day_span.0,
        &mut used,
        &mut visits,
        &mut sequences,
    );
    let best = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
    Ok(sequences
        .into_iter()
        .filter(|s| s.len() == best)
        .map(|visits| MeetingItinerary { visits })
        .collect())
}

fn dfs_meeting(
    problem: &MeetingProblem,
    location: &str,
    time: u32,
    used: &mut [bool],
    visits: &mut Vec<Visit>,
    sequences: &mut Vec<Vec<Visit>>,
) {
    sequences.push(visits.clone());
    for (i, friend) in problem.friends.iter().enumerate() {
        if used[i] {
            continue;
        }
        let Some(travel) = problem.travel_time(location, &friend.location) else {
            continue;
        };
        // greedy-earliest: arrive, wait for the window, meet for the minimum
        let t_start = (time + travel).max(friend.avail_lo);
        let t_end = t_start + friend.min_meet;
        if t_end > friend.avail_hi || t_end > problem.day_span.1 {
            continue;
        }
        used[i] = true;
        visits.push(Visit {
            friend: friend.name.clone(),
            t_start,
            t_end,
        });
        dfs_meeting(problem, &friend.location, t_end, used, visits, sequences);
        visits.pop();
        used[i] = false;
    }
}

pub(super) fn solve_calendar(
    problem: &CalendarProblem,
) -> Result<Vec<CalendarSlot>, ScheduleError> {
    if problem.candidate_days.len() > MAX_CALENDAR_DAYS {
        return Err(ScheduleError::TooLargeForExhaustive(format!(
            "{} candidate days > {MAX_CALENDAR_DAYS}",
            problem.candidate_days.len()
        )));
    }
    let step = problem.slot_step.max(1);
    let (lo, hi) = problem.workday;
    if lo + problem.meeting_len > hi {
        return Ok(Vec::new());
    }
    let mut slots = Vec::new();
    for day in &problem.candidate_days {
        let mut t = lo;
        while t + problem.meeting_len <= hi {
            if calendar_slot_free(problem, day, t) {
                slots.push(CalendarSlot {
                    day: day.clone(),
                    t_start: t,
                });
            }
            t += step;
        }
    }
    Ok(slots)
}

fn calendar_slot_free(problem: &CalendarProblem, day: &str, t: u32) -> bool {
    let end = t + problem.meeting_len;
    problem.participants.iter().all(|who| {
        problem
            .busy
            .get(who)
            .map(|blocks| {
                blocks
                    .iter()
                    .all(|b| b.day != day || b.t_hi <= t || end <= b.t_lo)
            })
            .unwrap_or(true)
    })
}

/// Check a candidate against every constraint class independently.
/// Violations name the constraint and its binding; empty means valid.
pub fn verify(problem: &ScheduleProblem, candidate: &Itinerary) -> Vec<String> {
    match (problem, candidate) {
        (ScheduleProblem::Trip(p), Itinerary::Trip(it)) => verify_trip(p, it),
        (ScheduleProblem::Meeting(p), Itinerary::Meeting(it)) => verify_meeting(p, it),
        (ScheduleProblem::Calendar(p), Itinerary::Calendar(slot)) => verify_calendar(p, slot),
        _ => vec!["domain mismatch between problem and candidate".into()],
    }
}

fn verify_trip(problem: &TripProblem, itinerary: &TripItinerary) -> Vec<String> {
    let mut violations = Vec::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for seg in &itinerary.segments {
        if !problem.cities.contains(&seg.city) {
            violations.push(format!("visit({}): city not in the instance", seg.city));
        } else if !seen.insert(seg.city.as_str()) {
            violations.push(format!("visit({}): city visited twice", seg.city));
        }
    }
    for city in &problem.cities {
        if !seen.contains(city.as_str()) {
            violations.push(format!("visit({city}): city never visited"));
        }
    }

    if let Some(first) = itinerary.segments.first() {
        if first.day_lo != 1 {
            violations.push("coverage: trip does not start on day 1".into());
        }
    } else {
        violations.push("coverage: empty itinerary".into());
    }
    if let Some(last) = itinerary.segments.last() {
        if last.day_hi != problem.total_days {
            violations.push(format!(
                "coverage: trip ends on day {} instead of day {}",
                last.day_hi, problem.total_days
            ));
        }
    }
    for pair in itinerary.segments.windows(2) {
        if pair[1].day_lo != pair[0].day_hi {
            violations.push(format!(
                "continuity({} -> {}): segments must share the fly day",
                pair[0].city, pair[1].city
            ));
        }
        if !problem.has_flight(&pair[0].city, &pair[1].city) {
            violations.push(format!(
                "no direct flight ({} - {})",
                pair[0].city, pair[1].city
            ));
        }
    }
    for seg in &itinerary.segments {
        if seg.day_hi < seg.day_lo {
            violations.push(format!("segment({}): negative length", seg.city));
            continue;
        }
        if let Some(&d) = problem.durations.get(&seg.city) {
            let actual = seg.day_hi - seg.day_lo + 1;
            if actual != d {
                violations.push(format!("duration({},{d}): stayed {actual} days", seg.city));
            }
        }
    }
    for w in &problem.windows {
        let ok = itinerary
            .segments
            .iter()
            .any(|s| s.city == w.city && s.day_lo <= w.day_lo && w.day_hi <= s.day_hi);
        if !ok {
            violations.push(format!("window({},{},{})", w.city, w.day_lo, w.day_hi));
        }
    }
    violations
}

fn verify_meeting(problem: &MeetingProblem, itinerary: &MeetingItinerary) -> Vec<String> {
    let mut violations = Vec::new();
    let mut location = problem.base_location.as_str();
    let mut time = problem.day_span.0;
    let mut met: BTreeSet<&str> = BTreeSet::new();
    for visit in &itinerary.visits {
        let Some(friend) = problem.friends.iter().find(|f| f.name == visit.friend) else {
            violations.push(format!("visit({}): unknown friend", visit.friend));
            continue;
        };
        if !met.insert(friend.name.as_str()) {
            violations.push(format!("visit({}): met twice", friend.name));
        }
        match problem.travel_time(location, &friend.location) {
            Some(travel) => {
                if visit.t_start < time + travel {
                    violations.push(format!(
                        "travel({} -> {}, {travel} min): start {} is too early",
                        location, friend.location, visit.t_start
                    ));
                }
            }
            None => violations.push(format!(
                "travel({} -> {}): no travel time known",
                location, friend.location
            )),
        }
        if visit.t_start < friend.avail_lo || visit.t_end > friend.avail_hi {
            violations.push(format!(
                "avail({},{},{})",
                friend.name, friend.avail_lo, friend.avail_hi
            ));
        }
        if visit.t_end < visit.t_start + friend.min_meet {
            violations.push(format!("min_meet({},{})", friend.name, friend.min_meet));
        }
        if visit.t_end > problem.day_span.1 {
            violations.push(format!(
                "day_span({},{})",
                problem.day_span.0, problem.day_span.1
            ));
        }
        location = friend.location.as_str();
        time = visit.t_end;
    }
    if let Some(required) = problem.required_meetings {
        if itinerary.visits.len() < required {
            violations.push(format!(
                "meet_count({required}): only {} friends met",
                itinerary.visits.len()
            ));
        }
    }
    violations
}

fn verify_calendar(problem: &CalendarProblem, slot: &CalendarSlot) -> Vec<String> {
    let mut violations = Vec::new();
    if problem.day_index(&slot.day).is_none() {
        violations.push(format!("candidate_day({}): not offered", slot.day));
        return violations;
    }
    let end = slot.t_start + problem.meeting_len;
    if slot.t_start < problem.workday.0 || end > problem.workday.1 {
        violations.push(format!(
            "workday({},{})",
            problem.workday.0, problem.workday.1
        ));
    }
    for who in &problem.participants {
        if let Some(blocks) = problem.busy.get(who) {
            for b in blocks {
                if b.day == slot.day && b.t_lo < end && slot.t_start < b.t_hi {
                    violations.push(format!("busy({who},{},{},{})", b.day, b.t_lo, b.t_hi));
                }
            }
        }
    }
    if problem.require_earliest && violations.is_empty() {
        if let Ok(slots) = solve_calendar(problem) {
            if let Some(earliest) = slots.first() {
                let candidate_rank = (
                    problem.day_index(&slot.day).unwrap_or(usize::MAX),
                    slot.t_start,
                );
                let earliest_rank =
                    (problem.day_index(&earliest.day).unwrap(), earliest.t_start);
                if candidate_rank > earliest_rank {
                    violations.push(format!(
                        "earliest({},{}): an earlier slot is free",
                        earliest.day, earliest.t_start
                    ));
                }
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_city_problem(with_flight: bool) -> TripProblem {
        let mut flights = BTreeSet::new();
        if with_flight {
            flights.insert(TripProblem::flight_key("Oslo", "Paris"));
        }
        TripProblem {
            cities: vec!["Oslo".into(), "Paris".into()],
            total_days: 5,
            durations: [("Oslo".to_string(), 3u32), ("Paris".to_string(), 3u32)]
                .into_iter()
                .collect(),
            flights,
            windows: vec![],
        }
    }

    #[test]
    fn two_city_symmetric_instance_has_two_solutions() {
        let p = ScheduleProblem::Trip(two_city_problem(true));
        assert_eq!(solve(&p).unwrap().len(), 2);
        assert!(!accept(&p).unwrap());
    }

    #[test]
    fn no_flight_means_no_solution() {
        let p = ScheduleProblem::Trip(two_city_problem(false));
        assert!(solve(&p).unwrap().is_empty());
        assert!(!accept(&p).unwrap());
    }

    #[test]
    fn window_pins_the_order() {
        let mut trip = two_city_problem(true);
        trip.windows.push(CityWindow {
            city: "Oslo".into(),
            day_lo: 1,
            day_hi: 3,
        });
        let p = ScheduleProblem::Trip(trip);
        let solutions = solve(&p).unwrap();
        assert_eq!(solutions.len(), 1);
        assert!(accept(&p).unwrap());
        let Itinerary::Trip(it) = &solutions[0] else {
            panic!()
        };
        assert_eq!(it.segments[0].city, "Oslo");
    }

    #[test]
    fn metamorphic_window_addition() {
        // a window satisfied by the unique solution changes nothing;
        // a window violated by it makes the instance infeasible
        let mut trip = two_city_problem(true);
        trip.windows.push(CityWindow {
            city: "Oslo".into(),
            day_lo: 1,
            day_hi: 3,
        });
        let base = solve(&ScheduleProblem::Trip(trip.clone())).unwrap();
        assert_eq!(base.len(), 1);

        let mut satisfied = trip.clone();
        satisfied.windows.push(CityWindow {
            city: "Paris".into(),
            day_lo: 3,
            day_hi: 5,
        });
        assert_eq!(solve(&ScheduleProblem::Trip(satisfied)).unwrap(), base);

        let mut violated = trip.clone();
        violated.windows.push(CityWindow {
            city: "Paris".into(),
            day_lo: 1,
            day_hi: 2,
        });
        assert!(solve(&ScheduleProblem::Trip(violated)).unwrap().is_empty());
    }

    #[test]
    fn verify_names_the_violated_constraint() {
        let trip = two_city_problem(true);
        let bad = Itinerary::Trip(TripItinerary {
            segments: vec![
                TripSegment { city: "Oslo".into(), day_lo: 1, day_hi: 3 },
                TripSegment { city: "Paris".into(), day_lo: 4, day_hi: 6 },
            ],
        });
        let violations = verify(&ScheduleProblem::Trip(trip), &bad);
        assert!(violations.iter().any(|v| v.contains("continuity")));
        assert!(violations.iter().any(|v| v.contains("coverage")));
    }

    #[test]
    fn round_trip_verify_on_generated_instances() {
        for seed in 100..130 {
            let inst = generate_instance(DomainKind::Trip, &GenParams::default(), seed).unwrap();
            let solutions = solve(&inst.problem).unwrap();
            assert_eq!(solutions.len(), 1);
            assert!(verify(&inst.problem, &solutions[0]).is_empty());
        }
    }

    #[test]
    fn meeting_solver_respects_travel_and_windows() {
        let problem = MeetingProblem {
            base_location: "Nob Hill".into(),
            friends: vec![
                Friend {
                    name: "Alice".into(),
                    location: "Chinatown".into(),
                    avail_lo: 560,
                    avail_hi: 700,
                    min_meet: 60,
                },
                Friend {
                    name: "Brian".into(),
                    location: "Marina District".into(),
                    avail_lo: 720,
                    avail_hi: 900,
                    min_meet: 45,
                },
            ],
            travel: [
                ("Nob Hill", "Chinatown", 10),
                ("Nob Hill", "Marina District", 20),
                ("Chinatown", "Marina District", 15),
            ]
            .into_iter()
            .flat_map(|(a, b, m)| {
                [
                    (a.to_string(), b.to_string(), m),
                    (b.to_string(), a.to_string(), m),
                ]
            })
            .fold(
                BTreeMap::<String, BTreeMap<String, u32>>::new(),
                |mut acc, (a, b, m)| {
                    acc.entry(a).or_default().insert(b, m);
                    acc
                },
            ),
            day_span: (540, 1260),
            required_meetings: None,
        };
        let maximizers = solve_meeting(&problem).unwrap();
        assert_eq!(maximizers.len(), 1);
        let best = &maximizers[0];
        assert_eq!(best.visits.len(), 2);
        // greedy earliest: arrive Chinatown at 550, wait to 560, meet to 620
        assert_eq!(best.visits[0].t_start, 560);
        assert_eq!(best.visits[0].t_end, 620);
        // arrive Marina at 635, wait to 720
        assert_eq!(best.visits[1].t_start, 720);
        let p = ScheduleProblem::Meeting(problem);
        assert!(verify(&p, &Itinerary::Meeting(best.clone())).is_empty());
    }

    #[test]
    fn calendar_verify_rejects_non_earliest_slot() {
        let problem = CalendarProblem {
            participants: vec!["Alice".into()],
            busy: BTreeMap::new(),
            meeting_len: 30,
            workday: (540, 660),
            candidate_days: vec!["Monday".into()],
            slot_step: 30,
            require_earliest: true,
            gold: None,
        };
        let p = ScheduleProblem::Calendar(problem);
        let ok = Itinerary::Calendar(CalendarSlot { day: "Monday".into(), t_start: 540 });
        assert!(verify(&p, &ok).is_empty());
        let late = Itinerary::Calendar(CalendarSlot { day: "Monday".into(), t_start: 600 });
        let violations = verify(&p, &late);
        assert!(violations.iter().any(|v| v.contains("earliest")), "{violations:?}");
    }
}
