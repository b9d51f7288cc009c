//! Natural-language rendering of accepted instances and the inverse
//! parsers that recover itineraries from answer text.

use super::*;
use std::sync::OnceLock;

/// A rendered training sample: user prompt plus canonical answer text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedSample {
    pub prompt: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("itinerary parse error: {message}")]
pub struct ItineraryParseError {
    pub message: String,
}

fn hhmm(minutes: u32) -> String {
    format!("{}:{:02}", minutes / 60, minutes % 60)
}

fn parse_hhmm(h: &str, m: &str) -> u32 {
    h.parse::<u32>().unwrap_or(0) * 60 + m.parse::<u32>().unwrap_or(0)
}

/// The constraint sentences of an instance, one per constraint. The
/// prompt is assembled from exactly this list, so every constraint is
/// enumerated exactly once.
pub fn constraint_sentences(problem: &ScheduleProblem) -> Vec<String> {
    match problem {
        ScheduleProblem::Trip(p) => {
            let mut out = Vec::new();
            for w in &p.windows {
                out.push(format!(
                    "You must be in {} between day {} and day {} of your trip.",
                    w.city, w.day_lo, w.day_hi
                ));
            }
            for city in &p.cities {
                out.push(format!(
                    "You want to stay in {} for {} days.",
                    city, p.durations[city]
                ));
            }
            out
        }
        ScheduleProblem::Meeting(p) => {
            let mut out = Vec::new();
            for f in &p.friends {
                out.push(format!(
                    "{} will be at {} from {} to {}.",
                    f.name,
                    f.location,
                    hhmm(f.avail_lo),
                    hhmm(f.avail_hi)
                ));
                out.push(format!(
                    "You would like to meet {} for at least {} minutes.",
                    f.name, f.min_meet
                ));
            }
            let mut seen = BTreeSet::new();
            for (a, row) in &p.travel {
                for (b, minutes) in row {
                    let key = if a <= b { (a, b) } else { (b, a) };
                    if seen.insert(key) {
                        out.push(format!(
                            "It takes {minutes} minutes to travel between {} and {}.",
                            key.0, key.1
                        ));
                    }
                }
            }
            out
        }
        ScheduleProblem::Calendar(p) => {
            let mut out = Vec::new();
            let mut seen = BTreeSet::new();
            for who in &p.participants {
                if let Some(blocks) = p.busy.get(who) {
                    for b in blocks {
                        let sentence = format!(
                            "{} is busy on {} from {} to {}.",
                            who,
                            b.day,
                            hhmm(b.t_lo),
                            hhmm(b.t_hi)
                        );
                        if seen.insert(sentence.clone()) {
                            out.push(sentence);
                        }
                    }
                }
            }
            out
        }
    }
}

/// Render the user prompt and the canonical answer for an accepted
/// instance. Rendering is a pure function of (problem, solution).
pub fn render_nl(problem: &ScheduleProblem, solution: &Itinerary) -> RenderedSample {
    match (problem, solution) {
        (ScheduleProblem::Trip(p), Itinerary::Trip(it)) => render_trip(p, it),
        (ScheduleProblem::Meeting(p), Itinerary::Meeting(it)) => render_meeting(p, it),
        (ScheduleProblem::Calendar(p), Itinerary::Calendar(slot)) => render_calendar(p, slot),
        _ => RenderedSample {
            prompt: String::new(),
            answer: String::new(),
        },
    }
}

fn render_trip(p: &TripProblem, it: &TripItinerary) -> RenderedSample {
    let mut prompt = format!(
        "You plan to visit {} global cities for {} days in total. \
         You only take direct flights to commute between cities. ",
        p.cities.len(),
        p.total_days
    );
    prompt.push_str(
        &constraint_sentences(&ScheduleProblem::Trip(p.clone())).join(" "),
    );
    prompt.push_str("\n\nHere are the cities that have direct flights:\n");
    let pairs: Vec<String> = p
        .flights
        .iter()
        .map(|(a, b)| format!("{a} and {b}"))
        .collect();
    prompt.push_str(&pairs.join(", "));
    prompt.push('.');
    prompt.push_str(&format!(
        "\n\nFind a trip plan of visiting the cities for {} days by taking direct flights to commute between them.",
        p.total_days
    ));

    let mut answer = format!(
        "Here is the trip plan for visiting the {} cities for {} days:\n",
        p.cities.len(),
        p.total_days
    );
    for (i, seg) in it.segments.iter().enumerate() {
        let d = seg.day_hi - seg.day_lo + 1;
        if i == 0 {
            answer.push_str(&format!(
                "**Day {}-{}:** Arriving in {} and visit {} for {} days.\n",
                seg.day_lo, seg.day_hi, seg.city, seg.city, d
            ));
        } else {
            answer.push_str(&format!(
                "**Day {}-{}:** Visit {} for {} days.\n",
                seg.day_lo, seg.day_hi, seg.city, d
            ));
        }
        if let Some(next) = it.segments.get(i + 1) {
            answer.push_str(&format!(
                "**Day {}:** Fly from {} to {}.\n",
                seg.day_hi, seg.city, next.city
            ));
        }
    }
    RenderedSample {
        prompt,
        answer: answer.trim_end().to_string(),
    }
}

fn render_meeting(p: &MeetingProblem, it: &MeetingItinerary) -> RenderedSample {
    let mut prompt = format!(
        "You are visiting {} for the day and want to meet as many friends as possible. \
         You arrive at {} at {}. ",
        p.base_location,
        p.base_location,
        hhmm(p.day_span.0)
    );
    prompt.push_str(&constraint_sentences(&ScheduleProblem::Meeting(p.clone())).join(" "));
    prompt.push_str(
        "\n\nPlan a day that maximizes the number of friends you can meet.",
    );

    let mut answer = format!(
        "Here is the meeting plan:\nYou start at {} at {}.\n",
        p.base_location,
        hhmm(p.day_span.0)
    );
    let mut location = p.base_location.as_str();
    for visit in &it.visits {
        let friend = p
            .friends
            .iter()
            .find(|f| f.name == visit.friend)
            .expect("visit references a known friend");
        let travel = p.travel_time(location, &friend.location).unwrap_or(0);
        answer.push_str(&format!(
            "Travel to {} ({} minutes). Meet {} from {} to {}.\n",
            friend.location,
            travel,
            friend.name,
            hhmm(visit.t_start),
            hhmm(visit.t_end)
        ));
        location = friend.location.as_str();
    }
    RenderedSample {
        prompt,
        answer: answer.trim_end().to_string(),
    }
}

fn render_calendar(p: &CalendarProblem, slot: &CalendarSlot) -> RenderedSample {
    let days = p.candidate_days.join(", ");
    let mut prompt = format!(
        "You need to schedule a {}-minute meeting for {} on {}. \
         Working hours are {} to {}. ",
        p.meeting_len,
        p.participants.join(", "),
        days,
        hhmm(p.workday.0),
        hhmm(p.workday.1)
    );
    prompt.push_str(&constraint_sentences(&ScheduleProblem::Calendar(p.clone())).join(" "));
    if p.require_earliest {
        prompt.push_str("\n\nFind the earliest time slot that works for everyone.");
    } else {
        prompt.push_str("\n\nFind a time slot that works for everyone.");
    }

    let answer = format!(
        "Here is the proposed time: {}, {} - {}.",
        slot.day,
        hhmm(slot.t_start),
        hhmm(slot.t_start + p.meeting_len)
    );
    RenderedSample { prompt, answer }
}

/// Recover an itinerary from free answer text, using the problem to
/// resolve entity names.
pub fn parse_itinerary(
    problem: &ScheduleProblem,
    text: &str,
) -> Result<Itinerary, ItineraryParseError> {
    match problem {
        ScheduleProblem::Trip(p) => parse_trip_answer(p, text).map(Itinerary::Trip),
        ScheduleProblem::Meeting(p) => parse_meeting_answer(p, text).map(Itinerary::Meeting),
        ScheduleProblem::Calendar(p) => parse_calendar_answer(p, text).map(Itinerary::Calendar),
    }
}

fn day_range_re() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"\*\*Day\s+(\d+)\s*-\s*(\d+)\s*:?\*\*(.*)").unwrap())
}

fn parse_trip_answer(p: &TripProblem, text: &str) -> Result<TripItinerary, ItineraryParseError> {
    // longest city names first, so one name being a substring of another
    // cannot misattribute a segment
    let mut cities: Vec<&String> = p.cities.iter().collect();
    cities.sort_by_key(|c| std::cmp::Reverse(c.len()));

    let mut segments = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if let Some(caps) = day_range_re().captures(line) {
            let day_lo: u32 = caps[1].parse().map_err(|_| ItineraryParseError {
                message: format!("bad day number in `{line}`"),
            })?;
            let day_hi: u32 = caps[2].parse().map_err(|_| ItineraryParseError {
                message: format!("bad day number in `{line}`"),
            })?;
            let rest = &caps[3];
            let city = cities
                .iter()
                .find(|c| rest.contains(c.as_str()))
                .ok_or_else(|| ItineraryParseError {
                    message: format!("no known city mentioned in `{line}`"),
                })?;
            segments.push(TripSegment {
                city: (*city).clone(),
                day_lo,
                day_hi,
            });
        }
    }
    if segments.is_empty() {
        return Err(ItineraryParseError {
            message: "no `**Day a-b:**` segments found".into(),
        });
    }
    Ok(TripItinerary { segments })
}

fn parse_meeting_answer(
    p: &MeetingProblem,
    text: &str,
) -> Result<MeetingItinerary, ItineraryParseError> {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        regex::Regex::new(r"[Mm]eet\s+(\S+)\s+from\s+(\d{1,2}):(\d{2})\s+to\s+(\d{1,2}):(\d{2})")
            .unwrap()
    });
    let mut visits = Vec::new();
    for caps in re.captures_iter(text) {
        let name = caps[1].trim_end_matches(|c: char| !c.is_alphanumeric());
        if !p.friends.iter().any(|f| f.name == name) {
            return Err(ItineraryParseError {
                message: format!("unknown friend `{name}` in answer"),
            });
        }
        visits.push(Visit {
            friend: name.to_string(),
            t_start: parse_hhmm(&caps[2], &caps[3]),
            t_end: parse_hhmm(&caps[4], &caps[5]),
        });
    }
    if visits.is_empty() {
        return Err(ItineraryParseError {
            message: "no `Meet <name> from <t> to <t>` visits found".into(),
        });
    }
    Ok(MeetingItinerary { visits })
}

fn parse_calendar_answer(
    p: &CalendarProblem,
    text: &str,
) -> Result<CalendarSlot, ItineraryParseError> {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        regex::Regex::new(r"([A-Za-z]+)\s*,\s*(\d{1,2}):(\d{2})\s*-\s*(\d{1,2}):(\d{2})").unwrap()
    });
    for caps in re.captures_iter(text) {
        let day = &caps[1];
        if p.candidate_days.iter().any(|d| d == day) {
            return Ok(CalendarSlot {
                day: day.to_string(),
                t_start: parse_hhmm(&caps[2], &caps[3]),
            });
        }
    }
    Err(ItineraryParseError {
        message: "no `<day>, <t> - <t>` slot found".into(),
    })
}
