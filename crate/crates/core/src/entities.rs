//! Predefined entity database used by the deterministic generators:
//! city/person/location names, a demo tool catalog with deliberate
//! dependency and parameter-sharing structure, and a pool of gold plans
//! for workflow synthesis.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::{OutputField, Tool, ToolCatalog, ToolParameter};
use crate::workflow::GoldPlan;

pub const CITIES: &[&str] = &[
    "Nairobi", "Miami", "Vienna", "Dubrovnik", "Hamburg", "Paris", "Tokyo", "Sydney", "Cairo",
    "Lima", "Oslo", "Madrid", "Seoul", "Toronto", "Reykjavik", "Athens", "Lisbon", "Krakow",
    "Santiago", "Tallinn",
];

pub const PEOPLE: &[&str] = &[
    "Alice", "Brian", "Carol", "Daniel", "Elena", "Frank", "Grace", "Hassan", "Irene", "Jonas",
    "Karen", "Liam",
];

/// Districts used as meeting locations.
pub const DISTRICTS: &[&str] = &[
    "Mission District", "Chinatown", "Marina District", "Russian Hill", "Sunset District",
    "Financial District", "Nob Hill", "Haight-Ashbury", "North Beach", "Pacific Heights",
];

pub const WEEKDAYS: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];

pub const APPS: &[&str] = &["TripGo", "ShopCart", "MailBox", "CineHall", "TuneBox"];

const HOTELS: &[&str] = &[
    "Lakeside Hotel", "Grand Meridian", "Harbor View Inn", "Old Town Lodge", "Summit Suites",
];

const SEARCH_PHRASES: &[&str] = &[
    "restaurants near the hotel",
    "coffee shops open late",
    "noise cancelling headphones",
    "weekend hiking trails",
    "documentary films this month",
];

const PAYMENT_METHODS: &[&str] = &["credit card", "debit card", "wallet balance"];

/// Synthesize a plausible value for a parameter, keyed by its name.
/// Deterministic for a fixed RNG state.
pub fn value_for_param(name: &str, semantic_type: &str, rng: &mut ChaCha8Rng) -> String {
    let lower = name.to_lowercase();
    let pick = |list: &[&str], rng: &mut ChaCha8Rng| (*list.choose(rng).unwrap()).to_string();
    if lower.contains("city") || lower.contains("origin") || lower.contains("destination") {
        return pick(CITIES, rng);
    }
    if lower.contains("date") {
        return format!(
            "2026-{:02}-{:02}",
            rng.random_range(1..=12),
            rng.random_range(1..=28)
        );
    }
    if lower.contains("time") {
        return format!("{:02}:{:02}", rng.random_range(8..=20), 15 * rng.random_range(0..4));
    }
    if lower.contains("app") {
        return pick(APPS, rng);
    }
    if lower.contains("hotel") {
        return pick(HOTELS, rng);
    }
    if lower.contains("search_info") || lower.contains("keyword") || lower.contains("query") {
        return pick(SEARCH_PHRASES, rng);
    }
    if lower.contains("payment") {
        return pick(PAYMENT_METHODS, rng);
    }
    if lower.contains("email") || lower.contains("recipient") || lower.contains("sender") {
        let person = pick(PEOPLE, rng).to_lowercase();
        return format!("{person}@example.com");
    }
    if lower.contains("name") || lower.contains("passenger") || lower.contains("artist") {
        return pick(PEOPLE, rng);
    }
    if lower.contains("number") || lower.contains("count") || lower.contains("quantity") {
        return rng.random_range(1..=4).to_string();
    }
    if lower.contains("id") {
        const ALPHABET: &[u8] = b"ABCDEFGHJKMNPQRSTUVWXYZ23456789";
        return (0..6)
            .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
            .collect();
    }
    if lower.contains("order_type") || lower.contains("sort") {
        return "sorted by rating".to_string();
    }
    if lower.contains("subject") || lower.contains("title") {
        return "Quarterly planning sync".to_string();
    }
    if lower.contains("body") || lower.contains("content") || lower.contains("message") {
        return "Sharing the agenda ahead of our meeting.".to_string();
    }
    if semantic_type == "number" || semantic_type == "integer" {
        return rng.random_range(1..=9).to_string();
    }
    format!("{name} value")
}

fn p(name: &str, semantic_type: &str, required: bool, description: &str) -> ToolParameter {
    ToolParameter {
        name: name.into(),
        semantic_type: semantic_type.into(),
        required,
        description: description.into(),
    }
}

fn o(name: &str, semantic_type: &str, description: &str) -> OutputField {
    OutputField {
        name: name.into(),
        semantic_type: semantic_type.into(),
        description: description.into(),
    }
}

/// A small catalog with deliberate structure: search tools feed booking
/// tools (dependency edges) and same-domain tools share parameters
/// (sharing edges).
pub fn demo_catalog() -> ToolCatalog {
    let tools = vec![
        Tool {
            name: "search_flight".into(),
            description: "Search direct flights between two cities on a given date.".into(),
            parameters: vec![
                p("app", "string", true, "travel app to use"),
                p("origin_city", "string", true, "departure city"),
                p("destination_city", "string", true, "arrival city"),
                p("date_slot", "date", true, "departure date"),
            ],
            output_schema: vec![
                o("flight_id", "string", "identifier of the chosen flight"),
                o("price", "number", "ticket price"),
            ],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "book_flight".into(),
            description: "Book a flight to a given city on a date by flight identifier.".into(),
            parameters: vec![
                p("app", "string", true, "travel app to use"),
                p("flight_id", "string", true, "flight to book"),
                p("passenger_name", "string", true, "traveller name"),
            ],
            output_schema: vec![
                o("booking_id", "string", "flight booking reference"),
                o("status", "string", "booking status"),
            ],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "search_hotel".into(),
            description: "Search hotels in a city for a check-in date.".into(),
            parameters: vec![
                p("app", "string", true, "travel app to use"),
                p("city_slot", "string", true, "city to search in"),
                p("check_in_date_slot", "date", true, "check-in date"),
            ],
            output_schema: vec![
                o("hotel_slot", "string", "best matching hotel name"),
                o("nightly_rate", "number", "price per night"),
            ],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "book_hotel".into(),
            description: "Book a hotel room in a given city for a date range.".into(),
            parameters: vec![
                p("app", "string", true, "booking app to use"),
                p("city_slot", "string", true, "city of the hotel"),
                p("hotel_slot", "string", true, "hotel to book"),
                p("check_in_date_slot", "date", true, "check-in date"),
                p("departure_date_slot", "date", true, "check-out date"),
                p("number_slot", "number", true, "number of rooms"),
                p("payment_method_slot", "string", false, "payment method"),
                p("filter_detail_slot", "string", false, "extra filters"),
            ],
            output_schema: vec![
                o("booking_id", "string", "hotel booking reference"),
                o("reservation_status", "string", "whether the reservation succeeded"),
                o("total_price", "number", "total price of the stay"),
            ],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "search_location".into(),
            description: "Search places of interest near a location.".into(),
            parameters: vec![
                p("app", "string", true, "map app to use"),
                p("search_info_slot", "string", true, "what to search for"),
                p("order_type", "string", false, "result ordering"),
            ],
            output_schema: vec![o("place_list", "list", "matching places with ratings")],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "get_user_details".into(),
            description: "Look up a user's profile, including reservation references.".into(),
            parameters: vec![p("user_id", "string", true, "account identifier")],
            output_schema: vec![
                o("reservation_id", "string", "most recent reservation reference"),
                o("payment_methods", "list", "stored payment methods"),
            ],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "cancel_reservation".into(),
            description: "Cancel a reservation by its reference and start a refund.".into(),
            parameters: vec![p("reservation_id", "string", true, "reservation to cancel")],
            output_schema: vec![o("status", "string", "cancellation status")],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "check_weather".into(),
            description: "Check the weather forecast for a city on a date.".into(),
            parameters: vec![
                p("city_slot", "string", true, "city to check"),
                p("date_slot", "date", true, "forecast date"),
            ],
            output_schema: vec![o("forecast", "string", "short forecast text")],
            domain_tag: "travel".into(),
        },
        Tool {
            name: "search_product".into(),
            description: "Search a shopping app for products matching a keyword.".into(),
            parameters: vec![
                p("app", "string", true, "shopping app to use"),
                p("keyword", "string", true, "what to look for"),
                p("sort_order", "string", false, "result ordering"),
            ],
            output_schema: vec![
                o("product_id", "string", "top matching product"),
                o("price", "number", "listed price"),
            ],
            domain_tag: "ecommerce".into(),
        },
        Tool {
            name: "add_to_cart".into(),
            description: "Add a product to the shopping cart.".into(),
            parameters: vec![
                p("app", "string", true, "shopping app to use"),
                p("product_id", "string", true, "product to add"),
                p("quantity", "number", true, "how many to add"),
            ],
            output_schema: vec![o("cart_id", "string", "cart holding the item")],
            domain_tag: "ecommerce".into(),
        },
        Tool {
            name: "clear_cart".into(),
            description: "Remove every item from the shopping cart.".into(),
            parameters: vec![p("app", "string", true, "shopping app to use")],
            output_schema: vec![o("status", "string", "operation status")],
            domain_tag: "ecommerce".into(),
        },
        Tool {
            name: "place_order".into(),
            description: "Place an order for the current cart.".into(),
            parameters: vec![
                p("app", "string", true, "shopping app to use"),
                p("cart_id", "string", true, "cart to check out"),
                p("payment_method_slot", "string", true, "payment method"),
            ],
            output_schema: vec![o("order_id", "string", "order reference")],
            domain_tag: "ecommerce".into(),
        },
        Tool {
            name: "track_order".into(),
            description: "Track the delivery status of an order.".into(),
            parameters: vec![p("order_id", "string", true, "order to track")],
            output_schema: vec![o("delivery_status", "string", "current delivery stage")],
            domain_tag: "ecommerce".into(),
        },
        Tool {
            name: "send_email".into(),
            description: "Send an email to a recipient.".into(),
            parameters: vec![
                p("recipient", "string", true, "destination address"),
                p("subject", "string", true, "subject line"),
                p("body", "string", true, "message body"),
            ],
            output_schema: vec![o("message_id", "string", "sent message id")],
            domain_tag: "productivity".into(),
        },
        Tool {
            name: "create_reminder".into(),
            description: "Create a reminder for a date and time.".into(),
            parameters: vec![
                p("title", "string", true, "reminder title"),
                p("date_slot", "date", true, "reminder date"),
                p("time_slot", "time", true, "reminder time"),
            ],
            output_schema: vec![o("reminder_id", "string", "created reminder id")],
            domain_tag: "productivity".into(),
        },
        Tool {
            name: "query_calendar".into(),
            description: "List calendar events for a date.".into(),
            parameters: vec![p("date_slot", "date", true, "date to inspect")],
            output_schema: vec![o("event_list", "list", "events on that date")],
            domain_tag: "productivity".into(),
        },
        Tool {
            name: "search_movie".into(),
            description: "Search for a movie by keyword.".into(),
            parameters: vec![
                p("app", "string", true, "ticketing app to use"),
                p("keyword", "string", true, "movie to find"),
            ],
            output_schema: vec![
                o("movie_id", "string", "matched movie"),
                o("rating", "number", "average rating"),
            ],
            domain_tag: "entertainment".into(),
        },
        Tool {
            name: "book_movie_ticket".into(),
            description: "Book tickets for a movie on a date.".into(),
            parameters: vec![
                p("app", "string", true, "ticketing app to use"),
                p("movie_id", "string", true, "movie to book"),
                p("seat_count", "number", true, "number of seats"),
                p("date_slot", "date", true, "show date"),
            ],
            output_schema: vec![o("ticket_id", "string", "ticket reference")],
            domain_tag: "entertainment".into(),
        },
        Tool {
            name: "play_music".into(),
            description: "Play a song, optionally by a specific artist.".into(),
            parameters: vec![
                p("song_name", "string", true, "song to play"),
                p("artist_name", "string", false, "preferred artist"),
            ],
            output_schema: vec![o("status", "string", "playback status")],
            domain_tag: "entertainment".into(),
        },
    ];
    ToolCatalog::from_tools(tools).expect("demo catalog is well formed")
}

/// Gold plans for workflow synthesis: ordered sub-tasks plus dependencies
/// among them (0-based indices).
pub fn demo_gold_plans() -> Vec<GoldPlan> {
    vec![
        GoldPlan {
            task: "find out which year the oldest bridge in the old town was built".into(),
            steps: vec![
                "Search for the bridges located in the old town.".into(),
                "Identify the oldest bridge among the results.".into(),
                "Look up the construction year of that bridge.".into(),
            ],
            deps: vec![(0, 1), (1, 2)],
        },
        GoldPlan {
            task: "compare the populations of the two largest islands of the archipelago".into(),
            steps: vec![
                "List the islands of the archipelago by area.".into(),
                "Find the population of the largest island.".into(),
                "Find the population of the second largest island.".into(),
                "Compare the two population figures.".into(),
            ],
            deps: vec![(0, 1), (0, 2), (1, 3), (2, 3)],
        },
        GoldPlan {
            task: "book a table at the highest rated vegetarian restaurant nearby".into(),
            steps: vec![
                "Search for vegetarian restaurants near the current location.".into(),
                "Rank the candidates by rating.".into(),
                "Reserve a table at the top ranked restaurant.".into(),
            ],
            deps: vec![(0, 1), (1, 2)],
        },
        GoldPlan {
            task: "determine when the battle described in the mural took place".into(),
            steps: vec!["Search for the battle depicted in the mural to determine its date.".into()],
            deps: vec![],
        },
        GoldPlan {
            task: "plan a commute that avoids the closed metro line".into(),
            steps: vec![
                "Check which metro line is closed today.".into(),
                "List alternative routes between home and the office.".into(),
                "Pick the fastest alternative route.".into(),
            ],
            deps: vec![(0, 1), (1, 2)],
        },
        GoldPlan {
            task: "summarize last quarter's sales by region".into(),
            steps: vec![
                "Export last quarter's sales records.".into(),
                "Group the records by region.".into(),
                "Compute totals for each region.".into(),
                "Draft a short summary of the totals.".into(),
            ],
            deps: vec![(0, 1), (1, 2), (2, 3)],
        },
        GoldPlan {
            task: "find a gift under budget for a friend who likes astronomy".into(),
            steps: vec![
                "Search for astronomy related gifts.".into(),
                "Filter the results by the budget limit.".into(),
                "Pick the best reviewed remaining option.".into(),
            ],
            deps: vec![(0, 1), (1, 2)],
        },
        GoldPlan {
            task: "verify whether the museum is open on the public holiday".into(),
            steps: vec![
                "Look up the date of the public holiday.".into(),
                "Check the museum opening hours for that date.".into(),
            ],
            deps: vec![(0, 1)],
        },
    ]
}

/// Distractor sub-task texts for workflow candidate lists.
pub fn demo_action_pool() -> Vec<String> {
    [
        "Identify which county the mountain range is located in.",
        "Determine the specific district the senator represented.",
        "Find the author of the referenced short story.",
        "Look up the chemical formula of the compound.",
        "Check the tidal schedule for the harbor.",
        "Translate the inscription on the monument.",
        "Estimate the driving distance between the two capitals.",
        "List the ingredients of the traditional dish.",
        "Find the release year of the first album.",
        "Check whether the library offers interlibrary loans.",
        "Identify the architect of the concert hall.",
        "Determine the average rainfall in the valley.",
        "Look up the train timetable for the coastal line.",
        "Find the elevation of the mountain pass.",
        "Check which languages are spoken in the region.",
        "Determine the warranty period of the appliance.",
        "Identify the national bird of the country.",
        "Find the capacity of the football stadium.",
        "Check the exchange rate between the two currencies.",
        "Look up the patent filing date.",
        "Determine the boiling point at high altitude.",
        "Identify the narrator of the audiobook edition.",
        "Check the ferry schedule to the island.",
        "Find the founding year of the university.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}
