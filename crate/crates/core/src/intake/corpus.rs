//! Seeded template generator for free-text delivery requests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{IntakeError, RequestRecord, StructuredRequest};
use crate::skyway::{SkywayNetwork, StationId};

/// Request bodies. `{S}` and `{D}` are station mentions ("node 7"),
/// `{W}` is the payload phrase ("around 3 kilograms").
const TEMPLATES: &[&str] = &[
    "please help me pick up my package from home at {S} and deliver it to my workplace at {D}. The box weighs {W}.",
    "I'd like to request a delivery. The payload weighs {W} and the pickup is at {S}. The drop-off location is {D}.",
    "I need to schedule a delivery for a {W} package. The pickup is at {S}, and it needs to be dropped off at {D}.",
    "Please send a {W} parcel from {S} to {D}.",
    "Destination: {D}. Pickup: {S}. Weight: {W}.",
    "Could you move {W} of supplies from {S} to {D}?",
    "I have a {W} box waiting for pickup at {S} that should be delivered to {D}.",
    "Pickup at {S}, drop-off at {D}, the package is {W}.",
    "Start: {S}. Destination: {D}. Payload: {W}.",
    "Can a drone collect {W} from {S} and deliver it to {D}?",
    "Please pick up a {W} order from my shop at {S} and deliver it to the customer at {D}.",
    "The parcel ({W}) needs to go from {S} to {D}.",
    "Deliver {W} of medicine to {D}; the pickup is at {S}.",
    "Please arrange a drop-off at {D} for a {W} package collected from {S}.",
    "Request: pickup {S}, destination {D}, payload {W}.",
    "There is a {W} box to collect from {S}. Its destination is {D}.",
    "From {S} to {D}, please. The item is {W}.",
    "We need {W} of documents delivered to {D} from {S}.",
    "Kindly pick up {W} at {S} and deliver to {D}.",
    "The starting point is {S} and the destination is {D}. It weighs {W}.",
    "Please take {W} from {S} over to {D}.",
    "I'd like a pick-up at {S} with drop off at {D} for {W}.",
    "Our warehouse pickup is {S}. Please deliver the {W} crate to {D}.",
    "Package weight is {W}. Pickup location: {S}. Drop-off location: {D}.",
];

pub const TEMPLATE_COUNT: usize = TEMPLATES.len();

const GREETINGS: &[&str] =
    &["", "Hi, ", "Hello, ", "Hey there! ", "Good morning! ", "Good afternoon! ", "Good evening. "];
const CLOSINGS: &[&str] = &["", " Thanks!", " Thank you.", " Much appreciated.", " Cheers."];
const DISTRACTORS: &[&str] = &[
    " I will be around after 5 pm.",
    " Ideally before 11 am tomorrow.",
    " Someone is home until 7 pm.",
    " It is for a meeting at 2 pm.",
    " Any time after 9 am works.",
];
/// Side requests as (tag, sentence).
const EXTRAS: &[(&str, &str)] = &[
    ("battery_check", " Could you also check the drone's battery before sending it out?"),
    ("delivery_photo", " If possible, I'd like a picture of the package when it's delivered."),
    ("confirm_time", " Could you confirm the exact drop-off time once it's done?"),
    ("status_update", " Please send me a message when it is on the way."),
    ("handle_with_care", " The contents are fragile, so please handle with care."),
];
const UNIT_FORMS: &[&str] = &["{p}kg", "{p} kg", "{p} kilograms", "around {p} kilograms", "about {p} kg", "{p} kilos"];
const NODE_WORDS: &[&str] = &["node", "station"];

/// Render one body template. Exposed to tests so fixed phrasings can be
/// checked against known examples.
pub(crate) fn render_body(template: usize, node_word: &str, s: StationId, d: StationId, weight: &str) -> String {
    TEMPLATES[template]
        .replace("{S}", &format!("{node_word} {s}"))
        .replace("{D}", &format!("{node_word} {d}"))
        .replace("{W}", weight)
}

fn capitalize_after_greeting(greeting: &str, body: &str) -> String {
    if greeting.is_empty() || greeting.ends_with(". ") || greeting.ends_with("! ") {
        let mut c = body.chars();
        match c.next() {
            Some(first) => first.to_uppercase().chain(c).collect(),
            None => String::new(),
        }
    } else {
        body.to_string()
    }
}

/// `n` seeded records with sequential request ids starting at 1.
pub fn generate_corpus(net: &SkywayNetwork, n: usize, seed: u64) -> Result<Vec<RequestRecord>, IntakeError> {
    let ids = net.station_ids();
    if ids.len() < 2 {
        return Err(IntakeError::NetworkTooSmall(ids.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let si = rng.random_range(0..ids.len());
        let mut di = rng.random_range(0..ids.len() - 1);
        if di >= si {
            di += 1;
        }
        let (s, d) = (ids[si], ids[di]);
        let cents: u32 = rng.random_range(50..=1000);
        let payload_kg = f64::from(cents) / 100.0;

        let template = rng.random_range(0..TEMPLATES.len());
        let node_word = *NODE_WORDS.choose(&mut rng).expect("non-empty");
        let unit = *UNIT_FORMS.choose(&mut rng).expect("non-empty");
        let weight = unit.replace("{p}", &payload_kg.to_string());
        let greeting = *GREETINGS.choose(&mut rng).expect("non-empty");
        let closing = *CLOSINGS.choose(&mut rng).expect("non-empty");

        let mut text = greeting.to_string();
        text.push_str(&capitalize_after_greeting(greeting, &render_body(template, node_word, s, d, &weight)));
        if rng.random_bool(0.4) {
            text.push_str(DISTRACTORS.choose(&mut rng).expect("non-empty"));
        }
        let mut extras = Vec::new();
        let extra_count = rng.random_range(0..=2);
        for (tag, sentence) in EXTRAS.choose_multiple(&mut rng, extra_count) {
            extras.push((*tag).to_string());
            text.push_str(sentence);
        }
        text.push_str(closing);

        out.push(RequestRecord {
            structured: StructuredRequest { request_id: k as u64 + 1, start_node: s, destination_node: d, payload_kg },
            free_text: text,
            extras,
            arrival_s: None,
        });
    }
    Ok(out)
}
