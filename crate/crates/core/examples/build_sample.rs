//! Rebuild the shipped sample corpus.
//!
//! Per-event counts follow the published dataset; texts are drawn from the
//! mock utterance bank, so every record is synthetic.
//!
//!     cargo run -p gagne-core --example build_sample -- data/sample.jsonl

use chrono::{Duration, TimeZone, Utc};
use gagne_core::classify::classify_keyword;
use gagne_core::corpus::save_corpus;
use gagne_core::gateway::mock::mock_utterance;
use gagne_core::{DialogueTemplate, GagneEvent, Provenance, ReviewState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const COUNTS: [usize; 9] = [715, 422, 769, 768, 862, 680, 823, 476, 665];

const CONCEPTS: [&str; 18] = [
    "linear equations",
    "the area of a triangle",
    "fractions",
    "the Pythagorean theorem",
    "probability",
    "proportions",
    "the angles of a polygon",
    "prime factorization",
    "the coordinate plane",
    "the circumference of a circle",
    "the volume of a cylinder",
    "percentages",
    "inequalities",
    "mean and median",
    "similar triangles",
    "negative numbers",
    "exponents",
    "the slope of a line",
];

fn id_for(event: GagneEvent, i: usize) -> String {
    let digest = Sha256::new()
        .chain_update(b"sample")
        .chain_update([event.ordinal()])
        .chain_update((i as u64).to_le_bytes())
        .finalize();
    let bytes: [u8; 16] = digest[..16].try_into().unwrap();
    uuid::Builder::from_random_bytes(bytes).into_uuid().to_string()
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data/sample.jsonl".into());
    let mut rng = ChaCha8Rng::seed_from_u64(6180);
    let start = Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap();

    let mut slots: Vec<(GagneEvent, usize)> =
        GagneEvent::ALL.iter().zip(COUNTS).flat_map(|(&e, n)| (0..n).map(move |i| (e, i))).collect();
    slots.shuffle(&mut rng);

    let records: Vec<DialogueTemplate> = slots
        .into_iter()
        .enumerate()
        .map(|(pos, (event, i))| {
            let concept = CONCEPTS[(i + event.ordinal() as usize) % CONCEPTS.len()];
            let text = mock_utterance(event, concept, (i / CONCEPTS.len()) as u64);
            assert_eq!(classify_keyword(&text).unwrap().event, event, "{text}");
            let (provenance, revision) = match pos % 10 {
                0..=6 => (Provenance::LlmGenerated, 1),
                7 | 8 => (Provenance::ManuallyEdited, 2),
                _ => (Provenance::ClassroomCollected, 1),
            };
            let created_at = start + Duration::seconds(pos as i64 * 37);
            DialogueTemplate {
                id: id_for(event, i),
                concept: concept.into(),
                event,
                text,
                provenance,
                review_state: ReviewState::Accepted,
                revision,
                created_at,
                updated_at: created_at + Duration::hours(2),
            }
        })
        .collect();

    save_corpus(&out, &records).unwrap();
    eprintln!("wrote {} records to {out}", records.len());
}
