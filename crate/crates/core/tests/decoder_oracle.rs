use convasr::acoustic::EmissionTable;
use convasr::criterion::Alphabet;
use convasr::decoder::{
    decode, exhaustive_decode, sentence_log_prob, DecoderOptions, ExhaustiveLimits, LexiconTrie, MergeMode,
};
use convasr::lm::{LanguageModel, NGramModel, UniformLm, Vocabulary};
use convasr::math::Table;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Instance {
    alphabet: Alphabet,
    trie: LexiconTrie,
    lm: NGramModel,
    emissions: EmissionTable,
    transitions: Table,
}

fn random_instance(rng: &mut StdRng) -> Instance {
    let n_letters = rng.gen_range(1..=3);
    let letters: Vec<String> = (0..n_letters).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
    let alphabet = Alphabet::with_letters(&letters).unwrap();
    let n_words = rng.gen_range(1..=6);
    let mut words: Vec<String> = Vec::new();
    while words.len() < n_words {
        let len = rng.gen_range(1..=3);
        let w: String = (0..len).map(|_| letters[rng.gen_range(0..n_letters)].clone()).collect();
        if !words.contains(&w) {
            words.push(w);
        }
        if words.len() >= n_letters.pow(3) {
            break;
        }
    }
    let trie = LexiconTrie::from_words(&words, &alphabet).unwrap();
    let vocab = Vocabulary::new(&words);
    let corpus: Vec<Vec<usize>> = (0..6)
        .map(|_| {
            (0..rng.gen_range(1..=3))
                .map(|_| vocab.id(&words[rng.gen_range(0..words.len())]))
                .collect()
        })
        .collect();
    let lm = NGramModel::estimate(&corpus, &vocab, 2, 0.4).unwrap();
    let t = rng.gen_range(1..=10);
    let a = alphabet.len();
    let emissions = EmissionTable {
        scores: Table::from_vec(t, a, (0..t * a).map(|_| rng.gen_range(-4.0..2.0)).collect()),
        normalized: false,
    };
    let transitions = Table::from_vec(a, a, (0..a * a).map(|_| rng.gen_range(-2.0..1.0)).collect());
    Instance {
        alphabet,
        trie,
        lm,
        emissions,
        transitions,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn unlimited_beam_matches_exhaustive_on_random_instances() {
    let mut rng = StdRng::seed_from_u64(2024);
    for case in 0..100 {
        let inst = random_instance(&mut rng);
        let opts = DecoderOptions::unlimited(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let ex = exhaustive_decode(
            &inst.emissions,
            &inst.transitions,
            &inst.alphabet,
            &inst.trie,
            &inst.lm,
            &opts,
            &ExhaustiveLimits::default(),
        );
        let bs = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &opts);
        match (ex, bs) {
            (Ok(e), Ok(b)) => {
                assert!(rel(e.objective, b.objective) <= 1e-8, "case {case}: exhaustive {} beam {}", e.objective, b.objective);
            }
            (Err(e), Err(b)) => assert_eq!(format!("{e:?}"), format!("{b:?}"), "case {case}"),
            (e, b) => panic!("case {case}: exhaustive {e:?} vs beam {b:?}"),
        }
    }
}

#[test]
fn merged_and_unmerged_search_agree() {
    let mut rng = StdRng::seed_from_u64(7);
    for case in 0..40 {
        let inst = random_instance(&mut rng);
        let merged = DecoderOptions::unlimited(0.5, 0.5, 0.5);
        let unmerged = DecoderOptions {
            merge: MergeMode::Off,
            ..merged.clone()
        };
        let a = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &merged);
        let b = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &unmerged);
        match (a, b) {
            (Ok(a), Ok(b)) => assert!(rel(a.objective, b.objective) <= 1e-10, "case {case}"),
            (a, b) => assert_eq!(a.is_err(), b.is_err(), "case {case}"),
        }
    }
}

#[test]
fn finite_beams_never_beat_the_unlimited_search() {
    let mut rng = StdRng::seed_from_u64(99);
    for case in 0..60 {
        let inst = random_instance(&mut rng);
        let base = DecoderOptions::unlimited(0.8, 0.3, 0.2);
        let Ok(best) = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &base) else {
            continue;
        };
        for beam in [1, 2, 4, 8, 16, 64] {
            let opts = DecoderOptions {
                beam_size: beam,
                ..base.clone()
            };
            if let Ok(r) = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &opts) {
                assert!(r.objective <= best.objective + 1e-9, "case {case} beam {beam}");
            }
        }
        let wide = DecoderOptions {
            beam_size: 1_000_000,
            beam_score: 1e6,
            ..base.clone()
        };
        let r = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &wide).unwrap();
        assert_eq!(r.objective, best.objective);
    }
}

#[test]
fn objective_decomposes_from_traceback() {
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..30 {
        let inst = random_instance(&mut rng);
        let opts = DecoderOptions {
            beam_size: 16,
            beam_score: 20.0,
            ..DecoderOptions::unlimited(0.9, 0.4, 0.6)
        };
        let Ok(r) = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &opts) else {
            continue;
        };
        assert_eq!(r.letter_path.len(), inst.emissions.frames());
        let sil = r.letter_path.iter().filter(|&&l| l == inst.alphabet.silence()).count();
        let lm_raw = sentence_log_prob(&inst.lm, &r.words);
        let total = r.am_component + opts.alpha * lm_raw + opts.beta * r.words.len() as f64 - opts.gamma * sil as f64;
        assert!(rel(total, r.objective) <= 1e-10);
    }
}

#[test]
fn alpha_zero_ignores_the_language_model() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..30 {
        let inst = random_instance(&mut rng);
        let opts = DecoderOptions {
            beam_size: 32,
            ..DecoderOptions::unlimited(0.0, 0.7, 0.1)
        };
        let uniform = UniformLm::new(inst.lm.vocab().clone());
        let a = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &opts);
        let b = decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &uniform, &opts);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                assert_eq!(a.words, b.words);
                assert_eq!(a.objective, b.objective);
            }
            (a, b) => assert_eq!(a.is_err(), b.is_err()),
        }
    }
}

#[test]
fn silence_penalty_reduces_silence() {
    let alphabet = Alphabet::with_letters(&["a", "b"]).unwrap();
    let trie = LexiconTrie::from_words(&["ab"], &alphabet).unwrap();
    let lm = UniformLm::new(Vocabulary::new(&["ab"]));
    let a = alphabet.len();
    let sil = alphabet.silence();
    // silence is attractive at both ends, letters in the middle
    let mut rows = vec![vec![-1.0; a]; 6];
    for (t, row) in rows.iter_mut().enumerate() {
        match t {
            0 | 5 => row[sil] = 0.5,
            1 | 2 => row[0] = 1.0,
            _ => row[1] = 1.0,
        }
    }
    let em = EmissionTable {
        scores: Table::from_rows(&rows),
        normalized: false,
    };
    let g = Table::zeros(a, a);
    let free = decode(&em, &g, &alphabet, &trie, &lm, &DecoderOptions::unlimited(0.0, 0.0, 0.0)).unwrap();
    let taxed = decode(&em, &g, &alphabet, &trie, &lm, &DecoderOptions::unlimited(0.0, 0.0, 5.0)).unwrap();
    assert!(free.silence_count > 0);
    assert!(taxed.silence_count <= free.silence_count);
    assert_eq!(taxed.silence_count, 0);
}

#[test]
fn exhaustive_is_invariant_to_lexicon_order() {
    let mut rng = StdRng::seed_from_u64(31);
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let mut words = inst.trie.words().to_vec();
        words.reverse();
        let reversed = LexiconTrie::from_words(&words, &inst.alphabet).unwrap();
        let opts = DecoderOptions::unlimited(0.3, 0.2, 0.1);
        let lim = ExhaustiveLimits::default();
        let a = exhaustive_decode(&inst.emissions, &inst.transitions, &inst.alphabet, &inst.trie, &inst.lm, &opts, &lim);
        let b = exhaustive_decode(&inst.emissions, &inst.transitions, &inst.alphabet, &reversed, &inst.lm, &opts, &lim);
        if let (Ok(a), Ok(b)) = (a, b) {
            assert!(rel(a.objective, b.objective) <= 1e-12);
        }
    }
}
