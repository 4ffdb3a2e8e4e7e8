mod common;

use common::*;
use rand::Rng;
use rexa::isa::{default_tables, load_wordlist, IsaTables, LookupMode, CORE_WORDS_JSON};

fn non_word(r: &mut impl Rng) -> String {
    let n = r.gen_range(1..=15);
    (0..n).map(|_| r.gen_range(b'!'..=b'~') as char).filter(|&c| c != '(').collect::<String>()
}

#[test]
fn tables_agree_on_core_words() {
    let t = default_tables();
    assert_eq!(t.wordlist.len(), 101);
    for w in t.wordlist.words() {
        assert_eq!(t.lookup(&w.name, LookupMode::Pht), Some(w.opcode), "{}", w.name);
        assert_eq!(t.lookup(&w.name, LookupMode::Lst), Some(w.opcode), "{}", w.name);
    }
}

#[test]
fn tables_agree_on_non_words() {
    let t = default_tables();
    let mut r = rng(99);
    let mut n = 0;
    while n < 10_000 {
        let s = non_word(&mut r);
        if s.is_empty() || t.wordlist.position(&s).is_some() {
            continue;
        }
        n += 1;
        assert_eq!(t.lookup(&s, LookupMode::Pht), None, "{s}");
        assert_eq!(t.lookup(&s, LookupMode::Lst), None, "{s}");
    }
    // Near misses: prefixes and one-character extensions of real words.
    for w in t.wordlist.words() {
        for cut in 1..w.name.len() {
            let p = &w.name[..cut];
            assert_eq!(t.lookup(p, LookupMode::Pht), t.wordlist.position(p));
            assert_eq!(t.lookup(p, LookupMode::Lst), t.wordlist.position(p));
        }
        let ext = format!("{}x", w.name);
        assert_eq!(t.lookup(&ext, LookupMode::Lst), t.wordlist.position(&ext));
        assert_eq!(t.lookup(&ext, LookupMode::Pht), t.wordlist.position(&ext));
    }
}

#[test]
fn lst_size_bracket() {
    let size = default_tables().lst.size_bytes();
    assert!((525..=875).contains(&size), "{size}");
}

#[test]
fn artifact_round_trip_and_regeneration_is_stable() {
    let t = default_tables();
    let again = IsaTables::generate(load_wordlist(CORE_WORDS_JSON).unwrap()).unwrap();
    assert_eq!(*t, again);
    assert_eq!(IsaTables::from_bytes(&t.to_bytes()).unwrap(), again);
}

#[test]
fn random_word_lists_agree() {
    let mut r = rng(4);
    for _ in 0..50 {
        let mut names: Vec<String> = (0..r.gen_range(1..120)).map(|_| non_word(&mut r)).collect();
        names.sort();
        names.dedup();
        names.retain(|s| !s.is_empty());
        let wl = rexa::isa::WordList::from_pairs(names.iter().map(|n| (n.clone(), "x"))).unwrap();
        let t = IsaTables::generate(wl).unwrap();
        for (i, n) in names.iter().enumerate() {
            assert_eq!(t.lookup(n, LookupMode::Pht), Some(i as u8));
            assert_eq!(t.lookup(n, LookupMode::Lst), Some(i as u8));
        }
        for _ in 0..200 {
            let s = non_word(&mut r);
            let want = names.iter().position(|n| *n == s).map(|i| i as u8);
            assert_eq!(t.lookup(&s, LookupMode::Pht), want);
            assert_eq!(t.lookup(&s, LookupMode::Lst), want);
        }
    }
}
