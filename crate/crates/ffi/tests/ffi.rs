use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use spanreason_ffi::*;

fn mini_corpus() -> CString {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/mini_corpus.jsonl");
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_error() -> String {
    let p = sr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    sr_string_free(s);
    out
}

fn corpus() -> *mut SrCorpus {
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { sr_corpus_from_jsonl(mini_corpus().as_ptr(), &mut c) }, SrStatus::Ok);
    c
}

#[test]
fn corpus_counts_match_core() {
    let store = spanreason::ingest::ingest(mini_corpus().to_bytes()).unwrap();
    let c = corpus();
    let (mut pages, mut sentences, mut tables, mut vocab) = (0, 0, 0, 0);
    unsafe {
        assert_eq!(sr_corpus_counts(c, &mut pages, &mut sentences, &mut tables, &mut vocab), SrStatus::Ok);
        assert_eq!(sr_corpus_counts(c, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), SrStatus::Ok);
        sr_corpus_free(c);
    }
    assert_eq!((pages, sentences, tables), (store.stats.n_pages, store.stats.n_sentences, store.stats.n_tables));
    assert_eq!(vocab, spanreason::example_gen::Vocab::build(&store).len());
    assert!(pages > 0 && sentences > 0 && tables > 0);
}

#[test]
fn corpus_errors_set_status_and_message() {
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(sr_corpus_from_jsonl(ptr::null(), &mut c), SrStatus::NullArgument);
        assert!(c.is_null());
        assert!(last_error().contains("jsonl"));

        let bad = CString::new("{\"id\": \"A\"}\n").unwrap();
        assert_eq!(sr_corpus_from_jsonl(bad.as_ptr(), &mut c), SrStatus::Corpus);
        assert!(last_error().contains("line 1"));

        let invalid = [0xffu8, 0];
        assert_eq!(sr_corpus_from_jsonl(invalid.as_ptr().cast(), &mut c), SrStatus::InvalidUtf8);

        let missing = CString::new("/nonexistent/corpus.jsonl").unwrap();
        assert_eq!(sr_corpus_from_file(missing.as_ptr(), &mut c), SrStatus::Io);
        assert!(last_error().contains("/nonexistent/corpus.jsonl"));

        assert_eq!(sr_corpus_from_jsonl(bad.as_ptr(), ptr::null_mut()), SrStatus::NullArgument);
        assert_eq!(sr_corpus_counts(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), SrStatus::NullArgument);

        // success clears the slot
        let mut n = 0;
        let (mut starts, mut ends) = ([0usize; 2], [0usize; 2]);
        assert_eq!(sr_window_split(10, 6, 4, ptr::null_mut(), ptr::null_mut(), 0, &mut n), SrStatus::BufferTooSmall);
        assert_eq!(n, 2);
        assert_eq!(sr_window_split(10, 6, 4, starts.as_mut_ptr(), ends.as_mut_ptr(), 2, &mut n), SrStatus::Ok);
        assert_eq!((starts, ends), ([0, 4], [6, 10]));
        assert!(sr_last_error().is_null());
    }
}

#[test]
fn corpus_from_file_matches_text() {
    let path = CString::new(format!("{}/../core/data/mini_corpus.jsonl", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let mut a = ptr::null_mut();
    let b = corpus();
    let (mut pa, mut pb) = (0, 0);
    unsafe {
        assert_eq!(sr_corpus_from_file(path.as_ptr(), &mut a), SrStatus::Ok);
        sr_corpus_counts(a, &mut pa, ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        sr_corpus_counts(b, &mut pb, ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        sr_corpus_free(a);
        sr_corpus_free(b);
        sr_corpus_free(ptr::null_mut());
    }
    assert_eq!(pa, pb);
}

#[test]
fn groups_and_generation_match_core() {
    use spanreason::example_gen::{deserialize_example, generate, GenConfig, Vocab};
    use spanreason::pair_index::{build_index, build_query_groups, Profile};

    let store = spanreason::ingest::ingest(mini_corpus().to_bytes()).unwrap();
    let vocab = Vocab::build(&store);
    let c = corpus();
    for (code, profile) in [(SR_PROFILE_TEXT, Profile::Text), (SR_PROFILE_HYBRID, Profile::Hybrid)] {
        let want_groups = build_query_groups(&store, &build_index(&store), profile);
        let mut g = ptr::null_mut();
        let mut len = 0;
        unsafe {
            assert_eq!(sr_groups_build(c, code, &mut g), SrStatus::Ok);
            assert_eq!(sr_groups_len(g, &mut len), SrStatus::Ok);
        }
        assert_eq!(len, want_groups.len());

        for flags in [0, SR_GEN_NO_MLM | SR_GEN_NO_UNANSWERABLE, SR_GEN_SINGLE_EVIDENCE] {
            let cfg = GenConfig {
                profile,
                mlm: flags & SR_GEN_NO_MLM == 0,
                unanswerable: flags & SR_GEN_NO_UNANSWERABLE == 0,
                single_evidence: flags & SR_GEN_SINGLE_EVIDENCE != 0,
                ..GenConfig::default()
            };
            let (want, _) = generate(&store, &vocab, &want_groups, &cfg, 3, 0).unwrap();
            let mut out = ptr::null_mut();
            let text = unsafe {
                assert_eq!(sr_generate_jsonl(c, g, 3, flags, &mut out), SrStatus::Ok);
                take(out)
            };
            let got: Vec<_> = text.lines().map(|l| deserialize_example(l).unwrap()).collect();
            assert_eq!(got, want);
            assert!(!got.is_empty());
        }
        let mut out = ptr::null_mut();
        unsafe {
            assert_eq!(sr_generate_jsonl(c, g, 0, 8, &mut out), SrStatus::InvalidArgument);
            assert!(out.is_null());
            sr_groups_free(g);
        }
    }
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(sr_groups_build(c, 7, &mut g), SrStatus::InvalidArgument);
        assert!(last_error().contains("profile"));
        assert!(g.is_null());
        sr_corpus_free(c);
    }
}

#[test]
fn metrics() {
    let cs = |v: &[&str]| v.iter().map(|s| CString::new(*s).unwrap()).collect::<Vec<_>>();
    let cases: [(Option<&str>, Vec<CString>, f64, f64); 4] = [
        (Some("red cat"), cs(&["big red cat"]), 0.0, 0.8),
        (Some("The Red Cat!"), cs(&["red cat"]), 1.0, 1.0),
        (None, cs(&["red cat"]), 0.0, 0.0),
        (None, vec![], 1.0, 1.0),
    ];
    for (pred, golds, em, f1) in cases {
        let pred = pred.map(|p| CString::new(p).unwrap());
        let ptrs: Vec<*const c_char> = golds.iter().map(|g| g.as_ptr()).collect();
        let (mut got_em, mut got_f1) = (-1.0, -1.0);
        let status = unsafe {
            sr_em_f1(pred.as_ref().map_or(ptr::null(), |p| p.as_ptr()), ptrs.as_ptr(), ptrs.len(), &mut got_em, &mut got_f1)
        };
        assert_eq!(status, SrStatus::Ok);
        assert_eq!(got_em, em);
        assert!((got_f1 - f1).abs() < 1e-12);
    }
    let (mut em, mut f1) = (0.0, 0.0);
    assert_eq!(unsafe { sr_em_f1(ptr::null(), ptr::null(), 1, &mut em, &mut f1) }, SrStatus::NullArgument);

    let text = CString::new("  The  Apple, Inc. ").unwrap();
    let mut out = ptr::null_mut();
    let norm = unsafe {
        assert_eq!(sr_normalize_answer(text.as_ptr(), &mut out), SrStatus::Ok);
        take(out)
    };
    assert_eq!(norm, spanreason::qa::normalize_answer("  The  Apple, Inc. "));
    assert_eq!(norm, "apple inc");
}

#[test]
fn rank_spans_matches_core() {
    let fs = [0.5, 2.0, -1.0, 0.3, 1.0];
    let fe = [0.5, -1.0, 1.5, 0.2, 2.0];
    let positions = [0, 4, 5, 6, 8];
    let want = spanreason::neural::rank_spans(&fs, &fe, &positions, 3);
    let mut starts = [0usize; 4];
    let mut ends = [0usize; 4];
    let mut scores = [0f64; 4];
    let mut n = 0;
    let status = unsafe {
        sr_rank_spans(fs.as_ptr(), fe.as_ptr(), positions.as_ptr(), 5, 3, starts.as_mut_ptr(), ends.as_mut_ptr(), scores.as_mut_ptr(), 4, &mut n)
    };
    assert_eq!(status, SrStatus::Ok);
    assert_eq!(n, want.len().min(4));
    assert_eq!((starts[0], ends[0]), (4, 5));
    for i in 0..n {
        assert_eq!((starts[i], ends[i], scores[i]), (want[i].start, want[i].end, want[i].score));
    }
    // capacity 0 only counts nothing
    let status = unsafe {
        sr_rank_spans(fs.as_ptr(), fe.as_ptr(), positions.as_ptr(), 5, 3, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), 0, &mut n)
    };
    assert_eq!((status, n), (SrStatus::Ok, 0));
    let status = unsafe {
        sr_rank_spans(ptr::null(), fe.as_ptr(), positions.as_ptr(), 5, 3, starts.as_mut_ptr(), ends.as_mut_ptr(), scores.as_mut_ptr(), 4, &mut n)
    };
    assert_eq!(status, SrStatus::NullArgument);
}

#[test]
fn window_split_fixtures() {
    let mut starts = [0usize; 4];
    let mut ends = [0usize; 4];
    let mut n = 0;
    for (tokens, want) in [(150, vec![(0, 150)]), (300, vec![(0, 200), (128, 300)]), (328, vec![(0, 200), (128, 328)])] {
        let status = unsafe { sr_window_split(tokens, 200, 128, starts.as_mut_ptr(), ends.as_mut_ptr(), 4, &mut n) };
        assert_eq!(status, SrStatus::Ok);
        let got: Vec<_> = (0..n).map(|i| (starts[i], ends[i])).collect();
        assert_eq!(got, want);
    }
    let status = unsafe { sr_window_split(100, 10, 20, starts.as_mut_ptr(), ends.as_mut_ptr(), 4, &mut n) };
    assert_eq!(status, SrStatus::InvalidArgument);
    assert!(last_error().contains("stride"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/spanreason.h")).unwrap();
    let exports = [
        "sr_last_error", "sr_string_free", "sr_corpus_from_jsonl", "sr_corpus_from_file", "sr_corpus_free",
        "sr_corpus_counts", "sr_groups_build", "sr_groups_len", "sr_groups_free", "sr_generate_jsonl",
        "sr_normalize_answer", "sr_em_f1", "sr_rank_spans", "sr_window_split",
    ];
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct SrCorpus SrCorpus;"));
    assert!(header.contains("SR_STATUS_BUFFER_TOO_SMALL = 7"));

    let Ok(cc) = which_cc() else { return };
    let tmp = tempdir();
    let src = tmp.join("use_header.c");
    std::fs::write(
        &src,
        "#include \"spanreason.h\"\nint main(void) { SrCorpus *c = 0; SrStatus s = sr_corpus_from_jsonl(\"\", &c); sr_corpus_free(c); return s == SR_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spanreason-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
