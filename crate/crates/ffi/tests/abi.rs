use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use c2v2l::checkpoint::Checkpoint;
use c2v2l::data::TextRecord;
use c2v2l::eval::GoldLabel;
use c2v2l::model::{ModelConfig, ModelParams};
use c2v2l::ngram::NgramClassifier;
use c2v2l::nn::Rng;
use c2v2l::text::{build_vocab, normalize};
use c2v2l_ffi::*;
use rand::SeedableRng;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(c2v2l_last_error()) }.to_str().unwrap().to_string()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    c2v2l_string_free(p);
    s
}

fn records() -> Vec<TextRecord> {
    let mut out = Vec::new();
    for i in 0..20 {
        out.push(TextRecord {
            id: format!("a{i}"),
            label: GoldLabel::single("aa"),
            text: "abc cab bca abca".into(),
        });
        out.push(TextRecord {
            id: format!("b{i}"),
            label: GoldLabel::single("bb"),
            text: "xyz zyx yzx xyzx".into(),
        });
    }
    out
}

#[test]
fn normalize_roundtrip_and_errors() {
    unsafe {
        let mut out = ptr::null_mut();
        let text = cstr("holaaaaaaaa@amigo");
        assert_eq!(c2v2l_normalize(text.as_ptr(), &mut out), C2v2lStatus::Ok);
        assert_eq!(take_string(out), "holaaaaa @amigo");
        assert_eq!(last_error(), "");

        assert_eq!(c2v2l_normalize(ptr::null(), &mut out), C2v2lStatus::NullPointer);
        assert!(last_error().contains("text"));
        let blank = cstr("   ");
        assert_eq!(c2v2l_normalize(blank.as_ptr(), &mut out), C2v2lStatus::Empty);
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(c2v2l_normalize(bad.as_ptr().cast(), &mut out), C2v2lStatus::InvalidUtf8);
        assert_eq!(c2v2l_normalize(text.as_ptr(), ptr::null_mut()), C2v2lStatus::NullPointer);
    }
}

#[test]
fn ngram_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.txt");
    let clf = NgramClassifier::train(&records(), 3).unwrap();
    clf.write(fs::File::create(&path).unwrap()).unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        let p = cstr(path.to_str().unwrap());
        assert_eq!(c2v2l_ngram_load(p.as_ptr(), &mut h), C2v2lStatus::Ok);
        let mut label = ptr::null_mut();
        let text = cstr("zyx xyz");
        assert_eq!(c2v2l_ngram_classify(h, text.as_ptr(), &mut label), C2v2lStatus::Ok);
        assert_eq!(take_string(label), "bb");
        c2v2l_ngram_free(h);
        c2v2l_ngram_free(ptr::null_mut());

        let missing = cstr(dir.path().join("nope").to_str().unwrap());
        assert_eq!(c2v2l_ngram_load(missing.as_ptr(), &mut h), C2v2lStatus::Io);
        let junk_path = dir.path().join("junk");
        fs::write(&junk_path, "not a model\n").unwrap();
        let junk = cstr(junk_path.to_str().unwrap());
        assert_eq!(c2v2l_ngram_load(junk.as_ptr(), &mut h), C2v2lStatus::Format);
        assert!(!last_error().is_empty());
    }
}

fn write_model(dir: &Path) -> (String, String) {
    let texts: Vec<_> = records().iter().map(|r| normalize(&r.text).unwrap()).collect();
    let vocab = build_vocab(&texts).unwrap();
    let config = ModelConfig {
        vocab_size: vocab.len(),
        char_dim: vocab.dim(),
        conv1_filters: 4,
        conv2_filters: 3,
        lstm_hidden: 3,
        num_labels: 2,
        peepholes: true,
    };
    let params = ModelParams::init(config, &mut Rng::seed_from_u64(1)).unwrap();
    let vocab_path = dir.join("vocab.txt");
    let ckpt_path = dir.join("m.ckpt");
    vocab.write(fs::File::create(&vocab_path).unwrap()).unwrap();
    Checkpoint::new(&vocab, vec!["aa".into(), "bb".into()], params)
        .unwrap()
        .save(&ckpt_path)
        .unwrap();
    (vocab_path.display().to_string(), ckpt_path.display().to_string())
}

#[test]
fn neural_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, ckpt) = write_model(dir.path());
    unsafe {
        let mut h = ptr::null_mut();
        let (v, c) = (cstr(&vocab), cstr(&ckpt));
        assert_eq!(c2v2l_model_load(v.as_ptr(), c.as_ptr(), &mut h), C2v2lStatus::Ok);
        assert_eq!(c2v2l_model_num_labels(h), 2);
        let mut label = ptr::null_mut();
        assert_eq!(c2v2l_model_label(h, 1, &mut label), C2v2lStatus::Ok);
        assert_eq!(take_string(label), "bb");
        assert_eq!(c2v2l_model_label(h, 2, &mut label), C2v2lStatus::InvalidArgument);

        let mut probs = [0.0f64; 2];
        let text = cstr("abc xyz");
        assert_eq!(c2v2l_model_predict(h, text.as_ptr(), probs.as_mut_ptr(), 2), C2v2lStatus::Ok);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(c2v2l_model_predict(h, text.as_ptr(), probs.as_mut_ptr(), 3), C2v2lStatus::InvalidArgument);
        c2v2l_model_free(h);
        assert_eq!(c2v2l_model_num_labels(ptr::null()), 0);
    }
}

#[test]
fn mismatched_vocabulary_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = write_model(dir.path());
    let other = dir.path().join("other.txt");
    build_vocab(&[normalize("qqq www").unwrap()])
        .unwrap()
        .write(fs::File::create(&other).unwrap())
        .unwrap();
    unsafe {
        let mut h = ptr::null_mut();
        let (v, c) = (cstr(other.to_str().unwrap()), cstr(&ckpt));
        assert_eq!(c2v2l_model_load(v.as_ptr(), c.as_ptr(), &mut h), C2v2lStatus::Mismatch);
        assert!(last_error().contains("hash"));
        assert!(h.is_null());
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(c2v2l_normalize(ptr::null(), &mut out), C2v2lStatus::NullPointer);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
    assert!(!last_error().is_empty());
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    fs::write(
        &src,
        "#include \"c2v2l.h\"\nint main(void) { C2v2lModel *m = 0; return (int)c2v2l_model_num_labels(m) + (C2V2L_STATUS_OK); }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&header)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
