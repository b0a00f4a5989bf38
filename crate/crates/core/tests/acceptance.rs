//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gentrans::classes::{ClassTable, PatternElem};
use gentrans::cli::{parse_args, translate_loaded, ParsedArgs, Status, TranslatorConfig};
use gentrans::dest_phase::{resolve_guarded_procedures, Endian};
use gentrans::diag::{Diagnostic, Phase};
use gentrans::expr::{self, SymbolTable, Value};
use gentrans::lexer::{render, tokenize, tokenize_source, Pos, Token};
use gentrans::pipeline::{translate_str, Options};
use gentrans::source_phase::{run_source_phase, IntermediateStream, SourceOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NOP_TIME_LIMIT: Duration = Duration::from_secs(1);
const SPLIT_SAMPLES: usize = 200;
const ENGINE_PROGRAMS: usize = 100;
const EMISSION_SAMPLES: usize = 300;
const EXPR_SAMPLES: usize = 1000;
const EXPR_MAX_DEPTH: u32 = 4;
const GUARD_SAMPLES: usize = 300;
const MAX_GUARDS: usize = 3;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bytes_of(files: &[(&str, &str)], opts: &Options) -> Result<Vec<u8>, String> {
    let out = translate_str(files, opts);
    out.result.map(|t| t.image.bytes).map_err(|e| e.to_string())
}

fn bytes(files: &[(&str, &str)]) -> Result<Vec<u8>, String> {
    bytes_of(files, &Options::default())
}

fn source_only(src: &str) -> Result<(IntermediateStream, ClassTable, Vec<Diagnostic>), String> {
    let lines = tokenize_source(src, "src").map_err(|e| e.to_string())?;
    let mut table = ClassTable::new();
    let mut diags = Vec::new();
    let stream = run_source_phase(&lines, &mut SymbolTable::new(), &mut table, &SourceOptions::default(), &mut diags)
        .map_err(|e| e.to_string())?;
    Ok((stream, table, diags))
}

fn toks(s: &str) -> Vec<Token> {
    tokenize(s, &Pos::synthetic()).expect("test input tokenizes")
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let out = bytes(&[("x86.gt", "class nop {db 0x90}"), ("prog.src", "nop")])?;
    let elapsed = start.elapsed();
    ensure(out == [0x90], || format!("got {out:02X?}"))?;
    ensure(elapsed < NOP_TIME_LIMIT, || format!("took {elapsed:?}"))
}

fn criterion_2() -> Check {
    let big = Options { endian: Endian::Big, ..Default::default() };
    for (word, le) in [("0xE1A00000", [0x00, 0x00, 0xA0, 0xE1]), ("0x13", [0x13, 0x00, 0x00, 0x00])] {
        let rules = format!("class nop {{dd {word}}}");
        let got = bytes(&[("r.gt", &rules), ("p.src", "nop")])?;
        ensure(got == le, || format!("dd {word}: {got:02X?}"))?;
        let mut be = le;
        be.reverse();
        let got = bytes_of(&[("r.gt", &rules), ("p.src", "nop")], &big)?;
        ensure(got == be, || format!("dd {word} big-endian: {got:02X?}"))?;
    }
    Ok(())
}

fn criterion_3() -> Check {
    let src = "I = 'A'\n@while I <= 'Z'\ndb I\nI = I + 1\n@endw";
    let got = bytes(&[("p", src)])?;
    let want: Vec<u8> = (b'A'..=b'Z').collect();
    ensure(got == want, || format!("got {:?}", String::from_utf8_lossy(&got)))
}

fn criterion_4() -> Check {
    let out = translate_str(
        &[("p", "@print \"Output Processing ...\"\n#print \"Input Processing ...\"")],
        &Options::default(),
    );
    out.result.map_err(|e| e.to_string())?;
    let log: Vec<(Phase, String)> = out
        .diagnostics
        .iter()
        .filter_map(|d| match d {
            Diagnostic::Print { phase, message, .. } => Some((*phase, message.clone())),
            Diagnostic::Error(_) => None,
        })
        .collect();
    let want =
        vec![(Phase::Source, "Input Processing ...".to_string()), (Phase::Dest, "Output Processing ...".to_string())];
    ensure(log == want, || format!("log {log:?}"))
}

fn criterion_5() -> Check {
    let (stream, _, _) = source_only("class Sum x + y {S1(x, y)}\nclass Sum x + y {S2(x, y)}\nSum a + b")?;
    ensure(stream.text() == ["S2 ( a , b )"], || format!("stream {:?}", stream.text()))
}

/// Brute force: every top-level position of `sep` that leaves both sides
/// non-empty.
fn top_level_splits(args: &[Token], sep: &str) -> Vec<usize> {
    (1..args.len().saturating_sub(1))
        .filter(|&i| {
            let depth: i32 = args[..i]
                .iter()
                .map(|t| match t.text.as_str() {
                    "(" => 1,
                    ")" => -1,
                    _ => 0,
                })
                .sum();
            depth == 0 && args[i].text == sep
        })
        .collect()
}

fn random_sum_product(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.3) {
        if depth > 0 && rng.gen_bool(0.3) {
            return format!("( {} )", random_sum_product(rng, depth - 1));
        }
        return ["a", "b", "c", "d", "e"].choose(rng).unwrap().to_string();
    }
    let op = if rng.gen_bool(0.5) { "+" } else { "*" };
    format!("{} {op} {}", random_sum_product(rng, depth - 1), random_sum_product(rng, depth - 1))
}

fn separator_of(table: &ClassTable, seq: usize) -> Option<String> {
    let def = table.defs().iter().find(|d| d.seq == seq)?;
    def.pattern.fixed.iter().find_map(|e| match e {
        PatternElem::Sep(run) => Some(render(run)),
        PatternElem::Param(_) => None,
    })
}

fn criterion_6() -> Check {
    let rules = "class E x {x}\nclass E x * y {E(x) * E(y)}\nclass E x + y {E(x) + E(y)}";
    let (_, table, _) = source_only(rules)?;

    let check = |input: &str| -> Check {
        let args = toks(input);
        let (def, binding) = table.resolve("E", &args).ok_or_else(|| format!("`{input}`: no match"))?;
        let got_sep = separator_of(&table, def.seq);
        let (want_sep, want_x, want_y) =
            match ["+", "*"].iter().find_map(|s| top_level_splits(&args, s).last().map(|&i| (*s, i))) {
                Some((s, i)) => (Some(s.to_string()), render(&args[..i]), Some(render(&args[i + 1..]))),
                None => (None, render(&args), None),
            };
        ensure(got_sep == want_sep, || format!("`{input}`: definition {got_sep:?}, expected {want_sep:?}"))?;
        ensure(binding.text("x").as_deref() == Some(want_x.as_str()), || {
            format!("`{input}`: x = {:?}, expected {want_x:?}", binding.text("x"))
        })?;
        ensure(binding.text("y") == want_y, || format!("`{input}`: y = {:?}, expected {want_y:?}", binding.text("y")))
    };

    check("a * b + c")?;
    let args = toks("a * b + c");
    let (_, b) = table.resolve("E", &args).unwrap();
    ensure(b.text("x").as_deref() == Some("a * b") && b.text("y").as_deref() == Some("c"), || {
        "a * b + c did not bind x = a * b, y = c".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut seen = 0;
    while seen < SPLIT_SAMPLES {
        let e = random_sum_product(&mut rng, 4);
        let args = toks(&e);
        let ops = args.iter().filter(|t| t.text == "+" || t.text == "*").count();
        if ops < 2 {
            continue;
        }
        check(&e)?;
        seen += 1;
    }
    Ok(())
}

fn criterion_7() -> Check {
    let base = "class E x {x}\nclass E x * y {[E(x) * E(y)]}\n";
    let left = format!("{base}class E x * y * z\n{{[E(x*y) * E(z)]}}\nE a * b * c");
    let right = format!("{base}class E x * y * z\n{{[E(x) * E(y*z)]}}\nE a * b * c");
    let (s, _, _) = source_only(&left)?;
    ensure(s.text() == ["[ [ a * b ] * c ]"], || format!("left: {:?}", s.text()))?;
    let (s, _, _) = source_only(&right)?;
    ensure(s.text() == ["[ a * [ b * c ] ]"], || format!("right: {:?}", s.text()))
}

#[derive(Debug, Clone)]
enum Item {
    Ref(usize),
    Guard(usize, Vec<Item>),
}

fn guard_program(rng: &mut ChaCha8Rng) -> (usize, Vec<Item>) {
    let n = rng.gen_range(1..=MAX_GUARDS);
    let mut top: Vec<Item> = Vec::new();
    // Guards are placed in id order; each goes top-level or inside an earlier one.
    fn insert(items: &mut [Item], target: usize, item: Item) -> bool {
        for it in items.iter_mut() {
            if let Item::Guard(id, body) = it {
                if *id == target {
                    body.push(item);
                    return true;
                }
                if insert(body, target, item.clone()) {
                    return true;
                }
            }
        }
        false
    }
    for g in 0..n {
        let item = Item::Guard(g, Vec::new());
        if g > 0 && rng.gen_bool(0.3) {
            let parent = rng.gen_range(0..g);
            insert(&mut top, parent, item);
        } else {
            top.push(item);
        }
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        let target = rng.gen_range(0..n);
        let place = rng.gen_range(0..=n);
        if place == n || !insert(&mut top, place, Item::Ref(target)) {
            top.insert(0, Item::Ref(target));
        }
    }
    (n, top)
}

fn render_guards(items: &[Item], out: &mut String) {
    for it in items {
        match it {
            Item::Ref(g) => out.push_str(&format!("dd P{g}\n")),
            Item::Guard(g, body) => {
                out.push_str(&format!("@if [P{g}]\nP{g}:\ndb {}\n", g + 1));
                render_guards(body, out);
                out.push_str("@endif\n");
            }
        }
    }
}

/// (reference target, enclosing guards) and (guard, enclosing guards).
fn guard_facts(
    items: &[Item],
    stack: &mut Vec<usize>,
    refs: &mut Vec<(usize, Vec<usize>)>,
    guards: &mut Vec<(usize, Vec<usize>)>,
) {
    for it in items {
        match it {
            Item::Ref(g) => refs.push((*g, stack.clone())),
            Item::Guard(g, body) => {
                guards.push((*g, stack.clone()));
                stack.push(*g);
                guard_facts(body, stack, refs, guards);
                stack.pop();
            }
        }
    }
}

/// Largest subset S with S = step(S), by enumeration of all 2^n subsets.
fn brute_force_inclusion(n: usize, items: &[Item]) -> Vec<bool> {
    let (mut refs, mut guards) = (Vec::new(), Vec::new());
    guard_facts(items, &mut Vec::new(), &mut refs, &mut guards);
    guards.sort();
    let inc = |mask: u32, g: usize| mask & (1 << g) != 0;
    let step = |mask: u32| -> u32 {
        let mut next = 0;
        for (g, ancestors) in &guards {
            let alive = ancestors.iter().all(|&a| inc(mask, a));
            let used = refs.iter().any(|(t, enc)| t == g && !enc.contains(g) && enc.iter().all(|&a| inc(mask, a)));
            if alive && used {
                next |= 1 << g;
            }
        }
        next
    };
    let fixed: Vec<u32> = (0..1u32 << n).filter(|&m| step(m) == m).collect();
    let best = *fixed.iter().max_by_key(|m| m.count_ones()).expect("a fixed point exists");
    assert!(fixed.iter().all(|&m| m & best == m), "largest fixed point contains all others");
    (0..n).map(|g| inc(best, g)).collect()
}

fn criterion_8() -> Check {
    ensure(bytes(&[("p", "db 1\n@if [P1]\nP1:\ndb 0xC3\n@endif")])? == [1], || "unreferenced block emitted".into())?;
    ensure(bytes(&[("p", "dd P1\n@if [P1]\nP1:\ndb 0xC3\n@endif")])? == [4, 0, 0, 0, 0xC3], || {
        "referenced block missing".into()
    })?;
    let chain = "db 9\n@if [B]\nB:\ndd A\n@endif\n@if [A]\nA:\ndb 1\n@endif";
    ensure(bytes(&[("p", chain)])? == [9], || "chain not eliminated".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..GUARD_SAMPLES {
        let (n, items) = guard_program(&mut rng);
        let mut src = String::new();
        render_guards(&items, &mut src);
        let want = brute_force_inclusion(n, &items);
        let lines = tokenize_source(&src, "p").map_err(|e| e.to_string())?;
        let stream = IntermediateStream { lines: lines.into_iter().filter(|l| !l.is_blank()).collect() };
        let got = resolve_guarded_procedures(&stream).map_err(|e| e.to_string())?;
        let got_by_label: Vec<bool> = (0..n).map(|g| got.is_included(&format!("P{g}"))).collect();
        ensure(got.labels.len() == n && got_by_label == want, || {
            format!("{src}\ngot {got_by_label:?}, expected {want:?}")
        })?;

        let (mut refs, mut guards) = (Vec::new(), Vec::new());
        guard_facts(&items, &mut Vec::new(), &mut refs, &mut guards);
        let live = |enc: &Vec<usize>| enc.iter().all(|&a| want[a]);
        let result = translate_str(&[("p", &src)], &Options::default()).result;
        if refs.iter().any(|(t, e)| live(e) && !want[*t]) {
            // a surviving reference to a label that only exists in dead code
            let err = result.err().map(|e| e.to_string()).unwrap_or_default();
            ensure(err.contains("undefined identifier"), || format!("{src}\nexpected undefined label, got {err:?}"))?;
            continue;
        }
        let out = result.map_err(|e| format!("{src}\n{e}"))?;
        let labels: BTreeSet<String> = out.image.labels.keys().cloned().collect();
        let want_labels: BTreeSet<String> = (0..n).filter(|&g| want[g]).map(|g| format!("P{g}")).collect();
        ensure(labels == want_labels, || format!("{src}\nlabels {labels:?}"))?;
        let size = refs.iter().filter(|(_, e)| live(e)).count() * 4
            + guards.iter().filter(|(g, e)| want[*g] && live(e)).count();
        ensure(out.image.len() == size, || format!("{src}\nimage {} bytes, expected {size}", out.image.len()))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Stmt {
    Print(String),
    If(String, Vec<Stmt>, Option<Vec<Stmt>>),
    While(usize, i64, Vec<Stmt>),
    Repeat(usize, i64, Option<String>, Vec<Stmt>),
    Break(u32),
}

struct ProgramGen {
    rng: ChaCha8Rng,
    counters: usize,
}

impl ProgramGen {
    fn cond(&mut self, live: &[usize]) -> String {
        match (live.choose(&mut self.rng), self.rng.gen_range(0..3)) {
            (Some(c), 0) => format!("C{c} % 2 = 0"),
            (Some(c), 1) => format!("C{c} > {}", self.rng.gen_range(0..4)),
            _ => format!("{}", self.rng.gen_range(0..2)),
        }
    }

    fn block(&mut self, depth: u32, live: &mut Vec<usize>) -> Vec<Stmt> {
        let n = self.rng.gen_range(1..=3);
        (0..n).map(|_| self.stmt(depth, live)).collect()
    }

    fn stmt(&mut self, depth: u32, live: &mut Vec<usize>) -> Stmt {
        let choice = if depth == 0 { 0 } else { self.rng.gen_range(0..5) };
        match choice {
            1 => {
                let c = self.cond(live);
                let then = self.block(depth - 1, live);
                let otherwise = self.rng.gen_bool(0.5).then(|| self.block(depth - 1, live));
                Stmt::If(c, then, otherwise)
            }
            2 => {
                let id = self.counters;
                self.counters += 1;
                live.push(id);
                let body = self.block(depth - 1, live);
                live.pop();
                Stmt::While(id, self.rng.gen_range(0..4), body)
            }
            3 => {
                let id = self.counters;
                self.counters += 1;
                live.push(id);
                let until = self.rng.gen_bool(0.5).then(|| format!("C{id} > {}", self.rng.gen_range(0..3)));
                let body = self.block(depth - 1, live);
                live.pop();
                Stmt::Repeat(id, self.rng.gen_range(1..4), until, body)
            }
            4 if !live.is_empty() => Stmt::Break(self.rng.gen_range(0..=live.len().min(3)) as u32),
            _ => {
                let vars: Vec<String> = live.iter().map(|c| format!(", \" \", C{c}")).collect();
                Stmt::Print(format!("\"p{}\"{}", self.rng.gen_range(0..100), vars.concat()))
            }
        }
    }
}

fn render_program(stmts: &[Stmt], s: char, out: &mut String) {
    for st in stmts {
        match st {
            Stmt::Print(m) => out.push_str(&format!("{s}print {m}\n")),
            Stmt::If(c, then, otherwise) => {
                out.push_str(&format!("{s}if {c}\n"));
                render_program(then, s, out);
                if let Some(o) = otherwise {
                    out.push_str(&format!("{s}else\n"));
                    render_program(o, s, out);
                }
                out.push_str(&format!("{s}endif\n"));
            }
            Stmt::While(c, limit, body) => {
                out.push_str(&format!("C{c} = 0\n{s}while C{c} < {limit}\nC{c} = C{c} + 1\n"));
                render_program(body, s, out);
                out.push_str(&format!("{s}endw\n"));
            }
            Stmt::Repeat(c, times, until, body) => {
                out.push_str(&format!("C{c} = 0\n{s}repeat {times}\nC{c} = C{c} + 1\n"));
                render_program(body, s, out);
                out.push_str(&format!("{s}until {}\n", until.as_deref().unwrap_or("")));
            }
            Stmt::Break(0) => out.push_str(&format!("{s}break 0\n")),
            Stmt::Break(1) => out.push_str(&format!("{s}break\n")),
            Stmt::Break(n) => out.push_str(&format!("{s}break {n}\n")),
        }
    }
}

fn trace(src: &str) -> Result<Vec<(String, bool)>, String> {
    let out = translate_str(&[("p", src)], &Options::default());
    out.result.map_err(|e| e.to_string())?;
    Ok(out
        .diagnostics
        .iter()
        .filter_map(|d| match d {
            Diagnostic::Print { phase, message, .. } => Some((message.clone(), *phase == Phase::Source)),
            Diagnostic::Error(_) => None,
        })
        .collect())
}

fn criterion_9() -> Check {
    let mut gen = ProgramGen { rng: ChaCha8Rng::seed_from_u64(9), counters: 0 };
    let mut nonempty = 0;
    for _ in 0..ENGINE_PROGRAMS {
        gen.counters = 0;
        let prog = gen.block(4, &mut Vec::new());
        let (mut hash, mut at) = (String::new(), String::new());
        render_program(&prog, '#', &mut hash);
        render_program(&prog, '@', &mut at);
        let a = trace(&hash).map_err(|e| format!("{hash}\n{e}"))?;
        let b = trace(&at).map_err(|e| format!("{at}\n{e}"))?;
        ensure(a.iter().all(|(_, src)| *src) && b.iter().all(|(_, src)| !*src), || "print from wrong phase".into())?;
        let a: Vec<String> = a.into_iter().map(|(m, _)| m).collect();
        let b: Vec<String> = b.into_iter().map(|(m, _)| m).collect();
        ensure(a == b, || format!("{hash}\n# trace {a:?}\n@ trace {b:?}"))?;
        nonempty += usize::from(!a.is_empty());
    }
    ensure(nonempty * 2 > ENGINE_PROGRAMS, || format!("only {nonempty} programs printed anything"))
}

fn criterion_10() -> Check {
    let codes = [('b', 1usize), ('w', 2), ('d', 4), ('p', 6), ('q', 8)];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..EMISSION_SAMPLES {
        let (c, unit) = *codes.choose(&mut rng).unwrap();
        let values: Vec<i64> = (0..rng.gen_range(1..8))
            .map(|_| match rng.gen_range(0..3) {
                0 => rng.gen_range(-300..300),
                1 => rng.gen(),
                _ => rng.gen_range(0..1i64 << 20),
            })
            .collect();
        let list: Vec<String> = values.iter().map(|v| format!("0x{:X}", *v as u64)).collect();
        let got = bytes(&[("p", &format!("d{c} {}", list.join(", ")))])?;
        let want: Vec<u8> =
            values.iter().flat_map(|&v| (0..unit).map(move |k| ((v as u64) >> (8 * k)) as u8)).collect();
        ensure(got.len() == unit * values.len(), || format!("d{c}: {} bytes", got.len()))?;
        ensure(got == want, || format!("d{c} {list:?}: {got:02X?}"))?;

        let n = rng.gen_range(0..6usize);
        let one = bytes(&[("p", &format!("d{c} {}", list[0]))])?;
        let reserved = bytes(&[("p", &format!("r{c} {n}, {}", list[0]))])?;
        ensure(reserved == one.repeat(n), || format!("r{c} {n}, {}: {reserved:02X?}", list[0]))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Ex {
    Lit(i64),
    Un(&'static str, Box<Ex>),
    Bin(&'static str, Box<Ex>, Box<Ex>),
}

const BINARY: [(&str, u8); 18] = [
    ("||", 1),
    ("&&", 2),
    ("|", 3),
    ("^", 4),
    ("&", 5),
    ("=", 6),
    ("!=", 6),
    ("<", 7),
    ("<=", 7),
    (">", 7),
    (">=", 7),
    ("<<", 8),
    (">>", 8),
    ("+", 9),
    ("-", 9),
    ("*", 10),
    ("/", 10),
    ("%", 10),
];

fn prec(op: &str) -> u8 {
    BINARY.iter().find(|(o, _)| *o == op).map(|(_, p)| *p).unwrap()
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> Ex {
    if depth == 0 || rng.gen_bool(0.25) {
        return Ex::Lit(if rng.gen_bool(0.7) { rng.gen_range(0..20) } else { rng.gen_range(0..1i64 << 40) });
    }
    if rng.gen_bool(0.15) {
        let op = ["-", "!", "~"].choose(rng).unwrap();
        return Ex::Un(op, Box::new(random_expr(rng, depth - 1)));
    }
    let (op, _) = *BINARY.choose(rng).unwrap();
    Ex::Bin(op, Box::new(random_expr(rng, depth - 1)), Box::new(random_expr(rng, depth - 1)))
}

/// Direct recursive evaluation on the tree. `None` marks an evaluation
/// error (division by zero, bad shift).
fn oracle(e: &Ex) -> Option<i64> {
    Some(match e {
        Ex::Lit(v) => *v,
        Ex::Un("-", a) => oracle(a)?.wrapping_neg(),
        Ex::Un("!", a) => (oracle(a)? == 0) as i64,
        Ex::Un(_, a) => !oracle(a)?,
        Ex::Bin("&&", a, b) => (oracle(a)? != 0 && oracle(b)? != 0) as i64,
        Ex::Bin("||", a, b) => (oracle(a)? != 0 || oracle(b)? != 0) as i64,
        Ex::Bin(op, a, b) => {
            let (x, y) = (oracle(a)?, oracle(b)?);
            match *op {
                "|" => x | y,
                "^" => x ^ y,
                "&" => x & y,
                "=" => (x == y) as i64,
                "!=" => (x != y) as i64,
                "<" => (x < y) as i64,
                "<=" => (x <= y) as i64,
                ">" => (x > y) as i64,
                ">=" => (x >= y) as i64,
                "<<" => x.checked_shl(u32::try_from(y).ok().filter(|s| *s < 64)?)?,
                ">>" => x.checked_shr(u32::try_from(y).ok().filter(|s| *s < 64)?)?,
                "+" => x.wrapping_add(y),
                "-" => x.wrapping_sub(y),
                "*" => x.wrapping_mul(y),
                "/" => x.checked_div(y).or_else(|| (y == -1).then(|| x.wrapping_neg()))?,
                "%" => x.checked_rem(y).or_else(|| (y == -1).then_some(0))?,
                _ => unreachable!(),
            }
        }
    })
}

/// Fewest parentheses: a child is wrapped when it binds looser than its
/// parent, or equally on the right (all binary operators are left
/// associative).
fn show(e: &Ex, parent: u8, right: bool) -> String {
    match e {
        Ex::Lit(v) => v.to_string(),
        Ex::Un(op, a) => format!("{op} {}", show(a, u8::MAX, false)),
        Ex::Bin(op, a, b) => {
            let p = prec(op);
            let s = format!("{} {op} {}", show(a, p, false), show(b, p, true));
            if p < parent || (p == parent && right) {
                format!("( {s} )")
            } else {
                s
            }
        }
    }
}

fn criterion_11() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    ensure(expr::eval(&toks("1 << 4 | 3"), &SymbolTable::new()).ok() == Some(Value::Int(19)), || "1 << 4 | 3".into())?;
    let mut checked = 0;
    while checked < EXPR_SAMPLES {
        let e = random_expr(&mut rng, EXPR_MAX_DEPTH);
        let Some(want) = oracle(&e) else { continue };
        let text = show(&e, 0, false);
        let got = expr::eval(&toks(&text), &SymbolTable::new()).map_err(|err| format!("`{text}`: {err}"))?;
        ensure(got == Value::Int(want), || format!("`{text}`: {got:?}, expected {want}"))?;
        checked += 1;
    }
    Ok(())
}

fn criterion_12() -> Check {
    let rules = "class #define a b {a := b}\nclass #define a(x) b {class a(x){b}}";
    let got = bytes(&[("define.gt", rules), ("p", "#define INC(v) v + 1\ndb INC(4)")])?;
    ensure(got == [5], || format!("got {got:02X?}"))
}

fn criterion_13() -> Check {
    // Counters: O outer iterations, I inner iterations, A inner work after
    // the break point, B outer work after the inner loop.
    let nest = |brk: &str, s: char| {
        format!(
            "O = 0\nI = 0\nA = 0\nB = 0\n{s}repeat 3\nO = O + 1\n{s}repeat 4\nI = I + 1\n{s}if I % 2 = 0\n{s}{brk}\n{s}endif\nA = A + 1\n{s}until\nB = B + 1\n{s}until\n{s}print O, \" \", I, \" \", A, \" \", B\n"
        )
    };
    let cases = [("break 0", "3 12 6 3"), ("break", "3 6 3 3"), ("break 2", "1 2 1 0")];
    for s in ['#', '@'] {
        for (brk, want) in cases {
            let got = trace(&nest(brk, s))?;
            ensure(got.len() == 1 && got[0].0 == want, || format!("{s}{brk}: {got:?}, expected {want}"))?;
        }
    }
    Ok(())
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

fn criterion_14() -> Check {
    let mut programs: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "src"))
        .collect();
    programs.sort();
    ensure(!programs.is_empty(), || "empty corpus".into())?;
    for src in &programs {
        let rules = src.with_extension("gt");
        let mut argv = vec!["gentrans".to_string()];
        if rules.exists() {
            argv.extend(["--rules".into(), rules.display().to_string()]);
        }
        argv.extend(["--in".into(), src.display().to_string(), "--format".into(), "listing".into()]);
        let ParsedArgs::Run(config) = parse_args(&argv) else { return Err(format!("bad argv {argv:?}")) };
        let run = |config: &TranslatorConfig| {
            let rules: Vec<(String, Vec<u8>)> =
                config.rules.iter().map(|p| (p.display().to_string(), std::fs::read(p).unwrap())).collect();
            let input = std::fs::read(&config.input).unwrap();
            translate_loaded(config, &rules, (&config.input.display().to_string(), &input))
        };
        let (r1, o1) = run(&config);
        let (r2, o2) = run(&config);
        ensure(r1.status == Status::Ok, || format!("{}: {:?}", src.display(), r1.diagnostics))?;
        ensure(o1 == o2 && r1 == r2, || format!("{}: runs differ", src.display()))?;
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("x86 nop emits 0x90", criterion_1),
        ("ARM and RISC-V nop words, both byte orders", criterion_2),
        ("A..Z loop emits 26 bytes", criterion_3),
        ("source prints precede destination prints", criterion_4),
        ("newest class definition wins", criterion_5),
        ("definition order sets precedence, rightmost top-level split", criterion_6),
        ("left and right associative encodings", criterion_7),
        ("dead guarded procedures are eliminated", criterion_8),
        ("# and @ control engines agree", criterion_9),
        ("emission length and little-endian laws", criterion_10),
        ("expression evaluator matches recursive oracle", criterion_11),
        ("#define emulation emits INC(4) as 5", criterion_12),
        ("break levels 0, 1 and 2", criterion_13),
        ("corpus runs are deterministic", criterion_14),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match result {
            Ok(()) => println!("criterion {:>2} PASS  {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}\n    {}", i + 1, why.replace('\n', "\n    "));
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
