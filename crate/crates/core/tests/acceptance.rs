//! Acceptance runner: prints one PASS/FAIL line per criterion.
//!
//! The exit status is nonzero on failure only when `ACCEPTANCE_STRICT` is
//! set, so that a failing criterion is reported without aborting the rest of
//! the test suite.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use common::checks::{self, Outcome};

fn report(o: &Outcome, secs: f64) {
    println!("{} {}: {} [{secs:.1} s]", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn run(outcomes: &mut Vec<Outcome>, f: impl FnOnce() -> Outcome) {
    let t = Instant::now();
    let o = f();
    report(&o, t.elapsed().as_secs_f64());
    outcomes.push(o);
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-ensembles");
    let mut outcomes = Vec::new();
    run(&mut outcomes, checks::a1_gamma5_symmetry);
    run(&mut outcomes, checks::a2_free_field);
    run(&mut outcomes, checks::a3_block_form);
    run(&mut outcomes, checks::a4_schur_equivalence);
    run(&mut outcomes, checks::a5_galerkin_theorem);
    run(&mut outcomes, || checks::a6_complexities(&dir));

    let t = Instant::now();
    match checks::desk_members(&dir) {
        Ok((cfg, members)) => {
            let prep = t.elapsed().as_secs_f64();
            println!("   ensemble and eta_min for n = 64, beta = 6 ready [{prep:.1} s]");
            let t = Instant::now();
            let (a7, rows) = checks::a7_solver_quality(&cfg, &members);
            report(&a7, t.elapsed().as_secs_f64());
            outcomes.push(a7);
            run(&mut outcomes, || checks::a8_odd_even(&dir));
            run(&mut outcomes, || checks::a9_schedules(&cfg, &members, &rows));
        }
        Err(e) => {
            for id in ["A7", "A8", "A9"] {
                let o = Outcome { id, pass: false, detail: format!("desk ensemble failed: {e}") };
                report(&o, 0.0);
                outcomes.push(o);
            }
        }
    }
    run(&mut outcomes, checks::a10_kaczmarz);
    run(&mut outcomes, checks::a11_plaquette);

    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    if passed < outcomes.len() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
