//! Embedded fixtures for the warm-up relation matrices, compared as text.

use relmatch::relation::{relation, PredictionBatch};
use relmatch::SymMatrix;

use crate::Check;

pub struct Golden {
    pub name: &'static str,
    pub rows: [[f64; 3]; 4],
    pub fixture: &'static str,
}

/// Weak view: three samples of class 0 and one of class 2.
pub const WEAK: Golden = Golden {
    name: "relation of the weak batch",
    rows: [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
    fixture: "\
1 0 1 1
0 1 0 0
1 0 1 1
1 0 1 1
",
};

/// Strong view, first case: the class-0 rows are all split evenly with class 1.
pub const STRONG_SAME: Golden = Golden {
    name: "relation of strong batch, case 1",
    rows: [[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.0], [0.5, 0.5, 0.0]],
    fixture: "\
0.5 0 0.5 0.5
0 1 0 0
0.5 0 0.5 0.5
0.5 0 0.5 0.5
",
};

/// Strong view, second case: the class-0 rows scatter differently.
pub const STRONG_SCATTERED: Golden = Golden {
    name: "relation of strong batch, case 2",
    rows: [[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [0.5, 0.25, 0.25], [0.5, 0.0, 0.5]],
    fixture: "\
0.5 0 0.375 0.25
0 1 0.25 0.5
0.375 0.25 0.375 0.375
0.25 0.5 0.375 0.5
",
};

pub const ALL: [Golden; 3] = [WEAK, STRONG_SAME, STRONG_SCATTERED];

/// One line per row, entries separated by single spaces, shortest exact decimal form.
pub fn render(m: &SymMatrix) -> String {
    let n = m.dim();
    let mut out = String::new();
    for i in 0..n {
        let line: Vec<String> = (0..n).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn check(g: &Golden) -> Check {
    let t = std::time::Instant::now();
    let batch = PredictionBatch::from_rows(&g.rows).expect("fixture rows are probabilities");
    let text = render(&relation(&batch));
    let passed = text == g.fixture;
    let detail = if passed { "byte-identical".to_string() } else { format!("got\n{text}") };
    Check::new(g.name, passed, if passed { 0.0 } else { 1.0 }, 0.0, detail, t.elapsed())
}

pub fn check_all() -> Vec<Check> {
    ALL.iter().map(check).collect()
}
