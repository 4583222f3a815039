use hypnet::junction::Coupling;
use hypnet::models::{validate_source, StateBox};
use hypnet::Scenario;

/// One line of the check report.
pub struct Item {
    pub ok: bool,
    pub text: String,
}

pub struct Report {
    pub items: Vec<Item>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.ok)
    }

    fn push(&mut self, ok: bool, text: impl Into<String>) {
        self.items.push(Item { ok, text: text.into() });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for i in &self.items {
            out.push_str(if i.ok { "PASS " } else { "FAIL " });
            out.push_str(&i.text);
            out.push('\n');
        }
        out.push_str(if self.passed() { "check: PASS\n" } else { "check: FAIL\n" });
        out
    }
}

/// Relative half-width of the state box used to estimate source constants.
const SOURCE_BOX: f64 = 0.1;

pub fn run(scenario: &Scenario) -> Report {
    let mut report = Report { items: Vec::new() };
    if let Err(e) = scenario.validate() {
        report.push(false, format!("scenario: {e}"));
        return report;
    }
    let junction = scenario.junction().expect("validated");
    report.push(true, format!("scenario '{}': {} pipes, {} cells each", scenario.name, junction.n(), scenario.grid.cells));

    match junction.transversality_det(&junction.reference) {
        Ok(det) => {
            let mut text = format!("transversality determinant at reference: {det:.12e}");
            if matches!(junction.coupling, Coupling::MultiValve) {
                let prod: f64 = junction
                    .pipes
                    .iter()
                    .zip(&junction.reference)
                    .map(|(p, u)| p.width * p.eigenvalues(*u).map_or(f64::NAN, |e| e.1))
                    .product();
                text.push_str(&format!(" (product of b_i λ2_i: {prod:.12e})"));
            }
            report.push(det != 0.0 && det.is_finite(), text);
        }
        Err(e) => report.push(false, format!("transversality determinant: {e}")),
    }

    for (l, (model, u)) in junction.pipes.iter().zip(&junction.reference).enumerate() {
        match model.subsonic_margin(*u) {
            Ok(m) => report.push(m > 0.0, format!("pipe {l}: reference subsonic margin {m:.6}")),
            Err(e) => report.push(false, format!("pipe {l}: reference state {e}")),
        }
    }
    let initial = scenario.initial_pipes().expect("validated");
    for (l, (model, cells)) in junction.pipes.iter().zip(&initial).enumerate() {
        let mut worst = f64::INFINITY;
        let mut at = 0;
        for (i, u) in cells.iter().enumerate() {
            let m = model.subsonic_margin(*u).unwrap_or(f64::NEG_INFINITY);
            if m < worst {
                worst = m;
                at = i;
            }
        }
        report.push(worst > 0.0, format!("pipe {l}: initial data subsonic margin {worst:.6} (cell {at})"));
    }

    for (l, (model, u)) in junction.pipes.iter().zip(&junction.reference).enumerate() {
        let checked = StateBox::around(model, *u, SOURCE_BOX).and_then(|b| validate_source(model, *u, &b));
        match checked {
            Ok(r) => report.push(
                true,
                format!(
                    "pipe {l}: source support within x <= {:.4}, jump measure {:.4e}, Lipschitz constant {:.4e}",
                    r.support_bound, r.mu_total, r.lipschitz_hat
                ),
            ),
            Err(e) => report.push(false, format!("pipe {l}: source {e}")),
        }
    }

    match (scenario.simulator(), scenario.initial_state()) {
        (Ok(sim), Ok(state)) => {
            let dt = sim.cfl_dt(&state);
            let steps = (scenario.solver.t_end / dt).ceil();
            report.push(
                true,
                format!("CFL {}: initial dt {dt:.6e}, about {steps} steps to t = {}", scenario.solver.cfl, scenario.solver.t_end),
            );
        }
        (Err(e), _) | (_, Err(e)) => report.push(false, format!("solver: {e}")),
    }
    report
}
