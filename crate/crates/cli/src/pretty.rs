use std::fmt::Write as _;

use crn_core::model::{Status, Verdict};
use crn_core::report::{ImplicationStatus, SystemReport};

use crate::{ClassifyOutput, SimulateOutput, StationaryOutput};

fn verdict(v: &Verdict) -> String {
    match (&v.status, &v.witness) {
        (Status::Holds, _) => "holds".into(),
        (Status::Undetermined, _) => "undetermined".into(),
        (Status::Fails, Some(w)) => format!("fails at {:?} ({}: {} vs {})", w.state, w.condition, w.lhs, w.rhs),
        (Status::Fails, None) => "fails".into(),
    }
}

fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

pub fn analyze(r: &SystemReport) -> String {
    let g = &r.graph;
    let mut s = String::new();
    let _ = writeln!(s, "species            {}", g.species.join(" "));
    let _ = writeln!(s, "complexes          {}", g.complexes);
    let _ = writeln!(s, "reactions          {}", g.reactions);
    let _ = writeln!(s, "reversible         {}", g.reversible);
    let _ = writeln!(s, "weakly reversible  {}", g.weakly_reversible);
    let _ = writeln!(s, "deficiency         {}", g.deficiency);
    let _ = writeln!(s, "linkage classes    {}", g.linkage_class_count);
    let _ = writeln!(s, "dim S              {}", g.stoich_dim);
    let opt = |c: &Option<Vec<f64>>| c.as_deref().map_or("none".to_string(), vector);
    let _ = writeln!(s, "\nreaction balanced state  {}", opt(&r.det.rb_state));
    let _ = writeln!(s, "complex balanced state   {}", opt(&r.det.cb_state));
    let _ = writeln!(s, "cycle balanced system    {}", r.det.cyb_system);
    let _ = writeln!(s, "RVB states found         {}", r.det.rvb_states.len());
    for c in &r.det.rvb_states {
        let _ = writeln!(s, "  {}", vector(c));
    }
    for c in &r.stoch {
        let _ = writeln!(
            s,
            "\ncomponent of {:?}: {} states{}{}{}",
            c.seed,
            c.states,
            if c.closed { ", closed" } else { "" },
            if c.truncated { ", truncated" } else { "" },
            if c.active { ", active" } else { "" },
        );
        if let Some(m) = &c.measure {
            let _ = writeln!(s, "  rb   {}", verdict(&m.rb));
            let _ = writeln!(s, "  cb   {}", verdict(&m.cb));
            let _ = writeln!(s, "  rvb  {}", verdict(&m.rvb));
            let _ = writeln!(s, "  cyb  {}", verdict(&m.cyb));
            let _ = writeln!(s, "  skipped near the box boundary: {}", m.boundary_skipped);
        }
        if let Some(n) = &c.note {
            let _ = writeln!(s, "  {n}");
        }
    }
    let _ = writeln!(s, "\nimplications");
    for i in &r.implications {
        let status = match i.status {
            ImplicationStatus::Verified => "verified",
            ImplicationStatus::Violated => "VIOLATED",
            ImplicationStatus::NotApplicable => "n/a",
        };
        let _ = write!(s, "  {:<32} {status}", i.id);
        if let Some(d) = &i.detail {
            let _ = write!(s, " ({d})");
        }
        s.push('\n');
    }
    s.trim_end().to_string()
}

pub fn classify(c: &ClassifyOutput) -> String {
    let r = &c.report;
    format!(
        "state {}\nrb   {}\ncb   {}\nrvb  {}\ncyb  {}\nequilibrium {} (|drift| = {:e})",
        vector(&c.state),
        verdict(&r.rb),
        verdict(&r.cb),
        verdict(&r.rvb),
        verdict(&r.cyb),
        verdict(&r.is_equilibrium),
        r.drift_norm
    )
}

pub fn stationary(o: &StationaryOutput) -> String {
    let mut s = String::new();
    let c = &o.component;
    let _ = writeln!(
        s,
        "component of {:?}: {} states, closed {}, truncated {}",
        c.seed, c.states, c.closed, c.truncated
    );
    let _ = writeln!(s, "solver {:?}, residual {:e}", o.method, o.residual);
    let _ = writeln!(s, "stationary  {}", verdict(&o.stationary));
    let _ = writeln!(s, "rb   {}", verdict(&o.measure.rb));
    let _ = writeln!(s, "cb   {}", verdict(&o.measure.cb));
    let _ = writeln!(s, "rvb  {}", verdict(&o.measure.rvb));
    let _ = writeln!(s, "cyb  {}", verdict(&o.measure.cyb));
    let _ = writeln!(s, "skipped near the box boundary: {}", o.measure.boundary_skipped);
    if let Some(p) = &o.poisson {
        match (&p.c, p.tv) {
            (Some(c), Some(tv)) => {
                let _ = writeln!(s, "product form at c = {}: TV {tv:e}", vector(c));
            }
            _ => {
                let _ = writeln!(s, "no complex balanced equilibrium; product form not compared");
            }
        }
    }
    let mut top: Vec<_> = o.distribution.iter().collect();
    top.sort_by(|a, b| b.p.total_cmp(&a.p));
    let _ = writeln!(s, "most likely states:");
    for w in top.iter().take(10) {
        let _ = writeln!(s, "  {:?}  {:.6e}", w.state, w.p);
    }
    s.trim_end().to_string()
}

pub fn simulate(o: &SimulateOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "init {:?}, seed {}, t_end {}, burn-in {}", o.init, o.seed, o.t_end, o.burn_in);
    if o.absorbed {
        let _ = writeln!(s, "initial state is absorbing");
    }
    if let Some(tv) = o.tv {
        let _ = writeln!(s, "TV to stationary distribution {tv:.6}");
    }
    let mut top: Vec<_> = o.occupancy.iter().collect();
    top.sort_by(|a, b| b.p.total_cmp(&a.p));
    let _ = writeln!(s, "most occupied states:");
    for w in top.iter().take(10) {
        let _ = writeln!(s, "  {:?}  {:.6}", w.state, w.p);
    }
    s.trim_end().to_string()
}
