//! Machine-checked inequalities and identities.

use serde::Serialize;

/// Where an audit was evaluated.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct AuditContext {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
}

/// Outcome of checking `lhs ≤ rhs` (or `lhs = rhs` for identities) at many sample points.
/// The reported sample is the one with the largest excess over its tolerance.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EstimateAudit {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub pass: bool,
    /// Vertex (or cell, or level index) of the worst sample.
    pub location_of_max: Option<usize>,
    pub identity: bool,
    /// Hard audits fail a run; soft ones only warn.
    pub hard: bool,
    pub samples: usize,
    pub context: AuditContext,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One sample of an audit: location, both sides and the tolerance.
pub type Sample = (usize, f64, f64, f64);

impl EstimateAudit {
    fn build(name: &str, identity: bool, samples: impl IntoIterator<Item = Sample>) -> Self {
        let excess = |s: &Sample| {
            let e = if identity { (s.1 - s.2).abs() - s.3 } else { s.1 - s.2 - s.3 };
            if e.is_nan() { f64::INFINITY } else { e }
        };
        let mut worst: Option<Sample> = None;
        let mut n = 0;
        let mut bad = false;
        for s in samples {
            n += 1;
            bad |= s.1.is_nan() || s.2.is_nan() || s.3.is_nan();
            if worst.as_ref().is_none_or(|w| excess(&s) > excess(w)) {
                worst = Some(s);
            }
        }
        let (loc, lhs, rhs, tol) = worst.map(|w| (Some(w.0), w.1, w.2, w.3)).unwrap_or((None, 0.0, 0.0, 0.0));
        let pass = n > 0 && !bad && if identity { (lhs - rhs).abs() <= tol } else { lhs <= rhs + tol };
        EstimateAudit {
            name: name.to_string(),
            lhs,
            rhs,
            tol,
            pass,
            location_of_max: loc,
            identity,
            hard: true,
            samples: n,
            context: AuditContext::default(),
            note: (n == 0).then(|| "no samples".to_string()),
        }
    }

    /// `lhs ≤ rhs + tol` at every sample.
    pub fn inequality(name: &str, samples: impl IntoIterator<Item = Sample>) -> Self {
        Self::build(name, false, samples)
    }

    /// `|lhs − rhs| ≤ tol` at every sample.
    pub fn identity(name: &str, samples: impl IntoIterator<Item = Sample>) -> Self {
        Self::build(name, true, samples)
    }

    pub fn soft(mut self) -> Self {
        self.hard = false;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.context.p = Some(p);
        self
    }

    pub fn with_mesh(mut self, id: String) -> Self {
        self.context.mesh = Some(id);
        self
    }

    pub fn with_level(mut self, t: f64) -> Self {
        self.context.level = Some(t);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Signed margin `rhs + tol − lhs` (identities: `tol − |lhs − rhs|`).
    pub fn margin(&self) -> f64 {
        if self.identity {
            self.tol - (self.lhs - self.rhs).abs()
        } else {
            self.rhs + self.tol - self.lhs
        }
    }
}
