//! Plain-text round-trip serialization of generated problem instances.
//!
//! The format is a tagged header line followed by whitespace-separated
//! numbers. Floats are written in shortest round-trip form, so a parsed
//! instance is bit-identical to the one written. Intended for archiving
//! the exact instance behind a published run, not as an interchange
//! format.

use super::{LogisticProblem, QuadraticProblem};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use std::fmt::Write as _;

const LOGISTIC_TAG: &str = "logistic-v1";
const QUADRATIC_TAG: &str = "quadratic-v1";

impl LogisticProblem {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{LOGISTIC_TAG}");
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.agents, self.dim, self.samples, self.batch
        );
        let _ = writeln!(out, "{:?} {:?}", self.reg_coeff, self.heterogeneity);
        push_floats(&mut out, &self.ground_model);
        for i in 0..self.agents {
            push_floats(&mut out, &self.agent_models[i]);
            push_floats(&mut out, &self.labels[i]);
            push_floats(&mut out, self.features[i].data());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut toks = Tokens::new(text);
        toks.expect_tag(LOGISTIC_TAG)?;
        let agents = toks.usize("agents")?;
        let dim = toks.usize("dim")?;
        let samples = toks.usize("samples")?;
        let batch = toks.usize("batch")?;
        if agents == 0 || dim == 0 || samples == 0 || batch == 0 || batch > samples {
            return Err(Error::Parse("logistic header out of range".into()));
        }
        let reg_coeff = toks.float("reg_coeff")?;
        let heterogeneity = toks.float("heterogeneity")?;
        let ground_model = toks.floats(dim, "ground model")?;
        let mut agent_models = Vec::with_capacity(agents);
        let mut labels = Vec::with_capacity(agents);
        let mut features = Vec::with_capacity(agents);
        for i in 0..agents {
            agent_models.push(toks.floats(dim, "agent model")?);
            let y = toks.floats(samples, "labels")?;
            if y.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::Parse(format!("agent {i}: labels must be +-1")));
            }
            labels.push(y);
            let flat = toks.floats(samples * dim, "features")?;
            features.push(DenseMatrix::from_fn(samples, dim, |r, c| flat[r * dim + c]));
        }
        toks.expect_end()?;

        let smoothness = features
            .iter()
            .map(|h| h.data().iter().map(|v| v * v).sum::<f64>() / (4.0 * samples as f64))
            .fold(0.0f64, f64::max)
            + 2.0 * reg_coeff;

        Ok(LogisticProblem {
            agents,
            dim,
            samples,
            batch,
            reg_coeff,
            heterogeneity,
            features,
            labels,
            ground_model,
            agent_models,
            smoothness,
        })
    }
}

impl QuadraticProblem {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{QUADRATIC_TAG}");
        let _ = writeln!(out, "{} {}", self.agents, self.dim);
        let _ = writeln!(out, "{:?} {:?}", self.condition, self.noise_stddev);
        for i in 0..self.agents {
            push_floats(&mut out, &self.curvature[i]);
            push_floats(&mut out, &self.targets[i]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut toks = Tokens::new(text);
        toks.expect_tag(QUADRATIC_TAG)?;
        let agents = toks.usize("agents")?;
        let dim = toks.usize("dim")?;
        if agents == 0 || dim == 0 {
            return Err(Error::Parse("quadratic header out of range".into()));
        }
        let condition = toks.float("condition")?;
        let noise_stddev = toks.float("noise_stddev")?;
        let mut curvature = Vec::with_capacity(agents);
        let mut targets = Vec::with_capacity(agents);
        for _ in 0..agents {
            let a = toks.floats(dim, "curvature")?;
            if a.iter().any(|&v| v < 1.0) {
                return Err(Error::Parse("curvature entries must be >= 1".into()));
            }
            curvature.push(a);
            targets.push(toks.floats(dim, "targets")?);
        }
        toks.expect_end()?;

        let mut minimizer = vec![0.0; dim];
        for k in 0..dim {
            let a_sum: f64 = (0..agents).map(|i| curvature[i][k]).sum();
            let b_sum: f64 = (0..agents).map(|i| targets[i][k]).sum();
            minimizer[k] = b_sum / a_sum;
        }
        let mut p = QuadraticProblem {
            agents,
            dim,
            condition,
            noise_stddev,
            curvature,
            targets,
            minimizer,
            optimal_value: 0.0,
        };
        use super::Problem;
        p.optimal_value = p.average_value(&p.minimizer.clone());
        Ok(p)
    }
}

fn push_floats(out: &mut String, v: &[f64]) {
    for (k, x) in v.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:?}");
    }
    out.push('\n');
}

struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens {
            iter: text.split_whitespace(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.iter
            .next()
            .ok_or_else(|| Error::Parse(format!("unexpected end of input, wanted {what}")))
    }

    fn expect_tag(&mut self, tag: &str) -> Result<()> {
        let got = self.next("format tag")?;
        if got != tag {
            return Err(Error::Parse(format!("expected tag {tag}, got {got}")));
        }
        Ok(())
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.next(what)?;
        tok.parse()
            .map_err(|_| Error::Parse(format!("bad {what}: {tok}")))
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let tok = self.next(what)?;
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::Parse(format!("bad {what}: {tok}")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite {what}: {tok}")));
        }
        Ok(v)
    }

    fn floats(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        (0..count).map(|_| self.float(what)).collect()
    }

    fn expect_end(&mut self) -> Result<()> {
        if let Some(tok) = self.iter.next() {
            return Err(Error::Parse(format!("trailing data starting at {tok}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate_logistic, generate_quadratic};
    use super::*;

    #[test]
    fn logistic_round_trip_is_exact() {
        let p = generate_logistic(3, 5, 8, 0.8, 0.01, 2, 21);
        let text = p.to_text();
        let q = LogisticProblem::from_text(&text).unwrap();
        assert_eq!(p, q);
        // and the re-serialization is byte-identical
        assert_eq!(text, q.to_text());
    }

    #[test]
    fn quadratic_round_trip_is_exact() {
        let p = generate_quadratic(4, 6, 4.0, 0.25, 33);
        let text = p.to_text();
        let q = QuadraticProblem::from_text(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.to_text());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(LogisticProblem::from_text("").is_err());
        assert!(LogisticProblem::from_text("quadratic-v1 1 1").is_err());
        assert!(QuadraticProblem::from_text("quadratic-v1 2 2 1.0 0.0 1.0").is_err());
        // label that is neither +1 nor -1; the labels sit on line 6 of the
        // single-agent single-sample layout
        let p = generate_logistic(1, 1, 1, 0.0, 0.0, 1, 1);
        let mut lines: Vec<String> = p.to_text().lines().map(str::to_owned).collect();
        lines[5] = "0.5".into();
        assert!(LogisticProblem::from_text(&lines.join("\n")).is_err());
        // trailing garbage
        let mut t = generate_quadratic(1, 1, 1.0, 0.0, 1).to_text();
        t.push_str(" 7");
        assert!(QuadraticProblem::from_text(&t).is_err());
    }
}
