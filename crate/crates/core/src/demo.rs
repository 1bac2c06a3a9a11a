//! Worked example of role-filler binding and unbinding: "the job of A is B".

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::vsa::{bind, bundle, cosine, HyperVector};

#[derive(Clone, Debug, PartialEq)]
pub struct Walkthrough {
    pub dimension: usize,
    /// Cosine of `K * Name` with each atomic symbol, in declaration order.
    pub name_query: Vec<(String, f64)>,
    pub job_query: Vec<(String, f64)>,
}

impl Walkthrough {
    fn best(q: &[(String, f64)]) -> (&str, f64) {
        let (n, c) = q
            .iter()
            .fold(&q[0], |b, x| if x.1 > b.1 { x } else { b });
        (n, *c)
    }

    pub fn name_answer(&self) -> (&str, f64) {
        Self::best(&self.name_query)
    }

    pub fn job_answer(&self) -> (&str, f64) {
        Self::best(&self.job_query)
    }

    pub fn render(&self) -> String {
        let mut s = format!("D = {}\nK = A*Name + B*Job\n", self.dimension);
        for (label, q, (n, c)) in [
            ("K*Name", &self.name_query, self.name_answer()),
            ("K*Job", &self.job_query, self.job_answer()),
        ] {
            s.push_str(&format!("\n{label}:\n"));
            for (sym, cos) in q {
                s.push_str(&format!("  cos({label}, {sym:<4}) = {cos:+.4}\n"));
            }
            s.push_str(&format!("  -> {n} ({c:.4})\n"));
        }
        s
    }
}

pub fn job_name_walkthrough(dimension: usize, seed: u64) -> Result<Walkthrough> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["A", "B", "Job", "Name"];
    let mut v = Vec::with_capacity(names.len());
    for _ in names {
        v.push(HyperVector::random_bipolar(dimension, &mut rng)?);
    }
    let (a, b, job, name) = (&v[0], &v[1], &v[2], &v[3]);
    let k = bundle(&[bind(a, name)?, bind(b, job)?])?;
    let probe = |role: &HyperVector| -> Result<Vec<(String, f64)>> {
        let q = bind(&k, role)?;
        names
            .iter()
            .zip(&v)
            .map(|(n, s)| Ok((n.to_string(), cosine(&q, s)?)))
            .collect()
    };
    Ok(Walkthrough {
        dimension,
        name_query: probe(name)?,
        job_query: probe(job)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queries_recover_fillers() {
        let w = job_name_walkthrough(1024, 0).unwrap();
        let (n, c) = w.name_answer();
        assert_eq!(n, "A");
        // Half the bundle is the answer, the rest is noise.
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 0.1, "{c}");
        assert_eq!(w.job_answer().0, "B");
        assert!(w.render().contains("-> A"));
    }
}
