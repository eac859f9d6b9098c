//! Automatic evaluation: corpus BLEU, unigram entropy, reply length and a
//! multi-system comparison report.

mod bleu;
mod report;
mod unigram;

pub use bleu::{bleu, bleu_detail, brevity_penalty, BleuScore, MAX_ORDER, ZERO_PRECISION_SMOOTHING};
pub use report::{
    evaluate_systems, DialogSystem, EchoSystem, EnsembleSystem, EvalConfig, EvalReport, Failure, ReferenceStats, Sample,
    SystemReply, SystemReport, TestCase, REPORT_VERSION,
};
pub use unigram::{
    build_unigram, corpus_entropy, mean_length, vocabulary_support, EntropyDenominator, UnigramModel,
    DEFAULT_ALPHA,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenSeq;
    use crate::ensemble::Provenance;
    use crate::{Error, Result};

    fn seq(s: &str) -> TokenSeq {
        TokenSeq::from_whitespace(s)
    }

    struct Constant(&'static str);

    impl DialogSystem for Constant {
        fn name(&self) -> &str {
            "constant"
        }

        fn respond(&self, case: &TestCase) -> Result<SystemReply> {
            let query = &case.query;
            if query.tokens()[0] == "fail" {
                return Err(Error::invalid("boom"));
            }
            Ok(SystemReply {
                reply: seq(self.0),
                provenance: Some(if query.len() > 2 { Provenance::Retrieved } else { Provenance::Generated }),
            })
        }

        fn reports_selection(&self) -> bool {
            true
        }
    }

    fn cases() -> Vec<TestCase> {
        [
            ("how are you", "fine thanks and you"),
            ("what time is it", "it is late"),
            ("hello", "hi there friend"),
            ("fail now", "never mind"),
        ]
        .iter()
        .map(|(q, r)| TestCase { query: seq(q), reference: seq(r) })
        .collect()
    }

    fn unigram(cases: &[TestCase]) -> UnigramModel {
        let mut support: Vec<String> = vec!["<unk>".into()];
        for c in cases {
            for t in c.reference.iter() {
                if !support.iter().any(|s| s == t) {
                    support.push(t.to_owned());
                }
            }
        }
        support.push("ok".into());
        let refs: Vec<TokenSeq> = cases.iter().map(|c| c.reference.clone()).collect();
        UnigramModel::estimate(support, "<unk>", &refs, 1.0).unwrap()
    }

    #[test]
    fn echo_scores_100_and_constant_matches_its_own_entropy() {
        let cases = cases();
        let u = unigram(&cases);
        let echo = EchoSystem;
        let report = evaluate_systems(&cases, &[&echo, &Constant("ok ok"), &echo], &u, &EvalConfig::default()).unwrap();

        let e = &report.systems[0];
        assert_eq!(e.bleu.unwrap(), [100.0; 4]);
        assert_eq!(e.n_scored, 4);
        assert!(e.selection.is_none());
        assert_eq!(report.systems[0], report.systems[2].clone());

        let c = &report.systems[1];
        assert_eq!((c.n_scored, c.failures.len(), c.failures[0].query_index), (3, 1, 3));
        assert_eq!(c.entropy.unwrap(), u.neg_log_prob("ok"));
        assert_eq!(c.mean_length, Some(2.0));
        let sel = c.selection.unwrap();
        assert_eq!((sel.retrieved, sel.generated), (2.0 / 3.0, 1.0 / 3.0));

        let table = report.to_table();
        assert!(table.lines().count() == 6, "{table}");
        assert!(table.contains("reference"));
        let back: EvalReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn empty_test_set_is_rejected() {
        let u = unigram(&cases());
        assert!(evaluate_systems(&[], &[&Constant("ok")], &u, &EvalConfig::default()).is_err());
    }
}
